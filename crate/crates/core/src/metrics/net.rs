//! Greedy covering nets over explicit parametric kernel grids.

use std::io::Write;

use super::hellinger_sq;
use crate::error::{Error, Result};
use crate::kernel::{embed_markov_discrete, DiscreteSmk, Kernel, Matrix};
use crate::sojourn::discrete_weibull_pmf;

/// A finite grid of kernels indexed by parameter vectors.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    param_names: Vec<String>,
    points: Vec<(Vec<f64>, Kernel)>,
}

impl KernelFamily {
    pub fn new(param_names: Vec<String>, points: Vec<(Vec<f64>, Kernel)>) -> Result<Self> {
        if let Some((p, _)) = points.iter().find(|(p, _)| p.len() != param_names.len()) {
            return Err(Error::InvalidParameter(format!(
                "grid point has {} parameters, expected {}",
                p.len(),
                param_names.len()
            )));
        }
        Ok(KernelFamily { param_names, points })
    }

    /// Markov embeddings `p̃ = diag(s) + (I − diag(s))·R` over every
    /// combination of per-state stay probabilities `s_x ∈ stays`.
    ///
    /// `routing` must have a zero diagonal and stochastic rows.
    pub fn geometric(routing: &Matrix, stays: &[f64], k_max: usize) -> Result<Self> {
        let e = routing.nrows();
        let names = (1..=e).map(|x| format!("stay_{x}")).collect();
        let mut points = Vec::new();
        let total = stays.len().checked_pow(e as u32).unwrap_or(usize::MAX);
        for code in 0..total {
            let mut c = code;
            let mut s = vec![0.0; e];
            for v in s.iter_mut().rev() {
                *v = stays[c % stays.len()];
                c /= stays.len();
            }
            let p = Matrix::from_fn(e, e, |x, y| if x == y { s[x] } else { (1.0 - s[x]) * routing[(x, y)] });
            points.push((s, embed_markov_discrete(&p, k_max)?.into()));
        }
        Self::new(names, points)
    }

    /// Kernels `routing(x, y) · w(k)` with a discretised Weibull `w` shared by
    /// every state, over the product grid of shapes and scales.
    pub fn discrete_weibull(routing: &Matrix, shapes: &[f64], scales: &[f64], k_max: usize) -> Result<Self> {
        let states = crate::kernel::StateSpace::numbered(routing.nrows())?;
        let mut points = Vec::new();
        for &shape in shapes {
            for &scale in scales {
                let w = discrete_weibull_pmf(shape, scale, k_max);
                let soj = vec![w; routing.nrows()];
                let k = DiscreteSmk::from_routing(states.clone(), routing, &soj)?;
                points.push((vec![shape, scale], k.into()));
            }
        }
        Self::new(vec!["shape".into(), "scale".into()], points)
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn points(&self) -> &[(Vec<f64>, Kernel)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Half-open shell `inner < d ≤ outer` around a center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub inner: f64,
    pub outer: f64,
}

impl Shell {
    pub fn contains(&self, d: f64) -> bool {
        d > self.inner && d <= self.outer
    }
}

#[derive(Debug, Clone)]
pub struct NetPoint {
    /// Index into the family grid.
    pub grid_index: usize,
    pub params: Vec<f64>,
    pub kernel: Kernel,
    pub d_nu_star_to_center: f64,
    pub d_eta_star_to_nearest_net_point: f64,
    pub in_net: bool,
}

#[derive(Debug, Clone)]
pub struct CoveringNet {
    pub center: Kernel,
    pub radius: f64,
    pub inner_radius: f64,
    pub net_radius: f64,
    pub metric_outer: &'static str,
    pub metric_inner: &'static str,
    pub param_names: Vec<String>,
    /// Every grid point falling in the shell, net members flagged.
    pub shell: Vec<NetPoint>,
    pub log_cardinality: f64,
}

impl CoveringNet {
    pub fn points(&self) -> impl Iterator<Item = &NetPoint> {
        self.shell.iter().filter(|p| p.in_net)
    }

    pub fn cardinality(&self) -> usize {
        self.points().count()
    }

    /// One row per shell point; net members have zero distance to the net.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["point_index".to_string()];
        header.extend(self.param_names.iter().cloned());
        header.push("d_nu_star_to_center".into());
        header.push("d_eta_star_to_nearest_net_point".into());
        out.write_record(&header)?;
        for p in &self.shell {
            let mut row = vec![p.grid_index.to_string()];
            row.extend(p.params.iter().map(|v| v.to_string()));
            row.push(p.d_nu_star_to_center.to_string());
            row.push(p.d_eta_star_to_nearest_net_point.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Greedy farthest-point net of the grid points in `shell` (measured in
/// `d_{ν*}` from `center`), stopping once every shell point lies within
/// `net_radius` of the net in `d_{η*}`.
///
/// The traversal order does not depend on `net_radius`, so the cardinality is
/// nonincreasing in it.
pub fn covering_net(
    center: &Kernel,
    shell: Shell,
    net_radius: f64,
    family: &KernelFamily,
    nu_star: &[f64],
    eta_star: &[f64],
) -> Result<CoveringNet> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("kernel family grid is empty".into()));
    }
    if !(net_radius >= 0.0) || !(shell.outer >= shell.inner) {
        return Err(Error::InvalidParameter("radii must be nonnegative with inner <= outer".into()));
    }
    let mut members = Vec::new();
    for (i, (params, k)) in family.points().iter().enumerate() {
        let d = hellinger_sq(center, k)?.weighted(nu_star).sqrt();
        if shell.contains(d) {
            members.push(NetPoint {
                grid_index: i,
                params: params.clone(),
                kernel: k.clone(),
                d_nu_star_to_center: d,
                d_eta_star_to_nearest_net_point: f64::INFINITY,
                in_net: false,
            });
        }
    }
    let mut count = 0usize;
    let mut next = (!members.is_empty()).then_some(0);
    while let Some(j) = next {
        members[j].in_net = true;
        count += 1;
        let pick = members[j].kernel.clone();
        for m in members.iter_mut() {
            let d = hellinger_sq(&pick, &m.kernel)?.weighted(eta_star).sqrt();
            if d < m.d_eta_star_to_nearest_net_point {
                m.d_eta_star_to_nearest_net_point = d;
            }
        }
        members[j].d_eta_star_to_nearest_net_point = 0.0;
        let (far, dist) = members
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.d_eta_star_to_nearest_net_point))
            .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        next = (dist > net_radius).then_some(far);
    }
    Ok(CoveringNet {
        center: center.clone(),
        radius: shell.outer,
        inner_radius: shell.inner,
        net_radius,
        metric_outer: "d_nu_star",
        metric_inner: "d_eta_star",
        param_names: family.param_names().to_vec(),
        shell: members,
        log_cardinality: (count as f64).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn grid() -> Vec<f64> {
        (1..=19).map(|i| i as f64 * 0.05).collect()
    }

    #[test]
    fn family_sizes() {
        let f = KernelFamily::geometric(&swap(), &grid(), 20).unwrap();
        assert_eq!(f.len(), 361);
        assert_eq!(f.points()[1].0, vec![0.05, 0.1]);
        let w = KernelFamily::discrete_weibull(&swap(), &[0.5, 1.0], &[1.0, 2.0, 3.0], 10).unwrap();
        assert_eq!(w.len(), 6);
    }

    #[test]
    fn empty_family_is_an_error() {
        let f = KernelFamily::new(vec![], vec![]).unwrap();
        let c = KernelFamily::geometric(&swap(), &[0.5], 5).unwrap().points()[0].1.clone();
        assert!(covering_net(&c, Shell { inner: 0.0, outer: 1.0 }, 0.1, &f, &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn huge_radius_gives_single_point() {
        let f = KernelFamily::geometric(&swap(), &grid(), 20).unwrap();
        let c = f.points()[180].1.clone();
        let net = covering_net(&c, Shell { inner: 0.1, outer: 0.3 }, 2.0, &f, &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(net.cardinality(), 1);
        assert_eq!(net.log_cardinality, 0.0);
    }

    #[test]
    fn every_shell_point_is_covered() {
        let f = KernelFamily::geometric(&swap(), &grid(), 20).unwrap();
        let c = f.points()[180].1.clone();
        let delta = 0.05;
        let net = covering_net(&c, Shell { inner: 0.1, outer: 0.2 }, delta, &f, &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!(net.cardinality() > 1);
        let centers: Vec<&Kernel> = net.points().map(|p| &p.kernel).collect();
        for p in &net.shell {
            assert!(p.d_nu_star_to_center > 0.1 && p.d_nu_star_to_center <= 0.2);
            let nearest = centers
                .iter()
                .map(|k| hellinger_sq(k, &p.kernel).unwrap().weighted(&[1.0, 1.0]).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= delta);
            assert!((nearest - p.d_eta_star_to_nearest_net_point).abs() < 1e-15);
        }
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("point_index,stay_1,stay_2,d_nu_star_to_center,d_eta_star_to_nearest_net_point\n"));
        assert_eq!(text.lines().count(), net.shell.len() + 1);
    }
}
