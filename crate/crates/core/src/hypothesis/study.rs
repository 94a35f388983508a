use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use super::{draw_blocks, evaluate, TestPlan};
use crate::error::{Error, Result};
use crate::kernel::{DiscreteSmk, Kernel};
use crate::metrics::{angle_from_sq, hellinger_sq_rows};
use crate::rng::{pair_index, substream};
use crate::simulate::{Init, Sampler};
use crate::stats::Wilson;

const LEVEL: f64 = 0.99;

/// One `(plan, n)` cell with the alternatives probed for the type-II rate.
#[derive(Debug, Clone)]
pub struct StudyCell {
    pub plan: TestPlan,
    pub n: usize,
    pub probes: Vec<Kernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStudyRow {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub xi: f64,
    pub kappa: usize,
    pub replications: usize,
    pub type_one_rate: f64,
    pub type_one_ci_lower: f64,
    pub type_one_ci_upper: f64,
    pub type_one_half_width: f64,
    pub type_one_bound: f64,
    /// Upper CI edge above the bound.
    pub type_one_exceeds: bool,
    /// Largest acceptance rate over the probes.
    pub type_two_rate: f64,
    pub type_two_ci_lower: f64,
    pub type_two_ci_upper: f64,
    pub type_two_half_width: f64,
    pub type_two_bound: f64,
    pub type_two_exceeds: bool,
    pub type_two_worst_probe: usize,
    pub probes: usize,
}

impl ErrorStudyRow {
    /// `rate ≤ bound + half-width` for the type-I error.
    pub fn type_one_within(&self) -> bool {
        self.type_one_rate <= self.type_one_bound + self.type_one_half_width
    }

    pub fn type_two_within(&self) -> bool {
        self.type_two_rate <= self.type_two_bound + self.type_two_half_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub cell: usize,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStudy {
    pub rows: Vec<ErrorStudyRow>,
    pub skipped: Vec<SkippedCell>,
}

impl ErrorStudy {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        if self.rows.is_empty() {
            out.write_record(ErrorStudy::HEADER)?;
        }
        out.flush()?;
        Ok(())
    }

    const HEADER: [&'static str; 20] = [
        "n",
        "epsilon",
        "lambda",
        "xi",
        "kappa",
        "replications",
        "type_one_rate",
        "type_one_ci_lower",
        "type_one_ci_upper",
        "type_one_half_width",
        "type_one_bound",
        "type_one_exceeds",
        "type_two_rate",
        "type_two_ci_lower",
        "type_two_ci_upper",
        "type_two_half_width",
        "type_two_bound",
        "type_two_exceeds",
        "type_two_worst_probe",
        "probes",
    ];
}

/// Rejection count of the plan's test over `replications` paths from `truth`.
fn rejections(
    plan: &TestPlan,
    truth: &Kernel,
    n: usize,
    replications: usize,
    seed: u64,
    tag: (&str, &str),
    stream: u64,
) -> Result<u64> {
    let sampler = Sampler::new(truth, &Init::Stationary)?;
    let hits: Result<Vec<bool>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let idx = pair_index(stream, r);
            let traj = sampler.sample(n, &mut substream(seed, tag.0, idx));
            let blocks = draw_blocks(n, plan.params.k, plan.offset, &mut substream(seed, tag.1, idx))?;
            Ok(evaluate(&traj, plan, &blocks)?.reject_null)
        })
        .collect();
    Ok(hits?.into_iter().filter(|h| *h).count() as u64)
}

/// Empirical type-I and type-II rates against the exponential bounds.
///
/// Type-I paths are drawn from the plan's null, type-II paths from each
/// probe; the reported type-II rate is the largest acceptance rate over the
/// probes. Every draw uses its own substream indexed by cell, probe and
/// replication. Cells with `n < κ` are skipped.
pub fn error_study(cells: &[StudyCell], replications: usize, seed: u64) -> Result<ErrorStudy> {
    if replications < 100 {
        return Err(Error::InvalidParameter(format!("replications = {replications} < 100")));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let plan = &cell.plan;
        if cell.n < plan.kappa {
            skipped.push(SkippedCell {
                cell: c,
                n: cell.n,
                reason: format!("trajectory too short for one block (kappa = {})", plan.kappa),
            });
            continue;
        }
        let base = (c as u64) << 10;
        let r1 = rejections(plan, &plan.q0, cell.n, replications, seed, ("study-null", "study-null-tau"), base)?;
        let w1 = Wilson::new(r1, replications as u64, LEVEL);
        let mut worst = (0usize, Wilson::new(0, replications as u64, LEVEL));
        for (p, probe) in cell.probes.iter().enumerate() {
            let rej = rejections(plan, probe, cell.n, replications, seed, ("study-alt", "study-alt-tau"), base + p as u64)?;
            let w = Wilson::new(replications as u64 - rej, replications as u64, LEVEL);
            if p == 0 || w.rate > worst.1.rate {
                worst = (p, w);
            }
        }
        let b1 = plan.type_one_bound(cell.n);
        let b2 = plan.type_two_bound(cell.n);
        rows.push(ErrorStudyRow {
            n: cell.n,
            epsilon: plan.params.epsilon,
            lambda: plan.params.lambda,
            xi: plan.params.xi,
            kappa: plan.kappa,
            replications,
            type_one_rate: w1.rate,
            type_one_ci_lower: w1.lower,
            type_one_ci_upper: w1.upper,
            type_one_half_width: w1.half_width(),
            type_one_bound: b1,
            type_one_exceeds: w1.upper > b1,
            type_two_rate: worst.1.rate,
            type_two_ci_lower: worst.1.lower,
            type_two_ci_upper: worst.1.upper,
            type_two_half_width: worst.1.half_width(),
            type_two_bound: b2,
            type_two_exceeds: !cell.probes.is_empty() && worst.1.upper > b2,
            type_two_worst_probe: worst.0,
            probes: cell.probes.len(),
        });
    }
    Ok(ErrorStudy { rows, skipped })
}

/// `count` discrete kernels within `d_{η*}`-distance `radius` of `center`:
/// the center itself, then points along Hellinger geodesics from the center
/// toward random kernels supported on the center's support, at distances
/// drawn uniformly from `[radius/2, radius)`.
pub fn ball_probes(center: &Kernel, eta_star: &[f64], radius: f64, count: usize, seed: u64) -> Result<Vec<Kernel>> {
    let Kernel::Discrete(c) = center else {
        return Err(Error::Unsupported("ball probes need a discrete kernel".into()));
    };
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("probe radius {radius} must be positive")));
    }
    let e = c.size();
    let w = c.cells_per_row();
    let mut rng = substream(seed, "probes", 0);
    let unit = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut out = Vec::with_capacity(count);
    if count > 0 {
        out.push(center.clone());
    }
    while out.len() < count {
        // Random direction: a flat Dirichlet on the support of each row.
        let mut target = vec![0.0; e * w];
        for x in 0..e {
            let row = &mut target[x * w..(x + 1) * w];
            for (t, q) in row.iter_mut().zip(c.row(x)) {
                if *q > 0.0 {
                    *t = unit.sample(&mut rng);
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let beta: Vec<f64> = (0..e)
            .map(|x| angle_from_sq(hellinger_sq_rows(c.row(x), &target[x * w..(x + 1) * w])).0)
            .collect();
        let dist2 = |t: f64| -> f64 { (0..e).map(|x| eta_star[x] * (1.0 - (t * beta[x]).cos())).sum() };
        let goal = radius * (0.5 + 0.5 * rng.random::<f64>());
        let goal2 = goal * goal;
        let t = if dist2(1.0) <= goal2 {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if dist2(mid) < goal2 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let mut table = Vec::with_capacity(e * w);
        for x in 0..e {
            let b = beta[x];
            let (wa, wb) = if b < 1e-12 {
                (1.0, 0.0)
            } else {
                (((1.0 - t) * b).sin() / b.sin(), (t * b).sin() / b.sin())
            };
            let row: Vec<f64> = c
                .row(x)
                .iter()
                .zip(&target[x * w..(x + 1) * w])
                .map(|(p, r)| {
                    let s = wa * p.sqrt() + wb * r.sqrt();
                    s * s
                })
                .collect();
            let s: f64 = row.iter().sum();
            table.extend(row.into_iter().map(|v| v / s));
        }
        out.push(DiscreteSmk::new(c.states().clone(), c.k_max(), table)?.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{Alternative, TestParams};
    use crate::kernel::{embed_markov_discrete, Matrix};
    use crate::metrics::hellinger_sq;

    fn geometric(a: f64) -> Kernel {
        let p = Matrix::from_row_slice(2, 2, &[a, 1.0 - a, 1.0 - a, a]);
        embed_markov_discrete(&p, 30).unwrap().into()
    }

    #[test]
    fn probes_stay_inside_the_ball() {
        let c = geometric(0.6);
        let eta = [1.0, 1.0];
        let probes = ball_probes(&c, &eta, 0.02, 20, 11).unwrap();
        assert_eq!(probes.len(), 20);
        for p in &probes[1..] {
            let d = hellinger_sq(&c, p).unwrap().weighted(&eta).sqrt();
            assert!(d < 0.02 && d >= 0.01 - 1e-12, "{d}");
        }
    }

    #[test]
    fn separated_kernels_have_small_errors() {
        let (q0, q1) = (geometric(0.1), geometric(0.9));
        let plan = TestPlan::new(q0, Alternative::Simple(q1.clone()), TestParams::with_defaults(0.3, 2, 1), 0).unwrap();
        let cells = vec![
            StudyCell { plan: plan.clone(), n: 200, probes: vec![q1] },
            StudyCell { plan, n: 2, probes: vec![] },
        ];
        let s = error_study(&cells, 100, 5).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.skipped.len(), 1);
        assert_eq!(s.rows[0].type_two_rate, 0.0);
        assert_eq!(s.rows[0].type_one_rate, 0.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), ErrorStudy::HEADER.join(","));
        assert!(error_study(&[], 99, 0).is_err());
    }
}
