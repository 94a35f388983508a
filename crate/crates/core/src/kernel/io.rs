//! Kernel documents.
//!
//! A kernel file is a JSON object:
//!
//! ```text
//! { "states": ["a", "b"], "kind": "discrete", "k_max": 3,
//!   "q": [[[q_a(a,1), q_a(a,2), q_a(a,3)], [q_a(b,1), ...]], ...] }
//! { "states": ["a", "b"], "kind": "continuous",
//!   "p": [[0, 1], [1, 0]],
//!   "families": [[null, {"family": "exponential", "rate": 1.5}], ...] }
//! ```
//!
//! Numbers are written with 17 significant digits so a save/load cycle is
//! exact. Rows off-stochastic by at most `LOAD_TOL` are renormalised and the
//! adjustment is reported; larger deviations are rejected.

use std::fmt::Write as _;

use serde::Deserialize;

use super::{ContinuousSmk, DiscreteSmk, Kernel, Matrix, PairDensity, StateSpace};
use crate::error::{Error, Result};
use crate::sojourn::SojournFamily;

pub const LOAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RowAdjustment {
    pub state: usize,
    pub original_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadReport {
    pub adjustments: Vec<RowAdjustment>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Document {
    Discrete {
        states: Vec<String>,
        k_max: usize,
        q: Vec<Vec<Vec<f64>>>,
    },
    Continuous {
        states: Vec<String>,
        p: Vec<Vec<f64>>,
        families: Vec<Vec<Option<SojournFamily>>>,
    },
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn family_json(f: &SojournFamily) -> String {
    match *f {
        SojournFamily::Exponential { rate } => {
            format!("{{\"family\": \"exponential\", \"rate\": {}}}", num(rate))
        }
        SojournFamily::Weibull { shape, scale } => format!(
            "{{\"family\": \"weibull\", \"shape\": {}, \"scale\": {}}}",
            num(shape),
            num(scale)
        ),
        SojournFamily::Gamma { shape, rate } => format!(
            "{{\"family\": \"gamma\", \"shape\": {}, \"rate\": {}}}",
            num(shape),
            num(rate)
        ),
    }
}

fn states_json(s: &StateSpace) -> String {
    let labels: Vec<String> = s
        .labels()
        .iter()
        .map(|l| serde_json::to_string(l).expect("string serialisation"))
        .collect();
    format!("[{}]", labels.join(", "))
}

/// Serialises a kernel. Continuous kernels must be purely parametric.
pub fn to_document(kernel: &Kernel) -> Result<String> {
    let mut out = String::new();
    match kernel {
        Kernel::Discrete(d) => {
            let e = d.size();
            let _ = writeln!(out, "{{");
            let _ = writeln!(out, "  \"states\": {},", states_json(d.states()));
            let _ = writeln!(out, "  \"kind\": \"discrete\",");
            let _ = writeln!(out, "  \"k_max\": {},", d.k_max());
            let _ = writeln!(out, "  \"q\": [");
            for x in 0..e {
                let rows: Vec<String> = (0..e)
                    .map(|y| {
                        let cells: Vec<String> = (1..=d.k_max()).map(|k| num(d.q(x, y, k))).collect();
                        format!("[{}]", cells.join(", "))
                    })
                    .collect();
                let sep = if x + 1 < e { "," } else { "" };
                let _ = writeln!(out, "    [{}]{sep}", rows.join(", "));
            }
            let _ = writeln!(out, "  ]");
            let _ = writeln!(out, "}}");
        }
        Kernel::Continuous(c) => {
            let e = c.size();
            let _ = writeln!(out, "{{");
            let _ = writeln!(out, "  \"states\": {},", states_json(c.states()));
            let _ = writeln!(out, "  \"kind\": \"continuous\",");
            let _ = writeln!(out, "  \"p\": [");
            for x in 0..e {
                let row: Vec<String> = (0..e).map(|y| num(c.p()[(x, y)])).collect();
                let sep = if x + 1 < e { "," } else { "" };
                let _ = writeln!(out, "    [{}]{sep}", row.join(", "));
            }
            let _ = writeln!(out, "  ],");
            let _ = writeln!(out, "  \"families\": [");
            for x in 0..e {
                let mut row = Vec::with_capacity(e);
                for y in 0..e {
                    row.push(match c.pair(x, y) {
                        None => "null".to_string(),
                        Some(PairDensity::Scaled { family, .. }) => family_json(family),
                        Some(PairDensity::SqrtBlend { .. }) => {
                            return Err(Error::Unsupported(
                                "blended sojourn densities have no parametric file form".into(),
                            ))
                        }
                    });
                }
                let sep = if x + 1 < e { "," } else { "" };
                let _ = writeln!(out, "    [{}]{sep}", row.join(", "));
            }
            let _ = writeln!(out, "  ]");
            let _ = writeln!(out, "}}");
        }
    }
    Ok(out)
}

fn normalise_row(row: &mut [f64], state: usize, report: &mut LoadReport) -> Result<()> {
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidKernel(format!("row {state} has negative or non-finite entries")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > LOAD_TOL {
        return Err(Error::InvalidKernel(format!(
            "row {state} sums to {s} (tolerance {LOAD_TOL:e})"
        )));
    }
    // Rows already within construction tolerance are kept bit-exact.
    if (s - 1.0).abs() > super::ROW_TOL {
        row.iter_mut().for_each(|v| *v /= s);
        report.adjustments.push(RowAdjustment { state, original_sum: s });
    }
    Ok(())
}

pub fn from_document(text: &str) -> Result<(Kernel, LoadReport)> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut report = LoadReport::default();
    let kernel = match doc {
        Document::Discrete { states, k_max, q } => {
            let states = StateSpace::new(states)?;
            let e = states.size();
            if q.len() != e || q.iter().any(|r| r.len() != e) || q.iter().flatten().any(|c| c.len() != k_max) {
                return Err(Error::Parse("q table shape does not match states and k_max".into()));
            }
            let mut flat = Vec::with_capacity(e * e * k_max);
            for (x, row) in q.iter().enumerate() {
                let mut r: Vec<f64> = row.iter().flatten().copied().collect();
                normalise_row(&mut r, x, &mut report)?;
                flat.extend(r);
            }
            Kernel::Discrete(DiscreteSmk::new(states, k_max, flat)?)
        }
        Document::Continuous { states, p, families } => {
            let states = StateSpace::new(states)?;
            let e = states.size();
            if p.len() != e || p.iter().any(|r| r.len() != e) {
                return Err(Error::Parse("p shape does not match states".into()));
            }
            let mut m = Matrix::zeros(e, e);
            for (x, row) in p.iter().enumerate() {
                let mut r = row.clone();
                normalise_row(&mut r, x, &mut report)?;
                for (y, v) in r.into_iter().enumerate() {
                    m[(x, y)] = v;
                }
            }
            Kernel::Continuous(ContinuousSmk::new(states, m, families)?)
        }
    };
    Ok((kernel, report))
}

pub fn load(path: &std::path::Path) -> Result<(Kernel, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_document(&text)
}

pub fn save(kernel: &Kernel, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_document(kernel)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{embed_markov_continuous, embed_markov_discrete};

    #[test]
    fn discrete_round_trip_is_exact() {
        let p = Matrix::from_row_slice(2, 2, &[0.3, 0.7, 0.4, 0.6]);
        let k: Kernel = embed_markov_discrete(&p, 7).unwrap().into();
        let (back, report) = from_document(&to_document(&k).unwrap()).unwrap();
        assert_eq!(back.as_discrete().unwrap().table(), k.as_discrete().unwrap().table());
        assert!(report.adjustments.len() <= 2);
    }

    #[test]
    fn continuous_round_trip() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.5, -2.5]);
        let k: Kernel = embed_markov_continuous(&a).unwrap().into();
        let (back, _) = from_document(&to_document(&k).unwrap()).unwrap();
        let c = back.as_continuous().unwrap();
        assert_eq!(c.family(1, 0), Some(SojournFamily::Exponential { rate: 2.5 }));
    }

    #[test]
    fn renormalises_within_tolerance() {
        let doc = r#"{"states": ["a","b"], "kind": "discrete", "k_max": 1,
                      "q": [[[0.0], [1.0000000001]], [[1.0], [0.0]]]}"#;
        let (k, report) = from_document(doc).unwrap();
        assert_eq!(report.adjustments.len(), 1);
        assert_eq!(report.adjustments[0].state, 0);
        assert_eq!(k.as_discrete().unwrap().q(0, 1, 1), 1.0);
    }

    #[test]
    fn rejects_beyond_tolerance() {
        let doc = r#"{"states": ["a","b"], "kind": "discrete", "k_max": 1,
                      "q": [[[0.0], [1.001]], [[1.0], [0.0]]]}"#;
        assert!(matches!(from_document(doc), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(matches!(from_document(r#"{"kind": "hybrid"}"#), Err(Error::Parse(_))));
    }
}
