use std::fmt;

use super::{mean_sojourn, period, reachability_witness, Kernel};

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub satisfied: bool,
    pub witness: String,
}

/// Standing-assumption diagnostics for a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// EMC irreducible and aperiodic.
    pub a1: AssumptionCheck,
    /// Finite stationary mean sojourn.
    pub a2: AssumptionCheck,
    /// No state has a point-mass sojourn law.
    pub a3: AssumptionCheck,
    pub irreducible: bool,
    pub period: Option<usize>,
    pub mean_sojourn: Vec<f64>,
}

impl AssumptionReport {
    pub fn all_satisfied(&self) -> bool {
        self.a1.satisfied && self.a2.satisfied && self.a3.satisfied
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in [&self.a1, &self.a2, &self.a3] {
            writeln!(
                f,
                "{}: {} ({})",
                c.name,
                if c.satisfied { "satisfied" } else { "violated" },
                c.witness
            )?;
        }
        writeln!(f, "irreducible: {}", self.irreducible)?;
        match self.period {
            Some(d) => writeln!(f, "period: {d}")?,
            None => writeln!(f, "period: undefined")?,
        }
        let m: Vec<String> = self.mean_sojourn.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(f, "mean_sojourn: [{}]", m.join(", "))
    }
}

/// Diagnoses ergodicity (A1), finite mean sojourn (A2) and non-degenerate
/// sojourns (A3). Never fails.
pub fn validate_assumptions(kernel: &Kernel) -> AssumptionReport {
    let p = kernel.emc();
    let labels = kernel.states();
    let reach = reachability_witness(&p);
    let (a1, period) = match reach {
        Some((from, to)) => (
            AssumptionCheck {
                name: "A1",
                satisfied: false,
                witness: format!(
                    "reducible: state {} not reachable from state {}",
                    labels.label(to),
                    labels.label(from)
                ),
            },
            None,
        ),
        None => {
            let d = period(&p);
            let check = if d == 1 {
                AssumptionCheck {
                    name: "A1",
                    satisfied: true,
                    witness: "irreducible and aperiodic".into(),
                }
            } else {
                AssumptionCheck {
                    name: "A1",
                    satisfied: false,
                    witness: format!(
                        "periodic: cycle lengths through state {} have gcd {d}",
                        labels.label(0)
                    ),
                }
            };
            (check, Some(d))
        }
    };

    let ms = mean_sojourn(kernel);
    let a2 = match ms.stationary_mean {
        Some(m) if m.is_finite() => AssumptionCheck {
            name: "A2",
            satisfied: true,
            witness: format!("stationary mean sojourn {m:.6e}"),
        },
        Some(m) => AssumptionCheck {
            name: "A2",
            satisfied: false,
            witness: format!("stationary mean sojourn {m}"),
        },
        None => {
            let worst = ms.per_state.iter().cloned().fold(0.0, f64::max);
            AssumptionCheck {
                name: "A2",
                satisfied: worst.is_finite(),
                witness: format!("no stationary law; max per-state mean {worst:.6e}"),
            }
        }
    };

    let a3 = match kernel {
        Kernel::Discrete(d) => {
            let degenerate = (0..d.size()).find_map(|x| {
                let m = d.sojourn_marginal(x);
                m.iter()
                    .position(|v| (v - 1.0).abs() <= super::ROW_TOL)
                    .map(|k| (x, k + 1))
            });
            match degenerate {
                Some((x, k)) => AssumptionCheck {
                    name: "A3",
                    satisfied: false,
                    witness: format!("sojourn in state {} is a point mass at k = {k}", labels.label(x)),
                },
                None => AssumptionCheck {
                    name: "A3",
                    satisfied: true,
                    witness: "every sojourn law has at least two support points".into(),
                },
            }
        }
        Kernel::Continuous(_) => AssumptionCheck {
            name: "A3",
            satisfied: true,
            witness: "sojourns have densities".into(),
        },
    };

    AssumptionReport {
        a1,
        a2,
        a3,
        irreducible: reach.is_none(),
        period,
        mean_sojourn: ms.per_state,
    }
}
