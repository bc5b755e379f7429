//! Declarative problem descriptions.
//!
//! The JSON-facing subset of [`ProblemSpec`]: affine drift, constant
//! diffusion, mark-affine jumps and simple nonnegative cost shapes. Anything
//! richer goes through [`ProblemSpec::builder`] with closures.

use serde::{Deserialize, Serialize};

use super::{Constraint, LevyAtom, LevyModel, ModelError, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_state: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_noise: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_cost: Option<RunningCostDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_cost: Option<TerminalCostDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlGridDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<LevyDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintDescription>,
}

/// `f(t,a,u) = A a + B u + c`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
}

/// Constant `n × r` diffusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionDescription {
    pub constant: Vec<Vec<f64>>,
}

/// `χ(t,a,u,e) = mark_gain · e + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpDescription {
    #[serde(default)]
    pub mark_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
}

/// `l(t,a,u) = constant + control_quadratic |u|² + state_abs |a|`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunningCostDescription {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub control_quadratic: f64,
    #[serde(default)]
    pub state_abs: f64,
}

/// `m(a) = constant + quadratic |a|² + abs |a|`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalCostDescription {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub quadratic: f64,
    #[serde(default)]
    pub abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeDescription {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Either explicit points or a tensor grid of uniform ranges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGridDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<Vec<RangeDescription>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDescription {
    pub mark: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyDescription {
    #[serde(default)]
    pub atoms: Vec<AtomDescription>,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintDescription {
    Everywhere,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    HalfSpace { normal: Vec<f64>, offset: f64 },
    NonnegativeOrthant,
}

impl ProblemDescription {
    /// Expands a `builtin` reference into its full description.
    pub fn resolved(&self) -> Result<ProblemDescription, ModelError> {
        match &self.builtin {
            None => Ok(self.clone()),
            Some(name) => {
                let only_name = ProblemDescription {
                    builtin: Some(name.clone()),
                    ..Default::default()
                };
                if *self != only_name {
                    return Err(ModelError::Invalid(
                        "a builtin problem cannot be combined with other problem fields".into(),
                    ));
                }
                builtin(name)
            }
        }
    }
}

fn matrix_dims(what: &'static str, m: &[Vec<f64>], rows: usize) -> Result<usize, ModelError> {
    if m.len() != rows {
        return Err(ModelError::Dimension {
            what,
            expected: rows,
            got: m.len(),
        });
    }
    let cols = m.first().map_or(0, Vec::len);
    for row in m {
        if row.len() != cols {
            return Err(ModelError::Dimension {
                what,
                expected: cols,
                got: row.len(),
            });
        }
    }
    Ok(cols)
}

fn expand_controls(desc: &ControlGridDescription) -> Result<Vec<Vec<f64>>, ModelError> {
    match (&desc.points, &desc.uniform) {
        (Some(points), None) => Ok(points.clone()),
        (None, Some(ranges)) => {
            let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
            for r in ranges {
                if r.count == 0 || !(r.max >= r.min) {
                    return Err(ModelError::EmptyControlGrid);
                }
                let values: Vec<f64> = if r.count == 1 {
                    vec![r.min]
                } else {
                    let h = (r.max - r.min) / (r.count - 1) as f64;
                    (0..r.count).map(|i| r.min + h * i as f64).collect()
                };
                grid = grid
                    .into_iter()
                    .flat_map(|prefix| {
                        values.iter().map(move |&v| {
                            let mut p = prefix.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect();
            }
            if ranges.is_empty() {
                return Err(ModelError::EmptyControlGrid);
            }
            Ok(grid)
        }
        (None, None) => Err(ModelError::EmptyControlGrid),
        (Some(_), Some(_)) => Err(ModelError::Invalid(
            "controls: give either `points` or `uniform`, not both".into(),
        )),
    }
}

/// Validates a description and compiles it into a [`ProblemSpec`].
pub fn build_problem(description: &ProblemDescription) -> Result<ProblemSpec, ModelError> {
    let desc = description.resolved()?;
    let n = desc.dim_state.ok_or(ModelError::MissingField("dim_state"))?;
    let r = desc.dim_noise.ok_or(ModelError::MissingField("dim_noise"))?;
    let horizon = desc.horizon.ok_or(ModelError::MissingField("horizon"))?;
    let controls = expand_controls(
        desc.controls
            .as_ref()
            .ok_or(ModelError::MissingField("controls"))?,
    )?;
    let m_dim = controls.first().ok_or(ModelError::EmptyControlGrid)?.len();

    let mut builder = ProblemSpec::builder(n, r).horizon(horizon).controls(controls);

    if let Some(drift) = desc.drift.clone() {
        if let Some(a) = &drift.state {
            let cols = matrix_dims("drift.state", a, n)?;
            if cols != n {
                return Err(ModelError::Dimension {
                    what: "drift.state",
                    expected: n,
                    got: cols,
                });
            }
        }
        if let Some(b) = &drift.control {
            let cols = matrix_dims("drift.control", b, n)?;
            if cols != m_dim {
                return Err(ModelError::Dimension {
                    what: "drift.control",
                    expected: m_dim,
                    got: cols,
                });
            }
        }
        if let Some(c) = &drift.constant {
            if c.len() != n {
                return Err(ModelError::Dimension {
                    what: "drift.constant",
                    expected: n,
                    got: c.len(),
                });
            }
        }
        builder = builder.drift(move |_, a, u| {
            (0..n)
                .map(|i| {
                    let mut v = drift.constant.as_ref().map_or(0.0, |c| c[i]);
                    if let Some(sa) = &drift.state {
                        v += sa[i].iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
                    }
                    if let Some(sb) = &drift.control {
                        v += sb[i].iter().zip(u).map(|(x, y)| x * y).sum::<f64>();
                    }
                    v
                })
                .collect()
        });
    }

    if let Some(diffusion) = &desc.diffusion {
        let cols = matrix_dims("diffusion.constant", &diffusion.constant, n)?;
        if cols != r {
            return Err(ModelError::Dimension {
                what: "diffusion.constant",
                expected: r,
                got: cols,
            });
        }
        let flat: Vec<f64> = diffusion.constant.iter().flatten().copied().collect();
        builder = builder.diffusion(move |_, _, _| flat.clone());
    }

    let levy = match &desc.levy {
        Some(l) => LevyModel::new(
            l.atoms
                .iter()
                .map(|a| LevyAtom::new(a.mark.clone(), a.weight))
                .collect(),
            l.delta,
        )?,
        None => LevyModel::empty(),
    };
    if let Some(jump) = desc.jump.clone() {
        if jump.mark_gain != 0.0 {
            for atom in levy.atoms() {
                if atom.mark.len() != n {
                    return Err(ModelError::Dimension {
                        what: "levy mark (mark_gain ≠ 0)",
                        expected: n,
                        got: atom.mark.len(),
                    });
                }
            }
        }
        if let Some(c) = &jump.constant {
            if c.len() != n {
                return Err(ModelError::Dimension {
                    what: "jump.constant",
                    expected: n,
                    got: c.len(),
                });
            }
        }
        builder = builder.jump(move |_, _, _, e| {
            (0..n)
                .map(|i| {
                    let base = jump.constant.as_ref().map_or(0.0, |c| c[i]);
                    if jump.mark_gain == 0.0 {
                        base
                    } else {
                        base + jump.mark_gain * e[i]
                    }
                })
                .collect()
        });
    }
    builder = builder.levy(levy);

    if let Some(l) = desc.running_cost.clone() {
        if l.constant < 0.0 || l.control_quadratic < 0.0 || l.state_abs < 0.0 {
            return Err(ModelError::NegativeCost {
                what: "running_cost coefficient",
                value: l.constant.min(l.control_quadratic).min(l.state_abs),
            });
        }
        builder = builder.running_cost(move |_, a, u| {
            l.constant
                + l.control_quadratic * u.iter().map(|x| x * x).sum::<f64>()
                + l.state_abs * super::norm(a)
        });
    }
    if let Some(m) = desc.terminal_cost.clone() {
        if m.constant < 0.0 || m.quadratic < 0.0 || m.abs < 0.0 {
            return Err(ModelError::NegativeCost {
                what: "terminal_cost coefficient",
                value: m.constant.min(m.quadratic).min(m.abs),
            });
        }
        builder = builder.terminal_cost(move |a| {
            let r = super::norm(a);
            m.constant + m.quadratic * r * r + m.abs * r
        });
    }

    let constraint = match desc.constraint.clone() {
        None | Some(ConstraintDescription::Everywhere) => Constraint::Everywhere,
        Some(ConstraintDescription::Box { lower, upper }) => {
            if lower.len() != n || upper.len() != n {
                return Err(ModelError::Dimension {
                    what: "constraint box",
                    expected: n,
                    got: lower.len().min(upper.len()),
                });
            }
            if lower.iter().zip(&upper).any(|(lo, hi)| lo > hi) {
                return Err(ModelError::Invalid("constraint box has lower > upper".into()));
            }
            Constraint::Box { lower, upper }
        }
        Some(ConstraintDescription::Ball { center, radius }) => {
            if center.len() != n {
                return Err(ModelError::Dimension {
                    what: "constraint ball center",
                    expected: n,
                    got: center.len(),
                });
            }
            if !(radius >= 0.0) {
                return Err(ModelError::Invalid("constraint ball radius < 0".into()));
            }
            Constraint::Ball { center, radius }
        }
        Some(ConstraintDescription::HalfSpace { normal, offset }) => {
            if normal.len() != n {
                return Err(ModelError::Dimension {
                    what: "constraint half-space normal",
                    expected: n,
                    got: normal.len(),
                });
            }
            if super::norm(&normal) == 0.0 {
                return Err(ModelError::Invalid("half-space normal is zero".into()));
            }
            Constraint::HalfSpace { normal, offset }
        }
        Some(ConstraintDescription::NonnegativeOrthant) => Constraint::NonnegativeOrthant,
    };
    builder.constraint(constraint).build()
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = [
    "zero",
    "frozen-penalty",
    "deterministic-steering",
    "jump-variance",
];

/// Reference problems used by tests and demos.
///
/// * `zero`: `l = m = 0`, `Γ = ℝ`, controlled drift with diffusion and one jump atom.
/// * `frozen-penalty`: frozen state, `d(a) = |a|`, zero costs.
/// * `deterministic-steering`: `f = u`, `U = [−1, 1]` (21 points), `m(a) = a²`.
/// * `jump-variance`: `σ = 1`, one atom with `χ = 1`, `w = 2`, `m(a) = a²`.
pub fn builtin(name: &str) -> Result<ProblemDescription, ModelError> {
    let scalar_controls = |points: &[f64]| ControlGridDescription {
        points: Some(points.iter().map(|&p| vec![p]).collect()),
        uniform: None,
    };
    let base = ProblemDescription {
        dim_state: Some(1),
        dim_noise: Some(1),
        horizon: Some(1.0),
        ..Default::default()
    };
    let desc = match name {
        "zero" => ProblemDescription {
            drift: Some(DriftDescription {
                control: Some(vec![vec![1.0]]),
                ..Default::default()
            }),
            diffusion: Some(DiffusionDescription {
                constant: vec![vec![0.3]],
            }),
            jump: Some(JumpDescription {
                mark_gain: 1.0,
                constant: None,
            }),
            levy: Some(LevyDescription {
                atoms: vec![AtomDescription {
                    mark: vec![0.1],
                    weight: 1.0,
                }],
                delta: 0.0,
            }),
            controls: Some(scalar_controls(&[-1.0, 0.0, 1.0])),
            ..base
        },
        "frozen-penalty" => ProblemDescription {
            controls: Some(scalar_controls(&[0.0])),
            constraint: Some(ConstraintDescription::Ball {
                center: vec![0.0],
                radius: 0.0,
            }),
            ..base
        },
        "deterministic-steering" => ProblemDescription {
            drift: Some(DriftDescription {
                control: Some(vec![vec![1.0]]),
                ..Default::default()
            }),
            terminal_cost: Some(TerminalCostDescription {
                quadratic: 1.0,
                ..Default::default()
            }),
            controls: Some(ControlGridDescription {
                points: None,
                uniform: Some(vec![RangeDescription {
                    min: -1.0,
                    max: 1.0,
                    count: 21,
                }]),
            }),
            ..base
        },
        "jump-variance" => ProblemDescription {
            diffusion: Some(DiffusionDescription {
                constant: vec![vec![1.0]],
            }),
            jump: Some(JumpDescription {
                mark_gain: 0.0,
                constant: Some(vec![1.0]),
            }),
            levy: Some(LevyDescription {
                atoms: vec![AtomDescription {
                    mark: vec![1.0],
                    weight: 2.0,
                }],
                delta: 0.0,
            }),
            terminal_cost: Some(TerminalCostDescription {
                quadratic: 1.0,
                ..Default::default()
            }),
            controls: Some(scalar_controls(&[0.0])),
            ..base
        },
        other => return Err(ModelError::Invalid(format!("unknown builtin problem `{other}`"))),
    };
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_json() -> &'static str {
        r#"{
            "dim_state": 1, "dim_noise": 1, "horizon": 1.0,
            "drift": {"control": [[1.0]]},
            "diffusion": {"constant": [[0.2]]},
            "jump": {"mark_gain": 1.0},
            "running_cost": {"control_quadratic": 1.0},
            "terminal_cost": {"quadratic": 1.0},
            "controls": {"points": [[-1.0], [0.0], [1.0]]},
            "levy": {"atoms": [{"mark": [-0.1], "weight": 1.0}]}
        }"#
    }

    #[test]
    fn json_description_compiles() {
        let desc: ProblemDescription = serde_json::from_str(example_json()).unwrap();
        let spec = build_problem(&desc).unwrap();
        let c = spec.eval_coefficients(0.0, &[0.0], &[1.0]).unwrap();
        assert_eq!(c.f_val, vec![1.0]);
        assert_eq!(c.sigma_val, vec![0.2]);
        assert_eq!(c.l_val, 1.0);
        assert_eq!(c.chi_vals, vec![vec![-0.1]]);
        assert_eq!(spec.terminal_cost(&[2.0]).unwrap(), 4.0);
    }

    #[test]
    fn validation_errors() {
        let mut desc: ProblemDescription = serde_json::from_str(example_json()).unwrap();
        desc.horizon = Some(0.0);
        assert_eq!(build_problem(&desc).unwrap_err(), ModelError::NonpositiveHorizon(0.0));
        desc.horizon = None;
        assert_eq!(build_problem(&desc).unwrap_err(), ModelError::MissingField("horizon"));
        desc.horizon = Some(1.0);
        desc.levy.as_mut().unwrap().atoms[0].weight = -1.0;
        assert!(matches!(
            build_problem(&desc).unwrap_err(),
            ModelError::NegativeWeight { .. }
        ));
        desc.levy = None;
        desc.controls = Some(ControlGridDescription {
            points: Some(vec![]),
            uniform: None,
        });
        assert_eq!(build_problem(&desc).unwrap_err(), ModelError::EmptyControlGrid);
    }

    #[test]
    fn uniform_controls_form_a_tensor_grid() {
        let grid = expand_controls(&ControlGridDescription {
            points: None,
            uniform: Some(vec![
                RangeDescription { min: -1.0, max: 1.0, count: 3 },
                RangeDescription { min: 0.0, max: 1.0, count: 2 },
            ]),
        })
        .unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[0], vec![-1.0, 0.0]);
        assert_eq!(grid[5], vec![1.0, 1.0]);
    }

    #[test]
    fn builtins_build() {
        for name in BUILTIN_NAMES {
            let desc = ProblemDescription {
                builtin: Some(name.to_string()),
                ..Default::default()
            };
            build_problem(&desc).unwrap();
        }
        let steering = build_problem(&builtin("deterministic-steering").unwrap()).unwrap();
        assert_eq!(steering.controls().len(), 21);
        assert!((steering.controls()[20][0] - 1.0).abs() < 1e-15);
        let frozen = build_problem(&builtin("frozen-penalty").unwrap()).unwrap();
        assert_eq!(frozen.distance(&[-2.0]).unwrap(), 2.0);
    }

    #[test]
    fn constraint_json_round_trip() {
        let c = ConstraintDescription::HalfSpace {
            normal: vec![1.0],
            offset: 0.5,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(text, r#"{"kind":"half_space","normal":[1.0],"offset":0.5}"#);
        assert_eq!(serde_json::from_str::<ConstraintDescription>(&text).unwrap(), c);
    }
}
