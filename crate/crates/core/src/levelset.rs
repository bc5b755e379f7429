//! Recovering `V(t, a) = inf{b ≥ 0 : W(t, a, b) = 0}` and the reachable sets
//! `{(a, b) : W(t, a, b) ≤ ε}` from a solved `W` field.
//!
//! "Zero" means `W ≤ ε`. With interpolation on, the crossing between the last
//! budget node with `W > ε` and the first with `W ≤ ε` is placed where the
//! secant through the two values reaches zero, clamped to that cell. A slice
//! that is piecewise linear in `b` with a node at its kink is recovered
//! exactly. Budgets above the grid are never guessed: such points are
//! reported as unreachable.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::snapshot::slice_header;
use crate::solver::{Axis, FieldKind, ValueField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelSetError {
    #[error("time level {level} of the field is not stored")]
    UnsolvedField { level: usize },
    #[error("level sets need a W field with a budget axis")]
    NotABudgetField,
    #[error("the budget axis does not contain b = 0 in its interior or lower end")]
    MissingZeroBudget,
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetQuery {
    pub epsilon: f64,
    pub interpolate: bool,
}

impl LevelSetQuery {
    pub fn new(epsilon: f64, interpolate: bool) -> Result<Self, LevelSetError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(LevelSetError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon, interpolate })
    }

    /// `ε = 10⁻³ (1 + max W(T, ·, ·))`, interpolating.
    pub fn default_for(field: &ValueField) -> Result<Self, LevelSetError> {
        let level = field.time.steps;
        let terminal = field.slice(level).ok_or(LevelSetError::UnsolvedField { level })?;
        let top = terminal.iter().copied().fold(0.0_f64, f64::max);
        Self::new(1e-3 * (1.0 + top), true)
    }
}

fn zero_index(field: &ValueField) -> Result<(Axis, usize), LevelSetError> {
    let b = match (field.kind, field.b_axis) {
        (FieldKind::W, Some(b)) => b,
        _ => return Err(LevelSetError::NotABudgetField),
    };
    if !(b.min <= 0.0 && b.max > 0.0) {
        return Err(LevelSetError::MissingZeroBudget);
    }
    Ok((b, (-b.min / b.step()).round() as usize))
}

fn level_slice(field: &ValueField, level: usize) -> Result<&[f64], LevelSetError> {
    field.slice(level).ok_or(LevelSetError::UnsolvedField { level })
}

/// Crossing on one budget column `w[j0..]`; `None` when no node is within ε.
fn column_crossing(w: &[f64], b: impl Fn(usize) -> f64, j0: usize, q: &LevelSetQuery) -> Option<f64> {
    let j = (j0..w.len()).find(|&j| w[j] <= q.epsilon)?;
    if j == j0 {
        return Some(0.0);
    }
    if !q.interpolate {
        return Some(b(j));
    }
    let (hi, lo) = (w[j - 1], w[j]);
    let frac = if hi > lo { (hi / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
    Some(b(j - 1) + frac * (b(j) - b(j - 1)))
}

/// `V` at time level `level` and flat state index `p`; `Ok(None)` means no
/// budget on the grid reaches `W ≤ ε`.
pub fn extract_v(field: &ValueField, level: usize, p: usize, query: &LevelSetQuery) -> Result<Option<f64>, LevelSetError> {
    let (_, j0) = zero_index(field)?;
    let values = level_slice(field, level)?;
    let nb = field.nb();
    Ok(column_crossing(&values[p * nb..(p + 1) * nb], |j| field.b_value(j), j0, query))
}

/// `W(t, a, b) ≤ ε` on every node of the level, in the field's storage order.
pub fn reachable_slice(field: &ValueField, level: usize, query: &LevelSetQuery) -> Result<Vec<bool>, LevelSetError> {
    zero_index(field)?;
    Ok(level_slice(field, level)?.iter().map(|&w| w <= query.epsilon).collect())
}

/// `V` over the state grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct VProfile {
    pub level: usize,
    pub t: f64,
    pub a_axes: Vec<Axis>,
    pub values: Vec<Option<f64>>,
}

impl VProfile {
    /// Largest finite value, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.values.iter().flatten().copied().reduce(f64::max)
    }
}

pub fn v_profile(field: &ValueField, level: usize, query: &LevelSetQuery) -> Result<VProfile, LevelSetError> {
    let (_, j0) = zero_index(field)?;
    let values = level_slice(field, level)?;
    let nb = field.nb();
    let v = values
        .chunks(nb)
        .map(|col| column_crossing(col, |j| field.b_value(j), j0, query))
        .collect();
    Ok(VProfile {
        level,
        t: field.time.time(level),
        a_axes: field.a_axes.clone(),
        values: v,
    })
}

/// Profiles as CSV with columns `t`, `a` (or `a_1..a_n`), `V`; unreachable
/// points are written as `inf`.
pub fn write_profiles_csv<W: Write>(out: W, profiles: &[VProfile]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = profiles.first().map_or(1, |p| p.a_axes.len());
    let mut header = vec!["t".to_string()];
    header.extend(slice_header(n, false, "V"));
    w.write_record(&header)?;
    for prof in profiles {
        let strides: Vec<usize> = (0..n)
            .map(|i| prof.a_axes[i + 1..].iter().map(|a| a.count).product())
            .collect();
        for (p, v) in prof.values.iter().enumerate() {
            let mut row = vec![prof.t.to_string()];
            for (i, ax) in prof.a_axes.iter().enumerate() {
                row.push(ax.point((p / strides[i]) % ax.count).to_string());
            }
            row.push(v.map_or_else(|| "inf".to_string(), |x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
