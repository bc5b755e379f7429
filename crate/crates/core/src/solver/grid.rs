use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::hamiltonian::{FieldEval, HamiltonianError, ShiftPolicy};

/// Uniform axis `min, min + h, …, max` with `count` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    /// Node `i`; the last node is `max` exactly.
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + self.step() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Cell index `i ∈ [0, count − 2]` and fraction in `[0, 1]` for a point
    /// clamped to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x.clamp(self.min, self.max) - self.min) / self.step()).max(0.0);
        let i = (s.floor() as usize).min(self.count - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let (i, s) = self.locate(x);
        if s > 0.5 {
            i + 1
        } else {
            i
        }
    }

    pub(crate) fn validate(&self, what: &str) -> Result<(), SolverError> {
        if self.count < 3 || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(SolverError::DegenerateGrid(format!(
                "{what} needs min < max and at least 3 nodes, got [{}, {}] with {}",
                self.min, self.max, self.count
            )));
        }
        Ok(())
    }
}

/// Rectangular `(a, b)` grid plus the number of time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a_axes: Vec<Axis>,
    pub b_axis: Axis,
    /// `None` picks the smallest count allowed by the CFL bound.
    #[serde(default)]
    pub time_steps: Option<usize>,
}

impl GridSpec {
    pub fn new(a_axes: Vec<Axis>, b_axis: Axis) -> Self {
        Self {
            a_axes,
            b_axis,
            time_steps: None,
        }
    }

    pub fn with_time_steps(mut self, steps: usize) -> Self {
        self.time_steps = Some(steps);
        self
    }

    pub fn dim_state(&self) -> usize {
        self.a_axes.len()
    }

    pub fn a_nodes(&self) -> usize {
        self.a_axes.iter().map(|a| a.count).product()
    }

    /// `true` when the grid carries the diagnostic `b < 0` extension.
    pub fn extended(&self) -> bool {
        self.b_axis.min < 0.0
    }

    /// Index of `b = 0` on the budget axis.
    pub fn zero_b_index(&self) -> usize {
        (-self.b_axis.min / self.b_axis.step()).round() as usize
    }

    pub fn validate(&self, dim_state: usize) -> Result<(), SolverError> {
        if self.a_axes.len() != dim_state {
            return Err(SolverError::DegenerateGrid(format!(
                "grid has {} state axes, problem has dimension {dim_state}",
                self.a_axes.len()
            )));
        }
        for (i, axis) in self.a_axes.iter().enumerate() {
            axis.validate(&format!("state axis {i}"))?;
        }
        self.b_axis.validate("budget axis")?;
        let b = &self.b_axis;
        let j0 = -b.min / b.step();
        if b.min > 0.0 || b.max <= 0.0 || (j0 - j0.round()).abs() > 1e-9 {
            return Err(SolverError::DegenerateGrid(format!(
                "b = 0 must be a node of [{}, {}] with {} nodes",
                b.min, b.max, b.count
            )));
        }
        if self.time_steps == Some(0) {
            return Err(SolverError::DegenerateGrid("time_steps must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Node layout shared by the kernels: flat index `p · nb + j` with the last
/// state axis varying fastest in `p`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub counts: Vec<usize>,
    pub strides: Vec<usize>,
    pub na: usize,
    pub nb: usize,
}

impl Layout {
    pub fn new(a_axes: &[Axis], nb: usize) -> Self {
        let counts: Vec<usize> = a_axes.iter().map(|a| a.count).collect();
        let mut strides = vec![1; counts.len()];
        for i in (0..counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Self {
            na: counts.iter().product(),
            counts,
            strides,
            nb,
        }
    }

    pub fn coord(&self, p: usize, i: usize) -> usize {
        (p / self.strides[i]) % self.counts[i]
    }

    /// Neighbour of `p` along axis `i`, clamped at the boundary.
    pub fn shift(&self, p: usize, i: usize, up: bool) -> usize {
        let c = self.coord(p, i);
        if up {
            if c + 1 < self.counts[i] {
                p + self.strides[i]
            } else {
                p
            }
        } else if c > 0 {
            p - self.strides[i]
        } else {
            p
        }
    }
}

/// Multilinear interpolation weights for `x` on the state grid. Returns the
/// number of coordinates that had to be clamped.
pub(crate) fn interpolation_weights(
    axes: &[Axis],
    layout: &Layout,
    x: &[f64],
    idx: &mut [usize],
    w: &mut [f64],
) -> usize {
    let n = axes.len();
    let mut clamped = 0;
    let mut cells = [(0usize, 0.0f64); 8];
    let mut heap;
    let cells: &mut [(usize, f64)] = if n <= 8 {
        &mut cells[..n]
    } else {
        heap = vec![(0usize, 0.0f64); n];
        &mut heap
    };
    for d in 0..n {
        if !axes[d].contains(x[d]) {
            clamped += 1;
        }
        cells[d] = axes[d].locate(x[d]);
    }
    for c in 0..(1usize << n) {
        let mut weight = 1.0;
        let mut flat = 0;
        for d in 0..n {
            let (i, s) = cells[d];
            let bit = (c >> d) & 1;
            weight *= if bit == 1 { s } else { 1.0 - s };
            flat += (i + bit) * layout.strides[d];
        }
        idx[c] = flat;
        w[c] = weight;
    }
    clamped
}

/// Read-only interpolating view of one time level.
#[derive(Debug, Clone, Copy)]
pub struct GridSlice<'a> {
    pub a_axes: &'a [Axis],
    /// `None` for `W₀`-type fields without a budget axis.
    pub b_axis: Option<&'a Axis>,
    pub values: &'a [f64],
    pub policy: ShiftPolicy,
}

impl GridSlice<'_> {
    fn nb(&self) -> usize {
        self.b_axis.map_or(1, |b| b.count)
    }

    /// Value at a node given by its flat state index and budget index.
    pub fn node(&self, p: usize, j: usize) -> f64 {
        self.values[p * self.nb() + j]
    }
}

impl FieldEval for GridSlice<'_> {
    fn value(&self, a: &[f64], b: f64) -> Result<f64, HamiltonianError> {
        let outside = a.iter().zip(self.a_axes).any(|(x, ax)| !ax.contains(*x))
            || self.b_axis.is_some_and(|ax| !ax.contains(b));
        if outside && self.policy == ShiftPolicy::Strict {
            let mut point = a.to_vec();
            point.push(b);
            return Err(HamiltonianError::ShiftOutOfDomain { point });
        }
        let layout = Layout::new(self.a_axes, self.nb());
        let corners = 1usize << a.len();
        let mut idx = vec![0; corners];
        let mut w = vec![0.0; corners];
        interpolation_weights(self.a_axes, &layout, a, &mut idx, &mut w);
        let (jb, sb) = match self.b_axis {
            Some(ax) => ax.locate(b),
            None => (0, 0.0),
        };
        let mut total = 0.0;
        for c in 0..corners {
            let base = idx[c] * layout.nb + jb;
            let mut v = self.values[base];
            if sb > 0.0 {
                v = v * (1.0 - sb) + self.values[base + 1] * sb;
            }
            total += w[c] * v;
        }
        Ok(total)
    }
}
