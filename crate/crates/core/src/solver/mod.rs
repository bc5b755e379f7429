//! Backward-in-time explicit monotone solver for `W(t, a, b)` and `W₀(t, a)`.
//!
//! Boundary data on the budget axis:
//!
//! * `b = 0` (or `b_min < 0` on the extended grid): Dirichlet from `W₀`,
//!   shifted by `−b_min` on the extended grid, where `W = W₀ − b` holds.
//! * `b = b_max`: Dirichlet from `W_d`, the `W₀` field of the penalty-only
//!   problem, which is the large-budget limit of `W` when `α = β = 0`.
//!
//! State boundaries use clamped ghost values and jump targets are clamped to
//! the grid hull. Under the CFL bound the scheme is monotone as long as every
//! noise column drives a single state coordinate: `α` is then restricted to
//! values that make `(σ_q, α_q)` point at grid nodes (see `kernel`). Noise
//! columns that mix state coordinates use central cross differences in `a`,
//! which are not monotone, and get no `α`.

mod grid;
mod kernel;
pub mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{Axis, GridSlice, GridSpec};
pub(crate) use grid::Layout;
use kernel::{CoeffTable, Kernel};

use crate::hamiltonian::{DerivativeStencil, HamiltonianError, ShiftPolicy};
use crate::model::{CoefficientValues, ModelError, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("time step {dt} exceeds the CFL bound {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },
    #[error("non-finite value produced at node {node}")]
    NonFiniteUpdate { node: usize },
    #[error("negative value {value} produced at node {node}")]
    NegativeValue { node: usize, value: f64 },
    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),
    #[error("sweep stopped after level {level}")]
    Interrupted { level: usize },
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// Control of the budget volatility `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaControl {
    /// `α ≡ 0`.
    Zero,
    /// `|α| ≤ radius`, sampled on the grid-aligned values described in the
    /// module docs.
    Bounded { radius: f64 },
}

impl AlphaControl {
    pub fn radius(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Bounded { radius } => radius,
        }
    }
}

/// Candidate budget jumps `β_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// `β ≡ 0`.
    Zero,
    /// `β ∈ {k Δb : |k| ≤ max_steps}`, restricted to targets on the grid.
    GridDifferences { max_steps: usize },
}

impl BetaPolicy {
    pub fn max_steps(&self) -> usize {
        match *self {
            Self::Zero => 0,
            Self::GridDifferences { max_steps } => max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeParams {
    pub safety: f64,
    /// Mark size below which jumps use the second-order surrogate in
    /// diagnostics; the solver itself always evaluates jumps exactly.
    pub delta: f64,
    pub alpha: AlphaControl,
    pub beta: BetaPolicy,
    pub shift_policy: ShiftPolicy,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            safety: 0.9,
            delta: 0.0,
            alpha: AlphaControl::Bounded { radius: 1.0 },
            beta: BetaPolicy::GridDifferences { max_steps: 4 },
            shift_policy: ShiftPolicy::Clamp,
        }
    }
}

impl SchemeParams {
    /// `α = 0`, `β = 0`: the fixed-control scheme.
    pub fn frozen() -> Self {
        Self {
            alpha: AlphaControl::Zero,
            beta: BetaPolicy::Zero,
            ..Self::default()
        }
    }

    pub fn with_alpha(mut self, alpha: AlphaControl) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: BetaPolicy) -> Self {
        self.beta = beta;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    W,
    W0,
    Wd,
}

/// Uniform time levels `t_k = k T / M`, `t_M = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeAxis {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.dt() * k as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Which time levels a sweep keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    #[default]
    All,
    /// Only `t = 0` and `t = T`.
    Ends,
}

/// Values on the grid at (some of) the time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub kind: FieldKind,
    pub a_axes: Vec<Axis>,
    /// `None` for `W₀` and `W_d`.
    pub b_axis: Option<Axis>,
    pub time: TimeAxis,
    levels: Vec<Option<Vec<f64>>>,
    /// Jump targets that fell outside the state grid and were clamped.
    pub clamped_shifts: usize,
}

impl ValueField {
    pub fn new(kind: FieldKind, a_axes: Vec<Axis>, b_axis: Option<Axis>, time: TimeAxis) -> Self {
        Self {
            kind,
            a_axes,
            b_axis,
            levels: vec![None; time.steps + 1],
            time,
            clamped_shifts: 0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.time.times()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn na(&self) -> usize {
        self.a_axes.iter().map(|a| a.count).product()
    }

    pub fn nb(&self) -> usize {
        self.b_axis.map_or(1, |b| b.count)
    }

    pub fn slice(&self, level: usize) -> Option<&[f64]> {
        self.levels.get(level)?.as_deref()
    }

    pub fn set_slice(&mut self, level: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.na() * self.nb());
        self.levels[level] = Some(values);
    }

    pub fn stored_levels(&self) -> Vec<usize> {
        (0..self.levels.len()).filter(|&k| self.levels[k].is_some()).collect()
    }

    pub fn view(&self, level: usize) -> Option<GridSlice<'_>> {
        Some(GridSlice {
            a_axes: &self.a_axes,
            b_axis: self.b_axis.as_ref(),
            values: self.slice(level)?,
            policy: ShiftPolicy::Clamp,
        })
    }

    /// Multi-index of the flat state index `p`.
    pub fn a_index(&self, p: usize) -> Vec<usize> {
        let layout = Layout::new(&self.a_axes, 1);
        (0..self.a_axes.len()).map(|i| layout.coord(p, i)).collect()
    }

    pub fn a_flat(&self, index: &[usize]) -> usize {
        let layout = Layout::new(&self.a_axes, 1);
        index.iter().zip(&layout.strides).map(|(i, s)| i * s).sum()
    }

    pub fn a_point(&self, p: usize) -> Vec<f64> {
        self.a_index(p)
            .iter()
            .zip(&self.a_axes)
            .map(|(&i, ax)| ax.point(i))
            .collect()
    }

    /// Budget value of node `j`; the `b = 0` node is exactly zero.
    pub fn b_value(&self, j: usize) -> f64 {
        match &self.b_axis {
            Some(ax) => budget_point(ax, j),
            None => 0.0,
        }
    }

    pub fn value(&self, level: usize, p: usize, j: usize) -> Option<f64> {
        Some(self.slice(level)?[p * self.nb() + j])
    }

    /// Same layout and time levels.
    pub fn compatible_with(&self, other: &ValueField) -> bool {
        self.a_axes == other.a_axes && self.time == other.time
    }
}

fn budget_point(ax: &Axis, j: usize) -> f64 {
    let j0 = (-ax.min / ax.step()).round() as usize;
    if j == j0 {
        0.0
    } else {
        ax.point(j)
    }
}

/// `max{m(a) − b, 0}` for `b ≥ 0` and `m(a) − b` below zero.
pub fn terminal_condition(spec: &ProblemSpec, grid: &GridSpec) -> Result<Vec<f64>, SolverError> {
    grid.validate(spec.dim_state())?;
    let layout = Layout::new(&grid.a_axes, grid.b_axis.count);
    let mut out = Vec::with_capacity(layout.na * layout.nb);
    let mut a = vec![0.0; spec.dim_state()];
    for p in 0..layout.na {
        for (i, ax) in grid.a_axes.iter().enumerate() {
            a[i] = ax.point(layout.coord(p, i));
        }
        let m = spec.terminal_cost(&a)?;
        for j in 0..layout.nb {
            let b = budget_point(&grid.b_axis, j);
            out.push(if b >= 0.0 { (m - b).max(0.0) } else { m - b });
        }
    }
    Ok(out)
}

/// Largest stable time step of the explicit scheme.
///
/// ```text
/// Δt_max = safety / ( Σ_i max(σσᵀ)_ii / Δa_i² + Σ_{i≠l} max|(σσᵀ)_il| / (Δa_i Δa_l)
///                   + Σ_i max(|f_i| + Σ_k w_k |χ_k,i|) / Δa_i + max l / Δb
///                   + 2 π(E) + π(E) K_β
///                   + Σ_i A max|σ_i·| / (Δa_i Δb) + A² / Δb² )
/// ```
///
/// Coefficient maxima are sampled on the state nodes and controls at
/// `t ∈ {0, T/2, T}`. The result is infinite when every rate vanishes.
pub fn cfl_max_dt(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<f64, SolverError> {
    grid.validate(spec.dim_state())?;
    let n = spec.dim_state();
    let r = spec.dim_noise();
    let layout = Layout::new(&grid.a_axes, 1);
    let da: Vec<f64> = grid.a_axes.iter().map(Axis::step).collect();
    let db = grid.b_axis.step();
    let mut diag = vec![0.0f64; n];
    let mut drift = vec![0.0f64; n];
    let mut sig_row = vec![0.0f64; n];
    let mut cross = 0.0f64;
    let mut l_max = 0.0f64;
    let weights: Vec<f64> = spec.levy().atoms().iter().map(|a| a.weight).collect();
    let mut a = vec![0.0; n];
    let mut c = CoefficientValues::zeros(n, r, spec.levy().len());
    for t in [0.0, 0.5 * spec.horizon(), spec.horizon()] {
        for p in 0..layout.na {
            for (i, ax) in grid.a_axes.iter().enumerate() {
                a[i] = ax.point(layout.coord(p, i));
            }
            for u in spec.controls() {
                spec.eval_coefficients_into(t, &a, u, &mut c)?;
                let ss = c.sigma_sigma_t(n, r);
                let mut off = 0.0;
                for i in 0..n {
                    diag[i] = diag[i].max(ss[i * n + i]);
                    let jump: f64 = c.chi_vals.iter().zip(&weights).map(|(chi, w)| w * chi[i].abs()).sum();
                    drift[i] = drift[i].max(c.f_val[i].abs() + jump);
                    let row: f64 = (0..r).map(|q| c.sigma_val[i * r + q].powi(2)).sum::<f64>().sqrt();
                    sig_row[i] = sig_row[i].max(row);
                    for l in 0..n {
                        if l != i {
                            off += ss[i * n + l].abs() / (da[i] * da[l]);
                        }
                    }
                }
                cross = cross.max(off);
                l_max = l_max.max(c.l_val);
            }
        }
    }
    let mass = spec.levy().total_mass();
    let alpha = scheme.alpha.radius();
    let mut rate = cross + l_max / db + 2.0 * mass + mass * scheme.beta.max_steps() as f64;
    for i in 0..n {
        rate += diag[i] / (da[i] * da[i]) + drift[i] / da[i] + alpha * sig_row[i] / (da[i] * db);
    }
    rate += alpha * alpha / (db * db);
    Ok(if rate > 0.0 { scheme.safety / rate } else { f64::INFINITY })
}

/// Time axis from `grid.time_steps`, or the coarsest one the CFL bound allows.
pub fn time_axis(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<TimeAxis, SolverError> {
    let max_dt = cfl_max_dt(spec, grid, scheme)?;
    let horizon = spec.horizon();
    match grid.time_steps {
        Some(steps) => {
            let dt = horizon / steps as f64;
            if dt > max_dt * (1.0 + 1e-12) {
                return Err(SolverError::CflViolation { dt, max_dt });
            }
            Ok(TimeAxis { horizon, steps })
        }
        None => {
            let steps = if max_dt.is_finite() {
                ((horizon / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
            } else {
                1
            };
            Ok(TimeAxis { horizon, steps })
        }
    }
}

/// Dirichlet data for the budget boundary rows of one step; `None` keeps the
/// previous values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Boundary<'a> {
    pub bottom: Option<&'a [f64]>,
    pub top: Option<&'a [f64]>,
}

/// One explicit step from `t` back to `t − dt` on a `W` slice.
/// Coefficients are frozen at `t`.
pub fn step_backward(
    prev: &[f64],
    t: f64,
    dt: f64,
    spec: &ProblemSpec,
    grid: &GridSpec,
    scheme: &SchemeParams,
    boundary: Boundary<'_>,
) -> Result<Vec<f64>, SolverError> {
    let max_dt = cfl_max_dt(spec, grid, scheme)?;
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt, max_dt });
    }
    let stepper = Stepper::new(spec, &grid.a_axes, Some(grid.b_axis), scheme);
    if prev.len() != stepper.layout.na * stepper.layout.nb {
        return Err(SolverError::IncompatibleGrids(format!(
            "slice has {} values, grid has {}",
            prev.len(),
            stepper.layout.na * stepper.layout.nb
        )));
    }
    let mut out = vec![0.0; prev.len()];
    stepper.step(prev, t, dt, boundary, &mut out)?;
    Ok(out)
}

struct Stepper<'a> {
    spec: &'a ProblemSpec,
    axes: &'a [Axis],
    layout: Layout,
    da: Vec<f64>,
    db: Option<f64>,
    scheme: SchemeParams,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a ProblemSpec, axes: &'a [Axis], b_axis: Option<Axis>, scheme: &SchemeParams) -> Self {
        Self {
            spec,
            axes,
            layout: Layout::new(axes, b_axis.map_or(1, |b| b.count)),
            da: axes.iter().map(Axis::step).collect(),
            db: b_axis.map(|b| b.step()),
            scheme: *scheme,
        }
    }

    /// Returns the number of clamped jump targets.
    fn step(&self, prev: &[f64], t: f64, dt: f64, boundary: Boundary<'_>, out: &mut [f64]) -> Result<usize, SolverError> {
        let table = CoeffTable::build(self.spec, self.axes, &self.layout, t, self.scheme.shift_policy)?;
        let kernel = Kernel {
            layout: &self.layout,
            table: &table,
            da: &self.da,
            db: self.db,
            beta_steps: self.scheme.beta.max_steps(),
            alpha_radius: self.scheme.alpha.radius(),
        };
        kernel.step(prev, dt, boundary.bottom, boundary.top, out)?;
        Ok(table.clamped)
    }
}

fn sweep_w0(
    spec: &ProblemSpec,
    kind: FieldKind,
    axes: &[Axis],
    time: TimeAxis,
    scheme: &SchemeParams,
) -> Result<ValueField, SolverError> {
    let stepper = Stepper::new(spec, axes, None, scheme);
    let mut field = ValueField::new(kind, axes.to_vec(), None, time);
    let mut a = vec![0.0; axes.len()];
    let mut prev = Vec::with_capacity(stepper.layout.na);
    for p in 0..stepper.layout.na {
        for (i, ax) in axes.iter().enumerate() {
            a[i] = ax.point(stepper.layout.coord(p, i));
        }
        prev.push(spec.terminal_cost(&a)?);
    }
    field.set_slice(time.steps, prev.clone());
    let mut next = vec![0.0; prev.len()];
    for k in (0..time.steps).rev() {
        field.clamped_shifts += stepper.step(&prev, time.time(k + 1), time.dt(), Boundary::default(), &mut next)?;
        std::mem::swap(&mut prev, &mut next);
        field.set_slice(k, prev.clone());
    }
    Ok(field)
}

/// `W₀`: the `(t, a)` problem with running cost `l + d` and terminal cost
/// `m`. The time axis is the one `solve_w` uses for the same inputs.
pub fn solve_w0(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<ValueField, SolverError> {
    let time = time_axis(spec, grid, scheme)?;
    sweep_w0(spec, FieldKind::W0, &grid.a_axes, time, scheme)
}

/// `W₀` on an explicit time axis, e.g. a finer one than `solve_w` would pick.
pub fn solve_w0_on(
    spec: &ProblemSpec,
    a_axes: &[Axis],
    time: TimeAxis,
    scheme: &SchemeParams,
) -> Result<ValueField, SolverError> {
    if time.horizon != spec.horizon() || time.steps == 0 {
        return Err(SolverError::DegenerateGrid("time axis does not cover the horizon".into()));
    }
    // No budget axis: a huge budget step removes the l / Δb term from the bound.
    let probe = GridSpec::new(a_axes.to_vec(), Axis::new(0.0, 1e12, 3));
    let frozen = SchemeParams { alpha: AlphaControl::Zero, beta: BetaPolicy::Zero, ..*scheme };
    let max_dt = cfl_max_dt(spec, &probe, &frozen)?;
    if time.dt() > max_dt * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt: time.dt(), max_dt });
    }
    sweep_w0(spec, FieldKind::W0, a_axes, time, scheme)
}

/// `W_d`: `W₀` of the penalty-only problem (`l = m = 0`).
pub fn solve_wd(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<ValueField, SolverError> {
    let time = time_axis(spec, grid, scheme)?;
    sweep_w0(&spec.penalty_only(), FieldKind::Wd, &grid.a_axes, time, scheme)
}

pub type LevelCallback<'a> = &'a mut dyn FnMut(usize, f64, &[f64]) -> Result<(), SolverError>;

#[derive(Default)]
pub struct SolveOptions<'a> {
    pub retention: Retention,
    /// Restart from a stored slice at the given level.
    pub resume: Option<(usize, Vec<f64>)>,
    /// Called after each computed level with `(level, t, slice)`.
    pub on_level: Option<LevelCallback<'a>>,
}

/// Full pipeline: `W₀`, `W_d`, then `W`.
pub fn solve_w(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<ValueField, SolverError> {
    let w0 = solve_w0(spec, grid, scheme)?;
    let wd = solve_wd(spec, grid, scheme)?;
    solve_w_with(spec, grid, scheme, &w0, &wd, SolveOptions::default())
}

/// Sweep for `W` given boundary fields solved on the same state grid and
/// time axis.
pub fn solve_w_with(
    spec: &ProblemSpec,
    grid: &GridSpec,
    scheme: &SchemeParams,
    w0: &ValueField,
    wd: &ValueField,
    mut options: SolveOptions<'_>,
) -> Result<ValueField, SolverError> {
    let time = time_axis(spec, grid, scheme)?;
    for (name, f) in [("W0", w0), ("Wd", wd)] {
        if f.a_axes != grid.a_axes || f.time != time || f.b_axis.is_some() {
            return Err(SolverError::IncompatibleGrids(format!(
                "{name} field does not match the state grid and time axis"
            )));
        }
    }
    let stepper = Stepper::new(spec, &grid.a_axes, Some(grid.b_axis), scheme);
    let na = stepper.layout.na;
    let mut field = ValueField::new(FieldKind::W, grid.a_axes.clone(), Some(grid.b_axis), time);
    let (start, mut prev) = match options.resume.take() {
        Some((level, slice)) => {
            if level > time.steps || slice.len() != na * grid.b_axis.count {
                return Err(SolverError::IncompatibleGrids("resume slice does not match the grid".into()));
            }
            (level, slice)
        }
        None => (time.steps, terminal_condition(spec, grid)?),
    };
    if start == time.steps || start == 0 || options.retention == Retention::All {
        field.set_slice(start, prev.clone());
    }
    let shift = -grid.b_axis.min;
    let mut next = vec![0.0; prev.len()];
    let mut bottom = vec![0.0; na];
    for k in (0..start).rev() {
        let missing = || SolverError::IncompatibleGrids(format!("boundary fields lack level {k}"));
        let w0k = w0.slice(k).ok_or_else(missing)?;
        let wdk = wd.slice(k).ok_or_else(missing)?;
        for (b, v) in bottom.iter_mut().zip(w0k) {
            *b = v + shift;
        }
        let boundary = Boundary {
            bottom: Some(&bottom),
            top: Some(wdk),
        };
        field.clamped_shifts += stepper.step(&prev, time.time(k + 1), time.dt(), boundary, &mut next)?;
        std::mem::swap(&mut prev, &mut next);
        if k == 0 || options.retention == Retention::All {
            field.set_slice(k, prev.clone());
        }
        if let Some(cb) = options.on_level.as_mut() {
            cb(k, time.time(k), &prev)?;
        }
    }
    Ok(field)
}

/// Finite-difference stencil of a `W` field at node `(p, j)` of level `k`:
/// central differences of level `k + 1` and `∂ₜW ≈ (W^{k+1} − W^k) / Δt`.
/// Returns `None` when a level is missing or the node touches a boundary.
pub fn node_stencil(field: &ValueField, k: usize, p: usize, j: usize) -> Option<DerivativeStencil> {
    let next = field.slice(k + 1)?;
    let cur = field.slice(k)?;
    let b_axis = field.b_axis?;
    let nb = b_axis.count;
    if j == 0 || j + 1 >= nb {
        return None;
    }
    let layout = Layout::new(&field.a_axes, nb);
    let n = field.a_axes.len();
    for i in 0..n {
        let c = layout.coord(p, i);
        if c == 0 || c + 1 >= layout.counts[i] {
            return None;
        }
    }
    let at = |q: usize, jj: usize| next[q * nb + jj];
    let w0 = at(p, j);
    let db = b_axis.step();
    let mut s = DerivativeStencil::zeros(n);
    s.dt_w = (w0 - cur[p * nb + j]) / field.time.dt();
    for i in 0..n {
        let h = field.a_axes[i].step();
        let (up, dn) = (layout.shift(p, i, true), layout.shift(p, i, false));
        s.grad[i] = (at(up, j) - at(dn, j)) / (2.0 * h);
        s.hess_aa[i * n + i] = (at(up, j) - 2.0 * w0 + at(dn, j)) / (h * h);
        for l in 0..i {
            let hl = field.a_axes[l].step();
            let v = (at(layout.shift(up, l, true), j) - at(layout.shift(up, l, false), j)
                - at(layout.shift(dn, l, true), j)
                + at(layout.shift(dn, l, false), j))
                / (4.0 * h * hl);
            s.hess_aa[i * n + l] = v;
            s.hess_aa[l * n + i] = v;
        }
        s.hess_ab[i] = (at(up, j + 1) - at(up, j - 1) - at(dn, j + 1) + at(dn, j - 1)) / (4.0 * h * db);
    }
    s.grad[n] = (at(p, j + 1) - at(p, j - 1)) / (2.0 * db);
    s.hess_bb = (at(p, j + 1) - 2.0 * w0 + at(p, j - 1)) / (db * db);
    Some(s)
}
