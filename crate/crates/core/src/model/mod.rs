//! Constrained control problem definition.
//!
//! A [`ProblemSpec`] bundles the controlled jump diffusion
//!
//! ```text
//! dx = f(t,x,u) dt + σ(t,x,u) dB + Σ_k χ(t,x,u,e_k) (dN_k − w_k dt)
//! ```
//!
//! with its running cost `l`, terminal cost `m`, finite control grid, finite
//! Lévy measure and the distance `d(·, Γ)` to the state constraint. All
//! coefficients are pure callables; [`description`] provides a declarative
//! (JSON) front end that compiles into callables.

pub mod description;
mod regularity;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use description::{builtin, ProblemDescription};
pub use regularity::{check_regularity, RegularityEntry, RegularityReport};

pub type VectorFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type CostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("horizon must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error("control grid is empty")]
    EmptyControlGrid,
    #[error("Lévy atom {index} has non-positive weight {weight}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("Lévy atom {0} has a zero mark")]
    ZeroMark(usize),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0} returned a non-finite value")]
    NonFiniteCoefficient(&'static str),
    #[error("{what} returned negative value {value}")]
    NegativeCost { what: &'static str, value: f64 },
    #[error("distance function returned negative value {0}")]
    NegativeDistance(f64),
    #[error("invalid problem data: {0}")]
    Invalid(String),
}

/// One atom `(e_k, w_k)` of a finite Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyAtom {
    pub mark: Vec<f64>,
    pub weight: f64,
}

impl LevyAtom {
    pub fn new(mark: Vec<f64>, weight: f64) -> Self {
        Self { mark, weight }
    }

    pub fn mark_norm(&self) -> f64 {
        norm(&self.mark)
    }
}

/// Finite-activity Lévy measure `π = Σ_k w_k δ_{e_k}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevyModel {
    atoms: Vec<LevyAtom>,
    total_mass: f64,
    delta: f64,
}

impl LevyModel {
    pub fn new(atoms: Vec<LevyAtom>, delta: f64) -> Result<Self, ModelError> {
        for (index, atom) in atoms.iter().enumerate() {
            if !(atom.weight > 0.0) || !atom.weight.is_finite() {
                return Err(ModelError::NegativeWeight {
                    index,
                    weight: atom.weight,
                });
            }
            if atom.mark.is_empty() || atom.mark.iter().all(|&e| e == 0.0) {
                return Err(ModelError::ZeroMark(index));
            }
        }
        if !(delta >= 0.0) {
            return Err(ModelError::Invalid(format!("truncation radius {delta} < 0")));
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Ok(Self {
            atoms,
            total_mass,
            delta,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[LevyAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `π(E)`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `Σ_k w_k min(1, |e_k|²)`; always finite for atom lists.
    pub fn levy_integral(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * a.mark_norm().powi(2).min(1.0))
            .sum()
    }
}

/// State constraint `Γ`, represented through its distance function.
#[derive(Clone)]
pub enum Constraint {
    /// `Γ = ℝⁿ`.
    Everywhere,
    /// Axis-aligned box `[lower, upper]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Closed ball; radius 0 gives a single point.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{a : ⟨normal, a⟩ ≤ offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Nonnegative orthant with `d(a) = |a − a·1_{a ⪰ 0}|`.
    NonnegativeOrthant,
    /// User-supplied distance; must be nonnegative and vanish exactly on `Γ`.
    Custom(StateFn),
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Everywhere => write!(f, "Everywhere"),
            Self::Box { lower, upper } => write!(f, "Box({lower:?}, {upper:?})"),
            Self::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Self::HalfSpace { normal, offset } => write!(f, "HalfSpace({normal:?}, {offset})"),
            Self::NonnegativeOrthant => write!(f, "NonnegativeOrthant"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Constraint {
    pub fn distance(&self, a: &[f64]) -> f64 {
        match self {
            Self::Everywhere => 0.0,
            Self::Box { lower, upper } => a
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&lo, &hi))| {
                    let gap = if x < lo {
                        lo - x
                    } else if x > hi {
                        x - hi
                    } else {
                        0.0
                    };
                    gap * gap
                })
                .sum::<f64>()
                .sqrt(),
            Self::Ball { center, radius } => {
                let r = a
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (r - radius).max(0.0)
            }
            Self::HalfSpace { normal, offset } => {
                let dot: f64 = normal.iter().zip(a).map(|(n, x)| n * x).sum();
                (dot - offset).max(0.0) / norm(normal)
            }
            Self::NonnegativeOrthant => a
                .iter()
                .map(|&x| x.min(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::Custom(d) => d(a),
        }
    }
}

/// Coefficients evaluated at one `(t, a, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientValues {
    pub f_val: Vec<f64>,
    /// Row-major `n × r`.
    pub sigma_val: Vec<f64>,
    /// One jump vector per Lévy atom.
    pub chi_vals: Vec<Vec<f64>>,
    pub l_val: f64,
}

impl CoefficientValues {
    pub fn zeros(n: usize, r: usize, atoms: usize) -> Self {
        Self {
            f_val: vec![0.0; n],
            sigma_val: vec![0.0; n * r],
            chi_vals: vec![vec![0.0; n]; atoms],
            l_val: 0.0,
        }
    }

    /// `σσᵀ`, row-major `n × n`.
    pub fn sigma_sigma_t(&self, n: usize, r: usize) -> Vec<f64> {
        let s = &self.sigma_val;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..r).map(|k| s[i * r + k] * s[j * r + k]).sum();
            }
        }
        out
    }
}

/// Validated control problem.
#[derive(Clone)]
pub struct ProblemSpec {
    dim_state: usize,
    dim_noise: usize,
    horizon: f64,
    drift: VectorFn,
    diffusion: VectorFn,
    jump: JumpFn,
    running_cost: CostFn,
    terminal_cost: StateFn,
    controls: Vec<Vec<f64>>,
    levy: LevyModel,
    constraint: Constraint,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("horizon", &self.horizon)
            .field("controls", &self.controls)
            .field("levy", &self.levy)
            .field("constraint", &self.constraint)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn builder(dim_state: usize, dim_noise: usize) -> ProblemBuilder {
        ProblemBuilder::new(dim_state, dim_noise)
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn dim_control(&self) -> usize {
        self.controls[0].len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn levy(&self) -> &LevyModel {
        &self.levy
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// Same problem with a different control grid.
    pub fn with_controls(&self, controls: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        check_controls(&controls)?;
        Ok(Self {
            controls,
            ..self.clone()
        })
    }

    /// Same dynamics and constraint, costs replaced by zero. The value of
    /// this problem without `b` is the pure penalty field used at `b_max`.
    pub fn penalty_only(&self) -> Self {
        Self {
            running_cost: Arc::new(|_, _, _| 0.0),
            terminal_cost: Arc::new(|_| 0.0),
            ..self.clone()
        }
    }

    pub fn contains_control(&self, u: &[f64]) -> bool {
        self.controls.iter().any(|c| {
            c.len() == u.len()
                && c.iter()
                    .zip(u)
                    .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
        })
    }

    pub fn eval_coefficients(
        &self,
        t: f64,
        a: &[f64],
        u: &[f64],
    ) -> Result<CoefficientValues, ModelError> {
        let mut out = CoefficientValues::zeros(self.dim_state, self.dim_noise, self.levy.len());
        self.eval_coefficients_into(t, a, u, &mut out)?;
        Ok(out)
    }

    pub fn eval_coefficients_into(
        &self,
        t: f64,
        a: &[f64],
        u: &[f64],
        out: &mut CoefficientValues,
    ) -> Result<(), ModelError> {
        let n = self.dim_state;
        out.f_val = (self.drift)(t, a, u);
        check_vector("drift", &out.f_val, n)?;
        out.sigma_val = (self.diffusion)(t, a, u);
        check_vector("diffusion", &out.sigma_val, n * self.dim_noise)?;
        out.chi_vals.resize(self.levy.len(), Vec::new());
        for (slot, atom) in out.chi_vals.iter_mut().zip(self.levy.atoms()) {
            *slot = (self.jump)(t, a, u, &atom.mark);
            check_vector("jump", slot, n)?;
        }
        let l = (self.running_cost)(t, a, u);
        if !l.is_finite() {
            return Err(ModelError::NonFiniteCoefficient("running cost"));
        }
        if l < 0.0 {
            return Err(ModelError::NegativeCost {
                what: "running cost",
                value: l,
            });
        }
        out.l_val = l;
        Ok(())
    }

    pub fn terminal_cost(&self, a: &[f64]) -> Result<f64, ModelError> {
        let m = (self.terminal_cost)(a);
        if !m.is_finite() {
            return Err(ModelError::NonFiniteCoefficient("terminal cost"));
        }
        if m < 0.0 {
            return Err(ModelError::NegativeCost {
                what: "terminal cost",
                value: m,
            });
        }
        Ok(m)
    }

    pub fn running_cost(&self, t: f64, a: &[f64], u: &[f64]) -> f64 {
        (self.running_cost)(t, a, u)
    }

    pub fn drift(&self, t: f64, a: &[f64], u: &[f64]) -> Vec<f64> {
        (self.drift)(t, a, u)
    }

    pub fn diffusion(&self, t: f64, a: &[f64], u: &[f64]) -> Vec<f64> {
        (self.diffusion)(t, a, u)
    }

    pub fn jump(&self, t: f64, a: &[f64], u: &[f64], e: &[f64]) -> Vec<f64> {
        (self.jump)(t, a, u, e)
    }

    /// `d(a, Γ)`.
    pub fn distance(&self, a: &[f64]) -> Result<f64, ModelError> {
        let d = self.constraint.distance(a);
        if d.is_nan() {
            return Err(ModelError::NonFiniteCoefficient("distance"));
        }
        if d < 0.0 {
            return Err(ModelError::NegativeDistance(d));
        }
        Ok(d)
    }
}

fn check_vector(what: &'static str, v: &[f64], len: usize) -> Result<(), ModelError> {
    if v.len() != len {
        return Err(ModelError::Dimension {
            what,
            expected: len,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFiniteCoefficient(what));
    }
    Ok(())
}

fn check_controls(controls: &[Vec<f64>]) -> Result<(), ModelError> {
    let first = controls.first().ok_or(ModelError::EmptyControlGrid)?;
    if first.is_empty() {
        return Err(ModelError::Invalid("controls must have dimension ≥ 1".into()));
    }
    for c in controls {
        if c.len() != first.len() {
            return Err(ModelError::Dimension {
                what: "control point",
                expected: first.len(),
                got: c.len(),
            });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Invalid("non-finite control point".into()));
        }
    }
    Ok(())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builder for [`ProblemSpec`]. Coefficients default to zero and the
/// constraint to `Γ = ℝⁿ`; horizon and controls are required.
pub struct ProblemBuilder {
    dim_state: usize,
    dim_noise: usize,
    horizon: Option<f64>,
    drift: Option<VectorFn>,
    diffusion: Option<VectorFn>,
    jump: Option<JumpFn>,
    running_cost: Option<CostFn>,
    terminal_cost: Option<StateFn>,
    controls: Option<Vec<Vec<f64>>>,
    levy: LevyModel,
    constraint: Constraint,
}

impl ProblemBuilder {
    pub fn new(dim_state: usize, dim_noise: usize) -> Self {
        Self {
            dim_state,
            dim_noise,
            horizon: None,
            drift: None,
            diffusion: None,
            jump: None,
            running_cost: None,
            terminal_cost: None,
            controls: None,
            levy: LevyModel::empty(),
            constraint: Constraint::Everywhere,
        }
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn drift(mut self, f: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    /// `σ(t,a,u)` as a row-major `n × r` vector.
    pub fn diffusion(
        mut self,
        sigma: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(sigma));
        self
    }

    pub fn jump(
        mut self,
        chi: impl Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jump = Some(Arc::new(chi));
        self
    }

    pub fn running_cost(mut self, l: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.running_cost = Some(Arc::new(l));
        self
    }

    pub fn terminal_cost(mut self, m: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal_cost = Some(Arc::new(m));
        self
    }

    pub fn controls(mut self, controls: Vec<Vec<f64>>) -> Self {
        self.controls = Some(controls);
        self
    }

    /// Scalar controls, one point each.
    pub fn scalar_controls(self, values: &[f64]) -> Self {
        self.controls(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn levy(mut self, levy: LevyModel) -> Self {
        self.levy = levy;
        self
    }

    pub fn constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn build(self) -> Result<ProblemSpec, ModelError> {
        if self.dim_state == 0 {
            return Err(ModelError::Invalid("state dimension must be ≥ 1".into()));
        }
        if self.dim_noise == 0 {
            return Err(ModelError::Invalid("noise dimension must be ≥ 1".into()));
        }
        let horizon = self.horizon.ok_or(ModelError::MissingField("horizon"))?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ModelError::NonpositiveHorizon(horizon));
        }
        let controls = self.controls.ok_or(ModelError::MissingField("controls"))?;
        check_controls(&controls)?;
        let n = self.dim_state;
        let nr = n * self.dim_noise;
        Ok(ProblemSpec {
            dim_state: n,
            dim_noise: self.dim_noise,
            horizon,
            drift: self.drift.unwrap_or_else(|| Arc::new(move |_, _, _| vec![0.0; n])),
            diffusion: self
                .diffusion
                .unwrap_or_else(|| Arc::new(move |_, _, _| vec![0.0; nr])),
            jump: self.jump.unwrap_or_else(|| Arc::new(move |_, _, _, _| vec![0.0; n])),
            running_cost: self.running_cost.unwrap_or_else(|| Arc::new(|_, _, _| 0.0)),
            terminal_cost: self.terminal_cost.unwrap_or_else(|| Arc::new(|_| 0.0)),
            controls,
            levy: self.levy,
            constraint: self.constraint,
        })
    }
}
