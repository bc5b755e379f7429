//! Euler–Maruyama simulation of the state/budget pair `(x, y)`.
//!
//! Per step of length `h`, with `ΔB ~ N(0, h I_r)` and `ΔN_k ~ Poisson(w_k h)`:
//!
//! ```text
//! x ← x + f h + σ ΔB + Σ_k χ_k (ΔN_k − w_k h)
//! y ← y − l h + αᵀ ΔB + Σ_k β_k (ΔN_k − w_k h)
//! ```
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! and estimators reduce in path order, so results do not depend on the
//! rayon thread count.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{CoefficientValues, ModelError, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("step {dt} exceeds the remaining horizon {remaining}")]
    StepTooLarge { dt: f64, remaining: f64 },
    #[error("invalid simulation request: {0}")]
    InvalidRequest(String),
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("policy returned control {0:?} outside the control grid")]
    ControlOutsideGrid(Vec<f64>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type ControlPolicy = Arc<dyn Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync>;
pub type AlphaPolicy = Arc<dyn Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync>;
pub type BetaPolicy = Arc<dyn Fn(f64, &[f64], f64, usize) -> f64 + Send + Sync>;

/// Markov feedback controls `(u, α, β)` as functions of `(t, x, y)`.
#[derive(Clone)]
pub struct PolicyTriple {
    pub control: ControlPolicy,
    pub alpha: AlphaPolicy,
    pub beta: BetaPolicy,
}

impl PolicyTriple {
    pub fn constant(u: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self {
            control: Arc::new(move |_, _, _| u.clone()),
            alpha: Arc::new(move |_, _, _| alpha.clone()),
            beta: Arc::new(move |_, _, _, k| beta.get(k).copied().unwrap_or(0.0)),
        }
    }

    /// Fixed control with `α = 0`, `β = 0`.
    pub fn control_only(u: Vec<f64>, dim_noise: usize) -> Self {
        Self::constant(u, vec![0.0; dim_noise], Vec::new())
    }

    pub fn feedback(control: impl Fn(f64, &[f64], f64) -> Vec<f64> + Send + Sync + 'static, dim_noise: usize) -> Self {
        Self {
            control: Arc::new(control),
            alpha: Arc::new(move |_, _, _| vec![0.0; dim_noise]),
            beta: Arc::new(|_, _, _, _| 0.0),
        }
    }
}

/// Source of Brownian and Poisson increments.
pub trait NoiseSource {
    /// Fills `out` with independent `N(0, 1)` draws.
    fn standard_normals(&mut self, out: &mut [f64]);
    fn poisson(&mut self, mean: f64) -> u64;
}

/// Counter-based stream for one path.
pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self(rng)
    }
}

impl NoiseSource for PathRng {
    fn standard_normals(&mut self, out: &mut [f64]) {
        for z in out {
            *z = StandardNormal.sample(&mut self.0);
        }
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        // rand_distr's Poisson switches to rejection sampling for large means
        // and is exact for the small per-step means used here.
        Poisson::new(mean).map(|p| p.sample(&mut self.0) as u64).unwrap_or_else(|_| {
            // Fallback for pathological means: normal approximation.
            let z: f64 = self.0.sample(StandardNormal);
            (mean + mean.sqrt() * z).round().max(0.0) as u64
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub x_path: Vec<Vec<f64>>,
    pub y_path: Vec<f64>,
    /// `(time of the step end, atom index)` for every jump event.
    pub jump_log: Vec<(f64, usize)>,
    /// `∫ d(x_s) ds` by the left-point rule.
    pub penalty: f64,
}

impl PathSample {
    /// CSV with columns `t, x_1..x_n, y, jump_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let n = self.x_path.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("y".into());
        header.push("jump_flag".into());
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let jumped = i > 0 && self.jump_log.iter().any(|(jt, _)| jt == t);
            let mut row = vec![t.to_string()];
            row.extend(self.x_path[i].iter().map(f64::to_string));
            row.push(self.y_path[i].to_string());
            row.push(u8::from(jumped).to_string());
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Monte Carlo mean with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            half_width: 1.96 * (var / n as f64).sqrt(),
            n_paths: n,
            seed,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }
}

/// Step sizes from `t0` to `t_end`: uniform `dt`, last step shortened.
pub fn time_grid(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let span = t_end - t0;
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..steps).map(|i| t0 + dt * i as f64).collect();
    times.push(t_end);
    times
}

/// Terminal summary of one simulated pair path.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerminal {
    pub x: Vec<f64>,
    /// `y_T − b0`, accumulated from zero so the budget shift is exact.
    pub y_increment: f64,
    pub penalty: f64,
}

struct Integrator<'a> {
    spec: &'a ProblemSpec,
    policy: &'a PolicyTriple,
    coeffs: CoefficientValues,
    normals: Vec<f64>,
    jumps: Vec<u64>,
}

impl<'a> Integrator<'a> {
    fn new(spec: &'a ProblemSpec, policy: &'a PolicyTriple) -> Self {
        Self {
            spec,
            policy,
            coeffs: CoefficientValues::zeros(spec.dim_state(), spec.dim_noise(), spec.levy().len()),
            normals: vec![0.0; spec.dim_noise()],
            jumps: vec![0; spec.levy().len()],
        }
    }

    /// Advances `(x, y_inc)` by one step of length `h` starting at time `t`.
    /// Returns `d(x_t)` so the caller can accumulate the penalty.
    fn step(
        &mut self,
        t: f64,
        h: f64,
        b0: f64,
        x: &mut [f64],
        y_inc: &mut f64,
        noise: &mut impl NoiseSource,
    ) -> Result<f64, SimulateError> {
        let spec = self.spec;
        let n = spec.dim_state();
        let r = spec.dim_noise();
        let y = b0 + *y_inc;
        let u = (self.policy.control)(t, x, y);
        if !spec.contains_control(&u) {
            return Err(SimulateError::ControlOutsideGrid(u));
        }
        let alpha = (self.policy.alpha)(t, x, y);
        if alpha.len() != r || alpha.iter().any(|v| !v.is_finite()) {
            return Err(SimulateError::InvalidRequest("alpha policy must return r finite values".into()));
        }
        spec.eval_coefficients_into(t, x, &u, &mut self.coeffs)?;
        let dist = spec.distance(x)?;

        noise.standard_normals(&mut self.normals);
        let sqrt_h = h.sqrt();
        for z in &mut self.normals {
            *z *= sqrt_h;
        }
        for (k, atom) in spec.levy().atoms().iter().enumerate() {
            self.jumps[k] = noise.poisson(atom.weight * h);
        }

        let c = &self.coeffs;
        let mut dy = -c.l_val * h;
        for (j, db) in self.normals.iter().enumerate() {
            dy += alpha[j] * db;
        }
        for (k, atom) in spec.levy().atoms().iter().enumerate() {
            let compensated = self.jumps[k] as f64 - atom.weight * h;
            if compensated != 0.0 {
                let beta = (self.policy.beta)(t, x, y, k);
                dy += beta * compensated;
            }
        }
        for i in 0..n {
            let mut dx = c.f_val[i] * h;
            for j in 0..r {
                dx += c.sigma_val[i * r + j] * self.normals[j];
            }
            for (k, atom) in spec.levy().atoms().iter().enumerate() {
                dx += c.chi_vals[k][i] * (self.jumps[k] as f64 - atom.weight * h);
            }
            x[i] += dx;
        }
        *y_inc += dy;
        if x.iter().any(|v| !v.is_finite()) || !y_inc.is_finite() {
            return Err(SimulateError::NonFiniteState(t + h));
        }
        Ok(dist)
    }
}

fn check_start(spec: &ProblemSpec, t0: f64, t_end: f64, dt: f64) -> Result<(), SimulateError> {
    if !(t0 >= 0.0 && t0 < t_end && t_end <= spec.horizon() + 1e-12) {
        return Err(SimulateError::InvalidRequest(format!(
            "need 0 ≤ t0 < t_end ≤ T, got t0 = {t0}, t_end = {t_end}"
        )));
    }
    if !(dt > 0.0) {
        return Err(SimulateError::InvalidRequest(format!("dt must be positive, got {dt}")));
    }
    if dt > t_end - t0 + 1e-12 {
        return Err(SimulateError::StepTooLarge {
            dt,
            remaining: t_end - t0,
        });
    }
    Ok(())
}

/// Simulates one path over `[t0, T]` and records every node.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pair_path(
    spec: &ProblemSpec,
    t0: f64,
    a0: &[f64],
    b0: f64,
    policy: &PolicyTriple,
    dt: f64,
    noise: &mut impl NoiseSource,
) -> Result<PathSample, SimulateError> {
    let t_end = spec.horizon();
    check_start(spec, t0, t_end, dt)?;
    let times = time_grid(t0, t_end, dt);
    let mut integrator = Integrator::new(spec, policy);
    let mut x = a0.to_vec();
    let mut y_inc = 0.0;
    let mut penalty = 0.0;
    let mut x_path = vec![x.clone()];
    let mut y_path = vec![b0];
    let mut jump_log = Vec::new();
    for w in times.windows(2) {
        let h = w[1] - w[0];
        penalty += h * integrator.step(w[0], h, b0, &mut x, &mut y_inc, noise)?;
        for (k, &count) in integrator.jumps.iter().enumerate() {
            for _ in 0..count {
                jump_log.push((w[1], k));
            }
        }
        x_path.push(x.clone());
        y_path.push(b0 + y_inc);
    }
    Ok(PathSample {
        times,
        x_path,
        y_path,
        jump_log,
        penalty,
    })
}

/// Simulates one path over `[t0, t_end]` without recording it.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pair_terminal(
    spec: &ProblemSpec,
    t0: f64,
    t_end: f64,
    a0: &[f64],
    b0: f64,
    policy: &PolicyTriple,
    dt: f64,
    noise: &mut impl NoiseSource,
) -> Result<PairTerminal, SimulateError> {
    check_start(spec, t0, t_end, dt)?;
    let times = time_grid(t0, t_end, dt);
    let mut integrator = Integrator::new(spec, policy);
    let mut x = a0.to_vec();
    let mut y_inc = 0.0;
    let mut penalty = 0.0;
    for w in times.windows(2) {
        let h = w[1] - w[0];
        penalty += h * integrator.step(w[0], h, b0, &mut x, &mut y_inc, noise)?;
    }
    Ok(PairTerminal {
        x,
        y_increment: y_inc,
        penalty,
    })
}

/// Runs `n_paths` independent paths and reduces `value` in path order.
pub fn monte_carlo(
    n_paths: usize,
    seed: u64,
    value: impl Fn(&mut PathRng) -> Result<f64, SimulateError> + Sync,
) -> Result<McEstimate, SimulateError> {
    if n_paths < 2 {
        return Err(SimulateError::InvalidRequest("n_paths must be ≥ 2".into()));
    }
    let samples = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| value(&mut PathRng::new(seed, i)))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// Estimates `J(t0, a0; u) = E[∫ l ds + m(x_T)]` for a feedback control.
pub fn estimate_j(
    spec: &ProblemSpec,
    t0: f64,
    a0: &[f64],
    control: &ControlPolicy,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<McEstimate, SimulateError> {
    let r = spec.dim_noise();
    let policy = PolicyTriple {
        control: control.clone(),
        alpha: Arc::new(move |_, _, _| vec![0.0; r]),
        beta: Arc::new(|_, _, _, _| 0.0),
    };
    monte_carlo(n_paths, seed, |rng| {
        let end = simulate_pair_terminal(spec, t0, spec.horizon(), a0, 0.0, &policy, dt, rng)?;
        // With α = β = 0 the budget increment is exactly −∫ l ds.
        Ok(-end.y_increment + spec.terminal_cost(&end.x)?)
    })
}

/// Estimates `J̄ = E[max{m(x_T) − y_T, 0} + ∫ d(x_s) ds]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_jbar(
    spec: &ProblemSpec,
    t0: f64,
    a0: &[f64],
    b0: f64,
    policy: &PolicyTriple,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<McEstimate, SimulateError> {
    monte_carlo(n_paths, seed, |rng| {
        let end = simulate_pair_terminal(spec, t0, spec.horizon(), a0, b0, policy, dt, rng)?;
        let y_t = b0 + end.y_increment;
        Ok((spec.terminal_cost(&end.x)? - y_t).max(0.0) + end.penalty)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentPoint {
    pub a: Vec<f64>,
    /// Estimate of `E[sup_s |x_s|²]`; infinite when paths diverged.
    pub sup_second_moment: f64,
    /// `sup_second_moment / (1 + |a|²)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub points: Vec<MomentPoint>,
    /// Largest ratio over the points.
    pub c_hat: f64,
    pub diverged: bool,
    /// Set when the ratio grows with `|a|` (largest-|a| ratio more than twice
    /// the smallest ratio) or when any path diverged.
    pub flag: bool,
}

/// Empirical check of `E[sup |x_s|²] ≤ C (1 + |a|²)` with a fixed control.
pub fn check_moment_bound(
    spec: &ProblemSpec,
    initial_points: &[Vec<f64>],
    control: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MomentReport, SimulateError> {
    if initial_points.len() < 2 {
        return Err(SimulateError::InvalidRequest("need at least two initial points".into()));
    }
    let policy = PolicyTriple::control_only(control.to_vec(), spec.dim_noise());
    let t_end = spec.horizon();
    check_start(spec, 0.0, t_end, dt)?;
    let times = time_grid(0.0, t_end, dt);
    let mut points = Vec::with_capacity(initial_points.len());
    let mut diverged = false;
    for a in initial_points {
        let est = monte_carlo(n_paths, seed, |rng| {
            let mut integrator = Integrator::new(spec, &policy);
            let mut x = a.clone();
            let mut y_inc = 0.0;
            let mut sup = x.iter().map(|v| v * v).sum::<f64>();
            for w in times.windows(2) {
                match integrator.step(w[0], w[1] - w[0], 0.0, &mut x, &mut y_inc, rng) {
                    Ok(_) => {}
                    Err(SimulateError::NonFiniteState(_))
                    | Err(SimulateError::Model(ModelError::NonFiniteCoefficient(_))) => {
                        return Ok(f64::INFINITY)
                    }
                    Err(e) => return Err(e),
                }
                sup = sup.max(x.iter().map(|v| v * v).sum::<f64>());
            }
            Ok(sup)
        })?;
        let second = est.mean;
        if !second.is_finite() {
            diverged = true;
        }
        let a2: f64 = a.iter().map(|v| v * v).sum();
        points.push(MomentPoint {
            a: a.clone(),
            sup_second_moment: second,
            ratio: second / (1.0 + a2),
        });
    }
    let c_hat = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let ni: f64 = points[i].a.iter().map(|v| v * v).sum();
        let nj: f64 = points[j].a.iter().map(|v| v * v).sum();
        ni.total_cmp(&nj)
    });
    let min_ratio = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let last = points[*order.last().unwrap()].ratio;
    let flag = diverged || !(last <= 2.0 * min_ratio);
    Ok(MomentReport {
        points,
        c_hat,
        diverged,
        flag,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub brownian: McEstimate,
    pub compensated: McEstimate,
    pub pass: bool,
}

/// Sample means of `∫ αᵀ dB` and `∫∫ β dÑ` over `[0, T]` for constant
/// integrands; passes when both confidence intervals cover zero.
pub fn check_martingale_zero_mean(
    spec: &ProblemSpec,
    alpha: &[f64],
    beta: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MartingaleReport, SimulateError> {
    if alpha.len() != spec.dim_noise() || beta.len() != spec.levy().len() {
        return Err(SimulateError::InvalidRequest(
            "alpha needs r entries and beta one entry per atom".into(),
        ));
    }
    let t_end = spec.horizon();
    check_start(spec, 0.0, t_end, dt)?;
    let times = time_grid(0.0, t_end, dt);
    let r = spec.dim_noise();
    let both = |rng: &mut PathRng| {
        let mut z = vec![0.0; r];
        let (mut ib, mut ij) = (0.0, 0.0);
        for w in times.windows(2) {
            let h = w[1] - w[0];
            rng.standard_normals(&mut z);
            ib += alpha.iter().zip(&z).map(|(a, z)| a * z * h.sqrt()).sum::<f64>();
            for (k, atom) in spec.levy().atoms().iter().enumerate() {
                let count = rng.poisson(atom.weight * h) as f64;
                ij += beta[k] * (count - atom.weight * h);
            }
        }
        (ib, ij)
    };
    let brownian = monte_carlo(n_paths, seed, |rng| Ok(both(rng).0))?;
    let compensated = monte_carlo(n_paths, seed, |rng| Ok(both(rng).1))?;
    let pass = brownian.covers(0.0) && compensated.covers(0.0);
    Ok(MartingaleReport {
        brownian,
        compensated,
        pass,
    })
}
