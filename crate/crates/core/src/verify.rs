//! Numerical diagnostics that tie solved fields back to structural facts
//! about `W`: the shifted identity below zero budget, the strict
//! subsolution margin of `W + νγ`, the dynamic programming principle,
//! Lipschitz bounds and the spectral reformulation of the `α` supremum.
//!
//! Every check returns a [`DiagnosticReport`] whose `pass` flag is exactly
//! `max_residual ≤ tolerance`. Checks whose natural outcome is a fraction
//! report the failing fraction as the residual.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::{
    assemble_g_psi, hamiltonian_at_node, lambda_max_arrowhead, sup_alpha_bruteforce, DerivativeStencil, FieldEval,
    HamiltonianError,
};
use crate::model::{CoefficientValues, ModelError, ProblemSpec};
use crate::simulate::{monte_carlo, simulate_pair_terminal, PolicyTriple, SimulateError};
use crate::solver::{node_stencil, solve_w0, Axis, FieldKind, GridSpec, SchemeParams, SolverError, ValueField};

/// How many offenders a report keeps.
const MAX_OFFENDERS: usize = 10;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("incompatible fields: {0}")]
    IncompatibleGrids(String),
    #[error("time level {level} is not stored")]
    UnsolvedField { level: usize },
    #[error("invalid diagnostic request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Node { level: usize, a: Vec<f64>, b: Option<f64> },
    Sample { a: Vec<f64>, b: f64 },
    Instance { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub location: Location,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Worst offenders, largest residual first.
    pub details: Vec<Offender>,
    /// Check-specific numbers (fractions, estimated tolerances, counts).
    pub metrics: BTreeMap<String, f64>,
}

impl DiagnosticReport {
    pub fn new(name: &str, max_residual: f64, tolerance: f64, mut details: Vec<Offender>) -> Self {
        details.sort_by(|x, y| y.residual.total_cmp(&x.residual));
        details.truncate(MAX_OFFENDERS);
        Self {
            name: name.to_string(),
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
            details,
            metrics: BTreeMap::new(),
        }
    }

    pub fn with_metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `∫₀¹ (1 − z) ⟨D²g(x + z a) a, a⟩ dz` by `quad_nodes`-point Gauss–Legendre.
pub fn taylor_remainder_integral(hess: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], a: &[f64], quad_nodes: usize) -> f64 {
    let n = x.len();
    let (nodes, weights) = gauss_legendre(quad_nodes.max(2));
    let mut point = vec![0.0; n];
    let mut total = 0.0;
    for (s, w) in nodes.iter().zip(&weights) {
        let z = 0.5 * (s + 1.0);
        for i in 0..n {
            point[i] = x[i] + z * a[i];
        }
        let h = hess(&point);
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * h[i * n + j] * a[j];
            }
        }
        total += 0.5 * w * (1.0 - z) * quad;
    }
    total
}

/// `|g(x + a) − g(x) − ⟨Dg(x), a⟩ − ∫₀¹ (1 − z) ⟨D²g(x + z a) a, a⟩ dz|`.
pub fn taylor_remainder_residual(
    g: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    hess: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    a: &[f64],
    quad_nodes: usize,
) -> f64 {
    let shifted: Vec<f64> = x.iter().zip(a).map(|(x, a)| x + a).collect();
    let lin: f64 = grad(x).iter().zip(a).map(|(g, a)| g * a).sum();
    (g(&shifted) - g(x) - lin - taylor_remainder_integral(hess, x, a, quad_nodes)).abs()
}

/// Matching levels of a `W` field and a `W₀`-type field whose time axis
/// refines it by an integer factor.
fn level_ratio(w: &ValueField, w0: &ValueField) -> Result<usize, VerifyError> {
    if w.a_axes != w0.a_axes {
        return Err(VerifyError::IncompatibleGrids("state axes differ".into()));
    }
    if w.time.horizon != w0.time.horizon || !w0.time.steps.is_multiple_of(w.time.steps) {
        return Err(VerifyError::IncompatibleGrids(format!(
            "{} time steps of W0 do not refine the {} steps of W",
            w0.time.steps, w.time.steps
        )));
    }
    Ok(w0.time.steps / w.time.steps)
}

/// `max |W(t, a, b) − (W₀(t, a) − b)|` over the stored levels and `b ≤ 0`.
///
/// `w` must live on a budget axis reaching below zero. `w0` may use a finer
/// time axis (an integer multiple of the steps of `w`); its levels are
/// matched at common times.
pub fn shifted_identity_residual(w: &ValueField, w0: &ValueField, tolerance: f64) -> Result<DiagnosticReport, VerifyError> {
    let b_axis = match (w.kind, w.b_axis) {
        (FieldKind::W, Some(b)) if b.min < 0.0 => b,
        _ => {
            return Err(VerifyError::IncompatibleGrids(
                "the identity needs a W field extended below b = 0".into(),
            ))
        }
    };
    if w0.b_axis.is_some() {
        return Err(VerifyError::IncompatibleGrids("second field must have no budget axis".into()));
    }
    let ratio = level_ratio(w, w0)?;
    let nb = b_axis.count;
    let below: Vec<usize> = (0..nb).filter(|&j| w.b_value(j) <= 0.0).collect();
    let mut max = 0.0_f64;
    let mut details = Vec::new();
    let mut compared = 0usize;
    for k in w.stored_levels() {
        let Some(base) = w0.slice(k * ratio) else { continue };
        let slice = w.slice(k).expect("stored level");
        compared += 1;
        for p in 0..w.na() {
            for &j in &below {
                let b = w.b_value(j);
                let res = (slice[p * nb + j] - (base[p] - b)).abs();
                max = max.max(res);
                if res > 0.0 {
                    details.push(Offender {
                        location: Location::Node { level: k, a: w.a_point(p), b: Some(b) },
                        residual: res,
                    });
                }
            }
        }
        details.sort_by(|x, y| y.residual.total_cmp(&x.residual));
        details.truncate(MAX_OFFENDERS);
    }
    if compared == 0 {
        return Err(VerifyError::IncompatibleGrids("no common stored time levels".into()));
    }
    Ok(DiagnosticReport::new("shifted_identity", max, tolerance, details).with_metric("levels", compared as f64))
}

/// Scheme consistency estimate `max_a |W₀_h(0, a) − W₀_{h/2}(0, a)|` over the
/// coarse nodes, with every state step halved and the time axis of the
/// refined grid chosen by the CFL bound.
pub fn w0_refinement_gap(spec: &ProblemSpec, grid: &GridSpec, scheme: &SchemeParams) -> Result<f64, VerifyError> {
    let coarse = solve_w0(spec, grid, scheme)?;
    let fine_axes: Vec<Axis> = grid.a_axes.iter().map(|a| Axis::new(a.min, a.max, 2 * a.count - 1)).collect();
    let b = grid.b_axis;
    let fine_grid = GridSpec::new(fine_axes, Axis::new(b.min, b.max, 2 * b.count - 1));
    let fine = solve_w0(spec, &fine_grid, scheme)?;
    let (c0, f0) = (coarse.slice(0).expect("t = 0"), fine.slice(0).expect("t = 0"));
    let mut gap = 0.0_f64;
    for p in 0..coarse.na() {
        let idx: Vec<usize> = coarse.a_index(p).iter().map(|i| 2 * i).collect();
        gap = gap.max((c0[p] - f0[fine.a_flat(&idx)]).abs());
    }
    Ok(gap)
}

/// Budget-jump candidates `{kΔb}` that keep `b + β` on the axis, per atom.
fn beta_candidates(field: &ValueField, j: usize, scheme: &SchemeParams, atoms: usize) -> Vec<Vec<f64>> {
    let nb = field.nb();
    let steps = scheme.beta.max_steps() as i64;
    let list: Vec<f64> = (-steps..=steps)
        .filter(|&k| {
            let t = j as i64 + k;
            t >= 0 && t < nb as i64
        })
        .map(|k| field.b_value((j as i64 + k) as usize) - field.b_value(j))
        .collect();
    vec![list; atoms]
}

/// Discrete residual of the HJB operator, `max_u [Λ⁺(G_ψ) + sup_β H²]`,
/// at every interior node with `b > 0` and every level below the terminal
/// one, in parallel. Entries are `(level, p, j, residual)`.
pub fn hamiltonian_residuals(
    field: &ValueField,
    spec: &ProblemSpec,
    scheme: &SchemeParams,
) -> Result<Vec<(usize, usize, usize, f64)>, VerifyError> {
    if field.kind != FieldKind::W || field.b_axis.is_none() {
        return Err(VerifyError::InvalidRequest("residuals need a W field".into()));
    }
    let nb = field.nb();
    let atoms = spec.levy().len();
    let mut nodes = Vec::new();
    for k in 0..field.time.steps {
        if field.slice(k).is_none() || field.slice(k + 1).is_none() {
            continue;
        }
        for p in 0..field.na() {
            for j in 1..nb - 1 {
                if field.b_value(j) > 0.0 {
                    nodes.push((k, p, j));
                }
            }
        }
    }
    nodes
        .into_par_iter()
        .filter_map(|(k, p, j)| {
            let stencil = node_stencil(field, k, p, j)?;
            let view = field.view(k + 1)?;
            let cands = beta_candidates(field, j, scheme, atoms);
            let a = field.a_point(p);
            Some(
                hamiltonian_at_node(&view, field.time.time(k), &a, field.b_value(j), &stencil, spec, &cands)
                    .map(|h| (k, p, j, h))
                    .map_err(VerifyError::from),
            )
        })
        .collect()
}

/// `γ(t, b) = −(T − t) − log(1 + b)`.
pub fn subsolution_perturbation(t: f64, horizon: f64, b: f64) -> f64 {
    -(horizon - t) - b.ln_1p()
}

/// `W + ν γ` on every stored level.
pub fn perturbed_field(field: &ValueField, nu: f64) -> ValueField {
    let mut out = field.clone();
    let nb = field.nb();
    for k in field.stored_levels() {
        let t = field.time.time(k);
        let mut values = field.slice(k).expect("stored level").to_vec();
        for (idx, v) in values.iter_mut().enumerate() {
            let b = field.b_value(idx % nb);
            *v += nu * subsolution_perturbation(t, field.time.horizon, b);
        }
        out.set_slice(k, values);
    }
    out
}

/// Fraction check of the strict subsolution margin: at least 95 % of the
/// interior `b > 0` nodes must satisfy `R(W + νγ) ≤ −ν/8 + tol_h`.
///
/// Without an explicit `tol_h` the allowance is the largest unperturbed
/// residual plus `ν (Δb + Δt)`.
pub fn strict_subsolution_residual(
    field: &ValueField,
    spec: &ProblemSpec,
    scheme: &SchemeParams,
    nu: f64,
    tol_h: Option<f64>,
) -> Result<DiagnosticReport, VerifyError> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(VerifyError::InvalidRequest(format!("nu must be finite and nonnegative, got {nu}")));
    }
    let db = field.b_axis.map_or(0.0, |b| b.step());
    let tol_h = match tol_h {
        Some(t) => t,
        None => {
            let base = hamiltonian_residuals(field, spec, scheme)?;
            let worst = base.iter().map(|r| r.3.abs()).fold(0.0, f64::max);
            worst + nu * (db + field.time.dt())
        }
    };
    let residuals = hamiltonian_residuals(&perturbed_field(field, nu), spec, scheme)?;
    if residuals.is_empty() {
        return Err(VerifyError::InvalidRequest("no interior nodes to evaluate".into()));
    }
    let bound = -nu / 8.0 + tol_h;
    let mut details = Vec::new();
    let mut ok = 0usize;
    let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
    for &(k, p, j, r) in &residuals {
        max = max.max(r);
        sum += r;
        if r <= bound {
            ok += 1;
        } else {
            details.push(Offender {
                location: Location::Node { level: k, a: field.a_point(p), b: Some(field.b_value(j)) },
                residual: r - bound,
            });
        }
    }
    let fraction = ok as f64 / residuals.len() as f64;
    Ok(DiagnosticReport::new("strict_subsolution", 1.0 - fraction, 0.05, details)
        .with_metric("fraction", fraction)
        .with_metric("bound", bound)
        .with_metric("tol_h", tol_h)
        .with_metric("nu", nu)
        .with_metric("nodes", residuals.len() as f64)
        .with_metric("max_residual", max)
        .with_metric("mean_residual", sum / residuals.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McParams {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// One constant policy per control in the grid, with `α = β = 0`.
pub fn constant_control_family(spec: &ProblemSpec) -> Vec<PolicyTriple> {
    spec.controls()
        .iter()
        .map(|u| PolicyTriple::control_only(u.clone(), spec.dim_noise()))
        .collect()
}

/// `W(level, x, y)` with budgets below the axis continued by `W + (b_min − y)`
/// and budgets above it clamped.
fn field_value(field: &ValueField, level: usize, x: &[f64], y: f64) -> Result<f64, VerifyError> {
    let view = field.view(level).ok_or(VerifyError::UnsolvedField { level })?;
    let b_axis = field.b_axis.expect("W field");
    if y < b_axis.min {
        Ok(view.value(x, b_axis.min)? + (b_axis.min - y))
    } else {
        Ok(view.value(x, y)?)
    }
}

/// One-sided check of the dynamic programming principle between levels
/// `t_index < r_index`: at each sample `(a, b)`,
/// `W(t, a, b) ≤ min_policy E[∫ₜʳ d ds + W(r, x_r, y_r)] + CI + tol`.
/// The residual is the left side minus the right side without `tol`.
pub fn dpp_consistency(
    spec: &ProblemSpec,
    field: &ValueField,
    t_index: usize,
    r_index: usize,
    samples: &[(Vec<f64>, f64)],
    policies: &[PolicyTriple],
    mc: McParams,
    tol: f64,
) -> Result<DiagnosticReport, VerifyError> {
    if field.kind != FieldKind::W || field.b_axis.is_none() {
        return Err(VerifyError::InvalidRequest("the check needs a W field".into()));
    }
    if t_index >= r_index || r_index > field.time.steps {
        return Err(VerifyError::InvalidRequest(format!("need t_index < r_index ≤ M, got {t_index}, {r_index}")));
    }
    if policies.is_empty() || samples.is_empty() {
        return Err(VerifyError::InvalidRequest("empty policy family or sample set".into()));
    }
    let (t, r) = (field.time.time(t_index), field.time.time(r_index));
    let dt = mc.dt.min(r - t);
    let mut max = f64::NEG_INFINITY;
    let mut details = Vec::new();
    let mut widest = 0.0_f64;
    for (si, (a, b)) in samples.iter().enumerate() {
        let here = field_value(field, t_index, a, *b)?;
        let mut best = f64::INFINITY;
        for (pi, policy) in policies.iter().enumerate() {
            let seed = mc.seed.wrapping_add((si * policies.len() + pi) as u64 * 0x9E37_79B9);
            let est = monte_carlo(mc.n_paths, seed, |rng| {
                let end = simulate_pair_terminal(spec, t, r, a, *b, policy, dt, rng)?;
                field_value(field, r_index, &end.x, b + end.y_increment)
                    .map(|w| end.penalty + w)
                    .map_err(|e| SimulateError::InvalidRequest(e.to_string()))
            })?;
            if est.mean + est.half_width < best {
                best = est.mean + est.half_width;
                widest = widest.max(est.half_width);
            }
        }
        let res = here - best;
        max = max.max(res);
        details.push(Offender {
            location: Location::Sample { a: a.clone(), b: *b },
            residual: res,
        });
    }
    Ok(DiagnosticReport::new("dpp_consistency", max, tol, details)
        .with_metric("samples", samples.len() as f64)
        .with_metric("half_width", widest))
}

/// Largest forward-difference quotients of a field over its stored levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzProfile {
    pub a_quotients: Vec<f64>,
    /// Zero for fields without a budget axis.
    pub b_quotient: f64,
}

pub fn lipschitz_quotients(field: &ValueField) -> LipschitzProfile {
    let n = field.a_axes.len();
    let nb = field.nb();
    let mut a_q = vec![0.0_f64; n];
    let mut b_q = 0.0_f64;
    for k in field.stored_levels() {
        let s = field.slice(k).expect("stored level");
        for p in 0..field.na() {
            let idx = field.a_index(p);
            for j in 0..nb {
                let v = s[p * nb + j];
                for i in 0..n {
                    if idx[i] + 1 < field.a_axes[i].count {
                        let mut up = idx.clone();
                        up[i] += 1;
                        let q = (s[field.a_flat(&up) * nb + j] - v).abs() / field.a_axes[i].step();
                        a_q[i] = a_q[i].max(q);
                    }
                }
                if field.b_axis.is_some() && j + 1 < nb {
                    let q = (s[p * nb + j + 1] - v).abs() / (field.b_value(j + 1) - field.b_value(j));
                    b_q = b_q.max(q);
                }
            }
        }
    }
    LipschitzProfile { a_quotients: a_q, b_quotient: b_q }
}

/// Passes when the budget quotient stays within `1 + tol`; the state
/// quotients are reported as metrics `a_quotient_<i>`.
pub fn lipschitz_profile(field: &ValueField, tol: f64) -> DiagnosticReport {
    let prof = lipschitz_quotients(field);
    let mut report = DiagnosticReport::new("lipschitz_profile", prof.b_quotient, 1.0 + tol, Vec::new());
    for (i, q) in prof.a_quotients.iter().enumerate() {
        report = report.with_metric(&format!("a_quotient_{}", i + 1), *q);
    }
    report
}

/// Quotient growth under one refinement: the largest ratio fine / coarse
/// over all axes must not exceed 1.5. Axes whose coarse quotient vanishes
/// are skipped unless the fine one does not.
pub fn lipschitz_refinement(coarse: &ValueField, fine: &ValueField) -> DiagnosticReport {
    let (c, f) = (lipschitz_quotients(coarse), lipschitz_quotients(fine));
    let mut pairs: Vec<(f64, f64)> = c.a_quotients.iter().copied().zip(f.a_quotients.iter().copied()).collect();
    pairs.push((c.b_quotient, f.b_quotient));
    let ratio = pairs
        .iter()
        .map(|&(c, f)| if c > 0.0 { f / c } else if f > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    DiagnosticReport::new("lipschitz_refinement", ratio, 1.5, Vec::new())
}

/// A random stencil with `W_bb > 0`, so `H¹` is concave in `α`. A tenth of
/// the instances have `W_ab = 0`.
pub fn random_concave_instance(rng: &mut impl Rng) -> (DerivativeStencil, CoefficientValues, f64, f64) {
    let n = rng.random_range(1..=2usize);
    let r = rng.random_range(1..=3usize);
    fn sym(rng: &mut impl Rng) -> f64 {
        rng.random_range(-1.0..1.0)
    }
    let mut s = DerivativeStencil::zeros(n);
    s.dt_w = 2.0 * sym(rng);
    for g in s.grad.iter_mut() {
        *g = sym(rng);
    }
    for i in 0..n {
        for j in 0..=i {
            let v = sym(rng);
            s.hess_aa[i * n + j] = v;
            s.hess_aa[j * n + i] = v;
        }
    }
    if rng.random_range(0..10) > 0 {
        for h in s.hess_ab.iter_mut() {
            *h = sym(rng);
        }
    }
    s.hess_bb = rng.random_range(0.05..2.0);
    let c = CoefficientValues {
        f_val: (0..n).map(|_| sym(rng)).collect(),
        sigma_val: (0..n * r).map(|_| sym(rng)).collect(),
        chi_vals: Vec::new(),
        l_val: rng.random_range(0.0..1.0),
    };
    let d = rng.random_range(0.0..0.5);
    let b = rng.random_range(0.0..3.0);
    (s, c, d, b)
}

/// `sup_α H¹` by grid search, doubling the box until the maximiser is
/// interior.
pub fn sup_alpha_with_doubling(stencil: &DerivativeStencil, coeffs: &CoefficientValues, d: f64) -> f64 {
    let mut radius = 1.0;
    loop {
        let sup = sup_alpha_bruteforce(stencil, coeffs, d, radius, 9);
        if !sup.on_boundary || radius > 1e8 {
            return sup.value;
        }
        radius *= 2.0;
    }
}

/// Sign agreement between `Λ⁺(G_ψ)` and the brute-force `sup_α H¹` on
/// random concave stencils. Instance 0 is the all-zero stencil. Instances
/// with `|Λ⁺| < 1e−8` count as agreements but stay out of the denominator.
/// The residual is the disagreement fraction, the tolerance 1 %.
pub fn sign_equivalence_suite(n_instances: usize, seed: u64) -> Result<DiagnosticReport, VerifyError> {
    if n_instances == 0 {
        return Err(VerifyError::InvalidRequest("need at least one instance".into()));
    }
    let outcomes: Vec<(usize, f64, f64)> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let (s, c, d, b) = if i == 0 {
                (DerivativeStencil::zeros(1), CoefficientValues::zeros(1, 1, 0), 0.0, 0.0)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                random_concave_instance(&mut rng)
            };
            let lambda = lambda_max_arrowhead(&assemble_g_psi(&s, &c, d, b));
            let sup = sup_alpha_with_doubling(&s, &c, d);
            (i, lambda, sup)
        })
        .collect();
    let mut counted = 0usize;
    let mut disagree = 0usize;
    let mut details = Vec::new();
    for &(i, lambda, sup) in &outcomes {
        if lambda.abs() < 1e-8 {
            continue;
        }
        counted += 1;
        if (lambda > 0.0) != (sup > 0.0) {
            disagree += 1;
            details.push(Offender {
                location: Location::Instance { index: i },
                residual: lambda.abs().max(sup.abs()),
            });
        }
    }
    let frac = if counted == 0 { 0.0 } else { disagree as f64 / counted as f64 };
    Ok(DiagnosticReport::new("sign_equivalence", frac, 0.01, details)
        .with_metric("instances", n_instances as f64)
        .with_metric("counted", counted as f64)
        .with_metric("agreement", 1.0 - frac))
}
