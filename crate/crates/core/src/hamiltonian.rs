//! Node-local Hamiltonian of the auxiliary HJB integro-PDE.
//!
//! Writing `â = (a, b)` and `DW = (D_aW, D_bW)`, the local part is
//!
//! ```text
//! H¹(α) = g11 − αᵀ σᵀ W_ab − ½ |α|² W_bb
//! g11   = −∂ₜW − d(a) − ⟨D_aW, f⟩ + l D_bW − ½ Tr(σσᵀ W_aa)
//! ```
//!
//! and the supremum over the unbounded `α` is replaced by the largest
//! eigenvalue `Λ⁺` of the arrowhead matrix
//!
//! ```text
//! G_ψ = [ g11        −½ψ(b)(σᵀW_ab)ᵀ ]
//!       [ −½ψ(b)σᵀW_ab   −½ψ(b)² W_bb I_r ]
//! ```
//!
//! with `ψ(b) = max{1, b}`. `Λ⁺` and `sup_α H¹` have the same sign whenever
//! `W_bb > 0`. The jump part is
//! `H² = Σ_k w_k ( −[W(a+χ_k, b+β_k) − W(a,b)] + ⟨D_aW, χ_k⟩ + D_bW β_k )`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoefficientValues, LevyModel, ModelError, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("budget coordinate must be nonnegative, got {0}")]
    NegativeB(f64),
    #[error("shifted point {point:?} lies outside the grid hull")]
    ShiftOutOfDomain { point: Vec<f64> },
    #[error("expected {expected} entries for {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What a grid-backed field does with evaluation points outside its hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPolicy {
    /// Report [`HamiltonianError::ShiftOutOfDomain`].
    Strict,
    /// Project the point onto the hull before interpolating.
    #[default]
    Clamp,
}

/// Read-only access to `W(t, ·, ·)` at one time level.
pub trait FieldEval {
    fn value(&self, a: &[f64], b: f64) -> Result<f64, HamiltonianError>;
}

impl<F: Fn(&[f64], f64) -> f64> FieldEval for F {
    fn value(&self, a: &[f64], b: f64) -> Result<f64, HamiltonianError> {
        Ok(self(a, b))
    }
}

/// Derivatives of `W` at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeStencil {
    pub dt_w: f64,
    /// `(D_aW, D_bW)`, length `n + 1`.
    pub grad: Vec<f64>,
    /// `D²W₍₁₁₎`, row-major `n × n`.
    pub hess_aa: Vec<f64>,
    /// `D²W₍₁₂₎`, length `n`.
    pub hess_ab: Vec<f64>,
    pub hess_bb: f64,
}

impl DerivativeStencil {
    pub fn zeros(n: usize) -> Self {
        Self {
            dt_w: 0.0,
            grad: vec![0.0; n + 1],
            hess_aa: vec![0.0; n * n],
            hess_ab: vec![0.0; n],
            hess_bb: 0.0,
        }
    }

    pub fn dim_state(&self) -> usize {
        self.hess_ab.len()
    }

    pub fn grad_a(&self) -> &[f64] {
        &self.grad[..self.dim_state()]
    }

    pub fn grad_b(&self) -> f64 {
        self.grad[self.dim_state()]
    }

    fn check(&self) -> Result<(), HamiltonianError> {
        let n = self.dim_state();
        expect_len("grad", &self.grad, n + 1)?;
        expect_len("hess_aa", &self.hess_aa, n * n)
    }
}

fn expect_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), HamiltonianError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(HamiltonianError::Dimension {
            what,
            expected,
            got: v.len(),
        })
    }
}

/// Symmetric `(1+r) × (1+r)` matrix `[[g11, g12ᵀ], [g12, g22 I_r]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrowheadMatrix {
    pub g11: f64,
    pub g12: Vec<f64>,
    pub g22: f64,
}

impl ArrowheadMatrix {
    pub fn r(&self) -> usize {
        self.g12.len()
    }

    /// Dense row-major copy, mainly for cross-checks.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.r() + 1;
        let mut out = vec![0.0; m * m];
        out[0] = self.g11;
        for (j, &g) in self.g12.iter().enumerate() {
            out[j + 1] = g;
            out[(j + 1) * m] = g;
            out[(j + 1) * m + j + 1] = self.g22;
        }
        out
    }
}

/// `ψ(b) = max{1, b}`.
pub fn psi(b: f64) -> Result<f64, HamiltonianError> {
    if b < 0.0 {
        return Err(HamiltonianError::NegativeB(b));
    }
    Ok(b.max(1.0))
}

/// `Tr(σσᵀ W_aa)` with `σ` row-major `n × r`.
pub fn diffusion_trace(sigma: &[f64], hess_aa: &[f64], n: usize) -> f64 {
    let r = sigma.len().checked_div(n).unwrap_or(0);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            let ss: f64 = (0..r).map(|k| sigma[i * r + k] * sigma[j * r + k]).sum();
            tr += ss * hess_aa[j * n + i];
        }
    }
    tr
}

/// `g11` of the arrowhead matrix (independent of `ψ`).
pub fn local_g11(stencil: &DerivativeStencil, coeffs: &CoefficientValues, d_val: f64) -> f64 {
    let n = stencil.dim_state();
    let drift: f64 = stencil.grad_a().iter().zip(&coeffs.f_val).map(|(p, f)| p * f).sum();
    -stencil.dt_w - d_val - drift + coeffs.l_val * stencil.grad_b()
        - 0.5 * diffusion_trace(&coeffs.sigma_val, &stencil.hess_aa, n)
}

/// `σᵀ W_ab ∈ ℝʳ`.
pub fn sigma_t_hess_ab(sigma: &[f64], hess_ab: &[f64]) -> Vec<f64> {
    let n = hess_ab.len();
    let r = sigma.len().checked_div(n).unwrap_or(0);
    (0..r)
        .map(|j| (0..n).map(|i| sigma[i * r + j] * hess_ab[i]).sum())
        .collect()
}

/// Assembles `G_ψ` at a node. Negative `b` (diagnostic extension) uses `ψ = 1`.
pub fn assemble_g_psi(
    stencil: &DerivativeStencil,
    coeffs: &CoefficientValues,
    d_val: f64,
    b: f64,
) -> ArrowheadMatrix {
    let p = b.max(1.0);
    ArrowheadMatrix {
        g11: local_g11(stencil, coeffs, d_val),
        g12: sigma_t_hess_ab(&coeffs.sigma_val, &stencil.hess_ab)
            .into_iter()
            .map(|v| -0.5 * p * v)
            .collect(),
        g22: -0.5 * p * p * stencil.hess_bb,
    }
}

/// Largest eigenvalue of an arrowhead matrix in closed form.
///
/// The `r − 1` eigenvectors orthogonal to `(0, g12)` have eigenvalue `g22`;
/// the remaining 2×2 block gives the returned root, which dominates `g22`.
pub fn lambda_max_arrowhead(m: &ArrowheadMatrix) -> f64 {
    let g12_sq: f64 = m.g12.iter().map(|v| v * v).sum();
    let mean = 0.5 * (m.g11 + m.g22);
    let half_gap = 0.5 * (m.g11 - m.g22);
    mean + half_gap.hypot(g12_sq.sqrt())
}

/// Result of a grid search over `α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSup {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// The maximiser touches the search box, so the sup may be larger.
    pub on_boundary: bool,
}

/// `H¹(α)` at one node.
pub fn h1_local(g11: f64, sigma_t_w_ab: &[f64], hess_bb: f64, alpha: &[f64]) -> f64 {
    let lin: f64 = alpha.iter().zip(sigma_t_w_ab).map(|(a, v)| a * v).sum();
    let sq: f64 = alpha.iter().map(|a| a * a).sum();
    g11 - lin - 0.5 * sq * hess_bb
}

/// Brute-force `sup_{|α_j| ≤ radius} H¹(α)` by nested tensor-grid search.
///
/// Each pass evaluates `steps^r` points, then the box shrinks around the best
/// point; 24 passes take the grid spacing far below `1e-12 · radius`. Cost is
/// exponential in `r`, so this is an oracle for small noise dimensions.
pub fn sup_alpha_bruteforce(
    stencil: &DerivativeStencil,
    coeffs: &CoefficientValues,
    d_val: f64,
    radius: f64,
    steps: usize,
) -> AlphaSup {
    let g11 = local_g11(stencil, coeffs, d_val);
    let v = sigma_t_hess_ab(&coeffs.sigma_val, &stencil.hess_ab);
    let r = v.len();
    let steps = steps.max(3);
    let mut lo = vec![-radius; r];
    let mut hi = vec![radius; r];
    let mut best = vec![0.0; r];
    let mut best_val = h1_local(g11, &v, stencil.hess_bb, &best);
    let mut point = vec![0.0; r];
    let mut idx = vec![0usize; r];
    for _ in 0..24 {
        idx.fill(0);
        'grid: loop {
            for j in 0..r {
                point[j] = lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (steps - 1) as f64;
            }
            let val = h1_local(g11, &v, stencil.hess_bb, &point);
            if val > best_val {
                best_val = val;
                best.copy_from_slice(&point);
            }
            for j in 0..r {
                idx[j] += 1;
                if idx[j] < steps {
                    continue 'grid;
                }
                idx[j] = 0;
            }
            break;
        }
        for j in 0..r {
            let h = (hi[j] - lo[j]) / (steps - 1) as f64;
            lo[j] = (best[j] - 2.0 * h).max(-radius);
            hi[j] = (best[j] + 2.0 * h).min(radius);
        }
    }
    let on_boundary = best.iter().any(|a| a.abs() >= radius * (1.0 - 1e-9));
    AlphaSup {
        value: best_val,
        argmax: best,
        on_boundary,
    }
}

/// `sup_{0 ≤ ρ ≤ radius} (ρ |v| − ½ ρ² W_bb)`: the `α` gain of `H¹` over the
/// ball of the given radius. Finite for every curvature sign.
pub fn bounded_alpha_gain(v_norm: f64, hess_bb: f64, radius: f64) -> f64 {
    let rho = if hess_bb > 0.0 {
        (v_norm / hess_bb).min(radius)
    } else {
        radius
    };
    (rho * v_norm - 0.5 * rho * rho * hess_bb).max(0.0)
}

fn shifted(a: &[f64], chi: &[f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(a.iter().zip(chi).map(|(x, c)| x + c));
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// `H²` for fixed per-atom `β`.
pub fn nonlocal_term(
    field: &impl FieldEval,
    a: &[f64],
    b: f64,
    grad: &[f64],
    beta: &[f64],
    levy: &LevyModel,
    coeffs: &CoefficientValues,
) -> Result<f64, HamiltonianError> {
    expect_len("beta", beta, levy.len())?;
    let n = a.len();
    let here = field.value(a, b)?;
    let mut buf = Vec::with_capacity(n);
    let mut total = 0.0;
    for (k, atom) in levy.atoms().iter().enumerate() {
        let chi = &coeffs.chi_vals[k];
        shifted(a, chi, &mut buf);
        let jump = field.value(&buf, b + beta[k])? - here;
        total += atom.weight * (-jump + dot(&grad[..n], chi) + grad[n] * beta[k]);
    }
    Ok(total)
}

/// Index of the first maximum after ordering candidates by `|β|`, then value.
/// Values within `1e-12 (1 + |max|)` of the maximum count as ties.
pub(crate) fn tie_broken_argmax(candidates: &[f64], scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + max.abs());
    let mut best: Option<usize> = None;
    for (i, (&c, &s)) in candidates.iter().zip(scores).enumerate() {
        if s < max - tol {
            continue;
        }
        best = match best {
            Some(j) if (candidates[j].abs(), candidates[j]) <= (c.abs(), c) => Some(j),
            _ => Some(i),
        };
    }
    best.unwrap_or(0)
}

/// `sup_β H²` over per-atom candidate lists. The integrand is separable in
/// the atoms, so each `β_k` is maximised on its own.
#[allow(clippy::too_many_arguments)]
pub fn sup_beta_nonlocal(
    field: &impl FieldEval,
    a: &[f64],
    b: f64,
    grad: &[f64],
    levy: &LevyModel,
    coeffs: &CoefficientValues,
    candidates: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), HamiltonianError> {
    if candidates.len() != levy.len() {
        return Err(HamiltonianError::Dimension {
            what: "beta candidates",
            expected: levy.len(),
            got: candidates.len(),
        });
    }
    let n = a.len();
    let here = field.value(a, b)?;
    let mut buf = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut argmax = Vec::with_capacity(levy.len());
    let mut scores = Vec::new();
    for (k, atom) in levy.atoms().iter().enumerate() {
        let list = &candidates[k];
        if list.is_empty() {
            return Err(HamiltonianError::Dimension {
                what: "beta candidate list",
                expected: 1,
                got: 0,
            });
        }
        let chi = &coeffs.chi_vals[k];
        shifted(a, chi, &mut buf);
        scores.clear();
        for &beta in list {
            scores.push(-(field.value(&buf, b + beta)? - here) + grad[n] * beta);
        }
        let best = tie_broken_argmax(list, &scores);
        argmax.push(list[best]);
        total += atom.weight * (scores[best] + dot(&grad[..n], chi));
    }
    Ok((total, argmax))
}

/// Splits `H²` at mark size `δ`. Atoms with `|e_k| < δ` use the second-order
/// surrogate `−½ w_k ⟨D²W (χ_k, β_k), (χ_k, β_k)⟩` (returned first), the rest
/// are evaluated exactly (returned second).
#[allow(clippy::too_many_arguments)]
pub fn delta_split_nonlocal(
    field: &impl FieldEval,
    a: &[f64],
    b: f64,
    stencil: &DerivativeStencil,
    levy: &LevyModel,
    coeffs: &CoefficientValues,
    delta: f64,
    beta: &[f64],
) -> Result<(f64, f64), HamiltonianError> {
    expect_len("beta", beta, levy.len())?;
    stencil.check()?;
    let n = a.len();
    let here = field.value(a, b)?;
    let mut buf = Vec::with_capacity(n);
    let (mut small, mut large) = (0.0, 0.0);
    for (k, atom) in levy.atoms().iter().enumerate() {
        let chi = &coeffs.chi_vals[k];
        if atom.mark_norm() < delta {
            let mut quad = stencil.hess_bb * beta[k] * beta[k];
            for i in 0..n {
                quad += 2.0 * stencil.hess_ab[i] * chi[i] * beta[k];
                for j in 0..n {
                    quad += chi[i] * stencil.hess_aa[i * n + j] * chi[j];
                }
            }
            small -= 0.5 * atom.weight * quad;
        } else {
            shifted(a, chi, &mut buf);
            let jump = field.value(&buf, b + beta[k])? - here;
            large += atom.weight
                * (-jump + dot(stencil.grad_a(), chi) + stencil.grad_b() * beta[k]);
        }
    }
    Ok((small, large))
}

/// `max_u [Λ⁺(G_ψ(u)) + sup_β H²(u)]` at node `(t, a, b)`, `b ≥ 0`.
///
/// `beta_candidates[k]` lists the admissible `β_k`; pass `[[0.0]; K]` to
/// freeze the budget jumps.
pub fn hamiltonian_at_node(
    field: &impl FieldEval,
    t: f64,
    a: &[f64],
    b: f64,
    stencil: &DerivativeStencil,
    spec: &ProblemSpec,
    beta_candidates: &[Vec<f64>],
) -> Result<f64, HamiltonianError> {
    psi(b)?;
    stencil.check()?;
    expect_len("state", a, spec.dim_state())?;
    let d_val = spec.distance(a)?;
    let mut coeffs = CoefficientValues::zeros(spec.dim_state(), spec.dim_noise(), spec.levy().len());
    let mut best = f64::NEG_INFINITY;
    for u in spec.controls() {
        spec.eval_coefficients_into(t, a, u, &mut coeffs)?;
        let local = lambda_max_arrowhead(&assemble_g_psi(stencil, &coeffs, d_val, b));
        let jump = if spec.levy().is_empty() {
            0.0
        } else {
            sup_beta_nonlocal(field, a, b, &stencil.grad, spec.levy(), &coeffs, beta_candidates)?.0
        };
        best = best.max(local + jump);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevyAtom;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coeffs(f: Vec<f64>, sigma: Vec<f64>, chi: Vec<Vec<f64>>, l: f64) -> CoefficientValues {
        CoefficientValues {
            f_val: f,
            sigma_val: sigma,
            chi_vals: chi,
            l_val: l,
        }
    }

    fn gamma_stencil(n: usize, b: f64) -> DerivativeStencil {
        // γ(t, b) = −(T − t) − log(1 + b)
        let mut s = DerivativeStencil::zeros(n);
        s.dt_w = 1.0;
        s.grad[n] = -1.0 / (1.0 + b);
        s.hess_bb = 1.0 / (1.0 + b).powi(2);
        s
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.0).unwrap(), 1.0);
        assert_eq!(psi(1.0).unwrap(), 1.0);
        assert_eq!(psi(3.5).unwrap(), 3.5);
        assert_eq!(psi(-0.1), Err(HamiltonianError::NegativeB(-0.1)));
    }

    #[test]
    fn zero_stencil_gives_zero_matrix() {
        let m = assemble_g_psi(&DerivativeStencil::zeros(2), &CoefficientValues::zeros(2, 3, 0), 0.0, 0.5);
        assert_eq!(m, ArrowheadMatrix { g11: 0.0, g12: vec![0.0; 3], g22: 0.0 });
        assert_eq!(lambda_max_arrowhead(&m), 0.0);
    }

    #[test]
    fn perturbation_matrix_at_unit_budget() {
        let c = coeffs(vec![0.7], vec![1.3], vec![], 0.0);
        let m = assemble_g_psi(&gamma_stencil(1, 1.0), &c, 0.0, 1.0);
        assert_eq!(m.g11, -1.0);
        assert_eq!(m.g12, vec![0.0]);
        assert_eq!(m.g22, -0.125);
        assert_eq!(lambda_max_arrowhead(&m), -0.125);
    }

    #[test]
    fn off_diagonal_block_eigenvalue() {
        let m = ArrowheadMatrix { g11: 0.0, g12: vec![1.0], g22: 0.0 };
        assert_eq!(lambda_max_arrowhead(&m), 1.0);
    }

    fn random_stencil(rng: &mut ChaCha8Rng, n: usize) -> DerivativeStencil {
        let mut s = DerivativeStencil::zeros(n);
        s.dt_w = rng.random_range(-2.0..2.0);
        for g in &mut s.grad {
            *g = rng.random_range(-2.0..2.0);
        }
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-2.0..2.0);
                s.hess_aa[i * n + j] = v;
                s.hess_aa[j * n + i] = v;
            }
        }
        for h in &mut s.hess_ab {
            *h = rng.random_range(-2.0..2.0);
        }
        s.hess_bb = rng.random_range(-2.0..2.0);
        s
    }

    #[test]
    fn assembly_matches_termwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..4);
            let r = rng.random_range(1..4);
            let s = random_stencil(&mut rng, n);
            let c = coeffs(
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..n * r).map(|_| rng.random_range(-1.0..1.0)).collect(),
                vec![],
                rng.random_range(0.0..1.0),
            );
            let d = rng.random_range(0.0..1.0);
            let b = rng.random_range(0.0..3.0);
            let m = assemble_g_psi(&s, &c, d, b);

            let sigma = DMatrix::from_row_slice(n, r, &c.sigma_val);
            let haa = DMatrix::from_row_slice(n, n, &s.hess_aa);
            let trace = (&sigma * sigma.transpose() * &haa).trace();
            let mut g11 = -s.dt_w - d + c.l_val * s.grad[n] - 0.5 * trace;
            for i in 0..n {
                g11 -= s.grad[i] * c.f_val[i];
            }
            let p = if b > 1.0 { b } else { 1.0 };
            let hab = DMatrix::from_column_slice(n, 1, &s.hess_ab);
            let g12 = sigma.transpose() * hab * (-0.5 * p);
            assert!((m.g11 - g11).abs() < 1e-12);
            for j in 0..r {
                assert!((m.g12[j] - g12[(j, 0)]).abs() < 1e-12);
            }
            assert!((m.g22 + 0.5 * p * p * s.hess_bb).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let r = rng.random_range(1..=6);
            let m = ArrowheadMatrix {
                g11: rng.random_range(-5.0..5.0),
                g12: (0..r).map(|_| rng.random_range(-5.0..5.0)).collect(),
                g22: rng.random_range(-5.0..5.0),
            };
            let dense = DMatrix::from_row_slice(r + 1, r + 1, &m.to_dense());
            let oracle = dense.symmetric_eigen().eigenvalues.max();
            assert!((lambda_max_arrowhead(&m) - oracle).abs() <= 1e-10);
        }
    }

    fn scalar_alpha_stencil(hess_ab: f64, hess_bb: f64) -> (DerivativeStencil, CoefficientValues) {
        let mut s = DerivativeStencil::zeros(1);
        s.hess_ab[0] = hess_ab;
        s.hess_bb = hess_bb;
        (s, coeffs(vec![0.0], vec![1.0], vec![], 0.0))
    }

    #[test]
    fn concave_alpha_sup_is_interior() {
        // H¹(α) = 2α − ½α²
        let (s, c) = scalar_alpha_stencil(-2.0, 1.0);
        let sup = sup_alpha_bruteforce(&s, &c, 0.0, 5.0, 21);
        assert!((sup.value - 2.0).abs() < 1e-10);
        assert!((sup.argmax[0] - 2.0).abs() < 1e-6);
        assert!(!sup.on_boundary);
    }

    #[test]
    fn convex_alpha_sup_hits_the_box() {
        let (s, c) = scalar_alpha_stencil(0.0, -1.0);
        let small = sup_alpha_bruteforce(&s, &c, 0.0, 1.0, 21);
        let large = sup_alpha_bruteforce(&s, &c, 0.0, 2.0, 21);
        assert!(small.on_boundary && large.on_boundary);
        assert!(large.value > small.value);
    }

    #[test]
    fn concave_alpha_sup_sign_matches_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (mut agree, mut counted) = (0, 0);
        for _ in 0..200 {
            let mut s = random_stencil(&mut rng, 1);
            s.hess_bb = rng.random_range(0.05..2.0);
            let r = rng.random_range(1..3);
            let c = coeffs(vec![0.3], (0..r).map(|_| rng.random_range(-1.0..1.0)).collect(), vec![], 0.2);
            let b = rng.random_range(0.0..3.0);
            let lam = lambda_max_arrowhead(&assemble_g_psi(&s, &c, 0.1, b));
            if lam.abs() < 1e-8 {
                continue;
            }
            let mut radius = 1.0;
            let sup = loop {
                let sup = sup_alpha_bruteforce(&s, &c, 0.1, radius, 11);
                if !sup.on_boundary {
                    break sup;
                }
                radius *= 2.0;
            };
            counted += 1;
            if (sup.value > 0.0) == (lam > 0.0) {
                agree += 1;
            }
        }
        assert!(agree as f64 >= 0.99 * counted as f64, "{agree}/{counted}");
    }

    #[test]
    fn bounded_gain_cases() {
        assert_eq!(bounded_alpha_gain(2.0, 1.0, 10.0), 2.0);
        assert_eq!(bounded_alpha_gain(2.0, 1.0, 1.0), 1.5);
        assert_eq!(bounded_alpha_gain(1.0, -1.0, 2.0), 4.0);
        assert_eq!(bounded_alpha_gain(0.0, 3.0, 2.0), 0.0);
    }

    fn levy(atoms: &[(f64, f64)]) -> LevyModel {
        LevyModel::new(atoms.iter().map(|&(e, w)| LevyAtom::new(vec![e], w)).collect(), 0.0).unwrap()
    }

    #[test]
    fn nonlocal_examples() {
        let empty = LevyModel::empty();
        let c = CoefficientValues::zeros(1, 1, 0);
        let w = |_: &[f64], b: f64| b * b;
        assert_eq!(nonlocal_term(&w, &[0.0], 0.0, &[0.0, 0.0], &[], &empty, &c).unwrap(), 0.0);

        let one = levy(&[(1.0, 1.0)]);
        let c = coeffs(vec![0.0], vec![0.0], vec![vec![0.0]], 0.0);
        assert_eq!(nonlocal_term(&w, &[0.0], 0.0, &[0.0, 0.0], &[1.0], &one, &c).unwrap(), -1.0);
    }

    #[test]
    fn beta_sup_examples() {
        let one = levy(&[(1.0, 1.0)]);
        let c = coeffs(vec![0.0], vec![0.0], vec![vec![0.0]], 0.0);
        let w = |_: &[f64], b: f64| b * b;
        let (v, arg) =
            sup_beta_nonlocal(&w, &[0.0], 0.0, &[0.0, 0.0], &one, &c, &[vec![-1.0, 0.0, 1.0]]).unwrap();
        assert_eq!((v, arg), (0.0, vec![0.0]));

        let hinge = |_: &[f64], b: f64| (1.0 - b).max(0.0);
        let (v, arg) = sup_beta_nonlocal(
            &hinge,
            &[0.0],
            0.0,
            &[0.0, -1.0],
            &one,
            &c,
            &[vec![-1.0, 0.0, 0.5, 1.0, 2.0]],
        )
        .unwrap();
        assert_eq!((v, arg), (0.0, vec![0.0]));
    }

    #[test]
    fn tie_break_prefers_small_then_negative() {
        assert_eq!(tie_broken_argmax(&[1.0, -1.0, 2.0], &[0.0, 0.0, 0.0]), 1);
        assert_eq!(tie_broken_argmax(&[2.0, 0.5, -3.0], &[1.0, 0.0, 1.0]), 0);
    }

    #[test]
    fn delta_split_limits() {
        let lv = levy(&[(0.2, 1.5), (0.5, 0.7)]);
        let c = coeffs(vec![0.0], vec![0.0], vec![vec![0.2], vec![-0.3]], 0.0);
        // W = a² + a b + 2 b²
        let w = |a: &[f64], b: f64| a[0] * a[0] + a[0] * b + 2.0 * b * b;
        let (a, b) = (0.4, 0.6);
        let mut s = DerivativeStencil::zeros(1);
        s.grad = vec![2.0 * a + b, a + 4.0 * b];
        s.hess_aa = vec![2.0];
        s.hess_ab = vec![1.0];
        s.hess_bb = 4.0;
        let beta = [0.1, -0.25];
        let exact = nonlocal_term(&w, &[a], b, &s.grad, &beta, &lv, &c).unwrap();

        let (h21, h22) = delta_split_nonlocal(&w, &[a], b, &s, &lv, &c, 0.0, &beta).unwrap();
        assert_eq!(h21, 0.0);
        assert_eq!(h22, exact);

        let (h21, h22) = delta_split_nonlocal(&w, &[a], b, &s, &lv, &c, 1.0, &beta).unwrap();
        assert!((h21 - exact).abs() < 1e-12);
        assert_eq!(h22, 0.0);
    }

    #[test]
    fn delta_split_quartic_remainder() {
        let lv = levy(&[(0.1, 2.0)]);
        let c = coeffs(vec![0.0], vec![0.0], vec![vec![0.0]], 0.0);
        let w = |_: &[f64], b: f64| b.powi(4);
        let mut s = DerivativeStencil::zeros(1);
        s.grad[1] = 4.0;
        s.hess_bb = 12.0;
        for beta in [0.3, -0.2, 0.05] {
            let (h21, _) = delta_split_nonlocal(&w, &[0.0], 1.0, &s, &lv, &c, 1.0, &[beta]).unwrap();
            let direct = 2.0 * (-((1.0 + beta).powi(4) - 1.0) + 4.0 * beta);
            let remainder = -2.0 * (4.0 * beta.powi(3) + beta.powi(4));
            assert!((direct - h21 - remainder).abs() < 1e-12);
        }
    }

    fn frozen_spec(d_one: bool) -> ProblemSpec {
        let mut builder = ProblemSpec::builder(1, 1).horizon(1.0).scalar_controls(&[0.0]);
        if d_one {
            builder = builder.constraint(crate::model::Constraint::Ball { center: vec![0.0], radius: 0.0 });
        }
        builder.build().unwrap()
    }

    #[test]
    fn node_hamiltonian_examples() {
        let zero = |_: &[f64], _: f64| 0.0;
        let s = DerivativeStencil::zeros(1);
        assert_eq!(hamiltonian_at_node(&zero, 0.0, &[0.3], 0.5, &s, &frozen_spec(false), &[]).unwrap(), 0.0);

        // d(1) = 1 with Γ = {0}
        let spec = frozen_spec(true);
        assert_eq!(hamiltonian_at_node(&zero, 0.0, &[1.0], 0.0, &s, &spec, &[]).unwrap(), 0.0);

        let mut curved = s.clone();
        curved.hess_bb = 2.0;
        for b in [0.0, 2.0] {
            let p: f64 = if b > 1.0 { b } else { 1.0 };
            let expected = (-1.0f64).max(-p * p);
            let h = hamiltonian_at_node(&zero, 0.0, &[1.0], b, &curved, &spec, &[]).unwrap();
            assert_eq!(h, expected);
        }

        let mut ticking = s.clone();
        ticking.dt_w = -1.0;
        let h = hamiltonian_at_node(&zero, 0.0, &[1.0], 0.0, &ticking, &spec, &[]).unwrap();
        assert_eq!(h, 0.0);

        let gamma = gamma_stencil(1, 1.0);
        let h = hamiltonian_at_node(&zero, 0.0, &[0.0], 1.0, &gamma, &frozen_spec(false), &[]).unwrap();
        assert_eq!(h, -0.125);
    }

    #[test]
    fn node_hamiltonian_takes_the_best_control() {
        let spec = ProblemSpec::builder(1, 1)
            .horizon(1.0)
            .drift(|_, _, u| vec![u[0]])
            .scalar_controls(&[-1.0, 0.5])
            .build()
            .unwrap();
        let zero = |_: &[f64], _: f64| 0.0;
        let mut s = DerivativeStencil::zeros(1);
        s.grad[0] = 2.0;
        // g11(u) = −2u, so the sup is at u = −1.
        assert_eq!(hamiltonian_at_node(&zero, 0.0, &[0.0], 0.0, &s, &spec, &[]).unwrap(), 2.0);
        assert!(hamiltonian_at_node(&zero, 0.0, &[0.0], -1.0, &s, &spec, &[]).is_err());
    }

    proptest! {
        #[test]
        fn affine_fields_are_annihilated(
            p in -3.0f64..3.0, q in -3.0f64..3.0, c0 in -3.0f64..3.0,
            a in -2.0f64..2.0, b in 0.0f64..2.0,
            chi in prop::collection::vec(-1.0f64..1.0, 1..4),
            beta in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let k = chi.len();
            let lv = LevyModel::new((0..k).map(|i| LevyAtom::new(vec![1.0 + i as f64], 0.5 + i as f64)).collect(), 0.0).unwrap();
            let c = coeffs(vec![0.0], vec![0.0], chi.iter().map(|&x| vec![x]).collect(), 0.0);
            let w = move |x: &[f64], y: f64| p * x[0] + q * y + c0;
            let h = nonlocal_term(&w, &[a], b, &[p, q], &beta[..k], &lv, &c).unwrap();
            prop_assert!(h.abs() < 1e-12);
        }

        #[test]
        fn beta_sup_matches_joint_search(
            knots in prop::collection::vec(0.0f64..3.0, 8),
            slope in -2.0f64..2.0,
            cands in prop::collection::vec(prop::collection::vec(-3i32..=3, 1..=5), 1..=3),
        ) {
            // Piecewise-linear field on the b-grid {−3, …, 4}
            let field = move |_: &[f64], b: f64| {
                let x = (b + 3.0).clamp(0.0, 7.0);
                let i = (x.floor() as usize).min(6);
                let s = x - i as f64;
                knots[i] * (1.0 - s) + knots[i + 1] * s
            };
            let k = cands.len();
            let lv = LevyModel::new((0..k).map(|i| LevyAtom::new(vec![1.0], 1.0 + i as f64)).collect(), 0.0).unwrap();
            let c = coeffs(vec![0.0], vec![0.0], vec![vec![0.0]; k], 0.0);
            let lists: Vec<Vec<f64>> = cands.iter().map(|l| l.iter().map(|&v| v as f64).collect()).collect();
            let grad = [0.0, slope];
            let (sup, arg) = sup_beta_nonlocal(&field, &[0.0], 0.0, &grad, &lv, &c, &lists).unwrap();

            let mut best = f64::NEG_INFINITY;
            let mut idx = vec![0usize; k];
            loop {
                let beta: Vec<f64> = (0..k).map(|j| lists[j][idx[j]]).collect();
                best = best.max(nonlocal_term(&field, &[0.0], 0.0, &grad, &beta, &lv, &c).unwrap());
                let mut j = 0;
                while j < k {
                    idx[j] += 1;
                    if idx[j] < lists[j].len() { break; }
                    idx[j] = 0;
                    j += 1;
                }
                if j == k { break; }
            }
            prop_assert!((sup - best).abs() < 1e-9);
            let at_arg = nonlocal_term(&field, &[0.0], 0.0, &grad, &arg, &lv, &c).unwrap();
            prop_assert!((at_arg - sup).abs() < 1e-9);
        }

        #[test]
        fn lambda_increases_with_g11(
            g11 in -5.0f64..5.0, bump in 1e-3f64..5.0, g22 in -5.0f64..5.0,
            g12 in prop::collection::vec(-5.0f64..5.0, 1..6),
        ) {
            let lo = ArrowheadMatrix { g11, g12: g12.clone(), g22 };
            let hi = ArrowheadMatrix { g11: g11 + bump, g12, g22 };
            prop_assert!(lambda_max_arrowhead(&hi) > lambda_max_arrowhead(&lo));
        }
    }
}
