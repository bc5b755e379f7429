//! Explicit upwind update of one time level.
//!
//! Per node and control `u` the rate is
//!
//! ```text
//! −d − Σ_i f̂_i D_i^{up} W + l D_b⁻W − ½ Σ_q (σ_q ∂_a + α_q ∂_b)² W
//!    + Σ_k w_k max_β [ −(W(a+χ_k, b+β) − W) + β D_b^{±} W ]
//! ```
//!
//! maximised over `α`, with the compensated drift `f̂ = f − Σ_k w_k χ_k`,
//! and the update is `W_new = W − Δt max_u rate`.
//!
//! A noise column `σ_q` with a single nonzero entry (axis `i`) takes
//! `α_q = κ σ_qi Δb / Δa_i` for integers `|κ| ≤ A Δa_i / (|σ_qi| Δb)`, so the
//! direction `(σ_q, α_q)` joins grid nodes and its second difference
//! `W(a+e_i, b+κΔb) − 2W + W(a−e_i, b−κΔb)` is monotone. A zero column can
//! only add budget diffusion `α_q ∈ {0, A}`. Other columns keep `α_q = 0`
//! and enter through central differences of `W_aa`, which are monotone only
//! without mixed entries.
//!
//! Without the budget axis (`W₀`) the `b` terms drop out and `l` joins `d`
//! as a running cost.

use rayon::prelude::*;

use super::grid::{interpolation_weights, Axis, Layout};
use super::SolverError;
use crate::hamiltonian::{HamiltonianError, ShiftPolicy};
use crate::model::{CoefficientValues, ProblemSpec};

const ZERO_COLUMN: usize = usize::MAX;
const MIXED_COLUMN: usize = usize::MAX - 1;

/// Coefficients on every `(a-node, control)` pair at one time.
pub(crate) struct CoeffTable {
    n: usize,
    r: usize,
    nu: usize,
    atoms: usize,
    corners: usize,
    f_eff: Vec<f64>,
    ss: Vec<f64>,
    /// `σσᵀ` restricted to the columns that are not axis aligned.
    ss_mixed: Vec<f64>,
    /// Per noise column: aligned axis, `ZERO_COLUMN` or `MIXED_COLUMN`.
    col_axis: Vec<usize>,
    col_sigma: Vec<f64>,
    l: Vec<f64>,
    jump_idx: Vec<usize>,
    jump_w: Vec<f64>,
    d: Vec<f64>,
    weights: Vec<f64>,
    pub clamped: usize,
}

impl CoeffTable {
    pub fn build(
        spec: &ProblemSpec,
        axes: &[Axis],
        layout: &Layout,
        t: f64,
        policy: ShiftPolicy,
    ) -> Result<Self, SolverError> {
        let n = spec.dim_state();
        let r = spec.dim_noise();
        let nu = spec.controls().len();
        let atoms = spec.levy().len();
        let corners = 1usize << n;
        let na = layout.na;
        let weights: Vec<f64> = spec.levy().atoms().iter().map(|a| a.weight).collect();
        let mut table = Self {
            n,
            r,
            nu,
            atoms,
            corners,
            f_eff: vec![0.0; na * nu * n],
            ss: vec![0.0; na * nu * n * n],
            ss_mixed: vec![0.0; na * nu * n * n],
            col_axis: vec![ZERO_COLUMN; na * nu * r],
            col_sigma: vec![0.0; na * nu * r],
            l: vec![0.0; na * nu],
            jump_idx: vec![0; na * nu * atoms * corners],
            jump_w: vec![0.0; na * nu * atoms * corners],
            d: vec![0.0; na],
            weights,
            clamped: 0,
        };
        let mut a = vec![0.0; n];
        let mut target = vec![0.0; n];
        let mut c = CoefficientValues::zeros(n, r, atoms);
        for p in 0..na {
            for (i, axis) in axes.iter().enumerate() {
                a[i] = axis.point(layout.coord(p, i));
            }
            table.d[p] = spec.distance(&a)?;
            for (ui, u) in spec.controls().iter().enumerate() {
                spec.eval_coefficients_into(t, &a, u, &mut c)?;
                let pu = p * nu + ui;
                let f = &mut table.f_eff[pu * n..(pu + 1) * n];
                f.copy_from_slice(&c.f_val);
                for (k, chi) in c.chi_vals.iter().enumerate() {
                    for i in 0..n {
                        f[i] -= table.weights[k] * chi[i];
                    }
                }
                let ss = &mut table.ss[pu * n * n..(pu + 1) * n * n];
                for i in 0..n {
                    for j in 0..n {
                        ss[i * n + j] = (0..r).map(|q| c.sigma_val[i * r + q] * c.sigma_val[j * r + q]).sum();
                    }
                }
                let mixed = &mut table.ss_mixed[pu * n * n..(pu + 1) * n * n];
                for q in 0..r {
                    let nonzero: Vec<usize> = (0..n).filter(|&i| c.sigma_val[i * r + q] != 0.0).collect();
                    let slot = pu * r + q;
                    match nonzero.as_slice() {
                        [] => table.col_axis[slot] = ZERO_COLUMN,
                        &[i] => {
                            table.col_axis[slot] = i;
                            table.col_sigma[slot] = c.sigma_val[i * r + q];
                        }
                        _ => {
                            table.col_axis[slot] = MIXED_COLUMN;
                            for i in 0..n {
                                for j in 0..n {
                                    mixed[i * n + j] += c.sigma_val[i * r + q] * c.sigma_val[j * r + q];
                                }
                            }
                        }
                    }
                }
                table.l[pu] = c.l_val;
                for (k, chi) in c.chi_vals.iter().enumerate() {
                    for i in 0..n {
                        target[i] = a[i] + chi[i];
                    }
                    let off = (pu * atoms + k) * corners;
                    let clamped = interpolation_weights(
                        axes,
                        layout,
                        &target,
                        &mut table.jump_idx[off..off + corners],
                        &mut table.jump_w[off..off + corners],
                    );
                    if clamped > 0 {
                        if policy == ShiftPolicy::Strict {
                            return Err(HamiltonianError::ShiftOutOfDomain { point: target.clone() }.into());
                        }
                        table.clamped += 1;
                    }
                }
            }
        }
        Ok(table)
    }
}

/// Everything the node update needs besides the previous slice.
pub(crate) struct Kernel<'a> {
    pub layout: &'a Layout,
    pub table: &'a CoeffTable,
    pub da: &'a [f64],
    /// Budget step; `None` for `W₀`-type fields.
    pub db: Option<f64>,
    pub beta_steps: usize,
    pub alpha_radius: f64,
}

pub(crate) struct Scratch {
    dplus: Vec<f64>,
    dminus: Vec<f64>,
    hess: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            dplus: vec![0.0; n],
            dminus: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }
}

impl Kernel<'_> {
    /// `max_u rate` at node `(p, j)` of `prev`.
    pub fn node_rate(&self, prev: &[f64], p: usize, j: usize, s: &mut Scratch) -> f64 {
        let lay = self.layout;
        let tab = self.table;
        let n = tab.n;
        let nb = lay.nb;
        let at = |q: usize, jj: usize| prev[q * nb + jj];
        let w0 = at(p, j);

        for i in 0..n {
            let up = lay.shift(p, i, true);
            let dn = lay.shift(p, i, false);
            let (wu, wd) = (at(up, j), at(dn, j));
            let h = self.da[i];
            s.dplus[i] = (wu - w0) / h;
            s.dminus[i] = (w0 - wd) / h;
            s.hess[i * n + i] = (wu - 2.0 * w0 + wd) / (h * h);
            for l in 0..i {
                let (lu, ld) = (lay.shift(up, l, true), lay.shift(up, l, false));
                let (mu, md) = (lay.shift(dn, l, true), lay.shift(dn, l, false));
                let cross = (at(lu, j) - at(ld, j) - at(mu, j) + at(md, j)) / (4.0 * h * self.da[l]);
                s.hess[i * n + l] = cross;
                s.hess[l * n + i] = cross;
            }
        }

        let (db_minus, db_plus, wbb) = match self.db {
            Some(db) => {
                let (lo, hi) = (at(p, j - 1), at(p, j + 1));
                ((w0 - lo) / db, (hi - w0) / db, (hi - 2.0 * w0 + lo) / (db * db))
            }
            None => (0.0, 0.0, 0.0),
        };

        let mut best = f64::NEG_INFINITY;
        for u in 0..tab.nu {
            let pu = p * tab.nu + u;
            let mut rate = -tab.d[p];
            let f = &tab.f_eff[pu * n..(pu + 1) * n];
            for i in 0..n {
                rate -= f[i] * if f[i] > 0.0 { s.dplus[i] } else { s.dminus[i] };
            }
            let ss = match self.db {
                Some(_) => &tab.ss_mixed[pu * n * n..(pu + 1) * n * n],
                None => &tab.ss[pu * n * n..(pu + 1) * n * n],
            };
            let mut tr = 0.0;
            for (x, y) in ss.iter().zip(&s.hess) {
                tr += x * y;
            }
            rate -= 0.5 * tr;
            if let Some(db) = self.db {
                rate += self.aligned_diffusion(prev, p, j, pu, db, wbb);
            }
            if self.db.is_some() {
                rate += tab.l[pu] * db_minus;
            } else {
                rate -= tab.l[pu];
            }

            for k in 0..tab.atoms {
                let off = (pu * tab.atoms + k) * tab.corners;
                let idx = &tab.jump_idx[off..off + tab.corners];
                let w = &tab.jump_w[off..off + tab.corners];
                let shifted = |jj: usize| -> f64 {
                    let mut v = 0.0;
                    for c in 0..idx.len() {
                        v += w[c] * prev[idx[c] * nb + jj];
                    }
                    v
                };
                let gain = match self.db {
                    Some(db) => {
                        let lo = j.saturating_sub(self.beta_steps);
                        let hi = (j + self.beta_steps).min(nb - 1);
                        let mut g = f64::NEG_INFINITY;
                        for jj in lo..=hi {
                            let beta = (jj as f64 - j as f64) * db;
                            let slope = if jj > j { db_minus } else { db_plus };
                            g = g.max(-(shifted(jj) - w0) + beta * slope);
                        }
                        g
                    }
                    None => -(shifted(j) - w0),
                };
                rate += tab.weights[k] * gain;
            }

            best = best.max(rate);
        }
        best
    }

    /// `max_α Σ_q −½ (σ_q ∂_a + α_q ∂_b)² W` over the axis-aligned and zero
    /// noise columns.
    fn aligned_diffusion(&self, prev: &[f64], p: usize, j: usize, pu: usize, db: f64, wbb: f64) -> f64 {
        let lay = self.layout;
        let tab = self.table;
        let nb = lay.nb;
        let w0 = prev[p * nb + j];
        let mut total = 0.0;
        for q in 0..tab.r {
            let slot = pu * tab.r + q;
            match tab.col_axis[slot] {
                ZERO_COLUMN => {
                    if self.alpha_radius > 0.0 {
                        total += (-0.5 * self.alpha_radius * self.alpha_radius * wbb).max(0.0);
                    }
                }
                MIXED_COLUMN => {}
                i => {
                    let sig = tab.col_sigma[slot];
                    let h = self.da[i];
                    let reach = (self.alpha_radius * h / (sig.abs() * db) + 1e-9).floor() as usize;
                    let reach = reach.min(j).min(nb - 1 - j);
                    let (up, dn) = (lay.shift(p, i, true), lay.shift(p, i, false));
                    let scale = -0.5 * sig * sig / (h * h);
                    let mut best = f64::NEG_INFINITY;
                    for kappa in 0..=2 * reach {
                        let (ju, jd) = (j + kappa - reach, j + reach - kappa);
                        best = best.max(scale * (prev[up * nb + ju] - 2.0 * w0 + prev[dn * nb + jd]));
                    }
                    total += best;
                }
            }
        }
        total
    }

    /// One backward step. Rows `j = 0` and `j = nb − 1` of a budget field are
    /// taken from the boundary data (or kept when `None`).
    pub fn step(
        &self,
        prev: &[f64],
        dt: f64,
        bottom: Option<&[f64]>,
        top: Option<&[f64]>,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        let nb = self.layout.nb;
        let n = self.table.n;
        let scale = prev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.par_chunks_mut(nb)
            .enumerate()
            .try_for_each_init(
                || Scratch::new(n),
                |s, (p, row)| -> Result<(), SolverError> {
                    for (j, slot) in row.iter_mut().enumerate() {
                        let boundary = if self.db.is_none() {
                            None
                        } else if j == 0 {
                            Some(bottom.map_or(prev[p * nb], |b| b[p]))
                        } else if j + 1 == nb {
                            Some(top.map_or(prev[p * nb + j], |t| t[p]))
                        } else {
                            None
                        };
                        let v = match boundary {
                            Some(v) => v,
                            None => prev[p * nb + j] - dt * self.node_rate(prev, p, j, s),
                        };
                        if !v.is_finite() {
                            return Err(SolverError::NonFiniteUpdate { node: p * nb + j });
                        }
                        if v < -1e-9 * (1.0 + scale) {
                            return Err(SolverError::NegativeValue { node: p * nb + j, value: v });
                        }
                        *slot = v;
                    }
                    Ok(())
                },
            )
    }
}
