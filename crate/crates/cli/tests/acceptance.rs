//! Acceptance run: nine criteria, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines are always printed.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jumpreach_cli::config::parse_config;
use jumpreach_cli::run;
use jumpreach_cli::SolveFlags;
use jumpreach_core::hamiltonian::{lambda_max_arrowhead, nonlocal_term, ArrowheadMatrix};
use jumpreach_core::levelset::{v_profile, LevelSetQuery};
use jumpreach_core::simulate::{estimate_j, estimate_jbar, ControlPolicy};
use jumpreach_core::solver::{solve_w, solve_w0_on, GridSpec, SchemeParams};
use jumpreach_core::verify::{
    shifted_identity_residual, sign_equivalence_suite, strict_subsolution_residual, taylor_remainder_residual,
    w0_refinement_gap,
};
use jumpreach_core::{
    build_problem, builtin, AlphaControl, Axis, BetaPolicy, CoefficientValues, LevyAtom, LevyModel, PolicyTriple,
    ProblemSpec, TimeAxis, ValueField,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn problem(name: &str) -> ProblemSpec {
    build_problem(&builtin(name).unwrap()).unwrap()
}

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Closed-form largest eigenvalue against a dense symmetric eigensolver.
fn arrowhead_eigenvalue() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let r = rng.random_range(1..=6usize);
        let m = ArrowheadMatrix {
            g11: rng.random_range(-5.0..5.0),
            g12: (0..r).map(|_| rng.random_range(-5.0..5.0)).collect(),
            g22: rng.random_range(-5.0..5.0),
        };
        let dense = DMatrix::from_row_slice(r + 1, r + 1, &m.to_dense());
        let eig = dense.symmetric_eigen().eigenvalues.max();
        worst = worst.max((lambda_max_arrowhead(&m) - eig).abs());
    }
    ensure(worst <= 1e-10, format!("max |Δ| = {worst:.2e} over 1000 instances"))
}

fn sign_equivalence() -> Outcome {
    let report = sign_equivalence_suite(1000, 2024).map_err(|e| e.to_string())?;
    let agree = report.metrics.get("agreement").copied().unwrap_or(1.0 - report.max_residual);
    ensure(
        report.pass && agree >= 0.99,
        format!("agreement {:.4} (disagreement {:.4} ≤ {})", agree, report.max_residual, report.tolerance),
    )
}

fn zero_problem() -> Outcome {
    let spec = problem("zero");
    let grid = GridSpec::new(vec![Axis::new(-5.0, 5.0, 101)], Axis::new(0.0, 5.0, 101)).with_time_steps(100);
    let scheme = SchemeParams::default()
        .with_alpha(AlphaControl::Zero)
        .with_beta(BetaPolicy::GridDifferences { max_steps: 2 });
    let w = solve_w(&spec, &grid, &scheme).map_err(|e| e.to_string())?;
    let mut max_w = 0.0_f64;
    for k in w.stored_levels() {
        max_w = w.slice(k).unwrap().iter().fold(max_w, |m, v| m.max(v.abs()));
    }
    let q = LevelSetQuery::default_for(&w).map_err(|e| e.to_string())?;
    let v = v_profile(&w, 0, &q).map_err(|e| e.to_string())?;
    let v_zero = v.values.iter().all(|x| *x == Some(0.0));
    ensure(
        max_w <= 1e-12 && v_zero,
        format!("max |W| = {max_w:.1e} on 101×101×101, V ≡ 0: {v_zero}"),
    )
}

fn steering_error(a_count: usize, b_count: usize) -> Result<f64, String> {
    let spec = problem("deterministic-steering");
    let grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, a_count)], Axis::new(0.0, 1.5, b_count));
    // Courant number close to one keeps the upwind smearing of the kink small.
    let scheme = SchemeParams { safety: 0.99, ..SchemeParams::default() }
        .with_alpha(AlphaControl::Zero)
        .with_beta(BetaPolicy::Zero);
    let w = solve_w(&spec, &grid, &scheme).map_err(|e| e.to_string())?;
    let q = LevelSetQuery::default_for(&w).map_err(|e| e.to_string())?;
    let v = v_profile(&w, 0, &q).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for (p, value) in v.values.iter().enumerate() {
        let a = grid.a_axes[0].point(p);
        let oracle = (a.abs() - 1.0).max(0.0).powi(2);
        let value = value.ok_or(format!("V({a}) unreachable"))?;
        worst = worst.max((value - oracle).abs());
    }
    Ok(worst)
}

fn steering_oracle() -> Outcome {
    let coarse = steering_error(201, 151)?;
    let fine = steering_error(401, 301)?;
    let ratio = coarse / fine;
    ensure(
        coarse <= 0.05 && (1.4..=2.6).contains(&ratio),
        format!("max error {coarse:.4} at 201 points, {fine:.4} at 401, ratio {ratio:.2}"),
    )
}

/// Identity residual on the extended grid and the tolerance `3 ×` the
/// measured `W₀` refinement gap.
fn shifted_identity_at(steps: Option<usize>) -> Result<(f64, f64, usize), String> {
    let spec = problem("jump-variance");
    let mut grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, 41)], Axis::new(-1.0, 6.0, 36));
    grid.time_steps = steps;
    let scheme = SchemeParams::default();
    let w = solve_w(&spec, &grid, &scheme).map_err(|e| e.to_string())?;
    let fine = TimeAxis { horizon: w.time.horizon, steps: 2 * w.time.steps };
    let w0 = solve_w0_on(&spec, &grid.a_axes, fine, &scheme).map_err(|e| e.to_string())?;
    let gap = w0_refinement_gap(&spec, &grid, &scheme).map_err(|e| e.to_string())?;
    let report = shifted_identity_residual(&w, &w0, 3.0 * gap).map_err(|e| e.to_string())?;
    if !report.pass {
        return Err(format!("residual {:.3e} > 3 × gap {:.3e}", report.max_residual, gap));
    }
    Ok((report.max_residual, 3.0 * gap, w.time.steps))
}

/// The first doubling from the CFL-limited step is pre-asymptotic, so the
/// order is read off the second doubling; all three residuals must pass.
fn shifted_identity() -> Outcome {
    let (r1, tol1, m) = shifted_identity_at(None)?;
    let (r2, _, _) = shifted_identity_at(Some(2 * m))?;
    let (r4, _, _) = shifted_identity_at(Some(4 * m))?;
    let ratio = r2 / r4;
    ensure(
        r1 > r2 && r2 > r4 && (1.4..=2.6).contains(&ratio),
        format!("residual {r1:.3e} ≤ {tol1:.3e} at M = {m}; {r2:.3e} at 2M, {r4:.3e} at 4M, ratio {ratio:.2}"),
    )
}

fn node_value(w: &ValueField, a: f64, b: f64) -> f64 {
    let p = w.a_axes[0].nearest(a);
    let j = w.b_axis.unwrap().nearest(b);
    w.value(0, p, j).unwrap()
}

/// Fixed-control solve against `J̄`: the tolerance is the 95% half-width
/// plus `|W_h − W_{h/2}|` at the node, the observed error scale of the
/// first-order scheme.
fn mc_pde_agreement() -> Outcome {
    let spec = problem("jump-variance");
    let scheme = SchemeParams::frozen();
    let coarse_grid = GridSpec::new(vec![Axis::new(-8.0, 8.0, 161)], Axis::new(0.0, 40.0, 41));
    let fine_grid = GridSpec::new(vec![Axis::new(-8.0, 8.0, 321)], Axis::new(0.0, 40.0, 41));
    let coarse = solve_w(&spec, &coarse_grid, &scheme).map_err(|e| e.to_string())?;
    let fine = solve_w(&spec, &fine_grid, &scheme).map_err(|e| e.to_string())?;
    let policy = PolicyTriple::control_only(vec![0.0], spec.dim_noise());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_margin = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for i in 0..10 {
        let a = coarse_grid.a_axes[0].point(rng.random_range(65..=95usize));
        let b = coarse_grid.b_axis.point(rng.random_range(0..=5usize));
        let (wh, wf) = (node_value(&coarse, a, b), node_value(&fine, a, b));
        let est = estimate_jbar(&spec, 0.0, &[a], b, &policy, 100_000, 0.01, 100 + i).map_err(|e| e.to_string())?;
        let tol = est.half_width + (wh - wf).abs();
        worst_margin = worst_margin.max((wf - est.mean).abs() - tol);
        details.push(format!("({a:.1},{b:.0}): {wf:.3} vs {:.3}±{:.3}", est.mean, tol));
    }
    ensure(
        worst_margin <= 0.0,
        format!("10 nodes, worst |W − J̄| − tol = {worst_margin:.3e}; {}", details[..3].join(", ")),
    )
}

fn jump_variance() -> Outcome {
    let spec = problem("jump-variance");
    let control: ControlPolicy = Arc::new(|_, _, _| vec![0.0]);
    let est = estimate_j(&spec, 0.0, &[0.0], &control, 100_000, 0.01, 7).map_err(|e| e.to_string())?;
    ensure(est.covers(3.0), format!("J(0, 0) = {:.4} ± {:.4}, expected 3", est.mean, est.half_width))
}

fn strict_subsolution() -> Outcome {
    let spec = problem("zero");
    let grid = GridSpec::new(vec![Axis::new(-1.0, 1.0, 41)], Axis::new(0.0, 2.0, 41));
    let scheme = SchemeParams::default();
    let w = solve_w(&spec, &grid, &scheme).map_err(|e| e.to_string())?;
    let report = strict_subsolution_residual(&w, &spec, &scheme, 0.1, None).map_err(|e| e.to_string())?;
    let fraction = report.metrics["fraction"];
    ensure(
        report.pass && fraction >= 0.95,
        format!(
            "{:.1}% of {} interior nodes ≤ −ν/8 + tol_h (tol_h = {:.2e})",
            100.0 * fraction,
            report.metrics["nodes"],
            report.metrics["tol_h"]
        ),
    )
}

fn b_monotone_and_nonnegative(w: &ValueField) -> Result<(), String> {
    let nb = w.nb();
    for k in w.stored_levels() {
        let s = w.slice(k).unwrap();
        if let Some(v) = s.iter().find(|v| **v < 0.0) {
            return Err(format!("negative value {v} at level {k}"));
        }
        for col in s.chunks(nb) {
            if col.windows(2).any(|p| p[1] > p[0] + 1e-12) {
                return Err(format!("W increases in b at level {k}"));
            }
        }
    }
    Ok(())
}

fn structural_suite() -> Outcome {
    let mut passed = Vec::new();

    let spec = problem("jump-variance");
    let grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, 41)], Axis::new(0.0, 6.0, 31));
    let w = solve_w(&spec, &grid, &SchemeParams::default()).map_err(|e| e.to_string())?;
    b_monotone_and_nonnegative(&w)?;
    passed.push("b-monotone");
    passed.push("nonnegative");

    let terminal = w.slice(w.time.steps).unwrap();
    let nb = grid.b_axis.count;
    for p in 0..41 {
        let a = grid.a_axes[0].point(p);
        for j in 0..nb {
            let expected = (a * a - grid.b_axis.point(j)).max(0.0);
            if terminal[p * nb + j].to_bits() != expected.to_bits() {
                return Err(format!("terminal mismatch at a = {a}, j = {j}"));
            }
        }
    }
    passed.push("terminal bit-exact");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..=3usize);
        let k = rng.random_range(1..=3usize);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (d, e) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let phi = |x: &[f64], y: f64| x.iter().zip(&c).map(|(x, c)| x * c).sum::<f64>() + d * y + e;
        let atoms = (0..k)
            .map(|_| LevyAtom::new(vec![rng.random_range(0.1..2.0)], rng.random_range(0.1..3.0)))
            .collect();
        let levy = LevyModel::new(atoms, 0.0).map_err(|e| e.to_string())?;
        let mut coeffs = CoefficientValues::zeros(n, 1, k);
        for chi in &mut coeffs.chi_vals {
            chi.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
        }
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grad = c.clone();
        grad.push(d);
        let h = nonlocal_term(&phi, &a, 0.5, &grad, &beta, &levy, &coeffs).map_err(|e| e.to_string())?;
        if h.abs() > 1e-12 {
            return Err(format!("nonlocal term {h:e} on an affine field"));
        }
    }
    passed.push("affine annihilation");

    for _ in 0..200 {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        // Cubic in the first coordinate: two Gauss points integrate it exactly.
        let g = |p: &[f64]| q[0] * p[0].powi(3) + q[1] * p[0] * p[1] + q[2] * p[1] * p[1] + q[3] * p[0];
        let grad = |p: &[f64]| vec![3.0 * q[0] * p[0] * p[0] + q[1] * p[1] + q[3], q[1] * p[0] + 2.0 * q[2] * p[1]];
        let hess = |p: &[f64]| vec![6.0 * q[0] * p[0], q[1], q[1], 2.0 * q[2]];
        let res = taylor_remainder_residual(g, grad, hess, &x, &s, 2);
        if res > 1e-10 {
            return Err(format!("Taylor remainder residual {res:e}"));
        }
    }
    passed.push("Taylor exactness");

    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(&configs).map_err(|e| e.to_string())? {
        let text = std::fs::read_to_string(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let cfg = parse_config(&text).map_err(|e| e.to_string())?;
        if parse_config(&cfg.to_json()).map_err(|e| e.to_string())? != cfg {
            return Err("config round trip changed the document".into());
        }
    }
    passed.push("config round trip");

    let text = std::fs::read_to_string(configs.join("steering.json")).map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for threads in [1, 4] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
        cfg.outputs.directory = dir.path().to_path_buf();
        cfg.threads = Some(threads);
        hashes.push(run::solve(&cfg, SolveFlags::default()).map_err(|e| e.to_string())?);
    }
    if hashes[0] != hashes[1] {
        return Err("rerun manifests differ".into());
    }
    passed.push("rerun hashes");
    Ok(passed.join(", "))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    // Honour `cargo test -- --list` style probes from tooling.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let criteria = [
        Criterion { name: "arrowhead eigenvalue closed form", limit: Duration::from_secs(1), check: arrowhead_eigenvalue },
        Criterion { name: "spectral sign equivalence", limit: Duration::from_secs(10), check: sign_equivalence },
        Criterion { name: "zero problem", limit: Duration::from_secs(5), check: zero_problem },
        Criterion { name: "deterministic steering oracle", limit: Duration::from_secs(120), check: steering_oracle },
        Criterion { name: "shifted identity below zero budget", limit: Duration::from_secs(120), check: shifted_identity },
        Criterion { name: "Monte Carlo vs PDE at fixed controls", limit: Duration::from_secs(180), check: mc_pde_agreement },
        Criterion { name: "jump-variance oracle", limit: Duration::from_secs(30), check: jump_variance },
        Criterion { name: "strict subsolution margin", limit: Duration::from_secs(60), check: strict_subsolution },
        Criterion { name: "structural suite", limit: Duration::from_secs(60), check: structural_suite },
    ];
    let mut failures = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.limit)),
            Err(d) => (false, d),
        };
        failures += usize::from(!ok);
        println!(
            "{} {}. {} [{:.2}s]: {}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
