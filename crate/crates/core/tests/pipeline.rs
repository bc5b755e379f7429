//! End-to-end runs through the public API: problem, solve, level set.

use jumpreach_core::levelset::{v_profile, LevelSetQuery};
use jumpreach_core::solver::snapshot::{read_snapshot, write_snapshot};
use jumpreach_core::solver::{solve_w, solve_w0, solve_w_with, solve_wd, Retention, SolveOptions};
use jumpreach_core::{
    AlphaControl, Axis, BetaPolicy, Constraint, GridSpec, LevyAtom, LevyModel, ProblemSpec, SchemeParams,
};
use proptest::prelude::*;

fn steering(n: usize, constraint: Constraint) -> ProblemSpec {
    let mut controls = vec![vec![]];
    for _ in 0..n {
        controls = controls
            .into_iter()
            .flat_map(|c: Vec<f64>| [-1.0, 0.0, 1.0].map(|u| [c.clone(), vec![u]].concat()))
            .collect();
    }
    ProblemSpec::builder(n, 1)
        .horizon(1.0)
        .drift(|_, _, u| u.to_vec())
        .terminal_cost(|a| a.iter().map(|x| x * x).sum())
        .controls(controls)
        .constraint(constraint)
        .build()
        .unwrap()
}

fn sharp() -> SchemeParams {
    SchemeParams { safety: 0.99, ..SchemeParams::default() }
        .with_alpha(AlphaControl::Zero)
        .with_beta(BetaPolicy::Zero)
}

/// Largest `V` error against the separable oracle over nodes away from the edges.
fn planar_error(count: usize) -> f64 {
    let spec = steering(2, Constraint::Everywhere);
    let grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, count); 2], Axis::new(0.0, 2.5, 51));
    let w = solve_w(&spec, &grid, &sharp()).unwrap();
    let v = v_profile(&w, 0, &LevelSetQuery::new(0.05, true).unwrap()).unwrap();
    let mut worst = 0.0_f64;
    for (p, value) in v.values.iter().enumerate() {
        let a = w.a_point(p);
        if a.iter().all(|x| x.abs() <= 1.8) {
            let oracle: f64 = a.iter().map(|x| (x.abs() - 1.0).max(0.0).powi(2)).sum();
            worst = worst.max((value.expect("reachable") - oracle).abs());
        }
    }
    worst
}

// Two axes move at once, so the CFL step halves the per-axis Courant number
// and upwind smearing is much stronger than in one dimension.
#[test]
fn planar_steering_converges_to_the_separable_value() {
    let (coarse, fine) = (planar_error(41), planar_error(81));
    assert!(fine <= 0.6 * coarse, "{coarse} -> {fine}");
    assert!(fine <= 0.3, "max error {fine}");
}

#[test]
fn constraint_penalty_cuts_off_the_outside() {
    let spec = steering(1, Constraint::Box { lower: vec![-1.0], upper: vec![1.0] });
    let grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, 81)], Axis::new(0.0, 4.5, 46));
    let w = solve_w(&spec, &grid, &sharp()).unwrap();
    let v = v_profile(&w, 0, &LevelSetQuery::new(1e-3, true).unwrap()).unwrap();
    for (p, value) in v.values.iter().enumerate() {
        let a = grid.a_axes[0].point(p);
        if a.abs() >= 1.2 {
            assert_eq!(*value, None, "a = {a}");
        } else if a.abs() <= 0.8 {
            assert_eq!(*value, Some(0.0), "a = {a}");
        }
    }
}

#[test]
fn resumed_sweep_and_snapshots_are_bit_exact() {
    let spec = steering(1, Constraint::Everywhere);
    let grid = GridSpec::new(vec![Axis::new(-2.0, 2.0, 41)], Axis::new(0.0, 4.5, 31));
    let scheme = SchemeParams::default();
    let (w0, wd) = (solve_w0(&spec, &grid, &scheme).unwrap(), solve_wd(&spec, &grid, &scheme).unwrap());
    let mut kept = None;
    let mut grab = |k: usize, _: f64, s: &[f64]| {
        if k == 5 {
            kept = Some(s.to_vec());
        }
        Ok(())
    };
    let full = solve_w_with(
        &spec,
        &grid,
        &scheme,
        &w0,
        &wd,
        SolveOptions { retention: Retention::Ends, on_level: Some(&mut grab), ..Default::default() },
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (json, _) = write_snapshot(dir.path(), "cut", &full, 5, kept.as_ref().unwrap(), "fp").unwrap();
    let snap = read_snapshot(&json).unwrap();
    assert_eq!(snap.values, kept.unwrap());

    let resumed = solve_w_with(
        &spec,
        &grid,
        &scheme,
        &w0,
        &wd,
        SolveOptions { resume: Some((snap.meta.level, snap.values)), ..Default::default() },
    )
    .unwrap();
    let (x, y) = (full.slice(0).unwrap(), resumed.slice(0).unwrap());
    assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn solved_fields_are_nonnegative_and_nonincreasing_in_budget(
        gain in -1.0..1.0_f64,
        sigma in 0.0..0.6_f64,
        mark in -0.5..0.5_f64,
        weight in 0.0..2.0_f64,
        running in 0.0..0.5_f64,
        q in 0.1..2.0_f64,
    ) {
        let mut b = ProblemSpec::builder(1, 1)
            .horizon(0.5)
            .drift(move |_, _, u| vec![gain * u[0]])
            .diffusion(move |_, _, _| vec![sigma])
            .jump(move |_, _, _, e| vec![e[0]])
            .running_cost(move |_, _, u| running * (1.0 + u[0] * u[0]))
            .terminal_cost(move |a| q * a[0] * a[0])
            .scalar_controls(&[-1.0, 0.0, 1.0]);
        if weight > 1e-3 && mark.abs() > 1e-3 {
            b = b.levy(LevyModel::new(vec![LevyAtom::new(vec![mark], weight)], 0.0).unwrap());
        }
        let spec = b.build().unwrap();
        let grid = GridSpec::new(vec![Axis::new(-1.5, 1.5, 15)], Axis::new(0.0, 3.0, 13));
        let w = solve_w(&spec, &grid, &SchemeParams::default()).unwrap();
        for k in w.stored_levels() {
            let s = w.slice(k).unwrap();
            prop_assert!(s.iter().all(|v| *v >= 0.0));
            for col in s.chunks(13) {
                prop_assert!(col.windows(2).all(|p| p[1] <= p[0] + 1e-12), "level {}: {:?}", k, col);
            }
        }
    }
}
