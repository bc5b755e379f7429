//! Orchestration of the subcommands. Each command reads a validated
//! [`RunConfig`], writes its artifacts under the output directory and then
//! rewrites `manifest.json`, which lists every artifact with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use jumpreach_core::levelset::{v_profile, LevelSetQuery};
use jumpreach_core::simulate::{estimate_jbar, simulate_pair_path, PathRng};
use jumpreach_core::solver::snapshot::{latest_snapshot, read_snapshot, write_snapshot, Snapshot};
use jumpreach_core::solver::{
    solve_w0, solve_w0_on, solve_wd, solve_w_with, terminal_condition, time_axis, Retention, SolveOptions,
};
use jumpreach_core::verify::{
    constant_control_family, dpp_consistency, lipschitz_profile, shifted_identity_residual,
    sign_equivalence_suite, strict_subsolution_residual, w0_refinement_gap, McParams,
};
use jumpreach_core::{
    DiagnosticReport, FieldKind, LevelSetError, PolicyTriple, ProblemSpec, SimulateError, SolverError, TimeAxis,
    ValueField, VerifyError,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{parse_config, Check, ConfigError, OutputFormat, RunConfig};
use crate::export::{gnuplot_bundle, profile_csv, slice_csv, ExportError};

/// Set by the signal handler; the sweep checkpoints and stops at the next level.
pub static INTERRUPT: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("interrupted after level {level}; a checkpoint was written, rerun with --resume")]
    Interrupted { level: usize },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl RunError {
    /// 1 for configuration, usage and I/O problems (including an interrupted
    /// run), 2 for numerical failures, 3 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) | Self::Interrupted { .. } => 1,
            Self::Numerical(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Interrupted { level } => Self::Interrupted { level },
            SolverError::Snapshot(msg) => Self::Io(msg),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<LevelSetError> for RunError {
    fn from(e: LevelSetError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<SimulateError> for RunError {
    fn from(e: SimulateError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<VerifyError> for RunError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidRequest(msg) => Self::Config(ConfigError::SchemaViolation {
                path: "verify".into(),
                message: msg,
            }),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<ExportError> for RunError {
    fn from(e: ExportError) -> Self {
        Self::Io(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut config = parse_config(&text)?;
    if let Some(out) = &overrides.out {
        config.outputs.directory = out.clone();
    }
    if let Some(t) = overrides.threads {
        config.threads = Some(t);
    }
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(e) = overrides.epsilon {
        config.scheme.epsilon = Some(e);
    }
    config.validate()?;
    Ok(config)
}

/// Digest of everything that determines the solved field.
pub fn fingerprint(config: &RunConfig) -> String {
    let key = serde_json::json!({
        "problem": config.problem,
        "grid": config.grid,
        "scheme": config.scheme.params(),
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Config(ConfigError::SchemaViolation {
                    path: "threads".into(),
                    message: e.to_string(),
                }))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn read(out: &Path) -> Result<Self, RunError> {
        let path = out.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_error(&path, e))
    }

    pub fn get(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<(), RunError> {
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let rel = path.strip_prefix(root).expect("inside root");
        let rel_str = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel_str == "manifest.json" || rel_str == CHECKPOINTS {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
            out.push(Artifact {
                path: rel_str,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
    }
    Ok(())
}

/// Rescans the output directory; checkpoints are transient and not listed.
pub fn write_manifest(out: &Path, fingerprint: &str) -> Result<Manifest, RunError> {
    let mut artifacts = Vec::new();
    collect_files(out, out, &mut artifacts)?;
    artifacts.sort_by(|x, y| x.path.cmp(&y.path));
    let manifest = Manifest {
        fingerprint: fingerprint.to_string(),
        artifacts,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
    Ok(manifest)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

const CHECKPOINTS: &str = "checkpoints";
const FIELDS: &str = "fields";

fn level_stem(level: usize) -> String {
    format!("w_level_{level:06}")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveFlags {
    pub resume: bool,
    /// Stop after this many computed levels, as an interruption would.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SolveInfo<'a> {
    fingerprint: &'a str,
    time_axis: TimeAxis,
    checkpoint_every: usize,
}

/// `W₀`, `W_d`, then the `W` sweep with snapshots every
/// `checkpoint_every` levels, then level-set extraction.
pub fn solve(config: &RunConfig, flags: SolveFlags) -> Result<Manifest, RunError> {
    let spec = config.problem_spec()?;
    let fp = fingerprint(config);
    let out = &config.outputs.directory;
    let (fields_dir, ckpt_dir) = (out.join(FIELDS), out.join(CHECKPOINTS));
    let field = with_threads(config.threads, || -> Result<ValueField, RunError> {
        let scheme = config.scheme.params();
        let grid = &config.grid;
        let w0 = solve_w0(&spec, grid, &scheme)?;
        let wd = solve_wd(&spec, grid, &scheme)?;
        let time = time_axis(&spec, grid, &scheme)?;
        let template = ValueField::new(FieldKind::W, grid.a_axes.clone(), Some(grid.b_axis), time);

        let resume = if flags.resume { resume_point(&[&ckpt_dir, &fields_dir], &fp)? } else { None };
        if resume.is_none() {
            let _ = fs::remove_dir_all(&ckpt_dir);
            let _ = fs::remove_dir_all(&fields_dir);
        }
        let terminal = terminal_condition(&spec, grid)?;
        write_snapshot(&fields_dir, &level_stem(time.steps), &template, time.steps, &terminal, &fp)?;

        let every = config.outputs.checkpoint_every;
        let mut computed = 0usize;
        let mut on_level = |k: usize, _t: f64, slice: &[f64]| -> Result<(), SolverError> {
            computed += 1;
            if k.is_multiple_of(every) {
                write_snapshot(&fields_dir, &level_stem(k), &template, k, slice, &fp)?;
            }
            let stop = flags.stop_after == Some(computed) || INTERRUPT.load(Ordering::SeqCst);
            if stop && k > 0 {
                write_snapshot(&ckpt_dir, &level_stem(k), &template, k, slice, &fp)?;
                return Err(SolverError::Interrupted { level: k });
            }
            Ok(())
        };
        let options = SolveOptions {
            retention: Retention::Ends,
            resume: resume.map(|s| (s.meta.level, s.values)),
            on_level: Some(&mut on_level),
        };
        let mut field = solve_w_with(&spec, grid, &scheme, &w0, &wd, options)?;
        field.set_slice(time.steps, terminal);
        slice_csv(
            &fields_dir.join("w0_t0.csv"),
            &grid.a_axes,
            None,
            w0.slice(0).expect("t = 0 retained"),
            "W0",
        )?;
        write_json(
            &fields_dir.join("solve.json"),
            &SolveInfo {
                fingerprint: &fp,
                time_axis: time,
                checkpoint_every: every,
            },
        )?;
        Ok(field)
    })??;
    let _ = fs::remove_dir_all(&ckpt_dir);
    write_extraction(config, &field)?;
    write_manifest(out, &fp)
}

fn resume_point(dirs: &[&Path], fp: &str) -> Result<Option<Snapshot>, RunError> {
    let mut best: Option<Snapshot> = None;
    for dir in dirs {
        if let Some(s) = latest_snapshot(dir, FieldKind::W, fp)? {
            if best.as_ref().is_none_or(|b| s.meta.level < b.meta.level) {
                best = Some(s);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Serialize)]
struct LevelSetInfo {
    epsilon: f64,
    interpolate: bool,
    v_max_t0: Option<f64>,
    unreachable_t0: usize,
}

/// Profiles at `t = 0` and `t = T`, plus the plot bundle for scalar states.
fn write_extraction(config: &RunConfig, field: &ValueField) -> Result<(), RunError> {
    let out = &config.outputs.directory;
    let query = match config.scheme.epsilon {
        Some(eps) => LevelSetQuery::new(eps, config.scheme.interpolate)?,
        None => LevelSetQuery {
            interpolate: config.scheme.interpolate,
            ..LevelSetQuery::default_for(field)?
        },
    };
    let start = v_profile(field, 0, &query)?;
    let end = v_profile(field, field.time.steps, &query)?;
    profile_csv(&out.join("profiles/v_t0.csv"), &start)?;
    profile_csv(&out.join("profiles/v_terminal.csv"), &end)?;
    write_json(
        &out.join("profiles/levelset.json"),
        &LevelSetInfo {
            epsilon: query.epsilon,
            interpolate: query.interpolate,
            v_max_t0: start.max_finite(),
            unreachable_t0: start.values.iter().filter(|v| v.is_none()).count(),
        },
    )?;
    if config.outputs.formats.contains(&OutputFormat::Gnuplot) && field.a_axes.len() == 1 {
        let b_axis = field.b_axis.expect("W field");
        gnuplot_bundle(&out.join("plots"), &field.a_axes[0], &b_axis, field.slice(0).expect("t = 0"), &start)?;
    }
    Ok(())
}

/// Re-extracts `V` from the stored end snapshots, e.g. with another `ε`.
pub fn extract(config: &RunConfig) -> Result<Manifest, RunError> {
    let spec = config.problem_spec()?;
    let fp = fingerprint(config);
    let out = &config.outputs.directory;
    let time = time_axis(&spec, &config.grid, &config.scheme.params())?;
    let mut field = ValueField::new(FieldKind::W, config.grid.a_axes.clone(), Some(config.grid.b_axis), time);
    for level in [0, time.steps] {
        let path = out.join(FIELDS).join(format!("{}.json", level_stem(level)));
        let snap = read_snapshot(&path)?;
        if snap.meta.fingerprint != fp {
            return Err(io_error(&path, "snapshot was produced by a different configuration; run `solve` first"));
        }
        field.set_slice(level, snap.values);
    }
    write_extraction(config, &field)?;
    write_manifest(out, &fp)
}

#[derive(Debug, Serialize)]
struct SimulatedPoint {
    a: Vec<f64>,
    b: f64,
    mean: f64,
    half_width: f64,
    n_paths: usize,
    seed: u64,
}

/// Monte Carlo estimates of `J̄` at the configured start points under a
/// constant policy, plus one recorded sample path.
pub fn simulate(config: &RunConfig) -> Result<Manifest, RunError> {
    let spec = config.problem_spec()?;
    let sim = config.simulate.as_ref().ok_or_else(|| ConfigError::SchemaViolation {
        path: "simulate".into(),
        message: "the simulate command needs a `simulate` section".into(),
    })?;
    let r = spec.dim_noise();
    let alpha = if sim.alpha.is_empty() { vec![0.0; r] } else { sim.alpha.clone() };
    let policy = PolicyTriple::constant(sim.control.clone(), alpha, sim.beta.clone());
    let out = &config.outputs.directory;
    let points = with_threads(config.threads, || -> Result<Vec<SimulatedPoint>, RunError> {
        let mut rows = Vec::new();
        for (i, pt) in sim.points.iter().enumerate() {
            let seed = config.seed.wrapping_add(i as u64);
            let est = estimate_jbar(&spec, 0.0, &pt.a, pt.b, &policy, sim.n_paths, sim.dt, seed)?;
            rows.push(SimulatedPoint {
                a: pt.a.clone(),
                b: pt.b,
                mean: est.mean,
                half_width: est.half_width,
                n_paths: est.n_paths,
                seed,
            });
        }
        Ok(rows)
    })??;
    write_json(&out.join("simulate/estimates.json"), &points)?;
    if let Some(pt) = sim.points.first() {
        let path = simulate_pair_path(&spec, 0.0, &pt.a, pt.b, &policy, sim.dt, &mut PathRng::new(config.seed, 0))?;
        let file = out.join("simulate/path_0.csv");
        let handle = fs::File::create(&file).map_err(|e| io_error(&file, e))?;
        path.write_csv(std::io::BufWriter::new(handle)).map_err(|e| io_error(&file, e))?;
    }
    write_manifest(out, &fingerprint(config))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub fingerprint: String,
    pub pass: bool,
    pub reports: Vec<DiagnosticReport>,
}

fn selected_checks(config: &RunConfig) -> Vec<Check> {
    if !config.verify.checks.is_empty() {
        return config.verify.checks.clone();
    }
    let mut checks = vec![Check::Lipschitz, Check::StrictSubsolution, Check::SignEquivalence];
    if config.grid.extended() {
        checks.push(Check::ShiftedIdentity);
    }
    if config.verify.dpp_samples > 0 {
        checks.push(Check::Dpp);
    }
    checks
}

/// Evenly spread interior sample nodes for the dynamic programming check.
fn dpp_samples(field: &ValueField, count: usize) -> Vec<(Vec<f64>, f64)> {
    let (na, nb) = (field.na(), field.nb());
    (0..count)
        .map(|i| {
            let p = (i * na + na / 2) / count.max(1) % na;
            let j = 1 + (i * 7) % (nb - 2).max(1);
            (field.a_point(p), field.b_value(j))
        })
        .collect()
}

fn run_check(config: &RunConfig, spec: &ProblemSpec, w: &ValueField, check: Check) -> Result<DiagnosticReport, RunError> {
    let scheme = config.scheme.params();
    let v = &config.verify;
    Ok(match check {
        Check::Lipschitz => lipschitz_profile(w, v.lipschitz_tolerance),
        Check::StrictSubsolution => strict_subsolution_residual(w, spec, &scheme, v.nu, None)?,
        Check::SignEquivalence => sign_equivalence_suite(v.sign_instances, config.seed)?,
        Check::ShiftedIdentity => {
            let fine = TimeAxis {
                horizon: w.time.horizon,
                steps: 2 * w.time.steps,
            };
            let w0 = solve_w0_on(spec, &config.grid.a_axes, fine, &scheme)?;
            let gap = w0_refinement_gap(spec, &config.grid, &scheme)?;
            shifted_identity_residual(w, &w0, 3.0 * gap)?.with_metric("w0_refinement_gap", gap)
        }
        Check::Dpp => {
            let samples = dpp_samples(w, v.dpp_samples);
            let r_index = (w.time.steps / 4).max(1);
            let mc = McParams {
                n_paths: v.dpp_paths,
                dt: w.time.dt(),
                seed: config.seed,
            };
            dpp_consistency(spec, w, 0, r_index, &samples, &constant_control_family(spec), mc, v.dpp_tolerance)?
        }
    })
}

/// Solves with every level retained and runs the selected diagnostics.
/// The report is written before a failure is returned.
pub fn verify(config: &RunConfig) -> Result<VerifyReport, RunError> {
    let spec = config.problem_spec()?;
    let fp = fingerprint(config);
    let out = &config.outputs.directory;
    let reports = with_threads(config.threads, || -> Result<Vec<DiagnosticReport>, RunError> {
        let scheme = config.scheme.params();
        let w0 = solve_w0(&spec, &config.grid, &scheme)?;
        let wd = solve_wd(&spec, &config.grid, &scheme)?;
        let w = solve_w_with(&spec, &config.grid, &scheme, &w0, &wd, SolveOptions::default())?;
        selected_checks(config).into_iter().map(|c| run_check(config, &spec, &w, c)).collect()
    })??;
    let report = VerifyReport {
        fingerprint: fp.clone(),
        pass: reports.iter().all(|r| r.pass),
        reports,
    };
    write_json(&out.join("verify/report.json"), &report)?;
    write_manifest(out, &fp)?;
    if !report.pass {
        let failed: Vec<&str> = report.reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        return Err(RunError::Verification(failed.join(", ")));
    }
    Ok(report)
}

/// Plain-text summary of the manifest and, if present, the verify report.
pub fn report(out: &Path) -> Result<String, RunError> {
    let manifest = Manifest::read(out)?;
    let mut text = format!("fingerprint {}\n{} artifacts\n", manifest.fingerprint, manifest.artifacts.len());
    for a in &manifest.artifacts {
        text.push_str(&format!("  {:<40} {:>10} B  {}\n", a.path, a.bytes, &a.sha256[..16]));
    }
    let levelset = out.join("profiles/levelset.json");
    if let Ok(raw) = fs::read_to_string(&levelset) {
        let info: serde_json::Value = serde_json::from_str(&raw).map_err(|e| io_error(&levelset, e))?;
        text.push_str(&format!(
            "level set: epsilon {}, max V(0, .) {}, unreachable nodes {}\n",
            info["epsilon"], info["v_max_t0"], info["unreachable_t0"]
        ));
    }
    let verify_path = out.join("verify/report.json");
    if let Ok(raw) = fs::read_to_string(&verify_path) {
        let rep: VerifyReport = serde_json::from_str(&raw).map_err(|e| io_error(&verify_path, e))?;
        for r in &rep.reports {
            text.push_str(&format!(
                "{} {}: residual {:.3e}, tolerance {:.3e}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.max_residual,
                r.tolerance
            ));
        }
    }
    Ok(text)
}
