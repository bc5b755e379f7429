use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{norm, ProblemSpec};

/// Empirical Lipschitz and linear-growth ratios for one coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityEntry {
    pub name: String,
    /// Largest `|g(a) − g(a′)| / |a − a′|` seen at the moderate scale.
    pub lipschitz: f64,
    /// Largest `|g(a)| / (1 + |a|)` seen at the moderate scale.
    pub growth: f64,
    pub lipschitz_far: f64,
    pub growth_far: f64,
    pub lipschitz_flag: bool,
    pub growth_flag: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub samples: usize,
    pub entries: Vec<RegularityEntry>,
}

impl RegularityReport {
    pub fn entry(&self, name: &str) -> Option<&RegularityEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn any_flag(&self) -> bool {
        self.entries.iter().any(|e| e.lipschitz_flag || e.growth_flag)
    }
}

const NEAR_SCALE: f64 = 10.0;
const FAR_SCALE: f64 = 1000.0;

struct Tracker {
    name: String,
    lip: [f64; 2],
    growth: [f64; 2],
}

impl Tracker {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lip: [0.0; 2],
            growth: [0.0; 2],
        }
    }

    fn record(&mut self, scale: usize, ga: &[f64], gb: &[f64], a: &[f64], b: &[f64]) {
        let diff: f64 = ga.iter().zip(gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if dist > 0.0 {
            self.lip[scale] = self.lip[scale].max(diff / dist);
        }
        self.growth[scale] = self.growth[scale].max(norm(ga) / (1.0 + norm(a)));
        self.growth[scale] = self.growth[scale].max(norm(gb) / (1.0 + norm(b)));
    }

    fn finish(self) -> RegularityEntry {
        // Linear bounds keep both ratios flat between scales; super-linear
        // coefficients inflate them roughly by FAR_SCALE / NEAR_SCALE.
        let inflated = |near: f64, far: f64| !far.is_finite() || far > 2.0 * near + 1e-9;
        RegularityEntry {
            lipschitz_flag: inflated(self.lip[0], self.lip[1]),
            growth_flag: inflated(self.growth[0], self.growth[1]),
            lipschitz: self.lip[0],
            growth: self.growth[0],
            lipschitz_far: self.lip[1],
            growth_far: self.growth[1],
            name: self.name,
        }
    }
}

/// Samples random state pairs at two scales and reports the empirical
/// Lipschitz and growth ratios of `f, σ, χ, l, m, d`. Ratios that inflate
/// from the moderate to the far scale are flagged.
pub fn check_regularity(spec: &ProblemSpec, samples: usize, seed: u64) -> RegularityReport {
    let samples = samples.max(2);
    let n = spec.dim_state();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trackers: Vec<Tracker> = vec![
        Tracker::new("f"),
        Tracker::new("sigma"),
        Tracker::new("l"),
        Tracker::new("m"),
        Tracker::new("d"),
    ];
    for k in 0..spec.levy().len() {
        trackers.push(Tracker::new(format!("chi[{k}]")));
    }

    for (scale_idx, scale) in [NEAR_SCALE, FAR_SCALE].into_iter().enumerate() {
        for _ in 0..samples {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let t = rng.random_range(0.0..=spec.horizon());
            let u = spec.controls()[rng.random_range(0..spec.controls().len())].clone();

            trackers[0].record(scale_idx, &spec.drift(t, &a, &u), &spec.drift(t, &b, &u), &a, &b);
            trackers[1].record(
                scale_idx,
                &spec.diffusion(t, &a, &u),
                &spec.diffusion(t, &b, &u),
                &a,
                &b,
            );
            trackers[2].record(
                scale_idx,
                &[spec.running_cost(t, &a, &u)],
                &[spec.running_cost(t, &b, &u)],
                &a,
                &b,
            );
            let m = |x: &[f64]| spec.terminal_cost(x).unwrap_or(f64::INFINITY);
            trackers[3].record(scale_idx, &[m(&a)], &[m(&b)], &a, &b);
            let d = |x: &[f64]| spec.distance(x).unwrap_or(f64::INFINITY);
            trackers[4].record(scale_idx, &[d(&a)], &[d(&b)], &a, &b);
            for (k, atom) in spec.levy().atoms().iter().enumerate() {
                let ja = spec.jump(t, &a, &u, &atom.mark);
                let jb = spec.jump(t, &b, &u, &atom.mark);
                trackers[5 + k].record(scale_idx, &ja, &jb, &a, &b);
            }
        }
    }

    RegularityReport {
        samples,
        entries: trackers.into_iter().map(Tracker::finish).collect(),
    }
}
