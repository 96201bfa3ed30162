//! Excursions of Brownian motion with positive drift above a level, and
//! the exact Cox law they are compared against.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::families::{brownian_tail_integral, brownian_tail_inverse};
use crate::fi::{PointSample, SampleMeta};
use crate::metrics::{holm, ks_two_sample, mann_whitney};
use crate::seed::{self, domain};
use crate::stats::{Estimate, Welford};

/// `√(1/(8π))`, the Cox intensity prefactor.
pub const COX_PREFACTOR: f64 = 0.199_471_140_200_716_35;

pub const DEFAULT_STEP_BUDGET: usize = 50_000_000;

/// `B(kΔ) + d·kΔ` on a grid, started at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftPath {
    pub drift: f64,
    pub step: f64,
    pub values: Vec<f64>,
    /// The path was stopped on first exceeding `level + margin`.
    pub level: f64,
    pub margin: f64,
}

impl DriftPath {
    /// Probability that the continuous path comes back to the level after
    /// the stopping time.
    pub fn return_probability(&self) -> f64 {
        (-2.0 * self.drift * self.margin).exp()
    }

    /// Every other grid point: the same path seen at step `2Δ`.
    pub fn coarsen(&self) -> DriftPath {
        DriftPath {
            values: self.values.iter().copied().step_by(2).collect(),
            step: 2.0 * self.step,
            ..self.clone()
        }
    }
}

/// `M = −ln δ / (2d)`, the margin making the return probability `δ`.
pub fn margin_for(drift: f64, delta_path: f64) -> f64 {
    -delta_path.ln() / (2.0 * drift)
}

pub fn simulate_until_last_hit<R: Rng + ?Sized>(drift: f64, level: f64, step: f64, margin: f64, step_budget: usize, rng: &mut R) -> Result<DriftPath> {
    if !(drift > 0.0 && step > 0.0 && margin > 0.0) {
        return Err(invalid("path", "need d > 0, Δ > 0 and M > 0"));
    }
    if !(level >= 0.0) {
        return Err(invalid("level", "must be nonnegative"));
    }
    let sd = step.sqrt();
    let mean = drift * step;
    let stop = level + margin;
    let mut values = Vec::with_capacity(((stop / drift / step) * 1.2) as usize + 16);
    let mut x = 0.0f64;
    values.push(x);
    while x <= stop {
        if values.len() > step_budget {
            return Err(LabError::StepBudget(step_budget));
        }
        let z: f64 = rng.sample(StandardNormal);
        x += mean + sd * z;
        values.push(x);
    }
    Ok(DriftPath {
        drift,
        step,
        values,
        level,
        margin,
    })
}

/// Lengths of the completed excursions above `level` after the first hit,
/// with crossing points linearly interpolated between grid points.
/// Excursions that never come back (the final climb) are not completed.
pub fn excursion_lengths(path: &DriftPath, level: f64, min_len: f64) -> Vec<f64> {
    let v = &path.values;
    let h = path.step;
    let mut out = Vec::new();
    let Some(first) = v.iter().position(|&x| x >= level) else {
        return out;
    };
    let cross = |k: usize| {
        // crossing between k−1 and k
        let (a, b) = (v[k - 1], v[k]);
        (k - 1) as f64 + (level - a) / (b - a)
    };
    let mut start: Option<f64> = if v[first] > level {
        Some(if first == 0 { 0.0 } else { cross(first) })
    } else {
        None
    };
    #[allow(clippy::needless_range_loop)]
    for k in first + 1..v.len() {
        let above = v[k] > level;
        match (start, above) {
            (None, true) => start = Some(cross(k)),
            (Some(s), false) => {
                let len = (cross(k) - s) * h;
                if len >= min_len {
                    out.push(len);
                }
                start = None;
            }
            _ => {}
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Lebesgue measure of `{x ∈ [L, R] : B(x) > level}` on the grid.
pub fn excursion_mass(path: &DriftPath, level: f64) -> f64 {
    excursion_lengths(path, level, 0.0).iter().sum()
}

/// Exact draw from the stationary Cox law restricted to `(eps, ∞)`.
pub fn cox_stationary_sample<R: Rng + ?Sized>(drift: f64, eps: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(drift > 0.0 && eps > 0.0) {
        return Err(invalid("cox", "need d > 0 and ε > 0"));
    }
    let b = 0.5 * drift * drift;
    let t: f64 = Exp::new(drift).map_err(|e| invalid("drift", e.to_string()))?.sample(rng);
    let mean = t * COX_PREFACTOR * brownian_tail_integral(b, eps);
    let mut out = Vec::new();
    if mean > 0.0 {
        let n: f64 = Poisson::new(mean).map_err(|e| invalid("cox", e.to_string()))?.sample(rng);
        for _ in 0..n as usize {
            let u: f64 = 1.0 - rng.random::<f64>();
            out.push(brownian_tail_inverse(b, eps, u));
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// `E[#{excursions ≥ a}] = (1/d) √(1/(8π)) ∫_a^∞ x^{−3/2} e^{−x d²/2} dx`.
pub fn mean_count_above(drift: f64, a: f64) -> f64 {
    COX_PREFACTOR * brownian_tail_integral(0.5 * drift * drift, a) / drift
}

/// `E[Σ lengths] = 1/(2d²)`.
pub fn mean_total_mass(drift: f64) -> f64 {
    0.5 / (drift * drift)
}

/// `E[Σ lengths ≥ a] = (1/d) √(1/(8π)) √(2π)/d · erfc(d √(a/2))`.
pub fn mean_mass_above(drift: f64, a: f64) -> f64 {
    mean_total_mass(drift) * statrs::function::erf::erfc(drift * (0.5 * a).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrownianOptions {
    pub drift: f64,
    pub level: f64,
    pub step: f64,
    pub n_paths: usize,
    pub delta_path: f64,
    /// Excursions shorter than this are discarded (at least `2Δ`).
    pub min_len: f64,
    pub thresholds: Vec<f64>,
    pub significance: f64,
    pub step_budget: usize,
    pub seed: u64,
}

impl BrownianOptions {
    pub fn new(drift: f64, level: f64, step: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            drift,
            level,
            step,
            n_paths,
            delta_path: 1e-6,
            min_len: 0.1,
            thresholds: vec![0.5, 1.0, 2.0],
            significance: 0.01,
            step_budget: DEFAULT_STEP_BUDGET,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_len < 2.0 * self.step {
            return Err(invalid("min_len", "must be at least 2Δ"));
        }
        if !(self.delta_path > 0.0 && self.delta_path < 1.0) {
            return Err(invalid("delta_path", "must lie in (0,1)"));
        }
        if self.n_paths < 2 {
            return Err(invalid("n_paths", "need at least 2 paths"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonTest {
    pub comparison: String,
    pub statistic: String,
    pub value_a: f64,
    pub value_b: f64,
    pub se: f64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalvingRow {
    pub threshold: f64,
    pub coarse: f64,
    pub fine: f64,
    /// SE of the count statistic itself; the change must stay below it.
    pub se: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop14Report {
    pub options: BrownianOptions,
    pub margin: f64,
    pub return_probability: f64,
    pub count_at_one: Estimate,
    pub count_at_one_exact: f64,
    pub total_mass: Estimate,
    pub total_mass_exact: f64,
    pub tests: Vec<ComparisonTest>,
    pub halving: Vec<HalvingRow>,
    /// Grid crossings shorten excursions by `O(Δ)` each.
    pub bias_note: String,
    pub pass: bool,
}

struct LevelSet {
    lengths: Vec<Vec<f64>>,
    fine: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

/// Level-`level` excursion samples of `n` paths from index block `block`;
/// with `refine`, each path is drawn at `Δ/2` and read at both steps.
fn level_set(opts: &BrownianOptions, level: f64, block: u64, refine: bool) -> Result<LevelSet> {
    let margin = margin_for(opts.drift, opts.delta_path);
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..opts.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(opts.seed, domain::PATHS, block * opts.n_paths as u64 + i);
            let step = if refine { 0.5 * opts.step } else { opts.step };
            let path = simulate_until_last_hit(opts.drift, level, step, margin, opts.step_budget, &mut rng)?;
            let (coarse, fine) = if refine {
                let c = path.coarsen();
                (excursion_lengths(&c, level, opts.min_len), excursion_lengths(&path, level, opts.min_len))
            } else {
                (excursion_lengths(&path, level, opts.min_len), Vec::new())
            };
            let mass = if refine { excursion_mass(&path.coarsen(), level) } else { excursion_mass(&path, level) };
            Ok((coarse, fine, mass))
        })
        .collect::<Result<_>>()?;
    let mut set = LevelSet {
        lengths: Vec::with_capacity(rows.len()),
        fine: Vec::with_capacity(rows.len()),
        mass: Vec::with_capacity(rows.len()),
    };
    for (c, f, m) in rows {
        set.lengths.push(c);
        set.fine.push(f);
        set.mass.push(m);
    }
    Ok(set)
}

fn count_above(sample: &[f64], a: f64) -> f64 {
    sample.iter().filter(|&&x| x >= a).count() as f64
}

fn largest(sample: &[f64]) -> f64 {
    sample.first().copied().unwrap_or(0.0)
}

fn mean_se(xs: &[f64]) -> Estimate {
    xs.iter().copied().collect::<Welford>().estimate()
}

fn compare(label: &str, a: &[Vec<f64>], b: &[Vec<f64>], thresholds: &[f64]) -> Vec<ComparisonTest> {
    let mut out = Vec::new();
    for &t in thresholds {
        let xa: Vec<f64> = a.iter().map(|s| count_above(s, t)).collect();
        let xb: Vec<f64> = b.iter().map(|s| count_above(s, t)).collect();
        let (ea, eb) = (mean_se(&xa), mean_se(&xb));
        let (_, p) = mann_whitney(&xa, &xb);
        out.push(ComparisonTest {
            comparison: label.into(),
            statistic: format!("count_above({t})"),
            value_a: ea.mean,
            value_b: eb.mean,
            se: ea.se.hypot(eb.se),
            p_value: p,
            pass: true,
        });
    }
    let la: Vec<f64> = a.iter().map(|s| largest(s)).collect();
    let lb: Vec<f64> = b.iter().map(|s| largest(s)).collect();
    let (ea, eb) = (mean_se(&la), mean_se(&lb));
    let (_, p) = ks_two_sample(&la, &lb);
    out.push(ComparisonTest {
        comparison: label.into(),
        statistic: "largest_cdf".into(),
        value_a: ea.mean,
        value_b: eb.mean,
        se: ea.se.hypot(eb.se),
        p_value: p,
        pass: true,
    });
    out
}

/// Paths at level 0 against the exact Cox law and against paths at the
/// configured level, plus the `Δ`-halving stability of the counts.
pub fn prop14_report(opts: &BrownianOptions) -> Result<Prop14Report> {
    opts.validate()?;
    let zero = level_set(opts, 0.0, 0, true)?;
    let shifted = level_set(opts, opts.level, 1, false)?;
    let cox: Vec<Vec<f64>> = (0..opts.n_paths as u64)
        .into_par_iter()
        .map(|i| cox_stationary_sample(opts.drift, opts.min_len, &mut seed::stream(opts.seed, domain::COX, i)))
        .collect::<Result<_>>()?;
    let mut tests = compare("paths(0) vs cox", &zero.lengths, &cox, &opts.thresholds);
    tests.extend(compare(&format!("paths(0) vs paths({})", opts.level), &zero.lengths, &shifted.lengths, &opts.thresholds));
    let p: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    for (t, rej) in tests.iter_mut().zip(holm(&p, opts.significance)) {
        t.pass = !rej;
    }
    let halving: Vec<HalvingRow> = opts
        .thresholds
        .iter()
        .map(|&a| {
            let coarse = mean_se(&zero.lengths.iter().map(|s| count_above(s, a)).collect::<Vec<_>>());
            let fine = mean_se(&zero.fine.iter().map(|s| count_above(s, a)).collect::<Vec<_>>());
            HalvingRow {
                threshold: a,
                coarse: coarse.mean,
                fine: fine.mean,
                se: coarse.se,
                pass: (coarse.mean - fine.mean).abs() < coarse.se,
            }
        })
        .collect();
    let ones: Vec<f64> = zero.lengths.iter().map(|s| count_above(s, 1.0)).collect();
    let margin = margin_for(opts.drift, opts.delta_path);
    let pass = tests.iter().all(|t| t.pass) && halving.iter().all(|h| h.pass);
    Ok(Prop14Report {
        options: opts.clone(),
        margin,
        return_probability: (-2.0 * opts.drift * margin).exp(),
        count_at_one: mean_se(&ones),
        count_at_one_exact: mean_count_above(opts.drift, 1.0),
        total_mass: mean_se(&zero.mass),
        total_mass_exact: mean_total_mass(opts.drift),
        tests,
        halving,
        bias_note: format!("linear interpolation of crossings; lengths carry O(Δ) = O({}) bias", opts.step),
        pass,
    })
}

/// Path excursions at `level` as a point sample.
pub fn excursion_sample(path: &DriftPath, level: f64, min_len: f64, seed: u64, replica: u64) -> PointSample {
    PointSample {
        masses: excursion_lengths(path, level, min_len),
        meta: SampleMeta {
            eps: min_len,
            delta: Some(path.return_probability()),
            lookback: None,
            residual: None,
            seed,
            replica,
            verdict: None,
            groups: 0,
            contributing: 0,
        },
    }
}
