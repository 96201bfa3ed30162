//! Two-sample tests and a dictionary lower bound on the bounded-Lipschitz
//! distance between laws of point samples.

use rand::Rng;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{LabError, Result};
use crate::seed::{self, domain};
use crate::stats::Welford;

pub const MIN_TWO_SAMPLE: usize = 50;

/// Scalar summaries of a decreasing mass sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Statistic {
    LargestMass,
    CountAbove(f64),
    TotalAbove(f64),
}

impl Statistic {
    pub fn eval(&self, masses: &[f64]) -> f64 {
        match *self {
            Statistic::LargestMass => masses.iter().copied().fold(0.0, f64::max),
            Statistic::CountAbove(a) => masses.iter().filter(|&&m| m > a).count() as f64,
            Statistic::TotalAbove(a) => masses.iter().filter(|&&m| m > a).sum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Statistic::LargestMass => "largest_mass".into(),
            Statistic::CountAbove(a) => format!("count_above({a})"),
            Statistic::TotalAbove(a) => format!("total_above({a})"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoSampleReport {
    pub statistic: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub z: f64,
    pub p_value: f64,
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Mann–Whitney rank-sum test with tie correction and continuity
/// correction; returns `(z, two-sided p)`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_a = 0.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        rank_a += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let u = rank_a - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let nn = na + nb;
    let var = na * nb / 12.0 * ((nn + 1.0) - ties / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return (0.0, 1.0);
    }
    let dev = ((u - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt() * (u - mean).signum();
    (z, normal_two_sided(z))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Holm–Bonferroni step-down; `true` marks a rejected hypothesis.
pub fn holm(p_values: &[f64], level: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let m = p_values.len();
    let mut reject = vec![false; m];
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= level / (m - rank) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    reject
}

/// Rank-based comparison of one statistic over two lists of samples.
pub fn two_sample<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B], statistic: Statistic) -> Result<TwoSampleReport> {
    let need = MIN_TWO_SAMPLE;
    if a.len() < need || b.len() < need {
        return Err(LabError::TooFewSamples {
            need,
            got: a.len().min(b.len()),
        });
    }
    let xa: Vec<f64> = a.iter().map(|s| statistic.eval(s.as_ref())).collect();
    let xb: Vec<f64> = b.iter().map(|s| statistic.eval(s.as_ref())).collect();
    let (z, p) = mann_whitney(&xa, &xb);
    Ok(TwoSampleReport {
        statistic: statistic.name(),
        n_a: xa.len(),
        n_b: xb.len(),
        mean_a: xa.iter().sum::<f64>() / xa.len() as f64,
        mean_b: xb.iter().sum::<f64>() / xb.len() as f64,
        z,
        p_value: p,
    })
}

// ---------------------------------------------------------------------------
// Dictionary lower bound

/// `s ↦ clamp(Σ_{j≤K} a_j s_j + b, −1, 1)` with `Σ|a_j| ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipEntry {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl LipEntry {
    pub fn eval(&self, s: &[f64]) -> f64 {
        let v: f64 = self.coeffs.iter().zip(s).map(|(a, x)| a * x).sum::<f64>() + self.offset;
        v.clamp(-1.0, 1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LipDictionary {
    pub k: usize,
    pub entries: Vec<LipEntry>,
    pub seed: u64,
}

impl LipDictionary {
    /// `K = 8`, 256 random entries plus the curated ones.
    pub fn standard(seed: u64) -> Self {
        Self::new(8, 256, seed)
    }

    /// Curated entries `clamp(±s_j − θ)` on a threshold grid, followed by
    /// `n_random` random directions.
    pub fn new(k: usize, n_random: usize, seed: u64) -> Self {
        let mut entries = Vec::new();
        let thresholds = [0.0, 0.01, 0.03, 0.1, 0.3, 0.5, 1.0, 2.0, 4.0];
        for j in 0..k {
            for &th in &thresholds {
                let mut coeffs = vec![0.0; k];
                coeffs[j] = 1.0;
                entries.push(LipEntry { coeffs, offset: -th });
            }
        }
        for &th in &thresholds {
            entries.push(LipEntry {
                coeffs: vec![1.0 / k as f64; k],
                offset: -th,
            });
        }
        let mut rng = seed::stream(seed, domain::DICTIONARY, 0);
        for _ in 0..n_random {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let norm: f64 = raw.iter().map(|x| x.abs()).sum();
            let scale = 0.5 + 0.5 * rng.random::<f64>();
            let coeffs = raw.iter().map(|x| x / norm * scale).collect();
            let offset = rng.random::<f64>() * 2.0 - 1.0;
            entries.push(LipEntry { coeffs, offset });
        }
        Self { k, entries, seed }
    }

    /// Dictionary restricted to its first `n` entries.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            k: self.k,
            entries: self.entries[..n.min(self.entries.len())].to_vec(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlEstimate {
    pub value: f64,
    pub se: f64,
    pub entry: usize,
    /// Bias bound from comparing cutoff-truncated samples.
    pub truncation_bound: f64,
}

/// `max_f |mean_A f − mean_B f|` over the dictionary, with the
/// maximizer's standard error.
pub fn bl_lower<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B], dict: &LipDictionary, cutoff: f64) -> BlEstimate {
    let mut best = BlEstimate {
        value: 0.0,
        se: 0.0,
        entry: 0,
        truncation_bound: cutoff,
    };
    for (i, f) in dict.entries.iter().enumerate() {
        let wa: Welford = a.iter().map(|s| f.eval(s.as_ref())).collect();
        let wb: Welford = b.iter().map(|s| f.eval(s.as_ref())).collect();
        let d = (wa.mean() - wb.mean()).abs();
        if d > best.value || i == 0 {
            let (ea, eb) = (wa.estimate(), wb.estimate());
            best.value = d;
            best.se = (ea.se * ea.se + eb.se * eb.se).sqrt();
            best.entry = i;
        }
    }
    best
}

/// Same bound for coupled samples `(A_r, B_r)`; the standard error comes
/// from the paired differences.
pub fn bl_lower_paired<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B], dict: &LipDictionary, cutoff: f64) -> BlEstimate {
    assert_eq!(a.len(), b.len());
    let mut best = BlEstimate {
        value: 0.0,
        se: 0.0,
        entry: 0,
        truncation_bound: cutoff,
    };
    for (i, f) in dict.entries.iter().enumerate() {
        let w: Welford = a.iter().zip(b).map(|(x, y)| f.eval(x.as_ref()) - f.eval(y.as_ref())).collect();
        let d = w.mean().abs();
        if d > best.value || i == 0 {
            best.value = d;
            best.se = w.estimate().se;
            best.entry = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(seed: u64, n: usize, scale: f64) -> Vec<Vec<f64>> {
        let mut rng = seed::stream(seed, 0, 0);
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..5).map(|_| scale * rng.random::<f64>()).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                v
            })
            .collect()
    }

    #[test]
    fn identical_inputs_give_p_one() {
        let a = samples(1, 100, 1.0);
        for st in [Statistic::LargestMass, Statistic::CountAbove(0.5), Statistic::TotalAbove(0.2)] {
            let r = two_sample(&a, &a, st).unwrap();
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn doubled_masses_are_detected() {
        let a = samples(2, 500, 1.0);
        let b: Vec<Vec<f64>> = a.iter().map(|s| s.iter().map(|x| 2.0 * x).collect()).collect();
        let r = two_sample(&a, &b, Statistic::LargestMass).unwrap();
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn p_value_is_permutation_invariant() {
        let a = samples(3, 80, 1.0);
        let b = samples(4, 90, 1.1);
        let p1 = two_sample(&a, &b, Statistic::TotalAbove(0.1)).unwrap().p_value;
        let mut ar = a.clone();
        ar.reverse();
        let p2 = two_sample(&ar, &b, Statistic::TotalAbove(0.1)).unwrap().p_value;
        assert_eq!(p1, p2);
        assert!(two_sample(&a[..10], &b, Statistic::LargestMass).is_err());
    }

    #[test]
    fn holm_step_down() {
        assert_eq!(holm(&[0.001, 0.04, 0.03], 0.05), vec![true, false, false]);
        assert_eq!(holm(&[0.001, 0.02, 0.04], 0.05), vec![true, true, true]);
    }

    #[test]
    fn ks_detects_shift_and_accepts_equal() {
        let a: Vec<f64> = (0..400).map(|i| i as f64 / 400.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-3);
        assert!(ks_two_sample(&a, &a).1 > 0.99);
    }

    #[test]
    fn bl_lower_examples() {
        let dict = LipDictionary::standard(1);
        let a = samples(5, 200, 1.0);
        assert_eq!(bl_lower(&a, &a, &dict, 0.0).value, 0.0);
        let unit = vec![vec![1.0]];
        let zero: Vec<Vec<f64>> = vec![vec![]];
        let d = bl_lower(&unit, &zero, &dict, 0.0).value;
        assert!((1.0..=2.0).contains(&d));
        let b = samples(6, 200, 1.5);
        let small = bl_lower(&a, &b, &dict.prefix(40), 0.0).value;
        let big = bl_lower(&a, &b, &dict, 0.0).value;
        assert!(big >= small);
        assert_eq!(big, bl_lower(&b, &a, &dict, 0.0).value);
    }

    #[test]
    fn entries_are_bounded_and_lipschitz() {
        let dict = LipDictionary::standard(7);
        for e in &dict.entries {
            assert!(e.coeffs.iter().map(|a| a.abs()).sum::<f64>() <= 1.0 + 1e-12);
        }
    }
}
