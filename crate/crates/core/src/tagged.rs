//! The tagged fragment: a killed compound-Poisson subordinator `ξ` with
//! drift, observed through the self-similar time change `ρ`.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::families::DislocationSpec;
use crate::seed::{self, LabRng};
use crate::stats::{Estimate, Welford};

/// Beyond this value of `ξ` the mass `e^{−ξ}` underflows to zero.
pub const XI_CAP: f64 = 745.0;

/// Below this `|α|` the time change is the identity.
pub const ALPHA_ZERO: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SubordinatorSpec {
    pub killing_rate: f64,
    pub drift: f64,
    pub jump_rate: f64,
    #[serde(skip)]
    disl: DislocationSpec,
}

impl SubordinatorSpec {
    /// Decomposes `φ` into killing, drift and a finite jump part.
    pub fn from_dislocation(disl: &DislocationSpec) -> Result<Self> {
        disl.validate()?;
        disl.require_simulable()?;
        let mean_sum = match &disl.family {
            crate::families::DislocationFamily::DiscreteFinite { atoms } => {
                atoms.iter().map(|a| a.rate * a.fragments.iter().sum::<f64>()).sum::<f64>()
            }
            _ => disl.total_mass(),
        };
        Ok(Self {
            killing_rate: disl.erosion + disl.dislocation_loss(),
            drift: disl.erosion,
            jump_rate: mean_sum,
            disl: disl.clone(),
        })
    }

    pub fn dislocation(&self) -> &DislocationSpec {
        &self.disl
    }

    /// One jump size `−ln s_j`, with `s` drawn from `ν/ν(D₁)`, accepted with
    /// probability `Σ s_j`, and `j` picked with probability `s_j / Σ s`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<f64>) -> f64 {
        let lossless = self.disl.dislocation_loss() == 0.0;
        loop {
            self.disl.sample(rng, buf);
            let total: f64 = buf.iter().sum();
            if !lossless && rng.random::<f64>() >= total {
                continue;
            }
            let mut v = rng.random::<f64>() * total;
            for &s in buf.iter() {
                if v < s {
                    return -s.ln();
                }
                v -= s;
            }
            return -buf[buf.len() - 1].ln();
        }
    }
}

/// A stretch of `ξ` between jumps: `ξ(u) = xi0 + drift·(u − start)` on
/// `[start, end)`. When `killed`, `ξ = ∞` from `end` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub xi0: f64,
    pub killed: bool,
}

/// Lazily generated path of `ξ`.
pub struct PathWalker<'a, R: Rng> {
    spec: &'a SubordinatorSpec,
    rng: &'a mut R,
    buf: Vec<f64>,
    u: f64,
    xi: f64,
    kill_at: f64,
    next_jump: f64,
    done: bool,
}

impl<'a, R: Rng> PathWalker<'a, R> {
    pub fn new(spec: &'a SubordinatorSpec, rng: &'a mut R) -> Self {
        let kill_at = exp_time(rng, spec.killing_rate);
        let next_jump = exp_time(rng, spec.jump_rate);
        Self {
            spec,
            rng,
            buf: Vec::with_capacity(4),
            u: 0.0,
            xi: 0.0,
            kill_at,
            next_jump,
            done: false,
        }
    }

    pub fn drift(&self) -> f64 {
        self.spec.drift
    }

    /// The next segment, or `None` once the path was killed or ran off to
    /// an infinite segment.
    pub fn next_segment(&mut self) -> Option<Segment> {
        if self.done {
            return None;
        }
        let start = self.u;
        let xi0 = self.xi;
        if self.kill_at <= self.next_jump {
            self.done = true;
            return Some(Segment {
                start,
                end: self.kill_at,
                xi0,
                killed: true,
            });
        }
        let end = self.next_jump;
        if end.is_infinite() {
            self.done = true;
            return Some(Segment {
                start,
                end,
                xi0,
                killed: false,
            });
        }
        let jump = self.spec.sample_jump(self.rng, &mut self.buf);
        self.xi = xi0 + self.spec.drift * (end - start) + jump;
        self.u = end;
        self.next_jump = end + exp_time(self.rng, self.spec.jump_rate);
        Some(Segment {
            start,
            end,
            xi0,
            killed: false,
        })
    }
}

#[inline]
pub(crate) fn exp_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = rng.sample(Exp1);
        e / rate
    } else {
        f64::INFINITY
    }
}

/// `∫_0^len e^{k r} dr`, stable for small `k·len`.
#[inline]
pub(crate) fn exp_affine_integral(k: f64, len: f64) -> f64 {
    if len.is_infinite() {
        return if k < 0.0 { -1.0 / k } else { f64::INFINITY };
    }
    let x = k * len;
    if x == 0.0 {
        len
    } else {
        x.exp_m1() / k
    }
}

/// Solves `∫_0^Δ e^{k r} dr = target` for `Δ` (`None` if unreachable).
#[inline]
pub(crate) fn exp_affine_inverse(k: f64, target: f64) -> Option<f64> {
    if k == 0.0 {
        return Some(target);
    }
    let arg = k * target;
    if arg <= -1.0 {
        None
    } else {
        Some(arg.ln_1p() / k)
    }
}

/// `ξ(u)` at homogeneous time `u` (`∞` once killed).
pub fn sample_xi<R: Rng>(spec: &SubordinatorSpec, u: f64, rng: &mut R) -> f64 {
    let mut walker = PathWalker::new(spec, rng);
    while let Some(seg) = walker.next_segment() {
        if u < seg.end {
            return seg.xi0 + spec.drift * (u - seg.start);
        }
        if seg.killed {
            return f64::INFINITY;
        }
    }
    f64::INFINITY
}

/// Homogeneous time `ρ(v)` reached when the clock `∫_0^u e^{αξ}` hits `v`,
/// and the value of `ξ` there. `None` if the path dies first.
pub fn time_change<R: Rng>(walker: &mut PathWalker<'_, R>, alpha: f64, v: f64) -> Option<(f64, f64)> {
    let c = walker.drift();
    let k = alpha * c;
    let mut rem = v;
    while let Some(seg) = walker.next_segment() {
        if seg.xi0 > XI_CAP {
            return None;
        }
        let len = seg.end - seg.start;
        if alpha == 0.0 {
            // ρ is the identity; return `v` itself rather than a rebuilt sum
            if v < seg.end {
                return Some((v, seg.xi0 + c * (v - seg.start)));
            }
        } else if alpha.abs() < ALPHA_ZERO {
            if rem < len {
                return Some((seg.start + rem, seg.xi0 + c * rem));
            }
            rem -= len;
        } else {
            let scale = (alpha * seg.xi0).exp();
            let clock = scale * exp_affine_integral(k, len);
            if rem < clock {
                let dt = exp_affine_inverse(k, rem / scale)?;
                return Some((seg.start + dt, seg.xi0 + c * dt));
            }
            rem -= clock;
        }
        if seg.killed {
            return None;
        }
    }
    None
}

/// One draw of `λ(t) = exp(−ξ(ρ(t)))`, zero once killed or when `ρ(t) = ∞`.
pub fn sample_tagged_mass<R: Rng>(spec: &SubordinatorSpec, alpha: f64, t: f64, rng: &mut R) -> f64 {
    let mut walker = PathWalker::new(spec, rng);
    match time_change(&mut walker, alpha, t) {
        Some((_, xi)) => (-xi).exp(),
        None => 0.0,
    }
}

/// Replica-parallel Monte Carlo mean; replica `r` draws from stream
/// `(seed, domain, r)`, so the result does not depend on scheduling.
pub fn mc_mean<F>(n_reps: usize, seed: u64, domain: u64, f: F) -> Estimate
where
    F: Fn(&mut LabRng) -> f64 + Sync,
{
    use rayon::prelude::*;
    const CHUNK: usize = 4096;
    let chunks: Vec<Welford> = (0..n_reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut w = Welford::new();
            for r in c * CHUNK..((c + 1) * CHUNK).min(n_reps) {
                let mut rng = seed::stream(seed, domain, r as u64);
                w.push(f(&mut rng));
            }
            w
        })
        .collect();
    let mut total = Welford::new();
    for w in &chunks {
        total.merge(w);
    }
    total.estimate()
}

/// Estimates `E[Σ_k f(F_k(t))]` as the mean of `f(λ(t))/λ(t)`.
///
/// `f` is evaluated only on `(lo, hi)`. `lo = 0` is accepted for functions
/// with `f(x)/x` bounded near 0 (e.g. powers `x^p`, `p ≥ 1`).
pub fn intensity_estimate(
    spec: &SubordinatorSpec,
    alpha: f64,
    t: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    support: (f64, f64),
    n_reps: usize,
    seed: u64,
) -> Result<Estimate> {
    let (lo, hi) = support;
    if !(lo >= 0.0 && lo < hi) {
        return Err(invalid("support", "need 0 ≤ a < b"));
    }
    if n_reps < 2 {
        return Err(invalid("n_reps", "need at least 2 replicas"));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "must be nonnegative"));
    }
    Ok(mc_mean(n_reps, seed, seed::domain::TAGGED, |rng| {
        let m = sample_tagged_mass(spec, alpha, t, rng);
        if m > lo && m < hi {
            f(m) / m
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    fn binary() -> SubordinatorSpec {
        SubordinatorSpec::from_dislocation(&DislocationSpec::binary_uniform(0.0)).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let s = binary();
        assert_eq!((s.killing_rate, s.drift, s.jump_rate), (0.0, 0.0, 1.0));
        let s = SubordinatorSpec::from_dislocation(&DislocationSpec::binary_uniform(0.1)).unwrap();
        assert_eq!((s.killing_rate, s.drift, s.jump_rate), (0.1, 0.1, 1.0));
        let d = DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.5])], 0.0);
        let s = SubordinatorSpec::from_dislocation(&d).unwrap();
        assert_eq!((s.killing_rate, s.jump_rate), (0.0, 1.0));
        let mut rng = stream(1, 0, 0);
        let mut buf = Vec::new();
        for _ in 0..20 {
            assert_eq!(s.sample_jump(&mut rng, &mut buf), std::f64::consts::LN_2);
        }
        assert!(SubordinatorSpec::from_dislocation(&DislocationSpec::brownian_nu()).is_err());
    }

    #[test]
    fn phi_consistency_of_decomposition() {
        // k + drift q + jump_rate E[1 − e^{−qX}] = φ(q), with E by quadrature
        // over the binary size-biased law of s_j: density 2 on [0,1]·s
        let s = SubordinatorSpec::from_dislocation(&DislocationSpec::binary_uniform(0.3)).unwrap();
        for q in [0.0, 0.5, 1.0, 4.0] {
            let e = crate::quad::integrate(|x| 2.0 * x * (1.0 - x.powf(q)), 0.0, 1.0, Default::default()).value;
            let lhs = s.killing_rate + s.drift * q + s.jump_rate * e;
            assert!((lhs - s.dislocation().phi(q)).abs() < 1e-8);
        }
    }

    #[test]
    fn alpha_zero_is_identity_time_change() {
        let s = binary();
        let mut rng = stream(3, 0, 0);
        let mut w = PathWalker::new(&s, &mut rng);
        let t = 0.734_512_3;
        let (u, _) = time_change(&mut w, 0.0, t).unwrap();
        assert_eq!(u.to_bits(), t.to_bits());
    }

    #[test]
    fn deterministic_halving_before_and_after_first_jump() {
        let d = DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.5])], 0.0);
        let s = SubordinatorSpec::from_dislocation(&d).unwrap();
        let first_jump = {
            let mut rng = stream(9, 0, 0);
            let mut w = PathWalker::new(&s, &mut rng);
            w.next_segment().unwrap().end
        };
        // α = 1 at mass 1: the clock runs at rate 1 until the first jump
        let before = sample_tagged_mass(&s, 1.0, 0.999 * first_jump, &mut stream(9, 0, 0));
        let after = sample_tagged_mass(&s, 1.0, first_jump * 1.000_001, &mut stream(9, 0, 0));
        assert_eq!(before, 1.0);
        assert_eq!(after, 0.5);
    }

    #[test]
    fn monotone_along_a_shared_path() {
        let s = SubordinatorSpec::from_dislocation(&DislocationSpec::binary_uniform(0.2)).unwrap();
        for rep in 0..50 {
            let mut last = 1.0;
            for k in 0..30 {
                let t = 0.2 * k as f64;
                let m = sample_tagged_mass(&s, -0.7, t, &mut stream(5, 0, rep));
                assert!(m <= last);
                last = m;
            }
        }
    }

    #[test]
    fn erosion_without_jumps_matches_closed_decay() {
        // no jumps and no kill: drift-only path, λ(t) = (1 + αct)^{-1/α}
        let d = DislocationSpec::discrete(vec![(1e-300, vec![0.5])], 0.4);
        let mut s = SubordinatorSpec::from_dislocation(&d).unwrap();
        s.jump_rate = 0.0;
        s.killing_rate = 0.0;
        for (alpha, t) in [(1.0, 2.0), (-0.5, 1.5), (0.0, 3.0)] {
            let m = sample_tagged_mass(&s, alpha, t, &mut stream(1, 0, 0));
            let exact = if alpha == 0.0 {
                (-0.4 * t).exp()
            } else {
                (1.0f64 + alpha * 0.4 * t).powf(-1.0 / alpha)
            };
            assert!((m - exact).abs() < 1e-13, "alpha={alpha}: {m} vs {exact}");
        }
    }
}
