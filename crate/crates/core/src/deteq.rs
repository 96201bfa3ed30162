//! The deterministic fragmentation-with-immigration equation: transient
//! solutions through the tagged fragment, stationary moments and
//! densities, and the generator residual of the stationary solution.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::families::{DislocationFamily, DislocationSpec, ImmigrationFamily, ImmigrationSpec};
use crate::measure::{Bin, EstimateTag, MeasureEstimate, MomentValue};
use crate::quad::{integrate, integrate_to_inf, Tolerance};
use crate::seed::{self, domain, LabRng};
use crate::stats::{Estimate, Welford};
use crate::tagged::{exp_affine_integral, time_change, PathWalker, SubordinatorSpec};

const TOL: Tolerance = Tolerance::rel(1e-10);

/// Initial condition `μ₀` of the equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialMeasure {
    Zero,
    Dirac { mass: f64, weight: f64 },
    /// `total · rate · e^{−rate x} dx`.
    Exponential { rate: f64, total: f64 },
}

impl InitialMeasure {
    pub fn total(&self) -> f64 {
        match *self {
            InitialMeasure::Zero => 0.0,
            InitialMeasure::Dirac { weight, .. } => weight,
            InitialMeasure::Exponential { total, .. } => total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialMeasure::Zero => Ok(()),
            InitialMeasure::Dirac { mass, weight } => {
                if mass > 0.0 && mass.is_finite() && weight >= 0.0 && weight.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("mu0", "dirac needs a positive mass and a finite weight"))
                }
            }
            InitialMeasure::Exponential { rate, total } => {
                if rate > 0.0 && total >= 0.0 && total.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("mu0", "exponential needs rate > 0 and finite total"))
                }
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialMeasure::Zero => 0.0,
            InitialMeasure::Dirac { mass, .. } => mass,
            InitialMeasure::Exponential { rate, .. } => -(1.0 - rng.random::<f64>()).ln() / rate,
        }
    }

    /// `⟨μ₀, f⟩` for the observable.
    pub fn pair(&self, obs: &Observable) -> f64 {
        match *self {
            InitialMeasure::Zero => 0.0,
            InitialMeasure::Dirac { mass, weight } => weight * obs.eval(mass),
            InitialMeasure::Exponential { rate, total } => {
                let dens = |x: f64| total * rate * (-rate * x).exp();
                match *obs {
                    Observable::Power(p) => total * statrs::function::gamma::gamma(p + 1.0) / rate.powf(p),
                    Observable::Indicator(a, b) => integrate(dens, a, b, TOL).value,
                }
            }
        }
    }
}

/// Test functions of the transient solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Observable {
    Power(f64),
    /// `1{a ≤ x < b}`.
    Indicator(f64, f64),
}

impl Observable {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Power(p) => {
                if x > 0.0 {
                    x.powf(p)
                } else {
                    0.0
                }
            }
            Observable::Indicator(a, b) => f64::from(x >= a && x < b),
        }
    }
}

/// Which moment-type condition guarantees Radon solutions for the sign of `α`.
pub fn radon_assumption(alpha: f64, imm: &ImmigrationSpec, mu0: &InitialMeasure) -> Result<&'static str> {
    mu0.validate()?;
    // μ₀ families carry all moments, so only I can fail
    if alpha > 0.0 {
        if imm.power_moment(1.0).is_finite() {
            Ok("A1")
        } else {
            Err(LabError::AssumptionFailed {
                which: "A1",
                integral: "∫ Σ s_j I(ds)".into(),
            })
        }
    } else if alpha == 0.0 {
        // φ̄(1/ln s) ~ φ̄'(0⁺)/ln s for finite-mean subordinators, so the
        // condition is ∫ s / ln(s) 1{s ≥ 1} I(ds) < ∞
        let ok = match &imm.family {
            ImmigrationFamily::SinglePowerlaw { exponent, .. } => *exponent > 2.0,
            ImmigrationFamily::LogTail { .. } => false,
            _ => true,
        };
        if ok || imm.is_zero() {
            Ok("A2")
        } else {
            Err(LabError::AssumptionFailed {
                which: "A2",
                integral: "∫ Σ s_j φ̄(1/ln s_j) 1{s_j ≥ 1} I(ds)".into(),
            })
        }
    } else if imm.upper_power_finite(1.0 + alpha) {
        Ok("A3")
    } else {
        Err(LabError::AssumptionFailed {
            which: "A3",
            integral: "∫ Σ s_j^{1+α} 1{s_j ≥ 1} I(ds)".into(),
        })
    }
}

/// Replica-parallel vector Monte Carlo; replica `r` uses stream
/// `(seed, DETEQ, r)`.
fn mc_vector<F>(n_reps: usize, seed: u64, dim: usize, f: F) -> Vec<Estimate>
where
    F: Fn(&mut LabRng, &mut [f64]) + Sync,
{
    const CHUNK: usize = 1024;
    let parts: Vec<Vec<Welford>> = (0..n_reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Welford::new(); dim];
            let mut buf = vec![0.0; dim];
            for r in c * CHUNK..((c + 1) * CHUNK).min(n_reps) {
                let mut rng = seed::stream(seed, domain::DETEQ, r as u64);
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(&mut rng, &mut buf);
                for (w, &v) in acc.iter_mut().zip(&buf) {
                    w.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Welford::new(); dim];
    for part in &parts {
        for (t, w) in total.iter_mut().zip(part) {
            t.merge(w);
        }
    }
    total.iter().map(Welford::estimate).collect()
}

/// `⟨μ_t, f⟩` for each observable: the initial measure and the
/// immigration flux on `[0, t]` are pushed through the tagged fragment.
#[allow(clippy::too_many_arguments)]
pub fn mu_t_estimate(
    alpha: f64,
    disl: &DislocationSpec,
    imm: &ImmigrationSpec,
    mu0: &InitialMeasure,
    t: f64,
    observables: &[Observable],
    n_reps: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    radon_assumption(alpha, imm, mu0)?;
    let sub = SubordinatorSpec::from_dislocation(disl)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be finite and nonnegative"));
    }
    if n_reps < 2 {
        return Err(invalid("n_reps", "need at least 2 replicas"));
    }
    let rate = if imm.is_zero() { 0.0 } else { imm.total_rate_above(0.0) };
    if !rate.is_finite() {
        return Err(invalid("imm", "the transient solver needs a finite immigration rate"));
    }
    if t == 0.0 {
        return Ok(observables.iter().map(|o| Estimate::exact(mu0.pair(o))).collect());
    }
    let w0 = mu0.total();
    let flux = rate * t;
    Ok(mc_vector(n_reps, seed, observables.len(), |rng, out| {
        // f(x e^{−ξ(ρ(x^α t))}) e^{ξ(ρ(x^α t))}
        let push = |rng: &mut LabRng, x: f64, t: f64, w: f64, out: &mut [f64]| {
            let mut walker = PathWalker::new(&sub, rng);
            if let Some((_, xi)) = time_change(&mut walker, alpha, x.powf(alpha) * t) {
                let m = x * (-xi).exp();
                for (o, obs) in out.iter_mut().zip(observables) {
                    *o += w * obs.eval(m) * xi.exp();
                }
            }
        };
        if w0 > 0.0 {
            let x = mu0.sample(rng);
            push(rng, x, t, w0, out);
        }
        if flux > 0.0 {
            let u = t * rng.random::<f64>();
            let mut group = Vec::new();
            imm.sample_above(0.0, rng, &mut group);
            for &s in &group {
                push(rng, s, t - u, flux, out);
            }
        }
    }))
}

/// `∫ x^λ μ_stat(dx)`: closed form where finite, `+∞` on the divergence
/// set, `Indeterminate` where divergence is not implied.
pub fn mu_stat_moment(alpha: f64, disl: &DislocationSpec, imm: &ImmigrationSpec, lambda: f64) -> Result<f64> {
    imm.require_nonzero()?;
    disl.validate()?;
    let p = lambda - alpha;
    let q = p - 1.0;
    if q <= 0.0 {
        return if disl.phi(0.0) == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Err(LabError::Indeterminate(format!(
                "λ = {lambda} ≤ 1+α with φ(0) = {} > 0",
                disl.phi(0.0)
            )))
        };
    }
    let m = imm.power_moment(p);
    if !m.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(m / disl.phi(q))
}

/// The two explicit stationary densities.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ClosedForm {
    /// Binary uniform ν, no erosion, single-particle immigration density.
    BinaryClosed { alpha: f64, imm: ImmigrationSpec },
    /// Brownian ν and immigration with drift `d`; `α = −½` is the
    /// excursion process itself.
    BrownianClosed { alpha: f64, drift: f64 },
}

impl ClosedForm {
    pub fn binary(alpha: f64, imm: ImmigrationSpec) -> Result<Self> {
        imm.validate()?;
        if imm.density(1.0).is_none() {
            return Err(invalid("imm", "the binary closed form needs an immigration density"));
        }
        if !imm.power_moment(1.0).is_finite() {
            return Err(LabError::AssumptionFailed {
                which: "integrability",
                integral: "∫ Σ s_j I(ds)".into(),
            });
        }
        Ok(ClosedForm::BinaryClosed { alpha, imm })
    }

    pub fn brownian(drift: f64) -> Result<Self> {
        if !(drift > 0.0 && drift.is_finite()) {
            return Err(invalid("drift", "must be positive"));
        }
        Ok(ClosedForm::BrownianClosed { alpha: -0.5, drift })
    }

    /// Picks the closed form matching a configuration, if there is one.
    pub fn for_config(alpha: f64, disl: &DislocationSpec, imm: &ImmigrationSpec) -> Result<Self> {
        match (&disl.family, &imm.family) {
            (DislocationFamily::BinaryUniform, _) if disl.erosion == 0.0 => ClosedForm::binary(alpha, imm.clone()),
            (DislocationFamily::BrownianNu, ImmigrationFamily::BrownianI { drift }) if disl.erosion == 0.0 && imm.scale == 1.0 => {
                Ok(ClosedForm::BrownianClosed { alpha, drift: *drift })
            }
            _ => Err(LabError::Indeterminate(format!(
                "no closed-form stationary density for ({}, {})",
                disl.name(),
                imm.name()
            ))),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            ClosedForm::BinaryClosed { alpha, .. } | ClosedForm::BrownianClosed { alpha, .. } => alpha,
        }
    }

    pub fn dislocation(&self) -> DislocationSpec {
        match self {
            ClosedForm::BinaryClosed { .. } => DislocationSpec::binary_uniform(0.0),
            ClosedForm::BrownianClosed { .. } => DislocationSpec::brownian_nu(),
        }
    }

    pub fn immigration(&self) -> ImmigrationSpec {
        match self {
            ClosedForm::BinaryClosed { imm, .. } => imm.clone(),
            ClosedForm::BrownianClosed { drift, .. } => ImmigrationSpec::brownian(*drift),
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(LabError::Domain(format!("stationary density needs x > 0, got {x}")));
        }
        Ok(match self {
            ClosedForm::BinaryClosed { alpha, imm } => {
                let i = imm.density(x).unwrap_or(0.0);
                x.powf(-alpha) * i + 2.0 * x.powf(-alpha - 2.0) * imm.mass_rate_above(x)
            }
            ClosedForm::BrownianClosed { alpha, drift } => {
                let base = (-x * drift * drift / 2.0).exp() / (drift * (8.0 * PI * x.powi(3)).sqrt());
                base * x.powf(-alpha - 0.5)
            }
        })
    }

    /// `∫_a^b g(x) μ_stat(x) dx` by quadrature (`b` may be infinite).
    pub fn integrate(&self, g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let h = |x: f64| if x > 0.0 { g(x) * self.density(x).unwrap_or(0.0) } else { 0.0 };
        if b.is_infinite() {
            integrate_to_inf(h, a, TOL).value
        } else {
            integrate(h, a, b, TOL).value
        }
    }
}

pub fn mu_stat_density(form: &ClosedForm, x: f64) -> Result<f64> {
    form.density(x)
}

/// Budgets of the path-integral estimator of `μ_stat`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatOptions {
    pub edges: Vec<f64>,
    pub powers: Vec<f64>,
    pub n_reps: usize,
    /// Initial time truncation for the power moments; bins are exact.
    pub t_trunc: f64,
    pub max_doublings: usize,
    pub seed: u64,
}

impl StatOptions {
    pub fn new(n_reps: usize, seed: u64) -> Self {
        Self {
            edges: Vec::new(),
            powers: Vec::new(),
            n_reps,
            t_trunc: 8.0,
            max_doublings: 12,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatEstimate {
    pub measure: MeasureEstimate,
    pub t_trunc: f64,
    /// Expected contribution of times beyond `t_trunc`, per power.
    pub tail_bound: Vec<f64>,
}

/// `∫ ... e^{κξ(u)} du` over the part of one segment where `ξ ∈ [lo, hi)`
/// and `u < t_max`.
#[allow(clippy::too_many_arguments)]
fn segment_integral(u0: f64, u1: f64, xi0: f64, c: f64, kappa: f64, lo: f64, hi: f64, t_max: f64) -> f64 {
    let mut a = u0;
    let mut b = u1.min(t_max);
    if c > 0.0 {
        if lo > xi0 {
            a = a.max(u0 + (lo - xi0) / c);
        }
        b = b.min(u0 + (hi - xi0) / c);
    } else if xi0 < lo || xi0 >= hi {
        return 0.0;
    }
    if !(b > a) {
        return 0.0;
    }
    (kappa * (xi0 + c * (a - u0))).exp() * exp_affine_integral(kappa * c, b - a)
}

/// Path-integral estimate of `μ_stat` on bins and power moments:
/// `⟨μ_stat, g⟩ = ∫ Σ_j ∫_0^∞ E[g(s_j e^{−ξ}) (s_j e^{−ξ})^{−α} e^{ξ}] dt I(ds)`.
pub fn mu_stat_estimate(alpha: f64, disl: &DislocationSpec, imm: &ImmigrationSpec, opts: &StatOptions) -> Result<StatEstimate> {
    imm.require_nonzero()?;
    if !imm.power_moment(1.0).is_finite() {
        return Err(LabError::AssumptionFailed {
            which: "integrability",
            integral: "∫ Σ s_j I(ds)".into(),
        });
    }
    let sub = SubordinatorSpec::from_dislocation(disl)?;
    if opts.n_reps < 2 {
        return Err(invalid("n_reps", "need at least 2 replicas"));
    }
    if opts.edges.len() == 1 || opts.edges.windows(2).any(|w| !(w[0] < w[1])) || opts.edges.first().is_some_and(|&e| e <= 0.0) {
        return Err(invalid("edges", "need increasing positive bin edges"));
    }
    for &lam in &opts.powers {
        if !(lam - alpha > 1.0) || !imm.power_moment(lam - alpha).is_finite() {
            return Err(invalid("powers", format!("moment λ = {lam} is not finite")));
        }
    }
    if !(opts.t_trunc > 0.0) {
        return Err(invalid("t_trunc", "must be positive"));
    }
    // groups with s₁ below the lowest bin never reach a bin, so with bins
    // only the immigration can be restricted exactly
    let floor = if opts.powers.is_empty() { opts.edges.first().copied().unwrap_or(0.0) } else { 0.0 };
    let rate = imm.total_rate_above(floor);
    if !rate.is_finite() {
        return Err(invalid("imm", "power moments need a finite immigration rate"));
    }
    let c = sub.drift;
    let nb = opts.edges.len().saturating_sub(1);
    let np = opts.powers.len();
    let phis: Vec<f64> = opts.powers.iter().map(|&l| disl.phi(l - alpha - 1.0)).collect();
    let run = |t_trunc: f64| {
        mc_vector(opts.n_reps, opts.seed, nb + 2 * np, |rng, out| {
            let mut group = Vec::new();
            imm.sample_above(floor, rng, &mut group);
            for &s in &group {
                let stop = if nb > 0 { (s / opts.edges[0]).ln() } else { f64::NEG_INFINITY };
                let mut walker = PathWalker::new(&sub, rng);
                let mut xi_end = f64::INFINITY;
                while let Some(seg) = walker.next_segment() {
                    for (k, w) in opts.edges.windows(2).enumerate() {
                        let (lo, hi) = ((s / w[1]).ln(), (s / w[0]).ln());
                        out[k] += rate * s.powf(-alpha) * segment_integral(seg.start, seg.end, seg.xi0, c, 1.0 + alpha, lo, hi, f64::INFINITY);
                    }
                    for (k, &lam) in opts.powers.iter().enumerate() {
                        let p = lam - alpha;
                        out[nb + k] += rate
                            * s.powf(p)
                            * segment_integral(seg.start, seg.end, seg.xi0, c, 1.0 - p, f64::NEG_INFINITY, f64::INFINITY, t_trunc);
                    }
                    if seg.end > t_trunc && xi_end.is_infinite() && !seg.killed {
                        xi_end = seg.xi0 + c * (t_trunc - seg.start).max(0.0);
                    }
                    let past_bins = seg.xi0 >= stop;
                    let past_time = np == 0 || seg.end >= t_trunc;
                    if seg.killed || (past_bins && past_time) {
                        break;
                    }
                }
                // conditional mean of the remainder beyond t_trunc
                for (k, &lam) in opts.powers.iter().enumerate() {
                    let p = lam - alpha;
                    out[nb + np + k] += rate * s.powf(p) * ((1.0 - p) * xi_end).exp() / phis[k];
                }
            }
        })
    };
    let mut t_trunc = opts.t_trunc;
    let mut est = run(t_trunc);
    for _ in 0..opts.max_doublings {
        let fine = (0..np).all(|k| est[nb + np + k].mean <= 0.1 * est[nb + k].se);
        if fine {
            break;
        }
        t_trunc *= 2.0;
        est = run(t_trunc);
    }
    let mut measure = MeasureEstimate::empty(EstimateTag::SemiAnalytic);
    measure.bins = opts
        .edges
        .windows(2)
        .zip(&est)
        .map(|(w, e)| Bin {
            lo: w[0],
            hi: w[1],
            weight: e.mean,
            se: e.se,
        })
        .collect();
    measure.moments = opts
        .powers
        .iter()
        .zip(&est[nb..nb + np])
        .map(|(&p, e)| MomentValue { p, value: e.mean, se: e.se })
        .collect();
    Ok(StatEstimate {
        measure,
        t_trunc,
        tail_bound: est[nb + np..].iter().map(|e| e.mean).collect(),
    })
}

/// Smooth test function with compact support in `(0, ∞)`.
pub trait TestFunction: Sync {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn support(&self) -> (f64, f64);
}

/// `amp · exp(−1/(1 − z²))`, `z` the affine image of `x ∈ (a, b)` on `(−1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
    pub amp: f64,
}

impl Bump {
    pub fn new(a: f64, b: f64) -> Self {
        assert!(0.0 < a && a < b, "bump support must be (a, b) with 0 < a < b");
        Self { a, b, amp: 1.0 }
    }

    pub fn scaled(self, amp: f64) -> Self {
        Self { amp, ..self }
    }

    /// `(z, dz/dx, h(z), 1 − z²)` or `None` outside the support.
    fn parts(&self, x: f64) -> Option<(f64, f64, f64, f64)> {
        let k = 2.0 / (self.b - self.a);
        let z = k * x - (self.a + self.b) / (self.b - self.a);
        let w = 1.0 - z * z;
        (w > 0.0).then(|| (z, k, self.amp * (-1.0 / w).exp(), w))
    }
}

impl TestFunction for Bump {
    fn value(&self, x: f64) -> f64 {
        self.parts(x).map_or(0.0, |(_, _, h, _)| h)
    }

    fn d1(&self, x: f64) -> f64 {
        self.parts(x).map_or(0.0, |(z, k, h, w)| k * h * (-2.0 * z / (w * w)))
    }

    fn d2(&self, x: f64) -> f64 {
        self.parts(x).map_or(0.0, |(z, k, h, w)| {
            let first = 2.0 * z / (w * w);
            let second = (2.0 * w + 8.0 * z * z) / (w * w * w);
            k * k * h * (first * first - second)
        })
    }

    fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorResidual {
    /// `⟨μ_stat, Af⟩`.
    pub pairing: f64,
    /// `∫ Σ_j f(s_j) I(ds)`.
    pub immigration: f64,
    pub residual: f64,
}

impl GeneratorResidual {
    pub fn relative(&self) -> f64 {
        if self.immigration == 0.0 {
            self.residual.abs()
        } else {
            (self.residual / self.immigration).abs()
        }
    }
}

/// Jump part of the generator with the support of `f` exploited: for
/// `x` well beyond the support only small fragments can land in it.
fn jump_part(disl: &DislocationSpec, f: &dyn TestFunction, x: f64, tol: Tolerance) -> f64 {
    let (a, b) = f.support();
    if x <= a {
        return 0.0;
    }
    let g = |y: f64| f.value(y);
    match &disl.family {
        DislocationFamily::BinaryUniform => {
            // ∫_{1/2}^1 2[g(xs) + g(x(1−s))] ds = (2/x) ∫_0^x g
            let mass = integrate(g, a, x.min(b), tol).value;
            2.0 * mass / x - g(x)
        }
        DislocationFamily::BrownianNu if x > 2.0 * b => {
            // only s₂ = u ∈ (a/x, b/x) matters; density √(2/π)(u(1−u))^{-3/2}
            let k = (2.0 / PI).sqrt();
            integrate(|y| { let u = y / x; g(y) * k * (u * (1.0 - u)).powf(-1.5) / x }, a, b, tol).value
        }
        _ => disl.jump_generator(x, &g, &|y| f.d1(y), &|y| f.d2(y), tol),
    }
}

/// `⟨μ_stat, Af⟩ + ∫ Σ_j f(s_j) I(ds)` with the closed-form density, where
/// `Af(x) = x^α(−c x f′(x) + ∫[Σ_j f(x s_j) − f(x)] ν(ds))`.
pub fn generator_residual(form: &ClosedForm, f: &dyn TestFunction) -> GeneratorResidual {
    generator_residual_with(form, f, TOL)
}

pub fn generator_residual_with(form: &ClosedForm, f: &dyn TestFunction, tol: Tolerance) -> GeneratorResidual {
    let alpha = form.alpha();
    let disl = form.dislocation();
    let imm = form.immigration();
    let c = disl.erosion;
    let (a, b) = f.support();
    let af = |x: f64| {
        let drift = if c > 0.0 { -c * x * f.d1(x) } else { 0.0 };
        x.powf(alpha) * (drift + jump_part(&disl, f, x, tol)) * form.density(x).unwrap_or(0.0)
    };
    let pairing = integrate(af, a, b, tol).value + integrate(af, b, 2.0 * b, tol).value + integrate_to_inf(af, 2.0 * b, tol).value;
    let immigration = imm.integrate_sum(&|x| f.value(x), a, b, tol);
    GeneratorResidual {
        pairing,
        immigration,
        residual: pairing + immigration,
    }
}
