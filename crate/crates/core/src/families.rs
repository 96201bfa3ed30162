//! Dislocation and immigration measure families, their analytic
//! functionals, and the stationary-existence gate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{invalid, LabError, Result};
use crate::quad::{integrate, integrate_to_inf, Tolerance};

/// `√(2/π)`, the constant of the Brownian dislocation density.
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// `√(1/(2π))`, the constant of the Brownian immigration density.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const TOL: Tolerance = Tolerance::rel(1e-12);

// ---------------------------------------------------------------------------
// Dislocation measures

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DislocationAtom {
    pub rate: f64,
    pub fragments: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DislocationFamily {
    /// `s₁` uniform on `[1/2, 1]` with density 2, `s₂ = 1 − s₁`.
    BinaryUniform,
    /// The infinite measure `√(2/π) x^{-3/2}(1-x)^{-3/2} dx` on `[1/2, 1)`.
    BrownianNu,
    DiscreteFinite { atoms: Vec<DislocationAtom> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DislocationSpec {
    #[serde(flatten)]
    pub family: DislocationFamily,
    #[serde(rename = "c", default)]
    pub erosion: f64,
}

impl DislocationSpec {
    pub fn binary_uniform(erosion: f64) -> Self {
        Self {
            family: DislocationFamily::BinaryUniform,
            erosion,
        }
    }

    pub fn brownian_nu() -> Self {
        Self {
            family: DislocationFamily::BrownianNu,
            erosion: 0.0,
        }
    }

    pub fn discrete(atoms: Vec<(f64, Vec<f64>)>, erosion: f64) -> Self {
        Self {
            family: DislocationFamily::DiscreteFinite {
                atoms: atoms
                    .into_iter()
                    .map(|(rate, fragments)| DislocationAtom { rate, fragments })
                    .collect(),
            },
            erosion,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            DislocationFamily::BinaryUniform => "binary_uniform",
            DislocationFamily::BrownianNu => "brownian_nu",
            DislocationFamily::DiscreteFinite { .. } => "discrete_finite",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.erosion >= 0.0 && self.erosion.is_finite()) {
            return Err(invalid("dislocation.c", "erosion must be a finite nonnegative real"));
        }
        if let DislocationFamily::DiscreteFinite { atoms } = &self.family {
            if atoms.is_empty() {
                return Err(invalid("dislocation.atoms", "at least one atom is required"));
            }
            for (i, atom) in atoms.iter().enumerate() {
                if !(atom.rate > 0.0 && atom.rate.is_finite()) {
                    return Err(invalid("dislocation.atoms", format!("atom {i}: rate must be positive")));
                }
                let s = &atom.fragments;
                if s.is_empty() || s.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                    return Err(invalid("dislocation.atoms", format!("atom {i}: fragments must lie in (0,1]")));
                }
                if s.windows(2).any(|w| w[1] > w[0]) {
                    return Err(invalid("dislocation.atoms", format!("atom {i}: fragments must be decreasing")));
                }
                if s.iter().sum::<f64>() > 1.0 + 1e-12 {
                    return Err(invalid("dislocation.atoms", format!("atom {i}: fragment sum exceeds 1")));
                }
                if s[0] == 1.0 {
                    return Err(invalid("dislocation.atoms", format!("atom {i}: the trivial dislocation (1,0,...) is excluded")));
                }
            }
        }
        Ok(())
    }

    /// Finite total mass `ν(D₁)`, the prerequisite for event-driven simulation.
    pub fn simulable(&self) -> bool {
        !matches!(self.family, DislocationFamily::BrownianNu)
    }

    pub fn require_simulable(&self) -> Result<()> {
        if self.simulable() {
            Ok(())
        } else {
            Err(LabError::AnalyticOnly(self.name().into()))
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.family {
            DislocationFamily::BinaryUniform => 1.0,
            DislocationFamily::BrownianNu => f64::INFINITY,
            DislocationFamily::DiscreteFinite { atoms } => atoms.iter().map(|a| a.rate).sum(),
        }
    }

    /// `∫(1 − Σ s_j) ν(ds)`, the mass lost inside sudden dislocations.
    pub fn dislocation_loss(&self) -> f64 {
        match &self.family {
            DislocationFamily::DiscreteFinite { atoms } => atoms
                .iter()
                .map(|a| a.rate * (1.0 - a.fragments.iter().sum::<f64>()).max(0.0))
                .sum(),
            _ => 0.0,
        }
    }

    /// No erosion and no mass lost at dislocations.
    pub fn conservative(&self) -> bool {
        self.erosion == 0.0 && self.dislocation_loss() == 0.0
    }

    /// Laplace exponent `φ(q) = c(q+1) + ∫(1 − Σ s_j^{1+q}) ν(ds)`.
    ///
    /// Closed form for the binary and discrete families; the Brownian
    /// family goes through [`phi_brownian`].
    pub fn phi(&self, q: f64) -> f64 {
        let drift = self.erosion * (q + 1.0);
        match &self.family {
            DislocationFamily::BinaryUniform => drift + q / (q + 2.0),
            DislocationFamily::BrownianNu => drift + phi_brownian(q),
            DislocationFamily::DiscreteFinite { atoms } => {
                drift
                    + atoms
                        .iter()
                        .map(|a| a.rate * (1.0 - a.fragments.iter().map(|s| s.powf(1.0 + q)).sum::<f64>()))
                        .sum::<f64>()
            }
        }
    }

    /// `φ(q)` evaluated purely by quadrature of the dislocation density
    /// (exact sums for the discrete family).
    pub fn phi_by_quadrature(&self, q: f64) -> f64 {
        let drift = self.erosion * (q + 1.0);
        match &self.family {
            DislocationFamily::BinaryUniform => {
                let tol = Tolerance::rel(1e-13).with_abs(1e-15);
                drift
                    + integrate(
                        |x| 2.0 * (1.0 - x.powf(1.0 + q) - (1.0 - x).powf(1.0 + q)),
                        0.5,
                        1.0,
                        tol,
                    )
                    .value
            }
            _ => self.phi(q),
        }
    }

    /// Index `Γ` of the dust-time tail: `1/(1−λ)` when `φ(q) − cq` varies
    /// regularly with index `λ ∈ (0,1)`, else 1.
    pub fn dust_tail_exponent(&self) -> f64 {
        match self.family {
            // φ_B(q) ~ 2√2 q^{1/2}
            DislocationFamily::BrownianNu => 2.0,
            _ => 1.0,
        }
    }

    /// Draws a dislocation from `ν/ν(D₁)` into `out` (decreasing order).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match &self.family {
            DislocationFamily::BinaryUniform => {
                let s1 = 0.5 + 0.5 * rng.random::<f64>();
                out.push(s1);
                out.push(1.0 - s1);
            }
            DislocationFamily::BrownianNu => {
                panic!("brownian_nu has infinite total mass and cannot be sampled")
            }
            DislocationFamily::DiscreteFinite { atoms } => {
                let total: f64 = atoms.iter().map(|a| a.rate).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = &atoms[atoms.len() - 1];
                for a in atoms {
                    if u < a.rate {
                        pick = a;
                        break;
                    }
                    u -= a.rate;
                }
                out.extend_from_slice(&pick.fragments);
            }
        }
    }

    /// `∫[Σ_j g(x s_j) − g(x)] ν(ds)`, the jump part of the generator.
    ///
    /// `g1`/`g2` are the first two derivatives of `g`; they are only used
    /// for the Brownian family, where the integrand is expanded near the
    /// singular endpoint `s₁ → 1`.
    pub fn jump_generator(&self, x: f64, g: &dyn Fn(f64) -> f64, g1: &dyn Fn(f64) -> f64, g2: &dyn Fn(f64) -> f64, tol: Tolerance) -> f64 {
        let gx = g(x);
        match &self.family {
            DislocationFamily::BinaryUniform => integrate(|s| 2.0 * (g(x * s) + g(x * (1.0 - s)) - gx), 0.5, 1.0, tol).value,
            DislocationFamily::DiscreteFinite { atoms } => atoms
                .iter()
                .map(|a| a.rate * (a.fragments.iter().map(|&s| g(x * s)).sum::<f64>() - gx))
                .sum(),
            DislocationFamily::BrownianNu => {
                let (d1, d2) = (g1(x), g2(x));
                // u = 1 − s₁ = w²; the (1−u)^{-3/2} u^{-3/2} du density becomes
                // 2 (1−w²)^{-3/2} w^{-2} dw
                integrate(
                    |w| {
                        let u = w * w;
                        let big = if u < 1e-6 {
                            -x * u * d1 + 0.5 * (x * u) * (x * u) * d2
                        } else {
                            g(x * (1.0 - u)) - gx
                        };
                        2.0 * SQRT_2_OVER_PI * (big + g(x * u)) / ((1.0 - u).powf(1.5) * u)
                    },
                    0.0,
                    FRAC_1_SQRT_2,
                    tol,
                )
                .value
            }
        }
    }
}

/// `φ_B(q) = ∫(1 − s₁^{1+q} − s₂^{1+q}) ν_B(ds)` by quadrature.
///
/// Substituting `u = 1 − s₁ = w²` removes the endpoint singularity at
/// `s₁ = 1`; the remaining integrand is bounded on `(0, 1/√2]`.
pub fn phi_brownian(q: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    let tol = Tolerance::rel(1e-12);
    integrate(
        |w| {
            let u = w * w;
            let lead = -((1.0 + q) * (-u).ln_1p()).exp_m1(); // 1 − (1−u)^{1+q}
            let small = (q * u.ln()).exp(); // u^{1+q}/u
            2.0 * SQRT_2_OVER_PI * (lead / u - small) / (1.0 - u).powf(1.5)
        },
        0.0,
        FRAC_1_SQRT_2,
        tol,
    )
    .value
}

// ---------------------------------------------------------------------------
// Immigration measures

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmigrantGroup {
    pub rate: f64,
    pub fragments: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ImmigrationFamily {
    /// Single particles with density `λ e^{−λx}` (total rate 1).
    SingleExponential { rate: f64 },
    /// Single particles with Pareto density `(β−1) x_min^{β−1} x^{−β}` on
    /// `[x_min, ∞)` (total rate 1).
    SinglePowerlaw { exponent: f64, x_min: f64 },
    /// `√(1/(2π)) x^{-3/2} e^{−x d²/2} dx`, infinite total rate.
    #[serde(rename = "brownian_i")]
    BrownianI { drift: f64 },
    GroupDiscrete { groups: Vec<ImmigrantGroup> },
    /// Single particles with `I(s₁ > x) = (1 + ln(x/x_min))^{−κ}` for
    /// `x ≥ x_min`: no positive power moment, log moment finite iff `κ > 1`.
    LogTail { kappa: f64, x_min: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationSpec {
    #[serde(flatten)]
    pub family: ImmigrationFamily,
    /// Multiplier applied to the whole measure; 0 gives `I = 0`.
    #[serde(default = "one")]
    pub scale: f64,
}

/// The set `{λ : ∫ Σ s_j^λ I(ds) < ∞}` as an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentWindow {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl MomentWindow {
    fn open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            lo_closed: false,
            hi,
            hi_closed: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = x > self.lo || (self.lo_closed && x == self.lo);
        let below = x < self.hi || (self.hi_closed && x == self.hi);
        above && below
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ImmigrationReport {
    pub alpha_i: f64,
    pub lambda_sup: f64,
    pub moment_window: MomentWindow,
    pub h1_ok: bool,
    pub h1_divergent: Option<String>,
    pub total_rate_above: Vec<(f64, f64)>,
}

impl ImmigrationSpec {
    pub fn new(family: ImmigrationFamily) -> Self {
        Self { family, scale: 1.0 }
    }

    pub fn exponential(rate: f64) -> Self {
        Self::new(ImmigrationFamily::SingleExponential { rate })
    }

    pub fn powerlaw(exponent: f64, x_min: f64) -> Self {
        Self::new(ImmigrationFamily::SinglePowerlaw { exponent, x_min })
    }

    pub fn brownian(drift: f64) -> Self {
        Self::new(ImmigrationFamily::BrownianI { drift })
    }

    pub fn groups(groups: Vec<(f64, Vec<f64>)>) -> Self {
        Self::new(ImmigrationFamily::GroupDiscrete {
            groups: groups
                .into_iter()
                .map(|(rate, fragments)| ImmigrantGroup { rate, fragments })
                .collect(),
        })
    }

    pub fn log_tail(kappa: f64, x_min: f64) -> Self {
        Self::new(ImmigrationFamily::LogTail { kappa, x_min })
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            ImmigrationFamily::SingleExponential { .. } => "single_exponential",
            ImmigrationFamily::SinglePowerlaw { .. } => "single_powerlaw",
            ImmigrationFamily::BrownianI { .. } => "brownian_i",
            ImmigrationFamily::GroupDiscrete { .. } => "group_discrete",
            ImmigrationFamily::LogTail { .. } => "log_tail",
        }
    }

    pub fn is_zero(&self) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        match &self.family {
            ImmigrationFamily::GroupDiscrete { groups } => groups.iter().all(|g| g.rate == 0.0 || g.fragments.is_empty()),
            _ => false,
        }
    }

    /// Parameter sanity; (H1) is checked separately by [`Self::h1_divergence`].
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(invalid("immigration.scale", "must be a finite nonnegative real"));
        }
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(invalid("immigration.rate", "must be positive"))
            }
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => {
                if !(*x_min > 0.0 && x_min.is_finite()) {
                    Err(invalid("immigration.x_min", "must be positive"))
                } else if !exponent.is_finite() {
                    Err(invalid("immigration.exponent", "must be finite"))
                } else {
                    Ok(())
                }
            }
            ImmigrationFamily::BrownianI { drift } if !(*drift > 0.0 && drift.is_finite()) => {
                Err(invalid("immigration.drift", "d must be positive"))
            }
            ImmigrationFamily::GroupDiscrete { groups } => {
                for (i, g) in groups.iter().enumerate() {
                    if !(g.rate >= 0.0 && g.rate.is_finite()) {
                        return Err(invalid("immigration.groups", format!("group {i}: rate must be nonnegative")));
                    }
                    if g.fragments.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                        return Err(invalid("immigration.groups", format!("group {i}: masses must be positive")));
                    }
                    if g.fragments.windows(2).any(|w| w[1] > w[0]) {
                        return Err(invalid("immigration.groups", format!("group {i}: masses must be decreasing")));
                    }
                }
                Ok(())
            }
            ImmigrationFamily::LogTail { kappa, x_min } => {
                if !(*kappa > 0.0 && kappa.is_finite()) {
                    Err(invalid("immigration.kappa", "must be positive"))
                } else if !(*x_min > 0.0 && x_min.is_finite()) {
                    Err(invalid("immigration.x_min", "must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Names the diverging integral when (H1) fails.
    pub fn h1_divergence(&self) -> Option<String> {
        match &self.family {
            ImmigrationFamily::SinglePowerlaw { exponent, .. } if *exponent <= 1.0 => {
                Some(format!("∫ (x∧1) x^(-{exponent}) dx over [x_min, ∞)"))
            }
            _ => None,
        }
    }

    pub fn require_h1(&self) -> Result<()> {
        self.validate()?;
        match self.h1_divergence() {
            Some(name) => Err(LabError::H1Violated(name)),
            None => Ok(()),
        }
    }

    pub fn require_nonzero(&self) -> Result<()> {
        if self.is_zero() {
            Err(LabError::DegenerateImmigration)
        } else {
            Ok(())
        }
    }

    /// `α_I = −sup{a > 0 : ∫ s₁^a 1{s₁≥1} I(ds) < ∞}`.
    pub fn alpha_i(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        match &self.family {
            ImmigrationFamily::SinglePowerlaw { exponent, .. } => 1.0 - exponent,
            ImmigrationFamily::LogTail { .. } => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    /// The set of `λ` with `∫ Σ s_j^λ I(ds) < ∞`.
    pub fn moment_window(&self) -> MomentWindow {
        let all = MomentWindow::open(f64::NEG_INFINITY, f64::INFINITY);
        if self.is_zero() {
            return all;
        }
        match &self.family {
            ImmigrationFamily::SingleExponential { .. } => MomentWindow::open(-1.0, f64::INFINITY),
            ImmigrationFamily::SinglePowerlaw { exponent, .. } => MomentWindow::open(f64::NEG_INFINITY, exponent - 1.0),
            ImmigrationFamily::BrownianI { .. } => MomentWindow::open(0.5, f64::INFINITY),
            ImmigrationFamily::GroupDiscrete { .. } => all,
            ImmigrationFamily::LogTail { .. } => MomentWindow {
                lo: f64::NEG_INFINITY,
                lo_closed: false,
                hi: 0.0,
                hi_closed: true,
            },
        }
    }

    pub fn lambda_sup(&self) -> f64 {
        self.moment_window().hi
    }

    /// `∫ Σ_j s_j^λ I(ds)`, `+∞` outside the moment window.
    pub fn power_moment(&self, lambda: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if !self.moment_window().contains(lambda) {
            return f64::INFINITY;
        }
        let k = self.scale;
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } => k * gamma(lambda + 1.0) / rate.powf(lambda),
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => {
                k * (exponent - 1.0) * x_min.powf(lambda) / (exponent - 1.0 - lambda)
            }
            ImmigrationFamily::BrownianI { drift } => {
                let b = 0.5 * drift * drift;
                k * INV_SQRT_2PI * gamma(lambda - 0.5) * b.powf(0.5 - lambda)
            }
            ImmigrationFamily::GroupDiscrete { groups } => {
                k * groups
                    .iter()
                    .map(|g| g.rate * g.fragments.iter().map(|s| s.powf(lambda)).sum::<f64>())
                    .sum::<f64>()
            }
            ImmigrationFamily::LogTail { kappa, x_min } => {
                if lambda == 0.0 {
                    return k;
                }
                // X = x_min e^Y with P(Y > y) = (1+y)^{-κ}
                let m = integrate_to_inf(|y| (lambda * y).exp() * kappa * (1.0 + y).powf(-kappa - 1.0), 0.0, TOL).value;
                k * x_min.powf(lambda) * m
            }
        }
    }

    /// Whether `∫ Σ_j s_j^a 1{s_j ≥ 1} I(ds) < ∞` (`a ≥ 0`). The single
    /// particle families make the `Σ_j` and `s₁` versions coincide.
    pub fn upper_power_finite(&self, a: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        match &self.family {
            ImmigrationFamily::SinglePowerlaw { exponent, .. } => a < exponent - 1.0,
            ImmigrationFamily::LogTail { .. } => a <= 0.0,
            _ => true,
        }
    }

    /// Whether `∫ s₁^a ln(s₁) 1{s₁ ≥ 1} I(ds) < ∞` (`a ≥ 0`).
    pub fn upper_power_log_finite(&self, a: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        match &self.family {
            ImmigrationFamily::SinglePowerlaw { exponent, .. } => a < exponent - 1.0,
            ImmigrationFamily::LogTail { kappa, .. } => a <= 0.0 && *kappa > 1.0,
            _ => true,
        }
    }

    /// Whether `∫ Σ_j s_j^a 1{s_j ≤ 1} I(ds) < ∞`.
    pub fn lower_power_finite(&self, a: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        match &self.family {
            ImmigrationFamily::SingleExponential { .. } => a > -1.0,
            ImmigrationFamily::BrownianI { .. } => a > 0.5,
            _ => true,
        }
    }

    /// `I({s : s₁ > x})`.
    pub fn total_rate_above(&self, x: f64) -> f64 {
        let k = self.scale;
        if k == 0.0 {
            return 0.0;
        }
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } => k * (-rate * x.max(0.0)).exp(),
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => {
                if x <= *x_min {
                    k
                } else {
                    k * (x / x_min).powf(1.0 - exponent)
                }
            }
            ImmigrationFamily::BrownianI { drift } => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    k * INV_SQRT_2PI * brownian_tail_integral(0.5 * drift * drift, x)
                }
            }
            ImmigrationFamily::GroupDiscrete { groups } => {
                k * groups
                    .iter()
                    .filter(|g| g.fragments.first().is_some_and(|&s| s > x))
                    .map(|g| g.rate)
                    .sum::<f64>()
            }
            ImmigrationFamily::LogTail { kappa, x_min } => {
                if x <= *x_min {
                    k
                } else {
                    k * (1.0 + (x / x_min).ln()).powf(-kappa)
                }
            }
        }
    }

    /// Density of the single-particle families, `None` for groups.
    pub fn density(&self, x: f64) -> Option<f64> {
        let k = self.scale;
        if x <= 0.0 {
            return Some(0.0);
        }
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } => Some(k * rate * (-rate * x).exp()),
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => Some(if x < *x_min {
                0.0
            } else {
                k * (exponent - 1.0) * x_min.powf(exponent - 1.0) * x.powf(-exponent)
            }),
            ImmigrationFamily::BrownianI { drift } => Some(k * INV_SQRT_2PI * x.powf(-1.5) * (-0.5 * drift * drift * x).exp()),
            ImmigrationFamily::GroupDiscrete { .. } => None,
            ImmigrationFamily::LogTail { kappa, x_min } => Some(if x < *x_min {
                0.0
            } else {
                k * kappa * (1.0 + (x / x_min).ln()).powf(-kappa - 1.0) / x
            }),
        }
    }

    /// `∫_x^∞ y i(y) dy`, the immigrated mass rate carried by particles above `x`.
    pub fn mass_rate_above(&self, x: f64) -> f64 {
        let k = self.scale;
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } => k * (x + 1.0 / rate) * (-rate * x).exp(),
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => {
                if *exponent <= 2.0 {
                    f64::INFINITY
                } else {
                    let from = x.max(*x_min);
                    k * (exponent - 1.0) * x_min.powf(exponent - 1.0) * from.powf(2.0 - exponent) / (exponent - 2.0)
                }
            }
            ImmigrationFamily::BrownianI { drift } => {
                let b = 0.5 * drift * drift;
                k * INV_SQRT_2PI * (PI / b).sqrt() * erfc((b * x).sqrt())
            }
            ImmigrationFamily::GroupDiscrete { groups } => {
                k * groups
                    .iter()
                    .map(|g| g.rate * g.fragments.iter().filter(|&&s| s > x).sum::<f64>())
                    .sum::<f64>()
            }
            ImmigrationFamily::LogTail { .. } => f64::INFINITY,
        }
    }

    /// `∫ Σ_j f(s_j) I(ds)` for `f` supported in `[lo, hi]`.
    pub fn integrate_sum(&self, f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: Tolerance) -> f64 {
        match &self.family {
            ImmigrationFamily::GroupDiscrete { groups } => {
                self.scale
                    * groups
                        .iter()
                        .map(|g| g.rate * g.fragments.iter().map(|&s| f(s)).sum::<f64>())
                        .sum::<f64>()
            }
            _ => integrate(|x| f(x) * self.density(x).unwrap_or(0.0), lo, hi, tol).value,
        }
    }

    /// Draws one immigrant group from `I` restricted to `{s₁ > eps}` and
    /// normalized. Requires `total_rate_above(eps) > 0`.
    pub fn sample_above<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        match &self.family {
            ImmigrationFamily::SingleExponential { rate } => out.push(eps.max(0.0) - u.ln() / rate),
            ImmigrationFamily::SinglePowerlaw { exponent, x_min } => {
                out.push(eps.max(*x_min) * u.powf(-1.0 / (exponent - 1.0)));
            }
            ImmigrationFamily::BrownianI { drift } => {
                let b = 0.5 * drift * drift;
                out.push(brownian_tail_inverse(b, eps, u));
            }
            ImmigrationFamily::GroupDiscrete { groups } => {
                let eligible = || groups.iter().filter(|g| g.fragments.first().is_some_and(|&s| s > eps));
                let total: f64 = eligible().map(|g| g.rate).sum();
                let mut v = (1.0 - u) * total;
                let mut pick = None;
                for g in eligible() {
                    pick = Some(g);
                    if v < g.rate {
                        break;
                    }
                    v -= g.rate;
                }
                if let Some(g) = pick {
                    out.extend_from_slice(&g.fragments);
                }
            }
            ImmigrationFamily::LogTail { kappa, x_min } => {
                let x0 = eps.max(*x_min);
                let y0 = 1.0 + (x0 / x_min).ln();
                out.push(x_min * (y0 * u.powf(-1.0 / kappa) - 1.0).exp());
            }
        }
    }

    pub fn report(&self, eps_grid: &[f64]) -> ImmigrationReport {
        let h1 = self.h1_divergence();
        ImmigrationReport {
            alpha_i: self.alpha_i(),
            lambda_sup: self.lambda_sup(),
            moment_window: self.moment_window(),
            h1_ok: h1.is_none(),
            h1_divergent: h1,
            total_rate_above: eps_grid.iter().map(|&e| (e, self.total_rate_above(e))).collect(),
        }
    }
}

/// `G(x) = ∫_x^∞ y^{-3/2} e^{-b y} dy = 2x^{-1/2} e^{-bx} − 2√(πb) erfc(√(bx))`.
///
/// For large `bx` the two terms cancel, so the bracket is replaced by its
/// asymptotic series.
pub fn brownian_tail_integral(b: f64, x: f64) -> f64 {
    let z2 = b * x;
    let z = z2.sqrt();
    let bracket = if z < 5.0 {
        1.0 - PI.sqrt() * z * (z2).exp() * erfc(z)
    } else {
        // 1 − √π z e^{z²} erfc(z) = Σ_{k≥1} (−1)^{k+1} (2k−1)!! / (2z²)^k
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..40 {
            let next = term * (2 * k - 1) as f64 / (2.0 * z2);
            if k > 1 && next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += if k % 2 == 1 { term } else { -term };
        }
        sum
    };
    2.0 * x.powf(-0.5) * (-z2).exp() * bracket
}

/// Solves `G(x) = u·G(eps)` for `x ≥ eps`, i.e. samples the normalized
/// `y^{-3/2} e^{-by}` law on `[eps, ∞)` from a uniform `u ∈ (0,1]`.
pub fn brownian_tail_inverse(b: f64, eps: f64, u: f64) -> f64 {
    let target = (u * brownian_tail_integral(b, eps)).ln();
    let f = |y: f64| brownian_tail_integral(b, y.exp()).ln() - target;
    let mut lo = eps.ln();
    if f(lo) <= 0.0 {
        return eps;
    }
    let mut hi = lo + 1.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi += 2.0;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let x = y.exp();
        let g = brownian_tail_integral(b, x);
        let val = g.ln() - target;
        if val > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        // d ln G / dy = −x·x^{-3/2} e^{-bx} / G
        let slope = -x.powf(-0.5) * (-b * x).exp() / g;
        let mut next = y - val / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() < 1e-14 * (1.0 + y.abs()) {
            y = next;
            break;
        }
        y = next;
    }
    y.exp()
}

// ---------------------------------------------------------------------------
// Existence gate

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Existence {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for Existence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Existence::Yes => "yes",
            Existence::No => "no",
            Existence::Unknown => "unknown",
        })
    }
}

/// User-declared hypotheses; `None` means undeclared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    #[serde(default)]
    pub h2: Option<bool>,
    #[serde(default)]
    pub h3: Option<bool>,
    #[serde(default)]
    pub h4: Option<bool>,
}

impl HypothesisFlags {
    /// Fills undeclared flags with the per-family defaults.
    pub fn resolved(self, disl: &DislocationSpec) -> Self {
        let conservative = disl.conservative();
        let (h2, h3) = match disl.family {
            DislocationFamily::BinaryUniform => (Some(conservative), Some(conservative)),
            DislocationFamily::BrownianNu => (Some(conservative), None),
            DislocationFamily::DiscreteFinite { .. } => (None, None),
        };
        Self {
            h2: self.h2.or(h2),
            h3: self.h3.or(h3),
            h4: self.h4,
        }
    }
}

/// Interval of exponents `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentRange {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl ExponentRange {
    pub fn contains(&self, p: f64) -> bool {
        let lo = if self.lo_closed { p >= self.lo } else { p > self.lo };
        let hi = if self.hi_closed { p <= self.hi } else { p < self.hi };
        lo && hi
    }
}

impl fmt::Display for ExponentRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, false) => write!(f, "p {} {}", if self.lo_closed { "≥" } else { ">" }, self.lo),
            (false, true) => write!(f, "p {} {}", if self.hi_closed { "≤" } else { "<" }, self.hi),
            (true, true) if self.lo == self.hi => write!(f, "p = {}", self.lo),
            _ => write!(
                f,
                "p ∈ {}{}, {}{}",
                if self.lo_closed { "[" } else { "(" },
                self.lo,
                self.hi,
                if self.hi_closed { "]" } else { ")" }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpClaim {
    pub exponents: ExponentRange,
    /// `true`: U_stat ∈ l^p a.s. for every p in range; `false`: U_stat ∉ l^p a.s.
    pub member: bool,
}

impl fmt::Display for LpClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} l^p for {}", if self.member { "in" } else { "not in" }, self.exponents)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GateVerdict {
    pub exists: Existence,
    pub reasons: Vec<String>,
    pub alpha_i: f64,
    pub lambda_sup: f64,
    pub lp_membership: Vec<LpClaim>,
    pub hypothesis_flags: HypothesisFlags,
}

fn above(lo: f64) -> ExponentRange {
    ExponentRange {
        lo,
        lo_closed: false,
        hi: f64::INFINITY,
        hi_closed: false,
    }
}

fn below(hi: f64, closed: bool) -> ExponentRange {
    ExponentRange {
        lo: f64::NEG_INFINITY,
        lo_closed: false,
        hi,
        hi_closed: closed,
    }
}

/// Decides existence of a stationary law from the analytic tail integrals
/// of `imm` and the sign of `alpha`.
pub fn stationarity_gate(alpha: f64, disl: &DislocationSpec, imm: &ImmigrationSpec, flags: HypothesisFlags) -> GateVerdict {
    let flags = flags.resolved(disl);
    let alpha_i = imm.alpha_i();
    let mut v = GateVerdict {
        exists: Existence::Unknown,
        reasons: Vec::new(),
        alpha_i,
        lambda_sup: imm.lambda_sup(),
        lp_membership: Vec::new(),
        hypothesis_flags: flags,
    };
    if imm.is_zero() {
        v.reasons.push("I = 0 is excluded".into());
        return v;
    }
    if let Some(name) = imm.h1_divergence() {
        v.reasons.push(format!("(H1) fails: {name} diverges"));
        return v;
    }
    if alpha_i.is_finite() && alpha == alpha_i && alpha != 0.0 {
        v.reasons.push(format!("critical case alpha = alpha_I = {alpha_i} is not resolved"));
        return v;
    }

    if alpha < 0.0 {
        let a = -alpha;
        if !imm.upper_power_finite(a) {
            v.exists = Existence::No;
            v.reasons.push(format!("negative index: ∫ s1^{a} 1{{s1≥1}} I(ds) = ∞"));
        } else {
            v.exists = Existence::Yes;
            v.reasons.push(format!("negative index: ∫ Σ s_j^{a} 1{{s_j≥1}} I(ds) < ∞"));
            v.lp_membership.push(LpClaim {
                exponents: above(1.0 + alpha),
                member: true,
            });
        }
    } else if alpha == 0.0 {
        if imm.upper_power_log_finite(0.0) {
            v.exists = Existence::Yes;
            v.reasons.push("zero index: ∫ ln s1 1{s1≥1} I(ds) < ∞".into());
            v.lp_membership.push(LpClaim {
                exponents: above(1.0),
                member: true,
            });
            if disl.conservative() {
                v.reasons.push("c = 0 and ν conservative: U_stat ∉ l^1".into());
                v.lp_membership.push(LpClaim {
                    exponents: below(1.0, true),
                    member: false,
                });
            }
        } else {
            match flags.h2 {
                Some(true) => {
                    v.exists = Existence::No;
                    v.reasons.push("zero index: ∫ ln s1 1{s1≥1} I(ds) = ∞ and (H2) holds".into());
                }
                Some(false) => v.reasons.push("zero index: log integral diverges but (H2) is declared false".into()),
                None => v.reasons.push("zero index: log integral diverges; (H2) undeclared".into()),
            }
        }
    } else {
        // sup of γ with ∫ Σ s_j^γ 1{s_j≥1} I < ∞
        let gamma_sup = (-alpha_i).max(0.0);
        if gamma_sup == 0.0 && !imm.upper_power_finite(f64::MIN_POSITIVE) {
            v.reasons.push("positive index: no positive moment of the upper tail is finite".into());
            return v;
        }
        v.exists = Existence::Yes;
        let g = gamma_sup.min(1.0);
        v.reasons.push(format!("positive index: ∫ Σ s_j^γ 1{{s_j≥1}} I(ds) < ∞ for γ < {gamma_sup}"));
        v.lp_membership.push(LpClaim {
            exponents: above(1.0 + alpha / g),
            member: true,
        });
        match flags.h3 {
            Some(true) => {
                if gamma_sup < 1.0 {
                    v.reasons.push(format!("(H3): ∫ s1^γ 1{{s1≥1}} I(ds) = ∞ for γ > {gamma_sup}"));
                    v.lp_membership.push(LpClaim {
                        exponents: below(1.0 + alpha / gamma_sup, false),
                        member: false,
                    });
                } else {
                    v.reasons.push("(H3): U_stat ∉ l^(1+α)".into());
                    v.lp_membership.push(LpClaim {
                        exponents: below(1.0 + alpha, true),
                        member: false,
                    });
                }
            }
            _ => v.reasons.push("(H3) not declared true: non-membership statements withheld".into()),
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    fn phi_b_closed(q: f64) -> f64 {
        // Γ(q+½)/Γ(q+1); the difference of log-gammas loses digits for large q
        let ratio = if q < 1e3 {
            (ln_gamma(q + 0.5) - ln_gamma(q + 1.0)).exp()
        } else {
            let r = 1.0 / q;
            q.powf(-0.5) * (1.0 - r / 8.0 + r * r / 128.0 + 5.0 * r.powi(3) / 1024.0 - 21.0 * r.powi(4) / 32768.0)
        };
        2.0 * 2f64.sqrt() * q * ratio
    }

    #[test]
    fn binary_phi_matches_quadrature() {
        let d = DislocationSpec::binary_uniform(0.0);
        for q in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            assert!((d.phi_by_quadrature(q) - q / (q + 2.0)).abs() < 1e-10, "q={q}");
        }
    }

    #[test]
    fn brownian_phi_against_gamma_form() {
        for q in [0.25, 0.5, 1.0, 3.0, 10.0, 1e3, 1e6] {
            let exact = phi_b_closed(q);
            assert!(((phi_brownian(q) - exact) / exact).abs() < 1e-10, "q={q}");
        }
        assert!((phi_brownian(1.0) - (2.0 * PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn erosion_enters_affinely() {
        let d = DislocationSpec::binary_uniform(0.1);
        assert!((d.phi(0.0) - 0.1).abs() < 1e-15);
        assert!((d.phi(1.0) - (0.2 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn discrete_validation() {
        assert!(DislocationSpec::discrete(vec![(1.0, vec![1.0])], 0.0).validate().is_err());
        assert!(DislocationSpec::discrete(vec![(1.0, vec![0.3, 0.5])], 0.0).validate().is_err());
        assert!(DislocationSpec::discrete(vec![(1.0, vec![0.6, 0.5])], 0.0).validate().is_err());
        assert!(DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.5])], 0.0).validate().is_ok());
    }

    #[test]
    fn report_examples() {
        let e = ImmigrationSpec::exponential(1.0).report(&[]);
        assert_eq!(e.alpha_i, f64::NEG_INFINITY);
        assert_eq!(e.lambda_sup, f64::INFINITY);
        assert!(e.h1_ok);
        assert_eq!(ImmigrationSpec::powerlaw(2.5, 1.0).alpha_i(), -1.5);
        let b = ImmigrationSpec::brownian(1.0);
        assert!(!b.moment_window().contains(0.5) && b.moment_window().contains(0.51));
        assert!(b.total_rate_above(1e-8) > b.total_rate_above(1e-4));
        let bad = ImmigrationSpec::powerlaw(1.0, 1.0).report(&[]);
        assert!(!bad.h1_ok && bad.h1_divergent.is_some());
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        for (b, x) in [(0.5, 1.0), (0.5, 1e-4), (2.0, 30.0), (0.5, 200.0)] {
            let q = integrate_to_inf(|y| y.powf(-1.5) * (-b * y).exp(), x, Tolerance::rel(1e-12)).value;
            let g = brownian_tail_integral(b, x);
            assert!(((g - q) / q).abs() < 1e-8, "b={b} x={x}: {g} vs {q}");
        }
    }

    #[test]
    fn tail_inverse_roundtrip() {
        for u in [1.0, 0.7, 0.1, 1e-6] {
            let x = brownian_tail_inverse(0.5, 0.01, u);
            let ratio = brownian_tail_integral(0.5, x) / brownian_tail_integral(0.5, 0.01);
            assert!((ratio - u).abs() < 1e-9 * u.max(1e-3), "u={u} ratio={ratio}");
        }
    }

    #[test]
    fn moments_match_quadrature() {
        let cases = [
            (ImmigrationSpec::exponential(2.0), 1.5),
            (ImmigrationSpec::powerlaw(3.5, 1.0), 2.0),
            (ImmigrationSpec::brownian(1.3), 1.0),
            (ImmigrationSpec::log_tail(2.0, 1.0), -0.5),
        ];
        for (imm, lam) in cases {
            let q = integrate_to_inf(|x| x.powf(lam) * imm.density(x).unwrap(), 0.0, Tolerance::rel(1e-11)).value;
            let m = imm.power_moment(lam);
            assert!(((m - q) / q).abs() < 1e-6, "{}: {m} vs {q}", imm.name());
        }
        assert_eq!(ImmigrationSpec::powerlaw(2.5, 1.0).power_moment(1.5), f64::INFINITY);
    }

    #[test]
    fn gate_examples() {
        let bin = DislocationSpec::binary_uniform(0.0);
        let f = HypothesisFlags::default();
        let pl = ImmigrationSpec::powerlaw(2.5, 1.0);
        let yes = stationarity_gate(-1.0, &bin, &pl, f);
        assert_eq!(yes.exists, Existence::Yes);
        assert_eq!(yes.lp_membership[0].to_string(), "in l^p for p > 0");
        assert_eq!(stationarity_gate(-2.0, &bin, &pl, f).exists, Existence::No);
        assert_eq!(stationarity_gate(-1.5, &bin, &pl, f).exists, Existence::Unknown);
        let v = stationarity_gate(0.0, &bin, &ImmigrationSpec::exponential(1.0), HypothesisFlags { h2: Some(true), ..f });
        assert_eq!(v.exists, Existence::Yes);
        assert!(v.lp_membership.iter().any(|c| !c.member && c.exponents.hi == 1.0));
    }

    #[test]
    fn gate_monotone_in_alpha_for_powerlaw() {
        let bin = DislocationSpec::binary_uniform(0.0);
        let pl = ImmigrationSpec::powerlaw(2.0, 1.0); // alpha_I = -1
        for k in 1..40 {
            let a = -1.0 - 0.1 * k as f64;
            assert_eq!(stationarity_gate(a, &bin, &pl, HypothesisFlags::default()).exists, Existence::No);
            let b = -1.0 + 0.025 * k as f64;
            assert_eq!(stationarity_gate(b, &bin, &pl, HypothesisFlags::default()).exists, Existence::Yes);
        }
    }
}
