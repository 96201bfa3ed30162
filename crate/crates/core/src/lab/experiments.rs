//! Scripted experiments. Each returns a serializable report; the runner
//! in `lab::run` turns reports into files.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::deteq::{mu_t_estimate, InitialMeasure, Observable};
use crate::error::{invalid, LabError, Result};
use crate::families::{phi_brownian, DislocationSpec, Existence, HypothesisFlags, ImmigrationSpec};
use crate::fi::{initial_key, simulate_fi, FiConfig, LookbackPolicy, StationarySampler};
use crate::fragsim::{dust_time_eps, Dynamics, ParticleSystem, SimOptions};
use crate::measure::histogram;
use crate::metrics::{bl_lower_paired, BlEstimate, LipDictionary};
use crate::seed::{self, domain};
use crate::stats::{fit_line, Estimate, LineFit, Welford};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Status::Pass
    }
}

// ---------------------------------------------------------------------------
// Convergence rates

/// Axis used for the decay fit: `ln d` against `t` or against `ln t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayShape {
    Exponential,
    Power,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatePoint {
    pub t: f64,
    pub distance: BlEstimate,
    pub used_in_fit: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub shape: DecayShape,
    pub lookback: f64,
    pub residual: Option<f64>,
    pub points: Vec<RatePoint>,
    pub fit: Option<LineFit>,
    /// `−slope`: the exponential rate or the power exponent.
    pub decay: Option<f64>,
    pub status: Status,
    pub note: &'static str,
}

/// Replica `r` of the age coupling: the groups younger than `t` plus the
/// fragments of `u0` form a draw of `FI^{(u0)}(t)`; all groups form the
/// stationary draw.
fn coupled_replica(sampler: &StationarySampler, dynamics: &Dynamics, u0: &[f64], t_grid: &[f64], seed: u64, r: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let cfg = sampler.config();
    let groups = sampler.groups(r)?;
    let full = sampler.merge(&groups, r, |_| true).masses;
    let keyed: Vec<(f64, u64)> = u0.iter().enumerate().map(|(j, &m)| (m, initial_key(r, j))).collect();
    let opts = SimOptions {
        cutoff: cfg.cutoff,
        particle_limit: cfg.particle_limit,
        log_events: false,
    };
    let mut initial = ParticleSystem::with_keys(&keyed, dynamics, &opts, seed)?;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        initial.evolve(t)?;
        let mut m = sampler.merge(&groups, r, |g| g.age <= t).masses;
        m.extend(initial.masses());
        m.sort_by(|a, b| b.total_cmp(a));
        out.push(m);
    }
    Ok((out, full))
}

/// Dictionary lower bound on `‖L(FI^{(u0)}(t)) − L(U_stat)‖` along `t_grid`
/// and the decay fit. Points enter the fit when the bound exceeds twice
/// its standard error; fewer than three such points is inconclusive.
pub fn rate_experiment(cfg: &FiConfig, u0: &[f64], t_grid: &[f64], n_reps: usize, seed: u64, dict: &LipDictionary, shape: DecayShape) -> Result<RateReport> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid[0] <= 0.0 {
        return Err(invalid("t_grid", "need increasing positive times"));
    }
    if n_reps < 2 {
        return Err(invalid("n_reps", "need at least 2 replicas"));
    }
    let adaptive = StationarySampler::new(cfg, seed)?;
    let t_max = *t_grid.last().unwrap();
    let sampler = if adaptive.lookback() >= t_max {
        adaptive.clone()
    } else {
        StationarySampler::new(&cfg.clone().with_lookback(LookbackPolicy::Fixed { age: t_max }), seed)?
    };
    let dynamics = Dynamics::new(cfg.alpha, &cfg.disl)?;
    let rows: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| coupled_replica(&sampler, &dynamics, u0, t_grid, seed, r))
        .collect::<Result<_>>()?;
    let stationary: Vec<&[f64]> = rows.iter().map(|(_, s)| s.as_slice()).collect();
    let mut points = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let at_t: Vec<&[f64]> = rows.iter().map(|(v, _)| v[k].as_slice()).collect();
        let d = bl_lower_paired(&at_t, &stationary, dict, cfg.cutoff);
        points.push(RatePoint {
            t,
            used_in_fit: d.value > 0.0 && d.value > 2.0 * d.se,
            distance: d,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.used_in_fit)
        .map(|p| {
            let x = match shape {
                DecayShape::Exponential => p.t,
                DecayShape::Power => p.t.ln(),
            };
            (x, p.distance.value.ln())
        })
        .unzip();
    let (fit, decay, status) = if xs.len() >= 3 {
        let f = fit_line(&xs, &ys);
        (Some(f), Some(-f.slope), Status::from_bool(f.slope < 0.0))
    } else {
        (None, None, Status::Inconclusive)
    };
    Ok(RateReport {
        shape,
        lookback: adaptive.lookback(),
        residual: adaptive.residual(),
        points,
        fit,
        decay,
        status,
        note: "dictionary lower bound on the bounded-Lipschitz distance; constants are not estimated",
    })
}

/// Spread of decay estimates across seeds: `max / min`.
pub fn seed_stability(decays: &[f64]) -> f64 {
    let max = decays.iter().copied().fold(f64::MIN, f64::max);
    let min = decays.iter().copied().fold(f64::MAX, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

// ---------------------------------------------------------------------------
// Small particles

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaState {
    /// The count stops growing over the last decade: the limit is zero.
    Zero,
    /// Growing count with `ε^{1+α}·count` within tolerance over the last decade.
    Plateau,
    Unsettled,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRow {
    pub replica: u64,
    /// `ε^{1+α} · #{masses > ε}` along the grid.
    pub values: Vec<f64>,
    /// `log₁₀` growth of the count over the last decade.
    pub growth: f64,
    pub state: ReplicaState,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub eps_grid: Vec<f64>,
    pub tolerance: f64,
    pub rows: Vec<ProbeRow>,
    /// Replica mean of `ε^{1+α}·count` per cutoff.
    pub ensemble: Vec<Estimate>,
    /// Paired change of the ensemble mean across the last decade.
    pub ensemble_change: Estimate,
    pub ensemble_plateau: bool,
    pub zero_fraction: f64,
    /// Among replicas with a positive limit.
    pub plateau_fraction: f64,
    pub status: Status,
}

/// Grid indices inside the last decade, or `None` when the grid does not
/// resolve a decade with at least three points. `eps` is decreasing.
fn last_decade(eps: &[f64]) -> Option<Vec<usize>> {
    let lo = *eps.last()?;
    let idx: Vec<usize> = (0..eps.len()).filter(|&i| eps[i] <= 10.0 * lo * (1.0 + 1e-12)).collect();
    (idx.len() >= 3 && eps[0] >= 10.0 * lo * (1.0 - 1e-12)).then_some(idx)
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}

/// Tracks `ε^{1+α}·#{masses > ε}` down the cutoff grid in stationary
/// samples. Each replica is labelled by how fast its count grows over the
/// last decade: below half the `ε^{−(1+α)}` rate means a zero limit. The
/// plateau is tested on the replica mean with paired differences between
/// the ends of the last decade. A pass needs the plateau and a zero
/// fraction strictly between 0 and 1; an unresolved grid is inconclusive.
pub fn small_particle_probe(cfg: &FiConfig, eps_grid: &[f64], n_reps: usize, seed: u64, tolerance: f64) -> Result<ProbeReport> {
    if !(cfg.alpha > -1.0 && cfg.alpha < 0.0) {
        return Err(invalid("alpha", "the small-particle probe needs −1 < α < 0"));
    }
    let flags = cfg.flags.resolved(&cfg.disl);
    if flags.h3 != Some(true) || flags.h4 != Some(true) {
        return Err(invalid("flags", "declare h3 = true and h4 = true for the probe"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(invalid("eps_grid", "need positive cutoffs"));
    }
    if n_reps < 2 {
        return Err(invalid("n_reps", "need at least 2 replicas"));
    }
    let mut grid = eps_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let eps_min = *grid.last().unwrap();
    let mut run_cfg = cfg.clone();
    run_cfg.cutoff = eps_min;
    run_cfg.imm_cutoff = eps_min;
    let sampler = StationarySampler::new(&run_cfg, seed)?;
    let k = 1.0 + cfg.alpha;
    let samples: Vec<Vec<f64>> = (0..n_reps as u64).into_par_iter().map(|r| sampler.sample(r).map(|s| s.masses)).collect::<Result<_>>()?;
    let decade = last_decade(&grid);
    let rows: Vec<ProbeRow> = samples
        .iter()
        .enumerate()
        .map(|(r, m)| {
            let counts: Vec<f64> = grid.iter().map(|&e| m.iter().filter(|&&x| x > e).count() as f64).collect();
            let values: Vec<f64> = grid.iter().zip(&counts).map(|(&e, &c)| e.powf(k) * c).collect();
            let (growth, state) = match &decade {
                Some(idx) => {
                    let (top, bottom) = (idx[0], *idx.last().unwrap());
                    let growth = if counts[bottom] == 0.0 {
                        0.0
                    } else {
                        (counts[bottom] / counts[top].max(1.0)).log10() / (grid[top] / grid[bottom]).log10()
                    };
                    let picked: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                    let state = if growth < 0.5 * k {
                        ReplicaState::Zero
                    } else if spread(&picked) < tolerance {
                        ReplicaState::Plateau
                    } else {
                        ReplicaState::Unsettled
                    };
                    (growth, state)
                }
                None => (f64::NAN, ReplicaState::Unsettled),
            };
            ProbeRow {
                replica: r as u64,
                values,
                growth,
                state,
            }
        })
        .collect();
    let ensemble: Vec<Estimate> = (0..grid.len()).map(|i| rows.iter().map(|r| r.values[i]).collect::<Welford>().estimate()).collect();
    let (ensemble_change, ensemble_plateau) = match &decade {
        Some(idx) => {
            let (top, bottom) = (idx[0], *idx.last().unwrap());
            let d = rows.iter().map(|r| r.values[bottom] - r.values[top]).collect::<Welford>().estimate();
            let level = ensemble[bottom].mean;
            let flat = level > 0.0 && (d.mean.abs() < 3.0 * d.se || d.mean.abs() < tolerance * level);
            (d, flat)
        }
        None => (Estimate::exact(f64::NAN), false),
    };
    let n = rows.len() as f64;
    let zeros = rows.iter().filter(|r| r.state == ReplicaState::Zero).count();
    let positive = rows.len() - zeros;
    let plateaus = rows.iter().filter(|r| r.state == ReplicaState::Plateau).count();
    let plateau_fraction = if positive > 0 { plateaus as f64 / positive as f64 } else { 0.0 };
    let status = if decade.is_none() || positive == 0 {
        Status::Inconclusive
    } else {
        Status::from_bool(ensemble_plateau && zeros > 0)
    };
    Ok(ProbeReport {
        eps_grid: grid,
        tolerance,
        rows,
        ensemble,
        ensemble_change,
        ensemble_plateau,
        zero_fraction: zeros as f64 / n,
        plateau_fraction,
        status,
    })
}

// ---------------------------------------------------------------------------
// Hydrodynamic limit

#[derive(Clone, Debug, Serialize)]
pub struct HydroRow {
    pub n: usize,
    /// Mean over replicas of the Euclidean distance between `(1/n)·histogram` and `μ_t`.
    pub discrepancy: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct HydroReport {
    pub t: f64,
    pub edges: Vec<f64>,
    pub reference: Vec<Estimate>,
    pub rows: Vec<HydroRow>,
    /// Observed ratio and the `√(n_k/n_{k+1})` law-of-large-numbers ratio.
    pub ratios: Vec<(f64, f64)>,
    pub status: Status,
}

#[derive(Clone, Debug)]
pub struct HydroSetup {
    pub alpha: f64,
    pub disl: DislocationSpec,
    pub imm: ImmigrationSpec,
    pub mu0: InitialMeasure,
    pub t: f64,
    pub cutoff: f64,
    pub edges: Vec<f64>,
}

/// Poisson(`n μ₀`) initial state of replica `r`.
pub fn poisson_initial(mu0: &InitialMeasure, n: usize, seed: u64, r: u64) -> Result<Vec<f64>> {
    let mut rng = seed::stream(seed, domain::INITIAL, r);
    let mean = n as f64 * mu0.total();
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let count: f64 = Poisson::new(mean).map_err(|e| invalid("mu0", e.to_string()))?.sample(&mut rng);
    Ok((0..count as usize)
        .map(|_| match *mu0 {
            InitialMeasure::Dirac { mass, .. } => mass,
            InitialMeasure::Exponential { rate, .. } => -(1.0 - rng.random::<f64>()).ln() / rate,
            InitialMeasure::Zero => 0.0,
        })
        .collect())
}

/// `(1/n)·histogram` of one `(α, c, ν, nI)` run from Poisson(`n μ₀`).
pub fn hydro_replica(setup: &HydroSetup, n: usize, seed: u64, r: u64) -> Result<Vec<f64>> {
    let u0 = poisson_initial(&setup.mu0, n, seed, r)?;
    let imm = setup.imm.clone().scaled(setup.imm.scale * n as f64);
    let cfg = FiConfig::new(setup.alpha, setup.disl.clone(), imm, setup.cutoff);
    let out = simulate_fi(&cfg, &u0, setup.t, seed, r)?;
    Ok(histogram(&out.sample.masses, &setup.edges).into_iter().map(|h| h / n as f64).collect())
}

pub fn hydrodynamic_check(setup: &HydroSetup, n_scaling: &[usize], n_reps: usize, ref_reps: usize, seed: u64) -> Result<HydroReport> {
    if setup.edges.len() < 2 || setup.edges[0] < setup.cutoff {
        return Err(invalid("edges", "bins must lie above the cutoff"));
    }
    if n_scaling.len() < 2 || n_scaling.contains(&0) {
        return Err(invalid("n_scaling", "need at least two positive scalings"));
    }
    let obs: Vec<Observable> = setup.edges.windows(2).map(|w| Observable::Indicator(w[0], w[1])).collect();
    let reference = mu_t_estimate(setup.alpha, &setup.disl, &setup.imm, &setup.mu0, setup.t, &obs, ref_reps, seed ^ domain::DETEQ)?;
    let mut rows = Vec::new();
    for &n in n_scaling {
        let d: Vec<f64> = (0..n_reps as u64)
            .into_par_iter()
            .map(|r| {
                let h = hydro_replica(setup, n, seed, r)?;
                Ok(h.iter().zip(&reference).map(|(x, e)| (x - e.mean).powi(2)).sum::<f64>().sqrt())
            })
            .collect::<Result<_>>()?;
        rows.push(HydroRow {
            n,
            discrepancy: d.into_iter().collect::<Welford>().estimate(),
        });
    }
    let ratios: Vec<(f64, f64)> = rows
        .windows(2)
        .map(|w| (w[1].discrepancy.mean / w[0].discrepancy.mean, (w[0].n as f64 / w[1].n as f64).sqrt()))
        .collect();
    let ok = ratios.iter().all(|&(obs, lln)| obs >= 0.5 * lln && obs <= 1.5 * lln);
    Ok(HydroReport {
        t: setup.t,
        edges: setup.edges.clone(),
        reference,
        rows,
        ratios,
        status: Status::from_bool(ok),
    })
}

// ---------------------------------------------------------------------------
// Existence gate matrix

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Grows,
    Plateaus,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateCase {
    pub name: &'static str,
    pub alpha: f64,
    pub disl: DislocationSpec,
    pub imm: ImmigrationSpec,
    pub flags: HypothesisFlags,
    pub expected: Existence,
    /// Expected `l^p` statements, `(p, member)`.
    pub lp: Vec<(f64, bool)>,
    /// Forward check of the mean count above 1, when simulable.
    pub forward: Option<Growth>,
}

/// Twelve configurations across the negative, zero and positive index regimes.
pub fn gate_cases() -> Vec<GateCase> {
    let binary = DislocationSpec::binary_uniform(0.0);
    let halving = DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.5])], 0.0);
    let none = HypothesisFlags::default();
    let case = |name, alpha, disl: &DislocationSpec, imm, expected, lp, forward| GateCase {
        name,
        alpha,
        disl: disl.clone(),
        imm,
        flags: none,
        expected,
        lp,
        forward,
    };
    vec![
        case("neg-light-tail", -1.0, &binary, ImmigrationSpec::powerlaw(2.5, 1.0), Existence::Yes, vec![], Some(Growth::Plateaus)),
        case("neg-below-critical", -2.0, &binary, ImmigrationSpec::powerlaw(2.5, 1.0), Existence::No, vec![], Some(Growth::Grows)),
        case("neg-heavy-tail", -1.0, &binary, ImmigrationSpec::powerlaw(1.5, 1.0), Existence::No, vec![], Some(Growth::Grows)),
        case("neg-exponential", -0.5, &binary, ImmigrationSpec::exponential(1.0), Existence::Yes, vec![], Some(Growth::Plateaus)),
        case(
            "neg-bounded-groups",
            -3.0,
            &binary,
            ImmigrationSpec::groups(vec![(1.0, vec![0.6, 0.3]), (0.5, vec![2.0])]),
            Existence::Yes,
            vec![],
            Some(Growth::Plateaus),
        ),
        case("zero-exponential", 0.0, &binary, ImmigrationSpec::exponential(1.0), Existence::Yes, vec![(1.0, false), (1.5, true)], Some(Growth::Plateaus)),
        case("zero-log-tail", 0.0, &binary, ImmigrationSpec::log_tail(0.5, 1.0), Existence::No, vec![], None),
        case("zero-log-tail-no-h2", 0.0, &halving, ImmigrationSpec::log_tail(0.5, 1.0), Existence::Unknown, vec![], None),
        case(
            "pos-heavy-tail",
            1.0,
            &binary,
            ImmigrationSpec::powerlaw(1.5, 1.0),
            Existence::Yes,
            vec![(2.0, false), (4.0, true)],
            None,
        ),
        case(
            "pos-exponential",
            1.0,
            &binary,
            ImmigrationSpec::exponential(1.0),
            Existence::Yes,
            vec![(1.5, false), (2.5, true)],
            Some(Growth::Plateaus),
        ),
        case("neg-critical", -1.0, &binary, ImmigrationSpec::powerlaw(2.0, 1.0), Existence::Unknown, vec![], None),
        case("brownian", -0.5, &DislocationSpec::brownian_nu(), ImmigrationSpec::brownian(1.0), Existence::Yes, vec![], None),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct GateRow {
    pub name: &'static str,
    pub alpha: f64,
    pub dislocation: &'static str,
    pub immigration: &'static str,
    pub expected: Existence,
    pub verdict: Existence,
    pub lp_ok: bool,
    pub pass: bool,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ForwardRow {
    pub name: &'static str,
    pub expected: Growth,
    pub t: Vec<f64>,
    pub count_above_one: Vec<Estimate>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateMatrixReport {
    pub rows: Vec<GateRow>,
    pub forward: Vec<ForwardRow>,
    pub status: Status,
}

/// Mean number of masses above 1 at each horizon, from an empty start.
/// Runs share seeds across horizons, so each horizon extends the previous one.
pub fn forward_counts(case: &GateCase, t_grid: &[f64], n_reps: usize, seed: u64) -> Result<Vec<Estimate>> {
    let cfg = FiConfig::new(case.alpha, case.disl.clone(), case.imm.clone(), 1.0);
    t_grid
        .iter()
        .map(|&t| {
            let counts: Vec<f64> = (0..n_reps as u64)
                .into_par_iter()
                .map(|r| simulate_fi(&cfg, &[], t, seed, r).map(|o| o.sample.masses.len() as f64))
                .collect::<Result<_>>()?;
            Ok(counts.into_iter().collect::<Welford>().estimate())
        })
        .collect()
}

/// Classifies the mean count along an increasing horizon ladder
/// (ideally doubling). Plateau: the last increment is within three
/// standard errors of zero, or the increments shrink as the horizon grows
/// (a finite limit approached slowly). Growth: every increment is positive
/// and the increments do not shrink.
pub fn classify_growth(t: &[f64], counts: &[Estimate]) -> Growth {
    assert!(t.len() == counts.len() && t.len() >= 3, "need at least three horizons");
    let incs: Vec<(f64, f64)> = counts.windows(2).map(|w| (w[1].mean - w[0].mean, w[0].se.hypot(w[1].se))).collect();
    let &(last, last_se) = incs.last().unwrap();
    if last.abs() < 3.0 * last_se || incs.iter().any(|&(d, _)| d <= 0.0) {
        return Growth::Plateaus;
    }
    let xs: Vec<f64> = t.windows(2).map(|w| (w[0] * w[1]).sqrt().ln()).collect();
    let ys: Vec<f64> = incs.iter().map(|&(d, _)| d.ln()).collect();
    if fit_line(&xs, &ys).slope < 0.0 {
        Growth::Plateaus
    } else {
        Growth::Grows
    }
}

/// Doubling horizons for the forward check.
pub const GATE_LADDER: [f64; 7] = [10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0];

pub fn gate_matrix(t_grid: &[f64], n_reps: usize, seed: u64) -> Result<GateMatrixReport> {
    let cases = gate_cases();
    let mut rows = Vec::new();
    if n_reps > 0 && t_grid.len() < 3 {
        return Err(invalid("t_grid", "the forward check needs at least three horizons"));
    }
    let mut forward = Vec::new();
    for case in &cases {
        let v = crate::families::stationarity_gate(case.alpha, &case.disl, &case.imm, case.flags);
        let lp_ok = case.lp.iter().all(|&(p, member)| v.lp_membership.iter().any(|c| c.member == member && c.exponents.contains(p)));
        rows.push(GateRow {
            name: case.name,
            alpha: case.alpha,
            dislocation: case.disl.name(),
            immigration: case.imm.name(),
            expected: case.expected,
            verdict: v.exists,
            lp_ok,
            pass: v.exists == case.expected && lp_ok,
            reasons: v.reasons.clone(),
        });
        if let (Some(expected), true) = (case.forward, n_reps > 0) {
            let counts = forward_counts(case, t_grid, n_reps, seed)?;
            let got = classify_growth(t_grid, &counts);
            forward.push(ForwardRow {
                name: case.name,
                expected,
                t: t_grid.to_vec(),
                count_above_one: counts,
                pass: got == expected,
            });
        }
    }
    let ok = rows.iter().all(|r| r.pass) && forward.iter().all(|f| f.pass);
    Ok(GateMatrixReport {
        rows,
        forward,
        status: Status::from_bool(ok),
    })
}

// ---------------------------------------------------------------------------
// Dust-time tail and the Brownian exponent

#[derive(Clone, Debug, Serialize)]
pub struct DustTailReport {
    pub alpha: f64,
    pub eps: f64,
    pub n_reps: usize,
    /// Survival probabilities bounding the fitted window.
    pub window: (f64, f64),
    pub fit: LineFit,
    pub r2_required: f64,
    pub phi_ratio: Vec<(f64, f64)>,
    pub phi_spread: f64,
    pub status: Status,
}

pub const DUST_R2: f64 = 0.98;

/// Empirical `ln P(τ_ε > t)` against `t` over the last decade of
/// probability resolved by `n_reps` draws (survival in `[10p, p]`,
/// `p = 50/n`), and the flatness of `φ_B(q)/√q` on `[10², 10⁶]`.
pub fn dust_tail(alpha: f64, disl: &DislocationSpec, eps: f64, n_reps: usize, seed: u64) -> Result<DustTailReport> {
    if n_reps < 1000 {
        return Err(LabError::TooFewSamples { need: 1000, got: n_reps });
    }
    let dynamics = Dynamics::new(alpha, disl)?;
    let mut times: Vec<f64> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| dust_time_eps(&dynamics, 1.0, eps, seed, seed::root_key(r, domain::PARTICLE, 0), 1 << 32))
        .collect::<Result<_>>()?;
    times.sort_by(|a, b| a.total_cmp(b));
    let n = n_reps as f64;
    let p_lo = 50.0 / n;
    let p_hi = 10.0 * p_lo;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &t) in times.iter().enumerate() {
        let s = (n - i as f64 - 1.0) / n;
        if s >= p_lo && s <= p_hi {
            xs.push(t);
            ys.push(s.ln());
        }
    }
    let fit = fit_line(&xs, &ys);
    let phi_ratio: Vec<(f64, f64)> = (0..=8).map(|k| 10f64.powf(2.0 + 0.5 * k as f64)).map(|q| (q, phi_brownian(q) / q.sqrt())).collect();
    let max = phi_ratio.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = phi_ratio.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let phi_spread = (max - min) / min;
    Ok(DustTailReport {
        alpha,
        eps,
        n_reps,
        window: (p_lo, p_hi),
        fit,
        r2_required: DUST_R2,
        phi_ratio,
        phi_spread,
        status: Status::from_bool(fit.r2 > DUST_R2 && fit.slope < 0.0 && phi_spread < 0.02),
    })
}
