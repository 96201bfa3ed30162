//! Executes a parsed configuration and writes its artifacts.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::brownian::{prop14_report, BrownianOptions};
use crate::deteq::{mu_stat_density, mu_stat_estimate, mu_stat_moment, mu_t_estimate, ClosedForm, Observable, StatOptions};
use crate::error::{invalid, Result};
use crate::fi::{simulate_fi, stationarity_check, StationarySampler};
use crate::lab::config::{ExperimentKind, LabConfig};
use crate::lab::experiments::*;
use crate::lab::io::{sha256_hex, ArtifactWriter, Manifest};
use crate::metrics::LipDictionary;
use crate::row;
use crate::seed::domain;

/// Runs `cfg` into `out`. Identical configurations give byte-identical files.
pub fn run(cfg: &LabConfig, out: &Path) -> Result<Manifest> {
    let mut w = ArtifactWriter::create(out)?;
    let status = dispatch(cfg, &mut w)?;
    // where the artifacts land is not part of the experiment
    let hashed = LabConfig { out: None, ..cfg.clone() };
    let config_sha = sha256_hex(serde_json::to_string(&hashed)?.as_bytes());
    w.finish(cfg.experiment.as_str(), config_sha, cfg.seed, status.map(|s| format!("{s:?}").to_lowercase()))
}

fn dispatch(cfg: &LabConfig, w: &mut ArtifactWriter) -> Result<Option<Status>> {
    let p = &cfg.process;
    let b = &cfg.budget;
    let seed = cfg.seed;
    match cfg.experiment {
        ExperimentKind::Phi => {
            let rows: Vec<_> = b.q_grid.iter().map(|&q| row![q, p.dislocation.phi(q)]).collect();
            w.csv("phi.csv", &["q", "phi"], &rows)?;
            Ok(None)
        }
        ExperimentKind::Simulate => {
            let fi = cfg.fi_config();
            let outs: Vec<_> = (0..b.n_reps as u64).into_par_iter().map(|r| simulate_fi(&fi, &p.u0, b.t, seed, r)).collect::<Result<_>>()?;
            let mut rows = Vec::new();
            let mut tallies = Vec::new();
            for (r, o) in outs.iter().enumerate() {
                for (k, m) in o.sample.masses.iter().enumerate() {
                    rows.push(row![r, k, *m]);
                }
                let t = &o.tally;
                tallies.push(row![r, o.sample.masses.len(), t.initial, t.retired, t.eroded, t.lost, t.events]);
            }
            w.csv("masses.csv", &["replica", "rank", "mass"], &rows)?;
            w.csv("tally.csv", &["replica", "count", "initial", "retired", "eroded", "lost", "events"], &tallies)?;
            Ok(None)
        }
        ExperimentKind::Stationary => {
            let sampler = StationarySampler::new(&cfg.fi_config(), seed)?;
            let samples: Vec<_> = (0..b.n_reps as u64).into_par_iter().map(|r| sampler.sample(r)).collect::<Result<_>>()?;
            let mut rows = Vec::new();
            for s in &samples {
                for (k, m) in s.masses.iter().enumerate() {
                    rows.push(row![s.meta.replica, k, *m]);
                }
            }
            w.csv("masses.csv", &["replica", "rank", "mass"], &rows)?;
            w.json("report.json", &StationaryRun {
                lookback: sampler.lookback(),
                residual: sampler.residual(),
                verdict: sampler.verdict().exists,
                reasons: &sampler.verdict().reasons,
                groups: samples.iter().map(|s| s.meta.groups).collect(),
            })?;
            Ok(None)
        }
        ExperimentKind::StationarityCheck => {
            let r = stationarity_check(&cfg.fi_config(), b.t_shift, b.n_reps, seed, b.significance)?;
            let rows: Vec<_> = r.tests.iter().zip(&r.rejected).map(|(t, rej)| row![t.statistic, t.mean_a, t.mean_b, t.z, t.p_value, *rej]).collect();
            w.csv("tests.csv", &["statistic", "mean_stationary", "mean_shifted", "z", "p_value", "rejected"], &rows)?;
            w.json("report.json", &r)?;
            Ok(Some(Status::from_bool(r.pass)))
        }
        ExperimentKind::Deteq => {
            let mut rows = Vec::new();
            if let Some(l) = b.lambda {
                rows.push(row!["stationary_moment", l, mu_stat_moment(p.alpha, &p.dislocation, &p.immigration, l)?, 0.0]);
            }
            let mut obs: Vec<Observable> = b.powers.iter().map(|&q| Observable::Power(q)).collect();
            obs.extend(b.edges.windows(2).map(|e| Observable::Indicator(e[0], e[1])));
            if !obs.is_empty() {
                let est = mu_t_estimate(p.alpha, &p.dislocation, &p.immigration, &p.mu0, b.t, &obs, b.n_reps, seed)?;
                for (o, e) in obs.iter().zip(est) {
                    let (kind, x) = match *o {
                        Observable::Power(q) => ("transient_power", q),
                        Observable::Indicator(lo, _) => ("transient_bin", lo),
                    };
                    rows.push(row![kind, x, e.mean, e.se]);
                }
                let mut opts = StatOptions::new(b.n_reps, seed);
                opts.edges = b.edges.clone();
                opts.powers = b.powers.clone();
                let st = mu_stat_estimate(p.alpha, &p.dislocation, &p.immigration, &opts)?;
                for m in &st.measure.moments {
                    rows.push(row!["stationary_power", m.p, m.value, m.se]);
                }
                for bin in &st.measure.bins {
                    rows.push(row!["stationary_bin", bin.lo, bin.weight, bin.se]);
                }
            }
            if let Ok(form) = ClosedForm::for_config(p.alpha, &p.dislocation, &p.immigration) {
                for &x in b.edges.iter().chain(&b.q_grid) {
                    rows.push(row!["closed_density", x, mu_stat_density(&form, x)?, 0.0]);
                }
            }
            w.csv("deteq.csv", &["quantity", "x", "value", "se"], &rows)?;
            Ok(None)
        }
        ExperimentKind::Brownian => {
            let bs = &cfg.brownian;
            let mut opts = BrownianOptions::new(bs.drift, bs.level, bs.step, b.n_reps, seed);
            opts.min_len = bs.min_len;
            opts.thresholds = bs.thresholds.clone();
            opts.significance = b.significance;
            let r = prop14_report(&opts)?;
            let rows: Vec<_> = r.tests.iter().map(|t| row![t.comparison, t.statistic, t.value_a, t.value_b, t.p_value, t.pass]).collect();
            w.csv("tests.csv", &["comparison", "statistic", "value_a", "value_b", "p_value", "pass"], &rows)?;
            let rows: Vec<_> = r.halving.iter().map(|h| row![h.threshold, h.coarse, h.fine, h.se, h.pass]).collect();
            w.csv("halving.csv", &["threshold", "coarse", "fine", "se", "pass"], &rows)?;
            w.json("report.json", &r)?;
            Ok(Some(Status::from_bool(r.pass)))
        }
        ExperimentKind::GateMatrix => {
            let r = gate_matrix(&b.t_grid, b.n_reps, seed)?;
            let rows: Vec<_> = r.rows.iter().map(|g| row![g.name, g.alpha, g.dislocation, g.immigration, g.expected.to_string(), g.verdict.to_string(), g.pass]).collect();
            w.csv("gate.csv", &["name", "alpha", "dislocation", "immigration", "expected", "verdict", "pass"], &rows)?;
            let mut rows = Vec::new();
            for f in &r.forward {
                for (t, e) in f.t.iter().zip(&f.count_above_one) {
                    rows.push(row![f.name, format!("{:?}", f.expected).to_lowercase(), *t, e.mean, e.se]);
                }
            }
            w.csv("forward.csv", &["name", "expected", "t", "count_above_one", "se"], &rows)?;
            w.json("report.json", &r)?;
            Ok(Some(r.status))
        }
        ExperimentKind::RateAlpha0 | ExperimentKind::RateAlphaPos => {
            let (shape, min_decay) = if cfg.experiment == ExperimentKind::RateAlpha0 {
                if p.alpha != 0.0 {
                    return Err(invalid("alpha", "rate_alpha0 needs α = 0"));
                }
                (DecayShape::Exponential, 0.0)
            } else {
                if !(p.alpha > 0.0) {
                    return Err(invalid("alpha", "rate_alpha_pos needs α > 0"));
                }
                (DecayShape::Power, 0.5 / p.alpha)
            };
            let fi = cfg.fi_config();
            let dict = LipDictionary::standard(seed ^ domain::DICTIONARY);
            let mut seeds = vec![seed];
            seeds.extend(&b.seeds);
            let mut reports = Vec::new();
            let mut rows = Vec::new();
            for &s in &seeds {
                let r = rate_experiment(&fi, &p.u0, &b.t_grid, b.n_reps, s, &dict, shape)?;
                for pt in &r.points {
                    rows.push(row![s, pt.t, pt.distance.value, pt.distance.se, pt.used_in_fit]);
                }
                reports.push(r);
            }
            w.csv("rate.csv", &["seed", "t", "distance", "se", "used_in_fit"], &rows)?;
            let decays: Vec<f64> = reports.iter().filter_map(|r| r.decay).collect();
            let stability = (decays.len() > 1).then(|| seed_stability(&decays));
            let status = if reports.iter().any(|r| r.status == Status::Inconclusive) {
                Status::Inconclusive
            } else {
                Status::from_bool(
                    reports.iter().all(|r| r.status.is_pass()) && decays.iter().all(|&d| d >= min_decay) && stability.is_none_or(|s| s <= 2.0),
                )
            };
            w.json("report.json", &RateRun {
                reports: &reports,
                min_decay,
                seed_stability: stability,
                status,
            })?;
            Ok(Some(status))
        }
        ExperimentKind::SmallParticleProbe => {
            let r = small_particle_probe(&cfg.fi_config(), &b.eps_grid, b.n_reps, seed, b.tolerance)?;
            let mut rows = Vec::new();
            for row in &r.rows {
                for (e, v) in r.eps_grid.iter().zip(&row.values) {
                    rows.push(row![row.replica, *e, *v, format!("{:?}", row.state).to_lowercase()]);
                }
            }
            w.csv("probe.csv", &["replica", "eps", "scaled_count", "state"], &rows)?;
            w.json("report.json", &ProbeRun {
                eps_grid: &r.eps_grid,
                zero_fraction: r.zero_fraction,
                plateau_fraction: r.plateau_fraction,
                status: r.status,
            })?;
            Ok(Some(r.status))
        }
        ExperimentKind::HydrodynamicCheck => {
            if b.edges.is_empty() {
                return Err(invalid("budget.edges", "hydrodynamic_check needs histogram edges"));
            }
            let setup = HydroSetup {
                alpha: p.alpha,
                disl: p.dislocation.clone(),
                imm: p.immigration.clone(),
                mu0: p.mu0,
                t: b.t,
                cutoff: b.eps,
                edges: b.edges.clone(),
            };
            let r = hydrodynamic_check(&setup, &b.n_scaling, b.n_reps, b.ref_reps, seed)?;
            let rows: Vec<_> = r.rows.iter().map(|h| row![h.n, h.discrepancy.mean, h.discrepancy.se]).collect();
            w.csv("hydro.csv", &["n", "discrepancy", "se"], &rows)?;
            w.json("report.json", &r)?;
            Ok(Some(r.status))
        }
        ExperimentKind::DustTail => {
            let r = dust_tail(p.alpha, &p.dislocation, b.eps, b.n_reps, seed)?;
            let rows: Vec<_> = r.phi_ratio.iter().map(|&(q, v)| row![q, v]).collect();
            w.csv("phi_ratio.csv", &["q", "phi_over_sqrt_q"], &rows)?;
            w.json("report.json", &r)?;
            Ok(Some(r.status))
        }
    }
}

#[derive(Serialize)]
struct StationaryRun<'a> {
    lookback: f64,
    residual: Option<f64>,
    verdict: crate::families::Existence,
    reasons: &'a [String],
    groups: Vec<usize>,
}

#[derive(Serialize)]
struct RateRun<'a> {
    reports: &'a [RateReport],
    min_decay: f64,
    seed_stability: Option<f64>,
    status: Status,
}

#[derive(Serialize)]
struct ProbeRun<'a> {
    eps_grid: &'a [f64],
    zero_fraction: f64,
    plateau_fraction: f64,
    status: Status,
}
