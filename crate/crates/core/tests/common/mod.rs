//! Property checks shared by the acceptance run and the proptest suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fraglab_core::fi::initial_key;
use fraglab_core::lab::{run, LabConfig};
use fraglab_core::metrics::bl_lower;
use fraglab_core::tagged::{time_change, PathWalker, SubordinatorSpec};
use fraglab_core::*;

pub type Check = std::result::Result<(), String>;

fn err(e: LabError) -> String {
    e.to_string()
}

fn evolved(masses: &[(f64, u64)], alpha: f64, disl: &DislocationSpec, cutoff: f64, t: f64, seed: u64) -> std::result::Result<ParticleSystem, String> {
    let dynamics = Dynamics::new(alpha, disl).map_err(err)?;
    let mut sys = ParticleSystem::with_keys(masses, &dynamics, &SimOptions::cutoff(cutoff), seed).map_err(err)?;
    sys.evolve(t).map_err(err)?;
    Ok(sys)
}

fn keyed(masses: &[f64], replica: u64, offset: usize) -> Vec<(f64, u64)> {
    masses.iter().enumerate().map(|(j, &m)| (m, initial_key(replica, offset + j))).collect()
}

/// Runs at cutoffs `lo < hi` from a shared seed agree exactly above `hi`,
/// for plain fragmentation and with immigration.
pub fn truncation_exact(alpha: f64, erosion: f64, masses: &[f64], lo: f64, hi: f64, t: f64, seed: u64) -> Check {
    let disl = DislocationSpec::binary_uniform(erosion);
    let k = keyed(masses, 0, 0);
    let fine = evolved(&k, alpha, &disl, lo, t, seed)?.masses();
    let coarse = evolved(&k, alpha, &disl, hi, t, seed)?.masses();
    let above: Vec<f64> = fine.into_iter().filter(|&m| m > hi).collect();
    if above != coarse {
        return Err(format!("fragmentation: {} vs {} masses above {hi}", above.len(), coarse.len()));
    }
    let imm = ImmigrationSpec::exponential(1.0);
    let mut a = FiConfig::new(alpha, disl.clone(), imm.clone(), lo);
    a.imm_cutoff = lo;
    let mut b = FiConfig::new(alpha, disl, imm, hi);
    b.imm_cutoff = lo;
    let fine = simulate_fi(&a, masses, t, seed, 0).map_err(err)?.sample.masses;
    let coarse = simulate_fi(&b, masses, t, seed, 0).map_err(err)?.sample.masses;
    let above: Vec<f64> = fine.into_iter().filter(|&m| m > hi).collect();
    if above != coarse {
        return Err(format!("with immigration: {} vs {} masses above {hi}", above.len(), coarse.len()));
    }
    Ok(())
}

/// `initial = current + retired + eroded + lost` to `1e-12` relative.
pub fn bookkeeping(alpha: f64, erosion: f64, masses: &[f64], cutoff: f64, t: f64, seed: u64) -> Check {
    let sys = evolved(&keyed(masses, 0, 0), alpha, &DislocationSpec::binary_uniform(erosion), cutoff, t, seed)?;
    let total: f64 = masses.iter().sum();
    let r = sys.bookkeeping_residual();
    if r.abs() <= 1e-12 * total {
        Ok(())
    } else {
        Err(format!("residual {r:e} on total {total}"))
    }
}

/// The run from `u0 ∪ u1` is the union of the runs from `u0` and from
/// `u1` when particles keep their keys.
pub fn superposition(alpha: f64, u0: &[f64], u1: &[f64], cutoff: f64, t: f64, seed: u64) -> Check {
    let disl = DislocationSpec::binary_uniform(0.0);
    let both: Vec<f64> = u0.iter().chain(u1).copied().collect();
    let joint = evolved(&keyed(&both, 3, 0), alpha, &disl, cutoff, t, seed)?.masses();
    let mut split = evolved(&keyed(u0, 3, 0), alpha, &disl, cutoff, t, seed)?.masses();
    split.extend(evolved(&keyed(u1, 3, u0.len()), alpha, &disl, cutoff, t, seed)?.masses());
    split.sort_by(|a, b| b.total_cmp(a));
    if joint != split {
        return Err(format!("fragmentation: {} vs {} masses", joint.len(), split.len()));
    }
    let cfg = FiConfig::new(alpha, disl.clone(), ImmigrationSpec::exponential(1.0), cutoff);
    let joint = simulate_fi(&cfg, &both, t, seed, 3).map_err(err)?.sample.masses;
    let mut split = simulate_fi(&cfg, u0, t, seed, 3).map_err(err)?.sample.masses;
    split.extend(evolved(&keyed(u1, 3, u0.len()), alpha, &disl, cutoff, t, seed)?.masses());
    split.sort_by(|a, b| b.total_cmp(a));
    if joint != split {
        return Err(format!("with immigration: {} vs {} masses", joint.len(), split.len()));
    }
    Ok(())
}

/// At `α = 0` the time change is the identity, bit for bit.
pub fn identity_time_change(v: f64, seed: u64) -> Check {
    let spec = SubordinatorSpec::from_dislocation(&DislocationSpec::binary_uniform(0.0)).map_err(err)?;
    let mut rng = fraglab_core::seed::stream(seed, 0, 0);
    let mut walker = PathWalker::new(&spec, &mut rng);
    match time_change(&mut walker, 0.0, v) {
        Some((rho, _)) if rho.to_bits() == v.to_bits() => Ok(()),
        other => Err(format!("ρ({v}) = {other:?}")),
    }
}

/// The dictionary bound never exceeds the diameter 2 of the unit ball.
pub fn bl_bounded(a: &[Vec<f64>], b: &[Vec<f64>], seed: u64) -> Check {
    let d = bl_lower(a, b, &LipDictionary::standard(seed), 0.0);
    if d.value <= 2.0 && d.value >= 0.0 {
        Ok(())
    } else {
        Err(format!("bl_lower = {}", d.value))
    }
}

pub fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Every configuration in `configs/` run twice into fresh directories
/// produces byte-identical files.
pub fn reproducible_configs() -> std::result::Result<usize, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(config_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut files = 0;
    for path in &paths {
        let cfg = LabConfig::load(path).map_err(err)?;
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ma = run(&cfg, a.path()).map_err(|e| format!("{}: {e}", path.display()))?;
        run(&cfg, b.path()).map_err(err)?;
        for art in ma.artifacts.iter().map(|x| x.file.as_str()).chain(["manifest.json"]) {
            let x = std::fs::read(a.path().join(art)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(art)).map_err(|e| e.to_string())?;
            if x != y {
                return Err(format!("{}: {art} differs between runs", path.display()));
            }
            files += 1;
        }
    }
    Ok(files)
}
