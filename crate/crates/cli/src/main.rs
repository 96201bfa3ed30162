//! `fraglab`: command-line front end for the fragmentation lab.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fraglab_core::lab::{run, ExperimentKind, LabConfig, Manifest};
use fraglab_core::{stationarity_gate, DislocationSpec, ImmigrationSpec, InitialMeasure};

#[derive(Parser)]
#[command(name = "fraglab", version, about = "Fragmentation with immigration: simulation and numerical checks")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of replicas.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Mass cutoff.
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Laplace exponent of the dislocation measure on a grid of q.
    Phi {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 5.0, 10.0])]
        q: Vec<f64>,
    },
    /// Immigration summary (α_I, moment window, rates above cutoffs) and the gate verdict, as JSON.
    Report {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0])]
        eps_grid: Vec<f64>,
    },
    /// Existence verdict for one process, or the full configuration matrix.
    Gate {
        #[command(flatten)]
        process: ProcessArgs,
        /// Run the built-in matrix with forward checks instead.
        #[arg(long)]
        matrix: bool,
    },
    /// Forward runs from an initial state.
    Simulate {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Draws from the stationary state.
    Stationary {
        #[command(flatten)]
        process: ProcessArgs,
        /// Fixed lookback age instead of the adaptive rule.
        #[arg(long)]
        lookback: Option<f64>,
    },
    /// Deterministic equation: transient and stationary moments and bins.
    Deteq {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        powers: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        edges: Vec<f64>,
        /// Dirac initial measure `mass:weight`.
        #[arg(long)]
        mu0: Option<String>,
    },
    /// Excursions of drifted Brownian motion against the Cox description.
    Brownian {
        #[arg(long, default_value_t = 1.0)]
        drift: f64,
        #[arg(long, default_value_t = 1.0)]
        level: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 0.1)]
        min_len: f64,
    },
    /// Configuration-driven experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Runs a TOML configuration.
    Run { config: PathBuf },
}

#[derive(Args, Clone)]
struct ProcessArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    /// binary_uniform, brownian_nu or halving.
    #[arg(long, default_value = "binary_uniform")]
    dislocation: String,
    /// Erosion coefficient.
    #[arg(long, default_value_t = 0.0)]
    erosion: f64,
    /// exponential:RATE, powerlaw:BETA:XMIN, log_tail:KAPPA:XMIN, brownian:DRIFT or none.
    #[arg(long, default_value = "exponential:1")]
    immigration: String,
    /// Initial masses.
    #[arg(long, value_delimiter = ',')]
    u0: Vec<f64>,
}

fn numbers(spec: &str, parts: &[&str], n: usize) -> Result<Vec<f64>> {
    if parts.len() != n {
        bail!("`{spec}` needs {} parameter(s)", n - 1);
    }
    parts[1..].iter().map(|p| p.parse::<f64>().with_context(|| format!("bad number `{p}` in `{spec}`"))).collect()
}

fn parse_immigration(spec: &str) -> Result<ImmigrationSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    Ok(match parts[0] {
        "exponential" => ImmigrationSpec::exponential(numbers(spec, &parts, 2)?[0]),
        "powerlaw" => {
            let v = numbers(spec, &parts, 3)?;
            ImmigrationSpec::powerlaw(v[0], v[1])
        }
        "log_tail" => {
            let v = numbers(spec, &parts, 3)?;
            ImmigrationSpec::log_tail(v[0], v[1])
        }
        "brownian" => ImmigrationSpec::brownian(numbers(spec, &parts, 2)?[0]),
        "none" => ImmigrationSpec::exponential(1.0).scaled(0.0),
        other => bail!("unknown immigration family `{other}`"),
    })
}

fn parse_dislocation(name: &str, erosion: f64) -> Result<DislocationSpec> {
    let mut d = match name {
        "binary_uniform" => DislocationSpec::binary_uniform(erosion),
        "brownian_nu" => DislocationSpec::brownian_nu(),
        "halving" => DislocationSpec::discrete(vec![(1.0, vec![0.5, 0.5])], erosion),
        other => bail!("unknown dislocation family `{other}`"),
    };
    d.erosion = erosion;
    Ok(d)
}

fn parse_mu0(spec: &str) -> Result<InitialMeasure> {
    let (m, w) = spec.split_once(':').context("--mu0 expects mass:weight")?;
    Ok(InitialMeasure::Dirac {
        mass: m.parse().context("bad mass in --mu0")?,
        weight: w.parse().context("bad weight in --mu0")?,
    })
}

impl ProcessArgs {
    fn apply(&self, cfg: &mut LabConfig) -> Result<()> {
        cfg.process.alpha = self.alpha;
        cfg.process.dislocation = parse_dislocation(&self.dislocation, self.erosion)?;
        cfg.process.immigration = parse_immigration(&self.immigration)?;
        cfg.process.u0 = self.u0.clone();
        Ok(())
    }
}

fn base(kind: ExperimentKind) -> LabConfig {
    LabConfig::parse(&format!("experiment = \"{}\"\n", kind.as_str())).expect("minimal config parses")
}

fn apply_globals(cli: &Cli, cfg: &mut LabConfig) {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.reps {
        cfg.budget.n_reps = n;
    }
    if let Some(e) = cli.eps {
        cfg.budget.eps = e;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
}

fn execute(cfg: &LabConfig) -> Result<Manifest> {
    let out = cfg.out.clone().unwrap_or_else(|| Path::new("out").join(cfg.experiment.as_str()));
    let manifest = run(cfg, &out).with_context(|| format!("experiment `{}` failed", cfg.experiment.as_str()))?;
    println!("wrote {} file(s) to {}", manifest.artifacts.len() + 1, out.display());
    for a in &manifest.artifacts {
        println!("  {} ({} rows, sha256 {})", a.file, a.rows, &a.sha256[..16]);
    }
    if let Some(s) = &manifest.status {
        println!("status: {s}");
    }
    Ok(manifest)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.command {
        Command::Report { process, eps_grid } => {
            let mut cfg = base(ExperimentKind::Phi);
            process.apply(&mut cfg)?;
            let p = &cfg.process;
            p.immigration.validate()?;
            let value = serde_json::json!({
                "immigration": p.immigration.report(eps_grid),
                "gate": stationarity_gate(p.alpha, &p.dislocation, &p.immigration, p.flags),
            });
            println!("{}", serde_json::to_string_pretty(&value)?);
            return Ok(());
        }
        Command::Gate { process, matrix: false } => {
            let mut cfg = base(ExperimentKind::Phi);
            process.apply(&mut cfg)?;
            let p = &cfg.process;
            let v = stationarity_gate(p.alpha, &p.dislocation, &p.immigration, p.flags);
            println!("{}", v.exists);
            for r in &v.reasons {
                println!("  {r}");
            }
            for c in &v.lp_membership {
                println!("  {c}");
            }
            return Ok(());
        }
        Command::Gate { matrix: true, .. } => {
            let mut cfg = base(ExperimentKind::GateMatrix);
            cfg.budget.t_grid = fraglab_core::lab::experiments::GATE_LADDER.to_vec();
            cfg
        }
        Command::Phi { process, q } => {
            let mut cfg = base(ExperimentKind::Phi);
            process.apply(&mut cfg)?;
            cfg.budget.q_grid = q.clone();
            cfg
        }
        Command::Simulate { process, t } => {
            let mut cfg = base(ExperimentKind::Simulate);
            process.apply(&mut cfg)?;
            cfg.budget.t = *t;
            cfg
        }
        Command::Stationary { process, lookback } => {
            let mut cfg = base(ExperimentKind::Stationary);
            process.apply(&mut cfg)?;
            cfg.budget.lookback = *lookback;
            cfg
        }
        Command::Deteq { process, t, lambda, powers, edges, mu0 } => {
            let mut cfg = base(ExperimentKind::Deteq);
            process.apply(&mut cfg)?;
            cfg.budget.t = *t;
            cfg.budget.lambda = *lambda;
            cfg.budget.powers = powers.clone();
            cfg.budget.edges = edges.clone();
            cfg.budget.q_grid = Vec::new();
            if let Some(m) = mu0 {
                cfg.process.mu0 = parse_mu0(m)?;
            }
            cfg
        }
        Command::Brownian { drift, level, step, min_len } => {
            let mut cfg = base(ExperimentKind::Brownian);
            cfg.brownian.drift = *drift;
            cfg.brownian.level = *level;
            cfg.brownian.step = *step;
            cfg.brownian.min_len = *min_len;
            cfg
        }
        Command::Experiment {
            action: ExperimentAction::Run { config },
        } => LabConfig::load(config)?,
    };
    apply_globals(&cli, &mut cfg);
    execute(&cfg)?;
    Ok(())
}
