//! Command-line entry point. Exit codes: 0 all criteria pass, 1 criterion
//! failure, 2 usage/config error, 3 numerical divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gdlab::dynamics::{iterate, MapSpec};
use gdlab::error::Error;
use gdlab::experiments::{
    dump_binary, run_bifurcation, run_ergodicity_1d, run_escape_dichotomy, run_experiment,
    run_lyapunov_sweep, run_matyas_2d, run_momentum, run_residual_orders, ExperimentConfig,
    Verdict, EXPERIMENT_IDS,
};
use gdlab::objective::{catalog_macro, catalog_micro, MultiscaleObjective};
use gdlab::stats::{gibbs_density, gibbs_sample};

#[derive(Parser)]
#[command(
    name = "gdlab",
    version,
    about = "Numerical laboratory for gradient descent on multiscale objectives",
    propagate_version = true
)]
struct Cli {
    /// Master RNG seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides config; falls back to $GDLAB_OUT)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (results do not depend on it)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML config file; command-line flags win over config values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct ExpArgs {
    /// Macroscopic landscape id (quartic, quadratic, matyas, double-well:k=K)
    #[arg(long = "macro")]
    macro_id: Option<String>,
    /// Micro-scale id (sin, cos-neg, quasi, sincos2d, modulated)
    #[arg(long)]
    micro: Option<String>,
    /// Micro-scale parameter epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// Double-well depth parameter
    #[arg(long)]
    k: Option<f64>,
    /// Learning rate
    #[arg(long)]
    eta: Option<f64>,
    /// Heavy-ball momentum coefficient
    #[arg(long)]
    gamma: Option<f64>,
    /// Strong-convexity hint for the accelerated map
    #[arg(long)]
    mu: Option<f64>,
    /// Ensemble member count
    #[arg(long)]
    members: Option<usize>,
    /// Ensemble evolution steps
    #[arg(long)]
    steps: Option<usize>,
    /// Orbit length / iteration count
    #[arg(long)]
    n: Option<usize>,
    /// Discarded warm-up steps
    #[arg(long)]
    burn_in: Option<usize>,
    /// Monte Carlo sample count
    #[arg(long)]
    mc_n: Option<usize>,
    /// Multiplier on every pass/fail tolerance
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record a single descent orbit to CSV and a binary dump
    Orbit {
        #[command(flatten)]
        exp: ExpArgs,
        /// Initial state, comma separated
        #[arg(long, default_value = "0.7")]
        x0: String,
        /// Keep every THIN-th recorded state
        #[arg(long, default_value_t = 1)]
        thin: usize,
    },
    /// Evolve an ensemble and compare it to the orbit and Gibbs statistics
    Ensemble {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Lyapunov-exponent sweep and comparison against the log-Hessian constant
    Lyapunov {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Period-doubling scan over the learning rate
    Bifurcation {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Tabulate the rescaled Gibbs density (and optionally sample it)
    Gibbs {
        #[command(flatten)]
        exp: ExpArgs,
        /// Noise variance sigma^2
        #[arg(long, default_value_t = 0.5)]
        sigma2: f64,
        /// Table intervals per axis
        #[arg(long, default_value_t = 16384)]
        resolution: usize,
        /// Also draw this many samples into a binary dump
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Invariance-residual, gradient-moment, coupling, and modified-equation checks
    Residuals {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Double-well escape dichotomy and Gaussian approximation
    Escape {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Momentum maps: stochasticity and stationarity checks
    Momentum {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// 2D deterministic-vs-stochastic comparison on the Matyas landscape
    Matyas {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Run every experiment and write all verdicts
    Suite,
}

fn merge(cfg: &mut ExperimentConfig, cli: &Cli, exp: &ExpArgs) {
    let log = |field: &str| {
        if cli.config.is_some() {
            eprintln!("note: flag --{field} overrides the config value");
        }
    };
    macro_rules! win {
        ($flag:expr, $slot:expr, $name:literal) => {
            if let Some(v) = $flag.clone() {
                if $slot.is_some() && $slot != &mut Some(v.clone()) {
                    log($name);
                }
                *$slot = Some(v);
            }
        };
    }
    win!(exp.macro_id, &mut cfg.macro_id, "macro");
    win!(exp.micro, &mut cfg.micro, "micro");
    win!(exp.epsilon, &mut cfg.epsilon, "epsilon");
    win!(exp.k, &mut cfg.k, "k");
    win!(exp.eta, &mut cfg.eta, "eta");
    win!(exp.gamma, &mut cfg.gamma, "gamma");
    win!(exp.mu, &mut cfg.mu_hint, "mu");
    win!(exp.members, &mut cfg.ensemble_n, "members");
    win!(exp.steps, &mut cfg.ensemble_steps, "steps");
    win!(exp.n, &mut cfg.orbit_n, "n");
    win!(exp.burn_in, &mut cfg.burn_in, "burn-in");
    win!(exp.mc_n, &mut cfg.mc_n, "mc-n");
    win!(exp.tolerance_scale, &mut cfg.tolerance_scale, "tolerance-scale");
    win!(cli.seed, &mut cfg.seed, "seed");
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("GDLAB_OUT").map(PathBuf::from));
    win!(out, &mut cfg.out_dir, "out");
}

fn load_config(cli: &Cli, experiment: &str, exp: &ExpArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(experiment),
    };
    cfg.experiment = experiment.to_string();
    merge(&mut cfg, cli, exp);
    Ok(cfg)
}

fn emit(verdict: &Verdict, dir: Option<&std::path::Path>) -> Result<bool, Error> {
    println!("{}", verdict.to_json());
    if let Some(dir) = dir {
        verdict.write(dir)?;
    }
    Ok(verdict.pass)
}

fn build_obj(cfg: &ExperimentConfig) -> Result<MultiscaleObjective, Error> {
    let macro_id = cfg.macro_id.as_deref().unwrap_or("quartic");
    let micro = match &cfg.micro {
        Some(id) => Some(catalog_micro(id, cfg.epsilon.unwrap_or(1e-6))?),
        None => None,
    };
    MultiscaleObjective::new(catalog_macro(macro_id)?, micro)
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.cmd {
        Cmd::Orbit { exp, x0, thin } => {
            let cfg = load_config(cli, "orbit", exp)?;
            let obj = build_obj(&cfg)?;
            let x0: Vec<f64> = x0
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad --x0: {e}")))?;
            let map = MapSpec::Gd {
                obj,
                eta: cfg.eta.unwrap_or(0.1),
            };
            let orbit = iterate(
                &map,
                &x0,
                cfg.orbit_n.unwrap_or(100_000),
                cfg.burn_in.unwrap_or(0),
                (*thin).max(1),
                cfg.seed.unwrap_or(0),
            )?;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("orbit.csv"))?);
            use std::io::Write as _;
            let cols: Vec<String> = (1..=orbit.dimension).map(|i| format!("x{i}")).collect();
            writeln!(w, "index,{}", cols.join(","))?;
            for i in 0..orbit.len() {
                let vals: Vec<String> = orbit.state(i).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{}", i, vals.join(","))?;
            }
            dump_binary(&dir.join("orbit.bin"), orbit.dimension, orbit.raw())?;
            eprintln!("wrote {} states to {}", orbit.len(), dir.display());
            Ok(true)
        }
        Cmd::Ensemble { exp } => {
            let micro = exp.micro.clone().unwrap_or_else(|| "sin".into());
            let id = match micro.as_str() {
                "quasi" => "aperiodic-quasi",
                "modulated" => "aperiodic-modulated",
                _ => "ergodicity-1d",
            };
            let cfg = load_config(cli, id, exp)?;
            emit(&run_experiment(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Lyapunov { exp } => {
            let cfg = load_config(cli, "lyapunov-sweep", exp)?;
            emit(&run_lyapunov_sweep(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Bifurcation { exp } => {
            let cfg = load_config(cli, "bifurcation", exp)?;
            emit(&run_bifurcation(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Gibbs {
            exp,
            sigma2,
            resolution,
            samples,
        } => {
            let cfg = load_config(cli, "gibbs", exp)?;
            let f0 = catalog_macro(cfg.macro_id.as_deref().unwrap_or("quartic"))?;
            let eta = cfg.eta.unwrap_or(0.1);
            let g = gibbs_density(&f0, eta, *sigma2, *resolution)?;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            use std::io::Write as _;
            let mut w =
                std::io::BufWriter::new(std::fs::File::create(dir.join("gibbs_density.csv"))?);
            if g.dimension() == 1 {
                writeln!(w, "x,density")?;
                let (grid, _) = g.marginal_table(0);
                for &x in grid {
                    writeln!(w, "{},{}", x, g.pdf(&[x]))?;
                }
            } else {
                writeln!(w, "x,y,density")?;
                let (gx, _) = g.marginal_table(0);
                let (gy, _) = g.marginal_table(1);
                for &x in gx.iter().step_by(gx.len().div_ceil(512)) {
                    for &y in gy.iter().step_by(gy.len().div_ceil(512)) {
                        writeln!(w, "{},{},{}", x, y, g.pdf(&[x, y]))?;
                    }
                }
            }
            if let Some(n) = samples {
                let s = gibbs_sample(&g, *n, cfg.seed.unwrap_or(0));
                dump_binary(&dir.join("gibbs_samples.bin"), g.dimension(), &s)?;
            }
            eprintln!(
                "Z = {:.12e}, truncation radius = {}, wrote {}",
                g.z,
                g.radius,
                dir.display()
            );
            Ok(true)
        }
        Cmd::Residuals { exp } => {
            let cfg = load_config(cli, "residual-orders", exp)?;
            emit(&run_residual_orders(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Escape { exp } => {
            let cfg = load_config(cli, "escape-dichotomy", exp)?;
            emit(&run_escape_dichotomy(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Momentum { exp } => {
            let cfg = load_config(cli, "momentum", exp)?;
            emit(&run_momentum(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Matyas { exp } => {
            let cfg = load_config(cli, "matyas-2d", exp)?;
            emit(&run_matyas_2d(&cfg)?, cfg.out_dir.as_deref())
        }
        Cmd::Suite => {
            let mut all_pass = true;
            let ids: Vec<&str> = EXPERIMENT_IDS
                .iter()
                .copied()
                .chain(["residual-orders"])
                .collect();
            for id in ids {
                let cfg = load_config(cli, id, &ExpArgs::default())?;
                let v = if id == "ergodicity-1d" {
                    run_ergodicity_1d(&cfg)?
                } else {
                    run_experiment(&cfg)?
                };
                println!(
                    "{:<22} {}  ({:.1}s)",
                    v.experiment,
                    if v.pass { "PASS" } else { "FAIL" },
                    v.runtime_secs
                );
                if let Some(dir) = &cfg.out_dir {
                    v.write(dir)?;
                }
                all_pass &= v.pass;
            }
            Ok(all_pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: could not configure {w} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more acceptance checks failed");
            ExitCode::from(1)
        }
        Err(e @ Error::Divergence { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
