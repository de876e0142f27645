use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use qfc_core::channels::NoiseKind;
use qfc_core::controllers::{basic_policy, Policy};
use qfc_core::dynamics::EnvConfig;
use qfc_core::harness::{self, emit_report, read_results, threshold_alpha, Scenario, SweepConfig, SweepOptions};
use qfc_core::rl::checkpoint;
use qfc_core::rl::ppo::{log_update, write_training_curve};
use qfc_core::rl::{params_checksum, train, AgentKind, PpoConfig};
use qfc_core::Error;

#[derive(Parser, Debug)]
#[command(name = "qfc", version, about = "Measurement-based feedback state preparation on a qutrit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent with PPO and save a checkpoint.
    Train {
        #[arg(long)]
        scenario: AgentKind,
        #[arg(long, default_value = "depolarizing")]
        noise: NoiseKind,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        timesteps: usize,
        #[arg(long, default_value_t = EnvConfig::DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the basic controller or a checkpoint on the noisy dynamics.
    Eval {
        /// `basic` or a checkpoint path.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        noise: NoiseKind,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = EnvConfig::DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = 0.9)]
        f_star: f64,
    },
    /// Run the configured grid and write the report into its output directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Replace the grids with α ∈ {0, 0.2, 0.4, 0.6}, ε ∈ {0.1, 0.2}, 200 episodes.
        #[arg(long)]
        desk_scale: bool,
        #[arg(long)]
        resume: bool,
    },
    /// Regenerate thresholds and charts from an existing results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        f_star: f64,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Parameter { .. } => 1,
                Error::MissingCheckpoint { .. } => 2,
                _ => 3,
            };
        }
    }
    3
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("QFC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("QFC_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn load_policy(spec: &str) -> Result<(Scenario, Policy)> {
    if spec == "basic" {
        return Ok((Scenario::Basic, basic_policy()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::MissingCheckpoint {
            cell: "eval".into(),
            path: path.to_path_buf(),
        }
        .into());
    }
    let ck = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let scenario: Scenario = ck.scenario.parse()?;
    Ok((scenario, Policy::stochastic(ck.net)))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Train {
            scenario,
            noise,
            alpha,
            epsilon,
            seed,
            timesteps,
            horizon,
            out: path,
        } => {
            let env = EnvConfig::new(noise, alpha, epsilon).with_horizon(horizon);
            let cfg = PpoConfig {
                total_timesteps: timesteps,
                ..scenario.default_ppo()
            };
            let trained = train(scenario, &env, &cfg, seed)?;
            for r in &trained.curve {
                log_update(&mut out, r)?;
            }
            checkpoint::save(&path, scenario.name(), &trained.net)?;
            let curve = path.with_extension("curve.csv");
            write_training_curve(&curve, &trained.curve)?;
            writeln!(out, "checkpoint {}", path.display())?;
            writeln!(out, "curve {}", curve.display())?;
            writeln!(out, "filter_aborts {}", trained.filter_aborts)?;
            writeln!(out, "checksum {:016x}", params_checksum(trained.net.params()))?;
        }
        Command::Eval {
            policy,
            noise,
            alpha,
            epsilon,
            episodes,
            seed,
            horizon,
            f_star,
        } => {
            let (scenario, policy) = load_policy(&policy)?;
            let env = EnvConfig::new(noise, alpha, epsilon).with_horizon(horizon);
            let r = harness::evaluate(scenario, &policy, &env, episodes, seed, f_star)?;
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
            writeln!(out, "scenario {}", r.scenario)?;
            writeln!(out, "noise {} alpha {} epsilon {}", r.noise, r.alpha, r.epsilon)?;
            writeln!(out, "episodes {} aborted {}", r.episodes, r.aborted)?;
            writeln!(out, "mean_fidelity {}", r.mean_fidelity)?;
            writeln!(out, "std_fidelity {}", r.std_fidelity)?;
            writeln!(out, "mean_steps_to_threshold {}", opt(r.mean_steps_to_threshold))?;
            writeln!(out, "std_steps_to_threshold {}", opt(r.std_steps_to_threshold))?;
            writeln!(out, "unreached_count {}", r.unreached_count)?;
        }
        Command::Sweep {
            config,
            desk_scale,
            resume,
        } => {
            let mut cfg = SweepConfig::from_file(&config)?;
            if desk_scale {
                cfg = cfg.with_desk_grid();
            }
            writeln!(out, "{} cells -> {}", cfg.n_cells(), cfg.out_dir.display())?;
            let results = harness::sweep(&cfg, SweepOptions { resume })?;
            let thresholds = threshold_alpha(&results, cfg.f_star);
            for p in emit_report(&results, &thresholds, &cfg.out_dir)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
        Command::Report { results, out: dir, f_star } => {
            if !(f_star > 0.0 && f_star <= 1.0) {
                return Err(Error::Config(format!("f_star must lie in (0, 1], got {f_star}")).into());
            }
            let rs = read_results(&results).with_context(|| format!("reading {}", results.display()))?;
            if rs.is_empty() {
                return Err(anyhow!(Error::Results("results.csv has no rows".into())));
            }
            let thresholds = threshold_alpha(&rs, f_star);
            for p in emit_report(&rs, &thresholds, &dir)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
