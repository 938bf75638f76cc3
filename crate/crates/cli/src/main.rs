use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "fdperm",
    version,
    about = "Permutation tests for equality of distributions of functional data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a CSV sample for equal group distributions.
    Test(TestArgs),
    /// Monte Carlo power study over the ten simulation designs.
    Simulate(SimulateArgs),
    /// Asymptotic local-power curves for mean, variance and correlation shifts.
    PowerAnalytic(AnalyticArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for CSV/JSON outputs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TestingArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha_tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_nu: Option<f64>,
    /// Number of permutation plans Q̃ (including the identity).
    #[arg(long)]
    perms: Option<usize>,
    /// Number of random functions drawn from μ.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Number of basis functions (odd).
    #[arg(long = "K")]
    k: Option<usize>,
    /// `auto` or a number.
    #[arg(long)]
    mu1: Option<String>,
    /// gaussian, uniform, or student-t(df).
    #[arg(long)]
    coeff_law: Option<String>,
    /// randomized or conservative.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Enumerate every distinct relabeling instead of sampling.
    #[arg(long)]
    exhaustive: bool,
    /// Also run the energy-distance test.
    #[arg(long)]
    energy: bool,
    #[command(flatten)]
    testing: TestingArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Comma-separated design ids, 1 to 10.
    #[arg(long)]
    designs: Option<String>,
    /// Semicolon-separated tests: tau; eta(a,b); SR.
    #[arg(long)]
    tests: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Three comma-separated group sizes.
    #[arg(long)]
    sizes: Option<String>,
    /// Number of time points.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Multiplier on the design shifts.
    #[arg(long)]
    shift_scale: Option<f64>,
    #[command(flatten)]
    testing: TestingArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    /// Evaluation points `a:b;c:d`, applied to all three curves.
    #[arg(long, allow_hyphen_values = true)]
    eval_points: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn apply_testing(cfg: &mut RunConfig, a: &TestingArgs) -> Result<()> {
    if let Some(v) = a.alpha_tau {
        cfg.alpha_tau = v;
    }
    if let Some(v) = a.alpha_nu {
        cfg.alpha_nu = v;
    }
    if let Some(v) = a.perms {
        cfg.n_perms = v;
    }
    if let Some(v) = a.l {
        cfg.l = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = &a.mu1 {
        cfg.mu1 = config::parse_mu1(v)?;
    }
    if let Some(v) = &a.coeff_law {
        cfg.coeff_law = v.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(v) = &a.mode {
        cfg.mode = v.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_testing(&mut cfg, &a.testing)?;
            cfg.exhaustive |= a.exhaustive;
            cfg.energy |= a.energy;
            commands::run_with_threads(cfg.threads, || {
                commands::cmd_test(&cfg, &a.input, a.common.out_dir.as_deref())
            })
        }
        Command::Simulate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_testing(&mut cfg, &a.testing)?;
            if let Some(v) = &a.designs {
                cfg.apply(&[("designs".to_string(), v.clone())].into())?;
            }
            if let Some(v) = &a.tests {
                cfg.tests = config::parse_tests(v)?;
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = &a.sizes {
                cfg.apply(&[("sizes".to_string(), v.clone())].into())?;
            }
            if let Some(v) = a.horizon {
                cfg.horizon = v;
            }
            if let Some(v) = a.shift_scale {
                cfg.shift_scale = v;
            }
            commands::run_with_threads(cfg.threads, || {
                commands::cmd_simulate(&cfg, a.common.out_dir.as_deref())
            })
        }
        Command::PowerAnalytic(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(v) = &a.eval_points {
                cfg.eval_points = Some(config::parse_points(v)?);
            }
            commands::cmd_power_analytic(&cfg, a.common.out_dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
