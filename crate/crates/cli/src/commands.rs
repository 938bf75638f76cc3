use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use fdperm::analytic::{PowerCurve, ShiftKind};
use fdperm::montecarlo::PowerStudyConfig;
use fdperm::rng::{derive_seed, domain};
use fdperm::{
    draw_z, estimate_mu1, load_samples, run_power_study, run_test, MuSpec, PlanConfig, TestConfig,
    TestReport, TestResult,
};
use serde::Serialize;

use crate::config::{Mu1, RunConfig};

pub fn run_with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
        None => f(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn split_label(a: f64, b: f64) -> String {
    format!("({a}, {b})")
}

#[derive(Serialize)]
struct JsonReport<'a> {
    input: String,
    mu1: f64,
    seed: u64,
    k: usize,
    l: usize,
    n_perms: usize,
    config: String,
    report: &'a TestReport,
}

fn result_row(name: &str, a_tau: &str, a_nu: &str, r: &TestResult) -> String {
    format!(
        "{name},{a_tau},{a_nu},{},{},{},{},{}\n",
        r.observed, r.critical, r.p_value, r.phi, r.rejected
    )
}

fn report_csv(rep: &TestReport) -> String {
    let (a, b) = (rep.alpha_tau.to_string(), rep.alpha_nu.to_string());
    let mut s = String::from("statistic,alpha_tau,alpha_nu,observed,critical,p_value,phi,rejected\n");
    s += &result_row("tau", &a, &b, &rep.tau);
    s += &result_row("nu", &a, &b, &rep.nu);
    s += &format!(
        "eta,{a},{b},NA,NA,{},{},{}\n",
        rep.eta_p_value,
        if rep.eta.rejected { 1.0 } else { 0.0 },
        rep.eta.rejected
    );
    if let Some(e) = &rep.energy {
        s += &result_row("SR", "NA", "NA", e);
    }
    s
}

fn print_report(rep: &TestReport, mu1: f64, cfg: &RunConfig, input: &Path) {
    println!("input: {}", input.display());
    println!(
        "groups: {} (sizes {:?}), plans: {}, draws L: {}, K: {}, mu1: {mu1}, seed: {}, mode: {}",
        rep.group_sizes.len(),
        rep.group_sizes,
        rep.n_plans,
        rep.n_draws,
        cfg.k,
        cfg.seed,
        cfg.mode
    );
    println!();
    println!(
        "{:<8}{:<16}{:>14}{:>14}{:>10}{:>8}{:>8}",
        "test", "(a_tau, a_nu)", "observed", "critical", "p-value", "phi", "reject"
    );
    let split = split_label(rep.alpha_tau, rep.alpha_nu);
    let line = |name: &str, split: &str, r: &TestResult| {
        println!(
            "{:<8}{:<16}{:>14.6}{:>14.6}{:>10.4}{:>8.3}{:>8}",
            name,
            split,
            r.observed,
            r.critical,
            r.p_value,
            r.phi,
            if r.rejected { "yes" } else { "no" }
        );
    };
    line("tau", &split, &rep.tau);
    line("nu", &split, &rep.nu);
    println!(
        "{:<8}{:<16}{:>14}{:>14}{:>10.4}{:>8}{:>8}",
        "eta",
        split,
        "",
        "",
        rep.eta_p_value,
        "",
        if rep.eta.rejected { "yes" } else { "no" }
    );
    if let Some(e) = &rep.energy {
        line("SR", "N.A.", e);
    }
}

pub fn cmd_test(cfg: &RunConfig, input: &Path, out_dir: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let sample =
        load_samples(BufReader::new(file)).with_context(|| format!("reading {}", input.display()))?;
    let mu1 = match cfg.mu1 {
        Mu1::Auto => estimate_mu1(&sample)?,
        Mu1::Fixed(m) => m,
    };
    let spec = MuSpec::new(cfg.k, mu1, derive_seed(cfg.seed, domain::Z_DRAWS))?.with_law(cfg.coeff_law)?;
    let z = draw_z(&spec, sample.grid(), cfg.l)?;
    let plans = if cfg.exhaustive {
        PlanConfig::exhaustive()
    } else {
        PlanConfig::sampled(cfg.n_perms, derive_seed(cfg.seed, domain::PLANS))
    };
    let test_cfg = TestConfig {
        alpha_tau: cfg.alpha_tau,
        alpha_nu: cfg.alpha_nu,
        plans,
        decision: cfg.mode,
        seed: cfg.seed,
        energy: cfg.energy,
    };
    let report = run_test(&sample, &z, &test_cfg)?;
    print_report(&report, mu1, cfg, input);
    println!();
    println!("# config");
    print!("{}", cfg.echo());

    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_file(dir, "report.csv", &report_csv(&report))?;
        let json = JsonReport {
            input: input.display().to_string(),
            mu1,
            seed: cfg.seed,
            k: cfg.k,
            l: cfg.l,
            n_perms: report.n_plans,
            config: cfg.echo(),
            report: &report,
        };
        write_file(dir, "report.json", &serde_json::to_string_pretty(&json)?)?;
        write_file(dir, "config.txt", &cfg.echo())?;
    }
    Ok(())
}

pub fn study_config(cfg: &RunConfig) -> PowerStudyConfig {
    PowerStudyConfig {
        designs: cfg.designs.clone(),
        tests: cfg.tests.clone(),
        level: cfg.alpha_tau + cfg.alpha_nu,
        reps: cfg.reps,
        n_perms: cfg.n_perms,
        k: cfg.k,
        l: cfg.l,
        coeff_law: cfg.coeff_law,
        mu1: match cfg.mu1 {
            Mu1::Auto => None,
            Mu1::Fixed(m) => Some(m),
        },
        sizes: cfg.sizes.clone(),
        horizon: cfg.horizon,
        shift_scale: cfg.shift_scale,
        decision: cfg.mode,
        seed: cfg.seed,
    }
}

pub fn cmd_simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let table = run_power_study(&study_config(cfg))?;
    println!("{table}");
    println!();
    println!("# config");
    print!("{}", cfg.echo());
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_file(dir, "power_table.csv", &table.to_csv())?;
        write_file(dir, "config.txt", &cfg.echo())?;
    }
    Ok(())
}

pub fn cmd_power_analytic(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<()> {
    let dir = out_dir.unwrap_or(Path::new("."));
    ensure_dir(dir)?;
    for kind in [ShiftKind::Mean, ShiftKind::Variance, ShiftKind::Correlation] {
        let points = cfg
            .eval_points
            .clone()
            .unwrap_or_else(|| kind.default_eval_points());
        let curve = PowerCurve::compute(kind, kind.default_grid(), points);
        let name = format!("power_{}.csv", kind.name());
        write_file(dir, &name, &curve.to_csv())?;
        let pts: Vec<String> = curve
            .eval_points
            .iter()
            .map(|(a, b)| format!("({a}, {b})"))
            .collect();
        println!(
            "{}: {} rows, eval points {} -> {}",
            kind.name(),
            curve.abscissa.len(),
            pts.join(" "),
            dir.join(&name).display()
        );
    }
    Ok(())
}
