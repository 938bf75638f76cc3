//! Flat `key = value` configuration shared by all subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fdperm::montecarlo::PowerTest;
use fdperm::{CoeffLaw, DecisionMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mu1 {
    Auto,
    Fixed(f64),
}

/// Every tunable of a run. Defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha_tau: f64,
    pub alpha_nu: f64,
    pub n_perms: usize,
    pub exhaustive: bool,
    pub l: usize,
    pub k: usize,
    pub mu1: Mu1,
    pub coeff_law: CoeffLaw,
    pub seed: u64,
    pub mode: DecisionMode,
    pub threads: Option<usize>,
    pub energy: bool,
    // simulate
    pub designs: Vec<usize>,
    pub tests: Vec<PowerTest>,
    pub reps: usize,
    pub sizes: Vec<usize>,
    pub horizon: usize,
    pub shift_scale: f64,
    // power-analytic
    pub eval_points: Option<Vec<(f64, f64)>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha_tau: 0.025,
            alpha_nu: 0.025,
            n_perms: 500,
            exhaustive: false,
            l: 4000,
            k: 19,
            mu1: Mu1::Auto,
            coeff_law: CoeffLaw::Gaussian,
            seed: 20_100_601,
            mode: DecisionMode::Randomized,
            threads: None,
            energy: false,
            designs: (1..=10).collect(),
            tests: PowerTest::standard_set(),
            reps: 300,
            sizes: vec![20, 20, 20],
            horizon: 96,
            shift_scale: 1.0,
            eval_points: None,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| anyhow!("config key `{key}`: cannot parse `{v}`"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn bool_value(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("config key `{key}`: expected a boolean, got `{v}`"),
    }
}

pub fn parse_mu1(v: &str) -> Result<Mu1> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(Mu1::Auto)
    } else {
        Ok(Mu1::Fixed(num("mu1", v)?))
    }
}

/// `a:b;c:d` or `(a,b);(c,d)`.
pub fn parse_points(v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let inner = p.trim_start_matches('(').trim_end_matches(')');
            let (a, b) = inner
                .split_once([',', ':'])
                .ok_or_else(|| anyhow!("bad evaluation point `{p}`"))?;
            Ok((num("eval_points", a.trim())?, num("eval_points", b.trim())?))
        })
        .collect()
}

/// `(a,b)` or `a,b` split of the total level.
pub fn parse_split(v: &str) -> Result<(f64, f64)> {
    let inner = v.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<f64> = list("alpha_split", inner)?;
    match parts.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => bail!("alpha_split needs two values, got `{v}`"),
    }
}

/// `tau; eta(0.02,0.03); SR`. Semicolons separate because splits contain commas.
pub fn parse_tests(v: &str) -> Result<Vec<PowerTest>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<PowerTest>().map_err(|e| anyhow!("{e}")))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply(&parse_flat(&text)?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, v) in map {
            match key.as_str() {
                "alpha_tau" => self.alpha_tau = num(key, v)?,
                "alpha_nu" => self.alpha_nu = num(key, v)?,
                "alpha_split" => (self.alpha_tau, self.alpha_nu) = parse_split(v)?,
                "perms" | "n_perms" => self.n_perms = num(key, v)?,
                "exhaustive" => self.exhaustive = bool_value(key, v)?,
                "L" | "l" => self.l = num(key, v)?,
                "K" | "k" => self.k = num(key, v)?,
                "mu1" => self.mu1 = parse_mu1(v)?,
                "coeff_law" => self.coeff_law = v.parse().map_err(|e| anyhow!("{e}"))?,
                "seed" => self.seed = num(key, v)?,
                "mode" => self.mode = v.parse().map_err(|e| anyhow!("{e}"))?,
                "threads" => self.threads = Some(num(key, v)?),
                "energy" => self.energy = bool_value(key, v)?,
                "designs" => self.designs = list(key, v)?,
                "tests" => self.tests = parse_tests(v)?,
                "reps" => self.reps = num(key, v)?,
                "sizes" => self.sizes = list(key, v)?,
                "T" | "horizon" => self.horizon = num(key, v)?,
                "shift_scale" => self.shift_scale = num(key, v)?,
                "eval_points" => self.eval_points = Some(parse_points(v)?),
                other => bail!("unknown config key `{other}`"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.alpha_tau, self.alpha_nu);
        if !(a > 0.0 && b > 0.0 && a + b < 1.0) {
            bail!("need 0 < alpha_tau, alpha_nu and alpha_tau + alpha_nu < 1, got ({a}, {b})");
        }
        if !self.exhaustive && self.n_perms < 19 {
            bail!("perms must be at least 19, got {}", self.n_perms);
        }
        if self.k % 2 == 0 {
            bail!("K must be odd, got {}", self.k);
        }
        if self.l == 0 {
            bail!("L must be positive");
        }
        if self.threads == Some(0) {
            bail!("threads must be positive");
        }
        Ok(())
    }

    /// Config echo; feeding it back through `--config` reproduces the run.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "alpha_tau = {}", self.alpha_tau);
        let _ = writeln!(s, "alpha_nu = {}", self.alpha_nu);
        let _ = writeln!(s, "perms = {}", self.n_perms);
        let _ = writeln!(s, "exhaustive = {}", self.exhaustive);
        let _ = writeln!(s, "L = {}", self.l);
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(
            s,
            "mu1 = {}",
            match self.mu1 {
                Mu1::Auto => "auto".to_string(),
                Mu1::Fixed(m) => m.to_string(),
            }
        );
        let _ = writeln!(s, "coeff_law = {}", self.coeff_law);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "energy = {}", self.energy);
        let _ = writeln!(s, "designs = {}", join(&self.designs));
        let tests: Vec<String> = self.tests.iter().map(PowerTest::label).collect();
        let _ = writeln!(s, "tests = {}", tests.join("; "));
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "sizes = {}", join(&self.sizes));
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "shift_scale = {}", self.shift_scale);
        if let Some(points) = &self.eval_points {
            let p: Vec<String> = points.iter().map(|(a, b)| format!("{a}:{b}")).collect();
            let _ = writeln!(s, "eval_points = {}", p.join(";"));
        }
        s
    }
}
