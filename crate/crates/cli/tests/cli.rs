use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fdperm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdperm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Deterministic pseudo-random values without pulling in an RNG crate.
fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
}

fn write_csv(dir: &Path, name: &str, sizes: &[usize], j: usize, seed: u64) -> PathBuf {
    let mut s = String::from("id,group");
    for t in 1..=j {
        let _ = write!(s, ",t{t}");
    }
    s.push('\n');
    let mut state = seed;
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let _ = write!(s, "g{g}u{i},{g}");
            for _ in 0..j {
                let _ = write!(s, ",{}", lcg(&mut state));
            }
            s.push('\n');
        }
    }
    let path = dir.join(name);
    fs::write(&path, s).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identical_groups_give_zero_tau_and_unit_p_value() {
    let dir = TempDir::new().unwrap();
    let mut s = String::from("id,group,t1,t2,t3\n");
    for (i, row) in ["0.1,0.4,-0.2", "1.2,0.3,0.8", "-0.5,0.0,0.6", "0.9,1.4,0.2"]
        .iter()
        .enumerate()
    {
        let _ = writeln!(s, "a{i},0,{row}");
        let _ = writeln!(s, "b{i},1,{row}");
    }
    let input = dir.path().join("dup.csv");
    fs::write(&input, s).unwrap();
    let out = dir.path().join("out");
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--perms",
        "99",
        "--L",
        "200",
        "--K",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("report.json"));
    assert_eq!(v["report"]["tau"]["observed"].as_f64().unwrap(), 0.0);
    assert_eq!(v["report"]["tau"]["p_value"].as_f64().unwrap(), 1.0);
    assert!(out.join("report.csv").exists());
    assert!(out.join("config.txt").exists());
}

#[test]
fn five_groups_with_field_sizes_run() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "five.csv", &[524, 236, 227, 251, 254], 6, 7);
    let out = dir.path().join("out");
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--perms",
        "49",
        "--L",
        "200",
        "--K",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("report.json"));
    let sizes: Vec<u64> = v["report"]["group_sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect();
    assert_eq!(sizes, vec![524, 236, 227, 251, 254]);
}

#[test]
fn alpha_split_is_labeled_as_a_pair() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "two.csv", &[8, 9], 4, 3);
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--alpha-tau",
        "0.04",
        "--alpha-nu",
        "0.01",
        "--perms",
        "49",
        "--L",
        "100",
        "--K",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("(0.04, 0.01)"), "{text}");
    assert!(text.contains("eta"));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "two.csv", &[6, 6], 3, 5);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# desk run\nK = 5\nL = 150\nperms = 39\nseed = 9\nmode = conservative\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--K",
        "7",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("report.json"));
    assert_eq!(v["k"], 7);
    assert_eq!(v["l"], 150);
    assert_eq!(v["seed"], 9);
    assert_eq!(v["report"]["tau"]["mode"], "conservative");
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "two.csv", &[7, 7], 4, 11);
    let first = dir.path().join("first");
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--perms",
        "59",
        "--L",
        "120",
        "--K",
        "5",
        "--seed",
        "123",
        "--out-dir",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let second = dir.path().join("second");
    let o = fdperm(&[
        "test",
        "--input",
        input.to_str().unwrap(),
        "--config",
        first.join("config.txt").to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(first.join("report.csv")).unwrap(),
        fs::read(second.join("report.csv")).unwrap()
    );
}

#[test]
fn invalid_inputs_fail_with_nonzero_status() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "two.csv", &[5, 5], 3, 1);
    let path = input.to_str().unwrap();
    assert!(!fdperm(&["test", "--input", "/nonexistent/x.csv"])
        .status
        .success());
    assert!(!fdperm(&["test", "--input", path, "--K", "4", "--L", "50"])
        .status
        .success());
    assert!(!fdperm(&["test", "--input", path, "--perms", "18", "--L", "50"])
        .status
        .success());
    assert!(
        !fdperm(&["test", "--input", path, "--alpha-tau", "0.6", "--alpha-nu", "0.5"])
            .status
            .success()
    );

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,group,t1,t2\na,0,1.0,x\nb,1,2.0,3.0\n").unwrap();
    let o = fdperm(&["test", "--input", bad.to_str().unwrap(), "--L", "50"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-numeric"));

    let one = write_csv(dir.path(), "one.csv", &[6], 3, 2);
    assert!(!fdperm(&["test", "--input", one.to_str().unwrap(), "--L", "50"])
        .status
        .success());
}

const SIM: &[&str] = &[
    "simulate", "--perms", "49", "--L", "150", "--K", "5", "--sizes", "8,8,8", "--T", "24",
];

#[test]
fn simulate_design_one_has_nominal_size() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let mut args = SIM.to_vec();
    args.extend([
        "--reps",
        "100",
        "--designs",
        "1",
        "--tests",
        "tau",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let o = fdperm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("power_table.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let rate: f64 = rows[0].split(',').nth(6).unwrap().parse().unwrap();
    let se = (0.05f64 * 0.95 / 100.0).sqrt();
    assert!((rate - 0.05).abs() <= 3.0 * se, "rate {rate}");
}

#[test]
fn simulate_rejects_unknown_design() {
    let mut args = SIM.to_vec();
    args.extend(["--designs", "11"]);
    let o = fdperm(&args);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("11"));
}

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let mut args = SIM.to_vec();
        args.extend([
            "--designs",
            "2,8",
            "--reps",
            "12",
            "--seed",
            "77",
            "--threads",
            threads,
        ]);
        args.extend(["--out-dir", out.to_str().unwrap()]);
        assert!(fdperm(&args).status.success());
        outputs.push(fs::read(out.join("power_table.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn power_analytic_emits_three_curves() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("curves");
    let o = fdperm(&[
        "power-analytic",
        "--eval-points",
        "-0.4:0.4",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["mean", "variance", "correlation"] {
        let text = fs::read_to_string(out.join(format!("power_{name}.csv"))).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("eval_points=(-0.4,0.4)"), "{first}");
    }
    let mean = fs::read_to_string(out.join("power_mean.csv")).unwrap();
    let zero_row = mean.lines().nth(2).unwrap();
    let cols: Vec<&str> = zero_row.split(',').collect();
    assert_eq!(cols[0], "0");
    assert_eq!(cols[1], "0.050000");
    assert_eq!(cols[2], "0.050000");
    assert!(stdout(&o).contains("(-0.4, 0.4)"));
}
