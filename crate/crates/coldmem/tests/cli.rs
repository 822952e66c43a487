use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coldmem::config::presets;
use coldmem::output::parse_report;

fn coldmem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldmem"))
        .args(args)
        .current_dir(dir)
        .env_remove("COLDMEM_SEED")
        .output()
        .unwrap()
}

fn report_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    parse_report(&text)
        .into_iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
}

#[test]
fn simulate_fig2_writes_curve_and_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fig2.toml"), presets::fig2().to_toml_string()).unwrap();
    let out = coldmem(&["simulate", "fig2.toml", "--out-dir", "out", "--plot"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/curve.csv")).unwrap();
    assert!(csv.starts_with("delay_us,g,sigma_g\n"));
    assert_eq!(csv.lines().count(), 13);
    let report = dir.path().join("out/fit_report.txt");
    assert_eq!(report_value(&report, "model"), "gaussian");
    let tau: f64 = report_value(&report, "tau_D_us").parse().unwrap();
    assert!((22.0..28.0).contains(&tau), "{tau}");
    assert!(dir.path().join("out/plot.gp").exists());
}

#[test]
fn simulate_fig4_fits_loss_lifetime() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fig4.toml"), presets::fig4().to_toml_string()).unwrap();
    let out = coldmem(&["simulate", "fig4.toml", "--out-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = dir.path().join("fit_report.txt");
    assert_eq!(report_value(&report, "model"), "lorentzian");
    let tau: f64 = report_value(&report, "lifetime_us").parse().unwrap();
    assert!((850.0..1150.0).contains(&tau), "{tau}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("empty.toml", "delays_us = []\n"),
        ("typo.toml", "theta_deg = 3\ntemprature_uK = 50\n"),
        ("pair.toml", "state_pair = \"1,2/2,0\"\n"),
        ("neg.toml", "waist_um = -1\n"),
        ("syntax.toml", "theta_deg = \n"),
        ("typo.json", "{\"theta\": 3}"),
    ] {
        fs::write(dir.path().join(name), body).unwrap();
        let out = coldmem(&["simulate", name, "--out-dir", "out"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(!out.stderr.is_empty(), "{name}");
    }
    let typo = coldmem(&["simulate", "typo.toml"], dir.path());
    let msg = String::from_utf8_lossy(&typo.stderr);
    assert!(msg.contains("line 2") && msg.contains("temprature_uK"), "{msg}");
    assert_eq!(
        coldmem(&["simulate", "missing.toml"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(coldmem(&["no-such-command"], dir.path()).status.code(), Some(2));
}

#[test]
fn fit_failure_exits_3_and_keeps_curve() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dark.toml"), "chi = 0\ntrials_per_point = 1000\n").unwrap();
    let out = coldmem(&["simulate", "dark.toml", "--out-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        fs::read_to_string(dir.path().join("out/curve.csv")).unwrap(),
        "delay_us,g,sigma_g\n"
    );
    assert_eq!(
        report_value(&dir.path().join("out/fit_report.txt"), "converged"),
        "false"
    );
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coldmem::ScenarioConfig {
        engine: coldmem::config::Engine::Mc,
        atom_count: 10_000,
        ..presets::fig3b()
    };
    fs::write(dir.path().join("mc.toml"), cfg.to_toml_string()).unwrap();
    let mut curves = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out_dir = format!("run{i}");
        let out = coldmem(
            &["--threads", threads, "simulate", "mc.toml", "--out-dir", &out_dir],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
        curves.push(fs::read(dir.path().join(out_dir).join("curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
    assert_eq!(curves[1], curves[2]);
}

#[test]
fn seed_env_changes_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "trials_per_point = 100000\n").unwrap();
    let run = |seed: Option<&str>, out_dir: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_coldmem"));
        cmd.args(["simulate", "s.toml", "--out-dir", out_dir])
            .current_dir(dir.path());
        match seed {
            Some(s) => cmd.env("COLDMEM_SEED", s),
            None => cmd.env_remove("COLDMEM_SEED"),
        };
        cmd.status().unwrap();
        fs::read(dir.path().join(out_dir).join("curve.csv")).unwrap()
    };
    let default = run(None, "a");
    assert_eq!(default, run(Some("1"), "b"));
    assert_ne!(default, run(Some("2"), "c"));
}

#[test]
fn fit_subcommand_reads_external_csv() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..12)
        .map(|i| {
            let t = 0.5 + 6.0 * i as f64;
            let g = 1.0 + 10.0 * (-(t / 25.0f64).powi(2)).exp();
            format!("{t},{g},0.3\n")
        })
        .collect();
    fs::write(dir.path().join("c.csv"), format!("delay_us,g,sigma_g\n{rows}")).unwrap();
    let out = coldmem(&["fit", "c.csv", "--model", "gaussian"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let kv = parse_report(&text);
    let tau: f64 = kv.iter().find(|(k, _)| k == "tau_D_us").unwrap().1.parse().unwrap();
    assert!((tau - 25.0).abs() < 1e-3, "{tau}");

    let fixed = coldmem(
        &["fit", "c.csv", "--model", "combined", "--fix-a", "0", "--exclude-first"],
        dir.path(),
    );
    assert_eq!(fixed.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&fixed.stdout).contains("A_fixed=true"));

    fs::write(dir.path().join("bad.csv"), "t,g\n1,2\n").unwrap();
    assert_eq!(
        coldmem(&["fit", "bad.csv", "--model", "gaussian"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        coldmem(&["fit", "c.csv", "--model", "gaussian", "--fix-a", "1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_writes_lifetimes_and_temperature() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "seed = 12\n").unwrap();
    let out = coldmem(
        &["sweep", "s.toml", "--angles", "3,1.5,0.6,0.2", "--out-dir", "sw"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("sw/lifetimes.csv")).unwrap();
    let lifetimes: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lifetimes.len(), 4);
    assert!(lifetimes.windows(2).all(|w| w[1] > w[0]), "{table}");
    let t: f64 = report_value(&dir.path().join("sw/temperature.txt"), "temperature_uK")
        .parse()
        .unwrap();
    let s: f64 = report_value(&dir.path().join("sw/temperature.txt"), "temperature_sigma_uK")
        .parse()
        .unwrap();
    assert!((t - 100.0).abs() <= 3.0 * s, "{t} +/- {s}");
    assert!(dir.path().join("sw/curve_theta_0.2.csv").exists());
}

#[test]
fn sweep_single_angle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "seed = 3\n").unwrap();
    let out = coldmem(&["sweep", "s.toml", "--angles", "3", "--out-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report_value(&dir.path().join("temperature.txt"), "angles_used"), "1");
}

#[test]
fn reproduce_table_passes_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = coldmem(&["reproduce"], dir.path());
    let b = coldmem(&["reproduce"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with("PASS")).count(), 9, "{text}");

    let hot = coldmem(&["reproduce", "--temperature-uk", "400"], dir.path());
    let text = String::from_utf8(hot.stdout).unwrap();
    let failing: Vec<_> = text.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert!(failing.iter().any(|l| l.starts_with("tau_D(3 deg)")), "{text}");
}

#[test]
fn preset_output_is_a_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    for name in presets::NAMES {
        let out = coldmem(&["preset", name], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let cfg = coldmem::ScenarioConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(cfg, presets::by_name(name).unwrap());
    }
}
