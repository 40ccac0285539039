//! The command-line front end, run as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

fn tk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tipping-kit"))
        .env("TIPPING_KIT_OUT", out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        "fold",
        "criterion",
        "exceedance",
        "classify",
        "critical-curve",
        "fpe1d",
        "fpe2d",
        "mode",
        "mc",
        "estimate-db",
        "reproduce",
        "run",
    ] {
        let o = tk(dir.path(), &[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("Usage:") && text.contains("--out"), "{cmd}: {text}");
    }
    let top = tk(dir.path(), &["--help"]);
    assert!(String::from_utf8_lossy(&top.stdout).contains("decades"));
}

#[test]
fn criterion_worked_example_is_safe() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["criterion", "--db", "318.36", "--R", "0.005", "--te", "3.0"]);
    assert!(o.status.success());
    let v = json(&dir.path().join("criterion.json"));
    assert_eq!(v["verdict"]["tipped"], false);
    assert!(v["verdict"]["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn deep_well_fpe_is_tiny_and_output_dir_comes_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["fpe1d", "--p0", "-9", "--p2", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("fpe1d.json"));
    assert!(v["p_esc"].as_f64().unwrap() < 1e-3);
    assert!(dir.path().join("fpe1d_mass.csv").exists());
}

#[test]
fn validation_errors_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["criterion", "--db", "-1", "--R", "0.01", "--te", "-2"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "validation");
    assert_eq!(e["problems"].as_array().unwrap().len(), 2);

    let o = tk(dir.path(), &["criterion", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["mode", "--p0", "0.3", "--p2", "0.2"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "mode-approx-invalid");
    let o = tk(dir.path(), &["mode", "--p0", "0.3", "--p2", "0.2", "--allow-invalid"]);
    assert!(o.status.success());
}

#[test]
fn years_flag_converts_exceedance_times() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["--years", "criterion", "--db", "318.36", "--R", "0.02", "--te", "15"]);
    assert!(o.status.success());
    let v = json(&dir.path().join("criterion.json"));
    let crit = v["critical_t_e"].as_f64().unwrap();
    assert!((crit - 15.85).abs() < 0.01, "{crit}");
}

#[test]
fn experiment_file_runs_and_bad_keys_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "analysis = \"fpe1d\"\noutput = \"{}\"\n[forcing]\np0 = -0.5\np2 = 2.0\n[solver]\nnx = 401\n",
            out.display()
        ),
    )
    .unwrap();
    let o = tk(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("fpe1d.json").exists());

    std::fs::write(&cfg, "analysis = \"mc\"\n[forcing]\np0 = 0\nspeed = 1\n[solver]\nnx = 3\n").unwrap();
    let o = tk(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["problems"].as_array().unwrap().len(), 2);
}

#[test]
fn identical_runs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = tk(dir.path(), &["--threads", "2", "reproduce", "fig5", "--coarse"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = tk(dir.path(), &["mc", "--p0", "0", "--p2", "1", "--paths", "3000", "--seed", "5"]);
        assert!(o.status.success());
    }
    for f in ["fig5/fig5_mode.csv", "fig5/fig5_sections.csv", "mc.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn exhausted_budget_leaves_a_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["--budget-secs", "0", "reproduce", "fig4", "--coarse"]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "budget-exceeded");
    let m = json(&dir.path().join("fig4/manifest.json"));
    assert_eq!(m["complete"], false);
    assert_eq!(m["total"], 400);
}

#[test]
fn reproduce_fig1_writes_four_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["reproduce", "fig1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["green", "pink", "light-brown", "bright-blue"] {
        let text = std::fs::read_to_string(dir.path().join(format!("fig1/fig1_{name}.csv"))).unwrap();
        assert!(text.starts_with("t,A_sys,Q_a,T_a"), "{name}");
    }
}

#[test]
fn estimate_db_recovers_an_ou_rate_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let (lambda, dt) = (-2.0f64, 0.01f64);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x = 0.0;
    let mut csv = String::from("t,x\n");
    for k in 0..100_000 {
        let z: f64 = StandardNormal.sample(&mut rng);
        x += lambda * x * dt + dt.sqrt() * z;
        csv.push_str(&format!("{},{x}\n", k as f64 * dt));
    }
    let input = dir.path().join("ou.csv");
    std::fs::write(&input, csv).unwrap();
    let o = tk(
        dir.path(),
        &["estimate-db", "--input", input.to_str().unwrap(), "--dt", "0.01", "--qc", "0", "--qb", "1"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("estimate_db.json"));
    let est = v["estimate"]["lambda"].as_f64().unwrap();
    assert!((est / lambda - 1.0).abs() < 0.05, "{est}");
}

#[test]
fn estimate_db_on_the_noisy_monsoon_is_near_the_fold_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = tk(dir.path(), &["estimate-db", "--simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("estimate_db.json"));
    let d = v["estimate"]["d"].as_f64().unwrap();
    assert!((d / 318.36 - 1.0).abs() < 0.25, "{d}");
}

#[test]
fn constant_series_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    std::fs::write(&input, format!("x\n{}", "1.0\n".repeat(5000))).unwrap();
    let o = tk(
        dir.path(),
        &["estimate-db", "--input", input.to_str().unwrap(), "--dt", "0.01", "--qc", "0", "--qb", "1"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "invalid-autocorrelation");
}
