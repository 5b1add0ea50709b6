use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use fracweyl::cli::{resolve_config, Args, EXIT_CONFIG, EXIT_CONSTRAINT};
use fracweyl::config::Study;

fn fracweyl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracweyl"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_after(text: &str, prefix: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no '{prefix}' in {text}"));
    line[prefix.len()..].trim().parse().unwrap()
}

#[test]
fn weyl_constant_of_the_interval_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracweyl(&["weyl-constant", "--a", "0.5", "--domain", "interval:0,3.141592653589793"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((value_after(&text, "C' = ") - 1.0).abs() < 1e-12);
    assert!((value_after(&text, "C = ") - 1.0).abs() < 1e-12);
    assert!(dir.path().join("weyl_constant.json").exists());
}

#[test]
fn classical_spectrum_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracweyl(&["spectrum", "--a", "1", "--domain", "interval:0,1", "--n", "16"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j,lambda"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 15);
    let h = 1.0 / 16.0;
    for (k, v) in values.iter().enumerate() {
        let exact = 4.0 / (h * h) * ((k + 1) as f64 * PI * h / 2.0).sin().powi(2);
        assert!((v - exact).abs() < 1e-10 * exact);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["study"], "spectrum");
    assert_eq!(manifest["config"]["n"], 16);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn order_violation_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracweyl(&["perturbation", "--a", "0.5", "--a-prime", "0.5", "--n", "64"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONSTRAINT));
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 < 2a' < min{2a, a + 1/2}"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn config_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracweyl(&["spectrum", "--a", "1.5", "--n", "8"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "study = \"spectrum\"\nn = 8\nresolution = 3\n").unwrap();
    let o = fracweyl(&["--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resolution"));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "study = \"spectrum\"\na = 0.25\nh = 0.1\nwindow = [0.1, 0.5]\n").unwrap();
    let args = Args::parse_from(["fracweyl", "--config", path.to_str().unwrap(), "--a", "0.75", "--n", "32"]);
    let cfg = resolve_config(&args).unwrap();
    assert_eq!(cfg.study, Some(Study::Spectrum));
    assert_eq!(cfg.a, 0.75);
    assert_eq!((cfg.n, cfg.h), (Some(32), None));
    assert_eq!(cfg.window, [0.1, 0.5]);

    let minimal =
        Args::parse_from(["fracweyl", "--study", "spectrum", "--a", "0.5", "--domain", "interval:0,3.14159", "--n", "256"]);
    resolve_config(&minimal).unwrap();
}

#[test]
fn lanczos_and_dense_solvers_agree_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let dense = dir.path().join("dense");
    let lanczos = dir.path().join("lanczos");
    let common = ["spectrum", "--a", "0.5", "--domain", "interval:0,1", "--n", "200"];
    assert!(fracweyl(&common, &dense).status.success());
    let mut args = common.to_vec();
    args.extend(["--solver", "lanczos", "--count", "6"]);
    assert!(fracweyl(&args, &lanczos).status.success());
    let read = |p: &Path| -> Vec<f64> {
        std::fs::read_to_string(p.join("spectrum.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (d, l) = (read(&dense), read(&lanczos));
    assert_eq!(l.len(), 6);
    for (x, y) in d.iter().zip(&l) {
        assert!((x - y).abs() < 1e-8 * x);
    }
}

#[test]
fn suite_and_boundary_studies_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracweyl(&["snumber-suite", "--seeds", "20", "--seed", "9"], &dir.path().join("suite"));
    assert!(o.status.success());
    assert!(stdout(&o).contains("20 seeds, 0 violations"));
    let o = fracweyl(&["boundary-exponent", "--a", "0.5", "--domain", "interval:0,1", "--n", "512"], &dir.path().join("b"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b/boundary.json")).unwrap()).unwrap();
    assert!((fit["exponent"].as_f64().unwrap() - 0.5).abs() < 0.15);
}
