use std::path::{Path, PathBuf};
use std::process::Command;

use isotm_cli::VerificationReport;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn isotm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_isotm")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn verify_report(name: &str) -> (i32, VerificationReport) {
    let path = scenario(name);
    let (code, stdout, _) = isotm(&["verify", path.to_str().unwrap()]);
    (code, serde_json::from_str(&stdout).unwrap())
}

#[test]
fn hopf_scenario_is_harmonic_and_exits_zero() {
    let (code, report) = verify_report("hopf_sasaki.json");
    assert_eq!(code, 0);
    let h = report.checks.iter().find(|c| c.name.as_str() == "harmonic_residual").unwrap();
    assert_eq!(h.verdict, "HARMONIC");
    for c in &report.checks {
        assert_eq!(c.verdict, c.recompute_verdict(), "{}", c.name.as_str());
    }
}

#[test]
fn sasaki_scan_reports_non_integrable_without_failing() {
    let (code, report) = verify_report("sphere2_nijenhuis.json");
    assert_eq!(code, 0);
    let scan = &report.checks[0];
    assert_eq!(scan.verdict, "NOT_INTEGRABLE");
    assert!(scan.max_residual.unwrap() > 1e-2);
}

#[test]
fn negative_b_is_a_config_error() {
    let path = scenario("bad_b.json");
    let (code, _, stderr) = isotm(&["verify", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("structure.b"), "{stderr}");
}

#[test]
fn unmet_expectation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let text = std::fs::read_to_string(scenario("sphere2_nijenhuis.json"))
        .unwrap()
        .replace(r#""sampling""#, r#""expect": {"nijenhuis_scan": "INTEGRABLE"}, "sampling""#);
    std::fs::write(&path, text).unwrap();
    let (code, stdout, _) = isotm(&["verify", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    let report: VerificationReport = serde_json::from_str(&stdout).unwrap();
    assert!(!report.all_passed);
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let path = scenario("sphere2_sigma0.json");
    let p = path.to_str().unwrap();
    let (_, a, _) = isotm(&["verify", p, "--seed", "5"]);
    let (_, b, _) = isotm(&["verify", p]);
    let (_, c, _) = isotm(&["verify", p, "--seed", "6"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn flat_residual_dump() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    let path = scenario("flat_example.json");
    let (code, _, _) = isotm(&["dump", path.to_str().unwrap(), "--what", "residual", "--csv", csv_path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x1", "x2", "y1", "y2", "value"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 625);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() <= 1e-7));
}

#[test]
fn energy_density_and_nijenhuis_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    let path = scenario("hopf_sasaki.json");
    let text = std::fs::read_to_string(&path).unwrap().replace(r#""grid": 48"#, r#""grid": 6"#);
    let small = dir.path().join("hopf.json");
    std::fs::write(&small, text).unwrap();
    let (code, _, _) = isotm(&["dump", small.to_str().unwrap(), "--what", "energy-density", "--csv", e.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&e).unwrap();
    for r in rdr.records() {
        assert!((r.unwrap()[3].parse::<f64>().unwrap() - 2.5).abs() < 1e-6);
    }

    let n = dir.path().join("n.csv");
    let text = std::fs::read_to_string(scenario("sphere2_nijenhuis.json")).unwrap().replace(r#""seed": 3"#, r#""seed": 3, "grid": 4"#);
    let s2 = dir.path().join("s2.json");
    std::fs::write(&s2, text).unwrap();
    let (code, _, _) = isotm(&["dump", s2.to_str().unwrap(), "--what", "nijenhuis-norm", "--csv", n.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&n).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        let y: f64 = r[2].parse::<f64>().unwrap().hypot(r[3].parse().unwrap());
        if y > 0.0 {
            assert!(r[4].parse::<f64>().unwrap() > 0.0);
        }
    }
}
