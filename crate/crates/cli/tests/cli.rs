use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn ddx(args: &[&str], out: &Path) -> (i32, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_ddx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (
        output.status.code().expect("exited normally"),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn run_ok(args: &[&str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = ddx(args, dir.path());
    assert_eq!(code, 0, "{args:?}: {err}");
    dir
}

fn table(dir: &TempDir, stem: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn provenance(dir: &TempDir, stem: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{stem}.json"))).unwrap()).unwrap()
}

/// Atomic decoherence function, written out here independently of the library.
fn f1(gk: f64, kt: f64) -> f64 {
    let r2 = gk * gk;
    (-2.0 * r2 * kt + 4.0 * r2 * (1.0 - (-kt / 2.0).exp())).exp()
}

#[test]
fn purity_sweep_reaches_steady_values() {
    let dir = run_ok(&["purity-sweep", "--n", "4", "--gk", "5", "--kt-max", "20", "--steps", "200"]);
    let (header, rows) = table(&dir, "purity_sweep");
    assert_eq!(header, ["n", "kt", "global", "atomic", "field"]);
    assert_eq!(rows.len(), 4 * 201);
    let steady = [0.5, 0.375, 0.3125, 35.0 / 128.0];
    for (n, target) in (1..=4).zip(steady) {
        let last = rows.iter().filter(|r| r[0] == n as f64).last().unwrap();
        assert_eq!(last[1], 20.0);
        assert!((last[2] - target).abs() < 1e-9, "N={n}: {}", last[2]);
        let first = rows.iter().find(|r| r[0] == n as f64).unwrap();
        assert_eq!(&first[2..], &[1.0, 1.0, 1.0]);
    }
    let prov = provenance(&dir, "purity_sweep");
    let exact: Vec<&str> =
        prov["summary"]["steady_purity"].as_array().unwrap().iter().map(|v| v["exact"].as_str().unwrap()).collect();
    assert_eq!(exact, ["1/2", "3/8", "5/16", "35/128"]);
    assert_eq!(prov["config"]["gk"], 5.0);
    assert!(prov["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["joint-prob-surface", "--n", "3", "--gk", "8", "--gk-steps", "16", "--steps", "25"];
    let a = run_ok(&args);
    let b = run_ok(&args);
    let read = |d: &TempDir| fs::read(d.path().join("joint_prob_surface.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(!read(&a).contains(&b'\r'));
}

#[test]
fn joint_probabilities_match_printed_polynomials() {
    let dir = run_ok(&["joint-prob-surface", "--n", "3", "--gk", "4", "--gk-steps", "8", "--kt-max", "2", "--steps", "20"]);
    let (header, rows) = table(&dir, "joint_prob_surface");
    assert_eq!(header, ["gk", "kt", "P_eee", "P_eeg", "P_egg", "P_ggg"]);
    assert_eq!(rows.len(), 9 * 21);
    for r in &rows {
        let f = f1(r[0], r[1]);
        let (f4, f9) = (f.powi(4), f.powi(9));
        let expected = [
            (10.0 - 15.0 * f + 6.0 * f4 - f9) / 32.0,
            (2.0 - f - 2.0 * f4 + f9) / 32.0,
            (2.0 + f - 2.0 * f4 - f9) / 32.0,
            (10.0 + 15.0 * f + 6.0 * f4 + f9) / 32.0,
        ];
        for (got, want) in r[2..].iter().zip(expected) {
            assert!((got - want).abs() < 1e-11, "gk={} kt={}: {got} vs {want}", r[0], r[1]);
        }
    }
}

#[test]
fn dfs_table_lists_four_atom_sectors() {
    let dir = run_ok(&["dfs-table", "--n", "4"]);
    let text = fs::read_to_string(dir.path().join("dfs_table.csv")).unwrap();
    let rows: Vec<(String, String, BTreeSet<String>)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].split(' ').map(String::from).collect())
        })
        .collect();
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let expected = [
        ("2", "1", set(&["++++"])),
        ("1", "4", set(&["+++-", "++-+", "+-++", "-+++"])),
        ("0", "6", set(&["++--", "+-+-", "+--+", "-+-+", "-++-", "--++"])),
        ("-1", "4", set(&["---+", "--+-", "-+--", "+---"])),
        ("-2", "1", set(&["----"])),
    ];
    assert_eq!(rows.len(), expected.len());
    for (row, (s, n, members)) in rows.iter().zip(expected) {
        assert_eq!((row.0.as_str(), row.1.as_str()), (s, n));
        assert_eq!(row.2, members);
    }
}

#[test]
fn oracle_compare_passes_for_two_atoms() {
    let dir = run_ok(&["oracle-compare", "--n", "2", "--gk", "2", "--kt-max", "4", "--steps", "40"]);
    let prov = provenance(&dir, "oracle_compare");
    assert_eq!(prov["pass"], true);
    assert!(prov["summary"]["max_deviation"].as_f64().unwrap() < 1e-6);
    assert!(prov["summary"]["max_trace_drift"].as_f64().unwrap() < 1e-8);
    assert!(prov["cutoff"].as_u64().unwrap() > 0);
    assert_eq!(prov["tolerances"]["deviation"], 1e-6);
    let (_, rows) = table(&dir, "oracle_compare");
    assert_eq!(rows.len(), 41);
}

#[test]
fn oracle_compare_with_starved_cutoff_is_a_tolerance_failure() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = ddx(&["oracle-compare", "--n", "2", "--gk", "2", "--cutoff", "4"], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("Fock"));
}

#[test]
fn resource_guards_and_override() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = ddx(&["oracle-compare", "--n", "5"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("--allow-large"));
    let (code, _, _) = ddx(&["dfs-table", "--n", "13"], dir.path());
    assert_eq!(code, 1);
    let (code, _, err) = ddx(&["dfs-table", "--n", "13", "--allow-large"], dir.path());
    assert_eq!(code, 0, "{err}");
}

#[test]
fn invalid_configs_and_io_errors() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["purity-sweep", "--steps", "0"][..],
        &["purity-sweep", "--kt-max", "-1"],
        &["purity-sweep", "--init", "csd:0"],
        &["no-such-scenario"],
        &["decoherence-monitor", "--n", "2"],
        &["wigner-cat", "--init", "gem2"],
    ] {
        let (code, _, _) = ddx(args, dir.path());
        assert_eq!(code, 1, "{args:?}");
    }
    let missing = dir.path().join("absent");
    let (code, _, err) = ddx(&["dfs-table"], &missing);
    assert_eq!(code, 3, "{err}");

    let status = Command::new(env!("CARGO_BIN_EXE_ddx")).arg("dfs-table").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    let body = serde_json::json!({
        "scenario": "purity-sweep",
        "n": 2,
        "gk": 1.0,
        "kt": [0.0, 0.5, 3.0],
        "out": dir.path(),
    });
    fs::write(&config, body.to_string()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ddx"))
        .args(["--config", config.to_str().unwrap(), "--gk", "2"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let prov: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("purity_sweep.json")).unwrap()).unwrap();
    assert_eq!(prov["config"]["gk"], 2.0);
    assert_eq!(prov["config"]["n"], 2);
    assert_eq!(prov["config"]["kt"], serde_json::json!([0.0, 0.5, 3.0]));

    fs::write(&config, r#"{"scenario": "dfs-table", "atoms": 3}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ddx"))
        .args(["--config", config.to_str().unwrap()])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn purity_vs_maxmixed_only_single_atom_is_maximally_mixed() {
    let dir = run_ok(&["purity-vs-maxmixed", "--n", "6"]);
    let (_, rows) = table(&dir, "purity_vs_maxmixed");
    assert_eq!(rows.len(), 6);
    assert!((rows[0][1] - 0.5).abs() < 1e-14);
    for r in &rows[1..] {
        assert!(r[1] > r[4], "N={}: {} vs {}", r[0], r[1], r[4]);
    }
    assert_eq!(provenance(&dir, "purity_vs_maxmixed")["summary"]["maximally_mixed_at"], serde_json::json!([1]));
}

#[test]
fn wigner_cat_grid_and_metadata() {
    let dir = run_ok(&["wigner-cat", "--n", "3", "--gk", "110", "--kt-max", "0.05", "--steps", "1", "--points", "121"]);
    let (header, rows) = table(&dir, "wigner_cat");
    assert_eq!(header, ["x", "p", "W"]);
    assert_eq!(rows.len(), 121 * 121);
    let prov = provenance(&dir, "wigner_cat");
    let map = &prov["summary"]["map"];
    assert!((map["integral"].as_f64().unwrap() - 1.0).abs() < 2e-2);
    assert!(map["min"].as_f64().unwrap() < 0.0);
    assert_eq!(map["coverage_warning"], false);
    let p = prov["summary"]["detection_probability"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn entangle_report_passes() {
    let dir = run_ok(&["entangle-report", "--n", "4", "--init", "gem3"]);
    let text = fs::read_to_string(dir.path().join("entangle_report.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("\"tau4 |2,0>\",1.00000000000e0")));
    assert!(text.lines().any(|l| l.starts_with("tauN init,1.00000000000e0")));
    assert_eq!(provenance(&dir, "entangle_report")["pass"], true);
}

#[test]
fn decoherence_monitor_recovers_f1() {
    let dir = run_ok(&["decoherence-monitor", "--n", "1", "--gk", "3", "--kt-max", "2", "--steps", "20"]);
    let (header, rows) = table(&dir, "decoherence_monitor");
    assert_eq!(header, ["kt", "f1", "f1_from_populations", "error"]);
    for r in rows {
        assert!((r[2] - f1(3.0, r[0])).abs() < 1e-12);
    }
    let dir = run_ok(&["decoherence-monitor", "--n", "3", "--gk", "3", "--kt-max", "2", "--steps", "20"]);
    let (_, rows) = table(&dir, "decoherence_monitor");
    for r in rows {
        assert!((r[3] - r[2]).abs() < 1e-12 && (r[4] - r[2]).abs() < 1e-12);
        // The fourth root amplifies roundoff once f1^4 nears machine precision.
        if r[2] > 1e-8 {
            assert!((r[5] - f1(3.0, r[0])).abs() < 1e-6, "kt={}", r[0]);
        }
    }
    assert_eq!(provenance(&dir, "decoherence_monitor")["pass"], true);
}
