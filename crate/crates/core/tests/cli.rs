use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_manet-sim"))
}

const TINY: &str = "[scenario]
name = tiny
sim_until = 30

[topology]
area = 500 100
node = 0 0 0 50
node = 1 200 0 50
node = 2 400 0 50

[session]
flow = 0:2:1
kind = cbr
pkts_per_s = 4
packets = 40
";

#[test]
fn run_writes_report_and_valid_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let trace = dir.path().join("t.tr");
    let report = dir.path().join("r.txt");
    let st = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--protocol", "sqaodv", "--seed", "4"])
        .args(["--trace", trace.to_str().unwrap(), "--report", report.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let rep = fs::read_to_string(&report).unwrap();
    assert!(rep.contains("pdr=1\n"), "{rep}");
    assert!(rep.contains("hops=2\n"));
    let out = bin().args(["validate-trace", trace.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());

    fs::write(&trace, "0.5\tSEND\n").unwrap();
    let out = bin().args(["validate-trace", trace.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn config_errors_exit_one_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, TINY.replace("flow = 0:2:1", "flow = 0:9:1").replace("pkts_per_s = 4", "pkts_per_s = 0")).unwrap();
    let out = bin().args(["run", "--config", cfg.to_str().unwrap(), "--protocol", "aodv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 12") && err.contains("line 14"), "{err}");

    let out = bin().args(["run", "--config", "setA1", "--protocol", "aodv", "--rate-kbps", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn batch_writes_rows_and_rejects_duplicate_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["batch", "--config", cfg.to_str().unwrap(), "--protocol", "mdr", "--seeds", "1..3"])
        .args(["--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 2);
    assert!(out_dir.join("seed-2.txt").exists());

    let out = bin()
        .args(["batch", "--config", cfg.to_str().unwrap(), "--protocol", "mdr", "--seeds", "1,1"])
        .args(["--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("twice"));
}

#[test]
fn gen_grid_and_bundled_listing() {
    let out = bin().args(["gen-grid", "--n", "49", "--area", "540x540"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("node = 8 90 90\n"));
    assert_eq!(text.lines().count(), 50);
    let out = bin().args(["gen-grid", "--n", "5", "--area", "100x100"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["scenarios"]).output().unwrap();
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "setB"));
}
