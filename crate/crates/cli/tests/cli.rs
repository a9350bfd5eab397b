// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hero_sim::trace::{flags, RecordKind, TraceFile, TraceRecord};
use tempfile::TempDir;

fn herosim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herosim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn herosim")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

const SMALL: &[&str] = &["--benchmark", "matmul", "--matmul-n", "32", "--clusters", "2", "--seed", "7"];

#[test]
fn run_with_defaults_writes_one_row() {
    let d = TempDir::new().unwrap();
    let o = herosim(d.path(), &["run", "--benchmark", "matmul", "--clusters", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("config_hash,benchmark,mode,clusters,"));
    assert!(lines[1].contains(",matmul,svm,1,"));
    assert!(lines[1].ends_with(",1.0000"));
}

#[test]
fn results_match_golden_file() {
    let d = TempDir::new().unwrap();
    let mut args = vec!["run"];
    args.extend_from_slice(SMALL);
    let o = herosim(d.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = fs::read_to_string(d.path().join("results.csv")).unwrap();
    let want = fs::read_to_string(golden("results_matmul32.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn identical_invocations_are_bit_identical() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let d = TempDir::new().unwrap();
        let mut args = vec!["run", "--trace", "t.htrc", "--trace-depth", "128"];
        args.extend_from_slice(SMALL);
        let o = herosim(d.path(), &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push((
            fs::read(d.path().join("results.csv")).unwrap(),
            fs::read(d.path().join("t.htrc")).unwrap(),
        ));
    }
    assert!(outputs[0].1.len() > 32);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn invalid_config_exits_2() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("bad.cfg"), "[platform]\nn_clusters = 0\n").unwrap();
    for args in [
        &["run", "--config", "bad.cfg"][..],
        &["validate-config", "--config", "bad.cfg"],
        &["validate-config", "--config", "missing.cfg"],
    ] {
        let o = herosim(d.path(), args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(stderr(&o).contains("error"));
    }
    fs::write(d.path().join("syntax.cfg"), "[platform\n").unwrap();
    assert_eq!(code(&herosim(d.path(), &["validate-config", "--config", "syntax.cfg"])), 2);
    assert!(!d.path().join("results.csv").exists());
}

#[test]
fn valid_config_is_accepted() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("ok.cfg"), "[platform]\nn_clusters = 2\ninterconnect = noc\n").unwrap();
    let o = herosim(d.path(), &["validate-config", "--config", "ok.cfg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok "));
}

#[test]
fn runtime_fault_exits_3() {
    let d = TempDir::new().unwrap();
    // 20 is not a multiple of the 16-column panel
    let o = herosim(d.path(), &["run", "--matmul-n", "20", "--clusters", "1"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn sweep_rows_in_axis_order() {
    let d = TempDir::new().unwrap();
    let o = herosim(
        d.path(),
        &["sweep", "--axis", "clusters=1,2", "--axis", "mode=copy,svm", "--matmul-n", "32"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("results.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[3], r[2])).collect();
    assert_eq!(keys, [("1", "copy"), ("1", "svm"), ("2", "copy"), ("2", "svm")]);
    assert_eq!(rows[0][10], "1.0000");
    // the speedup column is baseline total / row total
    let base: f64 = rows[0][6].parse().unwrap();
    for r in &rows {
        let total: f64 = r[6].parse().unwrap();
        assert_eq!(r[10], format!("{:.4}", base / total));
    }
}

#[test]
fn single_point_sweep_has_unit_speedup() {
    let d = TempDir::new().unwrap();
    let o = herosim(d.path(), &["sweep", "--axis", "benchmark=memcopy", "--memcopy-bytes", "65536"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.ends_with(",1.0000\n"));
}

#[test]
fn bad_axis_exits_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&herosim(d.path(), &["sweep", "--axis", "colour=red"])), 2);
    assert_eq!(code(&herosim(d.path(), &["sweep", "--axis", "clusters=1,0"])), 2);
}

fn record(ts: u64, kind: RecordKind, fl: u8, master: u32, payload: u64) -> TraceRecord {
    TraceRecord {
        timestamp: ts,
        tracer_id: 0,
        kind,
        flags: fl,
        master_id: master,
        payload,
    }
}

fn latencies(dir: &Path) -> Vec<(String, f64, u64)> {
    fs::read_to_string(dir.join("latency.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn analyze_benchmark_trace() {
    let d = TempDir::new().unwrap();
    let mut args = vec!["run", "--trace", "t.htrc", "--mode", "svm"];
    args.extend_from_slice(SMALL);
    assert_eq!(code(&herosim(d.path(), &args)), 0);

    let o = herosim(d.path(), &["analyze", "--trace", "t.htrc", "--assert", "hit-under-miss", "--out-dir", "plain"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("assert hit-under-miss: PASS"), "{text}");
    for f in ["events.csv", "latency.csv", "bus.csv", "report.txt"] {
        assert!(d.path().join("plain").join(f).exists(), "{f}");
    }

    let o = herosim(
        d.path(),
        &["analyze", "--trace", "t.htrc", "--assert", "hit-under-miss", "--ratio", "2.5", "--out-dir", "scaled"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plain = latencies(&d.path().join("plain"));
    let scaled = latencies(&d.path().join("scaled"));
    assert!(!plain.is_empty());
    assert_eq!(plain.len(), scaled.len());
    for (a, b) in plain.iter().zip(&scaled) {
        assert_eq!((&a.0, a.1 * 2.5, a.2), (&b.0, b.1, b.2));
    }
}

#[test]
fn analyze_violation_exits_4() {
    let d = TempDir::new().unwrap();
    // core 2 takes two cycles to hit in L1 while core 1 searches the L2
    let file = TraceFile {
        platform_hash: 0,
        clock_ratio: 1.0,
        records: vec![
            record(10, RecordKind::ReadReq, 0, 1, 0x1000),
            record(11, RecordKind::ReadReq, 0, 2, 0x2000),
            record(13, RecordKind::ReadReq, flags::DOWNSTREAM, 2, 0x8000_2000),
            record(15, RecordKind::ReadReq, flags::DOWNSTREAM | flags::L2, 1, 0x8000_1000),
            record(22, RecordKind::ReadResp, 0, 2, 0x2000),
            record(24, RecordKind::ReadResp, 0, 1, 0x1000),
        ],
    };
    file.dump(d.path().join("bad.htrc")).unwrap();
    let o = herosim(d.path(), &["analyze", "--trace", "bad.htrc", "--assert", "hit-under-miss"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn analyze_corrupt_trace_exits_2() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("junk.htrc"), b"not a trace at all, clearly not").unwrap();
    assert_eq!(code(&herosim(d.path(), &["analyze", "--trace", "junk.htrc"])), 2);
    assert_eq!(code(&herosim(d.path(), &["analyze", "--trace", "absent.htrc"])), 2);
}

#[test]
fn expand_matrix_prints_tuples() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("m.txt"), "[platform]\np0\np1\n[app]\na\nb\nc\n").unwrap();
    let o = herosim(d.path(), &["expand-matrix", "--graph", "m.txt"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().count(), 6);
    assert_eq!(out.lines().next(), Some("p0,a"));

    fs::write(d.path().join("bad.txt"), "stray\n").unwrap();
    assert_eq!(code(&herosim(d.path(), &["expand-matrix", "--graph", "bad.txt"])), 2);
}
