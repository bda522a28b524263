use std::path::Path;
use std::process::{Command, Output};

fn freqstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_default_settles_at_reference_deviation() {
    let out = freqstab(&["simulate", "--no-timestamp"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 60_002);
    let last = text.lines().last().unwrap();
    let cols: Vec<f64> = last.split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(cols[0], 60.0);
    let hz = cols[1] * 50.0;
    assert!((hz + 0.277).abs() <= 0.005, "{hz}");
}

#[test]
fn simulate_with_tangents_and_grid_flags() {
    let out = freqstab(&["simulate", "--no-timestamp", "--tangents", "--dt", "0.01", "--horizon", "2", "--theta=-3,4,5,6"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 202);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 11);
}

#[test]
fn label_header_only_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let output = dir.path().join("out.csv");
    std::fs::write(&input, "K11,K12,K21,K22\n").unwrap();
    let out = freqstab(&["label", "--input", path_str(&input), "--output", path_str(&output), "--no-timestamp"]);
    ok(&out);
    assert_eq!(
        std::fs::read_to_string(&output).unwrap(),
        "K11,K12,K21,K22,label,rocof_hz_s,nadir_hz,ss_hz,t_rocof,t_nadir,converged,iterations\n"
    );
}

#[test]
fn schema_violation_gives_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "K11,K12,K21\n1,2,3\n").unwrap();
    let out = freqstab(&["label", "--input", path_str(&input)]);
    assert!(!out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "schema_mismatch");
}

#[test]
fn infeasible_config_gives_error_record() {
    let out = freqstab(&["simulate", "--dt", "0.7"]);
    assert!(!out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "invalid_params");
}

#[test]
fn gen_then_label_marks_rows() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.csv");
    let labeled = dir.path().join("labeled.csv");
    ok(&freqstab(&["gen", "--count", "12", "--seed", "5", "--output", path_str(&seeds)]));
    let text = std::fs::read_to_string(&seeds).unwrap();
    assert!(text.starts_with("# generated_unix="));
    ok(&freqstab(&["label", "--input", path_str(&seeds), "--output", path_str(&labeled)]));
    let rows = freqstab::io::read_labeled(&labeled).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.converged.is_none()));
}

#[test]
fn grad_table_agrees_with_central_differences() {
    let out = freqstab(&["grad", "--theta=10,-20,30,5", "--no-timestamp", "--scheme", "central", "--epsilon", "1e-6"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut n = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "ss" {
            continue;
        }
        let err: f64 = f[4].parse().unwrap();
        assert!(err <= 0.01, "{line}");
        n += 1;
    }
    assert_eq!(n, 8);
}

#[test]
fn bench_reports_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let mut cfg = freqstab::config::RunConfig::default();
    cfg.bench.methods = vec!["fmad-stream".parse().unwrap(), "fd-central".parse().unwrap()];
    cfg.bench.runs = 1;
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let out = freqstab(&["bench", "--config", path_str(&cfg_path), "--batch-size", "4", "--no-timestamp"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,memory_bytes,time_s,err_x_tss,err_x_tnadir,err_x_trocof,err_g_nadir,err_g_rocof"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let time: f64 = r[2].parse().unwrap();
        assert!(time > 0.0);
        for e in &r[3..] {
            let e: f64 = e.parse().unwrap();
            assert!(e <= 0.01, "{r:?}");
        }
    }
}

#[test]
fn sample_writes_dataset_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = dir.path().join("seeds.csv");
    let out = dir.path().join("ds.csv");
    ok(&freqstab(&["gen", "--count", "4", "--output", path_str(&seeds)]));
    ok(&freqstab(&[
        "sample", "--input", path_str(&seeds), "--output", path_str(&out),
        "--rule", "margin:0.05", "--direction", "auto", "--alpha", "1e4", "--max-iter", "150", "--batch-size", "2",
    ]));
    let ds = freqstab::io::read_dataset(&out).unwrap();
    assert_eq!(ds.records.len(), 4);
    assert_eq!(ds.meta.config.max_iter, 150);
    assert_eq!(freqstab::io::read_labeled(&out).unwrap().len(), 4);
}
