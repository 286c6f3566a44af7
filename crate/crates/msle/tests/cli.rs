//! End-to-end tests of the command-line binary: artifact layout, byte
//! determinism, exit codes, and the worker-count independence contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_msle")
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    cmd.env_remove("MSLE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const MINIMAL: &str = "kappas = 2.6666666666666665\nx0 = 0\nT = 0.1\ndt = 0.001\nseed = 4\n";

#[test]
fn simulate_writes_reproducible_artifacts() {
    let dir = work_dir("simulate_repro");
    let cfg = write_config(&dir, MINIMAL);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let res = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["trace.csv", "driving.csv", "manifest.json"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // Row counts: header + (T/dt + 1) samples for the single curve.
    let trace = String::from_utf8(read(&out_a.join("trace.csv"))).unwrap();
    assert_eq!(trace.lines().count(), 1 + 101);
    assert!(trace.starts_with("time,curve,re,im\n"));
    let driving = String::from_utf8(read(&out_a.join("driving.csv"))).unwrap();
    assert_eq!(driving.lines().count(), 1 + 101);
    assert!(driving.starts_with("time,curve,x,a\n"));
    // Identical seeds give identical bytes.
    assert_eq!(read(&out_a.join("trace.csv")), read(&out_b.join("trace.csv")));
    assert_eq!(read(&out_a.join("driving.csv")), read(&out_b.join("driving.csv")));
    // The manifest echoes the configuration.
    let manifest = String::from_utf8(read(&out_a.join("manifest.json"))).unwrap();
    assert!(manifest.contains("\"command\": \"simulate\""));
    assert!(manifest.contains("\"seed\": 4"));
    assert!(manifest.contains("\"stopping\": null"));
}

#[test]
fn worker_count_does_not_change_artifact_bytes() {
    let dir = work_dir("worker_bytes");
    let cfg = write_config(&dir, MINIMAL);
    let mut outputs = Vec::new();
    for (label, threads) in [("w1", "1"), ("w8", "8")] {
        let sim_out = dir.join(format!("sim_{label}"));
        let res = run(
            &["simulate", cfg.to_str().unwrap(), "--out", sim_out.to_str().unwrap()],
            &[("MSLE_THREADS", threads)],
        );
        assert_eq!(res.status.code(), Some(0));
        let ver_out = dir.join(format!("ver_{label}"));
        let res = run(
            &["verify", "martingale", "--out", ver_out.to_str().unwrap()],
            &[("MSLE_THREADS", threads)],
        );
        assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
        outputs.push((
            read(&sim_out.join("trace.csv")),
            read(&sim_out.join("driving.csv")),
            read(&ver_out.join("report.json")),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "trace bytes differ across worker counts");
    assert_eq!(outputs[0].1, outputs[1].1, "driving bytes differ across worker counts");
    assert_eq!(outputs[0].2, outputs[1].2, "report bytes differ across worker counts");
}

#[test]
fn plot_is_deterministic_and_rejects_malformed_input() {
    let dir = work_dir("plot");
    let cfg = write_config(&dir, MINIMAL);
    let sim_out = dir.join("sim");
    let res = run(&["simulate", cfg.to_str().unwrap(), "--out", sim_out.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(0));
    let trace = sim_out.join("trace.csv");
    let svg_a = dir.join("a.svg");
    let svg_b = dir.join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let res = run(&["plot", trace.to_str().unwrap(), "--out", svg.to_str().unwrap()], &[]);
        assert_eq!(res.status.code(), Some(0));
    }
    let bytes = read(&svg_a);
    assert_eq!(bytes, read(&svg_b));
    assert!(String::from_utf8(bytes).unwrap().contains("<polyline"));
    // Default output name: input with .svg extension.
    let res = run(&["plot", trace.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(0));
    assert!(sim_out.join("trace.svg").exists());

    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "not,a,trace\n1,2,3\n").unwrap();
    let res = run(&["plot", bad.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    let missing = dir.join("missing.csv");
    let res = run(&["plot", missing.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn symmetric_deterministic_run_passes_the_mirror_check() {
    let dir = work_dir("mirror");
    // Zero diffusivity: pure deterministic repulsion from mirrored starts.
    let cfg = write_config(
        &dir,
        "kappas = 0\nn = 2\nx0 = -1, 1\nT = 0.01\ndt = 0.000001\ndynamics = cardy\n",
    );
    let out = dir.join("out");
    let res = run(
        &[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--check-symmetry",
        ],
        &[],
    );
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let manifest = String::from_utf8(read(&out.join("manifest.json"))).unwrap();
    assert!(manifest.contains("symmetry_defect"));
    let trace = String::from_utf8(read(&out.join("trace.csv"))).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 10_001);
}

#[test]
fn early_stop_exits_three_and_still_writes_artifacts() {
    let dir = work_dir("early_stop");
    // An aggressive collapse floor guarantees a stop long before the
    // horizon for strongly diffusing curves.
    let cfg = write_config(
        &dir,
        "kappas = 6\nn = 2\nx0 = -0.3, 0.3\nT = 0.5\ndt = 0.001\ngap_floor_scale = 0.9\nseed = 1\n",
    );
    let out = dir.join("out");
    let res = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    for name in ["trace.csv", "driving.csv", "manifest.json"] {
        assert!(out.join(name).exists(), "{name} missing after early stop");
    }
    let manifest = String::from_utf8(read(&out.join("manifest.json"))).unwrap();
    assert!(manifest.contains("gap_collapsed"), "manifest: {manifest}");
}

#[test]
fn config_errors_exit_two() {
    let dir = work_dir("config_errors");
    let res = run(&["verify", "bogus"], &[]);
    assert_eq!(res.status.code(), Some(2));
    let bad_cfg = write_config(&dir, "kappas = 2\nx0 = 0\nT = 0.1\n");
    let res = run(&["simulate", bad_cfg.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["simulate", dir.join("nope.cfg").to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["frobnicate"], &[]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["--help"], &[]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn fast_verify_suites_exit_zero_with_reports() {
    let dir = work_dir("verify_fast");
    for suite in ["nve", "hcap"] {
        let out = dir.join(suite);
        let res = run(&["verify", suite, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "suite {suite} stderr: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        let report = String::from_utf8(read(&out.join("report.json"))).unwrap();
        assert!(report.contains(&format!("\"suite\": \"{suite}\"")));
        assert!(report.contains("\"pass\": true"));
        assert!(!report.contains("\"pass\": false"));
        assert!(out.join("manifest.json").exists());
        let stdout = String::from_utf8(res.stdout).unwrap();
        assert!(stdout.lines().all(|l| l.starts_with("pass")), "stdout: {stdout}");
    }
}
