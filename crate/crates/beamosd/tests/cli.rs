use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use beamosd::btns;
use beamosd::manifest::Manifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamosd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn example_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("example")
}

fn simulate(dir: &Path, num: usize, seconds: &str) {
    ok(&["simulate", "--out", s(dir), "--num", &num.to_string(), "--seconds", seconds, "--seed", "4", "--serial"]);
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_reproducible_and_counts_overlaps() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, 10, "1");
    simulate(&b, 10, "1");
    assert_eq!(read_tree(&a), read_tree(&b));
    let m = Manifest::load(&a).unwrap();
    assert_eq!(m.entries.len(), 10);
    assert_eq!(m.entries.iter().filter(|e| e.label == 1).count(), 4);
    for e in &m.entries {
        assert_eq!(e.azimuths.len(), 1 + e.label as usize);
        assert!(m.wav_path(e).is_file());
    }

    // Parallel generation writes the same bytes.
    let c = tmp.path().join("c");
    let out = bin()
        .args(["simulate", "--out", s(&c), "--num", "10", "--seconds", "1", "--seed", "4"])
        .env("BEAMOSD_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_tree(&a), read_tree(&c));
}

#[test]
fn feature_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(&tmp.path().join("one"), 1, "1");
    simulate(&tmp.path().join("two"), 1, "2");
    let cases = [
        ("one", "beams", "40", vec![40, 100, 8]),
        ("one", "spatial", "40", vec![128, 100]),
        ("one", "single", "40", vec![40, 100]),
        ("one", "beams", "160", vec![160, 100, 8]),
        ("two", "beams", "40", vec![40, 200, 8]),
        ("two", "spatial", "40", vec![128, 200]),
    ];
    for (dir, kind, fbank, dims) in cases {
        let wav = tmp.path().join(dir).join("wav").join("seg000000.wav");
        let out = tmp.path().join(format!("{dir}_{kind}_{fbank}.btns"));
        ok(&["features", "--wav", s(&wav), "--type", kind, "--fbank", fbank, "--out", s(&out)]);
        let t = btns::load(&out).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].0, kind);
        assert_eq!(t[0].1.dims(), dims.as_slice(), "{dir} {kind} {fbank}");
        assert!(t[0].1.all_finite());
    }
    let wav = tmp.path().join("one").join("wav").join("seg000000.wav");
    let out = tmp.path().join("x.btns");
    assert_eq!(run(&["features", "--wav", s(&wav), "--type", "mfcc", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(
        run(&["features", "--wav", s(&wav), "--type", "beams", "--fbank", "64", "--out", s(&out)]).status.code(),
        Some(2)
    );
}

#[test]
fn beampattern_csv() {
    let out = ok(&["beampattern", "--beam", "2", "--freq", "2000"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(text.lines().next().unwrap(), "angle_deg,gain_real,gain_imag,gain_abs");
    assert_eq!(rows.len(), 120);
    // Beam 2 looks at 90°, grid index 30; its null is at 270°, index 90.
    assert!((rows[30][3] - 1.0).abs() < 1e-6);
    assert!(rows[90][3] < 1e-6);
    let peak = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    assert!(peak < 1.0 + 1e-6);
    assert_eq!(run(&["beampattern", "--beam", "8"]).status.code(), Some(2));
    assert_eq!(run(&["beampattern", "--freq", "7000"]).status.code(), Some(2));
}

#[test]
fn srp_csv() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), 3, "1");
    let m = Manifest::load(tmp.path()).unwrap();
    let e = m.entries.iter().find(|e| e.label == 0).unwrap();
    let csv = tmp.path().join("srp.csv");
    ok(&["srp", "--wav", s(&m.wav_path(e)), "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 123);
    assert_eq!(header[0], "frame_index");
    assert_eq!(header[121..], ["doa_deg_raw", "doa_deg_smoothed"]);
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 98);
    let truth = e.azimuths[0];
    let near = rows
        .iter()
        .filter(|r| beamosd_core::array::angular_distance_deg(r[122], truth) <= 3.0)
        .count();
    assert!(near >= 93, "{near}/98 smoothed DOAs near {truth}");
}

#[test]
fn train_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, 12, "1");
    let run_dir = tmp.path().join("run");
    let config = tmp.path().join("cfg.json");
    std::fs::write(&config, r#"{"model": "bt", "D": 8, "heads": 2, "layers": 1, "epochs": 3, "F": 40}"#).unwrap();
    // Flags override the file.
    ok(&[
        "train", "--manifest", s(&data), "--out", s(&run_dir), "--config", s(&config), "--model", "spatial",
        "--epochs", "2", "--serial",
    ]);
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["model"], "spatial");
    assert_eq!(model["D"], 8);
    let log = std::fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "epoch,train_loss,accuracy,precision,recall,fscore");
    assert_eq!(log.lines().count(), 3);
    for f in ["epoch001.btns", "epoch002.btns", "checkpoint.btns"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    assert_eq!(
        std::fs::read(run_dir.join("epoch002.btns")).unwrap(),
        std::fs::read(run_dir.join("checkpoint.btns")).unwrap()
    );

    let ckpt = run_dir.join("checkpoint.btns");
    let report = ok(&["eval", "--manifest", s(&data), "--checkpoint", s(&ckpt), "--split", "all", "--serial"]).stdout;
    let v: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert_eq!(v["model"], "spatial");
    assert_eq!(v["split"], "all");
    assert_eq!(v["segment_seconds"], 1.0);
    let c = &v["confusion"];
    let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 12);
    let again = ok(&["eval", "--manifest", s(&data), "--checkpoint", s(&ckpt), "--split", "all"]).stdout;
    assert_eq!(report, again);
}

#[test]
fn shipped_example_report_reproduces() {
    let dir = example_dir();
    let ckpt = dir.join("checkpoint.btns");
    let out = ok(&["eval", "--manifest", s(&dir), "--checkpoint", s(&ckpt), "--split", "all", "--serial"]);
    let expected = std::fs::read(dir.join("report.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), String::from_utf8(expected).unwrap());
}

#[test]
fn gradcheck_exit_codes() {
    let out = ok(&["gradcheck", "--model", "combined"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["coords"].as_u64().unwrap() >= 200);
    assert!(v["max_rel_error"].as_f64().unwrap() <= 1e-4);
    let strict = run(&["gradcheck", "--model", "bt", "--tolerance", "1e-15"]);
    assert_eq!(strict.status.code(), Some(4));
    assert_eq!(run(&["gradcheck", "--model", "cnn"]).status.code(), Some(2));
}

#[test]
fn usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"num": 4, "overlap": 0.5}"#).unwrap();
    let out = run(&["simulate", "--out", s(&tmp.path().join("d")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`overlap`"));

    assert_eq!(run(&["simulate", "--out", s(tmp.path()), "--seconds", "3"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let missing = tmp.path().join("nope");
    assert_eq!(
        run(&["eval", "--manifest", s(&missing), "--checkpoint", s(&missing.join("c.btns"))]).status.code(),
        Some(3)
    );
    let bad = tmp.path().join("bad.wav");
    std::fs::write(&bad, b"RIFF nonsense").unwrap();
    assert_eq!(run(&["srp", "--wav", s(&bad)]).status.code(), Some(3));
    let out = bin().args(["simulate", "--out", s(tmp.path())]).env("BEAMOSD_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_values_apply_when_flags_are_absent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"num": 5, "overlap_frac": 0.6, "seed": 9}"#).unwrap();
    let d = tmp.path().join("d");
    ok(&["simulate", "--out", s(&d), "--config", s(&cfg), "--num", "6", "--serial"]);
    let m = Manifest::load(&d).unwrap();
    assert_eq!(m.entries.len(), 6);
    assert_eq!(m.entries.iter().filter(|e| e.label == 1).count(), 4);
}
