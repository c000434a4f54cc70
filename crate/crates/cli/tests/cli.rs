use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stablabel::geometry::BBox;
use stablabel::tensor_io::{read_tensor, write_tensor, MaskGrid, TensorFile};

fn stablabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablabel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENE: &str = r#"{
    "width": 64, "height": 48, "length": 5,
    "objects": [{"origin": [8, 10], "size": [20, 16], "velocity": [1.5, 0.5]}]
}"#;

const CONFIG: &str = r#"{"candidates": "file", "workers": 1, "flow": {"pyramid-levels": 2}}"#;

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&stablabel(&["--help"])), 0);
    assert_eq!(code(&stablabel(&["run", "--bogus"])), 1);
    assert_eq!(code(&stablabel(&[])), 1);
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"no-such-key": 1}"#).unwrap();
    assert_eq!(code(&stablabel(&["--config", s(&cfg), "--print-config"])), 1);
    fs::write(&cfg, r#"{"stabilize": {"iou-keep": 1.5}}"#).unwrap();
    let o = stablabel(&["--config", s(&cfg), "--print-config"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("iou-keep"));
}

#[test]
fn print_config_applies_overrides() {
    let o = stablabel(&["--seed", "9", "--workers", "3", "--print-config"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["workers"], 3);
    assert_eq!(v["stabilize"]["window-radius"], 3);
}

#[test]
fn synth_run_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let scene = dir.path().join("scene.json");
    let cfg = dir.path().join("cfg.json");
    fs::write(&scene, SCENE).unwrap();
    fs::write(&cfg, CONFIG).unwrap();
    assert_eq!(code(&stablabel(&["synth", "-o", s(&root), "--scene", s(&scene)])), 0);

    // stabilizing before flows exist is a runtime failure
    let common = ["--config", s(&cfg), "--root", s(&root)];
    assert_eq!(code(&stablabel(&[&common[..], &["extract"]].concat())), 0);
    assert_eq!(code(&stablabel(&[&common[..], &["stabilize"]].concat())), 2);

    let o = stablabel(&[&common[..], &["run"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = root.join("out");
    assert!(out.join("manifest.json").is_file());
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["reports"].as_object().unwrap().len() >= 2);

    let report = dir.path().join("report.json");
    let pred = out.join("labels/stabilized.json");
    let gt = root.join("gt.json");
    assert_eq!(code(&stablabel(&["eval", "--pred", s(&pred), "--gt", s(&gt), "-o", s(&report)])), 0);
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let ap = r["ap50"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ap));

    let o = stablabel(&["sweep-topk", "--pred", s(&pred), "--gt", s(&gt), "--ks", "1,5,150"]);
    assert_eq!(code(&o), 0);
    let lines: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("150\t"));
}

#[test]
fn losses_writes_one_line_per_sample_and_a_mean() {
    let dir = tempfile::tempdir().unwrap();
    let a = MaskGrid::from_box(16, 16, &BBox::new(2.0, 2.0, 10.0, 12.0).unwrap());
    let b = MaskGrid::from_box(16, 16, &BBox::new(3.0, 2.0, 11.0, 12.0).unwrap());
    write_tensor(&a.to_tensor(), dir.path().join("a.vtk")).unwrap();
    write_tensor(&b.to_tensor(), dir.path().join("b.vtk")).unwrap();
    let samples = dir.path().join("samples.json");
    fs::write(
        &samples,
        r#"[{"student": "a.vtk", "teacher": "b.vtk", "student-score": 0.9, "teacher-score": 0.8},
            {"student": "a.vtk", "teacher": "a.vtk", "student-score": 0.7, "teacher-score": 0.7}]"#,
    )
    .unwrap();
    let out = dir.path().join("losses.jsonl");
    assert_eq!(code(&stablabel(&["losses", "--samples", s(&samples), "-o", s(&out)])), 0);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["count"], 2);
    let t0 = lines[0]["losses"]["total"].as_f64().unwrap();
    let t1 = lines[1]["losses"]["total"].as_f64().unwrap();
    assert!(t0 > t1);
    assert!((lines[2]["mean"]["total"].as_f64().unwrap() - (t0 + t1) / 2.0).abs() < 1e-12);

    fs::write(&samples, r#"[{"student": "a.vtk"}]"#).unwrap();
    assert_eq!(code(&stablabel(&["losses", "--samples", s(&samples)])), 1);
}

#[test]
fn selsa_output_stays_within_support_range() {
    let dir = tempfile::tempdir().unwrap();
    let key = TensorFile::f32(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.5]).unwrap();
    let sup = TensorFile::f32(vec![4, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0, 0.0, 0.0, 1.0, 2.0, -2.0, 0.5]).unwrap();
    write_tensor(&key, dir.path().join("k.vtk")).unwrap();
    write_tensor(&sup, dir.path().join("s.vtk")).unwrap();
    let out = dir.path().join("agg.vtk");
    let o = stablabel(&[
        "selsa",
        "--key",
        s(&dir.path().join("k.vtk")),
        "--support",
        s(&dir.path().join("s.vtk")),
        "-o",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let agg = read_tensor(&out).unwrap();
    assert_eq!(agg.dims, vec![2, 3]);
    let sv = sup.to_f64();
    let vals = agg.to_f64();
    for (i, v) in vals.iter().enumerate() {
        let col: Vec<f64> = (0..4).map(|r| sv[r * 3 + i % 3]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6);
    }

    let bad = TensorFile::f32(vec![2, 2], vec![0.0; 4]).unwrap();
    write_tensor(&bad, dir.path().join("bad.vtk")).unwrap();
    let o = stablabel(&[
        "selsa",
        "--key",
        s(&dir.path().join("bad.vtk")),
        "--support",
        s(&dir.path().join("s.vtk")),
        "-o",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
}
