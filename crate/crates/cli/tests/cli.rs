use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use spectral_attr::io::{read_image, read_result};

fn sample(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("samples")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-attr"))
        .args(args)
        .env_remove("SPECTRAL_ATTR_THREADS")
        .output()
        .unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["attribute", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["attribute", "--input", &sample("structured_16.ppm")])
            .status
            .code(),
        Some(1)
    );
    let out = tempfile::tempdir().unwrap();
    let o = out.path().join("o");
    let o = o.to_str().unwrap();
    let input = sample("structured_16.ppm");
    for bad in [
        vec!["--method", "nope"],
        vec!["--steps", "0"],
        vec!["--clip", "40"],
        vec!["--class", "9"],
        vec!["--mask", "x", "--bbox", "0,0,1,1"],
    ] {
        let mut args = vec!["evaluate", "--input", &input, "--out", o];
        args.extend(bad.iter());
        assert_eq!(run(&args).status.code(), Some(1), "{bad:?}");
    }
    let bbox = run(&[
        "evaluate", "--input", &input, "--out", o, "--bbox", "0,0,16,3",
    ]);
    assert_eq!(bbox.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bbox.stderr).contains("bbox"));
}

#[test]
fn bad_thread_setting_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_spectral-attr"))
        .args(["selftest"])
        .env("SPECTRAL_ATTR_THREADS", "many")
        .current_dir(out.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn attribute_writes_expected_files() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().join("res");
    let r = run(&[
        "attribute",
        "--input",
        &sample("structured_16.pgm"),
        "--baseline",
        "mean",
        "--method",
        "ig",
        "--target",
        "logit",
        "--class",
        "2",
        "--seed",
        "4",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let map = read_image(o.join("attribution.tensor")).unwrap();
    assert_eq!(map.shape(), (1, 16, 16));
    let heat = read_image(o.join("heatmap.pgm")).unwrap();
    assert_eq!(heat.shape(), (1, 16, 16));
    let doc = read_result(o.join("result.json")).unwrap();
    assert_eq!(doc.get_f64("seed"), Some(4.0));
    let gap = doc.get_f64("score_input").unwrap() - doc.get_f64("score_baseline").unwrap();
    let sum = doc.get_f64("attribution_sum").unwrap();
    assert!((gap - sum).abs() <= doc.get_f64("completeness_residual").unwrap() + 1e-12);
}

#[test]
fn evaluate_with_mask_reports_localization() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().join("eval");
    let r = run(&[
        "evaluate",
        "--input",
        &sample("structured_16.ppm"),
        "--model",
        &sample("tinymlp_3x16x16.weights"),
        "--mask",
        &sample("mask_16.pgm"),
        "--fractions",
        "11",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let doc = read_result(o.join("result.json")).unwrap();
    for key in [
        "diff_id",
        "insertion_auc",
        "deletion_auc",
        "pointing_game",
        "topmass_iou",
    ] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    let csv = fs::read_to_string(o.join("deletion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.starts_with("fraction,score\n"));
}

#[test]
fn evaluate_accepts_precomputed_attribution() {
    let out = tempfile::tempdir().unwrap();
    let a = out.path().join("a");
    let e = out.path().join("e");
    let input = sample("structured_16.ppm");
    assert_eq!(
        run(&["attribute", "--input", &input, "--out", a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let map = a.join("attribution.tensor");
    let r = run(&[
        "evaluate",
        "--input",
        &input,
        "--attribution",
        map.to_str().unwrap(),
        "--out",
        e.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let doc = read_result(e.join("result.json")).unwrap();
    assert!(doc.get("completeness_residual").is_none());
}

#[test]
fn analyze_rejects_gxi_and_writes_trace() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().join("an");
    let input = sample("structured_16.pgm");
    let gxi = run(&[
        "analyze",
        "--input",
        &input,
        "--method",
        "gxi",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(gxi.status.code(), Some(1));
    assert!(!o.exists());
    let r = run(&[
        "analyze",
        "--input",
        &input,
        "--steps",
        "20",
        "--frames",
        "3",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let trace = fs::read_to_string(o.join("frequency_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 22);
    assert!(o.join("frames/point_0010.pgm").exists());
    assert!(o.join("spectrum/point_0020.pgm").exists());
    assert!(o.join("steps/step_0019.pgm").exists());
}

#[test]
fn output_path_blocked_by_file_exits_two() {
    let out = tempfile::tempdir().unwrap();
    let blocker = out.path().join("taken");
    fs::write(&blocker, "x").unwrap();
    let r = run(&[
        "attribute",
        "--input",
        &sample("structured_16.pgm"),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(fs::read_to_string(&blocker).unwrap(), "x");
}

#[test]
fn selftest_accepts_weights_and_rejects_corrupt_ones() {
    let ok = run(&[
        "selftest",
        "--seed",
        "1",
        "--model",
        &sample("tinymlp_3x16x16.weights"),
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("12/12 checks passed"), "{text}");
    assert_eq!(
        run(&["selftest", "--seed", "1"]).stdout,
        run(&["selftest", "--seed", "1"]).stdout
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.weights");
    fs::write(&bad, "arch tinymlp 1 2 2 1 2\n0.5\nbanana\n").unwrap();
    let r = run(&["selftest", "--model", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("parse error"));
}
