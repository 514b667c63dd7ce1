use std::path::Path;
use std::process::{Command, Output};

fn ssr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssr")).args(args).current_dir(dir).env("SSR_THREADS", "1").output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = ssr(args, dir);
    assert!(out.status.success(), "ssr {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr_line(out: &Output) -> String {
    let s = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "diagnostic should be one line: {s}");
    s
}

const SMALL: [&str; 4] = ["--width", "64", "--height", "32"];

fn render_small(dir: &Path, name: &str, frames: &str) {
    let mut args = vec!["render", "--scene", "cornell-motion", "--frames", frames, "--reference-spp", "4", "--out", name];
    args.extend(SMALL);
    ok(&args, dir);
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn render_writes_frames_manifest_and_run_record() {
    let t = tempfile::tempdir().unwrap();
    let mut args = vec!["render", "--scene", "cornell-motion", "--frames", "8", "--mode", "quarter", "--out", "d/"];
    args.extend(SMALL);
    ok(&args, t.path());
    let d = t.path().join("d");
    for i in 0..8 {
        assert!(d.join(format!("frame_{i:04}/color.pfm")).is_file());
        assert!(!d.join(format!("frame_{i:04}/reference.pfm")).exists());
    }
    assert!(!d.join("frame_0008").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&read(d.join("manifest.json"))).unwrap();
    assert_eq!(manifest["frame_count"], 8);
    let run: serde_json::Value = serde_json::from_slice(&read(d.join("run.json"))).unwrap();
    assert_eq!(run["command"], "render");
    assert_eq!(run["config"]["mode"], "quarter");
    assert_eq!(run["threads"], 1);
}

#[test]
fn full_mode_and_config_file() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(t.path().join("r.json"), r#"{"frames": 2, "width": 16, "height": 8, "mode": "full:2"}"#).unwrap();
    ok(&["render", "--config", "r.json", "--set", "seed=3", "--out", "d"], t.path());
    let f: serde_json::Value = serde_json::from_slice(&read(t.path().join("d/frame_0001/frame.json"))).unwrap();
    assert_eq!(f["width"], 16);
    let mask = read(t.path().join("d/frame_0001/mask.pfm"));
    assert!(!mask.is_empty());
    let run: serde_json::Value = serde_json::from_slice(&read(t.path().join("d/run.json"))).unwrap();
    assert_eq!(run["config"]["seed"], 3);
}

#[test]
fn config_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    for args in [
        vec!["render", "--set", "colour=red", "--out", "d"],
        vec!["render", "--mode", "half", "--out", "d"],
        vec!["train", "--dataset", "x", "--crop", "30", "--out", "o"],
        vec!["train", "--ablation", "no_everything", "--out", "o"],
        vec!["bench", "--frames", "3"],
        vec!["frobnicate"],
    ] {
        let out = ssr(&args, t.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr_line(&out).starts_with("ssr: error:"));
    }
    std::fs::write(t.path().join("bad.json"), r#"{"frames": 2, "spp": 4}"#).unwrap();
    let out = ssr(&["render", "--config", "bad.json", "--out", "d"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("spp"));
    let out = Command::new(env!("CARGO_BIN_EXE_ssr")).args(["bench"]).env("SSR_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let t = tempfile::tempdir().unwrap();
    let out = ssr(&["eval", "--checkpoint", "missing.ssrw", "--dataset", "nowhere", "--out", "e"], t.path());
    assert_eq!(out.status.code(), Some(1));
    stderr_line(&out);
    let out = ssr(&["train", "--dataset", "nowhere", "--out", "o"], t.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_prints_json() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--scene", "corridor", "--frames", "10", "--width", "32", "--height", "16"], t.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scene"], "corridor");
    assert_eq!(v["frames"], 10);
    assert_eq!(v["quarter_paths_per_frame"], 32 * 16 / 4);
    assert!(v["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_infer_eval_figures_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    render_small(dir, "ds", "8");
    let train = ["train", "--dataset", "ds", "--steps", "2", "--crop", "32", "--batch-size", "2", "--seed", "4"];
    ok(&[&train[..], &["--out", "a"]].concat(), dir);
    ok(&[&train[..], &["--out", "b"]].concat(), dir);
    for f in ["checkpoint.ssrw", "step_0.ssrw", "train_log.csv", "run.json"] {
        assert_eq!(read(dir.join("a").join(f)), read(dir.join("b").join(f)), "{f} differs between identical runs");
    }
    let log = String::from_utf8(read(dir.join("a/train_log.csv"))).unwrap();
    assert_eq!(log.lines().count(), 3);

    ok(&["infer", "--checkpoint", "a/checkpoint.ssrw", "--dataset", "ds", "--dump-alpha", "--out", "inf"], dir);
    ok(&["infer", "--checkpoint", "a/checkpoint.ssrw", "--dataset", "ds", "--out", "inf2"], dir);
    for f in [6, 7] {
        assert!(dir.join(format!("inf/frame_{f:04}.png")).is_file());
        assert!(dir.join(format!("inf/alpha_{f:04}.pfm")).is_file());
        assert!(!dir.join(format!("inf2/alpha_{f:04}.pfm")).exists());
        assert_eq!(read(dir.join(format!("inf/frame_{f:04}.pfm"))), read(dir.join(format!("inf2/frame_{f:04}.pfm"))));
    }

    let out = ok(&["eval", "--checkpoint", "a/checkpoint.ssrw", "--dataset", "ds", "--split", "test", "--out", "ev"], dir);
    let summary: serde_json::Value = serde_json::from_slice(&read(dir.join("ev/summary.json"))).unwrap();
    assert_eq!(summary, serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap());
    assert_eq!(summary["frames"], 2);
    let csv = String::from_utf8(read(dir.join("ev/metrics.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 3);

    ok(&["figures", "--dataset", "ds", "--predictions", "inf", "--frames", "7", "--out", "fig"], dir);
    let pngs: Vec<_> = std::fs::read_dir(dir.join("fig"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert_eq!(pngs.len(), 1);
    assert!(pngs[0].starts_with("frame_0007_psnr_") && pngs[0].contains("_ssim_"), "{}", pngs[0]);
    let png = read(dir.join("fig").join(&pngs[0]));
    let width = u32::from_be_bytes([png[16], png[17], png[18], png[19]]);
    let height = u32::from_be_bytes([png[20], png[21], png[22], png[23]]);
    assert_eq!((width, height), (4 * 64, 32));

    std::fs::remove_file(dir.join("inf/baseline_0006.pfm")).unwrap();
    let out = ssr(&["figures", "--dataset", "ds", "--predictions", "inf", "--out", "fig2"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("baseline_0006.pfm"));
}

#[test]
fn render_is_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    render_small(t.path(), "x", "3");
    render_small(t.path(), "y", "3");
    for f in ["manifest.json", "run.json", "frame_0002/color.pfm", "frame_0002/reference.pfm", "frame_0002/motion.pfm"] {
        assert_eq!(read(t.path().join("x").join(f)), read(t.path().join("y").join(f)), "{f}");
    }
}
