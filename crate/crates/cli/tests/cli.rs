use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use reposeg::{read_mask, write_image, write_mask, BinaryMask, Image};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_reposeg");
const STUB: &str = env!("CARGO_BIN_EXE_stub-segmenter");

fn reposeg(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, out: &str, count: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--count", count, "--out", out, "--seed", "11"];
    args.extend_from_slice(extra);
    ok(reposeg(dir, &args));
}

#[test]
fn synth_batch_eval_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("spec.json"), r#"{"seed": 4, "width": 160, "height": 120}"#).unwrap();
    ok(reposeg(dir, &["synth", "--spec", "spec.json", "--count", "100", "--out", "data/"]));
    let scene = dir.join("data/scene_0042");
    for f in ["image.png", "gt_object.png", "gt_specular.png", "spec.json", "candidates/mask_0.png", "candidates/mask_1.png", "candidates/mask_2.png"] {
        assert!(scene.join(f).is_file(), "missing {f}");
    }
    assert_eq!(json(&dir.join("data/dataset.json"))["seed"], 4);

    ok(reposeg(dir, &["batch", "data", "--out", "pred"]));
    let manifest = json(&dir.join("pred/manifest.json"));
    assert_eq!(manifest["total"], 100);
    assert_eq!(manifest["failed"], 0);
    assert_eq!(manifest["config"]["selector"]["r_max"], 0.5);
    assert_eq!(manifest["images"].as_array().unwrap().len(), 100);

    let out = ok(reposeg(dir, &["eval", "--pred", "pred", "--gt", "data", "--out", "ev"]));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("100 pairs"));
    let report = json(&dir.join("ev/metrics.json"));
    assert!(report["mean"]["iou"].as_f64().unwrap() >= 0.95);
    let csv = std::fs::read_to_string(dir.join("ev/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
    assert!(csv.starts_with("name,pred,gt,iou,dsc,pixel_accuracy"));
}

#[test]
fn unknown_flags_and_bad_values_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for args in [
        &["batch", "x", "--bogus"][..],
        &["run"],
        &["frobnicate"],
        &["run", "x.png", "--detector", "magic"],
        &["run", "x.png", "--provider", "carrier-pigeon"],
        &["report", "no-equals-sign"],
        &["eval", "--pred", "a"],
    ] {
        let out = reposeg(dir, args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn config_errors_exit_2_and_flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "1", &[]);
    std::fs::write(dir.join("bad.toml"), "[selector]\nbogus = 1\n").unwrap();
    std::fs::write(dir.join("tight.toml"), "[selector]\nr_max = 0.2\n").unwrap();

    let bad = reposeg(dir, &["run", "data/scene_0000", "--config", "bad.toml"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("bogus"));
    assert_eq!(stderr(&bad).trim().lines().count(), 1);
    assert_eq!(code(&reposeg(dir, &["run", "data/scene_0000", "--config", "missing.toml"])), 2);
    assert_eq!(code(&reposeg(dir, &["run", "data/scene_0000", "--r-max", "1.5"])), 2);
    assert_eq!(code(&reposeg(dir, &["run", "data/scene_0000", "--provider", "subprocess"])), 2);
    assert_eq!(code(&reposeg(dir, &["batch", "nowhere"])), 2);

    // The file's r_max = 0.2 rejects the object mask; the flag restores it.
    let tight = ok(reposeg(dir, &["run", "data/scene_0000", "--config", "tight.toml", "--out", "a"]));
    assert!(String::from_utf8_lossy(&tight.stdout).contains("candidate 0 of 3"));
    assert_eq!(json(&dir.join("a/manifest.json"))["config"]["selector"]["r_max"], 0.2);
    let loose = ok(reposeg(
        dir,
        &["run", "data/scene_0000", "--config", "tight.toml", "--r-max", "0.5", "--out", "b"],
    ));
    assert!(String::from_utf8_lossy(&loose.stdout).contains("candidate 1 of 3"));
    assert_eq!(json(&dir.join("b/manifest.json"))["config"]["selector"]["r_max"], 0.5);
}

fn black_image(path: &Path) {
    write_image(&Image::filled(16, 12, [0, 0, 0]), path).unwrap();
}

#[test]
fn black_image_fails_without_writing_a_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    black_image(&dir.join("black.png"));
    let out = reposeg(dir, &["run", "black.png", "--out", "res", "--emit-intermediates"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no specular region"), "{}", stderr(&out));
    assert!(!dir.join("res").exists());
}

#[test]
fn eval_dimension_mismatch_names_the_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for sub in ["p", "g"] {
        std::fs::create_dir(dir.join(sub)).unwrap();
    }
    write_mask(&BinaryMask::new(4, 4), dir.join("p/a.png")).unwrap();
    write_mask(&BinaryMask::new(4, 4), dir.join("g/a.png")).unwrap();
    write_mask(&BinaryMask::new(4, 4), dir.join("p/b.png")).unwrap();
    write_mask(&BinaryMask::new(5, 4), dir.join("g/b.pgm")).unwrap();
    let out = reposeg(dir, &["eval", "--pred", "p", "--gt", "g", "--out", "ev"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("p/b.png") && err.contains("g/b.pgm"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);

    std::fs::write(dir.join("pairs.csv"), "name,pred,gt\nfirst,p/a.png,g/a.png\n").unwrap();
    ok(reposeg(dir, &["eval", "--pairs", "pairs.csv", "--out", "ev2"]));
    assert_eq!(json(&dir.join("ev2/metrics.json"))["mean"]["iou"], 1.0);
}

fn stub_cmd(extra: &str) -> String {
    format!("{STUB} {extra}")
}

#[test]
fn subprocess_provider_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "6", &[]);
    black_image(&dir.join("data/black.png"));
    let count = dir.join("count.log");
    let cmd = stub_cmd(&format!("--count-file {}", count.display()));
    ok(reposeg(dir, &["batch", "data", "--out", "pred", "--provider-cmd", &cmd, "--workers", "3"]));

    // One exchange per image that reaches the segmenter; the black image
    // fails before that.
    let lines = std::fs::read_to_string(&count).unwrap();
    assert_eq!(lines.lines().count(), 6);
    let records = json(&dir.join("pred/batch.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 7);
    assert_eq!(records[0]["name"], "black");
    assert_eq!(records[0]["error"], "NoSpecularRegion");
    assert!(records[1..].iter().all(|r| r["status"] == "ok" && r["selected_index"] == 1));

    let out = reposeg(
        dir,
        &["run", "data/scene_0000", "--out", "wrong", "--provider-cmd", &stub_cmd("--mode wrong-size")],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("candidate 0 is (193, 144), image is (192, 144)"), "{}", stderr(&out));
    assert!(!dir.join("wrong").exists());

    let out = reposeg(dir, &["run", "data/scene_0000", "--provider-cmd", &stub_cmd("--mode error")]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("provider failure"));

    ok(reposeg(dir, &["batch", "data", "--out", "crash", "--provider-cmd", &stub_cmd("--mode crash"), "--workers", "2"]));
    let manifest = json(&dir.join("crash/manifest.json"));
    assert_eq!((manifest["total"].as_u64(), manifest["failed"].as_u64()), (Some(7), Some(7)));
}

fn normalized_records(path: &Path, out_dir: &str) -> String {
    std::fs::read_to_string(path).unwrap().replace(out_dir, "OUT")
}

#[test]
fn batch_records_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "9", &[]);
    black_image(&dir.join("data/black.png"));
    std::fs::write(dir.join("data/broken.png"), b"not a png").unwrap();
    let mut reference: Option<(String, String)> = None;
    for workers in ["1", "2", "5", "32"] {
        let out_dir = format!("out_{workers}");
        ok(reposeg(dir, &["batch", "data", "--out", &out_dir, "--workers", workers]));
        let manifest = json(&dir.join(&out_dir).join("manifest.json"));
        assert_eq!(manifest["total"], 11);
        assert_eq!(manifest["failed"], 2);
        let json_text = normalized_records(&dir.join(&out_dir).join("batch.json"), &out_dir);
        let csv_text = normalized_records(&dir.join(&out_dir).join("batch.csv"), &out_dir);
        assert_eq!(csv_text.lines().count(), 12);
        match &reference {
            None => reference = Some((json_text, csv_text)),
            Some((j, c)) => {
                assert_eq!(&json_text, j, "workers {workers}");
                assert_eq!(&csv_text, c, "workers {workers}");
            }
        }
    }
}

#[test]
fn faithful_scenes_reproduce_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "5", &["--candidates", "faithful"]);
    std::fs::write(
        dir.join("faithful.toml"),
        "emit_intermediates = true\n[provider]\nkind = \"synthetic\"\nmode = \"faithful\"\n",
    )
    .unwrap();
    ok(reposeg(dir, &["batch", "data", "--out", "files", "--provider", "files"]));
    ok(reposeg(dir, &["batch", "data", "--out", "synth", "--config", "faithful.toml"]));
    for i in 0..5 {
        let scene = dir.join(format!("data/scene_{i:04}"));
        let gt = read_mask(scene.join("gt_object.png")).unwrap();
        for out in ["files", "synth"] {
            let pred = read_mask(dir.join(format!("{out}/scene_{i:04}/final_mask.png"))).unwrap();
            assert_eq!(pred, gt, "{out} scene {i}");
        }
        let inter = dir.join(format!("synth/scene_{i:04}"));
        for f in ["omega.png", "candidate_0.png", "candidate_1.png", "candidate_2.png"] {
            assert!(inter.join(f).is_file());
        }
        assert!(!dir.join(format!("files/scene_{i:04}/omega.png")).exists());
    }
}

#[test]
fn files_provider_with_explicit_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "1", &["--candidates", "faithful"]);
    let cands = dir.join("data/scene_0000/candidates");
    let cands = cands.to_str().unwrap();
    ok(reposeg(dir, &["run", "data/scene_0000/image.png", "--candidates-dir", cands, "--out", "r"]));
    let gt = read_mask(dir.join("data/scene_0000/gt_object.png")).unwrap();
    assert_eq!(read_mask(dir.join("r/final_mask.png")).unwrap(), gt);

    let out = reposeg(dir, &["run", "data/scene_0000/image.png", "--candidates-dir", "missing", "--out", "m"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("does not exist"));
}

#[test]
fn otsu_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut img = Image::filled(10, 8, [20, 20, 20]);
    for y in 2..6 {
        for x in 3..8 {
            img.set(x, y, [200, 200, 200]);
        }
    }
    std::fs::create_dir(dir.join("imgs")).unwrap();
    write_image(&img, dir.join("imgs/bright.png")).unwrap();
    write_image(&Image::filled(4, 4, [90, 90, 90]), dir.join("imgs/flat.png")).unwrap();

    ok(reposeg(dir, &["otsu", "imgs", "--out", "o"]));
    ok(reposeg(dir, &["otsu", "imgs", "--out", "oi", "--invert-otsu"]));
    let mask = read_mask(dir.join("o/bright/final_mask.png")).unwrap();
    let inverted = read_mask(dir.join("oi/bright/final_mask.png")).unwrap();
    assert_eq!(mask.foreground_count(), 20);
    assert_eq!(inverted, mask.inverted());
    let records = json(&dir.join("o/otsu.json"));
    assert_eq!(records[0]["threshold"], 20);
    assert_eq!(records[1]["error"], "DegenerateImage");
    assert!(!dir.join("o/flat").exists());

    // Two eval reports with known means.
    let gt = BinaryMask::from_rows(&["1100", "1100", "0000", "0000"]);
    let half = BinaryMask::from_rows(&["1000", "1000", "0000", "0000"]);
    for (name, pred) in [("good", &gt), ("poor", &half)] {
        let d = dir.join(name);
        std::fs::create_dir_all(d.join("p")).unwrap();
        std::fs::create_dir_all(d.join("g")).unwrap();
        write_mask(pred, d.join("p/x.png")).unwrap();
        write_mask(&gt, d.join("g/x.png")).unwrap();
        let p = d.join("p");
        let g = d.join("g");
        let e = d.join("ev");
        ok(reposeg(dir, &["eval", "--pred", p.to_str().unwrap(), "--gt", g.to_str().unwrap(), "--out", e.to_str().unwrap()]));
    }
    let out = ok(reposeg(
        dir,
        &["report", "Poor=poor/ev/metrics.json", "Good=good/ev/metrics.json", "--reference", "Good", "--out", "cmp"],
    ));
    let text = String::from_utf8_lossy(&out.stdout);
    // IoU 100 vs 50, DSC 100 vs 66.67, pixel accuracy 100 vs 87.5.
    assert!(text.contains("Good vs Poor: IoU +100.0%, DSC +50.0%, Pixel Acc. +14.3%"), "{text}");
    let cmp = json(&dir.join("cmp/comparison.json"));
    assert_eq!(cmp["table"]["methods"], serde_json::json!(["Poor", "Good"]));
    assert!((cmp["improvements"][0]["iou"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert!(dir.join("cmp/comparison.csv").is_file());

    let bad = reposeg(dir, &["report", "Good=good/ev/metrics.json", "--reference", "Nope"]);
    assert_eq!(code(&bad), 2);
    let missing = reposeg(dir, &["report", "Gone=none.json"]);
    assert_eq!(code(&missing), 1);
}

fn stub_exchange(args: &[&str], input: &str) -> Vec<Value> {
    let mut child = Command::new(STUB)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn stub_segmenter_follows_the_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut img = Image::filled(12, 10, [40, 40, 40]);
    for y in 2..8 {
        for x in 2..10 {
            img.set(x, y, [120, 120, 120]);
        }
    }
    img.set(5, 4, [250, 250, 250]);
    img.set(6, 4, [250, 250, 250]);
    let path: PathBuf = dir.join("img.png");
    write_image(&img, &path).unwrap();
    let p = path.display();
    let masks_dir = dir.join("masks");
    let input = format!(
        "{{\"id\":7,\"image\":\"{p}\",\"point\":{{\"x\":5,\"y\":4}},\"max_masks\":3}}\n\
         garbage\n\
         {{\"id\":8,\"image\":\"{p}\",\"point\":{{\"x\":50,\"y\":4}},\"max_masks\":3}}\n\
         {{\"id\":9,\"image\":\"{p}\",\"point\":{{\"x\":5,\"y\":4}},\"max_masks\":2}}\n"
    );
    let replies = stub_exchange(&["--out", masks_dir.to_str().unwrap()], &input);
    assert_eq!(replies.len(), 4);
    assert_eq!(replies[0]["id"], 7);
    let masks: Vec<BinaryMask> = replies[0]["masks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| read_mask(m.as_str().unwrap()).unwrap())
        .collect();
    assert_eq!(masks.iter().map(|m| m.foreground_count()).collect::<Vec<_>>(), [2, 48, 120]);
    assert_eq!(replies[0]["scores"].as_array().unwrap().len(), 3);
    assert_eq!(replies[1]["id"], -1);
    assert!(replies[1]["error"].is_string());
    assert_eq!(replies[2]["id"], 8);
    assert!(replies[2]["error"].as_str().unwrap().contains("outside"));
    assert_eq!(replies[3]["masks"].as_array().unwrap().len(), 2);

    let empty = stub_exchange(&["--mode", "empty"], &input);
    assert_eq!(empty[0]["masks"], serde_json::json!([]));
}
