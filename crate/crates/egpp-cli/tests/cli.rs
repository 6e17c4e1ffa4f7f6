//! End-to-end tests of the `egpp` binary: every subcommand's numeric output
//! must equal the direct library call, and the exit-code contract must hold.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};

use egpp::formats;
use egpp::grid::{DisparityMap, Grid};
use egpp::metrics;
use egpp::pp::{self, PPConfig, PpMode};

static COUNTER: AtomicU64 = AtomicU64::new(0);

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "egpp-cli-{}-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::SeqCst),
        name
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn egpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egpp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn sample_map(h: usize, w: usize) -> DisparityMap {
    DisparityMap::from_fn(h, w, |y, x| {
        0.05 + 0.2 * (((y * 31 + x * 7) % 23) as f64 / 22.0)
    })
    .unwrap()
}

#[test]
fn pp_mode_none_passes_input_through() {
    let dir = work_dir("none");
    let d_l = sample_map(12, 40);
    let d_prime = d_l.flip_horizontal();
    let (a, b, out) = (dir.join("dl.pfm"), dir.join("dp.pfm"), dir.join("out.pfm"));
    formats::write_pfm(&a, d_l.grid()).unwrap();
    formats::write_pfm(&b, d_prime.grid()).unwrap();

    let run = egpp(&[
        "pp",
        "--dl",
        a.to_str().unwrap(),
        "--dl-flipped",
        b.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--mode",
        "none",
    ]);
    assert!(run.status.success(), "{:?}", run);
    let loaded = formats::read_pfm(&out).unwrap();
    let original = formats::read_pfm(&a).unwrap();
    assert_eq!(loaded, original);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn pp_conventional_is_identity_on_consistent_pair() {
    let dir = work_dir("consistent");
    let d_l = sample_map(16, 48);
    let d_prime = d_l.flip_horizontal();
    let (a, b, out) = (dir.join("dl.pfm"), dir.join("dp.pfm"), dir.join("out.pfm"));
    formats::write_pfm(&a, d_l.grid()).unwrap();
    formats::write_pfm(&b, d_prime.grid()).unwrap();

    let run = egpp(&[
        "pp",
        "--dl",
        a.to_str().unwrap(),
        "--dl-flipped",
        b.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--mode",
        "pp",
    ]);
    assert!(run.status.success());
    let loaded = formats::read_pfm(&out).unwrap();
    let original = formats::read_pfm(&a).unwrap();
    for (x, y) in loaded.data().iter().zip(original.data()) {
        assert!((x - y).abs() < 1e-6);
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn pp_edge_guided_matches_the_library() {
    let dir = work_dir("egpp");
    let scene = egpp::synth::generate_scene(&egpp::synth::SceneParams::default()).unwrap();
    let d_prime = scene.d_flip2.flip_horizontal();
    let (a, b, out) = (dir.join("dl.pfm"), dir.join("dp.pfm"), dir.join("out.pfm"));
    formats::write_pfm(&a, scene.d_l.grid()).unwrap();
    formats::write_pfm(&b, d_prime.grid()).unwrap();

    let run = egpp(&[
        "pp",
        "--dl",
        a.to_str().unwrap(),
        "--dl-flipped",
        b.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--mode",
        "egpp",
    ]);
    assert!(run.status.success());

    // same data path as the tool: maps go through the PFM f32 lattice
    let lib_dl = DisparityMap::from_grid(formats::read_pfm(&a).unwrap()).unwrap();
    let lib_dp = DisparityMap::from_grid(formats::read_pfm(&b).unwrap()).unwrap();
    let expected = pp::post_process(&lib_dl, &lib_dp, PpMode::EdgeGuided, &PPConfig::default())
        .unwrap();
    let loaded = formats::read_pfm(&out).unwrap();
    for (x, y) in loaded.data().iter().zip(expected.data()) {
        assert_eq!(*x, *y as f32 as f64, "tool output differs from library");
    }
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn pp_rejects_shape_mismatch_with_exit_2() {
    let dir = work_dir("mismatch");
    let (a, b, out) = (dir.join("dl.pfm"), dir.join("dp.pfm"), dir.join("out.pfm"));
    formats::write_pfm(&a, sample_map(8, 16).grid()).unwrap();
    formats::write_pfm(&b, sample_map(16, 8).grid()).unwrap();
    let run = egpp(&[
        "pp",
        "--dl",
        a.to_str().unwrap(),
        "--dl-flipped",
        b.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_input_exits_3() {
    let dir = work_dir("missing");
    let run = egpp(&[
        "pp",
        "--dl",
        dir.join("absent.pfm").to_str().unwrap(),
        "--dl-flipped",
        dir.join("absent2.pfm").to_str().unwrap(),
        "-o",
        dir.join("out.pfm").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_perfect_predictions_score_clean() {
    let dir = work_dir("eval");
    let gt = sample_map(32, 64);
    let (p, g) = (dir.join("pred.pfm"), dir.join("gt.pfm"));
    formats::write_pfm(&p, gt.grid()).unwrap();
    formats::write_pfm(&g, gt.grid()).unwrap();
    let manifest = dir.join("manifest.tsv");
    fs::write(&manifest, "pred.pfm\tgt.pfm\tw=64\ttag=perfect\n").unwrap();

    let run = egpp(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--crop",
        "none",
    ]);
    assert!(run.status.success(), "{:?}", run);
    let stdout = stdout_of(&run);
    let aggregate = stdout
        .lines()
        .find(|l| l.starts_with("aggregate"))
        .expect("aggregate line");
    assert_eq!(
        aggregate,
        "aggregate\t0.0000 0.0000 0.0000 0.0000 0.0000 1.0000 1.0000 1.0000"
    );
    assert!(stdout.contains("perfect\t0.0000"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_crop_shrinks_the_valid_set() {
    let dir = work_dir("crop");
    let gt = sample_map(32, 64);
    let (p, g) = (dir.join("pred.pfm"), dir.join("gt.pfm"));
    formats::write_pfm(&p, gt.grid()).unwrap();
    formats::write_pfm(&g, gt.grid()).unwrap();
    let manifest = dir.join("manifest.tsv");
    fs::write(&manifest, "pred.pfm\tgt.pfm\tw=64\n").unwrap();

    let count_from = |crop: &str| {
        let run = egpp(&[
            "eval",
            "--manifest",
            manifest.to_str().unwrap(),
            "--crop",
            crop,
        ]);
        assert!(run.status.success());
        let stderr = String::from_utf8_lossy(&run.stderr).into_owned();
        let line = stderr
            .lines()
            .find(|l| l.contains("valid pixels"))
            .expect("count line")
            .to_string();
        let n: usize = line
            .split_whitespace()
            .rev()
            .nth(2)
            .unwrap()
            .parse()
            .unwrap();
        n
    };

    let full = count_from("none");
    let cropped = count_from("garg");
    assert_eq!(full, 32 * 64);
    assert_eq!(cropped, metrics::garg_crop_mask(32, 64).count());
    assert!(cropped < full);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_handles_png16_and_resized_predictions() {
    let dir = work_dir("png-eval");
    // ground truth in pixel units at 32x64, with a hole at (0, 0)
    let gt_px = DisparityMap::from_fn(32, 64, |y, x| {
        6.0 + 10.0 * (((y * 13 + x * 5) % 19) as f64 / 18.0)
    })
    .unwrap();
    let hole = egpp::grid::Mask::from_fn(32, 64, |y, x| !(y == 0 && x == 0));
    let gt_path = dir.join("gt.png");
    formats::write_png16_disparity(&gt_path, &gt_px, Some(&hole)).unwrap();

    // perfect prediction, also png16
    let pred_path = dir.join("pred.png");
    formats::write_png16_disparity(&pred_path, &gt_px, None).unwrap();

    // a second prediction at half resolution, stored as normalized PFM;
    // the tool resizes it onto the ground-truth raster
    let small = DisparityMap::from_grid(
        gt_px.grid().map(|v| v / 64.0).resize_bilinear(16, 32).unwrap(),
    )
    .unwrap();
    let small_path = dir.join("small.pfm");
    formats::write_pfm(&small_path, small.grid()).unwrap();

    let manifest = dir.join("manifest.tsv");
    fs::write(
        &manifest,
        "pred.png\tgt.png\tw=64\ttag=exact\nsmall.pfm\tgt.png\tw=64\ttag=resized\n",
    )
    .unwrap();

    let run = egpp(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--crop",
        "none",
        "--max-depth",
        "80",
    ]);
    assert!(run.status.success(), "{:?}", run);
    let stdout = stdout_of(&run);
    let exact = stdout
        .lines()
        .find(|l| l.starts_with("exact"))
        .expect("exact line");
    // png16 quantization only: errors vanish at 4 decimals
    assert!(exact.contains("\t0.0000 0.0000 0.0000 0.0000 0.0000 1.0000 1.0000 1.0000"));
    let resized = stdout
        .lines()
        .find(|l| l.starts_with("resized"))
        .expect("resized line");
    let rmse: f64 = resized
        .split('\t')
        .nth(1)
        .unwrap()
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(rmse.is_finite() && rmse > 0.0);
    assert!(stdout.lines().any(|l| l.starts_with("aggregate")));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_empty_manifest_exits_4() {
    let dir = work_dir("empty");
    let manifest = dir.join("manifest.tsv");
    fs::write(&manifest, "# nothing here\n").unwrap();
    let run = egpp(&["eval", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(4));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn losses_of_self_consistent_inputs_are_zero() {
    let dir = work_dir("losses");
    let image = Grid::from_fn(12, 20, 1, |y, x, _| ((y * 20 + x) % 16) as f64 / 16.0).unwrap();
    let zero = Grid::zeros(12, 20, 1).unwrap();
    let (il, ir) = (dir.join("il.pfm"), dir.join("ir.pfm"));
    let (dl, dr) = (dir.join("dl.pfm"), dir.join("dr.pfm"));
    formats::write_pfm(&il, &image).unwrap();
    formats::write_pfm(&ir, &image).unwrap();
    formats::write_pfm(&dl, &zero).unwrap();
    formats::write_pfm(&dr, &zero).unwrap();

    let run = egpp(&[
        "losses",
        "--image-left",
        il.to_str().unwrap(),
        "--image-right",
        ir.to_str().unwrap(),
        "--disp-left",
        dl.to_str().unwrap(),
        "--disp-right",
        dr.to_str().unwrap(),
        "--tsv",
    ]);
    assert!(run.status.success());
    let stdout = stdout_of(&run);
    let data = stdout.lines().nth(1).expect("data row");
    assert_eq!(data, "0.000000\t0.000000\t0.000000\t0.000000");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn synth_default_emits_sixty_rows() {
    let run = egpp(&["synth"]);
    assert!(run.status.success());
    let stdout = stdout_of(&run);
    let data_rows = stdout
        .lines()
        .filter(|l| !l.starts_with("seed") && !l.starts_with("mean"))
        .count();
    assert_eq!(data_rows, 60);
    let aggregate_rows = stdout.lines().filter(|l| l.starts_with("mean")).count();
    assert_eq!(aggregate_rows, 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let one = egpp(&["synth", "--seeds", "3", "--raw", "--threads", "1"]);
    let four = egpp(&["synth", "--seeds", "3", "--raw", "--threads", "4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(stdout_of(&one), stdout_of(&four));
}

#[test]
fn arch_prints_the_scale_column() {
    let run = egpp(&["arch", "vggaspp", "--tsv"]);
    assert!(run.status.success());
    let stdout = stdout_of(&run);
    let scales: Vec<String> = stdout
        .lines()
        .skip(1)
        .filter(|l| l.contains('\t'))
        .map(|l| l.split('\t').nth(3).unwrap_or("").to_string())
        .collect();
    assert_eq!(scales, vec!["2", "4", "8", "16", "32", "32"]);
    assert!(stdout.contains("1901824"));

    let unknown = egpp(&["arch", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn bench_reports_stage_breakdown() {
    let run = egpp(&["bench", "--iters", "3", "--height", "64", "--width", "128"]);
    assert!(run.status.success());
    let stdout = stdout_of(&run);
    assert!(stdout.contains("total"));
    assert!(stdout.contains("confidence"));
    assert!(stdout.contains("synthesize"));
}
