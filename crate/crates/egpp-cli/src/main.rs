//! Command-line front end: post-process disparity pairs, evaluate against
//! ground truth, score the self-supervision losses, run the synthetic
//! suite, benchmark throughput and inspect encoder specs.
//!
//! Exit codes: 0 ok, 2 validation error, 3 I/O or parse error, 4 empty
//! input set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use egpp::arch;
use egpp::error::Error;
use egpp::formats;
use egpp::grid::{DisparityMap, Grid, Mask};
use egpp::losses::{self, LossWeights};
use egpp::metrics::{self, CameraModel, CropKind, EvalConfig, MetricReport};
use egpp::pp::{self, PPConfig, PpMode};
use egpp::synth::{self, SceneParams};

#[derive(Parser)]
#[command(name = "egpp", version, about = "Disparity post-processing and evaluation toolkit")]
struct Cli {
    /// Worker threads (default: EGPP_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Post-process a disparity pair (d_l and the prediction from the
    /// flipped image; the flip-back happens internally).
    Pp(PpArgs),
    /// Evaluate predictions against ground truth listed in a manifest.
    Eval(EvalArgs),
    /// Score the self-supervision losses of an image/disparity quadruple.
    Losses(LossArgs),
    /// Run the synthetic dis-occlusion suite.
    Synth(SynthArgs),
    /// Benchmark the edge-guided post-processing stage.
    Bench(BenchArgs),
    /// Print an encoder spec with inferred shapes and parameter counts.
    Arch(ArchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    None,
    Pp,
    Egpp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Pfm,
    Png16,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UnitsArg {
    /// Values are fractions of image width.
    Norm,
    /// Values are pixel offsets; divided by width at ingestion.
    Px,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CropArg {
    None,
    Garg,
}

#[derive(Args)]
struct PpOverrides {
    /// Detection radius N of the gradient filter.
    #[arg(long, default_value_t = 10)]
    radius: usize,
    /// Sigmoid gain a.
    #[arg(long, default_value_t = 32.0)]
    gain: f64,
    /// Sigmoid offset b.
    #[arg(long, default_value_t = 0.5)]
    offset: f64,
    /// Reserved boundary range (fraction of width). Defaults per mode:
    /// 0.05 conventional, 0.02 edge-guided.
    #[arg(long)]
    rng: Option<f64>,
    /// Boundary ramp slope.
    #[arg(long, default_value_t = 20.0)]
    ramp_slope: f64,
}

impl PpOverrides {
    fn config(&self, mode: ModeArg) -> PPConfig {
        let base = match mode {
            ModeArg::Pp => PPConfig::conventional(),
            _ => PPConfig::default(),
        };
        PPConfig {
            detection_radius: self.radius,
            gain: self.gain,
            offset: self.offset,
            boundary_range: self.rng.unwrap_or(base.boundary_range),
            ramp_slope: self.ramp_slope,
            ..base
        }
    }
}

#[derive(Args)]
struct PpArgs {
    /// Disparity predicted from the input image.
    #[arg(long = "dl")]
    dl: PathBuf,
    /// Disparity predicted from the horizontally flipped image.
    #[arg(long = "dl-flipped")]
    dl_flipped: PathBuf,
    /// Output path.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Egpp)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Pfm)]
    format: FormatArg,
    /// Units of PFM inputs (PNG16 is always pixel units).
    #[arg(long, value_enum, default_value_t = UnitsArg::Norm)]
    units: UnitsArg,
    #[command(flatten)]
    overrides: PpOverrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Manifest: pred<TAB>gt[<TAB>key=value ...] per line.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 80.0)]
    max_depth: f64,
    #[arg(long, default_value_t = 1e-3)]
    min_depth: f64,
    #[arg(long, value_enum, default_value_t = CropArg::Garg)]
    crop: CropArg,
    /// Median-scale predictions to the ground truth before scoring.
    #[arg(long)]
    median_scale: bool,
    /// Units of PFM disparity files (PNG16 is always pixel units).
    #[arg(long, value_enum, default_value_t = UnitsArg::Norm)]
    units: UnitsArg,
    /// Full-precision output for regression fixtures.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    image_left: PathBuf,
    #[arg(long)]
    image_right: PathBuf,
    #[arg(long)]
    disp_left: PathBuf,
    #[arg(long)]
    disp_right: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha_ap: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha_ds: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_lr: f64,
    /// Machine-readable tab-separated output.
    #[arg(long)]
    tsv: bool,
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    occluders: usize,
    /// Fade ramp width L in pixels.
    #[arg(long, default_value_t = 8)]
    fade: usize,
    /// Border fade width in pixels.
    #[arg(long, default_value_t = 6)]
    border_fade: usize,
    /// Number of scenes (seeds base..base+n).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    overrides: PpOverrides,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[command(flatten)]
    overrides: PpOverrides,
}

#[derive(Args)]
struct ArchArgs {
    /// Spec name: vggaspp or resaspp.
    name: String,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long)]
    tsv: bool,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::PfmParse { .. }
        | Error::PngFormat { .. }
        | Error::ManifestParse { .. }
        | Error::ManifestDuplicate { .. } => 3,
        Error::EmptyValidSet | Error::EmptyBand => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("EGPP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let run = || match &cli.command {
        Command::Pp(args) => cmd_pp(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Losses(args) => cmd_losses(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Arch(args) => cmd_arch(args),
    };
    let result = match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("egpp: cannot build thread pool: {}", e);
                return ExitCode::from(2);
            }
        },
        _ => run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("egpp: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// A disparity map plus everything needed to write it back out the way it
/// came in.
struct LoadedDisparity {
    map: DisparityMap,
    valid: Option<Mask>,
    /// Factor that converted file values to normalized units.
    scale: f64,
}

fn load_disparity(path: &Path, format: FormatArg, units: UnitsArg) -> Result<LoadedDisparity, Error> {
    match format {
        FormatArg::Pfm => {
            let grid = formats::read_pfm(path)?;
            let map = DisparityMap::from_grid(grid)?;
            let scale = match units {
                UnitsArg::Norm => 1.0,
                UnitsArg::Px => 1.0 / map.width() as f64,
            };
            let map = if scale == 1.0 {
                map
            } else {
                DisparityMap::from_grid(map.grid().map(|v| v * scale))?
            };
            Ok(LoadedDisparity {
                map,
                valid: None,
                scale,
            })
        }
        FormatArg::Png16 => {
            let (px, valid) = formats::read_png16_disparity(path)?;
            let scale = 1.0 / px.width() as f64;
            let map = DisparityMap::from_grid(px.grid().map(|v| v * scale))?;
            Ok(LoadedDisparity {
                map,
                valid: Some(valid),
                scale,
            })
        }
    }
}

fn write_disparity(
    path: &Path,
    map: &DisparityMap,
    format: FormatArg,
    scale: f64,
    valid: Option<&Mask>,
) -> Result<(), Error> {
    match format {
        FormatArg::Pfm => {
            let restored = map.grid().map(|v| v / scale);
            formats::write_pfm(path, &restored)
        }
        FormatArg::Png16 => {
            let px = DisparityMap::from_grid(map.grid().map(|v| v / scale))?;
            formats::write_png16_disparity(path, &px, valid)
        }
    }
}

fn cmd_pp(args: &PpArgs) -> Result<(), Error> {
    let mode = match args.mode {
        ModeArg::None => PpMode::None,
        ModeArg::Pp => PpMode::Conventional,
        ModeArg::Egpp => PpMode::EdgeGuided,
    };
    let cfg = args.overrides.config(args.mode);
    let d_l = load_disparity(&args.dl, args.format, args.units)?;
    let d_prime = load_disparity(&args.dl_flipped, args.format, args.units)?;
    if d_l.scale != 1.0 {
        eprintln!(
            "egpp: normalized inputs by 1/{} at ingestion",
            1.0 / d_l.scale
        );
    }
    let out = pp::post_process(&d_l.map, &d_prime.map, mode, &cfg)?;
    write_disparity(&args.output, &out, args.format, d_l.scale, d_l.valid.as_ref())?;
    Ok(())
}

/// Normalizes a prediction against its own width, resizes it onto the
/// ground-truth geometry if needed, and rescales to pixel units at the
/// camera width.
fn prediction_to_gt_px(
    pred: &LoadedDisparity,
    gt_h: usize,
    gt_w: usize,
    cam: &CameraModel,
) -> Result<Grid, Error> {
    let norm = pred.map.grid();
    let resized = if norm.height() == gt_h && norm.width() == gt_w {
        norm.clone()
    } else {
        norm.resize_bilinear(gt_h, gt_w)?
    };
    Ok(resized.map(|v| v * cam.width_px))
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let manifest = formats::load_manifest(&args.manifest)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    let cfg = EvalConfig {
        min_depth_m: args.min_depth,
        max_depth_m: args.max_depth,
        crop: match args.crop {
            CropArg::None => CropKind::None,
            CropArg::Garg => CropKind::Garg,
        },
        median_scale: args.median_scale,
    };
    cfg.validate()?;

    let format_of = |p: &Path| {
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            FormatArg::Png16
        } else {
            FormatArg::Pfm
        }
    };

    let mut reports: Vec<(String, MetricReport)> = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let cam = entry.camera.apply(&CameraModel::kitti());
        cam.validate()?;
        let pred_path = manifest.resolve(&entry.pred_path);
        let gt_path = manifest.resolve(&entry.gt_path);
        let pred = load_disparity(&pred_path, format_of(&pred_path), args.units)?;
        let gt = load_disparity(&gt_path, format_of(&gt_path), args.units)?;
        let (gt_h, gt_w) = (gt.map.height(), gt.map.width());
        if (cam.width_px - gt_w as f64).abs() > 0.5 {
            eprintln!(
                "egpp: {}: camera width {} differs from ground-truth width {}",
                entry.label(),
                cam.width_px,
                gt_w
            );
        }
        let pred_px = prediction_to_gt_px(&pred, gt_h, gt_w, &cam)?;
        // pixel-scaled files carry their own raster scale; normalized files
        // convert through the calibration width
        let gt_px_factor = if gt.scale != 1.0 {
            1.0 / gt.scale
        } else {
            cam.width_px
        };
        let gt_px = gt.map.grid().map(|v| v * gt_px_factor);
        // fold the file validity mask into the disparity values: invalid
        // ground truth reads as 0 and is filtered by the evaluator
        let gt_px = match &gt.valid {
            Some(mask) => Grid::from_data(
                gt_h,
                gt_w,
                1,
                gt_px
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if mask.data()[i] { *v } else { 0.0 })
                    .collect(),
            )?,
            None => gt_px,
        };
        let report = metrics::evaluate_pair(&pred_px, &gt_px, &cam, &cfg)?;
        let crop = metrics::crop_mask(cfg.crop, gt_h, gt_w);
        let valid_px = (0..gt_h * gt_w)
            .filter(|i| crop.at(i / gt_w, i % gt_w) && gt_px.data()[*i] > 0.0)
            .count();
        eprintln!("egpp: {}: {} valid pixels", entry.label(), valid_px);
        reports.push((entry.label(), report));
    }

    for (label, report) in &reports {
        let line = if args.raw {
            report.to_raw_line()
        } else {
            report.to_fixed_line()
        };
        println!("{}\t{}", label, line);
    }
    let aggregate =
        MetricReport::average(&reports.iter().map(|(_, r)| *r).collect::<Vec<_>>()).unwrap();
    let line = if args.raw {
        aggregate.to_raw_line()
    } else {
        aggregate.to_fixed_line()
    };
    println!("aggregate\t{}", line);
    Ok(())
}

fn cmd_losses(args: &LossArgs) -> Result<(), Error> {
    let image_l = formats::read_pfm(&args.image_left)?;
    let image_r = formats::read_pfm(&args.image_right)?;
    let d_l = DisparityMap::from_grid(formats::read_pfm(&args.disp_left)?)?;
    let d_r = DisparityMap::from_grid(formats::read_pfm(&args.disp_right)?)?;
    let weights = LossWeights {
        alpha_ap: args.alpha_ap,
        alpha_ds: args.alpha_ds,
        alpha_lr: args.alpha_lr,
    };
    let report = losses::stereo_loss_report(&image_l, &image_r, &d_l, &d_r, &weights)?;
    let fmt = |v: f64| {
        if args.raw {
            format!("{:?}", v)
        } else {
            format!("{:.6}", v)
        }
    };
    if args.tsv {
        println!(
            "c_ap\tc_ds\tc_lr\tc_total\n{}\t{}\t{}\t{}",
            fmt(report.c_ap),
            fmt(report.c_ds),
            fmt(report.c_lr),
            fmt(report.c_total)
        );
    } else {
        println!("appearance      {}", fmt(report.c_ap));
        println!("smoothness      {}", fmt(report.c_ds));
        println!("lr-consistency  {}", fmt(report.c_lr));
        println!("total           {}", fmt(report.c_total));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    let params = SceneParams {
        height: args.height,
        width: args.width,
        n_occluders: args.occluders,
        fade_width_px: args.fade,
        border_fade_px: args.border_fade,
        seed: args.seed,
        ..SceneParams::default()
    };
    let cfg = args.overrides.config(ModeArg::Egpp);
    let report = synth::run_suite(&params, &cfg, args.seeds)?;
    print!("{}", report.to_tsv(args.raw));
    Ok(())
}

fn median_of(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

fn p95_of(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((samples.len() as f64) * 0.95).ceil() as usize;
    samples[idx.saturating_sub(1).min(samples.len() - 1)]
}

fn time_stage(iters: usize, mut f: impl FnMut()) -> (f64, f64) {
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        f();
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    (median_of(samples.clone()), p95_of(samples))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Error> {
    if args.iters == 0 {
        return Err(Error::InvalidConfig("iters must be >= 1".into()));
    }
    let cfg = args.overrides.config(ModeArg::Egpp);
    cfg.validate()?;
    let (h, w) = (args.height, args.width);
    let d_l = DisparityMap::from_fn(h, w, |y, x| {
        0.02 + 0.25 * (((x * 31 + y * 17) % 97) as f64 / 96.0)
    })?;
    let d_pp = d_l.flip_horizontal();

    for _ in 0..3 {
        pp::edge_guided_pp(&d_l, &d_pp, &cfg)?;
    }
    let (total_med, total_p95) = time_stage(args.iters, || {
        pp::edge_guided_pp(&d_l, &d_pp, &cfg).unwrap();
    });

    let (filter_med, _) = time_stage(args.iters, || {
        pp::build_gradient_filter(cfg.detection_radius).unwrap();
    });
    let (conf_med, _) = time_stage(args.iters, || {
        pp::edge_confidence(&d_l, &cfg, pp::EdgeDirection::RightEdge).unwrap();
        pp::edge_confidence(&d_pp, &cfg, pp::EdgeDirection::LeftEdge).unwrap();
    });
    let e = pp::edge_confidence(&d_l, &cfg, pp::EdgeDirection::RightEdge)?;
    let e_pp = pp::edge_confidence(&d_pp, &cfg, pp::EdgeDirection::LeftEdge)?;
    let (norm_med, _) = time_stage(args.iters, || {
        pp::normalize_weights(&e, &e_pp, cfg.eps).unwrap();
    });
    let center = pp::edge_guided_combine(&d_l, &d_pp, &cfg)?;
    let masks = pp::boundary_masks(h, w, cfg.boundary_range, cfg.ramp_slope)?;
    let (synth_med, _) = time_stage(args.iters, || {
        pp::synthesize(&d_l, &d_pp, &center, &masks).unwrap();
    });

    println!("edge-guided pp at {}x{} ({} iters)", h, w, args.iters);
    println!("total        median {:.3} ms   p95 {:.3} ms", total_med, total_p95);
    println!("  filter     median {:.3} ms", filter_med);
    println!("  confidence median {:.3} ms", conf_med);
    println!("  normalize  median {:.3} ms", norm_med);
    println!("  synthesize median {:.3} ms", synth_med);
    Ok(())
}

fn cmd_arch(args: &ArchArgs) -> Result<(), Error> {
    let spec = arch::builtin(&args.name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown architecture {:?}", args.name)))?;
    let shapes = arch::infer_shapes(&spec, args.height, args.width)?;
    let sep = if args.tsv { "\t" } else { " | " };
    println!(
        "layer{sep}kernel{sep}ch_io{sep}scale{sep}input{sep}out_shape{sep}params",
        sep = sep
    );
    for (l, s) in spec.layers.iter().zip(&shapes) {
        let kernel = match l.kind {
            arch::LayerKind::Aspp { .. } => "-".to_string(),
            arch::LayerKind::ResnetBlock { units } => format!("{}x{}", l.kernel, units),
            _ => l.kernel.to_string(),
        };
        println!(
            "{name}{sep}{kernel}{sep}{ic}/{oc}{sep}{scale}{sep}{input}{sep}{h}x{w}x{c}{sep}{params}",
            name = l.name,
            kernel = kernel,
            ic = l.in_ch,
            oc = l.out_ch,
            scale = l.scale,
            input = l.input_ref,
            h = s.height,
            w = s.width,
            c = s.channels,
            params = arch::layer_params(l),
            sep = sep
        );
    }
    println!(
        "total encoder+pyramid parameters (subtotal): {}",
        arch::count_params(&spec)
    );
    Ok(())
}
