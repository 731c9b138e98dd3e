//! Command-line front end for the radar-to-pose pipeline.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use millimamba::dsp::{self, bench::bench_heatmaps, FourDConfig};
use millimamba::objective::{evaluate_ap, FrameEval};
use millimamba::pipeline::{
    evaluate, infer, train, windows_to_samples, Model, ModelConfig, Sample,
};
use millimamba::radar_sim::{
    generate_dataset, make_script, simulate_frames, write_cube, RadarMapping, ScriptSpec,
};
use millimamba::tensor::{
    read_checkpoint, write_checkpoint, Params, TensorError,
};

#[derive(Parser)]
#[command(name = "millimamba", version, about = "radar-to-pose pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize radar cubes and ground-truth poses to a directory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Number of scene frames.
        #[arg(long, default_value_t = 16)]
        frames: usize,
    },
    /// Turn a directory of .mmrc cubes into .mmh3 heatmaps.
    Preprocess {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare 3D and 4D preprocessing cost.
    BenchHeatmap {
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a synthesized dataset and write checkpoint + records.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Number of sliding windows to synthesize.
        #[arg(long, default_value_t = 32)]
        windows: usize,
    },
    /// Evaluate a checkpoint (AP reported x100).
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        windows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score the ground truth against itself (sanity fixture).
        #[arg(long, default_value_t = false)]
        perfect: bool,
    },
    /// Run inference and emit center-frame poses as JSON.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        windows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference verification of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one config key over several values, train and compare.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 16)]
        windows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// 1 = validation error, 2 = runtime failure.
struct AppError {
    code: u8,
    msg: String,
}

impl From<TensorError> for AppError {
    fn from(e: TensorError) -> Self {
        let code = match &e {
            TensorError::InvalidArgument(_) | TensorError::ShapeMismatch(_) => 1,
            _ => 2,
        };
        AppError {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError {
            code: 2,
            msg: format!("io: {e}"),
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError {
            code: 2,
            msg: format!("json: {e}"),
        }
    }
}

fn validation(msg: String) -> AppError {
    AppError { code: 1, msg }
}

fn runtime(msg: String) -> AppError {
    AppError { code: 2, msg }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ModelConfig, AppError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| validation(format!("cannot read config {}: {e}", p.display())))?;
            ModelConfig::from_text(&text)?
        }
        None => ModelConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_samples(cfg: &ModelConfig, windows: usize, seed: u64) -> Result<Vec<Sample>, AppError> {
    let spec = ScriptSpec {
        joint_count: cfg.joints,
        frame_count: windows + cfg.frames - 1,
        ..ScriptSpec::default()
    };
    let wins = generate_dataset(
        &spec,
        cfg.cube_dims(),
        &RadarMapping::default(),
        &cfg.view_list(),
        cfg.frames,
        cfg.noise_std,
        seed,
    )
    .map_err(|e| runtime(format!("simulate: {e}")))?;
    Ok(windows_to_samples(cfg, &wins)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn cmd_simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    frames: usize,
) -> Result<(), AppError> {
    let cfg = load_config(config, seed)?;
    if frames == 0 {
        return Err(validation("--frames must be >= 1".into()));
    }
    fs::create_dir_all(out)?;
    let spec = ScriptSpec {
        joint_count: cfg.joints,
        frame_count: frames,
        ..ScriptSpec::default()
    };
    let script = make_script(&spec, cfg.seed);
    let sim = simulate_frames(
        &script,
        cfg.cube_dims(),
        &RadarMapping::default(),
        &cfg.view_list(),
        cfg.noise_std,
        cfg.seed,
    )
    .map_err(|e| runtime(format!("simulate: {e}")))?;
    for frame in &sim {
        for cube in &frame.cubes {
            let tag = match cube.view {
                millimamba::radar_sim::View::Horizontal => "h",
                millimamba::radar_sim::View::Vertical => "v",
            };
            let path = out.join(format!("frame_{:04}_{tag}.mmrc", frame.frame_index));
            let mut f = fs::File::create(path)?;
            write_cube(&mut f, cube)?;
        }
    }
    write_json(&out.join("poses.json"), &script.pose_window(0, frames))?;
    println!(
        "simulated {} frames x {} views into {}",
        frames,
        cfg.views,
        out.display()
    );
    Ok(())
}

fn cmd_preprocess(config: Option<&Path>, input: &Path, out: &Path) -> Result<(), AppError> {
    let cfg = load_config(config, None)?;
    let dsp_cfg = cfg.dsp_config();
    fs::create_dir_all(out)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mmrc"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(validation(format!("no .mmrc files in {}", input.display())));
    }
    for p in &paths {
        let mut f = fs::File::open(p)?;
        let cube = millimamba::radar_sim::read_cube(&mut f)?;
        let hm = dsp::preprocess_frame(&cube, &dsp_cfg)
            .map_err(|e| runtime(format!("preprocess {}: {e}", p.display())))?;
        let name = p.file_stem().unwrap().to_string_lossy();
        let mut g = fs::File::create(out.join(format!("{name}.mmh3")))?;
        dsp::write_heatmap(&mut g, &hm)?;
    }
    println!("preprocessed {} cubes into {}", paths.len(), out.display());
    Ok(())
}

fn cmd_bench(
    frames: usize,
    runs: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let report = bench_heatmaps(
        frames,
        runs,
        millimamba::radar_sim::CubeDims::default(),
        &dsp::DspConfig::default(),
        &FourDConfig::default(),
        seed.unwrap_or(0),
    )
    .map_err(|e| runtime(format!("bench: {e}")))?;
    println!(
        "3D: {:.3} ms/frame, peak {} B; 4D: {:.3} ms/frame, peak {} B",
        report.latency_3d_s * 1e3,
        report.peak_bytes_3d,
        report.latency_4d_s * 1e3,
        report.peak_bytes_4d
    );
    println!(
        "measured ratios: memory {:.2}x, latency {:.2}x (reference: {:.1}x / {:.1}x; {})",
        report.memory_ratio,
        report.latency_ratio,
        report.reference_memory_ratio,
        report.reference_latency_ratio,
        report.note
    );
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn cmd_train(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    windows: usize,
) -> Result<(), AppError> {
    let cfg = load_config(config, seed)?;
    fs::create_dir_all(out)?;
    let samples = synth_samples(&cfg, windows, cfg.seed)?;
    let outcome = train(&cfg, &samples)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let mut ck = fs::File::create(out.join("checkpoint.mmck"))?;
    write_checkpoint(&mut ck, &outcome.params)?;
    for (step, params) in &outcome.checkpoints {
        let mut f = fs::File::create(out.join(format!("checkpoint_{step:06}.mmck")))?;
        write_checkpoint(&mut f, params)?;
    }
    let mut rec = fs::File::create(out.join("train_records.jsonl"))?;
    for r in &outcome.records {
        serde_json::to_writer(&mut rec, r)?;
        rec.write_all(b"\n")?;
    }
    let (first, last) = (
        outcome.records.first().map(|r| r.loss_total).unwrap_or(0.0),
        outcome.records.last().map(|r| r.loss_total).unwrap_or(0.0),
    );
    println!(
        "trained {} steps on {} windows: loss {:.6} -> {:.6}; artifacts in {}",
        cfg.steps,
        samples.len(),
        first,
        last,
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    config: Option<&Path>,
    seed: Option<u64>,
    checkpoint: Option<&Path>,
    windows: usize,
    out: Option<&Path>,
    perfect: bool,
) -> Result<(), AppError> {
    let cfg = load_config(config, seed)?;
    let report = if perfect {
        // Ground truth scored against itself: pins the x100 convention.
        let samples = synth_samples(&cfg, windows, cfg.seed.wrapping_add(1))?;
        let oks_params = cfg.oks_params();
        let frames: Vec<FrameEval> = samples
            .iter()
            .map(|s| {
                let gt = s.gt.frame(cfg.center_offset());
                FrameEval {
                    pred: gt.coords.clone(),
                    gt: gt.coords,
                    vis: gt.visibility,
                }
            })
            .collect();
        evaluate_ap(&frames, &oks_params, None)?
    } else {
        let ck = checkpoint.ok_or_else(|| {
            validation("--checkpoint is required unless --perfect is set".into())
        })?;
        let mut f = fs::File::open(ck)?;
        let params = read_checkpoint(&mut f)?;
        let model = Model::new(&cfg)?;
        let expect = model.init_params(cfg.seed)?;
        check_params_match(&expect, &params)?;
        let samples = synth_samples(&cfg, windows, cfg.seed.wrapping_add(1))?;
        evaluate(&cfg, &params, &samples)?
    };
    println!(
        "AP = {:.1}  AP50 = {:.1}  AP75 = {:.1}  mean OKS = {:.3}  ({} frames)",
        report.ap * 100.0,
        report.ap50 * 100.0,
        report.ap75 * 100.0,
        report.mean_oks,
        report.frames
    );
    for pj in &report.per_joint {
        println!("  {:<12} AP = {:.1}", pj.joint, pj.ap * 100.0);
    }
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(())
}

/// A checkpoint matches the config iff it has exactly the expected
/// parameter names and shapes.
fn check_params_match(expect: &Params, got: &Params) -> Result<(), AppError> {
    for (name, t) in expect {
        match got.get(name) {
            None => {
                return Err(validation(format!(
                    "checkpoint/config mismatch: missing parameter {name}"
                )))
            }
            Some(g) if g.shape() != t.shape() => {
                return Err(validation(format!(
                    "checkpoint/config mismatch: {name} has shape {:?}, config wants {:?}",
                    g.shape(),
                    t.shape()
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = got.keys().find(|k| !expect.contains_key(*k)) {
        return Err(validation(format!(
            "checkpoint/config mismatch: unexpected parameter {extra}"
        )));
    }
    Ok(())
}

fn cmd_infer(
    config: Option<&Path>,
    seed: Option<u64>,
    checkpoint: &Path,
    windows: usize,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let cfg = load_config(config, seed)?;
    let mut f = fs::File::open(checkpoint)?;
    let params = read_checkpoint(&mut f)?;
    let model = Model::new(&cfg)?;
    check_params_match(&model.init_params(cfg.seed)?, &params)?;
    let samples = synth_samples(&cfg, windows, cfg.seed.wrapping_add(1))?;
    let poses = infer(&cfg, &params, &samples)?;
    let skirt = cfg.center_offset();
    println!(
        "emitted {} center-frame poses; skipped {} boundary frames at each end",
        poses.len(),
        skirt
    );
    if let Some(p) = out {
        write_json(p, &poses)?;
    }
    Ok(())
}

// --- gradcheck suite -------------------------------------------------------

fn report_line(name: &str, r: &millimamba::tensor::GradCheckReport) {
    println!(
        "{} {name}: {} coords, max rel err {:.3e} (tol {:.0e})",
        if r.passed() { "PASS" } else { "FAIL" },
        r.checked,
        r.max_rel_error,
        r.tol
    );
}

fn gradcheck_one(
    name: &str,
    f: impl Fn(u64) -> millimamba::tensor::Result<millimamba::tensor::GradCheckReport>,
    seed: u64,
) -> Result<bool, AppError> {
    let r = f(seed)?;
    report_line(name, &r);
    Ok(r.passed())
}

fn cmd_gradcheck(seed: u64) -> Result<(), AppError> {
    use millimamba::diagnostics as diag;
    let mut ok = true;
    ok &= gradcheck_one("tensor ops", diag::check_ops, seed)?;
    ok &= gradcheck_one("vim layer", diag::check_vim_layer, seed)?;
    ok &= gradcheck_one("decoder layer", diag::check_decoder_layer, seed)?;
    ok &= gradcheck_one("end-to-end loss", diag::check_end_to_end, seed)?;
    if ok {
        Ok(())
    } else {
        Err(runtime("gradient check failed".into()))
    }
}

fn cmd_ablate(
    config: Option<&Path>,
    axis: &str,
    values: &str,
    windows: usize,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let base = load_config(config, None)?;
    let values: Vec<&str> = values.split(',').map(str::trim).collect();
    if values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(validation("--values must be a non-empty comma list".into()));
    }
    let mut rows = Vec::new();
    println!("{:<14} {:>12} {:>8} {:>8} {:>8}", axis, "final_loss", "AP", "AP50", "AP75");
    for v in &values {
        let mut cfg = base.clone();
        cfg.set(axis, v)?;
        cfg.validate()?;
        let train_set = synth_samples(&cfg, windows, cfg.seed)?;
        let eval_set = synth_samples(&cfg, windows.max(8), cfg.seed.wrapping_add(1))?;
        let outcome = train(&cfg, &train_set)?;
        let report = evaluate(&cfg, &outcome.params, &eval_set)?;
        let final_loss = outcome.records.last().map(|r| r.loss_total).unwrap_or(0.0);
        println!(
            "{:<14} {:>12.6} {:>8.1} {:>8.1} {:>8.1}",
            v,
            final_loss,
            report.ap * 100.0,
            report.ap50 * 100.0,
            report.ap75 * 100.0
        );
        let mut row = BTreeMap::new();
        row.insert("value".to_string(), serde_json::json!(v));
        row.insert("final_loss".to_string(), serde_json::json!(final_loss));
        row.insert("ap".to_string(), serde_json::json!(report.ap * 100.0));
        row.insert("ap50".to_string(), serde_json::json!(report.ap50 * 100.0));
        row.insert("ap75".to_string(), serde_json::json!(report.ap75 * 100.0));
        rows.push(row);
    }
    if let Some(p) = out {
        write_json(p, &rows)?;
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<(), AppError> {
    match cmd {
        Cmd::Simulate {
            config,
            seed,
            out,
            frames,
        } => cmd_simulate(config.as_deref(), seed, &out, frames),
        Cmd::Preprocess { config, input, out } => cmd_preprocess(config.as_deref(), &input, &out),
        Cmd::BenchHeatmap {
            frames,
            runs,
            seed,
            out,
        } => cmd_bench(frames, runs, seed, out.as_deref()),
        Cmd::Train {
            config,
            seed,
            out,
            windows,
        } => cmd_train(config.as_deref(), seed, &out, windows),
        Cmd::Eval {
            config,
            seed,
            checkpoint,
            windows,
            out,
            perfect,
        } => cmd_eval(
            config.as_deref(),
            seed,
            checkpoint.as_deref(),
            windows,
            out.as_deref(),
            perfect,
        ),
        Cmd::Infer {
            config,
            seed,
            checkpoint,
            windows,
            out,
        } => cmd_infer(config.as_deref(), seed, &checkpoint, windows, out.as_deref()),
        Cmd::Gradcheck { seed } => cmd_gradcheck(seed),
        Cmd::Ablate {
            config,
            axis,
            values,
            windows,
            out,
        } => cmd_ablate(config.as_deref(), &axis, &values, windows, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Usage/flag errors are validation failures (exit 1); --help and
            // --version print and succeed.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
