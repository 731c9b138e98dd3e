//! Acceptance suite: ten end-to-end criteria covering the DSP oracle, FFT
//! and clutter-removal correctness, scan equivalence, gradient checks,
//! linear-complexity scaling, toy learnability, metric fidelity, the
//! 3D-vs-4D benchmark, and full-chain determinism. Each criterion prints
//! one `PASS`/`FAIL` line; the test fails if any criterion does.

use std::f64::consts::TAU;
use std::io::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use millimamba::diagnostics;
use millimamba::dsp::{
    bench_heatmaps, fft_1d, preprocess_frame, remove_clutter, DspConfig, FourDConfig,
};
use millimamba::encoder::{self, EncoderConfig, EncoderKind};
use millimamba::nn::load_params;
use millimamba::objective::{evaluate_ap, loss_vel, FrameEval, OksParams};
use millimamba::pipeline::{evaluate, train, windows_to_samples, ModelConfig, Sample};
use millimamba::pose::PoseWindow;
use millimamba::radar_sim::{
    generate_dataset, synthesize_cube, CubeDims, RadarCube, RadarMapping, Scatterer, ScriptSpec,
    View,
};
use millimamba::tensor::{Tape, Tensor};

/// Bypasses the harness's output capture so every criterion's verdict is
/// visible in a plain `cargo test` run.
fn report(line: &str) {
    let mut out = std::io::stdout();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

type Verdict = Result<String, String>;

fn full_dims() -> CubeDims {
    CubeDims {
        antennas: 12,
        chirps: 128,
        adc: 256,
    }
}

// --- A1: single-scatterer DSP oracle ---------------------------------------

/// Exhaustive grid of integer-bin single scatterers; the 3D heatmap argmax
/// must land at the analytically predicted (angle, doppler, range) bin.
fn a1_dsp_oracle() -> Verdict {
    let t0 = Instant::now();
    let dims = full_dims();
    let cfg = DspConfig::default(); // 128 -> 8 chirps, angle pad 64, rect
    let ranges = [3usize, 50, 100, 200, 255];
    // Pre-subsample doppler bins; bin 0 is excluded because a zero-velocity
    // tone is exactly the clutter the mean subtraction removes. Bin 8 folds
    // to doppler bin 0 after the stride-16 subsample.
    let dopplers = [1usize, 5, 8, 19];
    let angles: [i64; 8] = [0, 1, 5, 11, 20, 31, -7, -21];
    let mut checked = 0usize;
    for &r in &ranges {
        for &db in &dopplers {
            for &m in &angles {
                let s = Scatterer {
                    range_bin: r as f64,
                    doppler_bin: db as f64,
                    angle_freq: m as f64 / cfg.angle_pad as f64,
                    amplitude: 1.0,
                    phase: 0.3,
                };
                let cube = synthesize_cube(&[s], dims).map_err(|e| e.to_string())?;
                let hm = preprocess_frame(&cube, &cfg).map_err(|e| e.to_string())?;
                // Post-subsample doppler phase advances db*stride/chirps
                // = db/8 cycles per kept chirp, so the tone folds to
                // bin db mod 8.
                let want = (
                    m.rem_euclid(cfg.angle_pad as i64) as usize,
                    db % cfg.chirp_target,
                    r,
                );
                let got = hm.argmax();
                if got != want {
                    return Err(format!(
                        "scatterer (r={r}, d={db}, m={m}): argmax {got:?}, predicted {want:?}"
                    ));
                }
                checked += 1;
            }
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    if dt >= 30.0 {
        return Err(format!("{checked} cubes took {dt:.1}s (budget 30s)"));
    }
    Ok(format!("{checked}/160 argmaxes at predicted bins, {dt:.1}s"))
}

// --- A2: FFT vs naive DFT ---------------------------------------------------

fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|m| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| v * Complex64::from_polar(1.0, -TAU * (i * m) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn a2_fft_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for &n in &[4usize, 8, 16, 64, 256] {
        for _ in 0..100 {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let y = fft_1d(&x, n).map_err(|e| e.to_string())?;
            let want = naive_dft(&x);
            let scale = want.iter().map(|v| v.norm()).fold(1.0, f64::max);
            for (a, b) in y.iter().zip(&want) {
                worst = worst.max((a - b).norm() / scale);
            }
            // Parseval for the unnormalized forward transform:
            // sum |X|^2 = N * sum |x|^2.
            let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ey: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            let perr = (ey - n as f64 * ex).abs() / (n as f64 * ex);
            worst = worst.max(perr);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    if worst >= 1e-10 {
        return Err(format!("max relative error {worst:.3e} (tol 1e-10)"));
    }
    if dt >= 10.0 {
        return Err(format!("took {dt:.1}s (budget 10s)"));
    }
    Ok(format!(
        "500 inputs match naive DFT + Parseval, max rel err {worst:.3e}"
    ))
}

// --- A3: clutter removal ----------------------------------------------------

fn a3_clutter() -> Verdict {
    let dims = CubeDims {
        antennas: 4,
        chirps: 16,
        adc: 8,
    };
    // Constant across chirps (but varying over antennas and samples).
    let mut cube = RadarCube::zeros(dims, 0, View::Vertical);
    for a in 0..dims.antennas {
        for c in 0..dims.chirps {
            for n in 0..dims.adc {
                cube.samples[(a * dims.chirps + c) * dims.adc + n] =
                    Complex64::new(1.0 + a as f64 + 0.1 * n as f64, -2.0 + 0.3 * n as f64);
            }
        }
    }
    let out = remove_clutter(&cube);
    let peak = out
        .samples
        .iter()
        .map(|s| s.re.abs().max(s.im.abs()))
        .fold(0.0, f64::max);
    if peak >= 1e-10 {
        return Err(format!("constant cube residual {peak:.3e} (tol 1e-10)"));
    }
    // Exact idempotence on a generic cube.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cube2 = RadarCube::zeros(dims, 0, View::Vertical);
    for s in cube2.samples.iter_mut() {
        *s = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
    }
    let once = remove_clutter(&cube2);
    let twice = remove_clutter(&once);
    if once.samples != twice.samples {
        return Err("second application is not bit-identical".into());
    }
    Ok(format!(
        "constant cube -> {peak:.1e} residual; idempotence bit-exact"
    ))
}

// --- A4: scan equivalence ---------------------------------------------------

/// Plain per-step replay of the selective scan recurrence.
#[allow(clippy::too_many_arguments)]
fn naive_scan(
    l: usize,
    p: usize,
    n: usize,
    u: &[f64],
    delta: &[f64],
    b: &[f64],
    c: &[f64],
    a: &[f64],
    skip: &[f64],
) -> Vec<f64> {
    let mut h = vec![0.0; p * n];
    let mut y = vec![0.0; l * p];
    for t in 0..l {
        for pi in 0..p {
            let dt = delta[t * p + pi];
            let ut = u[t * p + pi];
            let mut acc = 0.0;
            for ni in 0..n {
                let abar = (dt * a[pi * n + ni]).exp();
                h[pi * n + ni] = abar * h[pi * n + ni] + dt * b[t * n + ni] * ut;
                acc += c[t * n + ni] * h[pi * n + ni];
            }
            y[t * p + pi] = acc + skip[pi] * ut;
        }
    }
    y
}

fn a4_scan_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for &l in &[1usize, 2, 64, 1000] {
        for _ in 0..50 {
            let p = rng.gen_range(1..=3);
            let n = rng.gen_range(1..=4);
            let mut draw = |len: usize, lo: f64, hi: f64| -> Vec<f64> {
                (0..len).map(|_| rng.gen_range(lo..hi)).collect()
            };
            let u = draw(l * p, -1.0, 1.0);
            let delta = draw(l * p, 0.01, 1.0);
            let b = draw(l * n, -1.0, 1.0);
            let c = draw(l * n, -1.0, 1.0);
            // Negative a keeps the recurrence contractive, as in the layer.
            let a = draw(p * n, -2.0, -0.05);
            let skip = draw(p, -1.0, 1.0);
            let mut tape = Tape::new();
            let mk = |tape: &mut Tape, shape: Vec<usize>, d: &[f64]| {
                tape.constant(Tensor::new(shape, d.to_vec()).unwrap())
            };
            let vu = mk(&mut tape, vec![l, p], &u);
            let vd = mk(&mut tape, vec![l, p], &delta);
            let vb = mk(&mut tape, vec![l, n], &b);
            let vc = mk(&mut tape, vec![l, n], &c);
            let va = mk(&mut tape, vec![p, n], &a);
            let vs = mk(&mut tape, vec![p], &skip);
            let y = tape
                .ssm_scan(vu, vd, vb, vc, va, vs)
                .map_err(|e| e.to_string())?;
            let got = tape.value(y).data().to_vec();
            let want = naive_scan(l, p, n, &u, &delta, &b, &c, &a, &skip);
            let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs() / scale);
            }
        }
    }
    if worst >= 1e-10 {
        return Err(format!("max relative error {worst:.3e} (tol 1e-10)"));
    }
    // Scalar case: abar = exp(1 * ln 0.5) = 0.5, B = C = 1, skip = 0,
    // u = [1, 1, 1] => y = [1, 1.5, 1.75].
    let mut tape = Tape::new();
    let ones3 = Tensor::new(vec![3, 1], vec![1.0; 3]).unwrap();
    let vu = tape.constant(ones3.clone());
    let vd = tape.constant(ones3.clone());
    let vb = tape.constant(ones3.clone());
    let vc = tape.constant(ones3);
    let va = tape.constant(Tensor::new(vec![1, 1], vec![0.5f64.ln()]).unwrap());
    let vs = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    let y = tape
        .ssm_scan(vu, vd, vb, vc, va, vs)
        .map_err(|e| e.to_string())?;
    let got = tape.value(y).data().to_vec();
    for (g, w) in got.iter().zip(&[1.0, 1.5, 1.75]) {
        if (g - w).abs() >= 1e-12 {
            return Err(format!("scalar case {got:?} != [1, 1.5, 1.75]"));
        }
    }
    Ok(format!(
        "200 random draws match naive recurrence (max rel err {worst:.3e}); scalar case exact"
    ))
}

// --- A5: gradient suite -----------------------------------------------------

fn a5_gradients() -> Verdict {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    for (name, r) in [
        ("ops", diagnostics::check_ops(5).map_err(|e| e.to_string())?),
        (
            "vim",
            diagnostics::check_vim_layer(5).map_err(|e| e.to_string())?,
        ),
        (
            "decoder",
            diagnostics::check_decoder_layer(5).map_err(|e| e.to_string())?,
        ),
        (
            "end-to-end",
            diagnostics::check_end_to_end(5).map_err(|e| e.to_string())?,
        ),
    ] {
        if !r.passed() {
            return Err(format!(
                "{name}: max rel err {:.3e} exceeds tol {:.0e}",
                r.max_rel_error, r.tol
            ));
        }
        parts.push(format!("{name} {:.1e}", r.max_rel_error));
    }
    let dt = t0.elapsed().as_secs_f64();
    if dt >= 300.0 {
        return Err(format!("took {dt:.0}s (budget 5 min)"));
    }
    Ok(format!("max rel errs: {} ({dt:.0}s)", parts.join(", ")))
}

// --- A6: linear complexity --------------------------------------------------

fn encode_min_time(cfg: &EncoderConfig, runs: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = encoder::encoder_init(cfg, &mut rng).map_err(|e| e.to_string())?;
    let numel = 2 * cfg.frames * cfg.height * cfg.doppler * cfg.width;
    let input = Tensor::new(
        vec![2, cfg.frames, cfg.height, cfg.doppler, cfg.width],
        (0..numel).map(|_| rng.gen::<f64>() - 0.5).collect(),
    )
    .map_err(|e| e.to_string())?;
    let inputs = [input];
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut tape = Tape::new();
        let vars = load_params(&mut tape, &params);
        let t0 = Instant::now();
        let y = encoder::encode(&mut tape, &vars, cfg, &inputs).map_err(|e| e.to_string())?;
        std::hint::black_box(tape.value(y).data()[0]);
        times.push(t0.elapsed().as_secs_f64());
    }
    // Minimum over runs: scheduler or allocator hiccups only ever inflate a
    // wall-time sample, so the minimum is the least noisy estimate.
    Ok(times.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn a6_linear_complexity() -> Verdict {
    // 32 tokens per frame at H=16, W=32; frame counts scale the sequence to
    // N_tok = 4096, 8192, 16384 without touching per-token work.
    let base = EncoderConfig {
        views: 1,
        frames: 128,
        c_f: 8,
        height: 16,
        width: 32,
        doppler: 8,
        layers: 1,
        d_state: 4,
        expand: 2,
        conv_kernel: 4,
        serpentine: false,
        kind: EncoderKind::Mamba,
    };
    // One retry: the measurement can still be spoiled by a burst of outside
    // load, which only ever inflates times.
    let mut last_err = String::new();
    for _ in 0..2 {
        let mut mins = Vec::new();
        for frames in [128usize, 256, 512] {
            let cfg = EncoderConfig { frames, ..base.clone() };
            assert_eq!(cfg.n_tokens(), frames * 32);
            mins.push((cfg.n_tokens(), encode_min_time(&cfg, 5)?));
        }
        let mut ratios = Vec::new();
        for w in mins.windows(2) {
            let ratio = w[1].1 / w[0].1;
            if ratio >= 2.5 {
                ratios.clear();
                last_err = format!(
                    "time({}) / time({}) = {ratio:.2} (required < 2.5)",
                    w[1].0, w[0].0
                );
                break;
            }
            ratios.push(format!("{}->{}: {ratio:.2}", w[0].0, w[1].0));
        }
        if ratios.len() == 2 {
            return Ok(format!(
                "encode wall-time ratios {} (quadratic mixing would give ~4)",
                ratios.join(", ")
            ));
        }
    }
    Err(last_err)
}

// --- A7: toy learnability ---------------------------------------------------

fn toy_config() -> ModelConfig {
    ModelConfig {
        frames: 3,
        joints: 14,
        views: 1,
        steps: 2000,
        // The keypoint similarity falloff scale is a dataset convention, not
        // a training hyperparameter; 2.0 matches the synthetic scenes' size
        // so that the metric has usable dynamic range at this step budget.
        oks_fixed_scale: 2.0,
        ..ModelConfig::default()
    }
}

fn toy_samples(cfg: &ModelConfig, windows: usize, seed: u64) -> Result<Vec<Sample>, String> {
    let spec = ScriptSpec {
        joint_count: cfg.joints,
        frame_count: windows + cfg.frames - 1,
        ..ScriptSpec::default()
    };
    let sims = generate_dataset(
        &spec,
        cfg.cube_dims(),
        &RadarMapping::default(),
        &cfg.view_list(),
        cfg.frames,
        cfg.noise_std,
        seed,
    )
    .map_err(|e| e.to_string())?;
    windows_to_samples(cfg, &sims).map_err(|e| e.to_string())
}

fn a7_learnability() -> Verdict {
    let t0 = Instant::now();
    let cfg = toy_config();
    let train_set = toy_samples(&cfg, 200, cfg.seed)?;
    let test_set = toy_samples(&cfg, 32, cfg.seed + 1)?;

    // Many-to-many (default strategy).
    let outcome = train(&cfg, &train_set).map_err(|e| e.to_string())?;
    let loss0 = outcome.records.first().map(|r| r.loss_total).unwrap_or(0.0);
    let loss_end = outcome.records.last().map(|r| r.loss_total).unwrap_or(0.0);
    if !(loss_end < 0.5 * loss0) {
        return Err(format!(
            "loss {loss_end:.4} not below 50% of step-0 loss {loss0:.4}"
        ));
    }
    let m2m = evaluate(&cfg, &outcome.params, &test_set).map_err(|e| e.to_string())?;
    if !(m2m.mean_oks >= 0.5) {
        return Err(format!("mean test OKS {:.3} < 0.5", m2m.mean_oks));
    }

    // Many-to-one on the same seeds.
    let cfg_m2o = ModelConfig {
        many_to_one: true,
        ..cfg.clone()
    };
    let outcome_m2o = train(&cfg_m2o, &train_set).map_err(|e| e.to_string())?;
    let m2o = evaluate(&cfg_m2o, &outcome_m2o.params, &test_set).map_err(|e| e.to_string())?;
    if !(m2m.mean_oks >= m2o.mean_oks - 0.05) {
        return Err(format!(
            "many-to-many OKS {:.3} below many-to-one {:.3} - 0.05",
            m2m.mean_oks, m2o.mean_oks
        ));
    }
    let dt = t0.elapsed().as_secs_f64();
    if dt >= 1800.0 {
        return Err(format!("took {:.0} min (budget 30)", dt / 60.0));
    }
    Ok(format!(
        "loss {loss0:.3} -> {loss_end:.3}; test OKS m2m {:.3}, m2o {:.3} ({:.1} min)",
        m2m.mean_oks,
        m2o.mean_oks,
        dt / 60.0
    ))
}

// --- A8: metric fidelity ------------------------------------------------------

/// Single-joint frame whose OKS against the origin is `target` (nudged just
/// above so threshold comparisons at exactly `target` stay on the pass
/// side of floating-point round-off).
fn frame_with_oks(target: f64, params: &OksParams) -> FrameEval {
    let t = (target + 1e-9).min(1.0);
    let d = params.fixed_scale * params.k[0] * (-2.0 * t.ln()).sqrt();
    FrameEval {
        pred: vec![[d, 0.0]],
        gt: vec![[0.0, 0.0]],
        vis: vec![1],
    }
}

fn a8_metric_fidelity() -> Verdict {
    let params = OksParams::uniform(1, 0.079, 1.0);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;

    // OKS {0.60, 0.90} -> AP 0.60, AP50 1.0, AP75 0.5.
    let frames = [frame_with_oks(0.60, &params), frame_with_oks(0.90, &params)];
    let r = evaluate_ap(&frames, &params, None).map_err(|e| e.to_string())?;
    if !(close(r.ap, 0.60) && close(r.ap50, 1.0) && close(r.ap75, 0.5)) {
        return Err(format!(
            "OKS {{0.60, 0.90}}: AP {:.4}/{:.4}/{:.4}, want 0.60/1.0/0.5",
            r.ap, r.ap50, r.ap75
        ));
    }
    // x100 report convention.
    if !close(100.0 * r.ap, 60.0) {
        return Err(format!("AP x100 = {:.4}, want 60.0", 100.0 * r.ap));
    }

    // Perfect predictions -> all 1.
    let perfect = [FrameEval {
        pred: vec![[0.3, 0.7]],
        gt: vec![[0.3, 0.7]],
        vis: vec![1],
    }];
    let r = evaluate_ap(&perfect, &params, None).map_err(|e| e.to_string())?;
    if !(close(r.ap, 1.0) && close(r.ap50, 1.0) && close(r.ap75, 1.0)) {
        return Err(format!("perfect: AP {:.4}/{:.4}/{:.4}", r.ap, r.ap50, r.ap75));
    }

    // OKS 0.49 -> all 0.
    let low = [frame_with_oks(0.49, &params)];
    let r = evaluate_ap(&low, &params, None).map_err(|e| e.to_string())?;
    if !(close(r.ap, 0.0) && close(r.ap50, 0.0) && close(r.ap75, 0.0)) {
        return Err(format!("0.49: AP {:.4}/{:.4}/{:.4}", r.ap, r.ap50, r.ap75));
    }

    // Velocity loss: gt moves by (0.3, 0.4), pred stays put:
    // ||v_hat - v||^2 = 0.25 over (T-1) * J = 1 terms.
    let mut gt = PoseWindow::new(2, 1);
    gt.set_coord(0, 0, [0.1, 0.1]);
    gt.set_coord(1, 0, [0.4, 0.5]);
    let mut pred = PoseWindow::new(2, 1);
    pred.set_coord(0, 0, [0.2, 0.2]);
    pred.set_coord(1, 0, [0.2, 0.2]);
    let lv = loss_vel(&pred, &gt).map_err(|e| e.to_string())?;
    if (lv - 0.25).abs() >= 1e-12 {
        return Err(format!("loss_vel {lv:.15} != 0.25"));
    }
    Ok("AP enumerations, x100 convention and velocity-loss example exact".into())
}

// --- A9: 3D-vs-4D benchmark ---------------------------------------------------

fn a9_benchmark() -> Verdict {
    let report = bench_heatmaps(
        20,
        5,
        full_dims(),
        &DspConfig::default(),
        &FourDConfig::default(),
        9,
    )
    .map_err(|e| e.to_string())?;
    if report.memory_ratio < 2.0 || report.latency_ratio < 2.0 {
        return Err(format!(
            "memory ratio {:.2}, latency ratio {:.2} (both must be >= 2)",
            report.memory_ratio, report.latency_ratio
        ));
    }
    Ok(format!(
        "measured memory {:.1}x / latency {:.1}x vs reference {:.0}x / {:.1}x ({})",
        report.memory_ratio,
        report.latency_ratio,
        report.reference_memory_ratio,
        report.reference_latency_ratio,
        report.note
    ))
}

// --- A10: determinism ----------------------------------------------------------

fn a10_chain() -> Result<String, String> {
    let cfg = ModelConfig {
        steps: 200,
        seed: 0,
        ..toy_config()
    };
    let samples = toy_samples(&cfg, 20, cfg.seed)?;
    let outcome = train(&cfg, &samples).map_err(|e| e.to_string())?;
    let metrics = evaluate(&cfg, &outcome.params, &samples).map_err(|e| e.to_string())?;
    serde_json::to_string(&metrics).map_err(|e| e.to_string())
}

fn a10_determinism() -> Verdict {
    let first = a10_chain()?;
    let second = a10_chain()?;
    if first != second {
        return Err(format!(
            "metrics JSON differs between runs:\n  {first}\n  {second}"
        ));
    }
    Ok(format!("two full chains produced byte-identical metrics JSON ({first})"))
}

// --- harness -----------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("A1 dsp-oracle", Box::new(a1_dsp_oracle)),
        ("A2 fft", Box::new(a2_fft_oracle)),
        ("A3 clutter", Box::new(a3_clutter)),
        ("A4 scan", Box::new(a4_scan_equivalence)),
        ("A5 gradients", Box::new(a5_gradients)),
        ("A6 linear-complexity", Box::new(a6_linear_complexity)),
        ("A7 learnability", Box::new(a7_learnability)),
        ("A8 metrics", Box::new(a8_metric_fidelity)),
        ("A9 benchmark", Box::new(a9_benchmark)),
        ("A10 determinism", Box::new(a10_determinism)),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => report(&format!("PASS {name}: {detail}")),
            Err(detail) => {
                report(&format!("FAIL {name}: {detail}"));
                failures.push(name.to_string());
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
