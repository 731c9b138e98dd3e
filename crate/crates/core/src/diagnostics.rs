//! Gradient verification suite shared by the CLI and the test harness:
//! finite-difference checks for a tensor-op composite, one SSM layer, one
//! decoder stack, and the end-to-end training loss.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder;
use crate::encoder;
use crate::nn::{collect_grads, load_params, VarMap};
use crate::objective::total_loss_t;
use crate::pipeline::{windows_to_samples, Model, ModelConfig, Sample};
use crate::radar_sim::{generate_dataset, RadarMapping, ScriptSpec};
use crate::tensor::{grad_check, GradCheckReport, Params, Result, Tape, Tensor};

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen::<f64>() - 0.5).collect(),
    )
    .expect("random_tensor")
}

/// The small-but-not-trivial configuration the gradient and learnability
/// checks run at: T=3, J=4, 16x32 heatmaps, C_f=8, one layer each side.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        frames: 3,
        joints: 4,
        ..ModelConfig::default()
    }
}

/// One simulated training sample at `tiny_model_config` scale.
pub fn tiny_sample(cfg: &ModelConfig, seed: u64) -> Result<Sample> {
    let spec = ScriptSpec {
        joint_count: cfg.joints,
        frame_count: cfg.frames,
        ..ScriptSpec::default()
    };
    let windows = generate_dataset(
        &spec,
        cfg.cube_dims(),
        &RadarMapping::default(),
        &cfg.view_list(),
        cfg.frames,
        cfg.noise_std,
        seed,
    )
    .map_err(|e| crate::tensor::TensorError::InvalidArgument(format!("simulate: {e}")))?;
    Ok(windows_to_samples(cfg, &windows)?.remove(0))
}

/// Composite touching matmul, bias add, silu, layer norm and softmax.
pub fn check_ops(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::new();
    params.insert("w".into(), random_tensor(&[5, 6], &mut rng));
    params.insert("b".into(), random_tensor(&[6], &mut rng));
    params.insert("g".into(), random_tensor(&[6], &mut rng));
    params.insert("x".into(), random_tensor(&[4, 5], &mut rng));
    let build = |tape: &mut Tape, p: &Params| -> Result<(VarMap, crate::tensor::Var)> {
        let vars = load_params(tape, p);
        let h = tape.matmul(vars["x"], vars["w"])?;
        let h = tape.add_row_bias(h, vars["b"])?;
        let h = tape.silu(h)?;
        let h = tape.layer_norm(h, vars["g"], vars["b"], 1e-5)?;
        let h = tape.softmax_rows(h)?;
        let sq = tape.mul(h, h)?;
        let loss = tape.sum_all(sq)?;
        Ok((vars, loss))
    };
    let forward = |p: &Params| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, p)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let (vars, loss) = build(&mut tape, &params)?;
    let grads = tape.backward(loss)?;
    let analytic = collect_grads(&vars, &grads);
    grad_check(forward, &params, &analytic, 40, 1e-5, 1e-4, seed)
}

/// One bidirectional SSM layer at the tiny configuration.
pub fn check_vim_layer(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model_config().encoder_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = encoder::encoder_init(&cfg, &mut rng)?;
    let mut rng2 = ChaCha8Rng::seed_from_u64(seed + 1);
    let x = random_tensor(&[12, cfg.c_f], &mut rng2);
    let build = |tape: &mut Tape, p: &Params| -> Result<(VarMap, crate::tensor::Var)> {
        let vars = load_params(tape, p);
        let xv = tape.constant(x.clone());
        let y = encoder::vim_layer(tape, &vars, "encoder.vim.0", xv, &cfg)?;
        let sq = tape.mul(y, y)?;
        let loss = tape.sum_all(sq)?;
        Ok((vars, loss))
    };
    let forward = |p: &Params| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, p)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let (vars, loss) = build(&mut tape, &params)?;
    let grads = tape.backward(loss)?;
    let analytic = collect_grads(&vars, &grads);
    // h = 1e-4: with smaller steps the central difference is dominated by
    // round-off through the scan's exp chains, not by truncation.
    grad_check(forward, &params, &analytic, 48, 1e-4, 1e-4, seed)
}

/// One full decoder stack (spatial + temporal + cross + MLP).
pub fn check_decoder_layer(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model_config().decoder_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = decoder::decoder_init(&cfg, &mut rng)?;
    let mut rng2 = ChaCha8Rng::seed_from_u64(seed + 1);
    let enc = random_tensor(&[10, cfg.d_model], &mut rng2);
    let pos = random_tensor(&[10, cfg.d_model], &mut rng2);
    let build = |tape: &mut Tape, p: &Params| -> Result<(VarMap, crate::tensor::Var)> {
        let vars = load_params(tape, p);
        let e = tape.constant(enc.clone());
        let ep = tape.constant(pos.clone());
        let y = decoder::decode(tape, &vars, &cfg, e, ep)?;
        let sq = tape.mul(y, y)?;
        let loss = tape.sum_all(sq)?;
        Ok((vars, loss))
    };
    let forward = |p: &Params| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, p)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let (vars, loss) = build(&mut tape, &params)?;
    let grads = tape.backward(loss)?;
    let analytic = collect_grads(&vars, &grads);
    // h = 1e-4: at smaller steps the central difference is dominated by
    // round-off through the attention softmax chains, not truncation.
    grad_check(forward, &params, &analytic, 48, 1e-4, 1e-4, seed)
}

/// Full model + total loss on one simulated sample.
pub fn check_end_to_end(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_model_config();
    let model = Model::new(&cfg)?;
    let params = model.init_params(seed)?;
    let sample = tiny_sample(&cfg, seed)?;
    let oks_params = cfg.oks_params();
    let weights = cfg.loss_weights();
    let build = |tape: &mut Tape, p: &Params| -> Result<(VarMap, crate::tensor::Var)> {
        let vars = load_params(tape, p);
        let pred = model.forward(tape, &vars, &sample.inputs)?;
        let loss = total_loss_t(tape, &vars, pred, &sample.gt, &oks_params, &weights)?;
        Ok((vars, loss))
    };
    let forward = |p: &Params| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, p)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let (vars, loss) = build(&mut tape, &params)?;
    let grads = tape.backward(loss)?;
    let analytic = collect_grads(&vars, &grads);
    grad_check(forward, &params, &analytic, 32, 1e-5, 1e-3, seed)
}
