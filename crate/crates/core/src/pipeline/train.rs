//! Training loop, center-frame inference, and evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::stability_check;
use crate::nn::{collect_grads, load_params};
use crate::objective::{evaluate_ap, loss_oks, loss_vel, total_loss_t, ApReport, FrameEval};
use crate::pose::PoseWindow;
use crate::tensor::{AdamConfig, AdamState, Params, Result, Tape, Tensor, TensorError};

use super::{Model, ModelConfig, Sample};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss_total: f64,
    pub loss_oks: f64,
    pub loss_vel: f64,
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

pub struct TrainOutcome {
    pub params: Params,
    pub records: Vec<TrainRecord>,
    /// Intermediate checkpoints at the configured cadence (step, params).
    pub checkpoints: Vec<(usize, Params)>,
}

fn pred_to_window(pred: &Tensor) -> PoseWindow {
    let s = pred.shape();
    let (t, j) = (s[0], s[1]);
    let mut w = PoseWindow::new(t, j);
    for f in 0..t {
        for ji in 0..j {
            let base = (f * j + ji) * 2;
            w.set_coord(f, ji, [pred.data()[base], pred.data()[base + 1]]);
        }
    }
    w
}

/// The ground truth the loss sees: the whole window, or just its center
/// frame for the many-to-one strategy.
fn gt_for_loss(cfg: &ModelConfig, sample: &Sample) -> PoseWindow {
    if cfg.many_to_one {
        sample.gt.frame(cfg.center_offset())
    } else {
        sample.gt.clone()
    }
}

/// Runs `cfg.steps` Adam steps over `samples`. Deterministic given the
/// config seed; aborts with the offending step in the error if the loss
/// leaves the finite range.
pub fn train(cfg: &ModelConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TensorError::InvalidArgument("train: no samples".into()));
    }
    let model = Model::new(cfg)?;
    let mut params = model.init_params(cfg.seed)?;
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_ba7c4));
    let oks_params = cfg.oks_params();
    let weights = cfg.loss_weights();

    let mut records = Vec::with_capacity(cfg.steps);
    let mut checkpoints = Vec::new();
    let t0 = Instant::now();
    for step in 0..cfg.steps {
        let mut grad_sum: BTreeMap<String, Tensor> = BTreeMap::new();
        let (mut l_total, mut l_oks, mut l_vel) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.batch_size {
            let sample = &samples[rng.gen_range(0..samples.len())];
            let gt = gt_for_loss(cfg, sample);
            let mut tape = Tape::new();
            let vars = load_params(&mut tape, &params);
            let pred = model.forward(&mut tape, &vars, &sample.inputs)?;
            let loss = total_loss_t(&mut tape, &vars, pred, &gt, &oks_params, &weights)?;
            l_total += tape.value(loss).item();
            let pw = pred_to_window(tape.value(pred));
            l_oks += loss_oks(&pw, &gt, &oks_params)?;
            l_vel += loss_vel(&pw, &gt)?;
            let grads = tape.backward(loss)?;
            for (name, g) in collect_grads(&vars, &grads) {
                grad_sum
                    .entry(name)
                    .and_modify(|acc| {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    })
                    .or_insert(g);
            }
        }
        let inv_b = 1.0 / cfg.batch_size as f64;
        let (l_total, l_oks, l_vel) = (l_total * inv_b, l_oks * inv_b, l_vel * inv_b);
        if !l_total.is_finite() {
            return Err(TensorError::NonFinite(format!(
                "train: non-finite loss at step {step}"
            )));
        }
        let mut sq = 0.0;
        for g in grad_sum.values_mut() {
            for v in g.data_mut() {
                *v *= inv_b;
                sq += *v * *v;
            }
        }
        adam.step(&mut params, &grad_sum)?;
        stability_check(&params)?;
        records.push(TrainRecord {
            step,
            loss_total: l_total,
            loss_oks: l_oks,
            loss_vel: l_vel,
            grad_norm: sq.sqrt(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            checkpoints.push((step + 1, params.clone()));
        }
    }
    Ok(TrainOutcome {
        params,
        records,
        checkpoints,
    })
}

/// One retained center-frame prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferredPose {
    pub frame_index: usize,
    pub coords: Vec<[f64; 2]>,
}

/// Runs the model over every window and keeps the center-frame prediction;
/// boundary frames without a full window never appear (the first window's
/// center is (T-1)/2).
pub fn infer(cfg: &ModelConfig, params: &Params, samples: &[Sample]) -> Result<Vec<InferredPose>> {
    let model = Model::new(cfg)?;
    let center_row = if cfg.many_to_one {
        0
    } else {
        cfg.center_offset()
    };
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let mut tape = Tape::new();
        let vars = load_params(&mut tape, params);
        let pred = model.forward(&mut tape, &vars, &sample.inputs)?;
        let w = pred_to_window(tape.value(pred));
        let coords = (0..cfg.joints).map(|j| w.coord(center_row, j)).collect();
        out.push(InferredPose {
            frame_index: sample.center,
            coords,
        });
    }
    Ok(out)
}

/// Center-frame AP/OKS evaluation of `params` over `samples`.
pub fn evaluate(cfg: &ModelConfig, params: &Params, samples: &[Sample]) -> Result<ApReport> {
    let preds = infer(cfg, params, samples)?;
    let oks_params = cfg.oks_params();
    let frames: Vec<FrameEval> = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| {
            debug_assert_eq!(p.frame_index, s.center);
            let gt = s.gt.frame(cfg.center_offset());
            FrameEval {
                pred: p.coords.clone(),
                gt: gt.coords.clone(),
                vis: gt.visibility.clone(),
            }
        })
        .collect();
    let names: Vec<&str> = if cfg.joints == 14 {
        crate::objective::JOINT_NAMES_14.to_vec()
    } else {
        Vec::new()
    };
    evaluate_ap(
        &frames,
        &oks_params,
        if names.is_empty() { None } else { Some(&names) },
    )
}
