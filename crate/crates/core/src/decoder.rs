//! Keypoint-query decoder with decomposed spatio-temporal attention.
//!
//! The decoder holds one learned query per (frame, joint) pair. Each layer
//! runs, with pre-norm residuals: spatial self-attention (queries of the
//! same frame attend to each other), temporal self-attention (queries of
//! the same joint attend across frames), cross-attention into the encoder
//! token sequence (keys carry the encoder position embeddings), and an
//! MLP. A sigmoid head maps each query to normalized image coordinates.
//!
//! The many-to-one variant keeps a single query per joint and drops the
//! temporal stage; it predicts only the window's center frame and exists
//! for the multi-frame-vs-single-frame comparison.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{fetch, init_layer_norm, init_linear, layer_norm_p, linear_p, trunc_normal, VarMap};
use crate::tensor::{Params, Result, Tape, TensorError, Var};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Frames per window (T).
    pub frames: usize,
    /// Joints per frame (J).
    pub joints: usize,
    /// Query width; must equal the encoder's C_f.
    pub d_model: usize,
    /// Decoder depth (L_d).
    pub layers: usize,
    /// Attention heads; must divide d_model.
    pub heads: usize,
    /// MLP hidden width multiplier.
    pub mlp_ratio: usize,
    /// Single center-frame query set instead of one per frame.
    pub many_to_one: bool,
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TensorError::InvalidArgument(format!("decoder config: {msg}")));
        if self.frames == 0 || self.joints == 0 || self.layers == 0 || self.mlp_ratio == 0 {
            return bad("frames, joints, layers, mlp_ratio must be positive");
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("heads must be positive and divide d_model");
        }
        Ok(())
    }

    /// Number of query rows.
    pub fn n_queries(&self) -> usize {
        if self.many_to_one {
            self.joints
        } else {
            self.frames * self.joints
        }
    }

    /// Frames the decoder actually emits.
    pub fn frames_out(&self) -> usize {
        if self.many_to_one {
            1
        } else {
            self.frames
        }
    }
}

/// Builds the decoder's named parameters with a seeded initializer.
pub fn decoder_init(cfg: &DecoderConfig, rng: &mut ChaCha8Rng) -> Result<Params> {
    cfg.validate()?;
    let std = 0.02;
    let d = cfg.d_model;
    let mut p = Params::new();
    p.insert(
        "decoder.queries".to_string(),
        trunc_normal(&[cfg.n_queries(), d], std, rng),
    );
    for i in 0..cfg.layers {
        let mut stages = vec!["sa", "ca"];
        if !cfg.many_to_one {
            stages.insert(1, "ta");
        }
        for stage in stages {
            let pre = format!("decoder.layer.{i}.{stage}");
            init_layer_norm(&mut p, &format!("{pre}.norm"), d);
            for proj in ["q", "k", "v", "o"] {
                init_linear(&mut p, &format!("{pre}.{proj}"), d, d, std, rng);
            }
        }
        let pre = format!("decoder.layer.{i}.mlp");
        init_layer_norm(&mut p, &format!("{pre}.norm"), d);
        init_linear(&mut p, &format!("{pre}.fc1"), d, cfg.mlp_ratio * d, std, rng);
        init_linear(&mut p, &format!("{pre}.fc2"), cfg.mlp_ratio * d, d, std, rng);
    }
    init_layer_norm(&mut p, "decoder.head.norm", d);
    init_linear(&mut p, "decoder.head.fc1", d, d, std, rng);
    init_linear(&mut p, "decoder.head.fc2", d, 2, std, rng);
    Ok(p)
}

/// Scaled-dot-product multi-head attention. `q: [Nq][D]`, `k, v: [Nk][D]`.
/// Projections and the output layer live under `prefix.{q,k,v,o}`.
fn attention(
    tape: &mut Tape,
    vars: &VarMap,
    prefix: &str,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
) -> Result<Var> {
    let d = tape.shape(q)[1];
    let dh = d / heads;
    let qp = linear_p(tape, vars, &format!("{prefix}.q"), q)?;
    let kp = linear_p(tape, vars, &format!("{prefix}.k"), k)?;
    let vp = linear_p(tape, vars, &format!("{prefix}.v"), v)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice(qp, 1, h * dh, dh)?;
        let kh = tape.slice(kp, 1, h * dh, dh)?;
        let vh = tape.slice(vp, 1, h * dh, dh)?;
        let kt = tape.permute(kh, &[1, 0])?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let att = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(att, vh)?);
    }
    let merged = tape.concat(&outs, 1)?;
    linear_p(tape, vars, &format!("{prefix}.o"), merged)
}

/// Pre-norm residual self-attention among the J queries of each frame.
/// `x: [T*J][D]`, row index t*J + j.
pub(crate) fn spatial_attention(
    tape: &mut Tape,
    vars: &VarMap,
    prefix: &str,
    x: Var,
    frames: usize,
    joints: usize,
    heads: usize,
) -> Result<Var> {
    let h = layer_norm_p(tape, vars, &format!("{prefix}.norm"), x)?;
    let mut blocks = Vec::with_capacity(frames);
    for t in 0..frames {
        let ht = tape.slice(h, 0, t * joints, joints)?;
        blocks.push(attention(tape, vars, prefix, ht, ht, ht, heads)?);
    }
    let y = tape.concat(&blocks, 0)?;
    tape.add(x, y)
}

/// Pre-norm residual self-attention among the T queries of each joint.
pub(crate) fn temporal_attention(
    tape: &mut Tape,
    vars: &VarMap,
    prefix: &str,
    x: Var,
    frames: usize,
    joints: usize,
    heads: usize,
) -> Result<Var> {
    let h = layer_norm_p(tape, vars, &format!("{prefix}.norm"), x)?;
    let mut blocks = Vec::with_capacity(joints);
    for j in 0..joints {
        let rows: Vec<usize> = (0..frames).map(|t| t * joints + j).collect();
        let hj = tape.gather_rows(h, &rows)?;
        blocks.push(attention(tape, vars, prefix, hj, hj, hj, heads)?);
    }
    // Blocks are joint-major; restore the frame-major row order.
    let stacked = tape.concat(&blocks, 0)?;
    let mut back = vec![0usize; frames * joints];
    for (t, slot) in back.chunks_mut(joints).enumerate() {
        for (j, s) in slot.iter_mut().enumerate() {
            *s = j * frames + t;
        }
    }
    let y = tape.gather_rows(stacked, &back)?;
    tape.add(x, y)
}

fn cross_attention(
    tape: &mut Tape,
    vars: &VarMap,
    prefix: &str,
    x: Var,
    enc: Var,
    enc_pos: Var,
    heads: usize,
) -> Result<Var> {
    let h = layer_norm_p(tape, vars, &format!("{prefix}.norm"), x)?;
    let keys = tape.add(enc, enc_pos)?;
    let y = attention(tape, vars, prefix, h, keys, enc, heads)?;
    tape.add(x, y)
}

fn mlp_block(tape: &mut Tape, vars: &VarMap, prefix: &str, x: Var) -> Result<Var> {
    let h = layer_norm_p(tape, vars, &format!("{prefix}.norm"), x)?;
    let h = linear_p(tape, vars, &format!("{prefix}.fc1"), h)?;
    let h = tape.silu(h)?;
    let y = linear_p(tape, vars, &format!("{prefix}.fc2"), h)?;
    tape.add(x, y)
}

/// Full decoder pass. `enc_tokens, enc_pos: [N_tok][D]`. Returns
/// normalized coordinates `[frames_out][J][2]` in (0, 1).
pub fn decode(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &DecoderConfig,
    enc_tokens: Var,
    enc_pos: Var,
) -> Result<Var> {
    cfg.validate()?;
    let enc_shape = tape.shape(enc_tokens).to_vec();
    if enc_shape.len() != 2 || enc_shape[1] != cfg.d_model {
        return Err(TensorError::ShapeMismatch(format!(
            "decoder: encoder tokens {:?}, d_model {}",
            enc_shape, cfg.d_model
        )));
    }
    let (frames_q, joints) = if cfg.many_to_one {
        (1, cfg.joints)
    } else {
        (cfg.frames, cfg.joints)
    };
    let mut x = fetch(vars, "decoder.queries")?;
    for i in 0..cfg.layers {
        let base = format!("decoder.layer.{i}");
        x = spatial_attention(
            tape,
            vars,
            &format!("{base}.sa"),
            x,
            frames_q,
            joints,
            cfg.heads,
        )?;
        if !cfg.many_to_one {
            x = temporal_attention(
                tape,
                vars,
                &format!("{base}.ta"),
                x,
                frames_q,
                joints,
                cfg.heads,
            )?;
        }
        x = cross_attention(
            tape,
            vars,
            &format!("{base}.ca"),
            x,
            enc_tokens,
            enc_pos,
            cfg.heads,
        )?;
        x = mlp_block(tape, vars, &format!("{base}.mlp"), x)?;
    }
    let h = layer_norm_p(tape, vars, "decoder.head.norm", x)?;
    let h = linear_p(tape, vars, "decoder.head.fc1", h)?;
    let h = tape.silu(h)?;
    let logits = linear_p(tape, vars, "decoder.head.fc2", h)?;
    let coords = tape.sigmoid_op(logits)?;
    tape.reshape(coords, vec![cfg.frames_out(), cfg.joints, 2])
}
