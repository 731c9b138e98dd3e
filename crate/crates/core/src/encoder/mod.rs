//! Cross-view bidirectional state-space encoder.
//!
//! Each radar view's heatmap stack `[2][T][H][D][W]` (real/imag channels,
//! frames, angle, doppler, range) goes through a per-view stem: a merge
//! convolution that collapses the doppler axis, three residual 3D conv
//! blocks, and two 2x2 spatial poolings, ending at `[C_f][T][H/4][W/4]`.
//! Learned per-view position embeddings are added, the views are
//! interleaved frame by frame into one token sequence (see [`scan`]), and
//! a stack of bidirectional selective-scan layers mixes the sequence with
//! linear cost in its length.

pub mod scan;
mod vim;

pub use scan::{scan_index, scan_unindex};
pub use vim::vim_layer;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{fetch, init_layer_norm, init_linear, trunc_normal, VarMap};
use crate::tensor::{Params, Result, Tape, Tensor, TensorError, Var};

/// Which sequence mixer the encoder uses. Only the state-space path is
/// implemented; the attention variant exists as a configuration point for
/// the complexity comparison and fails fast if selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    Mamba,
    Transformer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of radar views (1 = vertical only, 2 = horizontal + vertical).
    pub views: usize,
    /// Frames per window (T).
    pub frames: usize,
    /// Feature channels after the stem (C_f). Must be even.
    pub c_f: usize,
    /// Heatmap angle bins (H). Must be divisible by 4.
    pub height: usize,
    /// Heatmap range bins (W). Must be divisible by 4.
    pub width: usize,
    /// Heatmap doppler bins (D).
    pub doppler: usize,
    /// Encoder depth (L_e).
    pub layers: usize,
    /// SSM state size per channel (N).
    pub d_state: usize,
    /// Inner width multiplier for the gated block.
    pub expand: usize,
    /// Causal conv width inside each layer.
    pub conv_kernel: usize,
    /// Serpentine flattening (off by default; plain raster otherwise).
    pub serpentine: bool,
    pub kind: EncoderKind,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TensorError::InvalidArgument(format!("encoder config: {msg}")));
        if self.views != 1 && self.views != 2 {
            return bad("views must be 1 or 2");
        }
        if self.frames == 0 || self.layers == 0 || self.d_state == 0 {
            return bad("frames, layers, d_state must be positive");
        }
        if self.c_f == 0 || self.c_f % 2 != 0 {
            return bad("c_f must be positive and even");
        }
        if self.height % 4 != 0 || self.width % 4 != 0 || self.height == 0 || self.width == 0 {
            return bad("height and width must be positive multiples of 4");
        }
        if self.doppler == 0 || self.expand == 0 || self.conv_kernel == 0 {
            return bad("doppler, expand, conv_kernel must be positive");
        }
        Ok(())
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.c_f
    }

    pub fn grid_h(&self) -> usize {
        self.height / 4
    }

    pub fn grid_w(&self) -> usize {
        self.width / 4
    }

    /// Tokens per window: T * views * (H/4) * (W/4).
    pub fn n_tokens(&self) -> usize {
        self.frames * self.views * self.grid_h() * self.grid_w()
    }

    /// Short names for the per-view parameter branches. Single-view setups
    /// use the vertical branch.
    pub fn view_tags(&self) -> &'static [&'static str] {
        if self.views == 2 {
            &["h", "v"]
        } else {
            &["v"]
        }
    }
}

fn softplus_inv(y: f64) -> f64 {
    (y.exp() - 1.0).ln()
}

/// Learned position embeddings start from a 2D sinusoidal pattern (half the
/// channels encode the angle row, half the range column, in sin/cos pairs
/// of geometrically spaced frequencies). A near-zero random start leaves
/// cross-attention keys indistinguishable and stalls early training.
fn sinusoidal_pos(c_f: usize, h4: usize, w4: usize) -> Tensor {
    let mut t = Tensor::zeros(&[c_f, h4, w4]);
    let half = c_f / 2;
    for ch in 0..c_f {
        let (axis_len, k) = if ch < half {
            (h4, ch)
        } else {
            (w4, ch - half)
        };
        // Pair 0 spans the axis once; each later pair halves the frequency.
        let omega = std::f64::consts::TAU / (axis_len as f64 * 2f64.powi((k / 2) as i32));
        for a in 0..h4 {
            for r in 0..w4 {
                let coord = if ch < half { a } else { r } as f64;
                let phase = omega * coord;
                let v = if k % 2 == 0 {
                    phase.sin()
                } else {
                    phase.cos()
                };
                t.data_mut()[(ch * h4 + a) * w4 + r] = v;
            }
        }
    }
    t
}

/// Builds the encoder's named parameters with a seeded initializer.
pub fn encoder_init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Params> {
    cfg.validate()?;
    if cfg.kind == EncoderKind::Transformer {
        return Err(TensorError::InvalidArgument(
            "transformer encoder is a comparison stub and is not implemented".into(),
        ));
    }
    let std = 0.02;
    let c1 = cfg.c_f / 2;
    let mut p = Params::new();
    for tag in cfg.view_tags() {
        let pre = format!("encoder.stem.{tag}");
        p.insert(
            format!("{pre}.merge.w"),
            trunc_normal(&[c1, 2, 1, cfg.doppler, 1], std, rng),
        );
        p.insert(format!("{pre}.merge.b"), Tensor::zeros(&[c1]));
        let blocks = [(1usize, c1, c1), (2, c1, cfg.c_f), (3, cfg.c_f, cfg.c_f)];
        for (i, cin, cout) in blocks {
            p.insert(
                format!("{pre}.block{i}.conv.w"),
                trunc_normal(&[cout, cin, 3, 3, 3], std, rng),
            );
            p.insert(format!("{pre}.block{i}.conv.b"), Tensor::zeros(&[cout]));
            if cin != cout {
                p.insert(
                    format!("{pre}.block{i}.proj.w"),
                    trunc_normal(&[cout, cin, 1, 1, 1], std, rng),
                );
                p.insert(format!("{pre}.block{i}.proj.b"), Tensor::zeros(&[cout]));
            }
        }
        p.insert(
            format!("encoder.pos.{tag}"),
            sinusoidal_pos(cfg.c_f, cfg.grid_h(), cfg.grid_w()),
        );
    }
    let di = cfg.d_inner();
    let n = cfg.d_state;
    for i in 0..cfg.layers {
        let pre = format!("encoder.vim.{i}");
        init_layer_norm(&mut p, &format!("{pre}.norm"), cfg.c_f);
        init_linear(&mut p, &format!("{pre}.in_x"), cfg.c_f, di, std, rng);
        init_linear(&mut p, &format!("{pre}.in_z"), cfg.c_f, di, std, rng);
        p.insert(
            format!("{pre}.conv.w"),
            trunc_normal(&[di, cfg.conv_kernel], std, rng),
        );
        p.insert(format!("{pre}.conv.b"), Tensor::zeros(&[di]));
        init_linear(&mut p, &format!("{pre}.out"), di, cfg.c_f, std, rng);
        for dir in ["fwd", "bwd"] {
            let dp = format!("{pre}.{dir}");
            p.insert(format!("{dp}.dt.w"), trunc_normal(&[di, di], std, rng));
            // Initial step sizes spread log-uniformly over [1e-3, 1e-1].
            let mut dt_b = Tensor::zeros(&[di]);
            for (k, v) in dt_b.data_mut().iter_mut().enumerate() {
                let t = (k as f64 + 0.5) / di as f64;
                let dt = (1e-3f64.ln() + t * (1e-1f64 / 1e-3).ln()).exp();
                *v = softplus_inv(dt);
            }
            p.insert(format!("{dp}.dt.b"), dt_b);
            p.insert(format!("{dp}.b.w"), trunc_normal(&[di, n], std, rng));
            p.insert(format!("{dp}.c.w"), trunc_normal(&[di, n], std, rng));
            // a_log rows ln(1..=N): the state matrix starts at -1..-N.
            let mut a_log = Tensor::zeros(&[di, n]);
            for pi in 0..di {
                for ni in 0..n {
                    a_log.data_mut()[pi * n + ni] = ((ni + 1) as f64).ln();
                }
            }
            p.insert(format!("{dp}.a_log"), a_log);
            p.insert(format!("{dp}.d"), Tensor::full(&[di], 1.0));
        }
    }
    Ok(p)
}

/// Every discretized transition must stay contractive: with delta > 0 from
/// the softplus it suffices that a = -exp(a_log) is finite and negative,
/// i.e. that a_log is finite. Called after each optimizer step.
pub fn stability_check(params: &Params) -> Result<()> {
    for (name, t) in params {
        if name.ends_with(".a_log") && !t.is_finite() {
            return Err(TensorError::NonFinite(format!(
                "{name} left the stable region"
            )));
        }
    }
    Ok(())
}

/// Residual 3D conv block: silu(conv3x3x3(x)) + skip, with a 1x1x1
/// projection on the skip when the channel count changes.
fn res_block(
    tape: &mut Tape,
    vars: &VarMap,
    prefix: &str,
    x: Var,
    channels_change: bool,
) -> Result<Var> {
    let w = fetch(vars, &format!("{prefix}.conv.w"))?;
    let b = fetch(vars, &format!("{prefix}.conv.b"))?;
    let y = tape.conv3d(x, w, b, [1, 1, 1], [1, 1, 1])?;
    let y = tape.silu(y)?;
    let skip = if channels_change {
        let pw = fetch(vars, &format!("{prefix}.proj.w"))?;
        let pb = fetch(vars, &format!("{prefix}.proj.b"))?;
        tape.conv3d(x, pw, pb, [1, 1, 1], [0, 0, 0])?
    } else {
        x
    };
    tape.add(y, skip)
}

/// Per-view stem: `[2][T][H][D][W]` -> `[C_f][T][H/4][W/4]`.
pub fn stem_branch(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &EncoderConfig,
    tag: &str,
    x: Var,
) -> Result<Var> {
    let pre = format!("encoder.stem.{tag}");
    let (t, h, d, w) = (cfg.frames, cfg.height, cfg.doppler, cfg.width);
    let c1 = cfg.c_f / 2;
    let mw = fetch(vars, &format!("{pre}.merge.w"))?;
    let mb = fetch(vars, &format!("{pre}.merge.b"))?;
    // Merge conv per frame: a (1, D, 1) kernel valid over doppler collapses
    // that axis while mixing the real/imag channels.
    let mut frames = Vec::with_capacity(t);
    for f in 0..t {
        let xf = tape.slice(x, 1, f, 1)?;
        let xf = tape.reshape(xf, vec![2, h, d, w])?;
        let m = tape.conv3d(xf, mw, mb, [1, 1, 1], [0, 0, 0])?;
        frames.push(tape.reshape(m, vec![c1, 1, h, w])?);
    }
    let merged = tape.concat(&frames, 1)?;
    let merged = tape.silu(merged)?;

    let b1 = res_block(tape, vars, &format!("{pre}.block1"), merged, false)?;
    let p1 = tape.avg_pool3d(b1, [1, 2, 2])?;
    let b2 = res_block(tape, vars, &format!("{pre}.block2"), p1, true)?;
    let p2 = tape.avg_pool3d(b2, [1, 2, 2])?;
    res_block(tape, vars, &format!("{pre}.block3"), p2, false)
}

/// Adds the per-view position embedding and flattens `[C][T][H4][W4]` to
/// per-frame token blocks `[T][H4*W4][C]`.
fn tokens_for_view(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &EncoderConfig,
    tag: &str,
    feat: Var,
) -> Result<Var> {
    let (c, t, h4, w4) = (cfg.c_f, cfg.frames, cfg.grid_h(), cfg.grid_w());
    let pos = fetch(vars, &format!("encoder.pos.{tag}"))?;
    let pos_flat = tape.reshape(pos, vec![c * h4 * w4])?;
    let ft = tape.permute(feat, &[1, 0, 2, 3])?; // [T][C][H4][W4]
    let rows = tape.reshape(ft, vec![t, c * h4 * w4])?;
    let rows = tape.add_row_bias(rows, pos_flat)?;
    let grid = tape.reshape(rows, vec![t, c, h4, w4])?;
    let grid = tape.permute(grid, &[0, 2, 3, 1])?; // [T][H4][W4][C]
    tape.reshape(grid, vec![t, h4 * w4, c])
}

/// Interleaves per-view token blocks frame by frame and applies the scan
/// ordering. `view_tokens[v]: [T][H4*W4][C]`.
fn assemble_sequence(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    view_tokens: &[Var],
) -> Result<Var> {
    let (t, c) = (cfg.frames, cfg.c_f);
    let hw = cfg.grid_h() * cfg.grid_w();
    let mut blocks = Vec::with_capacity(t * cfg.views);
    for f in 0..t {
        for &vt in view_tokens {
            let b = tape.slice(vt, 0, f, 1)?;
            blocks.push(tape.reshape(b, vec![hw, c])?);
        }
    }
    let raster = tape.concat(&blocks, 0)?;
    if !cfg.serpentine {
        return Ok(raster);
    }
    // Sequence position -> raster position.
    let n = cfg.n_tokens();
    let (h4, w4) = (cfg.grid_h(), cfg.grid_w());
    let mut idx = vec![0usize; n];
    for (seq, slot) in idx.iter_mut().enumerate() {
        let (f, v, a, r) = scan_unindex(cfg, seq);
        *slot = ((f * cfg.views + v) * h4 + a) * w4 + r;
    }
    tape.gather_rows(raster, &idx)
}

/// Full encoder forward pass. `inputs[v]` is the view's heatmap stack
/// `[2][T][H][D][W]` as a plain tensor; the output is the mixed token
/// sequence `[N_tok][C_f]`.
pub fn encode(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &EncoderConfig,
    inputs: &[Tensor],
) -> Result<Var> {
    cfg.validate()?;
    if cfg.kind == EncoderKind::Transformer {
        return Err(TensorError::InvalidArgument(
            "transformer encoder is a comparison stub and is not implemented".into(),
        ));
    }
    if inputs.len() != cfg.views {
        return Err(TensorError::InvalidArgument(format!(
            "encoder: got {} views, config says {}",
            inputs.len(),
            cfg.views
        )));
    }
    let want = [2, cfg.frames, cfg.height, cfg.doppler, cfg.width];
    let mut view_tokens = Vec::with_capacity(cfg.views);
    for (input, tag) in inputs.iter().zip(cfg.view_tags()) {
        if input.shape() != want {
            return Err(TensorError::ShapeMismatch(format!(
                "encoder input {:?}, expected {:?}",
                input.shape(),
                want
            )));
        }
        let x = tape.constant(input.clone());
        let feat = stem_branch(tape, vars, cfg, tag, x)?;
        view_tokens.push(tokens_for_view(tape, vars, cfg, tag, feat)?);
    }
    let mut tokens = assemble_sequence(tape, cfg, &view_tokens)?;
    for i in 0..cfg.layers {
        tokens = vim_layer(tape, vars, &format!("encoder.vim.{i}"), tokens, cfg)?;
    }
    Ok(tokens)
}

/// The position embeddings arranged in the same sequence order as the
/// encoder output, `[N_tok][C_f]`. The decoder adds these to its
/// cross-attention keys.
pub fn token_positions(tape: &mut Tape, vars: &VarMap, cfg: &EncoderConfig) -> Result<Var> {
    let (c, h4, w4) = (cfg.c_f, cfg.grid_h(), cfg.grid_w());
    let mut per_view = Vec::with_capacity(cfg.views);
    for tag in cfg.view_tags() {
        let pos = fetch(vars, &format!("encoder.pos.{tag}"))?;
        let g = tape.permute(pos, &[1, 2, 0])?; // [H4][W4][C]
        per_view.push(tape.reshape(g, vec![h4 * w4, c])?);
    }
    let mut blocks = Vec::with_capacity(cfg.frames * cfg.views);
    for _ in 0..cfg.frames {
        blocks.extend_from_slice(&per_view);
    }
    let raster = tape.concat(&blocks, 0)?;
    if !cfg.serpentine {
        return Ok(raster);
    }
    let n = cfg.n_tokens();
    let mut idx = vec![0usize; n];
    for (seq, slot) in idx.iter_mut().enumerate() {
        let (f, v, a, r) = scan_unindex(cfg, seq);
        *slot = ((f * cfg.views + v) * h4 + a) * w4 + r;
    }
    tape.gather_rows(raster, &idx)
}
