//! Workflow glue: configuration, sliding windows, dataset assembly, and
//! the assembled radar-to-pose model.
//!
//! Configuration is a flat `key = value` text file. Every key is typed and
//! validated; unknown keys are errors so that ablation sweeps cannot
//! silently typo an axis name.

mod train;

pub use train::{evaluate, infer, train, InferredPose, TrainOutcome, TrainRecord};

use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderConfig};
use crate::dsp::{preprocess_frame, DspConfig, WindowKind};
use crate::encoder::{self, EncoderConfig, EncoderKind};
use crate::nn::VarMap;
use crate::objective::{LossWeights, OksParams, ScaleMode};
use crate::pose::PoseWindow;
use crate::radar_sim::{CubeDims, SimWindow, View};
use crate::tensor::{Params, Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Window length T (odd).
    pub frames: usize,
    pub joints: usize,
    /// Radar views: 1 (vertical) or 2 (horizontal + vertical).
    pub views: usize,
    /// Heatmap angle bins (encoder input height).
    pub height: usize,
    /// Heatmap range bins (encoder input width) == ADC samples.
    pub width: usize,
    /// Doppler bins after chirp subsampling.
    pub doppler: usize,
    /// Chirps per simulated cube (before subsampling).
    pub chirps: usize,
    pub antennas: usize,
    pub c_f: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_state: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub expand: usize,
    pub conv_kernel: usize,
    pub serpentine: bool,
    pub encoder_kind: EncoderKind,
    /// Prediction strategy: single center-frame query set when true.
    pub many_to_one: bool,
    pub stride: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_vel: f64,
    pub seed: u64,
    pub steps: usize,
    /// Emit a checkpoint every this many steps (0 = final only).
    pub checkpoint_every: usize,
    pub noise_std: f64,
    pub oks_scale_mode: ScaleMode,
    pub oks_fixed_scale: f64,
    /// Only f64 exists; the field pins the convention in configs.
    pub precision: String,
    pub fft_window: WindowKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 9,
            joints: 14,
            views: 1,
            height: 16,
            width: 32,
            doppler: 8,
            chirps: 32,
            antennas: 12,
            c_f: 8,
            encoder_layers: 1,
            decoder_layers: 1,
            d_state: 4,
            heads: 2,
            mlp_ratio: 2,
            expand: 2,
            conv_kernel: 4,
            serpentine: false,
            encoder_kind: EncoderKind::Mamba,
            many_to_one: false,
            stride: 1,
            batch_size: 8,
            lr: 5e-5,
            weight_decay: 1e-4,
            lambda_vel: 0.05,
            seed: 0,
            steps: 2000,
            checkpoint_every: 0,
            noise_std: 0.0,
            oks_scale_mode: ScaleMode::Fixed,
            oks_fixed_scale: 1.0,
            precision: "f64".to_string(),
            fft_window: WindowKind::Rect,
        }
    }
}

fn cfg_err(msg: String) -> TensorError {
    TensorError::InvalidArgument(format!("config: {msg}"))
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames % 2 == 0 || self.frames == 0 {
            return Err(cfg_err(format!("frames must be odd, got {}", self.frames)));
        }
        if self.joints == 0 {
            return Err(cfg_err("joints must be positive".into()));
        }
        if self.batch_size == 0 || self.stride == 0 {
            return Err(cfg_err("batch_size and stride must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(self.lambda_vel >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(cfg_err("lr > 0, lambda_vel >= 0, weight_decay >= 0".into()));
        }
        if !(self.oks_fixed_scale > 0.0) {
            return Err(cfg_err("oks_fixed_scale must be > 0".into()));
        }
        if self.precision != "f64" {
            return Err(cfg_err(format!(
                "precision mode {:?} is not available (only f64)",
                self.precision
            )));
        }
        if self.chirps % self.doppler != 0 {
            return Err(cfg_err(format!(
                "chirps ({}) must be a multiple of doppler bins ({})",
                self.chirps, self.doppler
            )));
        }
        self.encoder_config().validate()?;
        self.decoder_config().validate()?;
        self.oks_params().validate()
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            views: self.views,
            frames: self.frames,
            c_f: self.c_f,
            height: self.height,
            width: self.width,
            doppler: self.doppler,
            layers: self.encoder_layers,
            d_state: self.d_state,
            expand: self.expand,
            conv_kernel: self.conv_kernel,
            serpentine: self.serpentine,
            kind: self.encoder_kind,
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            frames: self.frames,
            joints: self.joints,
            d_model: self.c_f,
            layers: self.decoder_layers,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            many_to_one: self.many_to_one,
        }
    }

    pub fn dsp_config(&self) -> DspConfig {
        DspConfig {
            chirp_target: self.doppler,
            angle_pad: self.height,
            window: self.fft_window,
        }
    }

    pub fn cube_dims(&self) -> CubeDims {
        CubeDims {
            antennas: self.antennas,
            chirps: self.chirps,
            adc: self.width,
        }
    }

    pub fn oks_params(&self) -> OksParams {
        let mut p = if self.joints == 14 {
            OksParams::coco14()
        } else {
            OksParams::uniform(self.joints, 0.079, 1.0)
        };
        p.scale_mode = self.oks_scale_mode;
        p.fixed_scale = self.oks_fixed_scale;
        p
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_vel: self.lambda_vel,
        }
    }

    pub fn view_list(&self) -> Vec<View> {
        if self.views == 2 {
            vec![View::Horizontal, View::Vertical]
        } else {
            vec![View::Vertical]
        }
    }

    /// Center offset within a window.
    pub fn center_offset(&self) -> usize {
        (self.frames - 1) / 2
    }

    /// Brings single-scatterer heatmap peaks to O(1) model inputs: the
    /// three FFT stages contribute factors of range bins, doppler bins and
    /// antenna count.
    pub fn input_scale(&self) -> f64 {
        1.0 / (self.width * self.doppler * self.antennas) as f64
    }

    // --- flat key=value text form ------------------------------------

    pub fn to_text(&self) -> String {
        let kind = match self.encoder_kind {
            EncoderKind::Mamba => "mamba",
            EncoderKind::Transformer => "transformer",
        };
        let scale_mode = match self.oks_scale_mode {
            ScaleMode::Bbox => "bbox",
            ScaleMode::Fixed => "fixed",
        };
        let window = match self.fft_window {
            WindowKind::Rect => "rect",
            WindowKind::Hann => "hann",
        };
        format!(
            "frames = {}\njoints = {}\nviews = {}\nheight = {}\nwidth = {}\n\
             doppler = {}\nchirps = {}\nantennas = {}\nc_f = {}\n\
             encoder_layers = {}\ndecoder_layers = {}\nd_state = {}\n\
             heads = {}\nmlp_ratio = {}\nexpand = {}\nconv_kernel = {}\n\
             serpentine = {}\nencoder_kind = {}\nmany_to_one = {}\n\
             stride = {}\nbatch_size = {}\nlr = {}\nweight_decay = {}\n\
             lambda_vel = {}\nseed = {}\nsteps = {}\ncheckpoint_every = {}\n\
             noise_std = {}\noks_scale_mode = {}\noks_fixed_scale = {}\n\
             precision = {}\nfft_window = {}\n",
            self.frames,
            self.joints,
            self.views,
            self.height,
            self.width,
            self.doppler,
            self.chirps,
            self.antennas,
            self.c_f,
            self.encoder_layers,
            self.decoder_layers,
            self.d_state,
            self.heads,
            self.mlp_ratio,
            self.expand,
            self.conv_kernel,
            self.serpentine,
            kind,
            self.many_to_one,
            self.stride,
            self.batch_size,
            self.lr,
            self.weight_decay,
            self.lambda_vel,
            self.seed,
            self.steps,
            self.checkpoint_every,
            self.noise_std,
            scale_mode,
            self.oks_fixed_scale,
            self.precision,
            window,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .map_err(|e| cfg_err(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its text form; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| cfg_err(format!("bad value {value:?} for {key}")))
        }
        match key {
            "frames" => self.frames = p(key, value)?,
            "joints" => self.joints = p(key, value)?,
            "views" => self.views = p(key, value)?,
            "height" => self.height = p(key, value)?,
            "width" => self.width = p(key, value)?,
            "doppler" => self.doppler = p(key, value)?,
            "chirps" => self.chirps = p(key, value)?,
            "antennas" => self.antennas = p(key, value)?,
            "c_f" => self.c_f = p(key, value)?,
            "encoder_layers" => self.encoder_layers = p(key, value)?,
            "decoder_layers" => self.decoder_layers = p(key, value)?,
            "d_state" => self.d_state = p(key, value)?,
            "heads" => self.heads = p(key, value)?,
            "mlp_ratio" => self.mlp_ratio = p(key, value)?,
            "expand" => self.expand = p(key, value)?,
            "conv_kernel" => self.conv_kernel = p(key, value)?,
            "serpentine" => self.serpentine = p(key, value)?,
            "encoder_kind" => {
                self.encoder_kind = match value {
                    "mamba" => EncoderKind::Mamba,
                    "transformer" => EncoderKind::Transformer,
                    _ => return Err(cfg_err(format!("bad encoder_kind {value:?}"))),
                }
            }
            "many_to_one" => self.many_to_one = p(key, value)?,
            "stride" => self.stride = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "weight_decay" => self.weight_decay = p(key, value)?,
            "lambda_vel" => self.lambda_vel = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "steps" => self.steps = p(key, value)?,
            "checkpoint_every" => self.checkpoint_every = p(key, value)?,
            "noise_std" => self.noise_std = p(key, value)?,
            "oks_scale_mode" => {
                self.oks_scale_mode = match value {
                    "bbox" => ScaleMode::Bbox,
                    "fixed" => ScaleMode::Fixed,
                    _ => return Err(cfg_err(format!("bad oks_scale_mode {value:?}"))),
                }
            }
            "oks_fixed_scale" => self.oks_fixed_scale = p(key, value)?,
            "precision" => self.precision = value.to_string(),
            "fft_window" => {
                self.fft_window = match value {
                    "rect" => WindowKind::Rect,
                    "hann" => WindowKind::Hann,
                    _ => return Err(cfg_err(format!("bad fft_window {value:?}"))),
                }
            }
            _ => return Err(cfg_err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

/// One sliding window: frame span and center index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub center: usize,
}

/// Sliding windows of length `t` over `frames` frames.
pub fn make_windows(frames: usize, t: usize, stride: usize) -> Result<Vec<Window>> {
    if t == 0 || t % 2 == 0 {
        return Err(cfg_err(format!("window length must be odd, got {t}")));
    }
    if stride == 0 {
        return Err(cfg_err("stride must be >= 1".into()));
    }
    if frames < t {
        return Err(cfg_err(format!("{frames} frames < window length {t}")));
    }
    Ok((0..=frames - t)
        .step_by(stride)
        .map(|start| Window {
            start,
            center: start + (t - 1) / 2,
        })
        .collect())
}

/// One model-ready sample: per-view input stacks and the ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub start: usize,
    pub center: usize,
    /// Per view: `[2][T][H][D][W]` real/imag heatmap stack.
    pub inputs: Vec<Tensor>,
    pub gt: PoseWindow,
}

/// Preprocesses simulator windows into model samples.
pub fn windows_to_samples(cfg: &ModelConfig, windows: &[SimWindow]) -> Result<Vec<Sample>> {
    let dsp = cfg.dsp_config();
    let (t, h, d, w) = (cfg.frames, cfg.height, cfg.doppler, cfg.width);
    let views = cfg.views;
    let scale = cfg.input_scale();
    let mut out = Vec::with_capacity(windows.len());
    for win in windows {
        if win.cubes.len() != t * views {
            return Err(cfg_err(format!(
                "window has {} cubes, expected {} frames x {} views",
                win.cubes.len(),
                t,
                views
            )));
        }
        let mut inputs = Vec::with_capacity(views);
        for v in 0..views {
            let mut data = vec![0.0; 2 * t * h * d * w];
            for f in 0..t {
                let cube = &win.cubes[f * views + v];
                let hm = preprocess_frame(cube, &dsp)
                    .map_err(|e| cfg_err(format!("preprocess: {e}")))?;
                if (hm.h, hm.d, hm.w) != (h, d, w) {
                    return Err(cfg_err(format!(
                        "heatmap {}x{}x{}, config {h}x{d}x{w}",
                        hm.h, hm.d, hm.w
                    )));
                }
                for (i, c) in hm.values.iter().enumerate() {
                    data[f * (h * d * w) + i] = c.re * scale;
                    data[(t + f) * (h * d * w) + i] = c.im * scale;
                }
            }
            inputs.push(Tensor::new(vec![2, t, h, d, w], data)?);
        }
        out.push(Sample {
            start: win.start,
            center: win.start + cfg.center_offset(),
            inputs,
            gt: win.pose.clone(),
        });
    }
    Ok(out)
}

/// The assembled encoder + decoder.
pub struct Model {
    pub enc: EncoderConfig,
    pub dec: DecoderConfig,
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Model {
            enc: cfg.encoder_config(),
            dec: cfg.decoder_config(),
        })
    }

    /// Seeded truncated-normal initialization of all named parameters.
    pub fn init_params(&self, seed: u64) -> Result<Params> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = encoder::encoder_init(&self.enc, &mut rng)?;
        params.extend(decoder::decoder_init(&self.dec, &mut rng)?);
        Ok(params)
    }

    /// Radar stacks in, normalized keypoints `[frames_out][J][2]` out.
    pub fn forward(&self, tape: &mut Tape, vars: &VarMap, inputs: &[Tensor]) -> Result<Var> {
        let tokens = encoder::encode(tape, vars, &self.enc, inputs)?;
        let pos = encoder::token_positions(tape, vars, &self.enc)?;
        decoder::decode(tape, vars, &self.dec, tokens, pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar_sim::{generate_dataset, RadarMapping, ScriptSpec};
    use crate::tensor::{read_checkpoint, write_checkpoint};

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            frames: 3,
            joints: 4,
            ..ModelConfig::default()
        }
    }

    pub(crate) fn tiny_samples(cfg: &ModelConfig, frame_count: usize, seed: u64) -> Vec<Sample> {
        let spec = ScriptSpec {
            joint_count: cfg.joints,
            frame_count,
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
        .unwrap();
        windows_to_samples(cfg, &windows).unwrap()
    }

    #[test]
    fn window_arithmetic() {
        let ws = make_windows(12, 9, 1).unwrap();
        assert_eq!(ws.len(), 4);
        let centers: Vec<usize> = ws.iter().map(|w| w.center).collect();
        assert_eq!(centers, [4, 5, 6, 7]);
        assert_eq!(make_windows(9, 9, 1).unwrap().len(), 1);
        assert!(make_windows(8, 9, 1).is_err());
        assert!(make_windows(12, 4, 1).is_err());
    }

    #[test]
    fn config_round_trip_is_identity() {
        let mut cfg = tiny_config();
        cfg.serpentine = true;
        cfg.lambda_vel = 0.125;
        cfg.oks_scale_mode = ScaleMode::Bbox;
        let text = cfg.to_text();
        let back = ModelConfig::from_text(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(ModelConfig::from_text("framez = 9\n").is_err());
        assert!(ModelConfig::from_text("frames = eight\n").is_err());
        assert!(ModelConfig::from_text("frames = 8\n").is_err()); // even T
        assert!(ModelConfig::from_text("precision = f32\n").is_err());
        // Comments and blank lines are fine.
        let cfg = ModelConfig::from_text("# comment\n\nframes = 5 # inline\n").unwrap();
        assert_eq!(cfg.frames, 5);
    }

    #[test]
    fn samples_have_model_shapes_and_centers() {
        let cfg = tiny_config();
        let samples = tiny_samples(&cfg, 6, 0);
        assert_eq!(samples.len(), 4); // 6 - 3 + 1
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.start, i);
            assert_eq!(s.center, i + 1);
            assert_eq!(s.inputs.len(), 1);
            assert_eq!(
                s.inputs[0].shape(),
                [2, cfg.frames, cfg.height, cfg.doppler, cfg.width]
            );
            assert_eq!(s.gt.frames, cfg.frames);
            assert_eq!(s.gt.joints, cfg.joints);
        }
        // Scaled inputs stay O(1).
        let peak = samples[0].inputs[0]
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak > 0.05 && peak < 50.0, "peak {peak}");
    }

    #[test]
    fn model_forward_emits_pose_shapes() {
        for m2o in [false, true] {
            let cfg = ModelConfig {
                many_to_one: m2o,
                ..tiny_config()
            };
            let model = Model::new(&cfg).unwrap();
            let params = model.init_params(1).unwrap();
            let samples = tiny_samples(&cfg, 3, 0);
            let mut tape = Tape::new();
            let vars = crate::nn::load_params(&mut tape, &params);
            let y = model.forward(&mut tape, &vars, &samples[0].inputs).unwrap();
            let want_frames = if m2o { 1 } else { cfg.frames };
            assert_eq!(tape.shape(y), [want_frames, cfg.joints, 2]);
        }
    }

    #[test]
    fn params_survive_checkpoint_round_trip() {
        let cfg = tiny_config();
        let model = Model::new(&cfg).unwrap();
        let params = model.init_params(7).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(params, back);
    }
}
