//! Synthetic FMCW radar generation.
//!
//! Scatterers are parameterized directly in bin / normalized-frequency
//! units, which makes the 3D-FFT chain exactly invertible for integer bins
//! and keeps calibration constants out of the correctness tests. A thin
//! physical wrapper (meters, m/s) sits on top for convenience; its constants
//! are placeholders, not calibrated values.

use std::f64::consts::TAU;
use std::io::{self, Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::PoseWindow;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scatterer: {0}")]
    InvalidScatterer(String),
    #[error("invalid dims: {0}")]
    InvalidDims(String),
    #[error("frame {frame} out of range (frame_count {count})")]
    FrameOutOfRange { frame: usize, count: usize },
    #[error("window length must be odd and >= 1, got {0}")]
    EvenWindow(usize),
    #[error("script has {frames} frames, need at least {needed}")]
    TooFewFrames { frames: usize, needed: usize },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    Horizontal,
    Vertical,
}

impl View {
    pub fn tag(self) -> u32 {
        match self {
            View::Horizontal => 0,
            View::Vertical => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(View::Horizontal),
            1 => Some(View::Vertical),
            _ => None,
        }
    }
}

/// Cube dimensions: (virtual antennas, chirps, ADC samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeDims {
    pub antennas: usize,
    pub chirps: usize,
    pub adc: usize,
}

impl Default for CubeDims {
    fn default() -> Self {
        Self {
            antennas: 12,
            chirps: 128,
            adc: 256,
        }
    }
}

impl CubeDims {
    pub fn numel(&self) -> usize {
        self.antennas * self.chirps * self.adc
    }
}

/// Point reflector in bin units.
///
/// `range_bin` in [0, adc), `doppler_bin` in [0, chirps) (pre-subsampling),
/// `angle_freq` in [-0.5, 0.5) cycles per antenna.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub range_bin: f64,
    pub doppler_bin: f64,
    pub angle_freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Scatterer {
    fn validate(&self, dims: CubeDims) -> Result<(), SimError> {
        let finite = [
            self.range_bin,
            self.doppler_bin,
            self.angle_freq,
            self.amplitude,
            self.phase,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::InvalidScatterer("non-finite parameter".into()));
        }
        if self.amplitude <= 0.0 {
            return Err(SimError::InvalidScatterer(format!(
                "amplitude must be > 0, got {}",
                self.amplitude
            )));
        }
        if self.range_bin < 0.0 || self.range_bin >= dims.adc as f64 {
            return Err(SimError::InvalidScatterer(format!(
                "range_bin {} outside [0, {})",
                self.range_bin, dims.adc
            )));
        }
        if self.doppler_bin < 0.0 || self.doppler_bin >= dims.chirps as f64 {
            return Err(SimError::InvalidScatterer(format!(
                "doppler_bin {} outside [0, {})",
                self.doppler_bin, dims.chirps
            )));
        }
        if self.angle_freq < -0.5 || self.angle_freq >= 0.5 {
            return Err(SimError::InvalidScatterer(format!(
                "angle_freq {} outside [-0.5, 0.5)",
                self.angle_freq
            )));
        }
        Ok(())
    }
}

/// Complex-valued raw FMCW frame, C-order [antenna][chirp][sample].
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub dims: CubeDims,
    pub samples: Vec<Complex64>,
    pub frame_index: u64,
    pub view: View,
}

impl RadarCube {
    pub fn zeros(dims: CubeDims, frame_index: u64, view: View) -> Self {
        Self {
            dims,
            samples: vec![Complex64::new(0.0, 0.0); dims.numel()],
            frame_index,
            view,
        }
    }

    #[inline]
    pub fn at(&self, a: usize, c: usize, n: usize) -> Complex64 {
        self.samples[(a * self.dims.chirps + c) * self.dims.adc + n]
    }
}

/// samples[a][c][n] = sum_k amp_k * exp(j*(phase_k + 2*pi*(range*n/N + doppler*c/C + angle*a))).
pub fn synthesize_cube(scatterers: &[Scatterer], dims: CubeDims) -> Result<RadarCube, SimError> {
    if dims.antennas == 0 || dims.chirps == 0 || dims.adc == 0 {
        return Err(SimError::InvalidDims(format!("{dims:?}")));
    }
    for s in scatterers {
        s.validate(dims)?;
    }
    let mut cube = RadarCube::zeros(dims, 0, View::Horizontal);
    for s in scatterers {
        // Per-axis phase increments; the per-sample phase is a sum of three
        // independent progressions, so precompute each axis.
        let range_step: Vec<Complex64> = (0..dims.adc)
            .map(|n| Complex64::from_polar(1.0, TAU * s.range_bin * n as f64 / dims.adc as f64))
            .collect();
        let doppler_step: Vec<Complex64> = (0..dims.chirps)
            .map(|c| Complex64::from_polar(1.0, TAU * s.doppler_bin * c as f64 / dims.chirps as f64))
            .collect();
        let angle_step: Vec<Complex64> = (0..dims.antennas)
            .map(|a| Complex64::from_polar(s.amplitude, s.phase + TAU * s.angle_freq * a as f64))
            .collect();
        let mut idx = 0;
        for aa in &angle_step {
            for dd in &doppler_step {
                let ad = aa * dd;
                for rr in &range_step {
                    cube.samples[idx] += ad * rr;
                    idx += 1;
                }
            }
        }
    }
    Ok(cube)
}

/// Adds complex white Gaussian noise; deterministic given the rng.
pub fn add_noise(cube: &mut RadarCube, std: f64, rng: &mut ChaCha8Rng) {
    if std <= 0.0 {
        return;
    }
    for s in cube.samples.iter_mut() {
        // Box-Muller.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt() * std;
        *s += Complex64::new(r * (TAU * u2).cos(), r * (TAU * u2).sin());
    }
}

/// One joint's state at one frame: image position (pixels), depth (meters)
/// and radial velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub image_x: f64,
    pub image_y: f64,
    pub depth: f64,
    pub radial_velocity: f64,
}

/// Scripted scene: per-joint trajectories sampled at every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub frame_count: usize,
    pub joint_count: usize,
    pub image_width: f64,
    pub image_height: f64,
    /// [joint][frame].
    pub joints: Vec<Vec<JointState>>,
}

impl SceneScript {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frame_count == 0 || self.joints.len() != self.joint_count {
            return Err(SimError::InvalidDims("scene script joint count".into()));
        }
        for track in &self.joints {
            if track.len() != self.frame_count {
                return Err(SimError::InvalidDims(
                    "trajectory not defined for all frames".into(),
                ));
            }
            for st in track {
                if st.image_x < 0.0
                    || st.image_x > self.image_width
                    || st.image_y < 0.0
                    || st.image_y > self.image_height
                {
                    return Err(SimError::InvalidDims("image coords out of bounds".into()));
                }
            }
        }
        Ok(())
    }

    /// Ground-truth pose (normalized coordinates) for frames [start, start+len).
    pub fn pose_window(&self, start: usize, len: usize) -> PoseWindow {
        let mut pw = PoseWindow::new(len, self.joint_count);
        for f in 0..len {
            for j in 0..self.joint_count {
                let st = self.joints[j][start + f];
                pw.set_coord(
                    f,
                    j,
                    [st.image_x / self.image_width, st.image_y / self.image_height],
                );
            }
        }
        pw
    }
}

/// Affine maps from scene quantities to bin units. All anchors documented:
/// a joint at the image center maps to angle_freq 0, the reference depth
/// maps to `range_ref_bin`, zero radial velocity maps to doppler bin 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarMapping {
    pub max_angle_freq: f64,
    pub range_ref_bin: f64,
    pub depth_ref: f64,
    pub bins_per_meter: f64,
    pub bins_per_mps: f64,
}

impl Default for RadarMapping {
    fn default() -> Self {
        Self {
            max_angle_freq: 0.4,
            range_ref_bin: 12.0,
            depth_ref: 3.0,
            bins_per_meter: 6.0,
            bins_per_mps: 4.0,
        }
    }
}

/// Maps every joint of `frame` to one scatterer for the given view.
///
/// Horizontal view: image_x -> angle_freq, depth -> range_bin.
/// Vertical view: image_y -> angle_freq, depth -> range_bin.
/// Both: radial velocity -> doppler bin (wrapped into [0, chirps)).
pub fn pose_to_scatterers(
    script: &SceneScript,
    frame: usize,
    view: View,
    mapping: &RadarMapping,
    dims: CubeDims,
) -> Result<Vec<Scatterer>, SimError> {
    if frame >= script.frame_count {
        return Err(SimError::FrameOutOfRange {
            frame,
            count: script.frame_count,
        });
    }
    let mut out = Vec::with_capacity(script.joint_count);
    for (j, track) in script.joints.iter().enumerate() {
        let st = track[frame];
        let along = match view {
            View::Horizontal => 2.0 * st.image_x / script.image_width - 1.0,
            View::Vertical => 2.0 * st.image_y / script.image_height - 1.0,
        };
        let angle_freq = (mapping.max_angle_freq * along).clamp(-0.5, 0.4999);
        let range_bin = (mapping.range_ref_bin + (st.depth - mapping.depth_ref) * mapping.bins_per_meter)
            .clamp(0.0, dims.adc as f64 - 1e-9);
        let c = dims.chirps as f64;
        let doppler_bin = (st.radial_velocity * mapping.bins_per_mps).rem_euclid(c);
        out.push(Scatterer {
            range_bin,
            doppler_bin,
            angle_freq,
            // Distinct per-joint amplitude keeps joints separable in the
            // heatmap; phase varies per joint so nothing cancels exactly.
            amplitude: 1.0 + 0.05 * j as f64,
            phase: 0.37 * j as f64,
        });
    }
    Ok(out)
}

/// Parameters for the sinusoidal toy scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSpec {
    pub joint_count: usize,
    pub frame_count: usize,
    pub image_width: f64,
    pub image_height: f64,
    /// Peak-to-center motion amplitude in pixels.
    pub motion_amplitude: f64,
    /// Motion period in frames.
    pub motion_period: f64,
    /// Body depth at the reference point, meters.
    pub body_depth: f64,
    /// Depth spread across joints, meters.
    pub joint_depth_spread: f64,
    /// Depth change per normalized image-x unit; couples x to range so a
    /// single vertical radar still observes both coordinates.
    pub depth_per_x: f64,
    /// Frames per second, used to turn depth differences into velocities.
    pub frame_rate: f64,
}

impl Default for ScriptSpec {
    fn default() -> Self {
        Self {
            joint_count: 14,
            frame_count: 64,
            image_width: 256.0,
            image_height: 256.0,
            motion_amplitude: 18.0,
            motion_period: 20.0,
            body_depth: 3.0,
            joint_depth_spread: 0.8,
            depth_per_x: 1.5,
            frame_rate: 10.0,
        }
    }
}

/// Builds a deterministic sinusoidal scene: joints sit on a rough skeleton
/// grid and oscillate with per-joint amplitude/phase drawn from the seed.
pub fn make_script(spec: &ScriptSpec, seed: u64) -> SceneScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = spec.joint_count;
    // Base layout: joints spread over the middle of the image, two columns.
    let mut joints = Vec::with_capacity(j);
    let mut params = Vec::with_capacity(j);
    for ji in 0..j {
        let col = (ji % 2) as f64;
        let row = (ji / 2) as f64;
        let rows = ((j + 1) / 2) as f64;
        let x0 = spec.image_width * (0.38 + 0.24 * col);
        let y0 = spec.image_height * (0.15 + 0.7 * row / rows.max(1.0));
        let ax = spec.motion_amplitude * (0.5 + rng.gen::<f64>());
        let ay = spec.motion_amplitude * (0.5 + rng.gen::<f64>());
        let phx = rng.gen::<f64>() * TAU;
        let phy = rng.gen::<f64>() * TAU;
        params.push((x0, y0, ax, ay, phx, phy));
    }
    for &(x0, y0, ax, ay, phx, phy) in &params {
        let mut track = Vec::with_capacity(spec.frame_count);
        let ji = joints.len() as f64;
        let depth_off = spec.joint_depth_spread * (ji / j.max(1) as f64 - 0.5);
        let depth_at = |f: f64| -> f64 {
            let x = x0 + ax * (TAU * f / spec.motion_period + phx).sin();
            spec.body_depth + depth_off + spec.depth_per_x * (x / spec.image_width - 0.5)
        };
        for f in 0..spec.frame_count {
            let ff = f as f64;
            let x = (x0 + ax * (TAU * ff / spec.motion_period + phx).sin())
                .clamp(0.0, spec.image_width);
            let y = (y0 + ay * (TAU * ff / spec.motion_period + phy).sin())
                .clamp(0.0, spec.image_height);
            // Central-difference depth rate, one-sided at the ends.
            let (d0, d1, dt) = if f == 0 {
                (depth_at(0.0), depth_at(1.0), 1.0)
            } else if f + 1 == spec.frame_count {
                (depth_at(ff - 1.0), depth_at(ff), 1.0)
            } else {
                (depth_at(ff - 1.0), depth_at(ff + 1.0), 2.0)
            };
            track.push(JointState {
                image_x: x,
                image_y: y,
                depth: depth_at(ff),
                radial_velocity: (d1 - d0) / dt * spec.frame_rate,
            });
        }
        joints.push(track);
    }
    SceneScript {
        frame_count: spec.frame_count,
        joint_count: j,
        image_width: spec.image_width,
        image_height: spec.image_height,
        joints,
    }
}

/// One generated frame: cubes for the requested views plus the script frame
/// it came from.
#[derive(Debug, Clone)]
pub struct SimFrame {
    pub frame_index: usize,
    pub cubes: Vec<RadarCube>,
}

/// Sliding-window sample: 2 x T cubes (or 1 x T for single-view) and the
/// aligned ground-truth pose window.
#[derive(Debug, Clone)]
pub struct SimWindow {
    pub start: usize,
    pub cubes: Vec<RadarCube>,
    pub pose: PoseWindow,
}

/// Generates per-frame cubes for `views` and assembles sliding windows of
/// length `window_t` (stride 1). Deterministic given `seed`.
pub fn generate_dataset(
    spec: &ScriptSpec,
    dims: CubeDims,
    mapping: &RadarMapping,
    views: &[View],
    window_t: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<SimWindow>, SimError> {
    if window_t % 2 == 0 || window_t == 0 {
        return Err(SimError::EvenWindow(window_t));
    }
    let script = make_script(spec, seed);
    script.validate()?;
    if script.frame_count < window_t {
        return Err(SimError::TooFewFrames {
            frames: script.frame_count,
            needed: window_t,
        });
    }
    let frames = simulate_frames(&script, dims, mapping, views, noise_std, seed)?;
    let mut windows = Vec::new();
    for start in 0..=(script.frame_count - window_t) {
        let mut cubes = Vec::with_capacity(window_t * views.len());
        for f in start..start + window_t {
            cubes.extend(frames[f].cubes.iter().cloned());
        }
        windows.push(SimWindow {
            start,
            cubes,
            pose: script.pose_window(start, window_t),
        });
    }
    Ok(windows)
}

/// Per-frame cube synthesis for every requested view.
pub fn simulate_frames(
    script: &SceneScript,
    dims: CubeDims,
    mapping: &RadarMapping,
    views: &[View],
    noise_std: f64,
    seed: u64,
) -> Result<Vec<SimFrame>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut out = Vec::with_capacity(script.frame_count);
    for f in 0..script.frame_count {
        let mut cubes = Vec::with_capacity(views.len());
        for &view in views {
            let scatterers = pose_to_scatterers(script, f, view, mapping, dims)?;
            let mut cube = synthesize_cube(&scatterers, dims)?;
            cube.frame_index = f as u64;
            cube.view = view;
            add_noise(&mut cube, noise_std, &mut rng);
            cubes.push(cube);
        }
        out.push(SimFrame {
            frame_index: f,
            cubes,
        });
    }
    Ok(out)
}

// --- MMRC binary format ---------------------------------------------------
//
// magic "MMRC" | u32 version=1 | u32 A | u32 C | u32 N | u32 view tag
// | u64 frame_index | A*C*N interleaved (re, im) f32 pairs, C-order.

const MAGIC: &[u8; 4] = b"MMRC";
const VERSION: u32 = 1;

pub fn write_cube<W: Write>(w: &mut W, cube: &RadarCube) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [cube.dims.antennas, cube.dims.chirps, cube.dims.adc] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&cube.view.tag().to_le_bytes())?;
    w.write_all(&cube.frame_index.to_le_bytes())?;
    let mut buf = Vec::with_capacity(cube.samples.len() * 8);
    for s in &cube.samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_cube<R: Read>(r: &mut R) -> io::Result<RadarCube> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not an MMRC cube"));
    }
    if read_u32(r)? != VERSION {
        return Err(bad("unsupported MMRC version"));
    }
    let dims = CubeDims {
        antennas: read_u32(r)? as usize,
        chirps: read_u32(r)? as usize,
        adc: read_u32(r)? as usize,
    };
    let view = View::from_tag(read_u32(r)?).ok_or_else(|| bad("bad view tag"))?;
    let mut fb = [0u8; 8];
    r.read_exact(&mut fb)?;
    let frame_index = u64::from_le_bytes(fb);
    let numel = dims.numel();
    let mut raw = vec![0u8; numel * 8];
    r.read_exact(&mut raw)?;
    let mut samples = Vec::with_capacity(numel);
    for ch in raw.chunks_exact(8) {
        let re = f32::from_le_bytes(ch[0..4].try_into().unwrap()) as f64;
        let im = f32::from_le_bytes(ch[4..8].try_into().unwrap()) as f64;
        if !re.is_finite() || !im.is_finite() {
            return Err(bad("non-finite sample"));
        }
        samples.push(Complex64::new(re, im));
    }
    Ok(RadarCube {
        dims,
        samples,
        frame_index,
        view,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> CubeDims {
        CubeDims {
            antennas: 4,
            chirps: 8,
            adc: 16,
        }
    }

    #[test]
    fn empty_scatterer_list_gives_zero_cube() {
        let cube = synthesize_cube(&[], small_dims()).unwrap();
        assert!(cube.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn opposite_phase_scatterers_cancel() {
        let s1 = Scatterer {
            range_bin: 3.0,
            doppler_bin: 2.0,
            angle_freq: 0.25,
            amplitude: 1.0,
            phase: 0.0,
        };
        let s2 = Scatterer {
            phase: std::f64::consts::PI,
            ..s1
        };
        let cube = synthesize_cube(&[s1, s2], small_dims()).unwrap();
        let max = cube.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
        assert!(max < 1e-12, "max residual {max}");
    }

    #[test]
    fn linearity_of_superposition() {
        let s1 = Scatterer {
            range_bin: 3.3,
            doppler_bin: 1.7,
            angle_freq: 0.1,
            amplitude: 2.0,
            phase: 0.5,
        };
        let s2 = Scatterer {
            range_bin: 7.9,
            doppler_bin: 5.2,
            angle_freq: -0.3,
            amplitude: 0.7,
            phase: 1.1,
        };
        let both = synthesize_cube(&[s1, s2], small_dims()).unwrap();
        let a = synthesize_cube(&[s1], small_dims()).unwrap();
        let b = synthesize_cube(&[s2], small_dims()).unwrap();
        let scale: f64 = both.samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
        for i in 0..both.samples.len() {
            let diff = (both.samples[i] - a.samples[i] - b.samples[i]).norm();
            assert!(diff <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn rejects_bad_scatterers() {
        let bad = Scatterer {
            range_bin: -1.0,
            doppler_bin: 0.0,
            angle_freq: 0.0,
            amplitude: 1.0,
            phase: 0.0,
        };
        assert!(synthesize_cube(&[bad], small_dims()).is_err());
        let nan = Scatterer {
            range_bin: 1.0,
            doppler_bin: 0.0,
            angle_freq: 0.0,
            amplitude: f64::NAN,
            phase: 0.0,
        };
        assert!(synthesize_cube(&[nan], small_dims()).is_err());
        assert!(synthesize_cube(
            &[],
            CubeDims {
                antennas: 0,
                chirps: 8,
                adc: 16
            }
        )
        .is_err());
    }

    #[test]
    fn mapping_anchor_points() {
        let spec = ScriptSpec::default();
        let mut script = make_script(&spec, 0);
        // Pin joint 0, frame 0 to the image center at reference depth with
        // zero radial velocity.
        let mapping = RadarMapping::default();
        script.joints[0][0] = JointState {
            image_x: spec.image_width / 2.0,
            image_y: spec.image_height / 2.0,
            depth: mapping.depth_ref,
            radial_velocity: 0.0,
        };
        let sc = pose_to_scatterers(&script, 0, View::Horizontal, &mapping, CubeDims::default())
            .unwrap();
        assert_eq!(sc[0].angle_freq, 0.0);
        assert_eq!(sc[0].range_bin, mapping.range_ref_bin);
        assert_eq!(sc[0].doppler_bin, 0.0);

        // Right edge maps to the configured max angle frequency.
        script.joints[0][0].image_x = spec.image_width;
        let sc = pose_to_scatterers(&script, 0, View::Horizontal, &mapping, CubeDims::default())
            .unwrap();
        assert!((sc[0].angle_freq - mapping.max_angle_freq).abs() < 1e-12);

        // Vertical view keys off image_y instead.
        script.joints[0][0].image_y = 0.0;
        let sc = pose_to_scatterers(&script, 0, View::Vertical, &mapping, CubeDims::default())
            .unwrap();
        assert!((sc[0].angle_freq + mapping.max_angle_freq).abs() < 1e-12);
    }

    #[test]
    fn frame_out_of_range_rejected() {
        let script = make_script(&ScriptSpec::default(), 1);
        let r = pose_to_scatterers(
            &script,
            script.frame_count,
            View::Horizontal,
            &RadarMapping::default(),
            CubeDims::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn dataset_window_count_and_determinism() {
        let spec = ScriptSpec {
            frame_count: 12,
            joint_count: 3,
            ..ScriptSpec::default()
        };
        let dims = small_dims();
        let mapping = RadarMapping::default();
        let views = [View::Vertical];
        let w1 = generate_dataset(&spec, dims, &mapping, &views, 9, 0.01, 0).unwrap();
        assert_eq!(w1.len(), 4); // 12 - 9 + 1
        let w2 = generate_dataset(&spec, dims, &mapping, &views, 9, 0.01, 0).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert_eq!(a.pose, b.pose);
            for (ca, cb) in a.cubes.iter().zip(&b.cubes) {
                assert_eq!(ca.samples, cb.samples);
            }
        }
        assert!(generate_dataset(&spec, dims, &mapping, &views, 2, 0.0, 0).is_err());
    }

    #[test]
    fn cube_io_round_trip() {
        let s = Scatterer {
            range_bin: 3.0,
            doppler_bin: 1.0,
            angle_freq: 0.125,
            amplitude: 1.0,
            phase: 0.25,
        };
        let mut cube = synthesize_cube(&[s], small_dims()).unwrap();
        cube.frame_index = 7;
        cube.view = View::Vertical;
        let mut buf = Vec::new();
        write_cube(&mut buf, &cube).unwrap();
        let back = read_cube(&mut buf.as_slice()).unwrap();
        assert_eq!(back.dims, cube.dims);
        assert_eq!(back.frame_index, 7);
        assert_eq!(back.view, View::Vertical);
        // f32 storage: compare with f32 precision.
        for (a, b) in back.samples.iter().zip(&cube.samples) {
            assert!((a - b).norm() < 1e-6 * (1.0 + b.norm()));
        }
    }
}
