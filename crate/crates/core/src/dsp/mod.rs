//! Radar preprocessing: clutter removal, chirp subsampling and the 3D FFT
//! chain (range -> doppler -> angle with zero-padding), plus the 4D variant
//! and the benchmark harness comparing the two.
//!
//! Bin conventions: no fftshift anywhere. Doppler bin 0 is zero velocity,
//! angle bin 0 is broadside DC.

pub mod bench;
mod fft;

pub use bench::{bench_heatmaps, BenchReport};
pub use fft::fft_1d;

use std::cell::Cell;
use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::radar_sim::{CubeDims, RadarCube, View};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("fft output length {output} shorter than input {input}")]
    BadFftSize { input: usize, output: usize },
    #[error("chirp count {chirps} not divisible by target {target}")]
    BadSubsample { chirps: usize, target: usize },
    #[error("unexpected cube dims: {0}")]
    BadDims(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WindowKind {
    Rect,
    Hann,
}

/// Preprocessing knobs. Defaults follow the 12x128x256 -> 64x8x256 chain.
#[derive(Debug, Clone, Copy)]
pub struct DspConfig {
    pub chirp_target: usize,
    pub angle_pad: usize,
    pub window: WindowKind,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            chirp_target: 8,
            angle_pad: 64,
            window: WindowKind::Rect,
        }
    }
}

/// Complex angle x doppler x range heatmap, C-order [h][d][w].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap3D {
    pub h: usize,
    pub d: usize,
    pub w: usize,
    pub values: Vec<Complex64>,
    pub frame_index: u64,
    pub view: View,
}

impl Heatmap3D {
    #[inline]
    pub fn at(&self, h: usize, d: usize, w: usize) -> Complex64 {
        self.values[(h * self.d + d) * self.w + w]
    }

    /// Index of the magnitude argmax as (angle, doppler, range).
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0;
        let mut best_v = -1.0;
        for (i, v) in self.values.iter().enumerate() {
            let n = v.norm_sqr();
            if n > best_v {
                best_v = n;
                best = i;
            }
        }
        let w = best % self.w;
        let d = (best / self.w) % self.d;
        let h = best / (self.w * self.d);
        (h, d, w)
    }
}

/// 4D heatmap [az][el][d][w]; produced only by the benchmark path.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap4D {
    pub az: usize,
    pub el: usize,
    pub d: usize,
    pub w: usize,
    pub values: Vec<Complex64>,
}

// --- allocation accounting -------------------------------------------------
// The benchmark wants the allocation high-water mark of each preprocessing
// path. All sizable buffers in this module go through `counted_vec`, and
// `CountedBuf` gives temporaries RAII release.

thread_local! {
    static ALLOC_CURRENT: Cell<u64> = const { Cell::new(0) };
    static ALLOC_PEAK: Cell<u64> = const { Cell::new(0) };
}

pub fn reset_alloc_counters() {
    ALLOC_CURRENT.with(|c| c.set(0));
    ALLOC_PEAK.with(|c| c.set(0));
}

pub fn peak_alloc_bytes() -> u64 {
    ALLOC_PEAK.with(|c| c.get())
}

fn track(bytes: u64) {
    ALLOC_CURRENT.with(|c| {
        let cur = c.get() + bytes;
        c.set(cur);
        ALLOC_PEAK.with(|p| {
            if cur > p.get() {
                p.set(cur);
            }
        });
    });
}

fn release(bytes: u64) {
    ALLOC_CURRENT.with(|c| c.set(c.get().saturating_sub(bytes)));
}

struct CountedBuf {
    v: Vec<Complex64>,
    bytes: u64,
}

impl CountedBuf {
    fn zeros(len: usize) -> Self {
        let bytes = (len * std::mem::size_of::<Complex64>()) as u64;
        track(bytes);
        Self {
            v: vec![Complex64::new(0.0, 0.0); len],
            bytes,
        }
    }

    /// Hands the buffer to a caller that keeps it; accounting stops here.
    fn into_inner(mut self) -> Vec<Complex64> {
        release(self.bytes);
        self.bytes = 0;
        std::mem::take(&mut self.v)
    }
}

impl Drop for CountedBuf {
    fn drop(&mut self) {
        release(self.bytes);
    }
}

// --- preprocessing ops -------------------------------------------------------

/// Subtracts the per-(antenna, sample) mean across chirps.
///
/// Means at or below 1e-12 of the cube's max magnitude are snapped to zero,
/// so a second application returns the input bit-identically.
pub fn remove_clutter(cube: &RadarCube) -> RadarCube {
    let CubeDims {
        antennas: a,
        chirps: c,
        adc: n,
    } = cube.dims;
    let scale = cube
        .samples
        .iter()
        .map(|s| s.re.abs().max(s.im.abs()))
        .fold(0.0, f64::max);
    let snap = 1e-12 * scale;
    let mut out = cube.clone();
    let mut means = CountedBuf::zeros(n);
    for ai in 0..a {
        for m in means.v.iter_mut() {
            *m = Complex64::new(0.0, 0.0);
        }
        for ci in 0..c {
            let row = &cube.samples[(ai * c + ci) * n..(ai * c + ci + 1) * n];
            for (m, s) in means.v.iter_mut().zip(row) {
                *m += s;
            }
        }
        let inv = 1.0 / c as f64;
        for m in means.v.iter_mut() {
            *m *= inv;
            if m.re.abs() <= snap {
                m.re = 0.0;
            }
            if m.im.abs() <= snap {
                m.im = 0.0;
            }
        }
        for ci in 0..c {
            let row = &mut out.samples[(ai * c + ci) * n..(ai * c + ci + 1) * n];
            for (s, m) in row.iter_mut().zip(&means.v) {
                *s -= m;
            }
        }
    }
    out
}

/// Keeps chirps {0, s, 2s, ...} with s = chirps / target.
pub fn subsample_chirps(cube: &RadarCube, target: usize) -> Result<RadarCube, DspError> {
    let CubeDims {
        antennas: a,
        chirps: c,
        adc: n,
    } = cube.dims;
    if target == 0 || c % target != 0 {
        return Err(DspError::BadSubsample {
            chirps: c,
            target,
        });
    }
    let stride = c / target;
    let mut samples = CountedBuf::zeros(a * target * n);
    for ai in 0..a {
        for ti in 0..target {
            let src = (ai * c + ti * stride) * n;
            let dst = (ai * target + ti) * n;
            samples.v[dst..dst + n].copy_from_slice(&cube.samples[src..src + n]);
        }
    }
    Ok(RadarCube {
        dims: CubeDims {
            antennas: a,
            chirps: target,
            adc: n,
        },
        samples: samples.into_inner(),
        frame_index: cube.frame_index,
        view: cube.view,
    })
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let x = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
            0.5 * (1.0 - x.cos())
        })
        .collect()
}

fn apply_window(line: &mut [Complex64], win: Option<&[f64]>) {
    if let Some(w) = win {
        for (s, &wv) in line.iter_mut().zip(w) {
            *s *= wv;
        }
    }
}

/// Range FFT over ADC samples followed by doppler FFT over chirps, in place.
/// Shared prefix of the 3D and 4D paths.
fn range_doppler_fft(
    samples: &mut [Complex64],
    dims: CubeDims,
    window: WindowKind,
) -> Result<(), DspError> {
    let CubeDims {
        antennas: a,
        chirps: d,
        adc: n,
    } = dims;
    let (win_n, win_d) = match window {
        WindowKind::Rect => (None, None),
        WindowKind::Hann => (Some(hann(n)), Some(hann(d))),
    };
    // Range: contiguous lines.
    for line in samples.chunks_exact_mut(n) {
        apply_window(line, win_n.as_deref());
        let y = fft_1d(line, n)?;
        line.copy_from_slice(&y);
    }
    // Doppler: strided lines, gathered through a scratch buffer.
    let mut scratch = CountedBuf::zeros(d);
    for ai in 0..a {
        for ni in 0..n {
            for ci in 0..d {
                scratch.v[ci] = samples[(ai * d + ci) * n + ni];
            }
            apply_window(&mut scratch.v, win_d.as_deref());
            let y = fft_1d(&scratch.v, d)?;
            for ci in 0..d {
                samples[(ai * d + ci) * n + ni] = y[ci];
            }
        }
    }
    Ok(())
}

/// Full 3D chain on a clutter-removed, subsampled cube: range FFT, doppler
/// FFT, then the angle FFT with the antenna dim zero-padded to `angle_pad`.
pub fn heatmap_3d(cube: &RadarCube, cfg: &DspConfig) -> Result<Heatmap3D, DspError> {
    let CubeDims {
        antennas: a,
        chirps: d,
        adc: w,
    } = cube.dims;
    if d != cfg.chirp_target {
        return Err(DspError::BadDims(format!(
            "expected {} chirps after subsampling, got {d}",
            cfg.chirp_target
        )));
    }
    if cfg.angle_pad < a {
        return Err(DspError::BadDims(format!(
            "angle pad {} smaller than antenna count {a}",
            cfg.angle_pad
        )));
    }
    let mut work = CountedBuf::zeros(cube.samples.len());
    work.v.copy_from_slice(&cube.samples);
    range_doppler_fft(&mut work.v, cube.dims, cfg.window)?;

    let h = cfg.angle_pad;
    let win_a = match cfg.window {
        WindowKind::Rect => None,
        WindowKind::Hann => Some(hann(a)),
    };
    let mut out = CountedBuf::zeros(h * d * w);
    let mut scratch = CountedBuf::zeros(a);
    for di in 0..d {
        for wi in 0..w {
            for ai in 0..a {
                scratch.v[ai] = work.v[(ai * d + di) * w + wi];
            }
            apply_window(&mut scratch.v, win_a.as_deref());
            let y = fft_1d(&scratch.v, h)?;
            for (hi, v) in y.iter().enumerate() {
                out.v[(hi * d + di) * w + wi] = *v;
            }
        }
    }
    Ok(Heatmap3D {
        h,
        d,
        w,
        values: out.into_inner(),
        frame_index: cube.frame_index,
        view: cube.view,
    })
}

/// Antenna grouping of the 4D baseline: a 2-row virtual grid with the 8
/// azimuth antennas on row 0 and the 4 elevated antennas on row 1, padded to
/// 64 azimuth x 8 elevation bins. This grouping is a documented convention;
/// the baseline module it mirrors does not publish its dims.
#[derive(Debug, Clone, Copy)]
pub struct FourDConfig {
    pub azimuth_antennas: usize,
    pub elevation_antennas: usize,
    pub azimuth_pad: usize,
    pub elevation_pad: usize,
}

impl Default for FourDConfig {
    fn default() -> Self {
        Self {
            azimuth_antennas: 8,
            elevation_antennas: 4,
            azimuth_pad: 64,
            elevation_pad: 8,
        }
    }
}

pub fn heatmap_4d(
    cube: &RadarCube,
    cfg: &DspConfig,
    grouping: &FourDConfig,
) -> Result<Heatmap4D, DspError> {
    let CubeDims {
        antennas: a,
        chirps: d,
        adc: w,
    } = cube.dims;
    if d != cfg.chirp_target {
        return Err(DspError::BadDims(format!(
            "expected {} chirps after subsampling, got {d}",
            cfg.chirp_target
        )));
    }
    if grouping.azimuth_antennas + grouping.elevation_antennas != a {
        return Err(DspError::BadDims(format!(
            "grouping {}+{} does not cover {a} antennas",
            grouping.azimuth_antennas, grouping.elevation_antennas
        )));
    }
    let mut work = CountedBuf::zeros(cube.samples.len());
    work.v.copy_from_slice(&cube.samples);
    range_doppler_fft(&mut work.v, cube.dims, cfg.window)?;

    let (az, el) = (grouping.azimuth_pad, grouping.elevation_pad);
    let rows = 2; // grid rows actually populated
    let mut out = CountedBuf::zeros(az * el * d * w);
    let mut row_buf = CountedBuf::zeros(grouping.azimuth_antennas.max(grouping.elevation_antennas));
    let mut az_rows = CountedBuf::zeros(rows * az);
    let mut col_buf = CountedBuf::zeros(rows);
    for di in 0..d {
        for wi in 0..w {
            // Azimuth FFT of each populated grid row.
            for (r, (lo, hi)) in [
                (0usize, grouping.azimuth_antennas),
                (grouping.azimuth_antennas, a),
            ]
            .iter()
            .enumerate()
            {
                let len = hi - lo;
                for (k, ai) in (*lo..*hi).enumerate() {
                    row_buf.v[k] = work.v[(ai * d + di) * w + wi];
                }
                let y = fft_1d(&row_buf.v[..len], az)?;
                az_rows.v[r * az..(r + 1) * az].copy_from_slice(&y);
            }
            // Elevation FFT down each azimuth column.
            for azi in 0..az {
                for r in 0..rows {
                    col_buf.v[r] = az_rows.v[r * az + azi];
                }
                let y = fft_1d(&col_buf.v, el)?;
                for (eli, v) in y.iter().enumerate() {
                    out.v[((azi * el + eli) * d + di) * w + wi] = *v;
                }
            }
        }
    }
    Ok(Heatmap4D {
        az,
        el,
        d,
        w,
        values: out.into_inner(),
    })
}

/// Full per-frame 3D preprocessing: clutter removal, chirp subsampling,
/// 3D FFT.
pub fn preprocess_frame(cube: &RadarCube, cfg: &DspConfig) -> Result<Heatmap3D, DspError> {
    let cleaned = remove_clutter(cube);
    let sub = subsample_chirps(&cleaned, cfg.chirp_target)?;
    heatmap_3d(&sub, cfg)
}

/// Preprocesses a batch of frames with `workers` threads. Pure per frame,
/// so the output is bit-identical regardless of worker count.
pub fn preprocess_batch(
    cubes: &[RadarCube],
    cfg: &DspConfig,
    workers: usize,
) -> Result<Vec<Heatmap3D>, DspError> {
    let workers = workers.max(1);
    if workers == 1 || cubes.len() < 2 {
        return cubes.iter().map(|c| preprocess_frame(c, cfg)).collect();
    }
    let results: Vec<std::sync::Mutex<Option<Result<Heatmap3D, DspError>>>> =
        cubes.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(cubes.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= cubes.len() {
                    break;
                }
                let r = preprocess_frame(&cubes[i], cfg);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().unwrap())
        .collect()
}

// --- MMH3 binary format -----------------------------------------------------
//
// magic "MMH3" | u32 version=1 | u32 H | u32 D | u32 W | u32 view tag
// | u64 frame_index | H*D*W interleaved (re, im) f32 pairs, C-order.

const MAGIC: &[u8; 4] = b"MMH3";
const VERSION: u32 = 1;

pub fn write_heatmap<W: Write>(w: &mut W, hm: &Heatmap3D) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [hm.h, hm.d, hm.w] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&hm.view.tag().to_le_bytes())?;
    w.write_all(&hm.frame_index.to_le_bytes())?;
    let mut buf = Vec::with_capacity(hm.values.len() * 8);
    for s in &hm.values {
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

pub fn read_heatmap<R: Read>(r: &mut R) -> io::Result<Heatmap3D> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not an MMH3 heatmap"));
    }
    if read_u32(r)? != VERSION {
        return Err(bad("unsupported MMH3 version"));
    }
    let h = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    let w = read_u32(r)? as usize;
    let view = View::from_tag(read_u32(r)?).ok_or_else(|| bad("bad view tag"))?;
    let mut fb = [0u8; 8];
    r.read_exact(&mut fb)?;
    let frame_index = u64::from_le_bytes(fb);
    let numel = h * d * w;
    let mut raw = vec![0u8; numel * 8];
    r.read_exact(&mut raw)?;
    let mut values = Vec::with_capacity(numel);
    for ch in raw.chunks_exact(8) {
        let re = f32::from_le_bytes(ch[0..4].try_into().unwrap()) as f64;
        let im = f32::from_le_bytes(ch[4..8].try_into().unwrap()) as f64;
        if !re.is_finite() || !im.is_finite() {
            return Err(bad("non-finite sample"));
        }
        values.push(Complex64::new(re, im));
    }
    Ok(Heatmap3D {
        h,
        d,
        w,
        values,
        frame_index,
        view,
    })
}
