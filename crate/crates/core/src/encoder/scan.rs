//! Token ordering for the flattened radar feature maps.
//!
//! Feature maps from both views are interleaved per frame and flattened
//! angle-major / range-fast:
//!
//! ```text
//! index(f, view, a, r) = ((f * V + view) * H4 + a) * W4 + r
//! ```
//!
//! An optional serpentine mode reverses the range direction on odd angle
//! rows so consecutive tokens stay spatially adjacent. It is off by
//! default; the plain raster is the documented ordering.

use super::EncoderConfig;

/// Sequence position of feature cell (frame, view, angle row, range col).
pub fn scan_index(cfg: &EncoderConfig, frame: usize, view: usize, a: usize, r: usize) -> usize {
    let (h4, w4) = (cfg.grid_h(), cfg.grid_w());
    debug_assert!(frame < cfg.frames && view < cfg.views && a < h4 && r < w4);
    let rr = if cfg.serpentine && a % 2 == 1 {
        w4 - 1 - r
    } else {
        r
    };
    ((frame * cfg.views + view) * h4 + a) * w4 + rr
}

/// Inverse of [`scan_index`].
pub fn scan_unindex(cfg: &EncoderConfig, idx: usize) -> (usize, usize, usize, usize) {
    let (h4, w4) = (cfg.grid_h(), cfg.grid_w());
    let rr = idx % w4;
    let a = (idx / w4) % h4;
    let view = (idx / (w4 * h4)) % cfg.views;
    let frame = idx / (w4 * h4 * cfg.views);
    let r = if cfg.serpentine && a % 2 == 1 {
        w4 - 1 - rr
    } else {
        rr
    };
    (frame, view, a, r)
}
