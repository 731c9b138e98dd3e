//! Keypoint windows shared by the simulator (ground truth), the decoder
//! (predictions) and the objectives.

use serde::{Deserialize, Serialize};

/// T x J keypoints in normalized [0,1]^2 image coordinates.
///
/// `visibility` is meaningful for ground truth only; predictions carry all
/// ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseWindow {
    pub frames: usize,
    pub joints: usize,
    /// Row-major [frame][joint][xy].
    pub coords: Vec<[f64; 2]>,
    /// Row-major [frame][joint], 0 or 1.
    pub visibility: Vec<u8>,
}

impl PoseWindow {
    pub fn new(frames: usize, joints: usize) -> Self {
        Self {
            frames,
            joints,
            coords: vec![[0.0, 0.0]; frames * joints],
            visibility: vec![1; frames * joints],
        }
    }

    pub fn coord(&self, f: usize, j: usize) -> [f64; 2] {
        self.coords[f * self.joints + j]
    }

    pub fn set_coord(&mut self, f: usize, j: usize, xy: [f64; 2]) {
        self.coords[f * self.joints + j] = xy;
    }

    pub fn visible(&self, f: usize, j: usize) -> bool {
        self.visibility[f * self.joints + j] != 0
    }

    /// Single-frame view of frame `f`.
    pub fn frame(&self, f: usize) -> PoseWindow {
        PoseWindow {
            frames: 1,
            joints: self.joints,
            coords: self.coords[f * self.joints..(f + 1) * self.joints].to_vec(),
            visibility: self.visibility[f * self.joints..(f + 1) * self.joints].to_vec(),
        }
    }
}
