//! Training losses and OKS-based evaluation.
//!
//! The keypoint term is `L_oks = 1 - mean-over-frames OKS` with the COCO
//! similarity `OKS = sum_vis exp(-d^2 / (2 s^2 k_j^2)) / n_vis`; this exact
//! form is our choice (differentiable, bounded, consistent with the
//! metric). The smoothness term penalizes frame-difference velocity
//! errors, `L_vel = 1/((T-1)J) * sum ||v_hat - v||^2`, and the total is
//! `L_oks + lambda_vel * L_vel`.
//!
//! Evaluation is the single-person degenerate AP: recall over the 10 OKS
//! thresholds 0.50, 0.55, ..., 0.95.

use serde::{Deserialize, Serialize};

use crate::nn::VarMap;
use crate::pose::PoseWindow;
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};

/// How the OKS scale `s` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleMode {
    /// Diagonal of the ground-truth bounding box in normalized units,
    /// clamped away from zero.
    Bbox,
    /// A constant, for synthetic data whose "person size" is notional.
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OksParams {
    /// Per-joint falloff constants, one per joint.
    pub k: Vec<f64>,
    pub scale_mode: ScaleMode,
    pub fixed_scale: f64,
}

/// 14-joint skeleton order used throughout:
/// head, neck, r-shoulder, r-elbow, r-wrist, l-shoulder, l-elbow, l-wrist,
/// r-hip, r-knee, r-ankle, l-hip, l-knee, l-ankle.
pub const JOINT_NAMES_14: [&str; 14] = [
    "head",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
];

impl OksParams {
    /// COCO falloff constants mapped onto the 14-joint skeleton; the head
    /// takes the nose value and the neck the shoulder value.
    pub fn coco14() -> Self {
        let k = vec![
            0.026, // head
            0.079, // neck
            0.079, 0.072, 0.062, // right arm
            0.079, 0.072, 0.062, // left arm
            0.107, 0.087, 0.089, // right leg
            0.107, 0.087, 0.089, // left leg
        ];
        OksParams {
            k,
            scale_mode: ScaleMode::Bbox,
            fixed_scale: 1.0,
        }
    }

    /// Uniform falloff, fixed scale — for hand-computed test cases.
    pub fn uniform(joints: usize, k: f64, scale: f64) -> Self {
        OksParams {
            k: vec![k; joints],
            scale_mode: ScaleMode::Fixed,
            fixed_scale: scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(TensorError::InvalidArgument(
                "oks params: k must be positive and finite".into(),
            ));
        }
        if !(self.fixed_scale > 0.0) || !self.fixed_scale.is_finite() {
            return Err(TensorError::InvalidArgument(
                "oks params: fixed_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Scale for one frame's ground truth.
    pub fn scale_for(&self, gt: &[[f64; 2]], vis: &[u8]) -> f64 {
        match self.scale_mode {
            ScaleMode::Fixed => self.fixed_scale,
            ScaleMode::Bbox => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for (p, &v) in gt.iter().zip(vis) {
                    if v > 0 {
                        for c in 0..2 {
                            lo[c] = lo[c].min(p[c]);
                            hi[c] = hi[c].max(p[c]);
                        }
                    }
                }
                let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
                (w * w + h * h).sqrt().max(1e-6)
            }
        }
    }
}

/// Object keypoint similarity for one frame.
pub fn oks(pred: &[[f64; 2]], gt: &[[f64; 2]], vis: &[u8], params: &OksParams) -> Result<f64> {
    params.validate()?;
    let j = params.k.len();
    if pred.len() != j || gt.len() != j || vis.len() != j {
        return Err(TensorError::ShapeMismatch(format!(
            "oks: pred {}, gt {}, vis {}, k {}",
            pred.len(),
            gt.len(),
            vis.len(),
            j
        )));
    }
    let n_vis = vis.iter().filter(|&&v| v > 0).count();
    if n_vis == 0 {
        return Err(TensorError::InvalidArgument("oks: no visible joints".into()));
    }
    let s = params.scale_for(gt, vis);
    let mut acc = 0.0;
    for ji in 0..j {
        if vis[ji] > 0 {
            let dx = pred[ji][0] - gt[ji][0];
            let dy = pred[ji][1] - gt[ji][1];
            let d2 = dx * dx + dy * dy;
            acc += (-d2 / (2.0 * s * s * params.k[ji] * params.k[ji])).exp();
        }
    }
    Ok(acc / n_vis as f64)
}

fn frame_coords(w: &PoseWindow, f: usize) -> (Vec<[f64; 2]>, Vec<u8>) {
    let coords = (0..w.joints).map(|j| w.coord(f, j)).collect();
    let vis = (0..w.joints).map(|j| u8::from(w.visible(f, j))).collect();
    (coords, vis)
}

fn check_windows(pred: &PoseWindow, gt: &PoseWindow) -> Result<()> {
    if pred.frames != gt.frames || pred.joints != gt.joints {
        return Err(TensorError::ShapeMismatch(format!(
            "pose windows: pred {}x{}, gt {}x{}",
            pred.frames, pred.joints, gt.frames, gt.joints
        )));
    }
    Ok(())
}

/// 1 - mean-over-frames OKS. Visibility comes from the ground truth.
pub fn loss_oks(pred: &PoseWindow, gt: &PoseWindow, params: &OksParams) -> Result<f64> {
    check_windows(pred, gt)?;
    let mut acc = 0.0;
    for f in 0..gt.frames {
        let (gc, gv) = frame_coords(gt, f);
        let (pc, _) = frame_coords(pred, f);
        acc += oks(&pc, &gc, &gv, params)?;
    }
    Ok(1.0 - acc / gt.frames as f64)
}

/// Mean squared frame-difference velocity error; 0 for single-frame windows.
pub fn loss_vel(pred: &PoseWindow, gt: &PoseWindow) -> Result<f64> {
    check_windows(pred, gt)?;
    let (t, j) = (gt.frames, gt.joints);
    if t < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for f in 0..t - 1 {
        for ji in 0..j {
            let (p0, p1) = (pred.coord(f, ji), pred.coord(f + 1, ji));
            let (g0, g1) = (gt.coord(f, ji), gt.coord(f + 1, ji));
            let ex = (p1[0] - p0[0]) - (g1[0] - g0[0]);
            let ey = (p1[1] - p0[1]) - (g1[1] - g0[1]);
            acc += ex * ex + ey * ey;
        }
    }
    Ok(acc / ((t - 1) * j) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_vel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_vel: 0.05 }
    }
}

/// L = L_oks + lambda_vel * L_vel.
pub fn total_loss(
    pred: &PoseWindow,
    gt: &PoseWindow,
    params: &OksParams,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(loss_oks(pred, gt, params)? + weights.lambda_vel * loss_vel(pred, gt)?)
}

/// Taped version of [`total_loss`] for training. `pred` has shape
/// `[T][J][2]`; the ground truth (and its visibility) enters as constants.
pub fn total_loss_t(
    tape: &mut Tape,
    _vars: &VarMap,
    pred: Var,
    gt: &PoseWindow,
    params: &OksParams,
    weights: &LossWeights,
) -> Result<Var> {
    params.validate()?;
    let (t, j) = (gt.frames, gt.joints);
    if tape.shape(pred) != [t, j, 2] {
        return Err(TensorError::ShapeMismatch(format!(
            "total_loss: pred {:?}, gt {}x{}x2",
            tape.shape(pred),
            t,
            j
        )));
    }
    if params.k.len() != j {
        return Err(TensorError::ShapeMismatch(format!(
            "total_loss: {} k constants for {} joints",
            params.k.len(),
            j
        )));
    }
    let mut gt_data = Vec::with_capacity(t * j * 2);
    for f in 0..t {
        for ji in 0..j {
            let c = gt.coord(f, ji);
            gt_data.extend_from_slice(&c);
        }
    }
    let gt_t = tape.constant(Tensor::new(vec![t, j, 2], gt_data)?);
    let diff = tape.sub(pred, gt_t)?;
    let sq = tape.mul(diff, diff)?;
    let sq2 = tape.reshape(sq, vec![t * j, 2])?;
    let ones = tape.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0])?);
    let d2 = tape.matmul(sq2, ones)?; // [T*J][1]

    // exp(-d^2 / (2 s^2 k^2)), then a visibility/averaging mask so that
    // sum_all gives the mean-over-frames OKS directly.
    let mut wneg = Vec::with_capacity(t * j);
    let mut mask = Vec::with_capacity(t * j);
    for f in 0..t {
        let (gc, gv) = frame_coords(gt, f);
        let n_vis = gv.iter().filter(|&&v| v > 0).count();
        if n_vis == 0 {
            return Err(TensorError::InvalidArgument(format!(
                "total_loss: frame {f} has no visible joints"
            )));
        }
        let s = params.scale_for(&gc, &gv);
        for ji in 0..j {
            let kj = params.k[ji];
            wneg.push(-1.0 / (2.0 * s * s * kj * kj));
            mask.push(if gv[ji] > 0 {
                1.0 / (n_vis * t) as f64
            } else {
                0.0
            });
        }
    }
    let wneg_t = tape.constant(Tensor::new(vec![t * j, 1], wneg)?);
    let mask_t = tape.constant(Tensor::new(vec![t * j, 1], mask)?);
    let scaled = tape.mul(d2, wneg_t)?;
    let e = tape.exp(scaled)?;
    let weighted = tape.mul(e, mask_t)?;
    let mean_oks = tape.sum_all(weighted)?;
    let neg = tape.scale(mean_oks, -1.0)?;
    let l_oks = tape.add_scalar(neg, 1.0)?;

    if t < 2 || weights.lambda_vel == 0.0 {
        return Ok(l_oks);
    }
    let head = tape.slice(pred, 0, 1, t - 1)?;
    let tail = tape.slice(pred, 0, 0, t - 1)?;
    let v_pred = tape.sub(head, tail)?;
    let mut gtv = Vec::with_capacity((t - 1) * j * 2);
    for f in 0..t - 1 {
        for ji in 0..j {
            let (a, b) = (gt.coord(f, ji), gt.coord(f + 1, ji));
            gtv.push(b[0] - a[0]);
            gtv.push(b[1] - a[1]);
        }
    }
    let v_gt = tape.constant(Tensor::new(vec![t - 1, j, 2], gtv)?);
    let verr = tape.sub(v_pred, v_gt)?;
    let vsq = tape.mul(verr, verr)?;
    let vsum = tape.sum_all(vsq)?;
    let l_vel = tape.scale(vsum, 1.0 / ((t - 1) * j) as f64)?;
    let wv = tape.scale(l_vel, weights.lambda_vel)?;
    tape.add(l_oks, wv)
}

/// One evaluated frame: predictions against ground truth.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub pred: Vec<[f64; 2]>,
    pub gt: Vec<[f64; 2]>,
    pub vis: Vec<u8>,
}

/// Evaluation summary; all values in [0, 1] (the CLI reports them x100).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApReport {
    pub frames: usize,
    pub mean_oks: f64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub per_joint: Vec<PerJointAp>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerJointAp {
    pub joint: String,
    pub ap: f64,
}

const THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

fn recall_ap(scores: &[f64]) -> (f64, f64, f64) {
    if scores.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let recall = |t: f64| {
        scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64
    };
    let ap = THRESHOLDS.iter().map(|&t| recall(t)).sum::<f64>() / THRESHOLDS.len() as f64;
    (ap, recall(0.50), recall(0.75))
}

/// Single-person AP: per-frame recall over OKS thresholds 0.50..0.95.
pub fn evaluate_ap(
    frames: &[FrameEval],
    params: &OksParams,
    joint_names: Option<&[&str]>,
) -> Result<ApReport> {
    if frames.is_empty() {
        return Err(TensorError::InvalidArgument("evaluate_ap: no frames".into()));
    }
    let j = params.k.len();
    let mut pose_scores = Vec::with_capacity(frames.len());
    let mut joint_scores: Vec<Vec<f64>> = vec![Vec::new(); j];
    for fr in frames {
        pose_scores.push(oks(&fr.pred, &fr.gt, &fr.vis, params)?);
        let s = params.scale_for(&fr.gt, &fr.vis);
        for ji in 0..j {
            if fr.vis[ji] > 0 {
                let dx = fr.pred[ji][0] - fr.gt[ji][0];
                let dy = fr.pred[ji][1] - fr.gt[ji][1];
                let d2 = dx * dx + dy * dy;
                joint_scores[ji]
                    .push((-d2 / (2.0 * s * s * params.k[ji] * params.k[ji])).exp());
            }
        }
    }
    let (ap, ap50, ap75) = recall_ap(&pose_scores);
    let per_joint = joint_scores
        .iter()
        .enumerate()
        .map(|(ji, scores)| PerJointAp {
            joint: joint_names
                .and_then(|n| n.get(ji))
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("joint_{ji}")),
            ap: recall_ap(scores).0,
        })
        .collect();
    Ok(ApReport {
        frames: frames.len(),
        mean_oks: pose_scores.iter().sum::<f64>() / pose_scores.len() as f64,
        ap,
        ap50,
        ap75,
        per_joint,
    })
}
