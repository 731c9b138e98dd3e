//! Central finite-difference gradient verification.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Params, Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Compares analytic gradients against central differences on `samples`
/// randomly chosen parameter coordinates.
///
/// `f` must be a deterministic map from parameters to a scalar loss. The
/// step is `h * max(1, |theta|)` per coordinate. Relative error uses a
/// small absolute floor so coordinates whose true gradient is ~0 do not
/// divide by noise.
pub fn grad_check<F>(
    mut f: F,
    params: &Params,
    analytic: &BTreeMap<String, Tensor>,
    samples: usize,
    h: f64,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&Params) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(TensorError::InvalidArgument("grad_check: h must be > 0".into()));
    }
    if samples == 0 {
        return Err(TensorError::InvalidArgument(
            "grad_check: samples must be > 0".into(),
        ));
    }
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, t) in params {
        for i in 0..t.numel() {
            coords.push((name.clone(), i));
        }
    }
    if coords.is_empty() {
        return Err(TensorError::InvalidArgument("grad_check: no parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    coords.truncate(samples);

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for (name, i) in &coords {
        let theta = params[name].data()[*i];
        let step = h * theta.abs().max(1.0);
        work.get_mut(name).unwrap().data_mut()[*i] = theta + step;
        let fp = f(&work)?;
        work.get_mut(name).unwrap().data_mut()[*i] = theta - step;
        let fm = f(&work)?;
        work.get_mut(name).unwrap().data_mut()[*i] = theta;
        let fd = (fp - fm) / (2.0 * step);
        let an = analytic
            .get(name)
            .map(|g| g.data()[*i])
            .unwrap_or(0.0);
        let rel = (fd - an).abs() / (fd.abs().max(an.abs()) + 1e-6);
        if rel > max_rel {
            max_rel = rel;
            worst = Some((name.clone(), *i));
        }
    }
    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_error: max_rel,
        tol,
        worst,
    })
}
