//! Small shared pieces for parameter-carrying models: named parameter
//! loading onto a tape, seeded initializers, and the linear-layer helper.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Gradients, Params, Result, Tape, Tensor, TensorError, Var};

/// Name -> tape leaf for every parameter of a model.
pub type VarMap = BTreeMap<String, Var>;

pub fn load_params(tape: &mut Tape, params: &Params) -> VarMap {
    params
        .iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
        .collect()
}

pub fn fetch(vars: &VarMap, name: &str) -> Result<Var> {
    vars.get(name)
        .copied()
        .ok_or_else(|| TensorError::InvalidArgument(format!("missing parameter {name}")))
}

/// Collects gradients back into name -> tensor form for the optimizer.
pub fn collect_grads(vars: &VarMap, grads: &Gradients) -> BTreeMap<String, Tensor> {
    vars.iter()
        .filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.clone())))
        .collect()
}

/// Truncated normal: standard normals rejected outside +-2, scaled by `std`.
pub fn trunc_normal(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        // Box-Muller.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let z0 = r * (std::f64::consts::TAU * u2).cos();
        let z1 = r * (std::f64::consts::TAU * u2).sin();
        for z in [z0, z1] {
            if z.abs() <= 2.0 && data.len() < numel {
                data.push(z * std);
            }
        }
    }
    Tensor::new(shape.to_vec(), data).expect("trunc_normal")
}

/// x @ w + b with `x: [N][Din]`, `w: [Din][Dout]`, `b: [Dout]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row_bias(y, b)
}

/// Linear layer whose weights live under `prefix.w` / `prefix.b`.
pub fn linear_p(tape: &mut Tape, vars: &VarMap, prefix: &str, x: Var) -> Result<Var> {
    let w = fetch(vars, &format!("{prefix}.w"))?;
    let b = fetch(vars, &format!("{prefix}.b"))?;
    linear(tape, x, w, b)
}

/// Layer norm with `prefix.g` / `prefix.b` parameters.
pub fn layer_norm_p(tape: &mut Tape, vars: &VarMap, prefix: &str, x: Var) -> Result<Var> {
    let g = fetch(vars, &format!("{prefix}.g"))?;
    let b = fetch(vars, &format!("{prefix}.b"))?;
    tape.layer_norm(x, g, b, 1e-5)
}

/// Registers a linear layer's parameters.
pub fn init_linear(
    params: &mut Params,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    std: f64,
    rng: &mut ChaCha8Rng,
) {
    params.insert(format!("{prefix}.w"), trunc_normal(&[d_in, d_out], std, rng));
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[d_out]));
}

/// Registers layer-norm parameters (gamma 1, beta 0).
pub fn init_layer_norm(params: &mut Params, prefix: &str, d: usize) {
    params.insert(format!("{prefix}.g"), Tensor::full(&[d], 1.0));
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[d]));
}
