//! Shared test helpers: finite-difference gradient checking.
#![allow(dead_code)] // each integration test target uses a subset

use hypobench_core::autodiff::{Tape, Tensor};
use hypobench_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Maximum allowed relative error between analytic and numeric gradients.
pub const FD_TOL: f64 = 1e-3;

/// Builds a scalar loss from tracked leaves bound to the given tape.
pub type LossFn = dyn Fn(&Tape, &[Tensor]) -> Result<Tensor>;

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

fn eval(f: &LossFn, inputs: &[(Vec<usize>, Vec<f64>)]) -> f64 {
    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, values)| tape.leaf(shape.clone(), values).expect("leaf"))
        .collect();
    let loss = f(&tape, &leaves).expect("loss");
    loss.item().expect("scalar loss")
}

/// Check analytic gradients of `f` against central finite differences for
/// every element of every input. Returns the max relative error seen.
///
/// The loss function must be deterministic given its inputs (stochastic
/// ops must reseed internally).
pub fn check_gradients(name: &str, f: &LossFn, inputs: &[(Vec<usize>, Vec<f64>)]) -> f64 {
    // Analytic pass.
    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, values)| tape.leaf(shape.clone(), values).expect("leaf"))
        .collect();
    let loss = f(&tape, &leaves).expect("loss");
    let grads = tape.backward(&loss).expect("backward");

    let mut worst: f64 = 0.0;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads
            .get(leaf)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; leaf.len()]);
        for j in 0..inputs[i].1.len() {
            let mut plus = inputs.to_vec();
            plus[i].1[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].1[j] -= FD_STEP;
            let numeric = (eval(f, &plus) - eval(f, &minus)) / (2.0 * FD_STEP);
            let err = relative_error(analytic[j], numeric);
            assert!(
                err < FD_TOL,
                "{name}: input {i} element {j}: analytic {} vs numeric {} (rel err {err:.2e})",
                analytic[j],
                numeric
            );
            worst = worst.max(err);
        }
    }
    worst
}

/// Uniform values in (-1, 1), deterministic per seed.
pub fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random shape with up to `max_rank` dims of size 1..=max_dim.
#[allow(dead_code)]
pub fn random_shape(rng: &mut ChaCha8Rng, max_rank: usize, max_dim: usize) -> Vec<usize> {
    let rank = rng.gen_range(1..=max_rank);
    (0..rank).map(|_| rng.gen_range(1..=max_dim)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reduce an arbitrary tensor to a scalar with a fixed pseudo-random
/// linear functional, so gradient signal reaches every element.
pub fn to_scalar(out: &Tensor) -> Result<Tensor> {
    let n = out.len();
    let mut mix_rng = rng(0xC0FFEE ^ n as u64);
    let coeffs = Tensor::from_vec(vec![n, 1], random_values(&mut mix_rng, n))?;
    let flat = out.reshape(vec![1, n])?;
    flat.matmul(&coeffs)?.reshape(vec![])
}
