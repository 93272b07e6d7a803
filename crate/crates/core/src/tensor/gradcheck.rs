//! Central finite-difference gradient checking.
//!
//! The checker only evaluates forward values, so it stays independent of
//! every backward rule it verifies.

use super::{Graph, Real, Tensor, Var};
use rand::Rng;

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Largest `‖fd − analytic‖ / max(‖fd‖, ‖analytic‖, floor)` over inputs.
    pub max_rel_err: f64,
    /// Largest absolute element difference.
    pub max_abs_err: f64,
}

/// Tensor with entries drawn uniformly from `[-1, 1]`.
pub fn random_tensor<F: Real>(rng: &mut impl Rng, shape: &[usize]) -> Tensor<F> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| F::from_f64_lossy(rng.gen_range(-1.0..1.0))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

fn eval<F>(inputs: &[Tensor<f64>], build: &F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::inference();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.value(out).item()
}

/// Compares the graph's gradients of the scalar built by `build` against
/// central differences with step `eps`, for every input tensor.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], eps: f64, build: F) -> GradCheck
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars);
    g.backward(out).expect("scalar output");

    let mut report = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    for (k, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match g.grad(*v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; inputs[k].numel()],
        };
        let mut numeric = vec![0.0; inputs[k].numel()];
        let mut probe = inputs.to_vec();
        for (e, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[e];
            probe[k].data_mut()[e] = x0 + eps;
            let up = eval(&probe, &build);
            probe[k].data_mut()[e] = x0 - eps;
            let down = eval(&probe, &build);
            probe[k].data_mut()[e] = x0;
            *slot = (up - down) / (2.0 * eps);
        }
        let diff: f64 = numeric
            .iter()
            .zip(&analytic)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm_n = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_a = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / norm_n.max(norm_a).max(1e-12);
        report.max_rel_err = report.max_rel_err.max(rel);
        for (a, b) in numeric.iter().zip(&analytic) {
            report.max_abs_err = report.max_abs_err.max((a - b).abs());
        }
    }
    report
}
