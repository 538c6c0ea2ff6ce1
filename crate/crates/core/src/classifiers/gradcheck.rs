//! Central finite-difference oracle for analytic gradients.

use ndarray::{ArrayView1, ArrayView2};

/// Models whose training objective exposes a flat parameter vector.
pub trait Differentiable {
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]);
    /// Objective value on already-standardized inputs.
    fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>, l2: f64) -> f64;
    /// Objective value and its analytic gradient, in `parameters()` order.
    fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        w: ArrayView1<f64>,
        l2: f64,
    ) -> (f64, Vec<f64>);
}

/// `(f(p + eps e_i) - f(p - eps e_i)) / (2 eps)` for every coordinate.
pub fn central_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let up = f(&p);
            p[i] = orig - eps;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, with 0 when both are exactly zero and an
/// absolute floor of 1e-12 on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares `loss_and_gradient` against central differences of `loss`.
pub fn check_gradient<M: Differentiable + Clone>(
    model: &M,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    l2: f64,
    eps: f64,
) -> GradientCheck {
    let (_, analytic) = model.loss_and_gradient(x, y, w, l2);
    let mut probe = model.clone();
    let numeric = central_difference_gradient(
        |p| {
            probe.set_parameters(p);
            probe.loss(x, y, w, l2)
        },
        &model.parameters(),
        eps,
    );
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    GradientCheck {
        analytic,
        numeric,
        max_relative_error,
    }
}
