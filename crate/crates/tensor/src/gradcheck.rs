//! Central finite differences, used as an oracle against the tape.
//!
//! Only forward evaluations of the function under test are used here, so
//! the estimate is independent of every backward implementation.

use crate::tensor::Tensor;

/// Estimates `d f / d x` by `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, step: f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// `||a - b|| / max(||a||, ||b||)`; zero when both vanish.
pub fn relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    let diff: f64 = analytic.data().iter().zip(numeric.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.data().iter().map(|b| b * b).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
