use crate::error::{Error, Result};

/// `base_lr * (1 - iter / total_iter)^power`.
pub fn poly_lr(base_lr: f64, iter: usize, total_iter: usize, power: f64) -> Result<f64> {
    if total_iter == 0 {
        return Err(Error::Config("poly_lr needs total_iter > 0".into()));
    }
    if iter > total_iter {
        return Err(Error::Config(format!("poly_lr iter {iter} exceeds total_iter {total_iter}")));
    }
    Ok(base_lr * (1.0 - iter as f64 / total_iter as f64).powf(power))
}
