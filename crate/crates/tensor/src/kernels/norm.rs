use crate::real::Real;

/// Per-channel statistics of a `[N, C, S]` layout (S = flattened spatial).
pub struct ChannelStats<T> {
    pub mean: Vec<T>,
    /// Biased (1/M) variance.
    pub var: Vec<T>,
}

pub fn channel_stats<T: Real>(x: &[T], n: usize, c: usize, s: usize) -> ChannelStats<T> {
    let m = T::from_usize(n * s).unwrap();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for b in 0..n {
            acc += x[(b * c + ch) * s..(b * c + ch + 1) * s].iter().copied().sum();
        }
        let mu = acc / m;
        let mut sq = T::zero();
        for b in 0..n {
            for &v in &x[(b * c + ch) * s..(b * c + ch + 1) * s] {
                let d = v - mu;
                sq += d * d;
            }
        }
        mean[ch] = mu;
        var[ch] = sq / m;
    }
    ChannelStats { mean, var }
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`; also returns the
/// normalized activations and per-channel inverse std for backward.
#[allow(clippy::too_many_arguments)]
pub fn normalize<T: Real>(
    x: &[T],
    n: usize,
    c: usize,
    s: usize,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * s..(b * c + ch + 1) * s;
            let (mu, is, g, bt) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for ((yo, xo), &v) in y[r.clone()].iter_mut().zip(&mut xhat[r.clone()]).zip(&x[r]) {
                let h = (v - mu) * is;
                *xo = h;
                *yo = g * h + bt;
            }
        }
    }
    (y, xhat, inv_std)
}

/// Backward of batch-statistics normalization. Returns (dx, dgamma, dbeta).
pub fn batch_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    n: usize,
    c: usize,
    s: usize,
    batch_stats: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = T::from_usize(n * s).unwrap();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * s..(b * c + ch + 1) * s;
            for (&g, &h) in dy[r.clone()].iter().zip(&xhat[r]) {
                dgamma[ch] += g * h;
                dbeta[ch] += g;
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * s..(b * c + ch + 1) * s;
            let k = gamma[ch] * inv_std[ch];
            if batch_stats {
                let (sg, sgh) = (dbeta[ch] / m, dgamma[ch] / m);
                for ((d, &g), &h) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&xhat[r]) {
                    *d = k * (g - sg - h * sgh);
                }
            } else {
                for (d, &g) in dx[r.clone()].iter_mut().zip(&dy[r]) {
                    *d = k * g;
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}
