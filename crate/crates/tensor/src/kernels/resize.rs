//! Separable bilinear resampling with half-pixel centers
//! (`align_corners = false`), replicate-clamped at the borders.

use crate::real::Real;

#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    w0: T,
    w1: T,
}

fn taps<T: Real>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = if i0 == in_len - 1 { 0.0 } else { src - i0 as f64 };
            Tap { i0, i1, w0: T::lit(1.0 - frac), w1: T::lit(frac) }
        })
        .collect()
}

/// Resizes `planes` stacked `h x w` planes to `oh x ow`.
pub fn resize_bilinear<T: Real>(x: &[T], planes: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    assert_eq!(x.len(), planes * h * w, "resize input size mismatch");
    let tx = taps::<T>(w, ow);
    let ty = taps::<T>(h, oh);
    let mut tmp = vec![T::zero(); h * ow];
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for (xo, t) in tx.iter().enumerate() {
                tmp[y * ow + xo] = t.w0 * row[t.i0] + t.w1 * row[t.i1];
            }
        }
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (yo, t) in ty.iter().enumerate() {
            for xo in 0..ow {
                dst[yo * ow + xo] = t.w0 * tmp[t.i0 * ow + xo] + t.w1 * tmp[t.i1 * ow + xo];
            }
        }
    }
    out
}

/// Adjoint of [`resize_bilinear`].
pub fn resize_bilinear_backward<T: Real>(
    dy: &[T],
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let tx = taps::<T>(w, ow);
    let ty = taps::<T>(h, oh);
    let mut tmp = vec![T::zero(); h * ow];
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        tmp.iter_mut().for_each(|v| *v = T::zero());
        let g = &dy[p * oh * ow..(p + 1) * oh * ow];
        for (yo, t) in ty.iter().enumerate() {
            for xo in 0..ow {
                let v = g[yo * ow + xo];
                tmp[t.i0 * ow + xo] += t.w0 * v;
                tmp[t.i1 * ow + xo] += t.w1 * v;
            }
        }
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for (xo, t) in tx.iter().enumerate() {
                let v = tmp[y * ow + xo];
                dst[y * w + t.i0] += t.w0 * v;
                dst[y * w + t.i1] += t.w1 * v;
            }
        }
    }
    dx
}
