//! Stride-1 volumetric convolution lowered to GEMM through im2col.
//!
//! Layouts: input `[N, Cin, D, H, W]`, weight `[Cout, Cin, KD, KH, KW]`,
//! output `[N, Cout, OD, OH, OW]`. 2D convolution is the `D = KD = 1` case.

use crate::real::{gemm, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn output(&self) -> [usize; 3] {
        let mut o = [0; 3];
        for i in 0..3 {
            let span = self.input[i] + 2 * self.padding[i];
            assert!(
                span >= self.kernel[i],
                "kernel {:?} larger than padded input {:?}",
                self.kernel,
                self.input
            );
            o[i] = span - self.kernel[i] + 1;
        }
        o
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    fn out_volume(&self) -> usize {
        self.output().iter().product()
    }

    /// 1x1x1 kernels without padding need no im2col buffer.
    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.padding == [0, 0, 0]
    }
}

/// For each kernel tap along one axis: the half-open output range whose
/// source index stays inside the input, and the source offset.
fn tap_range(out_len: usize, in_len: usize, tap: usize, pad: usize) -> (usize, usize, isize) {
    let shift = tap as isize - pad as isize;
    let lo = (-shift).max(0) as usize;
    let hi = ((in_len as isize - shift).max(0) as usize).min(out_len);
    (lo, hi.max(lo), shift)
}

fn im2col<T: Real>(x: &[T], g: &ConvGeometry, col: &mut [T]) {
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output();
    let [kd, kh, kw] = g.kernel;
    let [pd, ph, pw] = g.padding;
    let plane = od * oh * ow;
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            let (z0, z1, sz) = tap_range(od, id, kz, pd);
            for ky in 0..kh {
                let (y0, y1, sy) = tap_range(oh, ih, ky, ph);
                for kx in 0..kw {
                    let (x0, x1, sx) = tap_range(ow, iw, kx, pw);
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    dst.iter_mut().for_each(|v| *v = T::zero());
                    for z in z0..z1 {
                        let zs = (z as isize + sz) as usize;
                        for y in y0..y1 {
                            let ys = (y as isize + sy) as usize;
                            let src_base = (zs * ih + ys) * iw;
                            let dst_base = (z * oh + y) * ow;
                            let xs0 = (x0 as isize + sx) as usize;
                            dst[dst_base + x0..dst_base + x1]
                                .copy_from_slice(&xc[src_base + xs0..src_base + xs0 + (x1 - x0)]);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output();
    let [kd, kh, kw] = g.kernel;
    let [pd, ph, pw] = g.padding;
    let plane = od * oh * ow;
    let mut row = 0;
    for c in 0..g.c_in {
        let dxc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            let (z0, z1, sz) = tap_range(od, id, kz, pd);
            for ky in 0..kh {
                let (y0, y1, sy) = tap_range(oh, ih, ky, ph);
                for kx in 0..kw {
                    let (x0, x1, sx) = tap_range(ow, iw, kx, pw);
                    let src = &col[row * plane..(row + 1) * plane];
                    for z in z0..z1 {
                        let zs = (z as isize + sz) as usize;
                        for y in y0..y1 {
                            let ys = (y as isize + sy) as usize;
                            let dst_base = (zs * ih + ys) * iw;
                            let src_base = (z * oh + y) * ow;
                            let xs0 = (x0 as isize + sx) as usize;
                            for (d, &s) in dxc[dst_base + xs0..dst_base + xs0 + (x1 - x0)]
                                .iter_mut()
                                .zip(&src[src_base + x0..src_base + x1])
                            {
                                *d += s;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub fn conv_forward<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    let rows = g.col_rows();
    let vin = g.in_volume();
    let vout = g.out_volume();
    assert_eq!(x.len(), g.batch * g.c_in * vin, "conv input size mismatch");
    assert_eq!(w.len(), g.c_out * rows, "conv weight size mismatch");
    let mut out = vec![T::zero(); g.batch * g.c_out * vout];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * vout] };
    for n in 0..g.batch {
        let xn = &x[n * g.c_in * vin..(n + 1) * g.c_in * vin];
        let on = &mut out[n * g.c_out * vout..(n + 1) * g.c_out * vout];
        let cols: &[T] = if g.is_pointwise() {
            xn
        } else {
            im2col(xn, g, &mut col);
            &col
        };
        gemm(g.c_out, rows, vout, w, false, cols, false, on, false);
        if let Some(b) = bias {
            for (co, chunk) in on.chunks_mut(vout).enumerate() {
                let bv = b[co];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Gradients w.r.t. input and weight; each is computed only when
/// requested. The bias gradient is the per-channel sum of `dy`.
pub fn conv_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    g: &ConvGeometry,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let rows = g.col_rows();
    let vin = g.in_volume();
    let vout = g.out_volume();
    let mut dx = need_dx.then(|| vec![T::zero(); g.batch * g.c_in * vin]);
    let mut dw = need_dw.then(|| vec![T::zero(); g.c_out * rows]);
    let pointwise = g.is_pointwise();
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); rows * vout] };
    for n in 0..g.batch {
        let dyn_ = &dy[n * g.c_out * vout..(n + 1) * g.c_out * vout];
        if let Some(dw) = dw.as_mut() {
            let xn = &x[n * g.c_in * vin..(n + 1) * g.c_in * vin];
            let cols: &[T] = if pointwise {
                xn
            } else {
                im2col(xn, g, &mut col);
                &col
            };
            // dW += dY (Cout x L) * col^T (L x R)
            gemm(g.c_out, vout, rows, dyn_, false, cols, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            let dxn = &mut dx[n * g.c_in * vin..(n + 1) * g.c_in * vin];
            if pointwise {
                gemm(rows, g.c_out, vout, w, true, dyn_, false, dxn, true);
            } else {
                // dcol = W^T (R x Cout) * dY (Cout x L)
                gemm(rows, g.c_out, vout, w, true, dyn_, false, &mut col, false);
                col2im(&col, g, dxn);
            }
        }
    }
    (dx, dw)
}

pub fn conv_bias_grad<T: Real>(dy: &[T], g: &ConvGeometry) -> Vec<T> {
    let vout = g.out_volume();
    let mut db = vec![T::zero(); g.c_out];
    for n in 0..g.batch {
        for (co, d) in db.iter_mut().enumerate() {
            let base = (n * g.c_out + co) * vout;
            *d += dy[base..base + vout].iter().copied().sum();
        }
    }
    db
}
