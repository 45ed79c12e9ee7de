//! In-plane rigid warping with bilinear sampling and zero padding.
//!
//! Coordinates follow the align-corners convention: pixel centers at
//! integers, image center `c = ((W - 1) / 2, (H - 1) / 2)`, and normalized
//! coordinates `x_n = (x - c_x) / c_x`. A transform `(theta, t)` moves the
//! content point `q` to `R(theta) (q - c) + c + t` with
//! `R = [[cos, -sin], [sin, cos]]` acting on `(x, y)`.

use serde::{Deserialize, Serialize};
use sean_tensor::{Real, Tensor, Var};

/// Rotation in radians about the image center plus a shift in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidParams {
    pub const IDENTITY: RigidParams = RigidParams { theta: 0.0, tx: 0.0, ty: 0.0 };

    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self { theta, tx, ty }
    }

    pub fn from_degrees(theta_deg: f64, tx: f64, ty: f64) -> Self {
        Self::new(theta_deg.to_radians(), tx, ty)
    }

    pub fn is_valid(&self) -> bool {
        self.theta.is_finite() && self.tx.is_finite() && self.ty.is_finite() && self.theta.abs() <= std::f64::consts::PI
    }

    /// `(theta, tx, ty)` with the shifts in normalized units of an `h x w` image.
    pub fn to_normalized(&self, h: usize, w: usize) -> [f64; 3] {
        let (sx, sy) = half_extent(h, w);
        [self.theta, self.tx / sx, self.ty / sy]
    }

    pub fn from_normalized(n: [f64; 3], h: usize, w: usize) -> Self {
        let (sx, sy) = half_extent(h, w);
        Self::new(n[0], n[1] * sx, n[2] * sy)
    }
}

fn half_extent(h: usize, w: usize) -> (f64, f64) {
    assert!(h >= 2 && w >= 2, "rigid warps need images of at least 2x2, got {h}x{w}");
    ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
}

/// Parameters of the transform that undoes `alpha`.
pub fn invert_params(alpha: &RigidParams) -> RigidParams {
    let (s, c) = alpha.theta.sin_cos();
    // -R(-theta) t
    let tx = -(c * alpha.tx + s * alpha.ty);
    let ty = -(-s * alpha.tx + c * alpha.ty);
    RigidParams::new(-alpha.theta, tx, ty)
}

/// 2x3 matrix of the content transform in normalized coordinates.
pub fn rigid_matrix(alpha: &RigidParams, image_size: (usize, usize)) -> [[f64; 3]; 2] {
    let (h, w) = image_size;
    let (sx, sy) = half_extent(h, w);
    let (s, c) = alpha.theta.sin_cos();
    [[c, -s * sy / sx, alpha.tx / sx], [s * sx / sy, c, alpha.ty / sy]]
}

/// Composition `a ∘ b` of two 2x3 affine matrices.
pub fn compose(a: &[[f64; 3]; 2], b: &[[f64; 3]; 2]) -> [[f64; 3]; 2] {
    let mut out = [[0.0; 3]; 2];
    for r in 0..2 {
        for col in 0..3 {
            out[r][col] = a[r][0] * b[0][col] + a[r][1] * b[1][col];
        }
        out[r][2] += a[r][2];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpDirection {
    /// Apply the transform to the content.
    Forward,
    /// Undo it.
    Inverse,
}

/// Source coordinate for output pixel `(x, y)` and its derivatives
/// w.r.t. `(theta, tx_n, ty_n)`.
struct Sampler<T> {
    cx: T,
    cy: T,
    half_w: T,
    half_h: T,
    cos: T,
    sin: T,
    tx: T,
    ty: T,
    dir: WarpDirection,
}

impl<T: Real> Sampler<T> {
    fn new(h: usize, w: usize, alpha: [T; 3], dir: WarpDirection) -> Self {
        let half_w = T::from_usize(w - 1).unwrap() / T::lit(2.0);
        let half_h = T::from_usize(h - 1).unwrap() / T::lit(2.0);
        Self {
            cx: half_w,
            cy: half_h,
            half_w,
            half_h,
            cos: alpha[0].cos(),
            sin: alpha[0].sin(),
            tx: alpha[1] * half_w,
            ty: alpha[2] * half_h,
            dir,
        }
    }

    fn coord(&self, x: usize, y: usize) -> (T, T) {
        let px = T::from_usize(x).unwrap();
        let py = T::from_usize(y).unwrap();
        match self.dir {
            WarpDirection::Forward => {
                let ux = px - self.cx - self.tx;
                let uy = py - self.cy - self.ty;
                (self.cos * ux + self.sin * uy + self.cx, -self.sin * ux + self.cos * uy + self.cy)
            }
            WarpDirection::Inverse => {
                let vx = px - self.cx;
                let vy = py - self.cy;
                (self.cos * vx - self.sin * vy + self.cx + self.tx, self.sin * vx + self.cos * vy + self.cy + self.ty)
            }
        }
    }

    /// `[d(sx, sy)/d theta, d/d tx_n, d/d ty_n]`.
    fn jacobian(&self, x: usize, y: usize) -> [(T, T); 3] {
        let px = T::from_usize(x).unwrap();
        let py = T::from_usize(y).unwrap();
        let (c, s) = (self.cos, self.sin);
        match self.dir {
            WarpDirection::Forward => {
                let ux = px - self.cx - self.tx;
                let uy = py - self.cy - self.ty;
                [
                    (-s * ux + c * uy, -c * ux - s * uy),
                    (-c * self.half_w, s * self.half_w),
                    (-s * self.half_h, -c * self.half_h),
                ]
            }
            WarpDirection::Inverse => {
                let vx = px - self.cx;
                let vy = py - self.cy;
                [(-s * vx - c * vy, c * vx - s * vy), (self.half_w, T::zero()), (T::zero(), self.half_h)]
            }
        }
    }
}

/// Bilinear corner indices and weights; out-of-bounds corners get `None`.
fn corners<T: Real>(sx: T, sy: T, h: usize, w: usize) -> ([Option<usize>; 4], T, T) {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let x0 = x0.to_i64().unwrap_or(i64::MIN / 2);
    let y0 = y0.to_i64().unwrap_or(i64::MIN / 2);
    let idx = |yy: i64, xx: i64| {
        (yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w).then(|| yy as usize * w + xx as usize)
    };
    ([idx(y0, x0), idx(y0, x0 + 1), idx(y0 + 1, x0), idx(y0 + 1, x0 + 1)], fx, fy)
}

fn warp_plane<T: Real>(src: &[T], h: usize, w: usize, alpha: [T; 3], dir: WarpDirection, out: &mut [T]) {
    let smp = Sampler::new(h, w, alpha, dir);
    let pick = |i: Option<usize>| i.map_or(T::zero(), |i| src[i]);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = smp.coord(x, y);
            let ([a, b, c, d], fx, fy) = corners(sx, sy, h, w);
            let one = T::one();
            out[y * w + x] = (one - fy) * ((one - fx) * pick(a) + fx * pick(b)) + fy * ((one - fx) * pick(c) + fx * pick(d));
        }
    }
}

/// Accumulates gradients of one plane into `d_src` and returns `d alpha`.
fn warp_plane_backward<T: Real>(
    src: &[T],
    h: usize,
    w: usize,
    alpha: [T; 3],
    dir: WarpDirection,
    grad: &[T],
    mut d_src: Option<&mut [T]>,
    want_alpha: bool,
) -> [T; 3] {
    let smp = Sampler::new(h, w, alpha, dir);
    let pick = |i: Option<usize>| i.map_or(T::zero(), |i| src[i]);
    let one = T::one();
    let mut da = [T::zero(); 3];
    for y in 0..h {
        for x in 0..w {
            let g = grad[y * w + x];
            if g == T::zero() {
                continue;
            }
            let (sx, sy) = smp.coord(x, y);
            let (idx, fx, fy) = corners(sx, sy, h, w);
            if let Some(ds) = d_src.as_deref_mut() {
                let weights = [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy];
                for (i, wgt) in idx.iter().zip(weights) {
                    if let Some(i) = i {
                        ds[*i] += g * wgt;
                    }
                }
            }
            if want_alpha {
                let [a, b, c, d] = idx.map(pick);
                let dv_dsx = (one - fy) * (b - a) + fy * (d - c);
                let dv_dsy = (one - fx) * (c - a) + fx * (d - b);
                for (k, (jx, jy)) in smp.jacobian(x, y).into_iter().enumerate() {
                    da[k] += g * (dv_dsx * jx + dv_dsy * jy);
                }
            }
        }
    }
    da
}

/// Warps an `[H, W]` image by `alpha` (pixel units).
pub fn apply_rigid<T: Real>(image: &Tensor<T>, alpha: &RigidParams) -> Tensor<T> {
    warp_image(image, alpha, WarpDirection::Forward)
}

/// Warps an `[H, W]` image in the given direction.
pub fn warp_image<T: Real>(image: &Tensor<T>, alpha: &RigidParams, dir: WarpDirection) -> Tensor<T> {
    assert_eq!(image.ndim(), 2, "apply_rigid expects [H, W], got {:?}", image.shape());
    let (h, w) = (image.dim(0), image.dim(1));
    let a = alpha.to_normalized(h, w).map(T::lit);
    let mut out = vec![T::zero(); h * w];
    warp_plane(image.data(), h, w, a, dir, &mut out);
    Tensor::from_vec(vec![h, w], out)
}

/// Differentiable warp of `images [N, H, W]` by normalized `alpha [N, 3]`.
pub fn rigid_warp<'g, T: Real>(images: Var<'g, T>, alpha: Var<'g, T>, dir: WarpDirection) -> Var<'g, T> {
    let shape = images.shape();
    assert_eq!(shape.len(), 3, "rigid_warp expects [N, H, W], got {shape:?}");
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    assert_eq!(alpha.shape(), vec![n, 3], "rigid_warp alpha must be [N, 3]");
    let img = images.value();
    let al = alpha.value();
    let plane = h * w;
    let mut out = vec![T::zero(); n * plane];
    for b in 0..n {
        let a = [al.data()[3 * b], al.data()[3 * b + 1], al.data()[3 * b + 2]];
        warp_plane(&img.data()[b * plane..(b + 1) * plane], h, w, a, dir, &mut out[b * plane..(b + 1) * plane]);
    }
    images.graph().op(Tensor::from_vec(shape.clone(), out), &[images, alpha], move |c| {
        let (img, al) = (c.input(0), c.input(1));
        let mut d_img = c.needs(0).then(|| vec![T::zero(); n * plane]);
        let mut d_al = vec![T::zero(); n * 3];
        for b in 0..n {
            let a = [al.data()[3 * b], al.data()[3 * b + 1], al.data()[3 * b + 2]];
            let sink = d_img.as_mut().map(|d| &mut d[b * plane..(b + 1) * plane]);
            let da = warp_plane_backward(
                &img.data()[b * plane..(b + 1) * plane],
                h,
                w,
                a,
                dir,
                &c.grad.data()[b * plane..(b + 1) * plane],
                sink,
                c.needs(1),
            );
            d_al[3 * b..3 * b + 3].copy_from_slice(&da);
        }
        vec![d_img.map(|d| Tensor::from_vec(shape.clone(), d)), c.needs(1).then(|| Tensor::from_vec(vec![n, 3], d_al))]
    })
}
