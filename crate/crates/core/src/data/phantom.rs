//! Synthetic bilaterally symmetric head phantoms with a known rigid
//! perturbation and an optional one-sided hypodense lesion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sean_tensor::Tensor;

use crate::align::rigid::{apply_rigid, RigidParams};
use crate::data::volume::{CtVolume, Mask};
use crate::error::{Error, Result};

const AIR: f64 = 0.0;
const SKULL: f64 = 125.0;
const BRAIN: f64 = 70.0;
const VENTRICLE: f64 = 30.0;
const TEXTURE_AMPLITUDE: f64 = 6.0;
/// Width of the soft skull edges in pixels. Smooth edges keep resampling
/// error small when a phantom is warped and warped back.
const EDGE_PX: f64 = 1.5;
const SPACING: [f64; 3] = [5.0, 1.0, 1.0];
const LESION_ATTEMPTS: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    /// (H, W)
    pub image_size: [usize; 2],
    pub num_slices: usize,
    pub rotation_range_deg: [f64; 2],
    /// Horizontal shift interval in pixels.
    pub shift_range_px: [f64; 2],
    /// Vertical shift interval in pixels.
    pub vertical_shift_range_px: [f64; 2],
    pub lesion_probability: f64,
    pub lesion_intensity_delta: f64,
    pub texture_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            image_size: [128, 128],
            num_slices: 16,
            rotation_range_deg: [-15.0, 15.0],
            shift_range_px: [-20.0, 20.0],
            vertical_shift_range_px: [-5.0, 5.0],
            lesion_probability: 0.8,
            lesion_intensity_delta: -10.0,
            texture_seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.image_size;
        if h < 16 || w < 16 {
            return Err(Error::Config(format!("phantom image_size must be at least 16x16, got {h}x{w}")));
        }
        if self.num_slices == 0 {
            return Err(Error::Config("phantom num_slices must be at least 1".into()));
        }
        let interval = |name: &str, r: [f64; 2], bound: f64| {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= -bound && r[1] <= bound) {
                return Err(Error::Config(format!("phantom {name} {r:?} must be an ordered interval within ±{bound}")));
            }
            Ok(())
        };
        interval("rotation_range_deg", self.rotation_range_deg, 45.0)?;
        interval("shift_range_px", self.shift_range_px, w as f64 / 4.0)?;
        interval("vertical_shift_range_px", self.vertical_shift_range_px, h as f64 / 4.0)?;
        if !(0.0..=1.0).contains(&self.lesion_probability) {
            return Err(Error::Config(format!("lesion_probability {} outside [0, 1]", self.lesion_probability)));
        }
        if !self.lesion_intensity_delta.is_finite() {
            return Err(Error::Config("lesion_intensity_delta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomGroundTruth {
    /// Perturbation applied to the canonical phantom.
    pub true_params: RigidParams,
    pub lesion_mask: Mask,
    /// Canonical-frame lesion side, `None` without a lesion.
    pub lesion_side: Option<Side>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Head outline for slice `z`: semi-axes in pixels and the inner skull boundary.
struct Head {
    a: f64,
    b: f64,
    inner: f64,
}

fn head(z: usize, depth: usize, h: usize, w: usize) -> Head {
    let scale = 0.75 + 0.25 * (std::f64::consts::PI * (z as f64 + 0.5) / depth as f64).sin();
    let a = 0.30 * w as f64 * scale;
    let b = 0.38 * h as f64 * scale;
    let thickness = (0.05 * w as f64).max(3.0);
    Head { a, b, inner: 1.0 - thickness / a }
}

/// Soft indicator of `r < r0` with an edge about `EDGE_PX` wide.
fn soft_inside(r: f64, r0: f64, a: f64) -> f64 {
    let width = EDGE_PX / a;
    0.5 * (1.0 - ((r - r0) / (0.5 * width)).tanh())
}

struct Lesion {
    center: [f64; 3],
    radii: [f64; 3],
    side: Side,
}

impl Lesion {
    fn contains(&self, z: usize, y: f64, x: f64) -> bool {
        let d = [z as f64 - self.center[0], y - self.center[1], x - self.center[2]];
        d.iter().zip(self.radii).map(|(v, r)| (v / r).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Draws a lesion fully inside the brain interior and strictly off the midline.
fn sample_lesion(rng: &mut ChaCha8Rng, depth: usize, h: usize, w: usize) -> Result<Lesion> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    for _ in 0..LESION_ATTEMPTS {
        let rx = rng.random_range(0.06..0.12) * w as f64;
        let ry = rng.random_range(0.06..0.12) * h as f64;
        let rz = rng.random_range(0.5..(depth as f64 / 4.0).max(0.6));
        let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
        let z0 = rng.random_range(0.0..depth as f64 - 1.0 + f64::EPSILON);
        let dx = rng.random_range(rx + 1.0..rx + 1.0 + 0.3 * w as f64);
        let x0 = match side {
            Side::Left => cx - dx,
            Side::Right => cx + dx,
        };
        let y0 = cy + rng.random_range(-0.25..0.25) * h as f64;
        let lesion = Lesion { center: [z0, y0, x0], radii: [rz, ry, rx], side };
        if lesion_fits(&lesion, depth, h, w) {
            return Ok(lesion);
        }
    }
    Err(Error::Config(format!(
        "lesion does not fit inside the skull interior of a {depth}x{h}x{w} phantom after {LESION_ATTEMPTS} attempts"
    )))
}

/// Every lesion voxel must sit inside the inner skull boundary (with a
/// margin) on its own side of the midline, and the lesion must cover at
/// least one voxel.
fn lesion_fits(lesion: &Lesion, depth: usize, h: usize, w: usize) -> bool {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut voxels = 0;
    for z in 0..depth {
        let hd = head(z, depth, h, w);
        let margin = 2.0 * EDGE_PX / hd.a;
        for y in 0..h {
            for x in 0..w {
                if !lesion.contains(z, y as f64, x as f64) {
                    continue;
                }
                voxels += 1;
                let (u, v) = ((x as f64 - cx) / hd.a, (y as f64 - cy) / hd.b);
                if (u * u + v * v).sqrt() > hd.inner - margin {
                    return false;
                }
                let on_side = match lesion.side {
                    Side::Left => (x as f64) < cx,
                    Side::Right => (x as f64) > cx,
                };
                if !on_side {
                    return false;
                }
            }
        }
    }
    voxels > 0
}

/// Separable Gaussian blur with edge clamping, in place, along one axis.
fn blur_axis(data: &mut [f64], dims: [usize; 3], axis: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let stride = match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    };
    let n = dims[axis] as isize;
    let src = data.to_vec();
    for (i, out) in data.iter_mut().enumerate() {
        let pos = (i / stride) as isize % n;
        let base = i as isize - pos * stride as isize;
        let mut acc = 0.0;
        for (k, kv) in kernel.iter().enumerate() {
            let p = (pos + k as isize - radius).clamp(0, n - 1);
            acc += kv * src[(base + p * stride as isize) as usize];
        }
        *out = acc / norm;
    }
}

/// Smooth zero-mean texture with unit standard deviation, mirrored so that
/// `f(x) == f(W - 1 - x)` exactly.
fn symmetric_texture(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Vec<f64> {
    let mut t: Vec<f64> = (0..dims.iter().product::<usize>()).map(|_| rng.sample(StandardNormal)).collect();
    let sigma = (dims[2] as f64 / 40.0).max(1.0);
    blur_axis(&mut t, dims, 2, sigma);
    blur_axis(&mut t, dims, 1, sigma);
    blur_axis(&mut t, dims, 0, 0.8);
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let std = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    let w = dims[2];
    let mut out = vec![0.0; t.len()];
    for (row_out, row) in out.chunks_mut(w).zip(t.chunks(w)) {
        for x in 0..w {
            row_out[x] = ((row[x] - mean) + (row[w - 1 - x] - mean)) / (2.0 * std);
        }
    }
    out
}

fn mix_seeds(seed: u64, texture_seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ texture_seed.rotate_left(29) ^ 0xD1B5_4A32_D192_ED03
}

/// Canonical (unperturbed) phantom and its lesion mask.
fn canonical(phantom: &PhantomConfig, rng: &mut ChaCha8Rng, tex_rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Mask, Option<Side>)> {
    let [h, w] = phantom.image_size;
    let depth = phantom.num_slices;
    let dims = [depth, h, w];
    let texture = symmetric_texture(tex_rng, dims);
    let lesion = if rng.random_bool(phantom.lesion_probability) { Some(sample_lesion(rng, depth, h, w)?) } else { None };
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut vox = vec![0.0; depth * h * w];
    let mut mask = Mask::zeros(dims);
    for z in 0..depth {
        let hd = head(z, depth, h, w);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = ((x as f64 - cx) / hd.a, (y as f64 - cy) / hd.b);
                let r = (u * u + v * v).sqrt();
                let outer = soft_inside(r, 1.0, hd.a);
                let inner = soft_inside(r, hd.inner, hd.a);
                // Ventricle pair, mirrored about the midline.
                let (vu, vv) = ((u.abs() - 0.22) / 0.10, (v + 0.10) / 0.22);
                let vent = soft_inside((vu * vu + vv * vv).sqrt(), 1.0, hd.a * 0.10);
                let i = (z * h + y) * w + x;
                let mut brain = BRAIN + TEXTURE_AMPLITUDE * texture[i];
                brain = brain * (1.0 - vent) + VENTRICLE * vent;
                if let Some(l) = &lesion {
                    if l.contains(z, y as f64, x as f64) {
                        brain += phantom.lesion_intensity_delta;
                        mask.set(z, y, x, true);
                    }
                }
                vox[i] = AIR * (1.0 - outer) + outer * (SKULL * (1.0 - inner) + inner * brain);
            }
        }
    }
    Ok((vox, mask, lesion.map(|l| l.side)))
}

/// Builds a phantom, perturbs every slice by one sampled rigid transform
/// and returns it with the ground truth. Deterministic in `(phantom, seed)`.
pub fn generate_phantom(phantom: &PhantomConfig, seed: u64) -> Result<(CtVolume, PhantomGroundTruth)> {
    phantom.validate()?;
    let [h, w] = phantom.image_size;
    let depth = phantom.num_slices;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tex_rng = ChaCha8Rng::seed_from_u64(mix_seeds(seed, phantom.texture_seed));
    let theta = rng.random_range(phantom.rotation_range_deg[0]..=phantom.rotation_range_deg[1]);
    let tx = rng.random_range(phantom.shift_range_px[0]..=phantom.shift_range_px[1]);
    let ty = rng.random_range(phantom.vertical_shift_range_px[0]..=phantom.vertical_shift_range_px[1]);
    let params = RigidParams::from_degrees(theta, tx, ty);
    let (vox, mask, side) = canonical(phantom, &mut rng, &mut tex_rng)?;

    let plane = h * w;
    let mut out = Vec::with_capacity(vox.len());
    let mut lesion_slices = Vec::with_capacity(depth);
    for z in 0..depth {
        let slice = Tensor::from_vec(vec![h, w], vox[z * plane..(z + 1) * plane].to_vec());
        out.extend(apply_rigid(&slice, &params).data().iter().map(|&v| v as f32));
        let m = mask.slice(z).to_tensor().reshape(vec![h, w]).cast::<f64>();
        let warped = apply_rigid(&m, &params).map(|v| v as f32);
        lesion_slices.push(Mask::threshold(&warped, [1, h, w], 0.5)?);
    }
    let id = format!("phantom_{seed:06}");
    let vol = CtVolume::new(id, Tensor::from_vec(vec![depth, h, w], out), SPACING)?;
    let truth = PhantomGroundTruth { true_params: params, lesion_mask: Mask::stack(&lesion_slices)?, lesion_side: side };
    Ok((vol, truth))
}
