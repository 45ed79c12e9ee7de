use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sean_tensor::{kaiming_uniform, Graph, ParamId, ParamStore, Real, Tensor, Var};

use crate::align::rigid::RigidParams;
use crate::align::train::AlignConfig;
use crate::checkpoint;
use crate::error::{Error, Result};

pub const ALIGN_CHANNELS: usize = 32;

/// conv 7x7 (32) - relu - maxpool 2 - conv 5x5 (32) - relu - maxpool 2 - fc 3.
///
/// Outputs `(theta, tx, ty)` of the correcting transform, shifts in
/// normalized units. The final layer starts at zero so an untrained net
/// predicts the identity. Its output is scaled by `1 / sqrt(fan_in)`; with
/// a 32k-wide input an unscaled layer moves by tens of radians per Adam step.
#[derive(Clone, Debug)]
pub struct AlignmentNet<T: Real> {
    pub params: ParamStore<T>,
    pub input_size: usize,
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    fc: (ParamId, ParamId),
}

impl<T: Real> AlignmentNet<T> {
    pub fn new(input_size: usize, seed: u64) -> Result<Self> {
        if input_size < 4 || input_size % 4 != 0 {
            return Err(Error::Config(format!("alignment input_size must be a positive multiple of 4, got {input_size}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = ALIGN_CHANNELS;
        let mut p = ParamStore::new();
        let conv1 = (
            p.add("conv1.weight", kaiming_uniform(vec![c, 1, 7, 7], 49, &mut rng), true),
            p.add("conv1.bias", Tensor::zeros(vec![c]), true),
        );
        let conv2 = (
            p.add("conv2.weight", kaiming_uniform(vec![c, c, 5, 5], c * 25, &mut rng), true),
            p.add("conv2.bias", Tensor::zeros(vec![c]), true),
        );
        let flat = c * (input_size / 4) * (input_size / 4);
        let fc = (p.add("fc.weight", Tensor::zeros(vec![3, flat]), true), p.add("fc.bias", Tensor::zeros(vec![3]), true));
        Ok(Self { params: p, input_size, conv1, conv2, fc })
    }

    /// `x [N, 1, S, S]` to `[N, 3]`.
    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Var<'g, T> {
        let n = x.shape()[0];
        let p = |id| g.param(&self.params, id);
        let h = x.conv2d(p(self.conv1.0), Some(p(self.conv1.1)), [3, 3]).relu().max_pool2x2();
        let h = h.conv2d(p(self.conv2.0), Some(p(self.conv2.1)), [2, 2]).relu().max_pool2x2();
        let fan_in = self.params.get(self.fc.0).dim(1);
        let flat = h.reshape(vec![n, fan_in]);
        flat.linear(p(self.fc.0), p(self.fc.1)).scale(1.0 / (fan_in as f64).sqrt())
    }

    /// Resizes `[H, W]` slices to the net input and stacks them as
    /// `[N, 1, S, S]`. Each slice is shifted so its minimum (air) is zero,
    /// which makes the warp's zero padding look like background.
    pub fn prepare(&self, slices: &[Tensor<T>]) -> Tensor<T> {
        let s = self.input_size;
        let mut data = Vec::with_capacity(slices.len() * s * s);
        for sl in slices {
            let (h, w) = (sl.dim(0), sl.dim(1));
            let floor = sl.data().iter().copied().fold(T::infinity(), T::min);
            let resized = if (h, w) == (s, s) {
                sl.data().to_vec()
            } else {
                sean_tensor::kernels::resize::resize_bilinear(sl.data(), 1, h, w, s, s)
            };
            data.extend(resized.into_iter().map(|v| v - floor));
        }
        Tensor::from_vec(vec![slices.len(), 1, s, s], data)
    }

    /// Per-slice correcting transforms in pixel units of each slice.
    pub fn predict(&self, slices: &[Tensor<T>]) -> Vec<RigidParams> {
        if slices.is_empty() {
            return Vec::new();
        }
        let g = Graph::new();
        let out = self.forward(&g, g.constant(self.prepare(slices)));
        let v = out.value();
        slices
            .iter()
            .enumerate()
            .map(|(i, sl)| {
                let n = [0, 1, 2].map(|k| v.data()[3 * i + k].to_f64_lossy());
                RigidParams::from_normalized(n, sl.dim(0), sl.dim(1))
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.entries().iter().map(|e| e.value.numel()).sum()
    }
}

impl AlignmentNet<f32> {
    pub const KIND: &'static str = "align";

    pub fn save(&self, path: &Path, cfg: &AlignConfig) -> Result<()> {
        let config = serde_json::json!({ "input_size": self.input_size, "align": cfg });
        checkpoint::save(path, Self::KIND, &config, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = checkpoint::load(path)?;
        ck.expect_kind(Self::KIND)?;
        let size = ck.config.get("input_size").and_then(|v| v.as_u64()).ok_or_else(|| {
            Error::Checkpoint(format!("{}: alignment checkpoint lacks input_size", path.display()))
        })?;
        let mut net = Self::new(size as usize, 0)?;
        ck.restore_into(&mut net.params)?;
        Ok(net)
    }
}
