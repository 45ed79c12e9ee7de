//! Hybrid segmentation network: a five-block 3D encoder over the slab, a
//! fusion step at the bridge and a four-block 2D decoder that labels the
//! center slice.
//!
//! Trainable parameter count for base width `b`, input channels `c_in`
//! (2 for `image_l1`, else 1) and bridge width `C = 16 b`:
//!
//! * encoder: `27 (c_in b + b^2) + sum_{k=2..5} 27 (c_{k-1} c_k + c_k^2) + 4 sum_k c_k`
//!   with `c_k = b 2^(k-1)` (convolutions have no bias; each block has two
//!   batch norms with a scale and a shift per channel);
//! * decoder block with input `u`, skip `s`: `9 (u + s) s + 9 s^2 + 4 s`;
//! * head: `b + 1`;
//! * fusion: `feature_l1` and `feature_concat` add `2 C^2 + C`; `sea` adds
//!   `2 (C d + d) + 2 (C C/2 + C/2) + C^2 + C`; `sea_self_only` adds
//!   `2 (C d + d) + (C C/2 + C/2) + C C/2 + C`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sean_tensor::{Graph, ParamStore, Real, Tensor, Var};

use crate::attention::{AttentionConfig, SymmetryAttention};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Conv, Init, Mode};

pub const ENCODER_BLOCKS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    None,
    ImageL1,
    FeatureL1,
    FeatureConcat,
    Sea,
    SeaSelfOnly,
}

impl FusionMode {
    pub const ALL: [FusionMode; 6] = [
        FusionMode::None,
        FusionMode::ImageL1,
        FusionMode::FeatureL1,
        FusionMode::FeatureConcat,
        FusionMode::Sea,
        FusionMode::SeaSelfOnly,
    ];

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::ImageL1 => "im-l1",
            FusionMode::FeatureL1 => "ft-l1",
            FusionMode::FeatureConcat => "ft-cc",
            FusionMode::Sea => "sea",
            FusionMode::SeaSelfOnly => "sea-self",
        }
    }

    pub fn input_channels(self) -> usize {
        if self == FusionMode::ImageL1 {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL.into_iter().find(|m| m.cli_name() == s).ok_or_else(|| {
            let names: Vec<_> = FusionMode::ALL.iter().map(|m| m.cli_name()).collect();
            Error::Config(format!("unknown fusion mode {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub base_width: usize,
    pub fusion: FusionMode,
    /// Slab radius: the model sees `2T + 1` slices.
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { base_width: 16, fusion: FusionMode::Sea, t: 1, seed: 0 }
    }
}

/// Everything needed to rebuild a model; stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegArchitecture {
    pub model: ModelConfig,
    pub attention: AttentionConfig,
}

impl SegArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.model.base_width == 0 {
            return Err(Error::Config("model.base_width must be at least 1".into()));
        }
        if matches!(self.model.fusion, FusionMode::Sea | FusionMode::SeaSelfOnly) {
            self.attention.validate()?;
            if self.attention.t != self.model.t {
                return Err(Error::Config(format!(
                    "attention.T ({}) must equal model.T ({})",
                    self.attention.t, self.model.t
                )));
            }
        }
        Ok(())
    }

    pub fn bridge_channels(&self) -> usize {
        self.model.base_width << (ENCODER_BLOCKS - 1)
    }
}

#[derive(Clone, Debug)]
struct ConvBlock {
    convs: [(Conv, BatchNorm); 2],
}

impl ConvBlock {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, kernel: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mk = |store: &mut ParamStore<T>, i: usize, cin: usize, rng: &mut ChaCha8Rng| {
            (
                Conv::new(store, &format!("{name}.conv{i}"), cin, c_out, kernel, false, Init::Kaiming, rng),
                BatchNorm::new(store, &format!("{name}.bn{i}"), c_out),
            )
        };
        let a = mk(store, 1, c_in, rng);
        let b = mk(store, 2, c_out, rng);
        Self { convs: [a, b] }
    }

    fn forward<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>, mut x: Var<'g, T>, mode: Mode) -> Var<'g, T> {
        for (conv, bn) in &self.convs {
            x = bn.forward(g, store, conv.forward(g, store, x), mode).relu();
        }
        x
    }
}

#[derive(Clone, Debug)]
enum Fusion {
    Center,
    Mix(Conv),
    Attention(SymmetryAttention),
}

/// Bridge features and skips produced by the encoder.
pub struct Encoded<'g, T: Real> {
    /// `[N, C, 2T+1, H/16, W/16]`
    pub bridge: Var<'g, T>,
    /// Center-depth slices of blocks 1..=4, `[N, c_k, H_k, W_k]`, shallow first.
    pub skips: Vec<Var<'g, T>>,
}

#[derive(Clone, Debug)]
pub struct SegModel<T: Real> {
    pub arch: SegArchitecture,
    pub params: ParamStore<T>,
    encoder: Vec<ConvBlock>,
    fusion: Fusion,
    decoder: Vec<ConvBlock>,
    head: Conv,
}

impl<T: Real> SegModel<T> {
    pub fn new(arch: SegArchitecture) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(arch.model.seed);
        let mut store = ParamStore::new();
        let b = arch.model.base_width;
        let widths: Vec<usize> = (0..ENCODER_BLOCKS).map(|k| b << k).collect();
        let mut encoder = Vec::with_capacity(ENCODER_BLOCKS);
        let mut c_in = arch.model.fusion.input_channels();
        for (k, &w) in widths.iter().enumerate() {
            encoder.push(ConvBlock::new(&mut store, &format!("enc{}", k + 1), c_in, w, &[3, 3, 3], &mut rng));
            c_in = w;
        }
        let c = arch.bridge_channels();
        let fusion = match arch.model.fusion {
            FusionMode::None | FusionMode::ImageL1 => Fusion::Center,
            FusionMode::FeatureL1 | FusionMode::FeatureConcat => {
                Fusion::Mix(Conv::new(&mut store, "fusion.mix", 2 * c, c, &[1, 1], true, Init::Kaiming, &mut rng))
            }
            FusionMode::Sea | FusionMode::SeaSelfOnly => Fusion::Attention(SymmetryAttention::new(
                &mut store,
                "fusion.sea",
                c,
                arch.attention,
                arch.model.fusion == FusionMode::Sea,
                &mut rng,
            )?),
        };
        let mut decoder = Vec::with_capacity(ENCODER_BLOCKS - 1);
        let mut up = c;
        for k in (0..ENCODER_BLOCKS - 1).rev() {
            let skip = widths[k];
            decoder.push(ConvBlock::new(&mut store, &format!("dec{}", k + 1), up + skip, skip, &[3, 3], &mut rng));
            up = skip;
        }
        let head = Conv::new(&mut store, "head", b, 1, &[1, 1], true, Init::Kaiming, &mut rng);
        Ok(Self { arch, params: store, encoder, fusion, decoder, head })
    }

    pub fn fusion(&self) -> FusionMode {
        self.arch.model.fusion
    }

    pub fn slab_depth(&self) -> usize {
        2 * self.arch.model.t + 1
    }

    pub fn num_trainable(&self) -> usize {
        self.params.entries().iter().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    /// Stacks `[2T+1, H, W]` slabs into the network input
    /// `[N, c_in, 2T+1, H, W]`, appending `|A - hflip(A)|` for `image_l1`.
    pub fn input_tensor(&self, slabs: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = slabs.first().ok_or_else(|| Error::Shape("no slabs given".into()))?;
        let (d, h, w) = (first.dim(0), first.dim(1), first.dim(2));
        if d != self.slab_depth() {
            return Err(Error::Shape(format!("model expects slabs of depth {}, got {d}", self.slab_depth())));
        }
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Shape(format!("slice size {h}x{w} must be divisible by 16")));
        }
        let c_in = self.fusion().input_channels();
        let mut data = Vec::with_capacity(slabs.len() * c_in * d * h * w);
        for s in slabs {
            if s.shape() != first.shape() {
                return Err(Error::Shape(format!("slab shape {:?} differs from {:?}", s.shape(), first.shape())));
            }
            data.extend_from_slice(s.data());
            if c_in == 2 {
                data.extend(s.sub(&s.flip(2)).data().iter().map(|v| v.abs()));
            }
        }
        Ok(Tensor::from_vec(vec![slabs.len(), c_in, d, h, w], data))
    }

    pub fn encode<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>, mode: Mode) -> Encoded<'g, T> {
        let t = x.shape()[2] / 2;
        let mut skips = Vec::with_capacity(ENCODER_BLOCKS - 1);
        let mut h = x;
        for (k, block) in self.encoder.iter().enumerate() {
            h = block.forward(g, &self.params, h, mode);
            if k + 1 < ENCODER_BLOCKS {
                let s = h.shape();
                skips.push(h.narrow(2, t, 1).reshape(vec![s[0], s[1], s[3], s[4]]));
                h = h.max_pool2x2();
            }
        }
        Encoded { bridge: h, skips }
    }

    /// Fused center features `[N, C, H/16, W/16]`.
    pub fn fuse<'g>(&self, g: &'g Graph<T>, bridge: Var<'g, T>, flipped_bridge: Option<Var<'g, T>>) -> Result<Var<'g, T>> {
        let center = |b: Var<'g, T>| {
            let s = b.shape();
            b.narrow(2, s[2] / 2, 1).reshape(vec![s[0], s[1], s[3], s[4]])
        };
        match (&self.fusion, self.fusion()) {
            (Fusion::Center, _) => Ok(center(bridge)),
            (Fusion::Mix(conv), FusionMode::FeatureL1) => {
                let c = center(bridge);
                let diff = c.sub(c.flip(3)).abs();
                Ok(conv.forward(g, &self.params, Var::concat(&[c, diff], 1)))
            }
            (Fusion::Mix(conv), _) => {
                let fb = flipped_bridge
                    .ok_or_else(|| Error::Shape("feature_concat fusion needs features of the flipped slab".into()))?;
                // Mirror the flipped branch back so both halves share a frame.
                let other = center(fb).flip(3);
                Ok(conv.forward(g, &self.params, Var::concat(&[center(bridge), other], 1)))
            }
            (Fusion::Attention(att), _) => att.forward(g, &self.params, bridge),
        }
    }

    /// Logits `[N, 1, H, W]` for the center slices of `x [N, c_in, 2T+1, H, W]`.
    pub fn forward<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>, mode: Mode) -> Result<Var<'g, T>> {
        let s = x.shape();
        if s.len() != 5 || s[1] != self.fusion().input_channels() || s[2] != self.slab_depth() {
            return Err(Error::Shape(format!(
                "model expects input [N, {}, {}, H, W], got {s:?}",
                self.fusion().input_channels(),
                self.slab_depth()
            )));
        }
        if s[3] % 16 != 0 || s[4] % 16 != 0 {
            return Err(Error::Shape(format!("slice size {}x{} must be divisible by 16", s[3], s[4])));
        }
        let n = s[0];
        let (bridge, flipped, skips) = if self.fusion() == FusionMode::FeatureConcat {
            // One pass over [x; hflip(x)] so both halves share batch statistics.
            let both = Var::concat(&[x, x.flip(4)], 0);
            let enc = self.encode(g, both, mode);
            let skips = enc.skips.into_iter().map(|k| k.narrow(0, 0, n)).collect();
            (enc.bridge.narrow(0, 0, n), Some(enc.bridge.narrow(0, n, n)), skips)
        } else {
            let enc = self.encode(g, x, mode);
            (enc.bridge, None, enc.skips)
        };
        let mut h = self.fuse(g, bridge, flipped)?;
        for (block, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let ss = skip.shape();
            let up = h.resize_bilinear(ss[2], ss[3]);
            h = block.forward(g, &self.params, Var::concat(&[up, *skip], 1), mode);
        }
        Ok(self.head.forward(g, &self.params, h))
    }

    /// Sigmoid probabilities `[N, H, W]` in evaluation mode.
    pub fn predict(&self, slabs: &[Tensor<T>]) -> Result<Tensor<T>> {
        let x = self.input_tensor(slabs)?;
        let g = Graph::new();
        let logits = self.forward(&g, g.constant(x), Mode::Eval)?;
        let v = logits.value();
        let (n, h, w) = (v.dim(0), v.dim(2), v.dim(3));
        Ok(v.map(sean_tensor::stable_sigmoid).reshape(vec![n, h, w]))
    }

    /// Copies every tensor whose name and shape also exist in `other`.
    /// Returns the number of tensors copied.
    pub fn transplant_from(&mut self, other: &SegModel<T>) -> usize {
        let mut copied = 0;
        for e in other.params.entries() {
            if let Some(id) = self.params.id_of(&e.name) {
                if self.params.get(id).shape() == e.value.shape() {
                    self.params.set(id, e.value.clone());
                    copied += 1;
                }
            }
        }
        copied
    }
}

impl SegModel<f32> {
    pub const KIND: &'static str = "seg";

    pub fn save(&self, path: &Path, extra: Option<&serde_json::Value>) -> Result<()> {
        let mut config = serde_json::to_value(&self.arch).expect("architecture serializes");
        if let Some(x) = extra {
            config["train"] = x.clone();
        }
        checkpoint::save(path, Self::KIND, &config, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = checkpoint::load(path)?;
        ck.expect_kind(Self::KIND)?;
        let mut cfg = ck.config.clone();
        if let Some(obj) = cfg.as_object_mut() {
            obj.remove("train");
        }
        let arch: SegArchitecture = serde_json::from_value(cfg)
            .map_err(|e| Error::Checkpoint(format!("{}: bad model config: {e}", path.display())))?;
        let mut model = Self::new(arch)?;
        ck.restore_into(&mut model.params)?;
        Ok(model)
    }
}
