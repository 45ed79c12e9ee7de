//! Symmetry-enhanced attention over bridge features.
//!
//! The center feature map is cut into a `P x Q` grid of blocks. Inside each
//! block every position attends, per neighbouring slice `t`, to the same
//! block of slice `t` (self branch) and to the same block of the mirrored
//! slice `t` (symmetry branch). Each `(branch, t)` pair gets its own softmax
//! scaled by `1 / sqrt(d)`. The two branch outputs are concatenated, passed
//! through a zero-initialized 1x1 projection and added to the center map.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sean_tensor::{Graph, ParamStore, Real, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::{Conv, Init};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionGrid {
    /// Vertical partitions.
    pub p: usize,
    /// Horizontal partitions.
    pub q: usize,
}

impl PartitionGrid {
    pub fn new(p: usize, q: usize) -> Self {
        Self { p, q }
    }

    pub fn check(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.p == 0 || self.q == 0 || h % self.p != 0 || w % self.q != 0 {
            return Err(Error::Shape(format!("{h}x{w} features cannot be split into {}x{} partitions", self.p, self.q)));
        }
        Ok((h / self.p, w / self.q))
    }
}

/// Splits `[C, H, W]` into `P * Q` blocks of `[C, H/P, W/Q]`, row-major over `(j, k)`.
pub fn partition<T: Copy>(x: &Tensor<T>, grid: PartitionGrid) -> Result<Vec<Tensor<T>>> {
    let (h, w) = (x.dim(1), x.dim(2));
    let (bh, bw) = grid.check(h, w)?;
    let mut out = Vec::with_capacity(grid.p * grid.q);
    for j in 0..grid.p {
        for k in 0..grid.q {
            out.push(x.narrow(1, j * bh, bh).narrow(2, k * bw, bw));
        }
    }
    Ok(out)
}

/// Inverse of [`partition`].
pub fn unpartition<T: Copy>(blocks: &[Tensor<T>], grid: PartitionGrid) -> Result<Tensor<T>> {
    if blocks.len() != grid.p * grid.q {
        return Err(Error::Shape(format!("expected {} blocks, got {}", grid.p * grid.q, blocks.len())));
    }
    let rows: Vec<Tensor<T>> = blocks
        .chunks(grid.q)
        .map(|row| Tensor::concat(&row.iter().collect::<Vec<_>>(), 2))
        .collect();
    Ok(Tensor::concat(&rows.iter().collect::<Vec<_>>(), 1))
}

/// Mirrors the last (width) axis.
pub fn hflip_features<T: Copy>(x: &Tensor<T>) -> Tensor<T> {
    x.flip(x.ndim() - 1)
}

/// `softmax_n(q[:, m] . k[:, n] / sqrt(d))` for `queries, keys [d, N']`.
pub fn attention_similarity<T: Real>(queries: &Tensor<T>, keys: &Tensor<T>) -> Tensor<T> {
    assert_eq!(queries.shape(), keys.shape(), "queries and keys must agree");
    let d = queries.dim(0);
    let qt = queries.permute(&[1, 0]);
    qt.matmul(keys).scale(T::one() / T::from_usize(d).unwrap().sqrt()).softmax_last()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    /// Slab radius; the stack holds `2T + 1` slices.
    #[serde(rename = "T")]
    pub t: usize,
    /// `d = round(C * d_ratio)`, at least 1.
    pub d_ratio: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { p: 2, q: 2, t: 1, d_ratio: 0.5 }
    }
}

impl AttentionConfig {
    pub fn partition(&self) -> PartitionGrid {
        PartitionGrid::new(self.p, self.q)
    }

    pub fn reduced_channels(&self, c: usize) -> usize {
        ((c as f64 * self.d_ratio).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::Config("attention.P and attention.Q must be at least 1".into()));
        }
        if !(self.d_ratio > 0.0 && self.d_ratio <= 1.0) {
            return Err(Error::Config(format!("attention.d_ratio {} must lie in (0, 1]", self.d_ratio)));
        }
        Ok(())
    }
}

/// Learned state of one attention block. Weights live in the caller's store.
#[derive(Clone, Debug)]
pub struct SymmetryAttention {
    pub channels: usize,
    pub d: usize,
    pub cfg: AttentionConfig,
    pub theta: Conv,
    pub phi: Conv,
    pub g: Conv,
    /// `None` in the self-only ablation.
    pub h: Option<Conv>,
    pub out: Conv,
}

impl SymmetryAttention {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        cfg: AttentionConfig,
        with_symmetry: bool,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if channels < 2 || channels % 2 != 0 {
            return Err(Error::Config(format!("attention needs an even channel count, got {channels}")));
        }
        let d = cfg.reduced_channels(channels);
        let half = channels / 2;
        let k = [1, 1, 1];
        let theta = Conv::new(store, &format!("{name}.theta"), channels, d, &k, true, Init::Kaiming, rng);
        let phi = Conv::new(store, &format!("{name}.phi"), channels, d, &k, true, Init::Kaiming, rng);
        let g = Conv::new(store, &format!("{name}.g"), channels, half, &k, true, Init::Kaiming, rng);
        let h = with_symmetry.then(|| Conv::new(store, &format!("{name}.h"), channels, half, &k, true, Init::Kaiming, rng));
        let mixed = if with_symmetry { channels } else { half };
        let out = Conv::new(store, &format!("{name}.out"), mixed, channels, &[1, 1], true, Init::Zero, rng);
        Ok(Self { channels, d, cfg, theta, phi, g, h, out })
    }

    pub fn with_symmetry(&self) -> bool {
        self.h.is_some()
    }

    /// Branch outputs before the output projection, each `[N, C/2, H, W]`.
    /// `stack` is `[N, C, 2T+1, H, W]`.
    pub fn branches<'g, T: Real>(
        &self,
        g: &'g Graph<T>,
        store: &ParamStore<T>,
        stack: Var<'g, T>,
    ) -> Result<(Var<'g, T>, Option<Var<'g, T>>)> {
        let s = stack.shape();
        if s.len() != 5 {
            return Err(Error::Shape(format!("feature stack must be [N, C, D, H, W], got {s:?}")));
        }
        let (n, c, depth, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        if c != self.channels {
            return Err(Error::Shape(format!("attention built for {} channels, stack has {c}", self.channels)));
        }
        if depth % 2 == 0 {
            return Err(Error::Shape(format!("feature stack depth {depth} must be odd")));
        }
        let grid = self.cfg.partition();
        let (bh, bw) = grid.check(h, w)?;
        let geo = Geometry { n, depth, p: grid.p, q: grid.q, bh, bw };
        let center = stack.narrow(2, depth / 2, 1);
        let queries = geo.queries(self.theta.forward(g, store, center));
        let scale = 1.0 / (self.d as f64).sqrt();

        let keys = self.phi.forward(g, store, stack);
        let values = self.g.forward(g, store, stack);
        let own = geo.attend(queries, geo.keys(keys), geo.values(values), scale);

        let mirrored = match &self.h {
            Some(hp) => {
                // 1x1 projections commute with the flip, so the mirrored map is
                // projected once and flipped afterwards.
                let keys = keys.flip(4);
                let values = hp.forward(g, store, stack).flip(4);
                Some(geo.attend(queries, geo.keys(keys), geo.values(values), scale))
            }
            None => None,
        };
        Ok((own, mirrored))
    }

    /// Enhanced center features `[N, C, H, W]`.
    pub fn forward<'g, T: Real>(&self, g: &'g Graph<T>, store: &ParamStore<T>, stack: Var<'g, T>) -> Result<Var<'g, T>> {
        let (own, mirrored) = self.branches(g, store, stack)?;
        let mixed = match mirrored {
            Some(m) => Var::concat(&[own, m], 1),
            None => own,
        };
        let s = stack.shape();
        let center = stack.narrow(2, s[2] / 2, 1).reshape(vec![s[0], s[1], s[3], s[4]]);
        Ok(center.add(self.out.forward(g, store, mixed)))
    }
}

/// Index bookkeeping for the block-wise attention.
struct Geometry {
    n: usize,
    depth: usize,
    p: usize,
    q: usize,
    bh: usize,
    bw: usize,
}

impl Geometry {
    fn blocks(&self) -> usize {
        self.n * self.p * self.q
    }

    fn block_len(&self) -> usize {
        self.bh * self.bw
    }

    /// `[N, d, 1, H, W]` to `[B, N', d]`.
    fn queries<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let d = x.shape()[1];
        x.reshape(vec![self.n, d, self.p, self.bh, self.q, self.bw])
            .permute(&[0, 2, 4, 3, 5, 1])
            .reshape(vec![self.blocks(), self.block_len(), d])
    }

    /// `[N, d, D, H, W]` to `[B, d, D * N']`.
    fn keys<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let d = x.shape()[1];
        x.reshape(vec![self.n, d, self.depth, self.p, self.bh, self.q, self.bw])
            .permute(&[0, 3, 5, 1, 2, 4, 6])
            .reshape(vec![self.blocks(), d, self.depth * self.block_len()])
    }

    /// `[N, c, D, H, W]` to `[B, D * N', c]`.
    fn values<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let c = x.shape()[1];
        x.reshape(vec![self.n, c, self.depth, self.p, self.bh, self.q, self.bw])
            .permute(&[0, 3, 5, 2, 4, 6, 1])
            .reshape(vec![self.blocks(), self.depth * self.block_len(), c])
    }

    /// Separate softmax per slice, summed over slices, back to `[N, c, H, W]`.
    fn attend<'g, T: Real>(&self, q: Var<'g, T>, k: Var<'g, T>, v: Var<'g, T>, scale: f64) -> Var<'g, T> {
        let (b, m) = (self.blocks(), self.block_len());
        let c = v.shape()[2];
        let logits = q.bmm(k).scale(scale).reshape(vec![b, m, self.depth, m]);
        let sim = logits.softmax_last().reshape(vec![b, m, self.depth * m]);
        sim.bmm(v)
            .reshape(vec![self.n, self.p, self.q, self.bh, self.bw, c])
            .permute(&[0, 5, 1, 3, 2, 4])
            .reshape(vec![self.n, c, self.p * self.bh, self.q * self.bw])
    }
}

/// Runs `module` on a `[2T+1, C, H, W]` feature stack and returns `[C, H, W]`.
pub fn sea_forward<T: Real>(module: &SymmetryAttention, store: &ParamStore<T>, stack: &Tensor<T>) -> Result<Tensor<T>> {
    if stack.ndim() != 4 {
        return Err(Error::Shape(format!("feature stack must be [2T+1, C, H, W], got {:?}", stack.shape())));
    }
    let (d, c, h, w) = (stack.dim(0), stack.dim(1), stack.dim(2), stack.dim(3));
    let g = Graph::new();
    let x = g.constant(stack.permute(&[1, 0, 2, 3]).reshape(vec![1, c, d, h, w]));
    let y = module.forward(&g, store, x)?;
    Ok(y.value().as_ref().clone().reshape(vec![c, h, w]))
}
