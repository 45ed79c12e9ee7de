use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sean_tensor::{Adam, Graph, Tensor};

use crate::align::infer::tissue_slices;
use crate::align::loss::alignment_loss_vars;
use crate::align::net::AlignmentNet;
use crate::data::{preprocess, CtVolume};
use crate::error::{Error, Result};
use crate::train::schedule::poly_lr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub epochs: usize,
    pub lr: f64,
    pub betas: [f64; 2],
    pub poly_power: f64,
    pub batch_size: usize,
    pub input_size: usize,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_every: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            betas: [0.9, 0.99],
            poly_power: 0.9,
            batch_size: 8,
            input_size: 128,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("align.epochs and align.batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.poly_power > 0.0) {
            return Err(Error::Config("align.lr and align.poly_power must be positive".into()));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config(format!("align.betas {:?} must lie in [0, 1)", self.betas)));
        }
        if self.input_size < 4 || self.input_size % 4 != 0 {
            return Err(Error::Config(format!("align.input_size {} must be a positive multiple of 4", self.input_size)));
        }
        Ok(())
    }
}

/// Preprocessed tissue slices, grouped by volume.
#[derive(Clone, Debug, Default)]
pub struct AlignDataset {
    pub volumes: Vec<Vec<Tensor<f32>>>,
}

impl AlignDataset {
    /// Standardizes each raw volume and keeps its tissue-bearing slices.
    pub fn from_raw(volumes: &[CtVolume]) -> Result<Self> {
        let mut out = Vec::with_capacity(volumes.len());
        for v in volumes {
            let keep = tissue_slices(v);
            if keep.is_empty() {
                continue;
            }
            let p = preprocess(v)?;
            out.push(keep.into_iter().map(|i| p.slice(i)).collect());
        }
        if out.is_empty() {
            return Err(Error::Degenerate("alignment dataset has no tissue slices".into()));
        }
        Ok(Self { volumes: out })
    }

    pub fn num_slices(&self) -> usize {
        self.volumes.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignCurveRow {
    pub epoch: usize,
    pub loss: f64,
    pub sym_term: f64,
    pub rest_term: f64,
}

pub fn curve_csv(rows: &[AlignCurveRow]) -> String {
    let mut s = String::from("epoch,loss,sym_term,rest_term\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.sym_term, r.rest_term));
    }
    s
}

pub struct AlignTraining {
    pub net: AlignmentNet<f32>,
    pub curve: Vec<AlignCurveRow>,
}

/// Minimizes the alignment loss with Adam under a poly schedule. Each epoch
/// draws one random tissue slice per volume.
pub fn train_alignment(data: &AlignDataset, cfg: &AlignConfig, checkpoint_dir: Option<&Path>) -> Result<AlignTraining> {
    cfg.validate()?;
    let mut net = AlignmentNet::<f32>::new(cfg.input_size, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA11A);
    let mut adam = Adam::new(cfg.betas[0], cfg.betas[1]);
    let n = data.volumes.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut iter = 0;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let picks: Vec<&Tensor<f32>> = order
            .iter()
            .map(|&v| {
                let slices = &data.volumes[v];
                &slices[rng.random_range(0..slices.len())]
            })
            .collect();
        let (mut sum, mut sym, mut rest) = (0.0, 0.0, 0.0);
        for batch in picks.chunks(cfg.batch_size) {
            let owned: Vec<Tensor<f32>> = batch.iter().map(|t| (*t).clone()).collect();
            let x = net.prepare(&owned);
            let b = owned.len();
            let s = cfg.input_size;
            let g = Graph::new();
            let xv = g.constant(x.clone());
            let alpha = net.forward(&g, xv);
            let images = g.constant(x.reshape(vec![b, s, s]));
            let loss = alignment_loss_vars(images, alpha);
            let total_v = loss.total.value().item() as f64;
            if !total_v.is_finite() {
                return Err(Error::Numeric(format!("alignment loss became {total_v} at epoch {epoch}, iteration {iter}")));
            }
            sum += total_v * b as f64;
            sym += loss.symmetry.value().item() as f64 * b as f64;
            rest += loss.restoration.value().item() as f64 * b as f64;
            let grads = g.backward(loss.total);
            let pg = g.param_grads(&grads);
            let lr = poly_lr(cfg.lr, iter, total, cfg.poly_power)?;
            adam.step(&mut net.params, &pg, lr as f32);
            iter += 1;
        }
        let row = AlignCurveRow { epoch, loss: sum / n as f64, sym_term: sym / n as f64, rest_term: rest / n as f64 };
        curve.push(row);
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs {
                net.save(&dir.join(format!("align_epoch{:04}.ckpt", epoch + 1)), cfg)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        net.save(&dir.join("align.ckpt"), cfg)?;
    }
    Ok(AlignTraining { net, curve })
}
