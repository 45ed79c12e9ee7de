use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sean_tensor::{Adam, Graph, Tensor};

use crate::align::{align_mask, align_volume, estimate_volume_params, AlignmentNet};
use crate::data::{extract_slab, preprocess, CtVolume, Mask};
use crate::error::{Error, Result};
use crate::layers::{apply_buffer_updates, Mode};
use crate::segnet::{SegModel, SegArchitecture};
use crate::train::loss::combined_loss_vars;
use crate::train::schedule::poly_lr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub betas: [f64; 2],
    pub epochs: usize,
    pub poly_power: f64,
    pub w_dice: f64,
    pub w_ce: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Save a checkpoint every this many iterations; 0 saves only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            betas: [0.9, 0.99],
            epochs: 150,
            poly_power: 0.9,
            w_dice: 1.0,
            w_ce: 1.0,
            batch_size: 4,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("train.base_lr must be positive, got {}", self.base_lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be at least 1".into()));
        }
        if !(self.poly_power > 0.0) {
            return Err(Error::Config("train.poly_power must be positive".into()));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config(format!("train.betas {:?} must lie in [0, 1)", self.betas)));
        }
        if self.w_dice < 0.0 || self.w_ce < 0.0 || self.w_dice + self.w_ce == 0.0 {
            return Err(Error::Config("loss weights must be non-negative and not both zero".into()));
        }
        Ok(())
    }
}

/// One training example: a slab and the mask of its center slice.
#[derive(Clone, Debug)]
pub struct SegSample {
    pub case_id: String,
    pub center: usize,
    /// `[2T+1, H, W]`
    pub slab: Tensor<f32>,
    /// `[H, W]`, values in {0, 1}
    pub mask: Tensor<f32>,
}

impl SegSample {
    pub fn has_lesion(&self) -> bool {
        self.mask.data().iter().any(|&v| v > 0.5)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SegDataset {
    pub samples: Vec<SegSample>,
}

impl SegDataset {
    /// Every slice of every (aligned, preprocessed) volume becomes a sample.
    pub fn from_volumes(cases: &[(CtVolume, Mask)], t: usize) -> Result<Self> {
        let mut samples = Vec::new();
        for (vol, mask) in cases {
            if mask.dims() != vol.dims() {
                return Err(Error::Shape(format!("mask {:?} does not match volume {} {:?}", mask.dims(), vol.id, vol.dims())));
            }
            let [_, h, w] = vol.dims();
            for z in 0..vol.depth() {
                samples.push(SegSample {
                    case_id: vol.id.clone(),
                    center: z,
                    slab: extract_slab(vol, z, t)?,
                    mask: mask.slice(z).to_tensor().reshape(vec![h, w]),
                });
            }
        }
        Ok(Self { samples })
    }

    /// Sample order for one epoch: every lesion-bearing slice once plus as
    /// many randomly drawn lesion-free slices, shuffled.
    pub fn epoch_order(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
            (0..self.samples.len()).partition(|&i| self.samples[i].has_lesion());
        neg.shuffle(rng);
        let take = if pos.is_empty() { neg.len() } else { pos.len().min(neg.len()) };
        pos.extend_from_slice(&neg[..take]);
        pos.shuffle(rng);
        pos
    }

    /// Samples per epoch under [`SegDataset::epoch_order`].
    pub fn epoch_len(&self) -> usize {
        let pos = self.samples.iter().filter(|s| s.has_lesion()).count();
        let neg = self.samples.len() - pos;
        if pos == 0 {
            neg
        } else {
            pos + pos.min(neg)
        }
    }
}

/// Aligns raw cases with the frozen alignment net (when given), moves the
/// masks along and standardizes the volumes.
pub fn prepare_cases(aligner: Option<&AlignmentNet<f32>>, cases: &[(CtVolume, Mask)]) -> Result<Vec<(CtVolume, Mask)>> {
    cases
        .iter()
        .map(|(vol, mask)| match aligner {
            Some(net) => {
                let p = estimate_volume_params(net, vol)?;
                Ok((preprocess(&align_volume(vol, &p)?)?, align_mask(mask, &p)?))
            }
            None => Ok((preprocess(vol)?, mask.clone())),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub dice_term: f64,
    pub ce_term: f64,
}

pub fn log_csv(rows: &[TrainLogRow]) -> String {
    let mut s = String::from("iter,lr,loss,dice_term,ce_term\n");
    for r in rows {
        s.push_str(&format!("{},{:e},{},{},{}\n", r.iter, r.lr, r.loss, r.dice_term, r.ce_term));
    }
    s
}

pub struct SegTraining {
    pub model: SegModel<f32>,
    pub log: Vec<TrainLogRow>,
}

/// Trains a fresh model built from `arch`.
pub fn train_segmentation(
    arch: &SegArchitecture,
    cfg: &TrainConfig,
    data: &SegDataset,
    checkpoint_dir: Option<&Path>,
) -> Result<SegTraining> {
    let model = SegModel::<f32>::new(arch.clone())?;
    train_model(model, cfg, data, checkpoint_dir)
}

/// Adam under the poly schedule; `total_iter` is fixed before the first step.
pub fn train_model(
    mut model: SegModel<f32>,
    cfg: &TrainConfig,
    data: &SegDataset,
    checkpoint_dir: Option<&Path>,
) -> Result<SegTraining> {
    cfg.validate()?;
    if data.samples.is_empty() {
        return Err(Error::Degenerate("segmentation dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.betas[0], cfg.betas[1]);
    let total = cfg.epochs * data.epoch_len().div_ceil(cfg.batch_size);
    let cfg_json = serde_json::to_value(cfg).expect("train config serializes");
    let mut log = Vec::with_capacity(total);
    let mut iter = 0;
    for _ in 0..cfg.epochs {
        let order = data.epoch_order(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let slabs: Vec<Tensor<f32>> = batch.iter().map(|&i| data.samples[i].slab.clone()).collect();
            let (h, w) = (slabs[0].dim(1), slabs[0].dim(2));
            let mut target = Vec::with_capacity(batch.len() * h * w);
            for &i in batch {
                target.extend_from_slice(data.samples[i].mask.data());
            }
            let target = Tensor::from_vec(vec![batch.len(), 1, h, w], target);
            let x = model.input_tensor(&slabs)?;
            let g = Graph::new();
            let logits = model.forward(&g, g.constant(x), Mode::Train)?;
            let loss = combined_loss_vars(logits, &target, cfg.w_dice, cfg.w_ce);
            let value = f64::from(loss.total.value().item());
            let lr = poly_lr(cfg.base_lr, iter, total, cfg.poly_power)?;
            if !value.is_finite() {
                if let Some(dir) = checkpoint_dir {
                    model.save(&dir.join("diagnostic.ckpt"), Some(&cfg_json))?;
                }
                return Err(Error::Numeric(format!("segmentation loss became {value} at iteration {iter}")));
            }
            log.push(TrainLogRow {
                iter,
                lr,
                loss: value,
                dice_term: f64::from(loss.dice.value().item()),
                ce_term: f64::from(loss.ce.value().item()),
            });
            let grads = g.backward(loss.total);
            let pg = g.param_grads(&grads);
            apply_buffer_updates(&g, &mut model.params);
            adam.step(&mut model.params, &pg, lr as f32);
            iter += 1;
            if let Some(dir) = checkpoint_dir {
                if cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && iter < total {
                    model.save(&dir.join(format!("seg_iter{iter:06}.ckpt")), Some(&cfg_json))?;
                }
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        model.save(&dir.join("model.ckpt"), Some(&cfg_json))?;
    }
    Ok(SegTraining { model, log })
}
