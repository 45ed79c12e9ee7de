use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::align::RigidParams;
use crate::data::Mask;
use crate::error::{Error, Result};

fn same_shape(a: &Mask, b: &Mask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("mask shapes differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `2 |P ∩ G| / (|P| + |G|)`, 1 when both masks are empty.
pub fn dice_coefficient(pred: &Mask, gt: &Mask) -> Result<f64> {
    same_shape(pred, gt)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        inter += usize::from(p & g);
        total += usize::from(p) + usize::from(g);
    }
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

/// One connected lesion component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LesionInstance {
    /// Linear voxel indices in ascending order.
    pub voxels: Vec<usize>,
    pub min_row: usize,
    pub min_col: usize,
}

impl LesionInstance {
    pub fn area(&self) -> usize {
        self.voxels.len()
    }
}

/// Components under 26-connectivity, which is 8-connectivity for a
/// single-slice mask. Ordered by (min row, min col, first voxel).
pub fn connected_components(mask: &Mask) -> Vec<LesionInstance> {
    let [d, h, w] = mask.dims();
    let data = mask.data();
    let mut seen = vec![false; data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..data.len() {
        if data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut voxels = Vec::new();
        while let Some(i) = stack.pop() {
            voxels.push(i);
            let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nz, ny, nx) = (z as i64 + dz, y as i64 + dy, x as i64 + dx);
                        if nz < 0 || ny < 0 || nx < 0 || nz >= d as i64 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let j = (nz as usize * h + ny as usize) * w + nx as usize;
                        if data[j] != 0 && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        voxels.sort_unstable();
        let min_row = voxels.iter().map(|&i| (i / w) % h).min().unwrap();
        let min_col = voxels.iter().map(|&i| i % w).min().unwrap();
        out.push(LesionInstance { voxels, min_row, min_col });
    }
    out.sort_by_key(|c| (c.min_row, c.min_col, c.voxels[0]));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LesionScores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_gt: usize,
    pub n_pred: usize,
}

impl LesionScores {
    /// Scores from counts, with the empty-side conventions: nothing on
    /// either side scores (1, 1, 1); predictions without lesions (1, 0, 0);
    /// lesions without predictions (0, 1, 0).
    pub fn from_counts(tp: usize, n_gt: usize, n_pred: usize) -> Self {
        let (recall, precision) = match (n_gt, n_pred) {
            (0, 0) => (1.0, 1.0),
            (0, _) => (1.0, 0.0),
            (_, 0) => (0.0, 1.0),
            _ => (tp as f64 / n_gt as f64, tp as f64 / n_pred as f64),
        };
        let f1 = if n_gt == 0 && n_pred == 0 {
            1.0
        } else if recall + precision > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { recall, precision, f1, tp, fp: n_pred - tp, fn_: n_gt - tp, n_gt, n_pred }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LesionMatching {
    pub scores: LesionScores,
    pub matches: Vec<Match>,
}

/// Greedy one-to-one matching of components in descending IoU. A pair
/// qualifies when its IoU is positive and at least `iou_threshold`; ties
/// go to the lower (gt, pred) index pair.
pub fn lesion_prf(pred: &Mask, gt: &Mask, iou_threshold: f64) -> Result<LesionMatching> {
    same_shape(pred, gt)?;
    if !(0.0..1.0).contains(&iou_threshold) {
        return Err(Error::Config(format!("iou_threshold {iou_threshold} must lie in [0, 1)")));
    }
    let gc = connected_components(gt);
    let pc = connected_components(pred);
    let label = |comps: &[LesionInstance]| {
        let mut l = vec![usize::MAX; gt.data().len()];
        for (k, c) in comps.iter().enumerate() {
            for &v in &c.voxels {
                l[v] = k;
            }
        }
        l
    };
    let (gl, pl) = (label(&gc), label(&pc));
    let mut inter: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in gl.iter().zip(&pl) {
        if a != usize::MAX && b != usize::MAX {
            *inter.entry((a, b)).or_default() += 1;
        }
    }
    let mut cands: Vec<Match> = inter
        .into_iter()
        .map(|((g, p), i)| Match { gt: g, pred: p, iou: i as f64 / (gc[g].area() + pc[p].area() - i) as f64 })
        .filter(|m| m.iou > 0.0 && m.iou >= iou_threshold)
        .collect();
    cands.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.gt.cmp(&b.gt)).then(a.pred.cmp(&b.pred)));
    let mut gt_used = vec![false; gc.len()];
    let mut pred_used = vec![false; pc.len()];
    let mut matches = Vec::new();
    for m in cands {
        if !gt_used[m.gt] && !pred_used[m.pred] {
            gt_used[m.gt] = true;
            pred_used[m.pred] = true;
            matches.push(m);
        }
    }
    Ok(LesionMatching { scores: LesionScores::from_counts(matches.len(), gc.len(), pc.len()), matches })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentError {
    pub theta_deg: f64,
    pub tx_px: f64,
    pub ty_px: f64,
}

/// Absolute parameter differences, the angle wrapped to [-180, 180] degrees first.
pub fn alignment_error(pred: &RigidParams, truth: &RigidParams) -> AlignmentError {
    let d = (pred.theta - truth.theta).to_degrees();
    let wrapped = (d + 180.0).rem_euclid(360.0) - 180.0;
    AlignmentError { theta_deg: wrapped.abs(), tx_px: (pred.tx - truth.tx).abs(), ty_px: (pred.ty - truth.ty).abs() }
}
