use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sean_tensor::Tensor;

use crate::align::{align_volume, estimate_volume_params, invert_params, unalign_volume, AlignmentNet, RigidParams};
use crate::data::{extract_slab, preprocess, write_atomic, CtVolume, Mask};
use crate::error::{Error, Result};
use crate::eval::metrics::{alignment_error, dice_coefficient, lesion_prf, AlignmentError, LesionScores};
use crate::segnet::SegModel;

/// Threshold applied to sigmoid outputs.
pub const PROB_THRESHOLD: f32 = 0.5;
const PREDICT_BATCH: usize = 8;

/// Anything that maps slabs to center-slice probabilities.
pub trait SlicePredictor {
    fn slab_radius(&self) -> usize;
    /// `[N, H, W]` probabilities for `[2T+1, H, W]` slabs.
    fn predict_slabs(&self, slabs: &[Tensor<f32>]) -> Result<Tensor<f32>>;
}

impl SlicePredictor for SegModel<f32> {
    fn slab_radius(&self) -> usize {
        self.arch.model.t
    }

    fn predict_slabs(&self, slabs: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        self.predict(slabs)
    }
}

#[derive(Clone, Debug)]
pub struct EvalCase {
    /// Raw (HU) volume.
    pub volume: CtVolume,
    pub mask: Mask,
    /// Perturbation that produced the volume, when known.
    pub true_params: Option<RigidParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.1 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.iou_threshold) {
            return Err(Error::Config(format!("eval.iou_threshold {} must lie in [0, 1)", self.iou_threshold)));
        }
        Ok(())
    }
}

/// Result of running the pipeline on one volume.
#[derive(Clone, Debug)]
pub struct VolumePrediction {
    /// Correcting transform applied before segmentation.
    pub params: RigidParams,
    /// `[D, H, W]` probabilities in the original (unaligned) frame.
    pub probabilities: Tensor<f32>,
    pub mask: Mask,
    pub align_seconds: f64,
    pub predict_seconds: f64,
}

/// Align, standardize, segment every slice, then map the probabilities
/// back to the original frame and threshold them.
pub fn predict_volume(model: &dyn SlicePredictor, aligner: Option<&AlignmentNet<f32>>, raw: &CtVolume) -> Result<VolumePrediction> {
    let start = Instant::now();
    let params = match aligner {
        Some(net) => estimate_volume_params(net, raw)?,
        None => RigidParams::IDENTITY,
    };
    let aligned = if aligner.is_some() { align_volume(raw, &params)? } else { raw.clone() };
    let align_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let pre = preprocess(&aligned)?;
    let [d, h, w] = pre.dims();
    let t = model.slab_radius();
    let mut probs = Vec::with_capacity(d * h * w);
    let centers: Vec<usize> = (0..d).collect();
    for chunk in centers.chunks(PREDICT_BATCH) {
        let slabs = chunk.iter().map(|&z| extract_slab(&pre, z, t)).collect::<Result<Vec<_>>>()?;
        let p = model.predict_slabs(&slabs)?;
        if p.shape() != [chunk.len(), h, w] {
            return Err(Error::Shape(format!("predictor returned {:?}, expected [{}, {h}, {w}]", p.shape(), chunk.len())));
        }
        if !p.all_finite() {
            return Err(Error::Numeric(format!("non-finite probabilities for {}", raw.id)));
        }
        probs.extend_from_slice(p.data());
    }
    let aligned_probs = CtVolume::new(raw.id.clone(), Tensor::from_vec(vec![d, h, w], probs), raw.spacing)?;
    let back = if aligner.is_some() { unalign_volume(&aligned_probs, &params)? } else { aligned_probs };
    let mask = Mask::threshold(back.voxels(), [d, h, w], PROB_THRESHOLD)?;
    Ok(VolumePrediction {
        params,
        probabilities: back.voxels().clone(),
        mask,
        align_seconds,
        predict_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub dice: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub estimated_params: RigidParams,
    pub alignment_error: Option<AlignmentError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub mean_theta_deg: f64,
    pub mean_tx_px: f64,
    pub mean_ty_px: f64,
    pub cases: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub align_seconds: Vec<(String, f64)>,
    pub predict_seconds: Vec<(String, f64)>,
    pub mean_align_seconds: f64,
    pub max_align_seconds: f64,
}

/// Dataset-level results. Timings vary between runs and are kept apart
/// from the deterministic part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou_threshold: f64,
    pub cases: Vec<CaseMetrics>,
    /// Macro average over cases.
    pub mean_dice: f64,
    /// Pooled over all cases.
    pub lesion: LesionScores,
    pub alignment: Option<AlignmentSummary>,
    #[serde(skip)]
    pub timings: Timings,
}

impl MetricsReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("case_id,dice,n_gt,n_pred,tp,fp,fn\n");
        for c in &self.cases {
            s.push_str(&format!("{},{},{},{},{},{},{}\n", c.case_id, c.dice, c.n_gt, c.n_pred, c.tp, c.fp, c.fn_));
        }
        s
    }

    /// Writes `report.json`, `report.csv` and `timings.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("report serializes");
        write_atomic(&dir.join("report.json"), &json)?;
        write_atomic(&dir.join("report.csv"), self.csv().as_bytes())?;
        let t = serde_json::to_vec_pretty(&self.timings).expect("timings serialize");
        write_atomic(&dir.join("timings.json"), &t)
    }
}

/// Runs [`predict_volume`] on every case and scores it in the original frame.
pub fn evaluate_dataset(
    model: &dyn SlicePredictor,
    aligner: Option<&AlignmentNet<f32>>,
    cases: &[EvalCase],
    cfg: &EvalConfig,
) -> Result<(MetricsReport, Vec<VolumePrediction>)> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Config("evaluation dataset is empty".into()));
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| cases[a].volume.id.cmp(&cases[b].volume.id));
    let mut rows = Vec::with_capacity(cases.len());
    let mut preds = Vec::with_capacity(cases.len());
    let mut timings = Timings::default();
    let (mut tp, mut n_gt, mut n_pred) = (0, 0, 0);
    for &i in &order {
        let case = &cases[i];
        if case.mask.dims() != case.volume.dims() {
            return Err(Error::Shape(format!("mask of {} does not match its volume", case.volume.id)));
        }
        let pred = predict_volume(model, aligner, &case.volume)?;
        let dice = dice_coefficient(&pred.mask, &case.mask)?;
        let m = lesion_prf(&pred.mask, &case.mask, cfg.iou_threshold)?.scores;
        tp += m.tp;
        n_gt += m.n_gt;
        n_pred += m.n_pred;
        let err = match (aligner, case.true_params) {
            (Some(_), Some(truth)) => Some(alignment_error(&pred.params, &invert_params(&truth))),
            _ => None,
        };
        rows.push(CaseMetrics {
            case_id: case.volume.id.clone(),
            dice,
            n_gt: m.n_gt,
            n_pred: m.n_pred,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            estimated_params: pred.params,
            alignment_error: err,
        });
        timings.align_seconds.push((case.volume.id.clone(), pred.align_seconds));
        timings.predict_seconds.push((case.volume.id.clone(), pred.predict_seconds));
        preds.push(pred);
    }
    let errs: Vec<AlignmentError> = rows.iter().filter_map(|r| r.alignment_error).collect();
    let alignment = (!errs.is_empty()).then(|| {
        let n = errs.len() as f64;
        AlignmentSummary {
            mean_theta_deg: errs.iter().map(|e| e.theta_deg).sum::<f64>() / n,
            mean_tx_px: errs.iter().map(|e| e.tx_px).sum::<f64>() / n,
            mean_ty_px: errs.iter().map(|e| e.ty_px).sum::<f64>() / n,
            cases: errs.len(),
        }
    });
    let align_times: Vec<f64> = timings.align_seconds.iter().map(|(_, s)| *s).collect();
    timings.mean_align_seconds = align_times.iter().sum::<f64>() / align_times.len() as f64;
    timings.max_align_seconds = align_times.iter().copied().fold(0.0, f64::max);
    timings.total_seconds = start.elapsed().as_secs_f64();
    let report = MetricsReport {
        iou_threshold: cfg.iou_threshold,
        mean_dice: rows.iter().map(|r| r.dice).sum::<f64>() / rows.len() as f64,
        cases: rows,
        lesion: LesionScores::from_counts(tp, n_gt, n_pred),
        alignment,
        timings,
    };
    Ok((report, preds))
}
