use std::fs;
use std::path::Path;

use serde_json::json;
use sean_core::align::{curve_csv, train_alignment, AlignDataset, AlignmentNet};
use sean_core::config::RunConfig;
use sean_core::data::{read_volume, write_atomic, write_volume, CtVolume, PhantomConfig};
use sean_core::eval::{evaluate_dataset, most_informative_slice, predict_volume, write_overlay_png};
use sean_core::segnet::SegModel;
use sean_core::train::{log_csv, prepare_cases, train_segmentation, SegDataset};
use sean_core::{Error, Result};

use crate::args::{EvaluateArgs, GenDataArgs, PredictArgs, TrainAlignArgs, TrainSegArgs};
use crate::dataset::{eval_cases, generate_dataset, load_dataset, with_masks};
use crate::lock::DirLock;

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const DETERMINISTIC_ENV: &str = "SEAN_DETERMINISTIC";

/// Config file (or defaults), then the environment, then flags. Validated.
pub fn resolve_config(path: Option<&Path>, flags: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1") {
        cfg.deterministic = true;
    }
    flags(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn write_resolved(out: &Path, cfg: &RunConfig) -> Result<()> {
    write_atomic(&out.join(RESOLVED_CONFIG), cfg.to_json_pretty().as_bytes())
}

fn load_aligner(path: Option<&Path>) -> Result<Option<AlignmentNet<f32>>> {
    path.map(AlignmentNet::<f32>::load).transpose()
}

pub fn gen_data(a: &GenDataArgs) -> Result<serde_json::Value> {
    let phantom = match &a.phantom {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_str::<PhantomConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let cfg = resolve_config(a.config.as_deref(), |c| {
        if let Some(s) = phantom {
            c.phantom = s;
        }
        if let Some(n) = a.num {
            c.dataset.num_volumes = n;
        }
        if let Some(s) = a.seed {
            c.dataset.seed = s;
        }
    })?;
    let _lock = DirLock::acquire(&a.out)?;
    let truths = generate_dataset(&a.out, &cfg.phantom, &cfg.dataset)?;
    write_resolved(&a.out, &cfg)?;
    let lesions = truths.iter().filter(|t| t.lesion_side.is_some()).count();
    Ok(json!({ "command": "gen-data", "volumes": truths.len(), "with_lesion": lesions }))
}

pub fn train_align(a: &TrainAlignArgs) -> Result<serde_json::Value> {
    let cfg = resolve_config(a.config.as_deref(), |c| {
        if let Some(v) = a.epochs {
            c.align.epochs = v;
        }
        if let Some(v) = a.lr {
            c.align.lr = v;
        }
        if let Some(v) = a.batch_size {
            c.align.batch_size = v;
        }
        if let Some(v) = a.seed {
            c.align.seed = v;
        }
    })?;
    let cases = load_dataset(&a.data)?;
    let _lock = DirLock::acquire(&a.out)?;
    write_resolved(&a.out, &cfg)?;
    let volumes: Vec<CtVolume> = cases.into_iter().map(|c| c.volume).collect();
    let ds = AlignDataset::from_raw(&volumes)?;
    let run = train_alignment(&ds, &cfg.align, Some(&a.out))?;
    write_atomic(&a.out.join("align_curve.csv"), curve_csv(&run.curve).as_bytes())?;
    let last = run.curve.last().map(|r| r.loss);
    Ok(json!({ "command": "train-align", "slices": ds.num_slices(), "final_loss": last }))
}

pub fn train_seg(a: &TrainSegArgs) -> Result<serde_json::Value> {
    let cfg = resolve_config(a.config.as_deref(), |c| {
        if let Some(v) = a.fusion {
            c.model.fusion = v;
        }
        if let Some(v) = a.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = a.lr {
            c.train.base_lr = v;
        }
        if let Some(v) = a.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = a.seed {
            c.train.seed = v;
            c.model.seed = v;
        }
        if let Some(v) = a.base_width {
            c.model.base_width = v;
        }
        if let Some(v) = a.slab_radius {
            c.model.t = v;
            c.attention.t = v;
        }
    })?;
    let aligner = load_aligner(a.align.as_deref())?;
    let cases = with_masks(&load_dataset(&a.data)?)?;
    let _lock = DirLock::acquire(&a.out)?;
    write_resolved(&a.out, &cfg)?;
    let prepared = prepare_cases(aligner.as_ref(), &cases)?;
    let data = SegDataset::from_volumes(&prepared, cfg.model.t)?;
    let run = train_segmentation(&cfg.architecture(), &cfg.train, &data, Some(&a.out))?;
    write_atomic(&a.out.join("train_log.csv"), log_csv(&run.log).as_bytes())?;
    Ok(json!({
        "command": "train-seg",
        "fusion": cfg.model.fusion.cli_name(),
        "iterations": run.log.len(),
        "final_loss": run.log.last().map(|r| r.loss),
        "parameters": run.model.num_trainable(),
    }))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<serde_json::Value> {
    let cfg = resolve_config(a.config.as_deref(), |c| {
        if let Some(v) = a.iou_threshold {
            c.eval.iou_threshold = v;
        }
    })?;
    let model = SegModel::<f32>::load(&a.model)?;
    let aligner = load_aligner(a.align.as_deref())?;
    let cases = eval_cases(&load_dataset(&a.data)?)?;
    let _lock = DirLock::acquire(&a.out)?;
    write_resolved(&a.out, &cfg)?;
    let (report, preds) = evaluate_dataset(&model, aligner.as_ref(), &cases, &cfg.eval)?;
    report.write(&a.out)?;
    if a.bench {
        let mut csv = String::from("case_id,align_seconds\n");
        for (id, s) in &report.timings.align_seconds {
            csv.push_str(&format!("{id},{s}\n"));
        }
        write_atomic(&a.out.join("bench.csv"), csv.as_bytes())?;
    }
    if a.overlays {
        let dir = a.out.join("overlays");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut sorted: Vec<_> = cases.iter().collect();
        sorted.sort_by(|x, y| x.volume.id.cmp(&y.volume.id));
        for (case, pred) in sorted.into_iter().zip(&preds) {
            let z = most_informative_slice(&case.mask, &pred.mask);
            write_overlay_png(&dir.join(format!("{}.png", case.volume.id)), &case.volume, z, &case.mask, &pred.mask)?;
        }
    }
    let mut summary = json!({
        "command": "evaluate",
        "cases": report.cases.len(),
        "mean_dice": report.mean_dice,
        "recall": report.lesion.recall,
        "precision": report.lesion.precision,
        "f1": report.lesion.f1,
    });
    if let Some(al) = &report.alignment {
        summary["mean_theta_error_deg"] = json!(al.mean_theta_deg);
        summary["mean_tx_error_px"] = json!(al.mean_tx_px);
    }
    if a.bench {
        summary["mean_align_seconds"] = json!(report.timings.mean_align_seconds);
        summary["max_align_seconds"] = json!(report.timings.max_align_seconds);
    }
    Ok(summary)
}

pub fn predict(a: &PredictArgs) -> Result<serde_json::Value> {
    if a.out.extension().is_none_or(|x| x != "json") {
        return Err(Error::Config(format!("--out must be a .json sidecar path, got {}", a.out.display())));
    }
    let id = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let model = SegModel::<f32>::load(&a.model)?;
    let aligner = load_aligner(a.align.as_deref())?;
    let (vol, _) = read_volume(&a.volume)?;
    let pred = predict_volume(&model, aligner.as_ref(), &vol)?;
    let probs = CtVolume::new(id, pred.probabilities, vol.spacing)?;
    write_volume(&probs, Some(&pred.mask), dir)?;
    Ok(json!({
        "command": "predict",
        "id": vol.id,
        "lesion_voxels": pred.mask.count(),
        "params": pred.params,
    }))
}
