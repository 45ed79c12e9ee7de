//! On-disk phantom datasets: `volumes/` holds one raw volume and mask per
//! case, `ground_truth.json` the applied perturbations and `phantom.json`
//! the generator settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sean_core::align::RigidParams;
use sean_core::config::DatasetConfig;
use sean_core::data::{generate_phantom, read_volume, write_atomic, write_volume, CtVolume, Mask, PhantomConfig, Side};
use sean_core::eval::EvalCase;
use sean_core::{Error, Result};

pub const VOLUMES_DIR: &str = "volumes";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const PHANTOM_FILE: &str = "phantom.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub id: String,
    pub seed: u64,
    pub true_params: RigidParams,
    pub lesion_side: Option<Side>,
}

/// Seed of case `index` in a set generated from `seed`.
pub fn case_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

pub fn generate_dataset(out: &Path, phantom: &PhantomConfig, ds: &DatasetConfig) -> Result<Vec<CaseTruth>> {
    phantom.validate()?;
    let vol_dir = out.join(VOLUMES_DIR);
    fs::create_dir_all(&vol_dir).map_err(|e| Error::io(&vol_dir, e))?;
    let mut truths = Vec::with_capacity(ds.num_volumes);
    for i in 0..ds.num_volumes {
        let seed = case_seed(ds.seed, i);
        let (vol, gt) = generate_phantom(phantom, seed)?;
        write_volume(&vol, Some(&gt.lesion_mask), &vol_dir)?;
        truths.push(CaseTruth { id: vol.id.clone(), seed, true_params: gt.true_params, lesion_side: gt.lesion_side });
    }
    write_atomic(&out.join(GROUND_TRUTH_FILE), &serde_json::to_vec_pretty(&truths).expect("truth serializes"))?;
    write_atomic(&out.join(PHANTOM_FILE), &serde_json::to_vec_pretty(phantom).expect("phantom config serializes"))?;
    Ok(truths)
}

/// A loaded case; the mask and perturbation are present when the dataset has them.
#[derive(Clone, Debug)]
pub struct Case {
    pub volume: CtVolume,
    pub mask: Option<Mask>,
    pub true_params: Option<RigidParams>,
}

fn sidecars(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every case of a dataset directory in id order.
pub fn load_dataset(dir: &Path) -> Result<Vec<Case>> {
    let vol_dir = dir.join(VOLUMES_DIR);
    if !vol_dir.is_dir() {
        return Err(Error::io(&vol_dir, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset has no volumes directory")));
    }
    let truth_path = dir.join(GROUND_TRUTH_FILE);
    let truths: Vec<CaseTruth> = if truth_path.exists() {
        let bytes = fs::read(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&truth_path, e.to_string()))?
    } else {
        Vec::new()
    };
    let mut cases = Vec::new();
    for path in sidecars(&vol_dir)? {
        let (volume, mask) = read_volume(&path)?;
        let true_params = truths.iter().find(|t| t.id == volume.id).map(|t| t.true_params);
        cases.push(Case { volume, mask, true_params });
    }
    if cases.is_empty() {
        return Err(Error::Config(format!("dataset {} contains no volumes", dir.display())));
    }
    Ok(cases)
}

/// Volume and mask pairs; fails on the first case without a mask.
pub fn with_masks(cases: &[Case]) -> Result<Vec<(CtVolume, Mask)>> {
    cases
        .iter()
        .map(|c| match &c.mask {
            Some(m) => Ok((c.volume.clone(), m.clone())),
            None => Err(Error::Config(format!("case {} has no mask", c.volume.id))),
        })
        .collect()
}

pub fn eval_cases(cases: &[Case]) -> Result<Vec<EvalCase>> {
    Ok(with_masks(cases)?
        .into_iter()
        .zip(cases)
        .map(|((volume, mask), c)| EvalCase { volume, mask, true_params: c.true_params })
        .collect())
}
