use sean_tensor::Tensor;

use crate::align::net::AlignmentNet;
use crate::align::rigid::{apply_rigid, warp_image, RigidParams, WarpDirection};
use crate::data::{preprocess, CtVolume, Mask, HU_WINDOW};
use crate::error::{Error, Result};

/// Share of a slice's pixels that must lie above the window floor.
pub const TISSUE_FRACTION: f64 = 0.01;

/// Indices of slices with more than 1% of pixels above the brain-window floor.
pub fn tissue_slices(vol: &CtVolume) -> Vec<usize> {
    let plane = vol.height() * vol.width();
    vol.voxels()
        .data()
        .chunks(plane)
        .enumerate()
        .filter(|(_, s)| s.iter().filter(|&&v| v > HU_WINDOW.0).count() as f64 > TISSUE_FRACTION * plane as f64)
        .map(|(i, _)| i)
        .collect()
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Coordinate-wise median of per-slice predictions.
pub fn aggregate(preds: &[RigidParams]) -> Option<RigidParams> {
    let col = |f: fn(&RigidParams) -> f64| median(&preds.iter().map(f).collect::<Vec<_>>());
    Some(RigidParams::new(col(|p| p.theta)?, col(|p| p.tx)?, col(|p| p.ty)?))
}

/// Correcting transform for a raw (HU) volume.
pub fn estimate_volume_params(net: &AlignmentNet<f32>, vol: &CtVolume) -> Result<RigidParams> {
    let keep = tissue_slices(vol);
    if keep.is_empty() {
        return Err(Error::Degenerate(format!("volume {} has no tissue-bearing slices to align", vol.id)));
    }
    let p = preprocess(vol)?;
    let slices: Vec<_> = keep.iter().map(|&i| p.slice(i)).collect();
    let mut preds = Vec::with_capacity(slices.len());
    for chunk in slices.chunks(16) {
        preds.extend(net.predict(chunk));
    }
    let est = aggregate(&preds).expect("nonempty predictions");
    if !est.is_valid() {
        return Err(Error::Numeric(format!("alignment net produced invalid parameters {est:?} for {}", vol.id)));
    }
    Ok(est)
}

/// Applies the same correcting transform to every slice.
pub fn align_volume(vol: &CtVolume, params: &RigidParams) -> Result<CtVolume> {
    vol.map_slices(|s| apply_rigid(s, params))
}

/// Undoes `align_volume` on per-slice data such as probability maps.
pub fn unalign_volume(vol: &CtVolume, params: &RigidParams) -> Result<CtVolume> {
    vol.map_slices(|s| warp_image(s, params, WarpDirection::Inverse))
}

/// Moves a mask with the volume: bilinear warp, then threshold at 0.5.
pub fn align_mask(mask: &Mask, params: &RigidParams) -> Result<Mask> {
    let [d, h, w] = mask.dims();
    let mut slices = Vec::with_capacity(d);
    for z in 0..d {
        let m: Tensor<f32> = mask.slice(z).to_tensor().reshape(vec![h, w]);
        slices.push(Mask::threshold(&apply_rigid(&m, params), [1, h, w], 0.5)?);
    }
    Mask::stack(&slices)
}
