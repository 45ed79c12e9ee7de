use std::io::BufWriter;
use std::path::Path;

use crate::data::{write_atomic, CtVolume, Mask, HU_WINDOW};
use crate::error::{Error, Result};

/// RGB rendering of one slice in the brain window. Ground truth is tinted
/// green, the prediction red, their overlap yellow.
pub fn overlay_rgb(vol: &CtVolume, z: usize, gt: &Mask, pred: &Mask) -> Result<Vec<u8>> {
    let [d, h, w] = vol.dims();
    if gt.dims() != [d, h, w] || pred.dims() != [d, h, w] {
        return Err(Error::Shape(format!("overlay masks must match volume {:?}", [d, h, w])));
    }
    if z >= d {
        return Err(Error::Shape(format!("slice {z} out of range for depth {d}")));
    }
    let slice = vol.slice(z);
    let (lo, hi) = HU_WINDOW;
    let mut rgb = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let v = slice.data()[y * w + x].clamp(lo, hi);
            let grey = ((v - lo) / (hi - lo) * 255.0).round() as u8;
            let (g, p) = (gt.get(z, y, x), pred.get(z, y, x));
            let px = match (g, p) {
                (true, true) => [255, 255, grey / 2],
                (true, false) => [grey / 2, 255, grey / 2],
                (false, true) => [255, grey / 2, grey / 2],
                (false, false) => [grey, grey, grey],
            };
            rgb.extend_from_slice(&px);
        }
    }
    Ok(rgb)
}

/// Writes the overlay of slice `z` as an 8-bit RGB PNG.
pub fn write_overlay_png(path: &Path, vol: &CtVolume, z: usize, gt: &Mask, pred: &Mask) -> Result<()> {
    let rgb = overlay_rgb(vol, z, gt, pred)?;
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut bytes), vol.width() as u32, vol.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
        writer.write_image_data(&rgb).map_err(|e| Error::format(path, e.to_string()))?;
    }
    write_atomic(path, &bytes)
}

/// Slice with the most ground-truth plus predicted voxels, or the middle one.
pub fn most_informative_slice(gt: &Mask, pred: &Mask) -> usize {
    let [d, _, _] = gt.dims();
    (0..d)
        .map(|z| (gt.slice(z).count() + pred.slice(z).count(), z))
        .filter(|&(n, _)| n > 0)
        .max_by_key(|&(n, z)| (n, std::cmp::Reverse(z)))
        .map_or(d / 2, |(_, z)| z)
}
