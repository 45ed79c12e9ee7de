use sean_tensor::Tensor;

use crate::data::volume::CtVolume;
use crate::error::{Error, Result};

/// Brain window in HU.
pub const HU_WINDOW: (f32, f32) = (40.0, 100.0);

/// Clamps to the brain window, then standardizes the whole case to zero
/// mean and unit (population) standard deviation.
pub fn preprocess(vol: &CtVolume) -> Result<CtVolume> {
    let (lo, hi) = HU_WINDOW;
    let clamped: Vec<f64> = vol.voxels().data().iter().map(|&v| f64::from(v.clamp(lo, hi))).collect();
    let n = clamped.len() as f64;
    let mean = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Degenerate(format!(
            "volume {} is constant ({mean} HU) after windowing; cannot standardize",
            vol.id
        )));
    }
    let inv_std = 1.0 / var.sqrt();
    let data = clamped.iter().map(|v| ((v - mean) * inv_std) as f32).collect();
    CtVolume::new(vol.id.clone(), Tensor::from_vec(vol.dims().to_vec(), data), vol.spacing)
}

/// Slices `center - radius ..= center + radius` as `[2r + 1, H, W]`;
/// indices past either end repeat the edge slice.
pub fn extract_slab(vol: &CtVolume, center: usize, radius: usize) -> Result<Tensor<f32>> {
    let [d, h, w] = vol.dims();
    if center >= d {
        return Err(Error::Shape(format!("slab center {center} outside volume of depth {d}")));
    }
    let plane = h * w;
    let src = vol.voxels().data();
    let mut out = Vec::with_capacity((2 * radius + 1) * plane);
    for t in -(radius as isize)..=(radius as isize) {
        let z = (center as isize + t).clamp(0, d as isize - 1) as usize;
        out.extend_from_slice(&src[z * plane..(z + 1) * plane]);
    }
    Ok(Tensor::from_vec(vec![2 * radius + 1, h, w], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol_from(values: Vec<f32>, dims: [usize; 3]) -> CtVolume {
        CtVolume::new("v", Tensor::from_vec(dims.to_vec(), values), [1.0; 3]).unwrap()
    }

    #[test]
    fn constant_volume_is_degenerate() {
        let v = vol_from(vec![70.0; 8], [2, 2, 2]);
        assert!(matches!(preprocess(&v), Err(Error::Degenerate(_))));
    }

    #[test]
    fn out_of_window_values_are_clamped_first() {
        // 30 and 110 become 40 and 100, which standardize to -1 and +1.
        let v = vol_from(vec![30.0, 110.0, 30.0, 110.0], [1, 2, 2]);
        let p = preprocess(&v).unwrap();
        assert_eq!(p.voxels().data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn equal_counts_at_window_edges_map_to_unit_values() {
        let v = vol_from(vec![40.0, 100.0, 100.0, 40.0, 40.0, 100.0], [1, 2, 3]);
        let p = preprocess(&v).unwrap();
        assert_eq!(p.voxels().data(), &[-1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn slab_zero_radius_is_center_slice() {
        let v = vol_from((0..4 * 6).map(|i| i as f32).collect(), [4, 2, 3]);
        let s = extract_slab(&v, 2, 0).unwrap();
        assert_eq!(s.data(), v.slice(2).data());
    }

    #[test]
    fn slab_replicates_edges() {
        let v = vol_from((0..4 * 6).map(|i| i as f32).collect(), [4, 2, 3]);
        let s = extract_slab(&v, 0, 1).unwrap();
        let expected: Vec<f32> = [v.slice(0), v.slice(0), v.slice(1)].iter().flat_map(|t| t.data().to_vec()).collect();
        assert_eq!(s.data(), expected.as_slice());
    }

    #[test]
    fn slab_in_range() {
        let v = vol_from((0..5 * 6).map(|i| i as f32).collect(), [5, 2, 3]);
        let s = extract_slab(&v, 2, 1).unwrap();
        let expected: Vec<f32> = (1..=3).flat_map(|z| v.slice(z).data().to_vec()).collect();
        assert_eq!(s.data(), expected.as_slice());
    }

    #[test]
    fn slab_center_out_of_range() {
        let v = vol_from(vec![0.0; 6], [1, 2, 3]);
        assert!(extract_slab(&v, 1, 0).is_err());
    }
}
