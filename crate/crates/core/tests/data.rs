use proptest::prelude::*;
use sean_core::data::{extract_slab, preprocess, read_volume, write_volume, CtVolume, Mask};
use sean_core::Error;
use sean_tensor::Tensor;

fn vol(dims: [usize; 3], f: impl Fn(usize) -> f32) -> CtVolume {
    CtVolume::new("v", Tensor::from_fn(dims.to_vec(), f), [5.0, 1.0, 1.0]).unwrap()
}

fn stats(v: &CtVolume) -> (f64, f64) {
    let d = v.voxels().data();
    let n = d.len() as f64;
    let mean = d.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = d.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[test]
fn constant_volume_is_degenerate() {
    assert!(matches!(preprocess(&vol([2, 3, 3], |_| 70.0)), Err(Error::Degenerate(_))));
}

#[test]
fn values_outside_the_window_are_clamped() {
    let raw = preprocess(&vol([1, 2, 2], |i| if i % 2 == 0 { 30.0 } else { 110.0 })).unwrap();
    let clamped = preprocess(&vol([1, 2, 2], |i| if i % 2 == 0 { 40.0 } else { 100.0 })).unwrap();
    assert_eq!(raw.voxels(), clamped.voxels());
}

#[test]
fn two_level_volume_standardizes_to_unit_values() {
    let p = preprocess(&vol([2, 2, 2], |i| if i < 4 { 40.0 } else { 100.0 })).unwrap();
    for (i, &v) in p.voxels().data().iter().enumerate() {
        assert_eq!(v, if i < 4 { -1.0 } else { 1.0 });
    }
}

#[test]
fn slab_edges_replicate() {
    let v = vol([4, 2, 2], |i| (i / 4) as f32);
    let slab = extract_slab(&v, 0, 1).unwrap();
    let firsts: Vec<f32> = (0..3).map(|k| slab.at(&[k, 0, 0])).collect();
    assert_eq!(firsts, [0.0, 0.0, 1.0]);
    let v5 = vol([5, 2, 2], |i| (i / 4) as f32);
    let mid: Vec<f32> = (0..3).map(|k| extract_slab(&v5, 2, 1).unwrap().at(&[k, 0, 0])).collect();
    assert_eq!(mid, [1.0, 2.0, 3.0]);
    assert_eq!(extract_slab(&v5, 3, 0).unwrap(), v5.slice(3).reshape(vec![1, 2, 2]));
}

#[test]
fn mask_without_matching_shape_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let v = vol([2, 3, 3], |i| i as f32);
    assert!(write_volume(&v, Some(&Mask::zeros([2, 3, 4])), dir.path()).is_err());
}

#[test]
fn invalid_volumes_are_rejected() {
    assert!(CtVolume::new("x", Tensor::from_vec(vec![1, 1, 2], vec![0.0, f32::NAN]), [1.0; 3]).is_err());
    assert!(CtVolume::new("x", Tensor::zeros(vec![1, 1, 2]), [1.0, 0.0, 1.0]).is_err());
}

proptest! {
    #[test]
    fn preprocess_standardizes(values in prop::collection::vec(0.0f32..140.0, 24)) {
        let v = CtVolume::new("p", Tensor::from_vec(vec![2, 3, 4], values), [1.0; 3]).unwrap();
        match preprocess(&v) {
            Ok(p) => {
                let (m, s) = stats(&p);
                prop_assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "mean {} std {}", m, s);
            }
            Err(e) => prop_assert!(matches!(e, Error::Degenerate(_))),
        }
    }

    #[test]
    fn slab_depth_is_fixed(d in 1usize..8, t in 0usize..4, c in 0usize..8) {
        let c = c % d;
        let v = vol([d, 2, 3], |i| i as f32);
        let slab = extract_slab(&v, c, t).unwrap();
        prop_assert_eq!(slab.shape(), &[2 * t + 1, 2, 3]);
    }

    #[test]
    fn io_round_trip_is_bit_exact(bits in prop::collection::vec(any::<u32>(), 12), mask in prop::collection::vec(any::<bool>(), 12)) {
        let data: Vec<f32> = bits.into_iter().map(|b| {
            let f = f32::from_bits(b);
            if f.is_finite() { f } else { 0.0 }
        }).collect();
        let v = CtVolume::new("rt", Tensor::from_vec(vec![1, 3, 4], data), [2.5, 0.5, 0.5]).unwrap();
        let m = Mask::new([1, 3, 4], mask.into_iter().map(u8::from).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_volume(&v, Some(&m), dir.path()).unwrap();
        let (back, bm) = read_volume(&path).unwrap();
        let same = back.voxels().data().iter().zip(v.voxels().data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        prop_assert_eq!(bm.unwrap(), m);
    }
}
