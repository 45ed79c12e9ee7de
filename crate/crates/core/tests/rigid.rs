use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use sean_core::align::rigid::compose;
use sean_core::align::{apply_rigid, invert_params, rigid_matrix, warp_image, RigidParams, WarpDirection};
use sean_tensor::Tensor;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn quarter_turn_matrix() {
    let m = rigid_matrix(&RigidParams::new(FRAC_PI_2, 0.0, 0.0), (9, 9));
    let want = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]];
    for r in 0..2 {
        for c in 0..3 {
            assert!(close(m[r][c], want[r][c]), "{m:?}");
        }
    }
}

#[test]
fn identity_warp_is_bit_exact() {
    let img = Tensor::from_fn(vec![7, 10], |i| (i as f32 * 0.731).sin());
    assert_eq!(apply_rigid(&img, &RigidParams::IDENTITY), img);
    assert_eq!(warp_image(&img, &RigidParams::IDENTITY, WarpDirection::Inverse), img);
}

#[test]
fn integer_shift_moves_an_impulse() {
    let mut img = Tensor::<f64>::zeros(vec![9, 9]);
    img.data_mut()[4 * 9 + 4] = 1.0;
    let out = apply_rigid(&img, &RigidParams::new(0.0, 2.0, -1.0));
    assert_eq!(out.at(&[3, 6]), 1.0);
    assert_eq!(out.data().iter().sum::<f64>(), 1.0);
}

#[test]
fn quarter_turn_is_a_pixel_permutation() {
    // Positive angles turn +x towards +y in (column, row) coordinates.
    let mut img = Tensor::<f64>::zeros(vec![5, 5]);
    img.data_mut()[2 * 5 + 3] = 1.0;
    let out = apply_rigid(&img, &RigidParams::new(FRAC_PI_2, 0.0, 0.0));
    assert!((out.at(&[3, 2]) - 1.0).abs() < 1e-12);
    assert!(out.data().iter().map(|v| v.abs()).sum::<f64>() - 1.0 < 1e-9);
}

#[test]
fn inverse_warp_undoes_forward_in_the_interior() {
    let img = Tensor::from_fn(vec![32, 32], |i| {
        let (y, x) = ((i / 32) as f64, (i % 32) as f64);
        ((x - 15.5) / 6.0).powi(2).neg_exp() * ((y - 15.5) / 7.0).powi(2).neg_exp()
    });
    let a = RigidParams::from_degrees(8.0, 1.5, -0.5);
    let back = warp_image(&apply_rigid(&img, &a), &a, WarpDirection::Inverse);
    let err = back.sub(&img).max_abs();
    assert!(err < 0.05, "{err}");
}

trait NegExp {
    fn neg_exp(self) -> f64;
}

impl NegExp for f64 {
    fn neg_exp(self) -> f64 {
        (-self).exp()
    }
}

proptest! {
    #[test]
    fn inverse_composes_to_identity(theta in -1.0f64..1.0, tx in -20.0f64..20.0, ty in -20.0f64..20.0, h in 8usize..64, w in 8usize..64) {
        let a = RigidParams::new(theta, tx, ty);
        let m = compose(&rigid_matrix(&invert_params(&a), (h, w)), &rigid_matrix(&a, (h, w)));
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        for r in 0..2 {
            for c in 0..3 {
                prop_assert!((m[r][c] - id[r][c]).abs() < 1e-9);
            }
        }
        let twice = invert_params(&invert_params(&a));
        prop_assert!(close(twice.theta, a.theta) && (twice.tx - a.tx).abs() < 1e-9 && (twice.ty - a.ty).abs() < 1e-9);
    }

    #[test]
    fn normalized_round_trip(theta in -3.0f64..3.0, tx in -30.0f64..30.0, ty in -30.0f64..30.0, h in 2usize..300, w in 2usize..300) {
        let a = RigidParams::new(theta, tx, ty);
        let b = RigidParams::from_normalized(a.to_normalized(h, w), h, w);
        prop_assert!((a.tx - b.tx).abs() < 1e-9 && (a.ty - b.ty).abs() < 1e-9 && a.theta == b.theta);
    }
}
