use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sean_core::train::{combined_loss, generalized_dice_loss, poly_lr};
use sean_tensor::Tensor;

/// Two-class generalized Dice written as plain sums over pixels.
fn gdl_oracle(p: &[f64], g: &[f64]) -> f64 {
    let classes = [(p.to_vec(), g.to_vec()), (p.iter().map(|v| 1.0 - v).collect(), g.iter().map(|v| 1.0 - v).collect())];
    let (mut num, mut den) = (0.0, 0.0);
    for (pl, gl) in &classes {
        let gsum: f64 = gl.iter().sum();
        let w = 1.0 / ((gsum + 1e-5) * (gsum + 1e-5));
        let mut inter = 0.0;
        let mut union = 0.0;
        for i in 0..pl.len() {
            inter += pl[i] * gl[i];
            union += pl[i] + gl[i];
        }
        num += w * inter;
        den += w * union;
    }
    1.0 - 2.0 * num / den
}

fn bce_oracle(x: &[f64], g: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&xi, &gi) in x.iter().zip(g) {
        let s = 1.0 / (1.0 + (-xi).exp());
        total -= gi * s.ln() + (1.0 - gi) * (1.0 - s).ln();
    }
    total / x.len() as f64
}

fn case(rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let logits = Tensor::from_fn(vec![4, 4], |_| rng.random_range(-4.0..4.0));
    let target = Tensor::from_fn(vec![4, 4], |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
    (logits, target)
}

#[test]
fn generalized_dice_matches_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (logits, target) = case(&mut rng);
        let probs = logits.map(|v| 1.0 / (1.0 + (-v).exp()));
        let got = generalized_dice_loss(&probs, &target);
        assert!((got - gdl_oracle(probs.data(), target.data())).abs() < 1e-6);
    }
}

#[test]
fn combined_loss_matches_direct_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (logits, target) = case(&mut rng);
        let probs: Vec<f64> = logits.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let want = gdl_oracle(&probs, target.data()) + bce_oracle(logits.data(), target.data());
        assert!((combined_loss(&logits, &target, 1.0, 1.0) - want).abs() < 1e-6);
    }
}

#[test]
fn empty_target_is_finite() {
    let p = Tensor::from_vec(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
    let g = Tensor::<f64>::zeros(vec![2, 2]);
    let l = generalized_dice_loss(&p, &g);
    assert!(l.is_finite() && (0.0..=1.0).contains(&l));
}

#[test]
fn poly_schedule_endpoints() {
    assert_eq!(poly_lr(1e-4, 0, 1000, 0.9).unwrap(), 1e-4);
    assert_eq!(poly_lr(1e-4, 1000, 1000, 0.9).unwrap(), 0.0);
    assert!(poly_lr(1e-4, 1001, 1000, 0.9).is_err());
    assert!(poly_lr(1e-4, 0, 0, 0.9).is_err());
}

proptest! {
    #[test]
    fn poly_schedule_formula(total in 1usize..10_000, frac in 0.0f64..=1.0) {
        let iter = ((total as f64) * frac) as usize;
        let want = 1e-4 * (1.0 - iter as f64 / total as f64).powf(0.9);
        prop_assert_eq!(poly_lr(1e-4, iter, total, 0.9).unwrap(), want);
    }

    #[test]
    fn poly_schedule_is_monotone(total in 2usize..5_000, i in 0usize..4_999) {
        let i = i % total;
        prop_assert!(poly_lr(1e-4, i + 1, total, 0.9).unwrap() <= poly_lr(1e-4, i, total, 0.9).unwrap());
    }
}
