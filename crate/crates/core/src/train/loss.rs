use sean_tensor::{Graph, Real, Tensor, Var};

/// Guards the class weights of empty classes.
pub const GDL_EPS: f64 = 1e-5;

/// Two-class generalized Dice loss of probabilities `p` against a binary
/// target, with class weights `1 / (sum g + eps)^2`. Sums run over every
/// element, so a batch is scored as one image.
pub fn generalized_dice_vars<'g, T: Real>(p: Var<'g, T>, target: &Tensor<T>) -> Var<'g, T> {
    assert_eq!(p.shape(), target.shape(), "dice shape mismatch");
    let g = p.graph();
    let fg = target.clone();
    let bg = target.map(|v| T::one() - v);
    let weight = |t: &Tensor<T>| {
        let s = t.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>();
        1.0 / (s + GDL_EPS).powi(2)
    };
    let (w_fg, w_bg) = (weight(&fg), weight(&bg));
    let q = p.neg().add_scalar(1.0);
    let fg_sum = fg.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>();
    let bg_sum = bg.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>();
    let inter = p.mul(g.constant(fg)).sum().scale(w_fg).add(q.mul(g.constant(bg)).sum().scale(w_bg));
    let union = p.sum().add_scalar(fg_sum).scale(w_fg).add(q.sum().add_scalar(bg_sum).scale(w_bg));
    inter.div(union).scale(-2.0).add_scalar(1.0)
}

#[derive(Clone, Copy)]
pub struct CombinedLossVars<'g, T: Real> {
    pub total: Var<'g, T>,
    pub dice: Var<'g, T>,
    pub ce: Var<'g, T>,
}

/// `w_dice * GDL(sigmoid(logits)) + w_ce * BCE(logits)`.
pub fn combined_loss_vars<'g, T: Real>(logits: Var<'g, T>, target: &Tensor<T>, w_dice: f64, w_ce: f64) -> CombinedLossVars<'g, T> {
    let dice = generalized_dice_vars(logits.sigmoid(), target);
    let ce = logits.bce_with_logits(target);
    CombinedLossVars { total: dice.scale(w_dice).add(ce.scale(w_ce)), dice, ce }
}

pub fn generalized_dice_loss<T: Real>(probabilities: &Tensor<T>, target: &Tensor<T>) -> T {
    let g = Graph::new();
    let v = generalized_dice_vars(g.constant(probabilities.clone()), target);
    v.value().item()
}

pub fn combined_loss<T: Real>(logits: &Tensor<T>, target: &Tensor<T>, w_dice: f64, w_ce: f64) -> T {
    let g = Graph::new();
    let v = combined_loss_vars(g.constant(logits.clone()), target, w_dice, w_ce);
    v.total.value().item()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> Tensor<f64> {
        Tensor::from_vec(vec![3, 3], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let t = target();
        assert!(generalized_dice_loss(&t, &t).abs() < 1e-4);
        let inv = t.map(|v| 1.0 - v);
        assert!((generalized_dice_loss(&inv, &t) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn saturated_logits_give_small_loss() {
        let t = target();
        let logits = t.map(|v| if v > 0.5 { 20.0 } else { -20.0 });
        assert!(combined_loss(&logits, &t, 1.0, 1.0) < 1e-3);
    }

    #[test]
    fn zero_ce_weight_is_pure_dice() {
        let t = target();
        let logits = Tensor::from_fn(vec![3, 3], |i| (i as f64 * 0.9).sin() * 2.0);
        let probs = logits.map(sean_tensor::stable_sigmoid);
        assert_eq!(combined_loss(&logits, &t, 0.7, 0.0), 0.7 * generalized_dice_loss(&probs, &t));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let t = target();
        let logits = t.map(|v| if v > 0.5 { -100.0 } else { 100.0 });
        assert!(combined_loss(&logits, &t, 1.0, 1.0).is_finite());
        assert!(combined_loss(&logits.map(|v| v as f32), &t.map(|v| v as f32), 1.0, 1.0).is_finite());
    }
}
