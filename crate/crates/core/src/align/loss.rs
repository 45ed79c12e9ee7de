use sean_tensor::{Graph, Real, Tensor, Var};

use crate::align::rigid::{rigid_warp, RigidParams, WarpDirection};

/// Symmetry and restoration terms of the unsupervised alignment objective.
#[derive(Clone, Copy)]
pub struct AlignmentLossVars<'g, T: Real> {
    pub total: Var<'g, T>,
    pub symmetry: Var<'g, T>,
    pub restoration: Var<'g, T>,
}

/// `images [N, H, W]`, normalized `alpha [N, 3]`. Both terms are mean
/// absolute differences over every pixel of the batch:
/// symmetry compares the warped slice with its mirror image, restoration
/// compares the slice with the warp undone.
pub fn alignment_loss_vars<'g, T: Real>(images: Var<'g, T>, alpha: Var<'g, T>) -> AlignmentLossVars<'g, T> {
    let warped = rigid_warp(images, alpha, WarpDirection::Forward);
    let symmetry = warped.sub(warped.flip(2)).abs().mean();
    let restored = rigid_warp(warped, alpha, WarpDirection::Inverse);
    let restoration = restored.sub(images).abs().mean();
    AlignmentLossVars { total: symmetry.add(restoration), symmetry, restoration }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentLoss {
    pub total: f64,
    pub symmetry: f64,
    pub restoration: f64,
}

/// Loss of a single `[H, W]` slice under `alpha` (pixel units).
pub fn alignment_loss<T: Real>(slice: &Tensor<T>, alpha: &RigidParams) -> AlignmentLoss {
    let (h, w) = (slice.dim(0), slice.dim(1));
    let g = Graph::new();
    let img = g.constant(slice.clone().reshape(vec![1, h, w]));
    let a = g.constant(Tensor::from_vec(vec![1, 3], alpha.to_normalized(h, w).map(T::lit).to_vec()));
    let l = alignment_loss_vars(img, a);
    let f = |v: Var<'_, T>| v.value().item().to_f64_lossy();
    AlignmentLoss { total: f(l.total), symmetry: f(l.symmetry), restoration: f(l.restoration) }
}
