pub mod infer;
pub mod loss;
pub mod net;
pub mod rigid;
pub mod train;

pub use infer::{align_mask, align_volume, estimate_volume_params, tissue_slices, unalign_volume};
pub use loss::{alignment_loss, alignment_loss_vars, AlignmentLoss};
pub use net::AlignmentNet;
pub use rigid::{apply_rigid, invert_params, rigid_matrix, rigid_warp, warp_image, RigidParams, WarpDirection};
pub use train::{curve_csv, train_alignment, AlignConfig, AlignCurveRow, AlignDataset, AlignTraining};
