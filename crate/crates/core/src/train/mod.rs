pub mod loss;
pub mod schedule;
pub mod seg;

pub use loss::{combined_loss, combined_loss_vars, generalized_dice_loss, generalized_dice_vars, GDL_EPS};
pub use schedule::poly_lr;
pub use seg::{log_csv, prepare_cases, train_model, train_segmentation, SegDataset, SegSample, SegTraining, TrainConfig, TrainLogRow};
