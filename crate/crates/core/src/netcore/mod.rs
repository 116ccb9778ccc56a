//! Tensors, layers, the shared covariate heads and the training loss, with
//! hand-derived gradients.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod params;
mod spec;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{
    grad_check, grad_check_with, relative_error, GradCheckOptions, GradCheckReport, RELATIVE_FLOOR,
};
pub use layers::{BnStats, Mode, BN_EPS};
pub use model::{
    backward, classify, cosine_similarity, cross_entropy, embed_samples, forward_batch,
    forward_embed, loss_from_forward, total_loss, update_running_stats, BranchForward, ForwardPass,
    Gradients, LossReport,
};
pub use params::{Group, HeadParams, LayerParams, ParamStore, Role, Slot};
pub use spec::{LayerSpec, NetworkSpec};
pub use tensor::Tensor;

/// Momentum of the batchnorm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;
