//! E(n)-equivariant graph network for binding affinity prediction.
//!
//! Scalar predictions are invariant under rigid motions because node
//! features only ever see interatomic distances; the optional coordinate
//! stream updates positions equivariantly for the diffusion objective.
//! Includes two pre-training tasks (interaction-energy regression and
//! coordinate denoising) and the two-stage transfer procedure.

mod model;
mod pretrain;
mod train;
mod transfer;

pub use model::{
    forward, rbf_expand, EgnnConfig, EgnnOutput, EgnnParams, ForwardStats, AUX_CHANNEL,
};
pub use pretrain::{
    center_graph, com_free_noise, noised_coords, pretrain_diffusion, pretrain_qm, qm_targets,
    DiffusionConfig, DiffusionSchedule, QmMolecule,
};
pub use train::{
    evaluate_mse, loss_and_grads, predict, train, EpochStats, LabeledGraph, TrainConfig,
    TrainOutcome,
};
pub use transfer::{match_backbone, transfer, TransferConfig, TransferOutcome};

#[derive(Debug, thiserror::Error)]
pub enum EgnnError {
    #[error("node class {class} outside the {vocab}-class element vocabulary")]
    VocabMismatch { class: usize, vocab: usize },
    #[error("graph form {graph:?} does not match model form {model:?}")]
    FormMismatch {
        graph: affbench_core::molgraph::GraphForm,
        model: affbench_core::molgraph::GraphForm,
    },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("need at least {need} training graphs, got {got}")]
    TooFewGraphs { need: usize, got: usize },
    #[error("backbone shape mismatch for tensors: {0:?}")]
    BackboneShapeMismatch(Vec<String>),
    #[error("element {element} missing from the self-energy table")]
    MissingSelfEnergy { element: u8 },
    #[error("schedule violates alpha^2 + sigma^2 = 1 at step {step} (residual {residual:.3e})")]
    BadSchedule { step: usize, residual: f64 },
    #[error(transparent)]
    Grad(#[from] affbench_gradkit::GradError),
}

pub type Result<T> = std::result::Result<T, EgnnError>;
