//! Differentiable tensor core, transformer encoder-decoder, CTC, decoding,
//! training, checkpoints and fine-tuning.

pub mod checkpoint;
pub mod ctc;
pub mod decode;
pub mod finetune;
pub mod gradcheck;
pub mod graph;
pub mod hparams;
pub mod model;
pub mod optim;
pub mod params;
mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, NamedTensor};
pub use ctc::{collapse, ctc_brute_force, ctc_log_likelihood, decode_recognition};
pub use decode::{decode_translation, DecodeMode};
pub use finetune::{finetune_load, FinetunePolicy, FinetuneReport};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use hparams::Hyperparameters;
pub use model::{pool_frames, positional_encoding, Encoded, Mode, ModelConfig, TransformerModel};
pub use optim::Adam;
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
pub use train::{
    dev_perplexity, joint_loss, joint_step, predict, prepare_examples, token_logprobs, train, EpochLog, Example,
    FreezeEntry, FreezeSchedule, JointLoss, LossGraph, Prediction, TrainOptions, TrainOutcome,
};
