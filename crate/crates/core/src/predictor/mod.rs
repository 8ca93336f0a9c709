//! Per-phone F0 and duration token prediction with cumulative binary targets.

mod checkpoint;
mod model;
mod ordinal;
mod train;

pub use checkpoint::{checkpoint_json, read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use model::{
    loss, position_loss, style_from_tokens, Activations, LabelledPosition, Params, PredictorConfig,
    PredictorFeatures, PredictorModel, PAD, P_CLAMP,
};
pub use ordinal::{decode_ordinal, encode_ordinal, DecodeRule, OrdinalTarget};
pub use train::{
    labelled_positions, loss_trace_csv, model_for, predict_labels, random_labels, score_labels,
    synthetic_rule_corpus, train, utterance_style, Adam, EpochStats, LabelScores, Split,
    TrainingUtterance,
};
