//! Reference encoder, heads, losses, gradients and training in f64.

pub mod encoder;
pub mod heads;
pub mod io;
pub mod objective;
pub mod params;
pub mod tensor;
pub mod train;

pub use encoder::{encode, EncoderInput, Encoded};
pub use heads::{
    best_answer, cell_loss, cell_scores, mlm_loss, rank_spans, span_logits, span_loss, span_scores, CellScores,
    CellTokens, RankedSpan, SpanLogits, TableLayout,
};
pub use io::{load_params, save_params, LoadedParams};
pub use objective::{backward, loss, CellGold, LossReport, LossTerms, SlotGold, TrainTarget};
pub use params::{ModelConfig, ModelParams};
pub use tensor::Tensor;
pub use train::{adamw_step, slot_em, train_toy, AdamHyper, AdamState, TrainConfig, TraceRow, TrainResult};
