//! GRU encoder-decoder generator: seq2seq (query only) and biseq2seq
//! (query plus retrieved reply), trained with backpropagation through time
//! and AdaDelta.

mod adadelta;
mod backprop;
mod checkpoint;
mod decode;
mod gru;
mod model;
mod tensor;
mod train;

pub use adadelta::{adadelta_step, AdaDeltaConfig, OptimizerState, DEFAULT_EPSILON, DEFAULT_RHO};
pub use backprop::{backward, batch_loss, forward_loss, BatchStats, ForwardOutput, Triple};
pub use checkpoint::{
    decode_payload, encode_payload, CheckpointManifest, Generator, TensorEntry, CHECKPOINT_VERSION,
};
pub use decode::{generate, DecodeConfig};
pub use gru::GruParams;
pub use model::{
    cross_entropy, log_softmax, softmax, Architecture, BridgeParams, DecoderParams, EncoderParams,
    GeneratorModel, ModelDims, INIT_SCALE, PROB_FLOOR,
};
pub use tensor::{TensorMut, TensorRef};
pub use train::{perplexity, perplexity_batched, train, EpochRecord, TrainConfig, TrainHistory};
