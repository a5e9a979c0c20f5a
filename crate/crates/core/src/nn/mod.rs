//! Small reverse-mode numerical core: dense layers, LSTM/GRU with BPTT,
//! additive attention, an autoencoder, losses and optimizers.

mod attention;
mod autoencoder;
mod dense;
mod gru;
mod loss;
mod lstm;
mod network;
mod optim;
mod tensor;

pub use attention::{softmax, Attention, AttentionTrace};
pub use autoencoder::{Autoencoder, AutoencoderTrace, DenseStack, Layer, AGGREGATED_CODE_DIM, SERIES_CODE_DIM};
pub use dense::{sigmoid, Activation, Dense, DropoutMask};
pub use gru::{GruLayer, GruTrace};
pub use loss::{bce_probability, bce_with_logits, mse, success_probability, LOGIT_CLAMP};
pub use lstm::{LstmLayer, LstmTrace};
pub use network::{Architecture, Classifier, LossParts, Network, NetworkKind, Prediction, RecurrentLayer};
pub use optim::{Adam, RmsProp, DEFAULT_LEARNING_RATE};
pub use tensor::{Params, Tensor};
