//! Branching convolutional network with Hermitian observable kernels.

pub mod conv;
pub mod io;
pub mod network;
pub mod pauli;

pub use conv::{
    backprop_errors, chain_forward, chain_kernel_gradients, conv_layer, global_expectation,
    kernel_gradient, multi_site_expectation, swap_subsystems, BackpropError,
};
pub use io::{read_model, write_model, ModelFile};
pub use network::{
    batch_gradients, batch_loss, batch_step, bce_loss, conv_features, feature_matrix,
    features_from_correlations, head_predict, model_backward, model_forward, path_forward,
    path_forward_complex, pauli_correlations, Architecture, BatchResult, ConvPath, Correlations,
    DenseLayer, ModelParams, EPS_CLIP,
};
pub use pauli::{kernel_to_matrix, pauli_decompose, PauliKernel};
