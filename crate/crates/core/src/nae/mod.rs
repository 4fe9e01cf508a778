//! Non-negative autoencoders.
//!
//! Every layer is `Y_i = softplus(W_i · Y_{i−1})`, so the latent code and
//! the reconstruction are strictly positive even though the weights are
//! signed. Models are trained full-batch with iRprop− on
//! `D(X, X̂) + λ‖H‖₁`, where `D` is the generalized KL divergence.
//!
//! For separation only the decoder is kept; [`nae_fit_latents`] and
//! [`fit_latents_joint`] estimate its inputs for new spectrograms.

mod latent;
mod model;
mod train;

pub use latent::{
    fit_latents_joint, joint_latent_gradients, joint_latent_objective, nae_fit_latents, JointLatentFit, LatentFit,
};
pub use model::{uniform_layer_sizes, validate_layer_sizes, Decoder, ForwardCache, NaeModel, TrainingMetadata};
pub use train::{nae_gradients, nae_objective, nae_train, TrainConfig, TrainedNae};
