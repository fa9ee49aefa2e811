//! Feed-forward networks with hand-derived backpropagation: encoders,
//! speaker and domain heads, the adversarial losses, gradient reversal and
//! Adam.

mod adam;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use loss::{
    accuracy, discriminator_bce, domain_accuracy, mapping_bce, sigmoid, softmax_cross_entropy,
    softplus, BceGrad,
};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, LayerGrad, Mlp, MlpEncoder};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

/// Backward pass of a gradient reversal layer: `-λ · grad`.
/// The forward pass is the identity and needs no function.
pub fn gradient_reversal(grad: &Matrix, lambda: f64) -> Matrix {
    grad.map(|g| -lambda * g)
}

/// Speaker classification head producing one logit per source speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerClassifier {
    net: Mlp,
}

impl SpeakerClassifier {
    /// `input → hidden (ReLU) → n_speakers` logits.
    pub fn new(input: usize, hidden: usize, n_speakers: usize, rng: &mut Rng) -> Result<Self> {
        SpeakerClassifier::from_net(Mlp::init(
            &[input, hidden, n_speakers],
            Activation::Identity,
            rng,
        )?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(Error::InvalidArgument(
                "speaker classifier needs at least two outputs".into(),
            ));
        }
        if net.layers().last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidArgument(
                "speaker classifier must end in raw logits".into(),
            ));
        }
        Ok(SpeakerClassifier { net })
    }

    pub fn n_speakers(&self) -> usize {
        self.net.output_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn into_net(self) -> Mlp {
        self.net
    }
}

/// Domain discriminator ending in a single logit (source = 1).
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDiscriminator {
    net: Mlp,
}

impl DomainDiscriminator {
    /// `hidden_layers` ReLU layers of width `hidden`, then one logit.
    pub fn new(input: usize, hidden: usize, hidden_layers: usize, rng: &mut Rng) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, hidden_layers));
        dims.push(1);
        DomainDiscriminator::from_net(Mlp::init(&dims, Activation::Identity, rng)?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "discriminator must output one logit, not {}",
                net.output_dim()
            )));
        }
        Ok(DomainDiscriminator { net })
    }

    /// Zeroes the output layer so the initial logit is 0 everywhere.
    pub fn blind(mut self) -> Self {
        let last = self.net.layers_mut().last_mut().expect("non-empty network");
        last.weight.as_mut_slice().fill(0.0);
        last.bias.fill(0.0);
        self
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn into_net(self) -> Mlp {
        self.net
    }

    /// One logit per input row.
    pub fn logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.net.infer(x)?.into_vec())
    }
}
