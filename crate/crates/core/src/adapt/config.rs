use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::nn::AdamConfig;

/// RNG streams derived from [`TrainConfig::seed`]. Keeping them apart lets
/// domain-adversarial training with `λ = 0` replay source-only training
/// exactly: the encoder and speaker head see the same initial weights and
/// the same source minibatches.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_DOMAIN_HEAD: u64 = 2;
pub(crate) const STREAM_SRC_BATCHES: u64 = 3;
pub(crate) const STREAM_TGT_BATCHES: u64 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Width of every hidden layer (encoder, heads, discriminator).
    pub hidden: usize,
    /// Encoder output width; `None` keeps the input dimension.
    pub embed_dim: Option<usize>,
    pub encoder_layers: usize,
    pub disc_hidden_layers: usize,
    /// Weight of the reversed domain gradient.
    pub lambda: f64,
    /// Discriminator and mapping updates per minibatch pair.
    pub disc_steps: usize,
    pub map_steps: usize,
    /// Start the discriminator with a zeroed output layer (logit 0 everywhere).
    pub blind_discriminator: bool,
    /// Adam first-moment decay.
    pub beta1: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 1e-4,
            seed: 0,
            hidden: 512,
            embed_dim: None,
            encoder_layers: 3,
            disc_hidden_layers: 2,
            lambda: 1.0,
            disc_steps: 1,
            map_steps: 1,
            blind_discriminator: false,
            beta1: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.hidden == 0 || self.embed_dim == Some(0) {
            return bad("layer widths must be positive");
        }
        if self.encoder_layers == 0 || self.disc_hidden_layers == 0 {
            return bad("encoder and discriminator need at least one layer");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1 must be in [0, 1)");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.disc_steps == 0 || self.map_steps == 0 {
            return bad("discriminator and mapping step counts must be positive");
        }
        Ok(())
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            ..AdamConfig::default()
        }
    }

    pub(crate) fn rng(&self, stream: u64) -> Rng {
        Rng::with_stream(self.seed, stream)
    }

    /// Minibatches per epoch: one pass over the larger of the two sets.
    pub(crate) fn steps_per_epoch(&self, n_a: usize, n_b: usize) -> usize {
        n_a.max(n_b).div_ceil(self.batch_size)
    }
}

/// Shuffled minibatches without replacement; a new permutation is drawn
/// each time the data is exhausted, so the smaller set cycles. The last
/// batch of a pass may be short.
pub(crate) struct Batcher {
    n: usize,
    batch: usize,
    rng: Rng,
    perm: Vec<usize>,
    pos: usize,
}

impl Batcher {
    pub fn new(n: usize, batch: usize, rng: Rng) -> Self {
        Batcher {
            n,
            batch,
            rng,
            perm: Vec::new(),
            pos: 0,
        }
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos >= self.perm.len() {
            self.perm = self.rng.permutation(self.n);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos = (start + self.batch).min(self.n);
        &self.perm[start..self.pos]
    }
}

/// Per-epoch training curves, written as `epoch<TAB>loss_name<TAB>value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    entries: Vec<(usize, String, f64)>,
}

impl LossTrace {
    pub fn push(&mut self, epoch: usize, name: &str, value: f64) {
        self.entries.push((epoch, name.to_owned(), value));
    }

    pub fn entries(&self) -> &[(usize, String, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Values of one curve in epoch order.
    pub fn series(&self, name: &str) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|(_, n, _)| n == name)
            .map(|(_, _, v)| *v)
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss_name\tvalue\n");
        for (e, n, v) in &self.entries {
            writeln!(out, "{e}\t{n}\t{v}").unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Running means of named quantities over one epoch.
#[derive(Default)]
pub(crate) struct EpochMeans {
    sums: Vec<(&'static str, f64, usize)>,
}

impl EpochMeans {
    pub fn add(&mut self, name: &'static str, v: f64) {
        match self.sums.iter_mut().find(|(n, _, _)| *n == name) {
            Some(s) => {
                s.1 += v;
                s.2 += 1;
            }
            None => self.sums.push((name, v, 1)),
        }
    }

    pub fn flush(self, epoch: usize, trace: &mut LossTrace) {
        for (n, s, c) in self.sums {
            trace.push(epoch, n, s / c as f64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_each_pass() {
        let mut b = Batcher::new(5, 2, Rng::new(1));
        let mut pass: Vec<usize> = Vec::new();
        for _ in 0..3 {
            pass.extend_from_slice(b.next_batch());
        }
        assert_eq!(pass.len(), 5);
        pass.sort_unstable();
        assert_eq!(pass, vec![0, 1, 2, 3, 4]);
        assert_eq!(b.next_batch().len(), 2);
    }

    #[test]
    fn trace_tsv() {
        let mut t = LossTrace::default();
        t.push(1, "ce", 0.5);
        t.push(2, "ce", 0.25);
        assert_eq!(t.to_tsv(), "epoch\tloss_name\tvalue\n1\tce\t0.5\n2\tce\t0.25\n");
        assert_eq!(t.series("ce"), vec![0.5, 0.25]);
    }

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.lr, c.lambda), (100, 128, 1e-4, 1.0));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { lambda: -1.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
    }
}
