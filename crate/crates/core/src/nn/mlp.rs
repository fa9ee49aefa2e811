use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// Affine layer `y = act(W x + b)` with `W` stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dims(format!(
                "bias of length {} for a {}x{} weight",
                bias.len(),
                weight.rows(),
                weight.cols()
            )));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Dense {
            weight,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        Dense {
            weight: Matrix::from_raw(output, input, data),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight.transpose())?;
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
            if self.activation == Activation::Relu {
                for v in row.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        Ok(z)
    }
}

/// Gradient of one [`Dense`] layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, shaped like the network they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.output_dim(), l.input_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    /// `self += other`, layer by layer.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::dims("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_scaled(1.0, &b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.as_slice().iter().all(|&v| v == 0.0) && l.bias.iter().all(|&v| v == 0.0)
        })
    }
}

/// Activations recorded by [`Mlp::forward`] and consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of every layer.
    inputs: Vec<Matrix>,
    /// Post-activation output of every layer.
    outputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("cache of an empty network")
    }
}

/// Feed-forward stack of [`Dense`] layers. Serves as encoder, classifier
/// head and domain discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

pub type MlpEncoder = Mlp;

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dims(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// Glorot-initialised network through `dims` (`dims.len() - 1` layers),
    /// ReLU on every hidden layer and `output` on the last.
    pub fn init(dims: &[usize], output: Activation, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer dims {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { Activation::Relu };
                Dense::glorot(dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Mlp::new(layers)
    }

    /// `n_layers` affine layers `input → hidden → … → output`, ReLU hidden,
    /// identity output.
    pub fn encoder(
        input: usize,
        hidden: usize,
        output: usize,
        n_layers: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::InvalidArgument("encoder needs at least one layer".into()));
        }
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, n_layers - 1));
        dims.push(output);
        Mlp::init(&dims, Activation::Identity, rng)
    }

    /// Single identity layer with `W = I`, `b = 0`.
    pub fn identity(dim: usize) -> Self {
        Mlp {
            layers: vec![Dense {
                weight: Matrix::identity(dim),
                bias: vec![0.0; dim],
                activation: Activation::Identity,
            }],
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(format!(
                "network expects {} inputs, batch has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let out = layer.forward(&cur)?;
            inputs.push(cur);
            cur = out;
            outputs.push(cur.clone());
        }
        if !cur.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((cur, ForwardCache { inputs, outputs }))
    }

    /// Forward pass without recording a cache.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut cur = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            cur = layer.forward(&cur)?;
        }
        if !cur.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(cur)
    }

    /// Backpropagates `grad_out` (d loss / d output) through the network.
    /// Returns parameter gradients and d loss / d input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<(Gradients, Matrix)> {
        let (g, gx) = self.backward_impl(cache, grad_out, true)?;
        Ok((g, gx.expect("input gradient requested")))
    }

    /// Like [`Mlp::backward`] but skips the input gradient.
    pub fn backward_params(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<Gradients> {
        Ok(self.backward_impl(cache, grad_out, false)?.0)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        grad_out: &Matrix,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Matrix>)> {
        if cache.inputs.len() != self.layers.len() || cache.outputs.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "forward cache does not belong to this network".into(),
            ));
        }
        let out = cache.output();
        if grad_out.shape() != out.shape() {
            return Err(Error::dims(format!(
                "upstream gradient {:?} for output {:?}",
                grad_out.shape(),
                out.shape()
            )));
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                let a = &cache.outputs[i];
                for (gv, &av) in g.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    if av <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let x = &cache.inputs[i];
            let gw = g.transpose().matmul(x)?;
            let mut gb = vec![0.0; layer.output_dim()];
            for r in 0..g.rows() {
                for (b, v) in gb.iter_mut().zip(g.row(r)) {
                    *b += v;
                }
            }
            grads.push(LayerGrad {
                weight: gw,
                bias: gb,
            });
            if i > 0 || want_input_grad {
                g = g.matmul(&layer.weight)?;
            }
        }
        grads.reverse();
        let gx = want_input_grad.then_some(g);
        Ok((Gradients { layers: grads }, gx))
    }
}
