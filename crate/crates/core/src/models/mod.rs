//! GNN architectures over the autodiff tape, and the adjacency generator.
//!
//! A network is described by a [`GnnSpec`] and its weights by [`GnnParams`].
//! A forward pass needs a propagation [`Plan`] (which operator each hop
//! multiplies by, and on which rows) and an [`Input`] feature matrix whose
//! rows match the plan's input rows.

mod forward;
mod generator;
mod plan;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use forward::{forward, Mode};
pub use generator::{generate_adjacency, generate_adjacency_value, AdjGenParams};
pub use plan::{GraphOperators, Hop, Input, Operator, Plan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sgc,
    Mlp,
    Sage,
    Appnp,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Gcn, Arch::Sgc, Arch::Mlp, Arch::Sage, Arch::Appnp];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sgc => "sgc",
            Arch::Mlp => "mlp",
            Arch::Sage => "sage",
            Arch::Appnp => "appnp",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sgc" => Ok(Arch::Sgc),
            "mlp" => Ok(Arch::Mlp),
            "sage" | "graphsage" => Ok(Arch::Sage),
            "appnp" => Ok(Arch::Appnp),
            other => Err(Error::InvalidConfig(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnSpec {
    pub arch: Arch,
    pub layers: usize,
    pub hidden: usize,
    /// Only used by training-mode forwards.
    pub dropout: f64,
    pub appnp_alpha: f64,
    pub appnp_k: usize,
}

impl Default for GnnSpec {
    fn default() -> Self {
        Self::new(Arch::Gcn)
    }
}

impl GnnSpec {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            layers: 2,
            hidden: 256,
            dropout: 0.5,
            appnp_alpha: 0.1,
            appnp_k: 10,
        }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidConfig("layers must be at least 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::InvalidConfig("hidden width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.arch == Arch::Appnp && !(0.0..=1.0).contains(&self.appnp_alpha) {
            return Err(Error::InvalidConfig(format!(
                "appnp_alpha {} not in [0, 1]",
                self.appnp_alpha
            )));
        }
        Ok(())
    }

    /// Number of propagation hops a forward pass performs, which is also
    /// the receptive-field radius of an output row.
    pub fn hops(&self) -> usize {
        match self.arch {
            Arch::Gcn | Arch::Sgc | Arch::Sage => self.layers,
            Arch::Mlp => 0,
            Arch::Appnp => self.appnp_k,
        }
    }

    /// Number of weight layers.
    fn weight_layers(&self) -> usize {
        match self.arch {
            Arch::Sgc => 1,
            _ => self.layers,
        }
    }
}

/// Weights of one layer. `neighbor` is the second half of a SAGE weight
/// (the block multiplying the mean-neighbour features).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub neighbor: Option<Tensor>,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub arch: Arch,
    pub layers: Vec<Layer>,
}

/// Tape handles for a [`GnnParams`], in [`GnnParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Wrap handles that are already on a tape, in [`GnnParams::tensors`]
    /// order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl GnnParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.value().rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.value().cols()).unwrap_or(0)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(n) = &l.neighbor {
                out.push(n);
            }
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(n) = &mut l.neighbor {
                out.push(n);
            }
            out.push(&mut l.bias);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.value().data().len()).sum()
    }

    /// Copy the weights onto `tape`. With `track` false they are recorded as
    /// constants.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundParams {
        BoundParams {
            vars: self
                .tensors()
                .into_iter()
                .map(|t| tape.input(t.value().clone(), track && t.requires_grad()))
                .collect(),
        }
    }

    /// Fold gradients of a tracked binding into the tensors' buffers.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &BoundParams) -> Result<()> {
        for (t, v) in self.tensors_mut().into_iter().zip(&bound.vars) {
            grads.accumulate(*v, t)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::clear_grad);
    }

    pub fn bitwise_eq(&self, other: &GnnParams) -> bool {
        self.arch == other.arch
            && self.tensors().len() == other.tensors().len()
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.value().bitwise_eq(b.value()))
    }
}

pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized above")
}

/// Glorot-uniform weights and zero biases, deterministic per seed. The
/// final layer maps to `out_dim` columns: the class count for a classifier,
/// the embedding width for an embedding network.
pub fn init_params(spec: &GnnSpec, in_dim: usize, out_dim: usize, seed: u64) -> Result<GnnParams> {
    spec.validate()?;
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::InvalidConfig("input and output widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.weight_layers();
    let mut layers = Vec::with_capacity(n);
    for l in 0..n {
        let fan_in = if l == 0 { in_dim } else { spec.hidden };
        let fan_out = if l + 1 == n { out_dim } else { spec.hidden };
        let layer = if spec.arch == Arch::Sage {
            // One (2 * fan_in) x fan_out weight acting on concat(self, mean),
            // stored as its two row blocks.
            let full = glorot(&mut rng, 2 * fan_in, fan_out);
            let top: Vec<usize> = (0..fan_in).collect();
            let bottom: Vec<usize> = (fan_in..2 * fan_in).collect();
            Layer {
                weight: Tensor::param(full.select_rows(&top)),
                neighbor: Some(Tensor::param(full.select_rows(&bottom))),
                bias: Tensor::param(Matrix::zeros(1, fan_out)),
            }
        } else {
            Layer {
                weight: Tensor::param(glorot(&mut rng, fan_in, fan_out)),
                neighbor: None,
                bias: Tensor::param(Matrix::zeros(1, fan_out)),
            }
        };
        layers.push(layer);
    }
    Ok(GnnParams { arch: spec.arch, layers })
}
