use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::par::{self, Exec};
use crate::{rng, Error, Result};

/// Fully connected layer `y = W x + b` with gradient and momentum buffers.
///
/// `weight` is `out_dim x in_dim`. Only the parameters are serialized; the
/// gradient and momentum buffers are rebuilt as zeros on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayerSnapshot", try_from = "LayerSnapshot")]
pub struct LinearLayer {
    pub(crate) weight: Tensor2,
    pub(crate) bias: Vec<f64>,
    pub(crate) weight_grad: Tensor2,
    pub(crate) bias_grad: Vec<f64>,
    pub(crate) weight_velocity: Tensor2,
    pub(crate) bias_velocity: Vec<f64>,
}

/// Serialized form of a [`LinearLayer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major, `out_dim` rows of `in_dim` values.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<LinearLayer> for LayerSnapshot {
    fn from(l: LinearLayer) -> Self {
        LayerSnapshot { in_dim: l.in_dim(), out_dim: l.out_dim(), weight: l.weight.into_values(), bias: l.bias }
    }
}

impl TryFrom<LayerSnapshot> for LinearLayer {
    type Error = Error;

    fn try_from(s: LayerSnapshot) -> Result<Self> {
        let weight = Tensor2::new(s.out_dim, s.in_dim, s.weight)?;
        if s.bias.len() != s.out_dim {
            return Err(Error::Dimension(format!("bias of length {} for out_dim {}", s.bias.len(), s.out_dim)));
        }
        LinearLayer::from_parts(weight, s.bias)
    }
}

pub fn he_std(in_dim: usize) -> f64 {
    (2.0 / in_dim as f64).sqrt()
}

/// Re-draws the weights of `layer` from `N(0, 2 / in_dim)` and zeroes its bias.
pub fn he_init(mut layer: LinearLayer, seed: u64) -> Result<LinearLayer> {
    if layer.in_dim() == 0 || layer.out_dim() == 0 {
        return Err(Error::Dimension("he_init on a layer with a zero dimension".into()));
    }
    let normal = Normal::new(0.0, he_std(layer.in_dim())).expect("positive std");
    let mut rng = rng::stream(seed);
    for w in layer.weight.values_mut() {
        *w = normal.sample(&mut rng);
    }
    layer.bias.iter_mut().for_each(|b| *b = 0.0);
    layer.zero_grad();
    Ok(layer)
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension(format!("layer {in_dim} -> {out_dim}")));
        }
        Self::from_parts(Tensor2::zeros(out_dim, in_dim), vec![0.0; out_dim])
    }

    pub fn he(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        he_init(Self::zeros(in_dim, out_dim)?, seed)
    }

    pub fn from_parts(weight: Tensor2, bias: Vec<f64>) -> Result<Self> {
        let (out_dim, in_dim) = weight.shape();
        if bias.len() != out_dim {
            return Err(Error::Dimension(format!("bias of length {} for out_dim {out_dim}", bias.len())));
        }
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension(format!("layer {in_dim} -> {out_dim}")));
        }
        Ok(Self {
            weight,
            bias,
            weight_grad: Tensor2::zeros(out_dim, in_dim),
            bias_grad: vec![0.0; out_dim],
            weight_velocity: Tensor2::zeros(out_dim, in_dim),
            bias_velocity: vec![0.0; out_dim],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor2 {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_grad(&self) -> &Tensor2 {
        &self.weight_grad
    }

    pub fn bias_grad(&self) -> &[f64] {
        &self.bias_grad
    }

    pub fn weight_mut(&mut self) -> &mut Tensor2 {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn num_params(&self) -> usize {
        self.weight.values().len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.values_mut().iter_mut().for_each(|g| *g = 0.0);
        self.bias_grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn forward(&self, input: &Tensor2, exec: Exec) -> Result<Tensor2> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, layer expects {}",
                input.cols(),
                self.in_dim()
            )));
        }
        let out_dim = self.out_dim();
        let mut out = vec![0.0; input.rows() * out_dim];
        par::for_each_row(exec, &mut out, out_dim, |r, row| {
            let x = input.row(r);
            for (o, y) in row.iter_mut().enumerate() {
                let w = self.weight.row(o);
                *y = self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        });
        Ok(Tensor2::from_raw(input.rows(), out_dim, out))
    }

    /// Accumulates parameter gradients for `d_out` and returns the gradient
    /// with respect to `input`.
    pub fn backward(&mut self, input: &Tensor2, d_out: &Tensor2) -> Tensor2 {
        let in_dim = self.in_dim();
        let mut d_in = vec![0.0; input.rows() * in_dim];
        for r in 0..input.rows() {
            let x = input.row(r);
            let g = d_out.row(r);
            let dx = &mut d_in[r * in_dim..(r + 1) * in_dim];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                self.bias_grad[o] += go;
                let wg = self.weight_grad.row_mut(o);
                for (k, xk) in x.iter().enumerate() {
                    wg[k] += go * xk;
                }
                let w = self.weight.row(o);
                for (k, wk) in w.iter().enumerate() {
                    dx[k] += go * wk;
                }
            }
        }
        Tensor2::from_raw(input.rows(), in_dim, d_in)
    }
}
