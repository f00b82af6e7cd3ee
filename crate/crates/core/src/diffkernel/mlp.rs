use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{LinearLayer, Tensor2};
use crate::par::Exec;
use crate::{rng, Error, Result};

/// Stack of fully connected layers with ReLU and dropout between them.
/// The last layer emits raw logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
    dropout: f64,
    init_seed: u64,
}

/// Activations kept by a training forward pass for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Tensor2>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Tensor2>,
    /// Per-unit multiplier applied after ReLU: 0 for dropped units, `1/(1-p)` for kept.
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn dropout_mask(&self, hidden: usize) -> Option<&[f64]> {
        self.masks.get(hidden).and_then(|m| m.as_deref())
    }
}

fn check_chain(layers: &[LinearLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Dimension("network needs at least one layer".into()));
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].out_dim() != pair[1].in_dim() {
            return Err(Error::Dimension(format!(
                "layer {i} emits {} units, layer {} expects {}",
                pair[0].out_dim(),
                i + 1,
                pair[1].in_dim()
            )));
        }
    }
    Ok(())
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

impl Mlp {
    pub fn new(layers: Vec<LinearLayer>, dropout: f64, init_seed: u64) -> Result<Self> {
        check_chain(&layers)?;
        check_dropout(dropout)?;
        Ok(Self { layers, dropout, init_seed })
    }

    /// He-initialized network with the given layer widths, e.g. `[in, hidden, out]`.
    pub fn he(dims: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Dimension("need at least input and output widths".into()));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LinearLayer::he(w[0], w[1], rng::derive_seed(seed, &[rng::TAG_INIT, i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, dropout, seed)
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LinearLayer::num_params).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(LinearLayer::zero_grad);
    }

    /// Inference pass: no dropout, pure function of input and parameters.
    pub fn forward_eval(&self, input: &Tensor2, exec: Exec) -> Result<Tensor2> {
        let mut x = self.layers[0].forward(input, exec)?;
        for layer in &self.layers[1..] {
            relu_in_place(&mut x);
            x = layer.forward(&x, exec)?;
        }
        Ok(x)
    }

    /// Training pass. With `dropout_seed` set, hidden units are dropped with
    /// probability `dropout` and survivors scaled by `1/(1-p)`; with `None`
    /// the pass matches [`Mlp::forward_eval`] but keeps a cache for backprop.
    pub fn forward_train(&self, input: &Tensor2, dropout_seed: Option<u64>) -> Result<(Tensor2, ForwardCache)> {
        let hidden = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(hidden),
            masks: Vec::with_capacity(hidden),
        };
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&x, Exec::Sequential)?;
            cache.inputs.push(x);
            if i == hidden {
                return Ok((z, cache));
            }
            let mut h = z.clone();
            relu_in_place(&mut h);
            let mask = match dropout_seed {
                Some(seed) if self.dropout > 0.0 => {
                    let mask = dropout_mask(
                        h.values().len(),
                        self.dropout,
                        rng::derive_seed(seed, &[rng::TAG_DROPOUT, i as u64]),
                    );
                    h.values_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    Some(mask)
                }
                _ => None,
            };
            cache.pre_activations.push(z);
            cache.masks.push(mask);
            x = h;
        }
        unreachable!("loop returns at the output layer")
    }

    /// Backpropagates `d_logits` through the cached pass, accumulating
    /// parameter gradients. Returns the gradient with respect to the input.
    pub fn backward(&mut self, cache: &ForwardCache, d_logits: &Tensor2) -> Result<Tensor2> {
        if d_logits.cols() != self.out_dim() || d_logits.rows() != cache.inputs[0].rows() {
            return Err(Error::Dimension(format!(
                "logit gradient {:?} for a network emitting {} units over {} rows",
                d_logits.shape(),
                self.out_dim(),
                cache.inputs[0].rows()
            )));
        }
        let mut d = d_logits.clone();
        for i in (0..self.layers.len()).rev() {
            let mut d_in = self.layers[i].backward(&cache.inputs[i], &d);
            if i == 0 {
                return Ok(d_in);
            }
            let pre = &cache.pre_activations[i - 1];
            let mask = cache.masks[i - 1].as_deref();
            for (k, g) in d_in.values_mut().iter_mut().enumerate() {
                let active = pre.values()[k] > 0.0;
                *g = if active { *g * mask.map_or(1.0, |m| m[k]) } else { 0.0 };
            }
            d = d_in;
        }
        unreachable!("loop returns at the input layer")
    }
}

pub(crate) fn relu_in_place(t: &mut Tensor2) {
    t.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

fn dropout_mask(len: usize, p: f64, seed: u64) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    let mut rng = rng::stream(seed);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect()
}

/// Runs `layers` as a network: linear, then ReLU and dropout before every
/// further linear layer. Returns raw logits.
pub fn forward_mlp(
    input: &Tensor2,
    layers: &[LinearLayer],
    dropout_p: f64,
    train_mode: bool,
    rng_seed: u64,
) -> Result<Tensor2> {
    let net = Mlp::new(layers.to_vec(), dropout_p, 0)?;
    if train_mode {
        net.forward_train(input, Some(rng_seed)).map(|(out, _)| out)
    } else {
        net.forward_eval(input, Exec::default())
    }
}
