use ndarray::Array2;
use rand::Rng;

use super::graph::{Activation, Graph, Var};
use super::params::{ParamId, ParamStore};

/// Affine map `x·W + b` over row-batched input.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), fan_in, fan_out, rng);
        let bias = store.add_const(format!("{name}.bias"), 1, fan_out, 0.0);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let h = g.matmul(x, w);
        g.add_bias(h, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add_const(format!("{name}.gain"), 1, dim, 1.0),
            bias: store.add_const(format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Inverted dropout. With `rng == None` (evaluation) it is the identity.
pub fn dropout<R: Rng>(g: &mut Graph<'_>, x: Var, rate: f64, rng: Option<&mut R>) -> Var {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).raw_dim();
    let mask = Array2::from_shape_simple_fn((shape[0], shape[1]), || {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.mask_mul(x, mask)
}

/// Stack of dense layers, each followed by the same activation and dropout.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub dropout: f64,
    /// Apply the activation after the last layer as well.
    pub activate_output: bool,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activation: Activation,
        dropout: f64,
        activate_output: bool,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.l{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activation,
            dropout,
            activate_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    pub fn forward<R: Rng>(&self, g: &mut Graph<'_>, x: Var, mut rng: Option<&mut R>) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h);
            if i < last || self.activate_output {
                h = g.act(h, self.activation);
            }
            if i < last {
                h = dropout(g, h, self.dropout, rng.as_deref_mut());
            }
        }
        h
    }
}
