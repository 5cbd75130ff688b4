//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Every operation appends a node to the tape; [`Graph::backward`] walks the
//! tape in reverse and returns gradients aligned to the parameter store.

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamGrads, ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;
const LN_EPS: f64 = 1e-5;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
            }
            Activation::Identity => 1.0,
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    Act(Var, Activation),
    MaskMul(Var, Mat),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Mat,
        inv_std: Vec<f64>,
    },
    GatherRows(Var, Vec<usize>),
    MeanRows(Var, Vec<usize>),
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Mat,
    },
    SumAll(Var),
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Row vector input.
    pub fn row(&mut self, v: &[f64]) -> Var {
        let m = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
        self.input(m)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        debug_assert_eq!(b.nrows(), 1);
        let v = self.value(a) + b;
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn act(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let v = self.value(a).mapv(|x| act.apply(x));
        self.push(v, Op::Act(a, act))
    }

    /// Multiply by a constant mask (used for dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Mat) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::MaskMul(a, mask))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows: col mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous row"));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut normed = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in normed.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &normed * self.value(gain) + self.value(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        )
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &rows);
        self.push(v, Op::GatherRows(a, rows))
    }

    /// Mean over the given rows, as a `1 × cols` matrix.
    pub fn mean_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        assert!(!rows.is_empty(), "mean_rows over an empty row set");
        let src = self.value(a);
        let mut acc = Array2::zeros((1, src.ncols()));
        for &r in &rows {
            acc.row_mut(0).zip_mut_with(&src.row(r), |o, x| *o += x);
        }
        acc /= rows.len() as f64;
        self.push(acc, Op::MeanRows(a, rows))
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Var {
        let mut probs = self.value(logits).clone();
        assert_eq!(probs.nrows(), labels.len());
        let mut loss = 0.0;
        for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
            let lse = log_sum_exp(row.as_slice().expect("contiguous row"));
            loss += lse - row[y];
            row.mapv_inplace(|v| (v - lse).exp());
        }
        loss /= labels.len() as f64;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), v), Op::SumAll(a))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Reverse pass from a scalar node; returns gradients for every parameter
    /// that took part in the forward pass.
    pub fn backward(&self, loss: Var) -> ParamGrads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones(self.value(loss).raw_dim()));
        let mut out = ParamGrads::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Abs(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= sign(x));
                    acc(&mut grads, *a, ga);
                }
                Op::Act(a, act) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(self.nodes[idx].value.as_ref().expect("act value"))
                        .for_each(|gv, &x, &y| *gv *= act.derivative(x, y));
                    acc(&mut grads, *a, ga);
                }
                Op::MaskMul(a, mask) => acc(&mut grads, *a, g * mask),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax value");
                    let mut ga = g;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = grow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut grow)
                            .and(&yrow)
                            .for_each(|gv, &yv| *gv = yv * (*gv - dot));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gainv = self.value(*gain);
                    let ggain = (&g * normed).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gxhat = &g * gainv;
                    let n = normed.ncols() as f64;
                    let mut gx = Array2::zeros(normed.raw_dim());
                    for r in 0..normed.nrows() {
                        let gh = gxhat.row(r);
                        let xh = normed.row(r);
                        let sum_g: f64 = gh.sum();
                        let sum_gx: f64 = gh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
                        let is = inv_std[r];
                        for c in 0..normed.ncols() {
                            gx[[r, c]] = is / n * (n * gh[c] - sum_g - xh[c] * sum_gx);
                        }
                    }
                    acc(&mut grads, *gain, ggain);
                    acc(&mut grads, *bias, gbias);
                    acc(&mut grads, *x, gx);
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (i, &r) in rows.iter().enumerate() {
                        ga.row_mut(r).zip_mut_with(&g.row(i), |o, x| *o += x);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MeanRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    let k = rows.len() as f64;
                    for &r in rows {
                        ga.row_mut(r).zip_mut_with(&g.row(0), |o, x| *o += x / k);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    probs,
                } => {
                    let scale = g[[0, 0]] / labels.len() as f64;
                    let mut gl = probs.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        gl[[r, y]] -= 1.0;
                    }
                    gl *= scale;
                    acc(&mut grads, *logits, gl);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
}
