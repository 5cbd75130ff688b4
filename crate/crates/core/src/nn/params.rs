use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::graph::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

/// Shape entry written into checkpoint manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Glorot-uniform initialised `fan_in × fan_out` matrix.
    pub fn add_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("valid glorot range");
        let m = Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng));
        self.add(name, m)
    }

    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("valid std");
        let m = Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng));
        self.add(name, m)
    }

    pub fn add_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, Array2::from_elem((rows, cols), v))
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamShape {
                name: n.clone(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect()
    }

    /// All values, parameter by parameter, row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in &self.tensors {
            out.extend(t.iter().copied());
        }
        out
    }

    /// Overwrite values from a flat buffer laid out as [`flatten`](Self::flatten).
    pub fn load_flat(&mut self, shapes: &[ParamShape], flat: &[f64]) -> Result<(), String> {
        if shapes.len() != self.tensors.len() {
            return Err(format!(
                "checkpoint has {} tensors, model expects {}",
                shapes.len(),
                self.tensors.len()
            ));
        }
        let mut pos = 0;
        for ((shape, t), name) in shapes.iter().zip(self.tensors.iter_mut()).zip(&self.names) {
            if shape.name != *name || shape.rows != t.nrows() || shape.cols != t.ncols() {
                return Err(format!(
                    "tensor {name} {}x{} does not match checkpoint entry {} {}x{}",
                    t.nrows(),
                    t.ncols(),
                    shape.name,
                    shape.rows,
                    shape.cols
                ));
            }
            let n = t.len();
            let chunk = flat
                .get(pos..pos + n)
                .ok_or_else(|| format!("weight blob too short at tensor {name}"))?;
            t.iter_mut().zip(chunk).for_each(|(d, s)| *d = *s);
            pos += n;
        }
        if pos != flat.len() {
            return Err(format!("weight blob has {} trailing values", flat.len() - pos));
        }
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`]; parameters untouched by a
/// forward pass stay `None`.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<Mat>>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Mat) {
        match &mut self.grads[id.0] {
            Some(existing) => *existing += g,
            slot @ None => *slot = Some(g.as_standard_layout().into_owned()),
        }
    }

    pub fn merge(&mut self, other: &ParamGrads) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.iter_mut().flatten() {
            *g *= c;
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads[id.0].as_ref()
    }

    pub fn all_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}
