//! Frozen path: five heads over fixed embeddings and features, joined by a
//! single softmax layer and trained jointly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, Axis};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::training::{fit, fold_splits, job_rng, Trainable, TrainingLog};
use super::{HeadKind, HeadSpec, ModelError, TrainConfig};
use crate::embedding_bank::{DerivedVectors, EmbeddingBundle, EncoderProfile};
use crate::ensemble::{average_predictions, PredictionTriple};
use crate::features::FeatureVector;
use crate::gap_data::Label;
use crate::nn::graph::softmax_in_place;
use crate::nn::{checkpoint, Dense, Graph, Mat, Mlp, ParamGrads, ParamShape, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenSpec {
    pub heads: Vec<HeadSpec>,
    pub span_dim: usize,
    pub feature_dim: usize,
    pub registry_version: String,
    /// Cased then uncased encoder, recorded for provenance of checkpoints.
    pub encoders: Vec<EncoderProfile>,
}

impl FrozenSpec {
    /// All five heads with their default layouts.
    pub fn default_for(span_dim: usize, feature_dim: usize) -> Self {
        Self {
            heads: HeadKind::ALL
                .iter()
                .map(|k| HeadSpec::default_for(*k, span_dim, feature_dim))
                .collect(),
            span_dim,
            feature_dim,
            registry_version: "v1".into(),
            encoders: Vec::new(),
        }
    }

    pub fn stacker_input_dim(&self) -> usize {
        self.heads.iter().map(HeadSpec::stack_width).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.heads.is_empty() {
            return Err(ModelError::Spec("the frozen path needs at least one head".into()));
        }
        for (i, h) in self.heads.iter().enumerate() {
            h.validate(self.span_dim, self.feature_dim)?;
            if self.heads[..i].iter().any(|o| o.kind == h.kind) {
                return Err(ModelError::Spec(format!("head {:?} listed twice", h.kind)));
            }
        }
        Ok(())
    }
}

/// Row-aligned design matrices for a set of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenInputs {
    pub ids: Vec<String>,
    /// `[P, A, B]` from the cased encoder.
    pub cased: Mat,
    /// `[P, A, B]` from the uncased encoder.
    pub uncased: Mat,
    /// `[|P−A|, P⊙A]` and `[|P−B|, P⊙B]` from the cased encoder.
    pub ab_left: Mat,
    pub ab_right: Mat,
    /// `[P⊙A, A⊙B−P⊙P]` and `[P⊙B, A⊙B−P⊙P]` from the uncased encoder.
    pub prod_left: Mat,
    pub prod_right: Mat,
    pub features: Mat,
}

fn rows_to_mat(rows: &[Vec<f64>], cols: usize) -> Mat {
    Mat::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}

fn f64s(v: &[f32]) -> impl Iterator<Item = f64> + '_ {
    v.iter().map(|&x| f64::from(x))
}

impl FrozenInputs {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn span_dim(&self) -> usize {
        self.cased.ncols() / 3
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Looks up every id in the three sources.
    pub fn build(
        ids: &[String],
        cased: &[EmbeddingBundle],
        uncased: &[EmbeddingBundle],
        features: &[FeatureVector],
    ) -> Result<Self, ModelError> {
        let by_id = |b: &'_ [EmbeddingBundle]| -> HashMap<String, usize> {
            b.iter().enumerate().map(|(i, x)| (x.example_id.clone(), i)).collect()
        };
        let (ci, ui) = (by_id(cased), by_id(uncased));
        let fi: HashMap<&str, &FeatureVector> = features.iter().map(|f| (f.example_id.as_str(), f)).collect();
        let missing = |id: &str, what: &str| ModelError::MissingInput {
            id: id.to_string(),
            what: what.to_string(),
        };
        let span = match cased.first() {
            Some(b) => b.span_dim(),
            None if ids.is_empty() => 0,
            None => return Err(missing(&ids[0], "cased embedding bundle")),
        };
        let fdim = features.first().map(|f| f.values.len()).unwrap_or(0);
        let (mut c, mut u, mut al, mut ar, mut pl, mut pr, mut ft) =
            (vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
        for id in ids {
            let cb = &cased[*ci.get(id).ok_or_else(|| missing(id, "cased embedding bundle"))?];
            let ub = &uncased[*ui.get(id).ok_or_else(|| missing(id, "uncased embedding bundle"))?];
            let fv = fi.get(id.as_str()).ok_or_else(|| missing(id, "feature vector"))?;
            for (b, what) in [(cb, "cased bundle"), (ub, "uncased bundle")] {
                if b.span_dim() != span || b.a.len() != span || b.b.len() != span {
                    return Err(ModelError::Dim {
                        what: format!("{id} {what}"),
                        expected: span,
                        got: b.span_dim(),
                    });
                }
            }
            if fv.values.len() != fdim {
                return Err(ModelError::Dim {
                    what: format!("{id} features"),
                    expected: fdim,
                    got: fv.values.len(),
                });
            }
            c.push(cb.concat_pab());
            u.push(ub.concat_pab());
            let side = |x: &[f32]| -> Vec<f64> {
                let diff = cb.p.iter().zip(x).map(|(p, v)| f64::from((p - v).abs()));
                let prod = cb.p.iter().zip(x).map(|(p, v)| f64::from(p * v));
                diff.chain(prod).collect()
            };
            al.push(side(&cb.a));
            ar.push(side(&cb.b));
            let derived = ub
                .derived
                .clone()
                .unwrap_or_else(|| DerivedVectors::compute(&ub.p, &ub.a, &ub.b));
            pl.push(f64s(&derived.pa).chain(f64s(&derived.ab_minus_pp)).collect());
            pr.push(f64s(&derived.pb).chain(f64s(&derived.ab_minus_pp)).collect());
            ft.push(fv.values.clone());
        }
        Ok(Self {
            ids: ids.to_vec(),
            cased: rows_to_mat(&c, 3 * span),
            uncased: rows_to_mat(&u, 3 * span),
            ab_left: rows_to_mat(&al, 2 * span),
            ab_right: rows_to_mat(&ar, 2 * span),
            prod_left: rows_to_mat(&pl, 2 * span),
            prod_right: rows_to_mat(&pr, 2 * span),
            features: rows_to_mat(&ft, fdim),
        })
    }

    fn select(&self, rows: &[usize]) -> Batch {
        let s = |m: &Mat| m.select(Axis(0), rows);
        Batch {
            cased: s(&self.cased),
            uncased: s(&self.uncased),
            ab_left: s(&self.ab_left),
            ab_right: s(&self.ab_right),
            prod_left: s(&self.prod_left),
            prod_right: s(&self.prod_right),
            features: s(&self.features),
        }
    }
}

struct Batch {
    cased: Mat,
    uncased: Mat,
    ab_left: Mat,
    ab_right: Mat,
    prod_left: Mat,
    prod_right: Mat,
    features: Mat,
}

/// Heads, stacker and feature standardiser for one trained model.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    pub spec: FrozenSpec,
    pub seed: u64,
    pub store: ParamStore,
    heads: Vec<Mlp>,
    stacker: Dense,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

/// Scores both sides with the same sub-network.
pub fn siamese_forward(store: &ParamStore, net: &Mlp, left: &[f64], right: &[f64]) -> Result<(f64, f64), ModelError> {
    for (side, x) in [("left", left), ("right", right)] {
        if x.len() != net.input_dim() {
            return Err(ModelError::Dim {
                what: format!("siamese {side} input"),
                expected: net.input_dim(),
                got: x.len(),
            });
        }
    }
    if net.output_dim() != 1 {
        return Err(ModelError::Spec("siamese sub-network must output one score".into()));
    }
    let mut g = Graph::new(store);
    let mut score = |x: &[f64]| {
        let v = g.row(x);
        let s = net.forward::<ChaCha8Rng>(&mut g, v, None);
        g.scalar(s)
    };
    Ok((score(left), score(right)))
}

impl FrozenModel {
    pub fn new(spec: FrozenSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = job_rng(seed, 0);
        let mut store = ParamStore::default();
        let heads = spec
            .heads
            .iter()
            .map(|h| {
                let name = format!("{:?}", h.kind).to_lowercase();
                Mlp::new(&mut store, &name, &h.widths(), h.activation, h.dropout, !h.kind.is_siamese(), &mut rng)
            })
            .collect();
        let stacker = Dense::new(&mut store, "stacker", spec.stacker_input_dim(), 3, &mut rng);
        Ok(Self {
            feature_mean: vec![0.0; spec.feature_dim],
            feature_scale: vec![1.0; spec.feature_dim],
            spec,
            seed,
            store,
            heads,
            stacker,
        })
    }

    pub fn head(&self, kind: HeadKind) -> Option<&Mlp> {
        self.spec.heads.iter().position(|h| h.kind == kind).map(|i| &self.heads[i])
    }

    pub fn stacker(&self) -> Dense {
        self.stacker
    }

    /// Fits the feature standardiser on `rows`.
    pub fn fit_standardiser(&mut self, inputs: &FrozenInputs, rows: &[usize]) {
        let n = rows.len().max(1) as f64;
        for j in 0..self.spec.feature_dim {
            let col: Vec<f64> = rows.iter().map(|&r| inputs.features[[r, j]]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            self.feature_mean[j] = mean;
            self.feature_scale[j] = if var.sqrt() > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }

    fn check_inputs(&self, inputs: &FrozenInputs) -> Result<(), ModelError> {
        let dims = [
            ("embedding span", self.spec.span_dim, inputs.span_dim()),
            ("features", self.spec.feature_dim, inputs.feature_dim()),
        ];
        for (what, expected, got) in dims {
            if expected != got && !inputs.is_empty() {
                return Err(ModelError::Dim {
                    what: what.into(),
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    fn logits(&self, g: &mut Graph<'_>, batch: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let mut parts = Vec::with_capacity(self.heads.len());
        for (spec, net) in self.spec.heads.iter().zip(&self.heads) {
            let mut run = |g: &mut Graph<'_>, m: &Mat| {
                let x = g.input(m.clone());
                net.forward(g, x, rng.as_deref_mut())
            };
            let out = match spec.kind {
                HeadKind::MlpCased => run(g, &batch.cased),
                HeadKind::MlpUncased => run(g, &batch.uncased),
                HeadKind::FeatureMlp => {
                    let mut f = batch.features.clone();
                    for mut row in f.rows_mut() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = (*v - self.feature_mean[j]) * self.feature_scale[j];
                        }
                    }
                    run(g, &f)
                }
                HeadKind::SiameseAB => {
                    let l = run(g, &batch.ab_left);
                    let r = run(g, &batch.ab_right);
                    g.concat_cols(&[l, r])
                }
                HeadKind::SiameseProducts => {
                    let l = run(g, &batch.prod_left);
                    let r = run(g, &batch.prod_right);
                    g.concat_cols(&[l, r])
                }
            };
            parts.push(out);
        }
        let stacked = if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) };
        self.stacker.forward(g, stacked)
    }

    /// Mean cross-entropy over `rows` with parameters taken from `store`
    /// (which must share this model's layout).
    pub fn loss_with(
        &self,
        store: &ParamStore,
        inputs: &FrozenInputs,
        rows: &[usize],
        labels: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, ParamGrads) {
        let batch = inputs.select(rows);
        let mut g = Graph::new(store);
        let logits = self.logits(&mut g, &batch, rng);
        let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        let loss = g.softmax_xent(logits, &y);
        (g.scalar(loss), g.backward(loss))
    }

    pub fn predict(&self, inputs: &FrozenInputs) -> Result<Vec<PredictionTriple>, ModelError> {
        self.check_inputs(inputs)?;
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<usize> = (0..inputs.len()).collect();
        let batch = inputs.select(&rows);
        let mut g = Graph::new(&self.store);
        let logits = self.logits(&mut g, &batch, None);
        Ok(g.value(logits)
            .rows()
            .into_iter()
            .map(|r| {
                let mut p = [r[0], r[1], r[2]];
                softmax_in_place(&mut p);
                PredictionTriple::from_array(p)
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        let manifest = FrozenManifest {
            kind: "frozen".into(),
            spec: self.spec.clone(),
            seed: self.seed,
            feature_mean: self.feature_mean.clone(),
            feature_scale: self.feature_scale.clone(),
            params: self.store.shapes(),
        };
        write_checkpoint(dir, &manifest, &self.store)
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let manifest: FrozenManifest = read_manifest(dir)?;
        let mut model = Self::new(manifest.spec, manifest.seed)?;
        model.feature_mean = manifest.feature_mean;
        model.feature_scale = manifest.feature_scale;
        read_weights(dir, &manifest.params, &mut model.store)?;
        Ok(model)
    }
}

/// Predicts one example from its two bundles and feature vector.
pub fn frozen_forward(
    model: &FrozenModel,
    cased: &EmbeddingBundle,
    uncased: &EmbeddingBundle,
    features: &FeatureVector,
) -> Result<PredictionTriple, ModelError> {
    for (what, id) in [("uncased bundle", &uncased.example_id), ("feature vector", &features.example_id)] {
        if *id != cased.example_id {
            return Err(ModelError::MissingInput {
                id: cased.example_id.clone(),
                what: format!("{what} (got {id})"),
            });
        }
    }
    let inputs = FrozenInputs::build(
        std::slice::from_ref(&cased.example_id),
        std::slice::from_ref(cased),
        std::slice::from_ref(uncased),
        std::slice::from_ref(features),
    )?;
    Ok(model.predict(&inputs)?[0])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrozenManifest {
    kind: String,
    spec: FrozenSpec,
    seed: u64,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
    params: Vec<ParamShape>,
}

pub(crate) fn write_checkpoint<T: Serialize>(dir: &Path, manifest: &T, store: &ParamStore) -> Result<(), ModelError> {
    let err = |e: std::io::Error| ModelError::Checkpoint {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(err)?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    fs::write(dir.join("manifest.json"), json).map_err(err)?;
    checkpoint::write_blob(&dir.join("weights.bin"), store).map_err(err)
}

pub(crate) fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<T, ModelError> {
    let err = |message: String| ModelError::Checkpoint {
        path: dir.display().to_string(),
        message,
    };
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

pub(crate) fn read_weights(dir: &Path, shapes: &[ParamShape], store: &mut ParamStore) -> Result<(), ModelError> {
    if store.shapes() != shapes {
        return Err(ModelError::Checkpoint {
            path: dir.display().to_string(),
            message: "parameter layout differs from the rebuilt architecture".into(),
        });
    }
    checkpoint::read_blob(&dir.join("weights.bin"), shapes, store).map_err(|message| ModelError::Checkpoint {
        path: dir.display().to_string(),
        message,
    })
}

struct FrozenTask<'a> {
    model: FrozenModel,
    inputs: &'a FrozenInputs,
    labels: &'a [usize],
}

impl Trainable for FrozenTask<'_> {
    fn params(&self) -> &ParamStore {
        &self.model.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.store
    }

    fn loss_and_grads(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> (f64, ParamGrads) {
        self.model.loss_with(&self.model.store, self.inputs, rows, self.labels, Some(rng))
    }

    fn eval_loss(&self, rows: &[usize]) -> f64 {
        self.model.loss_with(&self.model.store, self.inputs, rows, self.labels, None).0
    }
}

/// One model per cross-validation fold; predictions are their average.
#[derive(Debug, Clone)]
pub struct FrozenEnsemble {
    pub models: Vec<FrozenModel>,
    pub logs: Vec<TrainingLog>,
}

impl FrozenEnsemble {
    pub fn predict(&self, inputs: &FrozenInputs) -> Result<Vec<PredictionTriple>, ModelError> {
        let per_model = self
            .models
            .iter()
            .map(|m| m.predict(inputs))
            .collect::<Result<Vec<_>, _>>()?;
        (0..inputs.len())
            .map(|i| {
                let row: Vec<PredictionTriple> = per_model.iter().map(|p| p[i]).collect();
                Ok(average_predictions(&row)?)
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        for (k, (m, log)) in self.models.iter().zip(&self.logs).enumerate() {
            let sub = dir.join(format!("fold{k}"));
            m.save(&sub)?;
            fs::write(sub.join("training_log.csv"), log.to_csv()).map_err(|e| ModelError::Checkpoint {
                path: sub.display().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let mut models = Vec::new();
        while dir.join(format!("fold{}", models.len())).is_dir() {
            models.push(FrozenModel::load(&dir.join(format!("fold{}", models.len())))?);
        }
        if models.is_empty() {
            return Err(ModelError::Checkpoint {
                path: dir.display().to_string(),
                message: "no fold checkpoints".into(),
            });
        }
        let logs = vec![TrainingLog::default(); models.len()];
        Ok(Self { models, logs })
    }
}

/// Trains one frozen model per fold of `cfg.folds`, each validated (and
/// early-stopped) on its held-out fold.
pub fn train_frozen(
    inputs: &FrozenInputs,
    labels: &[Label],
    spec: &FrozenSpec,
    cfg: &TrainConfig,
) -> Result<FrozenEnsemble, ModelError> {
    cfg.validate()?;
    spec.validate()?;
    if labels.len() != inputs.len() {
        return Err(ModelError::Dim {
            what: "labels".into(),
            expected: inputs.len(),
            got: labels.len(),
        });
    }
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let splits = fold_splits(inputs.len(), cfg.folds, cfg.seed);
    let trained = splits
        .par_iter()
        .enumerate()
        .map(|(k, (train, val))| {
            let seed = cfg.seed.wrapping_add(k as u64);
            let mut model = FrozenModel::new(spec.clone(), seed)?;
            model.check_inputs(inputs)?;
            model.fit_standardiser(inputs, train);
            let mut task = FrozenTask {
                model,
                inputs,
                labels: &y,
            };
            let log = fit(&mut task, train, val, cfg, &mut job_rng(seed, 1))?;
            Ok((task.model, log))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let (models, logs) = trained.into_iter().unzip();
    Ok(FrozenEnsemble { models, logs })
}

/// Concatenates two design sets row-wise (used when scoring train and test
/// together).
pub fn concat_inputs(a: &FrozenInputs, b: &FrozenInputs) -> FrozenInputs {
    let c = |x: &Mat, y: &Mat| concatenate(Axis(0), &[x.view(), y.view()]).expect("matching widths");
    FrozenInputs {
        ids: a.ids.iter().chain(&b.ids).cloned().collect(),
        cased: c(&a.cased, &b.cased),
        uncased: c(&a.uncased, &b.uncased),
        ab_left: c(&a.ab_left, &b.ab_left),
        ab_right: c(&a.ab_right, &b.ab_right),
        prod_left: c(&a.prod_left, &b.prod_left),
        prod_right: c(&a.prod_right, &b.prod_right),
        features: c(&a.features, &b.features),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;
    use crate::nn::Activation;
    use rand::Rng;

    fn random_inputs(n: usize, span: usize, fdim: usize, seed: u64) -> FrozenInputs {
        let mut rng = job_rng(seed, 7);
        let mut v = |d: usize| -> Vec<f32> { (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let cased: Vec<_> = ids.iter().map(|id| EmbeddingBundle::new(id.clone(), v(span), v(span), v(span), false)).collect();
        let uncased: Vec<_> = ids.iter().map(|id| EmbeddingBundle::new(id.clone(), v(span), v(span), v(span), true)).collect();
        let feats: Vec<_> = ids
            .iter()
            .map(|id| FeatureVector {
                example_id: id.clone(),
                values: v(fdim).into_iter().map(f64::from).collect(),
            })
            .collect();
        FrozenInputs::build(&ids, &cased, &uncased, &feats).unwrap()
    }

    fn small_spec(kinds: &[HeadKind], span: usize, fdim: usize) -> FrozenSpec {
        let mut spec = FrozenSpec::default_for(span, fdim);
        spec.heads = kinds
            .iter()
            .map(|k| {
                let mut h = HeadSpec::default_for(*k, span, fdim);
                h.hidden = vec![3];
                if !k.is_siamese() {
                    h.output_dim = 4;
                }
                h.activation = Activation::Tanh;
                h
            })
            .collect();
        spec
    }

    #[test]
    fn gradients_match_finite_differences_per_head() {
        for kind in HeadKind::ALL {
            let inputs = random_inputs(4, 2, 3, kind as u64);
            let model = FrozenModel::new(small_spec(&[kind], 2, 3), 11).unwrap();
            let labels = [0, 1, 2, 1];
            let rows = [0, 1, 2, 3];
            let mut store = model.store.clone();
            let report = check_gradients(&mut store, 1e-6, |s| model.loss_with(s, &inputs, &rows, &labels, None));
            assert!(report.max_rel_error <= 1e-4, "{kind:?}: {}", report.worst);
        }
    }

    #[test]
    fn siamese_symmetry_and_oracle() {
        let model = FrozenModel::new(small_spec(&[HeadKind::SiameseAB], 2, 3), 5).unwrap();
        let net = model.head(HeadKind::SiameseAB).unwrap();
        let (l, r) = ([0.3, -0.2, 0.9, 0.1], [-0.5, 0.4, 0.0, 0.7]);
        let (a, b) = siamese_forward(&model.store, net, &l, &r).unwrap();
        let (b2, a2) = siamese_forward(&model.store, net, &r, &l).unwrap();
        assert_eq!((a, b), (a2, b2));
        let (s1, s2) = siamese_forward(&model.store, net, &l, &l).unwrap();
        assert_eq!(s1, s2);
        // Hand-rolled forward: tanh(x W0 + b0) W1 + b1.
        let st = &model.store;
        let (w0, b0, w1, b1) = (
            st.get(net.layers[0].weight),
            st.get(net.layers[0].bias),
            st.get(net.layers[1].weight),
            st.get(net.layers[1].bias),
        );
        let mut out = b1[[0, 0]];
        for j in 0..3 {
            let pre: f64 = (0..4).map(|i| l[i] * w0[[i, j]]).sum::<f64>() + b0[[0, j]];
            out += pre.tanh() * w1[[j, 0]];
        }
        assert!((out - a).abs() < 1e-12);
        assert!(siamese_forward(&model.store, net, &l[..3], &r).is_err());
    }

    #[test]
    fn zero_stacker_gives_uniform() {
        let inputs = random_inputs(3, 2, 3, 1);
        let mut model = FrozenModel::new(small_spec(&HeadKind::ALL, 2, 3), 2).unwrap();
        let st = model.stacker();
        model.store.get_mut(st.weight).fill(0.0);
        model.store.get_mut(st.bias).fill(0.0);
        for p in model.predict(&inputs).unwrap() {
            for v in p.to_array() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn predictions_on_simplex_and_checkpoint_round_trip() {
        let inputs = random_inputs(6, 2, 3, 4);
        let model = FrozenModel::new(small_spec(&HeadKind::ALL, 2, 3), 3).unwrap();
        let preds = model.predict(&inputs).unwrap();
        assert!(preds.iter().all(|p| p.on_simplex(1e-9)));
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = FrozenModel::load(dir.path()).unwrap();
        assert_eq!(back.predict(&inputs).unwrap(), preds);
    }

    #[test]
    fn missing_inputs_reported() {
        let inputs = random_inputs(2, 2, 3, 4);
        let model = FrozenModel::new(small_spec(&HeadKind::ALL, 2, 3), 3).unwrap();
        let cb = EmbeddingBundle::new("x".into(), vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], false);
        let ub = EmbeddingBundle::new("y".into(), vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], false);
        let fv = FeatureVector {
            example_id: "x".into(),
            values: vec![0.0; 3],
        };
        assert!(matches!(frozen_forward(&model, &cb, &ub, &fv), Err(ModelError::MissingInput { .. })));
        let ids = vec!["r0".to_string(), "zz".to_string()];
        assert!(FrozenInputs::build(&ids, &[], &[], &[]).is_err());
        assert_eq!(inputs.len(), 2);
    }

    #[test]
    fn separable_set_trains_to_low_loss() {
        // Label = argmax of three fixed linear projections of the features.
        let n = 20;
        let mut inputs = random_inputs(n, 2, 3, 9);
        let labels: Vec<Label> = (0..n)
            .map(|i| {
                let f = inputs.features.row(i);
                let scores = [f[0] - f[1], f[1] - f[2], f[2] - f[0]];
                let k = (0..3).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
                Label::from_index(k)
            })
            .collect();
        // Spread the classes apart so a linear map separates them with margin.
        for (i, l) in labels.iter().enumerate() {
            inputs.features[[i, l.index()]] += 3.0;
        }
        let mut spec = small_spec(&[HeadKind::FeatureMlp], 2, 3);
        spec.heads[0].hidden = vec![8];
        spec.heads[0].dropout = 0.0;
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 8,
            learning_rate: 0.05,
            patience: 300,
            folds: 2,
            seed: 1,
        };
        let ens = train_frozen(&inputs, &labels, &spec, &cfg).unwrap();
        let again = train_frozen(&inputs, &labels, &spec, &cfg).unwrap();
        assert_eq!(ens.models[0].store, again.models[0].store);
        for log in &ens.logs {
            assert!(log.best().unwrap().train_loss < 0.05, "{:?}", log.best());
        }
        assert_eq!(ens.predict(&inputs).unwrap().len(), n);
    }
}
