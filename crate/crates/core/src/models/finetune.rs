//! Fine-tuned path: a classifier trained together with its encoder.
//!
//! The encoder starts from a desk encoder's weights. The head reads the last
//! layer at the first marker and the mean vectors of P, A and B, plus the
//! products P⊙A and P⊙B, then maps them through one tanh layer to three
//! logits. A candidate that fell outside the segments reads the first marker
//! instead.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frozen::{read_manifest, read_weights, write_checkpoint};
use super::segment::{segment_preprocess, SegmentedInput};
use super::training::{fit, fold_splits, job_rng, Trainable, TrainingLog};
use super::{ModelError, TrainConfig};
use crate::embedding_bank::tokenizer::PieceTokenizer;
use crate::embedding_bank::transformer::{TransformerConfig, TransformerLayout};
use crate::embedding_bank::DeskEncoder;
use crate::ensemble::{average_predictions, PredictionTriple};
use crate::gap_data::{GapExample, Label};
use crate::nn::graph::softmax_in_place;
use crate::nn::{Activation, Graph, Mlp, ParamGrads, ParamShape, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub train: TrainConfig,
    pub n_models: usize,
    pub segment_budget: usize,
    pub dropout: f64,
    pub head_hidden: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 1e-5,
                ..TrainConfig::default()
            },
            n_models: 6,
            segment_budget: 64,
            dropout: 0.1,
            head_hidden: 32,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.train.validate()?;
        if self.n_models == 0 || self.segment_budget == 0 || self.head_hidden == 0 {
            return Err(ModelError::Spec("n_models, segment budget and head width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Spec(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FinetunedClassifier {
    pub seed: u64,
    pub store: ParamStore,
    layout: TransformerLayout,
    head: Mlp,
    tokenizer: PieceTokenizer,
    budget: usize,
    dropout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FinetuneManifest {
    kind: String,
    seed: u64,
    encoder: TransformerConfig,
    segment_budget: usize,
    dropout: f64,
    head_hidden: usize,
    params: Vec<ParamShape>,
}

impl FinetunedClassifier {
    /// A classifier whose encoder copies `encoder`'s weights and whose head
    /// is freshly initialised from `seed`.
    pub fn new(encoder: &DeskEncoder, cfg: &FinetuneConfig, seed: u64) -> Self {
        let config = encoder.model().layout.config.clone();
        let mut c = Self::blank(config, cfg.segment_budget, cfg.dropout, cfg.head_hidden, seed);
        let source = &encoder.model().store;
        for id in source.ids() {
            c.store.get_mut(id).assign(source.get(id));
        }
        c
    }

    fn blank(config: TransformerConfig, budget: usize, dropout: f64, head_hidden: usize, seed: u64) -> Self {
        let mut rng = job_rng(seed, 0);
        let mut store = ParamStore::default();
        let tokenizer = PieceTokenizer::new(config.vocab_size, config.lowercase);
        let h = config.hidden_size;
        let layout = TransformerLayout::new(&mut store, config, &mut rng);
        let head = Mlp::new(&mut store, "cls_head", &[6 * h, head_hidden, 3], Activation::Tanh, dropout, false, &mut rng);
        Self {
            seed,
            store,
            layout,
            head,
            tokenizer,
            budget,
            dropout,
        }
    }

    pub fn preprocess(&self, example: &GapExample) -> Result<SegmentedInput, ModelError> {
        segment_preprocess(example, &self.tokenizer, self.budget)
    }

    fn logits(&self, g: &mut Graph<'_>, input: &SegmentedInput, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let rate = if rng.is_some() { self.dropout } else { 0.0 };
        let layers = self.layout.forward(g, &input.ids, rate, rng.as_deref_mut());
        let h = *layers.last().expect("at least one layer");
        let pick = |rows: &[usize]| if rows.is_empty() { vec![0] } else { rows.to_vec() };
        let cls = g.mean_rows(h, vec![0]);
        let p = g.mean_rows(h, pick(&input.pronoun));
        let a = g.mean_rows(h, pick(&input.a));
        let b = g.mean_rows(h, pick(&input.b));
        let pa = g.mul(p, a);
        let pb = g.mul(p, b);
        let x = g.concat_cols(&[cls, p, a, b, pa, pb]);
        self.head.forward(g, x, rng)
    }

    /// Mean cross-entropy over `rows` of `inputs`, parameters from `store`.
    pub fn loss_with(
        &self,
        store: &ParamStore,
        inputs: &[SegmentedInput],
        labels: &[usize],
        rows: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, ParamGrads) {
        let mut g = Graph::new(store);
        let per: Vec<Var> = rows
            .iter()
            .map(|&r| self.logits(&mut g, &inputs[r], rng.as_deref_mut()))
            .collect();
        let logits = g.concat_rows(&per);
        let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        let loss = g.softmax_xent(logits, &y);
        (g.scalar(loss), g.backward(loss))
    }

    pub fn predict_input(&self, input: &SegmentedInput) -> PredictionTriple {
        let mut g = Graph::new(&self.store);
        let l = self.logits(&mut g, input, None);
        let v = g.value(l);
        let mut p = [v[[0, 0]], v[[0, 1]], v[[0, 2]]];
        softmax_in_place(&mut p);
        PredictionTriple::from_array(p)
    }

    pub fn predict(&self, examples: &[GapExample]) -> Result<Vec<PredictionTriple>, ModelError> {
        examples
            .par_iter()
            .map(|e| Ok(self.predict_input(&self.preprocess(e)?)))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        let manifest = FinetuneManifest {
            kind: "finetuned".into(),
            seed: self.seed,
            encoder: self.layout.config.clone(),
            segment_budget: self.budget,
            dropout: self.dropout,
            head_hidden: self.head.layers[0].fan_out,
            params: self.store.shapes(),
        };
        write_checkpoint(dir, &manifest, &self.store)
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let m: FinetuneManifest = read_manifest(dir)?;
        let mut c = Self::blank(m.encoder, m.segment_budget, m.dropout, m.head_hidden, m.seed);
        read_weights(dir, &m.params, &mut c.store)?;
        Ok(c)
    }
}

struct FinetuneTask<'a> {
    model: FinetunedClassifier,
    inputs: &'a [SegmentedInput],
    labels: &'a [usize],
}

impl Trainable for FinetuneTask<'_> {
    fn params(&self) -> &ParamStore {
        &self.model.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.store
    }

    fn loss_and_grads(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> (f64, ParamGrads) {
        self.model.loss_with(&self.model.store, self.inputs, self.labels, rows, Some(rng))
    }

    fn eval_loss(&self, rows: &[usize]) -> f64 {
        self.model.loss_with(&self.model.store, self.inputs, self.labels, rows, None).0
    }
}

/// Trains `cfg.n_models` classifiers that differ in seed and in which fold
/// they hold out for early stopping.
pub fn train_finetuned(
    dataset: &[GapExample],
    encoder: &DeskEncoder,
    cfg: &FinetuneConfig,
) -> Result<Vec<(FinetunedClassifier, TrainingLog)>, ModelError> {
    cfg.validate()?;
    let labels = dataset
        .iter()
        .map(|e| {
            e.gold.map(Label::index).ok_or_else(|| ModelError::MissingInput {
                id: e.id.clone(),
                what: "gold label".into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let probe = FinetunedClassifier::new(encoder, cfg, cfg.train.seed);
    let inputs = dataset
        .iter()
        .map(|e| probe.preprocess(e))
        .collect::<Result<Vec<_>, _>>()?;
    let splits = fold_splits(dataset.len(), cfg.train.folds, cfg.train.seed);
    (0..cfg.n_models)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.train.seed.wrapping_add(1 + k as u64);
            let (train, val) = &splits[k % splits.len()];
            let mut task = FinetuneTask {
                model: FinetunedClassifier::new(encoder, cfg, seed),
                inputs: &inputs,
                labels: &labels,
            };
            let log = fit(&mut task, train, val, &cfg.train, &mut job_rng(seed, 1))?;
            Ok((task.model, log))
        })
        .collect()
}

/// Averages the members' predictions per example.
pub fn predict_average(models: &[FinetunedClassifier], examples: &[GapExample]) -> Result<Vec<PredictionTriple>, ModelError> {
    let per_model = models
        .iter()
        .map(|m| m.predict(examples))
        .collect::<Result<Vec<_>, _>>()?;
    (0..examples.len())
        .map(|i| {
            let row: Vec<PredictionTriple> = per_model.iter().map(|p| p[i]).collect();
            Ok(average_predictions(&row)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_bank::transformer::TinyTransformer;
    use crate::embedding_bank::EncoderProfile;
    use crate::nn::gradcheck::check_gradients;

    fn micro_encoder() -> DeskEncoder {
        let config = TransformerConfig {
            vocab_size: 12,
            hidden_size: 4,
            num_layers: 2,
            num_heads: 2,
            ffn_size: 6,
            max_positions: 40,
            lowercase: false,
        };
        let profile = EncoderProfile {
            name: "micro".into(),
            hidden_size: 4,
            num_layers: 2,
            layer_selection: vec![-1],
        };
        DeskEncoder::from_model(profile, TinyTransformer::seeded(config, 3)).unwrap()
    }

    fn example(id: &str, gold: Label) -> GapExample {
        GapExample {
            id: id.into(),
            text: "Anna met Ruth and she left.".into(),
            pronoun: "she".into(),
            pronoun_offset: 18,
            a_text: "Anna".into(),
            a_offset: 0,
            b_text: "Ruth".into(),
            b_offset: 9,
            url: String::new(),
            gold: Some(gold),
        }
    }

    fn cfg() -> FinetuneConfig {
        FinetuneConfig {
            train: TrainConfig {
                epochs: 2,
                batch_size: 2,
                learning_rate: 1e-3,
                folds: 2,
                ..TrainConfig::default()
            },
            n_models: 2,
            segment_budget: 8,
            dropout: 0.1,
            head_hidden: 3,
        }
    }

    #[test]
    fn encoder_weights_are_copied() {
        let enc = micro_encoder();
        let c = FinetunedClassifier::new(&enc, &cfg(), 9);
        for id in enc.model().store.ids() {
            assert_eq!(c.store.get(id), enc.model().store.get(id));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let enc = micro_encoder();
        let c = FinetunedClassifier::new(&enc, &cfg(), 9);
        let inputs: Vec<_> = [example("a", Label::A), example("b", Label::B)]
            .iter()
            .map(|e| c.preprocess(e).unwrap())
            .collect();
        let mut store = c.store.clone();
        let report = check_gradients(&mut store, 1e-6, |s| c.loss_with(s, &inputs, &[0, 1], &[0, 1], None));
        assert!(report.max_rel_error <= 1e-4, "{}", report.worst);
    }

    #[test]
    fn ensemble_members_differ_and_round_trip() {
        let enc = micro_encoder();
        let data: Vec<_> = (0..6).map(|i| example(&format!("e{i}"), Label::from_index(i % 3))).collect();
        let models = train_finetuned(&data, &enc, &cfg()).unwrap();
        assert_eq!(models.len(), 2);
        assert_ne!(models[0].0.store, models[1].0.store);
        let preds = predict_average(&models.iter().map(|m| m.0.clone()).collect::<Vec<_>>(), &data).unwrap();
        assert_eq!(preds.len(), 6);
        assert!(preds.iter().all(|p| p.on_simplex(1e-9)));
        let dir = tempfile::tempdir().unwrap();
        models[0].0.save(dir.path()).unwrap();
        let back = FinetunedClassifier::load(dir.path()).unwrap();
        assert_eq!(back.predict(&data).unwrap(), models[0].0.predict(&data).unwrap());
    }
}
