//! Contextual span embeddings for the pronoun and both candidates.
//!
//! An [`Encoder`] turns text into per-layer token vectors. Span vectors are
//! the mean over every subtoken overlapping the mention, taken separately on
//! each selected layer and concatenated in selection order. Bundles can also
//! carry the elementwise products `P⊙A`, `P⊙B` and `A⊙B − P⊙P`.

pub mod store;
pub mod tokenizer;
pub mod transformer;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap_data::{GapExample, Mention};
use crate::nn::checkpoint;
use crate::nn::{Mat, ParamShape};
use crate::text::CharSpan;

pub use store::{load_bundles, persist_bundles, EmbeddingMatrixFile};
pub use tokenizer::{PieceTokenizer, Token, CLS_ID, SEP_ID};
pub use transformer::{TinyTransformer, TransformerConfig, TransformerLayout};

/// Environment variable naming the directory that holds converted encoders.
pub const ENCODER_CACHE_ENV: &str = "GAPRES_ENCODER_CACHE";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("encoder {name:?} unavailable: {reason}")]
    EncoderUnavailable { name: String, reason: String },
    #[error("invalid encoder profile: {0}")]
    InvalidProfile(String),
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("text has {tokens} subtokens but the encoder window holds {max}; an anchor offset is required")]
    TextTooLong { tokens: usize, max: usize },
    #[error("span {span} lies outside the encoder window {window}; widen the window")]
    OutsideWindow { span: CharSpan, window: CharSpan },
    #[error("span {span} covers no tokens")]
    EmptySpan { span: CharSpan },
    #[error("example {0}: non-finite embedding value")]
    NonFinite(String),
    #[error("example {id}: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<EmbeddingError>,
    },
    #[error("embedding file format error: {0}")]
    Format(String),
    #[error("embedding file row {row}: {message}")]
    FormatRow { row: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Shape and layer selection of one encoder bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub name: String,
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Negative layer indices, `-1` being the top layer.
    pub layer_selection: Vec<i32>,
}

impl EncoderProfile {
    pub const DEFAULT_SELECTION: [i32; 3] = [-4, -5, -6];

    pub fn large(name: &str) -> Self {
        Self {
            name: name.to_string(),
            hidden_size: 1024,
            num_layers: 24,
            layer_selection: Self::DEFAULT_SELECTION.to_vec(),
        }
    }

    /// Desk-scale profile; 4 layers cannot host `-6`, so the default
    /// selection is the three layers under the top one.
    pub fn desk_tiny(uncased: bool) -> Self {
        Self {
            name: if uncased { "desk-tiny-uncased" } else { "desk-tiny" }.to_string(),
            hidden_size: 16,
            num_layers: 4,
            layer_selection: vec![-2, -3, -4],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, EmbeddingError> {
        match name {
            "cased" | "uncased" => Ok(Self::large(name)),
            "desk-tiny" => Ok(Self::desk_tiny(false)),
            "desk-tiny-uncased" => Ok(Self::desk_tiny(true)),
            other => Err(EmbeddingError::InvalidProfile(format!("unknown encoder {other:?}"))),
        }
    }

    pub fn with_layers(mut self, selection: Vec<i32>) -> Result<Self, EmbeddingError> {
        self.layer_selection = selection;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(EmbeddingError::InvalidProfile(
                "hidden_size and num_layers must be positive".into(),
            ));
        }
        if self.layer_selection.is_empty() {
            return Err(EmbeddingError::InvalidProfile("empty layer selection".into()));
        }
        for &i in &self.layer_selection {
            if i >= 0 || i.unsigned_abs() as usize > self.num_layers {
                return Err(EmbeddingError::InvalidProfile(format!(
                    "layer index {i} outside -1..=-{}",
                    self.num_layers
                )));
            }
        }
        Ok(())
    }

    /// Dimension of one pooled span vector.
    pub fn span_dim(&self) -> usize {
        self.hidden_size * self.layer_selection.len()
    }

    /// Absolute layer index (0 = bottom block) for a negative selection index.
    pub fn resolve_layer(&self, index: i32) -> usize {
        self.num_layers - index.unsigned_abs() as usize
    }
}

/// Parses `-4,-5,-6`.
pub fn parse_layer_list(s: &str) -> Result<Vec<i32>, EmbeddingError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<i32>()
                .map_err(|_| EmbeddingError::InvalidProfile(format!("bad layer index {p:?}")))
        })
        .collect()
}

/// Source of layer-indexed contextual token vectors.
pub trait Encoder: Send + Sync {
    fn profile(&self) -> &EncoderProfile;
    /// Content tokens that fit in one window (markers excluded).
    fn window_tokens(&self) -> usize;
    fn tokenize(&self, text: &str) -> Vec<Token>;
    /// Hidden states of every layer for an id sequence that already
    /// includes the boundary markers; each matrix is `ids.len() × hidden`.
    fn hidden_states(&self, ids: &[u32]) -> Vec<Mat>;
}

/// Desk-scale encoder: hashed word pieces into a seeded tiny transformer.
#[derive(Debug, Clone)]
pub struct DeskEncoder {
    profile: EncoderProfile,
    tokenizer: PieceTokenizer,
    model: TinyTransformer,
}

/// Manifest written next to a converted encoder's weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderManifest {
    pub profile: EncoderProfile,
    pub config: TransformerConfig,
    pub params: Vec<ParamShape>,
}

impl DeskEncoder {
    pub const CASED_SEED: u64 = 0x00C4_5ED0;
    pub const UNCASED_SEED: u64 = 0x0A1C_A5ED;

    pub fn desk_tiny(uncased: bool) -> Self {
        let seed = if uncased { Self::UNCASED_SEED } else { Self::CASED_SEED };
        let config = TransformerConfig::desk_tiny(uncased);
        Self::from_model(EncoderProfile::desk_tiny(uncased), TinyTransformer::seeded(config, seed))
            .expect("desk profile matches its config")
    }

    pub fn from_model(profile: EncoderProfile, model: TinyTransformer) -> Result<Self, EmbeddingError> {
        profile.validate()?;
        let cfg = &model.layout.config;
        if cfg.hidden_size != profile.hidden_size || cfg.num_layers != profile.num_layers {
            return Err(EmbeddingError::InvalidProfile(format!(
                "profile {} declares {}x{} but the model is {}x{}",
                profile.name, profile.num_layers, profile.hidden_size, cfg.num_layers, cfg.hidden_size
            )));
        }
        Ok(Self {
            tokenizer: PieceTokenizer::new(cfg.vocab_size, cfg.lowercase),
            profile,
            model,
        })
    }

    pub fn with_profile(self, profile: EncoderProfile) -> Result<Self, EmbeddingError> {
        Self::from_model(profile, self.model)
    }

    pub fn model(&self) -> &TinyTransformer {
        &self.model
    }

    pub fn tokenizer(&self) -> &PieceTokenizer {
        &self.tokenizer
    }

    pub fn save(&self, dir: &Path) -> Result<(), EmbeddingError> {
        let io = |source| EmbeddingError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let manifest = EncoderManifest {
            profile: self.profile.clone(),
            config: self.model.layout.config.clone(),
            params: self.model.store.shapes(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        fs::write(dir.join("encoder.json"), json).map_err(io)?;
        checkpoint::write_blob(&dir.join("weights.bin"), &self.model.store).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, EmbeddingError> {
        let unavailable = |reason: String| EmbeddingError::EncoderUnavailable {
            name: dir.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(dir.join("encoder.json")).map_err(|e| unavailable(e.to_string()))?;
        let manifest: EncoderManifest = serde_json::from_str(&text).map_err(|e| unavailable(e.to_string()))?;
        let mut model = TinyTransformer::seeded(manifest.config.clone(), 0);
        checkpoint::read_blob(&dir.join("weights.bin"), &manifest.params, &mut model.store).map_err(unavailable)?;
        Self::from_model(manifest.profile, model)
    }
}

impl Encoder for DeskEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    fn window_tokens(&self) -> usize {
        self.model.layout.config.max_positions - 2
    }

    fn tokenize(&self, text: &str) -> Vec<Token> {
        self.tokenizer.tokenize(text)
    }

    fn hidden_states(&self, ids: &[u32]) -> Vec<Mat> {
        self.model.hidden_states(ids)
    }
}

/// Resolves an encoder by name. Desk profiles are built in; anything else
/// is looked up under `cache_dir/<name>/`.
pub fn load_encoder(
    name: &str,
    layers: Option<&[i32]>,
    cache_dir: Option<&Path>,
) -> Result<Box<dyn Encoder>, EmbeddingError> {
    Ok(Box::new(load_desk_encoder(name, layers, cache_dir)?))
}

/// [`load_encoder`] without the trait object, for callers that fine-tune
/// the weights.
pub fn load_desk_encoder(
    name: &str,
    layers: Option<&[i32]>,
    cache_dir: Option<&Path>,
) -> Result<DeskEncoder, EmbeddingError> {
    let enc = match name {
        "desk-tiny" => DeskEncoder::desk_tiny(false),
        "desk-tiny-uncased" => DeskEncoder::desk_tiny(true),
        other => {
            let Some(cache) = cache_dir else {
                return Err(EmbeddingError::EncoderUnavailable {
                    name: other.to_string(),
                    reason: format!("no encoder cache configured (set {ENCODER_CACHE_ENV})"),
                });
            };
            let dir = cache.join(other);
            if !dir.join("encoder.json").exists() {
                return Err(EmbeddingError::EncoderUnavailable {
                    name: other.to_string(),
                    reason: format!("{} has no encoder.json", dir.display()),
                });
            }
            DeskEncoder::load(&dir)?
        }
    };
    let enc = match layers {
        Some(sel) => {
            let profile = enc.profile.clone().with_layers(sel.to_vec())?;
            enc.with_profile(profile)?
        }
        None => enc,
    };
    Ok(enc)
}

/// Tokens (markers stripped) with their per-layer vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedText {
    pub tokens: Vec<Token>,
    /// `num_layers` matrices of shape `tokens.len() × hidden_size`.
    pub layers: Vec<Mat>,
    /// Character range covered by the encoded tokens.
    pub window: CharSpan,
}

impl EncodedText {
    pub fn shape(&self) -> (usize, usize, usize) {
        let hidden = self.layers.first().map(|m| m.ncols()).unwrap_or(0);
        (self.layers.len(), self.tokens.len(), hidden)
    }
}

/// Encodes text that must fit in a single window.
pub fn encode_tokens(encoder: &dyn Encoder, text: &str) -> Result<EncodedText, EmbeddingError> {
    encode_window(encoder, text, None)
}

/// Encodes text; when it overflows the window, the window is centred on the
/// token at `anchor` (a code-point offset).
pub fn encode_anchored(encoder: &dyn Encoder, text: &str, anchor: usize) -> Result<EncodedText, EmbeddingError> {
    encode_window(encoder, text, Some(anchor))
}

fn encode_window(encoder: &dyn Encoder, text: &str, anchor: Option<usize>) -> Result<EncodedText, EmbeddingError> {
    let all = encoder.tokenize(text);
    if all.is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let max = encoder.window_tokens();
    let range = if all.len() <= max {
        0..all.len()
    } else {
        let Some(anchor) = anchor else {
            return Err(EmbeddingError::TextTooLong { tokens: all.len(), max });
        };
        let centre = all
            .iter()
            .position(|t| t.span.is_some_and(|s| s.end > anchor))
            .unwrap_or(all.len() - 1);
        let start = centre.saturating_sub(max / 2).min(all.len() - max);
        start..start + max
    };
    let tokens: Vec<Token> = all[range].to_vec();
    let mut ids = Vec::with_capacity(tokens.len() + 2);
    ids.push(CLS_ID);
    ids.extend(tokens.iter().map(|t| t.id));
    ids.push(SEP_ID);
    let n = tokens.len();
    let layers = encoder
        .hidden_states(&ids)
        .into_iter()
        .map(|m| m.slice(ndarray::s![1..n + 1, ..]).to_owned())
        .collect();
    let window = CharSpan::new(
        tokens.first().and_then(|t| t.span).map(|s| s.start).unwrap_or(0),
        tokens.last().and_then(|t| t.span).map(|s| s.end).unwrap_or(0),
    );
    Ok(EncodedText { tokens, layers, window })
}

/// Mean of the vectors of every token overlapping `span`, per selected
/// layer, concatenated in selection order.
pub fn pool_span(encoded: &EncodedText, span: CharSpan, profile: &EncoderProfile) -> Result<Vec<f64>, EmbeddingError> {
    let covered: Vec<usize> = encoded
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.span.is_some_and(|s| s.overlaps(&span)))
        .map(|(i, _)| i)
        .collect();
    if covered.is_empty() {
        if !encoded.window.overlaps(&span) && !span.is_empty() {
            return Err(EmbeddingError::OutsideWindow {
                span,
                window: encoded.window,
            });
        }
        return Err(EmbeddingError::EmptySpan { span });
    }
    let mut out = Vec::with_capacity(profile.span_dim());
    for &sel in &profile.layer_selection {
        let layer = &encoded.layers[profile.resolve_layer(sel)];
        let mut acc = vec![0.0; layer.ncols()];
        for &r in &covered {
            for (a, v) in acc.iter_mut().zip(layer.row(r)) {
                *a += v;
            }
        }
        let k = covered.len() as f64;
        out.extend(acc.into_iter().map(|a| a / k));
    }
    Ok(out)
}

/// `(P⊙A, P⊙B, A⊙B − P⊙P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedVectors {
    pub pa: Vec<f32>,
    pub pb: Vec<f32>,
    pub ab_minus_pp: Vec<f32>,
}

impl DerivedVectors {
    pub fn compute(p: &[f32], a: &[f32], b: &[f32]) -> Self {
        Self {
            pa: p.iter().zip(a).map(|(p, a)| p * a).collect(),
            pb: p.iter().zip(b).map(|(p, b)| p * b).collect(),
            ab_minus_pp: p
                .iter()
                .zip(a)
                .zip(b)
                .map(|((p, a), b)| a * b - p * p)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBundle {
    pub example_id: String,
    pub p: Vec<f32>,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
    pub derived: Option<DerivedVectors>,
}

impl EmbeddingBundle {
    pub fn new(example_id: String, p: Vec<f32>, a: Vec<f32>, b: Vec<f32>, with_derived: bool) -> Self {
        let derived = with_derived.then(|| DerivedVectors::compute(&p, &a, &b));
        Self {
            example_id,
            p,
            a,
            b,
            derived,
        }
    }

    pub fn span_dim(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        let mut all = self.p.iter().chain(&self.a).chain(&self.b);
        let base = all.all(|v| v.is_finite());
        base && self.derived.as_ref().is_none_or(|d| {
            d.pa.iter().chain(&d.pb).chain(&d.ab_minus_pp).all(|v| v.is_finite())
        })
    }

    /// `[P | A | B]` as `f64`, the input of the big MLP heads.
    pub fn concat_pab(&self) -> Vec<f64> {
        self.p
            .iter()
            .chain(&self.a)
            .chain(&self.b)
            .map(|&v| f64::from(v))
            .collect()
    }

    /// Row layout used on disk: `P | A | B [| P⊙A | P⊙B | A⊙B−P⊙P]`.
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.span_dim() * 6);
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.b);
        if let Some(d) = &self.derived {
            out.extend_from_slice(&d.pa);
            out.extend_from_slice(&d.pb);
            out.extend_from_slice(&d.ab_minus_pp);
        }
        out
    }
}

pub fn build_bundle(example: &GapExample, encoder: &dyn Encoder, with_derived: bool) -> Result<EmbeddingBundle, EmbeddingError> {
    let wrap = |e: EmbeddingError| EmbeddingError::Example {
        id: example.id.clone(),
        source: Box::new(e),
    };
    let encoded = encode_anchored(encoder, &example.text, example.pronoun_offset).map_err(wrap)?;
    let profile = encoder.profile();
    let pool = |m: Mention| -> Result<Vec<f32>, EmbeddingError> {
        let v = pool_span(&encoded, example.span(m), profile).map_err(wrap)?;
        Ok(v.into_iter().map(|x| x as f32).collect())
    };
    let bundle = EmbeddingBundle::new(
        example.id.clone(),
        pool(Mention::Pronoun)?,
        pool(Mention::A)?,
        pool(Mention::B)?,
        with_derived,
    );
    if !bundle.is_finite() {
        return Err(EmbeddingError::NonFinite(example.id.clone()));
    }
    Ok(bundle)
}

/// Bundles for a whole dataset, in input order. Examples are encoded in
/// parallel; the encoder is shared read-only.
pub fn build_bundles(dataset: &[GapExample], encoder: &dyn Encoder, with_derived: bool) -> Result<Vec<EmbeddingBundle>, EmbeddingError> {
    dataset
        .par_iter()
        .map(|ex| build_bundle(ex, encoder, with_derived))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    const JOHN: &str = "John entered the room and saw Julia. She was talking to Mary Hendriks and looked so extremely gorgeous that John was stunned and couldn't say a word.";

    /// Encoder whose token vectors are chosen by the test.
    struct FixedEncoder {
        profile: EncoderProfile,
        tokenizer: PieceTokenizer,
    }

    impl FixedEncoder {
        fn new(layers: usize, hidden: usize, selection: Vec<i32>) -> Self {
            Self {
                profile: EncoderProfile {
                    name: "fixed".into(),
                    hidden_size: hidden,
                    num_layers: layers,
                    layer_selection: selection,
                },
                tokenizer: PieceTokenizer::new(500, false),
            }
        }
    }

    impl Encoder for FixedEncoder {
        fn profile(&self) -> &EncoderProfile {
            &self.profile
        }
        fn window_tokens(&self) -> usize {
            8
        }
        fn tokenize(&self, text: &str) -> Vec<Token> {
            self.tokenizer.tokenize(text)
        }
        fn hidden_states(&self, ids: &[u32]) -> Vec<Mat> {
            // value = 100·layer + position + col/10
            (0..self.profile.num_layers)
                .map(|l| {
                    Array2::from_shape_fn((ids.len(), self.profile.hidden_size), |(r, c)| {
                        100.0 * l as f64 + r as f64 + c as f64 / 10.0
                    })
                })
                .collect()
        }
    }

    #[test]
    fn desk_tiny_single_word_shape() {
        let enc = DeskEncoder::desk_tiny(false);
        let e = encode_tokens(&enc, "Hendriks").unwrap();
        let k = enc.tokenize("Hendriks").len();
        assert_eq!(k, 2);
        assert_eq!(e.shape(), (4, k, 16));
    }

    #[test]
    fn encoding_is_bitwise_deterministic() {
        let enc = DeskEncoder::desk_tiny(true);
        let a = encode_tokens(&enc, JOHN).unwrap();
        let b = encode_tokens(&enc, JOHN).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pronoun_token_is_covered() {
        let enc = DeskEncoder::desk_tiny(false);
        let e = encode_tokens(&enc, JOHN).unwrap();
        assert!(e.tokens.iter().any(|t| t.span.is_some_and(|s| s.contains(37))));
    }

    #[test]
    fn single_token_span_returns_that_vector() {
        let enc = FixedEncoder::new(3, 2, vec![-1]);
        let e = encode_tokens(&enc, "Ann met Bob").unwrap();
        // "met" is token 1 (row 2 before markers are stripped) on layer 2.
        let v = pool_span(&e, CharSpan::new(4, 7), enc.profile()).unwrap();
        assert_eq!(v, vec![202.0, 202.1]);
    }

    #[test]
    fn two_token_span_is_mean_and_layers_concatenate_in_order() {
        let enc = FixedEncoder::new(3, 1, vec![-1, -3]);
        let e = encode_tokens(&enc, "Ann met Bob").unwrap();
        let v = pool_span(&e, CharSpan::new(4, 11), enc.profile()).unwrap();
        // tokens 1 and 2 → rows 2 and 3: mean 2.5; layer 2 then layer 0
        assert_eq!(v, vec![202.5, 2.5]);
    }

    #[test]
    fn span_between_tokens_is_an_error() {
        let enc = FixedEncoder::new(1, 1, vec![-1]);
        let e = encode_tokens(&enc, "Ann  Bob").unwrap();
        assert!(matches!(
            pool_span(&e, CharSpan::new(3, 5), enc.profile()),
            Err(EmbeddingError::EmptySpan { .. })
        ));
    }

    #[test]
    fn long_text_requires_anchor_and_centres_window() {
        let enc = FixedEncoder::new(1, 1, vec![-1]);
        let text = "a b c d e f g h i j k l m n o p";
        assert!(matches!(encode_tokens(&enc, text), Err(EmbeddingError::TextTooLong { .. })));
        let e = encode_anchored(&enc, text, 20).unwrap(); // "k"
        assert_eq!(e.tokens.len(), 8);
        assert!(e.tokens.iter().any(|t| t.piece == "k"));
        assert!(matches!(
            pool_span(&e, CharSpan::new(0, 1), enc.profile()),
            Err(EmbeddingError::OutsideWindow { .. })
        ));
    }

    #[test]
    fn profile_validation() {
        assert!(EncoderProfile::desk_tiny(false).validate().is_ok());
        assert!(EncoderProfile::desk_tiny(false).with_layers(vec![-5]).is_err());
        assert!(EncoderProfile::large("cased").with_layers(vec![0]).is_err());
        assert_eq!(EncoderProfile::large("cased").span_dim(), 3072);
        assert_eq!(parse_layer_list("-4,-5,-6").unwrap(), vec![-4, -5, -6]);
    }

    #[test]
    fn derived_identities() {
        let p = vec![1.5f32, -2.0, 0.0];
        let a = p.clone();
        let b = vec![0.5f32, 4.0, 3.0];
        let d = DerivedVectors::compute(&p, &a, &b);
        for i in 0..3 {
            assert_eq!(d.ab_minus_pp[i], p[i] * (b[i] - p[i]));
        }
        let zero = vec![0.0f32; 3];
        let d = DerivedVectors::compute(&zero, &a, &b);
        assert!(d.pa.iter().chain(&d.pb).all(|v| *v == 0.0));
    }

    #[test]
    fn unknown_large_encoder_is_unavailable() {
        assert!(matches!(
            load_encoder("cased", None, None),
            Err(EmbeddingError::EncoderUnavailable { .. })
        ));
    }

    #[test]
    fn saved_encoder_reloads_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let enc = DeskEncoder::desk_tiny(false);
        enc.save(&dir.path().join("mine")).unwrap();
        let loaded = load_encoder("mine", None, Some(dir.path())).unwrap();
        assert_eq!(
            encode_tokens(loaded.as_ref(), JOHN).unwrap(),
            encode_tokens(&enc, JOHN).unwrap()
        );
    }
}
