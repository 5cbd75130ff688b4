//! Small post-LayerNorm transformer encoder.
//!
//! [`TransformerLayout`] only records parameter ids, so the same encoder can
//! be embedded into a larger [`ParamStore`] (the fine-tuned classifier) or
//! run stand-alone as a frozen encoder ([`TinyTransformer`]).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::dropout;
use crate::nn::{Activation, Dense, Graph, LayerNorm, Mat, ParamId, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: u32,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_positions: usize,
    pub lowercase: bool,
}

impl TransformerConfig {
    pub fn desk_tiny(lowercase: bool) -> Self {
        Self {
            vocab_size: 2048,
            hidden_size: 16,
            num_layers: 4,
            num_heads: 2,
            ffn_size: 64,
            max_positions: 288,
            lowercase,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }
}

/// Sine/cosine position table. The slowest pair has a period longer than
/// a few hundred positions, so nearby tokens get similar rows.
pub fn sinusoidal_positions(positions: usize, dim: usize) -> Mat {
    Mat::from_shape_fn((positions, dim), |(p, j)| {
        let pair = (j / 2) as f64;
        let freq = 100f64.powf(-2.0 * pair / dim as f64);
        let angle = p as f64 * freq;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
struct Block {
    query: Dense,
    key: Dense,
    value: Dense,
    output: Dense,
    attn_norm: LayerNorm,
    ffn_in: Dense,
    ffn_out: Dense,
    ffn_norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct TransformerLayout {
    pub config: TransformerConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    blocks: Vec<Block>,
}

impl TransformerLayout {
    pub fn new<R: Rng>(store: &mut ParamStore, config: TransformerConfig, rng: &mut R) -> Self {
        assert!(
            config.hidden_size.is_multiple_of(config.num_heads),
            "hidden size must divide evenly into heads"
        );
        let h = config.hidden_size;
        let token_embedding = store.add_normal("enc.tok_emb", config.vocab_size as usize, h, 0.5, rng);
        let position_embedding = store.add("enc.pos_emb", sinusoidal_positions(config.max_positions, h));
        let embedding_norm = LayerNorm::new(store, "enc.emb_norm", h);
        let blocks = (0..config.num_layers)
            .map(|l| {
                let p = format!("enc.layer{l}");
                Block {
                    query: Dense::new(store, &format!("{p}.q"), h, h, rng),
                    key: Dense::new(store, &format!("{p}.k"), h, h, rng),
                    value: Dense::new(store, &format!("{p}.v"), h, h, rng),
                    output: Dense::new(store, &format!("{p}.o"), h, h, rng),
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), h),
                    ffn_in: Dense::new(store, &format!("{p}.ffn_in"), h, config.ffn_size, rng),
                    ffn_out: Dense::new(store, &format!("{p}.ffn_out"), config.ffn_size, h, rng),
                    ffn_norm: LayerNorm::new(store, &format!("{p}.ffn_norm"), h),
                }
            })
            .collect();
        Self {
            config,
            token_embedding,
            position_embedding,
            embedding_norm,
            blocks,
        }
    }

    /// Runs the encoder over `ids` and returns each block's output
    /// (`ids.len() × hidden_size`), bottom layer first.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        ids: &[u32],
        dropout_rate: f64,
        mut rng: Option<&mut R>,
    ) -> Vec<Var> {
        assert!(
            ids.len() <= self.config.max_positions,
            "sequence of {} exceeds {} positions",
            ids.len(),
            self.config.max_positions
        );
        let tok_table = g.param(self.token_embedding);
        let pos_table = g.param(self.position_embedding);
        let tok = g.gather_rows(tok_table, ids.iter().map(|&i| i as usize).collect());
        let pos = g.gather_rows(pos_table, (0..ids.len()).collect());
        let x = g.add(tok, pos);
        let mut x = self.embedding_norm.forward(g, x);
        x = dropout(g, x, dropout_rate, rng.as_deref_mut());

        let heads = self.config.num_heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let q = block.query.forward(g, x);
            let k = block.key.forward(g, x);
            let v = block.value.forward(g, x);
            let mut head_out = Vec::with_capacity(heads);
            for hi in 0..heads {
                let qh = g.slice_cols(q, hi * hd, hd);
                let kh = g.slice_cols(k, hi * hd, hd);
                let vh = g.slice_cols(v, hi * hd, hd);
                let kt = g.transpose(kh);
                let scores = g.matmul(qh, kt);
                let scores = g.scale(scores, scale);
                let attn = g.softmax_rows(scores);
                head_out.push(g.matmul(attn, vh));
            }
            let merged = if heads == 1 { head_out[0] } else { g.concat_cols(&head_out) };
            let attn = block.output.forward(g, merged);
            let attn = dropout(g, attn, dropout_rate, rng.as_deref_mut());
            let res = g.add(x, attn);
            let h1 = block.attn_norm.forward(g, res);

            let f = block.ffn_in.forward(g, h1);
            let f = g.act(f, Activation::Gelu);
            let f = block.ffn_out.forward(g, f);
            let f = dropout(g, f, dropout_rate, rng.as_deref_mut());
            let res = g.add(h1, f);
            x = block.ffn_norm.forward(g, res);
            outputs.push(x);
        }
        outputs
    }
}

/// A stand-alone encoder whose weights are not updated.
#[derive(Debug, Clone)]
pub struct TinyTransformer {
    pub layout: TransformerLayout,
    pub store: ParamStore,
}

impl TinyTransformer {
    pub fn seeded(config: TransformerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let layout = TransformerLayout::new(&mut store, config, &mut rng);
        Self { layout, store }
    }

    /// Per-layer hidden states for a full id sequence (markers included).
    pub fn hidden_states(&self, ids: &[u32]) -> Vec<Mat> {
        let mut g = Graph::new(&self.store);
        let outs = self.layout.forward::<ChaCha8Rng>(&mut g, ids, 0.0, None);
        outs.into_iter().map(|v| g.value(v).clone()).collect()
    }
}
