//! Segmentation models: per-token probability that a token ends a cell.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tabext_core::ingest::FeaturizedTable;

use crate::error::{NnError, Result};
use crate::graph::{sigmoid_scalar, Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Unsup,
    FfSpatial,
    FfToken,
    FfBoth,
    LstmRow,
    LstmLocal,
    LstmSwap,
    LstmGlobal,
    TrRow,
    TrGlobal,
    TrRec,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Unsup,
        Variant::FfSpatial,
        Variant::FfToken,
        Variant::FfBoth,
        Variant::LstmRow,
        Variant::LstmLocal,
        Variant::LstmSwap,
        Variant::LstmGlobal,
        Variant::TrRow,
        Variant::TrGlobal,
        Variant::TrRec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unsup => "UNSUP",
            Variant::FfSpatial => "FF_SPATIAL",
            Variant::FfToken => "FF_TOKEN",
            Variant::FfBoth => "FF_BOTH",
            Variant::LstmRow => "LSTM_ROW",
            Variant::LstmLocal => "LSTM_LOCAL",
            Variant::LstmSwap => "LSTM_SWAP",
            Variant::LstmGlobal => "LSTM_GLOBAL",
            Variant::TrRow => "TR_ROW",
            Variant::TrGlobal => "TR_GLOBAL",
            Variant::TrRec => "TR_REC",
        }
    }

    pub fn is_trainable(self) -> bool {
        self != Variant::Unsup
    }

    /// Published parameter count for the default configuration.
    pub fn target_param_count(self) -> usize {
        match self {
            Variant::Unsup => 0,
            Variant::FfSpatial => 2_769,
            Variant::FfToken => 16_801,
            Variant::FfBoth => 17_393,
            Variant::LstmRow | Variant::LstmLocal | Variant::LstmSwap | Variant::LstmGlobal => 27_025,
            Variant::TrRow | Variant::TrGlobal => 27_153,
            Variant::TrRec => 35_761,
        }
    }

    fn is_lstm(self) -> bool {
        matches!(self, Variant::LstmRow | Variant::LstmLocal | Variant::LstmSwap | Variant::LstmGlobal)
    }

    fn is_transformer(self) -> bool {
        matches!(self, Variant::TrRow | Variant::TrGlobal | Variant::TrRec)
    }

    fn uses_tokens(self) -> bool {
        !matches!(self, Variant::Unsup | Variant::FfSpatial)
    }

    fn uses_spatial(self) -> bool {
        !matches!(self, Variant::Unsup | Variant::FfToken)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == up)
            .ok_or_else(|| NnError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Embedding rows, UNK included.
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub spatial_dim: usize,
    pub spatial_proj: usize,
    pub ff_hidden: usize,
    /// Hidden size per LSTM direction.
    pub lstm_hidden: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub heads: usize,
    /// Carry the cell state along with the hidden state between rows.
    pub propagate_cell: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            vocab_size: 882,
            emb_dim: 16,
            spatial_dim: 4,
            spatial_proj: 16,
            ff_hidden: 32,
            lstm_hidden: 16,
            d_model: 32,
            d_ff: 32,
            layers: 2,
            heads: 4,
            propagate_cell: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.variant;
        if v.is_transformer() && (self.heads == 0 || self.d_model % self.heads != 0) {
            return Err(NnError::Config(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads)));
        }
        if (v.is_lstm() || v.is_transformer()) && self.emb_dim + self.spatial_proj != self.d_model {
            return Err(NnError::Config("embedding plus projection width must equal d_model".into()));
        }
        if v.is_lstm() && 2 * self.lstm_hidden != self.d_model {
            return Err(NnError::Config("two LSTM directions must fill d_model".into()));
        }
        if self.layers == 0 && v.is_trainable() && !matches!(v, Variant::FfSpatial | Variant::FfToken | Variant::FfBoth) {
            return Err(NnError::Config("at least one layer is required".into()));
        }
        Ok(())
    }
}

/// A built model: configuration plus named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    config: ModelConfig,
    params: ParamStore,
}

fn linear(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.uniform(&format!("{name}.w"), fan_in, fan_out, bound, rng);
    store.uniform(&format!("{name}.b"), 1, fan_out, bound, rng);
}

fn norm(store: &mut ParamStore, name: &str, d: usize) {
    store.constant(&format!("{name}.g"), 1, d, 1.0);
    store.constant(&format!("{name}.b"), 1, d, 0.0);
}

fn attention_params(store: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) {
    for p in ["q", "k", "v", "o"] {
        linear(store, &format!("{name}.{p}"), d, d, rng);
    }
}

/// Deterministic initialization from `seed`; fails when the configuration
/// does not reproduce the published parameter count of its variant.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<SegModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let c = &config;
    let v = c.variant;
    if v.uses_tokens() {
        // One-hot input: a single active unit, so the bound is 1.
        s.uniform("emb", c.vocab_size, c.emb_dim, 1.0, &mut rng);
    }
    if v.uses_spatial() {
        linear(&mut s, "proj", c.spatial_dim, c.spatial_proj, &mut rng);
    }
    let input_dim = match v {
        Variant::FfSpatial => c.spatial_proj,
        Variant::FfToken => c.emb_dim,
        _ => c.emb_dim + c.spatial_proj,
    };
    match v {
        Variant::Unsup => {}
        Variant::FfSpatial | Variant::FfToken | Variant::FfBoth => {
            let mut fan_in = input_dim;
            for k in 0..3 {
                linear(&mut s, &format!("ff{k}"), fan_in, c.ff_hidden, &mut rng);
                fan_in = c.ff_hidden;
            }
            linear(&mut s, "head", fan_in, 1, &mut rng);
        }
        _ if v.is_lstm() => {
            let h = c.lstm_hidden;
            let bound = 1.0 / (h as f64).sqrt();
            for l in 0..c.layers {
                let fan_in = if l == 0 { input_dim } else { 2 * h };
                for d in ["f", "r"] {
                    let p = format!("lstm{l}.{d}");
                    s.uniform(&format!("{p}.w_ih"), fan_in, 4 * h, bound, &mut rng);
                    s.uniform(&format!("{p}.w_hh"), h, 4 * h, bound, &mut rng);
                    s.uniform(&format!("{p}.b_ih"), 1, 4 * h, bound, &mut rng);
                    s.uniform(&format!("{p}.b_hh"), 1, 4 * h, bound, &mut rng);
                }
            }
            linear(&mut s, "head", 2 * h, 1, &mut rng);
        }
        Variant::TrRow | Variant::TrGlobal => {
            for l in 0..c.layers {
                attention_params(&mut s, &format!("enc{l}.attn"), c.d_model, &mut rng);
                linear(&mut s, &format!("enc{l}.ffn1"), c.d_model, c.d_ff, &mut rng);
                linear(&mut s, &format!("enc{l}.ffn2"), c.d_ff, c.d_model, &mut rng);
                norm(&mut s, &format!("enc{l}.ln1"), c.d_model);
                norm(&mut s, &format!("enc{l}.ln2"), c.d_model);
            }
            linear(&mut s, "head", c.d_model, 1, &mut rng);
        }
        Variant::TrRec => {
            for l in 0..c.layers {
                attention_params(&mut s, &format!("dec{l}.self"), c.d_model, &mut rng);
                attention_params(&mut s, &format!("dec{l}.cross"), c.d_model, &mut rng);
                linear(&mut s, &format!("dec{l}.ffn1"), c.d_model, c.d_ff, &mut rng);
                linear(&mut s, &format!("dec{l}.ffn2"), c.d_ff, c.d_model, &mut rng);
                for n in 1..=3 {
                    norm(&mut s, &format!("dec{l}.ln{n}"), c.d_model);
                }
            }
            linear(&mut s, "head", c.d_model, 1, &mut rng);
            let bound = 1.0 / (c.d_model as f64).sqrt();
            s.uniform("mem_init", 1, c.d_model, bound, &mut rng);
        }
        _ => unreachable!("all variants covered"),
    }
    let got = s.count();
    let want = v.target_param_count();
    if got != want {
        return Err(NnError::ParamCount { variant: v.name().into(), got, want });
    }
    Ok(SegModel { config, params: s })
}

/// Sinusoidal position code for positions `0..n`.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let k = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(k / d as f64);
            t.data_mut()[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

struct LstmState {
    h: Var,
    c: Var,
}

impl SegModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn check_input(&self, table: &FeaturizedTable) -> Result<()> {
        if self.config.variant.uses_tokens() {
            for t in table.tokens() {
                if t.tag_id as usize >= self.config.vocab_size {
                    return Err(NnError::TokenId { id: t.tag_id, size: self.config.vocab_size });
                }
            }
        }
        Ok(())
    }

    /// Per-token probabilities in row-major order.
    pub fn forward(&self, table: &FeaturizedTable) -> Result<Vec<f64>> {
        self.check_input(table)?;
        if self.config.variant == Variant::Unsup {
            return Ok(vec![1.0; table.token_count()]);
        }
        if table.token_count() == 0 {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(&self.params);
        let logits = self.logits(&mut g, table);
        let z = g.value(logits);
        if !z.is_finite() {
            return Err(NnError::NonFinite("logits".into()));
        }
        Ok(z.data().iter().map(|&v| sigmoid_scalar(v)).collect())
    }

    /// Distance of the nearest ReLU input to its kink on this table.
    pub fn relu_margin(&self, table: &FeaturizedTable) -> Result<f64> {
        self.check_input(table)?;
        if self.config.variant == Variant::Unsup || table.token_count() == 0 {
            return Ok(f64::INFINITY);
        }
        let mut g = Graph::new(&self.params);
        self.logits(&mut g, table);
        Ok(g.relu_margin())
    }

    /// Mean binary cross-entropy on one table.
    pub fn loss(&self, table: &FeaturizedTable) -> Result<f64> {
        let (loss, _) = self.loss_inner(table, false)?;
        Ok(loss)
    }

    /// Loss plus one gradient tensor per parameter, aligned with `params()`.
    pub fn loss_and_grad(&self, table: &FeaturizedTable) -> Result<(f64, Vec<Tensor>)> {
        let (loss, grads) = self.loss_inner(table, true)?;
        Ok((loss, grads.expect("requested")))
    }

    fn loss_inner(&self, table: &FeaturizedTable, grad: bool) -> Result<(f64, Option<Vec<Tensor>>)> {
        self.check_input(table)?;
        let labels = table.labels().ok_or(NnError::MissingLabels)?;
        if labels.is_empty() {
            return Err(NnError::Empty("table"));
        }
        if !self.config.variant.is_trainable() {
            return Err(NnError::Config("UNSUP has no trainable parameters".into()));
        }
        let mut g = Graph::new(&self.params);
        let logits = self.logits(&mut g, table);
        let targets = labels.iter().map(|&l| l as f64).collect();
        let loss = g.bce_logits(logits, targets);
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(NnError::NonFinite("loss".into()));
        }
        let grads = grad.then(|| g.backward(loss));
        if let Some(gs) = &grads {
            if gs.iter().any(|t| !t.is_finite()) {
                return Err(NnError::NonFinite("gradients".into()));
            }
        }
        Ok((value, grads))
    }

    fn embed(&self, g: &mut Graph, table: &FeaturizedTable) -> Var {
        let v = self.config.variant;
        let n = table.token_count();
        let tok = v.uses_tokens().then(|| {
            let ids = table.tokens().map(|t| t.tag_id as usize).collect();
            let emb = g.p("emb");
            g.gather(emb, ids)
        });
        let spa = v.uses_spatial().then(|| {
            let data = table.tokens().flat_map(|t| t.spatial.values).collect();
            let x = g.input(Tensor::from_vec(n, self.config.spatial_dim, data).expect("four features per token"));
            self.linear(g, "proj", x)
        });
        match (tok, spa) {
            (Some(a), Some(b)) => g.concat_cols(&[a, b]),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("UNSUP has no embedding"),
        }
    }

    fn linear(&self, g: &mut Graph, name: &str, x: Var) -> Var {
        let w = g.p(&format!("{name}.w"));
        let b = g.p(&format!("{name}.b"));
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    /// Row spans `(offset, len)` of non-empty rows in the flattened order.
    fn row_spans(table: &FeaturizedTable) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut off = 0;
        for r in &table.rows {
            if !r.is_empty() {
                spans.push((off, r.len()));
            }
            off += r.len();
        }
        spans
    }

    fn logits(&self, g: &mut Graph, table: &FeaturizedTable) -> Var {
        let x = self.embed(g, table);
        let v = self.config.variant;
        let h = match v {
            Variant::FfSpatial | Variant::FfToken | Variant::FfBoth => {
                let mut h = x;
                for k in 0..3 {
                    let y = self.linear(g, &format!("ff{k}"), h);
                    h = g.relu(y);
                }
                h
            }
            Variant::LstmRow | Variant::LstmLocal | Variant::LstmSwap | Variant::LstmGlobal => self.lstm_stack(g, x, table),
            Variant::TrRow | Variant::TrGlobal => self.encoder_stack(g, x, table),
            Variant::TrRec => self.recurrent_decoder(g, x, table),
            Variant::Unsup => unreachable!("handled by callers"),
        };
        self.linear(g, "head", h)
    }

    fn zeros(&self, g: &mut Graph) -> Var {
        g.input(Tensor::zeros(1, self.config.lstm_hidden))
    }

    /// One direction over `x`; returns per-position outputs in sequence
    /// order and the final state.
    fn lstm_dir(&self, g: &mut Graph, x: Var, prefix: &str, reverse: bool, init: LstmState) -> (Var, LstmState) {
        let hsz = self.config.lstm_hidden;
        let w_ih = g.p(&format!("{prefix}.w_ih"));
        let w_hh = g.p(&format!("{prefix}.w_hh"));
        let b_ih = g.p(&format!("{prefix}.b_ih"));
        let b_hh = g.p(&format!("{prefix}.b_hh"));
        let xw = g.matmul(x, w_ih);
        let xw = g.add_row(xw, b_ih);
        let xw = g.add_row(xw, b_hh);
        let n = g.value(x).rows();
        let LstmState { mut h, mut c } = init;
        let mut outs = vec![h; n];
        let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..n).rev()) } else { Box::new(0..n) };
        for t in order {
            let xt = g.slice_rows(xw, t, 1);
            let hw = g.matmul(h, w_hh);
            let gates = g.add(xt, hw);
            let hc = g.lstm_cell(gates, c);
            h = g.slice_cols(hc, 0, hsz);
            c = g.slice_cols(hc, hsz, hsz);
            outs[t] = h;
        }
        (g.concat_rows(&outs), LstmState { h, c })
    }

    fn carry(&self, g: &mut Graph, s: &LstmState) -> LstmState {
        let c = if self.config.propagate_cell { s.c } else { self.zeros(g) };
        LstmState { h: s.h, c }
    }

    fn lstm_stack(&self, g: &mut Graph, x: Var, table: &FeaturizedTable) -> Var {
        let v = self.config.variant;
        let layers = self.config.layers;
        if v == Variant::LstmGlobal {
            let mut h = x;
            for l in 0..layers {
                let (z1, z2) = (self.zeros(g), self.zeros(g));
                let (f, _) = self.lstm_dir(g, h, &format!("lstm{l}.f"), false, LstmState { h: z1, c: z2 });
                let (z1, z2) = (self.zeros(g), self.zeros(g));
                let (r, _) = self.lstm_dir(g, h, &format!("lstm{l}.r"), true, LstmState { h: z1, c: z2 });
                h = g.concat_cols(&[f, r]);
            }
            return h;
        }
        // Per-layer final states of the previous row: (forward, reverse).
        let mut prev: Vec<Option<(LstmState, LstmState)>> = (0..layers).map(|_| None).collect();
        let mut outs = Vec::new();
        for (off, len) in Self::row_spans(table) {
            let mut h = g.slice_rows(x, off, len);
            for (l, slot) in prev.iter_mut().enumerate() {
                let (fi, ri) = match (v, slot.as_ref()) {
                    (Variant::LstmLocal, Some((f, r))) => (self.carry(g, f), self.carry(g, r)),
                    (Variant::LstmSwap, Some((f, r))) => (self.carry(g, r), self.carry(g, f)),
                    _ => {
                        let z = [self.zeros(g), self.zeros(g), self.zeros(g), self.zeros(g)];
                        (LstmState { h: z[0], c: z[1] }, LstmState { h: z[2], c: z[3] })
                    }
                };
                let (f, fs) = self.lstm_dir(g, h, &format!("lstm{l}.f"), false, fi);
                let (r, rs) = self.lstm_dir(g, h, &format!("lstm{l}.r"), true, ri);
                h = g.concat_cols(&[f, r]);
                *slot = Some((fs, rs));
            }
            outs.push(h);
        }
        g.concat_rows(&outs)
    }

    fn attention(&self, g: &mut Graph, prefix: &str, q_in: Var, kv_in: Var) -> Var {
        let d = self.config.d_model;
        let heads = self.config.heads;
        let dk = d / heads;
        let q = self.linear(g, &format!("{prefix}.q"), q_in);
        let k = self.linear(g, &format!("{prefix}.k"), kv_in);
        let v = self.linear(g, &format!("{prefix}.v"), kv_in);
        let mut outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = g.slice_cols(q, hd * dk, dk);
            let kh = g.slice_cols(k, hd * dk, dk);
            let vh = g.slice_cols(v, hd * dk, dk);
            let kt = g.transpose(kh);
            let s = g.matmul(qh, kt);
            let s = g.scale(s, 1.0 / (dk as f64).sqrt());
            let a = g.softmax_rows(s);
            outs.push(g.matmul(a, vh));
        }
        let cat = g.concat_cols(&outs);
        self.linear(g, &format!("{prefix}.o"), cat)
    }

    fn add_norm(&self, g: &mut Graph, name: &str, x: Var, y: Var) -> Var {
        let s = g.add(x, y);
        let gain = g.p(&format!("{name}.g"));
        let bias = g.p(&format!("{name}.b"));
        g.layer_norm(s, gain, bias)
    }

    fn ffn(&self, g: &mut Graph, prefix: &str, x: Var) -> Var {
        let h = self.linear(g, &format!("{prefix}.ffn1"), x);
        let h = g.relu(h);
        self.linear(g, &format!("{prefix}.ffn2"), h)
    }

    fn with_positions(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.value(x).rows();
        let pe = g.input(positional_encoding(n, self.config.d_model));
        g.add(x, pe)
    }

    fn encode(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = self.with_positions(g, x);
        for l in 0..self.config.layers {
            let p = format!("enc{l}");
            let a = self.attention(g, &format!("{p}.attn"), h, h);
            h = self.add_norm(g, &format!("{p}.ln1"), h, a);
            let f = self.ffn(g, &p, h);
            h = self.add_norm(g, &format!("{p}.ln2"), h, f);
        }
        h
    }

    fn encoder_stack(&self, g: &mut Graph, x: Var, table: &FeaturizedTable) -> Var {
        if self.config.variant == Variant::TrGlobal {
            return self.encode(g, x);
        }
        let mut outs = Vec::new();
        for (off, len) in Self::row_spans(table) {
            let r = g.slice_rows(x, off, len);
            outs.push(self.encode(g, r));
        }
        g.concat_rows(&outs)
    }

    fn recurrent_decoder(&self, g: &mut Graph, x: Var, table: &FeaturizedTable) -> Var {
        let mut memory: Option<Var> = None;
        let mut outs = Vec::new();
        for (off, len) in Self::row_spans(table) {
            let r = g.slice_rows(x, off, len);
            let mem = match memory {
                Some(m) => m,
                None => {
                    let init = g.p("mem_init");
                    g.repeat_rows(init, len)
                }
            };
            let mut h = self.with_positions(g, r);
            for l in 0..self.config.layers {
                let p = format!("dec{l}");
                let a = self.attention(g, &format!("{p}.self"), h, h);
                h = self.add_norm(g, &format!("{p}.ln1"), h, a);
                let c = self.attention(g, &format!("{p}.cross"), h, mem);
                h = self.add_norm(g, &format!("{p}.ln2"), h, c);
                let f = self.ffn(g, &p, h);
                h = self.add_norm(g, &format!("{p}.ln3"), h, f);
            }
            memory = Some(h);
            outs.push(h);
        }
        g.concat_rows(&outs)
    }
}
