//! The four outcome architectures.
//!
//! Every architecture is a set of fact encoders plus, per article, one or
//! two small heads `z = U ρ(V x)` reading one encoder's output `x`:
//!
//! | architecture  | encoders | heads per article                          |
//! |---------------|----------|--------------------------------------------|
//! | simple        | 2        | positive (enc 0, d2), negative (enc 1, d3) |
//! | mtl           | 1        | positive (enc 0, d2), negative (enc 0, d3) |
//! | joint         | 1        | 3-way configuration head (enc 0, d2)       |
//! | claim-outcome | 2        | claim (enc 0, d2), outcome (enc 1, d3)     |
//!
//! Heads have no bias terms. All parameters live in one flat `Vec<f64>`:
//! encoder embeddings first, then one block per article.

mod checkpoint;
mod prob;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use prob::{
    argmax_label, decide, decide_baseline, log_sigmoid, log_softmax3, marginalize, sigmoid, softmax3,
    BaselineScores, ClaimOutcomeScores, OutcomeDistribution,
};

use crate::corpus::{ArticleIndex, OutcomeLabel};
use crate::encoder::{
    encode, mean_pool_backward, EncoderConfig, EncoderKind, EncoderParams, FactInput, VectorTable,
};
use crate::error::{Error, Result};

/// Embedding entries start uniform in `±EMBEDDING_INIT`.
pub const EMBEDDING_INIT: f64 = 0.1;

/// Probability floor applied when a gold configuration underflows to zero.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Simple,
    Mtl,
    Joint,
    ClaimOutcome,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Simple,
        Architecture::Mtl,
        Architecture::Joint,
        Architecture::ClaimOutcome,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Simple => "simple",
            Architecture::Mtl => "mtl",
            Architecture::Joint => "joint",
            Architecture::ClaimOutcome => "claim-outcome",
        }
    }

    pub fn n_encoders(self) -> usize {
        match self {
            Architecture::Simple | Architecture::ClaimOutcome => 2,
            Architecture::Mtl | Architecture::Joint => 1,
        }
    }

    /// Whether the model yields a coherent distribution over POS/NEG/NULL.
    pub fn is_three_way(self) -> bool {
        matches!(self, Architecture::Joint | Architecture::ClaimOutcome)
    }

    /// Logits per article.
    pub fn stride(self) -> usize {
        match self {
            Architecture::Joint => 3,
            _ => 2,
        }
    }

    pub fn heads(self, d2: usize, d3: usize) -> Vec<HeadSpec> {
        let h = |role, encoder, hidden, outputs| HeadSpec {
            role,
            encoder,
            hidden,
            outputs,
        };
        match self {
            Architecture::Simple => vec![h(HeadRole::Positive, 0, d2, 1), h(HeadRole::Negative, 1, d3, 1)],
            Architecture::Mtl => vec![h(HeadRole::Positive, 0, d2, 1), h(HeadRole::Negative, 0, d3, 1)],
            Architecture::Joint => vec![h(HeadRole::Configuration, 0, d2, 3)],
            Architecture::ClaimOutcome => vec![h(HeadRole::Claim, 0, d2, 1), h(HeadRole::OutcomeGivenClaim, 1, d3, 1)],
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Architecture::Simple),
            "mtl" => Ok(Architecture::Mtl),
            "joint" => Ok(Architecture::Joint),
            "claim-outcome" | "claim_outcome" => Ok(Architecture::ClaimOutcome),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadRole {
    Positive,
    Negative,
    Configuration,
    Claim,
    OutcomeGivenClaim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSpec {
    pub role: HeadRole,
    pub encoder: usize,
    pub hidden: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Number of articles K.
    pub k: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    encoder_len: usize,
    n_encoders: usize,
    heads: Vec<HeadSpec>,
    /// `(hidden offset, output offset)` of each head inside an article block.
    head_offsets: Vec<(usize, usize)>,
    block: usize,
    heads_start: usize,
    total: usize,
}

impl Layout {
    fn new(arch: Architecture, dims: Dims, encoder: &EncoderConfig) -> Self {
        let encoder_len = encoder.n_params();
        let n_encoders = arch.n_encoders();
        let heads = arch.heads(dims.d2, dims.d3);
        let mut head_offsets = Vec::new();
        let mut block = 0;
        for h in &heads {
            let v = block;
            block += h.hidden * dims.d1;
            head_offsets.push((v, block));
            block += h.outputs * h.hidden;
        }
        let heads_start = encoder_len * n_encoders;
        Self {
            encoder_len,
            n_encoders,
            heads,
            head_offsets,
            block,
            heads_start,
            total: heads_start + block * dims.k,
        }
    }

    fn head_range(&self, article: usize, head: usize, d1: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let spec = self.heads[head];
        let base = self.heads_start + article * self.block;
        let (v, u) = self.head_offsets[head];
        (
            base + v..base + v + spec.hidden * d1,
            base + u..base + u + spec.outputs * spec.hidden,
        )
    }
}

/// Output of a forward pass for one case.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Baseline(BaselineScores),
    Joint(OutcomeDistribution),
    ClaimOutcome(ClaimOutcomeScores),
}

impl ModelOutput {
    pub fn distribution(&self) -> Option<OutcomeDistribution> {
        match self {
            ModelOutput::Baseline(_) => None,
            ModelOutput::Joint(d) => Some(d.clone()),
            ModelOutput::ClaimOutcome(s) => Some(marginalize(&s.p_claim, &s.p_pos_given_claim)),
        }
    }
}

/// Gradient contribution of a single case, kept separate so that batches
/// can be computed in parallel and summed in a fixed order.
#[derive(Debug, Clone)]
pub struct CaseGrad {
    pub loss: f64,
    pub clamped: usize,
    heads: Vec<f64>,
    d_encodings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    arch: Architecture,
    dims: Dims,
    encoder: EncoderConfig,
    articles: ArticleIndex,
    params: Vec<f64>,
    layout: Layout,
    vectors: Option<Arc<VectorTable>>,
}

impl Model {
    /// Fresh model. Head weights are uniform in `±1/√fan_in`; embedding
    /// entries are uniform in `±EMBEDDING_INIT`.
    pub fn new(arch: Architecture, articles: ArticleIndex, encoder: EncoderConfig, hidden: usize, seed: u64) -> Result<Self> {
        encoder.validate()?;
        if hidden == 0 || articles.is_empty() {
            return Err(Error::Config("hidden width and article count must be positive".into()));
        }
        let dims = Dims {
            k: articles.len(),
            d1: encoder.width,
            d2: hidden,
            d3: hidden,
        };
        let mut model = Self::zeroed(arch, articles, encoder, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads_start = model.layout.heads_start;
        for p in &mut model.params[..heads_start] {
            *p = rng.gen_range(-EMBEDDING_INIT..EMBEDDING_INIT);
        }
        for k in 0..dims.k {
            for h in 0..model.layout.heads.len() {
                let spec = model.layout.heads[h];
                let (v, u) = model.layout.head_range(k, h, dims.d1);
                let bound_v = 1.0 / (dims.d1 as f64).sqrt();
                for p in &mut model.params[v] {
                    *p = rng.gen_range(-bound_v..bound_v);
                }
                let bound_u = 1.0 / (spec.hidden as f64).sqrt();
                for p in &mut model.params[u] {
                    *p = rng.gen_range(-bound_u..bound_u);
                }
            }
        }
        Ok(model)
    }

    /// All-zero parameters with explicit dims (`d2` and `d3` may differ).
    pub fn zeroed(arch: Architecture, articles: ArticleIndex, encoder: EncoderConfig, dims: Dims) -> Self {
        assert_eq!(dims.k, articles.len());
        assert_eq!(dims.d1, encoder.width);
        let layout = Layout::new(arch, dims, &encoder);
        Self {
            arch,
            dims,
            encoder,
            articles,
            params: vec![0.0; layout.total],
            layout,
            vectors: None,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn articles(&self) -> &ArticleIndex {
        &self.articles
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn heads(&self) -> &[HeadSpec] {
        &self.layout.heads
    }

    /// Parameters of article heads, excluding encoders.
    pub fn head_param_range(&self) -> std::ops::Range<usize> {
        self.layout.heads_start..self.layout.total
    }

    pub fn encoder_param_range(&self, encoder: usize) -> std::ops::Range<usize> {
        let n = self.layout.encoder_len;
        encoder * n..(encoder + 1) * n
    }

    /// `(V, U)` of one head, row-major: `V` is `hidden × d1`, `U` is `outputs × hidden`.
    pub fn head_weights(&self, article: usize, head: usize) -> (&[f64], &[f64]) {
        let (v, u) = self.layout.head_range(article, head, self.dims.d1);
        (&self.params[v], &self.params[u])
    }

    pub fn head_weights_mut(&mut self, article: usize, head: usize) -> (&mut [f64], &mut [f64]) {
        let (v, u) = self.layout.head_range(article, head, self.dims.d1);
        let (lo, hi) = self.params.split_at_mut(u.start);
        (&mut lo[v], &mut hi[..u.len()])
    }

    pub fn attach_vectors(&mut self, table: Arc<VectorTable>) -> Result<()> {
        if table.width() != self.dims.d1 {
            return Err(Error::Shape(format!(
                "vector table width {} but model expects {}",
                table.width(),
                self.dims.d1
            )));
        }
        self.vectors = Some(table);
        Ok(())
    }

    pub fn vectors(&self) -> Option<&Arc<VectorTable>> {
        self.vectors.as_ref()
    }

    pub fn input(&self, case_id: &str, facts: &str) -> FactInput {
        FactInput::new(case_id, facts, &self.encoder)
    }

    pub fn encoder_params(&self, encoder: usize) -> Result<EncoderParams<'_>> {
        match self.encoder.kind {
            EncoderKind::HashedBow => Ok(EncoderParams::HashedBow {
                embedding: &self.params[self.encoder_param_range(encoder)],
                width: self.dims.d1,
            }),
            EncoderKind::Precomputed => match &self.vectors {
                Some(t) => Ok(EncoderParams::Precomputed { table: t }),
                None => Err(Error::Config("precomputed encoder without a vector table".into())),
            },
        }
    }

    /// One fact vector per encoder.
    pub fn encode(&self, input: &FactInput) -> Result<Vec<Vec<f64>>> {
        (0..self.layout.n_encoders)
            .map(|e| encode(input, &self.encoder_params(e)?))
            .collect()
    }

    fn check_encodings(&self, encodings: &[Vec<f64>]) -> Result<()> {
        if encodings.len() != self.layout.n_encoders || encodings.iter().any(|x| x.len() != self.dims.d1) {
            return Err(Error::Shape(format!(
                "{} expects {} fact vectors of width {}",
                self.arch, self.layout.n_encoders, self.dims.d1
            )));
        }
        Ok(())
    }

    /// Raw head outputs, `stride()` values per article.
    pub fn logits(&self, encodings: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_encodings(encodings)?;
        let mut out = Vec::with_capacity(self.dims.k * self.arch.stride());
        let mut hidden = Vec::new();
        for k in 0..self.dims.k {
            for (h, spec) in self.layout.heads.iter().enumerate() {
                let (v, u) = self.head_weights(k, h);
                let mut z = [0.0; 3];
                head_forward(v, u, spec, &encodings[spec.encoder], &mut hidden, &mut z[..spec.outputs]);
                out.extend_from_slice(&z[..spec.outputs]);
            }
        }
        Ok(out)
    }

    /// Which hidden units are active (`V x > 0`), head by head. The loss is
    /// smooth in the parameters only while this pattern stays fixed.
    pub fn activation_pattern(&self, input: &FactInput) -> Result<Vec<bool>> {
        let encodings = self.encode(input)?;
        self.check_encodings(&encodings)?;
        let mut out = Vec::new();
        for k in 0..self.dims.k {
            for (h, spec) in self.layout.heads.iter().enumerate() {
                let (v, _) = self.head_weights(k, h);
                out.extend(v.chunks_exact(self.dims.d1).map(|row| dot(row, &encodings[spec.encoder]) > 0.0));
            }
        }
        Ok(out)
    }

    pub fn output_from_encodings(&self, encodings: &[Vec<f64>]) -> Result<ModelOutput> {
        let z = self.logits(encodings)?;
        Ok(output_from_logits(self.arch, &z))
    }

    pub fn output(&self, input: &FactInput) -> Result<ModelOutput> {
        self.output_from_encodings(&self.encode(input)?)
    }

    /// Negative log-likelihood of the gold row, with dropout off.
    pub fn case_loss(&self, input: &FactInput, gold: &[OutcomeLabel]) -> Result<f64> {
        let z = self.logits(&self.encode(input)?)?;
        Ok(loss_terms(self.arch, &z, gold).0)
    }

    /// Loss and gradient for one case. `dropout` is `(rate, seed)` and
    /// masks each encoder output independently.
    pub fn case_gradient(&self, input: &FactInput, gold: &[OutcomeLabel], dropout: Option<(f64, u64)>) -> Result<CaseGrad> {
        if gold.len() != self.dims.k {
            return Err(Error::Shape(format!("gold row of width {} for K = {}", gold.len(), self.dims.k)));
        }
        let mut encodings = self.encode(input)?;
        let masks = dropout.filter(|(rate, _)| *rate > 0.0).map(|(rate, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keep = 1.0 / (1.0 - rate);
            encodings
                .iter_mut()
                .map(|x| {
                    x.iter_mut()
                        .map(|xi| {
                            let m = if rng.gen::<f64>() < rate { 0.0 } else { keep };
                            *xi *= m;
                            m
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        });

        let d1 = self.dims.d1;
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.dims.k * self.layout.heads.len());
        let mut z = Vec::with_capacity(self.dims.k * self.arch.stride());
        for k in 0..self.dims.k {
            for (h, spec) in self.layout.heads.iter().enumerate() {
                let (v, u) = self.head_weights(k, h);
                let mut hidden = Vec::new();
                let mut out = [0.0; 3];
                head_forward(v, u, spec, &encodings[spec.encoder], &mut hidden, &mut out[..spec.outputs]);
                z.extend_from_slice(&out[..spec.outputs]);
                pre.push(hidden);
            }
        }
        let (loss, dz, clamped) = loss_terms(self.arch, &z, gold);

        let mut heads = vec![0.0; self.layout.total - self.layout.heads_start];
        let mut d_enc = vec![vec![0.0; d1]; self.layout.n_encoders];
        let mut zi = 0;
        for k in 0..self.dims.k {
            for (h, spec) in self.layout.heads.iter().enumerate() {
                let (vr, ur) = self.layout.head_range(k, h, d1);
                let (v, u) = (&self.params[vr.clone()], &self.params[ur.clone()]);
                let hs = self.layout.heads_start;
                let (gv, gu) = {
                    let (lo, hi) = heads.split_at_mut(ur.start - hs);
                    (&mut lo[vr.start - hs..vr.end - hs], &mut hi[..ur.len()])
                };
                let dzh = &dz[zi..zi + spec.outputs];
                zi += spec.outputs;
                head_backward(v, u, spec, &encodings[spec.encoder], &pre[k * self.layout.heads.len() + h], dzh, gv, gu, &mut d_enc[spec.encoder]);
            }
        }
        if let Some(masks) = masks {
            for (d, m) in d_enc.iter_mut().zip(masks) {
                d.iter_mut().zip(m).for_each(|(di, mi)| *di *= mi);
            }
        }
        Ok(CaseGrad {
            loss,
            clamped,
            heads,
            d_encodings: d_enc,
        })
    }

    /// Adds `scale · case` into the full gradient vector.
    pub fn accumulate(&self, input: &FactInput, case: &CaseGrad, scale: f64, grad: &mut [f64]) {
        for (g, c) in grad[self.layout.heads_start..].iter_mut().zip(&case.heads) {
            *g += scale * c;
        }
        if self.encoder.kind == EncoderKind::HashedBow {
            for (e, d) in case.d_encodings.iter().enumerate() {
                let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
                let range = self.encoder_param_range(e);
                mean_pool_backward(&input.tokens, &scaled, &mut grad[range]);
            }
        }
    }

    /// Forward for the simple baseline; errors for other architectures.
    pub fn simple_baseline_forward(&self, input: &FactInput) -> Result<BaselineScores> {
        self.expect(Architecture::Simple)?;
        match self.output(input)? {
            ModelOutput::Baseline(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    pub fn mtl_forward(&self, input: &FactInput) -> Result<BaselineScores> {
        self.expect(Architecture::Mtl)?;
        match self.output(input)? {
            ModelOutput::Baseline(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    pub fn joint_forward(&self, input: &FactInput) -> Result<OutcomeDistribution> {
        self.expect(Architecture::Joint)?;
        match self.output(input)? {
            ModelOutput::Joint(d) => Ok(d),
            _ => unreachable!(),
        }
    }

    pub fn claim_outcome_forward(&self, input: &FactInput) -> Result<ClaimOutcomeScores> {
        self.expect(Architecture::ClaimOutcome)?;
        match self.output(input)? {
            ModelOutput::ClaimOutcome(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    fn expect(&self, arch: Architecture) -> Result<()> {
        if self.arch == arch {
            Ok(())
        } else {
            Err(Error::Shape(format!("{} model used as {}", self.arch, arch)))
        }
    }
}

fn head_forward(v: &[f64], u: &[f64], spec: &HeadSpec, x: &[f64], hidden: &mut Vec<f64>, z: &mut [f64]) {
    let d1 = x.len();
    hidden.clear();
    hidden.extend(v.chunks_exact(d1).map(|row| dot(row, x)));
    for (o, zo) in z.iter_mut().enumerate() {
        let urow = &u[o * spec.hidden..(o + 1) * spec.hidden];
        *zo = urow.iter().zip(hidden.iter()).map(|(w, h)| w * h.max(0.0)).sum();
    }
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    v: &[f64],
    u: &[f64],
    spec: &HeadSpec,
    x: &[f64],
    pre: &[f64],
    dz: &[f64],
    gv: &mut [f64],
    gu: &mut [f64],
    dx: &mut [f64],
) {
    if dz.iter().all(|d| *d == 0.0) {
        return;
    }
    let d1 = x.len();
    for j in 0..spec.hidden {
        let a = pre[j].max(0.0);
        let mut da = 0.0;
        for (o, d) in dz.iter().enumerate() {
            gu[o * spec.hidden + j] += d * a;
            da += u[o * spec.hidden + j] * d;
        }
        if pre[j] > 0.0 && da != 0.0 {
            let vrow = &v[j * d1..(j + 1) * d1];
            let grow = &mut gv[j * d1..(j + 1) * d1];
            for i in 0..d1 {
                grow[i] += da * x[i];
                dx[i] += da * vrow[i];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn output_from_logits(arch: Architecture, z: &[f64]) -> ModelOutput {
    match arch {
        Architecture::Simple | Architecture::Mtl => ModelOutput::Baseline(BaselineScores {
            rows: z.chunks_exact(2).map(|c| [sigmoid(c[0]), sigmoid(c[1])]).collect(),
        }),
        Architecture::Joint => ModelOutput::Joint(OutcomeDistribution {
            rows: z.chunks_exact(3).map(|c| softmax3([c[0], c[1], c[2]])).collect(),
        }),
        Architecture::ClaimOutcome => ModelOutput::ClaimOutcome(ClaimOutcomeScores {
            p_claim: z.chunks_exact(2).map(|c| sigmoid(c[0])).collect(),
            p_pos_given_claim: z.chunks_exact(2).map(|c| sigmoid(c[1])).collect(),
        }),
    }
}

fn nll_term(logp: f64, clamped: &mut usize) -> (f64, bool) {
    if logp.exp() == 0.0 {
        *clamped += 1;
        (-PROB_FLOOR.ln(), false)
    } else {
        (-logp, true)
    }
}

/// `-Σ_k log p(o_k, c_k | f)` for one case, its gradient with respect to the
/// logits, and the number of clamped terms. Overflowed logits are not an
/// underflowed probability, so they give an infinite loss instead of a clamp.
pub fn loss_terms(arch: Architecture, z: &[f64], gold: &[OutcomeLabel]) -> (f64, Vec<f64>, usize) {
    if z.iter().any(|v| !v.is_finite()) {
        return (f64::INFINITY, vec![0.0; z.len()], 0);
    }
    let mut loss = 0.0;
    let mut dz = vec![0.0; z.len()];
    let mut clamped = 0;
    let binary = |logit: f64, target: bool, slot: &mut f64, loss: &mut f64, clamped: &mut usize| {
        let logp = if target { log_sigmoid(logit) } else { log_sigmoid(-logit) };
        let (l, live) = nll_term(logp, clamped);
        *loss += l;
        if live {
            *slot = sigmoid(logit) - if target { 1.0 } else { 0.0 };
        }
    };
    match arch {
        Architecture::Simple | Architecture::Mtl => {
            for (k, label) in gold.iter().enumerate() {
                let (a, b) = dz[2 * k..2 * k + 2].split_at_mut(1);
                binary(z[2 * k], *label == OutcomeLabel::Pos, &mut a[0], &mut loss, &mut clamped);
                binary(z[2 * k + 1], *label == OutcomeLabel::Neg, &mut b[0], &mut loss, &mut clamped);
            }
        }
        Architecture::ClaimOutcome => {
            for (k, label) in gold.iter().enumerate() {
                let (a, b) = dz[2 * k..2 * k + 2].split_at_mut(1);
                binary(z[2 * k], label.is_claimed(), &mut a[0], &mut loss, &mut clamped);
                if label.is_claimed() {
                    binary(z[2 * k + 1], *label == OutcomeLabel::Pos, &mut b[0], &mut loss, &mut clamped);
                }
            }
        }
        Architecture::Joint => {
            for (k, label) in gold.iter().enumerate() {
                let zk = [z[3 * k], z[3 * k + 1], z[3 * k + 2]];
                let logp = log_softmax3(zk);
                let (l, live) = nll_term(logp[label.index()], &mut clamped);
                loss += l;
                if live {
                    let p = softmax3(zk);
                    for c in 0..3 {
                        dz[3 * k + c] = p[c] - if c == label.index() { 1.0 } else { 0.0 };
                    }
                }
            }
        }
    }
    (loss, dz, clamped)
}
