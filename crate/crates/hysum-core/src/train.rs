//! Contrastive training of the word-level projection heads.
//!
//! A batch is a list of (query feature, summary feature) pairs; features
//! are mean-pooled token embeddings. The loss for an anchor pair `i` is
//!
//! ```text
//! L = -ln( e^{cos(q_i, s_i)} / (e^{cos(q_i, s_i)} + sum_{b != i} e^{cos(q_b, s_b)}) )
//! ```
//!
//! which reduces to `logsumexp(c) - c_i` over the batch's own-pair cosines.
//! That literal form is the default; `standard-infonce` swaps the negative
//! terms for the anchor query against the other summaries, `cos(q_i, s_b)`.
//! There is no temperature parameter.
//!
//! Gradients with respect to every word-head weight and bias are closed
//! form (softmax through cosine through the affine maps) and are validated
//! against central finite differences in the acceptance suite. Also here:
//! the AdamW/SGD optimizer, the training loop, and the answer-token
//! cross-entropy utility.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::embed::TokenEmbedding;
use crate::heads::ProjectionHeads;
use crate::vecmath;

/// Norm below which a feature is rejected as having no direction.
const ZERO_NORM: f64 = 1e-12;

/// Floor applied to probabilities before `ln` in the answer cross-entropy.
const PROB_FLOOR: f64 = 1e-12;

/// Which pairs provide the negative terms of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Negatives are the other pairs' own cosines `cos(q_b, s_b)`.
    #[default]
    AsWritten,
    /// Negatives pair the anchor query with the other summaries,
    /// `cos(q_i, s_b)`.
    StandardInfonce,
}

impl LossMode {
    pub fn label(&self) -> &'static str {
        match self {
            LossMode::AsWritten => "as-written",
            LossMode::StandardInfonce => "standard-infonce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "as-written" => Some(LossMode::AsWritten),
            "standard-infonce" | "infonce" => Some(LossMode::StandardInfonce),
            _ => None,
        }
    }
}

impl core::fmt::Display for LossMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// (query feature, summary feature) pairs sharing one dimension.
///
/// In the training loop the pairs hold mean-pooled token embeddings and
/// the word heads are applied via [`ContrastiveBatch::project`]; the loss
/// itself just computes cosines of whatever the pairs hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    dim: usize,
}

impl ContrastiveBatch {
    pub fn new(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(CoreError::EmptyBatch);
        };
        let dim = first.0.len();
        for (q, s) in &pairs {
            if q.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    actual: q.len(),
                });
            }
            if s.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    actual: s.len(),
                });
            }
        }
        Ok(Self { pairs, dim })
    }

    /// Mean-pooled token features for one (query, summary) text pair.
    pub fn pair_from_tokens(query: &TokenEmbedding, summary: &TokenEmbedding) -> (Vec<f64>, Vec<f64>) {
        (vecmath::mean_rows(&query.rows), vecmath::mean_rows(&summary.rows))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    /// Applies the word-level heads: query features through the query head,
    /// summary features through the summary head.
    pub fn project(&self, heads: &ProjectionHeads) -> Result<ContrastiveBatch> {
        if self.dim != heads.dim {
            return Err(CoreError::DimensionMismatch {
                expected: heads.dim,
                actual: self.dim,
            });
        }
        let pairs = self
            .pairs
            .iter()
            .map(|(q, s)| (heads.word_query.apply(q), heads.word_summary.apply(s)))
            .collect();
        ContrastiveBatch::new(pairs)
    }
}

fn cosine_checked(u: &[f64], v: &[f64], pair: usize) -> Result<f64> {
    let nu = vecmath::norm(u);
    let nv = vecmath::norm(v);
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return Err(CoreError::ZeroNormFeature { pair });
    }
    Ok(vecmath::dot(u, v) / (nu * nv))
}

fn check_anchor(batch: &ContrastiveBatch, anchor: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if anchor >= batch.len() {
        return Err(CoreError::AnchorOutOfRange {
            anchor,
            batch_len: batch.len(),
        });
    }
    Ok(())
}

/// Contrastive enhancement loss for one anchor pair. Always >= 0 and
/// exactly 0 when the batch has a single pair (no negatives).
pub fn contrastive_loss(batch: &ContrastiveBatch, anchor: usize, mode: LossMode) -> Result<f64> {
    check_anchor(batch, anchor)?;
    let scores = match mode {
        LossMode::AsWritten => own_pair_cosines(batch)?,
        LossMode::StandardInfonce => anchor_cross_cosines(batch, anchor)?,
    };
    Ok(vecmath::log_sum_exp(&scores) - scores[anchor])
}

fn own_pair_cosines(batch: &ContrastiveBatch) -> Result<Vec<f64>> {
    batch
        .pairs
        .iter()
        .enumerate()
        .map(|(i, (q, s))| cosine_checked(q, s, i))
        .collect()
}

fn anchor_cross_cosines(batch: &ContrastiveBatch, anchor: usize) -> Result<Vec<f64>> {
    let (q, _) = &batch.pairs[anchor];
    batch
        .pairs
        .iter()
        .enumerate()
        .map(|(b, (_, s))| cosine_checked(q, s, b))
        .collect()
}

/// Gradients of the loss with respect to the word-level heads, with the
/// same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WordHeadGrads {
    pub dim: usize,
    pub query_weight: Vec<f64>,
    pub query_bias: Vec<f64>,
    pub summary_weight: Vec<f64>,
    pub summary_bias: Vec<f64>,
}

impl WordHeadGrads {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            query_weight: vec![0.0; dim * dim],
            query_bias: vec![0.0; dim],
            summary_weight: vec![0.0; dim * dim],
            summary_bias: vec![0.0; dim],
        }
    }

    pub fn add_assign(&mut self, other: &WordHeadGrads) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.query_weight.iter_mut().zip(&other.query_weight) {
            *a += b;
        }
        for (a, b) in self.query_bias.iter_mut().zip(&other.query_bias) {
            *a += b;
        }
        for (a, b) in self.summary_weight.iter_mut().zip(&other.summary_weight) {
            *a += b;
        }
        for (a, b) in self.summary_bias.iter_mut().zip(&other.summary_bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self
            .query_weight
            .iter_mut()
            .chain(self.query_bias.iter_mut())
            .chain(self.summary_weight.iter_mut())
            .chain(self.summary_bias.iter_mut())
        {
            *v *= factor;
        }
    }

    /// Same layout as [`ProjectionHeads::word_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(ProjectionHeads::word_param_count(self.dim));
        flat.extend_from_slice(&self.query_weight);
        flat.extend_from_slice(&self.query_bias);
        flat.extend_from_slice(&self.summary_weight);
        flat.extend_from_slice(&self.summary_bias);
        flat
    }
}

struct ProjectedPair {
    query: Vec<f64>,
    query_norm: f64,
    summary: Vec<f64>,
    summary_norm: f64,
}

fn project_pairs(batch: &ContrastiveBatch, heads: &ProjectionHeads) -> Result<Vec<ProjectedPair>> {
    if batch.dim != heads.dim {
        return Err(CoreError::DimensionMismatch {
            expected: heads.dim,
            actual: batch.dim,
        });
    }
    batch
        .pairs
        .iter()
        .enumerate()
        .map(|(i, (q, s))| {
            let query = heads.word_query.apply(q);
            let summary = heads.word_summary.apply(s);
            let query_norm = vecmath::norm(&query);
            let summary_norm = vecmath::norm(&summary);
            if query_norm < ZERO_NORM || summary_norm < ZERO_NORM {
                return Err(CoreError::ZeroNormFeature { pair: i });
            }
            Ok(ProjectedPair {
                query,
                query_norm,
                summary,
                summary_norm,
            })
        })
        .collect()
}

fn cosine_of(p: &ProjectedPair) -> f64 {
    vecmath::dot(&p.query, &p.summary) / (p.query_norm * p.summary_norm)
}

fn cross_cosine(a: &ProjectedPair, b: &ProjectedPair) -> f64 {
    vecmath::dot(&a.query, &b.summary) / (a.query_norm * b.summary_norm)
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &s in scores {
        max = max.max(s);
    }
    let mut probs: Vec<f64> = scores.iter().map(|&s| vecmath::exp(s - max)).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// d cos(u, v) / du given the cosine and both norms.
fn cosine_grad_lhs(u: &[f64], nu: f64, v: &[f64], nv: f64, cos: f64) -> Vec<f64> {
    u.iter()
        .zip(v.iter())
        .map(|(&ui, &vi)| vi / (nu * nv) - cos * ui / (nu * nu))
        .collect()
}

fn add_outer(weight_grad: &mut [f64], bias_grad: &mut [f64], upstream: &[f64], input: &[f64]) {
    let dim = upstream.len();
    for (r, &u) in upstream.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let row = &mut weight_grad[r * dim..(r + 1) * dim];
        for (w, &x) in row.iter_mut().zip(input.iter()) {
            *w += u * x;
        }
        bias_grad[r] += u;
    }
}

/// Analytic gradient of [`contrastive_loss`] composed with the head
/// projection, i.e. of `contrastive_loss(batch.project(heads), anchor, mode)`,
/// with respect to every word-head weight and bias. The batch holds the
/// raw (pre-projection) features.
pub fn contrastive_loss_grad(
    batch: &ContrastiveBatch,
    anchor: usize,
    heads: &ProjectionHeads,
    mode: LossMode,
) -> Result<WordHeadGrads> {
    check_anchor(batch, anchor)?;
    let projected = project_pairs(batch, heads)?;
    let mut grads = WordHeadGrads::zeros(heads.dim);
    match mode {
        LossMode::AsWritten => {
            let cosines: Vec<f64> = projected.iter().map(cosine_of).collect();
            let probs = softmax(&cosines);
            for (b, pair) in projected.iter().enumerate() {
                let weight = probs[b] - if b == anchor { 1.0 } else { 0.0 };
                accumulate_own_pair(&mut grads, batch, pair, b, cosines[b], weight);
            }
        }
        LossMode::StandardInfonce => {
            infonce_loss_and_grad_into(batch, &projected, anchor, &mut grads);
        }
    }
    Ok(grads)
}

fn accumulate_own_pair(
    grads: &mut WordHeadGrads,
    batch: &ContrastiveBatch,
    pair: &ProjectedPair,
    index: usize,
    cos: f64,
    weight: f64,
) {
    let query_upstream: Vec<f64> =
        cosine_grad_lhs(&pair.query, pair.query_norm, &pair.summary, pair.summary_norm, cos)
            .into_iter()
            .map(|g| weight * g)
            .collect();
    let summary_upstream: Vec<f64> =
        cosine_grad_lhs(&pair.summary, pair.summary_norm, &pair.query, pair.query_norm, cos)
            .into_iter()
            .map(|g| weight * g)
            .collect();
    add_outer(
        &mut grads.query_weight,
        &mut grads.query_bias,
        &query_upstream,
        &batch.pairs[index].0,
    );
    add_outer(
        &mut grads.summary_weight,
        &mut grads.summary_bias,
        &summary_upstream,
        &batch.pairs[index].1,
    );
}

/// Mean loss over every anchor in the batch, with its gradient. This is
/// the quantity one optimizer step consumes; it equals the mean of the
/// per-anchor loss and gradient ops.
pub fn batch_mean_loss_and_grad(
    batch: &ContrastiveBatch,
    heads: &ProjectionHeads,
    mode: LossMode,
) -> Result<(f64, WordHeadGrads)> {
    if batch.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    let projected = project_pairs(batch, heads)?;
    let count = batch.len() as f64;
    let mut grads = WordHeadGrads::zeros(heads.dim);
    let loss = match mode {
        LossMode::AsWritten => {
            // Every anchor shares the same score vector, so the softmax is
            // computed once and the per-pair weight collapses to
            // p_b - 1/B. Mean loss is lse(c) - mean(c).
            let cosines: Vec<f64> = projected.iter().map(cosine_of).collect();
            let probs = softmax(&cosines);
            let lse = vecmath::log_sum_exp(&cosines);
            let mean_cos = cosines.iter().sum::<f64>() / count;
            for (b, pair) in projected.iter().enumerate() {
                let weight = probs[b] - 1.0 / count;
                accumulate_own_pair(&mut grads, batch, pair, b, cosines[b], weight);
            }
            lse - mean_cos
        }
        LossMode::StandardInfonce => {
            let mut total = 0.0;
            for anchor in 0..batch.len() {
                total += infonce_loss_and_grad_into(batch, &projected, anchor, &mut grads);
            }
            grads.scale(1.0 / count);
            total / count
        }
    };
    Ok((loss, grads))
}

/// Accumulates one anchor's infonce gradient into `grads`, returning that
/// anchor's loss. The anchor query appears in every score, so its upstream
/// sums across all pairs before the single outer product.
fn infonce_loss_and_grad_into(
    batch: &ContrastiveBatch,
    projected: &[ProjectedPair],
    anchor: usize,
    grads: &mut WordHeadGrads,
) -> f64 {
    let anchor_pair = &projected[anchor];
    let cosines: Vec<f64> = projected
        .iter()
        .map(|p| cross_cosine(anchor_pair, p))
        .collect();
    let probs = softmax(&cosines);
    let dim = grads.dim;
    let mut query_upstream = vec![0.0; dim];
    for (b, pair) in projected.iter().enumerate() {
        let weight = probs[b] - if b == anchor { 1.0 } else { 0.0 };
        let nu = anchor_pair.query_norm;
        let nv = pair.summary_norm;
        let cos = cosines[b];
        for ((uq, &qi), &si) in query_upstream
            .iter_mut()
            .zip(anchor_pair.query.iter())
            .zip(pair.summary.iter())
        {
            *uq += weight * (si / (nu * nv) - cos * qi / (nu * nu));
        }
        let summary_upstream: Vec<f64> =
            cosine_grad_lhs(&pair.summary, nv, &anchor_pair.query, nu, cos)
                .into_iter()
                .map(|g| weight * g)
                .collect();
        add_outer(
            &mut grads.summary_weight,
            &mut grads.summary_bias,
            &summary_upstream,
            &batch.pairs[b].1,
        );
    }
    add_outer(
        &mut grads.query_weight,
        &mut grads.query_bias,
        &query_upstream,
        &batch.pairs[anchor].0,
    );
    vecmath::log_sum_exp(&cosines) - cosines[anchor]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    AdamW,
    Sgd,
}

impl OptimizerKind {
    pub fn label(&self) -> &'static str {
        match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adamw" => Some(OptimizerKind::AdamW),
            "sgd" => Some(OptimizerKind::Sgd),
            _ => None,
        }
    }
}

impl core::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const ADAM_WEIGHT_DECAY: f64 = 0.01;

struct Optimizer {
    kind: OptimizerKind,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl Optimizer {
    fn new(kind: OptimizerKind, param_count: usize) -> Self {
        Self {
            kind,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    *p -= learning_rate * g;
                }
            }
            OptimizerKind::AdamW => {
                self.beta1_pow *= ADAM_BETA1;
                self.beta2_pow *= ADAM_BETA2;
                for ((p, &g), (m, v)) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / (1.0 - self.beta1_pow);
                    let v_hat = *v / (1.0 - self.beta2_pow);
                    // Decoupled weight decay.
                    *p -= learning_rate * (m_hat / (vecmath::sqrt(v_hat) + ADAM_EPS) + ADAM_WEIGHT_DECAY * *p);
                }
            }
        }
    }
}

/// Training hyperparameters. Defaults: AdamW, learning rate 1e-4, batch
/// size 100, 20 epochs, the literal loss form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 100,
            epochs: 20,
            optimizer: OptimizerKind::AdamW,
            loss_mode: LossMode::AsWritten,
            seed: 0,
        }
    }
}

/// One training example: mean-pooled query feature paired with the
/// mean-pooled summary feature of its positive item.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub query_feature: Vec<f64>,
    pub summary_feature: Vec<f64>,
}

/// Trained heads plus the mean loss per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub heads: ProjectionHeads,
    pub epoch_losses: Vec<f64>,
}

/// Trains the word-level heads over the dataset. Initialization is
/// [`ProjectionHeads::seeded`] with `cfg.seed`; batches are fixed
/// contiguous chunks in dataset order, so equal seeds and data give
/// bit-identical trajectories and a zero learning rate leaves the heads
/// exactly at initialization.
pub fn train_heads(dataset: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let dim = dataset[0].query_feature.len();
    for pair in dataset {
        if pair.query_feature.len() != dim || pair.summary_feature.len() != dim {
            return Err(CoreError::DimensionMismatch {
                expected: dim,
                actual: if pair.query_feature.len() != dim {
                    pair.query_feature.len()
                } else {
                    pair.summary_feature.len()
                },
            });
        }
    }

    let mut heads = ProjectionHeads::seeded(dim, cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, ProjectionHeads::word_param_count(dim));
    let batch_size = cfg.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut anchor_count = 0usize;
        for (step, chunk) in dataset.chunks(batch_size).enumerate() {
            let batch = ContrastiveBatch::new(
                chunk
                    .iter()
                    .map(|p| (p.query_feature.clone(), p.summary_feature.clone()))
                    .collect(),
            )?;
            let (mean_loss, grads) = batch_mean_loss_and_grad(&batch, &heads, cfg.loss_mode)?;
            if !mean_loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { epoch, step });
            }
            loss_sum += mean_loss * chunk.len() as f64;
            anchor_count += chunk.len();

            let mut params = heads.word_params();
            optimizer.step(&mut params, &grads.flatten(), cfg.learning_rate);
            heads.set_word_params(&params);
        }
        epoch_losses.push(loss_sum / anchor_count as f64);
    }

    Ok(TrainOutcome {
        heads,
        epoch_losses,
    })
}

/// Per-token answer distribution against a one-hot target: `probs` and
/// `target` are both `answer_length x vocabulary_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerDistribution {
    pub probs: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl AnswerDistribution {
    pub fn new(probs: Vec<Vec<f64>>, target: Vec<Vec<f64>>) -> Result<Self> {
        let dist = Self { probs, target };
        dist.check_shape()?;
        Ok(dist)
    }

    fn check_shape(&self) -> Result<()> {
        if self.probs.is_empty() || self.target.is_empty() {
            return Err(CoreError::DistributionShape(String::from(
                "probs and target must have at least one row",
            )));
        }
        if self.probs.len() != self.target.len() {
            return Err(CoreError::DistributionShape(format!(
                "probs has {} rows, target has {}",
                self.probs.len(),
                self.target.len()
            )));
        }
        let width = self.probs[0].len();
        if width == 0 {
            return Err(CoreError::DistributionShape(String::from(
                "vocabulary size must be positive",
            )));
        }
        for row in self.probs.iter().chain(self.target.iter()) {
            if row.len() != width {
                return Err(CoreError::DistributionShape(format!(
                    "expected rows of width {width}, found {}",
                    row.len()
                )));
            }
        }
        Ok(())
    }

    fn check_values(&self, sample: usize) -> Result<()> {
        for (l, row) in self.probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if vecmath::abs(sum - 1.0) > 1e-9 {
                return Err(CoreError::InvalidDistribution(format!(
                    "sample {sample}, position {l}: probabilities sum to {sum}"
                )));
            }
        }
        for (l, row) in self.target.iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(CoreError::InvalidDistribution(format!(
                    "sample {sample}, position {l}: target row is not one-hot"
                )));
            }
        }
        Ok(())
    }

    fn answer_length(&self) -> usize {
        self.probs.len()
    }

    fn vocabulary_size(&self) -> usize {
        self.probs[0].len()
    }
}

/// Auto-regressive answer cross-entropy, normalized by
/// `samples * answer_length * vocabulary_size` exactly as the training
/// objective is stated (the extra vocabulary factor included). Probabilities
/// are floored at 1e-12 before the log.
pub fn vqa_cross_entropy(samples: &[AnswerDistribution]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let length = samples[0].answer_length();
    let vocab = samples[0].vocabulary_size();
    let mut total = 0.0;
    for (i, sample) in samples.iter().enumerate() {
        sample.check_shape()?;
        if sample.answer_length() != length || sample.vocabulary_size() != vocab {
            return Err(CoreError::DistributionShape(format!(
                "sample {i} has shape {}x{}, expected {length}x{vocab}",
                sample.answer_length(),
                sample.vocabulary_size()
            )));
        }
        sample.check_values(i)?;
        for (p_row, t_row) in sample.probs.iter().zip(sample.target.iter()) {
            for (&p, &t) in p_row.iter().zip(t_row.iter()) {
                if t != 0.0 {
                    total += t * vecmath::ln(p.max(PROB_FLOOR));
                }
            }
        }
    }
    let scale = (samples.len() * length * vocab) as f64;
    Ok(-total / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn random_batch(rng: &mut SplitMix64, pairs: usize, dim: usize) -> ContrastiveBatch {
        ContrastiveBatch::new(
            (0..pairs)
                .map(|_| {
                    (
                        (0..dim).map(|_| rng.next_signed()).collect(),
                        (0..dim).map(|_| rng.next_signed()).collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_pair_loss_is_zero() {
        let batch = ContrastiveBatch::new(vec![(unit(4, 0), unit(4, 0))]).unwrap();
        assert_eq!(contrastive_loss(&batch, 0, LossMode::AsWritten).unwrap(), 0.0);
        assert_eq!(
            contrastive_loss(&batch, 0, LossMode::StandardInfonce).unwrap(),
            0.0
        );
    }

    #[test]
    fn two_saturated_pairs_give_ln_two() {
        // Both pairs have cosine 1, so L = -ln(e / (e + e)) = ln 2.
        let batch =
            ContrastiveBatch::new(vec![(unit(4, 0), unit(4, 0)), (unit(4, 1), unit(4, 1))])
                .unwrap();
        let loss = contrastive_loss(&batch, 0, LossMode::AsWritten).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn anchor_one_versus_negative_pair() {
        // Anchor cosine 1, one negative pair with cosine -1:
        // L = -ln(e / (e + e^{-1})) = ln(1 + e^{-2}).
        let mut anti = unit(4, 1);
        anti[1] = -1.0;
        let batch =
            ContrastiveBatch::new(vec![(unit(4, 0), unit(4, 0)), (unit(4, 1), anti)]).unwrap();
        let loss = contrastive_loss(&batch, 0, LossMode::AsWritten).unwrap();
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-9);
        assert!((loss - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn loss_is_nonnegative_on_random_batches() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..50 {
            let pairs = 2 + rng.next_below(6);
            let batch = random_batch(&mut rng, pairs, 6);
            for mode in [LossMode::AsWritten, LossMode::StandardInfonce] {
                let loss = contrastive_loss(&batch, 0, mode).unwrap();
                assert!(loss >= 0.0, "loss {loss} under {mode:?}");
            }
        }
    }

    #[test]
    fn raising_anchor_cosine_strictly_lowers_loss() {
        // Anchor pair cosine sweeps up while the negative stays fixed.
        let negative = (unit(3, 2), unit(3, 2));
        let mut previous = f64::INFINITY;
        for step in 0..5 {
            let t = step as f64 / 4.0;
            let mut summary = vec![1.0 - t, t, 0.0];
            let norm = (summary[0] * summary[0] + summary[1] * summary[1]).sqrt();
            for v in &mut summary {
                *v /= norm;
            }
            let batch = ContrastiveBatch::new(vec![
                (unit(3, 1), summary), // cosine rises with t
                negative.clone(),
            ])
            .unwrap();
            let loss = contrastive_loss(&batch, 0, LossMode::AsWritten).unwrap();
            assert!(loss < previous, "loss {loss} did not drop below {previous}");
            previous = loss;
        }
    }

    #[test]
    fn modes_use_different_negatives() {
        let mut rng = SplitMix64::new(12);
        let batch = random_batch(&mut rng, 4, 6);
        let a = contrastive_loss(&batch, 1, LossMode::AsWritten).unwrap();
        let b = contrastive_loss(&batch, 1, LossMode::StandardInfonce).unwrap();
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn zero_norm_feature_is_rejected() {
        let batch = ContrastiveBatch::new(vec![(vec![0.0; 4], unit(4, 0))]).unwrap();
        assert_eq!(
            contrastive_loss(&batch, 0, LossMode::AsWritten).unwrap_err(),
            CoreError::ZeroNormFeature { pair: 0 }
        );
    }

    #[test]
    fn anchor_bounds_are_checked() {
        let batch = ContrastiveBatch::new(vec![(unit(4, 0), unit(4, 0))]).unwrap();
        assert_eq!(
            contrastive_loss(&batch, 3, LossMode::AsWritten).unwrap_err(),
            CoreError::AnchorOutOfRange {
                anchor: 3,
                batch_len: 1
            }
        );
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert_eq!(
            ContrastiveBatch::new(vec![]).unwrap_err(),
            CoreError::EmptyBatch
        );
    }

    #[test]
    fn saturated_identical_pairs_have_vanishing_gradient() {
        // With identity heads and s = q, every cosine sits at its maximum:
        // the cosine derivative vanishes even though softmax weights do not.
        let heads = ProjectionHeads::identity(4);
        let x = vec![0.3, -0.7, 0.2, 0.5];
        let batch = ContrastiveBatch::new(vec![
            (x.clone(), x.clone()),
            (unit(4, 1), unit(4, 1)),
            (unit(4, 3), unit(4, 3)),
        ])
        .unwrap();
        for mode in [LossMode::AsWritten] {
            let grads = contrastive_loss_grad(&batch, 0, &heads, mode).unwrap();
            for g in grads.flatten() {
                assert!(g.abs() < 1e-8, "gradient entry {g}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_a_small_case() {
        let mut rng = SplitMix64::new(31);
        let dim = 4;
        let batch = random_batch(&mut rng, 3, dim);
        let heads = ProjectionHeads::seeded(dim, 5);
        for mode in [LossMode::AsWritten, LossMode::StandardInfonce] {
            let analytic = contrastive_loss_grad(&batch, 1, &heads, mode).unwrap().flatten();
            let step = 1e-5;
            let base_params = heads.word_params();
            for (i, &analytic_g) in analytic.iter().enumerate() {
                let mut plus = heads.clone();
                let mut params = base_params.clone();
                params[i] += step;
                plus.set_word_params(&params);
                let mut minus = heads.clone();
                params[i] = base_params[i] - step;
                minus.set_word_params(&params);
                let loss_plus =
                    contrastive_loss(&batch.project(&plus).unwrap(), 1, mode).unwrap();
                let loss_minus =
                    contrastive_loss(&batch.project(&minus).unwrap(), 1, mode).unwrap();
                let numeric = (loss_plus - loss_minus) / (2.0 * step);
                let tolerance = 1e-4 * analytic_g.abs().max(numeric.abs()).max(1e-4);
                assert!(
                    (analytic_g - numeric).abs() <= tolerance,
                    "{mode:?} param {i}: analytic {analytic_g}, numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn accumulating_a_batch_twice_doubles_the_summed_gradient() {
        let mut rng = SplitMix64::new(8);
        let batch = random_batch(&mut rng, 3, 5);
        let heads = ProjectionHeads::seeded(5, 2);
        let single = contrastive_loss_grad(&batch, 0, &heads, LossMode::AsWritten).unwrap();
        let mut doubled = WordHeadGrads::zeros(5);
        doubled.add_assign(&single);
        doubled.add_assign(&single);
        let mut expected = single.clone();
        expected.scale(2.0);
        assert_eq!(doubled, expected);
    }

    #[test]
    fn batch_mean_matches_per_anchor_ops() {
        let mut rng = SplitMix64::new(40);
        for mode in [LossMode::AsWritten, LossMode::StandardInfonce] {
            let batch = random_batch(&mut rng, 5, 6);
            let heads = ProjectionHeads::seeded(6, 77);
            let (mean_loss, mean_grads) = batch_mean_loss_and_grad(&batch, &heads, mode).unwrap();

            let projected = batch.project(&heads).unwrap();
            let mut loss_acc = 0.0;
            let mut grad_acc = WordHeadGrads::zeros(6);
            for anchor in 0..batch.len() {
                loss_acc += contrastive_loss(&projected, anchor, mode).unwrap();
                grad_acc.add_assign(&contrastive_loss_grad(&batch, anchor, &heads, mode).unwrap());
            }
            grad_acc.scale(1.0 / batch.len() as f64);
            assert!((mean_loss - loss_acc / batch.len() as f64).abs() < 1e-12);
            for (a, b) in mean_grads.flatten().iter().zip(grad_acc.flatten().iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn correlated_dataset(rng: &mut SplitMix64, pairs: usize, dim: usize) -> Vec<TrainPair> {
        (0..pairs)
            .map(|_| {
                let query: Vec<f64> = (0..dim).map(|_| rng.next_signed()).collect();
                let summary: Vec<f64> = query
                    .iter()
                    .map(|&v| v + 0.3 * rng.next_signed())
                    .collect();
                TrainPair {
                    query_feature: query,
                    summary_feature: summary,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_heads_at_initialization() {
        let mut rng = SplitMix64::new(3);
        let dataset = correlated_dataset(&mut rng, 8, 6);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let outcome = train_heads(&dataset, &cfg).unwrap();
        assert_eq!(outcome.heads, ProjectionHeads::seeded(6, 11));
        // Flat loss history: identical batches, untouched parameters.
        assert!(outcome
            .epoch_losses
            .windows(2)
            .all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_reduces_loss_on_seeded_synthetic_pairs() {
        let mut rng = SplitMix64::new(9);
        let dataset = correlated_dataset(&mut rng, 32, 16);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 20,
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train_heads(&dataset, &cfg).unwrap();
        assert_eq!(outcome.epoch_losses.len(), 20);
        assert!(
            outcome.epoch_losses[19] < outcome.epoch_losses[0],
            "first {} vs last {}",
            outcome.epoch_losses[0],
            outcome.epoch_losses[19]
        );
    }

    #[test]
    fn training_is_deterministic_under_equal_seeds() {
        let mut rng = SplitMix64::new(14);
        let dataset = correlated_dataset(&mut rng, 16, 8);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 5,
            seed: 21,
            ..TrainConfig::default()
        };
        let a = train_heads(&dataset, &cfg).unwrap();
        let b = train_heads(&dataset, &cfg).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a.heads, b.heads);
    }

    #[test]
    fn sgd_also_trains() {
        let mut rng = SplitMix64::new(15);
        let dataset = correlated_dataset(&mut rng, 16, 8);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 10,
            optimizer: OptimizerKind::Sgd,
            seed: 2,
            ..TrainConfig::default()
        };
        let outcome = train_heads(&dataset, &cfg).unwrap();
        assert!(outcome.epoch_losses[9] < outcome.epoch_losses[0]);
    }

    #[test]
    fn exploding_updates_are_reported_as_divergence() {
        let mut rng = SplitMix64::new(16);
        let dataset = correlated_dataset(&mut rng, 8, 4);
        let cfg = TrainConfig {
            learning_rate: 1e308,
            batch_size: 4,
            epochs: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        match train_heads(&dataset, &cfg) {
            Err(CoreError::NonFiniteLoss { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert_eq!(
            train_heads(&[], &TrainConfig::default()).unwrap_err(),
            CoreError::EmptyDataset
        );
    }

    fn one_hot(width: usize, index: usize) -> Vec<f64> {
        let mut row = vec![0.0; width];
        row[index] = 1.0;
        row
    }

    #[test]
    fn uniform_distribution_matches_printed_normalization() {
        // N = 1, L = 1, |W| = 4, uniform probabilities: (1/4) ln 4.
        let sample =
            AnswerDistribution::new(vec![vec![0.25; 4]], vec![one_hot(4, 2)]).unwrap();
        let loss = vqa_cross_entropy(&[sample]).unwrap();
        assert!((loss - 0.25 * 4.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let sample = AnswerDistribution::new(
            vec![one_hot(3, 0), one_hot(3, 2)],
            vec![one_hot(3, 0), one_hot(3, 2)],
        )
        .unwrap();
        assert_eq!(vqa_cross_entropy(&[sample]).unwrap(), 0.0);
    }

    #[test]
    fn duplicating_samples_leaves_loss_unchanged() {
        let sample =
            AnswerDistribution::new(vec![vec![0.1, 0.2, 0.3, 0.4]], vec![one_hot(4, 3)]).unwrap();
        let once = vqa_cross_entropy(core::slice::from_ref(&sample)).unwrap();
        let twice = vqa_cross_entropy(&[sample.clone(), sample]).unwrap();
        assert!((once - twice).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_on_target_is_floored() {
        let sample =
            AnswerDistribution::new(vec![vec![0.0, 1.0]], vec![one_hot(2, 0)]).unwrap();
        let loss = vqa_cross_entropy(&[sample]).unwrap();
        let expected = -(1e-12f64).ln() / 2.0;
        assert!((loss - expected).abs() < 1e-9);
        assert!(loss.is_finite());
    }

    #[test]
    fn shape_and_invariant_violations_are_reported() {
        assert!(matches!(
            AnswerDistribution::new(vec![vec![0.5, 0.5]], vec![one_hot(3, 0)]).unwrap_err(),
            CoreError::DistributionShape(_)
        ));

        let bad_sum =
            AnswerDistribution::new(vec![vec![0.5, 0.4]], vec![one_hot(2, 0)]).unwrap();
        assert!(matches!(
            vqa_cross_entropy(&[bad_sum]).unwrap_err(),
            CoreError::InvalidDistribution(_)
        ));

        let bad_target =
            AnswerDistribution::new(vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            vqa_cross_entropy(&[bad_target]).unwrap_err(),
            CoreError::InvalidDistribution(_)
        ));
    }

    #[test]
    fn mixed_sample_shapes_are_rejected() {
        let a = AnswerDistribution::new(vec![vec![0.5, 0.5]], vec![one_hot(2, 0)]).unwrap();
        let b =
            AnswerDistribution::new(vec![vec![0.25; 4]], vec![one_hot(4, 0)]).unwrap();
        assert!(matches!(
            vqa_cross_entropy(&[a, b]).unwrap_err(),
            CoreError::DistributionShape(_)
        ));
    }
}
