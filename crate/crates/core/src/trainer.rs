//! RelationMatch training: supervised CE, thresholded pseudo-label CE on a
//! strongly perturbed view, and an MCE term between the relation matrices
//! of the kept pseudo-labels and the strong-view predictions.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datagen::{Dataset, LabeledSplit};
use crate::divergence::{mce, mce_grad_q, MceConfig};
use crate::error::{MceError, Result};
use crate::matrix::{Matrix, SymMatrix};
use crate::model::{log_softmax_rows, mix, softmax_backward, softmax_rows, Augmentor, Gradients, Mlp, Upstream};
use crate::relation::{relation_normalized, PredictionBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeReduction {
    /// Average over the batch (masked rows count in the denominator).
    Mean,
    Sum,
}

/// Map from a class's relative learning effect `β` to its threshold scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CplMapping {
    /// `τ·β`.
    Linear,
    /// `τ·β/(2-β)`.
    Convex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mu_u: f64,
    pub gamma_u: f64,
    pub gamma_s: f64,
    pub tau: f64,
    pub labeled_batch: usize,
    pub unlabeled_ratio: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub total_steps: usize,
    pub cpl_enabled: bool,
    pub cpl_mapping: CplMapping,
    pub cpl_warmup: bool,
    pub seed: u64,
    pub mce: MceConfig,
    pub ce_reduction: CeReduction,
    pub hidden: Vec<usize>,
    pub eval_interval: usize,
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub strong_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mu_u: 1.0,
            gamma_u: 3e-3,
            gamma_s: 0.0,
            tau: 0.95,
            labeled_batch: 8,
            unlabeled_ratio: 7,
            lr: 0.03,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: Schedule::Cosine,
            total_steps: 3000,
            cpl_enabled: false,
            cpl_mapping: CplMapping::Convex,
            cpl_warmup: true,
            seed: 0,
            mce: MceConfig::default(),
            ce_reduction: CeReduction::Mean,
            hidden: vec![64, 64],
            eval_interval: 250,
            weak_sigma: 0.2,
            strong_sigma: 0.6,
            strong_dropout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.mu_u, self.gamma_u, self.gamma_s, self.lr, self.momentum, self.weight_decay];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(MceError::Contract("loss weights and optimizer constants must be finite and >= 0".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(MceError::Contract(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.unlabeled_ratio < 1 || self.labeled_batch < 1 {
            return Err(MceError::Contract("batch sizes must be >= 1".into()));
        }
        if self.total_steps < 1 || self.eval_interval < 1 {
            return Err(MceError::Contract("total_steps and eval_interval must be >= 1".into()));
        }
        self.mce.validate()?;
        self.augmentor().validate()
    }

    pub fn unlabeled_batch(&self) -> usize {
        self.labeled_batch * self.unlabeled_ratio
    }

    pub fn augmentor(&self) -> Augmentor {
        Augmentor {
            weak_noise_sigma: self.weak_sigma,
            strong_noise_sigma: self.strong_sigma,
            strong_dropout_prob: self.strong_dropout,
            seed: self.seed,
        }
    }

    /// Learning rate at `step`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => {
                let frac = step as f64 / self.total_steps as f64;
                self.lr * (7.0 * std::f64::consts::PI * frac / 16.0).cos()
            }
        }
    }
}

/// Per-sample record of the last confidently predicted class, for
/// curriculum thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CplState {
    selected: Vec<Option<usize>>,
    k: usize,
    mapping: CplMapping,
    warmup: bool,
}

impl CplState {
    pub fn new(n_unlabeled: usize, k: usize, mapping: CplMapping, warmup: bool) -> Self {
        Self { selected: vec![None; n_unlabeled], k, mapping, warmup }
    }

    /// `σ_c`: unlabeled samples currently assigned to class `c`.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        self.selected.iter().flatten().for_each(|&l| c[l] += 1);
        c
    }

    pub fn unused(&self) -> usize {
        self.selected.iter().filter(|s| s.is_none()).count()
    }

    /// `β_c = σ_c / max_c σ_c`, or with warm-up `σ_c / max(max_c σ_c, unused)`.
    /// All zero until some sample has been selected.
    pub fn learning_effects(&self) -> Vec<f64> {
        let counts = self.counts();
        let max = counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return vec![0.0; self.k];
        }
        let denom = if self.warmup { max.max(self.unused()) } else { max } as f64;
        counts.iter().map(|&c| c as f64 / denom).collect()
    }

    pub fn thresholds(&self, tau: f64) -> Vec<f64> {
        self.learning_effects().into_iter().map(|b| map_threshold(self.mapping, tau, b)).collect()
    }

    /// Records every row of the batch whose confidence reaches `tau`.
    pub fn update(&mut self, ids: &[usize], probs_weak: &PredictionBatch, tau: f64) {
        let labels = probs_weak.argmax();
        for (r, (&id, &l)) in ids.iter().zip(&labels).enumerate() {
            if probs_weak.row(r)[l] >= tau {
                self.selected[id] = Some(l);
            }
        }
    }
}

pub fn map_threshold(mapping: CplMapping, tau: f64, beta: f64) -> f64 {
    match mapping {
        CplMapping::Linear => tau * beta,
        CplMapping::Convex => tau * beta / (2.0 - beta),
    }
}

/// Thresholds the weak-view predictions. Labels are the argmax one-hot of
/// every row; `mask[i]` says whether row `i` is kept.
pub fn pseudo_label(probs_weak: &PredictionBatch, tau: f64, cpl: Option<&CplState>) -> (Vec<bool>, PredictionBatch) {
    let labels = probs_weak.argmax();
    let thresholds = cpl.map(|c| c.thresholds(tau));
    let mask = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| {
            let t = thresholds.as_ref().map_or(tau, |t| t[l]);
            probs_weak.row(r)[l] >= t
        })
        .collect();
    let one_hot = PredictionBatch::one_hot(&labels, probs_weak.classes()).expect("argmax is in range");
    (mask, one_hot)
}

/// MCE between the normalized relation matrices of `targets` and `probs`,
/// and its gradient with respect to `probs`. Zero for fewer than two rows.
pub fn relation_mce(targets: &PredictionBatch, probs: &Matrix, cfg: &MceConfig) -> Result<(f64, Matrix)> {
    let b = targets.batch_size();
    if probs.shape() != targets.as_matrix().shape() {
        return Err(MceError::Contract("targets and predictions differ in shape".into()));
    }
    if b <= 1 {
        return Ok((0.0, Matrix::zeros(probs.rows(), probs.cols())));
    }
    let p = relation_normalized(targets);
    let q = SymMatrix::new(probs.matmul_t(probs).scale(1.0 / b as f64))?;
    let value = mce(&p, &q, cfg)?;
    let g = mce_grad_q(&p, &q, cfg)?;
    // Q = XXᵀ/b, so dL/dX = (G + Gᵀ)X/b = 2GX/b for symmetric G.
    let dx = g.as_matrix().matmul(probs).scale(2.0 / b as f64);
    Ok((value, dx))
}

/// Cross-entropy of logits against class labels, and its logit gradient.
fn ce_from_logits(logits: &Matrix, labels: &[usize], keep: Option<&[bool]>, denom: f64) -> (f64, Matrix) {
    let logp = log_softmax_rows(logits);
    let mut grad = softmax_rows(logits);
    let mut total = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        if keep.is_some_and(|k| !k[r]) {
            grad.row_mut(r).iter_mut().for_each(|g| *g = 0.0);
            continue;
        }
        total -= logp[(r, l)];
        grad.row_mut(r)[l] -= 1.0;
    }
    (total / denom, grad.scale(1.0 / denom))
}

/// Reported loss components. `total = ce_sup + γ_s·mce_sup + μ_u·(ce_unsup + γ_u·mce)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce_sup: f64,
    pub mce_sup: f64,
    pub ce_unsup: f64,
    pub mce: f64,
    /// Number of kept unlabeled rows.
    pub kept: usize,
}

/// The unlabeled half of a step: pseudo-labels for every row, which rows are
/// kept, and the strong-view logits aligned row by row.
#[derive(Debug, Clone, Copy)]
pub struct UnlabeledBatch<'a> {
    pub pseudo: &'a PredictionBatch,
    pub mask: &'a [bool],
    pub strong_logits: &'a Matrix,
}

#[derive(Debug, Clone)]
pub struct LossGradients {
    pub sup_logits: Matrix,
    pub strong_logits: Option<Matrix>,
}

/// RelationMatch objective on logits, with gradients for both branches.
///
/// The MCE term pairs the kept pseudo-labels with the kept strong-view
/// predictions, each normalized by the kept count. The unlabeled branch is
/// skipped entirely when `μ_u = 0`.
pub fn relationmatch_loss(
    y_sup: &[usize],
    sup_logits: &Matrix,
    unlabeled: Option<UnlabeledBatch<'_>>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, LossGradients)> {
    let bs = y_sup.len();
    if bs == 0 || sup_logits.rows() != bs {
        return Err(MceError::Contract(format!("labeled batch of {bs} labels and {} rows", sup_logits.rows())));
    }
    let k = sup_logits.cols();
    let denom = |b: usize| match cfg.ce_reduction {
        CeReduction::Mean => b as f64,
        CeReduction::Sum => 1.0,
    };
    let mut out = LossBreakdown::default();
    let (ce_sup, mut g_sup) = ce_from_logits(sup_logits, y_sup, None, denom(bs));
    out.ce_sup = ce_sup;
    if cfg.gamma_s > 0.0 {
        let probs = softmax_rows(sup_logits);
        let (m, dp) = relation_mce(&PredictionBatch::one_hot(y_sup, k)?, &probs, &cfg.mce)?;
        out.mce_sup = m;
        g_sup.add_assign_scaled(&softmax_backward(&probs, &dp), cfg.gamma_s);
    }
    let mut g_strong = None;
    if let (Some(u), true) = (unlabeled, cfg.mu_u > 0.0) {
        let bu = u.strong_logits.rows();
        if u.pseudo.batch_size() != bu || u.mask.len() != bu {
            return Err(MceError::Contract("unlabeled batch parts are misaligned".into()));
        }
        let labels = u.pseudo.argmax();
        let (ce_u, mut g) = ce_from_logits(u.strong_logits, &labels, Some(u.mask), denom(bu));
        let kept: Vec<usize> = (0..bu).filter(|&i| u.mask[i]).collect();
        out.ce_unsup = ce_u;
        out.kept = kept.len();
        if kept.len() > 1 {
            let probs = softmax_rows(&u.strong_logits.select_rows(&kept));
            let targets = u.pseudo.select(&kept)?;
            let (m, dp) = relation_mce(&targets, &probs, &cfg.mce)?;
            out.mce = m;
            if cfg.gamma_u > 0.0 {
                let dz = softmax_backward(&probs, &dp);
                for (j, &i) in kept.iter().enumerate() {
                    for (a, b) in g.row_mut(i).iter_mut().zip(dz.row(j)) {
                        *a += cfg.gamma_u * b;
                    }
                }
            }
        }
        g_strong = Some(g.scale(cfg.mu_u));
    }
    out.total = out.ce_sup + cfg.gamma_s * out.mce_sup;
    if g_strong.is_some() {
        out.total += cfg.mu_u * (out.ce_unsup + cfg.gamma_u * out.mce);
    }
    Ok((out, LossGradients { sup_logits: g_sup, strong_logits: g_strong }))
}

/// Mean CE of `probs` against one-hot `y`, plus `γ_s` times the relation MCE.
pub fn supervised_loss_with_mce(
    y: &PredictionBatch,
    probs: &PredictionBatch,
    gamma_s: f64,
    cfg: &MceConfig,
) -> Result<f64> {
    if !y.is_one_hot() {
        return Err(MceError::Contract("supervised targets must be one-hot".into()));
    }
    let labels = y.argmax();
    let b = y.batch_size();
    let ce = -labels.iter().enumerate().map(|(r, &l)| probs.row(r)[l].ln()).sum::<f64>() / b as f64;
    if gamma_s == 0.0 {
        return Ok(ce);
    }
    let (m, _) = relation_mce(y, probs.as_matrix(), cfg)?;
    Ok(ce + gamma_s * m)
}

/// Momentum SGD with L2 weight decay on every parameter:
/// `v ← m·v + g + wd·θ`, `θ ← θ - lr·v`.
pub fn sgd_step(
    model: &mut Mlp,
    velocity: &mut Gradients,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((layer, v), g) in model.layers_mut().iter_mut().zip(velocity.layers.iter_mut()).zip(&grads.layers) {
        let update = |theta: &mut [f64], v: &mut [f64], g: &[f64]| {
            for ((t, v), g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = momentum * *v + g + weight_decay * *t;
                *t -= lr * *v;
            }
        };
        update(layer.weights.as_mut_slice(), v.weights.as_mut_slice(), g.weights.as_slice());
        update(&mut layer.bias, &mut v.bias, &g.bias);
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Mlp,
    pub velocity: Gradients,
    pub step: usize,
    pub cpl: Option<CplState>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, data: &Dataset) -> Result<Self> {
        let mut dims = vec![data.dim()];
        dims.extend(&cfg.hidden);
        dims.push(data.k);
        let model = Mlp::new(&dims, mix(&[cfg.seed, INIT_STREAM]))?;
        let velocity = model.zero_gradients();
        let cpl = cfg.cpl_enabled.then(|| CplState::new(data.unlabeled.len(), data.k, cfg.cpl_mapping, cfg.cpl_warmup));
        Ok(Self { model, velocity, step: 0, cpl })
    }
}

const INIT_STREAM: u64 = 0x494e_4954;
const SAMPLE_STREAM: u64 = 0x5341_4d50;
/// Offset keeping labeled sample ids apart from unlabeled ones in augmentation seeds.
const LABELED_ID_BASE: usize = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub ce_sup: f64,
    pub ce_unsup: f64,
    pub mce: f64,
    pub pl_rate: f64,
    pub pl_acc: f64,
    pub test_acc: f64,
    pub mce_sup: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub steps: usize,
    pub final_test_acc: f64,
    pub best_test_acc: f64,
    pub best_step: usize,
    pub config: &'a serde_json::Value,
}

impl MetricsLog {
    pub fn final_test_acc(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.test_acc)
    }

    pub fn best(&self) -> Option<&MetricsRow> {
        self.rows.iter().fold(None, |best: Option<&MetricsRow>, r| match best {
            Some(b) if b.test_acc >= r.test_acc => Some(b),
            _ => Some(r),
        })
    }

    /// Floats are written in shortest round-trip form, so equal runs give equal bytes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "step", "lr", "ce_sup", "ce_unsup", "mce", "pl_rate", "pl_acc", "test_acc", "mce_sup", "total",
        ])?;
        for r in &self.rows {
            let f = |x: f64| format!("{x:?}");
            out.write_record([
                r.step.to_string(),
                f(r.lr),
                f(r.ce_sup),
                f(r.ce_unsup),
                f(r.mce),
                f(r.pl_rate),
                f(r.pl_acc),
                f(r.test_acc),
                f(r.mce_sup),
                f(r.total),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: W, seed: u64, config: &serde_json::Value) -> Result<()> {
        let best = self.best();
        let s = Summary {
            seed,
            steps: self.rows.last().map_or(0, |r| r.step),
            final_test_acc: self.final_test_acc(),
            best_test_acc: best.map_or(0.0, |r| r.test_acc),
            best_step: best.map_or(0, |r| r.step),
            config,
        };
        serde_json::to_writer_pretty(w, &s)?;
        Ok(())
    }
}

pub fn accuracy(model: &Mlp, split: &LabeledSplit) -> Result<f64> {
    let probs = PredictionBatch::new(model.predict(&split.x)?)?;
    let hits = probs.argmax().iter().zip(&split.y).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / split.y.len() as f64)
}

fn draw(rng: &mut ChaCha8Rng, n: usize, amount: usize) -> Vec<usize> {
    if amount <= n {
        index::sample(rng, n, amount).into_vec()
    } else {
        (0..amount).map(|_| rng.random_range(0..n)).collect()
    }
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    ce_sup: f64,
    ce_unsup: f64,
    mce: f64,
    mce_sup: f64,
    total: f64,
    seen: usize,
    kept: usize,
    correct: usize,
}

/// Runs one optimization step and returns its loss breakdown, plus the
/// number of kept pseudo-labels that agree with the hidden labels.
pub fn train_step(state: &mut TrainState, cfg: &TrainConfig, data: &Dataset) -> Result<(LossBreakdown, usize)> {
    let step = state.step;
    let aug = cfg.augmentor();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, SAMPLE_STREAM, step as u64]));
    let sup_idx = draw(&mut rng, data.labeled.y.len(), cfg.labeled_batch);
    let sup_ids: Vec<usize> = sup_idx.iter().map(|i| LABELED_ID_BASE + i).collect();
    let x_sup = aug.augment_weak(&data.labeled.x.select_rows(&sup_idx), &sup_ids, step);
    let y_sup: Vec<usize> = sup_idx.iter().map(|&i| data.labeled.y[i]).collect();
    let sup_cache = state.model.forward_cache(&x_sup)?;

    let mut correct = 0;
    let mut unl = None;
    if cfg.mu_u > 0.0 {
        let idx = draw(&mut rng, data.unlabeled.len(), cfg.unlabeled_batch());
        let xu = data.unlabeled.x.select_rows(&idx);
        let weak = PredictionBatch::new(state.model.predict(&aug.augment_weak(&xu, &idx, step))?)?;
        let (mask, pseudo) = pseudo_label(&weak, cfg.tau, state.cpl.as_ref());
        let kept_ids: Vec<usize> = idx.iter().zip(&mask).filter(|(_, &m)| m).map(|(&i, _)| i).collect();
        let kept_labels: Vec<usize> =
            pseudo.argmax().into_iter().zip(&mask).filter(|(_, &m)| m).map(|(l, _)| l).collect();
        correct = data.unlabeled.hidden().agreement(&kept_ids, &kept_labels);
        if let Some(c) = state.cpl.as_mut() {
            c.update(&idx, &weak, cfg.tau);
        }
        let strong_cache = state.model.forward_cache(&aug.augment_strong(&xu, &idx, step))?;
        unl = Some((pseudo, mask, strong_cache));
    }

    let batch =
        unl.as_ref().map(|(pseudo, mask, cache)| UnlabeledBatch { pseudo, mask, strong_logits: cache.logits() });
    let (loss, grads) = relationmatch_loss(&y_sup, sup_cache.logits(), batch, cfg)?;
    if !loss.total.is_finite() {
        return Err(MceError::Diverged { step, reason: format!("loss is {}", loss.total) });
    }
    let mut g = state.model.backward(&sup_cache, &Upstream::Logits(grads.sup_logits))?;
    if let (Some((_, _, cache)), Some(gs)) = (unl.as_ref(), grads.strong_logits) {
        g.add_assign(&state.model.backward(cache, &Upstream::Logits(gs))?);
    }
    let lr = cfg.learning_rate(step);
    sgd_step(&mut state.model, &mut state.velocity, &g, lr, cfg.momentum, cfg.weight_decay);
    if !state.model.is_finite() {
        return Err(MceError::Diverged { step, reason: "non-finite parameters".into() });
    }
    state.step += 1;
    Ok((loss, correct))
}

/// Deterministic training run. Metrics are averaged over each evaluation
/// interval; test accuracy is measured at its end.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<(MetricsLog, TrainState)> {
    cfg.validate()?;
    if data.labeled.y.len() < data.k || (0..data.k).any(|c| !data.labeled.y.contains(&c)) {
        return Err(MceError::Contract("every class needs at least one labeled sample".into()));
    }
    let mut state = TrainState::new(cfg, data)?;
    let mut log = MetricsLog::default();
    let mut acc = Accumulator::default();
    while state.step < cfg.total_steps {
        let step = state.step;
        let (loss, correct) = train_step(&mut state, cfg, data)?;
        acc.n += 1;
        acc.ce_sup += loss.ce_sup;
        acc.ce_unsup += loss.ce_unsup;
        acc.mce += loss.mce;
        acc.mce_sup += loss.mce_sup;
        acc.total += loss.total;
        acc.kept += loss.kept;
        acc.seen += if cfg.mu_u > 0.0 { cfg.unlabeled_batch() } else { 0 };
        acc.correct += correct;
        if state.step % cfg.eval_interval == 0 || state.step == cfg.total_steps {
            let n = acc.n as f64;
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            log.rows.push(MetricsRow {
                step: state.step,
                lr: cfg.learning_rate(step),
                ce_sup: acc.ce_sup / n,
                ce_unsup: acc.ce_unsup / n,
                mce: acc.mce / n,
                pl_rate: ratio(acc.kept, acc.seen),
                pl_acc: ratio(acc.correct, acc.kept),
                test_acc: accuracy(&state.model, &data.test)?,
                mce_sup: acc.mce_sup / n,
                total: acc.total / n,
            });
            acc = Accumulator::default();
        }
    }
    Ok((log, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::LogBackend;

    fn batch(rows: &[[f64; 3]]) -> PredictionBatch {
        PredictionBatch::from_rows(rows).unwrap()
    }

    #[test]
    fn fixed_threshold_pseudo_labels() {
        let p = batch(&[[0.96, 0.03, 0.01], [0.94, 0.05, 0.01], [0.0, 0.0, 1.0]]);
        let (mask, labels) = pseudo_label(&p, 0.95, None);
        assert_eq!(mask, vec![true, false, true]);
        assert_eq!(labels.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(labels.argmax(), vec![0, 0, 2]);
    }

    #[test]
    fn cpl_hand_computation() {
        let mut cpl = CplState::new(10, 3, CplMapping::Convex, false);
        assert_eq!(cpl.learning_effects(), vec![0.0; 3]);
        // Four confident class-0 rows, two class-1 rows, one unconfident class-2 row.
        let p = batch(&[
            [0.97, 0.02, 0.01],
            [0.97, 0.02, 0.01],
            [0.97, 0.02, 0.01],
            [0.97, 0.02, 0.01],
            [0.01, 0.98, 0.01],
            [0.01, 0.98, 0.01],
            [0.2, 0.2, 0.6],
        ]);
        cpl.update(&[0, 1, 2, 3, 4, 5, 6], &p, 0.95);
        assert_eq!(cpl.counts(), vec![4, 2, 0]);
        assert_eq!(cpl.learning_effects(), vec![1.0, 0.5, 0.0]);
        let t = cpl.thresholds(0.95);
        assert_eq!(t, vec![0.95, 0.95 * 0.5 / 1.5, 0.0]);

        let lin = CplState { mapping: CplMapping::Linear, ..cpl.clone() };
        assert_eq!(lin.thresholds(0.95), vec![0.95, 0.475, 0.0]);

        // Warm-up: 4 samples are still unused, so the denominator is max(4, 4).
        let warm = CplState { warmup: true, ..cpl.clone() };
        assert_eq!(warm.learning_effects(), vec![1.0, 0.5, 0.0]);
        let mut warm = CplState::new(20, 3, CplMapping::Convex, true);
        warm.update(&[0, 1, 2, 3, 4, 5], &p.select(&[0, 1, 2, 3, 4, 5]).unwrap(), 0.95);
        assert_eq!(warm.learning_effects(), vec![4.0 / 14.0, 2.0 / 14.0, 0.0]);

        // A class-1 row at 0.5 clears the lowered threshold 0.3167.
        let q = batch(&[[0.25, 0.5, 0.25], [0.6, 0.3, 0.1]]);
        let (mask, _) = pseudo_label(&q, 0.95, Some(&cpl));
        assert_eq!(mask, vec![true, false]);
    }

    #[test]
    fn cpl_with_uniform_counts_matches_fixed_threshold() {
        let mut cpl = CplState::new(3, 3, CplMapping::Convex, false);
        let p = batch(&[[0.99, 0.0, 0.01], [0.0, 0.99, 0.01], [0.01, 0.0, 0.99]]);
        cpl.update(&[0, 1, 2], &p, 0.95);
        let q = batch(&[[0.951, 0.049, 0.0], [0.9, 0.1, 0.0], [0.0, 0.05, 0.95]]);
        assert_eq!(pseudo_label(&q, 0.95, Some(&cpl)), pseudo_label(&q, 0.95, None));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig { total_steps: 1000, lr: 0.03, ..Default::default() };
        assert_eq!(cfg.learning_rate(0), 0.03);
        let end = cfg.learning_rate(1000);
        assert!((end - 0.03 * (7.0 * std::f64::consts::PI / 16.0).cos()).abs() < 1e-17);
        assert!(end > 0.0);
        let c = TrainConfig { schedule: Schedule::Constant, ..cfg };
        assert_eq!(c.learning_rate(999), 0.03);
    }

    fn scalar_model(theta: f64) -> Mlp {
        let l = crate::model::Layer { weights: Matrix::from_rows(&[[theta]]), bias: vec![0.0] };
        Mlp::from_layers(vec![l]).unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients { layers: vec![crate::model::Layer { weights: Matrix::from_rows(&[[g]]), bias: vec![0.0] }] }
    }

    #[test]
    fn sgd_vanilla_and_momentum_steps() {
        let mut m = scalar_model(1.0);
        let mut v = m.zero_gradients();
        sgd_step(&mut m, &mut v, &scalar_grad(2.0), 0.1, 0.0, 0.0);
        assert_eq!(m.layers()[0].weights[(0, 0)], 1.0 - 0.2);

        // θ=1, g=2 then g=1, m=0.9, wd=0.1, lr=0.1.
        // v1 = 2 + 0.1 = 2.1, θ1 = 0.79; v2 = 1.89 + 1 + 0.079 = 2.969, θ2 = 0.4931.
        let mut m = scalar_model(1.0);
        let mut v = m.zero_gradients();
        sgd_step(&mut m, &mut v, &scalar_grad(2.0), 0.1, 0.9, 0.1);
        assert!((m.layers()[0].weights[(0, 0)] - 0.79).abs() < 1e-15);
        sgd_step(&mut m, &mut v, &scalar_grad(1.0), 0.1, 0.9, 0.1);
        assert!((v.layers[0].weights[(0, 0)] - 2.969).abs() < 1e-14);
        assert!((m.layers()[0].weights[(0, 0)] - 0.4931).abs() < 1e-14);
    }

    fn logits(rows: &[[f64; 3]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn loss_decomposition_and_mu_zero() {
        let sup = logits(&[[2.0, 0.0, -1.0], [0.0, 1.0, 0.5]]);
        let strong = logits(&[[3.0, 0.1, 0.0], [0.0, 2.5, 0.3], [0.2, 0.1, 0.0], [4.0, 0.0, 0.0]]);
        let pseudo = PredictionBatch::one_hot(&[0, 1, 0, 0], 3).unwrap();
        let mask = [true, true, false, true];
        let u = UnlabeledBatch { pseudo: &pseudo, mask: &mask, strong_logits: &strong };
        let cfg = TrainConfig { gamma_u: 0.5, mu_u: 0.7, ..Default::default() };
        let (l, g) = relationmatch_loss(&[0, 1], &sup, Some(u), &cfg).unwrap();
        assert!((l.total - (l.ce_sup + 0.7 * (l.ce_unsup + 0.5 * l.mce))).abs() < 1e-10);
        assert_eq!(l.kept, 3);
        // The dropped row gets no gradient at all.
        assert!(g.strong_logits.unwrap().row(2).iter().all(|&x| x == 0.0));

        let off = TrainConfig { mu_u: 0.0, ..cfg };
        let (l0, g0) = relationmatch_loss(&[0, 1], &sup, Some(u), &off).unwrap();
        let (ce, _) = ce_from_logits(&sup, &[0, 1], None, 2.0);
        assert_eq!(l0.total, ce);
        assert!(g0.strong_logits.is_none());
        assert!(relationmatch_loss(&[], &Matrix::zeros(0, 3), None, &off).is_err());
    }

    #[test]
    fn supervised_mce_matches_probability_form() {
        let z = logits(&[[2.0, 0.0, -1.0], [0.0, 1.0, 0.5], [0.3, -0.2, 1.1]]);
        let y = [0usize, 1, 2];
        let cfg = TrainConfig { gamma_s: 0.1, mu_u: 0.0, ..Default::default() };
        let (l, _) = relationmatch_loss(&y, &z, None, &cfg).unwrap();
        let probs = PredictionBatch::new(softmax_rows(&z)).unwrap();
        let yb = PredictionBatch::one_hot(&y, 3).unwrap();
        let v = supervised_loss_with_mce(&yb, &probs, 0.1, &cfg.mce).unwrap();
        assert!((l.total - v).abs() < 1e-12);
        let plain = supervised_loss_with_mce(&yb, &probs, 0.0, &cfg.mce).unwrap();
        assert!((plain - l.ce_sup).abs() < 1e-12);
    }

    #[test]
    fn one_hot_fit_is_stationary_for_relation_mce() {
        let y = PredictionBatch::one_hot(&[0, 2, 0, 1], 3).unwrap();
        let cfg = MceConfig::principal(1e-8);
        let (_, dp) = relation_mce(&y, y.as_matrix(), &cfg).unwrap();
        assert!(dp.max_abs() <= 1e-6, "{}", dp.max_abs());
        let t = MceConfig { log_backend: LogBackend::Taylor(3), ..cfg };
        assert!(relation_mce(&y, y.as_matrix(), &t).is_ok());
    }

    #[test]
    fn relation_mce_vanishes_below_two_rows() {
        let y = PredictionBatch::one_hot(&[1], 3).unwrap();
        let (v, g) = relation_mce(&y, &Matrix::from_rows(&[[0.2, 0.5, 0.3]]), &MceConfig::default()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }
}
