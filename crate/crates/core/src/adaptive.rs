//! Structural self-organization of a single RBM.
//!
//! The Walking Distance (WD) of a hidden neuron is tracked as the sample
//! variance of its per-epoch mean gradients over a sliding window. A neuron
//! whose `c`/`W` gradients keep fluctuating is split in two; a neuron that is
//! almost never active is removed. After the structure settles, forgetting
//! penalties sparsify the weights and push hidden activations toward 0 or 1.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_len, Error, Result};
use crate::math::{self, sample_variance};
use crate::matrix::Matrix;
use crate::rbm::{self, GradientEstimate, RbmParams};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    /// Generation threshold on the WD score.
    pub theta_g: f64,
    /// Annihilation threshold on mean activation, in `(0, 1)`.
    pub theta_a: f64,
    /// Scale on the WD statistics inside the generation score. Per-epoch
    /// gradient variances are of order 1e-5, hence the large defaults.
    pub alpha_c: f64,
    pub alpha_w: f64,
    /// Weight decay strength (`‖W‖₁` penalty).
    pub eps1: f64,
    /// Hidden binariness penalty strength.
    pub eps2: f64,
    /// Small-weight selective forgetting strength, final phase only.
    pub eps3: f64,
    /// Weights with `|W| < theta_small` are subject to the final-phase term.
    pub theta_small: f64,
    /// WD window length in epochs.
    pub window: usize,
    pub generation_phase_epochs: usize,
    pub forgetting_phase_epochs: usize,
    pub final_phase_epochs: usize,
    pub max_hidden: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta_g: 0.05,
            theta_a: 0.1,
            alpha_c: 3000.0,
            alpha_w: 3000.0,
            eps1: 0.01,
            eps2: 0.01,
            eps3: 0.01,
            theta_small: 0.1,
            window: 5,
            generation_phase_epochs: 100,
            forgetting_phase_epochs: 50,
            final_phase_epochs: 20,
            max_hidden: 2000,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        // theta_a == 0 is accepted: it disables annihilation.
        if !(0.0..1.0).contains(&self.theta_a) {
            return Err(Error::InvalidArgument("theta_a must lie in [0, 1)"));
        }
        if self.theta_g.is_nan() || self.theta_g < 0.0 {
            return Err(Error::InvalidArgument("theta_g must be positive"));
        }
        if !(self.alpha_c > 0.0 && self.alpha_w > 0.0) {
            return Err(Error::InvalidArgument("alpha_c and alpha_w must be positive"));
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0 && self.eps3 >= 0.0) {
            return Err(Error::InvalidArgument("forgetting criteria must be non-negative"));
        }
        if !(self.theta_small > 0.0) {
            return Err(Error::InvalidArgument("theta_small must be positive"));
        }
        if self.window < 2 {
            return Err(Error::InvalidArgument("WD window must hold at least 2 epochs"));
        }
        if self.max_hidden < 1 {
            return Err(Error::InvalidArgument("max_hidden must be at least 1"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.generation_phase_epochs + self.forgetting_phase_epochs + self.final_phase_epochs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub cd_k: usize,
    /// Hidden neurons of a freshly created layer.
    pub initial_hidden: usize,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 100,
            cd_k: 1,
            initial_hidden: 20,
        }
    }
}

impl TrainingHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.cd_k == 0 || self.initial_hidden == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, cd_k and initial_hidden must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct NeuronHistory {
    c: VecDeque<f64>,
    w: VecDeque<Vec<f64>>,
}

/// Per-neuron sliding windows of epoch-mean gradients for `c` and `W`.
/// The visible bias `b` is not monitored.
#[derive(Debug, Clone)]
pub struct GradientStats {
    window: usize,
    visible: usize,
    neurons: Vec<NeuronHistory>,
    dc_var: Vec<f64>,
    dw_var: Matrix,
}

impl GradientStats {
    pub fn new(visible: usize, hidden: usize, window: usize) -> Self {
        Self {
            window: window.max(1),
            visible,
            neurons: vec![NeuronHistory::default(); hidden],
            dc_var: vec![0.0; hidden],
            dw_var: Matrix::zeros(visible, hidden),
        }
    }

    pub fn for_params(params: &RbmParams, window: usize) -> Self {
        Self::new(params.visible_count(), params.hidden_count(), window)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn visible_count(&self) -> usize {
        self.visible
    }

    pub fn hidden_count(&self) -> usize {
        self.neurons.len()
    }

    pub fn history_len(&self, j: usize) -> usize {
        self.neurons[j].c.len()
    }

    pub fn dc_var(&self) -> &[f64] {
        &self.dc_var
    }

    pub fn dw_var(&self) -> &Matrix {
        &self.dw_var
    }

    /// Mean of the `c`-gradient variances.
    pub fn wd_c(&self) -> f64 {
        mean(&self.dc_var)
    }

    /// Mean of the `W`-gradient variances.
    pub fn wd_w(&self) -> f64 {
        mean(self.dw_var.as_slice())
    }

    pub fn wd_total(&self) -> f64 {
        self.wd_c() + self.wd_w()
    }

    pub fn matches(&self, params: &RbmParams) -> bool {
        self.visible == params.visible_count() && self.hidden_count() == params.hidden_count()
    }

    /// Pushes one epoch-mean gradient and recomputes the variances.
    pub fn update(&mut self, grad: &GradientEstimate) -> Result<()> {
        check_len("gradient visible units", self.visible, grad.visible_count())?;
        check_len("gradient hidden units", self.hidden_count(), grad.hidden_count())?;
        for (j, hist) in self.neurons.iter_mut().enumerate() {
            if hist.c.len() == self.window {
                hist.c.pop_front();
                hist.w.pop_front();
            }
            hist.c.push_back(grad.dc[j]);
            hist.w.push_back(grad.dw.column(j));
        }
        self.recompute();
        Ok(())
    }

    fn recompute(&mut self) {
        let hidden = self.hidden_count();
        self.dc_var = self
            .neurons
            .iter()
            .map(|h| sample_variance(h.c.iter().copied()))
            .collect();
        self.dw_var = Matrix::zeros(self.visible, hidden);
        for (j, hist) in self.neurons.iter().enumerate() {
            for i in 0..self.visible {
                self.dw_var.set(i, j, sample_variance(hist.w.iter().map(|col| col[i])));
            }
        }
    }

    pub(crate) fn insert_neuron(&mut self, at: usize) {
        self.neurons.insert(at, NeuronHistory::default());
        self.recompute();
    }

    pub(crate) fn remove_neurons(&mut self, remove: &[bool]) {
        let mut k = 0;
        self.neurons.retain(|_| {
            let keep = !remove[k];
            k += 1;
            keep
        });
        self.recompute();
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// WD generation score per hidden neuron:
/// `(alpha_c · var(dc_j)) · (alpha_W · ‖var(dW_·j)‖₂)`.
/// Neurons with fewer than two window entries score 0.
pub fn generation_scores(stats: &GradientStats, config: &AdaptiveConfig) -> Vec<f64> {
    (0..stats.hidden_count())
        .map(|j| {
            if stats.history_len(j) < 2 {
                return 0.0;
            }
            let col_norm = libm::sqrt(
                (0..stats.visible)
                    .map(|i| {
                        let v = stats.dw_var.get(i, j);
                        v * v
                    })
                    .sum(),
            );
            (config.alpha_c * stats.dc_var[j]) * (config.alpha_w * col_norm)
        })
        .collect()
}

/// Neurons whose score strictly exceeds `theta_g`, highest score first.
pub fn generation_candidates(stats: &GradientStats, config: &AdaptiveConfig) -> Vec<usize> {
    let scores = generation_scores(stats, config);
    let mut out: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > config.theta_g).collect();
    out.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    out
}

/// Splits hidden neuron `parent`: the child is inserted right after it with
/// the parent's bias and the parent's weight column plus `U(-0.01, 0.01)`
/// noise. Returns the child's index, or `None` when `max_hidden` is reached.
pub fn generate_neuron(
    params: &mut RbmParams,
    stats: &mut GradientStats,
    parent: usize,
    max_hidden: usize,
    rng: &mut RngStream,
) -> Result<Option<usize>> {
    let hidden = params.hidden_count();
    if parent >= hidden {
        return Err(Error::IndexOutOfRange {
            what: "hidden neuron",
            index: parent,
            bound: hidden,
        });
    }
    if !stats.matches(params) {
        return Err(Error::DimensionMismatch {
            what: "gradient stats hidden units",
            expected: hidden,
            found: stats.hidden_count(),
        });
    }
    if hidden >= max_hidden {
        log::warn!("hidden layer at cap ({max_hidden}); generation from neuron {parent} skipped");
        return Ok(None);
    }
    let column: Vec<f64> = params
        .weights()
        .column(parent)
        .into_iter()
        .map(|w| w + rng.uniform_in(-0.01, 0.01))
        .collect();
    let bias = params.hidden_bias()[parent];
    let child = parent + 1;
    params.insert_hidden(child, &column, bias);
    stats.insert_neuron(child);
    Ok(Some(child))
}

/// Mean of `p(h_j = 1 | v_n)` over the data, per hidden neuron.
pub fn mean_activations<V: AsRef<[f64]>>(params: &RbmParams, data: &[V]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyInput("data"));
    }
    let mut acc = vec![0.0; params.hidden_count()];
    for v in data {
        for (a, p) in acc.iter_mut().zip(rbm::hidden_conditional(params, v.as_ref())?) {
            *a += p;
        }
    }
    let n = data.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Neurons whose mean activation over `data` is below `theta_a`, ascending.
pub fn annihilation_candidates<V: AsRef<[f64]>>(
    params: &RbmParams,
    data: &[V],
    config: &AdaptiveConfig,
) -> Result<Vec<usize>> {
    let means = mean_activations(params, data)?;
    Ok((0..means.len()).filter(|&j| means[j] < config.theta_a).collect())
}

/// Removes the listed hidden neurons from both `params` and `stats`; the
/// survivors keep their relative order.
pub fn annihilate_neurons(
    params: &mut RbmParams,
    stats: &mut GradientStats,
    indices: &[usize],
) -> Result<()> {
    let hidden = params.hidden_count();
    if !stats.matches(params) {
        return Err(Error::DimensionMismatch {
            what: "gradient stats hidden units",
            expected: hidden,
            found: stats.hidden_count(),
        });
    }
    let mut remove = vec![false; hidden];
    for &j in indices {
        if j >= hidden {
            return Err(Error::IndexOutOfRange {
                what: "hidden neuron",
                index: j,
                bound: hidden,
            });
        }
        remove[j] = true;
    }
    if indices.is_empty() {
        return Ok(());
    }
    if remove.iter().all(|&r| r) {
        return Err(Error::WouldRemoveAllHidden);
    }
    params.remove_hidden(&remove);
    stats.remove_neurons(&remove);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgettingPhase {
    /// Weight decay plus hidden binariness.
    Decay,
    /// Small-weight selective forgetting plus hidden binariness.
    Final,
}

/// Penalty contribution to add to the CD ascent gradient.
///
/// `hidden_probs` are the current mean-field hidden activations. The
/// binariness term moves each bias away from 0.5 (subgradient 0 at 0.5).
pub fn forgetting_gradient(
    params: &RbmParams,
    hidden_probs: &[f64],
    phase: ForgettingPhase,
    config: &AdaptiveConfig,
) -> Result<GradientEstimate> {
    check_len("hidden probabilities", params.hidden_count(), hidden_probs.len())?;
    let mut grad = GradientEstimate::zeros_like(params);
    for (d, &p) in grad.dc.iter_mut().zip(hidden_probs) {
        *d = config.eps2 * math::sign(p - 0.5);
    }
    let weights = params.weights().as_slice();
    let dw = grad.dw.as_mut_slice();
    match phase {
        ForgettingPhase::Decay => {
            for (d, &w) in dw.iter_mut().zip(weights) {
                *d = -config.eps1 * math::sign(w);
            }
        }
        ForgettingPhase::Final => {
            for (d, &w) in dw.iter_mut().zip(weights) {
                if w.abs() < config.theta_small {
                    *d = config.eps3 * math::sign(w);
                }
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuralEvent {
    Generated {
        epoch: usize,
        parent: usize,
        child: usize,
        parent_lineage: u64,
        child_lineage: u64,
        score: f64,
    },
    /// `index` is the position before removal.
    Annihilated {
        epoch: usize,
        index: usize,
        lineage: u64,
        mean_activation: f64,
        /// Change in reconstruction error from removing this neuron alone.
        recon_delta: f64,
    },
}

impl StructuralEvent {
    pub fn epoch(&self) -> usize {
        match self {
            StructuralEvent::Generated { epoch, .. } | StructuralEvent::Annihilated { epoch, .. } => *epoch,
        }
    }
}

impl fmt::Display for StructuralEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuralEvent::Generated {
                parent,
                child,
                parent_lineage,
                child_lineage,
                ..
            } => write!(f, "generate {parent}->{child} (id {parent_lineage}->{child_lineage})"),
            StructuralEvent::Annihilated { index, lineage, .. } => {
                write!(f, "annihilate {index} (id {lineage})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub hidden_count: usize,
    pub recon_error: f64,
    pub mean_energy: f64,
    pub wd_c: f64,
    pub wd_w: f64,
    pub events: Vec<StructuralEvent>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// WD summary of the final window, `wd_c + wd_w`.
    pub final_wd: f64,
}

impl TrainingLog {
    pub fn events(&self) -> impl Iterator<Item = &StructuralEvent> {
        self.records.iter().flat_map(|r| r.events.iter())
    }

    pub fn generation_count(&self) -> usize {
        self.events()
            .filter(|e| matches!(e, StructuralEvent::Generated { .. }))
            .count()
    }

    pub fn annihilation_count(&self) -> usize {
        self.events()
            .filter(|e| matches!(e, StructuralEvent::Annihilated { .. }))
            .count()
    }
}

/// Adaptive RBM training from a fresh layer of `train.initial_hidden` units.
pub fn train_adaptive_rbm<V: AsRef<[f64]>>(
    data: &[V],
    config: &AdaptiveConfig,
    train: &TrainingHyperparams,
    rng: &mut RngStream,
) -> Result<(RbmParams, TrainingLog)> {
    let first = data.first().ok_or(Error::EmptyInput("training data"))?;
    let params = RbmParams::new_random(first.as_ref().len(), train.initial_hidden, rng);
    train_adaptive_rbm_from(params, data, config, train, rng)
}

/// Three-phase schedule on existing parameters:
///
/// 1. `generation_phase_epochs` of CD with a generation check (single
///    best candidate) and an annihilation check at every epoch end;
/// 2. `forgetting_phase_epochs` of CD plus decay-phase forgetting, structure frozen;
/// 3. `final_phase_epochs` of CD plus final-phase forgetting.
pub fn train_adaptive_rbm_from<V: AsRef<[f64]>>(
    mut params: RbmParams,
    data: &[V],
    config: &AdaptiveConfig,
    train: &TrainingHyperparams,
    rng: &mut RngStream,
) -> Result<(RbmParams, TrainingLog)> {
    config.validate()?;
    train.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    for v in data {
        check_len("training sample", params.visible_count(), v.as_ref().len())?;
    }

    let mut stats = GradientStats::for_params(&params, config.window);
    let mut lineage: Vec<u64> = (0..params.hidden_count() as u64).collect();
    let mut next_lineage = lineage.len() as u64;
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    let gen_end = config.generation_phase_epochs;
    let decay_end = gen_end + config.forgetting_phase_epochs;
    for epoch in 0..config.total_epochs() {
        let phase = if epoch < gen_end {
            None
        } else if epoch < decay_end {
            Some(ForgettingPhase::Decay)
        } else {
            Some(ForgettingPhase::Final)
        };

        rng.shuffle(&mut order);
        let mut epoch_grad = GradientEstimate::zeros_like(&params);
        let mut batches = 0usize;
        for chunk in order.chunks(train.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&n| data[n].as_ref()).collect();
            let mut grad = rbm::cd_gradient(&params, &batch, train.cd_k, rng)?;
            epoch_grad.add_assign(&grad)?;
            batches += 1;
            if let Some(phase) = phase {
                let probs = mean_activations(&params, &batch)?;
                grad.add_assign(&forgetting_gradient(&params, &probs, phase, config)?)?;
            }
            params.sgd_step(&grad, train.learning_rate)?;
        }
        epoch_grad.scale(1.0 / batches as f64);
        stats.update(&epoch_grad)?;

        let mut events = Vec::new();
        if phase.is_none() {
            if let Some(&parent) = generation_candidates(&stats, config).first() {
                let score = generation_scores(&stats, config)[parent];
                if let Some(child) = generate_neuron(&mut params, &mut stats, parent, config.max_hidden, rng)? {
                    lineage.insert(child, next_lineage);
                    events.push(StructuralEvent::Generated {
                        epoch,
                        parent,
                        child,
                        parent_lineage: lineage[parent],
                        child_lineage: next_lineage,
                        score,
                    });
                    next_lineage += 1;
                }
            }
            let means = mean_activations(&params, data)?;
            let mut doomed: Vec<usize> = (0..means.len()).filter(|&j| means[j] < config.theta_a).collect();
            if doomed.len() == params.hidden_count() {
                // Keep the most active neuron so the layer never empties.
                let keep = math::argmax(&means);
                doomed.retain(|&j| j != keep);
            }
            if !doomed.is_empty() {
                let base = rbm::reconstruction_error(&params, data)?;
                for &j in &doomed {
                    let mut probe = params.clone();
                    let mut mask = vec![false; params.hidden_count()];
                    mask[j] = true;
                    probe.remove_hidden(&mask);
                    events.push(StructuralEvent::Annihilated {
                        epoch,
                        index: j,
                        lineage: lineage[j],
                        mean_activation: means[j],
                        recon_delta: rbm::reconstruction_error(&probe, data)? - base,
                    });
                }
                annihilate_neurons(&mut params, &mut stats, &doomed)?;
                let mut k = 0;
                lineage.retain(|_| {
                    let keep = !doomed.contains(&k);
                    k += 1;
                    keep
                });
            }
        }
        if !stats.matches(&params) || lineage.len() != params.hidden_count() {
            return Err(Error::DimensionMismatch {
                what: "structural bookkeeping after epoch",
                expected: params.hidden_count(),
                found: stats.hidden_count(),
            });
        }

        log.records.push(EpochRecord {
            epoch,
            hidden_count: params.hidden_count(),
            recon_error: rbm::reconstruction_error(&params, data)?,
            mean_energy: rbm::mean_field_energy(&params, data)?,
            wd_c: stats.wd_c(),
            wd_w: stats.wd_w(),
            events,
        });
    }
    log.final_wd = stats.wd_total();
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_with(dc: f64, dw: f64, visible: usize, hidden: usize) -> GradientEstimate {
        let mut g = GradientEstimate::zeros(visible, hidden);
        g.dc.iter_mut().for_each(|x| *x = dc);
        g.dw.as_mut_slice().iter_mut().for_each(|x| *x = dw);
        g
    }

    #[test]
    fn constant_gradient_has_zero_variance() {
        let mut s = GradientStats::new(3, 2, 4);
        for _ in 0..4 {
            s.update(&grad_with(0.7, -0.2, 3, 2)).unwrap();
        }
        assert!(s.dc_var().iter().all(|&v| v == 0.0));
        assert!(s.dw_var().as_slice().iter().all(|&v| v.abs() < 1e-30));
    }

    #[test]
    fn alternating_gradient_variance_closed_form() {
        let g = 0.3;
        let window = 6;
        let mut s = GradientStats::new(2, 2, window);
        for t in 0..window {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            s.update(&grad_with(sign * g, sign * g, 2, 2)).unwrap();
        }
        let expected = g * g * window as f64 / (window - 1) as f64;
        // Direct computation as a second route.
        let xs: Vec<f64> = (0..window).map(|t| if t % 2 == 0 { g } else { -g }).collect();
        let m = xs.iter().sum::<f64>() / window as f64;
        let direct = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (window - 1) as f64;
        assert!((expected - direct).abs() < 1e-15);
        for &v in s.dc_var().iter().chain(s.dw_var().as_slice()) {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn single_observation_reports_zero() {
        let mut s = GradientStats::new(2, 1, 5);
        s.update(&grad_with(5.0, 5.0, 2, 1)).unwrap();
        assert_eq!(s.dc_var(), &[0.0]);
        assert_eq!(generation_scores(&s, &AdaptiveConfig::default()), vec![0.0]);
    }

    #[test]
    fn window_slides() {
        let mut s = GradientStats::new(1, 1, 2);
        s.update(&grad_with(1.0, 0.0, 1, 1)).unwrap();
        s.update(&grad_with(-1.0, 0.0, 1, 1)).unwrap();
        s.update(&grad_with(-1.0, 0.0, 1, 1)).unwrap();
        assert_eq!(s.history_len(0), 2);
        assert_eq!(s.dc_var(), &[0.0]);
    }

    #[test]
    fn update_rejects_mismatched_gradient() {
        let mut s = GradientStats::new(2, 2, 3);
        assert!(s.update(&GradientEstimate::zeros(2, 3)).is_err());
    }

    #[test]
    fn zero_variance_scores_zero() {
        let mut s = GradientStats::new(2, 3, 3);
        for _ in 0..3 {
            s.update(&grad_with(0.1, 0.1, 2, 3)).unwrap();
        }
        assert!(generation_scores(&s, &AdaptiveConfig::default()).iter().all(|&x| x == 0.0));
        assert!(generation_candidates(&s, &AdaptiveConfig::default()).is_empty());
    }

    #[test]
    fn score_is_product_of_variance_and_column_norm() {
        // dc_var = 1 and ‖dW_var col‖ = 1 with a single visible unit.
        let mut s = GradientStats::new(1, 1, 2);
        let s2 = libm::sqrt(2.0) / 2.0;
        s.update(&grad_with(s2, s2, 1, 1)).unwrap();
        s.update(&grad_with(-s2, -s2, 1, 1)).unwrap();
        assert!((s.dc_var()[0] - 1.0).abs() < 1e-12);
        let config = AdaptiveConfig {
            theta_g: 0.5,
            alpha_c: 1.0,
            alpha_w: 1.0,
            ..AdaptiveConfig::default()
        };
        let scores = generation_scores(&s, &config);
        assert!((scores[0] - 1.0).abs() < 1e-12);
        assert_eq!(generation_candidates(&s, &config), vec![0]);
        let never = AdaptiveConfig {
            theta_g: f64::INFINITY,
            ..config
        };
        assert!(generation_candidates(&s, &never).is_empty());
    }

    #[test]
    fn generated_child_inherits_parent() {
        let mut rng = RngStream::new(3);
        let mut p = RbmParams::new_random(5, 2, &mut rng);
        p.hidden_bias_mut()[1] = 0.4;
        let original = p.clone();
        let mut s = GradientStats::for_params(&p, 5);
        let child = generate_neuron(&mut p, &mut s, 1, 10, &mut RngStream::new(4)).unwrap();
        assert_eq!(child, Some(2));
        assert_eq!(p.hidden_count(), 3);
        assert_eq!(s.hidden_count(), 3);
        assert_eq!(p.hidden_bias()[2], 0.4);
        for i in 0..5 {
            assert_eq!(p.weights().get(i, 1), original.weights().get(i, 1));
            assert!((p.weights().get(i, 2) - original.weights().get(i, 1)).abs() <= 0.01);
        }
    }

    #[test]
    fn inactive_child_leaves_energy_unchanged() {
        let mut rng = RngStream::new(5);
        let mut p = RbmParams::new_random(3, 2, &mut rng);
        let original = p.clone();
        let mut s = GradientStats::for_params(&p, 5);
        generate_neuron(&mut p, &mut s, 0, 10, &mut rng).unwrap();
        let v = [1.0, 0.0, 1.0];
        for h in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let extended = [h[0], 0.0, h[1]];
            let a = rbm::energy(&original, &v, &h).unwrap();
            let b = rbm::energy(&p, &v, &extended).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn generation_noise_is_reproducible_and_capped() {
        let base = RbmParams::new_random(4, 2, &mut RngStream::new(1));
        let run = || {
            let mut p = base.clone();
            let mut s = GradientStats::for_params(&p, 5);
            generate_neuron(&mut p, &mut s, 0, 10, &mut RngStream::new(77)).unwrap();
            p
        };
        assert_eq!(run(), run());

        let mut p = base.clone();
        let mut s = GradientStats::for_params(&p, 5);
        assert_eq!(generate_neuron(&mut p, &mut s, 0, 2, &mut RngStream::new(1)).unwrap(), None);
        assert_eq!(p, base);
        assert!(generate_neuron(&mut p, &mut s, 2, 10, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn annihilation_candidates_cases() {
        let config = AdaptiveConfig::default();
        let data = [vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 1.0]];
        assert!(annihilation_candidates(&RbmParams::zeros(3, 2), &data, &config)
            .unwrap()
            .is_empty());

        let mut p = RbmParams::from_parts(vec![0.0; 3], vec![0.0, -50.0], Matrix::from_fn(3, 2, |_, _| 0.5)).unwrap();
        assert_eq!(annihilation_candidates(&p, &data, &config).unwrap(), vec![1]);

        // Hand-enumerated: neuron 0 has c = -3, W column (1, 0, 0):
        // means sigmoid(-2) and sigmoid(-3) -> (0.1192 + 0.0474) / 2 = 0.0833 < 0.1.
        p = RbmParams::from_parts(
            vec![0.0; 3],
            vec![-3.0, -1.0],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let means = mean_activations(&p, &data).unwrap();
        let expected0 = (math::sigmoid(-2.0) + math::sigmoid(-3.0)) / 2.0;
        let expected1 = (math::sigmoid(-1.0) + math::sigmoid(1.0)) / 2.0;
        assert!((means[0] - expected0).abs() < 1e-15);
        assert!((means[1] - expected1).abs() < 1e-15);
        assert_eq!(annihilation_candidates(&p, &data, &config).unwrap(), vec![0]);

        let empty: [Vec<f64>; 0] = [];
        assert!(annihilation_candidates(&p, &empty, &config).is_err());
    }

    #[test]
    fn annihilation_preserves_survivors() {
        let mut rng = RngStream::new(9);
        let mut p = RbmParams::new_random(4, 3, &mut rng);
        p.hidden_bias_mut().copy_from_slice(&[0.1, 0.2, 0.3]);
        let original = p.clone();
        let mut s = GradientStats::for_params(&p, 5);

        annihilate_neurons(&mut p, &mut s, &[]).unwrap();
        assert_eq!(p, original);

        let v = [1.0, 0.0, 1.0, 1.0];
        let before = rbm::hidden_conditional(&p, &v).unwrap();
        annihilate_neurons(&mut p, &mut s, &[1]).unwrap();
        assert_eq!(p.hidden_count(), 2);
        assert_eq!(s.hidden_count(), 2);
        assert_eq!(p.weights().column(0), original.weights().column(0));
        assert_eq!(p.weights().column(1), original.weights().column(2));
        assert_eq!(p.hidden_bias(), &[0.1, 0.3]);
        let after = rbm::hidden_conditional(&p, &v).unwrap();
        assert_eq!(after, vec![before[0], before[2]]);

        assert_eq!(
            annihilate_neurons(&mut p, &mut s, &[0, 1]),
            Err(Error::WouldRemoveAllHidden)
        );
        assert!(annihilate_neurons(&mut p, &mut s, &[5]).is_err());
    }

    #[test]
    fn forgetting_terms() {
        let p = RbmParams::from_parts(
            vec![0.0; 2],
            vec![0.0; 2],
            Matrix::from_rows(&[vec![0.5, -0.05], vec![0.05, 0.0]]).unwrap(),
        )
        .unwrap();
        let zero = AdaptiveConfig {
            eps1: 0.0,
            eps2: 0.0,
            eps3: 0.0,
            ..AdaptiveConfig::default()
        };
        for phase in [ForgettingPhase::Decay, ForgettingPhase::Final] {
            let g = forgetting_gradient(&p, &[0.9, 0.1], phase, &zero).unwrap();
            assert_eq!(g.norm_inf(), 0.0);
        }

        let config = AdaptiveConfig::default();
        let decay = forgetting_gradient(&p, &[0.9, 0.1], ForgettingPhase::Decay, &config).unwrap();
        assert_eq!(decay.dw.get(0, 0), -0.01);
        assert_eq!(decay.dw.get(0, 1), 0.01);
        assert_eq!(decay.dw.get(1, 1), 0.0);
        // Binariness pushes active units up and inactive units down.
        assert_eq!(decay.dc, vec![0.01, -0.01]);
        assert_eq!(decay.db, vec![0.0, 0.0]);

        let fin = forgetting_gradient(&p, &[0.5, 0.2], ForgettingPhase::Final, &config).unwrap();
        assert_eq!(fin.dw.get(1, 0), 0.01);
        assert_eq!(fin.dw.get(0, 1), -0.01);
        assert_eq!(fin.dw.get(0, 0), 0.0);
        assert_eq!(fin.dc, vec![0.0, -0.01]);
    }
}
