//! Knowledge acquisition from a trained DBN.
//!
//! A hidden neuron is *fired* for an input when its activation probability
//! strictly exceeds `theta_fire`. Fired neurons are traced through the stack,
//! summarised as a path graph, and contrasted between correctly and wrongly
//! classified inputs to mine IF-THEN inactivation rules:
//!
//! ```text
//! IF L3:[0,85,281] THEN INACTIVATE L4:301
//! ```
//!
//! Layers are numbered from 1 (the first hidden layer).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dataset::LabeledDataset;
use crate::dbn::DbnModel;
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::rbm;

pub const DEFAULT_THETA_FIRE: f64 = 0.6;

#[inline]
pub fn is_fired(probability: f64, theta_fire: f64) -> bool {
    probability > theta_fire
}

fn fired_indices(probs: &[f64], theta_fire: f64) -> Vec<usize> {
    (0..probs.len()).filter(|&j| is_fired(probs[j], theta_fire)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiringTrace {
    /// Activation probabilities of hidden layers `1..=L`.
    pub activations: Vec<Vec<f64>>,
    /// Fired indices per hidden layer, ascending.
    pub fired: Vec<Vec<usize>>,
    pub theta_fire: f64,
    /// `None` when the model head has not been trained.
    pub predicted: Option<usize>,
    pub true_label: Option<usize>,
}

impl FiringTrace {
    /// Fired set of 1-based layer `layer`.
    pub fn fired_at(&self, layer: usize) -> Option<&[usize]> {
        layer.checked_sub(1).and_then(|k| self.fired.get(k)).map(Vec::as_slice)
    }

    pub fn is_consistent(&self) -> bool {
        self.activations.len() == self.fired.len()
            && self
                .activations
                .iter()
                .zip(&self.fired)
                .all(|(a, f)| fired_indices(a, self.theta_fire) == *f)
    }

    pub fn is_correct(&self) -> bool {
        matches!((self.predicted, self.true_label), (Some(p), Some(t)) if p == t)
    }
}

/// `IF layer:antecedent fired THEN inactivate (layer + 1):consequent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    layer: usize,
    antecedent: Vec<usize>,
    consequent: usize,
}

impl Rule {
    /// `layer` is 1-based; the antecedent is sorted and deduplicated.
    pub fn new(layer: usize, mut antecedent: Vec<usize>, consequent: usize) -> Result<Self> {
        if layer == 0 {
            return Err(Error::InvalidArgument("rule layers are numbered from 1"));
        }
        if antecedent.is_empty() {
            return Err(Error::EmptyInput("rule antecedent"));
        }
        antecedent.sort_unstable();
        antecedent.dedup();
        Ok(Self {
            layer,
            antecedent,
            consequent,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn antecedent(&self) -> &[usize] {
        &self.antecedent
    }

    pub fn consequent(&self) -> usize {
        self.consequent
    }

    pub fn validate(&self, model: &DbnModel) -> Result<()> {
        let bound = model.layer_count();
        if self.layer + 1 > bound {
            return Err(Error::IndexOutOfRange {
                what: "rule layer",
                index: self.layer,
                bound,
            });
        }
        let width = model.hidden_size(self.layer).unwrap_or(0);
        if let Some(&j) = self.antecedent.iter().find(|&&j| j >= width) {
            return Err(Error::IndexOutOfRange {
                what: "rule antecedent neuron",
                index: j,
                bound: width,
            });
        }
        let next = model.hidden_size(self.layer + 1).unwrap_or(0);
        if self.consequent >= next {
            return Err(Error::IndexOutOfRange {
                what: "rule consequent neuron",
                index: self.consequent,
                bound: next,
            });
        }
        Ok(())
    }

    /// True iff every antecedent neuron is in `fired` (ascending).
    pub fn matches(&self, fired: &[usize]) -> bool {
        self.antecedent.iter().all(|j| fired.binary_search(j).is_ok())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF L{}:[", self.layer)?;
        for (k, j) in self.antecedent.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "] THEN INACTIVATE L{}:{}", self.layer + 1, self.consequent)
    }
}

fn check_theta(theta_fire: f64) -> Result<()> {
    if theta_fire > 0.0 && theta_fire < 1.0 {
        Ok(())
    } else {
        Err(Error::ValueOutOfRange {
            what: "theta_fire",
            value: theta_fire,
        })
    }
}

// Forward pass with rule inactivation. Rules at layer l zero their
// consequent in layer l+1 before that layer's fired set is taken.
fn forward(model: &DbnModel, rules: &[Rule], v: &[f64], theta_fire: f64) -> Result<FiringTrace> {
    check_len("model input", model.input_dim(), v.len())?;
    let count = model.layer_count();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut fired: Vec<Vec<usize>> = Vec::with_capacity(count);
    for (k, params) in model.layers().iter().enumerate() {
        let below = activations.last().map_or(v, Vec::as_slice);
        let mut a = rbm::hidden_conditional(params, below)?;
        if k > 0 {
            for rule in rules.iter().filter(|r| r.layer == k) {
                if rule.matches(&fired[k - 1]) {
                    a[rule.consequent] = 0.0;
                }
            }
        }
        fired.push(fired_indices(&a, theta_fire));
        activations.push(a);
    }
    let predicted = if model.head().class_count() > 0 {
        Some(math::argmax(&model.head().probabilities(&activations[count - 1])?))
    } else {
        None
    };
    Ok(FiringTrace {
        activations,
        fired,
        theta_fire,
        predicted,
        true_label: None,
    })
}

pub fn fire_trace(model: &DbnModel, v: &[f64], theta_fire: f64) -> Result<FiringTrace> {
    check_theta(theta_fire)?;
    forward(model, &[], v, theta_fire)
}

/// Classification with rule inactivation embedded in the forward pass.
pub fn apply_rules(model: &DbnModel, rules: &[Rule], v: &[f64], theta_fire: f64) -> Result<(usize, FiringTrace)> {
    check_theta(theta_fire)?;
    for rule in rules {
        rule.validate(model)?;
    }
    let trace = forward(model, rules, v, theta_fire)?;
    let label = trace
        .predicted
        .ok_or(Error::InvalidArgument("classifier head has no classes; train it first"))?;
    Ok((label, trace))
}

/// `(fired, inactive)` counts of 1-based `layer` for every sample.
pub fn fired_count_stats<V: AsRef<[f64]>>(
    model: &DbnModel,
    data: &[V],
    layer: usize,
    theta_fire: f64,
) -> Result<Vec<(usize, usize)>> {
    check_theta(theta_fire)?;
    let width = model.hidden_size(layer).ok_or(Error::IndexOutOfRange {
        what: "layer",
        index: layer,
        bound: model.layer_count(),
    })?;
    data.iter()
        .map(|v| {
            let trace = forward(model, &[], v.as_ref(), theta_fire)?;
            let fired = trace.fired[layer - 1].len();
            Ok((fired, width - fired))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEdge {
    /// `(layer, neuron)`, 1-based layer.
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub weight: f64,
    /// 1 (weakest) to 5 (strongest), quintile of `|weight|` among included edges.
    pub strength: u8,
    /// Number of traces that contain the edge.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathGraph {
    /// `((layer, neuron), number of traces in which it fired)`, sorted.
    pub nodes: Vec<((usize, usize), usize)>,
    /// Sorted by `(from, to)`.
    pub edges: Vec<PathEdge>,
}

impl PathGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Strength classes for magnitudes: rank `r` of `n` (ascending, stable on
/// ties) maps to `1 + floor(5r / n)`.
pub fn strength_classes(magnitudes: &[f64]) -> Vec<u8> {
    let n = magnitudes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| magnitudes[a].total_cmp(&magnitudes[b]));
    let mut out = vec![0u8; n];
    for (rank, &e) in order.iter().enumerate() {
        out[e] = (1 + 5 * rank / n) as u8;
    }
    out
}

pub fn build_path_graph(model: &DbnModel, traces: &[FiringTrace]) -> Result<PathGraph> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("firing traces"));
    }
    let mut nodes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut edges: BTreeMap<((usize, usize), (usize, usize)), usize> = BTreeMap::new();
    for trace in traces {
        check_len("trace layers", model.layer_count(), trace.fired.len())?;
        for (k, fired) in trace.fired.iter().enumerate() {
            let width = model.layers()[k].hidden_count();
            if let Some(&j) = fired.iter().find(|&&j| j >= width) {
                return Err(Error::IndexOutOfRange {
                    what: "traced neuron",
                    index: j,
                    bound: width,
                });
            }
            for &j in fired {
                *nodes.entry((k + 1, j)).or_insert(0) += 1;
            }
            if k + 1 < trace.fired.len() {
                for &j in fired {
                    for &jn in &trace.fired[k + 1] {
                        *edges.entry(((k + 1, j), (k + 2, jn))).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut out: Vec<PathEdge> = edges
        .into_iter()
        .map(|((from, to), count)| PathEdge {
            from,
            to,
            // Edge from layer l to l+1 uses the weights of RBM l+1.
            weight: model.layers()[to.0 - 1].weights().get(from.1, to.1),
            strength: 0,
            count,
        })
        .collect();
    let magnitudes: Vec<f64> = out.iter().map(|e| libm::fabs(e.weight)).collect();
    for (edge, class) in out.iter_mut().zip(strength_classes(&magnitudes)) {
        edge.strength = class;
    }
    Ok(PathGraph {
        nodes: nodes.into_iter().collect(),
        edges: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    pub theta_fire: f64,
    pub max_antecedent: usize,
    /// A divergent consequent fires in at least this fraction of wrong traces.
    pub wrong_fraction: f64,
    /// ... and in at most this fraction of correct traces of the same class.
    pub correct_fraction: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            theta_fire: DEFAULT_THETA_FIRE,
            max_antecedent: 4,
            wrong_fraction: 0.8,
            correct_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleEvaluation {
    pub accuracy_without: f64,
    pub accuracy_with: f64,
    /// `confusion[true][predicted]`.
    pub confusion_without: Vec<Vec<usize>>,
    pub confusion_with: Vec<Vec<usize>>,
}

impl RuleEvaluation {
    /// Total off-diagonal mass between classes `a` and `b`, with rules.
    pub fn pair_confusion_with(&self, a: usize, b: usize) -> usize {
        self.confusion_with[a][b] + self.confusion_with[b][a]
    }

    pub fn pair_confusion_without(&self, a: usize, b: usize) -> usize {
        self.confusion_without[a][b] + self.confusion_without[b][a]
    }
}

fn confusion(model: &DbnModel, rules: &[Rule], data: &LabeledDataset, theta_fire: f64) -> Result<(f64, Vec<Vec<usize>>)> {
    let classes = data.class_count().max(model.head().class_count());
    let mut matrix = vec![vec![0usize; classes]; classes];
    let mut correct = 0usize;
    for (x, label) in data.iter() {
        let (pred, _) = apply_rules(model, rules, x, theta_fire)?;
        matrix[label][pred] += 1;
        if pred == label {
            correct += 1;
        }
    }
    Ok((correct as f64 / data.len() as f64, matrix))
}

pub fn evaluate_with_rules(
    model: &DbnModel,
    rules: &[Rule],
    data: &LabeledDataset,
    theta_fire: f64,
) -> Result<RuleEvaluation> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation data"));
    }
    let (accuracy_without, confusion_without) = confusion(model, &[], data, theta_fire)?;
    let (accuracy_with, confusion_with) = confusion(model, rules, data, theta_fire)?;
    Ok(RuleEvaluation {
        accuracy_without,
        accuracy_with,
        confusion_without,
        confusion_with,
    })
}

fn fraction_fired(traces: &[&FiringTrace], k: usize, j: usize) -> f64 {
    let hits = traces.iter().filter(|t| t.fired[k].binary_search(&j).is_ok()).count();
    hits as f64 / traces.len() as f64
}

/// Contrast candidates for inputs of class `truth` misread as `other`.
fn contrast_candidates(
    traces: &[FiringTrace],
    layer_sizes: &[usize],
    truth: usize,
    other: usize,
    config: &MiningConfig,
) -> Vec<Rule> {
    let wrong: Vec<&FiringTrace> = traces
        .iter()
        .filter(|t| t.true_label == Some(truth) && t.predicted == Some(other))
        .collect();
    let correct: Vec<&FiringTrace> = traces
        .iter()
        .filter(|t| t.true_label == Some(truth) && t.predicted == Some(truth))
        .collect();
    let mut out = Vec::new();
    if wrong.is_empty() {
        return out;
    }
    // Boundaries from the top down; `k` is the 0-based antecedent layer.
    for k in (0..layer_sizes.len().saturating_sub(1)).rev() {
        for jn in 0..layer_sizes[k + 1] {
            if fraction_fired(&wrong, k + 1, jn) < config.wrong_fraction {
                continue;
            }
            if !correct.is_empty() && fraction_fired(&correct, k + 1, jn) > config.correct_fraction {
                continue;
            }
            let carriers: Vec<&FiringTrace> = wrong
                .iter()
                .copied()
                .filter(|t| t.fired[k + 1].binary_search(&jn).is_ok())
                .collect();
            let mut antecedent: Vec<(usize, f64)> = (0..layer_sizes[k])
                .map(|j| (j, fraction_fired(&carriers, k, j)))
                .filter(|&(_, f)| f >= config.wrong_fraction)
                .collect();
            antecedent.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            antecedent.truncate(config.max_antecedent);
            if let Ok(rule) = Rule::new(k + 1, antecedent.into_iter().map(|(j, _)| j).collect(), jn) {
                out.push(rule);
            }
        }
    }
    out
}

/// Contrast mining of inactivation rules for the class pair `(a, b)`.
///
/// Candidates come from neurons that fire in at least `wrong_fraction` of the
/// misclassified traces and at most `correct_fraction` of the correct traces
/// of the same true class, with the antecedent taken from the most frequently
/// fired neurons one layer below. A candidate is accepted only if it keeps
/// validation accuracy and strictly lowers the `a`/`b` confusion count.
/// Finally any rule whose removal would raise accuracy is dropped.
pub fn mine_rules(
    model: &DbnModel,
    validation: &LabeledDataset,
    class_pair: (usize, usize),
    config: &MiningConfig,
) -> Result<Vec<Rule>> {
    check_theta(config.theta_fire)?;
    if config.max_antecedent == 0 {
        return Err(Error::InvalidArgument("max_antecedent must be at least 1"));
    }
    let (a, b) = class_pair;
    let classes = model.head().class_count();
    for c in [a, b] {
        if c >= classes {
            return Err(Error::LabelOutOfRange {
                label: c,
                class_count: classes,
            });
        }
    }
    if a == b {
        return Err(Error::InvalidArgument("class pair must name two different classes"));
    }
    let counts = validation.class_counts();
    if counts.get(a).copied().unwrap_or(0) == 0 || counts.get(b).copied().unwrap_or(0) == 0 {
        return Err(Error::EmptyInput("validation samples of the class pair"));
    }

    let mut traces = Vec::new();
    for (x, label) in validation.iter() {
        if label == a || label == b {
            let mut trace = forward(model, &[], x, config.theta_fire)?;
            trace.true_label = Some(label);
            traces.push(trace);
        }
    }
    let sizes = model.layer_sizes();
    let mut candidates = contrast_candidates(&traces, &sizes, a, b, config);
    candidates.extend(contrast_candidates(&traces, &sizes, b, a, config));
    let mut seen = Vec::new();
    candidates.retain(|r| {
        let fresh = !seen.contains(r);
        if fresh {
            seen.push(r.clone());
        }
        fresh
    });
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let pair = |m: &Vec<Vec<usize>>| m[a][b] + m[b][a];
    let (base_acc, base_conf) = confusion(model, &[], validation, config.theta_fire)?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for (order, rule) in candidates.into_iter().enumerate() {
        let (acc, conf) = confusion(model, core::slice::from_ref(&rule), validation, config.theta_fire)?;
        let reduction = pair(&base_conf) as i64 - pair(&conf) as i64;
        ranked.push((reduction, acc, order, rule));
    }
    ranked.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(&y.2)));

    let mut accepted: Vec<Rule> = Vec::new();
    let (mut acc_now, mut conf_now) = (base_acc, pair(&base_conf));
    for (reduction, _, _, rule) in ranked {
        if reduction <= 0 {
            break;
        }
        accepted.push(rule);
        let (acc, conf) = confusion(model, &accepted, validation, config.theta_fire)?;
        if acc >= acc_now && pair(&conf) < conf_now {
            acc_now = acc;
            conf_now = pair(&conf);
        } else {
            accepted.pop();
        }
    }

    loop {
        let mut dropped = false;
        for k in 0..accepted.len() {
            let mut without = accepted.clone();
            without.remove(k);
            let (acc, _) = confusion(model, &without, validation, config.theta_fire)?;
            if acc > acc_now {
                accepted = without;
                acc_now = acc;
                dropped = true;
                break;
            }
        }
        if !dropped {
            break;
        }
    }
    Ok(accepted)
}
