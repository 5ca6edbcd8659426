//! Deep Belief Network assembled from adaptive RBMs.
//!
//! Layers are trained greedily on the mean-field outputs of the layer below.
//! After each layer finishes, a new layer is added while both the summed WD
//! and the summed energy magnitude of the stack exceed their thresholds.

use alloc::vec;
use alloc::vec::Vec;

use crate::adaptive::{self, AdaptiveConfig, TrainingHyperparams, TrainingLog};
use crate::dataset::LabeledDataset;
use crate::error::{check_len, Error, Result};
use crate::knowledge::Rule;
use crate::math;
use crate::matrix::Matrix;
use crate::rbm::{self, RbmParams};
use crate::rng::RngStream;

/// Softmax readout on the top hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weights: Matrix,
    biases: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(input_dim: usize, class_count: usize) -> Self {
        Self {
            weights: Matrix::zeros(input_dim, class_count),
            biases: vec![0.0; class_count],
        }
    }

    pub fn from_parts(weights: Matrix, biases: Vec<f64>) -> Result<Self> {
        check_len("head biases", weights.cols(), biases.len())?;
        if !weights.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("classifier head"));
        }
        Ok(Self { weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn class_count(&self) -> usize {
        self.biases.len()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len("head input", self.input_dim(), features.len())?;
        let mut z = self.weights.vec_mul(features);
        for (zk, bk) in z.iter_mut().zip(&self.biases) {
            *zk += bk;
        }
        Ok(z)
    }

    pub fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>> {
        if self.class_count() == 0 {
            return Err(Error::InvalidArgument("classifier head has no classes; train it first"));
        }
        Ok(math::softmax(&self.logits(features)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    layers: Vec<RbmParams>,
    head: ClassifierHead,
    rules: Vec<Rule>,
}

impl DbnModel {
    /// Checks inter-layer chaining, the head input size, and every rule.
    pub fn new(layers: Vec<RbmParams>, head: ClassifierHead, rules: Vec<Rule>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("DBN layers"));
        }
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].hidden_count(), pair[1].visible_count())?;
        }
        let top = layers[layers.len() - 1].hidden_count();
        check_len("head input", top, head.input_dim())?;
        let model = Self {
            layers,
            head,
            rules: Vec::new(),
        };
        for rule in &rules {
            rule.validate(&model)?;
        }
        Ok(Self { rules, ..model })
    }

    pub fn layers(&self) -> &[RbmParams] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Sizes of hidden layers `1..=L`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(RbmParams::hidden_count).collect()
    }

    /// Hidden size of layer `l` (1-based).
    pub fn hidden_size(&self, layer: usize) -> Option<usize> {
        layer.checked_sub(1).and_then(|k| self.layers.get(k)).map(RbmParams::hidden_count)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].visible_count()
    }

    pub fn top_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].hidden_count()
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn set_head(&mut self, head: ClassifierHead) -> Result<()> {
        check_len("head input", self.top_dim(), head.input_dim())?;
        self.head = head;
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn set_rules(&mut self, rules: Vec<Rule>) -> Result<()> {
        for rule in &rules {
            rule.validate(self)?;
        }
        self.rules = rules;
        Ok(())
    }
}

/// Mean-field activations of every hidden layer, bottom to top.
pub fn propagate(model: &DbnModel, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_len("model input", model.input_dim(), v.len())?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(model.layer_count());
    for params in model.layers() {
        let below = out.last().map_or(v, Vec::as_slice);
        out.push(rbm::hidden_conditional(params, below)?);
    }
    Ok(out)
}

/// Mean over `inputs` of `E(x, p(h | x))` for one layer.
pub fn layer_energy_total<V: AsRef<[f64]>>(params: &RbmParams, inputs: &[V]) -> Result<f64> {
    rbm::mean_field_energy(params, inputs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    /// 1-based layer index.
    pub layer: usize,
    /// Total WD of `c` and `W` over the final window.
    pub wd_total: f64,
    /// Mean mean-field energy over the layer's training inputs (signed).
    pub energy_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGenConfig {
    pub theta_l1: f64,
    pub theta_l2: f64,
    pub alpha_wd: f64,
    pub alpha_e: f64,
    pub max_layers: usize,
}

impl Default for LayerGenConfig {
    fn default() -> Self {
        Self {
            theta_l1: 0.05,
            theta_l2: 0.05,
            alpha_wd: 3000.0,
            alpha_e: 1.0,
            max_layers: 5,
        }
    }
}

impl LayerGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_layers < 1 {
            return Err(Error::InvalidArgument("max_layers must be at least 1"));
        }
        if !(self.alpha_wd > 0.0 && self.alpha_e > 0.0) {
            return Err(Error::InvalidArgument("alpha_wd and alpha_e must be positive"));
        }
        if self.theta_l1.is_nan() || self.theta_l2.is_nan() {
            return Err(Error::InvalidArgument("layer thresholds must not be NaN"));
        }
        Ok(())
    }
}

/// True iff `Σ alpha_WD·WD^l > theta_L1` and `Σ alpha_E·|E^l| > theta_L2`
/// over the trained layers, and the stack is below `max_layers`.
pub fn should_generate_layer(history: &[LayerStats], config: &LayerGenConfig) -> Result<bool> {
    if history.is_empty() {
        return Err(Error::EmptyInput("layer statistics"));
    }
    if history.len() >= config.max_layers {
        return Ok(false);
    }
    let wd: f64 = history.iter().map(|s| config.alpha_wd * s.wd_total).sum();
    let energy: f64 = history.iter().map(|s| config.alpha_e * s.energy_total.abs()).sum();
    Ok(wd > config.theta_l1 && energy > config.theta_l2)
}

/// New layer on top of `parent`: visible size and visible bias come from the
/// parent's hidden layer, hidden bias starts at zero, weights `U(-0.01, 0.01)`.
pub fn spawn_child_rbm(parent: &RbmParams, child_hidden: usize, rng: &mut RngStream) -> Result<RbmParams> {
    if child_hidden == 0 {
        return Err(Error::InvalidArgument("child layer needs at least one hidden neuron"));
    }
    let visible = parent.hidden_count();
    let weights = Matrix::from_fn(visible, child_hidden, |_, _| rng.uniform_in(-0.01, 0.01));
    RbmParams::from_parts(parent.hidden_bias().to_vec(), vec![0.0; child_hidden], weights)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DbnTrainingLog {
    /// Per-layer adaptive training logs, bottom first.
    pub layers: Vec<TrainingLog>,
    pub stats: Vec<LayerStats>,
    /// Outcome of the layer-generation check after each layer.
    pub generate_decisions: Vec<bool>,
}

/// Greedy adaptive DBN training. The returned head has zero classes; call
/// [`train_head`] with labeled data afterwards.
pub fn train_adaptive_dbn<V: AsRef<[f64]>>(
    data: &[V],
    adaptive: &AdaptiveConfig,
    layer_config: &LayerGenConfig,
    train: &TrainingHyperparams,
    rng: &mut RngStream,
) -> Result<(DbnModel, DbnTrainingLog)> {
    layer_config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    let mut inputs: Vec<Vec<f64>> = data.iter().map(|v| v.as_ref().to_vec()).collect();
    let mut layers: Vec<RbmParams> = Vec::new();
    let mut log = DbnTrainingLog::default();

    let (mut params, mut layer_log) = adaptive::train_adaptive_rbm(&inputs, adaptive, train, rng)?;
    loop {
        let stats = LayerStats {
            layer: layers.len() + 1,
            wd_total: layer_log.final_wd,
            energy_total: layer_energy_total(&params, &inputs)?,
        };
        log.stats.push(stats);
        log.layers.push(layer_log);
        let grow = should_generate_layer(&log.stats, layer_config)?;
        log.generate_decisions.push(grow);
        log::info!(
            "layer {} trained: {} hidden, WD {:.3e}, energy {:.4}, grow {}",
            stats.layer,
            params.hidden_count(),
            stats.wd_total,
            stats.energy_total,
            grow
        );

        inputs = inputs
            .iter()
            .map(|x| rbm::hidden_conditional(&params, x))
            .collect::<Result<_>>()?;
        layers.push(params);
        if !grow {
            break;
        }
        let child = spawn_child_rbm(&layers[layers.len() - 1], train.initial_hidden, rng)?;
        (params, layer_log) = adaptive::train_adaptive_rbm_from(child, &inputs, adaptive, train, rng)?;
    }

    let top = layers[layers.len() - 1].hidden_count();
    let model = DbnModel::new(layers, ClassifierHead::zeros(top, 0), Vec::new())?;
    Ok((model, log))
}

/// Softmax regression on frozen top-layer activations, mini-batch gradient
/// descent on cross-entropy. A head with the wrong class count is replaced
/// by a zero head first; `epochs == 0` leaves the model untouched.
pub fn train_head(
    model: &mut DbnModel,
    data: &LabeledDataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("labeled data"));
    }
    if !(learning_rate > 0.0) || batch_size == 0 {
        return Err(Error::InvalidArgument("head learning rate and batch size must be positive"));
    }
    let classes = data.class_count();
    if let Some(&label) = data.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label,
            class_count: classes,
        });
    }
    let features: Vec<Vec<f64>> = data
        .samples()
        .iter()
        .map(|v| propagate(model, v).map(|mut acts| acts.pop().unwrap_or_default()))
        .collect::<Result<_>>()?;

    let mut head = if model.head.class_count() == classes {
        model.head.clone()
    } else {
        ClassifierHead::zeros(model.top_dim(), classes)
    };
    let mut order: Vec<usize> = (0..features.len()).collect();
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch_size) {
            let mut dw = Matrix::zeros(head.input_dim(), classes);
            let mut db = vec![0.0; classes];
            for &n in chunk {
                let x = &features[n];
                let mut err = math::softmax(&head.logits(x)?);
                err[data.labels()[n]] -= 1.0;
                for (i, &xi) in x.iter().enumerate() {
                    for (d, e) in dw.row_mut(i).iter_mut().zip(&err) {
                        *d += xi * e;
                    }
                }
                for (d, e) in db.iter_mut().zip(&err) {
                    *d += e;
                }
            }
            let step = learning_rate / chunk.len() as f64;
            for (w, d) in head.weights.as_mut_slice().iter_mut().zip(dw.as_slice()) {
                *w -= step * d;
            }
            for (b, d) in head.biases.iter_mut().zip(&db) {
                *b -= step * d;
            }
        }
    }
    if !head.weights.is_finite() {
        return Err(Error::NonFinite("classifier head"));
    }
    model.head = head;
    Ok(())
}

/// Label (lowest index on ties) and class probabilities, without rules.
pub fn classify(model: &DbnModel, v: &[f64]) -> Result<(usize, Vec<f64>)> {
    let acts = propagate(model, v)?;
    let probs = model.head.probabilities(&acts[acts.len() - 1])?;
    Ok((math::argmax(&probs), probs))
}

pub fn accuracy(model: &DbnModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("labeled data"));
    }
    let mut correct = 0usize;
    for (x, label) in data.iter() {
        if classify(model, x)?.0 == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_layer(nv: usize, nh: usize, rng: &mut RngStream) -> RbmParams {
        let b = (0..nv).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let c = (0..nh).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let w = Matrix::from_fn(nv, nh, |_, _| rng.uniform_in(-2.0, 2.0));
        RbmParams::from_parts(b, c, w).unwrap()
    }

    fn model_of(layers: Vec<RbmParams>, classes: usize) -> DbnModel {
        let top = layers.last().unwrap().hidden_count();
        DbnModel::new(layers, ClassifierHead::zeros(top, classes), Vec::new()).unwrap()
    }

    #[test]
    fn chaining_is_enforced() {
        let err = DbnModel::new(
            vec![RbmParams::zeros(4, 3), RbmParams::zeros(2, 2)],
            ClassifierHead::zeros(2, 2),
            Vec::new(),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(DbnModel::new(vec![RbmParams::zeros(4, 3)], ClassifierHead::zeros(2, 2), Vec::new()).is_err());
    }

    #[test]
    fn propagate_single_layer_is_hidden_conditional() {
        let mut rng = RngStream::new(1);
        let layer = random_layer(5, 3, &mut rng);
        let v = [1.0, 0.0, 0.3, 1.0, 0.0];
        let expected = rbm::hidden_conditional(&layer, &v).unwrap();
        let model = model_of(vec![layer], 2);
        assert_eq!(propagate(&model, &v).unwrap(), vec![expected]);
    }

    #[test]
    fn propagate_zero_model_is_half_everywhere() {
        let model = model_of(vec![RbmParams::zeros(4, 3), RbmParams::zeros(3, 5), RbmParams::zeros(5, 2)], 2);
        for layer in propagate(&model, &[1.0, 0.0, 1.0, 1.0]).unwrap() {
            assert!(layer.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn propagate_composes_conditionals() {
        let mut rng = RngStream::new(2);
        let a = random_layer(6, 4, &mut rng);
        let b = random_layer(4, 3, &mut rng);
        let v = [0.0, 1.0, 1.0, 0.0, 0.5, 1.0];
        let h1 = rbm::hidden_conditional(&a, &v).unwrap();
        let h2 = rbm::hidden_conditional(&b, &h1).unwrap();
        let model = model_of(vec![a, b], 2);
        assert_eq!(propagate(&model, &v).unwrap(), vec![h1, h2]);
        assert!(propagate(&model, &[1.0]).is_err());
    }

    #[test]
    fn layer_energy_cases() {
        let inputs = [vec![1.0, 0.0], vec![0.5, 1.0]];
        assert_eq!(layer_energy_total(&RbmParams::zeros(2, 2), &inputs).unwrap(), 0.0);

        // b = (1, -1), c = (0.5, 0), W = [[1, 0], [0, 2]], x = (1, 0):
        // h = (sigmoid(1.5), sigmoid(0)); E = -1 - 0.5·h0 - 1·h0.
        let p = RbmParams::from_parts(
            vec![1.0, -1.0],
            vec![0.5, 0.0],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let h0 = 1.0 / (1.0 + libm::exp(-1.5));
        let manual = -1.0 - 0.5 * h0 - h0;
        assert!((layer_energy_total(&p, &[vec![1.0, 0.0]]).unwrap() - manual).abs() < 1e-15);

        let scaled = RbmParams::from_parts(vec![0.0; 2], vec![0.0; 2], Matrix::zeros(2, 2)).unwrap();
        assert_eq!(layer_energy_total(&scaled, &[vec![1.0, 1.0]]).unwrap(), 0.0);
        let empty: [Vec<f64>; 0] = [];
        assert!(layer_energy_total(&p, &empty).is_err());
    }

    #[test]
    fn layer_generation_condition() {
        let config = LayerGenConfig {
            alpha_wd: 1.0,
            ..LayerGenConfig::default()
        };
        let stats = |wd, e| LayerStats {
            layer: 1,
            wd_total: wd,
            energy_total: e,
        };
        assert!(!should_generate_layer(&[stats(0.0, 10.0)], &config).unwrap());
        assert!(should_generate_layer(&[stats(0.06, 0.06)], &config).unwrap());
        assert!(should_generate_layer(&[stats(0.03, -0.03), stats(0.03, 0.03)], &config).unwrap());
        assert!(!should_generate_layer(&[stats(0.05, 0.06)], &config).unwrap());
        let capped = LayerGenConfig {
            max_layers: 2,
            ..config.clone()
        };
        assert!(!should_generate_layer(&[stats(1.0, 1.0), stats(1.0, 1.0)], &capped).unwrap());
        assert!(should_generate_layer(&[], &config).is_err());
    }

    #[test]
    fn child_inherits_parent_hidden_bias() {
        let mut rng = RngStream::new(3);
        let parent = random_layer(8, 10, &mut rng);
        let child = spawn_child_rbm(&parent, 4, &mut RngStream::new(5)).unwrap();
        assert_eq!(child.visible_count(), 10);
        assert_eq!(child.hidden_count(), 4);
        assert_eq!(child.visible_bias(), parent.hidden_bias());
        assert!(child.hidden_bias().iter().all(|&c| c == 0.0));
        assert_eq!(child, spawn_child_rbm(&parent, 4, &mut RngStream::new(5)).unwrap());
        assert!(spawn_child_rbm(&parent, 0, &mut rng).is_err());
    }

    #[test]
    fn classify_zero_head_ties_to_zero() {
        let model = model_of(vec![RbmParams::zeros(3, 2)], 4);
        let (label, probs) = classify(&model, &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(label, 0);
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn classify_dominant_row_and_softmax_oracle() {
        let layer = RbmParams::from_parts(vec![0.0; 2], vec![30.0, -30.0], Matrix::zeros(2, 2)).unwrap();
        let head = ClassifierHead::from_parts(
            Matrix::from_rows(&[vec![0.0, 0.0, 5.0], vec![3.0, 0.0, 0.0]]).unwrap(),
            vec![0.1, 0.2, -0.1],
        )
        .unwrap();
        let model = DbnModel::new(vec![layer], head, Vec::new()).unwrap();
        let (label, probs) = classify(&model, &[1.0, 1.0]).unwrap();
        assert_eq!(label, 2);

        let top = propagate(&model, &[1.0, 1.0]).unwrap().pop().unwrap();
        let z: Vec<f64> = (0..3)
            .map(|k| model.head().biases()[k] + (0..2).map(|i| top[i] * model.head().weights().get(i, k)).sum::<f64>())
            .collect();
        let denom: f64 = z.iter().map(|&x| libm::exp(x)).sum();
        for k in 0..3 {
            assert!((probs[k] - libm::exp(z[k]) / denom).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_outputs_normalize() {
        let mut rng = RngStream::new(4);
        let head = ClassifierHead::from_parts(Matrix::from_fn(5, 3, |_, _| rng.uniform_in(-4.0, 4.0)), vec![0.3, -0.2, 1.0]).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
            let s: f64 = head.probabilities(&x).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    fn separable_data() -> (DbnModel, LabeledDataset) {
        // Layer copies the input through saturated units, so top features are
        // the inputs themselves; class = which half of the vector is on.
        let mut w = Matrix::zeros(4, 4);
        for i in 0..4 {
            w.set(i, i, 20.0);
        }
        let layer = RbmParams::from_parts(vec![0.0; 4], vec![-10.0; 4], w).unwrap();
        let model = DbnModel::new(vec![layer], ClassifierHead::zeros(4, 2), Vec::new()).unwrap();
        let mut rng = RngStream::new(6);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for n in 0..200 {
            let label = n % 2;
            let mut x = vec![0.0; 4];
            for k in 0..2 {
                x[2 * label + k] = if rng.uniform() < 0.9 { 1.0 } else { 0.0 };
            }
            if x.iter().all(|&b| b == 0.0) {
                x[2 * label] = 1.0;
            }
            samples.push(x);
            labels.push(label);
        }
        (model, LabeledDataset::new(samples, labels, 2).unwrap())
    }

    #[test]
    fn head_learns_separable_features() {
        let (mut model, data) = separable_data();
        let layers_before = model.layers().to_vec();
        train_head(&mut model, &data, 200, 0.1, 100, &mut RngStream::new(1)).unwrap();
        assert!(accuracy(&model, &data).unwrap() >= 0.99);
        assert_eq!(model.layers(), &layers_before[..]);
    }

    #[test]
    fn head_training_edge_cases() {
        let (mut model, data) = separable_data();
        let before = model.clone();
        train_head(&mut model, &data, 0, 0.1, 100, &mut RngStream::new(1)).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn degenerate_dbn_thresholds() {
        let data = crate::dataset::bars_and_stripes(3, 60, &mut RngStream::new(1)).unwrap();
        let adaptive = AdaptiveConfig {
            generation_phase_epochs: 3,
            forgetting_phase_epochs: 2,
            final_phase_epochs: 1,
            ..AdaptiveConfig::default()
        };
        let train = TrainingHyperparams {
            initial_hidden: 4,
            batch_size: 20,
            ..TrainingHyperparams::default()
        };
        let always = LayerGenConfig {
            theta_l1: 0.0,
            theta_l2: 0.0,
            max_layers: 3,
            ..LayerGenConfig::default()
        };
        let (model, log) = train_adaptive_dbn(data.samples(), &adaptive, &always, &train, &mut RngStream::new(2)).unwrap();
        assert_eq!(model.layer_count(), 3);
        assert_eq!(log.generate_decisions, vec![true, true, false]);

        let never = LayerGenConfig {
            theta_l1: f64::INFINITY,
            ..always
        };
        let (model, _) = train_adaptive_dbn(data.samples(), &adaptive, &never, &train, &mut RngStream::new(2)).unwrap();
        assert_eq!(model.layer_count(), 1);

        let one = LayerGenConfig {
            max_layers: 1,
            theta_l1: 0.0,
            theta_l2: 0.0,
            ..LayerGenConfig::default()
        };
        let (model, _) = train_adaptive_dbn(data.samples(), &adaptive, &one, &train, &mut RngStream::new(2)).unwrap();
        let (single, _) = adaptive::train_adaptive_rbm(data.samples(), &adaptive, &train, &mut RngStream::new(2)).unwrap();
        assert_eq!(model.layers(), &[single]);
    }
}
