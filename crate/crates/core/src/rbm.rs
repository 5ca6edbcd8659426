//! Restricted Boltzmann Machine primitives.
//!
//! Energy `E(v, h) = -b·v - c·h - vᵀ W h`, joint `p(v, h) = exp(-E) / Z`.
//! Gradients are ascent directions on the mean log-likelihood of a batch.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{self, sigmoid, softplus};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Largest `visible + hidden` for which exact enumeration is allowed.
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    weights: Matrix,
}

/// A state over `{0, 1}`, stored as `f64` so it can be fed to any routine
/// that takes probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryVector(Vec<f64>);

impl BinaryVector {
    pub fn new(bits: Vec<f64>) -> Result<Self> {
        if bits.iter().any(|&b| b != 0.0 && b != 1.0) {
            return Err(Error::InvalidArgument("binary vector entries must be 0 or 1"));
        }
        Ok(Self(bits))
    }

    /// Bit `k` of `index` becomes entry `k`.
    pub fn from_index(index: u64, len: usize) -> Self {
        Self((0..len).map(|k| ((index >> k) & 1) as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for BinaryVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub db: Vec<f64>,
    pub dc: Vec<f64>,
    pub dw: Matrix,
}

impl GradientEstimate {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            db: vec![0.0; visible],
            dc: vec![0.0; hidden],
            dw: Matrix::zeros(visible, hidden),
        }
    }

    pub fn zeros_like(params: &RbmParams) -> Self {
        Self::zeros(params.visible_count(), params.hidden_count())
    }

    pub fn visible_count(&self) -> usize {
        self.db.len()
    }

    pub fn hidden_count(&self) -> usize {
        self.dc.len()
    }

    fn check_shape(&self, visible: usize, hidden: usize) -> Result<()> {
        check_len("gradient db", visible, self.db.len())?;
        check_len("gradient dc", hidden, self.dc.len())?;
        check_len("gradient dW rows", visible, self.dw.rows())?;
        check_len("gradient dW cols", hidden, self.dw.cols())
    }

    pub fn add_assign(&mut self, other: &GradientEstimate) -> Result<()> {
        other.check_shape(self.visible_count(), self.hidden_count())?;
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
        for (a, b) in self.dc.iter_mut().zip(&other.dc) {
            *a += b;
        }
        for (a, b) in self.dw.as_mut_slice().iter_mut().zip(other.dw.as_slice()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.db.iter_mut().for_each(|x| *x *= factor);
        self.dc.iter_mut().for_each(|x| *x *= factor);
        self.dw.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
    }

    fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.db
            .iter()
            .chain(&self.dc)
            .chain(self.dw.as_slice())
            .copied()
    }

    /// All components, in `b, c, W` (row-major) order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn norm_l2(&self) -> f64 {
        libm::sqrt(self.iter().map(|x| x * x).sum())
    }

    pub fn norm_inf(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest componentwise absolute difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &GradientEstimate) -> Result<f64> {
        other.check_shape(self.visible_count(), self.hidden_count())?;
        Ok(self
            .iter()
            .zip(other.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

impl RbmParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            visible_bias: vec![0.0; visible],
            hidden_bias: vec![0.0; hidden],
            weights: Matrix::zeros(visible, hidden),
        }
    }

    /// Biases zero, weights uniform in `(-0.01, 0.01)`.
    pub fn new_random(visible: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let weights = Matrix::from_fn(visible, hidden, |_, _| rng.uniform_in(-0.01, 0.01));
        Self {
            visible_bias: vec![0.0; visible],
            hidden_bias: vec![0.0; hidden],
            weights,
        }
    }

    pub fn from_parts(visible_bias: Vec<f64>, hidden_bias: Vec<f64>, weights: Matrix) -> Result<Self> {
        check_len("weight rows", visible_bias.len(), weights.rows())?;
        check_len("weight cols", hidden_bias.len(), weights.cols())?;
        let params = Self {
            visible_bias,
            hidden_bias,
            weights,
        };
        if !params.is_finite() {
            return Err(Error::NonFinite("RBM parameters"));
        }
        Ok(params)
    }

    #[inline]
    pub fn visible_count(&self) -> usize {
        self.visible_bias.len()
    }

    #[inline]
    pub fn hidden_count(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn visible_bias_mut(&mut self) -> &mut [f64] {
        &mut self.visible_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.as_mut_slice()
    }

    pub fn set_weight(&mut self, i: usize, j: usize, value: f64) {
        self.weights.set(i, j, value);
    }

    pub fn is_finite(&self) -> bool {
        self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
            && self.weights.is_finite()
    }

    /// Adds a hidden neuron at position `at` with the given weight column and bias.
    pub(crate) fn insert_hidden(&mut self, at: usize, column: &[f64], bias: f64) {
        self.weights.insert_column(at, column);
        self.hidden_bias.insert(at, bias);
    }

    pub(crate) fn remove_hidden(&mut self, remove: &[bool]) {
        self.weights.remove_columns(remove);
        let mut k = 0;
        self.hidden_bias.retain(|_| {
            let keep = !remove[k];
            k += 1;
            keep
        });
    }

    /// `θ ← θ + learning_rate · grad`. The update is all-or-nothing: a
    /// non-finite gradient or result leaves the parameters untouched.
    pub fn sgd_step(&mut self, grad: &GradientEstimate, learning_rate: f64) -> Result<()> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be positive and finite"));
        }
        grad.check_shape(self.visible_count(), self.hidden_count())?;
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let mut next = self.clone();
        for (p, g) in next.visible_bias.iter_mut().zip(&grad.db) {
            *p += learning_rate * g;
        }
        for (p, g) in next.hidden_bias.iter_mut().zip(&grad.dc) {
            *p += learning_rate * g;
        }
        for (p, g) in next.weights.as_mut_slice().iter_mut().zip(grad.dw.as_slice()) {
            *p += learning_rate * g;
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("updated parameters"));
        }
        *self = next;
        Ok(())
    }

    /// Pre-activations `c + Wᵀ v` of the hidden layer.
    fn hidden_input(&self, v: &[f64]) -> Vec<f64> {
        let mut x = self.weights.vec_mul(v);
        for (xj, cj) in x.iter_mut().zip(&self.hidden_bias) {
            *xj += cj;
        }
        x
    }

    fn check_enumerable(&self) -> Result<()> {
        let units = self.visible_count() + self.hidden_count();
        if units > ENUMERATION_LIMIT {
            return Err(Error::ModelTooLarge {
                units,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }
}

pub fn energy(params: &RbmParams, v: &[f64], h: &[f64]) -> Result<f64> {
    check_len("visible state", params.visible_count(), v.len())?;
    check_len("hidden state", params.hidden_count(), h.len())?;
    let visible_term = math::dot(params.visible_bias(), v);
    let hidden_term = math::dot(params.hidden_bias(), h);
    let interaction = math::dot(&params.weights.vec_mul(v), h);
    Ok(-visible_term - hidden_term - interaction)
}

/// Calls `f(v, h, -E(v, h))` for every state pair, visiting each `v` once
/// and all `h` beneath it.
fn for_each_state<F: FnMut(&[f64], &[f64], f64)>(params: &RbmParams, mut f: F) {
    let nv = params.visible_count();
    let nh = params.hidden_count();
    for vi in 0..(1u64 << nv) {
        let v = BinaryVector::from_index(vi, nv);
        let bv = math::dot(params.visible_bias(), v.as_slice());
        let a = params.hidden_input(v.as_slice());
        for hi in 0..(1u64 << nh) {
            let h = BinaryVector::from_index(hi, nh);
            let neg_energy = bv + math::dot(&a, h.as_slice());
            f(v.as_slice(), h.as_slice(), neg_energy);
        }
    }
}

/// `ln Z` by full enumeration of all `2^(I+J)` state pairs.
pub fn log_partition_exact(params: &RbmParams) -> Result<f64> {
    params.check_enumerable()?;
    // Streaming log-sum-exp.
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for_each_state(params, |_, _, x| {
        if x > max {
            sum = sum * libm::exp(max - x) + 1.0;
            max = x;
        } else {
            sum += libm::exp(x - max);
        }
    });
    Ok(max + libm::log(sum))
}

pub fn partition_function_exact(params: &RbmParams) -> Result<f64> {
    Ok(libm::exp(log_partition_exact(params)?))
}

pub fn joint_probability(params: &RbmParams, v: &BinaryVector, h: &BinaryVector) -> Result<f64> {
    let log_z = log_partition_exact(params)?;
    let e = energy(params, v.as_slice(), h.as_slice())?;
    Ok(libm::exp(-e - log_z))
}

/// `p(h_j = 1 | v) = sigmoid(c_j + Σ_i W_ij v_i)`.
pub fn hidden_conditional(params: &RbmParams, v: &[f64]) -> Result<Vec<f64>> {
    check_len("visible input", params.visible_count(), v.len())?;
    let mut x = params.hidden_input(v);
    x.iter_mut().for_each(|xj| *xj = sigmoid(*xj));
    Ok(x)
}

/// `p(v_i = 1 | h) = sigmoid(b_i + Σ_j W_ij h_j)`.
pub fn visible_conditional(params: &RbmParams, h: &[f64]) -> Result<Vec<f64>> {
    check_len("hidden input", params.hidden_count(), h.len())?;
    let mut x = params.weights.mul_vec(h);
    for (xi, bi) in x.iter_mut().zip(params.visible_bias()) {
        *xi = sigmoid(*xi + bi);
    }
    Ok(x)
}

fn sample(probs: &[f64], rng: &mut RngStream) -> Vec<f64> {
    probs.iter().map(|&p| rng.bernoulli(p)).collect()
}

fn accumulate(grad: &mut GradientEstimate, v: &[f64], h: &[f64], sign: f64) {
    for (d, &x) in grad.db.iter_mut().zip(v) {
        *d += sign * x;
    }
    for (d, &x) in grad.dc.iter_mut().zip(h) {
        *d += sign * x;
    }
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (d, &hj) in grad.dw.row_mut(i).iter_mut().zip(h) {
            *d += sign * vi * hj;
        }
    }
}

fn check_batch<V: AsRef<[f64]>>(params: &RbmParams, batch: &[V]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    for v in batch {
        check_len("visible input", params.visible_count(), v.as_ref().len())?;
    }
    Ok(())
}

/// CD-k estimate of the log-likelihood gradient, averaged over `batch`.
///
/// One chain starts at each batch vector. Visible states in the negative
/// phase are sampled; the final hidden statistics are probabilities.
pub fn cd_gradient<V: AsRef<[f64]>>(
    params: &RbmParams,
    batch: &[V],
    k: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    check_batch(params, batch)?;
    if k < 1 {
        return Err(Error::InvalidArgument("CD steps k must be at least 1"));
    }
    let mut grad = GradientEstimate::zeros_like(params);
    for v0 in batch {
        let v0 = v0.as_ref();
        let ph0 = hidden_conditional(params, v0)?;
        accumulate(&mut grad, v0, &ph0, 1.0);

        let mut h = sample(&ph0, rng);
        let mut v = Vec::new();
        let mut ph = Vec::new();
        for step in 0..k {
            let pv = visible_conditional(params, &h)?;
            v = sample(&pv, rng);
            ph = hidden_conditional(params, &v)?;
            if step + 1 < k {
                h = sample(&ph, rng);
            }
        }
        accumulate(&mut grad, &v, &ph, -1.0);
    }
    grad.scale(1.0 / batch.len() as f64);
    Ok(grad)
}

/// Exact gradient of the mean log-likelihood of `batch`, with the model
/// expectation computed by enumerating every state pair.
pub fn exact_loglik_gradient<V: AsRef<[f64]>>(params: &RbmParams, batch: &[V]) -> Result<GradientEstimate> {
    check_batch(params, batch)?;
    let log_z = log_partition_exact(params)?;

    let mut grad = GradientEstimate::zeros_like(params);
    for v in batch {
        let v = v.as_ref();
        let ph = hidden_conditional(params, v)?;
        accumulate(&mut grad, v, &ph, 1.0);
    }
    grad.scale(1.0 / batch.len() as f64);

    let mut model = GradientEstimate::zeros_like(params);
    for_each_state(params, |v, h, neg_energy| {
        let p = libm::exp(neg_energy - log_z);
        accumulate(&mut model, v, h, p);
    });
    model.scale(-1.0);
    grad.add_assign(&model)?;
    Ok(grad)
}

/// Mean `ln p(v)` over `batch`, hidden units marginalized in closed form.
pub fn log_likelihood_exact<V: AsRef<[f64]>>(params: &RbmParams, batch: &[V]) -> Result<f64> {
    check_batch(params, batch)?;
    let log_z = log_partition_exact(params)?;
    let total: f64 = batch
        .iter()
        .map(|v| {
            let v = v.as_ref();
            math::dot(params.visible_bias(), v)
                + params.hidden_input(v).into_iter().map(softplus).sum::<f64>()
                - log_z
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean squared difference between each input and its mean-field
/// reconstruction `p(v | p(h | v))`, averaged over samples and components.
pub fn reconstruction_error<V: AsRef<[f64]>>(params: &RbmParams, batch: &[V]) -> Result<f64> {
    check_batch(params, batch)?;
    let mut total = 0.0;
    for v in batch {
        let v = v.as_ref();
        let h = hidden_conditional(params, v)?;
        let r = visible_conditional(params, &h)?;
        total += v.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / (batch.len() * params.visible_count().max(1)) as f64)
}

/// Mean of `E(v, p(h | v))` over `inputs`, i.e. the energy with mean-field
/// hidden values.
pub fn mean_field_energy<V: AsRef<[f64]>>(params: &RbmParams, inputs: &[V]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("inputs"));
    }
    let mut total = 0.0;
    for v in inputs {
        let v = v.as_ref();
        let h = hidden_conditional(params, v)?;
        total += energy(params, v, &h)?;
    }
    Ok(total / inputs.len() as f64)
}
