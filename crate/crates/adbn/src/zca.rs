//! ZCA whitening followed by a min-max rescale into `[0, 1]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{AdbnError, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    mean: DVector<f64>,
    matrix: DMatrix<f64>,
    epsilon: f64,
}

fn to_matrix(samples: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = samples.iter().position(|s| s.len() != dim) {
        return Err(AdbnError::Data(format!(
            "sample {bad} has dimension {}, expected {dim}",
            samples[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(samples.len(), dim, |n, i| samples[n][i]))
}

impl ZcaTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `(x - mean) · W` for every sample.
    pub fn apply(&self, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let mut x = to_matrix(samples, self.dim())?;
        for mut row in x.row_iter_mut() {
            row -= self.mean.transpose();
        }
        let y = x * &self.matrix;
        Ok(y.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// Fits `W = U (Λ + εI)^{-1/2} Uᵀ` on the sample covariance (divisor `n - 1`).
pub fn fit_zca(samples: &[Vec<f64>], epsilon: f64) -> Result<ZcaTransform> {
    if samples.len() < 2 {
        return Err(AdbnError::Data("ZCA needs at least two samples".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AdbnError::Data(format!("ZCA epsilon must be positive, got {epsilon}")));
    }
    let n = samples.len();
    let dim = samples[0].len();
    let mut x = to_matrix(samples, dim)?;
    let mean = DVector::from_fn(dim, |i, _| x.column(i).mean());
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let scale = DVector::from_iterator(
        dim,
        eig.eigenvalues.iter().map(|&l| 1.0 / (l.max(0.0) + epsilon).sqrt()),
    );
    let u = &eig.eigenvectors;
    let mut w = u * DMatrix::from_diagonal(&scale) * u.transpose();
    let sym = (&w + w.transpose()) * 0.5;
    w = sym;
    Ok(ZcaTransform {
        mean,
        matrix: w,
        epsilon,
    })
}

/// Global affine map fitted on whitened training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMaxScale {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScale {
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &x in samples.iter().flatten() {
            min = min.min(x);
            max = max.max(x);
        }
        if !(min.is_finite() && max.is_finite()) {
            return Err(AdbnError::Data("cannot fit a rescale on empty or non-finite data".into()));
        }
        Ok(Self { min, max })
    }

    /// Maps into `[0, 1]`, clamping out-of-range values. Returns the number
    /// of clamped entries. A constant training range maps everything to 0.
    pub fn apply(&self, samples: &mut [Vec<f64>]) -> usize {
        let range = self.max - self.min;
        let mut clamped = 0;
        for x in samples.iter_mut().flatten() {
            let y = if range > 0.0 { (*x - self.min) / range } else { 0.0 };
            if !(0.0..=1.0).contains(&y) {
                clamped += 1;
            }
            *x = y.clamp(0.0, 1.0);
        }
        clamped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSplits {
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub scale: MinMaxScale,
    /// Test entries that fell outside the training range.
    pub test_clamped: usize,
}

/// Fits ZCA and the rescale on `train`, then applies both to each split.
pub fn whiten_splits(train: &[Vec<f64>], test: &[Vec<f64>], epsilon: f64) -> Result<WhitenedSplits> {
    let zca = fit_zca(train, epsilon)?;
    let mut train_w = zca.apply(train)?;
    let mut test_w = zca.apply(test)?;
    let scale = MinMaxScale::fit(&train_w)?;
    scale.apply(&mut train_w);
    let test_clamped = scale.apply(&mut test_w);
    if test_clamped > 0 {
        log::warn!("{test_clamped} whitened test values outside the training range were clamped");
    }
    Ok(WhitenedSplits {
        train: train_w,
        test: test_w,
        scale,
        test_clamped,
    })
}
