//! Labeled datasets over `[0, 1]^d` and the synthetic desk-scale generators.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_count: usize,
    dim: usize,
}

impl LabeledDataset {
    /// Validates lengths, labels and the `[0, 1]` value range.
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        check_len("labels", samples.len(), labels.len())?;
        let dim = samples.first().map_or(0, Vec::len);
        for s in &samples {
            check_len("sample", dim, s.len())?;
            if let Some(&value) = s.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::ValueOutOfRange { what: "sample", value });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, class_count });
        }
        Ok(Self {
            samples,
            labels,
            class_count,
            dim,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.samples.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    /// First `at` samples and the rest.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.len());
        let head = Self {
            samples: self.samples[..at].to_vec(),
            labels: self.labels[..at].to_vec(),
            class_count: self.class_count,
            dim: self.dim,
        };
        let tail = Self {
            samples: self.samples[at..].to_vec(),
            labels: self.labels[at..].to_vec(),
            class_count: self.class_count,
            dim: self.dim,
        };
        (head, tail)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            dim: self.dim,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// `n × n` images that are either horizontal bars (label 0: every row
/// uniformly on or off) or vertical stripes (label 1: every column uniformly
/// on or off). The all-off and all-on images satisfy both definitions and
/// carry whichever label the generator branch chose.
pub fn bars_and_stripes(n: usize, count: usize, rng: &mut RngStream) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("bars-and-stripes size must be at least 2"));
    }
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let stripes = rng.bernoulli(0.5) == 1.0;
        let mask: Vec<f64> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        let image = (0..n * n)
            .map(|k| if stripes { mask[k % n] } else { mask[k / n] })
            .collect();
        samples.push(image);
        labels.push(usize::from(stripes));
    }
    LabeledDataset::new(samples, labels, 2)
}

/// Fraction of input bits active in each class template.
pub const CONFUSABLE_ACTIVE_FRACTION: f64 = 0.25;
/// Per-bit flip probability applied to every sample.
pub const CONFUSABLE_NOISE: f64 = 0.05;

/// Two prototype binary templates with `round(dim · 0.25)` active bits each,
/// of which `round(overlap · active)` are shared. Samples flip every bit with
/// probability 0.05. Labels alternate 0, 1, 0, … so both classes are balanced.
pub fn confusable_pair(dim: usize, count: usize, overlap: f64, rng: &mut RngStream) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::InvalidArgument("overlap must lie in [0, 1]"));
    }
    let active = libm::round(dim as f64 * CONFUSABLE_ACTIVE_FRACTION) as usize;
    if active == 0 {
        return Err(Error::InvalidArgument("dimension too small for confusable templates"));
    }
    let shared = libm::round(overlap * active as f64) as usize;
    let own = active - shared;

    let mut positions: Vec<usize> = (0..dim).collect();
    rng.shuffle(&mut positions);
    let mut templates = [vec![0.0; dim], vec![0.0; dim]];
    for &p in &positions[..shared] {
        templates[0][p] = 1.0;
        templates[1][p] = 1.0;
    }
    for &p in &positions[shared..shared + own] {
        templates[0][p] = 1.0;
    }
    for &p in &positions[shared + own..shared + 2 * own] {
        templates[1][p] = 1.0;
    }

    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for n in 0..count {
        let label = n % 2;
        let sample = templates[label]
            .iter()
            .map(|&bit| if rng.bernoulli(CONFUSABLE_NOISE) == 1.0 { 1.0 - bit } else { bit })
            .collect();
        samples.push(sample);
        labels.push(label);
    }
    LabeledDataset::new(samples, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn is_bars(img: &[f64], n: usize) -> bool {
        (0..n).all(|r| (0..n).all(|c| img[r * n + c] == img[r * n]))
    }

    fn is_stripes(img: &[f64], n: usize) -> bool {
        (0..n).all(|c| (0..n).all(|r| img[r * n + c] == img[c]))
    }

    #[test]
    fn two_by_two_patterns_match_enumeration() {
        // Enumerate all 16 images and keep those satisfying a definition.
        let mut valid = BTreeSet::new();
        let mut valid_labeled = BTreeSet::new();
        for bits in 0u32..16 {
            let img: Vec<f64> = (0..4).map(|k| ((bits >> k) & 1) as f64).collect();
            if is_bars(&img, 2) {
                valid.insert(bits);
                valid_labeled.insert((bits, 0usize));
            }
            if is_stripes(&img, 2) {
                valid.insert(bits);
                valid_labeled.insert((bits, 1usize));
            }
        }
        assert_eq!(valid.len(), 6);
        assert_eq!(valid_labeled.len(), 8);

        let data = bars_and_stripes(2, 2000, &mut RngStream::new(1)).unwrap();
        let mut seen = BTreeSet::new();
        for (img, label) in data.iter() {
            let bits = img.iter().enumerate().map(|(k, &x)| (x as u32) << k).sum::<u32>();
            assert!(valid_labeled.contains(&(bits, label)));
            seen.insert((bits, label));
        }
        assert_eq!(seen, valid_labeled);
    }

    #[test]
    fn generator_labels_follow_branch() {
        let data = bars_and_stripes(4, 500, &mut RngStream::new(2)).unwrap();
        for (img, label) in data.iter() {
            if label == 0 {
                assert!(is_bars(img, 4));
            } else {
                assert!(is_stripes(img, 4));
            }
        }
        assert!(bars_and_stripes(1, 5, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn generators_are_pure_in_seed() {
        assert_eq!(
            bars_and_stripes(4, 50, &mut RngStream::new(3)).unwrap(),
            bars_and_stripes(4, 50, &mut RngStream::new(3)).unwrap()
        );
        assert_eq!(
            confusable_pair(32, 50, 0.5, &mut RngStream::new(3)).unwrap(),
            confusable_pair(32, 50, 0.5, &mut RngStream::new(3)).unwrap()
        );
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![vec![0.5, 1.2]], vec![0], 2).is_err());
        assert!(LabeledDataset::new(vec![vec![0.5, 1.0]], vec![2], 2).is_err());
        assert!(LabeledDataset::new(vec![vec![0.5], vec![0.1, 0.2]], vec![0, 1], 2).is_err());
        let d = LabeledDataset::new(vec![vec![0.5], vec![0.1]], vec![0, 1], 2).unwrap();
        let (a, b) = d.split_at(1);
        assert_eq!(a.labels(), &[0]);
        assert_eq!(b.samples(), &[vec![0.1]]);
    }

    #[test]
    fn confusable_overlap_one_is_identical_templates() {
        let d = confusable_pair(64, 4000, 1.0, &mut RngStream::new(5)).unwrap();
        let mut mean = [vec![0.0; 64], vec![0.0; 64]];
        for (x, l) in d.iter() {
            for (m, v) in mean[l].iter_mut().zip(x) {
                *m += v / 2000.0;
            }
        }
        for k in 0..64 {
            assert!((mean[0][k] - mean[1][k]).abs() < 0.05);
        }
        assert!(confusable_pair(64, 10, 1.5, &mut RngStream::new(5)).is_err());
    }
}
