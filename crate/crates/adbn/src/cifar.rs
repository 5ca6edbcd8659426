//! CIFAR-10 binary batches.
//!
//! Each record is one label byte followed by 3072 pixel bytes laid out
//! channel-major (1024 red, 1024 green, 1024 blue, each row-major 32×32).

use std::fs;
use std::path::Path;

use adbn_core::LabeledDataset;

use crate::error::{AdbnError, Result};

pub const CLASS_COUNT: usize = 10;
pub const PIXELS: usize = 1024;
pub const IMAGE_BYTES: usize = 3 * PIXELS;
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CifarOptions {
    /// Average the three channels, giving 1024-dimensional samples.
    pub grayscale: bool,
    /// Keep only the first `n` training records (across batches, in order).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CifarSplits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Decodes up to `limit` records from one batch file already in memory.
/// Pixels are scaled to `[0, 1]` by `/255`.
pub fn parse_records(
    bytes: &[u8],
    path: &Path,
    limit: Option<usize>,
    grayscale: bool,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let whole = bytes.len() / RECORD_BYTES;
    let rest = bytes.len() % RECORD_BYTES;
    if rest != 0 {
        return Err(AdbnError::format(
            path,
            (whole * RECORD_BYTES) as u64,
            format!("truncated record: expected {RECORD_BYTES} bytes, found {rest}"),
        ));
    }
    let take = limit.map_or(whole, |l| l.min(whole));
    let mut samples = Vec::with_capacity(take);
    let mut labels = Vec::with_capacity(take);
    for (n, record) in bytes.chunks_exact(RECORD_BYTES).take(take).enumerate() {
        let label = record[0] as usize;
        if label >= CLASS_COUNT {
            return Err(AdbnError::format(
                path,
                (n * RECORD_BYTES) as u64,
                format!("label byte {label} outside 0..{CLASS_COUNT}"),
            ));
        }
        let pixels = &record[1..];
        let sample = if grayscale {
            (0..PIXELS)
                .map(|p| {
                    let sum = pixels[p] as f64 + pixels[PIXELS + p] as f64 + pixels[2 * PIXELS + p] as f64;
                    sum / (3.0 * 255.0)
                })
                .collect()
        } else {
            pixels.iter().map(|&b| b as f64 / 255.0).collect()
        };
        samples.push(sample);
        labels.push(label);
    }
    Ok((samples, labels))
}

pub fn read_batch(path: &Path, limit: Option<usize>, grayscale: bool) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| AdbnError::io(path, e))?;
    parse_records(&bytes, path, limit, grayscale)
}

fn read_files(dir: &Path, files: &[&str], limit: Option<usize>, grayscale: bool) -> Result<LabeledDataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let remaining = limit.map(|l| l - samples.len());
        if remaining == Some(0) {
            break;
        }
        let (s, l) = read_batch(&dir.join(name), remaining, grayscale)?;
        samples.extend(s);
        labels.extend(l);
    }
    Ok(LabeledDataset::new(samples, labels, CLASS_COUNT)?)
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path, options: &CifarOptions) -> Result<CifarSplits> {
    let train = read_files(dir, &TRAIN_FILES, options.train_limit, options.grayscale)?;
    let test = read_files(dir, &[TEST_FILE], options.test_limit, options.grayscale)?;
    log::info!("loaded CIFAR-10 from {}: {} train, {} test", dir.display(), train.len(), test.len());
    Ok(CifarSplits { train, test })
}

/// Encodes records in the distributed binary layout. Used to build fixtures.
pub fn encode_records(images: &[(u8, [u8; IMAGE_BYTES])]) -> Vec<u8> {
    let mut out = Vec::with_capacity(images.len() * RECORD_BYTES);
    for (label, pixels) in images {
        out.push(*label);
        out.extend_from_slice(pixels);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> (u8, [u8; IMAGE_BYTES]) {
        let mut px = [0u8; IMAGE_BYTES];
        for (k, p) in px.iter_mut().enumerate() {
            *p = fill(k);
        }
        (label, px)
    }

    #[test]
    fn decodes_channel_major_records() {
        let bytes = encode_records(&[record(3, |k| (k % 256) as u8), record(9, |_| 255)]);
        let (samples, labels) = parse_records(&bytes, Path::new("b.bin"), None, false).unwrap();
        assert_eq!(labels, vec![3, 9]);
        assert_eq!(samples[0].len(), IMAGE_BYTES);
        assert_eq!(samples[0][1], 1.0 / 255.0);
        assert!(samples[1].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn grayscale_averages_channels() {
        let bytes = encode_records(&[record(0, |k| match k / PIXELS {
            0 => 30,
            1 => 60,
            _ => 90,
        })]);
        let (samples, _) = parse_records(&bytes, Path::new("b.bin"), None, true).unwrap();
        assert_eq!(samples[0].len(), PIXELS);
        assert!(samples[0].iter().all(|&x| (x - 60.0 / 255.0).abs() < 1e-15));
    }

    #[test]
    fn truncation_names_offset() {
        let mut bytes = encode_records(&[record(1, |_| 0), record(2, |_| 0)]);
        bytes.truncate(RECORD_BYTES + 100);
        let err = parse_records(&bytes, Path::new("data_batch_1.bin"), None, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data_batch_1.bin"), "{msg}");
        assert!(msg.contains(&format!("offset {RECORD_BYTES}")), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn label_ten_is_rejected() {
        let bytes = encode_records(&[record(0, |_| 0), record(10, |_| 0)]);
        let err = parse_records(&bytes, Path::new("x.bin"), None, false).unwrap_err();
        assert!(err.to_string().contains("label byte 10"));
        assert!(err.to_string().contains(&format!("offset {RECORD_BYTES}")));
    }

    #[test]
    fn limit_stops_early() {
        let bytes = encode_records(&[record(0, |_| 0), record(1, |_| 0), record(2, |_| 0)]);
        let (_, labels) = parse_records(&bytes, Path::new("x.bin"), Some(2), false).unwrap();
        assert_eq!(labels, vec![0, 1]);
    }
}
