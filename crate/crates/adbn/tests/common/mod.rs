#![allow(dead_code)]

use std::fs;
use std::path::Path;

use adbn::cifar::{encode_records, IMAGE_BYTES, TEST_FILE, TRAIN_FILES};
use adbn_core::RngStream;

/// One synthetic CIFAR record: class `label` lights a horizontal band of
/// three rows in every channel, on top of uniform noise.
pub fn fixture_image(label: u8, rng: &mut RngStream) -> [u8; IMAGE_BYTES] {
    let mut image = [0u8; IMAGE_BYTES];
    for channel in 0..3 {
        for row in 0..32 {
            for col in 0..32 {
                let band = row / 3 == label as usize;
                let base = if band { 200.0 } else { 40.0 };
                let value = base + rng.uniform_in(-30.0, 30.0);
                image[channel * 1024 + row * 32 + col] = value as u8;
            }
        }
    }
    image
}

/// Writes the five training batches and the test batch into `dir`, with
/// `per_batch` training records per file and `test` test records.
pub fn write_cifar_fixture(dir: &Path, per_batch: usize, test: usize, seed: u64) {
    let mut rng = RngStream::new(seed);
    let batch = |n: usize, rng: &mut RngStream| {
        let records: Vec<(u8, [u8; IMAGE_BYTES])> = (0..n)
            .map(|k| {
                let label = (k % 10) as u8;
                (label, fixture_image(label, rng))
            })
            .collect();
        encode_records(&records)
    };
    for name in TRAIN_FILES {
        fs::write(dir.join(name), batch(per_batch, &mut rng)).unwrap();
    }
    fs::write(dir.join(TEST_FILE), batch(test, &mut rng)).unwrap();
}
