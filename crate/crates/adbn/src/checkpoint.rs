//! Binary checkpoint container.
//!
//! ```text
//! "ADBN"  u32 version  u32 layers  u32 classes
//! per layer:  u64 visible  u64 hidden  [b] [c] [W row-major]
//! head:       [weights row-major, top × classes] [biases]
//! rules:      u32 count, per rule: u32 layer  u32 n  u32 antecedent[n]  u32 consequent
//! ```
//!
//! `[x]` is a u64 length followed by that many little-endian f64 values.
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use adbn_core::knowledge::Rule;
use adbn_core::{ClassifierHead, DbnModel, Matrix, RbmParams};

use crate::error::{AdbnError, Result};

pub const MAGIC: &[u8; 4] = b"ADBN";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_array(out: &mut Vec<u8>, values: &[f64]) {
    put_u64(out, values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &DbnModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, model.layer_count());
    put_u32(&mut out, model.head().class_count());
    for layer in model.layers() {
        put_u64(&mut out, layer.visible_count());
        put_u64(&mut out, layer.hidden_count());
        put_array(&mut out, layer.visible_bias());
        put_array(&mut out, layer.hidden_bias());
        put_array(&mut out, layer.weights().as_slice());
    }
    put_array(&mut out, model.head().weights().as_slice());
    put_array(&mut out, model.head().biases());
    put_u32(&mut out, model.rules().len());
    for rule in model.rules() {
        put_u32(&mut out, rule.layer());
        put_u32(&mut out, rule.antecedent().len());
        for &j in rule.antecedent() {
            put_u32(&mut out, j);
        }
        put_u32(&mut out, rule.consequent());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> AdbnError {
        AdbnError::format(self.path, self.pos as u64, message)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("unexpected end of file reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| AdbnError::format(self.path, at as u64, format!("{what} too large")))
    }

    fn array(&mut self, what: &str, expected: usize) -> Result<Vec<f64>> {
        let at = self.pos;
        let len = self.u64(what)?;
        if len != expected {
            return Err(AdbnError::format(
                self.path,
                at as u64,
                format!("{what} has length {len}, expected {expected}"),
            ));
        }
        let raw = self.take(len.checked_mul(8).ok_or_else(|| self.fail("length overflow"))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes a checkpoint. `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<DbnModel> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(AdbnError::format(path, 0, "bad magic: expected \"ADBN\""));
    }
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(AdbnError::format(
            path,
            4,
            format!("unsupported checkpoint version {version} (this build reads version {VERSION})"),
        ));
    }
    let layer_count = r.u32("layer count")?;
    let classes = r.u32("class count")?;
    let mut layers = Vec::with_capacity(layer_count.min(64));
    for _ in 0..layer_count {
        let at = r.pos;
        let visible = r.u64("visible count")?;
        let hidden = r.u64("hidden count")?;
        let b = r.array("visible bias", visible)?;
        let c = r.array("hidden bias", hidden)?;
        let w = r.array("weights", visible * hidden)?;
        let layer = Matrix::from_vec(visible, hidden, w)
            .and_then(|w| RbmParams::from_parts(b, c, w))
            .map_err(|e| AdbnError::format(path, at as u64, format!("invalid layer: {e}")))?;
        layers.push(layer);
    }
    let top = layers.last().map_or(0, RbmParams::hidden_count);
    let at = r.pos;
    let hw = r.array("head weights", top * classes)?;
    let hb = r.array("head biases", classes)?;
    let head = Matrix::from_vec(top, classes, hw)
        .and_then(|w| ClassifierHead::from_parts(w, hb))
        .map_err(|e| AdbnError::format(path, at as u64, format!("invalid head: {e}")))?;

    let rule_count = r.u32("rule count")?;
    let mut rules = Vec::new();
    for _ in 0..rule_count {
        let at = r.pos;
        let layer = r.u32("rule layer")?;
        let n = r.u32("antecedent size")?;
        let antecedent = (0..n).map(|_| r.u32("antecedent neuron")).collect::<Result<Vec<_>>>()?;
        let consequent = r.u32("consequent neuron")?;
        let rule = Rule::new(layer, antecedent, consequent)
            .map_err(|e| AdbnError::format(path, at as u64, format!("invalid rule: {e}")))?;
        rules.push(rule);
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    DbnModel::new(layers, head, rules).map_err(|e| AdbnError::format(path, 0, format!("inconsistent model: {e}")))
}

pub fn save(model: &DbnModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| AdbnError::io(path, e))
}

pub fn load(path: &Path) -> Result<DbnModel> {
    let bytes = fs::read(path).map_err(|e| AdbnError::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use adbn_core::RngStream;

    fn sample_model() -> DbnModel {
        let mut rng = RngStream::new(9);
        let l1 = RbmParams::new_random(5, 4, &mut rng);
        let l2 = RbmParams::new_random(4, 3, &mut rng);
        let head = ClassifierHead::from_parts(Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.1 - 0.2), vec![0.5, -1e-300])
            .unwrap();
        let rules = vec![Rule::new(1, vec![3, 0], 2).unwrap(), Rule::new(1, vec![1], 0).unwrap()];
        DbnModel::new(vec![l1, l2], head, rules).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let bytes = encode(&model);
        let back = decode(&bytes, Path::new("m.adbn")).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode(&back), bytes);
        assert_eq!(&bytes[..4], b"ADBN");
    }

    #[test]
    fn header_fields() {
        let bytes = encode(&sample_model());
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 5);
    }

    #[test]
    fn bad_magic_names_expected() {
        let mut bytes = encode(&sample_model());
        bytes[0] = b'X';
        let err = decode(&bytes, Path::new("m.adbn")).unwrap_err();
        assert!(err.to_string().contains("expected \"ADBN\""));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = encode(&sample_model());
        bytes[4] = 2;
        assert!(decode(&bytes, Path::new("m")).unwrap_err().to_string().contains("version 2"));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = encode(&sample_model());
        for cut in [3, 10, 40, bytes.len() - 1] {
            assert!(decode(&bytes[..cut], Path::new("m")).is_err());
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long, Path::new("m")).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn rules_outside_model_rejected() {
        let mut bytes = encode(&sample_model());
        let n = bytes.len();
        // Last u32 is the consequent of the final rule.
        bytes[n - 4..].copy_from_slice(&7u32.to_le_bytes());
        assert!(decode(&bytes, Path::new("m")).is_err());
    }
}
