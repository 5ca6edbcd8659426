//! Text formats: per-epoch training CSV, rules text, DOT path graphs and the
//! synthetic dataset CSV.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use adbn_core::knowledge::{PathGraph, Rule};
use adbn_core::{LabeledDataset, TrainingLog};

use crate::error::{AdbnError, Result};

pub const TRAINING_LOG_HEADER: [&str; 7] = ["epoch", "hidden_count", "recon_error", "mean_energy", "wd_c", "wd_W", "event"];

fn csv_error(path: &Path, e: csv::Error) -> AdbnError {
    let offset = e.position().map_or(0, |p| p.byte());
    AdbnError::format(path, offset, e.to_string())
}

/// One row per epoch; structural events of the epoch joined with `"; "`.
pub fn write_training_log<W: Write>(out: W, log: &TrainingLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_LOG_HEADER).map_err(|e| csv_error(path, e))?;
    for r in &log.records {
        let events = r.events.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        w.write_record([
            r.epoch.to_string(),
            r.hidden_count.to_string(),
            r.recon_error.to_string(),
            r.mean_energy.to_string(),
            r.wd_c.to_string(),
            r.wd_w.to_string(),
            events,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AdbnError::io(path, e))
}

pub fn format_rules(rules: &[Rule]) -> String {
    let mut s = String::new();
    for rule in rules {
        let _ = writeln!(s, "{rule}");
    }
    s
}

fn parse_index(text: &str, line: usize) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| AdbnError::Data(format!("rules line {line}: bad neuron index {text:?}")))
}

fn parse_layer_ref(text: &str, line: usize) -> Result<(usize, &str)> {
    let rest = text
        .strip_prefix('L')
        .ok_or_else(|| AdbnError::Data(format!("rules line {line}: expected L<layer>, found {text:?}")))?;
    let (layer, tail) = rest
        .split_once(':')
        .ok_or_else(|| AdbnError::Data(format!("rules line {line}: missing ':' after layer")))?;
    Ok((parse_index(layer, line)?, tail))
}

/// Parses one `IF L<l>:[j1,...] THEN INACTIVATE L<l+1>:<j>` line.
pub fn parse_rule(text: &str, line: usize) -> Result<Rule> {
    let bad = |m: &str| AdbnError::Data(format!("rules line {line}: {m}"));
    let body = text.trim().strip_prefix("IF ").ok_or_else(|| bad("must start with \"IF \""))?;
    let (lhs, rhs) = body
        .split_once(" THEN INACTIVATE ")
        .ok_or_else(|| bad("missing \" THEN INACTIVATE \""))?;
    let (layer, list) = parse_layer_ref(lhs, line)?;
    let inner = list
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| bad("antecedent must be a [..] list"))?;
    let antecedent = inner.split(',').map(|t| parse_index(t, line)).collect::<Result<Vec<_>>>()?;
    let (next, consequent) = parse_layer_ref(rhs, line)?;
    if next != layer + 1 {
        return Err(bad("consequent layer must follow the antecedent layer"));
    }
    Ok(Rule::new(layer, antecedent, parse_index(consequent, line)?)?)
}

/// Blank lines and lines starting with `#` are skipped.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| parse_rule(l, n + 1))
        .collect()
}

pub fn path_graph_to_dot(graph: &PathGraph, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph \"{}\" {{", name.replace('"', "'"));
    let _ = writeln!(s, "  rankdir=BT;");
    for ((layer, j), count) in &graph.nodes {
        let _ = writeln!(s, "  L{layer}_{j} [label=\"L{layer}:{j}\", count={count}];");
    }
    for e in &graph.edges {
        let _ = writeln!(
            s,
            "  L{}_{} -> L{}_{} [penwidth={}, weight=\"{}\", count={}];",
            e.from.0, e.from.1, e.to.0, e.to.1, e.strength, e.weight, e.count
        );
    }
    s.push_str("}\n");
    s
}

/// First record `d,class_count`, then one `label,v1,...,vd` row per sample.
pub fn write_dataset_csv<W: Write>(out: W, data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([data.dim().to_string(), data.class_count().to_string()])
        .map_err(|e| csv_error(path, e))?;
    for (x, label) in data.iter() {
        let mut row = Vec::with_capacity(x.len() + 1);
        row.push(label.to_string());
        row.extend(x.iter().map(ToString::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AdbnError::io(path, e))
}

pub fn read_dataset_csv<R: Read>(input: R, path: &Path) -> Result<LabeledDataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| AdbnError::format(path, 0, "empty dataset file"))?
        .map_err(|e| csv_error(path, e))?;
    let field = |rec: &csv::StringRecord, k: usize, what: &str| -> Result<usize> {
        let offset = rec.position().map_or(0, |p| p.byte());
        rec.get(k)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| AdbnError::format(path, offset, format!("expected integer {what}")))
    };
    if header.len() != 2 {
        return Err(AdbnError::format(path, 0, "header must be `d,class_count`"));
    }
    let dim = field(&header, 0, "dimension")?;
    let classes = field(&header, 1, "class count")?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        if rec.len() != dim + 1 {
            return Err(AdbnError::format(
                path,
                offset,
                format!("row has {} fields, expected {}", rec.len(), dim + 1),
            ));
        }
        labels.push(field(&rec, 0, "label")?);
        let values = rec
            .iter()
            .skip(1)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| AdbnError::format(path, offset, format!("bad value: {e}")))?;
        samples.push(values);
    }
    LabeledDataset::new(samples, labels, classes)
        .map_err(|e| AdbnError::format(path, 0, format!("invalid dataset: {e}")))
}
