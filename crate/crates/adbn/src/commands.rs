//! The four subcommands as library functions. `main` only parses arguments
//! and prints the returned reports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use adbn_core::dataset::{bars_and_stripes, confusable_pair};
use adbn_core::dbn::{self, train_adaptive_dbn, train_head};
use adbn_core::knowledge::{self, build_path_graph, evaluate_with_rules, mine_rules, FiringTrace, Rule, RuleEvaluation};
use adbn_core::{DbnModel, DbnTrainingLog, LabeledDataset, RngStream};
use rayon::prelude::*;

use crate::cifar::{load_cifar10, CifarOptions};
use crate::config::{DatasetSpec, ExperimentConfig};
use crate::error::{AdbnError, Result};
use crate::zca::{fit_zca, MinMaxScale};
use crate::{checkpoint, formats};

pub const CHECKPOINT_FILE: &str = "model.adbn";
pub const RULES_CHECKPOINT_FILE: &str = "model_rules.adbn";
pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const RULES_FILE: &str = "rules.txt";

// Independent streams derived from the config seed.
const DATA_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const HEAD_STREAM: u64 = 3;

#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
    /// Whitened validation/test values clamped into `[0, 1]`.
    pub clamped: usize,
}

impl DataSplits {
    pub fn get(&self, name: &str) -> Result<&LabeledDataset> {
        match name {
            "train" => Ok(&self.train),
            "validation" => Ok(&self.validation),
            "test" => Ok(&self.test),
            other => Err(AdbnError::Usage(format!(
                "unknown split {other:?} (expected train, validation or test)"
            ))),
        }
    }
}

fn split_counts(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

fn split_pool(pool: &LabeledDataset, config: &ExperimentConfig, rng: &mut RngStream) -> DataSplits {
    let n = pool.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_val = split_counts(n, config.validation_fraction);
    let n_test = split_counts(n, config.test_fraction);
    let n_train = n - n_val - n_test;
    DataSplits {
        train: pool.subset(&order[..n_train]),
        validation: pool.subset(&order[n_train..n_train + n_val]),
        test: pool.subset(&order[n_train + n_val..]),
        clamped: 0,
    }
}

/// Builds train/validation/test splits for the configured dataset.
pub fn resolve_data(config: &ExperimentConfig) -> Result<DataSplits> {
    let mut rng = RngStream::new(config.seed).split(DATA_STREAM);
    let splits = match &config.dataset {
        DatasetSpec::BarsAndStripes { size, count } => {
            let pool = bars_and_stripes(*size, *count, &mut rng)?;
            split_pool(&pool, config, &mut rng)
        }
        DatasetSpec::ConfusablePair { dim, count, overlap } => {
            let pool = confusable_pair(*dim, *count, *overlap, &mut rng)?;
            split_pool(&pool, config, &mut rng)
        }
        DatasetSpec::Csv { path } => {
            let file = fs::File::open(path).map_err(|e| AdbnError::io(path, e))?;
            let pool = formats::read_dataset_csv(std::io::BufReader::new(file), path)?;
            split_pool(&pool, config, &mut rng)
        }
        DatasetSpec::Cifar10 {
            path,
            grayscale,
            train_limit,
            test_limit,
            zca,
            zca_epsilon,
        } => {
            let options = CifarOptions {
                grayscale: *grayscale,
                train_limit: *train_limit,
                test_limit: *test_limit,
            };
            let raw = load_cifar10(path, &options)?;
            let n = raw.train.len();
            let n_val = split_counts(n, config.validation_fraction);
            let (train, validation) = raw.train.split_at(n - n_val);
            if *zca {
                whiten(train, validation, raw.test, *zca_epsilon)?
            } else {
                DataSplits {
                    train,
                    validation,
                    test: raw.test,
                    clamped: 0,
                }
            }
        }
    };
    if splits.train.is_empty() {
        return Err(AdbnError::Data("training split is empty".into()));
    }
    Ok(splits)
}

fn whiten(train: LabeledDataset, validation: LabeledDataset, test: LabeledDataset, epsilon: f64) -> Result<DataSplits> {
    let zca = fit_zca(train.samples(), epsilon)?;
    let mut tr = zca.apply(train.samples())?;
    let mut va = zca.apply(validation.samples())?;
    let mut te = zca.apply(test.samples())?;
    let scale = MinMaxScale::fit(&tr)?;
    scale.apply(&mut tr);
    let clamped = scale.apply(&mut va) + scale.apply(&mut te);
    if clamped > 0 {
        log::warn!("clamped {clamped} whitened validation/test values into [0, 1]");
    }
    let rebuild = |samples, d: &LabeledDataset| LabeledDataset::new(samples, d.labels().to_vec(), d.class_count());
    Ok(DataSplits {
        train: rebuild(tr, &train)?,
        validation: rebuild(va, &validation)?,
        test: rebuild(te, &test)?,
        clamped,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AdbnError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| AdbnError::io(path, e))
}

fn check_compatible(model: &DbnModel, data: &LabeledDataset) -> Result<()> {
    if model.input_dim() != data.dim() {
        return Err(AdbnError::Data(format!(
            "checkpoint expects inputs of dimension {}, dataset has {}",
            model.input_dim(),
            data.dim()
        )));
    }
    if model.head().class_count() < data.class_count() {
        return Err(AdbnError::Data(format!(
            "checkpoint head has {} classes, dataset has {}",
            model.head().class_count(),
            data.class_count()
        )));
    }
    Ok(())
}

fn accuracy_or_none(model: &DbnModel, data: &LabeledDataset) -> Result<Option<f64>> {
    if data.is_empty() {
        Ok(None)
    } else {
        Ok(Some(dbn::accuracy(model, data)?))
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub out: PathBuf,
    pub checkpoint: PathBuf,
    pub layer_sizes: Vec<usize>,
    pub log: DbnTrainingLog,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

fn pct(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".to_string(), |a| format!("{:.2}%", 100.0 * a))
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "layers: {}", self.log.stats.len())?;
        for (k, (stats, size)) in self.log.stats.iter().zip(&self.layer_sizes).enumerate() {
            let layer_log = &self.log.layers[k];
            writeln!(
                f,
                "layer {}: hidden {size}, generated {}, annihilated {}, WD {:.6e}, energy {:.6}",
                stats.layer,
                layer_log.generation_count(),
                layer_log.annihilation_count(),
                stats.wd_total,
                stats.energy_total
            )?;
        }
        writeln!(f, "train accuracy: {}", pct(Some(self.train_accuracy)))?;
        writeln!(f, "validation accuracy: {}", pct(self.validation_accuracy))?;
        writeln!(f, "test accuracy: {}", pct(self.test_accuracy))?;
        writeln!(f, "checkpoint: {}", self.checkpoint.display())
    }
}

/// Trains the adaptive DBN and its head, then writes the run directory:
/// config snapshot, checkpoint, one CSV log per layer and a summary.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainReport> {
    config.validate()?;
    let data = resolve_data(config)?;
    let out = config.out.clone();
    create_dir(&out)?;
    write_file(&out.join(CONFIG_FILE), config.to_text())?;

    let mut rng = RngStream::new(config.seed).split(TRAIN_STREAM);
    let (mut model, log) = train_adaptive_dbn(data.train.samples(), &config.adaptive, &config.layers, &config.train, &mut rng)?;
    let mut head_rng = RngStream::new(config.seed).split(HEAD_STREAM);
    train_head(
        &mut model,
        &data.train,
        config.head_epochs,
        config.head_learning_rate,
        config.head_batch_size,
        &mut head_rng,
    )?;

    let checkpoint_path = out.join(CHECKPOINT_FILE);
    checkpoint::save(&model, &checkpoint_path)?;
    for (k, layer_log) in log.layers.iter().enumerate() {
        let path = out.join(format!("layer{}_log.csv", k + 1));
        let file = fs::File::create(&path).map_err(|e| AdbnError::io(&path, e))?;
        formats::write_training_log(std::io::BufWriter::new(file), layer_log, &path)?;
    }
    let report = TrainReport {
        out: out.clone(),
        checkpoint: checkpoint_path,
        layer_sizes: model.layer_sizes(),
        train_accuracy: dbn::accuracy(&model, &data.train)?,
        validation_accuracy: accuracy_or_none(&model, &data.validation)?,
        test_accuracy: accuracy_or_none(&model, &data.test)?,
        log,
    };
    write_file(&out.join(SUMMARY_FILE), report.to_string())?;
    Ok(report)
}

/// Config for a command that starts from a checkpoint: the given file, or
/// the snapshot saved next to the checkpoint.
pub fn config_for_checkpoint(config: Option<&Path>, checkpoint: &Path) -> Result<ExperimentConfig> {
    if let Err(e) = fs::metadata(checkpoint) {
        return Err(AdbnError::io(checkpoint, e));
    }
    let path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE),
    };
    ExperimentConfig::load(&path)
}

fn format_confusion(f: &mut fmt::Formatter<'_>, m: &[Vec<usize>]) -> fmt::Result {
    write!(f, "    true\\pred")?;
    for k in 0..m.len() {
        write!(f, " {k:>6}")?;
    }
    writeln!(f)?;
    for (k, row) in m.iter().enumerate() {
        write!(f, "    {k:>9}")?;
        for v in row {
            write!(f, " {v:>6}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub with_rules: bool,
    pub rule_count: usize,
    pub splits: Vec<(String, RuleEvaluation)>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, e) in &self.splits {
            if self.with_rules {
                writeln!(
                    f,
                    "{name}: without rules {:.2}%  with {} rules {:.2}%",
                    100.0 * e.accuracy_without,
                    self.rule_count,
                    100.0 * e.accuracy_with
                )?;
                writeln!(f, "  confusion without rules:")?;
                format_confusion(f, &e.confusion_without)?;
                writeln!(f, "  confusion with rules:")?;
                format_confusion(f, &e.confusion_with)?;
            } else {
                writeln!(f, "{name}: accuracy {:.2}%", 100.0 * e.accuracy_without)?;
                format_confusion(f, &e.confusion_without)?;
            }
        }
        Ok(())
    }
}

/// Train and test accuracy with confusion matrices; with `with_rules`, the
/// embedded rules are compared against the plain forward pass.
pub fn cmd_eval(checkpoint_path: &Path, config: &ExperimentConfig, with_rules: bool) -> Result<EvalReport> {
    let model = checkpoint::load(checkpoint_path)?;
    let data = resolve_data(config)?;
    let rules: &[Rule] = if with_rules { model.rules() } else { &[] };
    let mut splits = Vec::new();
    for name in ["train", "test"] {
        let split = data.get(name)?;
        if split.is_empty() {
            continue;
        }
        check_compatible(&model, split)?;
        splits.push((name.to_string(), evaluate_with_rules(&model, rules, split, config.mining.theta_fire)?));
    }
    Ok(EvalReport {
        with_rules,
        rule_count: rules.len(),
        splits,
    })
}

#[derive(Debug, Clone)]
pub struct TraceGraph {
    pub name: String,
    pub samples: usize,
    pub nodes: usize,
    pub edges: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub graphs: Vec<TraceGraph>,
}

impl fmt::Display for TraceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.graphs {
            write!(
                f,
                "{}: {} samples, {} nodes, {} edges -> {}",
                g.name,
                g.samples,
                g.nodes,
                g.edges,
                g.path.display()
            )?;
            if g.samples == 0 {
                write!(f, " (no matching samples; graph is empty)")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn traces_for(model: &DbnModel, data: &LabeledDataset, theta_fire: f64) -> Result<Vec<FiringTrace>> {
    let items: Vec<(&[f64], usize)> = data.iter().collect();
    items
        .par_iter()
        .map(|&(x, label)| {
            let mut t = knowledge::fire_trace(model, x, theta_fire)?;
            t.true_label = Some(label);
            Ok(t)
        })
        .collect()
}

fn check_pair(data: &LabeledDataset, (a, b): (usize, usize)) -> Result<()> {
    let counts = data.class_counts();
    for c in [a, b] {
        if counts.get(c).copied().unwrap_or(0) == 0 {
            return Err(AdbnError::Data(format!("class {c} does not occur in the selected split")));
        }
    }
    if a == b {
        return Err(AdbnError::Usage("class pair must name two different classes".into()));
    }
    Ok(())
}

/// Writes the four path graphs for a class pair: correct A, A read as B,
/// correct B, B read as A.
pub fn cmd_trace(
    checkpoint_path: &Path,
    config: &ExperimentConfig,
    classes: (usize, usize),
    split: &str,
    out: &Path,
) -> Result<TraceReport> {
    let model = checkpoint::load(checkpoint_path)?;
    let data = resolve_data(config)?;
    let data = data.get(split)?;
    check_compatible(&model, data)?;
    check_pair(data, classes)?;
    create_dir(out)?;
    let traces = traces_for(&model, data, config.mining.theta_fire)?;
    let (a, b) = classes;
    let cases = [
        (format!("correct_{a}"), a, a),
        (format!("wrong_{a}_as_{b}"), a, b),
        (format!("correct_{b}"), b, b),
        (format!("wrong_{b}_as_{a}"), b, a),
    ];
    let mut graphs = Vec::new();
    for (name, truth, predicted) in cases {
        let selected: Vec<FiringTrace> = traces
            .iter()
            .filter(|t| t.true_label == Some(truth) && t.predicted == Some(predicted))
            .cloned()
            .collect();
        let graph = if selected.is_empty() {
            Default::default()
        } else {
            build_path_graph(&model, &selected)?
        };
        let path = out.join(format!("{name}.dot"));
        write_file(&path, formats::path_graph_to_dot(&graph, &name))?;
        graphs.push(TraceGraph {
            name,
            samples: selected.len(),
            nodes: graph.nodes.len(),
            edges: graph.edges.len(),
            path,
        });
    }
    Ok(TraceReport { graphs })
}

#[derive(Debug, Clone)]
pub struct RulesReport {
    pub rules: Vec<Rule>,
    pub evaluation: RuleEvaluation,
    pub rules_path: PathBuf,
    pub checkpoint: PathBuf,
}

impl fmt::Display for RulesReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mined {} rules", self.rules.len())?;
        for rule in &self.rules {
            writeln!(f, "  {rule}")?;
        }
        writeln!(
            f,
            "validation accuracy: before {:.2}%  after {:.2}%",
            100.0 * self.evaluation.accuracy_without,
            100.0 * self.evaluation.accuracy_with
        )?;
        writeln!(f, "rules: {}", self.rules_path.display())?;
        writeln!(f, "checkpoint: {}", self.checkpoint.display())
    }
}

/// Mines rules on the validation split, writes them as text and embeds them
/// in a new checkpoint.
pub fn cmd_rules(checkpoint_path: &Path, config: &ExperimentConfig, classes: (usize, usize), out: &Path) -> Result<RulesReport> {
    let mut model = checkpoint::load(checkpoint_path)?;
    let data = resolve_data(config)?;
    let validation = &data.validation;
    if validation.is_empty() {
        return Err(AdbnError::Data("validation split is empty; set split.validation".into()));
    }
    check_compatible(&model, validation)?;
    check_pair(validation, classes)?;
    create_dir(out)?;
    let rules = mine_rules(&model, validation, classes, &config.mining)?;
    let evaluation = evaluate_with_rules(&model, &rules, validation, config.mining.theta_fire)?;
    let rules_path = out.join(RULES_FILE);
    write_file(&rules_path, formats::format_rules(&rules))?;
    model.set_rules(rules.clone())?;
    let checkpoint = out.join(RULES_CHECKPOINT_FILE);
    checkpoint::save(&model, &checkpoint)?;
    Ok(RulesReport {
        rules,
        evaluation,
        rules_path,
        checkpoint,
    })
}
