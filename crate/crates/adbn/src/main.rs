use std::path::PathBuf;
use std::process::ExitCode;

use adbn::commands::{self, cmd_eval, cmd_rules, cmd_trace, cmd_train};
use adbn::config::parse_class_pair;
use adbn::{AdbnError, ExperimentConfig, Result};
use clap::{Args, Parser, Subcommand};

/// Adaptive structural learning for RBM/DBN with rule extraction.
#[derive(Parser)]
#[command(name = "adbn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. --set max_layers=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an adaptive DBN and its classifier head
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Report train/test accuracy and confusion matrices
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Compare against inference with the embedded rules
        #[arg(long)]
        with_rules: bool,
    },
    /// Write fired-neuron path graphs (DOT) for a class pair
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Class pair A,B
        #[arg(long)]
        classes: String,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Mine IF-THEN rules on the validation split and embed them
    Rules {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        classes: Option<String>,
    },
}

fn resolve(common: &Common, checkpoint: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut config = match (&common.config, checkpoint) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(ckpt)) => commands::config_for_checkpoint(None, ckpt)?,
        (None, None) => ExperimentConfig::default(),
    };
    for pair in &common.overrides {
        config.apply_override(pair)?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn classes(text: &str) -> Result<(usize, usize)> {
    parse_class_pair(text).map_err(AdbnError::Usage)
}

fn run(cli: Cli) -> Result<String> {
    Ok(match cli.command {
        Command::Train { common } => cmd_train(&resolve(&common, None)?)?.to_string(),
        Command::Eval {
            common,
            checkpoint,
            with_rules,
        } => {
            let config = resolve(&common, Some(&checkpoint))?;
            cmd_eval(&checkpoint, &config, with_rules)?.to_string()
        }
        Command::Trace {
            common,
            checkpoint,
            classes: pair,
            split,
        } => {
            let config = resolve(&common, Some(&checkpoint))?;
            let out = common.out.clone().unwrap_or_else(|| config.out.join("trace"));
            cmd_trace(&checkpoint, &config, classes(&pair)?, &split, &out)?.to_string()
        }
        Command::Rules {
            common,
            checkpoint,
            classes: pair,
        } => {
            let config = resolve(&common, Some(&checkpoint))?;
            let pair = match pair {
                Some(p) => classes(&p)?,
                None => config.class_pair,
            };
            let out = common.out.clone().unwrap_or_else(|| config.out.clone());
            cmd_rules(&checkpoint, &config, pair, &out)?.to_string()
        }
    })
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("ADBN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| AdbnError::Usage(format!("ADBN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| AdbnError::Usage(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
