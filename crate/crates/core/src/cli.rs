//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage, configuration or input error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::compare::{compare_runs, render, REPORT_FILE};
use crate::config::{RunConfig, DATA_ENV};
use crate::data::{load_archive, write_synthetic_archive, Datasets, Split};
use crate::error::{Error, Result};
use crate::layers::{amplitude_circuit, angle_circuit};
use crate::models::{read_checkpoint, Model, ModelKind, BENIGN, MALIGNANT};
use crate::quantum::{dump_circuit, format_unitary, CircuitSpec};
use crate::stats::Metrics;
use crate::train::{confusion_csv, evaluate, fit, ClassView, RunResult};

#[derive(Parser, Debug)]
#[command(name = "qfusion", version, about = "Hybrid quantum-classical CNN for BreastMNIST")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write curves.csv, result.json and best.ckpt.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Compare two run sets with a paired one-sided Wilcoxon test.
    Compare(CompareArgs),
    /// Inspect the quantum circuits.
    Circuit {
        #[command(subcommand)]
        command: CircuitCommand,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Train both models over several seeds, then compare them.
    RunExperiment(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset archive (defaults to $QFUSION_DATA).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: Option<KindArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum KindArg {
    Hybrid,
    Classical,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Hybrid => ModelKind::Hybrid,
            KindArg::Classical => ModelKind::Classical,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PositiveArg {
    Benign,
    Malignant,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "benign")]
    pub positive_class: PositiveArg,
    /// Exchange the two label codes of the archive.
    #[arg(long)]
    pub swap_labels: bool,
    /// Directory for eval-<split>.json and confusion-<split>.csv
    /// (defaults to the checkpoint's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub runs_a: PathBuf,
    #[arg(long)]
    pub runs_b: PathBuf,
    /// Directory for report.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum CircuitCommand {
    /// Print a circuit in the text dump format.
    Dump(DumpArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum CircuitArg {
    Amplitude,
    Angle,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long, value_enum)]
    pub circuit: CircuitArg,
    /// `zeros`, a hybrid checkpoint, or a text file of parameter values.
    #[arg(long, default_value = "zeros")]
    pub params: String,
    /// Also print the dense unitary of the variational block.
    #[arg(long)]
    pub unitary: bool,
}

#[derive(Subcommand, Debug)]
pub enum DataCommand {
    /// Write a small synthetic archive in the BreastMNIST layout.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per split as train,val,test.
    #[arg(long, default_value = "2,2,2")]
    pub sizes: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, default_value = "experiment")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Fits to run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub common: ConfigArgs,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Load { .. } | Error::CircuitParse { .. } | Error::Checkpoint(_) | Error::SeedMismatch(_) => 2,
        _ => 1,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Circuit {
            command: CircuitCommand::Dump(a),
        } => cmd_dump(a),
        Command::Data {
            command: DataCommand::Synth(a),
        } => cmd_synth(a),
        Command::RunExperiment(a) => cmd_experiment(a),
    }
}

/// Defaults, then the config file, then explicit overrides.
pub fn build_config(common: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    Ok(cfg)
}

fn load_data(path: Option<&Path>, swap: bool) -> Result<Datasets> {
    let path = path.ok_or_else(|| Error::Config(format!("no dataset given: pass --data or set {DATA_ENV}")))?;
    let mut data = load_archive(path)?;
    if swap {
        for s in [&mut data.train, &mut data.val, &mut data.test] {
            s.swap_labels();
        }
    }
    Ok(data)
}

fn train_one(cfg: &RunConfig, data: &Datasets, quiet: bool) -> Result<RunResult> {
    let mut model = Model::new(cfg.model, cfg.seed);
    let tag = format!("{}/{}", cfg.model.name(), cfg.seed);
    fit(&mut model, data, cfg, Some(&cfg.out), |e| {
        if !quiet {
            eprintln!(
                "[{tag}] epoch {:>2} train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4} lr {:.3e}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr
            );
        }
    })
}

fn fmt_metrics(m: &Metrics) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    format!(
        "accuracy {} precision {} recall {} f1 {}",
        f(m.accuracy),
        f(m.precision),
        f(m.recall),
        f(m.f1)
    )
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = build_config(&a.common)?;
    if let Some(m) = a.model {
        cfg.model = m.into();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    cfg.validate()?;
    let data = load_data(cfg.data.as_deref(), cfg.swap_labels)?;
    let r = train_one(&cfg, &data, a.quiet)?;
    println!(
        "{} seed {}: best epoch {} (val_acc {:.4}), test {} on {} samples",
        r.model,
        r.seed,
        r.best_epoch,
        r.best_val_acc,
        fmt_metrics(&r.test.primary.metrics),
        r.test.samples
    );
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut model = read_checkpoint(&a.checkpoint)?;
    let data_path = a.data.or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from));
    let data = load_data(data_path.as_deref(), a.swap_labels)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let positive = match a.positive_class {
        PositiveArg::Benign => BENIGN,
        PositiveArg::Malignant => MALIGNANT,
    };
    let defaults = RunConfig::default();
    let ev = evaluate(&mut model, data.get(split), defaults.batch, defaults.smoothing)?;
    let view = ClassView::new(&ev.labels, &ev.predictions, positive)?;
    let c = &view.confusion;
    println!(
        "{} on {} ({} samples): loss {:.4} {}",
        model.kind().name(),
        split.name(),
        ev.labels.len(),
        ev.loss,
        fmt_metrics(&view.metrics)
    );
    println!("TP {} FN {} FP {} TN {}", c.tp, c.fn_, c.fp, c.tn);
    let dir = a
        .out
        .unwrap_or_else(|| a.checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    std::fs::create_dir_all(&dir)?;
    let json = serde_json::json!({
        "model": model.kind().name(),
        "split": split.name(),
        "samples": ev.labels.len(),
        "loss": ev.loss,
        "confusion": view.confusion,
        "metrics": view.metrics,
    });
    std::fs::write(dir.join(format!("eval-{}.json", split.name())), serde_json::to_string_pretty(&json)?)?;
    std::fs::write(dir.join(format!("confusion-{}.csv", split.name())), confusion_csv(&ev.labels, &ev.predictions))?;
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let report = compare_runs(&a.runs_a, &a.runs_b)?;
    print!("{}", render(&report));
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn read_params(source: &str, which: CircuitArg, spec: &CircuitSpec) -> Result<Vec<f64>> {
    if source == "zeros" {
        return Ok(vec![0.0; spec.num_params()]);
    }
    let path = Path::new(source);
    let bytes = std::fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if bytes.starts_with(b"QFCK") {
        let model = read_checkpoint(path)?;
        let circuits = model
            .circuits()
            .ok_or_else(|| Error::Config(format!("{source} holds a classical model without circuits")))?;
        let idx = match which {
            CircuitArg::Amplitude => 0,
            CircuitArg::Angle => 1,
        };
        return Ok(circuits[idx].1.to_vec());
    }
    let text = String::from_utf8_lossy(&bytes);
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("{source}: bad parameter value {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != spec.num_params() {
        return Err(Error::Config(format!(
            "{source}: {} values, the circuit takes {}",
            values.len(),
            spec.num_params()
        )));
    }
    Ok(values)
}

fn cmd_dump(a: DumpArgs) -> Result<()> {
    let spec = match a.circuit {
        CircuitArg::Amplitude => amplitude_circuit(),
        CircuitArg::Angle => angle_circuit(),
    };
    let params = read_params(&a.params, a.circuit, &spec)?;
    print!("{}", dump_circuit(&spec, &params)?);
    if a.unitary {
        let dim = 1 << spec.n_qubits();
        println!("# variational unitary {dim}x{dim}, row-major");
        print!("{}", format_unitary(&spec.variational_unitary(&params)?, dim));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let sizes: Vec<usize> = a
        .sizes
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad --sizes entry {s:?}"))))
        .collect::<Result<_>>()?;
    let sizes: [usize; 3] = sizes
        .try_into()
        .map_err(|_| Error::Config("--sizes takes three counts: train,val,test".into()))?;
    write_synthetic_archive(&a.out, sizes, a.seed)?;
    println!("wrote {} ({} / {} / {} samples)", a.out.display(), sizes[0], sizes[1], sizes[2]);
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let base = build_config(&a.common)?;
    base.validate()?;
    if a.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let data = load_data(base.data.as_deref(), base.swap_labels)?;
    let jobs: Vec<RunConfig> = [ModelKind::Hybrid, ModelKind::Classical]
        .into_iter()
        .flat_map(|kind| a.seeds.iter().map(move |&seed| (kind, seed)))
        .map(|(kind, seed)| {
            let mut cfg = base.clone();
            cfg.model = kind;
            cfg.seed = seed;
            cfg.out = a.out.join(kind.name()).join(format!("seed-{seed}"));
            cfg
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<RunResult>> = pool.install(|| jobs.par_iter().map(|cfg| train_one(cfg, &data, false)).collect());
    for r in results {
        r?;
    }
    let report = compare_runs(&a.out.join("hybrid"), &a.out.join("classical"))?;
    print!("{}", render(&report));
    std::fs::write(a.out.join(REPORT_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
