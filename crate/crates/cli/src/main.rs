//! `permtensor` command line: dataset generation, training, evaluation,
//! edit distances and the property suites.
//!
//! JSON goes to stdout, human-readable summaries to stderr. Exit codes are
//! 0 success, 1 usage error, 2 runtime failure, 3 property-suite failure.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use permtensor::checks::{self, Suite};
use permtensor::gnn::{GnnModel, Mode};
use permtensor::graphs::{edit_distance, make_dataset, Dataset, DatasetConfig, EditCosts, Task};
use permtensor::tensor::{Activation, DenseTensor};
use permtensor::train::{self, TrainConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_SUITE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "permtensor",
    version,
    about = "Permutation-invariant and equivariant tensor GNNs"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a JSON-lines graph dataset.
    Gen(GenArgs),
    /// Train a model and write it with its metrics.
    Train(TrainArgs),
    /// Run a property suite.
    Check(CheckArgs),
    /// Exact edit distance between two graphs.
    Editdist(EditArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    count_per_size: usize,
    /// diameter, ecc or both
    #[arg(long, default_value = "both")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split index; different splits of one seed are independent draws.
    #[arg(long, default_value_t = 0)]
    split: u64,
    #[arg(long, default_value_t = 1.0)]
    weight_sigma: f64,
    /// Draw the two directions of each edge independently.
    #[arg(long)]
    asymmetric: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Separate test set; without it a seeded holdout of the data is used.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    /// inv (diameter) or eq (eccentricity)
    #[arg(long)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "sigmoid")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record per-epoch wall time (makes metrics files non-reproducible).
    #[arg(long)]
    wall_clock: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    /// bell, equivariance, gradients, closure, separation, metric or all
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the report and witness records.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EditArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    node_cost: f64,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
    Suite(String),
}

impl From<permtensor::Error> for Failure {
    fn from(e: permtensor::Error) -> Self {
        match e {
            permtensor::Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let res = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Check(a) => check(a),
        Command::Editdist(a) => editdist(a),
        Command::Eval(a) => eval(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Suite(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_SUITE)
        }
    }
}

fn print_json(v: &Value) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> CmdResult {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn resolved(command: &str, args: &impl Serialize, extra: Value) -> Result<Value, Failure> {
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": serde_json::to_value(args)?,
        "resolved": extra,
    }))
}

fn parse_tasks(s: &str) -> Result<Vec<Task>, Failure> {
    match s {
        "both" => Ok(vec![Task::Diameter, Task::Eccentricity]),
        other => Ok(vec![other.parse()?]),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    let f =
        fs::File::open(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(Dataset::read_jsonl(BufReader::new(f))?)
}

fn gen(a: &GenArgs) -> CmdResult {
    let mut cfg = DatasetConfig::new(
        a.sizes.clone(),
        a.count_per_size,
        parse_tasks(&a.task)?,
        a.seed,
    );
    cfg.split = a.split;
    cfg.weight_sigma = a.weight_sigma;
    cfg.symmetric = !a.asymmetric;
    let ds = make_dataset(&cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, ds.to_jsonl()?)?;
    let mut cfg_path = a.out.clone().into_os_string();
    cfg_path.push(".config.json");
    write_json(
        Path::new(&cfg_path),
        &resolved("gen", a, serde_json::to_value(&ds.header)?)?,
    )?;
    eprintln!("wrote {} graphs to {}", ds.samples.len(), a.out.display());
    print_json(&serde_json::to_value(&ds.header)?)
}

fn metrics_name(task: Task, cfg: &TrainConfig) -> String {
    format!(
        "metrics_{}_k{}_S{}_seed{}.csv",
        task.name(),
        cfg.k,
        cfg.width,
        cfg.seed
    )
}

fn train_cmd(a: &TrainArgs) -> CmdResult {
    let task = match a.mode {
        Mode::Invariant => Task::Diameter,
        Mode::Equivariant => Task::Eccentricity,
    };
    let mut cfg = TrainConfig::new(task, a.k, a.width, a.seed);
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = a.lr;
    cfg.activation = a.activation;
    cfg.wall_clock = a.wall_clock;
    cfg.validate()?;

    let data = read_dataset(&a.data)?;
    let (train_set, test_set) = match &a.test {
        Some(p) => (data.samples, read_dataset(p)?.samples),
        None => train::holdout_split(&data.samples, a.holdout, a.seed)?,
    };
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &resolved(
            "train",
            a,
            json!({"train": cfg, "train_count": train_set.len(), "test_count": test_set.len()}),
        )?,
    )?;

    let fit = train::fit(&cfg, &train_set, &test_set)?;
    let csv = a.out.join(metrics_name(task, &cfg));
    fs::write(&csv, train::metrics_csv(&fit.history))?;
    fs::write(a.out.join("model.json"), fit.model.to_json()?)?;
    let last = fit.history.last().expect("epochs >= 1");
    eprintln!(
        "epoch {}: train {:.4}, test {:.4} (n5 {:.4}, n10 {:.4})",
        last.epoch, last.train_mse, last.test_mse, last.test_mse_n5, last.test_mse_n10
    );
    print_json(&json!({
        "task": task.name(),
        "epochs": last.epoch,
        "train_mse": finite_or_null(last.train_mse),
        "test_mse": finite_or_null(last.test_mse),
        "test_mse_n5": finite_or_null(last.test_mse_n5),
        "test_mse_n10": finite_or_null(last.test_mse_n10),
        "metrics": csv,
        "model": a.out.join("model.json"),
    }))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn check(a: &CheckArgs) -> CmdResult {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse()?]
    };
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        write_json(
            &dir.join("config.json"),
            &resolved("check", a, json!({"suites": suites}))?,
        )?;
    }
    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for s in suites {
        let rep = checks::run(s, a.seed)?;
        eprintln!("{}: {} passed, {} failed", s.name(), rep.passed, rep.failed);
        for f in &rep.failures {
            eprintln!("  {f}");
        }
        if let Some(dir) = &a.out {
            write_json(&dir.join(format!("{}.json", s.name())), &rep)?;
            if s == Suite::Separation {
                let wdir = dir.join("witnesses");
                fs::create_dir_all(&wdir)?;
                for (i, r) in rep.records.iter().enumerate() {
                    write_json(&wdir.join(format!("{i:03}.json")), r)?;
                }
            }
        }
        if !rep.ok() {
            failed.push(s.name());
        }
        reports.push(serde_json::to_value(&rep)?);
    }
    print_json(&Value::Array(reports))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Suite(format!(
            "failed suites: {}",
            failed.join(", ")
        )))
    }
}

/// A graph file holds either a serialized tensor or a nested square matrix.
fn read_graph(path: &Path) -> Result<DenseTensor, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let g = if v.is_array() {
        let rows: Vec<Vec<f64>> = serde_json::from_value(v)?;
        DenseTensor::from_matrix(&rows)?
    } else {
        serde_json::from_value(v)?
    };
    if g.order() != 2 {
        return Err(Failure::Runtime(format!(
            "{}: expected an order-2 tensor",
            path.display()
        )));
    }
    Ok(g)
}

fn editdist(a: &EditArgs) -> CmdResult {
    let costs = EditCosts::new(a.node_cost)?;
    let g1 = read_graph(&a.a)?;
    let g2 = read_graph(&a.b)?;
    let d = edit_distance(&g1, &g2, &costs)?;
    eprintln!("edit distance {d} (n = {} and {})", g1.n(), g2.n());
    print_json(&json!({"distance": d, "n_a": g1.n(), "n_b": g2.n(), "node_cost": a.node_cost}))
}

fn eval(a: &EvalArgs) -> CmdResult {
    let text = fs::read_to_string(&a.model)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.model.display())))?;
    let model = GnnModel::from_json(&text)?;
    let task = match model.mode() {
        Mode::Invariant => Task::Diameter,
        Mode::Equivariant => Task::Eccentricity,
    };
    let data = read_dataset(&a.data)?;
    let rep = train::evaluate(&model, &data.samples, task)?;
    eprintln!("{} samples, mse {:.4}", rep.count, rep.mse);
    let per_size: serde_json::Map<String, Value> = rep
        .per_size
        .iter()
        .map(|(n, v)| (n.to_string(), finite_or_null(*v)))
        .collect();
    print_json(&json!({
        "task": task.name(),
        "count": rep.count,
        "test_mse": finite_or_null(rep.mse),
        "test_mse_n5": finite_or_null(rep.size(5)),
        "test_mse_n10": finite_or_null(rep.size(10)),
        "per_size": per_size,
    }))
}
