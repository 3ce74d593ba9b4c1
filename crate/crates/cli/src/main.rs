use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use parlens_core::estimate::TaskSpec;
use parlens_core::layout::LayoutGraph;
use parlens_core::sim::{compare_policies, simulate};
use parlens_core::spec::{load_layout, read_json, LearnSpec, SimSpec, SpecError};
use parlens_core::specialization::{si_report, TrajectoryLog, DEFAULT_GAMMA};
use parlens_core::stats::{logistic_fit, logistic_predict, metrics, pearson, train_test_split, LogisticConfig};
use parlens_core::sweep::{
    completed_env_ids, run_learn, run_sweep, write_csv, write_empty_csv, SweepSpec, DEFAULT_SI_THRESHOLD,
    LEARN_COLUMNS, SWEEP_COLUMNS,
};
use parlens_core::table::Table;
use parlens_core::task::{diagnose, parallelizability, TaskGraph};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "parlens", version, about = "Task parallelizability and team specialization analysis")]
struct Cli {
    /// Default seed for anything stochastic.
    #[arg(long, global = true, env = "PARLENS_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parallelizability report for a task on a layout.
    Analyze {
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 2)]
        agents: usize,
        /// Also write the layout graph with edge betweenness as JSON.
        #[arg(long)]
        graph_out: Option<PathBuf>,
    },
    /// Predicted regime and which capacity to raise first.
    Predict {
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        agents: usize,
    },
    /// Specialization index of a trajectory log (CSV: agent,t,state,action).
    Si {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
    },
    /// Run the contention simulator.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Run generalist, specialist and greedy specialist side by side.
        #[arg(long)]
        compare: bool,
    },
    /// Train learners and write one CSV row per run.
    Learn {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment sweep.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep rows already in the output and run only the missing ones.
        #[arg(long)]
        resume: bool,
    },
    /// Correlation and optional regime classification from a CSV.
    Stats {
        #[arg(long)]
        csv: PathBuf,
        /// Feature column(s), comma separated.
        #[arg(long, value_delimiter = ',')]
        x: Vec<String>,
        #[arg(long)]
        y: String,
        #[arg(long)]
        logistic: bool,
        /// Label rows with y at or above this value as the positive class.
        #[arg(long, visible_alias = "si-threshold", default_value_t = DEFAULT_SI_THRESHOLD)]
        threshold: f64,
        /// Fraction of rows used for fitting; the rest are held out.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        /// Fit without class-weight balancing.
        #[arg(long)]
        no_balance: bool,
    },
    /// Scatter plot of two CSV columns as SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn invalid(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        if e.is_validation() {
            invalid(e)
        } else {
            runtime(e)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    emit(&(text + "\n"))
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut stdout = io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

fn load_task(layout: Option<&Path>, task: &Path) -> Result<(Option<LayoutGraph>, TaskGraph), Failure> {
    let spec: TaskSpec = read_json(task)?;
    let graph = layout.map(load_layout).transpose()?;
    let task = spec.to_task_graph(graph.as_ref()).map_err(invalid)?;
    Ok((graph, task))
}

fn analyze(layout: Option<&Path>, task: &Path, agents: usize, graph_out: Option<&Path>) -> Result<(), Failure> {
    let (graph, task) = load_task(layout, task)?;
    let report = parallelizability(&task, agents).map_err(invalid)?;
    let diagnosis = diagnose(&report);
    let mut value = serde_json::to_value(&report).map_err(runtime)?;
    value["diagnosis"] = serde_json::to_value(&diagnosis).map_err(runtime)?;
    if let Some(out) = graph_out {
        let graph = graph.ok_or_else(|| invalid("--graph-out needs --layout"))?;
        let text = serde_json::to_string_pretty(&graph.export()).map_err(runtime)?;
        write_file(out, &(text + "\n"))?;
    }
    print_json(&value)
}

fn predict(layout: Option<&Path>, task: &Path, agents: usize) -> Result<(), Failure> {
    let (_, task) = load_task(layout, task)?;
    let report = parallelizability(&task, agents).map_err(invalid)?;
    let relation = if report.s < agents as f64 - 1e-9 { "<" } else { "=" };
    let mut text = format!(
        "regime: {} (S = {:.4} {relation} N = {agents})\n",
        report.regime.as_str(),
        report.s
    );
    let diagnosis = diagnose(&report);
    if diagnosis.is_empty() {
        text.push_str("no bottlenecked subtasks\n");
        return emit(&text);
    }
    text += &format!("{:<20} {:<10} {:>9} {:>10}\n", "subtask", "limit", "capacity", "delta_S");
    for d in diagnosis {
        let dim = serde_json::to_value(d.dimension).map_err(runtime)?;
        text += &format!(
            "{:<20} {:<10} {:>9} {:>10.4}\n",
            d.id,
            dim.as_str().unwrap_or("-"),
            d.capacity.to_string(),
            d.delta_s
        );
    }
    emit(&text)
}

fn si(log: &Path, gamma: f64) -> Result<(), Failure> {
    let file = File::open(log).map_err(|e| invalid(format!("cannot read {}: {e}", log.display())))?;
    let log = TrajectoryLog::from_csv(file).map_err(invalid)?;
    print_json(&si_report(&log, gamma).map_err(invalid)?)
}

fn simulate_cmd(spec_path: &Path, compare: bool, seed: u64) -> Result<(), Failure> {
    let (spec, base) = SimSpec::load(spec_path)?;
    let config = spec.config(&base, seed)?;
    if compare {
        let comparison = compare_policies(&config).map_err(SpecError::from)?;
        print_json(&comparison)
    } else {
        print_json(&simulate(&config).map_err(SpecError::from)?)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn learn(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let (spec, base): (LearnSpec, PathBuf) = LearnSpec::load(spec_path)?;
    let rows = run_learn(&spec, &base)?;
    let writer = create(out)?;
    if rows.is_empty() {
        write_empty_csv(writer, &LEARN_COLUMNS).map_err(runtime)?;
    } else {
        write_csv(writer, &rows, true).map_err(runtime)?;
    }
    info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn sweep(spec_path: &Path, out: &Path, resume: bool, seed: u64) -> Result<(), Failure> {
    let (spec, base) = SweepSpec::load(spec_path)?;
    let existing = resume && out.exists();
    let skip = if existing {
        let file = File::open(out).map_err(runtime)?;
        completed_env_ids(file).map_err(invalid)?
    } else {
        BTreeSet::new()
    };
    let outcome = run_sweep(&spec, &base, seed, &skip);
    for (id, err) in &outcome.failures {
        warn!("{id}: {err}");
    }
    if existing {
        let file = OpenOptions::new().append(true).open(out).map_err(runtime)?;
        write_csv(BufWriter::new(file), &outcome.rows, false).map_err(runtime)?;
    } else if outcome.rows.is_empty() {
        write_empty_csv(create(out)?, &SWEEP_COLUMNS).map_err(runtime)?;
    } else {
        write_csv(create(out)?, &outcome.rows, true).map_err(runtime)?;
    }
    info!(
        "{} rows written, {} skipped, {} failed",
        outcome.rows.len(),
        skip.len(),
        outcome.failures.len()
    );
    Ok(())
}

fn read_table(path: &Path) -> Result<Table, Failure> {
    let file = File::open(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    Table::from_reader(file).map_err(invalid)
}

struct StatsArgs<'a> {
    csv: &'a Path,
    x: &'a [String],
    y: &'a str,
    logistic: bool,
    threshold: f64,
    split: f64,
    balance: bool,
}

fn stats(args: StatsArgs<'_>, seed: u64) -> Result<(), Failure> {
    if args.x.is_empty() {
        return Err(invalid("--x needs at least one column"));
    }
    let table = read_table(args.csv)?;
    let mut names: Vec<&str> = args.x.iter().map(String::as_str).collect();
    names.push(args.y);
    let data = table.numeric_columns(&names).map_err(invalid)?;
    let d = args.x.len();
    let ys: Vec<f64> = data.iter().map(|r| r[d]).collect();

    let mut correlations = Vec::new();
    for (j, name) in args.x.iter().enumerate() {
        let xs: Vec<f64> = data.iter().map(|r| r[j]).collect();
        let c = pearson(&xs, &ys, seed).map_err(invalid)?;
        correlations.push(json!({"x": name, "y": args.y, "r": c.r, "p": c.p, "n": c.n}));
    }
    let mut out = json!({ "correlations": correlations });

    if args.logistic {
        let features: Vec<Vec<f64>> = data.iter().map(|r| r[..d].to_vec()).collect();
        let labels: Vec<bool> = ys.iter().map(|&v| v >= args.threshold).collect();
        let (train, test) = if args.split < 1.0 {
            train_test_split(features.len(), args.split, seed)
        } else {
            ((0..features.len()).collect(), Vec::new())
        };
        let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<bool>) {
            (idx.iter().map(|&i| features[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
        };
        let (train_x, train_y) = pick(&train);
        let model = logistic_fit(&train_x, &train_y, args.balance, args.x, &LogisticConfig::default()).map_err(invalid)?;
        let evaluate = |x: &[Vec<f64>], y: &[bool]| -> Result<Value, Failure> {
            if y.is_empty() {
                return Ok(Value::Null);
            }
            let pred = logistic_predict(&model, x).map_err(invalid)?;
            serde_json::to_value(metrics(&pred.labels, y).map_err(invalid)?).map_err(runtime)
        };
        let (test_x, test_y) = pick(&test);
        out["logistic"] = json!({
            "threshold": args.threshold,
            "split": args.split,
            "model": model,
            "train": evaluate(&train_x, &train_y)?,
            "test": evaluate(&test_x, &test_y)?,
        });
    }
    print_json(&out)
}

fn plot(csv: &Path, x: &str, y: &str, out: &Path) -> Result<(), Failure> {
    let table = read_table(csv)?;
    let data = table.numeric_columns(&[x, y]).map_err(invalid)?;
    let xs: Vec<f64> = data.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = data.iter().map(|r| r[1]).collect();
    let svg = parlens_core::plot::scatter_svg(&xs, &ys, x, y).map_err(invalid)?;
    write_file(out, &svg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Analyze {
            layout,
            task,
            agents,
            graph_out,
        } => analyze(layout.as_deref(), &task, agents, graph_out.as_deref()),
        Command::Predict { layout, task, agents } => predict(layout.as_deref(), &task, agents),
        Command::Si { log, gamma } => si(&log, gamma),
        Command::Simulate { spec, compare } => simulate_cmd(&spec, compare, seed),
        Command::Learn { spec, out } => learn(&spec, &out),
        Command::Sweep { spec, out, resume } => sweep(&spec, &out, resume, seed),
        Command::Stats {
            csv,
            x,
            y,
            logistic,
            threshold,
            split,
            no_balance,
        } => stats(
            StatsArgs {
                csv: &csv,
                x: &x,
                y: &y,
                logistic,
                threshold,
                split,
                balance: !no_balance,
            },
            seed,
        ),
        Command::Plot { csv, x, y, out } => plot(&csv, &x, &y, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
