mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gradrop::bench::{self, CellId, SweepOptions};
use gradrop::data::{self, Registry, RegistryEntry, Schema, TaskKind};
use gradrop::pgg::{self, GameMode};

use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "gradrop", version, about = "Gradient dropout training, robustness sweeps and composition games")]
#[command(after_help = settings::keys_help())]
struct Cli {
    /// Config file; flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "GRADROP_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Dataset registry file.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[arg(long, global = true)]
    root_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one (dataset, p, target noise) cell and report clean test metrics.
    Train(TrainArgs),
    /// Run the full robustness grid on one dataset.
    Sweep(SweepArgs),
    /// Simulate the composition game.
    Simulate(SimulateArgs),
    /// Manage the dataset registry.
    Datasets {
        #[command(subcommand)]
        action: DatasetsAction,
    },
}

#[derive(Args, Debug)]
struct TrainingArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    /// adam or sgd
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<String>,
    /// Gradient keep probability in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    /// NoNoise, TDS<x> or StableA<a>B<b>[F<f>].
    #[arg(long)]
    target_noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    dataset: Option<String>,
    /// Skip cells already present in the results file.
    #[arg(long)]
    resume: bool,
    /// Cells trained in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    p_grid: Option<String>,
    #[arg(long)]
    target_noises: Option<String>,
    #[arg(long)]
    amplitudes: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plots: bool,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Comma list of baseline, classical-dropout, gradient-dropout.
    #[arg(long)]
    mode: Option<String>,
    /// Comma list of learning probabilities for gradient-dropout.
    #[arg(long)]
    p: Option<String>,
    /// Comma list of activity probabilities for classical-dropout.
    #[arg(long)]
    pd: Option<String>,
    /// Comma list of softmax temperatures.
    #[arg(long)]
    tau: Option<String>,
    /// shared or contingent
    #[arg(long)]
    benefit_mode: Option<String>,
    /// Initial fraction of composers.
    #[arg(long)]
    init: Option<f64>,
    /// Number of agents.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    cost: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum DatasetsAction {
    /// Print the registered datasets.
    List,
    /// Register a CSV file under a name.
    Add {
        name: String,
        #[arg(long)]
        path: PathBuf,
        /// Target column.
        #[arg(long)]
        target: String,
        /// regression or classification
        #[arg(long)]
        task: TaskKind,
        /// Comma list of categorical columns.
        #[arg(long, default_value = "")]
        categorical: String,
    },
}

fn apply_training(s: &mut Settings, t: &TrainingArgs) {
    s.set("training", "epochs", t.epochs);
    s.set("training", "batch_size", t.batch_size);
    s.set("training", "hidden_layers", t.hidden_layers);
    s.set("training", "hidden_width", t.hidden_width);
    s.set("training", "optimizer", t.optimizer.as_ref());
    s.set("training", "learning_rate", t.lr);
    s.set("training", "train_fraction", t.train_fraction);
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(s: &Settings) -> Result<PathBuf> {
    let out = s.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn loss_csv(key: &str, history: &[f64]) -> String {
    let mut out = format!("{}\n", bench::LOSS_HEADER);
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{key},{},{l}", e + 1);
    }
    out
}

fn cmd_train(s: &Settings) -> Result<()> {
    let (sweep, seed, tc) = s.train()?;
    let registry = Registry::load(&s.registry())?;
    let dataset = registry.load_dataset(&sweep.dataset)?;
    let out = prepare_out(s)?;
    write(&out.join(bench::MANIFEST_FILE), &s.manifest())?;

    let cell = CellId {
        dataset: sweep.dataset.clone(),
        seed,
        p: tc.p.unwrap_or(1.0),
        target_noise: tc.target_noise,
    };
    let rng = bench::seed_rng(&sweep, seed);
    let (train_set, test_set) = bench::prepare_split(&dataset, sweep.train_fraction, &rng)?;
    let spec = sweep.network_for(&dataset);
    let loss_path = out.join(bench::LOSS_FILE);
    let outcome = match bench::train(&spec, &train_set, &tc, &rng.substream("train")) {
        Ok(o) => o,
        Err(gradrop::Error::Diverged { epoch, loss, history }) => {
            write(&loss_path, &loss_csv(&cell.key(), &history))?;
            bail!("training diverged at epoch {epoch} (loss {loss}); partial loss history in {}", loss_path.display());
        }
        Err(e) => return Err(e.into()),
    };
    write(&loss_path, &loss_csv(&cell.key(), &outcome.loss_history))?;

    let metrics = bench::task_metrics(&spec, &outcome.params, &test_set.features, &test_set.targets)?;
    let mut table = String::from("dataset,seed,p,target_noise,metric,value\n");
    let mut summary = Vec::new();
    for (m, v) in &metrics {
        let v = v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let _ = writeln!(table, "{},{},{v}", cell.key(), m.name());
        summary.push(format!("{}={v}", m.name()));
    }
    write(&out.join("metrics.csv"), &table)?;

    let change = outcome.max_param_change();
    let final_loss = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {}: {} epochs, final train loss {final_loss:.6}, test {}, max parameter change {change:e}{}",
        cell.key(),
        outcome.loss_history.len(),
        summary.join(" "),
        if change == 0.0 { " (parameters unchanged from initialization)" } else { "" }
    );
    Ok(())
}

fn cmd_sweep(s: &Settings, resume: bool, plots: bool) -> Result<()> {
    let cfg = s.sweep()?;
    let jobs = s.jobs()?;
    if jobs == 0 {
        bail!("jobs must be at least 1");
    }
    let registry = Registry::load(&s.registry())?;
    let out = s.out_dir();
    let opts = SweepOptions { resume, jobs, max_new_cells: None, plots };
    let summary = bench::run_sweep(&cfg, &registry, &out, &opts)?;
    write(&out.join(bench::MANIFEST_FILE), &s.manifest())?;
    let failed = summary.results.iter().filter(|r| r.failure.is_some()).count();
    println!(
        "sweep {}: {} cells, {} already complete, {} new ({} diverged); results in {}",
        cfg.dataset,
        summary.total_cells,
        summary.skipped_cells,
        summary.results.len(),
        failed,
        out.join(bench::RESULTS_FILE).display()
    );
    Ok(())
}

fn game_label(g: &pgg::GameConfig) -> String {
    let mode = match g.mode {
        GameMode::Baseline => "baseline".to_string(),
        GameMode::ClassicalDropout { pd } => format!("classical-dropout_pd{pd}"),
        GameMode::GradientDropout { p } => format!("gradient-dropout_p{p}"),
    };
    format!("{mode}_tau{}", g.exploration_temp)
}

fn cmd_simulate(s: &Settings) -> Result<()> {
    let games = s.games()?;
    let out = prepare_out(s)?;
    write(&out.join(bench::MANIFEST_FILE), &s.manifest())?;
    let mut traces = Vec::new();
    for g in &games {
        let trace = pgg::run(g)?;
        let label = game_label(g);
        let path = out.join(format!("trace_{label}.csv"));
        write(&path, &trace.to_csv())?;
        println!(
            "{label}: final composition {:.4}, mean over last 100 rounds {:.4} ({})",
            trace.composition.last().copied().unwrap_or(f64::NAN),
            trace.tail_mean(100),
            path.display()
        );
        traces.push((label, trace));
    }
    write(&out.join("comparison.svg"), &pgg::comparison_svg(&traces))?;
    Ok(())
}

fn cmd_datasets(s: &Settings, action: DatasetsAction) -> Result<()> {
    let path = s.registry();
    let mut registry = Registry::load(&path)?;
    match action {
        DatasetsAction::List => {
            if registry.entries.is_empty() {
                println!("no datasets registered in {}", path.display());
            }
            for e in &registry.entries {
                println!("{}\t{}\ttarget={}\t{}", e.name, e.schema.task, e.schema.target_column, e.path.display());
            }
        }
        DatasetsAction::Add { name, path: csv, target, task, categorical } => {
            let schema = Schema {
                target_column: target,
                task,
                categorical_columns: categorical.split(',').map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect(),
            };
            let csv = std::path::absolute(&csv).with_context(|| format!("resolving {}", csv.display()))?;
            let loaded = data::load_csv(&csv, &schema)?;
            registry.add(RegistryEntry { name: name.clone(), path: csv, schema })?;
            registry.save(&path)?;
            println!("registered {name}: {} rows, {} features ({})", loaded.len(), loaded.num_features(), path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref())?;
    s.set("general", "out_dir", cli.out_dir.as_ref().map(|p| p.display()));
    s.set("general", "registry", cli.registry.as_ref().map(|p| p.display()));
    s.set("general", "root_seed", cli.root_seed);
    match cli.command {
        Command::Train(a) => {
            s.set("train", "dataset", a.dataset);
            s.set("train", "p", a.p);
            s.set("train", "target_noise", a.target_noise);
            s.set("train", "seed", a.seed);
            apply_training(&mut s, &a.training);
            cmd_train(&s)
        }
        Command::Sweep(a) => {
            s.set("sweep", "dataset", a.dataset);
            s.set("sweep", "jobs", a.jobs);
            s.set("sweep", "seeds", a.seeds);
            s.set("sweep", "p_grid", a.p_grid);
            s.set("sweep", "target_noises", a.target_noises);
            s.set("sweep", "amplitudes", a.amplitudes);
            s.set("sweep", "repetitions", a.repetitions);
            apply_training(&mut s, &a.training);
            cmd_sweep(&s, a.resume, !a.no_plots)
        }
        Command::Simulate(a) => {
            s.set("game", "mode", a.mode);
            s.set("game", "p", a.p);
            s.set("game", "pd", a.pd);
            s.set("game", "tau", a.tau);
            s.set("game", "benefit_mode", a.benefit_mode);
            s.set("game", "init", a.init);
            s.set("game", "players", a.n);
            s.set("game", "kappa", a.kappa);
            s.set("game", "cost", a.cost);
            s.set("game", "lambda", a.lambda);
            s.set("game", "rounds", a.rounds);
            s.set("game", "seed", a.seed);
            cmd_simulate(&s)
        }
        Command::Datasets { action } => cmd_datasets(&s, action),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
