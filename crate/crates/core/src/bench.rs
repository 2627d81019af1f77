//! Training under gradient dropout and target noise, evaluation under input
//! noise, and the resumable sweep over configurations.
//!
//! A sweep cell is one `(seed, p, target noise)` triple. Every random choice a
//! cell makes comes from substreams of its seed (split, init, masks, batches,
//! target noise, evaluation noise), so a cell's output does not depend on
//! which other cells ran, in what order, or on how many threads.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::Ini;
use crate::data::{self, Dataset, Registry};
use crate::dropout::sample_masks;
use crate::error::{config, io_err, usage, Error, Result};
use crate::lens::{self, DenseParams, NetworkSpec, Task};
use crate::metrics::{self, CurvePoint, Metric, MetricCurve};
use crate::optim::{Optimizer, OptimizerKind};
use crate::plot::{self, Series};
use crate::stochastics::{self, Rng, TargetNoiseSpec};

pub const RESULTS_HEADER: &str = "dataset,seed,p,target_noise,amplitude,metric,value,stderr";
pub const LOSS_HEADER: &str = "dataset,seed,p,target_noise,epoch,train_loss";
pub const FAILURES_HEADER: &str = "dataset,seed,p,target_noise,message";
pub const RESULTS_FILE: &str = "results.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const MANIFEST_FILE: &str = "manifest.ini";

pub const DEFAULT_P_GRID: &[f64] = &[0.0, 0.01, 0.05, 0.5, 0.9, 0.95, 0.99];

/// Eleven points from 0 to 2 in steps of 0.2.
pub fn default_amplitudes() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 5.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Keep probability of the gradient masks; `None` trains without masking.
    pub p: Option<f64>,
    pub target_noise: TargetNoiseSpec,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: Some(1.0),
            target_noise: TargetNoiseSpec::NoNoise,
            optimizer: OptimizerKind::default(),
            epochs: 50,
            batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p {
            if !(0.0..=1.0).contains(&p) {
                return Err(usage(format!("gradient keep probability p = {p} is outside [0, 1]")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(usage("epochs and batch size must be at least 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: Vec<DenseParams>,
    pub params: Vec<DenseParams>,
    /// Mean per-example training loss on the noisy targets, one per epoch.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    /// Largest absolute change of any parameter since initialization.
    pub fn max_param_change(&self) -> f64 {
        max_abs_diff(&self.initial, &self.params)
    }
}

pub fn max_abs_diff(a: &[DenseParams], b: &[DenseParams]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values().zip(y.values()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Trains from a fresh initialization.
///
/// Each epoch re-noises the targets and reshuffles; each batch runs the
/// forward pass unmasked, samples one mask plan shared by the whole batch,
/// backpropagates through it and takes one optimizer step on the batch-mean
/// gradient.
pub fn train(spec: &NetworkSpec, dataset: &Dataset, cfg: &TrainConfig, rng: &Rng) -> Result<TrainOutcome> {
    let initial = spec.init_params(&mut rng.substream("init"));
    train_from(spec, dataset, cfg, rng, initial)
}

/// As [`train`], starting from the given parameters.
pub fn train_from(
    spec: &NetworkSpec,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &Rng,
    initial: Vec<DenseParams>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    spec.check_params(&initial)?;
    if dataset.is_empty() {
        return Err(usage("training set is empty"));
    }
    if dataset.num_features() != spec.input_dim || dataset.task != spec.task {
        return Err(config("dataset does not match the network"));
    }
    let mut mask_rng = rng.substream("masks");
    let mut batch_rng = rng.substream("batches");
    let mut noise_rng = rng.substream("target-noise");
    let sigma_y = data::target_sigma(dataset)?;

    let mut params = initial.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let mut grads = spec.zero_params();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let targets = match spec.task {
            Task::Regression => {
                stochastics::noise_targets(&dataset.targets, &cfg.target_noise, sigma_y, &mut noise_rng)?
            }
            Task::Classification { classes } => stochastics::noise_class_targets(
                &dataset.targets,
                classes,
                &cfg.target_noise,
                sigma_y,
                &mut noise_rng,
            )?,
        };
        batch_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let masks = cfg.p.map(|p| sample_masks(spec, p, &mut mask_rng)).transpose()?;
            for g in &mut grads {
                g.values_mut().for_each(|v| *v = 0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (out, tape) = lens::network_forward(spec, &params, dataset.features.row(i))?;
                let (loss, grad_out) = spec.task.loss(&out, targets[i])?;
                epoch_loss += loss;
                lens::accumulate_backward(spec, &params, &tape, &grad_out, masks.as_ref(), &mut grads, scale)?;
            }
            optimizer.step(&mut params, &grads)?;
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss: mean,
                history,
            });
        }
        history.push(mean);
    }
    Ok(TrainOutcome {
        initial,
        params,
        loss_history: history,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Every task metric on `features` against `targets`. `None` marks a metric
/// that is undefined here (AUC with a single class present).
pub fn task_metrics(
    spec: &NetworkSpec,
    params: &[DenseParams],
    features: &lens::Matrix,
    targets: &[f64],
) -> Result<Vec<(Metric, Option<f64>)>> {
    let outputs = features
        .iter_rows()
        .map(|x| lens::predict(spec, params, x))
        .collect::<Result<Vec<_>>>()?;
    match spec.task {
        Task::Regression => {
            let pred: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            Ok(vec![
                (Metric::Mse, Some(metrics::mse(&pred, targets)?)),
                (Metric::Smape, Some(metrics::smape(&pred, targets)?)),
            ])
        }
        Task::Classification { classes } => {
            let truth: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
            let predicted: Vec<usize> = outputs.iter().map(|o| argmax(o)).collect();
            let probs: Vec<Vec<f64>> = outputs.iter().map(|o| lens::softmax(o)).collect();
            let auc = if classes == 2 {
                let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
                let positive: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
                metrics::roc_auc(&scores, &positive)?
            } else {
                metrics::roc_auc_ovr(&probs, &truth, classes)?
            };
            Ok(vec![
                (Metric::Accuracy, Some(metrics::accuracy(&predicted, &truth)?)),
                (Metric::F1, Some(metrics::f1_macro(&predicted, &truth, classes)?)),
                (Metric::RocAuc, auc),
            ])
        }
    }
}

/// Metric curves over input-noise amplitudes. Each amplitude is evaluated
/// `repetitions` times with fresh uniform noise on the (standardized) test
/// features; amplitude 0 is evaluated once since it is noise-free.
pub fn evaluate_under_noise(
    spec: &NetworkSpec,
    params: &[DenseParams],
    test: &Dataset,
    amplitudes: &[f64],
    repetitions: usize,
    rng: &mut Rng,
) -> Result<Vec<MetricCurve>> {
    if test.is_empty() {
        return Err(usage("test set is empty"));
    }
    if repetitions == 0 {
        return Err(usage("at least one repetition per amplitude is needed"));
    }
    let mut curves: Vec<MetricCurve> = Metric::for_task(spec.task)
        .iter()
        .map(|m| MetricCurve::new(m.name()))
        .collect();
    for &amplitude in amplitudes {
        let reps = if amplitude == 0.0 { 1 } else { repetitions };
        let mut samples: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(reps); curves.len()];
        for _ in 0..reps {
            let noisy = stochastics::noise_inputs(&test.features, amplitude, rng)?;
            for (slot, (_, value)) in samples.iter_mut().zip(task_metrics(spec, params, &noisy, &test.targets)?) {
                slot.push(value);
            }
        }
        for (curve, values) in curves.iter_mut().zip(samples) {
            let defined: Option<Vec<f64>> = values.into_iter().collect();
            let (value, stderr) = match defined {
                Some(v) => {
                    let (m, se) = metrics::mean_stderr(&v);
                    (Some(m), Some(se))
                }
                None => (None, None),
            };
            curve.push(CurvePoint { amplitude, value, stderr })?;
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dataset: String,
    pub p_grid: Vec<f64>,
    pub target_noises: Vec<TargetNoiseSpec>,
    pub amplitudes: Vec<f64>,
    pub repetitions: usize,
    pub seeds: Vec<u64>,
    pub root_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub train_fraction: f64,
}

impl SweepConfig {
    pub fn new(dataset: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            p_grid: DEFAULT_P_GRID.to_vec(),
            target_noises: vec![TargetNoiseSpec::NoNoise],
            amplitudes: default_amplitudes(),
            repetitions: 8,
            seeds: vec![0],
            root_seed: 0,
            epochs: 50,
            batch_size: 64,
            optimizer: OptimizerKind::default(),
            hidden_layers: NetworkSpec::DEFAULT_HIDDEN_LAYERS,
            hidden_width: NetworkSpec::DEFAULT_HIDDEN_WIDTH,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() || self.target_noises.is_empty() || self.amplitudes.is_empty() || self.seeds.is_empty() {
            return Err(usage("p grid, target noises, amplitudes and seeds must all be non-empty"));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(usage(format!("p = {p} in the grid is outside [0, 1]")));
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(usage("amplitudes must be nonnegative"));
        }
        if self.amplitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(usage("amplitudes must be strictly increasing"));
        }
        if self.repetitions == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(usage("repetitions, epochs and batch size must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(usage(format!("train fraction {} must lie in (0, 1)", self.train_fraction)));
        }
        self.optimizer.validate()
    }

    /// Cells in execution order: seeds, then p, then target noise.
    pub fn cells(&self) -> Vec<CellId> {
        let mut cells = Vec::new();
        for &seed in &self.seeds {
            for &p in &self.p_grid {
                for noise in &self.target_noises {
                    cells.push(CellId {
                        dataset: self.dataset.clone(),
                        seed,
                        p,
                        target_noise: *noise,
                    });
                }
            }
        }
        cells
    }

    pub fn network_for(&self, dataset: &Dataset) -> NetworkSpec {
        NetworkSpec::for_task(dataset.num_features(), dataset.task).with_hidden(self.hidden_layers, self.hidden_width)
    }

    pub fn to_ini(&self) -> Ini {
        let join = |v: Vec<String>| v.join(",");
        let mut ini = Ini::default();
        let s = "sweep";
        ini.set(s, "dataset", self.dataset.clone());
        ini.set(s, "root_seed", self.root_seed.to_string());
        ini.set(s, "seeds", join(self.seeds.iter().map(u64::to_string).collect()));
        ini.set(s, "p_grid", join(self.p_grid.iter().map(f64::to_string).collect()));
        ini.set(s, "target_noises", join(self.target_noises.iter().map(ToString::to_string).collect()));
        ini.set(s, "amplitudes", join(self.amplitudes.iter().map(f64::to_string).collect()));
        ini.set(s, "repetitions", self.repetitions.to_string());
        ini.set(s, "epochs", self.epochs.to_string());
        ini.set(s, "batch_size", self.batch_size.to_string());
        ini.set(s, "train_fraction", self.train_fraction.to_string());
        ini.set(s, "hidden_layers", self.hidden_layers.to_string());
        ini.set(s, "hidden_width", self.hidden_width.to_string());
        ini.set(s, "optimizer", self.optimizer.to_string());
        ini.set(s, "learning_rate", self.optimizer.lr().to_string());
        if let OptimizerKind::Adam { beta1, beta2, eps, .. } = self.optimizer {
            ini.set(s, "beta1", beta1.to_string());
            ini.set(s, "beta2", beta2.to_string());
            ini.set(s, "epsilon", eps.to_string());
        }
        ini
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellId {
    pub dataset: String,
    pub seed: u64,
    pub p: f64,
    pub target_noise: TargetNoiseSpec,
}

impl CellId {
    /// The `dataset,seed,p,target_noise` prefix shared by every output row.
    pub fn key(&self) -> String {
        format!("{},{},{},{}", self.dataset, self.seed, self.p, self.target_noise)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub cell: CellId,
    pub loss_history: Vec<f64>,
    pub curves: Vec<MetricCurve>,
    pub duration: Duration,
    /// Diagnostic when training diverged; curves are then empty.
    pub failure: Option<String>,
}

/// Train/test data for one seed: split, standardized on train statistics.
pub fn prepare_split(dataset: &Dataset, train_fraction: f64, seed_rng: &Rng) -> Result<(Dataset, Dataset)> {
    let (train_raw, test_raw) = data::split(dataset, train_fraction, &mut seed_rng.substream("split"))?;
    let standardizer = data::standardize_fit(&train_raw)?;
    Ok((
        data::standardize_apply(&standardizer, &train_raw)?,
        data::standardize_apply(&standardizer, &test_raw)?,
    ))
}

/// Root of every random stream used by one seed of a sweep.
pub fn seed_rng(cfg: &SweepConfig, seed: u64) -> Rng {
    Rng::new(cfg.root_seed).substream(&format!("seed:{seed}"))
}

pub fn run_cell(cfg: &SweepConfig, dataset: &Dataset, cell: &CellId) -> Result<RunResult> {
    let start = Instant::now();
    let rng = seed_rng(cfg, cell.seed);
    let (train_set, test_set) = prepare_split(dataset, cfg.train_fraction, &rng)?;
    let spec = cfg.network_for(dataset);
    let tc = TrainConfig {
        p: Some(cell.p),
        target_noise: cell.target_noise,
        optimizer: cfg.optimizer,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
    };
    let (loss_history, curves, failure) = match train(&spec, &train_set, &tc, &rng.substream("train")) {
        Ok(outcome) => {
            let curves = evaluate_under_noise(
                &spec,
                &outcome.params,
                &test_set,
                &cfg.amplitudes,
                cfg.repetitions,
                &mut rng.substream("eval"),
            )?;
            (outcome.loss_history, curves, None)
        }
        Err(Error::Diverged { epoch, loss, history }) => {
            (history, Vec::new(), Some(format!("training diverged at epoch {epoch} (loss {loss})")))
        }
        Err(e) => return Err(e),
    };
    Ok(RunResult {
        cell: cell.clone(),
        loss_history,
        curves,
        duration: start.elapsed(),
        failure,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn results_rows(cfg: &SweepConfig, task: Task, r: &RunResult) -> String {
    let key = r.cell.key();
    let mut out = String::new();
    if r.failure.is_some() {
        for &a in &cfg.amplitudes {
            for m in Metric::for_task(task) {
                let _ = writeln!(out, "{key},{a},{},NA,NA", m.name());
            }
        }
        return out;
    }
    for &a in &cfg.amplitudes {
        for c in &r.curves {
            let p = c.points.iter().find(|p| p.amplitude == a).expect("curve covers grid");
            let _ = writeln!(out, "{key},{a},{},{},{}", c.metric, fmt_opt(p.value), fmt_opt(p.stderr));
        }
    }
    out
}

fn loss_rows(r: &RunResult) -> String {
    let key = r.cell.key();
    let mut out = String::new();
    for (e, l) in r.loss_history.iter().enumerate() {
        let _ = writeln!(out, "{key},{},{l}", e + 1);
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub resume: bool,
    pub jobs: usize,
    /// Stop after this many new cells, leaving the sweep resumable.
    pub max_new_cells: Option<usize>,
    pub plots: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            resume: false,
            jobs: 1,
            max_new_cells: None,
            plots: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub total_cells: usize,
    pub skipped_cells: usize,
    pub results: Vec<RunResult>,
}

fn append(path: &Path, text: &str) -> Result<()> {
    if text.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

fn write_fresh(path: &Path, header: &str) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    writeln!(f, "{header}").map_err(io_err(path))
}

/// Cell keys fully present in a results file, after dropping any torn
/// trailing line.
fn completed_keys(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let keep = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if keep.len() != text.len() {
        std::fs::write(path, keep).map_err(io_err(path))?;
    }
    Ok(keep
        .lines()
        .skip(1)
        .filter_map(|l| {
            let fields: Vec<&str> = l.splitn(5, ',').collect();
            (fields.len() == 5).then(|| fields[..4].join(","))
        })
        .collect())
}

/// Keeps only rows of completed cells in an auxiliary per-cell file.
fn prune_incomplete(path: &Path, header: &str, done: &HashSet<String>) -> Result<()> {
    if !path.exists() {
        return write_fresh(path, header);
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let whole_lines = &text[..text.rfind('\n').map_or(0, |i| i + 1)];
    let mut out = format!("{header}\n");
    for line in whole_lines.lines().skip(1) {
        let key: Vec<&str> = line.splitn(5, ',').collect();
        if key.len() == 5 && done.contains(&key[..4].join(",")) {
            out.push_str(line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Resolves the dataset (failing before any training) and runs the sweep.
pub fn run_sweep(cfg: &SweepConfig, registry: &Registry, out_dir: &Path, opts: &SweepOptions) -> Result<SweepSummary> {
    cfg.validate()?;
    let dataset = registry.load_dataset(&cfg.dataset)?;
    run_sweep_on(cfg, &dataset, out_dir, opts)
}

pub fn run_sweep_on(cfg: &SweepConfig, dataset: &Dataset, out_dir: &Path, opts: &SweepOptions) -> Result<SweepSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let results_path = out_dir.join(RESULTS_FILE);
    let loss_path = out_dir.join(LOSS_FILE);
    let failures_path = out_dir.join(FAILURES_FILE);
    std::fs::write(out_dir.join(MANIFEST_FILE), cfg.to_ini().render()).map_err(io_err(out_dir.join(MANIFEST_FILE)))?;

    let done = if opts.resume && results_path.exists() {
        let done = completed_keys(&results_path)?;
        prune_incomplete(&loss_path, LOSS_HEADER, &done)?;
        prune_incomplete(&failures_path, FAILURES_HEADER, &done)?;
        done
    } else {
        write_fresh(&results_path, RESULTS_HEADER)?;
        write_fresh(&loss_path, LOSS_HEADER)?;
        write_fresh(&failures_path, FAILURES_HEADER)?;
        HashSet::new()
    };

    let cells = cfg.cells();
    let mut pending: Vec<&CellId> = cells.iter().filter(|c| !done.contains(&c.key())).collect();
    let skipped = cells.len() - pending.len();
    if let Some(limit) = opts.max_new_cells {
        pending.truncate(limit);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| config(e.to_string()))?;
    let mut results = Vec::with_capacity(pending.len());
    for wave in pending.chunks(opts.jobs.max(1)) {
        let finished: Vec<Result<RunResult>> =
            pool.install(|| wave.par_iter().map(|c| run_cell(cfg, dataset, c)).collect());
        for r in finished {
            let r = r?;
            log::info!(
                "cell {} done in {:.1}s{}",
                r.cell.key(),
                r.duration.as_secs_f64(),
                r.failure.as_deref().map(|f| format!(" ({f})")).unwrap_or_default()
            );
            append(&loss_path, &loss_rows(&r))?;
            if let Some(f) = &r.failure {
                append(&failures_path, &format!("{},{}\n", r.cell.key(), f.replace(',', ";")))?;
            }
            append(&results_path, &results_rows(cfg, dataset.task, &r))?;
            results.push(r);
        }
    }
    if opts.plots {
        write_plots(&results_path, out_dir)?;
    }
    Ok(SweepSummary {
        total_cells: cells.len(),
        skipped_cells: skipped,
        results,
    })
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub seed: u64,
    pub p: f64,
    pub target_noise: String,
    pub amplitude: f64,
    pub metric: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let opt = |s: &str| -> Result<Option<f64>> {
        if s == "NA" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| usage(format!("bad number '{s}' in results")))
        }
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| usage(format!("bad number '{}' in results", &rec[i])));
        rows.push(ResultRow {
            dataset: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| usage(format!("bad seed '{}'", &rec[1])))?,
            p: num(2)?,
            target_noise: rec[3].to_string(),
            amplitude: num(4)?,
            metric: rec[5].to_string(),
            value: opt(&rec[6])?,
            stderr: opt(&rec[7])?,
        });
    }
    Ok(rows)
}

/// Mean over seeds of each `(p, noise)` series of one metric.
pub fn seed_averaged_series(rows: &[ResultRow], dataset: &str, metric: &str) -> Vec<Series> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows.iter().filter(|r| r.dataset == dataset && r.metric == metric) {
        if !keys.iter().any(|(p, n)| *p == r.p && *n == r.target_noise) {
            keys.push((r.p, r.target_noise.clone()));
        }
    }
    keys.into_iter()
        .map(|(p, noise)| {
            let mut amps: Vec<f64> = Vec::new();
            for r in rows.iter().filter(|r| r.dataset == dataset && r.metric == metric && r.p == p && r.target_noise == noise) {
                if !amps.contains(&r.amplitude) {
                    amps.push(r.amplitude);
                }
            }
            let points = amps
                .into_iter()
                .filter_map(|a| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| {
                            r.dataset == dataset && r.metric == metric && r.p == p && r.target_noise == noise && r.amplitude == a
                        })
                        .filter_map(|r| r.value)
                        .collect();
                    (!vals.is_empty()).then(|| (a, vals.iter().sum::<f64>() / vals.len() as f64))
                })
                .collect();
            Series {
                label: format!("p={p} {noise}"),
                points,
            }
        })
        .collect()
}

/// One SVG per (dataset, metric): `plot_<dataset>_<metric>.svg`.
pub fn write_plots(results_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_results(results_path)?;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in &rows {
        if !pairs.iter().any(|(d, m)| *d == r.dataset && *m == r.metric) {
            pairs.push((r.dataset.clone(), r.metric.clone()));
        }
    }
    let mut written = Vec::new();
    for (dataset, metric) in pairs {
        let series = seed_averaged_series(&rows, &dataset, &metric);
        let svg = plot::line_chart(&format!("{dataset}: {metric}"), "input noise amplitude", &metric, &series);
        let path = out_dir.join(format!("plot_{dataset}_{metric}.svg"));
        std::fs::write(&path, svg).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lens::Matrix;

    fn linear_dataset(n: usize) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        Dataset {
            targets: xs.iter().map(|x| 2.0 * x).collect(),
            features: Matrix::from_vec(n, 1, xs).unwrap(),
            task: Task::Regression,
            feature_names: vec!["x".into()],
            class_labels: vec![],
        }
    }

    #[test]
    fn fits_a_line() {
        let d = linear_dataset(64);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(0, 0);
        let cfg = TrainConfig {
            p: Some(1.0),
            optimizer: OptimizerKind::sgd(0.1),
            epochs: 60,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train(&spec, &d, &cfg, &Rng::new(1)).unwrap();
        assert_eq!(out.loss_history.len(), 60);
        assert!(out.loss_history[3..].windows(2).all(|w| w[1] <= w[0]), "{:?}", out.loss_history);
        let final_mse = task_metrics(&spec, &out.params, &d.features, &d.targets).unwrap()[0].1.unwrap();
        assert!(final_mse < 1e-3, "{final_mse}");
    }

    #[test]
    fn p_zero_freezes_parameters() {
        let d = linear_dataset(20);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(2, 4);
        let cfg = TrainConfig { p: Some(0.0), epochs: 3, batch_size: 5, ..TrainConfig::default() };
        let out = train(&spec, &d, &cfg, &Rng::new(2)).unwrap();
        assert_eq!(out.max_param_change(), 0.0);
        assert_eq!(out.initial, out.params);
    }

    #[test]
    fn divergence_is_reported_with_history() {
        let mut d = linear_dataset(16);
        d.targets.iter_mut().for_each(|t| *t *= 1e150);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(0, 0);
        let cfg = TrainConfig { optimizer: OptimizerKind::sgd(10.0), epochs: 50, batch_size: 4, ..TrainConfig::default() };
        match train(&spec, &d, &cfg, &Rng::new(0)) {
            Err(Error::Diverged { epoch, history, .. }) => assert_eq!(history.len(), epoch - 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_train_config() {
        let d = linear_dataset(8);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(0, 0);
        for cfg in [
            TrainConfig { p: Some(1.5), ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train(&spec, &d, &cfg, &Rng::new(0)), Err(Error::Usage(_))));
        }
    }

    #[test]
    fn zero_amplitude_matches_clean_metrics() {
        let d = linear_dataset(30);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(1, 3);
        let params = spec.init_params(&mut Rng::new(4));
        let clean = task_metrics(&spec, &params, &d.features, &d.targets).unwrap();
        let curves = evaluate_under_noise(&spec, &params, &d, &[0.0, 0.5], 3, &mut Rng::new(5)).unwrap();
        for (curve, (m, v)) in curves.iter().zip(clean) {
            assert_eq!(curve.metric, m.name());
            assert_eq!(curve.points[0].value, v);
            assert_eq!(curve.points[0].stderr, Some(0.0));
        }
    }

    #[test]
    fn constant_model_gives_flat_curve() {
        let d = linear_dataset(40);
        let spec = NetworkSpec::for_task(1, Task::Regression).with_hidden(1, 3);
        let mut params = spec.zero_params();
        params[1].bias[0] = 0.7;
        let curves = evaluate_under_noise(&spec, &params, &d, &default_amplitudes(), 4, &mut Rng::new(5)).unwrap();
        let mse = &curves[0];
        let v0 = mse.points[0].value.unwrap();
        assert!(mse.points.iter().all(|p| (p.value.unwrap() - v0).abs() <= p.stderr.unwrap() + 1e-12));
    }

    #[test]
    fn single_class_test_marks_auc_missing() {
        let d = Dataset {
            features: Matrix::from_vec(3, 1, vec![0.1, 0.2, 0.3]).unwrap(),
            targets: vec![1.0; 3],
            task: Task::Classification { classes: 2 },
            feature_names: vec!["x".into()],
            class_labels: vec!["a".into(), "b".into()],
        };
        let spec = NetworkSpec::for_task(1, d.task).with_hidden(1, 2);
        let params = spec.init_params(&mut Rng::new(1));
        let curves = evaluate_under_noise(&spec, &params, &d, &[0.0, 1.0], 2, &mut Rng::new(2)).unwrap();
        let auc = curves.iter().find(|c| c.metric == "roc_auc").unwrap();
        assert!(auc.points.iter().all(|p| p.value.is_none()));
        assert!(curves.iter().filter(|c| c.metric != "roc_auc").all(|c| c.points.iter().all(|p| p.value.is_some())));
    }

    #[test]
    fn sweep_config_validation() {
        let mut c = SweepConfig::new("x");
        c.validate().unwrap();
        assert_eq!(c.amplitudes.len(), 11);
        assert_eq!(c.amplitudes[10], 2.0);
        c.p_grid = vec![0.5, 1.2];
        assert!(c.validate().is_err());
        let mut c = SweepConfig::new("x");
        c.amplitudes = vec![0.0, 0.0];
        assert!(c.validate().is_err());
        let mut c = SweepConfig::new("x");
        c.p_grid = vec![0.0, 0.9];
        c.seeds = vec![1, 2];
        assert_eq!(c.cells().len(), 4);
    }
}
