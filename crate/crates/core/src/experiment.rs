//! Config-driven experiments: dataset assembly, paired homotopy/vanilla runs
//! over several seeds, post-hoc evaluation, length ablations and loss
//! landscape sweeps. Every run writes into its own directory.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradflow::{trajectory_loss, CouplingSpec};
use crate::homotopy::{train_homotopy, train_vanilla, TrainConfig, TrainResult};
use crate::model::{Bound, Dynamics, Model, ModelSpec};
use crate::nn::{MlpCheckpoint, ParamVector};
use crate::ode::{fmt17, integrate_fixed};
use crate::spline::{self, Smoothing};
use crate::systems::{
    load_csv_dataset, make_dataset_extended, mse, noise_floor, sample_count, Dataset, KnownForm,
    NoiseSpec, SystemSpec,
};

/// Environment variable naming the root that relative output directories
/// are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "HOMOTOPY_NODE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LotkaVolterraHybrid,
    LorenzBlackbox,
    DoublePendulumBlackbox,
    LandscapeSweep,
    LengthAblation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Homotopy,
    Vanilla,
    #[default]
    Both,
}

/// A single trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    Homotopy,
    Vanilla,
}

impl Mode {
    pub fn trainers(self) -> Vec<Trainer> {
        match self {
            Mode::Homotopy => vec![Trainer::Homotopy],
            Mode::Vanilla => vec![Trainer::Vanilla],
            Mode::Both => vec![Trainer::Homotopy, Trainer::Vanilla],
        }
    }
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trainer::Homotopy => "homotopy",
            Trainer::Vanilla => "vanilla",
        })
    }
}

/// Where the measurements come from. Either a simulated system or a CSV file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Simulated system; defaults to the experiment's own.
    #[serde(default)]
    pub system: Option<SystemSpec>,
    /// Training window. Held-out points continue past its end at the same Δt.
    #[serde(default)]
    pub span: Option<(f64, f64)>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Noise seed, independent of the training seeds.
    #[serde(default)]
    pub seed: u64,
    /// Measured data; overrides the simulated system when present.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Number of leading CSV rows used for training; the next
    /// `extrapolation_points` rows are held out. Defaults to all rows but those.
    #[serde(default)]
    pub train_points: Option<usize>,
}

/// Grid over one coefficient of a known-form system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Coefficient name, e.g. `beta` for Lorenz or `alpha` for Lotka–Volterra.
    pub parameter: String,
    /// Inclusive `[low, high]`.
    pub range: (f64, f64),
    pub points: usize,
    pub k_values: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Fixed smoothing weight for the reference; chosen by GCV when absent.
    #[serde(default)]
    pub smoothing: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_substeps() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_extrapolation() -> usize {
    50
}

fn default_hidden() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Trainable model; defaults to the experiment's own.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Hidden width of the default black-box networks.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_extrapolation")]
    pub extrapolation_points: usize,
    pub output_dir: PathBuf,
    /// Training windows for `length_ablation`.
    #[serde(default)]
    pub spans: Vec<(f64, f64)>,
    /// Grid for `landscape_sweep`.
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Parses JSON, naming the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("field `{path}`: {}", e.inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds: must be distinct".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden: must be positive".into()));
        }
        if let Some(csv) = &self.dataset.csv {
            if !csv.is_file() {
                return Err(Error::Config(format!(
                    "dataset.csv: {} does not exist",
                    csv.display()
                )));
            }
        }
        if let Some(dt) = self.dataset.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dataset.dt: must be positive, got {dt}")));
            }
        }
        match self.experiment {
            ExperimentKind::LengthAblation if self.spans.is_empty() => {
                return Err(Error::Config("spans: length_ablation needs at least one span".into()));
            }
            ExperimentKind::LandscapeSweep => {
                let sweep = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| Error::Config("sweep: landscape_sweep needs a sweep spec".into()))?;
                sweep.validate()?;
            }
            _ => {}
        }
        if let Some(spec) = &self.model {
            Model::from_spec(spec)?;
        }
        Ok(())
    }

    /// Output directory, resolved against [`OUTPUT_ROOT_ENV`] when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => Path::new(&root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    fn default_system(&self) -> SystemSpec {
        match self.experiment {
            ExperimentKind::LotkaVolterraHybrid | ExperimentKind::LengthAblation => {
                SystemSpec::lotka_volterra()
            }
            ExperimentKind::LorenzBlackbox | ExperimentKind::LandscapeSweep => SystemSpec::lorenz(),
            ExperimentKind::DoublePendulumBlackbox => SystemSpec::double_pendulum(),
        }
    }

    pub fn system(&self) -> SystemSpec {
        self.dataset.system.clone().unwrap_or_else(|| self.default_system())
    }

    fn default_span(&self) -> (f64, f64) {
        match self.system() {
            SystemSpec::LotkaVolterra { .. } => (0.0, 6.1),
            SystemSpec::Lorenz { .. } => (0.0, 3.0),
            SystemSpec::DoublePendulum { .. } => (0.0, 99.0 * DOUBLE_PENDULUM_DT),
        }
    }

    fn default_dt(&self) -> f64 {
        match self.system() {
            SystemSpec::DoublePendulum { .. } => DOUBLE_PENDULUM_DT,
            _ => 0.1,
        }
    }

    fn default_noise(&self) -> NoiseSpec {
        match self.system() {
            SystemSpec::LotkaVolterra { .. } => NoiseSpec::Relative { fraction: 0.05 },
            SystemSpec::Lorenz { .. } => NoiseSpec::Absolute { sigma: 0.25 },
            SystemSpec::DoublePendulum { .. } => NoiseSpec::Absolute {
                sigma: DOUBLE_PENDULUM_SIGMA,
            },
        }
    }

    /// The trainable model for this experiment.
    pub fn model(&self, dim: usize) -> Result<Model> {
        let spec = match &self.model {
            Some(spec) => spec.clone(),
            None => match self.experiment {
                ExperimentKind::LotkaVolterraHybrid | ExperimentKind::LengthAblation => {
                    ModelSpec::HybridLotkaVolterra {
                        alpha: 1.3,
                        gamma: 0.8,
                        layer_sizes: vec![2, 5, 5, 1],
                    }
                }
                _ => ModelSpec::BlackBox {
                    layer_sizes: vec![dim, self.hidden, self.hidden, dim],
                },
            },
        };
        let model = Model::from_spec(&spec)?;
        if model.dim() != dim {
            return Err(Error::Config(format!(
                "model: state dimension {} does not match the data ({dim})",
                model.dim()
            )));
        }
        Ok(model)
    }

    /// Training window followed by `extrapolation_points` held-out rows.
    pub fn build_dataset(&self, span: Option<(f64, f64)>) -> Result<ExperimentData> {
        let horizon = self.extrapolation_points;
        if let Some(path) = &self.dataset.csv {
            let full = load_csv_dataset(path)?;
            let train = match self.dataset.train_points {
                Some(n) => n,
                None => full.len().checked_sub(horizon).ok_or_else(|| {
                    Error::Config(format!(
                        "dataset.csv: {} rows cannot hold {horizon} held-out points",
                        full.len()
                    ))
                })?,
            };
            if train < 2 || train + horizon > full.len() {
                return Err(Error::Config(format!(
                    "dataset.train_points: {train} training + {horizon} held-out rows exceed {} rows",
                    full.len()
                )));
            }
            let (full, _) = full.split(train + horizon)?;
            return ExperimentData::new(full, train);
        }
        let dt = self.dataset.dt.unwrap_or_else(|| self.default_dt());
        let (t0, t1) = span.or(self.dataset.span).unwrap_or_else(|| self.default_span());
        let train = sample_count((t0, t1), dt)?;
        let noise = self.dataset.noise.unwrap_or_else(|| self.default_noise());
        let full = make_dataset_extended(&self.system(), (t0, t1), dt, noise, self.dataset.seed, horizon)?;
        ExperimentData::new(full, train)
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("sweep.range: need low < high, got ({lo}, {hi})")));
        }
        if self.points < 2 {
            return Err(Error::Config("sweep.points: need at least 2".into()));
        }
        if self.k_values.is_empty() || self.k_values.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::Config("sweep.k_values: need one or more finite k ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("sweep.lambda: must lie in [0, 1], got {}", self.lambda)));
        }
        if self.substeps == 0 {
            return Err(Error::Config("sweep.substeps: must be positive".into()));
        }
        Ok(())
    }

    /// Evenly spaced grid including both ends.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { hi } else { lo + (hi - lo) * i as f64 / last })
            .collect()
    }
}

/// Sampling interval of the simulated double-pendulum fallback.
pub const DOUBLE_PENDULUM_DT: f64 = 0.05;
/// Measurement noise of the simulated double-pendulum fallback.
pub const DOUBLE_PENDULUM_SIGMA: f64 = 0.02;

/// A dataset with its first `train_points` rows used for training.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub full: Dataset,
    pub train: Dataset,
    pub train_points: usize,
}

impl ExperimentData {
    pub fn new(full: Dataset, train_points: usize) -> Result<Self> {
        let (train, _) = full.split(train_points)?;
        Ok(Self {
            full,
            train,
            train_points,
        })
    }

    pub fn horizon(&self) -> usize {
        self.full.len() - self.train_points
    }
}

/// Everything needed to re-create a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub model: ModelSpec,
    pub substeps: usize,
    pub epoch: usize,
    pub best_mse: f64,
    pub nets: Vec<MlpCheckpoint>,
}

impl ModelCheckpoint {
    pub fn new(model: &Model, params: &[f64], substeps: usize, epoch: usize, best_mse: f64) -> Result<Self> {
        Ok(Self {
            model: model.spec(),
            substeps,
            epoch,
            best_mse,
            nets: model.checkpoints(params)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_model(&self) -> Result<(Model, ParamVector)> {
        let model = Model::from_spec(&self.model)?;
        let nets = model.nets();
        if nets.len() != self.nets.len() {
            return Err(Error::Shape(format!(
                "model has {} networks, checkpoint has {}",
                nets.len(),
                self.nets.len()
            )));
        }
        let mut params = Vec::with_capacity(model.num_params());
        for (spec, ckpt) in nets.into_iter().zip(&self.nets) {
            let (stored, p) = ckpt.clone().into_parts()?;
            if stored.layer_sizes != spec.layer_sizes {
                return Err(Error::Shape(format!(
                    "checkpoint layers {:?} do not match model layers {:?}",
                    stored.layer_sizes, spec.layer_sizes
                )));
            }
            params.extend(p.into_inner());
        }
        Ok((model, ParamVector(params)))
    }
}

/// Post-hoc evaluation of a checkpoint. Non-finite values mean the solve
/// diverged and are written to JSON as `null` with the matching flag set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawMetrics", from = "RawMetrics")]
pub struct Metrics {
    pub best_epoch: usize,
    pub best_mse: f64,
    pub interpolation_mse: f64,
    /// `None` when there are no held-out points.
    pub extrapolation_mse: Option<f64>,
    pub noise_floor: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMetrics {
    best_epoch: usize,
    best_mse: Option<f64>,
    interpolation_mse: Option<f64>,
    interpolation_diverged: bool,
    extrapolation_mse: Option<f64>,
    extrapolation_diverged: bool,
    noise_floor: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<Metrics> for RawMetrics {
    fn from(m: Metrics) -> Self {
        RawMetrics {
            best_epoch: m.best_epoch,
            best_mse: finite(m.best_mse),
            interpolation_mse: finite(m.interpolation_mse),
            interpolation_diverged: !m.interpolation_mse.is_finite(),
            extrapolation_mse: m.extrapolation_mse.and_then(finite),
            extrapolation_diverged: m.extrapolation_mse.is_some_and(|v| !v.is_finite()),
            noise_floor: m.noise_floor,
        }
    }
}

impl From<RawMetrics> for Metrics {
    fn from(r: RawMetrics) -> Self {
        let inf = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
        Metrics {
            best_epoch: r.best_epoch,
            best_mse: inf(r.best_mse),
            interpolation_mse: if r.interpolation_diverged { f64::INFINITY } else { inf(r.interpolation_mse) },
            extrapolation_mse: if r.extrapolation_diverged {
                Some(f64::INFINITY)
            } else {
                r.extrapolation_mse
            },
            noise_floor: r.noise_floor,
        }
    }
}

impl Metrics {
    pub fn extrapolation_diverged(&self) -> bool {
        self.extrapolation_mse.is_some_and(|v| !v.is_finite())
    }
}

/// Predicted trajectory of a checkpoint from the first measurement, or the
/// error that stopped it.
pub fn predict(ckpt: &ModelCheckpoint, times: &[f64], u0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (model, params) = ckpt.to_model()?;
    if u0.len() != model.dim() {
        return Err(Error::Shape(format!(
            "checkpoint models {} states, data has {}",
            model.dim(),
            u0.len()
        )));
    }
    let field = Bound {
        model: &model,
        params: &params,
    };
    Ok(integrate_fixed(&field, u0, times, ckpt.substeps)?.states)
}

/// Integrates the uncoupled model from the first measurement over the
/// training window (all rows but the last `horizon`) and the held-out rows,
/// comparing with the noisy measurements.
pub fn evaluate(ckpt: &ModelCheckpoint, data: &Dataset, horizon: usize) -> Result<Metrics> {
    data.validate()?;
    let train = data
        .len()
        .checked_sub(horizon)
        .filter(|n| *n >= 2)
        .ok_or_else(|| {
            Error::Input(format!(
                "{} rows leave no training window before a horizon of {horizon}",
                data.len()
            ))
        })?;
    let (window, _) = data.split(train)?;
    let score = |d: &Dataset, range: std::ops::Range<usize>| -> Result<f64> {
        match predict(ckpt, &d.times, &d.measurements[0]) {
            Ok(states) => Ok(mse(&states[range.clone()], &d.measurements[range])),
            Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let interpolation_mse = score(&window, 0..train)?;
    let extrapolation_mse = if horizon == 0 {
        None
    } else {
        Some(score(data, train..data.len())?)
    };
    let noise_floor = window.clean.is_some().then(|| noise_floor(&window)).transpose()?;
    Ok(Metrics {
        best_epoch: ckpt.epoch,
        best_mse: ckpt.best_mse,
        interpolation_mse,
        extrapolation_mse,
        noise_floor,
    })
}

/// The outcome of one (trainer, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trainer: Trainer,
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<RunArtifacts, String>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics: Metrics,
    pub checkpoint: ModelCheckpoint,
    pub history: TrainResult,
}

/// Mean and standard error of one metric over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std_error: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: None,
                std_error: None,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Stat {
            mean: finite(mean),
            std_error: std_error.and_then(finite),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSummary {
    pub trainer: Trainer,
    pub seeds: Vec<u64>,
    /// Seeds whose training aborted, with the reason.
    pub failed: Vec<(u64, String)>,
    pub best_mse: Stat,
    pub interpolation_mse: Stat,
    pub extrapolation_mse: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub span: (f64, f64),
    pub train_points: usize,
    pub extrapolation_points: usize,
    pub noise_floor: Option<f64>,
    pub trainers: Vec<TrainerSummary>,
}

/// Results of one experiment invocation.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    /// One entry per training window (a single one unless ablating).
    pub windows: Vec<WindowReport>,
}

#[derive(Debug, Clone)]
pub struct WindowReport {
    pub data: ExperimentData,
    pub runs: Vec<RunOutcome>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.windows
            .iter()
            .flat_map(|w| &w.runs)
            .filter(|r| r.result.is_err())
            .count()
    }
}

impl WindowReport {
    /// Successful runs of one trainer, in seed order.
    pub fn artifacts(&self, trainer: Trainer) -> Vec<(u64, &RunArtifacts)> {
        self.runs
            .iter()
            .filter(|r| r.trainer == trainer)
            .filter_map(|r| r.result.as_ref().ok().map(|a| (r.seed, a)))
            .collect()
    }
}

fn train_one(
    config: &ExperimentConfig,
    model: &Model,
    data: &ExperimentData,
    trainer: Trainer,
    seed: u64,
) -> Result<RunArtifacts> {
    let train = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let init = model.init(seed)?;
    let history = match trainer {
        Trainer::Homotopy => train_homotopy(&train, &data.train, model, &init)?,
        Trainer::Vanilla => train_vanilla(&train, &data.train, model, &init)?,
    };
    let checkpoint = ModelCheckpoint::new(
        model,
        &history.best_params,
        train.substeps,
        history.best_epoch,
        history.best_mse,
    )?;
    let metrics = evaluate(&checkpoint, &data.full, data.horizon())?;
    Ok(RunArtifacts {
        metrics,
        checkpoint,
        history,
    })
}

fn write_run(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut history = BufWriter::new(File::create(dir.join("history.csv"))?);
    artifacts.history.write_history_csv(&mut history)?;
    history.flush()?;
    artifacts.checkpoint.save(dir.join("best.ckpt.json"))?;
    write_json(&dir.join("metrics.json"), &artifacts.metrics)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run_window(
    config: &ExperimentConfig,
    span: Option<(f64, f64)>,
    dir: &Path,
) -> Result<WindowReport> {
    let data = config.build_dataset(span)?;
    let model = config.model(data.full.dim())?;
    fs::create_dir_all(dir)?;
    data.full.save(&dir.join("dataset.csv"))?;

    let jobs: Vec<(Trainer, u64)> = config
        .mode
        .trainers()
        .into_iter()
        .flat_map(|t| config.seeds.iter().map(move |s| (t, *s)))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .into_par_iter()
        .map(|(trainer, seed)| {
            let run_dir = dir.join(format!("{trainer}_seed{seed}"));
            let result = train_one(config, &model, &data, trainer, seed).and_then(|a| {
                write_run(&run_dir, &a)?;
                Ok(a)
            });
            let result = result.map_err(|e| {
                log::warn!("{trainer} seed {seed}: {e}");
                let _ = fs::create_dir_all(&run_dir);
                let _ = fs::write(run_dir.join("error.txt"), format!("{e}\n"));
                e.to_string()
            });
            RunOutcome {
                trainer,
                seed,
                dir: run_dir,
                result,
            }
        })
        .collect();

    let trainers = config
        .mode
        .trainers()
        .into_iter()
        .map(|trainer| {
            let mine: Vec<&RunOutcome> = runs.iter().filter(|r| r.trainer == trainer).collect();
            let ok: Vec<&RunArtifacts> = mine.iter().filter_map(|r| r.result.as_ref().ok()).collect();
            let stat = |f: &dyn Fn(&Metrics) -> Option<f64>| {
                Stat::of(&ok.iter().filter_map(|a| f(&a.metrics)).collect::<Vec<_>>())
            };
            TrainerSummary {
                trainer,
                seeds: config.seeds.clone(),
                failed: mine
                    .iter()
                    .filter_map(|r| r.result.as_ref().err().map(|e| (r.seed, e.clone())))
                    .collect(),
                best_mse: stat(&|m| Some(m.best_mse)),
                interpolation_mse: stat(&|m| Some(m.interpolation_mse)),
                extrapolation_mse: stat(&|m| m.extrapolation_mse),
            }
        })
        .collect();
    let times = &data.train.times;
    let summary = Summary {
        experiment: config.experiment,
        span: (times[0], times[times.len() - 1]),
        train_points: data.train_points,
        extrapolation_points: data.horizon(),
        noise_floor: data.train.clean.is_some().then(|| noise_floor(&data.train)).transpose()?,
        trainers,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(WindowReport {
        data,
        runs,
        summary,
    })
}

/// Runs a training experiment (or a length ablation) and writes its
/// artifacts below the resolved output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out = config.resolved_output_dir();
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), config)?;
    let windows = match config.experiment {
        ExperimentKind::LandscapeSweep => {
            return Err(Error::Config(
                "experiment: landscape_sweep is run with `sweep`, not `run`".into(),
            ))
        }
        ExperimentKind::LengthAblation => {
            let mut windows = Vec::with_capacity(config.spans.len());
            for &(t0, t1) in &config.spans {
                let dir = out.join(format!("span_{t0}_{t1}"));
                windows.push(run_window(config, Some((t0, t1)), &dir)?);
            }
            write_ablation_table(&out.join("ablation.csv"), &windows)?;
            windows
        }
        _ => vec![run_window(config, None, &out)?],
    };
    Ok(ExperimentReport {
        output_dir: out,
        windows,
    })
}

/// Runs the experiment described by a JSON config file.
pub fn run_experiment_file(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    run_experiment(&ExperimentConfig::load(path)?)
}

fn write_ablation_table(path: &Path, windows: &[WindowReport]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "span_start,span_end,trainer,seed,interpolation_mse,extrapolation_mse,noise_floor"
    )?;
    let cell = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for w in windows {
        for r in &w.runs {
            let (interp, extrap) = match &r.result {
                Ok(a) => (Some(a.metrics.interpolation_mse), a.metrics.extrapolation_mse),
                Err(_) => (None, None),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(w.summary.span.0),
                fmt17(w.summary.span.1),
                r.trainer,
                r.seed,
                cell(interp),
                cell(extrap),
                cell(w.summary.noise_floor),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One point of a loss landscape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub k: f64,
    pub lambda: f64,
    /// `+∞` when the solve failed at this point.
    pub loss: f64,
}

/// The known-form system matching a simulated system, with its true
/// coefficients.
pub fn known_form(system: &SystemSpec) -> Result<(KnownForm, Vec<f64>, &'static [&'static str])> {
    match system {
        SystemSpec::LotkaVolterra { params, .. } => Ok((
            KnownForm::LotkaVolterra,
            params.to_vec(),
            &["alpha", "beta", "gamma", "delta"],
        )),
        SystemSpec::Lorenz { params, .. } => {
            Ok((KnownForm::Lorenz, params.to_vec(), &["sigma", "rho", "beta"]))
        }
        SystemSpec::DoublePendulum { .. } => Err(Error::Config(
            "sweep: only lotka_volterra and lorenz have known-form sweeps".into(),
        )),
    }
}

/// Coupled trajectory loss of the known-form `system` against `data` with
/// one coefficient varied over the grid, for every `k`.
pub fn landscape_sweep(system: &SystemSpec, data: &Dataset, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let (form, truth, names) = known_form(system)?;
    let index = names.iter().position(|n| *n == spec.parameter).ok_or_else(|| {
        Error::Config(format!(
            "sweep.parameter: `{}` is not one of {names:?}",
            spec.parameter
        ))
    })?;
    let smoothing = spec.smoothing.map_or_else(Smoothing::default, Smoothing::Fixed);
    let reference = spline::fit(&data.times, &data.measurements, &smoothing)?;
    let grid = spec.grid();
    let points: Vec<(f64, f64)> = spec
        .k_values
        .iter()
        .flat_map(|k| grid.iter().map(move |v| (*k, *v)))
        .collect();
    points
        .into_par_iter()
        .map(|(k, value)| {
            let mut params = truth.clone();
            params[index] = value;
            let coupling = CouplingSpec::new(k, spec.lambda)?;
            let loss = match trajectory_loss(&form, &params, data, coupling, Some(&reference), spec.substeps) {
                Ok(r) => r.loss,
                Err(Error::Divergence { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                value,
                k,
                lambda: spec.lambda,
                loss,
            })
        })
        .collect()
}

/// Long-format CSV `parameter,value,k,lambda,loss`; failures read `inf`.
pub fn write_sweep_csv<W: Write>(mut out: W, parameter: &str, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "parameter,value,k,lambda,loss")?;
    for r in rows {
        let loss = if r.loss.is_finite() { fmt17(r.loss) } else { "inf".into() };
        writeln!(
            out,
            "{parameter},{},{},{},{loss}",
            fmt17(r.value),
            fmt17(r.k),
            fmt17(r.lambda)
        )?;
    }
    Ok(())
}

/// Runs the sweep of a `landscape_sweep` config, writing `landscape.csv`
/// and the data it was computed against.
pub fn run_sweep(config: &ExperimentConfig) -> Result<(PathBuf, Vec<SweepRow>)> {
    config.validate()?;
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep: config has no sweep spec".into()))?;
    let data = ExperimentConfig {
        extrapolation_points: 0,
        ..config.clone()
    }
    .build_dataset(None)?
    .full;
    let rows = landscape_sweep(&config.system(), &data, spec)?;
    let out = config.resolved_output_dir();
    fs::create_dir_all(&out)?;
    data.save(&out.join("dataset.csv"))?;
    let path = out.join("landscape.csv");
    let mut file = BufWriter::new(File::create(&path)?);
    write_sweep_csv(&mut file, &spec.parameter, &rows)?;
    file.flush()?;
    Ok((path, rows))
}

/// Number of strict interior local minima of a sampled curve.
pub fn count_local_minima(values: &[f64]) -> usize {
    values
        .windows(3)
        .filter(|w| w[1] < w[0] && w[1] < w[2])
        .count()
}
