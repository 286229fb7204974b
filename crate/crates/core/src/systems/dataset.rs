use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DoublePendulumParams, LorenzParams, LvParams};
use crate::error::{Error, Result};
use crate::ode::{check_times, fmt17, integrate_adaptive, VectorField};

/// Solver tolerances for data generation.
pub const DATA_RTOL: f64 = 1e-7;
pub const DATA_ATOL: f64 = 1e-9;

/// Measurement noise added to a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    None,
    /// Per-dimension σ = `fraction` × mean of that dimension's clean trajectory.
    Relative { fraction: f64 },
    /// Fixed σ for every dimension.
    Absolute { sigma: f64 },
}

/// A simulated system together with its initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemSpec {
    LotkaVolterra {
        #[serde(default)]
        params: LvParams,
        #[serde(default = "lv_initial")]
        initial: Vec<f64>,
    },
    Lorenz {
        #[serde(default)]
        params: LorenzParams,
        #[serde(default = "lorenz_initial")]
        initial: Vec<f64>,
    },
    DoublePendulum {
        #[serde(default)]
        params: DoublePendulumParams,
        #[serde(default = "pendulum_initial")]
        initial: Vec<f64>,
    },
}

fn lv_initial() -> Vec<f64> {
    LvParams::INITIAL.to_vec()
}

fn lorenz_initial() -> Vec<f64> {
    LorenzParams::INITIAL.to_vec()
}

fn pendulum_initial() -> Vec<f64> {
    vec![1.2, 0.6, 0.0, 0.0]
}

impl SystemSpec {
    pub fn lotka_volterra() -> Self {
        SystemSpec::LotkaVolterra {
            params: LvParams::default(),
            initial: lv_initial(),
        }
    }

    pub fn lorenz() -> Self {
        SystemSpec::Lorenz {
            params: LorenzParams::default(),
            initial: lorenz_initial(),
        }
    }

    pub fn double_pendulum() -> Self {
        SystemSpec::DoublePendulum {
            params: DoublePendulumParams::default(),
            initial: pendulum_initial(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::LotkaVolterra { .. } => "lotka_volterra",
            SystemSpec::Lorenz { .. } => "lorenz",
            SystemSpec::DoublePendulum { .. } => "double_pendulum",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::LotkaVolterra { .. } => 2,
            SystemSpec::Lorenz { .. } => 3,
            SystemSpec::DoublePendulum { .. } => 4,
        }
    }

    pub fn initial(&self) -> &[f64] {
        match self {
            SystemSpec::LotkaVolterra { initial, .. }
            | SystemSpec::Lorenz { initial, .. }
            | SystemSpec::DoublePendulum { initial, .. } => initial,
        }
    }

    pub fn field(&self) -> Box<dyn VectorField + Send + Sync> {
        match self {
            SystemSpec::LotkaVolterra { params, .. } => Box::new(*params),
            SystemSpec::Lorenz { params, .. } => Box::new(*params),
            SystemSpec::DoublePendulum { params, .. } => Box::new(*params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: Option<SystemSpec>,
    pub noise: Option<NoiseSpec>,
    pub seed: Option<u64>,
    pub source: Option<PathBuf>,
    /// Column names of the measurements.
    pub names: Vec<String>,
}

/// Time-stamped measurements, optionally with the noise-free truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub measurements: Vec<Vec<f64>>,
    pub clean: Option<Vec<Vec<f64>>>,
    pub meta: DatasetMeta,
}

/// Number of samples `t0, t0 + dt, …` covering `[t0, t1]`.
pub fn sample_count(span: (f64, f64), dt: f64) -> Result<usize> {
    let (t0, t1) = span;
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(Error::Config(format!(
            "invalid sampling: span ({t0}, {t1}), dt {dt}"
        )));
    }
    let steps = (t1 - t0) / dt;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "span ({t0}, {t1}) is not a whole number of dt = {dt} steps"
        )));
    }
    Ok(rounded as usize + 1)
}

/// Simulates `system` over `span` sampled every `dt`, then adds noise.
pub fn make_dataset(
    system: &SystemSpec,
    span: (f64, f64),
    dt: f64,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    make_dataset_extended(system, span, dt, noise, seed, 0)
}

/// Like [`make_dataset`], followed by `extra` further samples at the same
/// `dt`. Relative noise levels come from the `span` rows alone and noise is
/// drawn row by row, so the first rows match [`make_dataset`] over `span`.
pub fn make_dataset_extended(
    system: &SystemSpec,
    span: (f64, f64),
    dt: f64,
    noise: NoiseSpec,
    seed: u64,
    extra: usize,
) -> Result<Dataset> {
    let count = sample_count(span, dt)?;
    let times: Vec<f64> = (0..count + extra).map(|i| span.0 + i as f64 * dt).collect();
    if system.initial().len() != system.dim() {
        return Err(Error::Shape(format!(
            "{} needs a {}-dimensional initial state",
            system.name(),
            system.dim()
        )));
    }
    let clean = integrate_adaptive(&*system.field(), system.initial(), &times, DATA_RTOL, DATA_ATOL)?
        .states;
    let dim = system.dim();
    let sigmas: Vec<f64> = match noise {
        NoiseSpec::None => vec![0.0; dim],
        NoiseSpec::Relative { fraction } => (0..dim)
            .map(|d| fraction * (clean[..count].iter().map(|u| u[d]).sum::<f64>() / count as f64).abs())
            .collect(),
        NoiseSpec::Absolute { sigma } => vec![sigma; dim],
    };
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("invalid noise level {noise:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let measurements = clean
        .iter()
        .map(|u| {
            u.iter()
                .zip(&sigmas)
                .map(|(v, s)| {
                    let z: f64 = standard.sample(&mut rng);
                    if *s > 0.0 {
                        v + s * z
                    } else {
                        *v
                    }
                })
                .collect()
        })
        .collect();
    Ok(Dataset {
        times,
        measurements,
        clean: Some(clean),
        meta: DatasetMeta {
            system: Some(system.clone()),
            noise: Some(noise),
            seed: Some(seed),
            source: None,
            names: (0..dim).map(|i| format!("u{i}")).collect(),
        },
    })
}

/// Mean over time points of `‖measurement − clean‖² / n`.
pub fn noise_floor(data: &Dataset) -> Result<f64> {
    let clean = data.clean.as_ref().ok_or(Error::Unavailable("clean ground truth"))?;
    Ok(mse(&data.measurements, clean))
}

/// Mean over rows of the per-row mean squared difference.
pub fn mse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64
        })
        .sum::<f64>()
        / a.len() as f64
}

impl Dataset {
    pub fn from_parts(times: Vec<f64>, measurements: Vec<Vec<f64>>) -> Result<Self> {
        let dim = measurements.first().map_or(0, Vec::len);
        let data = Dataset {
            times,
            measurements,
            clean: None,
            meta: DatasetMeta {
                names: (0..dim).map(|i| format!("u{i}")).collect(),
                ..Default::default()
            },
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        check_times(&self.times)?;
        if self.measurements.len() != self.times.len() {
            return Err(Error::Shape(format!(
                "{} times but {} measurement rows",
                self.times.len(),
                self.measurements.len()
            )));
        }
        let dim = self.dim();
        if dim == 0 || self.measurements.iter().any(|m| m.len() != dim) {
            return Err(Error::Shape("measurement rows must share a positive width".into()));
        }
        if self.measurements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("measurements must be finite".into()));
        }
        if let Some(clean) = &self.clean {
            if clean.len() != self.times.len() || clean.iter().any(|c| c.len() != dim) {
                return Err(Error::Shape("clean truth must match the measurements".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.measurements.first().map_or(0, Vec::len)
    }

    /// Sampling interval, assuming a uniform grid.
    pub fn dt(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.times[1] - self.times[0])
    }

    /// Splits into the first `n` points and the rest.
    pub fn split(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n > self.len() {
            return Err(Error::Config(format!(
                "cannot take {n} training points from a dataset of {}",
                self.len()
            )));
        }
        let part = |r: std::ops::Range<usize>| Dataset {
            times: self.times[r.clone()].to_vec(),
            measurements: self.measurements[r.clone()].to_vec(),
            clean: self.clean.as_ref().map(|c| c[r].to_vec()),
            meta: self.meta.clone(),
        };
        Ok((part(0..n), part(n..self.len())))
    }

    /// Writes `t,<names…>[,clean_<names…>]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.meta.names.iter().cloned());
        if self.clean.is_some() {
            header.extend(self.meta.names.iter().map(|n| format!("clean_{n}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            write!(out, "{}", fmt17(*t))?;
            for v in &self.measurements[i] {
                write!(out, ",{}", fmt17(*v))?;
            }
            if let Some(clean) = &self.clean {
                for v in &clean[i] {
                    write!(out, ",{}", fmt17(*v))?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Writes the CSV and a `<stem>.meta.json` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(File::create(path)?))?;
        let meta = File::create(path.with_extension("meta.json"))?;
        serde_json::to_writer_pretty(meta, &self.meta)?;
        Ok(())
    }
}

/// Reads `t,<name1>,…` rows. Columns named `clean_<name>` are taken as the
/// noise-free truth. A `<stem>.meta.json` sidecar, when present, supplies
/// the remaining metadata.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(parse_err(1, "missing header".into()));
    }
    if &headers[0] != "t" {
        return Err(parse_err(1, format!("first column must be `t`, found `{}`", &headers[0])));
    }
    let mut names = Vec::new();
    let mut clean_cols = Vec::new();
    let mut value_cols = Vec::new();
    for (i, h) in headers.iter().enumerate().skip(1) {
        if h.starts_with("clean_") {
            clean_cols.push(i);
        } else {
            names.push(h.to_string());
            value_cols.push(i);
        }
    }
    if value_cols.is_empty() {
        return Err(parse_err(1, "no measurement columns".into()));
    }
    if !clean_cols.is_empty() && clean_cols.len() != value_cols.len() {
        return Err(parse_err(1, "clean_* columns must match the measurement columns".into()));
    }

    let mut times = Vec::new();
    let mut measurements = Vec::new();
    let mut clean = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let field = |c: usize| -> Result<f64> {
            record[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, format!("`{}` is not a finite number", &record[c])))
        };
        let t = field(0)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(parse_err(row, format!("time {t} does not increase past {prev}")));
            }
        }
        times.push(t);
        measurements.push(value_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?);
        if !clean_cols.is_empty() {
            clean.push(clean_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?);
        }
    }
    if times.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }

    let sidecar = path.with_extension("meta.json");
    let mut meta = if sidecar.exists() {
        serde_json::from_reader::<_, DatasetMeta>(File::open(&sidecar)?)?
    } else {
        DatasetMeta::default()
    };
    meta.source = Some(path.to_path_buf());
    meta.names = names;
    let data = Dataset {
        times,
        measurements,
        clean: (!clean.is_empty()).then_some(clean),
        meta,
    };
    data.validate()?;
    Ok(data)
}
