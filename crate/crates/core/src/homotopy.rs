//! Homotopy training: the coupled loss is minimized for a decreasing
//! sequence of homotopy parameters `1 = λ⁽⁰⁾ > … > λ⁽ˢ⁾ = 0`, each stage
//! warm-started from the previous one. Decrements shrink geometrically,
//! `Δλ⁽ᵏ⁺¹⁾ = κ Δλ⁽ᵏ⁾`, and sum to one.
//!
//! The vanilla baseline runs the identical loop with the coupling switched
//! off, so both spend the same number of gradient evaluations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradflow::{loss_gradient, trajectory_loss, CouplingSpec};
use crate::model::Dynamics;
use crate::nn::ParamVector;
use crate::ode::fmt17;
use crate::spline::{self, Smoothing, SmoothReference};
use crate::systems::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct HomotopySchedule {
    pub s: usize,
    pub kappa: f64,
    /// `s + 1` values from 1 down to exactly 0.
    pub lambdas: Vec<f64>,
    /// The `s` decrements `Δλ⁽ᵏ⁾`.
    pub decrements: Vec<f64>,
}

pub fn lambda_schedule(s: usize, kappa: f64) -> Result<HomotopySchedule> {
    if s == 0 {
        return Err(Error::Config("the homotopy schedule needs at least one step".into()));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Config(format!("decrement ratio must lie in (0, 1], got {kappa}")));
    }
    let first = if kappa == 1.0 {
        1.0 / s as f64
    } else {
        (1.0 - kappa) / (1.0 - kappa.powi(s as i32))
    };
    let decrements: Vec<f64> = (0..s).map(|k| first * kappa.powi(k as i32)).collect();
    let mut lambdas = Vec::with_capacity(s + 1);
    lambdas.push(1.0);
    for d in &decrements[..s - 1] {
        let last = *lambdas.last().unwrap();
        lambdas.push(last - d);
    }
    lambdas.push(0.0);
    Ok(HomotopySchedule {
        s,
        kappa,
        lambdas,
        decrements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// In-place AdamW update. Returns `false`, leaving everything untouched,
    /// when the gradient is not finite.
    pub fn step(&mut self, cfg: &AdamWConfig, params: &mut [f64], grad: &[f64], eta: f64) -> bool {
        if grad.iter().any(|g| !g.is_finite()) {
            return false;
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= eta * cfg.weight_decay * params[i];
            params[i] -= eta * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        true
    }
}

pub fn adamw_step(
    state: &OptimizerState,
    params: &ParamVector,
    grad: &ParamVector,
    eta: f64,
    cfg: &AdamWConfig,
) -> Result<(OptimizerState, ParamVector)> {
    if params.len() != grad.len() || state.m.len() != params.len() {
        return Err(Error::Shape("optimizer, parameter and gradient lengths differ".into()));
    }
    let mut next_state = state.clone();
    let mut next = params.clone();
    if !next_state.step(cfg, &mut next, grad, eta) {
        return Ok((state.clone(), params.clone()));
    }
    Ok((next_state, next))
}

fn default_substeps() -> usize {
    10
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs per homotopy step.
    pub n_epoch: usize,
    /// Learning rate.
    pub eta: f64,
    /// Coupling strength.
    pub k: f64,
    /// Number of homotopy steps.
    pub s: usize,
    /// Decrement ratio.
    pub kappa: f64,
    /// RK4 steps per measurement interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Seed for parameter initialization.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adamw: AdamWConfig,
    /// Reset the optimizer moments whenever λ changes. Vanilla training runs
    /// one uninterrupted optimizer regardless.
    #[serde(default)]
    pub reset_optimizer: bool,
    /// Fixed smoothing weight for the reference; chosen by GCV when absent.
    #[serde(default)]
    pub smoothing: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.n_epoch == 0 {
            return bad("n_epoch", "must be positive".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", format!("must be positive, got {}", self.eta));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return bad("k", format!("must be ≥ 0, got {}", self.k));
        }
        if self.substeps == 0 {
            return bad("substeps", "must be positive".into());
        }
        let a = &self.adamw;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("adamw", "betas must lie in [0, 1)".into());
        }
        if !(a.eps > 0.0) || !(a.weight_decay >= 0.0) {
            return bad("adamw", "eps must be positive and weight_decay non-negative".into());
        }
        if let Some(mu) = self.smoothing {
            if !(mu >= 0.0) {
                return bad("smoothing", format!("must be ≥ 0, got {mu}"));
            }
        }
        lambda_schedule(self.s, self.kappa).map(|_| ())
    }

    pub fn total_epochs(&self) -> usize {
        (self.s + 1) * self.n_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    /// Loss being minimized, evaluated at the parameters entering the epoch.
    pub coupled_loss: f64,
    /// Uncoupled loss at the same parameters; the model-selection metric.
    pub uncoupled_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub best_params: ParamVector,
    pub best_epoch: usize,
    pub best_mse: f64,
    pub final_params: ParamVector,
    pub history: Vec<EpochRecord>,
    /// Optimizer steps skipped because the solve diverged.
    pub rejected_steps: usize,
    /// Parameters at the end of each homotopy step.
    pub step_params: Vec<ParamVector>,
}

impl TrainResult {
    /// `epoch,lambda,coupled_loss,uncoupled_mse`, 17 significant digits.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,lambda,coupled_loss,uncoupled_mse")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                fmt17(r.lambda),
                fmt17(r.coupled_loss),
                fmt17(r.uncoupled_mse)
            )?;
        }
        Ok(())
    }
}

/// Fits the coupling reference for `data`.
pub fn fit_reference(data: &Dataset, smoothing: Option<f64>) -> Result<SmoothReference> {
    let smoothing = smoothing.map_or_else(Smoothing::default, Smoothing::Fixed);
    spline::fit(&data.times, &data.measurements, &smoothing)
}

/// Homotopy training from `init`.
pub fn train_homotopy<D: Dynamics + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    model: &D,
    init: &[f64],
) -> Result<TrainResult> {
    config.validate()?;
    let schedule = lambda_schedule(config.s, config.kappa)?;
    let reference = if config.k > 0.0 {
        Some(fit_reference(data, config.smoothing)?)
    } else {
        None
    };
    train_loop(
        config,
        data,
        model,
        init,
        &schedule.lambdas,
        reference.as_ref(),
        config.reset_optimizer,
    )
}

/// Conventional training on the uncoupled loss, with the same epoch budget,
/// as a single optimizer run.
pub fn train_vanilla<D: Dynamics + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    model: &D,
    init: &[f64],
) -> Result<TrainResult> {
    config.validate()?;
    let config = TrainConfig {
        k: 0.0,
        ..config.clone()
    };
    train_loop(&config, data, model, init, &vec![0.0; config.s + 1], None, false)
}

fn train_loop<D: Dynamics + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    model: &D,
    init: &[f64],
    lambdas: &[f64],
    reference: Option<&SmoothReference>,
    reset: bool,
) -> Result<TrainResult> {
    data.validate()?;
    if init.len() != model.num_params() {
        return Err(Error::Shape(format!(
            "model expects {} parameters, got {}",
            model.num_params(),
            init.len()
        )));
    }
    let mut params = init.to_vec();
    let mut opt = OptimizerState::new(params.len());
    let mut history = Vec::with_capacity(lambdas.len() * config.n_epoch);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut rejected_steps = 0;
    let mut step_params = Vec::with_capacity(lambdas.len());

    for (step, &lambda) in lambdas.iter().enumerate() {
        if step > 0 && reset {
            opt = OptimizerState::new(params.len());
        }
        let coupling = CouplingSpec {
            k: config.k,
            lambda,
        };
        let mut rejected = 0;
        for _ in 0..config.n_epoch {
            let epoch = history.len();
            let (report, grad) =
                loss_gradient(model, &params, data, coupling, reference, config.substeps)?;
            let mse = if coupling.strength() == 0.0 {
                report.loss
            } else {
                trajectory_loss(model, &params, data, CouplingSpec::UNCOUPLED, None, config.substeps)?
                    .loss
            };
            history.push(EpochRecord {
                epoch,
                lambda,
                coupled_loss: report.loss,
                uncoupled_mse: mse,
            });
            if mse.is_finite() && best.as_ref().is_none_or(|b| mse < b.0) {
                best = Some((mse, epoch, params.clone()));
            }
            let stepped = grad.is_some_and(|g| opt.step(&config.adamw, &mut params, &g, config.eta));
            if !stepped {
                rejected += 1;
                log::debug!("epoch {epoch}: solve diverged at λ = {lambda}, step skipped");
            }
        }
        rejected_steps += rejected;
        if 2 * rejected > config.n_epoch {
            return Err(Error::TrainingAborted(format!(
                "{rejected} of {} epochs diverged at homotopy step {step} (λ = {lambda})",
                config.n_epoch
            )));
        }
        step_params.push(ParamVector(params.clone()));
    }
    let (best_mse, best_epoch, best_params) = best.ok_or_else(|| {
        Error::TrainingAborted("the uncoupled solve diverged at every epoch".into())
    })?;
    Ok(TrainResult {
        best_params: ParamVector(best_params),
        best_epoch,
        best_mse,
        final_params: ParamVector(params),
        history,
        rejected_steps,
        step_params,
    })
}
