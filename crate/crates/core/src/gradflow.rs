//! Trajectory loss of (optionally coupled) dynamics and its exact gradient.
//!
//! The coupled right-hand side is
//!
//! ```text
//! dũ/dt = U(t, ũ; θ) − λ k (ũ − û(t))
//! ```
//!
//! where `û(t)` is a [`SmoothReference`] through the measurements. With
//! `λ k = 0` the coupling term is skipped entirely, so the uncoupled loss is
//! computed by the very same code.
//!
//! Gradients are discretize-then-optimize: the loss of the fixed-step RK4
//! solution is differentiated by a reverse sweep over every RK4 stage. The
//! reference is treated as data.

use crate::error::{Error, Result};
use crate::model::{Bound, Dynamics};
use crate::nn::ParamVector;
use crate::ode::{check_times, VectorField};
use crate::spline::SmoothReference;
use crate::systems::Dataset;

/// Coupling strength `k` (so `K = k·I`) and homotopy parameter `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    pub k: f64,
    pub lambda: f64,
}

impl CouplingSpec {
    pub const UNCOUPLED: CouplingSpec = CouplingSpec { k: 0.0, lambda: 0.0 };

    pub fn new(k: f64, lambda: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("coupling strength must be ≥ 0, got {k}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("homotopy parameter must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { k, lambda })
    }

    /// Effective gain `λ·k`.
    pub fn strength(&self) -> f64 {
        self.lambda * self.k
    }
}

/// A vector field pulled toward a reference trajectory.
pub struct CoupledField<'a, F> {
    model: F,
    reference: Option<&'a SmoothReference>,
    strength: f64,
}

/// Couples `model` (of dimension `dim`) to `reference`.
pub fn coupled_field<F: VectorField>(
    model: F,
    dim: usize,
    reference: Option<&SmoothReference>,
    c: CouplingSpec,
) -> Result<CoupledField<'_, F>> {
    let strength = c.strength();
    if strength != 0.0 {
        let r = reference.ok_or_else(|| {
            Error::Config("a reference trajectory is required when λ·k ≠ 0".into())
        })?;
        if r.dim() != dim {
            return Err(Error::Shape(format!(
                "model dimension {dim} does not match reference dimension {}",
                r.dim()
            )));
        }
    }
    Ok(CoupledField {
        model,
        reference,
        strength,
    })
}

impl<F: VectorField> VectorField for CoupledField<'_, F> {
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]) {
        self.model.eval(t, u, du);
        if self.strength != 0.0 {
            let r = self.reference.expect("checked at construction").eval(t);
            for ((d, ui), ri) in du.iter_mut().zip(u).zip(&r) {
                *d -= self.strength * (ui - ri);
            }
        }
    }
}

/// Mean-squared trajectory error.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean over time points of `‖u⁽ⁱ⁾ − û⁽ⁱ⁾‖² / n`; `+∞` if diverged.
    pub loss: f64,
    /// `‖u⁽ⁱ⁾ − û⁽ⁱ⁾‖² / n` for each time point reached.
    pub per_time_residuals: Vec<f64>,
    pub diverged: bool,
}

struct Step {
    t: f64,
    h: f64,
    /// The four stage inputs; the first is the state at the step start.
    stages: [Vec<f64>; 4],
}

/// Forward pass, returning the loss and (optionally) the recorded steps.
fn rollout<D: Dynamics + ?Sized>(
    model: &D,
    params: &[f64],
    data: &Dataset,
    c: CouplingSpec,
    reference: Option<&SmoothReference>,
    substeps: usize,
    mut tape: Option<&mut Vec<Step>>,
) -> Result<(LossReport, Vec<Vec<f64>>)> {
    let n = model.dim();
    if data.dim() != n {
        return Err(Error::Shape(format!(
            "model dimension {n} does not match data dimension {}",
            data.dim()
        )));
    }
    if params.len() != model.num_params() {
        return Err(Error::Shape(format!(
            "model expects {} parameters, got {}",
            model.num_params(),
            params.len()
        )));
    }
    if substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    check_times(&data.times)?;
    let field = coupled_field(Bound { model, params }, n, reference, c)?;

    let total = data.len() as f64;
    let residual = |u: &[f64], target: &[f64]| -> f64 {
        u.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64
    };
    let mut u = data.measurements[0].clone();
    let mut states = vec![u.clone()];
    let mut residuals = vec![residual(&u, &data.measurements[0])];
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut stage = vec![0.0; n];

    for (i, w) in data.times.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        let half = 0.5 * h;
        for j in 0..substeps {
            let t = w[0] + j as f64 * h;
            let mut record = tape.as_ref().map(|_| [u.clone(), Vec::new(), Vec::new(), Vec::new()]);
            field.eval(t, &u, &mut k[0]);
            for s in 1..4 {
                let a = if s == 3 { h } else { half };
                for m in 0..n {
                    stage[m] = u[m] + a * k[s - 1][m];
                }
                let ts = if s == 3 { t + h } else { t + half };
                field.eval(ts, &stage, &mut k[s]);
                if let Some(rec) = record.as_mut() {
                    rec[s] = stage.clone();
                }
            }
            for m in 0..n {
                u[m] += h / 6.0 * (k[0][m] + 2.0 * k[1][m] + 2.0 * k[2][m] + k[3][m]);
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Ok((
                    LossReport {
                        loss: f64::INFINITY,
                        per_time_residuals: residuals,
                        diverged: true,
                    },
                    states,
                ));
            }
            if let (Some(tape), Some(stages)) = (tape.as_deref_mut(), record) {
                tape.push(Step { t, h, stages });
            }
        }
        residuals.push(residual(&u, &data.measurements[i + 1]));
        states.push(u.clone());
    }
    let loss = residuals.iter().sum::<f64>() / total;
    Ok((
        LossReport {
            loss,
            per_time_residuals: residuals,
            diverged: false,
        },
        states,
    ))
}

/// Loss of the RK4 solution started at the first measurement.
pub fn trajectory_loss<D: Dynamics + ?Sized>(
    model: &D,
    params: &[f64],
    data: &Dataset,
    c: CouplingSpec,
    reference: Option<&SmoothReference>,
    substeps: usize,
) -> Result<LossReport> {
    rollout(model, params, data, c, reference, substeps, None).map(|(r, _)| r)
}

/// Loss and its exact parameter gradient. The gradient is `None` when the
/// forward solve diverged.
pub fn loss_gradient<D: Dynamics + ?Sized>(
    model: &D,
    params: &[f64],
    data: &Dataset,
    c: CouplingSpec,
    reference: Option<&SmoothReference>,
    substeps: usize,
) -> Result<(LossReport, Option<ParamVector>)> {
    let mut tape = Vec::with_capacity((data.len().saturating_sub(1)) * substeps);
    let (report, states) = rollout(model, params, data, c, reference, substeps, Some(&mut tape))?;
    if report.diverged {
        return Ok((report, None));
    }
    let n = model.dim();
    let strength = c.strength();
    let scale = 2.0 / (n as f64 * data.len() as f64);

    let mut grad = vec![0.0; params.len()];
    let mut u_bar = vec![0.0; n];
    let mut k_bar = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut y_bar = vec![0.0; n];

    // Adjoint of the coupled field: the model's VJP plus −s·cot on the state.
    let field_vjp = |t: f64, y: &[f64], cot: &[f64], grad: &mut [f64], y_bar: &mut [f64]| {
        y_bar.fill(0.0);
        model.vjp(params, t, y, cot, grad, y_bar);
        if strength != 0.0 {
            for (yb, c) in y_bar.iter_mut().zip(cot) {
                *yb -= strength * c;
            }
        }
    };

    let mut steps = tape.iter().rev();
    for i in (1..data.len()).rev() {
        for ((ub, s), m) in u_bar.iter_mut().zip(&states[i]).zip(&data.measurements[i]) {
            *ub += scale * (s - m);
        }
        for _ in 0..substeps {
            let step = steps.next().expect("tape covers every step");
            let (t, h) = (step.t, step.h);
            for m in 0..n {
                k_bar[0][m] = h / 6.0 * u_bar[m];
                k_bar[1][m] = h / 3.0 * u_bar[m];
                k_bar[2][m] = h / 3.0 * u_bar[m];
                k_bar[3][m] = h / 6.0 * u_bar[m];
            }
            // stage 4 input = u + h k3
            field_vjp(t + h, &step.stages[3], &k_bar[3], &mut grad, &mut y_bar);
            for m in 0..n {
                u_bar[m] += y_bar[m];
                k_bar[2][m] += h * y_bar[m];
            }
            // stage 3 input = u + h/2 k2
            field_vjp(t + 0.5 * h, &step.stages[2], &k_bar[2], &mut grad, &mut y_bar);
            for m in 0..n {
                u_bar[m] += y_bar[m];
                k_bar[1][m] += 0.5 * h * y_bar[m];
            }
            // stage 2 input = u + h/2 k1
            field_vjp(t + 0.5 * h, &step.stages[1], &k_bar[1], &mut grad, &mut y_bar);
            for m in 0..n {
                u_bar[m] += y_bar[m];
                k_bar[0][m] += 0.5 * h * y_bar[m];
            }
            field_vjp(t, &step.stages[0], &k_bar[0], &mut grad, &mut y_bar);
            for m in 0..n {
                u_bar[m] += y_bar[m];
            }
        }
    }
    Ok((report, Some(ParamVector(grad))))
}
