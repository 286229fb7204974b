//! Explicit Runge–Kutta integrators.
//!
//! Fixed-step classical RK4 is the training path: its discrete solution is
//! what gets differentiated. Adaptive Dormand–Prince 5(4) generates and
//! evaluates data. Both report states exactly at the requested output times.

use std::io::Write;

use crate::error::{Error, Result};

/// Right-hand side `du/dt = f(t, u)`. Writes `f(t, u)` into `du`, which has
/// the same length as `u`.
pub trait VectorField {
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]);
}

impl<F> VectorField for F
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]) {
        self(t, u, du)
    }
}

/// States sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Writes `t,u0,u1,...` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.dim()).map(|i| format!("u{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, u) in self.times.iter().zip(&self.states) {
            write!(out, "{}", fmt17(*t))?;
            for v in u {
                write!(out, ",{}", fmt17(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Input("at least one output time is required".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("output times must be finite".into()));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!(
            "output times must be strictly increasing (index {})",
            i + 1
        )));
    }
    Ok(())
}

fn axpy(out: &mut [f64], u: &[f64], a: f64, k: &[f64]) {
    for ((o, ui), ki) in out.iter_mut().zip(u).zip(k) {
        *o = ui + a * ki;
    }
}

/// One classical RK4 step of size `h`.
pub fn rk4_step<F: VectorField + ?Sized>(f: &F, t: f64, u: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = u.len();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut out = vec![0.0; n];
    rk4_step_into(f, t, u, h, &mut k, &mut tmp, &mut out);
    if out.iter().any(|v| !v.is_finite()) || k.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t, last_valid: 0 });
    }
    Ok(out)
}

pub(crate) fn rk4_step_into<F: VectorField + ?Sized>(
    f: &F,
    t: f64,
    u: &[f64],
    h: f64,
    k: &mut [Vec<f64>; 4],
    tmp: &mut [f64],
    out: &mut [f64],
) {
    let half = 0.5 * h;
    f.eval(t, u, &mut k[0]);
    axpy(tmp, u, half, &k[0]);
    f.eval(t + half, tmp, &mut k[1]);
    axpy(tmp, u, half, &k[1]);
    f.eval(t + half, tmp, &mut k[2]);
    axpy(tmp, u, h, &k[2]);
    f.eval(t + h, tmp, &mut k[3]);
    for i in 0..u.len() {
        out[i] = u[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// RK4 with each output interval split into `substeps` equal steps.
pub fn integrate_fixed<F: VectorField + ?Sized>(
    f: &F,
    u0: &[f64],
    times: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    check_times(times)?;
    if substeps == 0 {
        return Err(Error::Config("substeps must be positive".into()));
    }
    let n = u0.len();
    let mut states = Vec::with_capacity(times.len());
    states.push(u0.to_vec());
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut u = u0.to_vec();
    let mut next = vec![0.0; n];
    for (i, w) in times.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        for j in 0..substeps {
            let t = w[0] + j as f64 * h;
            rk4_step_into(f, t, &u, h, &mut k, &mut tmp, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { t, last_valid: i });
            }
            std::mem::swap(&mut u, &mut next);
        }
        states.push(u.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th-order and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller
const SAFETY: f64 = 0.9;
const ALPHA: f64 = 0.7 / 5.0;
const BETA: f64 = 0.4 / 5.0;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 1_000_000;

fn error_norm(err: &[f64], u: &[f64], u_new: &[f64], rtol: f64, atol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(u.iter().zip(u_new))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len().max(1) as f64).sqrt()
}

/// Adaptive Dormand–Prince 5(4) with PI step-size control. Steps are
/// clamped so that every requested output time is hit exactly.
pub fn integrate_adaptive<F: VectorField + ?Sized>(
    f: &F,
    u0: &[f64],
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    check_times(times)?;
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::Config("rtol and atol must be positive".into()));
    }
    let n = u0.len();
    let span = times[times.len() - 1] - times[0];
    let mut states = Vec::with_capacity(times.len());
    states.push(u0.to_vec());
    if times.len() == 1 || n == 0 {
        states.resize(times.len(), u0.to_vec());
        return Ok(Trajectory {
            times: times.to_vec(),
            states,
        });
    }
    let h_min = 1e-14 * span;

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut u_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut u = u0.to_vec();
    let mut t = times[0];
    f.eval(t, &u, &mut k[0]);

    let mut h = {
        let (k0, rest) = k.split_first_mut().unwrap();
        initial_step(f, t, &u, k0, rtol, atol, span, &mut tmp, &mut rest[0])
    };
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;

    for (idx, &t_out) in times.iter().enumerate().skip(1) {
        while t < t_out {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepUnderflow { t, h });
            }
            let remaining = t_out - t;
            let clamped = h >= remaining;
            let h_try = if clamped { remaining } else { h };

            let (k1, rest) = k.split_first_mut().unwrap();
            let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
            for i in 0..n {
                tmp[i] = u[i] + h_try * A21 * k1[i];
            }
            f.eval(t + C2 * h_try, &tmp, k2);
            for i in 0..n {
                tmp[i] = u[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
            }
            f.eval(t + C3 * h_try, &tmp, k3);
            for i in 0..n {
                tmp[i] = u[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f.eval(t + C4 * h_try, &tmp, k4);
            for i in 0..n {
                tmp[i] = u[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f.eval(t + C5 * h_try, &tmp, k5);
            for i in 0..n {
                tmp[i] = u[i]
                    + h_try * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f.eval(t + h_try, &tmp, k6);
            for i in 0..n {
                u_new[i] = u[i]
                    + h_try * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            let t_new = if clamped { t_out } else { t + h_try };
            f.eval(t_new, &u_new, k7);
            for i in 0..n {
                err[i] = h_try
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }

            let en = error_norm(&err, &u, &u_new, rtol, atol);
            if !en.is_finite() {
                h = h_try * MIN_FACTOR;
                if h < h_min {
                    return Err(Error::Divergence { t, last_valid: idx - 1 });
                }
                continue;
            }
            if en <= 1.0 {
                let factor = if en == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * en.powf(-ALPHA) * err_prev.powf(BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                err_prev = en.max(1e-4);
                t = t_new;
                std::mem::swap(&mut u, &mut u_new);
                // FSAL
                k.swap(0, 6);
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { t, last_valid: idx - 1 });
                }
                // A clamped step says nothing about the natural step size.
                h = if clamped { h.max(h_try * factor) } else { h_try * factor };
            } else {
                let factor = (SAFETY * en.powf(-ALPHA)).clamp(MIN_FACTOR, 1.0);
                h = h_try * factor;
                if h < h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        states.push(u.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F: VectorField + ?Sized>(
    f: &F,
    t: f64,
    u: &[f64],
    f0: &[f64],
    rtol: f64,
    atol: f64,
    span: f64,
    tmp: &mut [f64],
    f1: &mut [f64],
) -> f64 {
    let scale: Vec<f64> = u.iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(u);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for i in 0..u.len() {
        tmp[i] = u[i] + h0 * f0[i];
    }
    f.eval(t + h0, tmp, f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    let h = (100.0 * h0).min(h1).min(span);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6 * span
    }
}
