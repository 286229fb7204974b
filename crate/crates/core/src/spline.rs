//! Smoothing cubic splines used as the continuous coupling reference.
//!
//! Each dimension gets the natural cubic spline `g` with knots at the
//! measurement times that minimizes
//!
//! ```text
//! Σᵢ (yᵢ − g(tᵢ))² + μ ∫ g''(t)² dt
//! ```
//!
//! Following Reinsch (in the Green–Silverman value/second-derivative form):
//! with `Q` the `n × (n−2)` second-difference matrix and `R` the
//! `(n−2) × (n−2)` tridiagonal Gram matrix, the interior second derivatives
//! solve `(R + μ QᵀQ) γ = Qᵀ y` and the fitted knot values are
//! `g = y − μ Q γ`. Natural end conditions fix `γ = 0` at both ends.
//!
//! Outside the knot span the spline continues linearly from the boundary
//! value and slope; such evaluations are counted.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smoothing weights searched by generalized cross-validation.
pub fn default_gcv_grid() -> Vec<f64> {
    (0..=40).map(|i| 10f64.powf(-6.0 + 0.2 * i as f64)).collect()
}

/// How the smoothing weight is chosen for each dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoothing {
    Fixed(f64),
    Gcv(Vec<f64>),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Gcv(default_gcv_grid())
    }
}

#[derive(Debug)]
pub struct SmoothReference {
    knots: Vec<f64>,
    /// Fitted knot values, one vector per dimension.
    values: Vec<Vec<f64>>,
    /// Second derivatives at the knots, one vector per dimension.
    curvature: Vec<Vec<f64>>,
    mu: Vec<f64>,
    extrapolations: AtomicUsize,
}

impl Clone for SmoothReference {
    fn clone(&self) -> Self {
        Self {
            knots: self.knots.clone(),
            values: self.values.clone(),
            curvature: self.curvature.clone(),
            mu: self.mu.clone(),
            extrapolations: AtomicUsize::new(self.extrapolations.load(Ordering::Relaxed)),
        }
    }
}

/// The banded pieces of the Reinsch system for one set of knots.
struct Design {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qtq: DMatrix<f64>,
}

impl Design {
    fn new(t: &[f64]) -> Self {
        let n = t.len();
        let m = n - 2;
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let mut q = DMatrix::zeros(n, m);
        let mut r = DMatrix::zeros(m, m);
        for j in 0..m {
            // column j corresponds to interior knot j + 1
            q[(j, j)] = 1.0 / h[j];
            q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
            q[(j + 2, j)] = 1.0 / h[j + 1];
            r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < m {
                r[(j, j + 1)] = h[j + 1] / 6.0;
                r[(j + 1, j)] = h[j + 1] / 6.0;
            }
        }
        let qtq = q.transpose() * &q;
        Self { q, r, qtq }
    }

    /// Returns fitted values, interior curvature, and the trace of the hat
    /// matrix.
    fn solve(&self, y: &DVector<f64>, mu: f64) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let n = y.len() as f64;
        let qty = self.q.transpose() * y;
        // For large μ solve the scaled system (R/μ + QᵀQ) γ' = Qᵀy, γ = γ'/μ.
        let (system, scale) = if mu > 1.0 {
            (&self.r / mu + &self.qtq, 1.0)
        } else {
            (&self.r + &self.qtq * mu, mu)
        };
        let chol = system
            .cholesky()
            .ok_or_else(|| Error::Input("smoothing system is not positive definite".into()))?;
        let gamma_scaled = chol.solve(&qty);
        let fitted = y - &self.q * &gamma_scaled * scale;
        let gamma = if mu > 1.0 { gamma_scaled / mu } else { gamma_scaled };
        // tr(A) = n − scale · tr(system⁻¹ QᵀQ)
        let trace = n - scale * chol.solve(&self.qtq).trace();
        Ok((fitted, gamma, trace))
    }
}

fn validate(times: &[f64], values: &[Vec<f64>]) -> Result<usize> {
    if times.len() < 4 {
        return Err(Error::Input(format!(
            "a smoothing spline needs at least 4 points, got {}",
            times.len()
        )));
    }
    if values.len() != times.len() {
        return Err(Error::Shape(format!(
            "{} times but {} value rows",
            times.len(),
            values.len()
        )));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Input(format!(
            "spline knots must be strictly increasing (duplicate or unordered time at index {})",
            i + 1
        )));
    }
    let dim = values[0].len();
    if values.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("value rows have differing widths".into()));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("spline data must be finite".into()));
    }
    Ok(dim)
}

/// Fits every dimension with the same smoothing weight `mu`.
pub fn fit_smoothing_spline(times: &[f64], values: &[Vec<f64>], mu: f64) -> Result<SmoothReference> {
    fit(times, values, &Smoothing::Fixed(mu))
}

/// Fits every dimension, choosing its weight per `smoothing`.
pub fn fit(times: &[f64], values: &[Vec<f64>], smoothing: &Smoothing) -> Result<SmoothReference> {
    let dim = validate(times, values)?;
    let design = Design::new(times);
    let n = times.len();
    let mut fitted_values = Vec::with_capacity(dim);
    let mut curvature = Vec::with_capacity(dim);
    let mut chosen = Vec::with_capacity(dim);
    for d in 0..dim {
        let y = DVector::from_iterator(n, values.iter().map(|row| row[d]));
        let (g, gamma, mu) = match smoothing {
            Smoothing::Fixed(mu) => {
                if !(*mu >= 0.0 && mu.is_finite()) {
                    return Err(Error::Config(format!("smoothing weight must be ≥ 0, got {mu}")));
                }
                let (g, gamma, _) = design.solve(&y, *mu)?;
                (g, gamma, *mu)
            }
            Smoothing::Gcv(grid) => {
                if grid.is_empty() || grid.iter().any(|m| !(*m > 0.0)) {
                    return Err(Error::Config("GCV grid must contain positive weights".into()));
                }
                let mut best: Option<(f64, DVector<f64>, DVector<f64>, f64)> = None;
                for &mu in grid {
                    let (g, gamma, trace) = design.solve(&y, mu)?;
                    let rss = (&y - &g).norm_squared();
                    let denom = (1.0 - trace / n as f64).powi(2);
                    let score = rss / n as f64 / denom;
                    if score.is_finite() && best.as_ref().is_none_or(|b| score < b.0) {
                        best = Some((score, g, gamma, mu));
                    }
                }
                let (_, g, gamma, mu) =
                    best.ok_or_else(|| Error::Input("GCV failed for every grid weight".into()))?;
                (g, gamma, mu)
            }
        };
        let mut full = vec![0.0; n];
        full[1..n - 1].copy_from_slice(gamma.as_slice());
        fitted_values.push(g.as_slice().to_vec());
        curvature.push(full);
        chosen.push(mu);
    }
    Ok(SmoothReference {
        knots: times.to_vec(),
        values: fitted_values,
        curvature,
        mu: chosen,
        extrapolations: AtomicUsize::new(0),
    })
}

impl SmoothReference {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Smoothing weight used for each dimension.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Fitted values at the knots for dimension `d`.
    pub fn knot_values(&self, d: usize) -> &[f64] {
        &self.values[d]
    }

    /// Second derivatives at the knots for dimension `d`.
    pub fn knot_curvature(&self, d: usize) -> &[f64] {
        &self.curvature[d]
    }

    /// Number of evaluations that fell outside the knot span.
    pub fn extrapolation_count(&self) -> usize {
        self.extrapolations.load(Ordering::Relaxed)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let k = &self.knots;
        let n = k.len();
        if t < k[0] || t > k[n - 1] {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
            let left = t < k[0];
            for (d, o) in out.iter_mut().enumerate() {
                let g = &self.values[d];
                let c = &self.curvature[d];
                *o = if left {
                    let h = k[1] - k[0];
                    let slope = (g[1] - g[0]) / h - h * c[1] / 6.0;
                    g[0] + (t - k[0]) * slope
                } else {
                    let h = k[n - 1] - k[n - 2];
                    let slope = (g[n - 1] - g[n - 2]) / h + h * c[n - 2] / 6.0;
                    g[n - 1] + (t - k[n - 1]) * slope
                };
            }
            return;
        }
        let i = k.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let h = k[i + 1] - k[i];
        let a = t - k[i];
        let b = k[i + 1] - t;
        for (d, o) in out.iter_mut().enumerate() {
            let g = &self.values[d];
            let c = &self.curvature[d];
            *o = (a * g[i + 1] + b * g[i]) / h
                - a * b / 6.0 * ((1.0 + a / h) * c[i + 1] + (1.0 + b / h) * c[i]);
        }
    }
}

pub fn spline_eval(reference: &SmoothReference, t: f64) -> Vec<f64> {
    reference.eval(t)
}
