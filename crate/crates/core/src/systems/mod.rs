//! Ground-truth dynamical systems and the datasets generated from them.

mod dataset;

pub use dataset::{
    load_csv_dataset, make_dataset, make_dataset_extended, mse, noise_floor, sample_count, Dataset, DatasetMeta,
    NoiseSpec, SystemSpec, DATA_ATOL, DATA_RTOL,
};

use serde::{Deserialize, Serialize};

use crate::model::Dynamics;
use crate::ode::VectorField;

/// Predator–prey coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LvParams {
    fn default() -> Self {
        Self {
            alpha: 1.3,
            beta: 0.9,
            gamma: 0.8,
            delta: 1.8,
        }
    }
}

impl LvParams {
    pub const INITIAL: [f64; 2] = [0.44249296, 4.6280594];

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.gamma, self.delta]
    }

    /// `δx − γ ln x + βy − α ln y`, conserved along solutions.
    pub fn first_integral(&self, u: &[f64]) -> f64 {
        self.delta * u[0] - self.gamma * u[0].ln() + self.beta * u[1] - self.alpha * u[1].ln()
    }
}

impl VectorField for LvParams {
    fn eval(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let (x, y) = (u[0], u[1]);
        du[0] = self.alpha * x - self.beta * x * y;
        du[1] = -self.gamma * y + self.delta * x * y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl LorenzParams {
    pub const INITIAL: [f64; 3] = [1.2, 2.1, 1.7];

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.sigma, self.rho, self.beta]
    }
}

impl VectorField for LorenzParams {
    fn eval(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let (x, y, z) = (u[0], u[1], u[2]);
        du[0] = self.sigma * (y - x);
        du[1] = x * (self.rho - z) - y;
        du[2] = x * y - self.beta * z;
    }
}

/// Frictionless double pendulum on `(θ₁, θ₂, ω₁, ω₂)`, angles from the
/// downward vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePendulumParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            g: 9.81,
        }
    }
}

impl DoublePendulumParams {
    pub fn energy(&self, u: &[f64]) -> f64 {
        let (t1, t2, w1, w2) = (u[0], u[1], u[2], u[3]);
        let Self { l1, l2, m1, m2, g } = *self;
        let kinetic = 0.5 * (m1 + m2) * l1 * l1 * w1 * w1
            + 0.5 * m2 * l2 * l2 * w2 * w2
            + m2 * l1 * l2 * w1 * w2 * (t1 - t2).cos();
        let potential = -(m1 + m2) * g * l1 * t1.cos() - m2 * g * l2 * t2.cos();
        kinetic + potential
    }
}

impl VectorField for DoublePendulumParams {
    fn eval(&self, _t: f64, u: &[f64], du: &mut [f64]) {
        let (t1, t2, w1, w2) = (u[0], u[1], u[2], u[3]);
        let Self { l1, l2, m1, m2, g } = *self;
        let d = t2 - t1;
        let (sd, cd) = d.sin_cos();
        let m = m1 + m2;
        let den1 = m * l1 - m2 * l1 * cd * cd;
        let den2 = m * l2 - m2 * l2 * cd * cd;
        du[0] = w1;
        du[1] = w2;
        du[2] = (m2 * l1 * w1 * w1 * sd * cd + m2 * g * t2.sin() * cd + m2 * l2 * w2 * w2 * sd
            - m * g * t1.sin())
            / den1;
        du[3] = (-m2 * l2 * w2 * w2 * sd * cd + m * (g * t1.sin() * cd - l1 * w1 * w1 * sd - g * t2.sin()))
            / den2;
    }
}

pub fn lotka_volterra_field(p: LvParams) -> impl VectorField {
    p
}

pub fn lorenz_field(p: LorenzParams) -> impl VectorField {
    p
}

pub fn double_pendulum_field(l1: f64, l2: f64, m1: f64, m2: f64, g: f64) -> impl VectorField {
    DoublePendulumParams { l1, l2, m1, m2, g }
}

/// Known-form systems whose coefficients are the trainable parameters, for
/// parameter-estimation experiments and loss-landscape sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownForm {
    /// Parameters `[α, β, γ, δ]`.
    LotkaVolterra,
    /// Parameters `[σ, ρ, β]`.
    Lorenz,
}

impl Dynamics for KnownForm {
    fn dim(&self) -> usize {
        match self {
            KnownForm::LotkaVolterra => 2,
            KnownForm::Lorenz => 3,
        }
    }

    fn num_params(&self) -> usize {
        match self {
            KnownForm::LotkaVolterra => 4,
            KnownForm::Lorenz => 3,
        }
    }

    fn eval(&self, p: &[f64], t: f64, u: &[f64], du: &mut [f64]) {
        match self {
            KnownForm::LotkaVolterra => LvParams {
                alpha: p[0],
                beta: p[1],
                gamma: p[2],
                delta: p[3],
            }
            .eval(t, u, du),
            KnownForm::Lorenz => LorenzParams {
                sigma: p[0],
                rho: p[1],
                beta: p[2],
            }
            .eval(t, u, du),
        }
    }

    fn vjp(&self, p: &[f64], _t: f64, u: &[f64], c: &[f64], gp: &mut [f64], gu: &mut [f64]) {
        match self {
            KnownForm::LotkaVolterra => {
                let (x, y) = (u[0], u[1]);
                let (a, b, g, d) = (p[0], p[1], p[2], p[3]);
                gp[0] += c[0] * x;
                gp[1] -= c[0] * x * y;
                gp[2] -= c[1] * y;
                gp[3] += c[1] * x * y;
                gu[0] += c[0] * (a - b * y) + c[1] * d * y;
                gu[1] += -c[0] * b * x + c[1] * (d * x - g);
            }
            KnownForm::Lorenz => {
                let (x, y, z) = (u[0], u[1], u[2]);
                let (s, r, b) = (p[0], p[1], p[2]);
                gp[0] += c[0] * (y - x);
                gp[1] += c[1] * x;
                gp[2] -= c[2] * z;
                gu[0] += -s * c[0] + (r - z) * c[1] + y * c[2];
                gu[1] += s * c[0] - c[1] + x * c[2];
                gu[2] += -x * c[1] - b * c[2];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_adaptive, integrate_fixed};
    use approx::assert_relative_eq;

    fn field(f: &impl VectorField, u: &[f64]) -> Vec<f64> {
        let mut du = vec![0.0; u.len()];
        f.eval(0.0, u, &mut du);
        du
    }

    #[test]
    fn lotka_volterra_values() {
        let p = LvParams::default();
        let du = field(&p, &LvParams::INITIAL);
        assert_relative_eq!(du[0], -1.267855, epsilon = 1e-6);
        assert_relative_eq!(du[1], -0.016257, epsilon = 1e-6);
        assert_eq!(field(&p, &[0.0, 0.0]), vec![0.0, 0.0]);
        let fixed = field(&p, &[p.gamma / p.delta, p.alpha / p.beta]);
        assert!(fixed.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn lorenz_values() {
        let p = LorenzParams::default();
        let du = field(&p, &LorenzParams::INITIAL);
        assert_relative_eq!(du[0], 9.0, epsilon = 1e-12);
        assert_relative_eq!(du[1], 29.46, epsilon = 1e-12);
        assert_relative_eq!(du[2], -2.013333333, epsilon = 1e-8);
        assert_eq!(field(&p, &[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let c = (p.beta * (p.rho - 1.0)).sqrt();
        for s in [1.0, -1.0] {
            let du = field(&p, &[s * c, s * c, p.rho - 1.0]);
            assert!(du.iter().all(|v| v.abs() < 1e-12), "{du:?}");
        }
    }

    #[test]
    fn known_form_gradients_match_finite_differences() {
        for (form, p, u) in [
            (KnownForm::LotkaVolterra, LvParams::default().to_vec(), vec![0.7, 2.1]),
            (KnownForm::Lorenz, LorenzParams::default().to_vec(), vec![1.2, -3.0, 20.0]),
        ] {
            let cot: Vec<f64> = (0..u.len()).map(|i| 0.3 + i as f64).collect();
            let mut gp = vec![0.0; p.len()];
            let mut gu = vec![0.0; u.len()];
            form.vjp(&p, 0.0, &u, &cot, &mut gp, &mut gu);
            let proj = |p: &[f64], u: &[f64]| {
                let mut du = vec![0.0; u.len()];
                form.eval(p, 0.0, u, &mut du);
                du.iter().zip(&cot).map(|(a, b)| a * b).sum::<f64>()
            };
            let h = 1e-6;
            for i in 0..p.len() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[i] += h;
                b[i] -= h;
                assert_relative_eq!((proj(&a, &u) - proj(&b, &u)) / (2.0 * h), gp[i], epsilon = 1e-6);
            }
            for i in 0..u.len() {
                let (mut a, mut b) = (u.clone(), u.clone());
                a[i] += h;
                b[i] -= h;
                assert_relative_eq!((proj(&p, &a) - proj(&p, &b)) / (2.0 * h), gu[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn double_pendulum_rest_is_equilibrium() {
        let f = double_pendulum_field(1.0, 0.8, 1.0, 0.5, 9.81);
        assert_eq!(field(&f, &[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn double_pendulum_conserves_energy() {
        let p = DoublePendulumParams::default();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let u0 = [1.2, 0.6, 0.0, 0.0];
        let tr = integrate_adaptive(&p, &u0, &times, 1e-11, 1e-12).unwrap();
        let e0 = p.energy(&u0);
        for s in &tr.states {
            assert!(((p.energy(s) - e0) / e0).abs() < 1e-6);
        }
    }

    #[test]
    fn double_pendulum_small_angle_frequency() {
        // Equal masses and lengths: the slow normal mode has θ₂ = √2 θ₁ and
        // ω² = (2 − √2) g / l.
        let p = DoublePendulumParams::default();
        let a = 1e-3;
        let u0 = [a, std::f64::consts::SQRT_2 * a, 0.0, 0.0];
        let dt = 0.001;
        let times: Vec<f64> = (0..=8000).map(|i| i as f64 * dt).collect();
        let tr = integrate_fixed(&p, &u0, &times, 1).unwrap();
        let crossings: Vec<f64> = tr
            .states
            .windows(2)
            .zip(&times)
            .filter(|(w, _)| w[0][0] > 0.0 && w[1][0] <= 0.0 || w[0][0] < 0.0 && w[1][0] >= 0.0)
            .map(|(w, t)| t + dt * w[0][0] / (w[0][0] - w[1][0]))
            .collect();
        let half_periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let measured = std::f64::consts::PI / (half_periods.iter().sum::<f64>() / half_periods.len() as f64);
        let predicted = ((2.0 - std::f64::consts::SQRT_2) * p.g / p.l1).sqrt();
        assert!(((measured - predicted) / predicted).abs() < 0.05, "{measured} vs {predicted}");
    }

    #[test]
    fn lotka_volterra_conserves_first_integral() {
        let p = LvParams::default();
        let times: Vec<f64> = (0..=61).map(|i| i as f64 * 0.1).collect();
        let tr = integrate_adaptive(&p, &LvParams::INITIAL, &times, 1e-7, 1e-9).unwrap();
        let h0 = p.first_integral(&LvParams::INITIAL);
        for s in &tr.states {
            assert!(((p.first_integral(s) - h0) / h0).abs() < 1e-5);
        }
    }
}
