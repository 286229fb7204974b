//! Parameterized dynamics `du/dt = U(t, u; θ)` with reverse-mode products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpCheckpoint, MlpSpec, ParamVector};
use crate::ode::VectorField;

/// A vector field with trainable parameters.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;

    fn num_params(&self) -> usize;

    fn eval(&self, params: &[f64], t: f64, u: &[f64], du: &mut [f64]);

    /// Adds `cotᵀ ∂U/∂θ` into `param_grad` and `cotᵀ ∂U/∂u` into `state_grad`.
    fn vjp(
        &self,
        params: &[f64],
        t: f64,
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
        state_grad: &mut [f64],
    );

    fn bind<'a>(&'a self, params: &'a [f64]) -> Bound<'a, Self>
    where
        Self: Sized,
    {
        Bound { model: self, params }
    }
}

/// Dynamics with its parameters fixed, usable as a plain vector field.
pub struct Bound<'a, D: ?Sized> {
    pub model: &'a D,
    pub params: &'a [f64],
}

impl<D: Dynamics + ?Sized> VectorField for Bound<'_, D> {
    fn eval(&self, t: f64, u: &[f64], du: &mut [f64]) {
        self.model.eval(self.params, t, u, du)
    }
}

/// Pure network right-hand side, `du/dt = U(u; θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackBox {
    pub net: MlpSpec,
}

impl BlackBox {
    pub fn new(net: MlpSpec) -> Result<Self> {
        net.validate()?;
        if net.input_dim() != net.output_dim() {
            return Err(Error::Shape(format!(
                "a black-box model needs equal input and output widths, got {:?}",
                net.layer_sizes
            )));
        }
        Ok(Self { net })
    }
}

impl Dynamics for BlackBox {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    fn eval(&self, params: &[f64], _t: f64, u: &[f64], du: &mut [f64]) {
        self.net.forward_into(params, u, du)
    }

    fn vjp(
        &self,
        params: &[f64],
        _t: f64,
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
        state_grad: &mut [f64],
    ) {
        self.net.vjp_accumulate(params, u, cot, param_grad, state_grad)
    }
}

/// Grey-box predator–prey model: known growth/decay terms plus two networks
/// for the interaction terms,
///
/// ```text
/// dx/dt =  α x + U₁(x, y; θ₁)
/// dy/dt = −γ y + U₂(x, y; θ₂)
/// ```
///
/// Parameters are `θ₁` followed by `θ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLotkaVolterra {
    pub alpha: f64,
    pub gamma: f64,
    pub prey_net: MlpSpec,
    pub predator_net: MlpSpec,
}

impl HybridLotkaVolterra {
    pub fn new(alpha: f64, gamma: f64, prey_net: MlpSpec, predator_net: MlpSpec) -> Result<Self> {
        for net in [&prey_net, &predator_net] {
            net.validate()?;
            if net.input_dim() != 2 || net.output_dim() != 1 {
                return Err(Error::Shape(format!(
                    "hybrid networks must map R² to R¹, got {:?}",
                    net.layer_sizes
                )));
            }
        }
        Ok(Self {
            alpha,
            gamma,
            prey_net,
            predator_net,
        })
    }

    fn split<'p>(&self, params: &'p [f64]) -> (&'p [f64], &'p [f64]) {
        params.split_at(self.prey_net.num_params())
    }
}

impl Dynamics for HybridLotkaVolterra {
    fn dim(&self) -> usize {
        2
    }

    fn num_params(&self) -> usize {
        self.prey_net.num_params() + self.predator_net.num_params()
    }

    fn eval(&self, params: &[f64], _t: f64, u: &[f64], du: &mut [f64]) {
        let (p1, p2) = self.split(params);
        let mut o = [0.0];
        self.prey_net.forward_into(p1, u, &mut o);
        du[0] = self.alpha * u[0] + o[0];
        self.predator_net.forward_into(p2, u, &mut o);
        du[1] = -self.gamma * u[1] + o[0];
    }

    fn vjp(
        &self,
        params: &[f64],
        _t: f64,
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
        state_grad: &mut [f64],
    ) {
        let (p1, p2) = self.split(params);
        let (g1, g2) = param_grad.split_at_mut(p1.len());
        state_grad[0] += self.alpha * cot[0];
        state_grad[1] -= self.gamma * cot[1];
        self.prey_net.vjp_accumulate(p1, u, &cot[..1], g1, state_grad);
        self.predator_net.vjp_accumulate(p2, u, &cot[1..], g2, state_grad);
    }
}

/// Serializable description of a trainable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    BlackBox { layer_sizes: Vec<usize> },
    HybridLotkaVolterra { alpha: f64, gamma: f64, layer_sizes: Vec<usize> },
}

/// A concrete trainable model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    BlackBox(BlackBox),
    HybridLotkaVolterra(HybridLotkaVolterra),
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(match spec {
            ModelSpec::BlackBox { layer_sizes } => {
                Model::BlackBox(BlackBox::new(MlpSpec::new(layer_sizes.clone())?)?)
            }
            ModelSpec::HybridLotkaVolterra {
                alpha,
                gamma,
                layer_sizes,
            } => {
                let net = MlpSpec::new(layer_sizes.clone())?;
                Model::HybridLotkaVolterra(HybridLotkaVolterra::new(*alpha, *gamma, net.clone(), net)?)
            }
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::BlackBox(m) => ModelSpec::BlackBox {
                layer_sizes: m.net.layer_sizes.clone(),
            },
            Model::HybridLotkaVolterra(m) => ModelSpec::HybridLotkaVolterra {
                alpha: m.alpha,
                gamma: m.gamma,
                layer_sizes: m.prey_net.layer_sizes.clone(),
            },
        }
    }

    pub fn nets(&self) -> Vec<&MlpSpec> {
        match self {
            Model::BlackBox(m) => vec![&m.net],
            Model::HybridLotkaVolterra(m) => vec![&m.prey_net, &m.predator_net],
        }
    }

    /// Initializes every network; network `i` uses seed `seed + i`.
    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        let mut params = Vec::with_capacity(self.num_params());
        for (i, net) in self.nets().into_iter().enumerate() {
            params.extend(net.init(seed.wrapping_add(i as u64))?.into_inner());
        }
        Ok(ParamVector(params))
    }

    /// Splits flat parameters into one checkpoint per network.
    pub fn checkpoints(&self, params: &[f64]) -> Result<Vec<MlpCheckpoint>> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "model has {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut rest = params;
        self.nets()
            .into_iter()
            .map(|net| {
                let (head, tail) = rest.split_at(net.num_params());
                rest = tail;
                MlpCheckpoint::new(net, head)
            })
            .collect()
    }

    fn inner(&self) -> &dyn Dynamics {
        match self {
            Model::BlackBox(m) => m,
            Model::HybridLotkaVolterra(m) => m,
        }
    }
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn num_params(&self) -> usize {
        self.inner().num_params()
    }

    fn eval(&self, params: &[f64], t: f64, u: &[f64], du: &mut [f64]) {
        self.inner().eval(params, t, u, du)
    }

    fn vjp(
        &self,
        params: &[f64],
        t: f64,
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
        state_grad: &mut [f64],
    ) {
        self.inner().vjp(params, t, u, cot, param_grad, state_grad)
    }
}
