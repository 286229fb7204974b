//! Neural ODE training by synchronization-coupled homotopy optimization.
//!
//! A model `du/dt = U(t, u; θ)` is fitted to time-series measurements. Rather
//! than minimizing the trajectory loss directly, the model is first coupled
//! to a smoothed copy of the data, `−λ k (u − û(t))`, which makes its
//! trajectory synchronize with the measurements and flattens the loss
//! landscape. The coupling is then removed in steps (`λ: 1 → 0`), each step
//! warm-started from the last.
//!
//! Module map:
//!
//! * [`nn`]: multilayer perceptrons with exact reverse-mode products
//! * [`ode`]: fixed-step RK4 and adaptive Dormand–Prince integrators
//! * [`spline`]: smoothing cubic splines for the coupling reference
//! * [`model`]: trainable dynamics (black-box and grey-box)
//! * [`gradflow`]: coupled trajectory loss and its gradient through RK4
//! * [`homotopy`]: λ schedule, AdamW, homotopy and vanilla trainers
//! * [`systems`]: ground-truth systems and datasets
//! * [`experiment`]: config-driven experiment runner behind the CLI

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gradflow;
pub mod homotopy;
pub mod model;
pub mod nn;
pub mod ode;
pub mod spline;
pub mod systems;

pub use error::{Error, Result};
