//! Compiles and runs every code listing in the book as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}
#[doc = include_str!("../../../book/src/synchronization.md")]
pub mod synchronization {}
#[doc = include_str!("../../../book/src/homotopy.md")]
pub mod homotopy {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
