//! Numerical core for the one-dimensional continuum Anderson model
//! `H = -d²/dx² + λ Σ_n a_n ω_n u(x - n)` with a decaying envelope
//! `a_n ~ |n|^(-α)`.
//!
//! Everything here is `no_std` + `alloc`. Parallel sample execution plugs in
//! through [`sampling::Executor`]; the `anderson-lab` crate supplies a thread
//! pool and all file formats.

#![no_std]
// `!(x > 0.0)` is the NaN-rejecting check used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod asymptotics;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod pruefer;
pub mod quad;
pub mod sampling;
pub mod spectral;
pub mod transfer;
pub mod tridiag;

pub use error::{Error, ErrorKind, Result};
pub use model::{
    envelope_value, sample_realization, single_site_fourier, CellWindow, DisorderRealization, DisorderSpec, Envelope,
    ModelConfig, SingleSitePotential,
};

pub use sampling::{EstimatorResult, Executor, Sequential};
pub use transfer::TransferMatrix;
