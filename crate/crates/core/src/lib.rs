//! Coincidence and singles rates for correlated photon pairs routed by a
//! wavelength-selective switch with frequency-dependent loss.
//!
//! The crate is `no_std` (it needs `alloc`). Modules, bottom up:
//!
//! - [`spectrum`]: down-converted pair spectra and the normalized pair density
//! - [`wss`]: channel grids, passband shapes, loss profiles, port transfer functions
//! - [`rates`]: routing integrals and detection probabilities, with and without dark counts
//! - [`mc_oracle`]: gate-level Monte Carlo of the same physics
//! - [`estimate`]: recovering the pair rate and arm efficiencies from attenuation sweeps
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod estimate;
pub mod mc_oracle;
mod optim;
pub mod quad;
pub mod rates;
pub mod spectrum;
pub mod wss;

pub use error::{Error, Result};
pub use estimate::{FitDataset, FitParams, FitResult, FitRow};
pub use mc_oracle::{GateCounts, Simulation};
pub use rates::{DetectionChain, RateResult, RoutingProbs};
pub use spectrum::{LobeModel, PairPdf, PairSpectrum};
pub use wss::{Band, BandGrid, ChannelShape, PortId, SwitchPlan, TransferFunction};
