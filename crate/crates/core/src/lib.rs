//! Spiking neural network intrinsic structures.
//!
//! LIF and self-connection dynamics, stochastic-excitation networks trained by
//! backpropagation through time, rate and timing codes, dynamical-systems
//! diagnostics, and averaging-method bounds on limit cycles of planar
//! self-connection systems.

pub mod app;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod limitcycle;
pub mod network;
pub mod neuron;
pub mod selfconn;
pub mod train;

pub use error::{Error, Result};
