//! Hybrid CV quantum neural network entanglement witness.
//!
//! Modules build on each other bottom-up: [`fock`] state algebra, [`gates`]
//! and the loss channel, the layered [`circuit`] with IC readout, the
//! [`datagen`] dataset factory, the trainable head and optimizer in
//! [`learn`], classical [`baselines`], and statistical [`eval`].

pub mod baselines;
pub mod circuit;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod fock;
pub mod gates;
pub mod learn;
pub mod rng;

pub use error::{Result, WitnessError};
