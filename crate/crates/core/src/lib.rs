//! Lipschitz monotonic networks.
//!
//! A fully connected network `g` whose weights are norm-constrained so that
//! `|g(x) − g(y)| ≤ λ‖x − y‖₁`, plus the residual `λ·Σ_{i∈S} x_i` that shifts
//! every partial derivative in the monotone set `S` from `[−λ, λ]` to
//! `[0, 2λ]`. The resulting model is monotone in `S` by construction and
//! carries a certificate computed from the stored weights.

pub mod activations;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod monotone;
pub mod network;
pub mod norms;
pub mod optim;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
