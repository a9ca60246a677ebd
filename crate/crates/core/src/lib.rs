//! Curvature-based Lyapunov control of long-distance entanglement in
//! (disordered) Ising spin chains.
//!
//! The chain state is carried as a matrix product state ([`mps::MpsState`])
//! and propagated under `H = Σ J_i σ^z_i σ^z_{i+1} + Σ (g^x_i σ^x_i + g^y_i σ^y_i)`
//! with piecewise-constant control fields. At every control interval the
//! controller evaluates the analytic gradient of the curvature `τ̈` of a
//! purity-based target functional with respect to the local fields and picks
//! the per-site field of maximal admitted strength along that gradient.
//! A sequence of targets `τ_{1,2} → τ_{1,3} → … → τ_{1,N}` swaps entanglement
//! down the chain.
//!
//! Conventions: `ħ = 1`, energies in units of `J`, times in units of `1/J`.
//! Site indices in the library API are zero-based; files written by the
//! [`cli`] module label sites one-based.

pub mod cli;
pub mod controller;
pub mod entanglement;
mod error;
pub mod model;
pub mod mps;
pub mod oracle;
pub mod pauli;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
