//! Variational quantum time evolution with and without the quantum geometric tensor.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: dense statevector simulator and the layered Pauli-rotation ansätze.
//! - [`hamiltonian`]: Pauli-sum Hamiltonians, the Heisenberg model and the dense
//!   exact-evolution oracle.
//! - [`estimators`]: exact and shot-sampled energies, fidelities, evolution
//!   gradients and the QGT, with circuit accounting.
//! - [`varqte`]: the QGT-based evolver (regularized linear solve + forward Euler).
//! - [`dualqte`]: the QGT-free evolver that minimizes an infidelity-based loss
//!   with warm-started gradient descent in every timestep.
//! - [`metts`]: the QMETTS Markov chain for thermal expectation values.
//! - [`analysis`]: Bures metrics, a-posteriori error bounds, circuit counts,
//!   sample-complexity bounds and the hardware runtime model.
//! - [`experiments`]: named, configurable experiment runs that emit CSV/JSON,
//!   shared by the `qte` binary and the `examples/` directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dualqte;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hamiltonian;
pub mod metts;
pub mod sim;
pub mod varqte;

pub use error::{QteError, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
