//! Truncated Fock-space simulation of teleportation-based error correction
//! for single-mode bosonic qubits.
//!
//! The crate covers rotation-symmetric encodings (cat and binomial), square
//! lattice GKP states, the loss/dephasing noise they are exposed to, the phase
//! and homodyne measurements used to read them out, and the logical qubit
//! channel that results from a round of telecorrection.
//!
//! Conventions: `x = (a + a†)/√2`, `p = i(a† - a)/√2`, so the vacuum has
//! quadrature variance 1/2 and the GKP lattice constant is √π.

pub mod codes;
pub mod error;
pub mod fock;
pub mod measure;
pub mod noise;
pub mod runner;
pub mod telecorrect;
pub mod twirl;

mod linalg;

pub use error::{Error, Result};
pub use fock::{C64, CMat, CVec};
