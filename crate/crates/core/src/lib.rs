//! Structure-preserving eigensolvers for Bethe-Salpeter Hamiltonians.

pub mod error;
pub mod flops;
pub mod generate;
pub mod glanczos;
pub mod cli;
pub mod mtx;
pub mod gqr_factor;
pub mod gqr_solver;
pub mod hamiltonian;
pub mod hyperbolic;
pub mod linalg;
pub mod matrix;
pub mod pimatrix;
pub mod piwork;
pub mod signature;
pub mod structure;
pub mod validation;

pub use error::{BsepError, Result};
pub use hamiltonian::{apply_hamiltonian, assemble_hamiltonian, expand_dense, pi_conjugate, BsepHamiltonian};
pub use matrix::ComplexDense;
pub use num_complex::Complex64 as C64;
pub use pimatrix::{PiKind, PiMatrix, PiSign, PiTridiagonal};
pub use signature::{gamma_inner, Signature};
pub use structure::{check_structure, StructureClaim, StructureReport};
