//! Numerical laboratory for the Fermi polaron: patch bosonization of the Fermi
//! surface, closed-form coherent-state dynamics and an exact finite-mode Fock
//! simulator used to check the operator identities and bounds.

pub mod coherent;
pub mod error;
pub mod evolve;
pub mod fock;
pub mod hamiltonians;
pub mod krylov;
pub mod lattice;
pub mod lowerbound;
pub mod patches;
pub mod quadrature;
pub mod sparse;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{build_fermi_ball, build_mode_set, gamma_set, FermiBall, ModeSet, Momentum, Potential};
pub use patches::{build_patch_set, index_set, pair_count, IndexSet, PairWeight, Patch, PatchSet, WeightTable};
