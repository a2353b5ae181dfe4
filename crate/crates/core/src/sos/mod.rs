//! Sum-of-squares relaxation of the subspace-recovery constraint system.

pub mod constraints;
pub mod monomials;
pub mod pseudo;
pub mod sdp;
pub mod solver;

pub use constraints::{build_constraints, ConstraintOptions, ConstraintSystem, VarLayout};
pub use monomials::MonomialIndex;
pub use pseudo::{validate, PseudoDistribution, ValidationReport};
pub use sdp::{assemble_sdp, write_triplets, SdpInstance};
pub use solver::{solve_min_norm, Solution, SolveStats, SolverOptions};
