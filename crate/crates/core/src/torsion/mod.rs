//! Torsion-space linear algebra: constraint assembly, contact predicates,
//! minimum-norm solves and the orthogonal chain.

pub mod chain;
pub mod constraint;
pub mod extremal;
pub mod linalg;
pub mod symmetry;
pub mod tensor;

pub use chain::{chain_step, solve_reference, ChainState, StepTolerances};
pub use constraint::{is_horizontal_contact, is_vertical_contact, residual, sigma, ConstraintBlock};
pub use extremal::{
    classify_blocks, extremal_from_blocks, extremal_torsion, oracle_min_norm, ChainDiagnostics, ContactCounts, DirectionPools, ExtremalOutcome,
    OracleSolution, PointBlocks, PoolSpec, Route, Termination, Tolerances,
};
pub use symmetry::{symmetry_invariance_check, SymmetryReport};
pub use tensor::{FrameTag, TorsionTensor};
