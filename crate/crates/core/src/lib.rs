//! Branching families of quantum histories.
//!
//! Histories are time-ordered chains of projectors on a finite-dimensional
//! Hilbert space. A [`BranchingFamily`] arranges them in a tree whose branching
//! points carry decompositions of the identity, which may depend on the branch
//! taken so far. The crate computes chain operators, weights and decoherence
//! matrices, checks consistency, performs intra-branch and product coarse
//! graining, and embeds homogeneous histories as history projection operators
//! on the tensor-product history space.

pub mod chain;
pub mod cli;
pub mod coarse;
pub mod demos;
pub mod dynamics;
pub mod hpo;
pub mod io;
pub mod linalg;
pub mod structure;

pub use dynamics::{Evolution, EvolutionProvider};
pub use linalg::{ComplexMatrix, Decomposition, DensityMatrix, Projector, Unitary, C64, DEFAULT_TOL};
pub use structure::{BranchingFamily, HistorySequence, InitialState, Moment, NodeId, Step, ValidationReport};
