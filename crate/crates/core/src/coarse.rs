//! Coarse graining.
//!
//! Three ways of lumping histories together:
//!
//! * events: sets of histories, whose probability is the sum of weights;
//! * intra-branch sums: two sibling leaves merged into one history whose last
//!   projector is the sum of theirs (always weight-additive);
//! * product sums: two equal-time sequences differing at exactly one step,
//!   merged at that step (weight-additive only when the pair's chains are
//!   weakly orthogonal).
//!
//! Summing histories from different branches has no history-level meaning
//! and is reported as [`CoarseError::TransBranch`].

use std::collections::BTreeSet;

use thiserror::Error;

use crate::chain::{chain_operator, weight, ChainError, WeightTable};
use crate::dynamics::EvolutionProvider;
use crate::linalg::{hs_inner_unchecked, DensityMatrix, Projector};
use crate::structure::{BranchingFamily, HistorySequence, NodeId, Step, StructureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoarseError {
    #[error("history index {index} out of range for {len} histories")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trans-branch sum undefined: {0} and {1} are not siblings")]
    TransBranch(NodeId, NodeId),
    #[error("{0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("cannot sum {0} with itself")]
    SameHistory(NodeId),
    #[error("histories differ at {0} positions; exactly one is required")]
    DifferingPositions(usize),
    #[error("projectors at position {0} are not orthogonal, so their sum is not a projector")]
    NonOrthogonal(usize),
    #[error("histories have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("histories are not defined at the same times")]
    TimeMismatch,
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// `μ(S) = Σ_{h ∈ S} W(h)`, summed in index order.
pub fn event_probability(table: &WeightTable, subset: impl IntoIterator<Item = usize>) -> Result<f64, CoarseError> {
    let subset: BTreeSet<usize> = subset.into_iter().collect();
    let w = table.weights();
    if let Some(&index) = subset.iter().find(|&&i| i >= w.len()) {
        return Err(CoarseError::IndexOutOfRange { index, len: w.len() });
    }
    Ok(subset.iter().map(|&i| w[i]).sum())
}

fn check_siblings(family: &BranchingFamily, a: NodeId, b: NodeId) -> Result<(), CoarseError> {
    family.ensure_valid()?;
    for leaf in [a, b] {
        if family.moment(leaf).is_none() {
            return Err(StructureError::UnknownNode(leaf).into());
        }
        if !family.is_leaf(leaf) {
            return Err(CoarseError::NotALeaf(leaf));
        }
    }
    if a == b {
        return Err(CoarseError::SameHistory(a));
    }
    let parent = |n| family.moment(n).and_then(|m| m.parent);
    if parent(a) != parent(b) {
        return Err(CoarseError::TransBranch(a, b));
    }
    Ok(())
}

/// The intra-branch sum of two sibling leaves: their shared prefix followed
/// by the sum of their final projectors.
pub fn intra_branch_sum(family: &BranchingFamily, a: NodeId, b: NodeId) -> Result<HistorySequence, CoarseError> {
    check_siblings(family, a, b)?;
    let ha = family.history_of(a)?;
    let hb = family.history_of(b)?;
    let mut steps = ha.steps().to_vec();
    let last = steps.pop().expect("leaves below the root have at least one step");
    let other = hb.steps().last().expect("same parent");
    steps.push(Step {
        time: last.time,
        // Siblings are orthogonal members of one decomposition.
        projector: Projector::new_unchecked(last.projector.matrix() + other.projector.matrix()),
    });
    Ok(HistorySequence::new(steps)?)
}

/// `|W(sum(a, b)) - W(a) - W(b)| <= tol` for sibling leaves `a`, `b`.
pub fn verify_intra_additivity(family: &BranchingFamily, a: NodeId, b: NodeId, tol: f64) -> Result<bool, CoarseError> {
    Ok(intra_additivity_defect(family, a, b)?.abs() <= tol)
}

/// `W(sum(a, b)) - W(a) - W(b)` for sibling leaves.
pub fn intra_additivity_defect(family: &BranchingFamily, a: NodeId, b: NodeId) -> Result<f64, CoarseError> {
    let sum = intra_branch_sum(family, a, b)?;
    let (evo, rho) = (family.evolution(), family.initial_state());
    let w = |h: &HistorySequence| weight(h, evo, rho);
    Ok(w(&sum)? - w(&family.history_of(a)?)? - w(&family.history_of(b)?)?)
}

/// Merges two equal-time sequences that differ at exactly one step, where
/// the differing projectors must be orthogonal.
pub fn product_sum(seq1: &HistorySequence, seq2: &HistorySequence, tol: f64) -> Result<HistorySequence, CoarseError> {
    if seq1.len() != seq2.len() {
        return Err(CoarseError::LengthMismatch(seq1.len(), seq2.len()));
    }
    if seq1.times() != seq2.times() {
        return Err(CoarseError::TimeMismatch);
    }
    let mut differing = Vec::new();
    for (i, (s1, s2)) in seq1.steps().iter().zip(seq2.steps()).enumerate() {
        if !s1.projector.approx_eq(&s2.projector, tol) {
            if !s1.projector.is_orthogonal_to(&s2.projector, tol) {
                return Err(CoarseError::NonOrthogonal(i));
            }
            differing.push(i);
        }
    }
    let [j] = differing[..] else {
        return Err(CoarseError::DifferingPositions(differing.len()));
    };
    let mut steps = seq1.steps().to_vec();
    steps[j].projector =
        Projector::new_unchecked(seq1.steps()[j].projector.matrix() + seq2.steps()[j].projector.matrix());
    Ok(HistorySequence::new(steps)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductAdditivity {
    pub additive: bool,
    /// `W(sum) - W(h1) - W(h2)`; equals `2·Re⟨K1, K2⟩_ρ`.
    pub discrepancy: f64,
}

pub fn verify_product_additivity<E: EvolutionProvider + ?Sized>(
    seq1: &HistorySequence,
    seq2: &HistorySequence,
    provider: &E,
    rho: &DensityMatrix,
    tol: f64,
) -> Result<ProductAdditivity, CoarseError> {
    let sum = product_sum(seq1, seq2, tol)?;
    // Raw quadratic forms, so that the discrepancy is not distorted by the
    // clamping applied to reported weights.
    let w = |h: &HistorySequence| -> Result<f64, CoarseError> {
        let k = chain_operator(h, provider)?.matrix;
        if rho.dim() != k.nrows() {
            return Err(ChainError::DimensionMismatch {
                expected: k.nrows(),
                found: rho.dim(),
            }
            .into());
        }
        Ok(hs_inner_unchecked(rho.matrix(), &k, &k).re)
    };
    let discrepancy = w(&sum)? - w(seq1)? - w(seq2)?;
    Ok(ProductAdditivity {
        additive: discrepancy.abs() <= tol,
        discrepancy,
    })
}
