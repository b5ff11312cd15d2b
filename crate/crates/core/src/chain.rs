//! Chain operators, weights and decoherence matrices.
//!
//! For a history `[(t1, P1), …, (tn, Pn)]` the chain operator is built
//! left to right,
//!
//! ```text
//! K = Pn · U(t(n-1) → tn) · … · P2 · U(t1 → t2) · P1
//! ```
//!
//! with the initial state given at `t1`, so `K†` is the familiar
//! `P1 · T(t1,t2) · P2 · … · Pn`. Weights are `W = Tr[ρ K† K]` and the
//! decoherence matrix is `D[a][b] = Tr[ρ K_a† K_b]`.

use std::fmt;

use thiserror::Error;

use crate::dynamics::{DynamicsError, EvolutionProvider};
use crate::linalg::{hs_inner_unchecked, ComplexMatrix, DensityMatrix, C64, DEFAULT_TOL};
use crate::structure::{BranchingFamily, HistorySequence, NodeId, StructureError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("history times are not strictly increasing")]
    UnorderedTimes,
    #[error("weight {0:.3e} is negative beyond tolerance")]
    NegativeWeight(f64),
    #[error("weight has imaginary part {0:.3e}")]
    ComplexWeight(f64),
    #[error("decoherence matrix must be square")]
    NotSquare,
}

/// `K(Y)` for one history.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOperator {
    pub matrix: ComplexMatrix,
    /// Leaf of the history when it came from a family.
    pub source: Option<NodeId>,
}

fn check_dims<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    rho: Option<&DensityMatrix>,
) -> Result<usize, ChainError> {
    let dim = provider.dim();
    if let Some(d) = seq.dim() {
        if d != dim {
            return Err(ChainError::DimensionMismatch {
                expected: dim,
                found: d,
            });
        }
    }
    if let Some(rho) = rho {
        if rho.dim() != dim {
            return Err(ChainError::DimensionMismatch {
                expected: dim,
                found: rho.dim(),
            });
        }
    }
    if seq.steps().windows(2).any(|w| w[0].time >= w[1].time) {
        return Err(ChainError::UnorderedTimes);
    }
    Ok(dim)
}

pub fn chain_operator<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
) -> Result<ChainOperator, ChainError> {
    let dim = check_dims(seq, provider, None)?;
    Ok(ChainOperator {
        matrix: chain_matrix(seq, provider, dim)?,
        source: None,
    })
}

fn chain_matrix<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    dim: usize,
) -> Result<ComplexMatrix, ChainError> {
    let mut steps = seq.steps().iter();
    let Some(first) = steps.next() else {
        return Ok(ComplexMatrix::identity(dim));
    };
    let mut k = first.projector.matrix().clone();
    let mut prev = first.time;
    for step in steps {
        let u = provider.propagator(prev, step.time)?;
        k = &(step.projector.matrix() * u.matrix()) * &k;
        prev = step.time;
    }
    Ok(k)
}

fn real_weight(w: C64, tol: f64) -> Result<f64, ChainError> {
    if w.im.abs() > tol {
        return Err(ChainError::ComplexWeight(w.im));
    }
    if w.re < -tol {
        return Err(ChainError::NegativeWeight(w.re));
    }
    Ok(w.re.max(0.0))
}

/// `W = Tr[ρ K† K]`, at the default tolerance.
pub fn weight<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    rho: &DensityMatrix,
) -> Result<f64, ChainError> {
    weight_with_tol(seq, provider, rho, DEFAULT_TOL)
}

/// Like [`weight`]; imaginary parts above `tol` and negatives below `-tol`
/// are errors, smaller negatives clamp to zero.
pub fn weight_with_tol<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    rho: &DensityMatrix,
    tol: f64,
) -> Result<f64, ChainError> {
    let dim = check_dims(seq, provider, Some(rho))?;
    let k = chain_matrix(seq, provider, dim)?;
    real_weight(hs_inner_unchecked(rho.matrix(), &k, &k), tol)
}

/// `K ρ K†`, unnormalised; its trace is the weight.
pub fn evolved_state<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    rho: &DensityMatrix,
) -> Result<ComplexMatrix, ChainError> {
    let dim = check_dims(seq, provider, Some(rho))?;
    let k = chain_matrix(seq, provider, dim)?;
    Ok(&(&k * rho.matrix()) * &k.adjoint())
}

/// Nonzero step projectors, yet a chain operator that vanishes within `tol`.
pub fn is_dynamically_impossible<E: EvolutionProvider + ?Sized>(
    seq: &HistorySequence,
    provider: &E,
    tol: f64,
) -> Result<bool, ChainError> {
    if seq.steps().iter().any(|s| s.projector.is_zero(tol)) {
        return Ok(false);
    }
    let k = chain_operator(seq, provider)?;
    Ok(k.matrix.is_zero(tol))
}

/// Weights in the family's leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    weights: Vec<f64>,
    leaves: Vec<NodeId>,
}

impl WeightTable {
    /// A table for free-standing histories, which have no leaf ids.
    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self {
            weights,
            leaves: Vec::new(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Leaf ids matching [`WeightTable::weights`]; empty for free histories.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Left-to-right sum.
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weight_of(&self, leaf: NodeId) -> Option<f64> {
        self.leaves.iter().position(|&l| l == leaf).map(|i| self.weights[i])
    }
}

pub fn weight_table(family: &BranchingFamily) -> Result<WeightTable, ChainError> {
    let leaves = family.leaves()?;
    let histories = family.histories()?;
    let weights = histories
        .iter()
        .map(|h| weight(h, family.evolution(), family.initial_state()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightTable { weights, leaves })
}

/// Chain operators of every history of a family, in leaf order.
pub fn family_chain_operators(family: &BranchingFamily) -> Result<Vec<ChainOperator>, ChainError> {
    let leaves = family.leaves()?;
    let histories = family.histories()?;
    histories
        .iter()
        .zip(leaves)
        .map(|(h, leaf)| {
            let mut k = chain_operator(h, family.evolution())?;
            k.source = Some(leaf);
            Ok(k)
        })
        .collect()
}

/// `D[a][b] = ⟨K_a, K_b⟩_ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceMatrix {
    entries: ComplexMatrix,
}

impl DecoherenceMatrix {
    pub fn from_matrix(entries: ComplexMatrix) -> Result<Self, ChainError> {
        if !entries.is_square() {
            return Err(ChainError::NotSquare);
        }
        Ok(Self { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.entries.get(a, b)
    }

    pub fn entries(&self) -> &ComplexMatrix {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|a| self.get(a, a).re).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.entries.hermiticity_defect()
    }

    /// Largest off-diagonal modulus and real-part magnitude.
    pub fn off_diagonal_max(&self) -> (f64, f64) {
        let mut modulus = 0.0f64;
        let mut real = 0.0f64;
        for a in 0..self.size() {
            for b in 0..self.size() {
                if a != b {
                    modulus = modulus.max(self.get(a, b).norm());
                    real = real.max(self.get(a, b).re.abs());
                }
            }
        }
        (modulus, real)
    }
}

impl fmt::Display for DecoherenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in 0..self.size() {
            let row: Vec<String> = (0..self.size())
                .map(|b| format!("{:.6}", self.get(a, b).norm()))
                .collect();
            writeln!(f, "{}", row.join("  "))?;
        }
        Ok(())
    }
}

pub fn decoherence_matrix<E: EvolutionProvider + ?Sized>(
    seqs: &[HistorySequence],
    provider: &E,
    rho: &DensityMatrix,
) -> Result<DecoherenceMatrix, ChainError> {
    let chains = seqs
        .iter()
        .map(|s| {
            let dim = check_dims(s, provider, Some(rho))?;
            chain_matrix(s, provider, dim)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(decoherence_from_chains(&chains, rho))
}

pub(crate) fn decoherence_from_chains(chains: &[ComplexMatrix], rho: &DensityMatrix) -> DecoherenceMatrix {
    let n = chains.len();
    let entries = ComplexMatrix::from_fn(n, n, |a, b| hs_inner_unchecked(rho.matrix(), &chains[a], &chains[b]));
    DecoherenceMatrix { entries }
}

pub fn family_decoherence_matrix(family: &BranchingFamily) -> Result<DecoherenceMatrix, ChainError> {
    decoherence_matrix(&family.histories()?, family.evolution(), family.initial_state())
}

/// Medium consistency: every off-diagonal entry vanishes within `tol`.
pub fn is_consistent(d: &DecoherenceMatrix, tol: f64) -> bool {
    d.off_diagonal_max().0 <= tol
}

/// Weak consistency: every off-diagonal real part vanishes within `tol`.
pub fn is_weakly_consistent(d: &DecoherenceMatrix, tol: f64) -> bool {
    d.off_diagonal_max().1 <= tol
}
