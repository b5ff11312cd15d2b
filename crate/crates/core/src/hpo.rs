//! History projection operators.
//!
//! A history with steps at `n` fixed times becomes the projector
//! `P1 ⊗ P2 ⊗ … ⊗ Pn` on the `n`-fold tensor product of the system space.
//! Families are decompositions of the history-space identity, and any 0/1
//! combination of members is again a history projector, though usually no
//! longer a tensor product of one-time projectors (inhomogeneous).

use thiserror::Error;

use crate::chain::{weight, ChainError, DecoherenceMatrix, WeightTable};
use crate::dynamics::Evolution;
use crate::linalg::{is_projector, kron, ComplexMatrix, DensityMatrix, Projector, C64};
use crate::structure::HistorySequence;

/// History spaces above `2^20` dimensions are refused.
pub const MAX_HISTORY_SPACE_LOG2: f64 = 20.0;

/// Relative threshold on the second operator-Schmidt coefficient below which
/// a bipartite operator counts as a product.
pub const SCHMIDT_RANK_ONE_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HpoError {
    #[error("cannot embed the empty history")]
    EmptySequence,
    #[error("history space of {slots} slots of dimension {dim} is too large")]
    TooLarge { dim: usize, slots: usize },
    #[error("history projectors do not share slots, slot times and dimension")]
    SlotMismatch,
    #[error("histories are not all defined at the same times")]
    NonUniformTimes,
    #[error("selector has length {found}, expected {expected}")]
    SelectorLength { expected: usize, found: usize },
    #[error("not a decomposition of the history identity: {0}")]
    NotAFamily(String),
    #[error("empty family")]
    EmptyFamily,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// A projector on the history space `H ⊗ … ⊗ H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryProjector {
    matrix: ComplexMatrix,
    slot_dim: usize,
    slot_times: Vec<f64>,
}

impl HistoryProjector {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn slots(&self) -> usize {
        self.slot_times.len()
    }

    pub fn slot_dim(&self) -> usize {
        self.slot_dim
    }

    pub fn slot_times(&self) -> &[f64] {
        &self.slot_times
    }

    fn same_space(&self, other: &Self) -> bool {
        self.slot_dim == other.slot_dim && self.slot_times == other.slot_times
    }
}

fn check_size(dim: usize, slots: usize) -> Result<(), HpoError> {
    if slots as f64 * (dim as f64).log2() > MAX_HISTORY_SPACE_LOG2 {
        return Err(HpoError::TooLarge { dim, slots });
    }
    Ok(())
}

/// `P1 ⊗ … ⊗ Pn` with the step times as slot times.
pub fn embed(seq: &HistorySequence) -> Result<HistoryProjector, HpoError> {
    let dim = seq.dim().ok_or(HpoError::EmptySequence)?;
    check_size(dim, seq.len())?;
    let mut steps = seq.steps().iter();
    let first = steps.next().expect("nonempty").projector.matrix().clone();
    let matrix = steps.fold(first, |acc, s| kron(&acc, s.projector.matrix()));
    Ok(HistoryProjector {
        matrix,
        slot_dim: dim,
        slot_times: seq.times(),
    })
}

/// Embeds every history; all must share the same times.
pub fn embed_all(seqs: &[HistorySequence]) -> Result<Vec<HistoryProjector>, HpoError> {
    let first = seqs.first().ok_or(HpoError::EmptyFamily)?;
    if seqs.iter().any(|s| s.times() != first.times()) {
        return Err(HpoError::NonUniformTimes);
    }
    seqs.iter().map(embed).collect()
}

fn family_defect(members: &[HistoryProjector], tol: f64) -> Result<Option<String>, HpoError> {
    let first = members.first().ok_or(HpoError::EmptyFamily)?;
    if members.iter().any(|m| !m.same_space(first)) {
        return Err(HpoError::SlotMismatch);
    }
    for (i, m) in members.iter().enumerate() {
        if !is_projector(&m.matrix, tol).unwrap_or(false) {
            return Ok(Some(format!("member {i} is not a projector")));
        }
    }
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let overlap = (&members[i].matrix * &members[j].matrix).max_norm();
            if overlap > tol {
                return Ok(Some(format!("members {i} and {j} overlap ({overlap:.3e})")));
            }
        }
    }
    let n = first.matrix.nrows();
    let mut sum = ComplexMatrix::zeros(n, n);
    for m in members {
        sum = &sum + &m.matrix;
    }
    let defect = sum.max_dist(&ComplexMatrix::identity(n));
    if defect > tol {
        return Ok(Some(format!("members sum to the identity only within {defect:.3e}")));
    }
    Ok(None)
}

/// Pairwise orthogonal history projectors summing to the history identity.
pub fn is_hpo_family(members: &[HistoryProjector], tol: f64) -> Result<bool, HpoError> {
    Ok(family_defect(members, tol)?.is_none())
}

/// A validated decomposition of the history identity.
#[derive(Debug, Clone, PartialEq)]
pub struct HpoFamily {
    members: Vec<HistoryProjector>,
}

impl HpoFamily {
    pub fn new(members: Vec<HistoryProjector>, tol: f64) -> Result<Self, HpoError> {
        match family_defect(&members, tol)? {
            None => Ok(Self { members }),
            Some(reason) => Err(HpoError::NotAFamily(reason)),
        }
    }

    pub fn members(&self) -> &[HistoryProjector] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_selector(expected: usize, selector: &[bool]) -> Result<(), HpoError> {
    if selector.len() != expected {
        return Err(HpoError::SelectorLength {
            expected,
            found: selector.len(),
        });
    }
    Ok(())
}

/// `Σ π_α Y_α` for a 0/1 selector `π`.
pub fn sum_hpo(family: &HpoFamily, selector: &[bool]) -> Result<HistoryProjector, HpoError> {
    check_selector(family.len(), selector)?;
    let first = &family.members[0];
    let n = first.matrix.nrows();
    let mut sum = ComplexMatrix::zeros(n, n);
    for (m, _) in family.members.iter().zip(selector).filter(|(_, &s)| s) {
        sum = &sum + &m.matrix;
    }
    Ok(HistoryProjector {
        matrix: sum,
        slot_dim: first.slot_dim,
        slot_times: first.slot_times.clone(),
    })
}

/// Rearranges `Y` on `(d) ⊗ (rest)` into the `d² × rest²` matrix whose rank
/// is the operator-Schmidt rank of the split.
fn realign(y: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let rest = y.nrows() / d;
    ComplexMatrix::from_fn(d * d, rest * rest, |row, col| {
        let (i, j) = (row / d, row % d);
        let (k, l) = (col / rest, col % rest);
        y.get(i * rest + k, j * rest + l)
    })
}

fn trace_out_first(y: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let rest = y.nrows() / d;
    ComplexMatrix::from_fn(rest, rest, |k, l| {
        (0..d).map(|i| y.get(i * rest + k, i * rest + l)).sum()
    })
}

fn trace_out_rest(y: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let rest = y.nrows() / d;
    ComplexMatrix::from_fn(d, d, |i, j| (0..rest).map(|k| y.get(i * rest + k, j * rest + k)).sum())
}

// For a scaled projector c·P, returns P (using Tr(cP)/Tr((cP)²) = 1/c).
fn unscale(m: &ComplexMatrix) -> ComplexMatrix {
    let t = m.trace().re;
    let t2 = (m * m).trace().re;
    m.scale(C64::new(t / t2, 0.0))
}

/// Factors `Y` into one-time projectors `P1 ⊗ … ⊗ Pn`, splitting off one slot
/// at a time. `None` if some split has operator-Schmidt rank above one.
pub fn factorize(y: &HistoryProjector, tol: f64) -> Option<Vec<Projector>> {
    let d = y.slot_dim;
    if y.matrix.is_zero(tol) {
        let mut out = vec![Projector::zero(d)];
        out.extend((1..y.slots()).map(|_| Projector::identity(d)));
        return Some(out);
    }
    let mut factors = Vec::with_capacity(y.slots());
    let mut rest = y.matrix.clone();
    for _ in 1..y.slots() {
        let s = realign(&rest, d).singular_values();
        if s.len() > 1 && s[1] > SCHMIDT_RANK_ONE_THRESHOLD * s[0] {
            return None;
        }
        factors.push(Projector::new_unchecked(unscale(&trace_out_rest(&rest, d))));
        rest = unscale(&trace_out_first(&rest, d));
    }
    factors.push(Projector::new_unchecked(rest));
    Some(factors)
}

/// Whether `Y` is a tensor product of one-time projectors.
pub fn is_homogeneous(y: &HistoryProjector, tol: f64) -> bool {
    factorize(y, tol).is_some()
}

/// `Σ_{α,β selected} D[α][β]`: the decoherence-functional value of a 0/1
/// sum of histories. It equals the sum of the selected weights only when the
/// selected off-diagonal real parts cancel.
pub fn extended_weight(d: &DecoherenceMatrix, selector: &[bool]) -> Result<f64, HpoError> {
    check_selector(d.size(), selector)?;
    let picked: Vec<usize> = (0..selector.len()).filter(|&i| selector[i]).collect();
    let mut acc = C64::new(0.0, 0.0);
    for &a in &picked {
        for &b in &picked {
            acc += d.get(a, b);
        }
    }
    Ok(acc.re)
}

fn ket(a: f64, b: f64) -> Projector {
    Projector::onto(&[C64::new(a, 0.0), C64::new(b, 0.0)])
}

/// The homogeneous two-time family on a qubit with `φ = |0⟩`, `ψ = |1⟩`,
/// `χ = |+⟩`, `χ' = |−⟩` at times 0 and 1:
/// `χ⊙ψ`, `χ'⊙ψ`, `φ⊙φ`, `ψ⊙φ`. It decomposes the history identity but is
/// not a branching family.
pub fn isham_sequences() -> Vec<HistorySequence> {
    let (phi, psi, chi, chi_prime) = (ket(1.0, 0.0), ket(0.0, 1.0), ket(1.0, 1.0), ket(1.0, -1.0));
    [
        (chi, psi.clone()),
        (chi_prime, psi.clone()),
        (phi.clone(), phi.clone()),
        (psi, phi),
    ]
    .into_iter()
    .map(|(a, b)| HistorySequence::from_pairs([(0.0, a), (1.0, b)]).expect("ordered"))
    .collect()
}

/// The same histories with their steps in reverse temporal order.
pub fn isham_reversed_sequences() -> Vec<HistorySequence> {
    isham_sequences()
        .into_iter()
        .map(|h| {
            let steps = h.steps();
            HistorySequence::from_pairs([(0.0, steps[1].projector.clone()), (1.0, steps[0].projector.clone())])
                .expect("ordered")
        })
        .collect()
}

/// Initial state `|φ⟩⟨φ| = |0⟩⟨0|` used with [`isham_sequences`].
pub fn isham_initial_state() -> DensityMatrix {
    DensityMatrix::pure(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
}

/// The homogeneous family above and its weights `(1/4, 1/4, 1, 0)` under
/// trivial dynamics.
pub fn isham_counterexample() -> (HpoFamily, WeightTable) {
    let seqs = isham_sequences();
    let members = embed_all(&seqs).expect("uniform times");
    let family = HpoFamily::new(members, crate::linalg::DEFAULT_TOL).expect("decomposes the identity");
    let evo = Evolution::trivial(2);
    let rho = isham_initial_state();
    let weights = seqs
        .iter()
        .map(|h| weight(h, &evo, &rho))
        .collect::<Result<Vec<_>, _>>()
        .expect("dimensions agree");
    (family, WeightTable::from_weights(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::decoherence_matrix;
    use crate::linalg::{Decomposition, Unitary};
    use crate::structure::{BranchingFamily, InitialState};

    fn select(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn embed_examples() {
        let one = HistorySequence::from_pairs([(3.0, Projector::identity(2))]).unwrap();
        let y = embed(&one).unwrap();
        assert_eq!(y.matrix(), &ComplexMatrix::identity(2));
        assert_eq!(y.slots(), 1);

        let seqs = isham_sequences();
        let y1 = embed(&seqs[0]).unwrap();
        let oracle = kron(ket(1.0, 1.0).matrix(), ket(0.0, 1.0).matrix());
        assert!(y1.matrix().approx_eq(&oracle, 0.0));
        assert_eq!(y1.matrix().nrows(), 4);
        assert!(is_projector(y1.matrix(), 1e-12).unwrap());

        let y4 = embed(&seqs[3]).unwrap();
        assert!((y1.matrix() * y4.matrix()).is_zero(1e-15));
        assert_eq!(embed(&HistorySequence::empty()), Err(HpoError::EmptySequence));
    }

    #[test]
    fn embedding_refuses_huge_spaces() {
        let steps = (0..21).map(|i| (i as f64, Projector::identity(2)));
        let h = HistorySequence::from_pairs(steps).unwrap();
        assert_eq!(embed(&h), Err(HpoError::TooLarge { dim: 2, slots: 21 }));
    }

    #[test]
    fn family_checks() {
        let members = embed_all(&isham_sequences()).unwrap();
        assert!(is_hpo_family(&members, 1e-12).unwrap());
        assert!(!is_hpo_family(&members[..3], 1e-12).unwrap());

        let f = BranchingFamily::from_product(
            2,
            &[0.0, 1.0],
            &[
                Decomposition::from_basis(&Unitary::hadamard()),
                Decomposition::computational(2),
            ],
            InitialState::MaximallyMixed,
            Evolution::trivial(2),
        )
        .unwrap();
        let members = embed_all(&f.histories().unwrap()).unwrap();
        assert!(is_hpo_family(&members, 1e-12).unwrap());

        let odd = embed(&HistorySequence::from_pairs([(0.0, Projector::identity(2))]).unwrap()).unwrap();
        let mut mixed = members.clone();
        mixed.push(odd);
        assert_eq!(is_hpo_family(&mixed, 1e-12), Err(HpoError::SlotMismatch));
    }

    #[test]
    fn sum_examples() {
        let (family, _) = isham_counterexample();
        let all = sum_hpo(&family, &[true; 4]).unwrap();
        assert!(all.matrix().approx_eq(&ComplexMatrix::identity(4), 1e-15));
        let none = sum_hpo(&family, &[false; 4]).unwrap();
        assert!(none.matrix().is_zero(0.0));
        let y = sum_hpo(&family, &select(&[1, 0, 1, 0])).unwrap();
        assert!(is_projector(y.matrix(), 1e-12).unwrap());
        // Rank from the eigenvalues: a projector has eigenvalues in {0, 1}.
        let (values, _) = y.matrix().hermitian_eigen().unwrap();
        let rank = values.iter().filter(|&&v| v > 0.5).count();
        assert_eq!(rank, 2);
        assert!(matches!(
            sum_hpo(&family, &[true]),
            Err(HpoError::SelectorLength { .. })
        ));
    }

    #[test]
    fn homogeneity_examples() {
        let (family, _) = isham_counterexample();
        for m in family.members() {
            assert!(is_homogeneous(m, 1e-12));
        }
        let h13 = sum_hpo(&family, &select(&[1, 0, 1, 0])).unwrap();
        assert!(!is_homogeneous(&h13, 1e-12));
        let h12 = sum_hpo(&family, &select(&[1, 1, 0, 0])).unwrap();
        assert!(is_homogeneous(&h12, 1e-12));
        // |+><+| + |-><-| = I in the first slot, |1><1| in the second.
        let factors = factorize(&h12, 1e-12).unwrap();
        assert!(factors[0].approx_eq(&Projector::identity(2), 1e-12));
        assert!(factors[1].approx_eq(&ket(0.0, 1.0), 1e-12));
        let zero = sum_hpo(&family, &[false; 4]).unwrap();
        assert!(is_homogeneous(&zero, 1e-12));
    }

    #[test]
    fn factorize_three_slots() {
        let h = HistorySequence::from_pairs([
            (0.0, ket(1.0, 1.0)),
            (1.0, Projector::identity(2)),
            (2.0, ket(0.3, -0.8)),
        ])
        .unwrap();
        let y = embed(&h).unwrap();
        let f = factorize(&y, 1e-12).unwrap();
        for (got, step) in f.iter().zip(h.steps()) {
            assert!(got.approx_eq(&step.projector, 1e-10));
        }
    }

    #[test]
    fn extended_weight_examples() {
        let seqs = isham_sequences();
        let d = decoherence_matrix(&seqs, &Evolution::trivial(2), &isham_initial_state()).unwrap();
        let w0 = extended_weight(&d, &select(&[1, 0, 0, 0])).unwrap();
        assert!((w0 - 0.25).abs() < 1e-12);
        // Chains sum to |1><1| + |0><0| = I, whose weight is Tr rho = 1.
        let all = extended_weight(&d, &[true; 4]).unwrap();
        assert!((all - 1.0).abs() < 1e-12, "{all}");
        // 1/4 + 1/4 + 2·(-1/4) = 0
        let pair = extended_weight(&d, &select(&[1, 1, 0, 0])).unwrap();
        assert!(pair.abs() < 1e-12);
        assert!(matches!(
            extended_weight(&d, &[true]),
            Err(HpoError::SelectorLength { .. })
        ));
    }

    #[test]
    fn counterexample_weights() {
        let (family, w) = isham_counterexample();
        assert_eq!(family.len(), 4);
        for (got, want) in w.weights().iter().zip([0.25, 0.25, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((w.sum() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn reversed_counterexample_is_branching() {
        let seqs = isham_reversed_sequences();
        let f = BranchingFamily::from_histories(
            2,
            &seqs,
            InitialState::Explicit(isham_initial_state().matrix().clone()),
            Evolution::trivial(2),
            1e-9,
        )
        .unwrap();
        let w = crate::chain::weight_table(&f).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert_eq!(w.weights().iter().filter(|&&x| x > 1e-12).count(), 1);

        let forward = BranchingFamily::from_histories(
            2,
            &isham_sequences(),
            InitialState::MaximallyMixed,
            Evolution::trivial(2),
            1e-9,
        );
        assert!(forward.is_err());
    }

    #[test]
    fn non_uniform_times_cannot_be_embedded_together() {
        let a = HistorySequence::from_pairs([(0.0, Projector::identity(2))]).unwrap();
        let b = HistorySequence::from_pairs([(1.0, Projector::identity(2))]).unwrap();
        assert_eq!(embed_all(&[a, b]), Err(HpoError::NonUniformTimes));
    }
}
