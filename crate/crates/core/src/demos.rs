//! Built-in example families.

use crate::dynamics::Evolution;
use crate::hpo::{isham_initial_state, isham_reversed_sequences, isham_sequences};
use crate::io::{Document, HistorySet};
use crate::linalg::{ComplexMatrix, Decomposition, Unitary, C64, DEFAULT_TOL};
use crate::structure::{BranchingFamily, InitialState, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    Fig2,
    BranchNoProd,
    IshamHpo,
    IshamReversed,
}

impl Demo {
    pub const ALL: [Demo; 4] = [Demo::Fig2, Demo::BranchNoProd, Demo::IshamHpo, Demo::IshamReversed];

    pub fn name(self) -> &'static str {
        match self {
            Demo::Fig2 => "fig2",
            Demo::BranchNoProd => "branch-no-prod",
            Demo::IshamHpo => "isham-hpo",
            Demo::IshamReversed => "isham-reversed",
        }
    }

    pub fn from_name(name: &str) -> Option<Demo> {
        Demo::ALL.into_iter().find(|d| d.name() == name)
    }

    /// Header lines describing the choices baked into the example.
    pub fn description(self) -> &'static [&'static str] {
        match self {
            Demo::Fig2 => &[
                "qutrit tree with 8 moments and 5 histories under a constant Hamiltonian",
                "root splits into |0><0| and the projector onto span{|1>,|2>}; the first branch refines in the Fourier basis, the second splits the Fourier basis into {f0} and {f1,f2}",
            ],
            Demo::BranchNoProd => &[
                "qubit branching family that is not a product family; trivial dynamics, maximally mixed state",
                "phi-basis = computational {|0>,|1>} at t=0; below |0> the computational basis again, below |1> the Hadamard basis {|+>,|->}, both at t=1",
            ],
            Demo::IshamHpo => &[
                "homogeneous two-time qubit histories chi*psi, chi'*psi, phi*phi, psi*phi at t1=0, t2=1, trivial dynamics",
                "phi=|0>, psi=|1>, chi=|+>, chi'=|->; initial state |phi><phi|",
            ],
            Demo::IshamReversed => &[
                "the isham-hpo histories with their two steps swapped in time (t1=0, t2=1, trivial dynamics)",
                "phi=|0>, psi=|1>, chi=|+>, chi'=|->; initial state |phi><phi|",
            ],
        }
    }

    pub fn document(self) -> Document {
        match self {
            Demo::Fig2 => Document::Family(fig2()),
            Demo::BranchNoProd => Document::Family(branch_no_prod()),
            Demo::IshamHpo => Document::Histories(
                HistorySet::new(2, isham_initial(), Evolution::trivial(2), isham_sequences())
                    .expect("pure qubit state"),
            ),
            Demo::IshamReversed => Document::Family(
                BranchingFamily::from_histories(
                    2,
                    &isham_reversed_sequences(),
                    isham_initial(),
                    Evolution::trivial(2),
                    DEFAULT_TOL,
                )
                .expect("the reversed histories branch"),
            ),
        }
    }
}

fn isham_initial() -> InitialState {
    InitialState::Explicit(isham_initial_state().matrix().clone())
}

pub fn fig2() -> BranchingFamily {
    let c = |re: f64, im: f64| C64::new(re, im);
    let h = ComplexMatrix::from_rows(&[
        vec![c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)],
        vec![c(0.5, 0.0), c(-0.5, 0.0), c(0.0, 0.25)],
        vec![c(0.0, 0.0), c(0.0, -0.25), c(0.2, 0.0)],
    ])
    .expect("3x3");
    let evolution = Evolution::hamiltonian(h).expect("Hermitian");
    let split = Decomposition::from_basis_groups(&Unitary::identity(3), &[vec![0], vec![1, 2]], DEFAULT_TOL)
        .expect("computational split");
    let fourier = Unitary::fourier(3);
    let fine = Decomposition::from_basis(&fourier);
    let coarse =
        Decomposition::from_basis_groups(&fourier, &[vec![0], vec![1, 2]], DEFAULT_TOL).expect("Fourier split");
    BranchingFamily::new_family(3, 0.0, InitialState::MaximallyMixed, evolution)
        .and_then(|f| f.extend(NodeId::ROOT, &split, &[1.0, 1.5]))
        .and_then(|f| f.extend(NodeId(1), &fine, &[2.0, 2.0, 2.0]))
        .and_then(|f| f.extend(NodeId(2), &coarse, &[2.5, 2.5]))
        .expect("valid tree")
}

pub fn branch_no_prod() -> BranchingFamily {
    let computational = Decomposition::computational(2);
    let hadamard = Decomposition::from_basis(&Unitary::hadamard());
    BranchingFamily::new_family(2, 0.0, InitialState::MaximallyMixed, Evolution::trivial(2))
        .and_then(|f| f.extend(NodeId::ROOT, &computational, &[1.0, 1.0]))
        .and_then(|f| f.extend(NodeId(1), &computational, &[2.0, 2.0]))
        .and_then(|f| f.extend(NodeId(2), &hadamard, &[2.0, 2.0]))
        .expect("valid tree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for d in Demo::ALL {
            assert_eq!(Demo::from_name(d.name()), Some(d));
        }
        assert_eq!(Demo::from_name("fig3"), None);
    }

    #[test]
    fn fig2_shape() {
        let f = fig2();
        assert_eq!(f.moments().len(), 8);
        assert_eq!(f.leaves().unwrap().len(), 5);
        assert!(f.validate(DEFAULT_TOL).is_valid());
    }

    #[test]
    fn reversed_demo_is_a_family() {
        let Document::Family(f) = Demo::IshamReversed.document() else {
            panic!("expected a family");
        };
        assert_eq!(f.leaves().unwrap().len(), 4);
    }
}
