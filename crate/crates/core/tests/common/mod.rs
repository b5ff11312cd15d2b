#![allow(dead_code)]

use histories::{
    BranchingFamily, ComplexMatrix, Decomposition, DensityMatrix, Evolution, InitialState, NodeId, Projector, Unitary,
    C64,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const TABLE_END: usize = 16;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn ginibre(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| gaussian(rng))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Haar-distributed unitary: Gram-Schmidt on a complex Ginibre matrix,
/// which fixes the phases of the implied `R` diagonal to be positive.
pub fn haar_unitary(rng: &mut impl Rng, n: usize) -> Unitary {
    let g = ginibre(rng, n);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<C64> = (0..n).map(|i| g.get(i, j)).collect();
        for _ in 0..2 {
            for q in &cols {
                let overlap: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= overlap * y;
                }
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    Unitary::new(ComplexMatrix::from_fn(n, n, |i, j| cols[j][i]), 1e-9).expect("orthonormal columns")
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = ginibre(rng, n);
    (&g + &g.adjoint()).scale(C64::new(0.5, 0.0))
}

/// Random decomposition of the identity with `k` members built from a Haar
/// basis.
pub fn random_decomposition_of_size(rng: &mut impl Rng, dim: usize, k: usize) -> Decomposition {
    let u = haar_unitary(rng, dim);
    let mut cols: Vec<usize> = (0..dim).collect();
    cols.shuffle(rng);
    let mut cuts: Vec<usize> = (1..dim).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort_unstable();
    cuts.push(dim);
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for c in cuts {
        groups.push(cols[start..c].to_vec());
        start = c;
    }
    Decomposition::from_basis_groups(&u, &groups, 1e-9).expect("orthonormal basis")
}

pub fn random_decomposition(rng: &mut impl Rng, dim: usize) -> Decomposition {
    let k = rng.gen_range(1..=dim);
    random_decomposition_of_size(rng, dim, k)
}

pub fn random_projector(rng: &mut impl Rng, dim: usize) -> Projector {
    let u = haar_unitary(rng, dim);
    let rank = rng.gen_range(0..=dim);
    Projector::onto_columns(u.matrix(), &(0..rank).collect::<Vec<_>>())
}

pub fn random_density(rng: &mut impl Rng, dim: usize) -> DensityMatrix {
    let rank = rng.gen_range(1..=dim);
    let g = ComplexMatrix::from_fn(dim, rank, |_, _| gaussian(rng));
    let m = &g * &g.adjoint();
    let t = m.trace();
    DensityMatrix::new(m.scale(C64::new(1.0, 0.0) / t), 1e-9).expect("positive, unit trace")
}

pub fn random_initial(rng: &mut impl Rng, dim: usize) -> InitialState {
    match rng.gen_range(0..3) {
        0 => InitialState::MaximallyMixed,
        1 => {
            let v = random_vector(rng, dim);
            InitialState::Explicit(DensityMatrix::pure(&v).matrix().clone())
        }
        _ => InitialState::Explicit(random_density(rng, dim).matrix().clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Trivial,
    Table,
    Hamiltonian,
}

pub const KINDS: [Kind; 3] = [Kind::Trivial, Kind::Table, Kind::Hamiltonian];

/// A provider of the given kind. Tables have breakpoints `0, 1, …, 16`.
pub fn random_evolution(rng: &mut impl Rng, dim: usize, kind: Kind) -> Evolution {
    match kind {
        Kind::Trivial => Evolution::trivial(dim),
        Kind::Table => {
            let breakpoints = (0..=TABLE_END).map(|t| t as f64).collect();
            let unitaries = (0..TABLE_END).map(|_| haar_unitary(rng, dim)).collect();
            Evolution::unitary_table(breakpoints, unitaries).expect("valid table")
        }
        Kind::Hamiltonian => Evolution::hamiltonian(random_hermitian(rng, dim)).expect("Hermitian"),
    }
}

/// A time increment the provider kind can handle.
pub fn time_step(rng: &mut impl Rng, kind: Kind) -> f64 {
    match kind {
        Kind::Table => rng.gen_range(1..=3) as f64,
        _ => rng.gen_range(0.1..2.0),
    }
}

pub fn random_kind(rng: &mut impl Rng) -> Kind {
    KINDS[rng.gen_range(0..3)]
}

/// Random valid family: dimension 2–4, depth 1–4, branching factor at most
/// the dimension, Haar-random decompositions.
pub fn random_family_of_kind(rng: &mut impl Rng, kind: Kind) -> BranchingFamily {
    let dim = rng.gen_range(2..=4);
    let evolution = random_evolution(rng, dim, kind);
    let initial = random_initial(rng, dim);
    let depth = rng.gen_range(1..=4);
    let mut family = BranchingFamily::new_family(dim, 0.0, initial, evolution).expect("valid root");
    let mut frontier = vec![(NodeId::ROOT, 0usize)];
    while let Some((leaf, level)) = frontier.pop() {
        if level >= depth || (level > 0 && rng.gen_bool(0.35)) {
            continue;
        }
        family = extend_randomly(rng, &family, leaf, kind);
        let children = family.children(leaf);
        frontier.extend(children.into_iter().map(|c| (c, level + 1)));
    }
    family
}

pub fn random_family(rng: &mut impl Rng) -> BranchingFamily {
    let kind = random_kind(rng);
    random_family_of_kind(rng, kind)
}

pub fn extend_randomly(rng: &mut impl Rng, family: &BranchingFamily, leaf: NodeId, kind: Kind) -> BranchingFamily {
    let decomposition = random_decomposition(rng, family.dim());
    let t = family.moment(leaf).expect("leaf exists").time;
    let times: Vec<f64> = (0..decomposition.len()).map(|_| t + time_step(rng, kind)).collect();
    family.extend(leaf, &decomposition, &times).expect("valid extension")
}

pub fn kind_of(family: &BranchingFamily) -> Kind {
    match family.evolution() {
        Evolution::Trivial { .. } => Kind::Trivial,
        Evolution::PiecewiseUnitary(_) => Kind::Table,
        Evolution::ConstantHamiltonian(_) => Kind::Hamiltonian,
    }
}

/// Pairs of leaves sharing a parent.
pub fn sibling_leaf_pairs(family: &BranchingFamily) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for m in family.moments() {
        let leaves: Vec<NodeId> = family
            .children(m.id)
            .into_iter()
            .filter(|&c| family.is_leaf(c))
            .collect();
        for i in 0..leaves.len() {
            for j in i + 1..leaves.len() {
                out.push((leaves[i], leaves[j]));
            }
        }
    }
    out
}
