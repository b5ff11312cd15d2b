mod common;

use common::*;
use histories::{ComplexMatrix, EvolutionProvider};
use proptest::prelude::*;
use rand::Rng;

fn three_times(r: &mut impl Rng, kind: Kind) -> [f64; 3] {
    match kind {
        Kind::Table => [0, 0, 0].map(|_| r.gen_range(0..=TABLE_END) as f64),
        _ => [0, 0, 0].map(|_| r.gen_range(-5.0..5.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn propagators_form_a_groupoid(seed in any::<u64>(), k in 0usize..3, n in 1usize..5) {
        let mut r = rng(seed);
        let kind = KINDS[k];
        let evo = random_evolution(&mut r, n, kind);
        let [t1, t2, t3] = three_times(&mut r, kind);
        let id = evo.propagator(t1, t1).unwrap();
        prop_assert!(id.matrix().approx_eq(&ComplexMatrix::identity(n), 1e-9));
        let u12 = evo.propagator(t1, t2).unwrap();
        let u23 = evo.propagator(t2, t3).unwrap();
        let u13 = evo.propagator(t1, t3).unwrap();
        prop_assert!((u23.matrix() * u12.matrix()).approx_eq(u13.matrix(), 1e-9));
        let u21 = evo.propagator(t2, t1).unwrap();
        prop_assert!(u21.matrix().approx_eq(&u12.adjoint().matrix().clone(), 1e-9));
    }

    #[test]
    fn hamiltonian_propagators_commute(seed in any::<u64>(), n in 1usize..5, a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let mut r = rng(seed);
        let evo = random_evolution(&mut r, n, Kind::Hamiltonian);
        let ua = evo.propagator(0.0, a).unwrap();
        let ub = evo.propagator(1.0, 1.0 + b).unwrap();
        prop_assert!((ua.matrix() * ub.matrix()).approx_eq(&(ub.matrix() * ua.matrix()), 1e-9));
    }
}

#[test]
fn table_rejects_times_between_breakpoints() {
    let mut r = rng(7);
    let evo = random_evolution(&mut r, 2, Kind::Table);
    assert!(evo.propagator(0.0, 1.5).is_err());
    assert!(evo.propagator(0.0, TABLE_END as f64 + 1.0).is_err());
}
