use std::f64::consts::PI;

use proptest::prelude::*;
use resonance::decomposition::{classify, counts, project, spectral_gap, Projection};
use resonance::spectral::{apply_a, build_basis, semigroup_apply, Domain1D, ProblemConfig, SpectralBasis};
use resonance::GalerkinState;

const MODES: usize = 10;

fn basis() -> SpectralBasis {
    build_basis(Domain1D::with_modes(1.0, MODES).unwrap(), MODES).unwrap()
}

fn mu(j: usize) -> f64 {
    (j as f64 * PI).powi(2)
}

/// A shift either on eigenvalue `j` or halfway between `j` and `j + 1`.
fn shift_strategy() -> impl Strategy<Value = f64> {
    (1usize..8, any::<bool>()).prop_map(|(j, on)| if on { mu(j) } else { 0.5 * (mu(j) + mu(j + 1)) })
}

fn state_strategy(m: usize) -> impl Strategy<Value = GalerkinState> {
    prop::collection::vec(-1.0f64..1.0, m * MODES).prop_map(move |f| GalerkinState::from_flat(m, MODES, &f).unwrap())
}

const ALL: [Projection; 6] = [
    Projection::P1,
    Projection::P2,
    Projection::QMinus,
    Projection::QPlus,
    Projection::Q0,
    Projection::QHyperbolic,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unstable_dimension_matches_brute_force(lambda in prop::collection::vec(shift_strategy(), 1..4)) {
        let m = lambda.len();
        let cfg = ProblemConfig::new(lambda.clone(), vec![0.0; m], 1, 0.8).unwrap();
        let split = classify(&basis(), &cfg).unwrap();
        let brute: usize = lambda
            .iter()
            .map(|l| (1..=MODES).filter(|&j| mu(j) < *l - 1e-9 * mu(j)).count())
            .sum();
        prop_assert_eq!(split.minus_modes.len(), brute);
        prop_assert_eq!(counts(&split).d_inf, brute);
    }

    #[test]
    fn projections_partition_and_are_idempotent(
        lambda in prop::collection::vec(shift_strategy(), 2..4),
        u in state_strategy(3),
        v in state_strategy(3),
    ) {
        let mut lambda = lambda;
        lambda.resize(3, mu(2));
        let cfg = ProblemConfig::new(lambda, vec![0.0; 3], 2, 0.8).unwrap();
        let split = classify(&basis(), &cfg).unwrap();
        let sum = &(&project(&split, Projection::P1, &u) + &project(&split, Projection::P2, &u))
            + &(&project(&split, Projection::QMinus, &u) + &project(&split, Projection::QPlus, &u));
        prop_assert_eq!(&sum, &u);
        for p in ALL {
            let once = project(&split, p, &u);
            prop_assert_eq!(project(&split, p, &once), once);
        }
        let inner = project(&split, Projection::P1, &u).dot(&project(&split, Projection::QPlus, &v));
        prop_assert_eq!(inner, 0.0);
    }

    #[test]
    fn projections_commute_with_the_operator(
        lambda in prop::collection::vec(shift_strategy(), 2..=2),
        u in state_strategy(2),
        t in prop::sample::select(vec![0.01, 0.1, 1.0]),
    ) {
        let b = basis();
        let cfg = ProblemConfig::new(lambda, vec![0.0; 2], 1, 0.8).unwrap();
        let split = classify(&b, &cfg).unwrap();
        for p in ALL {
            let pa = project(&split, p, &apply_a(&b, &cfg, &u).unwrap());
            let ap = apply_a(&b, &cfg, &project(&split, p, &u)).unwrap();
            prop_assert_eq!(&pa, &ap);
            let ps = project(&split, p, &semigroup_apply(&b, &cfg, t, &u).unwrap());
            let sp = semigroup_apply(&b, &cfg, t, &project(&split, p, &u)).unwrap();
            prop_assert_eq!(&ps, &sp);
        }
    }

    #[test]
    fn spectral_gap_is_positive(lambda in prop::collection::vec(shift_strategy(), 1..4)) {
        let m = lambda.len();
        let cfg = ProblemConfig::new(lambda.clone(), vec![0.0; m], 1, 0.8).unwrap();
        let split = classify(&basis(), &cfg).unwrap();
        let gap = spectral_gap(&split).unwrap();
        let brute = lambda
            .iter()
            .flat_map(|l| (1..=MODES).map(move |j| (mu(j) - l).abs()))
            .filter(|d| *d > 1e-6)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(gap > 0.0);
        prop_assert!((gap - brute).abs() <= 1e-9 * brute);
    }
}

#[test]
fn counts_examples() {
    let b = basis();
    let c = |lambda: Vec<f64>, l| {
        let m = lambda.len();
        counts(&classify(&b, &ProblemConfig::new(lambda, vec![0.0; m], l, 0.8).unwrap()).unwrap())
    };
    let v = c(vec![mu(1)], 1);
    assert_eq!((v.d_inf, v.n1, v.n2), (0, 1, 0));
    let v = c(vec![mu(2)], 1);
    assert_eq!((v.d_inf, v.n1, v.n2), (1, 1, 0));
    let v = c(vec![mu(1), mu(1)], 1);
    assert_eq!((v.d_inf, v.n1, v.n2), (0, 1, 1));
}
