use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use resonance::spectral::{
    apply_a, build_basis, fractional_equivalence, fractional_norm, semigroup_apply, Domain1D, ProblemConfig,
    SpectralBasis,
};
use resonance::{GalerkinState, Mode};

fn basis(length: f64, modes: usize) -> SpectralBasis {
    build_basis(Domain1D::with_modes(length, modes).unwrap(), modes).unwrap()
}

fn state_strategy(m: usize, modes: usize) -> impl Strategy<Value = GalerkinState> {
    prop::collection::vec(-2.0f64..2.0, m * modes)
        .prop_map(move |flat| GalerkinState::from_flat(m, modes, &flat).unwrap())
}

#[test]
fn gram_is_identity_for_eight_modes() {
    let b = basis(1.0, 8);
    let gram = b.gram();
    let err = (gram - DMatrix::<f64>::identity(8, 8)).amax();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn eigenvalues_are_exact_up_to_32() {
    for length in [0.5, 1.0, 2.0, 3.7] {
        let b = basis(length, 32);
        for (j, mu) in b.eigenvalues().enumerate() {
            let exact = ((j + 1) as f64 * PI / length).powi(2);
            assert!((mu - exact).abs() <= 1e-12 * exact.max(1.0));
        }
    }
}

#[test]
fn apply_a_matches_dense_product() {
    let b = basis(1.0, 6);
    let cfg = ProblemConfig::new(vec![3.0, 50.0], vec![0.0, 0.0], 1, 0.8).unwrap();
    let u = GalerkinState::from_flat(2, 6, &(0..12).map(|i| (i as f64 * 0.7).sin()).collect::<Vec<_>>()).unwrap();
    let dense = DMatrix::from_fn(12, 12, |r, c| {
        if r == c {
            let (k, j) = (r / 6, r % 6);
            ((j + 1) as f64 * PI).powi(2) - cfg.lambda[k]
        } else {
            0.0
        }
    });
    let expected = &dense * nalgebra::DVector::from_vec(u.to_flat());
    let got = apply_a(&b, &cfg, &u).unwrap().to_flat();
    for (g, e) in got.iter().zip(expected.iter()) {
        assert_relative_eq!(*g, *e, max_relative = 1e-13);
    }
}

#[test]
fn kernel_coefficients_are_exactly_preserved() {
    let b = basis(1.0, 8);
    let cfg = ProblemConfig::new(vec![PI * PI, 4.0 * PI * PI], vec![0.0, 0.0], 1, 0.8).unwrap();
    let u = GalerkinState::from_flat(2, 8, &(0..16).map(|i| 0.1 * i as f64 - 0.5).collect::<Vec<_>>()).unwrap();
    for t in [0.1, 1.0, 10.0] {
        let v = semigroup_apply(&b, &cfg, t, &u).unwrap();
        assert_eq!(v.get(Mode::new(0, 0)), u.get(Mode::new(0, 0)));
        assert_eq!(v.get(Mode::new(1, 1)), u.get(Mode::new(1, 1)));
    }
}

#[test]
fn fractional_norm_of_zero_and_monotonicity() {
    let b = basis(1.0, 6);
    let cfg = ProblemConfig::new(vec![PI * PI], vec![0.0], 1, 0.9).unwrap();
    assert_eq!(fractional_norm(&b, &cfg, &GalerkinState::zeros(1, 6)).unwrap(), 0.0);
    let u = GalerkinState::from_rows(&[vec![0.3, -1.0, 0.2, 0.0, 0.5, 1.0]]).unwrap();
    assert!(fractional_norm(&b, &cfg, &u).unwrap() >= u.norm_l2());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup_law(u in state_strategy(2, 6), t in prop::sample::select(vec![0.01, 0.1, 1.0]), s in prop::sample::select(vec![0.01, 0.1, 1.0])) {
        let b = basis(1.0, 6);
        // one unstable mode, one kernel mode, the rest stable
        let cfg = ProblemConfig::new(vec![4.0 * PI * PI, 2.0], vec![0.0, 0.0], 1, 0.8).unwrap();
        let joint = semigroup_apply(&b, &cfg, t + s, &u).unwrap();
        let split = semigroup_apply(&b, &cfg, t, &semigroup_apply(&b, &cfg, s, &u).unwrap()).unwrap();
        for (a, c) in joint.to_flat().iter().zip(split.to_flat()) {
            prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn fractional_norm_is_equivalent_on_finite_mode_sets(u in state_strategy(1, 6), lambda in 0.0f64..60.0) {
        let b = basis(1.0, 6);
        let cfg = ProblemConfig::new(vec![lambda], vec![0.0], 1, 0.8).unwrap();
        let modes: Vec<Mode> = (0..6).map(|j| Mode::new(0, j)).collect();
        let (lo, hi) = fractional_equivalence(&b, &cfg, modes.iter().copied()).unwrap().unwrap();
        let frac = fractional_norm(&b, &cfg, &u).unwrap();
        let l2 = u.norm_l2();
        prop_assert!(lo * l2 <= frac * (1.0 + 1e-12) && frac <= hi * l2 * (1.0 + 1e-12));
    }
}
