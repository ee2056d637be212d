use std::f64::consts::{PI, SQRT_2};

use proptest::prelude::*;
use resonance::catalogue::{build_field, FieldParams};
use resonance::decomposition::{classify, Block, Sign, SplitIndexSet};
use resonance::nonlinearity::{NonlinearField, Verdict};
use resonance::resonance::{
    evaluate_ll, guiding_margin, guiding_radius, ll_functional, LlCondition, MarginSampling,
};
use resonance::spectral::{build_basis, Domain1D, ProblemConfig, SpectralBasis};
use resonance::{GalerkinState, Mode};

struct Setup {
    basis: SpectralBasis,
    config: ProblemConfig,
    split: SplitIndexSet,
}

fn setup(lambda: Vec<f64>, sigma: Vec<f64>, l: usize, modes: usize) -> Setup {
    let basis = build_basis(Domain1D::with_modes(1.0, modes).unwrap(), modes).unwrap();
    let config = ProblemConfig::new(lambda, sigma, l, 0.8).unwrap();
    let split = classify(&basis, &config).unwrap();
    Setup { basis, config, split }
}

fn arctan(m: usize, sigma: f64) -> NonlinearField {
    build_field("arctan", &FieldParams::default(), &vec![sigma; m], 1.0).unwrap()
}

fn ll(s: &Setup, f: &NonlinearField, dir: &GalerkinState) -> f64 {
    ll_functional(f, &s.basis, &s.split, &s.config, Block::First, dir).unwrap().unwrap()
}

#[test]
fn functional_on_first_and_second_eigenfunction() {
    let f = arctan(1, 0.0);
    for j in [1usize, 2] {
        let s = setup(vec![(j as f64 * PI).powi(2)], vec![0.0], 1, 8);
        let dir = GalerkinState::single_mode(1, 8, Mode::new(0, j - 1), 1.0);
        let v = ll(&s, &f, &dir);
        assert!((v - SQRT_2).abs() <= 1e-8, "j = {j}: {v}");
        // -phi_j has the same value by the sign split
        assert!((ll(&s, &f, &dir.scaled(-1.0)) - SQRT_2).abs() <= 1e-8);
    }
}

#[test]
fn strong_resonance_gives_zero() {
    let s = setup(vec![PI * PI], vec![0.0], 1, 8);
    let zero = build_field("zero", &FieldParams::default(), &[0.0], 1.0).unwrap();
    let dir = GalerkinState::single_mode(1, 8, Mode::new(0, 0), 1.0);
    assert_eq!(ll(&s, &zero, &dir), 0.0);
    for sign in [Sign::Plus, Sign::Minus] {
        let r = evaluate_ll(&zero, &s.basis, &s.split, &s.config, LlCondition::new(Block::First, sign), 16, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
    }
}

#[test]
fn ll_verdicts_on_the_first_eigenvalue() {
    let s = setup(vec![PI * PI], vec![0.0], 1, 8);
    let f = arctan(1, 0.0);
    let plus = evaluate_ll(&f, &s.basis, &s.split, &s.config, LlCondition::new(Block::First, Sign::Plus), 16, 1).unwrap();
    assert_eq!(plus.verdict, Verdict::Holds);
    assert!((plus.min_value.unwrap() - SQRT_2).abs() <= 1e-8);
    assert!(!plus.sampled);

    let neg = f.negated();
    let plus = evaluate_ll(&neg, &s.basis, &s.split, &s.config, LlCondition::new(Block::First, Sign::Plus), 16, 1).unwrap();
    let minus = evaluate_ll(&neg, &s.basis, &s.split, &s.config, LlCondition::new(Block::First, Sign::Minus), 16, 1).unwrap();
    assert_eq!((plus.verdict, minus.verdict), (Verdict::Fails, Verdict::Holds));

    for sign in [Sign::Plus, Sign::Minus] {
        let r = evaluate_ll(&f, &s.basis, &s.split, &s.config, LlCondition::new(Block::Second, sign), 16, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Vacuous);
    }
}

#[test]
fn guiding_margins() {
    let s = setup(vec![PI * PI], vec![0.0], 1, 8);
    let f = arctan(1, 0.0);
    let radii = [1.0, 5.0, 20.0, 50.0, 100.0];
    let sampling = MarginSampling { w_radius: 1.0, v_radius: 0.0, samples: 32, seed: 4 };
    let rows = guiding_margin(&f, &s.basis, &s.split, &s.config, Block::First, Sign::Plus, &radii, sampling).unwrap();
    assert!(rows.iter().filter(|r| r.radius >= 20.0).all(|r| r.min_margin > 0.0));

    let mirrored =
        guiding_margin(&f.negated(), &s.basis, &s.split, &s.config, Block::First, Sign::Minus, &radii, sampling).unwrap();
    for (a, b) in rows.iter().zip(&mirrored) {
        assert!((a.min_margin - b.min_margin).abs() <= 1e-12 * a.min_margin.abs().max(1.0));
    }

    let zero = build_field("zero", &FieldParams::default(), &[0.0], 1.0).unwrap();
    let rows = guiding_margin(&zero, &s.basis, &s.split, &s.config, Block::First, Sign::Plus, &radii, sampling).unwrap();
    assert!(rows.iter().all(|r| r.min_margin == 0.0));
    assert_eq!(guiding_radius(&rows), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn functional_is_positively_homogeneous(
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
        sigma in prop::sample::select(vec![0.0, 0.3, 0.5]),
        c in prop::sample::select(vec![2.0, 10.0]),
    ) {
        prop_assume!(a.abs() + b.abs() > 1e-3);
        let s = setup(vec![PI * PI, PI * PI], vec![sigma, sigma], 2, 8);
        let f = build_field("scaled-arctan", &FieldParams::default(), &[sigma, sigma], 1.0).unwrap();
        let mut dir = GalerkinState::zeros(2, 8);
        dir.set(Mode::new(0, 0), a);
        dir.set(Mode::new(1, 0), b);
        let base = ll(&s, &f, &dir);
        let scaled = ll(&s, &f, &dir.scaled(c));
        prop_assert!((scaled - c.powf(1.0 - sigma) * base).abs() <= 1e-9 * scaled.abs().max(1.0));
    }

    #[test]
    fn negating_the_field_swaps_the_verdicts(gain in prop::sample::select(vec![-3.0, -1.0, 0.5, 2.0]), seed in 0u64..100) {
        let s = setup(vec![PI * PI, 4.0 * PI * PI], vec![0.0, 0.0], 1, 8);
        let params = FieldParams { gain: Some(gain), ..Default::default() };
        let f = build_field("arctan", &params, &[0.0, 0.0], 1.0).unwrap();
        let g = f.negated();
        for block in [Block::First, Block::Second] {
            let v = |field: &NonlinearField, sign| {
                evaluate_ll(field, &s.basis, &s.split, &s.config, LlCondition::new(block, sign), 8, seed).unwrap().verdict
            };
            prop_assert_eq!(v(&f, Sign::Plus), v(&g, Sign::Minus));
            prop_assert_eq!(v(&f, Sign::Minus), v(&g, Sign::Plus));
        }
    }

    #[test]
    fn ll_margin_implies_eventual_guiding_margin(gain in 0.5f64..40.0, seed in 0u64..50) {
        let s = setup(vec![PI * PI], vec![0.0], 1, 8);
        let params = FieldParams { gain: Some(gain), ..Default::default() };
        let f = build_field("arctan", &params, &[0.0], 1.0).unwrap();
        let r = evaluate_ll(&f, &s.basis, &s.split, &s.config, LlCondition::new(Block::First, Sign::Plus), 8, seed).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Holds);
        let radii = [1.0, 10.0, 100.0, 1000.0];
        let sampling = MarginSampling { w_radius: 2.0, v_radius: 0.0, samples: 16, seed };
        let rows = guiding_margin(&f, &s.basis, &s.split, &s.config, Block::First, Sign::Plus, &radii, sampling).unwrap();
        prop_assert!(guiding_radius(&rows).is_some());
    }
}
