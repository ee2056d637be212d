use std::f64::consts::PI;

use proptest::prelude::*;
use resonance::catalogue::{build_field, FieldParams};
use resonance::connections::newton;
use resonance::decomposition::{classify, project, Projection, SplitIndexSet};
use resonance::nonlinearity::{galerkin_f, NonlinearField};
use resonance::semiflow::{
    apriori_bounds, blowup_demo, check_bounded_solution, default_c6, homotopy_field, integrate, product_flow_check,
    IntegratorSettings, Scheme,
};
use resonance::spectral::{build_basis, Domain1D, ProblemConfig, SpectralBasis};
use resonance::{GalerkinState, Mode};

struct Desk {
    basis: SpectralBasis,
    config: ProblemConfig,
    split: SplitIndexSet,
}

fn desk(lambda: Vec<f64>, modes: usize) -> Desk {
    let m = lambda.len();
    let basis = build_basis(Domain1D::with_modes(1.0, modes).unwrap(), modes).unwrap();
    let config = ProblemConfig::new(lambda, vec![0.0; m], 1, 0.8).unwrap();
    let split = classify(&basis, &config).unwrap();
    Desk { basis, config, split }
}

fn field(name: &str, m: usize) -> NonlinearField {
    build_field(name, &FieldParams::default(), &vec![0.0; m], 1.0).unwrap()
}

fn mixed_state(m: usize, modes: usize) -> GalerkinState {
    let flat: Vec<f64> = (0..m * modes).map(|i| 0.8 * ((i as f64) * 1.3).cos() / (1.0 + i as f64)).collect();
    GalerkinState::from_flat(m, modes, &flat).unwrap()
}

#[test]
fn homotopy_endpoints() {
    let d = desk(vec![PI * PI, 4.0 * PI * PI], 8);
    let f = field("arctan(3)", 2);
    let u = mixed_state(2, 8);
    let h1 = homotopy_field(&f, &d.basis, &d.split, 1.0, &u).unwrap();
    assert_eq!(h1, galerkin_f(&f, &d.basis, &u).unwrap());
    let h0 = homotopy_field(&f, &d.basis, &d.split, 0.0, &u).unwrap();
    let q0 = project(&d.split, Projection::Q0, &u);
    let expected = project(&d.split, Projection::Q0, &galerkin_f(&f, &d.basis, &q0).unwrap());
    assert!(h0.distance(&expected) <= 1e-15);
}

#[test]
fn kernel_forcing_is_unchanged_along_the_homotopy() {
    let d = desk(vec![PI * PI], 8);
    let f = field("constant-kernel", 1);
    let v0 = galerkin_f(&f, &d.basis, &GalerkinState::zeros(1, 8)).unwrap();
    for s in [0.0, 0.3, 0.7, 1.0] {
        let h = homotopy_field(&f, &d.basis, &d.split, s, &mixed_state(1, 8)).unwrap();
        assert!(h.distance(&v0) <= 1e-14);
    }
}

#[test]
fn free_flow_is_exact() {
    let d = desk(vec![PI * PI], 8);
    let zero = field("zero", 1);
    let settings = IntegratorSettings::new(1e-3, 1.0);
    let u0 = GalerkinState::single_mode(1, 8, Mode::new(0, 2), 1.0);
    let traj = integrate(&zero, &d.basis, &d.split, &d.config, 1.0, &u0, &settings).unwrap();
    let exact = (-(9.0 * PI * PI - PI * PI)).exp();
    assert!((traj.last_state().get(Mode::new(0, 2)) - exact).abs() <= 1e-6);

    let kernel = GalerkinState::single_mode(1, 8, Mode::new(0, 0), 0.7);
    let traj = integrate(&zero, &d.basis, &d.split, &d.config, 1.0, &kernel, &settings).unwrap();
    assert!(traj.states.iter().all(|s| *s == kernel));
}

#[test]
fn equilibria_are_fixed_points_of_the_integrator() {
    let d = desk(vec![PI * PI], 32);
    let f = field("arctan(40)", 1);
    let seed = GalerkinState::single_mode(1, 32, Mode::new(0, 1), 0.02);
    let (ustar, res) = newton(&f, &d.basis, &d.split, &seed).unwrap().expect("converges");
    assert!(res <= 1e-10);
    let settings = IntegratorSettings::new(1e-3, 10.0).with_record_every(100);
    let traj = integrate(&f, &d.basis, &d.split, &d.config, 1.0, &ustar, &settings).unwrap();
    let drift = traj.states.iter().map(|s| s.distance(&ustar)).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "{drift}");

    let bounds = apriori_bounds(&d.split, &d.config, default_c6(std::f64::consts::FRAC_PI_2, 1, 1.0)).unwrap();
    let report = check_bounded_solution(&traj, &bounds, Some(1.0), None, 0.2, 1e-3);
    assert!(!report.unbounded);
    assert!(report.ratio_minus <= 1.0 && report.ratio_plus <= 1.0);
}

#[test]
fn kernel_forcing_drives_linear_growth() {
    let d = desk(vec![PI * PI], 8);
    let settings = IntegratorSettings::new(1e-3, 10.0).with_record_every(50);
    let v0 = GalerkinState::single_mode(1, 8, Mode::new(0, 0), 1.0);
    let zero = GalerkinState::zeros(1, 8);
    let report = blowup_demo(&d.split, &d.config, &v0, &zero, &settings).unwrap();
    assert!((report.slopes[0] - 1.0).abs() <= 1e-6);
    let scaled = blowup_demo(&d.split, &d.config, &v0.scaled(2.5), &zero, &settings).unwrap();
    assert!((scaled.slopes[0] - 2.5).abs() <= 1e-6);

    let mut u0 = GalerkinState::zeros(1, 8);
    u0.set(Mode::new(0, 1), 1.0);
    u0.set(Mode::new(0, 4), -0.5);
    let mixed = blowup_demo(&d.split, &d.config, &v0, &u0, &settings).unwrap();
    assert!(mixed.plus_norm_end < 1e-6 * mixed.plus_norm_start);
    assert!((mixed.slopes[0] - 1.0).abs() <= 1e-6);

    let bounds = apriori_bounds(&d.split, &d.config, 1.0).unwrap();
    let check = check_bounded_solution(&report.trajectory, &bounds, Some(1.0), None, 0.2, 1e-3);
    assert!(check.unbounded);
    assert!(check.ratio_p1.unwrap() > 1.0);
}

#[test]
fn apriori_radius_arithmetic() {
    let d = desk(vec![PI * PI], 8);
    let c = 3.0 * PI * PI;
    let bound = 1.7;
    let b = apriori_bounds(&d.split, &d.config, bound).unwrap();
    assert!((b.c - c).abs() <= 1e-12);
    let expected = bound * ((-c).exp() / c + 1.0 / (1.0 - 0.8));
    assert!((b.r0_plus - expected).abs() <= 1e-12 * expected);
    assert_eq!(b.r0_minus, 0.0);
    assert_eq!(apriori_bounds(&d.split, &d.config, 0.0).unwrap().r0(), 0.0);

    let mut previous = 0.0;
    for alpha in [0.8, 0.9, 0.99, 0.999] {
        let cfg = ProblemConfig::new(vec![PI * PI], vec![0.0], 1, alpha).unwrap();
        let r = apriori_bounds(&d.split, &cfg, bound).unwrap().r0_plus;
        assert!(r > previous);
        previous = r;
    }
}

#[test]
fn zero_field_ratios_vanish_once_the_data_has_decayed() {
    let d = desk(vec![PI * PI], 4);
    let zero = field("zero", 1);
    let u0 = GalerkinState::single_mode(1, 4, Mode::new(0, 1), 1.0);
    // exp(-3 pi² t) underflows to zero well before t = 27
    let settings = IntegratorSettings::new(1e-2, 30.0);
    let traj = integrate(&zero, &d.basis, &d.split, &d.config, 1.0, &u0, &settings).unwrap();
    let bounds = apriori_bounds(&d.split, &d.config, 0.0).unwrap();
    let r = check_bounded_solution(&traj, &bounds, None, None, 0.9, 1e-3);
    assert_eq!((r.ratio_minus, r.ratio_plus), (0.0, 0.0));
    assert!(r.within_bounds && !r.unbounded);
}

#[test]
fn product_flow_at_the_start_of_the_homotopy() {
    let d = desk(vec![PI * PI, PI * PI], 8);
    let settings = IntegratorSettings::new(1e-3, 5.0);
    let u0 = mixed_state(2, 8);
    let zero = field("zero", 2);
    assert!(product_flow_check(&zero, &d.basis, &d.split, &d.config, &u0, &settings).unwrap() <= 1e-8);
    let f = field("arctan(2)", 2);
    assert!(product_flow_check(&f, &d.basis, &d.split, &d.config, &u0, &settings).unwrap() <= 1e-6);
    let kernel = project(&d.split, Projection::Q0, &u0);
    assert_eq!(product_flow_check(&f, &d.basis, &d.split, &d.config, &kernel, &settings).unwrap(), 0.0);
}

#[test]
fn imex_step_restriction() {
    let d = desk(vec![PI * PI], 8);
    let zero = field("zero", 1);
    let u0 = mixed_state(1, 8);
    let fine = IntegratorSettings::new(1e-4, 0.01).with_scheme(Scheme::ImexEuler);
    assert!(integrate(&zero, &d.basis, &d.split, &d.config, 1.0, &u0, &fine).is_ok());
    let coarse = IntegratorSettings::new(1e-2, 0.1).with_scheme(Scheme::ImexEuler);
    assert!(integrate(&zero, &d.basis, &d.split, &d.config, 1.0, &u0, &coarse).is_err());
}

fn terminal(d: &Desk, f: &NonlinearField, s: f64, u0: &GalerkinState, dt: f64, scheme: Scheme) -> GalerkinState {
    let settings = IntegratorSettings::new(dt, 0.5).with_scheme(scheme).with_record_every(1_000_000);
    integrate(f, &d.basis, &d.split, &d.config, s, u0, &settings).unwrap().last_state().clone()
}

#[test]
fn first_order_convergence() {
    let d = desk(vec![PI * PI], 6);
    let f = field("arctan(3)", 1);
    let u0 = mixed_state(1, 6);
    for (scheme, dt) in [(Scheme::Etd1, 1e-2), (Scheme::ImexEuler, 5e-4)] {
        let reference = terminal(&d, &f, 1.0, &u0, dt / 8.0, scheme);
        let coarse = terminal(&d, &f, 1.0, &u0, dt, scheme).distance(&reference);
        let half = terminal(&d, &f, 1.0, &u0, dt / 2.0, scheme).distance(&reference);
        assert!(coarse / half >= 1.8, "{scheme:?}: {coarse} / {half}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn family_is_continuous_in_s(s in 0.0f64..0.95, amp in prop::collection::vec(-2.0f64..2.0, 6)) {
        let d = desk(vec![PI * PI], 6);
        let f = field("arctan(3)", 1);
        let u0 = GalerkinState::from_flat(1, 6, &amp).unwrap();
        let a = terminal(&d, &f, s, &u0, 5e-3, Scheme::Etd1);
        let b = terminal(&d, &f, s + 0.05, &u0, 5e-3, Scheme::Etd1);
        // Lipschitz bound: |dH/ds| <= 2 C3 sqrt(|Omega|) + L |u| over a unit-order horizon
        prop_assert!(a.distance(&b) <= 0.05 * 20.0);
    }
}
