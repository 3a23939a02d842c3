use jumpsde::levy_measure::{gamma_neg_alpha, JumpLaw, LevyMeasure, Role, ScanGrid};
use jumpsde::quadrature::{integrate_log, integrate_upper, Tolerance};
use proptest::prelude::*;

fn stable(alpha: f64) -> LevyMeasure {
    LevyMeasure::stable(alpha, 1.0).unwrap()
}

#[test]
fn stable_tail_functionals_match_closed_forms() {
    let m = stable(1.5);
    assert!((m.tail_first_moment(1.0).unwrap() - 2.0).abs() < 1e-10);
    assert!((m.truncated_second_moment(1.0).unwrap() - 2.0).abs() < 1e-10);
    // Same values by quadrature of the density.
    let tol = Tolerance::new(1e-14, 1e-12);
    let g = integrate_upper(|z| z * z.powf(-2.5), 1.0, tol).unwrap().value;
    let h = integrate_log(|z| z * z * z.powf(-2.5), 1e-16, 1.0, tol).unwrap().value;
    assert!((g - 2.0).abs() < 1e-8);
    assert!((h - 2.0).abs() < 1e-6);
}

#[test]
fn point_mass_tails() {
    let m = LevyMeasure::point_mass(1.0, 1.0, Role::CompensatedDriver).unwrap();
    assert_eq!(m.tail_first_moment(2.0).unwrap(), 0.0);
    assert_eq!(m.tail_first_moment(0.5).unwrap(), 1.0);
    let m3 = LevyMeasure::point_mass(1.0, 3.0, Role::CompensatedDriver).unwrap();
    assert_eq!(m3.truncated_second_moment(2.0).unwrap(), 3.0);
}

#[test]
fn domain_errors() {
    let m = stable(1.5);
    assert!(m.tail_first_moment(0.0).is_err());
    assert!(m.truncated_second_moment(-1.0).is_err());
    assert!(LevyMeasure::stable(2.5, 1.0).is_err());
    assert!(LevyMeasure::stable(1.0, 1.0).is_err());
}

#[test]
fn subordinator_contract_rejects_stable_above_one() {
    use jumpsde::levy_measure::MeasureShape;
    let shape = MeasureShape::Stable { alpha: 1.5, scale: 1.0 };
    assert!(LevyMeasure::new(shape, Role::Subordinator).is_err());
}

#[test]
fn laplace_exponent_closed_form_and_homogeneity() {
    let m = stable(1.5);
    let one = m.laplace_exponent(1.0).unwrap();
    let want = libm::tgamma(0.5) / (1.5 * 0.5);
    assert!((one - want).abs() < 1e-7 * want, "{one} vs {want}");
    assert!((gamma_neg_alpha(1.5) - want).abs() < 1e-14);
    let two = m.laplace_exponent(2.0).unwrap();
    assert!((two - 2f64.powf(1.5) * one).abs() < 1e-7 * two);
}

#[test]
fn alpha_estimates() {
    let scan = ScanGrid::default();
    for a in [1.2, 1.5, 1.8] {
        assert!((stable(a).estimate_alpha_nu(&scan).unwrap().alpha_nu - a).abs() < 0.05);
    }
    let uniform = LevyMeasure::finite_activity(1.0, JumpLaw::Uniform { low: 0.0, high: 1.0 }, Role::CompensatedDriver).unwrap();
    assert!((uniform.estimate_alpha_nu(&scan).unwrap().alpha_nu - 1.0).abs() < 0.05);
}

#[test]
fn decay_trace_values() {
    let scan = ScanGrid::default();
    let m = stable(1.5);
    let pass = m.check_small_jump_decay(1.8, &scan).unwrap();
    assert!(pass.passed);
    assert!((pass.tail_slope - 0.3).abs() < 1e-6);
    let edge = m.check_small_jump_decay(1.5, &scan).unwrap();
    assert!(!edge.passed);
    assert!(edge.values.iter().all(|v| (v - 2.0).abs() < 1e-8));
}

proptest! {
    #[test]
    fn tails_are_monotone(alpha in 1.05f64..1.95, x in 1e-6f64..10.0, ratio in 1.0f64..100.0) {
        let m = stable(alpha);
        let y = x * ratio;
        prop_assert!(m.tail_first_moment(y).unwrap() <= m.tail_first_moment(x).unwrap());
        prop_assert!(m.truncated_second_moment(y).unwrap() >= m.truncated_second_moment(x).unwrap());
        prop_assert!(m.tail_first_moment(x).unwrap() >= 0.0);
    }

    #[test]
    fn tempered_tails_are_monotone(x in 1e-5f64..5.0, ratio in 1.0f64..20.0) {
        let m = LevyMeasure::tempered_stable(1.5, 1.0, 1.0, Role::CompensatedDriver).unwrap();
        let y = x * ratio;
        prop_assert!(m.tail_first_moment(y).unwrap() <= m.tail_first_moment(x).unwrap() * (1.0 + 1e-9));
        prop_assert!(m.truncated_second_moment(y).unwrap() >= m.truncated_second_moment(x).unwrap() * (1.0 - 1e-9));
    }
}
