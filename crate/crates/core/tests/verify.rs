use std::time::Instant;

use hho_core::verify::{run_suite, stabilization_ratio_band, Suite};
use nalgebra::DMatrix;

fn assert_suite(suite: Suite, ks: &[usize]) {
    let start = Instant::now();
    let checks = run_suite(suite, ks).unwrap();
    for c in &checks {
        println!("{:<14} {:<36} {:.3e} <= {:.1e}", c.suite, c.name, c.value, c.tolerance);
    }
    println!("{suite}: {:.2?}", start.elapsed());
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c.passed()), "{checks:#?}");
}

#[test]
fn operator_suite_passes() {
    assert_suite(Suite::Operators, &[1, 2, 3, 4, 5]);
}

#[test]
fn stabilization_suite_passes() {
    assert_suite(Suite::Stabilization, &[1, 2, 3]);
}

#[test]
fn patch_suite_passes() {
    assert_suite(Suite::Patch, &[1, 2, 3]);
}

#[test]
fn ratio_band_of_scaled_forms() {
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 2.0]));
    let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 3.0, 2.0]));
    let (lo, hi, leak) = stabilization_ratio_band(&s, &t);
    assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14 && leak == 0.0);
}

#[test]
fn suites_parse_by_name() {
    for s in Suite::ALL {
        assert_eq!(s.name().parse::<Suite>().unwrap(), s);
    }
    assert!("bogus".parse::<Suite>().is_err());
}
