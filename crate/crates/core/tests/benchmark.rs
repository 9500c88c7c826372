use std::fs::File;
use std::io::BufReader;

use chaos_descent::basis::{read_coefficients_csv, BasisSpec};
use chaos_descent::problem::{paper_target, Target};

fn golden() -> chaos_descent::CoefficientVector {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/benchmark_coefficients.csv");
    read_coefficients_csv(BufReader::new(File::open(path).unwrap())).unwrap()
}

#[test]
fn benchmark_matches_golden_table() {
    let g = golden();
    let b = Target::paper().benchmark().coeffs.clone();
    assert_eq!(g.level(), b.level());
    for i in 0..=g.level() {
        assert!((g.get(i) - b.get(i)).abs() < 1e-14, "index {i}: {} vs {}", g.get(i), b.get(i));
    }
}

#[test]
fn golden_table_agrees_with_coarser_quadrature() {
    // The target has kinks, so the trapezoid error only falls as 1/N².
    let g = golden();
    let coarse = BasisSpec::trigonometric(16384).unwrap().analyze(paper_target, 64).unwrap();
    for i in 0..=64 {
        assert!((g.get(i) - coarse.get(i)).abs() < 1e-8, "index {i}");
    }
}

#[test]
fn remainder_at_91_is_the_reported_floor() {
    let r = Target::paper().benchmark().remainder_norm_sq(91);
    assert!((r / 3.53e-7 - 1.0).abs() < 0.01, "{r:e}");
}

#[test]
fn reconstruction_error_is_the_tail_norm() {
    let g = golden();
    let spec = BasisSpec::trigonometric(8192).unwrap();
    let field = chaos_descent::FieldVector::new(vec![g]);
    let err = |t: f64| paper_target(t) - spec.synthesize(&field, t).unwrap()[0];
    let l2 = spec.inner(err, err);
    let tail = Target::paper().benchmark().remainder_norm_sq(256);
    assert!((l2 / tail - 1.0).abs() < 0.01, "{l2:e} vs {tail:e}");
}
