use proptest::prelude::*;
use seqnma::report::{cri_reduction, format_cell, format_value, parse_cell, ReportError};

#[test]
fn formatting_examples() {
    assert_eq!(format_cell(11.34, 0.37, 59.4), "11.34 (0.37, 59.4)");
    assert_eq!(format_value(1.0), "1.0");
    assert_eq!(format_value(2.5), "2.5");
    assert_eq!(format_value(0.00456), "0.00456");
}

#[test]
fn degenerate_interval_is_an_error() {
    assert!(matches!(cri_reduction((1.0, 1.0), (0.5, 2.0)), Err(ReportError::DegenerateInterval(..))));
    assert!(parse_cell("1.2 [0.3, 4]").is_err());
}

fn close(a: f64, b: f64) -> bool {
    let tol = if b.abs() < 0.01 { b.abs() * 0.01 } else { 0.005 + 1e-12 };
    (a - b).abs() <= tol
}

proptest! {
    #[test]
    fn cell_round_trips_to_displayed_precision(
        m in 0.0001f64..200.0,
        lo in 0.0001f64..200.0,
        hi in 0.0001f64..200.0,
    ) {
        let (pm, pl, ph) = parse_cell(&format_cell(m, lo, hi)).unwrap();
        prop_assert!(close(pm, m) && close(pl, lo) && close(ph, hi), "{} {} {}", pm, pl, ph);
    }

    #[test]
    fn reduction_is_zero_on_self_and_bounded(
        a in 0.01f64..10.0, wa in 0.01f64..50.0, b in 0.01f64..10.0, wb in 0.01f64..50.0,
    ) {
        let x = (a, a + wa);
        let y = (b, b + wb);
        prop_assert!(cri_reduction(x, x).unwrap().abs() < 1e-12);
        let r = cri_reduction(x, y).unwrap();
        prop_assert!(r < 100.0);
        // Narrowing from x to y and widening back compose to the identity.
        let back = cri_reduction(y, x).unwrap();
        prop_assert!(((1.0 - r / 100.0) * (1.0 - back / 100.0) - 1.0).abs() < 1e-9);
    }
}
