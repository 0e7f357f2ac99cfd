//! Independent construction of the zigzag map: breakpoints on `(a, 2a]` are
//! found by intersecting each segment with the opposite bounding line.

use nsnewton::problems::{staircase_bsub, staircase_eval};
use proptest::prelude::*;

/// Breakpoints `(x, y)` on `(a, 2a]`, right to left.
fn breakpoints(a: f64) -> Vec<(f64, f64)> {
    let (up, low) = (1.0 + a * a, 1.0 - a - a * a);
    let mut pts = vec![(2.0 * a, 2.0 * a)];
    for j in 0..60 {
        let (x0, y0) = *pts.last().unwrap();
        let next = if j % 2 == 0 {
            // along slope `up` down to the line y = (1 − a)x + a²
            let x = (y0 - up * x0 - a * a) / (1.0 - a - up);
            (x, (1.0 - a) * x + a * a)
        } else {
            // along slope `low` down to y = x
            let x = (y0 - low * x0) / (1.0 - low);
            (x, x)
        };
        pts.push(next);
        if next.0 - a < 1e-15 {
            break;
        }
    }
    pts
}

fn oracle(x: f64) -> f64 {
    let (mut a, sign) = (0.5, x.signum());
    let ax = x.abs();
    if ax == 0.0 {
        return 0.0;
    }
    while ax <= a {
        a *= 0.5;
    }
    let pts = breakpoints(a);
    for w in pts.windows(2) {
        let ((xr, yr), (xl, yl)) = (w[0], w[1]);
        if ax >= xl && ax <= xr {
            return sign * (yl + (yr - yl) * (ax - xl) / (xr - xl));
        }
    }
    sign * ((1.0 - a) * ax + a * a)
}

#[test]
fn first_interval_matches_hand_computation() {
    let pts = breakpoints(0.5);
    let expect = [(1.0, 1.0), (2.0 / 3.0, 7.0 / 12.0), (5.0 / 9.0, 5.0 / 9.0)];
    for ((x, y), (ex, ey)) in pts.iter().zip(expect) {
        assert!((x - ex).abs() < 1e-15 && (y - ey).abs() < 1e-15, "{x} {y}");
    }
    // H(0.6) on the slope-1/4 segment through (2/3, 7/12)
    assert!((staircase_eval(0.6).unwrap() - (7.0 / 12.0 - 0.25 * (2.0 / 3.0 - 0.6))).abs() < 1e-15);
}

#[test]
fn dense_grid_monotone_and_lipschitz() {
    let n = 200_000;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| staircase_eval(x).unwrap()).collect();
    for i in 1..xs.len() {
        let q = (hs[i] - hs[i - 1]) / (xs[i] - xs[i - 1]);
        assert!(q > 0.0 && q <= 1.25 + 1e-9, "slope {q} at {}", xs[i]);
    }
}

proptest! {
    #[test]
    fn matches_the_eager_construction(x in -1.0f64..1.0) {
        let h = staircase_eval(x).unwrap();
        prop_assert!((h - oracle(x)).abs() <= 1e-14, "{x}: {h} vs {}", oracle(x));
    }

    #[test]
    fn squeezed_between_the_lines(k in 1i32..40, u in 0.0f64..1.0) {
        let a = 2f64.powi(-k);
        let x = a + a * u.max(1e-9);
        let h = staircase_eval(x).unwrap();
        let lower = (1.0 - a) * x + a * a;
        prop_assert!(h <= x * (1.0 + 1e-15) && h >= lower * (1.0 - 1e-15));
    }

    #[test]
    fn odd(x in 0.0f64..1.0) {
        prop_assert_eq!(staircase_eval(-x).unwrap(), -staircase_eval(x).unwrap());
    }

    #[test]
    fn bsub_slopes_are_segment_slopes(x in 0.001f64..1.0) {
        let mut a = 0.5;
        while x <= a {
            a *= 0.5;
        }
        let allowed = [1.0 + a * a, 1.0 - a - a * a];
        for s in staircase_bsub(x).unwrap() {
            prop_assert!(allowed.iter().any(|t| (s - t).abs() < 1e-15), "{s} at {x}");
        }
    }
}
