//! Zigzag map squeezed between two lines on every dyadic interval.
//!
//! On `(a, 2a]` with `a = 2^{-k}` the graph runs between the lower line
//! `(1−a)x + a²` and the upper line `x`, starting at `(2a, 2a)` and moving
//! left with slopes `1+a²` and `1−a−a²` alternately; every contact with a
//! bounding line switches the slope. Contacts sit at `a + a·r^j` with
//! `r = a/(1+a)`, so they accumulate only at `a`. The map is odd, strictly
//! increasing and Lipschitz, but the quotients at `a` oscillate between the
//! slopes of the two lines.

use crate::error::{Error, Result};
use crate::map::{
    dedup_generators, Capabilities, DomainBox, Generator, Matrix, NonsmoothMap, Vector,
};
use crate::sampling::{sample_restrictive_derivative, LimitGrid};
use crate::set::DerivativeValueSet;

// Below this offset from an accumulation point the value is taken from the
// lower line.
const CLAMP: f64 = 1e-14;
const MAX_SEGMENTS: usize = 200;

fn upper_slope(a: f64) -> f64 {
    1.0 + a * a
}

fn lower_slope(a: f64) -> f64 {
    1.0 - a - a * a
}

fn lower_line(a: f64, x: f64) -> f64 {
    (1.0 - a) * x + a * a
}

/// `(k, 2^{-k})` with `2^{-k} < x ≤ 2^{-(k−1)}`, for `x ∈ (0, 1]`.
pub fn dyadic_interval(x: f64) -> (u32, f64) {
    debug_assert!(x > 0.0 && x <= 1.0);
    let mut hi = 1.0;
    let mut k = 1;
    while x <= 0.5 * hi {
        hi *= 0.5;
        k += 1;
    }
    (k, 0.5 * hi)
}

/// `x = 2^{-k}` for some `k ≥ 0`.
pub fn is_dyadic_point(x: f64) -> bool {
    x > 0.0 && x <= 1.0 && x == 2f64.powi(x.log2().round() as i32)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    index: usize,
    right: f64,
}

impl Segment {
    fn slope(&self, a: f64) -> f64 {
        if self.index.is_multiple_of(2) {
            upper_slope(a)
        } else {
            lower_slope(a)
        }
    }

    fn right_value(&self, a: f64) -> f64 {
        if self.index.is_multiple_of(2) {
            self.right
        } else {
            lower_line(a, self.right)
        }
    }
}

/// Segment of interval `(a, 2a]` containing `x = a + e`. With `from_right`
/// a contact point belongs to the segment on its right, otherwise to the one
/// on its left. `None` when the walk exceeds the segment budget.
fn locate(a: f64, e: f64, from_right: bool) -> Option<Segment> {
    let r = a / (1.0 + a);
    let mut e_right = a;
    for index in 0..MAX_SEGMENTS {
        let e_left = e_right * r;
        let inside = if from_right { e >= e_left } else { e > e_left };
        if inside {
            return Some(Segment {
                index,
                right: a + e_right,
            });
        }
        e_right = e_left;
    }
    None
}

fn domain_check(x: f64) -> Result<()> {
    if !(x.abs() <= 1.0) {
        return Err(Error::DomainExit { point: vec![x] });
    }
    Ok(())
}

/// Value of the zigzag map.
pub fn staircase_eval(x: f64) -> Result<f64> {
    domain_check(x)?;
    if x < 0.0 {
        return staircase_eval(-x).map(|v| -v);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let (_, a) = dyadic_interval(x);
    let e = x - a;
    if e <= CLAMP {
        return Ok(lower_line(a, x));
    }
    Ok(match locate(a, e, false) {
        Some(seg) => seg.right_value(a) + seg.slope(a) * (x - seg.right),
        None => lower_line(a, x),
    })
}

/// Directional derivative `H'(x; d)` for `x ≠ 0`; at `x = ±2^{-k}`, `k ≥ 1`,
/// and `d` pointing away from the origin the quotients oscillate and the
/// segment between the two line slopes is returned.
pub fn staircase_slopes_along(x: f64, d: f64) -> Result<DerivativeValueSet> {
    domain_check(x)?;
    let v = |s: f64| Vector::from_element(1, s);
    if d == 0.0 {
        return Ok(DerivativeValueSet::singleton(v(0.0)));
    }
    if x < 0.0 {
        return staircase_slopes_along(-x, -d).map(|s| s.scaled(-1.0));
    }
    if x == 0.0 {
        return Err(Error::InsufficientData(
            "no closed-form derivative at the origin".into(),
        ));
    }
    if is_dyadic_point(x) {
        if d > 0.0 {
            if x == 1.0 {
                return Err(Error::DomainExit {
                    point: vec![1.0 + d],
                });
            }
            return Ok(DerivativeValueSet::segment(v((1.0 - x) * d), v(d)));
        }
        return Ok(DerivativeValueSet::singleton(v(upper_slope(0.5 * x) * d)));
    }
    let (_, a) = dyadic_interval(x);
    let e = x - a;
    let slope = if e <= CLAMP {
        1.0 - a
    } else {
        locate(a, e, d > 0.0).map_or(1.0 - a, |s| s.slope(a))
    };
    Ok(DerivativeValueSet::singleton(v(slope * d)))
}

/// Limits of slopes at `x`, sorted.
pub fn staircase_bsub(x: f64) -> Result<Vec<f64>> {
    domain_check(x)?;
    let x = x.abs();
    let mut slopes = if x == 0.0 {
        vec![1.0]
    } else if x == 1.0 {
        vec![upper_slope(0.5)]
    } else if is_dyadic_point(x) {
        vec![lower_slope(x), upper_slope(x), upper_slope(0.5 * x)]
    } else {
        let (_, a) = dyadic_interval(x);
        let e = x - a;
        if e <= CLAMP {
            vec![lower_slope(a), upper_slope(a)]
        } else {
            [locate(a, e, false), locate(a, e, true)]
                .iter()
                .map(|s| s.map_or(1.0 - a, |s| s.slope(a)))
                .collect()
        }
    };
    slopes.sort_by(f64::total_cmp);
    slopes.dedup();
    Ok(slopes)
}

/// The zigzag map on `[−1, 1]` as a [`NonsmoothMap`].
#[derive(Debug, Clone)]
pub struct Staircase {
    domain: DomainBox,
    // Sampled derivative at the origin for d = +1 and d = −1.
    origin: [DerivativeValueSet; 2],
}

impl Staircase {
    /// Samples the radial quotients at the origin once and checks that they
    /// lie in `[0.5, 1]·d`.
    pub fn new() -> Result<Self> {
        let mut map = Staircase {
            domain: DomainBox::cube(1, 1.0),
            origin: [
                DerivativeValueSet::singleton(Vector::from_element(1, 1.0)),
                DerivativeValueSet::singleton(Vector::from_element(1, -1.0)),
            ],
        };
        let grid = LimitGrid::default();
        let zero = Vector::zeros(1);
        let mut sampled = Vec::with_capacity(2);
        for d in [1.0, -1.0] {
            let set =
                sample_restrictive_derivative(&map, &zero, &Vector::from_element(1, d), &grid)?;
            for p in set.points() {
                let q = p[0] * d;
                if !(0.5..=1.0 + crate::TOL_SET).contains(&q) {
                    return Err(Error::InvalidGrid(format!(
                        "origin quotient {q} outside [0.5, 1]"
                    )));
                }
            }
            sampled.push(set);
        }
        let neg = sampled.pop().unwrap();
        let pos = sampled.pop().unwrap();
        map.origin = [pos, neg];
        Ok(map)
    }
}

fn gens(slopes: &[f64]) -> Vec<Generator> {
    slopes
        .iter()
        .enumerate()
        .map(|(id, &s)| Generator {
            id,
            matrix: Matrix::from_element(1, 1, s),
        })
        .collect()
}

impl NonsmoothMap for Staircase {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            lipschitz: true,
            directionally_differentiable: false,
            piecewise_c1: false,
            has_analytic_dirderiv: true,
        }
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        staircase_eval(x[0]).map(|v| Vector::from_element(1, v))
    }

    fn analytic_dirderiv(&self, x: &Vector, d: &Vector) -> Option<Result<DerivativeValueSet>> {
        let (x, d) = (x[0], d[0]);
        if x == 0.0 && d != 0.0 {
            let set = if d > 0.0 {
                &self.origin[0]
            } else {
                &self.origin[1]
            };
            return Some(Ok(set.scaled(d.abs())));
        }
        Some(staircase_slopes_along(x, d))
    }

    fn analytic_bsub(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        Some(staircase_bsub(x[0]).map(|s| gens(&s)))
    }

    /// B-subdifferential plus, at accumulation points, the slopes of the two
    /// bounding lines.
    fn generators(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        let ax = x[0].abs();
        Some(staircase_bsub(x[0]).map(|mut s| {
            if is_dyadic_point(ax) && ax < 1.0 {
                s.extend([1.0 - ax, 1.0]);
            }
            s.sort_by(f64::total_cmp);
            dedup_generators(gens(&s))
        }))
    }

    fn jacobian(&self, x: &Vector) -> Option<Result<Matrix>> {
        match staircase_bsub(x[0]) {
            Ok(s) if s.len() == 1 => Some(Ok(Matrix::from_element(1, 1, s[0]))),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        }
    }
}
