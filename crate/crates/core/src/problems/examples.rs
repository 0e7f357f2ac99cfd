//! Non-Lipschitz test maps.

use crate::error::Result;
use crate::map::{check_point, Capabilities, DomainBox, Generator, Matrix, NonsmoothMap, Vector};
use crate::set::DerivativeValueSet;

/// `x ↦ x·sin(1/x)` on `[−1, 1]`: quotients at 0 stay bounded but oscillate.
#[derive(Debug, Clone)]
pub struct XSinInvX {
    domain: DomainBox,
}

impl Default for XSinInvX {
    fn default() -> Self {
        XSinInvX {
            domain: DomainBox::cube(1, 1.0),
        }
    }
}

fn xsin_slope(x: f64) -> f64 {
    (1.0 / x).sin() - (1.0 / x).cos() / x
}

impl NonsmoothMap for XSinInvX {
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
            lipschitz: false,
            directionally_differentiable: false,
            piecewise_c1: false,
            has_analytic_dirderiv: true,
        }
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_point(self, x)?;
        let v = if x[0] == 0.0 {
            0.0
        } else {
            x[0] * (1.0 / x[0]).sin()
        };
        Ok(Vector::from_element(1, v))
    }

    /// At the origin every value in `[−|d|, |d|]` is a cluster point of the
    /// quotients `sin(1/(td))·d`.
    fn analytic_dirderiv(&self, x: &Vector, d: &Vector) -> Option<Result<DerivativeValueSet>> {
        if let Err(e) = check_point(self, x) {
            return Some(Err(e));
        }
        let v = |s: f64| Vector::from_element(1, s);
        Some(Ok(if x[0] == 0.0 {
            DerivativeValueSet::segment(v(-d[0].abs()), v(d[0].abs()))
        } else {
            DerivativeValueSet::singleton(v(xsin_slope(x[0]) * d[0]))
        }))
    }

    fn generators(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        self.jacobian(x)
            .map(|j| j.map(|matrix| vec![Generator { id: 0, matrix }]))
    }

    fn jacobian(&self, x: &Vector) -> Option<Result<Matrix>> {
        if x[0] == 0.0 {
            return None;
        }
        Some(check_point(self, x).map(|_| Matrix::from_element(1, 1, xsin_slope(x[0]))))
    }
}

/// `(x₁, x₂) ↦ (x₂·√(|x₁| + |x₂|³), x₁)` on `[−1, 1]²`: directionally
/// differentiable and one-to-one, with Jacobians unbounded along `x₁ = x₂³`.
#[derive(Debug, Clone)]
pub struct NonLipschitz2d {
    domain: DomainBox,
}

impl Default for NonLipschitz2d {
    fn default() -> Self {
        NonLipschitz2d {
            domain: DomainBox::cube(2, 1.0),
        }
    }
}

fn phi(x: &Vector) -> f64 {
    x[0].abs() + x[1].abs().powi(3)
}

impl NonLipschitz2d {
    /// Jacobian rows for the two branches `±x₁ ≥ 0` (they coincide off `x₁ = 0`).
    fn branch_jacobian(x: &Vector, sign1: f64) -> Matrix {
        let p = phi(x);
        let r = p.sqrt();
        Matrix::from_row_slice(
            2,
            2,
            &[
                x[1] * sign1 / (2.0 * r),
                r + 3.0 * x[1].abs().powi(3) / (2.0 * r),
                1.0,
                0.0,
            ],
        )
    }
}

impl NonsmoothMap for NonLipschitz2d {
    fn input_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            lipschitz: false,
            directionally_differentiable: true,
            piecewise_c1: false,
            has_analytic_dirderiv: true,
        }
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_point(self, x)?;
        Ok(Vector::from_vec(vec![x[1] * phi(x).sqrt(), x[0]]))
    }

    fn analytic_dirderiv(&self, x: &Vector, d: &Vector) -> Option<Result<DerivativeValueSet>> {
        if let Err(e) = check_point(self, x) {
            return Some(Err(e));
        }
        let first = if x[0] != 0.0 {
            (Self::branch_jacobian(x, x[0].signum()) * d)[0]
        } else if x[1] != 0.0 {
            let r = x[1].abs().powf(1.5);
            let dphi = d[0].abs() + 3.0 * x[1] * x[1] * x[1].signum() * d[1];
            d[1] * r + x[1] * dphi / (2.0 * r)
        } else {
            0.0
        };
        Some(Ok(DerivativeValueSet::singleton(Vector::from_vec(vec![
            first, d[0],
        ]))))
    }

    fn generators(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        if let Err(e) = check_point(self, x) {
            return Some(Err(e));
        }
        let gens = if x[0] != 0.0 {
            vec![Self::branch_jacobian(x, x[0].signum())]
        } else if x[1] != 0.0 {
            vec![
                Self::branch_jacobian(x, 1.0),
                Self::branch_jacobian(x, -1.0),
            ]
        } else {
            vec![Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])]
        };
        Some(Ok(gens
            .into_iter()
            .enumerate()
            .map(|(id, matrix)| Generator { id, matrix })
            .collect()))
    }

    fn jacobian(&self, x: &Vector) -> Option<Result<Matrix>> {
        if x[0] == 0.0 {
            return None;
        }
        Some(check_point(self, x).map(|_| Self::branch_jacobian(x, x[0].signum())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(map: &dyn NonsmoothMap, x: &Vector, d: &Vector, t: f64) -> Vector {
        (map.eval(&(x + d * t)).unwrap() - map.eval(x).unwrap()) / t
    }

    #[test]
    fn nonlip_derivative_matches_quotients() {
        let map = NonLipschitz2d::default();
        let d = Vector::from_vec(vec![-0.3, 0.8]);
        for x in [[0.2, -0.4], [0.0, 0.5], [0.0, -0.3], [0.0, 0.0]] {
            let x = Vector::from_vec(x.to_vec());
            let exact = map.analytic_dirderiv(&x, &d).unwrap().unwrap();
            let q = fd(&map, &x, &d, 1e-7);
            assert!(exact.distance_to(&q) < 5e-4, "{x:?}");
        }
    }

    #[test]
    fn xsin_origin_segment() {
        let map = XSinInvX::default();
        let s = map
            .analytic_dirderiv(&Vector::zeros(1), &Vector::from_element(1, -2.0))
            .unwrap()
            .unwrap();
        assert_eq!(s.interval(), Some((-2.0, 2.0)));
    }
}
