//! Seeded synthetic problem families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::map::{
    build_piecewise, check_point, Capabilities, DomainBox, Generator, Matrix, NonsmoothMap,
    PiecewiseC1Map, SmoothPiece, Vector,
};
use crate::set::DerivativeValueSet;

/// Seed shared by all synthetic instances.
pub const SEED: u64 = 0xC0FFEE;
/// Sign patterns of at most this many zero components are enumerated.
pub const MAX_ENUMERATED_KINKS: usize = 10;

/// `H(x) = Ax + B|x| − b` with `‖A⁻¹‖·‖B‖ = 1/2`, so every element
/// `A + B·diag(s)`, `s ∈ [−1, 1]ⁿ`, is nonsingular and the root is unique.
#[derive(Debug, Clone)]
pub struct AffineAbs {
    pub a: Matrix,
    pub b: Matrix,
    pub rhs: Vector,
    pub root: Vector,
    domain: DomainBox,
}

impl AffineAbs {
    /// Random instance of size `n`; root components have modulus in `[0.2, 1]`.
    pub fn random(n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ n as u64);
        let scale = 1.0 / (n as f64).sqrt();
        let a = Matrix::from_fn(n, n, |i, j| {
            let r = rng.gen_range(-1.0..1.0) * scale;
            if i == j {
                3.0 + r
            } else {
                r
            }
        });
        let b0 = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let inv_norm = 1.0 / a.singular_values().min();
        let b = &b0 * (0.5 / (inv_norm * spectral_norm(&b0)));
        let root = Vector::from_fn(n, |_, _| {
            let m = rng.gen_range(0.2..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        });
        let rhs = &a * &root + &b * root.abs();
        AffineAbs {
            a,
            b,
            rhs,
            root,
            domain: DomainBox::cube(n, 10.0),
        }
    }

    /// `‖A⁻¹‖₂·‖B‖₂`.
    pub fn dominance(&self) -> f64 {
        spectral_norm(&self.b) / self.a.singular_values().min()
    }

    fn element(&self, signs: &[f64]) -> Matrix {
        let mut m = self.a.clone();
        for (j, s) in signs.iter().enumerate() {
            let col = self.b.column(j) * *s;
            let mut target = m.column_mut(j);
            target += col;
        }
        m
    }
}

pub(crate) fn spectral_norm(m: &Matrix) -> f64 {
    m.singular_values().max()
}

impl NonsmoothMap for AffineAbs {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            lipschitz: true,
            directionally_differentiable: true,
            piecewise_c1: true,
            has_analytic_dirderiv: true,
        }
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_point(self, x)?;
        Ok(&self.a * x + &self.b * x.abs() - &self.rhs)
    }

    fn analytic_dirderiv(&self, x: &Vector, d: &Vector) -> Option<Result<DerivativeValueSet>> {
        if let Err(e) = check_point(self, x) {
            return Some(Err(e));
        }
        let abs_dir = Vector::from_fn(x.len(), |i, _| {
            if x[i] == 0.0 {
                d[i].abs()
            } else {
                x[i].signum() * d[i]
            }
        });
        Some(Ok(DerivativeValueSet::singleton(
            &self.a * d + &self.b * abs_dir,
        )))
    }

    /// Elements `A + B·diag(s)` for the sign patterns compatible with `x`.
    /// Bit `j` of the id is set when the `j`-th zero component takes sign −1;
    /// zero components beyond [`MAX_ENUMERATED_KINKS`] are fixed to +1.
    fn analytic_bsub(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        if let Err(e) = check_point(self, x) {
            return Some(Err(e));
        }
        let zeros: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 0.0).collect();
        let free = zeros.len().min(MAX_ENUMERATED_KINKS);
        let base: Vec<f64> = x
            .iter()
            .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let gens = (0..1usize << free)
            .map(|id| {
                let mut signs = base.clone();
                for (bit, &i) in zeros.iter().take(free).enumerate() {
                    if id >> bit & 1 == 1 {
                        signs[i] = -1.0;
                    }
                }
                Generator {
                    id,
                    matrix: self.element(&signs),
                }
            })
            .collect();
        Some(Ok(gens))
    }

    fn jacobian(&self, x: &Vector) -> Option<Result<Matrix>> {
        if x.iter().any(|v| *v == 0.0) {
            return None;
        }
        let signs: Vec<f64> = x.iter().map(|v| v.signum()).collect();
        Some(check_point(self, x).map(|_| self.element(&signs)))
    }
}

/// Starting points `x* + 0.05·u`, `x* + 0.1·v` (random unit `u`, `v`) and 0.
pub fn affine_abs_starts(problem: &AffineAbs) -> Vec<Vector> {
    let n = problem.root.len();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED.wrapping_add(n as u64));
    let mut unit = || {
        let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        &v / v.norm()
    };
    let u = unit();
    let v = unit();
    vec![
        &problem.root + u * 0.05,
        &problem.root + v * 0.1,
        Vector::zeros(n),
    ]
}

/// Affine data of the complementarity function `F(x) = Mx + q`.
pub fn ncp_data() -> (Matrix, Vector) {
    (
        Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        Vector::from_vec(vec![-2.0, 1.0]),
    )
}

/// `H_i(x) = min(x_i, F_i(x))` as a piecewise affine map; piece `p` uses
/// `F_i` in row `i` when bit `i` of `p` is set and `x_i` otherwise.
pub fn ncp_min_2d() -> Result<PiecewiseC1Map> {
    let (m, q) = ncp_data();
    let pieces = (0..4usize)
        .map(|p| {
            let mut a = Matrix::identity(2, 2);
            let mut b = Vector::zeros(2);
            for i in 0..2 {
                if p >> i & 1 == 1 {
                    a.set_row(i, &m.row(i));
                    b[i] = q[i];
                }
            }
            SmoothPiece::affine(p, a, b)
        })
        .collect();
    let active = move |x: &Vector| {
        let f = &m * x + &q;
        let choices: Vec<Vec<usize>> = (0..2)
            .map(|i| {
                let mut c = Vec::new();
                if x[i] <= f[i] {
                    c.push(0);
                }
                if f[i] <= x[i] {
                    c.push(1);
                }
                c
            })
            .collect();
        let mut ids = Vec::new();
        for &c0 in &choices[0] {
            for &c1 in &choices[1] {
                ids.push(c0 | c1 << 1);
            }
        }
        ids
    };
    build_piecewise(pieces, active, 2, 2, DomainBox::cube(2, 5.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_abs_dominance_and_root() {
        for n in [2, 10, 50] {
            let p = AffineAbs::random(n);
            assert!(
                (p.dominance() - 0.5).abs() < 1e-9,
                "n={n}: {}",
                p.dominance()
            );
            assert!(p.eval(&p.root).unwrap().norm() < 1e-12);
            assert!(p.root.iter().all(|v| v.abs() >= 0.2));
        }
    }

    #[test]
    fn affine_abs_kinks_enumerate_signs() {
        let p = AffineAbs::random(2);
        let x = Vector::from_vec(vec![0.0, 0.3]);
        let gens = p.analytic_bsub(&x).unwrap().unwrap();
        assert_eq!(gens.len(), 2);
        let diff = &gens[0].matrix - &gens[1].matrix;
        assert!((diff.column(0) - p.b.column(0) * 2.0).norm() < 1e-15);
    }

    #[test]
    fn ncp_root_and_active_piece() {
        let map = ncp_min_2d().unwrap();
        let root = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(map.eval(&root).unwrap().norm(), 0.0);
        assert_eq!(map.active_ids(&root).unwrap(), vec![1]);
    }
}
