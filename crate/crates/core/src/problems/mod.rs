//! Test problems with known roots, starting points and closed-form
//! derivative data.

mod examples;
mod families;
mod staircase;

use std::fmt;
use std::sync::Arc;

pub use examples::{NonLipschitz2d, XSinInvX};
pub use families::{
    affine_abs_starts, ncp_data, ncp_min_2d, AffineAbs, MAX_ENUMERATED_KINKS, SEED,
};
pub use staircase::{
    dyadic_interval, is_dyadic_point, staircase_bsub, staircase_eval, staircase_slopes_along,
    Staircase,
};

use crate::error::{Error, Result};
use crate::map::{build_piecewise, DomainBox, Matrix, NonsmoothMap, SmoothPiece, Vector};
use crate::sampling::{probe_directions, sample_restrictive_derivative, LimitGrid, TOL_HAUSDORFF};
use crate::set::DerivativeValueSet;

/// Exact limiting subdifferential of `x ↦ z·H(x)` for a scalar map, or
/// `None` where no closed form is registered.
pub type CoderivativeTable = fn(x: f64, z: f64) -> Option<DerivativeValueSet>;

/// Identifiers returned by [`corpus`], in order.
pub const PROBLEM_IDS: [&str; 12] = [
    "abs1d",
    "absaff1d",
    "linear2x",
    "smooth1d",
    "smooth2d",
    "xsin1x",
    "nonlip2d",
    "staircase",
    "affabs_2",
    "affabs_10",
    "affabs_50",
    "ncp_min_2d",
];

#[derive(Clone)]
pub struct ProblemSpec {
    pub id: String,
    pub description: &'static str,
    pub map: Arc<dyn NonsmoothMap>,
    pub known_roots: Vec<Vector>,
    pub starts: Vec<Vector>,
    /// Lipschitz, directionally differentiable and semismooth at the roots.
    pub semismooth: bool,
    pub coderivative: Option<CoderivativeTable>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("id", &self.id)
            .field("known_roots", &self.known_roots)
            .field("starts", &self.starts)
            .finish()
    }
}

impl ProblemSpec {
    /// Root closest to `x`.
    pub fn nearest_root(&self, x: &Vector) -> Option<&Vector> {
        self.known_roots
            .iter()
            .min_by(|a, b| (*a - x).norm().total_cmp(&(*b - x).norm()))
    }

    /// Checks every known root and that the sampled radial quotients lie in
    /// the registered directional derivative on a coarse lattice of the domain.
    pub fn validate(&self) -> Result<()> {
        for r in &self.known_roots {
            let res = self.map.eval(r)?.norm();
            if res > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "{}: ‖H(root)‖ = {res:e}",
                    self.id
                )));
            }
        }
        if !self.map.capabilities().has_analytic_dirderiv {
            return Ok(());
        }
        let grid = LimitGrid::default();
        let inner = self.map.domain().shrink(0.1);
        let per_dim = if self.map.input_dim() <= 2 { 5 } else { 2 };
        let points = if self.map.input_dim() <= 3 {
            inner.lattice(per_dim)
        } else {
            vec![inner.lower().clone(), inner.upper().clone()]
        };
        for x in &points {
            for d in probe_directions(x.len()) {
                let exact = crate::map::dirderiv_set(self.map.as_ref(), x, &d)?;
                let sampled = sample_restrictive_derivative(self.map.as_ref(), x, &d, &grid)?;
                let gap = sampled.directed_hausdorff(&exact);
                if gap > TOL_HAUSDORFF {
                    return Err(Error::InvalidConfig(format!(
                        "{}: registered derivative misses sampled quotients by {gap:e} at {:?}",
                        self.id,
                        x.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn s(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn m1(x: f64) -> Matrix {
    Matrix::from_element(1, 1, x)
}

fn by_sign(x: &Vector) -> Vec<usize> {
    let mut ids = Vec::with_capacity(2);
    if x[0] <= 0.0 {
        ids.push(0);
    }
    if x[0] >= 0.0 {
        ids.push(1);
    }
    ids
}

fn two_slopes(left: f64, right: f64) -> Result<Arc<dyn NonsmoothMap>> {
    Ok(Arc::new(build_piecewise(
        vec![
            SmoothPiece::affine(0, m1(left), s(0.0)),
            SmoothPiece::affine(1, m1(right), s(0.0)),
        ],
        by_sign,
        1,
        1,
        DomainBox::cube(1, 10.0),
    )?))
}

fn smooth(piece: SmoothPiece, n: usize, half: f64) -> Result<Arc<dyn NonsmoothMap>> {
    Ok(Arc::new(build_piecewise(
        vec![piece],
        |_| vec![0],
        n,
        n,
        DomainBox::cube(n, half),
    )?))
}

fn singleton(v: f64) -> Option<DerivativeValueSet> {
    Some(DerivativeValueSet::singleton(s(v)))
}

/// `∂(z·H)(x)` for `H(x) = αx` on `x < 0`, `βx` on `x > 0`, `α ≤ β`: convex
/// kink for `z ≥ 0`, concave (two limiting slopes) for `z < 0`.
fn kink_table(alpha: f64, beta: f64, x: f64, z: f64) -> Option<DerivativeValueSet> {
    if x < 0.0 {
        singleton(alpha * z)
    } else if x > 0.0 {
        singleton(beta * z)
    } else if z >= 0.0 {
        Some(DerivativeValueSet::segment(s(alpha * z), s(beta * z)))
    } else {
        Some(DerivativeValueSet::finite(vec![s(alpha * z), s(beta * z)]))
    }
}

fn abs_table(x: f64, z: f64) -> Option<DerivativeValueSet> {
    kink_table(-1.0, 1.0, x, z)
}

fn absaff_table(x: f64, z: f64) -> Option<DerivativeValueSet> {
    kink_table(0.5, 1.5, x, z)
}

fn linear_table(_x: f64, z: f64) -> Option<DerivativeValueSet> {
    singleton(2.0 * z)
}

fn quadratic_table(x: f64, z: f64) -> Option<DerivativeValueSet> {
    singleton(2.0 * x * z)
}

/// Registered problem by id.
pub fn problem(id: &str) -> Result<ProblemSpec> {
    let spec = |description, map, roots: Vec<Vector>, starts: Vec<Vector>, semismooth, table| {
        ProblemSpec {
            id: id.to_string(),
            description,
            map,
            known_roots: roots,
            starts,
            semismooth,
            coderivative: table,
        }
    };
    Ok(match id {
        "abs1d" => spec(
            "|x|: Lipschitz and semismooth, not metrically regular at 0",
            two_slopes(-1.0, 1.0)?,
            vec![s(0.0)],
            vec![s(0.05), s(-0.08), s(0.1), s(0.5)],
            true,
            Some(abs_table as CoderivativeTable),
        ),
        "absaff1d" => spec(
            "x + |x|/2: piecewise linear with slopes 1/2 and 3/2",
            two_slopes(0.5, 1.5)?,
            vec![s(0.0)],
            vec![s(0.1), s(-0.1), s(2.0)],
            true,
            Some(absaff_table as CoderivativeTable),
        ),
        "linear2x" => spec(
            "2x",
            smooth(SmoothPiece::affine(0, m1(2.0), s(0.0)), 1, 10.0)?,
            vec![s(0.0)],
            vec![s(1.0)],
            true,
            Some(linear_table as CoderivativeTable),
        ),
        "smooth1d" => spec(
            "x² − 1",
            smooth(
                SmoothPiece::new(0, |x| x.map(|v| v * v - 1.0), |x| m1(2.0 * x[0])),
                1,
                10.0,
            )?,
            vec![s(1.0), s(-1.0)],
            vec![s(2.0)],
            true,
            Some(quadratic_table as CoderivativeTable),
        ),
        "smooth2d" => {
            let r = std::f64::consts::SQRT_2;
            spec(
                "(x₁² + x₂² − 4, x₁ − x₂)",
                smooth(
                    SmoothPiece::new(
                        0,
                        |x| Vector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 4.0, x[0] - x[1]]),
                        |x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 2.0 * x[1], 1.0, -1.0]),
                    ),
                    2,
                    10.0,
                )?,
                vec![Vector::from_vec(vec![r, r]), Vector::from_vec(vec![-r, -r])],
                vec![Vector::from_vec(vec![2.0, 1.0])],
                true,
                None,
            )
        }
        "xsin1x" => spec(
            "x·sin(1/x): bounded quotients at 0 without a directional derivative",
            Arc::new(XSinInvX::default()),
            vec![s(0.0)],
            vec![],
            false,
            None,
        ),
        "nonlip2d" => spec(
            "(x₂·√(|x₁| + |x₂|³), x₁): directionally differentiable, not Lipschitz",
            Arc::new(NonLipschitz2d::default()),
            vec![Vector::zeros(2)],
            vec![],
            false,
            None,
        ),
        "staircase" => spec(
            "zigzag between (1−2⁻ᵏ)x + 4⁻ᵏ and x: Lipschitz, not semismooth",
            Arc::new(Staircase::new()?),
            vec![s(0.0)],
            vec![s(0.6)],
            false,
            None,
        ),
        "affabs_2" | "affabs_10" | "affabs_50" => {
            let n: usize = id["affabs_".len()..].parse().expect("size suffix");
            let p = AffineAbs::random(n);
            let starts = affine_abs_starts(&p);
            let root = p.root.clone();
            spec(
                "Ax + B|x| − b with ‖A⁻¹‖‖B‖ = 1/2",
                Arc::new(p),
                vec![root],
                starts,
                true,
                None,
            )
        }
        "ncp_min_2d" => spec(
            "min(x, Mx + q) for a 2-D complementarity problem with strictly complementary root (1, 0)",
            Arc::new(ncp_min_2d()?),
            vec![Vector::from_vec(vec![1.0, 0.0])],
            vec![
                Vector::from_vec(vec![1.05, 0.05]),
                Vector::from_vec(vec![0.95, -0.05]),
                Vector::from_vec(vec![1.0, 0.08]),
                Vector::from_vec(vec![2.0, 2.0]),
            ],
            true,
            None,
        ),
        other => return Err(Error::UnknownProblem(other.to_string())),
    })
}

/// All registered problems.
pub fn corpus() -> Vec<ProblemSpec> {
    PROBLEM_IDS
        .iter()
        .map(|id| problem(id).unwrap_or_else(|e| panic!("built-in problem {id}: {e}")))
        .collect()
}

/// Closed-form `∂(z·H)(x)` for a registered scalar problem.
pub fn scalarized_coderivative_1d(id: &str, x: f64, z: f64) -> Result<DerivativeValueSet> {
    let table = match id {
        "abs1d" => abs_table as CoderivativeTable,
        "absaff1d" => absaff_table,
        "linear2x" => linear_table,
        "smooth1d" => quadratic_table,
        _ => return Err(Error::NotRegistered(id.to_string())),
    };
    table(x, z).ok_or_else(|| Error::NotRegistered(format!("{id} at {x}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_problem_validates() {
        for p in corpus() {
            p.validate().unwrap_or_else(|e| panic!("{}: {e}", p.id));
        }
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(problem("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn abs_coderivative_table() {
        let pos = scalarized_coderivative_1d("abs1d", 0.0, 1.0).unwrap();
        assert_eq!(pos.interval(), Some((-1.0, 1.0)));
        let neg = scalarized_coderivative_1d("abs1d", 0.0, -1.0).unwrap();
        assert_eq!(neg.points().len(), 2);
        assert!(neg.contains(&s(1.0), 0.0) && neg.contains(&s(-1.0), 0.0));
        assert!(!neg.contains(&s(0.0), 1e-12));
        assert_eq!(
            scalarized_coderivative_1d("abs1d", 0.5, 1.0)
                .unwrap()
                .as_singleton()
                .unwrap()[0],
            1.0
        );
        assert!(matches!(
            scalarized_coderivative_1d("staircase", 0.0, 1.0),
            Err(Error::NotRegistered(_))
        ));
    }
}
