//! The nonsmooth-map abstraction and analytic derivative objects.
//!
//! A [`NonsmoothMap`] evaluates `H` and advertises which derivative queries
//! it can answer exactly. Piecewise-C¹ maps built with [`build_piecewise`]
//! get all of them from their selection functions; bespoke problems
//! (infinitely many pieces, non-Lipschitz maps) override the hooks directly.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{self, LimitGrid};
use crate::set::DerivativeValueSet;
use crate::{TOL_FD, TOL_SET};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub lipschitz: bool,
    pub directionally_differentiable: bool,
    pub piecewise_c1: bool,
    pub has_analytic_dirderiv: bool,
}

/// Axis-aligned box on which a map is declared valid.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vector,
    upper: Vector,
}

impl DomainBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidConfig(
                "domain box must have lower < upper".into(),
            ));
        }
        Ok(DomainBox { lower, upper })
    }

    /// The cube `[-half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Self {
        DomainBox {
            lower: Vector::from_element(n, -half),
            upper: Vector::from_element(n, half),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(xi, (l, u))| *xi >= *l && *xi <= *u)
    }

    /// Box shrunk by `margin` on every side.
    pub fn shrink(&self, margin: f64) -> DomainBox {
        DomainBox {
            lower: self.lower.add_scalar(margin),
            upper: self.upper.add_scalar(-margin),
        }
    }

    /// Intersection with the cube of half-width `radius` around `center`.
    pub fn clip_around(&self, center: &Vector, radius: f64) -> DomainBox {
        let lower = Vector::from_fn(self.dim(), |i, _| (center[i] - radius).max(self.lower[i]));
        let upper = Vector::from_fn(self.dim(), |i, _| (center[i] + radius).min(self.upper[i]));
        DomainBox { lower, upper }
    }

    /// Uniform lattice with `per_dim` points along every axis.
    pub fn lattice(&self, per_dim: usize) -> Vec<Vector> {
        let n = self.dim();
        let per_dim = per_dim.max(2);
        let total = per_dim.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                Vector::from_fn(n, |i, _| {
                    let k = idx % per_dim;
                    idx /= per_dim;
                    let s = k as f64 / (per_dim - 1) as f64;
                    self.lower[i] + s * (self.upper[i] - self.lower[i])
                })
            })
            .collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        Vector::from_fn(self.dim(), |i, _| {
            rng.gen_range(self.lower[i]..=self.upper[i])
        })
    }
}

/// A linear generator of the Newton subproblem, tagged with the piece or
/// element it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: usize,
    pub matrix: Matrix,
}

/// A continuous map `H: R^n → R^m` with capability-gated derivative queries.
///
/// Hooks return `None` when the map has no analytic answer for that query.
pub trait NonsmoothMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn domain(&self) -> &DomainBox;
    fn capabilities(&self) -> Capabilities;

    /// Evaluates `H(x)`; `DomainExit` outside the domain box.
    fn eval(&self, x: &Vector) -> Result<Vector>;

    /// Exact `DH(x)(d)`.
    fn analytic_dirderiv(&self, _x: &Vector, _d: &Vector) -> Option<Result<DerivativeValueSet>> {
        None
    }

    /// Elements of `∂_B H(x)` ordered by id.
    fn analytic_bsub(&self, _x: &Vector) -> Option<Result<Vec<Generator>>> {
        None
    }

    /// Vertices whose convex hull is `∂_C H(x)`; defaults to the B-subdifferential.
    fn clarke_vertices(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        self.analytic_bsub(x)
    }

    /// Candidate linear generators for `-H(x) ∈ DH(x)(d)`; defaults to the B-subdifferential.
    fn generators(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        self.analytic_bsub(x)
    }

    /// Classical Jacobian at points of differentiability.
    fn jacobian(&self, _x: &Vector) -> Option<Result<Matrix>> {
        None
    }
}

impl fmt::Debug for dyn NonsmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonsmoothMap")
            .field("n", &self.input_dim())
            .field("m", &self.output_dim())
            .field("capabilities", &self.capabilities())
            .finish()
    }
}

pub(crate) fn check_point(map: &dyn NonsmoothMap, x: &Vector) -> Result<()> {
    if x.len() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("point {:?}", x.as_slice())));
    }
    if !map.domain().contains(x) {
        return Err(Error::DomainExit {
            point: x.as_slice().to_vec(),
        });
    }
    Ok(())
}

/// `DH(x)(d)` from the map's analytic hook.
pub fn dirderiv_set(map: &dyn NonsmoothMap, x: &Vector, d: &Vector) -> Result<DerivativeValueSet> {
    dirderiv_set_with(map, x, d, None)
}

/// `DH(x)(d)`, falling back to the sampled restrictive derivative when the
/// map has no analytic hook and a grid is supplied.
pub fn dirderiv_set_with(
    map: &dyn NonsmoothMap,
    x: &Vector,
    d: &Vector,
    fallback: Option<&LimitGrid>,
) -> Result<DerivativeValueSet> {
    check_point(map, x)?;
    if d.len() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dim(),
            found: d.len(),
        });
    }
    if let Some(res) = map.analytic_dirderiv(x, d) {
        return res;
    }
    match fallback {
        Some(grid) => sampling::sample_restrictive_derivative(map, x, d, grid),
        None => Err(Error::CapabilityMissing(
            "an analytic directional derivative",
        )),
    }
}

/// Elements of `∂_B H(x)` with their piece ids.
pub fn bsub_elements(map: &dyn NonsmoothMap, x: &Vector) -> Result<Vec<Generator>> {
    if !map.capabilities().lipschitz {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity (B-subdifferential)",
        ));
    }
    check_point(map, x)?;
    map.analytic_bsub(x)
        .unwrap_or(Err(Error::CapabilityMissing("a B-subdifferential")))
}

/// `∂_B H(x)` as a list of matrices, ordered by piece id.
pub fn bsub(map: &dyn NonsmoothMap, x: &Vector) -> Result<Vec<Matrix>> {
    Ok(bsub_elements(map, x)?
        .into_iter()
        .map(|g| g.matrix)
        .collect())
}

/// Image `∂_C H(x) z`: the hull of `{A z : A a Clarke vertex}`.
pub fn clarke_apply(map: &dyn NonsmoothMap, x: &Vector, z: &Vector) -> Result<DerivativeValueSet> {
    if !map.capabilities().lipschitz {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity (Clarke Jacobian)",
        ));
    }
    check_point(map, x)?;
    let verts = map
        .clarke_vertices(x)
        .unwrap_or(Err(Error::CapabilityMissing("Clarke vertices")))?;
    Ok(DerivativeValueSet::hull(
        verts.iter().map(|g| &g.matrix * z).collect(),
    ))
}

pub(crate) fn dedup_generators(gens: Vec<Generator>) -> Vec<Generator> {
    let mut out: Vec<Generator> = Vec::with_capacity(gens.len());
    for g in gens {
        let scale = 1.0 + g.matrix.norm();
        if !out
            .iter()
            .any(|h| (&h.matrix - &g.matrix).norm() <= TOL_SET * scale)
        {
            out.push(g);
        }
    }
    out.sort_by_key(|g| g.id);
    out
}

pub type PieceFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// Returns the ids of the pieces whose activity region (closure of its
/// interior) contains the point.
pub type ActivityFn = Arc<dyn Fn(&Vector) -> Vec<usize> + Send + Sync>;

/// A C¹ selection function with its Jacobian.
#[derive(Clone)]
pub struct SmoothPiece {
    pub id: usize,
    eval: PieceFn,
    jacobian: JacobianFn,
}

impl SmoothPiece {
    pub fn new(
        id: usize,
        eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jacobian: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        SmoothPiece {
            id,
            eval: Arc::new(eval),
            jacobian: Arc::new(jacobian),
        }
    }

    /// Affine piece `x ↦ A x + b`.
    pub fn affine(id: usize, a: Matrix, b: Vector) -> Self {
        let a2 = a.clone();
        SmoothPiece::new(id, move |x| &a * x + &b, move |_| a2.clone())
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        (self.jacobian)(x)
    }
}

impl fmt::Debug for SmoothPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothPiece").field("id", &self.id).finish()
    }
}

/// Continuous selection of finitely many C¹ pieces.
#[derive(Clone)]
pub struct PiecewiseC1Map {
    n: usize,
    m: usize,
    pieces: Vec<SmoothPiece>,
    active: ActivityFn,
    domain: DomainBox,
}

impl fmt::Debug for PiecewiseC1Map {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseC1Map")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("pieces", &self.pieces)
            .finish()
    }
}

// Step lengths used to decide which active pieces stay active along `d`.
const PROBE_STEPS: [f64; 3] = [1e-3, 1e-5, 1e-7];

impl PiecewiseC1Map {
    pub fn pieces(&self) -> &[SmoothPiece] {
        &self.pieces
    }

    fn piece(&self, id: usize) -> &SmoothPiece {
        self.pieces
            .iter()
            .find(|p| p.id == id)
            .expect("activity function returned an unknown piece id")
    }

    pub fn active_ids(&self, x: &Vector) -> Result<Vec<usize>> {
        let mut ids = (self.active)(x);
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::EmptyActivity {
                point: x.as_slice().to_vec(),
            });
        }
        Ok(ids)
    }

    fn validate(&self) -> Result<()> {
        let per_dim = match self.n {
            1 => 401,
            2 => 41,
            3 => 13,
            _ => 3,
        };
        let lattice = self.domain.lattice(per_dim);
        let mut actives = Vec::with_capacity(lattice.len());
        for x in &lattice {
            let ids = self.active_ids(x)?;
            self.check_stitch(x, &ids)?;
            if ids.len() == 1 {
                self.check_jacobian(x, ids[0])?;
            }
            actives.push(ids);
        }
        // Bisect every lattice edge that crosses an activity boundary and
        // compare the pieces on both sides at the crossing.
        let per_dim = per_dim.max(2);
        for (idx, x) in lattice.iter().enumerate() {
            let mut stride = 1;
            for _axis in 0..self.n {
                let coord = (idx / stride) % per_dim;
                if coord + 1 < per_dim {
                    let j = idx + stride;
                    if actives[idx] != actives[j] {
                        self.bisect_boundary(x, &lattice[j], &actives[idx], &actives[j])?;
                    }
                }
                stride *= per_dim;
            }
        }
        Ok(())
    }

    fn check_stitch(&self, x: &Vector, ids: &[usize]) -> Result<()> {
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                let vi = self.piece(i).eval(x);
                let vj = self.piece(j).eval(x);
                let gap = (&vi - &vj).norm();
                if gap > TOL_SET * (1.0 + vi.norm()) {
                    return Err(Error::StitchingViolation {
                        point: x.as_slice().to_vec(),
                        pieces: (i, j),
                        gap,
                    });
                }
            }
        }
        Ok(())
    }

    fn bisect_boundary(
        &self,
        a: &Vector,
        b: &Vector,
        ids_a: &[usize],
        ids_b: &[usize],
    ) -> Result<()> {
        let (mut lo, mut hi) = (a.clone(), b.clone());
        let lo_ids = ids_a.to_vec();
        let mut hi_ids = ids_b.to_vec();
        for _ in 0..60 {
            let mid = (&lo + &hi) * 0.5;
            let mid_ids = self.active_ids(&mid)?;
            if mid_ids == lo_ids {
                lo = mid;
            } else {
                hi = mid;
                hi_ids = mid_ids;
            }
            if (&hi - &lo).norm() < 1e-13 {
                break;
            }
        }
        let p = (&lo + &hi) * 0.5;
        let vi = self.piece(lo_ids[0]).eval(&p);
        let vj = self.piece(hi_ids[0]).eval(&p);
        let gap = (&vi - &vj).norm();
        // Pieces move by at most ‖J‖·width across the final bracket.
        let width = (&hi - &lo).norm();
        let slack = width
            * (self.piece(lo_ids[0]).jacobian(&p).norm()
                + self.piece(hi_ids[0]).jacobian(&p).norm());
        if gap > TOL_SET * (1.0 + vi.norm()) + slack {
            return Err(Error::StitchingViolation {
                point: p.as_slice().to_vec(),
                pieces: (lo_ids[0], hi_ids[0]),
                gap,
            });
        }
        Ok(())
    }

    fn check_jacobian(&self, x: &Vector, id: usize) -> Result<()> {
        let piece = self.piece(id);
        let jac = piece.jacobian(x);
        let h = 1e-6 * x.amax().max(1.0);
        for j in 0..self.n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (piece.eval(&xp) - piece.eval(&xm)) / (2.0 * h);
            let err = (&col - jac.column(j)).norm();
            if err > TOL_FD * (1.0 + jac.norm()) {
                return Err(Error::JacobianMismatch {
                    piece: id,
                    point: x.as_slice().to_vec(),
                    error: err,
                });
            }
        }
        Ok(())
    }
}

/// Builds a piecewise-C¹ map and validates continuity stitching, activity
/// totality and piece Jacobians on a sample lattice of `domain`.
pub fn build_piecewise(
    pieces: Vec<SmoothPiece>,
    active: impl Fn(&Vector) -> Vec<usize> + Send + Sync + 'static,
    n: usize,
    m: usize,
    domain: DomainBox,
) -> Result<PiecewiseC1Map> {
    if pieces.is_empty() {
        return Err(Error::NoPieces);
    }
    if domain.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: domain.dim(),
        });
    }
    let map = PiecewiseC1Map {
        n,
        m,
        pieces,
        active: Arc::new(active),
        domain,
    };
    map.validate()?;
    Ok(map)
}

impl NonsmoothMap for PiecewiseC1Map {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
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
        let ids = self.active_ids(x)?;
        Ok(self.piece(ids[0]).eval(x))
    }

    fn analytic_dirderiv(&self, x: &Vector, d: &Vector) -> Option<Result<DerivativeValueSet>> {
        Some((|| {
            let dn = d.norm();
            if dn == 0.0 {
                return Ok(DerivativeValueSet::singleton(Vector::zeros(self.m)));
            }
            let ids = self.active_ids(x)?;
            let mut consistent: Vec<usize> = ids
                .iter()
                .copied()
                .filter(|id| {
                    PROBE_STEPS.iter().any(|t| {
                        let probe = x + d * (t / dn);
                        self.domain.contains(&probe) && (self.active)(&probe).contains(id)
                    })
                })
                .collect();
            if consistent.is_empty() {
                consistent = ids;
            }
            let values = consistent
                .iter()
                .map(|&id| self.piece(id).jacobian(x) * d)
                .collect();
            Ok(DerivativeValueSet::finite(values))
        })())
    }

    fn analytic_bsub(&self, x: &Vector) -> Option<Result<Vec<Generator>>> {
        Some(self.active_ids(x).map(|ids| {
            dedup_generators(
                ids.into_iter()
                    .map(|id| Generator {
                        id,
                        matrix: self.piece(id).jacobian(x),
                    })
                    .collect(),
            )
        }))
    }

    fn jacobian(&self, x: &Vector) -> Option<Result<Matrix>> {
        Some(self.active_ids(x).and_then(|ids| {
            if ids.len() == 1 {
                Ok(self.piece(ids[0]).jacobian(x))
            } else {
                Err(Error::CapabilityMissing("a classical Jacobian at a kink"))
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn linear_piece(id: usize, slope: f64) -> SmoothPiece {
        SmoothPiece::affine(id, m1(slope), s(0.0))
    }

    fn by_sign(x: &Vector) -> Vec<usize> {
        let mut ids = Vec::new();
        if x[0] <= 0.0 {
            ids.push(0);
        }
        if x[0] >= 0.0 {
            ids.push(1);
        }
        ids
    }

    fn abs_map() -> PiecewiseC1Map {
        build_piecewise(
            vec![linear_piece(0, -1.0), linear_piece(1, 1.0)],
            by_sign,
            1,
            1,
            DomainBox::cube(1, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn two_linear_pieces_give_absolute_value() {
        let map = abs_map();
        for x in [-1.5, -0.3, 0.0, 0.7, 2.0] {
            assert_eq!(map.eval(&s(x)).unwrap()[0], f64::abs(x));
        }
    }

    #[test]
    fn single_piece_is_smooth() {
        let map = build_piecewise(
            vec![linear_piece(0, 1.0)],
            |_| vec![0],
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap();
        for x in [-0.9, 0.0, 0.4] {
            assert_eq!(bsub(&map, &s(x)).unwrap(), vec![m1(1.0)]);
        }
    }

    #[test]
    fn pieces_meeting_at_zero_are_accepted() {
        let map = build_piecewise(
            vec![linear_piece(0, 1.0), linear_piece(1, 2.0)],
            by_sign,
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap();
        assert_eq!(bsub(&map, &s(0.0)).unwrap(), vec![m1(1.0), m1(2.0)]);
    }

    #[test]
    fn discontinuous_pieces_are_rejected() {
        let err = build_piecewise(
            vec![
                linear_piece(0, 1.0),
                SmoothPiece::affine(1, m1(1.0), s(0.5)),
            ],
            by_sign,
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StitchingViolation { .. }), "{err:?}");
    }

    #[test]
    fn off_grid_jump_is_caught_by_bisection() {
        // Boundary at 0.123 is not a lattice point.
        let err = build_piecewise(
            vec![
                linear_piece(0, 1.0),
                SmoothPiece::affine(1, m1(1.0), s(1e-3)),
            ],
            |x: &Vector| if x[0] < 0.123 { vec![0] } else { vec![1] },
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StitchingViolation { .. }), "{err:?}");
    }

    #[test]
    fn empty_activity_is_rejected() {
        let err = build_piecewise(
            vec![linear_piece(0, 1.0)],
            |x: &Vector| if x[0] > 0.5 { vec![] } else { vec![0] },
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyActivity { .. }));
    }

    #[test]
    fn wrong_jacobian_is_rejected() {
        let err = build_piecewise(
            vec![SmoothPiece::new(
                0,
                |x: &Vector| x.map(|v| v * v),
                |_| m1(1.0),
            )],
            |_| vec![0],
            1,
            1,
            DomainBox::cube(1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::JacobianMismatch { .. }));
    }

    #[test]
    fn abs_derivative_objects() {
        let map = abs_map();
        let d = dirderiv_set(&map, &s(0.0), &s(1.0)).unwrap();
        assert_eq!(d, DerivativeValueSet::Singleton(s(1.0)));
        let d = dirderiv_set(&map, &s(0.0), &s(-2.0)).unwrap();
        assert_eq!(d, DerivativeValueSet::Singleton(s(2.0)));
        let d = dirderiv_set(&map, &s(-2.0), &s(1.0)).unwrap();
        assert_eq!(d, DerivativeValueSet::Singleton(s(-1.0)));
        assert_eq!(bsub(&map, &s(0.0)).unwrap(), vec![m1(-1.0), m1(1.0)]);
        assert_eq!(bsub(&map, &s(0.5)).unwrap(), vec![m1(1.0)]);
        let c = clarke_apply(&map, &s(0.0), &s(1.0)).unwrap();
        assert_eq!(c, DerivativeValueSet::Segment(s(-1.0), s(1.0)));
    }

    #[test]
    fn domain_exit_is_reported() {
        let map = abs_map();
        assert!(matches!(map.eval(&s(3.0)), Err(Error::DomainExit { .. })));
    }
}
