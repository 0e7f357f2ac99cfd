//! Representable subsets of `R^m` that stand for derivative values.

use serde::{Deserialize, Serialize};

use crate::map::Vector;
use crate::TOL_SET;

/// Metadata kept alongside a sampled set so its resolution can be reconstructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t0: f64,
    pub sigma: f64,
    pub depth: usize,
    pub substeps: usize,
    /// Number of grid levels whose quotients entered the set.
    pub levels_used: usize,
    /// Smallest step length `t‖z‖` that was sampled.
    pub finest_scale: f64,
    pub cluster_radius: f64,
    /// Quotients evaluated before clustering.
    pub raw_count: usize,
}

/// A subset of `R^m` holding values of `DH(x)(d)`, `∂_B H(x)d`, `∂_C H(x)d`
/// or a sampled approximation of one of them.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeValueSet {
    Singleton(Vector),
    FiniteSet(Vec<Vector>),
    /// Closed segment between two distinct endpoints.
    Segment(Vector, Vector),
    /// Convex hull of a vertex list.
    Polytope(Vec<Vector>),
    Sampled {
        points: Vec<Vector>,
        record: SampleRecord,
    },
}

/// Serializable form of a [`DerivativeValueSet`]: the variant name and its
/// defining points (endpoints, vertices or samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetView {
    pub kind: String,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<SampleRecord>,
}

impl From<&DerivativeValueSet> for SetView {
    fn from(set: &DerivativeValueSet) -> Self {
        let (kind, record) = match set {
            DerivativeValueSet::Singleton(_) => ("singleton", None),
            DerivativeValueSet::FiniteSet(_) => ("finite", None),
            DerivativeValueSet::Segment(..) => ("segment", None),
            DerivativeValueSet::Polytope(_) => ("polytope", None),
            DerivativeValueSet::Sampled { record, .. } => ("sampled", Some(record.clone())),
        };
        SetView {
            kind: kind.to_string(),
            points: set.points().iter().map(|p| p.as_slice().to_vec()).collect(),
            record,
        }
    }
}

impl DerivativeValueSet {
    pub fn singleton(v: Vector) -> Self {
        DerivativeValueSet::Singleton(v)
    }

    /// Finite set with duplicates (within `TOL_SET`) removed; collapses to a singleton.
    pub fn finite(points: Vec<Vector>) -> Self {
        let pts = dedup(points, TOL_SET);
        assert!(!pts.is_empty(), "finite set needs at least one point");
        if pts.len() == 1 {
            DerivativeValueSet::Singleton(pts.into_iter().next().unwrap())
        } else {
            DerivativeValueSet::FiniteSet(pts)
        }
    }

    pub fn segment(a: Vector, b: Vector) -> Self {
        if (&a - &b).norm() <= TOL_SET * (1.0 + a.norm().max(b.norm())) {
            DerivativeValueSet::Singleton(a)
        } else {
            DerivativeValueSet::Segment(a, b)
        }
    }

    /// Convex hull of `vertices`; one-dimensional hulls become segments.
    pub fn hull(vertices: Vec<Vector>) -> Self {
        let pts = dedup(vertices, TOL_SET);
        assert!(!pts.is_empty(), "polytope needs at least one vertex");
        match pts.len() {
            1 => DerivativeValueSet::Singleton(pts.into_iter().next().unwrap()),
            2 => {
                let mut it = pts.into_iter();
                let a = it.next().unwrap();
                let b = it.next().unwrap();
                DerivativeValueSet::segment(a, b)
            }
            _ if pts[0].len() == 1 => {
                let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                DerivativeValueSet::segment(
                    Vector::from_element(1, lo),
                    Vector::from_element(1, hi),
                )
            }
            _ => DerivativeValueSet::Polytope(pts),
        }
    }

    pub fn dim(&self) -> usize {
        self.points().first().map_or(0, |p| p.len())
    }

    /// Generating points: the point list, segment endpoints, or polytope vertices.
    pub fn points(&self) -> Vec<Vector> {
        match self {
            DerivativeValueSet::Singleton(v) => vec![v.clone()],
            DerivativeValueSet::FiniteSet(v) | DerivativeValueSet::Polytope(v) => v.clone(),
            DerivativeValueSet::Segment(a, b) => vec![a.clone(), b.clone()],
            DerivativeValueSet::Sampled { points, .. } => points.clone(),
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, DerivativeValueSet::Singleton(_))
    }

    pub fn as_singleton(&self) -> Option<&Vector> {
        match self {
            DerivativeValueSet::Singleton(v) => Some(v),
            _ => None,
        }
    }

    fn is_convex(&self) -> bool {
        matches!(
            self,
            DerivativeValueSet::Singleton(_)
                | DerivativeValueSet::Segment(..)
                | DerivativeValueSet::Polytope(_)
        )
    }

    /// Euclidean distance from `p` to the set.
    pub fn distance_to(&self, p: &Vector) -> f64 {
        match self {
            DerivativeValueSet::Singleton(a) => (p - a).norm(),
            DerivativeValueSet::FiniteSet(v) | DerivativeValueSet::Sampled { points: v, .. } => v
                .iter()
                .map(|a| (p - a).norm())
                .fold(f64::INFINITY, f64::min),
            DerivativeValueSet::Segment(a, b) => segment_distance(p, a, b),
            DerivativeValueSet::Polytope(v) => hull_distance(p, v),
        }
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        self.distance_to(p) <= tol
    }

    /// Largest distance between two points of the set.
    pub fn diameter(&self) -> f64 {
        let pts = self.points();
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max((&pts[i] - &pts[j]).norm());
            }
        }
        d
    }

    /// Lower and upper end of the convex hull of a one-dimensional set.
    pub fn interval(&self) -> Option<(f64, f64)> {
        if self.dim() != 1 {
            return None;
        }
        let pts = self.points();
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// `sup_{a ∈ self} dist(a, other)`.
    ///
    /// Exact whenever `self` is discrete or both sets are convex. A convex
    /// `self` against a discrete `other` is exact in one dimension and
    /// approximated by a dense sampling of edges otherwise.
    pub fn directed_hausdorff(&self, other: &DerivativeValueSet) -> f64 {
        if !self.is_convex() || other.is_convex() {
            return self
                .points()
                .iter()
                .map(|a| other.distance_to(a))
                .fold(0.0, f64::max);
        }
        if self.dim() == 1 {
            let (lo, hi) = self.interval().unwrap();
            let mut others: Vec<f64> = other.points().iter().map(|p| p[0]).collect();
            others.sort_by(f64::total_cmp);
            return interval_to_points(lo, hi, &others);
        }
        let verts = self.points();
        let mut worst: f64 = 0.0;
        const EDGE_SAMPLES: usize = 256;
        for i in 0..verts.len() {
            for j in i..verts.len() {
                for s in 0..=EDGE_SAMPLES {
                    let lambda = s as f64 / EDGE_SAMPLES as f64;
                    let p = &verts[i] * (1.0 - lambda) + &verts[j] * lambda;
                    worst = worst.max(other.distance_to(&p));
                }
            }
        }
        worst
    }

    pub fn hausdorff(&self, other: &DerivativeValueSet) -> f64 {
        self.directed_hausdorff(other)
            .max(other.directed_hausdorff(self))
    }

    pub fn is_subset_of(&self, other: &DerivativeValueSet, tol: f64) -> bool {
        self.directed_hausdorff(other) <= tol
    }

    /// Image of the set under multiplication by `c`.
    pub fn scaled(&self, c: f64) -> DerivativeValueSet {
        match self {
            DerivativeValueSet::Singleton(v) => DerivativeValueSet::Singleton(v * c),
            DerivativeValueSet::FiniteSet(v) => {
                DerivativeValueSet::FiniteSet(v.iter().map(|p| p * c).collect())
            }
            DerivativeValueSet::Segment(a, b) => DerivativeValueSet::segment(a * c, b * c),
            DerivativeValueSet::Polytope(v) => {
                DerivativeValueSet::Polytope(v.iter().map(|p| p * c).collect())
            }
            DerivativeValueSet::Sampled { points, record } => DerivativeValueSet::Sampled {
                points: points.iter().map(|p| p * c).collect(),
                record: record.clone(),
            },
        }
    }
}

pub(crate) fn dedup(points: Vec<Vector>, tol: f64) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::with_capacity(points.len());
    for p in points {
        let scale = 1.0 + p.norm();
        if !out.iter().any(|q| (q - &p).norm() <= tol * scale) {
            out.push(p);
        }
    }
    out
}

fn segment_distance(p: &Vector, a: &Vector, b: &Vector) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let lambda = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * lambda)).norm()
}

/// Sup over `[lo, hi]` of the distance to the sorted point list.
fn interval_to_points(lo: f64, hi: f64, sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::INFINITY;
    }
    let dist = |y: f64| {
        sorted
            .iter()
            .map(|s| (s - y).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let mut worst = dist(lo).max(dist(hi));
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid > lo && mid < hi {
            worst = worst.max(0.5 * (w[1] - w[0]));
        }
    }
    worst
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Distance from `p` to the convex hull of `vertices` (accelerated projected
/// gradient on the simplex weights).
pub(crate) fn hull_distance(p: &Vector, vertices: &[Vector]) -> f64 {
    match vertices.len() {
        0 => return f64::INFINITY,
        1 => return (p - &vertices[0]).norm(),
        2 => return segment_distance(p, &vertices[0], &vertices[1]),
        _ => {}
    }
    if p.len() == 1 {
        let lo = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        let hi = vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        return (lo - p[0]).max(p[0] - hi).max(0.0);
    }
    let k = vertices.len();
    let lipschitz: f64 = vertices
        .iter()
        .map(|v| v.norm_squared())
        .sum::<f64>()
        .max(1e-300);
    let combo = |w: &[f64]| {
        let mut acc = Vector::zeros(p.len());
        for (wi, v) in w.iter().zip(vertices) {
            acc += v * *wi;
        }
        acc
    };
    let mut w = vec![1.0 / k as f64; k];
    let mut y = w.clone();
    let mut t = 1.0_f64;
    let mut best = (combo(&w) - p).norm();
    for _ in 0..20_000 {
        let r = combo(&y) - p;
        let mut next: Vec<f64> = y
            .iter()
            .zip(vertices)
            .map(|(yi, v)| yi - v.dot(&r) / lipschitz)
            .collect();
        project_simplex(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = next
            .iter()
            .zip(&w)
            .map(|(n, o)| n + beta * (n - o))
            .collect();
        let moved: f64 = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        w = next;
        t = t_next;
        let d = (combo(&w) - p).norm();
        best = best.min(d);
        if moved < 1e-15 {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn constructors_collapse_degenerate_sets() {
        assert!(DerivativeValueSet::segment(v(&[1.0]), v(&[1.0])).is_singleton());
        assert!(DerivativeValueSet::finite(vec![v(&[2.0]), v(&[2.0])]).is_singleton());
        let h = DerivativeValueSet::hull(vec![v(&[-1.0]), v(&[0.5]), v(&[1.0])]);
        assert_eq!(h.interval(), Some((-1.0, 1.0)));
        assert!(matches!(h, DerivativeValueSet::Segment(..)));
    }

    #[test]
    fn polytope_distance_matches_geometry() {
        let square = DerivativeValueSet::hull(vec![
            v(&[0.0, 0.0]),
            v(&[1.0, 0.0]),
            v(&[1.0, 1.0]),
            v(&[0.0, 1.0]),
        ]);
        assert!(square.distance_to(&v(&[0.5, 0.5])) < 1e-9);
        assert!((square.distance_to(&v(&[2.0, 0.5])) - 1.0).abs() < 1e-9);
        assert!((square.distance_to(&v(&[2.0, 2.0])) - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn interval_hausdorff_against_samples() {
        let seg = DerivativeValueSet::segment(v(&[0.0]), v(&[1.0]));
        let pts: Vec<Vector> = (0..=10).map(|i| v(&[i as f64 / 10.0])).collect();
        let cloud = DerivativeValueSet::finite(pts);
        assert!((seg.directed_hausdorff(&cloud) - 0.05).abs() < 1e-12);
        assert!(cloud.directed_hausdorff(&seg) < 1e-15);
        assert!(cloud.is_subset_of(&seg, 1e-12));
    }

    #[test]
    fn simplex_projection_stays_on_simplex() {
        let mut w = vec![0.7, -0.2, 1.5];
        project_simplex(&mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| *x >= 0.0));
    }
}
