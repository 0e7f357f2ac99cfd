//! Brute-force approximations of the limit-based derivative objects.
//!
//! Everything here works from function values alone, so it serves as an
//! oracle that is independent of the analytic hooks in [`crate::map`].
//! Limits `t ↓ 0` are discretized by geometric grids; levels whose step
//! `t‖z‖` falls below `sqrt(eps)·max(1, ‖x‖)` are dropped because rounding
//! dominates the difference quotient there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{bsub, check_point, dirderiv_set, NonsmoothMap, Vector};
use crate::set::{DerivativeValueSet, SampleRecord};

/// Quotients larger than this declare blow-up.
pub const OVERFLOW_GUARD: f64 = 1e8;
/// Relative radius used to merge sampled quotients into cluster points.
pub const TOL_CLUSTER: f64 = 1e-4;
/// Tolerance for comparisons that involve sampled sets.
pub const TOL_HAUSDORFF: f64 = 1e-3;
/// Ratio `‖H(x̄+z) − H(x̄) − Az‖/‖z‖` below which the semismoothness test passes.
pub const TOL_SEMI: f64 = 1e-6;
/// `‖H(x̄)‖` allowed for a point used as a root.
pub const TOL_ROOT: f64 = 1e-10;
// Envelope growth exponent that counts as blow-up of `|q(t)| ~ t^{-a}`.
const GROWTH_EXPONENT: f64 = 0.25;

/// Geometric discretization of `t ↓ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitGrid {
    pub t0: f64,
    pub sigma: f64,
    pub depth: usize,
    /// Number of finest usable levels whose quotients form the sampled set.
    pub tail_levels: usize,
    /// Intermediate steps inserted between consecutive levels.
    pub substeps: usize,
    /// Base-point offsets per direction in the Thibault sampling.
    pub ball_samples: usize,
}

impl Default for LimitGrid {
    fn default() -> Self {
        LimitGrid {
            t0: 1e-2,
            sigma: 0.5,
            depth: 30,
            tail_levels: 4,
            substeps: 1,
            ball_samples: 64,
        }
    }
}

impl LimitGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "sigma {} not in (0,1)",
                self.sigma
            )));
        }
        if self.depth < 8 {
            return Err(Error::InvalidGrid(format!("depth {} < 8", self.depth)));
        }
        if !(self.t0 > 0.0) || self.t0 * self.sigma.powi(self.depth as i32) < 1e-13 {
            return Err(Error::InvalidGrid(
                "t0·sigma^depth must stay above 1e-13".into(),
            ));
        }
        if self.tail_levels == 0 || self.substeps == 0 {
            return Err(Error::InvalidGrid(
                "tail_levels and substeps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// All steps `t0·σ^(j/substeps)`, decreasing.
    pub fn steps(&self) -> Vec<f64> {
        let total = self.depth * self.substeps;
        (0..=total)
            .map(|j| self.t0 * self.sigma.powf(j as f64 / self.substeps as f64))
            .collect()
    }

    /// Steps whose displacement `t‖z‖` stays above the rounding floor at `x`.
    pub fn usable_steps(&self, x: &Vector, z_norm: f64) -> Vec<f64> {
        let floor = f64::EPSILON.sqrt() * x.amax().max(1.0);
        self.steps()
            .into_iter()
            .filter(|t| t * z_norm >= floor)
            .collect()
    }

    fn tail(&self, x: &Vector, z_norm: f64) -> Result<Vec<f64>> {
        let steps = self.usable_steps(x, z_norm);
        if steps.is_empty() {
            return Err(Error::InvalidGrid(
                "no grid level above the rounding floor".into(),
            ));
        }
        let keep = (self.tail_levels * self.substeps).min(steps.len());
        Ok(steps[steps.len() - keep..].to_vec())
    }

    fn record(
        &self,
        levels_used: usize,
        finest_scale: f64,
        radius: f64,
        raw: usize,
    ) -> SampleRecord {
        SampleRecord {
            t0: self.t0,
            sigma: self.sigma,
            depth: self.depth,
            substeps: self.substeps,
            levels_used,
            finest_scale,
            cluster_radius: radius,
            raw_count: raw,
        }
    }
}

/// `(scale, residual)` pairs along an approach path with a log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCurve {
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

impl ResidualCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        let slope = loglog_slope(&points);
        ResidualCurve { points, slope }
    }

    /// `residual / scale` for every point.
    pub fn ratios(&self) -> Vec<f64> {
        self.points.iter().map(|(s, r)| r / s).collect()
    }
}

/// Least-squares slope of `log r` against `log s` over points with `r > 0`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(s, r)| *s > 0.0 && *r > 0.0)
        .map(|(s, r)| (s.ln(), r.ln()))
        .collect();
    least_squares_slope(&logs)
}

pub(crate) fn least_squares_slope(xy: &[(f64, f64)]) -> Option<f64> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Probe directions: `±1` in one dimension, `±e_i` and `±(1,…,1)/√n` otherwise.
pub fn probe_directions(n: usize) -> Vec<Vector> {
    let mut dirs = Vec::with_capacity(2 * n + 2);
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    if n > 1 {
        let diag = Vector::from_element(n, 1.0 / (n as f64).sqrt());
        dirs.push(diag.clone());
        dirs.push(-diag);
    }
    dirs
}

/// Greedy clustering; each cluster is represented by its centroid.
pub fn cluster(points: &[Vector], radius: f64) -> Vec<Vector> {
    let mut sums: Vec<(Vector, usize)> = Vec::new();
    for p in points {
        match sums
            .iter_mut()
            .find(|(s, c)| (&(s.clone() / *c as f64) - p).norm() <= radius)
        {
            Some((s, c)) => {
                *s += p;
                *c += 1;
            }
            None => sums.push((p.clone(), 1)),
        }
    }
    sums.into_iter().map(|(s, c)| s / c as f64).collect()
}

fn quotient(
    map: &dyn NonsmoothMap,
    base: &Vector,
    h_base: &Vector,
    t: f64,
    h: &Vector,
) -> Result<Vector> {
    let probe = base + h * t;
    if !map.domain().contains(&probe) {
        return Err(Error::DomainExit {
            point: probe.as_slice().to_vec(),
        });
    }
    Ok((map.eval(&probe)? - h_base) / t)
}

fn guard(q: &Vector, direction: &Vector, t: f64) -> Result<()> {
    let norm = q.norm();
    if !norm.is_finite() || norm > OVERFLOW_GUARD {
        return Err(Error::Unbounded {
            direction: direction.as_slice().to_vec(),
            scale: t,
            quotient: norm,
        });
    }
    Ok(())
}

fn sampled_set(
    grid: &LimitGrid,
    raw: Vec<Vector>,
    levels: usize,
    finest: f64,
) -> DerivativeValueSet {
    let scale = raw.iter().map(|q| q.norm()).fold(1.0, f64::max);
    let radius = TOL_CLUSTER * scale;
    let points = cluster(&raw, radius);
    DerivativeValueSet::Sampled {
        record: grid.record(levels, finest, radius, raw.len()),
        points,
    }
}

fn zero_set(map: &dyn NonsmoothMap) -> DerivativeValueSet {
    DerivativeValueSet::singleton(Vector::zeros(map.output_dim()))
}

/// Cluster points of the radial quotients `(H(x+tz) − H(x))/t`.
pub fn sample_restrictive_derivative(
    map: &dyn NonsmoothMap,
    x: &Vector,
    z: &Vector,
    grid: &LimitGrid,
) -> Result<DerivativeValueSet> {
    grid.validate()?;
    check_point(map, x)?;
    let zn = z.norm();
    if zn == 0.0 {
        return Ok(zero_set(map));
    }
    let hx = map.eval(x)?;
    let steps = grid.usable_steps(x, zn);
    let tail = grid.tail(x, zn)?;
    for &t in steps.iter().take(steps.len() - tail.len()) {
        let q = quotient(map, x, &hx, t, z)?;
        guard(&q, z, t)?;
    }
    let mut raw = Vec::with_capacity(tail.len());
    for &t in &tail {
        let q = quotient(map, x, &hx, t, z)?;
        guard(&q, z, t)?;
        raw.push(q);
    }
    let finest = tail.last().unwrap() * zn;
    Ok(sampled_set(grid, raw, tail.len(), finest))
}

/// Cluster points of `(H(x+th) − H(x))/t` with `h` on spheres of radius
/// `t‖z‖` around `z` (the unperturbed `h = z` included).
pub fn sample_graphical_derivative(
    map: &dyn NonsmoothMap,
    x: &Vector,
    z: &Vector,
    grid: &LimitGrid,
) -> Result<DerivativeValueSet> {
    grid.validate()?;
    check_point(map, x)?;
    let zn = z.norm();
    if zn == 0.0 {
        return Ok(zero_set(map));
    }
    let hx = map.eval(x)?;
    let tail = grid.tail(x, zn)?;
    let mut perturbations = vec![Vector::zeros(z.len())];
    perturbations.extend(probe_directions(z.len()));
    let mut raw = Vec::with_capacity(tail.len() * perturbations.len());
    for &t in &tail {
        for w in &perturbations {
            let h = z + w * (t * zn);
            let q = quotient(map, x, &hx, t, &h)?;
            guard(&q, z, t)?;
            raw.push(q);
        }
    }
    let finest = tail.last().unwrap() * zn;
    Ok(sampled_set(grid, raw, tail.len(), finest))
}

/// Cluster points of `(H(u+tz) − H(u))/t` over base points `u` within
/// `2t‖z‖` of `x` and `t` on the grid tail.
pub fn sample_thibault(
    map: &dyn NonsmoothMap,
    x: &Vector,
    z: &Vector,
    grid: &LimitGrid,
) -> Result<DerivativeValueSet> {
    grid.validate()?;
    check_point(map, x)?;
    let zn = z.norm();
    if zn == 0.0 {
        return Ok(zero_set(map));
    }
    let tail = grid.tail(x, zn)?;
    let dirs = probe_directions(x.len());
    let m = grid.ball_samples.max(1);
    let mut raw = Vec::new();
    for &t in &tail {
        for k in 0..=m {
            let rho = 2.0 * k as f64 / m as f64;
            for w in &dirs {
                let u = x + w * (t * zn * rho);
                if !map.domain().contains(&u) {
                    continue;
                }
                let hu = map.eval(&u)?;
                let q = quotient(map, &u, &hu, t, z)?;
                guard(&q, z, t)?;
                raw.push(q);
                if k == 0 {
                    break;
                }
            }
        }
    }
    let finest = tail.last().unwrap() * zn;
    Ok(sampled_set(grid, raw, tail.len(), finest))
}

/// Jacobian-vector products `J(u) z` at points `u` next to `x`, estimated
/// by central differences; approximates the image `∂_B H(x) z`.
pub fn sample_bsub_image(
    map: &dyn NonsmoothMap,
    x: &Vector,
    z: &Vector,
    grid: &LimitGrid,
) -> Result<DerivativeValueSet> {
    grid.validate()?;
    check_point(map, x)?;
    let zn = z.norm();
    if zn == 0.0 {
        return Ok(zero_set(map));
    }
    let zhat = z / zn;
    let scale = x.amax().max(1.0);
    let mut raw = Vec::new();
    for offset in [1e-7, 3e-8] {
        let delta = offset * scale;
        let h = 1e-2 * delta;
        for w in probe_directions(x.len()) {
            let u = x + w * delta;
            let (up, um) = (&u + &zhat * h, &u - &zhat * h);
            if !(map.domain().contains(&up) && map.domain().contains(&um)) {
                continue;
            }
            let jz = (map.eval(&up)? - map.eval(&um)?) * (zn / (2.0 * h));
            guard(&jz, z, h)?;
            raw.push(jz);
        }
    }
    if raw.is_empty() {
        return Err(Error::DomainExit {
            point: x.as_slice().to_vec(),
        });
    }
    Ok(sampled_set(grid, raw, 2, 3e-10 * scale))
}

/// Quotient norms `‖(H(x+tz) − H(x))/t‖` over all usable levels.
fn radial_profile(
    map: &dyn NonsmoothMap,
    x: &Vector,
    z: &Vector,
    grid: &LimitGrid,
) -> Result<Vec<(f64, Vector)>> {
    let hx = map.eval(x)?;
    grid.usable_steps(x, z.norm())
        .into_iter()
        .map(|t| quotient(map, x, &hx, t, z).map(|q| (t, q)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundednessVerdict {
    Bounded {
        max_quotient: f64,
    },
    Unbounded {
        direction: Vec<f64>,
        scale: f64,
        quotient: f64,
    },
}

impl BoundednessVerdict {
    pub fn is_bounded(&self) -> bool {
        matches!(self, BoundednessVerdict::Bounded { .. })
    }
}

/// Checks `limsup_{t↓0} ‖(H(x+tz) − H(x))/t‖ < ∞` along each direction.
///
/// Blow-up is declared when a quotient exceeds [`OVERFLOW_GUARD`] or when
/// the running maximum of the quotient norms over the finer half of the grid
/// grows at least like `t^{-1/4}`.
pub fn check_directional_boundedness(
    map: &dyn NonsmoothMap,
    x: &Vector,
    directions: &[Vector],
    grid: &LimitGrid,
) -> Result<BoundednessVerdict> {
    grid.validate()?;
    check_point(map, x)?;
    let mut max_quotient: f64 = 0.0;
    for z in directions {
        if z.norm() == 0.0 {
            continue;
        }
        let profile = radial_profile(map, x, z, grid)?;
        if profile.len() < 4 {
            return Err(Error::InvalidGrid("too few usable levels".into()));
        }
        let mut envelope = Vec::with_capacity(profile.len());
        let mut running: f64 = 0.0;
        for (t, q) in &profile {
            let norm = q.norm();
            if !norm.is_finite() || norm > OVERFLOW_GUARD {
                return Ok(BoundednessVerdict::Unbounded {
                    direction: z.as_slice().to_vec(),
                    scale: *t,
                    quotient: norm,
                });
            }
            running = running.max(norm);
            envelope.push((*t, running));
        }
        let mid = envelope.len() / 2;
        let (t_mid, m_mid) = envelope[mid];
        let (t_last, m_last) = *envelope.last().unwrap();
        if m_mid > 0.0 && m_last > m_mid {
            let exponent = (m_last / m_mid).ln() / (t_mid / t_last).ln();
            if exponent >= GROWTH_EXPONENT {
                return Ok(BoundednessVerdict::Unbounded {
                    direction: z.as_slice().to_vec(),
                    scale: t_last,
                    quotient: m_last,
                });
            }
        }
        max_quotient = max_quotient.max(running);
    }
    Ok(BoundednessVerdict::Bounded { max_quotient })
}

/// Outcome of comparing the spread of radial quotients on the coarse and
/// fine halves of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalProbe {
    pub differentiable: bool,
    pub worst_direction: Vec<f64>,
    pub coarse_diameter: f64,
    pub fine_diameter: f64,
}

fn diameter(points: &[Vector]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max((&points[i] - &points[j]).norm());
        }
    }
    d
}

/// Flags directions along which the radial quotients keep oscillating: the
/// fine-half diameter exceeds `1e-6·(1 + max‖q‖)` and is at least a tenth of
/// the coarse-half diameter.
pub fn probe_directional_differentiability(
    map: &dyn NonsmoothMap,
    x: &Vector,
    directions: &[Vector],
    grid: &LimitGrid,
) -> Result<DirectionalProbe> {
    grid.validate()?;
    check_point(map, x)?;
    let mut worst: Option<DirectionalProbe> = None;
    for z in directions {
        if z.norm() == 0.0 {
            continue;
        }
        let profile = radial_profile(map, x, z, grid)?;
        let qs: Vec<Vector> = profile.into_iter().map(|(_, q)| q).collect();
        if qs.len() < 4 {
            return Err(Error::InvalidGrid("too few usable levels".into()));
        }
        let mid = qs.len() / 2;
        let coarse = diameter(&qs[..mid]);
        let fine = diameter(&qs[mid..]);
        let scale = qs.iter().map(|q| q.norm()).fold(0.0, f64::max);
        let oscillating = fine > 1e-6 * (1.0 + scale) && fine >= 0.1 * coarse;
        let probe = DirectionalProbe {
            differentiable: !oscillating,
            worst_direction: z.as_slice().to_vec(),
            coarse_diameter: coarse,
            fine_diameter: fine,
        };
        let replace = match &worst {
            None => true,
            Some(w) => {
                (w.differentiable && !probe.differentiable)
                    || (w.differentiable == probe.differentiable
                        && probe.fine_diameter > w.fine_diameter)
            }
        };
        if replace {
            worst = Some(probe);
        }
    }
    worst.ok_or_else(|| Error::InvalidGrid("no nonzero direction supplied".into()))
}

/// Residuals `min_{v ∈ DH(x)(x̄−x)} ‖H(x) − H(x̄) + v‖` along `path → x̄`.
pub fn h2_residual_curve(
    map: &dyn NonsmoothMap,
    xbar: &Vector,
    path: &[Vector],
) -> Result<ResidualCurve> {
    let hbar = map.eval(xbar)?;
    if hbar.norm() > TOL_ROOT {
        return Err(Error::InvalidPath(format!(
            "‖H(x̄)‖ = {:e} exceeds the root tolerance",
            hbar.norm()
        )));
    }
    let mut points = Vec::with_capacity(path.len());
    let mut last_scale = f64::INFINITY;
    for x in path {
        let scale = (x - xbar).norm();
        if !(scale < last_scale) || scale == 0.0 {
            return Err(Error::InvalidPath(
                "distances to x̄ must be positive and strictly decreasing".into(),
            ));
        }
        last_scale = scale;
        let hx = map.eval(x)?;
        let values = dirderiv_set(map, x, &(xbar - x))?;
        let residual = values.distance_to(&(&hbar - &hx));
        points.push((scale, residual));
    }
    Ok(ResidualCurve::new(points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SemismoothVerdict {
    Semismooth,
    NotSemismooth {
        scale: f64,
        ratio: f64,
    },
    NotDirectionallyDifferentiable {
        direction: Vec<f64>,
        fine_diameter: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemismoothnessReport {
    pub verdict: SemismoothVerdict,
    pub directionally_differentiable: bool,
    /// `(‖z‖, max_A ‖H(x̄+z) − H(x̄) − Az‖)` along the grid.
    pub curve: ResidualCurve,
}

/// Tests `‖H(x̄+z) − H(x̄) − Az‖ = o(‖z‖)` for `A ∈ ∂_B H(x̄+z)` along the
/// probe directions, together with directional differentiability at `x̄`.
pub fn semismoothness_test(
    map: &dyn NonsmoothMap,
    xbar: &Vector,
    grid: &LimitGrid,
) -> Result<SemismoothnessReport> {
    if !map.capabilities().lipschitz {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity (semismoothness)",
        ));
    }
    grid.validate()?;
    check_point(map, xbar)?;
    let dirs = probe_directions(xbar.len());
    let probe = probe_directional_differentiability(map, xbar, &dirs, grid)?;
    let hbar = map.eval(xbar)?;
    let steps = grid.usable_steps(xbar, 1.0);
    let mut points = Vec::with_capacity(steps.len());
    for &t in &steps {
        let mut worst: f64 = 0.0;
        for w in &dirs {
            let z = w * t;
            let x = xbar + &z;
            if !map.domain().contains(&x) {
                continue;
            }
            let hx = map.eval(&x)?;
            for a in bsub(map, &x)? {
                worst = worst.max((&hx - &hbar - a * &z).norm());
            }
        }
        points.push((t, worst));
    }
    let curve = ResidualCurve::new(points);
    let verdict = if !probe.differentiable {
        SemismoothVerdict::NotDirectionallyDifferentiable {
            direction: probe.worst_direction.clone(),
            fine_diameter: probe.fine_diameter,
        }
    } else {
        match curve.points.last() {
            Some(&(s, r)) if r / s >= TOL_SEMI => SemismoothVerdict::NotSemismooth {
                scale: s,
                ratio: r / s,
            },
            _ => SemismoothVerdict::Semismooth,
        }
    };
    Ok(SemismoothnessReport {
        verdict,
        directionally_differentiable: probe.differentiable,
        curve,
    })
}

/// Axis-aligned cube `center ± radius` (intersected with the domain box).
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub center: Vector,
    pub radius: f64,
}

/// Sampling densities for the metric-regularity estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusGrid {
    pub x_samples_1d: usize,
    pub y_samples_1d: usize,
    pub preimage_points_1d: usize,
    pub x_samples_2d: usize,
    pub y_samples_2d: usize,
    pub preimage_points_2d: usize,
}

impl Default for ModulusGrid {
    fn default() -> Self {
        ModulusGrid {
            x_samples_1d: 41,
            y_samples_1d: 41,
            preimage_points_1d: 10_001,
            x_samples_2d: 9,
            y_samples_2d: 9,
            preimage_points_2d: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModulusEstimate {
    Finite {
        mu: f64,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    /// Some sampled `y` near `H(center)` has no preimage in the region.
    Infinite {
        y: Vec<f64>,
    },
    Unsupported {
        reason: String,
    },
}

impl ModulusEstimate {
    pub fn mu(&self) -> f64 {
        match self {
            ModulusEstimate::Finite { mu, .. } => *mu,
            _ => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ModulusEstimate::Infinite { .. })
    }
}

/// Empirical `μ̂ = max dist(x, H⁻¹(y)) / dist(y, H(x))` over `x` in the
/// inner half of the region and `y` near `H(center)`; preimages are found
/// by dense grid search in the region.
pub fn estimate_metric_regularity_modulus(
    map: &dyn NonsmoothMap,
    region: &Region,
    grid: &ModulusGrid,
) -> Result<ModulusEstimate> {
    let n = map.input_dim();
    if n != map.output_dim() {
        return Ok(ModulusEstimate::Unsupported {
            reason: "map is not square".into(),
        });
    }
    if n > 2 {
        return Ok(ModulusEstimate::Unsupported {
            reason: format!("preimage search is limited to n ≤ 2 (n = {n})"),
        });
    }
    check_point(map, &region.center)?;
    let outer = map.domain().clip_around(&region.center, region.radius);
    let inner = map
        .domain()
        .clip_around(&region.center, 0.5 * region.radius);
    let hc = map.eval(&region.center)?;

    let (xs, ys_per_dim, pre_per_dim) = if n == 1 {
        (
            inner.lattice(grid.x_samples_1d),
            grid.y_samples_1d,
            grid.preimage_points_1d,
        )
    } else {
        (
            inner.lattice(grid.x_samples_2d),
            grid.y_samples_2d,
            grid.preimage_points_2d,
        )
    };

    // Radius of the y-neighborhood: half the smallest change of H between
    // the center and the region boundary.
    let boundary = boundary_points(&outer, if n == 1 { 2 } else { 41 });
    let mut reach = f64::INFINITY;
    for b in &boundary {
        reach = reach.min((map.eval(b)? - &hc).norm());
    }
    let y_radius = 0.5 * reach;
    if !(y_radius > 0.0) {
        return Ok(ModulusEstimate::Infinite {
            y: hc.as_slice().to_vec(),
        });
    }
    let y_box = cube_around(&hc, y_radius);
    let ys = y_box.lattice(ys_per_dim);

    let pre_grid = outer.lattice(pre_per_dim);
    let pre_values: Vec<Vector> = pre_grid
        .iter()
        .map(|u| map.eval(u))
        .collect::<Result<_>>()?;
    let hxs: Vec<Vector> = xs.iter().map(|x| map.eval(x)).collect::<Result<_>>()?;

    let mut best: Option<(f64, Vector, Vector)> = None;
    for y in &ys {
        let roots = if n == 1 {
            preimages_1d(map, &pre_grid, &pre_values, y)?
        } else {
            preimages_2d(map, &outer, pre_per_dim, &pre_grid, &pre_values, y)?
        };
        if roots.is_empty() {
            return Ok(ModulusEstimate::Infinite {
                y: y.as_slice().to_vec(),
            });
        }
        for (x, hx) in xs.iter().zip(&hxs) {
            let denom = (y - hx).norm();
            if denom < 1e-12 {
                continue;
            }
            let num = roots
                .iter()
                .map(|r| (x - r).norm())
                .fold(f64::INFINITY, f64::min);
            let ratio = num / denom;
            if best.as_ref().is_none_or(|b| ratio > b.0) {
                best = Some((ratio, x.clone(), y.clone()));
            }
        }
    }
    Ok(match best {
        Some((mu, x, y)) => ModulusEstimate::Finite {
            mu,
            x: x.as_slice().to_vec(),
            y: y.as_slice().to_vec(),
        },
        None => ModulusEstimate::Finite {
            mu: 0.0,
            x: region.center.as_slice().to_vec(),
            y: hc.as_slice().to_vec(),
        },
    })
}

fn cube_around(center: &Vector, radius: f64) -> crate::map::DomainBox {
    crate::map::DomainBox::new(center.add_scalar(-radius), center.add_scalar(radius))
        .expect("positive radius")
}

fn boundary_points(b: &crate::map::DomainBox, per_edge: usize) -> Vec<Vector> {
    b.lattice(per_edge)
        .into_iter()
        .filter(|p| {
            p.iter()
                .zip(b.lower().iter().zip(b.upper().iter()))
                .any(|(v, (l, u))| v == l || v == u)
        })
        .collect()
}

fn preimages_1d(
    map: &dyn NonsmoothMap,
    grid: &[Vector],
    values: &[Vector],
    y: &Vector,
) -> Result<Vec<Vector>> {
    let tol = 1e-12 * (1.0 + y.norm());
    let g: Vec<f64> = values.iter().map(|v| v[0] - y[0]).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if g[i].abs() <= tol {
            roots.push(grid[i].clone());
        }
        if i + 1 < grid.len() && g[i] * g[i + 1] < 0.0 && g[i].abs() > tol && g[i + 1].abs() > tol {
            let (mut a, mut b) = (grid[i][0], grid[i + 1][0]);
            let mut ga = g[i];
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let gm = map.eval(&Vector::from_element(1, mid))?[0] - y[0];
                if gm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (gm < 0.0) == (ga < 0.0) {
                    a = mid;
                    ga = gm;
                } else {
                    b = mid;
                }
            }
            roots.push(Vector::from_element(1, 0.5 * (a + b)));
        }
    }
    Ok(roots)
}

fn preimages_2d(
    map: &dyn NonsmoothMap,
    region: &crate::map::DomainBox,
    per_dim: usize,
    grid: &[Vector],
    values: &[Vector],
    y: &Vector,
) -> Result<Vec<Vector>> {
    let res: Vec<f64> = values.iter().map(|v| (v - y).norm()).collect();
    let spacing = (region.upper() - region.lower()).amax() / (per_dim - 1) as f64;
    let mut roots: Vec<Vector> = Vec::new();
    for j in 0..per_dim {
        for i in 0..per_dim {
            let idx = j * per_dim + i;
            let mut is_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0)
                        || ii < 0
                        || jj < 0
                        || ii >= per_dim as i64
                        || jj >= per_dim as i64
                    {
                        continue;
                    }
                    if res[jj as usize * per_dim + ii as usize] < res[idx] {
                        is_min = false;
                    }
                }
            }
            if !is_min {
                continue;
            }
            let (u, r) = compass_search(map, region, &grid[idx], y, spacing)?;
            if r <= 1e-9 * (1.0 + y.norm()) && !roots.iter().any(|q| (q - &u).norm() < spacing) {
                roots.push(u);
            }
        }
    }
    Ok(roots)
}

/// Derivative-free minimization of `‖H(u) − y‖` inside `region`.
fn compass_search(
    map: &dyn NonsmoothMap,
    region: &crate::map::DomainBox,
    start: &Vector,
    y: &Vector,
    step0: f64,
) -> Result<(Vector, f64)> {
    let mut u = start.clone();
    let mut r = (map.eval(&u)? - y).norm();
    let mut step = step0;
    let dirs = probe_directions(u.len());
    while step > 1e-15 && r > 0.0 {
        let mut improved = false;
        for w in &dirs {
            let cand = &u + w * step;
            if !region.contains(&cand) {
                continue;
            }
            let rc = (map.eval(&cand)? - y).norm();
            if rc < r {
                u = cand;
                r = rc;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((u, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Capabilities, DomainBox};
    use crate::problems::problem;

    fn s(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    /// `sign(x)·sqrt|x|`, unbounded quotients at the origin.
    #[derive(Debug)]
    struct SignedRoot(DomainBox);

    impl NonsmoothMap for SignedRoot {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn domain(&self) -> &DomainBox {
            &self.0
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                lipschitz: false,
                directionally_differentiable: false,
                piecewise_c1: false,
                has_analytic_dirderiv: false,
            }
        }
        fn eval(&self, x: &Vector) -> Result<Vector> {
            Ok(s(x[0].signum() * x[0].abs().sqrt()))
        }
    }

    #[test]
    fn grid_validation() {
        let bad = [
            LimitGrid {
                sigma: 1.0,
                ..LimitGrid::default()
            },
            LimitGrid {
                depth: 4,
                ..LimitGrid::default()
            },
            LimitGrid {
                t0: 1e-12,
                ..LimitGrid::default()
            },
            LimitGrid {
                tail_levels: 0,
                ..LimitGrid::default()
            },
        ];
        for g in bad {
            assert!(matches!(g.validate(), Err(Error::InvalidGrid(_))), "{g:?}");
        }
        assert!(LimitGrid::default().validate().is_ok());
        let steps = LimitGrid::default().steps();
        assert!(steps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn slopes_and_clusters() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 3.0 * k as f64 + 1.0)).collect();
        assert!((least_squares_slope(&pts).unwrap() - 3.0).abs() < 1e-12);
        let c = cluster(&[s(0.0), s(1e-6), s(1.0)], 1e-4);
        assert_eq!(c.len(), 2);
        assert_eq!(probe_directions(1).len(), 2);
        assert_eq!(probe_directions(3).len(), 8);
    }

    #[test]
    fn abs_samplers_at_the_kink() {
        let p = problem("abs1d").unwrap();
        let g = LimitGrid::default();
        let zero = s(0.0);
        let r = sample_restrictive_derivative(p.map.as_ref(), &zero, &s(-2.0), &g).unwrap();
        assert_eq!(r.points(), vec![s(2.0)]);
        let gr = sample_graphical_derivative(p.map.as_ref(), &zero, &s(1.0), &g).unwrap();
        assert!(gr.points().iter().all(|q| (q[0] - 1.0).abs() < 1e-6));
        // base points on both sides of the kink fill [-1, 1]
        let t = sample_thibault(p.map.as_ref(), &zero, &s(1.0), &g).unwrap();
        let (lo, hi) = t.interval().unwrap();
        assert!(lo < -0.99 && hi > 0.99, "{lo} {hi}");
        let b = sample_bsub_image(p.map.as_ref(), &zero, &s(1.0), &g).unwrap();
        assert!(b.points().iter().all(|q| (q[0].abs() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn staircase_at_a_dyadic_point() {
        let p = problem("staircase").unwrap();
        let g = LimitGrid::default();
        let x = s(0.25);
        let r = sample_restrictive_derivative(p.map.as_ref(), &x, &s(1.0), &g).unwrap();
        for q in r.points() {
            assert!((0.75 - 1e-6..=1.0 + 1e-6).contains(&q[0]), "{q}");
        }
        let probe = probe_directional_differentiability(p.map.as_ref(), &x, &[s(1.0)], &g).unwrap();
        assert!(!probe.differentiable);
    }

    #[test]
    fn boundedness() {
        let g = LimitGrid::default();
        let dirs = [s(1.0), s(-1.0)];
        let xs = problem("xsin1x").unwrap();
        let v = check_directional_boundedness(xs.map.as_ref(), &s(0.0), &dirs, &g).unwrap();
        assert!(v.is_bounded());
        let root = SignedRoot(DomainBox::cube(1, 1.0));
        let v = check_directional_boundedness(&root, &s(0.0), &dirs, &g).unwrap();
        assert!(matches!(v, BoundednessVerdict::Unbounded { .. }), "{v:?}");
    }

    #[test]
    fn residual_curve_rejects_bad_paths() {
        let p = problem("abs1d").unwrap();
        let err = h2_residual_curve(p.map.as_ref(), &s(0.5), &[s(0.1), s(0.01)]);
        assert!(matches!(err, Err(Error::InvalidPath(_))));
        let err = h2_residual_curve(p.map.as_ref(), &s(0.0), &[s(0.01), s(0.1)]);
        assert!(matches!(err, Err(Error::InvalidPath(_))));
        // |x| is exact along a one-sided path
        let c = h2_residual_curve(p.map.as_ref(), &s(0.0), &[s(0.1), s(0.01), s(0.001)]).unwrap();
        assert!(c.points.iter().all(|(_, r)| *r == 0.0));
    }

    #[test]
    fn semismooth_verdicts() {
        let g = LimitGrid::default();
        let abs = problem("abs1d").unwrap();
        let rep = semismoothness_test(abs.map.as_ref(), &s(0.0), &g).unwrap();
        assert_eq!(rep.verdict, SemismoothVerdict::Semismooth);
        let st = problem("staircase").unwrap();
        let rep = semismoothness_test(st.map.as_ref(), &s(0.5), &g).unwrap();
        assert!(matches!(
            rep.verdict,
            SemismoothVerdict::NotDirectionallyDifferentiable { .. }
        ));
    }

    #[test]
    fn modulus_estimates() {
        let region = Region {
            center: s(0.0),
            radius: 1.0,
        };
        let grid = ModulusGrid::default();
        let mu = |id: &str| {
            estimate_metric_regularity_modulus(problem(id).unwrap().map.as_ref(), &region, &grid)
                .unwrap()
        };
        assert!((mu("linear2x").mu() - 0.5).abs() < 1e-6);
        assert!((mu("absaff1d").mu() - 2.0).abs() < 0.05);
        assert!(mu("abs1d").is_infinite());
        let plane = Region {
            center: Vector::zeros(2),
            radius: 1.0,
        };
        let ncp = problem("ncp_min_2d").unwrap();
        let est = estimate_metric_regularity_modulus(
            ncp.map.as_ref(),
            &Region {
                center: Vector::from_vec(vec![1.0, 0.0]),
                ..plane
            },
            &grid,
        )
        .unwrap();
        assert!(est.mu().is_finite(), "{est:?}");
    }
}
