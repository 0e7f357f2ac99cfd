//! Pointwise tests related to metric regularity of `H` around a point.
//!
//! Nonsingularity of every B-subdifferential element is necessary; either
//! nonsingularity of the whole Clarke hull or `0 ∉ D_T H(x)(z)` for `z ≠ 0`
//! is sufficient. For `n ≥ 2` the hull and Thibault tests are sampling
//! certificates, not proofs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{bsub_elements, check_point, Generator, Matrix, NonsmoothMap, Vector};
use crate::problems::{scalarized_coderivative_1d, SEED};
use crate::sampling::{probe_directions, sample_thibault, LimitGrid};
use crate::set::SetView;
use crate::EPS_REG;

/// Relative norm below which a sampled Thibault value counts as zero.
pub const TOL_THIBAULT: f64 = 1e-6;
/// Hull points sampled by [`check_clarke_nonsingular`] for `n ≥ 2`.
pub const CLARKE_SAMPLES: usize = 10_000;

/// `σ_min / σ_max`, zero for the zero matrix.
pub fn rcond(a: &Matrix) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

fn rows(a: &Matrix) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BsubVerdict {
    AllNonsingular,
    Singular {
        id: usize,
        matrix: Vec<Vec<f64>>,
        rcond: f64,
    },
}

impl BsubVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, BsubVerdict::AllNonsingular)
    }
}

/// Every element of `∂_B H(x)` has reciprocal condition above `EPS_REG`.
pub fn check_bsub_nonsingular(map: &dyn NonsmoothMap, x: &Vector) -> Result<BsubVerdict> {
    for g in bsub_elements(map, x)? {
        let rc = rcond(&g.matrix);
        if !(rc > EPS_REG) || g.matrix.nrows() != g.matrix.ncols() {
            return Ok(BsubVerdict::Singular {
                id: g.id,
                matrix: rows(&g.matrix),
                rcond: rc,
            });
        }
    }
    Ok(BsubVerdict::AllNonsingular)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClarkeVerdict {
    CertifiedRegular,
    CertifiedIrregular,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClarkeMethod {
    /// Exact interval test for scalar maps.
    ExactInterval,
    /// Two vertices with determinants of opposite sign (or a singular
    /// vertex); the segment between them contains a singular matrix.
    DeterminantSign,
    /// Random convex combinations of the vertices.
    SampledHull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarkeCheck {
    pub verdict: ClarkeVerdict,
    pub method: ClarkeMethod,
    /// Smallest reciprocal condition seen; `min |a|` over the hull for scalar maps.
    pub min_rcond: f64,
}

fn clarke_generators(map: &dyn NonsmoothMap, x: &Vector) -> Result<Vec<Generator>> {
    if !map.capabilities().lipschitz {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity (Clarke Jacobian)",
        ));
    }
    check_point(map, x)?;
    match map.clarke_vertices(x) {
        Some(v) => v,
        None => bsub_elements(map, x),
    }
}

/// Nonsingularity of every matrix in `∂_C H(x) = conv ∂_B H(x)`.
pub fn check_clarke_nonsingular(
    map: &dyn NonsmoothMap,
    x: &Vector,
    n_samples: usize,
) -> Result<ClarkeCheck> {
    let verts: Vec<Matrix> = clarke_generators(map, x)?
        .into_iter()
        .map(|g| g.matrix)
        .collect();
    if verts.is_empty() {
        return Err(Error::CapabilityMissing("Clarke vertices"));
    }
    let n = verts[0].ncols();
    if verts[0].nrows() == 1 && n == 1 {
        let lo = verts
            .iter()
            .map(|a| a[(0, 0)])
            .fold(f64::INFINITY, f64::min);
        let hi = verts
            .iter()
            .map(|a| a[(0, 0)])
            .fold(f64::NEG_INFINITY, f64::max);
        let singular = lo <= 0.0 && hi >= 0.0;
        let min_abs = if singular {
            0.0
        } else {
            lo.abs().min(hi.abs())
        };
        return Ok(ClarkeCheck {
            verdict: if singular {
                ClarkeVerdict::CertifiedIrregular
            } else {
                ClarkeVerdict::CertifiedRegular
            },
            method: ClarkeMethod::ExactInterval,
            min_rcond: min_abs,
        });
    }
    let dets: Vec<f64> = verts.iter().map(|a| a.determinant()).collect();
    let mut min_rcond = verts.iter().map(rcond).fold(f64::INFINITY, f64::min);
    let mixed = dets.iter().any(|d| *d > 0.0) && dets.iter().any(|d| *d < 0.0);
    if mixed || !(min_rcond > EPS_REG) {
        return Ok(ClarkeCheck {
            verdict: ClarkeVerdict::CertifiedIrregular,
            method: ClarkeMethod::DeterminantSign,
            min_rcond: if mixed { 0.0 } else { min_rcond },
        });
    }
    if verts.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..n_samples {
            // uniform weights on the simplex via normalized exponentials
            let w: Vec<f64> = (0..verts.len())
                .map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln())
                .collect();
            let total: f64 = w.iter().sum();
            let mut a = Matrix::zeros(verts[0].nrows(), n);
            for (wi, v) in w.iter().zip(&verts) {
                a += v * (wi / total);
            }
            let rc = rcond(&a);
            min_rcond = min_rcond.min(rc);
            if !(rc > EPS_REG) || a.determinant() * dets[0] < 0.0 {
                return Ok(ClarkeCheck {
                    verdict: ClarkeVerdict::CertifiedIrregular,
                    method: ClarkeMethod::SampledHull,
                    min_rcond: rc,
                });
            }
        }
    }
    Ok(ClarkeCheck {
        verdict: if min_rcond > 1e-6 {
            ClarkeVerdict::CertifiedRegular
        } else {
            ClarkeVerdict::Inconclusive
        },
        method: ClarkeMethod::SampledHull,
        min_rcond,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThibaultVerdict {
    /// No sampled value of `D_T H(x)(z)` came close to 0.
    Holds { min_ratio: f64 },
    Fails {
        direction: Vec<f64>,
        value_norm: f64,
    },
}

impl ThibaultVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, ThibaultVerdict::Holds { .. })
    }
}

/// Unit directions used by [`check_thibault_condition`] when none are given:
/// the probe directions plus seeded random ones for `n ≥ 2`.
pub fn default_directions(n: usize) -> Vec<Vector> {
    let mut dirs = probe_directions(n);
    if n > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..16 {
            let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            dirs.push(&v / v.norm());
        }
    }
    dirs
}

/// Samples `D_T H(x)(z)` and fails when a value has norm below
/// `TOL_THIBAULT·‖z‖`; for scalar maps the convex hull of the samples is
/// tested instead, since the limit set is an interval.
pub fn check_thibault_condition(
    map: &dyn NonsmoothMap,
    x: &Vector,
    grid: &LimitGrid,
    directions: &[Vector],
) -> Result<ThibaultVerdict> {
    if !map.capabilities().lipschitz {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity (Thibault derivative)",
        ));
    }
    let mut min_ratio = f64::INFINITY;
    for z in directions {
        let zn = z.norm();
        if zn == 0.0 {
            continue;
        }
        let set = sample_thibault(map, x, z, grid)?;
        let pts = set.points();
        let tol = TOL_THIBAULT * zn;
        if map.output_dim() == 1 {
            let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            if lo <= tol && hi >= -tol {
                return Ok(ThibaultVerdict::Fails {
                    direction: z.as_slice().to_vec(),
                    value_norm: if lo <= 0.0 && hi >= 0.0 {
                        0.0
                    } else {
                        lo.abs().min(hi.abs())
                    },
                });
            }
            min_ratio = min_ratio.min(lo.abs().min(hi.abs()) / zn);
        } else {
            for p in &pts {
                let norm = p.norm();
                if norm < tol {
                    return Ok(ThibaultVerdict::Fails {
                        direction: z.as_slice().to_vec(),
                        value_norm: norm,
                    });
                }
                min_ratio = min_ratio.min(norm / zn);
            }
        }
    }
    Ok(ThibaultVerdict::Holds { min_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverallVerdict {
    NecessaryFailed,
    SufficientHolds,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarizedEntry {
    pub z: f64,
    pub set: SetView,
    pub contains_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub point: Vec<f64>,
    pub bsub_nonsingular: BsubVerdict,
    pub clarke: ClarkeCheck,
    pub thibault: ThibaultVerdict,
    pub scalarized_coderivative: Option<Vec<ScalarizedEntry>>,
    pub overall: OverallVerdict,
}

impl RegularityReport {
    /// Short label: the necessary test result followed by the sufficient one.
    pub fn summary(&self) -> &'static str {
        match (self.bsub_nonsingular.holds(), self.overall) {
            (false, _) => "necessary-fails",
            (true, OverallVerdict::SufficientHolds) => "necessary-holds-sufficient-holds",
            (true, _)
                if self.clarke.verdict == ClarkeVerdict::CertifiedIrregular
                    && !self.thibault.holds() =>
            {
                "necessary-holds-sufficient-fails"
            }
            _ => "necessary-holds-sufficient-inconclusive",
        }
    }
}

/// Runs all pointwise checks. `problem_id` selects a registered scalarized
/// coderivative table (evaluated at `z = ±1`) when one exists.
pub fn analyze_regularity(
    map: &dyn NonsmoothMap,
    x: &Vector,
    grid: &LimitGrid,
    problem_id: Option<&str>,
) -> Result<RegularityReport> {
    let bsub_nonsingular = check_bsub_nonsingular(map, x)?;
    let clarke = check_clarke_nonsingular(map, x, CLARKE_SAMPLES)?;
    let thibault = check_thibault_condition(map, x, grid, &default_directions(x.len()))?;
    let scalarized_coderivative = match problem_id {
        Some(id) if x.len() == 1 => [1.0, -1.0]
            .iter()
            .map(|&z| {
                scalarized_coderivative_1d(id, x[0], z).map(|set| ScalarizedEntry {
                    z,
                    contains_zero: set.contains(&Vector::zeros(1), 0.0),
                    set: SetView::from(&set),
                })
            })
            .collect::<Result<Vec<_>>>()
            .ok(),
        _ => None,
    };
    let overall = if !bsub_nonsingular.holds() {
        OverallVerdict::NecessaryFailed
    } else if clarke.verdict == ClarkeVerdict::CertifiedRegular || thibault.holds() {
        OverallVerdict::SufficientHolds
    } else {
        OverallVerdict::Inconclusive
    };
    Ok(RegularityReport {
        point: x.as_slice().to_vec(),
        bsub_nonsingular,
        clarke,
        thibault,
        scalarized_coderivative,
        overall,
    })
}
