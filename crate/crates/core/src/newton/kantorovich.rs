//! Sampled check of the conditions for convergence from `x0` without
//! knowledge of the root: on the ball `Ω = {‖x − x0‖ ≤ r}`,
//!
//! * (a) `H` is metrically regular with modulus `μ` and
//!   `‖H(y) − H(x) − v‖ ≤ α‖x − y‖` for `v ∈ DH(x)(y − x)`, with `αμ < 1`;
//! * (b) derivative values `w ∈ DH(x)(z)` vanish uniformly as `z → 0`;
//! * (c) `μ‖H(x0)‖ ≤ r(1 − αμ)`.
//!
//! When all hold the graphical iteration stays in `Ω` and satisfies
//! `‖x^k − x̄‖ ≤ αμ/(1 − αμ)·‖x^k − x^{k−1}‖`, which is audited on a run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_newton, Method, SolverConfig};
use crate::error::{Error, Result};
use crate::map::{dirderiv_set_with, DomainBox, NonsmoothMap, Vector};
use crate::problems::SEED;
use crate::sampling::{
    estimate_metric_regularity_modulus, probe_directions, LimitGrid, ModulusEstimate, ModulusGrid,
    Region,
};

const ALPHA_PAIRS: usize = 2000;
const VANISHING_SCALES: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];
const VANISHING_TOL: f64 = 1e-6;
// Relative slack in (c), so that exact equality survives rounding.
const REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionB {
    /// `(‖z‖, sup ‖w‖)` over the sample lattice.
    pub sup_by_scale: Vec<(f64, f64)>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionC {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub k: usize,
    pub error: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KantorovichAudit {
    pub termination: String,
    pub root: Vec<f64>,
    pub rows: Vec<AuditRow>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KantorovichReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub modulus: ModulusEstimate,
    pub mu: f64,
    /// `max ‖H(y) − H(x) − v‖/‖x − y‖`, the form used by the convergence proof.
    pub alpha: f64,
    /// `max ‖H(x) − H(y) − v‖/‖x − y‖`, the form as literally stated.
    pub alpha_stated: f64,
    pub condition_a: bool,
    pub condition_b: ConditionB,
    pub condition_c: ConditionC,
    pub passes: bool,
    pub audit: Option<KantorovichAudit>,
}

fn in_ball(x: &Vector, center: &Vector, r: f64) -> bool {
    (x - center).norm() <= r * (1.0 + REL_SLACK)
}

fn ball_lattice(center: &Vector, r: f64, per_dim: usize) -> Vec<Vector> {
    DomainBox::cube(center.len(), r)
        .lattice(per_dim)
        .into_iter()
        .map(|p| p + center)
        .filter(|p| in_ball(p, center, r))
        .collect()
}

fn ball_sample(rng: &mut ChaCha8Rng, center: &Vector, r: f64) -> Vector {
    loop {
        let p = Vector::from_fn(center.len(), |_, _| rng.gen_range(-r..=r));
        if p.norm() <= r {
            return p + center;
        }
    }
}

fn estimate_mu(map: &dyn NonsmoothMap, x0: &Vector, r: f64) -> Result<ModulusEstimate> {
    let per_dim = if x0.len() == 1 { 9 } else { 5 };
    let grid = ModulusGrid::default();
    let mut worst: Option<ModulusEstimate> = None;
    for c in ball_lattice(x0, r, per_dim) {
        let est = estimate_metric_regularity_modulus(
            map,
            &Region {
                center: c,
                radius: 0.5 * r,
            },
            &grid,
        )?;
        match est {
            ModulusEstimate::Finite { mu, .. } if worst.as_ref().is_none_or(|w| mu > w.mu()) => {
                worst = Some(est)
            }
            ModulusEstimate::Finite { .. } => {}
            other => return Ok(other),
        }
    }
    worst.ok_or_else(|| Error::InvalidConfig("empty region".into()))
}

/// Runs the sampled checks on the ball of radius `r` around `x0` and, when
/// they pass, audits a graphical Newton run started at `x0`.
pub fn kantorovich_check(
    map: &dyn NonsmoothMap,
    x0: &Vector,
    r: f64,
    grid: &LimitGrid,
) -> Result<KantorovichReport> {
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(format!("radius {r} must be positive")));
    }
    let cube = DomainBox::cube(x0.len(), r);
    let corners = [x0 + cube.lower(), x0 + cube.upper()];
    if !corners.iter().all(|c| map.domain().contains(c)) {
        return Err(Error::InvalidConfig("the region leaves the domain".into()));
    }

    let modulus = estimate_mu(map, x0, r)?;
    let mu = modulus.mu();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut pairs: Vec<(Vector, Vector)> = (0..ALPHA_PAIRS)
        .map(|_| (ball_sample(&mut rng, x0, r), ball_sample(&mut rng, x0, r)))
        .collect();
    let lattice = ball_lattice(x0, r, if x0.len() == 1 { 21 } else { 5 });
    for a in &lattice {
        for b in &lattice {
            pairs.push((a.clone(), b.clone()));
        }
    }
    let (mut alpha, mut alpha_stated) = (0.0f64, 0.0f64);
    for (x, y) in &pairs {
        let dist = (y - x).norm();
        if dist == 0.0 {
            continue;
        }
        let (hx, hy) = (map.eval(x)?, map.eval(y)?);
        for v in dirderiv_set_with(map, x, &(y - x), Some(grid))?.points() {
            alpha = alpha.max((&hy - &hx - &v).norm() / dist);
            alpha_stated = alpha_stated.max((&hx - &hy - &v).norm() / dist);
        }
    }

    let mut sup_by_scale = Vec::with_capacity(VANISHING_SCALES.len());
    for delta in VANISHING_SCALES {
        let mut sup = 0.0f64;
        for x in &lattice {
            for w in probe_directions(x.len()) {
                for v in dirderiv_set_with(map, x, &(w * delta), Some(grid))?.points() {
                    sup = sup.max(v.norm());
                }
            }
        }
        sup_by_scale.push((delta, sup));
    }
    let b_holds = sup_by_scale
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + REL_SLACK))
        && sup_by_scale.last().is_some_and(|p| p.1 <= VANISHING_TOL);
    let condition_b = ConditionB {
        sup_by_scale,
        holds: b_holds,
    };

    let am = alpha * mu;
    let condition_a = mu.is_finite() && am < 1.0;
    let lhs = mu * map.eval(x0)?.norm();
    let rhs = r * (1.0 - am);
    let condition_c = ConditionC {
        lhs,
        rhs,
        holds: condition_a && lhs <= rhs * (1.0 + REL_SLACK),
    };
    let passes = condition_a && condition_b.holds && condition_c.holds;

    let audit = if passes {
        Some(audit_run(map, x0, r, am)?)
    } else {
        None
    };
    Ok(KantorovichReport {
        center: x0.as_slice().to_vec(),
        radius: r,
        modulus,
        mu,
        alpha,
        alpha_stated,
        condition_a,
        condition_b,
        condition_c,
        passes,
        audit,
    })
}

fn audit_run(map: &dyn NonsmoothMap, x0: &Vector, r: f64, am: f64) -> Result<KantorovichAudit> {
    let trace = run_newton(map, x0, &SolverConfig::with_method(Method::Graphical), None)?;
    for (k, x) in trace.iterates.iter().enumerate() {
        if !in_ball(x, x0, r) {
            return Err(Error::RegionExit {
                iterate: k,
                distance: (x - x0).norm(),
                radius: r,
            });
        }
    }
    let root = trace.final_iterate().clone();
    let factor = am / (1.0 - am);
    let rows: Vec<AuditRow> = trace
        .iterates
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let error = (&w[1] - &root).norm();
            let bound = factor * (&w[1] - &w[0]).norm();
            AuditRow {
                k: i + 1,
                error,
                bound,
                slack: bound - error,
            }
        })
        .collect();
    let holds = trace.converged() && rows.iter().all(|row| row.slack >= 0.0);
    Ok(KantorovichAudit {
        termination: trace.termination.label().to_string(),
        root: root.as_slice().to_vec(),
        rows,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::problem;

    fn s(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn linear_map_passes_with_exact_model() {
        let p = problem("linear2x").unwrap();
        let rep = kantorovich_check(p.map.as_ref(), &s(1.0), 1.0, &LimitGrid::default()).unwrap();
        assert!((rep.mu - 0.5).abs() < 1e-9, "{}", rep.mu);
        assert_eq!(rep.alpha, 0.0);
        assert_eq!(rep.alpha_stated, 4.0);
        assert!(rep.passes);
        let audit = rep.audit.unwrap();
        assert!(audit.holds && audit.root == vec![0.0]);
    }

    #[test]
    fn kink_without_regularity_fails() {
        let p = problem("abs1d").unwrap();
        let rep = kantorovich_check(p.map.as_ref(), &s(0.5), 1.0, &LimitGrid::default()).unwrap();
        assert!(rep.modulus.is_infinite());
        assert!(!rep.passes && rep.audit.is_none());
    }
}
