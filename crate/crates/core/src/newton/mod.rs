//! The Newton iterations `x^{k+1} = x^k + d^k` and their subproblems.

mod kantorovich;
mod rates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{
    bsub_elements, check_point, dirderiv_set, Generator, Matrix, NonsmoothMap, Vector,
};
use crate::regularity::rcond;
use crate::sampling::probe_directions;
use crate::EPS_REG;

pub use kantorovich::{
    kantorovich_check, AuditRow, ConditionB, ConditionC, KantorovichAudit, KantorovichReport,
};
pub use rates::{rate_diagnostics, rate_from_errors, RateReport, SUPERLINEAR_THRESHOLD};

/// Which linearization defines the Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// `−H(x) ∈ DH(x)(d)`.
    Graphical,
    /// `A d = −H(x)` with `A ∈ ∂_B H(x)`.
    Bsub,
    /// `A d = −H(x)` with `A` a vertex of `∂_C H(x)`.
    Clarke,
    /// `−H(x) = H'(x; d)`.
    Bdiff,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Graphical,
        Method::Bsub,
        Method::Clarke,
        Method::Bdiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Graphical => "graphical",
            Method::Bsub => "bsub",
            Method::Clarke => "clarke",
            Method::Bdiff => "bdiff",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub tol_residual: f64,
    pub tol_step: f64,
    pub max_iter: usize,
    /// Relative tolerance of the membership test `dist(−H(x), DH(x)(d))`.
    pub eta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Graphical,
            tol_residual: 1e-10,
            tol_step: 1e-12,
            max_iter: 50,
            eta: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        SolverConfig {
            method,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.tol_residual) && positive(self.tol_step) && positive(self.eta)) {
            return Err(Error::InvalidConfig(
                "tolerances must be positive and finite".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIter,
    SubproblemFailure(String),
    /// The next iterate left the domain or produced non-finite values; the
    /// offending step is not recorded in the trace.
    Diverged(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::SubproblemFailure(_) => "subproblem_failure",
            Termination::Diverged(_) => "diverged",
        }
    }
}

/// Full record of one run. `iterates`, `residual_norms` have one entry more
/// than the per-step vectors, and `iterates[k+1] = iterates[k] + directions[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub method: Method,
    pub iterates: Vec<Vector>,
    pub residual_norms: Vec<f64>,
    pub directions: Vec<Vector>,
    pub step_norms: Vec<f64>,
    /// Generator or element id used for each step.
    pub element_ids: Vec<Option<usize>>,
    /// `dist(−H(x^k), DH(x^k)(d^k))` for each step.
    pub membership_residuals: Vec<f64>,
    pub termination: Termination,
    /// `‖x^k − x̄‖` when a root was supplied.
    pub errors: Option<Vec<f64>>,
    /// `e_{k+1}/e_k` over steps with `e_k > 0`.
    pub ratios: Option<Vec<f64>>,
}

impl SolveTrace {
    pub fn final_iterate(&self) -> &Vector {
        self.iterates.last().expect("trace holds x0")
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_norms.last().expect("trace holds x0")
    }

    pub fn iterations(&self) -> usize {
        self.directions.len()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    fn attach_root(&mut self, root: &Vector) {
        let errors: Vec<f64> = self.iterates.iter().map(|x| (x - root).norm()).collect();
        let ratios = errors
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect();
        self.errors = Some(errors);
        self.ratios = Some(ratios);
    }
}

/// A solved subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub direction: Vector,
    pub element: Option<usize>,
    pub membership: f64,
}

fn solve_with(g: &Generator, rhs: &Vector) -> Result<Vector> {
    if g.matrix.nrows() != g.matrix.ncols() || g.matrix.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            expected: rhs.len(),
            found: g.matrix.ncols(),
        });
    }
    let rc = rcond(&g.matrix);
    if !(rc > EPS_REG) {
        return Err(Error::SingularElement {
            piece: Some(g.id),
            rcond: rc,
        });
    }
    g.matrix
        .clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularElement {
            piece: Some(g.id),
            rcond: rc,
        })
}

fn candidate_generators(map: &dyn NonsmoothMap, x: &Vector) -> Result<Vec<Generator>> {
    if let Some(gens) = map.generators(x) {
        return gens;
    }
    if map.capabilities().lipschitz {
        if let Ok(gens) = bsub_elements(map, x) {
            return Ok(gens);
        }
    }
    match map.jacobian(x) {
        Some(j) => Ok(vec![Generator { id: 0, matrix: j? }]),
        None => Err(Error::CapabilityMissing(
            "linear generators for the Newton subproblem",
        )),
    }
}

fn membership_tolerance(hx: &Vector, config: &SolverConfig) -> f64 {
    config.eta * hx.norm().max(config.tol_residual)
}

/// Solves `−H(x) ∈ DH(x)(d)`: linear solves with every candidate generator,
/// membership-checked against the exact derivative set, min-norm survivor
/// (lowest id on ties). If none survives, a compass search on
/// `dist(−H(x), DH(x)(d))` is started from each candidate solution.
pub fn solve_subproblem_graphical(
    map: &dyn NonsmoothMap,
    x: &Vector,
    hx: &Vector,
    config: &SolverConfig,
) -> Result<Step> {
    solve_membership(map, x, hx, config, false)
}

/// Solves `−H(x) = H'(x; d)`; requires a Lipschitz, directionally
/// differentiable map, where it coincides with the graphical subproblem.
pub fn solve_subproblem_bdiff(
    map: &dyn NonsmoothMap,
    x: &Vector,
    hx: &Vector,
    config: &SolverConfig,
) -> Result<Step> {
    let caps = map.capabilities();
    if !(caps.lipschitz && caps.directionally_differentiable) {
        return Err(Error::CapabilityMissing(
            "Lipschitz continuity and directional differentiability (B-differentiable Newton)",
        ));
    }
    let step = solve_membership(map, x, hx, config, true)?;
    debug_assert!(
        solve_membership(map, x, hx, config, false)
            .map(|g| (g.direction - &step.direction).norm() <= 1e-12 * (1.0 + step.direction.norm()))
            .unwrap_or(false),
        "B-differentiable and graphical steps differ"
    );
    Ok(step)
}

fn solve_membership(
    map: &dyn NonsmoothMap,
    x: &Vector,
    hx: &Vector,
    config: &SolverConfig,
    single_valued: bool,
) -> Result<Step> {
    let target = -hx;
    let tol = membership_tolerance(hx, config);
    let residual = |d: &Vector| -> Result<f64> {
        let set = dirderiv_set(map, x, d)?;
        if single_valued && !set.is_singleton() {
            return Ok(f64::INFINITY);
        }
        Ok(set.distance_to(&target))
    };
    let gens = candidate_generators(map, x)?;
    let mut solutions = Vec::new();
    let mut survivors: Vec<Step> = Vec::new();
    for g in &gens {
        let d = match solve_with(g, &target) {
            Ok(d) => d,
            Err(e) => {
                log::debug!("generator {} rejected: {e}", g.id);
                continue;
            }
        };
        let r = residual(&d)?;
        if r <= tol {
            survivors.push(Step {
                direction: d.clone(),
                element: Some(g.id),
                membership: r,
            });
        }
        solutions.push(d);
    }
    if let Some(best) = survivors.into_iter().min_by(|a, b| {
        a.direction
            .norm()
            .total_cmp(&b.direction.norm())
            .then(a.element.cmp(&b.element))
    }) {
        return Ok(best);
    }
    let mut best_residual = f64::INFINITY;
    if map.capabilities().lipschitz {
        for start in solutions.iter().take(DIRECTION_REFINEMENT_STARTS) {
            if let Some(step) = refine_along_direction(map, x, &target, start, &residual, tol)? {
                return Ok(step);
            }
        }
    }
    for start in &solutions {
        let (d, r) = compass_minimize(start, &residual)?;
        if r <= tol {
            return Ok(Step {
                direction: d,
                element: None,
                membership: r,
            });
        }
        best_residual = best_residual.min(r);
    }
    Err(Error::SubproblemFailure {
        residual: best_residual,
        tolerance: tol,
        candidates: gens.len(),
    })
}

const DIRECTION_REFINEMENT_STARTS: usize = 4;
const DIRECTION_REFINEMENT_ROUNDS: usize = 50;

/// Re-solves with the element active just beyond `x` along the current
/// direction until the direction repeats; for piecewise maps this walks the
/// sign or piece patterns that the enumerated candidates missed.
fn refine_along_direction(
    map: &dyn NonsmoothMap,
    x: &Vector,
    target: &Vector,
    start: &Vector,
    residual: &dyn Fn(&Vector) -> Result<f64>,
    tol: f64,
) -> Result<Option<Step>> {
    let mut d = start.clone();
    for _ in 0..DIRECTION_REFINEMENT_ROUNDS {
        let dn = d.norm();
        if dn == 0.0 {
            return Ok(None);
        }
        let probe = x + &d * (1e-7 * (1.0 + x.norm()) / dn);
        if !map.domain().contains(&probe) {
            return Ok(None);
        }
        let Ok(elements) = bsub_elements(map, &probe) else {
            return Ok(None);
        };
        let Some(g) = elements.first() else {
            return Ok(None);
        };
        let Ok(next) = solve_with(g, target) else {
            return Ok(None);
        };
        let r = residual(&next)?;
        if r <= tol {
            return Ok(Some(Step {
                direction: next,
                element: None,
                membership: r,
            }));
        }
        if (&next - &d).norm() <= 1e-14 * (1.0 + dn) {
            return Ok(None);
        }
        d = next;
    }
    Ok(None)
}

fn compass_minimize(start: &Vector, f: &dyn Fn(&Vector) -> Result<f64>) -> Result<(Vector, f64)> {
    let mut d = start.clone();
    let mut r = f(&d)?;
    let mut step = 0.1 * d.norm().max(1e-8);
    let dirs = probe_directions(d.len());
    let mut evals = 0;
    while step > 1e-14 * (1.0 + d.norm()) && evals < 10_000 {
        let mut improved = false;
        for w in &dirs {
            let cand = &d + w * step;
            evals += 1;
            let rc = f(&cand)?;
            if rc < r {
                d = cand;
                r = rc;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((d, r))
}

/// Solves `A d = −H(x)` with the lowest-id element of `∂_B H(x)` (or the
/// lowest-id vertex of `∂_C H(x)` when `clarke` is set).
pub fn solve_subproblem_semismooth(
    map: &dyn NonsmoothMap,
    x: &Vector,
    hx: &Vector,
    clarke: bool,
) -> Result<Step> {
    let elements = if clarke {
        if !map.capabilities().lipschitz {
            return Err(Error::CapabilityMissing(
                "Lipschitz continuity (Clarke Jacobian)",
            ));
        }
        match map.clarke_vertices(x) {
            Some(v) => v?,
            None => bsub_elements(map, x)?,
        }
    } else {
        bsub_elements(map, x)?
    };
    let g = elements
        .into_iter()
        .min_by_key(|g| g.id)
        .ok_or(Error::CapabilityMissing("a nonempty generalized Jacobian"))?;
    let d = solve_with(&g, &(-hx))?;
    let membership = (&g.matrix * &d + hx).norm();
    Ok(Step {
        direction: d,
        element: Some(g.id),
        membership,
    })
}

/// One Newton step at `x` for the configured method.
pub fn newton_step(
    map: &dyn NonsmoothMap,
    x: &Vector,
    hx: &Vector,
    config: &SolverConfig,
) -> Result<Step> {
    match config.method {
        Method::Graphical => solve_subproblem_graphical(map, x, hx, config),
        Method::Bsub => solve_subproblem_semismooth(map, x, hx, false),
        Method::Clarke => solve_subproblem_semismooth(map, x, hx, true),
        Method::Bdiff => solve_subproblem_bdiff(map, x, hx, config),
    }
}

/// Runs the iteration from `x0`. Subproblem failures and divergence end the
/// run with the corresponding [`Termination`]; only invalid input is an error.
pub fn run_newton(
    map: &dyn NonsmoothMap,
    x0: &Vector,
    config: &SolverConfig,
    root: Option<&Vector>,
) -> Result<SolveTrace> {
    config.validate()?;
    check_point(map, x0)?;
    let mut x = x0.clone();
    let mut hx = map.eval(&x)?;
    let mut trace = SolveTrace {
        method: config.method,
        iterates: vec![x.clone()],
        residual_norms: vec![hx.norm()],
        directions: Vec::new(),
        step_norms: Vec::new(),
        element_ids: Vec::new(),
        membership_residuals: Vec::new(),
        termination: Termination::MaxIter,
        errors: None,
        ratios: None,
    };
    let mut termination = None;
    for k in 0..config.max_iter {
        if hx.norm() <= config.tol_residual {
            termination = Some(Termination::Converged);
            break;
        }
        let step = match newton_step(map, &x, &hx, config) {
            Ok(s) => s,
            Err(e) => {
                termination = Some(Termination::SubproblemFailure(e.to_string()));
                break;
            }
        };
        let next = &x + &step.direction;
        if !next.iter().all(|v| v.is_finite()) || !map.domain().contains(&next) {
            termination = Some(Termination::Diverged(format!(
                "step {k} leads to {:?} outside the domain",
                next.as_slice()
            )));
            break;
        }
        let h_next = match map.eval(&next) {
            Ok(h) if h.iter().all(|v| v.is_finite()) => h,
            Ok(_) => {
                termination = Some(Termination::Diverged(format!(
                    "non-finite value at step {k}"
                )));
                break;
            }
            Err(e) => {
                termination = Some(Termination::Diverged(e.to_string()));
                break;
            }
        };
        let step_norm = step.direction.norm();
        log::trace!(
            "{} k={k} ‖H‖={:e} ‖d‖={step_norm:e}",
            config.method,
            hx.norm()
        );
        trace.step_norms.push(step_norm);
        trace.element_ids.push(step.element);
        trace.membership_residuals.push(step.membership);
        trace.directions.push(step.direction);
        trace.iterates.push(next.clone());
        trace.residual_norms.push(h_next.norm());
        x = next;
        hx = h_next;
        if step_norm <= config.tol_step {
            termination = Some(Termination::Converged);
            break;
        }
    }
    trace.termination = termination.unwrap_or(if hx.norm() <= config.tol_residual {
        Termination::Converged
    } else {
        Termination::MaxIter
    });
    if let Some(r) = root {
        trace.attach_root(r);
    }
    Ok(trace)
}

/// Classical Newton `x − J(x)⁻¹H(x)` using the map's Jacobian hook.
pub fn classical_newton(map: &dyn NonsmoothMap, x0: &Vector, steps: usize) -> Result<Vec<Vector>> {
    let mut xs = vec![x0.clone()];
    for _ in 0..steps {
        let x = xs.last().unwrap().clone();
        let hx = map.eval(&x)?;
        if hx.norm() == 0.0 {
            break;
        }
        let j: Matrix = map
            .jacobian(&x)
            .ok_or(Error::CapabilityMissing("a Jacobian"))??;
        let d = solve_with(&Generator { id: 0, matrix: j }, &(-hx))?;
        xs.push(x + d);
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::problem;

    fn s(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn step(id: &str, method: Method, x: f64) -> Result<Step> {
        let p = problem(id).unwrap();
        let x = s(x);
        let hx = p.map.eval(&x).unwrap();
        newton_step(p.map.as_ref(), &x, &hx, &SolverConfig::with_method(method))
    }

    #[test]
    fn subproblem_examples() {
        for m in Method::ALL {
            assert_eq!(step("abs1d", m, 0.5).unwrap().direction[0], -0.5);
            assert_eq!(step("abs1d", m, -0.5).unwrap().direction[0], 0.5);
        }
        assert_eq!(
            step("linear2x", Method::Graphical, 3.0).unwrap().direction[0],
            -3.0
        );
        assert_eq!(
            step("absaff1d", Method::Bsub, -1.0).unwrap().direction[0],
            1.0
        );
    }

    #[test]
    fn flat_element_is_singular() {
        let map = crate::map::build_piecewise(
            vec![crate::map::SmoothPiece::affine(
                0,
                Matrix::zeros(1, 1),
                s(1.0),
            )],
            |_| vec![0],
            1,
            1,
            crate::map::DomainBox::cube(1, 1.0),
        )
        .unwrap();
        let hx = map.eval(&s(0.0)).unwrap();
        assert!(matches!(
            solve_subproblem_semismooth(&map, &s(0.0), &hx, false),
            Err(Error::SingularElement { .. })
        ));
    }

    #[test]
    fn abs_converges_in_one_step() {
        let p = problem("abs1d").unwrap();
        let t = run_newton(
            p.map.as_ref(),
            &s(0.5),
            &SolverConfig::default(),
            Some(&s(0.0)),
        )
        .unwrap();
        assert!(t.converged());
        assert_eq!(t.iterations(), 1);
        assert_eq!(t.final_iterate()[0], 0.0);
    }

    #[test]
    fn quadratic_iterates() {
        let p = problem("smooth1d").unwrap();
        let t = run_newton(p.map.as_ref(), &s(2.0), &SolverConfig::default(), None).unwrap();
        assert_eq!(t.iterates[1][0], 1.25);
        assert!((t.iterates[2][0] - 1.025).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("newton".parse::<Method>().is_err());
    }

    #[test]
    fn all_kinks_active_beyond_enumeration() {
        // 50 zero components: only 2^10 sign patterns are enumerated, the
        // step is found by following the direction's own pattern.
        let p = problem("affabs_50").unwrap();
        let t = run_newton(
            p.map.as_ref(),
            &Vector::zeros(50),
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        assert!(t.converged() && t.iterations() <= 2, "{:?}", t.termination);
    }
}
