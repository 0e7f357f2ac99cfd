//! Report builders behind the subcommands. Everything here is deterministic
//! given its arguments; timestamps are added only on request.

use anyhow::{bail, Context, Result};
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nsnewton::map::{dirderiv_set_with, Capabilities};
use nsnewton::regularity::{analyze_regularity, RegularityReport};
use nsnewton::sampling::{
    check_directional_boundedness, h2_residual_curve, probe_directional_differentiability,
    probe_directions, sample_bsub_image, sample_graphical_derivative,
    sample_restrictive_derivative, sample_thibault, semismoothness_test, BoundednessVerdict,
    DirectionalProbe, LimitGrid, ResidualCurve, SemismoothnessReport, TOL_HAUSDORFF,
};
use nsnewton::{
    bsub, clarke_apply, corpus, kantorovich_check, problem, rate_diagnostics, run_newton,
    KantorovichReport, Method, ProblemSpec, SetView, SolverConfig, Vector,
};

use crate::record::{unix_ms, RunRecord, Timestamps, TraceSummary, SCHEMA_VERSION};

fn load(id: &str) -> Result<ProblemSpec> {
    Ok(problem(id)?)
}

fn check_dim(p: &ProblemSpec, x: &Vector, what: &str) -> Result<()> {
    let n = p.map.input_dim();
    if x.len() != n {
        bail!(
            "{what} has {} components, problem {} expects {n}",
            x.len(),
            p.id
        );
    }
    Ok(())
}

fn first_start(p: &ProblemSpec) -> Result<Vector> {
    match p.starts.first() {
        Some(x) => Ok(x.clone()),
        None => bail!("problem {} has no recommended start; pass --x0", p.id),
    }
}

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub problem: String,
    pub x0: Option<Vector>,
    /// Falls back to the known root nearest to `x0`.
    pub root: Option<Vector>,
    pub config: SolverConfig,
    pub seed: u64,
    pub timestamps: bool,
}

pub fn solve(req: &SolveRequest) -> Result<RunRecord> {
    req.config.validate()?;
    let p = load(&req.problem)?;
    let x0 = match &req.x0 {
        Some(x) => x.clone(),
        None => first_start(&p)?,
    };
    check_dim(&p, &x0, "--x0")?;
    let root = match &req.root {
        Some(r) => Some(r.clone()),
        None => p.nearest_root(&x0).cloned(),
    };
    if let Some(r) = &root {
        check_dim(&p, r, "--root")?;
    }
    info!(
        "solving {} with {} from {:?}",
        p.id,
        req.config.method,
        x0.as_slice()
    );
    let started = unix_ms();
    let trace = run_newton(p.map.as_ref(), &x0, &req.config, root.as_ref())?;
    let finished = unix_ms();
    debug!(
        "termination {:?} after {} steps",
        trace.termination,
        trace.iterations()
    );
    let rate = root.as_ref().and_then(|r| rate_diagnostics(&trace, r).ok());
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        problem: p.id.clone(),
        method: req.config.method,
        x0: x0.as_slice().to_vec(),
        root: root.map(|r| r.as_slice().to_vec()),
        seed: req.seed,
        config: req.config.clone(),
        trace: TraceSummary::from(&trace),
        rate,
        timestamps: req.timestamps.then_some(Timestamps {
            started_unix_ms: started,
            finished_unix_ms: finished,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub direction: Vec<f64>,
    pub dirderiv: SetView,
    pub clarke: Option<SetView>,
    pub thibault: Option<SetView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub problem: String,
    pub point: Vec<f64>,
    pub value: Vec<f64>,
    pub capabilities: Capabilities,
    pub directions: Vec<DirectionEntry>,
    /// Row-major matrices.
    pub bsub: Option<Vec<Vec<Vec<f64>>>>,
    pub directionally_bounded: bool,
    pub boundedness: BoundednessVerdict,
    pub directionally_differentiable: bool,
    pub directional_probe: DirectionalProbe,
    pub semismoothness: Option<SemismoothnessReport>,
    pub regularity: Option<RegularityReport>,
    pub regularity_summary: Option<String>,
}

fn rows(m: &nsnewton::Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn analyze(
    id: &str,
    point: Option<Vector>,
    directions: Option<Vec<Vector>>,
) -> Result<AnalyzeReport> {
    let p = load(id)?;
    let map = p.map.as_ref();
    let x = match point {
        Some(x) => x,
        None => p
            .known_roots
            .first()
            .cloned()
            .context("no known root; pass --point")?,
    };
    check_dim(&p, &x, "--point")?;
    let dirs = directions.unwrap_or_else(|| probe_directions(x.len()));
    for d in &dirs {
        check_dim(&p, d, "--direction")?;
    }
    let grid = LimitGrid::default();
    let caps = map.capabilities();

    let mut entries = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let dd = dirderiv_set_with(map, &x, d, Some(&grid))?;
        let (clarke, thibault) = if caps.lipschitz {
            (
                Some(SetView::from(&clarke_apply(map, &x, d)?)),
                Some(SetView::from(&sample_thibault(map, &x, d, &grid)?)),
            )
        } else {
            (None, None)
        };
        entries.push(DirectionEntry {
            direction: d.as_slice().to_vec(),
            dirderiv: SetView::from(&dd),
            clarke,
            thibault,
        });
    }
    let bsub = if caps.lipschitz {
        Some(bsub(map, &x)?.iter().map(rows).collect())
    } else {
        None
    };
    let boundedness = check_directional_boundedness(map, &x, &dirs, &grid)?;
    let probe = probe_directional_differentiability(map, &x, &dirs, &grid)?;
    let (semismoothness, regularity) = if caps.lipschitz {
        (
            Some(semismoothness_test(map, &x, &grid)?),
            Some(analyze_regularity(map, &x, &grid, Some(id))?),
        )
    } else {
        (None, None)
    };
    Ok(AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        problem: p.id.clone(),
        point: x.as_slice().to_vec(),
        value: map.eval(&x)?.as_slice().to_vec(),
        capabilities: caps,
        directions: entries,
        bsub,
        directionally_bounded: boundedness.is_bounded(),
        boundedness,
        directionally_differentiable: probe.differentiable,
        directional_probe: probe,
        semismoothness,
        regularity_summary: regularity.as_ref().map(|r| r.summary().to_string()),
        regularity,
    })
}

pub fn check_kantorovich(id: &str, x0: Option<Vector>, r: f64) -> Result<KantorovichReport> {
    let p = load(id)?;
    let x0 = match x0 {
        Some(x) => x,
        None => first_start(&p)?,
    };
    check_dim(&p, &x0, "--x0")?;
    Ok(kantorovich_check(
        p.map.as_ref(),
        &x0,
        r,
        &LimitGrid::default(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionFailure {
    pub chain: String,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub schema_version: u32,
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Draws replaced because a kink lay within 1e-6 of them.
    pub redrawn: usize,
    /// `(chain, largest gap)` over all samples.
    pub worst: Vec<(String, f64)>,
    pub failures: Vec<InclusionFailure>,
    pub holds: bool,
}

const CHAINS: [&str; 4] = [
    "bsub_in_thibault",
    "thibault_in_clarke",
    "dirderiv_in_clarke",
    "restrictive_vs_graphical",
];

// Finite-scale samples cannot separate a point from a kink closer than
// this; draws that close are replaced.
const RESOLUTION: f64 = 1e-6;

fn resolvable(p: &ProblemSpec, x: &Vector) -> bool {
    let key = |y: &Vector| bsub(p.map.as_ref(), y).ok();
    let Some(here) = key(x) else { return false };
    (0..x.len()).all(|i| {
        [-RESOLUTION, RESOLUTION].iter().all(|h| {
            let mut y = x.clone();
            y[i] += h;
            key(&y).is_some_and(|near| {
                near.len() == here.len()
                    && near.iter().zip(&here).all(|(a, b)| (a - b).amax() <= 1e-4)
            })
        })
    })
}

/// Checks `∂_B H(x)z ⊆ D_T H(x)(z) ⊆ ∂_C H(x)z`, `DH(x)(z) ⊆ ∂_C H(x)z`
/// and the match of sampled restrictive and graphical derivatives at
/// `samples` seeded random pairs.
pub fn check_inclusions(id: &str, samples: usize, seed: u64) -> Result<InclusionReport> {
    let p = load(id)?;
    let map = p.map.as_ref();
    if !map.capabilities().lipschitz {
        bail!("problem {id} is not Lipschitz; the inclusion chain does not apply");
    }
    let n = map.input_dim();
    let grid = LimitGrid {
        tail_levels: 2,
        ball_samples: if n > 2 { 16 } else { 64 },
        ..LimitGrid::default()
    };
    let dom = map.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![0.0f64; CHAINS.len()];
    let mut failures = Vec::new();
    let mut redrawn = 0;
    for _ in 0..samples {
        let (x, z) = loop {
            let x = Vector::from_fn(n, |i, _| {
                let (lo, hi) = (dom.lower()[i], dom.upper()[i]);
                let margin = 0.05 * (hi - lo);
                rng.gen_range(lo + margin..hi - margin)
            });
            let z = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if resolvable(&p, &x) {
                break (x, z);
            }
            redrawn += 1;
        };
        let b_img = sample_bsub_image(map, &x, &z, &grid)?;
        let thib = sample_thibault(map, &x, &z, &grid)?;
        let clarke = clarke_apply(map, &x, &z)?;
        let dd = dirderiv_set_with(map, &x, &z, Some(&grid))?;
        let restrictive = sample_restrictive_derivative(map, &x, &z, &grid)?;
        let graphical = sample_graphical_derivative(map, &x, &z, &grid)?;
        let gaps = [
            b_img.directed_hausdorff(&thib),
            thib.directed_hausdorff(&clarke),
            dd.directed_hausdorff(&clarke),
            restrictive.hausdorff(&graphical),
        ];
        for (i, gap) in gaps.into_iter().enumerate() {
            worst[i] = worst[i].max(gap);
            if gap.is_nan() || gap > TOL_HAUSDORFF {
                failures.push(InclusionFailure {
                    chain: CHAINS[i].to_string(),
                    x: x.as_slice().to_vec(),
                    z: z.as_slice().to_vec(),
                    gap,
                });
            }
        }
    }
    Ok(InclusionReport {
        schema_version: SCHEMA_VERSION,
        problem: p.id.clone(),
        samples,
        seed,
        tolerance: TOL_HAUSDORFF,
        redrawn,
        worst: CHAINS.iter().map(|c| c.to_string()).zip(worst).collect(),
        holds: failures.is_empty(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub schema_version: u32,
    pub problem: String,
    pub root: Vec<f64>,
    pub direction: Vec<f64>,
    pub curve: ResidualCurve,
}

/// Residual curve of the first-order model at the first known root, along
/// `x̄ + 2^{-k}·d` with `d = (1, …, 1)`; the zigzag map uses `k = 3..18`,
/// everything else `k = 1..22`.
pub fn check_h2(id: &str) -> Result<ResidualReport> {
    let p = load(id)?;
    let map = p.map.as_ref();
    let xbar = p
        .known_roots
        .first()
        .cloned()
        .context("problem has no known root")?;
    let n = xbar.len();
    let d = Vector::from_element(n, 1.0);
    let ks = if p.id == "staircase" { 3..=18 } else { 1..=22 };
    let path: Vec<Vector> = ks
        .map(|k| &xbar + &d * 2f64.powi(-k))
        .filter(|x| map.domain().contains(x))
        .collect();
    let curve = h2_residual_curve(map, &xbar, &path)?;
    Ok(ResidualReport {
        schema_version: SCHEMA_VERSION,
        problem: p.id.clone(),
        root: xbar.as_slice().to_vec(),
        direction: d.as_slice().to_vec(),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub problem: String,
    pub method: Method,
    pub start: usize,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

/// Every `(problem, method, start)` triple, solved in parallel and returned
/// in problem, method, start order.
pub fn bench(
    problems: &[String],
    methods: &[Method],
    base: &SolverConfig,
    seed: u64,
) -> Result<Vec<BenchEntry>> {
    let specs: Vec<ProblemSpec> = if problems.is_empty() {
        corpus()
    } else {
        problems.iter().map(|id| load(id)).collect::<Result<_>>()?
    };
    let mut jobs = Vec::new();
    for p in &specs {
        for &m in methods {
            for (i, x0) in p.starts.iter().enumerate() {
                jobs.push((p.id.clone(), m, i, x0.clone()));
            }
        }
    }
    info!("bench: {} runs", jobs.len());
    Ok(jobs
        .into_par_iter()
        .map(|(id, method, start, x0)| {
            let req = SolveRequest {
                problem: id.clone(),
                x0: Some(x0),
                root: None,
                config: SolverConfig {
                    method,
                    ..base.clone()
                },
                seed,
                timestamps: false,
            };
            let (record, error) = match solve(&req) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BenchEntry {
                problem: id,
                method,
                start,
                record,
                error,
            }
        })
        .collect())
}

pub fn bench_csv(entries: &[BenchEntry]) -> String {
    let mut out = String::from(
        "problem,method,start,termination,iterations,final_residual,superlinear,error\n",
    );
    for e in entries {
        let (term, iters, res, sup) = match &e.record {
            Some(r) => (
                r.trace.termination.label().to_string(),
                r.trace.iterations.to_string(),
                format!("{:.16e}", r.trace.final_residual),
                r.rate
                    .as_ref()
                    .map_or(String::new(), |x| x.superlinear.to_string()),
            ),
            None => Default::default(),
        };
        let err = e.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!(
            "{},{},{},{term},{iters},{res},{sup},{err}\n",
            e.problem, e.method, e.start
        ));
    }
    out
}
