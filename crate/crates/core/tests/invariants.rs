use nsnewton::newton::{solve_subproblem_graphical, Step};
use nsnewton::problems::{problem, scalarized_coderivative_1d};
use nsnewton::regularity::{
    check_bsub_nonsingular, check_clarke_nonsingular, check_thibault_condition, default_directions,
    ClarkeVerdict, CLARKE_SAMPLES,
};
use nsnewton::sampling::{
    estimate_metric_regularity_modulus, sample_graphical_derivative, sample_restrictive_derivative,
    LimitGrid, ModulusGrid, Region, TOL_HAUSDORFF,
};
use nsnewton::{bsub, clarke_apply, dirderiv_set, SolverConfig, Vector, TOL_SET};
use proptest::prelude::*;

const LIPSCHITZ: [&str; 10] = [
    "abs1d",
    "absaff1d",
    "linear2x",
    "smooth1d",
    "smooth2d",
    "staircase",
    "affabs_2",
    "affabs_10",
    "affabs_50",
    "ncp_min_2d",
];

fn point_in(id: &str, unit: &[f64]) -> Vector {
    let p = problem(id).unwrap();
    let dom = p.map.domain();
    Vector::from_fn(dom.dim(), |i, _| {
        let (lo, hi) = (dom.lower()[i], dom.upper()[i]);
        0.5 * (lo + hi) + 0.45 * (hi - lo) * unit[i % unit.len()]
    })
}

fn unit_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirderiv_inside_clarke(idx in 0usize..LIPSCHITZ.len(), ux in unit_vec(), uz in unit_vec()) {
        let id = LIPSCHITZ[idx];
        let p = problem(id).unwrap();
        let x = point_in(id, &ux);
        let z = Vector::from_fn(x.len(), |i, _| uz[i % 2] + 0.1 * i as f64);
        let dd = dirderiv_set(p.map.as_ref(), &x, &z).unwrap();
        let clarke = clarke_apply(p.map.as_ref(), &x, &z).unwrap();
        let scale = 1.0 + z.norm();
        prop_assert!(dd.is_subset_of(&clarke, TOL_SET * scale), "{id} {dd:?} {clarke:?}");
        if p.map.capabilities().directionally_differentiable {
            prop_assert!(dd.is_singleton());
        }
    }

    #[test]
    fn restrictive_inside_graphical(idx in 0usize..8, ux in unit_vec(), uz in unit_vec()) {
        // skip the two high-dimensional families
        let id = ["abs1d", "absaff1d", "linear2x", "smooth1d", "smooth2d", "staircase", "affabs_2", "ncp_min_2d"][idx];
        let p = problem(id).unwrap();
        let x = point_in(id, &ux);
        let z = Vector::from_fn(x.len(), |i, _| uz[i]);
        let g = LimitGrid::default();
        let r = sample_restrictive_derivative(p.map.as_ref(), &x, &z, &g).unwrap();
        let gr = sample_graphical_derivative(p.map.as_ref(), &x, &z, &g).unwrap();
        prop_assert!(r.directed_hausdorff(&gr) <= TOL_HAUSDORFF);
        prop_assert!(r.hausdorff(&gr) <= TOL_HAUSDORFF, "{id}: {r:?} vs {gr:?}");
    }

    #[test]
    fn graphical_step_solves_its_subproblem(idx in 0usize..4, ux in unit_vec()) {
        let id = ["abs1d", "absaff1d", "affabs_2", "ncp_min_2d"][idx];
        let p = problem(id).unwrap();
        let x = point_in(id, &ux);
        let hx = p.map.eval(&x).unwrap();
        let cfg = SolverConfig::default();
        let Step { direction, .. } = solve_subproblem_graphical(p.map.as_ref(), &x, &hx, &cfg).unwrap();
        let dd = dirderiv_set(p.map.as_ref(), &x, &direction).unwrap();
        let best = dd.distance_to(&-&hx);
        prop_assert!(best <= cfg.eta * hx.norm().max(cfg.tol_residual), "{id}: residual {best}");
    }

    #[test]
    fn smooth_bsub_is_the_jacobian(ux in unit_vec()) {
        let p = problem("smooth2d").unwrap();
        let x = point_in("smooth2d", &ux);
        let b = bsub(p.map.as_ref(), &x).unwrap();
        prop_assert_eq!(b.len(), 1);
        let j = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 2.0 * x[1], 1.0, -1.0]);
        prop_assert!((&b[0] - j).amax() <= 1e-6);
    }

    #[test]
    fn regularity_ordering(idx in 0usize..5, ux in unit_vec()) {
        let id = ["abs1d", "absaff1d", "staircase", "affabs_2", "ncp_min_2d"][idx];
        let p = problem(id).unwrap();
        // include the kinks themselves
        let x = if ux[0] > 0.5 { p.known_roots[0].clone() } else { point_in(id, &ux) };
        let clarke = check_clarke_nonsingular(p.map.as_ref(), &x, CLARKE_SAMPLES).unwrap();
        let thib = check_thibault_condition(p.map.as_ref(), &x, &LimitGrid::default(), &default_directions(x.len())).unwrap();
        let b = check_bsub_nonsingular(p.map.as_ref(), &x).unwrap();
        if clarke.verdict == ClarkeVerdict::CertifiedRegular {
            prop_assert!(thib.holds(), "{id} at {x}: {thib:?}");
        }
        if thib.holds() {
            prop_assert!(b.holds(), "{id} at {x}: {b:?}");
        }
    }
}

#[test]
fn affabs_elements_nonsingular_everywhere() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for id in ["affabs_2", "affabs_10"] {
        let p = problem(id).unwrap();
        let n = p.map.input_dim();
        for k in 0..100 {
            let mut x = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            // every tenth point sits on kinks in its first coordinates
            if k % 10 == 0 {
                for i in 0..n.min(3) {
                    x[i] = 0.0;
                }
            }
            let v = check_bsub_nonsingular(p.map.as_ref(), &x).unwrap();
            assert!(v.holds(), "{id} at {x}: {v:?}");
        }
    }
}

#[test]
fn coderivative_zero_iff_infinite_modulus() {
    for id in ["abs1d", "absaff1d", "linear2x", "smooth1d"] {
        let p = problem(id).unwrap();
        let root = p.known_roots.last().unwrap();
        let zero_in_table = [1.0, -1.0].iter().any(|&z| {
            scalarized_coderivative_1d(id, root[0], z)
                .unwrap()
                .contains(&Vector::zeros(1), TOL_SET)
        });
        let region = Region {
            center: root.clone(),
            radius: 0.5,
        };
        let mu =
            estimate_metric_regularity_modulus(p.map.as_ref(), &region, &ModulusGrid::default())
                .unwrap();
        assert_eq!(zero_in_table, mu.is_infinite(), "{id}: {mu:?}");
    }
}

#[test]
fn nonlipschitz_jacobian_blows_up() {
    // growth is only like x2^(-1/2), so the path goes down to 2^-40
    let p = problem("nonlip2d").unwrap();
    let worst = (1..=40)
        .map(|k| {
            let x2 = 2f64.powi(-k);
            let j = p
                .map
                .jacobian(&Vector::from_vec(vec![x2.powi(3), x2]))
                .unwrap()
                .unwrap();
            j.norm()
        })
        .fold(0.0, f64::max);
    assert!(worst > 1e3, "{worst}");
}

#[test]
fn kink_inside_the_ball_breaks_the_linear_model() {
    // x + |x|/2 from 1 with r = 3.2: pairs across 0 give alpha close to 1
    // against mu = 2, so alpha·mu < 1 fails.
    let p = problem("absaff1d").unwrap();
    let rep = nsnewton::kantorovich_check(
        p.map.as_ref(),
        &Vector::from_element(1, 1.0),
        3.2,
        &LimitGrid::default(),
    )
    .unwrap();
    assert!((rep.mu - 2.0).abs() < 0.05, "{}", rep.mu);
    assert!(rep.alpha > 0.9 && rep.alpha <= 1.0 + 1e-9, "{}", rep.alpha);
    assert!(!rep.condition_a && !rep.passes);
}

#[test]
fn reports_round_trip_through_json() {
    use nsnewton::regularity::{analyze_regularity, RegularityReport};
    let g = LimitGrid::default();
    let p = problem("abs1d").unwrap();
    let rep = analyze_regularity(p.map.as_ref(), &Vector::zeros(1), &g, Some("abs1d")).unwrap();
    let back: RegularityReport =
        serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(back, rep);

    let lin = problem("linear2x").unwrap();
    let k = nsnewton::kantorovich_check(lin.map.as_ref(), &Vector::from_element(1, 1.0), 1.0, &g)
        .unwrap();
    let back: nsnewton::KantorovichReport =
        serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
    assert_eq!(back, k);
}
