use nsnewton::newton::Termination;
use nsnewton::{Method, SolverConfig};
use nsnewton_cli::{csv_trace, parse_vector, RunRecord, TraceSummary, SCHEMA_VERSION};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

prop_compose! {
    fn records()(n in 1usize..4, steps in 0usize..5, seed in any::<u64>(), m in 0usize..4)
        (x in prop::collection::vec(prop::collection::vec(finite(), n), steps + 1),
         res in prop::collection::vec(finite(), steps + 1),
         step in prop::collection::vec(finite(), steps),
         ids in prop::collection::vec(prop::option::of(0usize..64), steps),
         seed in Just(seed), m in Just(m), steps in Just(steps))
        -> RunRecord
    {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            problem: "affabs_2".into(),
            method: Method::ALL[m],
            x0: x[0].clone(),
            root: None,
            seed,
            config: SolverConfig::with_method(Method::ALL[m]),
            trace: TraceSummary {
                termination: if steps % 2 == 0 { Termination::Converged } else { Termination::Diverged("left the domain".into()) },
                iterations: steps,
                final_residual: *res.last().unwrap(),
                final_iterate: x.last().unwrap().clone(),
                iterates: x,
                residual_norms: res,
                step_norms: step.clone(),
                element_ids: ids,
                membership_residuals: step,
                errors: None,
            },
            rate: None,
            timestamps: None,
        }
    }
}

proptest! {
    #[test]
    fn json_round_trip_is_lossless(r in records()) {
        let text = serde_json::to_string(&r).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn csv_values_round_trip(r in records()) {
        let csv = csv_trace(&r);
        for (line, x) in csv.lines().skip(1).zip(&r.trace.iterates) {
            let cols: Vec<f64> = line.split(',').skip(1).take(x.len()).map(|c| c.parse().unwrap()).collect();
            prop_assert_eq!(&cols, x);
        }
    }

    #[test]
    fn vectors_round_trip(v in prop::collection::vec(finite(), 1..6)) {
        let text = v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let parsed = parse_vector(&text).unwrap();
        prop_assert_eq!(parsed.as_slice(), &v[..]);
    }
}
