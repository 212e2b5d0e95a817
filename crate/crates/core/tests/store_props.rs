use std::sync::Arc;

use oed::config::RunConfig;
use oed::optimizer::Source;
use oed::problem::{Design, ObjectiveSpec, Problem, Value, VariableSpec};
use oed::store::{Experiment, ManualClock, RecordTable, Status, StoreError};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Insert { n: usize, valid: bool },
    Start { id: u64, empty_worker: bool },
    Complete { id: u64, arity: usize, finite: bool },
    Fail { id: u64 },
    Tick(i64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (0usize..4, prop::bool::weighted(0.85)).prop_map(|(n, valid)| Op::Insert { n, valid }),
        3 => (1u64..14, prop::bool::weighted(0.1)).prop_map(|(id, empty_worker)| Op::Start { id, empty_worker }),
        3 => (1u64..14, prop::sample::select(vec![2usize, 2, 2, 1, 3]), prop::bool::weighted(0.9))
            .prop_map(|(id, arity, finite)| Op::Complete { id, arity, finite }),
        1 => (1u64..14).prop_map(|id| Op::Fail { id }),
        1 => (0i64..5000).prop_map(Op::Tick),
    ]
}

fn problem() -> Problem {
    Problem::new(
        vec![VariableSpec::continuous("x", 0.0, 1.0), VariableSpec::discrete("k", 0, 3)],
        vec![ObjectiveSpec::minimize("a"), ObjectiveSpec::maximize("b")],
    )
}

fn design(i: usize, valid: bool) -> Design {
    let x = if valid { (i % 10) as f64 / 10.0 } else { 1.5 };
    Design::new().with("x", Value::Real(x)).with("k", Value::Int((i % 4) as i64))
}

/// Which operations the model says must succeed.
fn legal(model: &[Status], op: &Op) -> bool {
    let status = |id: u64| model.get((id as usize).wrapping_sub(1)).copied();
    match *op {
        Op::Insert { valid, .. } => valid,
        Op::Start { id, empty_worker } => status(id) == Some(Status::Pending) && !empty_worker,
        Op::Complete { id, arity, finite } => status(id).is_some_and(|s| !s.is_terminal()) && arity == 2 && finite,
        Op::Fail { id } => status(id).is_some_and(|s| !s.is_terminal()),
        Op::Tick(_) => true,
    }
}

fn apply(exp: &Experiment, clock: &ManualClock, op: &Op, counter: &mut usize) -> Result<(), StoreError> {
    match *op {
        Op::Insert { n, valid } => {
            let designs: Vec<Design> = (0..n)
                .map(|j| {
                    *counter += 1;
                    // One bad design spoils the whole batch.
                    design(*counter, valid || j + 1 < n)
                })
                .collect();
            exp.insert_pending(&designs, Source::Manual, 0, "prop").map(|_| ())
        }
        Op::Start { id, empty_worker } => exp.start(id, Some(if empty_worker { "" } else { "w" }), "prop").map(|_| ()),
        Op::Complete { id, arity, finite } => {
            let mut y: Vec<f64> = (0..arity).map(|j| j as f64 - 0.5).collect();
            if !finite {
                y[0] = f64::NAN;
            }
            exp.complete(id, y, "", "prop").map(|_| ())
        }
        Op::Fail { id } => exp.fail(id, "broken", "prop").map(|_| ()),
        Op::Tick(ms) => {
            clock.advance(ms);
            Ok(())
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transitions_follow_the_model_and_replay(ops in prop::collection::vec(op(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.oed");
        let clock = Arc::new(ManualClock::new(1_000));
        let exp = Experiment::create_at(&path, "e", problem(), RunConfig::default(), clock.clone()).unwrap();
        let mut model: Vec<Status> = Vec::new();
        let mut counter = 0;
        for op in &ops {
            let before = exp.all_records();
            let expect_ok = legal(&model, op) && !matches!(op, Op::Insert { n: 0, .. });
            let result = apply(&exp, &clock, op, &mut counter);
            match (&result, op) {
                (Ok(()), Op::Insert { n, .. }) => model.extend(std::iter::repeat_n(Status::Pending, *n)),
                (Ok(()), Op::Start { id, .. }) => model[*id as usize - 1] = Status::InEvaluation,
                (Ok(()), Op::Complete { id, .. }) => model[*id as usize - 1] = Status::Evaluated,
                (Ok(()), Op::Fail { id }) => model[*id as usize - 1] = Status::Failed,
                (Ok(()), Op::Tick(_)) => {}
                (Err(_), _) => prop_assert_eq!(&exp.all_records(), &before, "rejected op changed state"),
            }
            if !matches!(op, Op::Insert { n: 0, .. }) {
                prop_assert_eq!(result.is_ok(), expect_ok, "{:?} -> {:?}", op, result);
            }
        }
        let statuses: Vec<Status> = exp.all_records().iter().map(|r| r.status).collect();
        prop_assert_eq!(&statuses, &model);
        let ids: Vec<u64> = exp.all_records().iter().map(|r| r.id).collect();
        prop_assert_eq!(ids, (1..=model.len() as u64).collect::<Vec<_>>());

        let replayed = RecordTable::replay(exp.problem(), exp.log().iter()).unwrap();
        let current = exp.all_records();
        prop_assert_eq!(replayed.records(), current.as_slice());
        drop(exp);
        let reopened = Experiment::open_at(&path, clock).unwrap();
        prop_assert_eq!(reopened.all_records().len(), model.len());
        prop_assert_eq!(serde_json::to_string(&reopened.all_records()).unwrap(), serde_json::to_string(&replayed.records()).unwrap());
    }
}

#[test]
fn failed_insert_does_not_consume_ids() {
    let exp = Experiment::in_memory("e", problem(), RunConfig::default(), Arc::new(ManualClock::new(0))).unwrap();
    assert_eq!(exp.insert_pending(&[design(1, true)], Source::Manual, 0, "t").unwrap(), vec![1]);
    assert!(exp.insert_pending(&[design(2, true), design(3, false)], Source::Manual, 0, "t").is_err());
    assert_eq!(exp.insert_pending(&[design(4, true)], Source::Manual, 0, "t").unwrap(), vec![2]);
}
