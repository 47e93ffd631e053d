//! Run-log format: canonical serialization, golden bytes and round trips.

use proptest::prelude::*;
use trajsim::run_model::{parse_run_log, serialize_run_set};
use trajsim::{Curriculum, Error, ExampleId, LossTrajectory, Run, RunRole, RunSet};

const INPUT: &[u8] = include_bytes!("fixtures/three_runs_input.log");
const GOLDEN: &[u8] = include_bytes!("fixtures/three_runs.golden.log");

#[test]
fn three_run_fixture_serializes_to_golden_bytes() {
    let rs = parse_run_log(INPUT).unwrap();
    assert_eq!(rs.runs().len(), 3);
    assert_eq!(serialize_run_set(&rs), GOLDEN);
}

#[test]
fn golden_document_is_a_fixed_point() {
    let rs = parse_run_log(GOLDEN).unwrap();
    assert_eq!(serialize_run_set(&rs), GOLDEN);
    assert_eq!(parse_run_log(&serialize_run_set(&rs)).unwrap(), rs);
}

#[test]
fn fixture_contents_survive_parsing() {
    let rs = parse_run_log(GOLDEN).unwrap();
    let alpha = rs.run("alpha").unwrap();
    assert_eq!(alpha.curriculum().batch(3), &[1, 1]);
    assert_eq!(alpha.trajectory(2).unwrap().loss_at(2), None);
    assert_eq!(alpha.trajectory(2).unwrap().loss_at(3), Some(0.1));
    assert_eq!(rs.run("beta").unwrap().trajectory(2).unwrap().loss_at(2), Some(0.30000000000000004));
    assert_eq!(rs.run("gamma").unwrap().role(), RunRole::Future);
    assert_eq!(rs.run("gamma").unwrap().trajectory(1).unwrap().initial_loss, 1.2345678901234567);
    assert_eq!(rs.past_runs().len(), 2);
    assert_eq!(rs.test_ids(), vec![1, 2]);
}

#[test]
fn serializing_twice_is_identical() {
    let rs = parse_run_log(INPUT).unwrap();
    assert_eq!(serialize_run_set(&rs), serialize_run_set(&rs.clone()));
}

#[test]
fn validation_errors_name_run_and_field() {
    let bad = String::from_utf8(GOLDEN.to_vec()).unwrap().replace("[[4],[3]", "[[5],[3]");
    let err = parse_run_log(bad.as_bytes()).unwrap_err();
    assert!(matches!(err, Error::Validation { .. }));
    let msg = err.to_string();
    assert!(msg.contains("run beta") && msg.contains("steps[0]") && msg.contains("id out of range"), "{msg}");
}

#[test]
fn malformed_line_reports_its_line_number() {
    let mut bad = GOLDEN.to_vec();
    bad.extend_from_slice(b"{\"run_id\": \"broken\"\n");
    match parse_run_log(&bad).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 5),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn arb_run_set() -> impl Strategy<Value = RunSet> {
    (1usize..6, 1u32..4).prop_flat_map(|(n, m)| {
        let run = (
            prop::collection::vec(prop::collection::vec(1..=n as ExampleId, 1..4), 1..7),
            any::<bool>(),
            prop::collection::vec((-1e6f64..1e6, prop::collection::vec(any::<bool>(), 6)), m as usize),
            prop::collection::vec(-1e3f64..1e3, 6),
        );
        prop::collection::vec(run, 0..4).prop_map(move |runs| {
            let runs = runs
                .into_iter()
                .enumerate()
                .map(|(r, (steps, future, per_test, values))| {
                    let t_max = steps.len();
                    let curriculum = Curriculum::new(n, steps).unwrap();
                    let trajectories = per_test
                        .into_iter()
                        .enumerate()
                        .map(|(z, (l0, mask))| {
                            // Sparse recording: keep step t when its mask bit is set.
                            let mut tr = LossTrajectory::dense(z as u32 + 1, l0, &values[..t_max]);
                            tr.losses.retain(|&t, _| mask[t - 1]);
                            tr
                        })
                        .collect();
                    let role = if future { RunRole::Future } else { RunRole::Past };
                    Run::new(format!("run-{r}"), role, curriculum, trajectories).unwrap()
                })
                .collect();
            RunSet::with_default_names(n, m as usize, runs).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn parse_inverts_serialize(rs in arb_run_set()) {
        let bytes = serialize_run_set(&rs);
        let back = parse_run_log(&bytes).unwrap();
        prop_assert_eq!(&back, &rs);
        prop_assert_eq!(serialize_run_set(&back), bytes);
    }

    #[test]
    fn occurrences_partition_the_batches(rs in arb_run_set()) {
        for run in rs.runs() {
            let total: usize = (1..=rs.n() as ExampleId)
                .map(|id| run.curriculum().occurrence_steps(id).unwrap().iter().map(|o| o.multiplicity).sum::<usize>())
                .sum();
            let batch_sizes: usize = run.curriculum().steps().iter().map(Vec::len).sum();
            prop_assert_eq!(total, batch_sizes);
        }
    }
}
