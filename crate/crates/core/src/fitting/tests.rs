use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::exec::ExecMode;
use crate::run_model::{Curriculum, ExampleId, LossTrajectory, Run, RunRole};
use crate::toy_lab::{generate_synthetic_runs, stream_rng, CurriculumSource, L0Sampler};
use crate::Error;

fn single_run(id: &str, n: usize, steps: Vec<Vec<ExampleId>>, l0: f64, losses: &[f64]) -> Run {
    let curriculum = Curriculum::new(n, steps).unwrap();
    Run::new(id, RunRole::Past, curriculum, vec![LossTrajectory::dense(1, l0, losses)]).unwrap()
}

/// Explicit-inverse normal equations solved by Gauss–Jordan elimination with
/// partial pivoting, independent of the library factorizations.
fn normal_equations_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let p = x.ncols();
    let mut a = vec![vec![0.0; 2 * p]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..x.nrows()).map(|s| x[(s, i)] * x[(s, j)]).sum::<f64>() + if i == j { lambda } else { 0.0 };
        }
        a[i][p + i] = 1.0;
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    let xty: Vec<f64> = (0..p).map(|i| (0..x.nrows()).map(|s| x[(s, i)] * y[s]).sum()).collect();
    (0..p).map(|i| (0..p).map(|j| a[i][p + j] * xty[j]).sum()).collect()
}

#[test]
fn linear_design_by_hand() {
    let run = single_run("r", 2, vec![vec![1], vec![2]], 1.0, &[0.8, 0.7]);
    let d = build_design(&[&run], 1, SimulatorVariant::Linear).unwrap();
    assert_eq!(d.x, DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.8, 0.0, 1.0]));
    assert_eq!(d.y.as_slice(), &[0.8, 0.7]);
    assert_eq!((d.rows[0].step, d.rows[1].step), (1, 2));
}

#[test]
fn additive_design_uses_deltas() {
    let run = single_run("r", 2, vec![vec![1], vec![2]], 1.0, &[0.8, 0.7]);
    let d = build_design(&[&run], 1, SimulatorVariant::Additive).unwrap();
    assert_eq!(d.x, DMatrix::identity(2, 2));
    assert!((d.y[0] + 0.2).abs() < 1e-15 && (d.y[1] + 0.1).abs() < 1e-15);
    let m = build_design(&[&run], 1, SimulatorVariant::Multiplicative).unwrap();
    assert_eq!(m.x, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.8]));
}

#[test]
fn repeated_example_counts_multiplicity() {
    let run = single_run("r", 3, vec![vec![1, 1]], 2.5, &[2.0]);
    let d = build_design(&[&run], 1, SimulatorVariant::Linear).unwrap();
    assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), vec![5.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
}

#[test]
fn sparse_losses_skip_unusable_steps() {
    let curriculum = Curriculum::new(2, vec![vec![1], vec![2], vec![1]]).unwrap();
    let mut tr = LossTrajectory::dense(1, 1.0, &[0.9, 0.8, 0.7]);
    tr.losses.remove(&2);
    let run = Run::new("r", RunRole::Past, curriculum, vec![tr]).unwrap();
    let d = build_design(&[&run], 1, SimulatorVariant::Linear).unwrap();
    assert_eq!(d.rows_len(), 1);
    assert_eq!(d.rows[0].step, 1);
    assert!(matches!(build_design(&[&run], 2, SimulatorVariant::Linear), Err(Error::EmptyProblem { .. })));
}

#[test]
fn ridge_identity_design() {
    let x = DMatrix::identity(2, 2);
    let y = DVector::from_vec(vec![3.0, 4.0]);
    assert_eq!(solve_ridge_system(&x, &y, 0.0).unwrap().weights.as_slice(), &[3.0, 4.0]);
    let w = solve_ridge_system(&x, &y, 1.0).unwrap().weights;
    assert!((w[0] - 1.5).abs() < 1e-15 && (w[1] - 2.0).abs() < 1e-15);
}

#[test]
fn ridge_matches_explicit_inverse_oracle() {
    let mut rng = stream_rng(7, 0);
    for lambda in [0.0, 1e-3, 0.5] {
        let x = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let w = solve_ridge_system(&x, &y, lambda).unwrap().weights;
        let oracle = normal_equations_oracle(&x, &y, lambda);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn ridge_rejects_non_finite_and_handles_empty() {
    let x = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
    assert!(matches!(solve_ridge_system(&x, &DVector::from_vec(vec![1.0]), 0.0), Err(Error::Numeric(_))));
    let empty = solve_ridge_system(&DMatrix::zeros(0, 3), &DVector::zeros(0), 0.1).unwrap();
    assert_eq!(empty.weights.as_slice(), &[0.0; 3]);
}

#[test]
fn univariate_two_occurrences() {
    let run = single_run("r", 1, vec![vec![1], vec![1]], 10.0, &[8.0, 6.2]);
    let (a, b) = fit_univariate_bs1(&[&run], 1, 1, 0.0).unwrap();
    assert!((a - 0.9).abs() < 1e-12 && (b + 1.0).abs() < 1e-12, "{a} {b}");
}

#[test]
fn univariate_degenerate_cases() {
    let once = single_run("r", 2, vec![vec![1], vec![2]], 10.0, &[8.0, 7.0]);
    assert!(matches!(fit_univariate_bs1(&[&once], 1, 1, 0.0), Err(Error::Underdetermined { .. })));
    let r1 = single_run("a", 2, vec![vec![1]], 5.0, &[4.0]);
    let r2 = single_run("b", 2, vec![vec![1]], 5.0, &[3.0]);
    assert!(matches!(fit_univariate_bs1(&[&r1, &r2], 1, 1, 0.0), Err(Error::Underdetermined { .. })));
    assert!(matches!(fit_univariate_bs1(&[&r1], 1, 2, 0.0), Err(Error::NoData { train_id: 2 })));
    // A penalty makes the single-occurrence problem well-posed.
    assert!(fit_univariate_bs1(&[&once], 1, 1, 0.1).is_ok());
}

#[test]
fn univariate_shrinks_with_lambda() {
    let run = single_run("r", 1, vec![vec![1], vec![1], vec![1]], 10.0, &[8.0, 6.2, 4.9]);
    let mut last = f64::INFINITY;
    for lambda in [0.0, 0.1, 1.0, 10.0, 1e3, 1e6] {
        let (a, b) = fit_univariate_bs1(&[&run], 1, 1, lambda).unwrap();
        let norm = a.hypot(b);
        assert!(norm <= last + 1e-12);
        last = norm;
    }
    assert!(last < 1e-3);
}

#[test]
fn closed_form_additive_examples() {
    let run = single_run("r", 3, vec![vec![1], vec![2], vec![1]], 10.0, &[8.0, 8.0, 4.0]);
    let b = closed_form_additive(&[&run], 1).unwrap();
    assert_eq!(b, vec![Some(-3.0), Some(0.0), None]);
    let batched = single_run("r", 3, vec![vec![1, 2]], 10.0, &[8.0]);
    assert!(matches!(closed_form_additive(&[&batched], 1), Err(Error::UnsupportedBatchSize { .. })));
}

/// Random batch-size-1 run where every example occurs several times.
fn random_bs1_run(seed: u64, n: usize, t: usize) -> Run {
    let mut rng = stream_rng(seed, 3);
    let steps: Vec<Vec<ExampleId>> = (0..t).map(|s| vec![(s % n) as ExampleId + 1]).collect();
    let mut loss = 5.0;
    let losses: Vec<f64> = (0..t)
        .map(|_| {
            loss = loss * rng.random_range(0.7..1.05) + rng.random_range(-0.2..0.2);
            loss
        })
        .collect();
    single_run(&format!("bs1-{seed}"), n, steps, 5.0, &losses)
}

#[test]
fn linear_fit_decomposes_into_univariate_problems() {
    let run = random_bs1_run(1, 4, 20);
    for lambda in [0.0, 0.3] {
        let params = fit_simulator(&[&run], 1, SimulatorVariant::Linear, lambda).unwrap();
        for i in 1..=4 {
            let (a, b) = fit_univariate_bs1(&[&run], 1, i, lambda).unwrap();
            let k = i as usize - 1;
            assert!((params.multiplicative[k] - a).abs() < 1e-10, "A_{i}: {} vs {a}", params.multiplicative[k]);
            assert!((params.additive[k] - b).abs() < 1e-10, "B_{i}: {} vs {b}", params.additive[k]);
        }
    }
}

#[test]
fn additive_fit_equals_closed_form() {
    for seed in 0..5 {
        let run = random_bs1_run(seed, 5, 23);
        let params = fit_simulator(&[&run], 1, SimulatorVariant::Additive, 0.0).unwrap();
        let closed = closed_form_additive(&[&run], 1).unwrap();
        for (fit, cf) in params.additive.iter().zip(closed) {
            assert!((fit - cf.unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_losses_are_flagged_rank_deficient() {
    let run = single_run("r", 2, vec![vec![1], vec![2], vec![1], vec![2]], 3.0, &[3.0; 4]);
    let params = fit_simulator(&[&run], 1, SimulatorVariant::Linear, 0.0).unwrap();
    let diag = params.diagnostics.unwrap();
    assert!(diag.rank_deficient);
    assert!(diag.rank < 4);
    let report = check_identifiability(&build_design(&[&run], 1, SimulatorVariant::Linear).unwrap());
    assert_eq!(report.collinear, vec![1, 2]);
}

fn q_runs(n: usize, k: usize, runs: usize, seed: u64) -> (Vec<SimulatorParams>, crate::run_model::RunSet) {
    let mut rng = stream_rng(seed, 99);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..0.5)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.05)).collect();
    let truth = vec![SimulatorParams::linear(1, a, b).unwrap()];
    let source = CurriculumSource::QMatrix { k, repeats: 2, relabel: false };
    let rs =
        generate_synthetic_runs(&truth, runs, &source, &L0Sampler::Uniform { low: 2.0, high: 4.0 }, 0.0, seed).unwrap();
    (truth, rs)
}

#[test]
fn q_curriculum_recovers_parameters_exactly() {
    let (truth, rs) = q_runs(9, 2, 1, 3);
    let runs: Vec<&Run> = rs.runs().iter().collect();
    let report = check_identifiability(&build_design(&runs, 1, SimulatorVariant::Linear).unwrap());
    assert!(report.all_conditions_pass() && report.full_rank && report.rank == 18);
    let fit = fit_simulator(&runs, 1, SimulatorVariant::Linear, 0.0).unwrap();
    for (got, want) in fit.multiplicative.iter().zip(&truth[0].multiplicative) {
        assert!((got - want).abs() <= 1e-8 * want.abs());
    }
    for (got, want) in fit.additive.iter().zip(&truth[0].additive) {
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-3));
    }
}

#[test]
fn identifiability_conditions_are_reported() {
    let (_, rs) = q_runs(6, 2, 1, 4);
    let full = rs.runs()[0].clone();
    let steps = full.curriculum().steps()[..11].to_vec();
    let mut tr = full.trajectories()[0].clone();
    tr.losses.retain(|&t, _| t <= 11);
    let short = Run::new("short", RunRole::Past, Curriculum::new(6, steps).unwrap(), vec![tr]).unwrap();
    let report = check_identifiability(&build_design(&[&short], 1, SimulatorVariant::Linear).unwrap());
    assert!(report.too_few_rows && report.rank < 12 && !report.full_rank);

    let once = single_run("once", 2, vec![vec![1], vec![2], vec![1]], 3.0, &[2.0, 1.5, 1.2]);
    let report = check_identifiability(&build_design(&[&once], 1, SimulatorVariant::Linear).unwrap());
    assert_eq!(report.under_observed, vec![2]);
    assert!(report.rank < 4);
}

#[test]
fn fit_all_is_mode_independent() {
    let (_, rs) = q_runs(6, 2, 3, 5);
    let runs: Vec<&Run> = rs.runs().iter().collect();
    let seq = fit_all(&runs, &[1], SimulatorVariant::Linear, 1e-3, ExecMode::Sequential).unwrap();
    let par = fit_all(&runs, &[1], SimulatorVariant::Linear, 1e-3, ExecMode::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn lambda_selection() {
    let (_, rs) = q_runs(6, 2, 4, 6);
    let runs: Vec<&Run> = rs.runs().iter().collect();
    let (fit, val) = runs.split_at(3);
    let one = select_lambda(fit, val, &[1], SimulatorVariant::Linear, &[0.25], ExecMode::Sequential).unwrap();
    assert_eq!(one.lambda, 0.25);
    let clean =
        select_lambda(fit, val, &[1], SimulatorVariant::Linear, &[0.0, 0.1, 1.0], ExecMode::Sequential).unwrap();
    assert_eq!(clean.lambda, 0.0);
    assert!(select_lambda(fit, fit, &[1], SimulatorVariant::Linear, &[0.0], ExecMode::Sequential).is_err());
}

#[test]
fn lambda_selection_on_noisy_runs_beats_unregularized() {
    let mut rng = stream_rng(11, 0);
    let n = 6;
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..0.5)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.0)).collect();
    let truth = vec![SimulatorParams::linear(1, a, b).unwrap()];
    let source = CurriculumSource::ShuffledEpochs { epochs: 3, batch_size: 2 };
    let rs = generate_synthetic_runs(&truth, 6, &source, &L0Sampler::Uniform { low: 2.0, high: 3.0 }, 0.1, 1).unwrap();
    let runs: Vec<&Run> = rs.runs().iter().collect();
    let (fit, val) = runs.split_at(4);
    let sel =
        select_lambda(fit, val, &[1], SimulatorVariant::Linear, &[0.0, 1e-3, 1e-1], ExecMode::Sequential).unwrap();
    let score = |l: f64| sel.scores.iter().find(|s| s.lambda == l).unwrap().mean_mse;
    assert!(score(sel.lambda).unwrap() <= score(0.0).unwrap_or(f64::INFINITY));
}

#[test]
fn params_document_round_trip() {
    let run = random_bs1_run(2, 3, 12);
    let sims: Vec<SimulatorParams> =
        SimulatorVariant::ALL.iter().map(|&v| fit_simulator(&[&run], 1, v, 0.01).unwrap()).collect();
    for sim in sims {
        let doc = ParamsDocument::new(vec![sim]).unwrap();
        let back = ParamsDocument::from_bytes(&doc.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), doc.to_bytes());
        assert_eq!(back, doc);
    }
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    (y - x * w).norm_squared() + lambda * w.norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_solution_is_a_minimum(seed in any::<u64>(), lambda in 1e-4f64..10.0, rows in 1usize..10, cols in 1usize..6) {
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
        let w = solve_ridge_system(&x, &y, lambda).unwrap().weights;
        let best = objective(&x, &y, &w, lambda);
        for _ in 0..8 {
            let d = DVector::from_fn(cols, |_, _| rng.random_range(-1.0..1.0));
            let d = d.normalize() * 1e-3;
            prop_assert!(objective(&x, &y, &(&w + d), lambda) >= best - 1e-12 * best.max(1.0));
        }
    }

    #[test]
    fn ridge_norm_decreases_with_lambda(seed in any::<u64>(), l1 in 0.0f64..5.0, dl in 1e-3f64..5.0) {
        let mut rng = stream_rng(seed, 1);
        let x = DMatrix::from_fn(8, 5, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(8, |_, _| rng.random_range(-2.0..2.0));
        let w1 = solve_ridge_system(&x, &y, l1).unwrap().weights.norm();
        let w2 = solve_ridge_system(&x, &y, l1 + dl).unwrap().weights.norm();
        prop_assert!(w1 >= w2 - 1e-12);
    }
}
