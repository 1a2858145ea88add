mod common;

use common::random_instance;
use l1trend::oracle::{kkt_check, oracle_solve, DenseProblem};
use l1trend::solver::{kkt_report, objective, CoordinateDescent};
use l1trend::{
    fit_path, fit_single, lambda_max, ols_init, AdaptiveWeights, Bounds, ColumnKind, Grid, LambdaGrid, PreparedSignal,
    SolverConfig, SparseCoefficients,
};
use proptest::prelude::*;

fn setup(seed: u64) -> (common::Instance, PreparedSignal, AdaptiveWeights, f64) {
    let inst = random_instance(seed, 10..=40, 3);
    let prepared = PreparedSignal::new(&inst.spec, &inst.signal, true).unwrap();
    let weights = AdaptiveWeights::new(ols_init(&inst.spec, &prepared), inst.gamma).unwrap();
    let lambda = inst.lambda_ratio * lambda_max(&inst.spec, &prepared, &weights.weights()).unwrap();
    (inst, prepared, weights, lambda)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn converged_fits_satisfy_kkt(seed in any::<u64>()) {
        let (inst, prepared, weights, lambda) = setup(seed);
        let fit = fit_single(&inst.spec, &prepared, lambda, &weights, &SparseCoefficients::zeros(), &SolverConfig::default()).unwrap();
        prop_assume!(fit.converged);
        let theta = fit.coefficients.to_dense(&inst.spec);
        let report = kkt_report(&inst.spec, &prepared, &weights.weights(), lambda, &theta).unwrap();
        prop_assert!(report.max_violation() < 1e-6 * (1.0 + lambda), "{:?}", report);
        prop_assert_eq!(fit.n_active, fit.coefficients.active().count());
        prop_assert!(fit.rss >= 0.0);
    }

    #[test]
    fn objective_never_increases_per_update(seed in any::<u64>()) {
        let (inst, prepared, weights, lambda) = setup(seed);
        let w = weights.weights();
        let mut state = CoordinateDescent::new(&inst.spec, &prepared, &w, lambda, &vec![0.0; inst.spec.p()]).unwrap();
        let mut last = state.objective();
        for sweep in 0..30 {
            for pos in 0..inst.spec.p() {
                state.update(pos).unwrap();
                let now = state.objective();
                prop_assert!(now <= last + 1e-10, "coordinate {} raised objective {} -> {}", pos, last, now);
                last = now;
            }
            if sweep % 3 == 2 {
                state.block_update().unwrap();
                let now = state.objective();
                prop_assert!(now <= last + 1e-10, "block step raised objective {} -> {}", last, now);
                last = now;
            }
        }
    }

    #[test]
    fn incremental_correlations_match_materialized_residual(seed in any::<u64>()) {
        let (inst, prepared, weights, lambda) = setup(seed);
        let w = weights.weights();
        let mut state = CoordinateDescent::new(&inst.spec, &prepared, &w, lambda, &vec![0.0; inst.spec.p()]).unwrap();
        for pos in 0..inst.spec.p() {
            state.update(pos).unwrap();
        }
        let fitted = inst.spec.apply(state.theta());
        let r: Vec<f64> = prepared.y().iter().zip(&fitted).map(|(y, f)| y - f).collect();
        for (pos, c) in inst.spec.columns().enumerate() {
            let col = inst.spec.materialize_column(c);
            let dense: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
            let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt() * r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((state.residual_correlation(pos) - dense).abs() <= 1e-8 * (dense.abs() + scale + 1e-12), "{}", c);
        }
    }

    #[test]
    fn gamma_zero_is_plain_lasso(seed in any::<u64>()) {
        let (inst, prepared, _, _) = setup(seed);
        let ols = ols_init(&inst.spec, &prepared);
        let zero = AdaptiveWeights::new(ols, 0.0).unwrap();
        let ones = vec![1.0; inst.spec.p()];
        prop_assert_eq!(zero.weights(), ones.clone());
        let lambda = 0.05 * lambda_max(&inst.spec, &prepared, &ones).unwrap();
        let cfg = SolverConfig::default();
        let fit = fit_single(&inst.spec, &prepared, lambda, &zero, &SparseCoefficients::zeros(), &cfg).unwrap();
        let mut plain = CoordinateDescent::new(&inst.spec, &prepared, &ones, lambda, &vec![0.0; inst.spec.p()]).unwrap();
        let (converged, cycles) = plain.run(&cfg).unwrap();
        prop_assert_eq!(fit.converged, converged);
        prop_assert_eq!(fit.cycles_used, cycles);
        prop_assert_eq!(fit.coefficients.to_dense(&inst.spec), plain.theta().to_vec());
    }

    #[test]
    fn agrees_with_proximal_gradient_oracle(seed in any::<u64>()) {
        let (inst, prepared, weights, lambda) = setup(seed);
        let w = weights.weights();
        let fit = fit_single(&inst.spec, &prepared, lambda, &weights, &SparseCoefficients::zeros(), &SolverConfig::default()).unwrap();
        prop_assume!(fit.converged);
        let theta = fit.coefficients.to_dense(&inst.spec);
        let prob = DenseProblem::from_dictionary(&inst.spec, prepared.y(), &w, lambda).unwrap();
        let reference = oracle_solve(&prob, 1e-10).unwrap();
        let (ours, theirs) = (prob.objective(&theta), prob.objective(&reference));
        prop_assert!((ours - theirs).abs() <= 1e-6 * theirs.abs(), "{} vs {}", ours, theirs);
        prop_assert!((ours - objective(&inst.spec, &prepared, &w, lambda, &theta)).abs() <= 1e-9 * ours.abs());
        prop_assert!(kkt_check(&prob, &theta).max() < 1e-6 * (1.0 + lambda));
    }

    #[test]
    fn warm_and_cold_starts_reach_the_same_objective(seed in any::<u64>()) {
        let (inst, prepared, weights, lambda) = setup(seed);
        let w = weights.weights();
        let cfg = SolverConfig::default();
        let cold = fit_single(&inst.spec, &prepared, lambda, &weights, &SparseCoefficients::zeros(), &cfg).unwrap();
        let start = fit_single(&inst.spec, &prepared, 3.0 * lambda, &weights, &SparseCoefficients::zeros(), &cfg).unwrap();
        let warm = fit_single(&inst.spec, &prepared, lambda, &weights, &start.coefficients, &cfg).unwrap();
        prop_assume!(cold.converged && warm.converged);
        let a = objective(&inst.spec, &prepared, &w, lambda, &cold.coefficients.to_dense(&inst.spec));
        let b = objective(&inst.spec, &prepared, &w, lambda, &warm.coefficients.to_dense(&inst.spec));
        prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1e-12), "{} vs {}", a, b);
    }

    #[test]
    fn bounded_blocks_stay_inside_their_bounds(seed in any::<u64>()) {
        let (inst, _, _, _) = setup(seed);
        let spec = inst.spec.clone()
            .with_bounds(ColumnKind::Step, Bounds::non_negative())
            .with_bounds(ColumnKind::Spike, Bounds::new(-0.5, 0.5).unwrap());
        let prepared = PreparedSignal::new(&spec, &inst.signal, true).unwrap();
        let weights = AdaptiveWeights::new(ols_init(&spec, &prepared), inst.gamma).unwrap();
        let lambda = inst.lambda_ratio * lambda_max(&spec, &prepared, &weights.weights()).unwrap();
        let fit = fit_single(&spec, &prepared, lambda, &weights, &SparseCoefficients::zeros(), &SolverConfig::default()).unwrap();
        for &(c, v) in fit.coefficients.entries() {
            match c.kind {
                ColumnKind::Step => prop_assert!(v > 0.0),
                ColumnKind::Spike => prop_assert!(v.abs() <= 0.5),
                _ => {}
            }
        }
        prop_assume!(fit.converged);
        let theta = fit.coefficients.to_dense(&spec);
        let report = kkt_report(&spec, &prepared, &weights.weights(), lambda, &theta).unwrap();
        prop_assert!(report.max_violation() < 1e-6 * (1.0 + lambda), "{:?}", report);
    }
}

#[test]
fn rss_decreases_along_each_path() {
    for seed in 0..10 {
        let inst = random_instance(seed, 20..=50, 2);
        let grid = Grid {
            lambdas: LambdaGrid::Auto {
                count: 15,
                min_ratio: 1e-3,
            },
            ..Grid::default()
        };
        let fits = fit_path(&inst.spec, &inst.signal, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(fits.len(), 15 * grid.gammas.len());
        for path in fits.chunks(15) {
            assert!(path.windows(2).all(|w| w[0].lambda > w[1].lambda));
            assert!(path[0].coefficients.is_empty(), "λ_max fit must be empty");
            for w in path.windows(2) {
                if w[0].converged && w[1].converged {
                    assert!(
                        w[1].rss <= w[0].rss * (1.0 + 1e-9) + 1e-12,
                        "seed {seed}: {} > {}",
                        w[1].rss,
                        w[0].rss
                    );
                }
            }
        }
    }
}

#[test]
fn parallel_path_matches_sequential() {
    let inst = random_instance(7, 40..=40, 2);
    let grid = Grid {
        lambdas: LambdaGrid::Auto {
            count: 10,
            min_ratio: 1e-3,
        },
        ..Grid::default()
    };
    let seq = fit_path(&inst.spec, &inst.signal, &grid, &SolverConfig::default()).unwrap();
    let par = fit_path(
        &inst.spec,
        &inst.signal,
        &grid,
        &SolverConfig {
            parallel: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(seq, par);
}

#[test]
fn two_column_problem_matches_hand_solution() {
    // Spike 0 and Spike 1 on n = 3 are orthonormal up to scale 1, so the
    // solution is the coordinatewise soft threshold of y_t.
    let spec = l1trend::DictionarySpec::with_blocks(3, vec![], &[ColumnKind::Spike]).unwrap();
    let signal = l1trend::Signal::new(vec![0.9, -0.3, 0.0]).unwrap();
    let prepared = PreparedSignal::new(&spec, &signal, false).unwrap();
    let weights = AdaptiveWeights::new(vec![1.0; spec.p()], 0.0).unwrap();
    let lambda = 0.1;
    let fit = fit_single(
        &spec,
        &prepared,
        lambda,
        &weights,
        &SparseCoefficients::zeros(),
        &SolverConfig::default(),
    )
    .unwrap();
    let theta = fit.coefficients.to_dense(&spec);
    // per column: minimise (y - θ)²/6 + 0.1|θ|  =>  θ = ST(y, 0.3)
    assert!((theta[0] - 0.6).abs() < 1e-12);
    assert_eq!(theta[1], 0.0);
    assert_eq!(theta[2], 0.0);
}

#[test]
fn sine_at_pi_stays_inactive() {
    let n = 30;
    let spec = l1trend::DictionarySpec::new(n, vec![1.0, std::f64::consts::PI]).unwrap();
    let values: Vec<f64> = (0..n)
        .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 } + 0.1 * t as f64)
        .collect();
    let signal = l1trend::Signal::new(values).unwrap();
    let prepared = PreparedSignal::new(&spec, &signal, true).unwrap();
    let ols = ols_init(&spec, &prepared);
    assert!(ols.iter().all(|v| v.is_finite()));
    let zero = spec.columns().position(|c| spec.is_zero_column(c)).unwrap();
    assert_eq!(ols[zero], 0.0);
    for gamma in [0.0, 1.0] {
        let weights = AdaptiveWeights::new(ols.clone(), gamma).unwrap();
        let lambda = 1e-3 * lambda_max(&spec, &prepared, &weights.weights()).unwrap();
        let fit = fit_single(
            &spec,
            &prepared,
            lambda,
            &weights,
            &SparseCoefficients::zeros(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(fit.converged);
        let theta = fit.coefficients.to_dense(&spec);
        assert_eq!(theta[zero], 0.0);
        let report = kkt_report(&spec, &prepared, &weights.weights(), lambda, &theta).unwrap();
        assert!(report.max_violation() < 1e-6 * (1.0 + lambda), "{report:?}");
    }
}
