use fall::anchors::kmeans::{kmeans, KMeansConfig};
use fall::anchors::{build_anchor_set, fit_anchor_model, AnchorConfig, AnchorMethod, AnchorSet};
use fall::baselines::{KnnModel, KnnWeighting, RidgeModel};
use fall::dataset::{read_dataset, split_indices, synth_step, Dataset, Standardizer};
use fall::harness::{fold_indices, mse, run_benchmark, sample_std, HyperGrid, Method, Protocol};
use fall::linalg::{augment, augment_rows};
use fall::local::{assign_anchor, fit, fit_local_model, FallParams};
use fall::parallel::with_threads;
use fall::predict::{averaged_model, neighbor_weights, predict, predict_batch, PredictConfig};
use fall::qp::{build_qp, fixed_p_optimum, objective, objective_gradient};
use fall::random::{gaussian_matrix, gaussian_vector, seeded_rng, uniform_simplex};
use fall::{Dataset32, Dataset64, FallModel64};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn fro(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2(a: &Array1<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Problem {
    x: Array1<f64>,
    y: Array1<f64>,
    anchors: AnchorSet<f64>,
}

fn problem(seed: u64, d: usize, m: usize, k: usize, bias: bool) -> Problem {
    let mut rng = seeded_rng(seed);
    let dp = d + usize::from(bias);
    let models = (0..k).map(|_| gaussian_matrix(&mut rng, dp, m)).collect();
    Problem { x: gaussian_vector(&mut rng, d), y: gaussian_vector(&mut rng, m), anchors: AnchorSet::from_models(models, bias).unwrap() }
}

fn random_data(seed: u64, n: usize, d: usize, m: usize) -> Dataset64 {
    let mut rng = seeded_rng(seed);
    Dataset::from_arrays(gaussian_matrix(&mut rng, n, d), gaussian_matrix(&mut rng, n, m)).unwrap()
}

fn random_model(seed: u64, n: usize, d: usize, m: usize, k: usize, lambda: f64, bias: bool) -> FallModel64 {
    let data = random_data(seed, n, d, m);
    let anchors = problem(seed ^ 0xabc, d, m, k, bias).anchors;
    fit(&data, anchors, lambda).unwrap()
}

prop_compose! {
    fn dims()(d in 1usize..8, m in 1usize..4, k in 1usize..6, bias in any::<bool>()) -> (usize, usize, usize, bool) {
        (d, m, k, bias)
    }
}

fn lambdas() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.01), Just(1.0), Just(100.0), 1e-3f64..1e3]
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..20, d in 1usize..5, m in 1usize..3) {
        let mut rng = seeded_rng(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-12..3)));
        let y = Array2::from_shape_fn((n, m), |_| rng.random_range(-1e3..1e3));
        let ds = Dataset::from_arrays(x, y).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back: Dataset64 = read_dataset(buf.as_slice(), &ds.target_names, true).unwrap();
        for (a, b) in ds.x.iter().chain(ds.y.iter()).zip(back.x.iter().chain(back.y.iter())) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
        prop_assert_eq!(back.feature_names, ds.feature_names);
    }

    #[test]
    fn standardized_columns_are_centered(seed in any::<u64>(), n in 2usize..40, d in 1usize..5, scale in 1e-3f64..1e3, shift in -1e3f64..1e3) {
        let mut rng = seeded_rng(seed);
        let x: Array2<f64> = gaussian_matrix::<f64, _>(&mut rng, n, d) * scale + shift;
        let ds = Dataset::from_arrays(x, Array2::zeros((n, 1))).unwrap();
        let z = Standardizer::fit(&ds, false).transform_inputs(ds.x.view());
        for col in z.axis_iter(Axis(1)) {
            let mean = col.sum() / n as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((std - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn splits_follow_seed(n in 10usize..200, seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(seed != other);
        let a = split_indices(n, 0.3, seed).unwrap();
        prop_assert_eq!(&a, &split_indices(n, 0.3, seed).unwrap());
        // Distinct seeds can coincide by chance only for tiny n.
        if n >= 20 {
            prop_assert_ne!(&a, &split_indices(n, 0.3, other).unwrap());
        }
    }

    #[test]
    fn noiseless_step_is_piecewise_constant(seed in any::<u64>(), n in 2usize..100) {
        let ds: Dataset64 = synth_step(n, 0.0, seed).unwrap();
        for i in 0..n {
            let want = if ds.x[[i, 0]] < 0.0 { 0.0 } else { 1.0 };
            prop_assert_eq!(ds.y[[i, 0]], want);
        }
    }

    #[test]
    fn anchor_fit_is_stationary(seed in any::<u64>(), n in 1usize..30, d in 1usize..6, m in 1usize..3, alpha in 1e-3f64..1e3, bias in any::<bool>()) {
        let ds = random_data(seed, n, d, m);
        let idx: Vec<usize> = (0..n).collect();
        let a = fit_anchor_model(&ds, &idx, alpha, bias).unwrap();
        let xa = augment_rows(ds.x.view(), bias);
        let xty = xa.t().dot(&ds.y);
        let resid = xa.t().dot(&xa).dot(&a) + &a * alpha - &xty;
        prop_assert!(fro(&resid) < 1e-8 * (1.0 + fro(&xty)));
    }

    #[test]
    fn kmeans_objective_never_increases(seed in any::<u64>(), n in 3usize..60, d in 1usize..4, k in 1usize..4) {
        let x: Array2<f64> = gaussian_matrix(&mut seeded_rng(seed), n, d);
        let res = kmeans(x.view(), k.min(n), &KMeansConfig { seed, ..KMeansConfig::default() }).unwrap();
        for w in res.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn anchor_sets_ignore_thread_count(seed in any::<u64>(), random in any::<bool>()) {
        let ds = random_data(seed, 60, 3, 2);
        let method = if random { AnchorMethod::Random } else { AnchorMethod::Kmeans };
        let cfg = AnchorConfig { k: 5, anchor_neighbors: 12, method, seed, ..AnchorConfig::default() };
        let one = with_threads(1, || build_anchor_set::<f64>(&ds, &cfg)).unwrap().unwrap();
        let four = with_threads(4, || build_anchor_set::<f64>(&ds, &cfg)).unwrap().unwrap();
        prop_assert_eq!(one, four);
    }

    #[test]
    fn benchmark_is_deterministic_and_reports_sample_std(seed in any::<u64>()) {
        let ds: Dataset64 = synth_step(60, 0.1, seed).unwrap();
        let mut grid = HyperGrid::single(&FallParams::default());
        grid.ks = vec![2, 4];
        let protocol = Protocol { runs: 3, seed, ..Protocol::default() };
        let a = run_benchmark(&ds, &[Method::Fall, Method::Ridge], &grid, &protocol).unwrap();
        let b = run_benchmark(&ds, &[Method::Fall, Method::Ridge], &grid, &protocol).unwrap();
        let strip = |r: &fall::harness::BenchmarkReport| r.runs.iter().map(|x| (x.test_mse, x.split_hash, x.params.clone())).collect::<Vec<_>>();
        prop_assert_eq!(strip(&a), strip(&b));
        for s in &a.summaries {
            let v: Vec<f64> = a.runs.iter().filter(|r| r.method == s.method).map(|r| r.test_mse).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            prop_assert!((s.mse_std - var.sqrt()).abs() <= 1e-12 * (1.0 + var.sqrt()));
            prop_assert_eq!(s.mse_std, sample_std(&v));
        }
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn closed_form_identities(seed in any::<u64>(), (d, m, k, bias) in dims(), lambda in lambdas()) {
        let p = problem(seed, d, m, k, bias);
        let local = fit_local_model(p.x.view(), p.y.view(), &p.anchors, lambda).unwrap();
        let xa = augment(p.x.view(), bias);
        let sq = xa.dot(&xa);
        prop_assert!((local.beta - lambda / (lambda + sq)).abs() <= 4.0 * f64::EPSILON * local.beta);

        let w_hat = local.full_model(&p.anchors);
        prop_assert_eq!(&w_hat, &(&local.correction + &p.anchors.models[local.assignment]));

        let anchor_pred = p.anchors.models[local.assignment].t().dot(&xa);
        let train_pred = w_hat.t().dot(&xa);
        let convex = &p.y * (1.0 - local.beta) + &anchor_pred * local.beta;
        let scale = 1.0 + l2(&p.y) + l2(&anchor_pred);
        prop_assert!(l2(&(&train_pred - &convex)) <= 1e-10 * scale);

        let c_pred = local.correction.t().dot(&xa);
        prop_assert!(l2(&(&c_pred - &((&p.y - &anchor_pred) * (1.0 - local.beta)))) <= 1e-10 * scale);

        let best = p.anchors.models.iter().map(|a| l2(&(&p.y - &a.t().dot(&xa)))).fold(f64::INFINITY, f64::min);
        let err = l2(&(&p.y - &train_pred));
        prop_assert!((err - local.beta * best).abs() <= 1e-10 * scale);
    }

    #[test]
    fn assignment_ignores_lambda(seed in any::<u64>(), (d, m, k, bias) in dims()) {
        let p = problem(seed, d, m, k, bias);
        let small = fit_local_model(p.x.view(), p.y.view(), &p.anchors, 0.01).unwrap();
        let large = fit_local_model(p.x.view(), p.y.view(), &p.anchors, 100.0).unwrap();
        prop_assert_eq!(small.assignment, large.assignment);
        prop_assert_eq!(small.assignment, assign_anchor(p.x.view(), p.y.view(), &p.anchors).unwrap().0);
    }

    #[test]
    fn gradient_vanishes_at_solution(seed in any::<u64>(), (d, m, k, bias) in dims(), lambda in lambdas()) {
        let p = problem(seed, d, m, k, bias);
        let local = fit_local_model(p.x.view(), p.y.view(), &p.anchors, lambda).unwrap();
        let w_hat = local.full_model(&p.anchors);
        let mut hot = Array1::zeros(k);
        hot[local.assignment] = 1.0;
        let g = objective_gradient(p.x.view(), p.y.view(), w_hat.view(), hot.view(), &p.anchors, lambda).unwrap();
        prop_assert!(fro(&g) < 1e-8 * (1.0 + fro(&w_hat)));
    }

    #[test]
    fn sherman_morrison_identity(seed in any::<u64>(), n in 1usize..10, lambda in lambdas()) {
        let x: Array1<f64> = gaussian_vector(&mut seeded_rng(seed), n);
        let outer = Array2::from_shape_fn((n, n), |(i, j)| x[i] * x[j]);
        let eye = Array2::<f64>::eye(n);
        let a = &outer + &(&eye * lambda);
        let inv = &eye / lambda - &outer / (lambda * (lambda + x.dot(&x)));
        let prod = a.dot(&inv);
        prop_assert!((&prod - &eye).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn quadratic_form_matches_objective(seed in any::<u64>(), (d, m, k, bias) in dims(), lambda in lambdas()) {
        let p = problem(seed, d, m, k, bias);
        let qp = build_qp(p.x.view(), p.y.view(), &p.anchors, lambda).unwrap();
        prop_assert_eq!(qp.asymmetry(), 0.0);
        let mut rng = seeded_rng(seed.wrapping_add(1));
        for _ in 0..20 {
            let s: Array1<f64> = uniform_simplex(&mut rng, k);
            let w = fixed_p_optimum(p.x.view(), p.y.view(), s.view(), &p.anchors, lambda).unwrap();
            let direct = objective(p.x.view(), p.y.view(), w.view(), s.view(), &p.anchors, lambda).unwrap();
            let q = qp.evaluate(s.view());
            prop_assert!((q - direct).abs() <= 1e-8 * q.abs().max(direct.abs()));
        }
    }

    #[test]
    fn lambda_limits(seed in any::<u64>(), (d, m, k, bias) in dims()) {
        let p = problem(seed, d, m, k, bias);
        let xa = augment(p.x.view(), bias);
        let tiny = fit_local_model(p.x.view(), p.y.view(), &p.anchors, 1e-8).unwrap();
        let pred = tiny.full_model(&p.anchors).t().dot(&xa);
        let err = l2(&(&p.y - &pred));
        if bias {
            // ||x~||^2 >= 1, so beta <= 1e-8.
            prop_assert!(err < 1e-6 * (1.0 + l2(&p.y)));
        } else {
            // Near-zero inputs keep beta near 1 for any lambda; only the exact bound holds.
            prop_assert!(err <= tiny.beta * tiny.residual_norm + 1e-12 * (1.0 + l2(&p.y)));
        }

        let huge = fit_local_model(p.x.view(), p.y.view(), &p.anchors, 1e8).unwrap();
        let anchor_pred = p.anchors.models[huge.assignment].t().dot(&xa);
        let pred = huge.full_model(&p.anchors).t().dot(&xa);
        prop_assert!(l2(&(&pred - &anchor_pred)) <= 1e-6 * (1.0 + l2(&anchor_pred)));
    }

    #[test]
    fn weights_form_a_simplex(seed in any::<u64>(), n in 1usize..40, d in 1usize..5, kp in 1usize..10, dup in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let train: Array2<f64> = gaussian_matrix(&mut rng, n, d);
        let x: Array1<f64> = if dup { train.row(rng.random_range(0..n)).to_owned() } else { gaussian_vector(&mut rng, d) };
        let w = neighbor_weights(x.view(), train.view(), kp.min(n), 1e-12).unwrap();
        prop_assert!(w.alphas.iter().all(|&a| a >= 0.0));
        prop_assert!((w.alphas.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn knn_uniform_stays_in_target_hull(seed in any::<u64>(), n in 1usize..30, kp in 1usize..8) {
        let ds = random_data(seed, n, 2, 2);
        let knn = KnnModel::fit(&ds, kp.min(n), KnnWeighting::Uniform).unwrap();
        let x: Array1<f64> = gaussian_vector(&mut seeded_rng(!seed), 2);
        let pred = knn.predict(x.view()).unwrap();
        let nn = neighbor_weights(x.view(), ds.x.view(), kp.min(n), 1e-12).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = nn.indices.iter().map(|&i| ds.y[[i, c]]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(pred[c] >= lo - 1e-12 && pred[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn ridge_training_error_shrinks_with_alpha(seed in any::<u64>(), n in 2usize..30, d in 1usize..5) {
        let ds = random_data(seed, n, d, 1);
        let mut last = f64::INFINITY;
        for alpha in [1e3, 1e2, 10.0, 1.0, 0.1, 1e-2, 1e-3] {
            let r = RidgeModel::fit(&ds, alpha, true).unwrap();
            let e = mse(ds.y.view(), r.predict_batch(ds.x.view()).unwrap().view()).unwrap();
            prop_assert!(e <= last * (1.0 + 1e-9) + 1e-12);
            last = e;
        }
    }

    #[test]
    fn folds_partition_rows(n in 2usize..100, folds in 2usize..10, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let parts = fold_indices(n, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        prop_assert!(parts.iter().all(|p| !p.is_empty()));
        let mut all = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn averaging_models_equals_averaging_predictions(seed in any::<u64>(), kp in 1usize..8, bias in any::<bool>()) {
        let model = random_model(seed, 25, 3, 2, 3, 0.5, bias);
        let cfg = PredictConfig::new(kp);
        let x: Array1<f64> = gaussian_vector(&mut seeded_rng(!seed), 3);
        let xa = augment(x.view(), bias);
        let avg = averaged_model(&model, x.view(), &cfg).unwrap();
        let mut per_model = Array1::<f64>::zeros(2);
        let mut corr = Array2::<f64>::zeros(avg.correction.dim());
        let mut mix = Array2::<f64>::zeros(avg.correction.dim());
        for (&i, &a) in avg.weights.indices.iter().zip(avg.weights.alphas.iter()) {
            per_model = per_model + model.full_model(i).t().dot(&xa) * a;
            corr = corr + &model.locals[i].correction * a;
            mix = mix + &model.anchor_set.models[model.locals[i].assignment] * a;
        }
        let got = predict(&model, x.view(), &cfg).unwrap();
        prop_assert!((&got - &per_model).iter().all(|v| v.abs() <= 1e-12 * (1.0 + l2(&per_model))));
        prop_assert!((&avg.correction - &corr).iter().all(|v| v.abs() <= 1e-12));
        prop_assert!((&avg.anchor_mix - &mix).iter().all(|v| v.abs() <= 1e-12));
        prop_assert!((&avg.model() - &(&corr + &mix)).iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn corrections_vanish_orthogonal_to_training_inputs(seed in any::<u64>(), t in -1e3f64..1e3) {
        // Training inputs live in the first two coordinates; query along the third.
        let mut rng = seeded_rng(seed);
        let mut x: Array2<f64> = gaussian_matrix(&mut rng, 20, 3);
        x.column_mut(2).fill(0.0);
        let ds = Dataset::from_arrays(x, gaussian_matrix(&mut rng, 20, 1)).unwrap();
        let anchors = problem(seed, 3, 1, 2, false).anchors;
        let model = fit(&ds, anchors, 0.3).unwrap();
        let q = Array1::from(vec![0.0, 0.0, t]);
        let avg = averaged_model(&model, q.view(), &PredictConfig::new(4)).unwrap();
        prop_assert!(avg.correction.t().dot(&q).iter().all(|v| v.abs() <= 1e-12 * (1.0 + t.abs())));
    }

    #[test]
    fn batch_prediction_is_row_independent(seed in any::<u64>()) {
        let model = random_model(seed, 30, 2, 1, 3, 1.0, true);
        let q: Array2<f64> = gaussian_matrix(&mut seeded_rng(!seed), 8, 2);
        let cfg = PredictConfig::new(3);
        let out = predict_batch(&model, q.view(), &cfg).unwrap();
        let rev: Vec<usize> = (0..8).rev().collect();
        let out_rev = predict_batch(&model, q.select(Axis(0), &rev).view(), &cfg).unwrap();
        prop_assert_eq!(out.select(Axis(0), &rev), out_rev);
        let single = predict(&model, q.row(0), &cfg).unwrap();
        prop_assert_eq!(out.row(0).to_owned(), single);
    }

    #[test]
    fn single_precision_keeps_convex_combination(seed in any::<u64>()) {
        let ds: Dataset32 = synth_step(50, 0.1, seed).unwrap();
        let cfg = AnchorConfig { k: 2, anchor_neighbors: 20, seed, ..AnchorConfig::default() };
        let model = fit(&ds, build_anchor_set(&ds, &cfg).unwrap(), 0.5f32).unwrap();
        for i in 0..model.n() {
            let l = &model.locals[i];
            let xa = augment(ds.x.row(i), true);
            let anchor = model.anchor_set.models[l.assignment].t().dot(&xa)[0];
            let want = (1.0 - l.beta) * ds.y[[i, 0]] + l.beta * anchor;
            prop_assert!((model.training_prediction(i)[0] - want).abs() <= 1e-5);
        }
    }
}
