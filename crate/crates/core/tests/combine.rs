use hybridcast::combine::{
    combine_arithmetic, combine_geometric, combine_harmonic, grey_relation_degree, simplex_maximize, weights,
    weights_least_squares, weights_least_squares_exact, weights_optimal_grey, weights_stddev, CombineOptions,
    ForecastMatrix, TwoStageModel, WeightScheme,
};
use hybridcast::par::Execution;
use proptest::prelude::*;

fn fm(actual: Vec<f64>, forecasts: Vec<Vec<f64>>) -> ForecastMatrix {
    ForecastMatrix::unlabeled(actual, forecasts).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Forecast matrix strategy: m methods around a positive actual path.
fn matrix(m: std::ops::Range<usize>) -> impl Strategy<Value = ForecastMatrix> {
    (m, 6usize..20).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(1.0f64..2.0, n),
            prop::collection::vec(prop::collection::vec(-0.2f64..0.2, n), m),
        )
            .prop_map(|(y, noise)| {
                let f = noise.iter().map(|e| y.iter().zip(e).map(|(a, b)| a + b).collect()).collect();
                fm(y, f)
            })
    })
}

#[test]
fn stddev_example() {
    // Error deviations 1 and 3.
    let m = fm(vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![-2.0, 4.0]]);
    assert!(close(&weights_stddev(&m).unwrap(), &[0.75, 0.25], 1e-15));
}

#[test]
fn least_squares_example_and_grid_oracle() {
    // h = diag(2, 8) with uncorrelated errors.
    let m = fm(vec![1.0, 1.0], vec![vec![0.0, 0.0], vec![-1.0, 3.0]]);
    assert!(close(&weights_least_squares(&m), &[0.8, 0.2], 1e-15));
    let exact = weights_least_squares_exact(&m, Execution::default());
    let e: Vec<Vec<f64>> = m.errors();
    let q = |w: f64| (0..2).map(|t| (w * e[0][t] + (1.0 - w) * e[1][t]).powi(2)).sum::<f64>();
    let grid = (0..=1000).map(|i| i as f64 / 1000.0).min_by(|a, b| q(*a).total_cmp(&q(*b))).unwrap();
    assert!((exact[0] - grid).abs() <= 2e-3, "{exact:?} vs {grid}");
    assert!((exact[0] - 0.8).abs() < 1e-6);
}

#[test]
fn optimal_grey_cancels_opposite_errors() {
    let m = fm(vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![2.0, 0.0]]);
    let w = weights_optimal_grey(&m, 0.5, Execution::default()).unwrap();
    assert!(close(&w, &[0.5, 0.5], 1e-9), "{w:?}");
}

#[test]
fn grey_relation_hand_oracle() {
    let m = fm(vec![1.0, 1.0], vec![vec![1.0, 0.9], vec![0.8, 0.8]]);
    let r = grey_relation_degree(&m, 0.5).unwrap();
    assert_eq!(r.min_abs, 0.0);
    assert!((r.max_abs - 0.2).abs() < 1e-15);
    assert!((r.gamma[0] - 0.75).abs() < 1e-12);
    assert!((r.gamma[1] - 1.0 / 3.0).abs() < 1e-12);
    let w = weights(&m, WeightScheme::GreyRelation, &CombineOptions::default()).unwrap().weights;
    assert!((w[0] - 0.75 / (0.75 + 1.0 / 3.0)).abs() < 1e-12);
    assert!(grey_relation_degree(&m, 1.0).is_err());
}

#[test]
fn rough_set_example() {
    let y: Vec<f64> = (1..=10).map(f64::from).collect();
    let m = fm(y.clone(), vec![y.clone(), vec![5.0; 10]]);
    let w = weights(&m, WeightScheme::RoughSet, &CombineOptions::default()).unwrap().weights;
    assert_eq!(w, vec![1.0, 0.0]);
    // Redundant copies carry no individual significance: uniform fallback.
    let m = fm(y.clone(), vec![y.clone(), y.clone()]);
    let w = weights(&m, WeightScheme::RoughSet, &CombineOptions::default()).unwrap().weights;
    assert_eq!(w, vec![0.5, 0.5]);
    assert!(weights(&fm(vec![1.0; 10], vec![y.clone(), y]), WeightScheme::RoughSet, &CombineOptions::default()).is_err());
}

#[test]
fn identical_methods_get_uniform_weights() {
    let y: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
    let f: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + 0.01 * (i as f64).cos()).collect();
    for m in [2, 3, 5] {
        let matrix = fm(y.clone(), vec![f.clone(); m]);
        for scheme in WeightScheme::ALL {
            let w = weights(&matrix, scheme, &CombineOptions::default()).unwrap().weights;
            assert!(close(&w, &vec![1.0 / m as f64; m], 1e-12), "{scheme} m={m}: {w:?}");
        }
    }
}

#[test]
fn combination_means() {
    let m = fm(vec![3.0], vec![vec![2.0], vec![8.0]]);
    assert!((combine_geometric(&m, &[0.5, 0.5]).unwrap()[0] - 4.0).abs() < 1e-12);
    assert!((combine_harmonic(&m, &[0.5, 0.5]).unwrap()[0] - 3.2).abs() < 1e-12);
    assert_eq!(combine_arithmetic(&m, &[0.5, 0.5]).unwrap(), vec![5.0]);
    let neg = fm(vec![3.0], vec![vec![-2.0], vec![8.0]]);
    assert!(combine_geometric(&neg, &[0.5, 0.5]).is_err());
}

#[test]
fn fixed_weight_pair_combines_as_expected() {
    let w = [0.6068, 0.3932];
    assert!((w[0] + w[1] - 1.0f64).abs() < 1e-12);
    let m = fm(vec![1.0, 1.1], vec![vec![1.02, 1.08], vec![0.97, 1.13]]);
    let c = combine_arithmetic(&m, &w).unwrap();
    assert!((c[0] - (0.6068 * 1.02 + 0.3932 * 0.97)).abs() < 1e-15);
}

#[test]
fn two_stage_is_identity_on_identical_bases() {
    let y: Vec<f64> = (0..15).map(|i| 1.0 + 0.05 * i as f64).collect();
    let f: Vec<f64> = y.iter().map(|v| v * 1.01).collect();
    let m = fm(y, vec![f.clone(), f.clone()]);
    let schemes = [
        WeightScheme::RoughSet,
        WeightScheme::GreyRelation,
        WeightScheme::Lsm,
        WeightScheme::EffectiveDegree,
        WeightScheme::OptimalGrey,
    ];
    let model = TwoStageModel::fit(&m, &schemes, &schemes, &CombineOptions::default()).unwrap();
    for w in &model.stage2 {
        assert!(close(&w.weights, &[0.2; 5], 1e-12), "{}: {:?}", w.scheme, w.weights);
    }
    let out = model.apply(m.forecasts()).unwrap();
    for s in out.stage1.iter().chain(&out.stage2) {
        assert!(close(s, &f, 1e-12));
    }
}

#[test]
fn seven_method_search_terminates_and_is_deterministic() {
    let y: Vec<f64> = (0..20).map(|i| 1.0 + 0.02 * i as f64).collect();
    let f: Vec<Vec<f64>> = (0..7)
        .map(|j| y.iter().enumerate().map(|(t, v)| v + 0.01 * ((t * (j + 2)) as f64).sin()).collect())
        .collect();
    let m = fm(y, f);
    let a = weights_optimal_grey(&m, 0.5, Execution::Sequential).unwrap();
    let b = weights_optimal_grey(&m, 0.5, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_lie_on_simplex(m in matrix(2..5)) {
        for scheme in WeightScheme::ALL {
            match weights(&m, scheme, &CombineOptions::default()) {
                Ok(w) => {
                    prop_assert_eq!(w.weights.len(), m.methods());
                    prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
                    prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{}", scheme);
                }
                // Only rough sets may reject a degenerate decision attribute.
                Err(e) => prop_assert_eq!(scheme, WeightScheme::RoughSet, "{}", e),
            }
        }
    }

    #[test]
    fn exact_lsm_beats_every_single_method(m in matrix(2..5)) {
        let e = m.errors();
        let sse = |w: &[f64]| (0..m.len()).map(|t| w.iter().zip(&e).map(|(wj, ej)| wj * ej[t]).sum::<f64>().powi(2)).sum::<f64>();
        let w = weights_least_squares_exact(&m, Execution::default());
        let best_single = (0..m.methods())
            .map(|j| { let mut v = vec![0.0; m.methods()]; v[j] = 1.0; sse(&v) })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(sse(&w) <= best_single + 1e-9);
    }

    #[test]
    fn optimal_grey_beats_vertices(m in matrix(2..4)) {
        let r = grey_relation_degree(&m, 0.5).unwrap();
        let e = m.errors();
        let w = weights_optimal_grey(&m, 0.5, Execution::default()).unwrap();
        let got = hybridcast::combine::combined_grey_degree(&r, &e, &w);
        for j in 0..m.methods() {
            let mut v = vec![0.0; m.methods()];
            v[j] = 1.0;
            prop_assert!(got >= hybridcast::combine::combined_grey_degree(&r, &e, &v) - 1e-12);
        }
    }

    #[test]
    fn closed_form_schemes_are_permutation_equivariant(m in matrix(2..5), rot in 1usize..4) {
        let k = m.methods();
        let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let pf: Vec<Vec<f64>> = perm.iter().map(|&i| m.forecasts()[i].clone()).collect();
        let pm = fm(m.actual().to_vec(), pf);
        for scheme in [
            WeightScheme::Average,
            WeightScheme::StdDev,
            WeightScheme::DevCoef,
            WeightScheme::Lsm,
            WeightScheme::EffectiveDegree,
            WeightScheme::GreyRelation,
        ] {
            let a = weights(&m, scheme, &CombineOptions::default()).unwrap().weights;
            let b = weights(&pm, scheme, &CombineOptions::default()).unwrap().weights;
            for (pos, &i) in perm.iter().enumerate() {
                prop_assert!((b[pos] - a[i]).abs() < 1e-12, "{}", scheme);
            }
        }
    }

    #[test]
    fn mean_inequality(f in prop::collection::vec(prop::collection::vec(0.1f64..10.0, 3), 2..5), raw in prop::collection::vec(0.01f64..1.0, 4)) {
        let k = f.len();
        let s: f64 = raw[..k].iter().sum();
        let w: Vec<f64> = raw[..k].iter().map(|v| v / s).collect();
        let m = fm(vec![1.0; 3], f);
        let (a, g, h) = (
            combine_arithmetic(&m, &w).unwrap(),
            combine_geometric(&m, &w).unwrap(),
            combine_harmonic(&m, &w).unwrap(),
        );
        for t in 0..3 {
            prop_assert!(a[t] >= g[t] - 1e-12 && g[t] >= h[t] - 1e-12);
        }
    }

    #[test]
    fn simplex_search_finds_quadratic_minimum(c in prop::collection::vec(0.0f64..1.0, 3)) {
        let s: f64 = c.iter().sum();
        prop_assume!(s > 0.1);
        let target: Vec<f64> = c.iter().map(|v| v / s).collect();
        let w = simplex_maximize(3, Execution::default(), |w| -w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        prop_assert!(close(&w, &target, 2e-4), "{:?} vs {:?}", w, target);
    }
}
