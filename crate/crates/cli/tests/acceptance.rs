//! Acceptance criteria, one test per criterion. Each test prints a single
//! `criterion N: PASS|FAIL` line and fails on FAIL.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hybridcast::combine::{
    combined_grey_degree, grey_relation_degree, weights, weights_least_squares, weights_least_squares_exact,
    weights_optimal_grey, CombineOptions, ForecastMatrix, WeightScheme,
};
use hybridcast::evaluate::{performance, rank_all, DecisionMatrix, EvaluateConfig, PerformanceRecord};
use hybridcast::ga::{optimize, GaConfig};
use hybridcast::markov::{markov_property_test, transition_matrix, FuzzyStateModel, Membership, PartitionRule};
use hybridcast::par::Execution;
use hybridcast::phase_space::{ami, fnn, mutual_information, select_delay, select_dim, DelayRule};
use hybridcast::svm::{gram, saddle_system, train, KernelSpec, SupervisedSet};
use hybridcast::wavelet::{denoise, dwt_forward, dwt_inverse, Extension, Family, ThresholdRule, WaveletSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn report(n: u32, name: &str, check: Check) {
    match check {
        Ok(detail) => println!("criterion {n}: PASS  {name}  ({detail})"),
        Err(why) => {
            println!("criterion {n}: FAIL  {name}  ({why})");
            panic!("criterion {n} failed: {why}");
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (xs, ys)
}

fn kernel_oracle(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let d2: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).collect();
    match *spec {
        KernelSpec::Rbf { sigma } => (-d2.iter().sum::<f64>() / (2.0 * sigma * sigma)).exp(),
        KernelSpec::MexicanHat { a } => d2.iter().map(|v| (1.0 - v / (a * a)) * (-v / (2.0 * a * a)).exp()).product(),
        _ => unreachable!(),
    }
}

#[test]
fn criterion_01_lssvm_solution() {
    let start = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let (n, d) = (rng.random_range(1..=30), rng.random_range(1..=5));
            let (xs, ys) = random_set(&mut rng, n, d);
            let spec = if i % 2 == 0 {
                KernelSpec::Rbf { sigma: rng.random_range(0.3..3.0) }
            } else {
                KernelSpec::MexicanHat { a: rng.random_range(0.3..3.0) }
            };
            let gamma = rng.random_range(0.5..1000.0);
            let data = SupervisedSet::new(xs.clone(), ys.clone()).unwrap();
            let m = train(&data, &spec, gamma).map_err(|e| format!("instance {i}: {e}"))?;
            // Independent dense system and LU solve.
            let a = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r, c) {
                (0, 0) => 0.0,
                (0, _) | (_, 0) => 1.0,
                _ => kernel_oracle(&spec, &xs[r - 1], &xs[c - 1]) + if r == c { 1.0 / gamma } else { 0.0 },
            });
            let rhs = DVector::from_iterator(n + 1, std::iter::once(0.0).chain(ys.iter().copied()));
            let x = DVector::from_iterator(n + 1, std::iter::once(m.bias).chain(m.alphas.iter().copied()));
            let resid = (&a * &x - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
            let sol = a.clone().lu().solve(&rhs).ok_or("oracle singular")?;
            let diff = (&sol - &x).norm() / sol.norm().max(1.0);
            worst = worst.max(resid).max(diff);
            ensure(resid <= 1e-8 && diff <= 1e-8, || format!("instance {i}: residual {resid:.2e}, diff {diff:.2e}"))?;
            let sum: f64 = m.alphas.iter().sum();
            ensure(sum.abs() <= 1e-8 * m.alphas.iter().map(|v| v.abs()).sum::<f64>().max(1.0), || {
                format!("instance {i}: sum alpha {sum:.2e}")
            })?;
            // The library's own system agrees with the oracle's.
            let (own, _) = saddle_system(&data, &spec, gamma);
            ensure((0..n + 1).all(|r| (0..n + 1).all(|c| (own[(r, c)] - a[(r, c)]).abs() < 1e-12)), || {
                format!("instance {i}: system mismatch")
            })?;
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
        Ok(format!("200 instances, worst relative error {worst:.1e}, {secs:.2} s"))
    })();
    report(1, "LS-SVM saddle system", check);
}

#[test]
fn criterion_02_kernel_admissibility() {
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut lowest = f64::INFINITY;
        for i in 0..50 {
            let d = rng.random_range(1..=5);
            let (xs, _) = random_set(&mut rng, 20, d);
            for spec in [KernelSpec::Rbf { sigma: rng.random_range(0.2..3.0) }, KernelSpec::MexicanHat { a: rng.random_range(0.2..3.0) }] {
                let g = gram(&spec, &xs);
                let min = SymmetricEigen::new(DMatrix::from_fn(20, 20, |r, c| g[(r, c)])).eigenvalues.min();
                lowest = lowest.min(min);
                ensure(min >= -1e-8 * 20.0, || format!("set {i}, {spec}: min eigenvalue {min:.3e}"))?;
            }
        }
        Ok(format!("lowest eigenvalue {lowest:.2e}"))
    })();
    report(2, "kernel admissibility", check);
}

#[test]
fn criterion_03_wavelet_round_trip() {
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let n = rng.random_range(64..=512);
            let spec = WaveletSpec {
                family: if i % 2 == 0 { Family::Coiflet3 } else { Family::Daubechies4 },
                level: rng.random_range(1..=3),
                threshold_rule: ThresholdRule::UniversalSoft,
                extension: Extension::Symmetric,
            };
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let back = dwt_inverse(&dwt_forward(&x, &spec).unwrap(), &spec).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
            ensure(back.len() == n && err <= 1e-9, || format!("signal {i}: error {err:.2e}"))?;
        }
        let noise = Normal::new(0.0, 0.1).unwrap();
        let clean: Vec<f64> = (0..512).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 64.0).sin()).collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
        let den = denoise(&noisy, &WaveletSpec::default()).unwrap();
        let rmse = |a: &[f64]| (a.iter().zip(&clean).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 512.0).sqrt();
        let (before, after) = (rmse(&noisy), rmse(&den));
        ensure(after < before, || format!("denoised RMSE {after:.4} ≥ noisy {before:.4}"))?;
        Ok(format!("max error {worst:.1e}; RMSE {before:.4} -> {after:.4}"))
    })();
    report(3, "wavelet round trip and denoising", check);
}

fn mi_oracle(x: &[f64], lag: usize, bins: usize) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bin = |v: f64| (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1);
    let n = (x.len() - lag) as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for k in lag..x.len() {
        let (a, b) = (bin(x[k]), bin(x[k - lag]));
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pa.entry(a).or_default() += 1.0 / n;
        *pb.entry(b).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(a, b), &p)| p * (p / (pa[&a] * pb[&b])).log2()).sum()
}

fn fnn_oracle(x: &[f64], tau: usize, d: usize, rt: f64) -> f64 {
    let first = d * tau;
    let range = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let pts: Vec<usize> = (first..x.len()).collect();
    let false_count = pts
        .iter()
        .filter(|&&p| {
            let (q, dist) = pts
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| (q, (0..d).map(|j| (x[p - j * tau] - x[q - j * tau]).powi(2)).sum::<f64>().sqrt()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            (x[p - first] - x[q - first]).abs() > rt * dist.max(1e-9 * range)
        })
        .count();
    100.0 * false_count as f64 / pts.len() as f64
}

fn henon(n: usize) -> Vec<f64> {
    let (mut x, mut y) = (0.1, 0.1);
    let mut out = Vec::new();
    for i in 0..n + 500 {
        (x, y) = (1.0 - 1.4 * x * x + y, 0.3 * x);
        if i >= 500 {
            out.push(x);
        }
    }
    out
}

fn logistic(n: usize) -> Vec<f64> {
    let mut x: f64 = 0.3;
    (0..n + 200).map(|_| { x = 4.0 * x * (1.0 - x); x }).skip(200).collect()
}

#[test]
fn criterion_04_phase_space() {
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let n = rng.random_range(100..=500);
            let x: Vec<f64> = match i % 3 {
                0 => logistic(n),
                1 => henon(n),
                _ => (0..n).map(|_| rng.random::<f64>()).collect(),
            };
            for lag in 1..=4 {
                let e = (mutual_information(&x, lag, 16).unwrap() - mi_oracle(&x, lag, 16)).abs();
                worst = worst.max(e);
                ensure(e <= 1e-12, || format!("AMI instance {i} lag {lag}: {e:.2e}"))?;
            }
            let p = fnn(&x, 1, 4, 1.0, 15.0).unwrap();
            for (k, &d) in p.dims.iter().enumerate() {
                let e = (p.false_percent[k] - fnn_oracle(&x, 1, d, 15.0)).abs();
                worst = worst.max(e);
                ensure(e <= 1e-12, || format!("FNN instance {i} dim {d}: {e:.2e}"))?;
            }
        }
        let h = henon(1000);
        let hd = select_dim(&fnn(&h, 1, 6, 1.0, 15.0).unwrap());
        ensure(hd.dim == 2 && !hd.saturated, || format!("Hénon dim {hd:?}"))?;
        let l = logistic(1000);
        let lt = select_delay(&ami(&l, 10, 16).unwrap(), DelayRule::FirstLocalMinimum);
        let ld = select_dim(&fnn(&l, 1, 6, 1.0, 15.0).unwrap());
        ensure(lt == 7 && ld.saturated, || format!("logistic tau {lt}, dim {ld:?}"))?;
        let rev: Vec<f64> = l.iter().rev().copied().collect();
        let rd = select_dim(&fnn(&rev, 1, 6, 1.0, 15.0).unwrap());
        ensure(rd.dim == 1, || format!("reversed logistic dim {rd:?}"))?;
        Ok(format!("oracle error {worst:.1e}; Hénon dim 2; logistic tau 7, FNN saturates, reversed dim 1"))
    })();
    report(4, "phase space oracles and fixtures", check);
}

#[test]
fn criterion_05_markov() {
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for i in 0..100 {
            let k = rng.random_range(2..=6);
            let n = rng.random_range(k + 1..200);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
            let part = hybridcast::markov::partition(&z, k, PartitionRule::EqualWidth).unwrap();
            let states = part.states(&z);
            for step in 1..=3.min(n - 1) {
                let tm = transition_matrix(&states, step, k).unwrap();
                for row in &tm.probabilities {
                    let s: f64 = row.iter().sum();
                    ensure((s - 1.0).abs() <= 1e-12, || format!("instance {i}: row sum {s}"))?;
                }
            }
            let fuzzy = FuzzyStateModel::fit(&z, &part, Membership::Crisp).unwrap();
            let crisp = transition_matrix(&states, 1, k).unwrap();
            ensure(fuzzy.transitions.counts == crisp.counts, || format!("instance {i}: fuzzy counts differ"))?;
            let r = markov_property_test(&states, k, 0.05).unwrap();
            ensure(r.dof == (k - 1) * (k - 1), || format!("instance {i}: dof {}", r.dof))?;
        }
        let r = markov_property_test(&[0, 0, 1, 1, 0], 2, 0.05).unwrap();
        ensure(r.chi_square.abs() <= 1e-12, || format!("marginal-equal chi2 {}", r.chi_square))?;
        let r = markov_property_test(&[0, 0, 1, 2, 2, 0, 2, 1, 1, 0], 3, 0.05).unwrap();
        ensure(r.chi_square.abs() <= 1e-12, || format!("3-state marginal-equal chi2 {}", r.chi_square))?;
        Ok("100 random chains".into())
    })();
    report(5, "Markov chains", check);
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> ForecastMatrix {
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
    let f = (0..m).map(|_| y.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect()).collect();
    ForecastMatrix::unlabeled(y, f).unwrap()
}

#[test]
fn criterion_06_combination_weights() {
    let check = (|| -> Check {
        let opts = CombineOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for i in 0..30 {
            let m = rng.random_range(2..=4);
            let n = rng.random_range(8..=20);
            let fm = random_matrix(&mut rng, m, n);
            for scheme in WeightScheme::ALL {
                let w = match weights(&fm, scheme, &opts) {
                    Ok(w) => w.weights,
                    Err(e) if scheme == WeightScheme::RoughSet => {
                        return Err(format!("instance {i}: rough set rejected a random matrix: {e}"))
                    }
                    Err(e) => return Err(format!("instance {i} {scheme}: {e}")),
                };
                let s: f64 = w.iter().sum();
                ensure(w.iter().all(|&x| x >= 0.0) && (s - 1.0).abs() <= 1e-12, || {
                    format!("instance {i} {scheme}: {w:?} sums to {s}")
                })?;
            }
            let e = fm.errors();
            let sse = |w: &[f64]| (0..n).map(|t| w.iter().zip(&e).map(|(a, b)| a * b[t]).sum::<f64>().powi(2)).sum::<f64>();
            let vertex = |j: usize| -> Vec<f64> { (0..m).map(|k| if k == j { 1.0 } else { 0.0 }).collect() };
            let exact = weights_least_squares_exact(&fm, Execution::default());
            let best_single = (0..m).map(|j| sse(&vertex(j))).fold(f64::INFINITY, f64::min);
            ensure(sse(&exact) <= best_single + 1e-9, || format!("instance {i}: exact LSM SSE above best single"))?;
            let report = grey_relation_degree(&fm, opts.rho).unwrap();
            let gro = weights_optimal_grey(&fm, opts.rho, Execution::default()).unwrap();
            let g = combined_grey_degree(&report, &e, &gro);
            ensure((0..m).all(|j| g >= combined_grey_degree(&report, &e, &vertex(j))), || {
                format!("instance {i}: optimal grey below a vertex")
            })?;
        }
        // h = diag(2, 8).
        let fm = ForecastMatrix::unlabeled(vec![1.0, 1.0], vec![vec![0.0, 0.0], vec![-1.0, 3.0]]).unwrap();
        let closed = weights_least_squares(&fm);
        let grid = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .min_by(|a, b| (2.0 * a * a + 8.0 * (1.0 - a).powi(2)).total_cmp(&(2.0 * b * b + 8.0 * (1.0 - b).powi(2))))
            .unwrap();
        ensure((closed[0] - 0.8).abs() < 1e-12 && (closed[0] - grid).abs() <= 2e-3, || format!("LSM {closed:?} vs grid {grid}"))?;
        // Symmetric fixtures.
        let y: Vec<f64> = (0..12).map(|t| 1.0 + 0.1 * (t as f64).sin()).collect();
        let f: Vec<f64> = y.iter().enumerate().map(|(t, v)| v + 0.01 * (t as f64).cos()).collect();
        for m in [2, 3, 4, 5] {
            let fm = ForecastMatrix::unlabeled(y.clone(), vec![f.clone(); m]).unwrap();
            for scheme in WeightScheme::ALL {
                let w = weights(&fm, scheme, &opts).map_err(|e| format!("{scheme}: {e}"))?.weights;
                ensure(w.iter().all(|x| (x - 1.0 / m as f64).abs() <= 1e-12), || format!("symmetric m={m} {scheme}: {w:?}"))?;
            }
        }
        Ok("30 random matrices, all schemes".into())
    })();
    report(6, "combination weights", check);
}

#[test]
fn criterion_07_metrics() {
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        let cfg = EvaluateConfig::default();
        for i in 0..100 {
            let n = rng.random_range(2..80);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
            let f: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let y0 = rng.random_range(0.5..2.0);
            let p = performance(&y, &f, y0, &cfg).unwrap();
            let nf = n as f64;
            let e: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let mut prev = y0;
            let mut agree = 0.0;
            for t in 0..n {
                if (y[t] - prev) * (f[t] - prev) >= 0.0 {
                    agree += 1.0;
                }
                prev = y[t];
            }
            let want = [
                100.0 * (1.0 - e.iter().zip(&y).map(|(a, b)| (a / b).abs()).sum::<f64>() / nf),
                100.0 * e.iter().filter(|v| v.abs() <= cfg.feasibility_threshold).count() as f64 / nf,
                100.0 * agree / nf,
                e.iter().map(|v| v.abs()).sum::<f64>() / nf,
                (e.iter().map(|v| v * v).sum::<f64>() / nf).sqrt(),
            ];
            let got = p.criteria();
            for k in 0..5 {
                ensure((got[k] - want[k]).abs() <= 1e-12 * want[k].abs().max(1.0), || {
                    format!("instance {i} criterion {k}: {} vs {}", got[k], want[k])
                })?;
            }
        }
        let y = [1.3, 1.31, 1.29];
        let p: PerformanceRecord = performance(&y, &y, 1.28, &cfg).unwrap();
        ensure(
            p.accuracy == 100.0 && p.consistency == 100.0 && p.feasibility == 100.0 && p.mae == 0.0 && p.rmse == 0.0 && p.mse == 0.0 && p.mape == 0.0 && p.theil_u2 == 0.0,
            || format!("perfect forecast: {p:?}"),
        )?;
        Ok("100 random instances".into())
    })();
    report(7, "performance measures", check);
}

#[test]
fn criterion_08_ranking() {
    let check = (|| -> Check {
        let w = [0.15, 0.2, 0.3, 0.2, 0.15];
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for i in 0..50 {
            let n = rng.random_range(2..8);
            let mut rows: Vec<[f64; 5]> = (0..n)
                .map(|_| [rng.random_range(95.0..99.0), rng.random_range(10.0..60.0), rng.random_range(30.0..70.0), rng.random_range(0.01..0.02), rng.random_range(0.012..0.03)])
                .collect();
            let lead = rng.random_range(0..n);
            rows[lead] = [99.5, 80.0, 90.0, 0.005, 0.006];
            let labels = (0..n).map(|j| format!("M{j}")).collect();
            let r = rank_all(&DecisionMatrix::new(labels, rows, w).unwrap(), 0.5).unwrap();
            for ranks in [&r.r1, &r.r2, &r.r3, &r.comprehensive] {
                let mut s = ranks.clone();
                s.sort();
                ensure(s == (1..=n).collect::<Vec<_>>(), || format!("instance {i}: not a permutation {ranks:?}"))?;
            }
            ensure(r.r1[lead] == 1 && r.r2[lead] == 1 && r.r3[lead] == 1, || format!("instance {i}: dominant row not first {r:?}"))?;
        }
        let block = vec![
            [99.204, 33.333, 66.667, 0.0109, 0.0140],
            [99.205, 35.185, 66.667, 0.0109, 0.0140],
            [99.202, 31.481, 64.815, 0.0109, 0.0140],
            [99.225, 31.481, 59.259, 0.0106, 0.0140],
        ];
        let labels = ["M2", "M5", "M6", "M7"].map(String::from).to_vec();
        let r = rank_all(&DecisionMatrix::new(labels, block, w).unwrap(), 0.5).unwrap();
        let firsts = [&r.r1, &r.r2, &r.r3].iter().filter(|v| v[1] == 1).count();
        ensure(firsts >= 2, || format!("method 5 first under {firsts} variants: {r:?}"))?;
        Ok(format!("method 5 first under {firsts} of 3 variants on the 54-day block"))
    })();
    report(8, "TOPSIS rankings", check);
}

#[test]
fn criterion_09_genetic_algorithm() {
    let check = (|| -> Check {
        let f = |a: f64, g: f64| -((a - 0.5).powi(2) + (g - 100.0).powi(2) / 1e4);
        let cfg = GaConfig { population: 20, generations: 30, seed: 99, ..GaConfig::default() };
        let out = optimize(&cfg, Execution::Parallel, f).unwrap();
        ensure(out.history.windows(2).all(|w| w[1] >= w[0]), || "history decreases".into())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let b = cfg.bounds;
        let random = (0..600)
            .map(|_| f(rng.random_range(b.a_min..=b.a_max), rng.random_range(b.gamma_min..=b.gamma_max)))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(out.best_fitness >= random, || format!("GA {} < random {random}", out.best_fitness))?;
        let again = optimize(&cfg, Execution::Sequential, f).unwrap();
        ensure(again == out, || "rerun differs".into())?;
        Ok(format!("GA {:.3e} vs random search {random:.3e}", out.best_fitness))
    })();
    report(9, "genetic algorithm", check);
}

fn run_cli(out: &Path) -> Result<f64, String> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic_eurusd.csv");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_hybridcast"))
        .args(["run", "--input"])
        .arg(&data)
        .args(["--methods", "1..7", "--sample", "70", "--horizon", "22", "--two-stage", "--seed", "7", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    Ok(start.elapsed().as_secs_f64())
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_10_end_to_end() {
    let check = (|| -> Check {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let secs = run_cli(a.path())?;
        ensure(secs < 60.0, || format!("run took {secs:.1} s"))?;
        run_cli(b.path())?;
        let files = snapshot(a.path());
        let header = |name: &str| -> Result<String, String> {
            let (_, bytes) = files.iter().find(|(n, _)| n == name).ok_or(format!("{name} missing"))?;
            Ok(String::from_utf8_lossy(bytes).lines().next().unwrap_or("").to_string())
        };
        let methods = "M1,M2,M3,M4,M5,M6,M7";
        let expect = [
            ("forecasts.csv", format!("date,actual,{methods},S1-rs,S1-grd,S1-lsm,S1-ed,S1-gro,S2-rs,S2-grd,S2-lsm,S2-ed,S2-gro")),
            ("weights.csv", "method,scheme,component,weight".to_string()),
            ("performance.csv", "method,accuracy,feasibility,consistency,MAE,RMSE".to_string()),
            ("ranks.csv", "method,R1,R2,R3,R".to_string()),
        ];
        for (name, want) in &expect {
            let got = header(name)?;
            ensure(&got == want, || format!("{name} header `{got}`"))?;
            let raw = name.replace(".csv", ".raw.csv");
            ensure(files.iter().any(|(n, _)| *n == raw), || format!("{raw} missing"))?;
        }
        ensure(files.iter().any(|(n, _)| n == "config.snapshot"), || "config.snapshot missing".into())?;
        ensure(files == snapshot(b.path()), || "rerun differs".into())?;
        Ok(format!("{} files in {secs:.1} s, byte-identical rerun", files.len()))
    })();
    report(10, "end-to-end run", check);
}
