use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::engine::SimConfig;
use crate::error::Error;
use crate::model::{builtin_example, linearize, Example, LinearizedModel, RateMatrix, RegimeModel, DEFAULT_FD_STEP};

fn ex62_q() -> RateMatrix {
    RateMatrix::from_rows(&[
        vec![-4.0, 2.0, 2.0],
        vec![1.0, -1.0, 0.0],
        vec![2.0, 1.0, -3.0],
    ])
    .unwrap()
}

fn ex62_linear() -> LinearizedModel {
    LinearizedModel::scalar(&[2.0, 2.0, 3.0], &[1.0, 3.0, 1.0], ex62_q(), &[1.0, 1.0, 1.0], 1.0).unwrap()
}

fn scalar_model(b: f64, sigma: f64, lambda: f64) -> RegimeModel {
    RegimeModel::builder(1, 1, 1)
        .scalar_drift(move |x, _| b * x)
        .scalar_diffusion(move |x, _| sigma * x)
        .scalar_jump(|x, _, _| x)
        .jump_rate(lambda)
        .equilibrium(true)
        .build()
        .unwrap()
}

#[test]
fn stationary_distribution_examples() {
    let mu = stationary_distribution(&ex62_q()).unwrap().mu;
    for (a, b) in mu.iter().zip([3.0 / 13.0, 8.0 / 13.0, 2.0 / 13.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    let q = RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![3.0, -3.0]]).unwrap();
    let mu = stationary_distribution(&q).unwrap().mu;
    assert!((mu[0] - 0.75).abs() < 1e-15 && (mu[1] - 0.25).abs() < 1e-15);
    assert_eq!(stationary_distribution(&RateMatrix::zeros(1)).unwrap().mu, vec![1.0]);
}

#[test]
fn linearized_example_62_generator() {
    let lm = linearize(&builtin_example(Example::Ex62), DEFAULT_FD_STEP).unwrap();
    let mu = stationary_distribution(&lm.q_hat).unwrap().mu;
    assert!((mu[1] - 8.0 / 13.0).abs() < 1e-12);
}

#[test]
fn reducible_generators_name_closed_classes() {
    let q = RateMatrix::from_rows(&[
        vec![-1.0, 0.5, 0.5],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ])
    .unwrap();
    assert_eq!(
        stationary_distribution(&q),
        Err(Error::Reducible { classes: vec![vec![2], vec![3]] })
    );
    let tiny = RateMatrix::from_rows(&[vec![-1e-15, 1e-15], vec![1.0, -1.0]]).unwrap();
    assert!(!is_irreducible(&tiny));
    assert_eq!(closed_classes(&tiny), vec![vec![0]]);
}

fn irreducible_generator() -> impl Strategy<Value = RateMatrix> {
    (2usize..6).prop_flat_map(|m| {
        (
            prop::collection::vec(0.0f64..5.0, m * m),
            prop::collection::vec(0.05f64..5.0, m),
        )
            .prop_map(move |(extra, cycle)| {
                let mut rows = vec![vec![0.0; m]; m];
                for i in 0..m {
                    for j in 0..m {
                        if i != j && extra[i * m + j] > 2.5 {
                            rows[i][j] = extra[i * m + j];
                        }
                    }
                    rows[i][(i + 1) % m] += cycle[i];
                }
                for (i, row) in rows.iter_mut().enumerate() {
                    row[i] = -row.iter().sum::<f64>();
                }
                RateMatrix::from_rows(&rows).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn stationary_invariants(q in irreducible_generator()) {
        let mu = stationary_distribution(&q).unwrap().mu;
        let m = q.dim();
        prop_assert!(mu.iter().all(|&v| v >= 0.0));
        prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..m {
            let r: f64 = (0..m).map(|i| mu[i] * q.get(i, j)).sum();
            prop_assert!(r.abs() < 1e-10, "column {} residual {}", j, r);
        }
    }

    #[test]
    fn jacobi_matches_reference_eigensolver(n in 1usize..6, entries in prop::collection::vec(-10.0f64..10.0, 36)) {
        let a = DMatrix::from_fn(n, n, |i, j| entries[i * 6 + j]);
        let sym = (&a + a.transpose()) * 0.5;
        let reference = sym.clone().symmetric_eigen().eigenvalues.max();
        let ours = lambda_max_sym(&a);
        prop_assert!((ours - reference).abs() < 1e-10 * reference.abs().max(1.0));
        prop_assert_eq!(ours, lambda_max_sym(&sym));
        let shifted = &a + DMatrix::identity(n, n) * 3.5;
        prop_assert!((lambda_max_sym(&shifted) - (ours + 3.5)).abs() < 1e-10 * ours.abs().max(1.0));
    }

    #[test]
    fn criterion_invariant_under_relabeling(q in irreducible_generator(), seed in 0u64..1000) {
        let m = q.dim();
        let pick = |k: usize| ((seed as usize * 7 + k * 13) % 11) as f64 - 5.0;
        let b: Vec<f64> = (0..m).map(pick).collect();
        let s: Vec<f64> = (0..m).map(|k| pick(k + 3) * 0.3).collect();
        let g: Vec<f64> = (0..m).map(|k| pick(k + 5).abs() * 0.1).collect();
        let lm = LinearizedModel::scalar(&b, &s, q, &g, 0.7).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.rotate_left((seed as usize) % m);
        perm.swap(0, m - 1);
        let relabeled = lm.permuted(&perm);
        let (a, c) = (criterion_cor34(&lm).unwrap().value, criterion_cor34(&relabeled).unwrap().value);
        prop_assert!((a - c).abs() < 1e-10 * a.abs().max(1.0));
        let (a, c) = (scalar_sharp_exponent(&lm).unwrap(), scalar_sharp_exponent(&relabeled).unwrap());
        prop_assert!((a - c).abs() < 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn lambda_max_examples() {
    assert_eq!(lambda_max_sym(&DMatrix::identity(2, 2)), 1.0);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
    assert!((lambda_max_sym(&a) - 1.0).abs() < 1e-12);
    assert_eq!(lambda_max_sym(&DMatrix::from_element(1, 1, 2.0)), 2.0);
    let eig = symmetric_eigenvalues(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 3.0).abs() < 1e-12);
}

#[test]
fn criterion_example_62() {
    let c = criterion_cor34(&ex62_linear()).unwrap();
    assert!((c.value - 79.5 / 13.0).abs() < 1e-10);
    assert_eq!(c.verdict, Verdict::Inconclusive);
    assert!(!c.notes.is_empty());
    let terms: Vec<f64> = c.terms.iter().map(|t| t.drift + t.diffusion + t.jump).collect();
    assert_eq!(terms, vec![3.5, 7.5, 4.5]);

    let fd = criterion_cor34(&linearize(&builtin_example(Example::Ex62), DEFAULT_FD_STEP).unwrap()).unwrap();
    assert!((fd.value - 79.5 / 13.0).abs() < 1e-6);
}

#[test]
fn criterion_trivial_cases() {
    let zero = LinearizedModel::scalar(&[0.0], &[0.0], RateMatrix::zeros(1), &[0.0], 0.0).unwrap();
    let c = criterion_cor34(&zero).unwrap();
    assert_eq!((c.value, c.verdict), (0.0, Verdict::Inconclusive));
    let stable = LinearizedModel::scalar(&[-3.0], &[1.0], RateMatrix::zeros(1), &[0.0], 0.0).unwrap();
    let c = criterion_cor34(&stable).unwrap();
    assert_eq!((c.value, c.verdict), (-2.5, Verdict::StableEvidence));
    assert!(c.notes.is_empty());
}

#[test]
fn sharp_exponent_example_62() {
    let ln2 = 2f64.ln();
    let expected = (3.0 * (2.0 - 0.5 + ln2) + 8.0 * (2.0 - 4.5 + ln2) + 2.0 * (3.0 - 0.5 + ln2)) / 13.0;
    let v = scalar_sharp_exponent(&ex62_linear()).unwrap();
    assert!((v - expected).abs() < 1e-12);
    assert!((v + 0.114545).abs() < 1e-5, "{v}");
    let zero = LinearizedModel::scalar(&[0.0], &[0.0], RateMatrix::zeros(1), &[0.0], 0.0).unwrap();
    assert_eq!(scalar_sharp_exponent(&zero).unwrap(), 0.0);
}

#[test]
fn sharp_exponent_needs_scalar_state() {
    let planar = linearize(&RegimeModel::builder(2, 1, 1).equilibrium(true).build().unwrap(), DEFAULT_FD_STEP).unwrap();
    assert!(matches!(scalar_sharp_exponent(&planar), Err(Error::Unsupported(_))));
    assert!(criterion_cor34(&planar).is_ok());
}

#[test]
fn moment_exponent_of_geometric_motion() {
    let cfg = SimConfig::new(1e-3, 4.0).seed(3).paths(4000).stride(100);
    let e = estimate_moment_exponent(&scalar_model(-3.0, 0.5, 0.0), &[1.0], 0, 2.0, &cfg).unwrap();
    assert!((e.estimate + 5.75).abs() < 0.05 * 5.75, "{e:?}");
    assert!(e.ci_low <= e.estimate && e.estimate <= e.ci_high);
    assert_eq!(e.window, (2.0, 4.0));
    assert_eq!(e.decay_constant, Some(-e.estimate));
    assert_eq!(exponent_verdict(&e), Verdict::StableEvidence);

    let e = estimate_moment_exponent(&scalar_model(-1.0, 0.3, 0.2), &[1.0], 0, 1.0, &cfg).unwrap();
    assert!((e.estimate + 0.8).abs() < 0.05 * 0.8, "{e:?}");
}

#[test]
fn exponent_estimators_reject_zero_start() {
    let cfg = SimConfig::new(1e-2, 1.0);
    let model = scalar_model(-1.0, 0.0, 0.0);
    assert!(matches!(estimate_moment_exponent(&model, &[0.0], 0, 2.0, &cfg), Err(Error::Precondition(_))));
    assert!(matches!(estimate_as_exponent(&model, &[0.0], 0, &cfg), Err(Error::Precondition(_))));
}

#[test]
fn as_exponent_of_deterministic_decay() {
    let dt = 1e-3;
    let cfg = SimConfig::new(dt, 5.0).paths(4).stride(1000);
    let e = estimate_as_exponent(&scalar_model(-1.0, 0.0, 0.0), &[2.0], 0, &cfg).unwrap();
    assert!((e.estimate + 1.0).abs() < 5.0 * dt, "{e:?}");
    assert_eq!((e.ci_low, e.ci_high), (e.estimate, e.estimate));
}

#[test]
fn as_exponent_uses_freeze_time() {
    let mut cfg = SimConfig::new(1e-2, 10.0).paths(2).stride(100);
    cfg.underflow_floor = 1e-2;
    let e = estimate_as_exponent(&scalar_model(-1.0, 0.0, 0.0), &[1.0], 0, &cfg).unwrap();
    assert_eq!(e.n_frozen, 2);
    assert!((e.estimate + 1.0).abs() < 0.02, "{e:?}");
}

#[test]
fn all_divergent_is_an_error() {
    let model = RegimeModel::builder(1, 1, 1).scalar_drift(|x, _| x * x * x).build().unwrap();
    let cfg = SimConfig::new(0.01, 2.0).paths(3);
    assert_eq!(
        estimate_as_exponent(&model, &[5.0], 0, &cfg),
        Err(Error::AllDivergent { n_paths: 3 })
    );
}

#[test]
fn empirical_lyapunov_of_linear_decay() {
    let t_end = 5.0;
    let cfg = SimConfig::new(1e-3, t_end).stride(10);
    let points = vec![vec![0.0], vec![0.5], vec![-2.0]];
    let table = empirical_lyapunov(&scalar_model(-1.0, 0.0, 0.0), 2.0, &points, &cfg).unwrap();
    let exact = |x: f64| x * x * (1.0 - (-2.0 * t_end).exp()) / 2.0;
    assert_eq!(table.entries[0].v, 0.0);
    for e in &table.entries[1..] {
        assert!((e.v - exact(e.x[0])).abs() < 2e-3 * exact(e.x[0]), "{e:?}");
    }
    assert!(table.k1 <= table.k2 && table.k1 > 0.0);
    assert!((table.k1 - 0.5).abs() < 2e-3);
}

#[test]
fn empirical_lyapunov_is_homogeneous() {
    let cfg = SimConfig::new(1e-3, 2.0).seed(4).paths(200).stride(20);
    let model = scalar_model(-0.5, 0.4, 0.3);
    let table = empirical_lyapunov(&model, 2.0, &[vec![0.7], vec![1.4]], &cfg).unwrap();
    let ratio = table.entries[1].v / table.entries[0].v;
    assert!((ratio - 4.0).abs() < 1e-9, "{ratio}");
    let no_eq = RegimeModel::builder(1, 1, 1).build().unwrap();
    assert_eq!(empirical_lyapunov(&no_eq, 2.0, &[vec![1.0]], &cfg), Err(Error::NoEquilibrium));
}

#[test]
fn p1_exceedance_tables() {
    let cfg = SimConfig::new(1e-2, 5.0).seed(2).paths(500).stride(10);
    let t = check_p1(&scalar_model(-1.0, 0.3, 0.0), &[1.0], 0, &cfg, &[0.0, 1.5, 3.0]).unwrap();
    assert!(t.exceedance[0].iter().all(|&p| p == 1.0));
    assert!(t.sup_over_time[1] < 0.05 && t.sup_over_time[2] <= t.sup_over_time[1]);

    let explosive = RegimeModel::builder(1, 1, 1).scalar_drift(|x, _| x).build().unwrap();
    let t = check_p1(&explosive, &[1.0], 0, &cfg, &[10.0]).unwrap();
    assert_eq!(t.exceedance[0][0], 0.0);
    assert_eq!(*t.exceedance[0].last().unwrap(), 1.0);
    assert!(check_p1(&explosive, &[1.0], 0, &cfg, &[-1.0]).is_err());
}

#[test]
fn p2_diagnostics() {
    let cfg = SimConfig::new(1e-3, 3.0).seed(8).paths(50).stride(100);
    let ex61 = builtin_example(Example::Ex61);
    let same = check_p2(&ex61, &[0.8], &[0.8], 1, 1, &cfg, &[1e-12]).unwrap();
    assert!(same.mean_diff_sq.iter().all(|&d| d == 0.0));
    assert!(same.mean_augmented_diff.iter().all(|&d| d == 0.0));
    assert!(same.prob_within[0].iter().all(|&p| p == 1.0));
    assert_eq!(same.diff_sq_rate, None);

    let decay = RegimeModel::builder(1, 1, 1).scalar_drift(|x, _| -x).build().unwrap();
    let d = check_p2(&decay, &[1.0], &[-1.0], 0, 0, &cfg, &[0.5]).unwrap();
    assert!((d.diff_sq_rate.unwrap() + 2.0).abs() < 0.01);

    // Constant rates and a shared start regime keep the chains in lockstep.
    let lock = check_p2(&ex61, &[1.0], &[0.4], 0, 0, &cfg, &[0.5]).unwrap();
    assert!(lock.same_regime.iter().all(|&f| f == 1.0));
    for (a, d2) in lock.mean_augmented_diff.iter().zip(&lock.mean_diff_sq) {
        assert!(*a <= d2.sqrt() + 1e-12);
    }
}

#[test]
fn ks_statistics() {
    let a = [0.1, 0.2, 0.3];
    assert_eq!(ks_distance(&a, &a), 0.0);
    assert_eq!(ks_distance(&a, &[1.0, 2.0]), 1.0);
    assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    assert!((ks_distance(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]) - 1.0 / 3.0).abs() < 1e-15);
    assert!((ks_threshold(10_000, 10_000, 0.01) - (200f64.ln() / 2.0).sqrt() * (2e-4f64).sqrt()).abs() < 1e-15);
    let s1 = RegimeSample { values: vec![1.0, 2.0, 3.0, 4.0], regimes: vec![0, 0, 1, 1] };
    let s2 = RegimeSample { values: vec![1.0, 2.0, 3.0, 4.0], regimes: vec![0, 0, 0, 1] };
    let d = sample_distance(&s1, &s2, 2);
    assert!((d.tv - 0.25).abs() < 1e-15);
}

#[test]
fn distribution_convergence_tables() {
    let ou = RegimeModel::builder(1, 1, 1)
        .scalar_drift(|x, _| -x)
        .diffusion(|_, _, out| out[0] = 1.0)
        .build()
        .unwrap();
    let cfg = SimConfig::new(1e-2, 10.0).seed(5).paths(2000).stride(100);
    let table = distribution_convergence(&ou, &[(0.0, 0), (0.0, 0), (3.0, 0)], &cfg, &[5.0, 10.0]).unwrap();
    for e in &table.entries {
        if e.comparison == Comparison::CrossStart && e.start_b == 1 {
            assert_eq!(e.ks, 0.0);
        }
        if e.comparison == Comparison::CrossTime {
            assert!(e.ks < e.ks_threshold, "{e:?}");
        }
    }
    assert!(distribution_convergence(&ou, &[(0.0, 0)], &cfg, &[5.05]).is_err());

    let explosive = RegimeModel::builder(1, 1, 1)
        .scalar_drift(|x, _| x)
        .diffusion(|_, _, out| out[0] = 1.0)
        .build()
        .unwrap();
    let cfg = SimConfig::new(1e-2, 8.0).seed(5).paths(2000).stride(100);
    let table = distribution_convergence(&explosive, &[(1.0, 0)], &cfg, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    let ks: Vec<f64> = table.entries.iter().map(|e| e.ks).collect();
    assert!(ks.windows(2).all(|w| w[1] > w[0]), "{ks:?}");
    assert_eq!(table.cross_time_decreasing, vec![false]);
}

#[test]
fn report_serializes_with_verdicts() {
    let mut r = StabilityReport::new("ex62");
    r.stationary = Some(stationary_distribution(&ex62_q()).unwrap());
    r.set_criterion(criterion_cor34(&ex62_linear()).unwrap());
    r.failure("p1", Error::NoEquilibrium);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["criterion"]["verdict"], "inconclusive");
    assert_eq!(json["verdicts"][0]["basis"], "criterion.value");
    assert_eq!(json["schema_version"], REPORT_SCHEMA_VERSION);
    assert!(json.get("as_exponent").is_none());
    assert_eq!(json["failures"][0]["analysis"], "p1");
}
