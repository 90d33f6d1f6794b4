//! Acceptance criteria 1-10, one PASS/FAIL line each.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use serde_json::Value;
use switchjump::engine::{simulate_coupled_pair, SimConfig};
use switchjump::model::{builtin_example, Example, RateMatrix};
use switchjump::rng::PathRng;
use switchjump::switching::build_coupling;

use common::{fixture, json, num, outputs, run_ok, stderr, switchjump};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Path) -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed_analyze(args: &[&str], dir: &Path) -> (Value, f64) {
    let start = Instant::now();
    run_ok(args, dir);
    (json(&dir.join("report.json")), start.elapsed().as_secs_f64())
}

fn stationary(dir: &Path) -> Outcome {
    let (r, secs) = timed_analyze(&["analyze", "--example", "ex62", "--stationary"], dir);
    let mu: Vec<f64> = (0..3).map(|i| num(&r, &format!("/stationary/mu/{i}"))).collect();
    let want = [3.0 / 13.0, 8.0 / 13.0, 2.0 / 13.0];
    let err = mu.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        err <= 1e-12 && secs < 1.0,
        format!("mu = {mu:?}, max error {err:.1e}, {secs:.3} s"),
    )
}

fn criterion_value(dir: &Path) -> Outcome {
    let (r, secs) = timed_analyze(&["analyze", "--example", "ex62", "--criterion"], dir);
    let value = num(&r, "/criterion/value");
    let verdict = r.pointer("/criterion/verdict").and_then(Value::as_str).unwrap_or("");
    let noted = r
        .pointer("/criterion/notes")
        .and_then(Value::as_array)
        .is_some_and(|n| n.iter().any(|s| s.as_str().is_some_and(|s| s.contains("79.5/13"))));
    let err = (value - 79.5 / 13.0).abs();
    check(
        err <= 1e-10 && verdict == "inconclusive" && noted && secs < 1.0,
        format!("value = {value} (error {err:.1e}), verdict {verdict}, note attached: {noted}, {secs:.3} s"),
    )
}

fn moment_oracle(dir: &Path) -> Outcome {
    let model = fixture("gjd.json");
    let (r, secs) = timed_analyze(
        &[
            "analyze", "--model", model.to_str().unwrap(), "--moment-exponent", "2",
            "--paths", "10000", "--T", "10", "--dt", "1e-3", "--seed", "42",
        ],
        dir,
    );
    let est = num(&r, "/moment_exponent/estimate");
    let rel = (est - -3.0).abs() / 3.0;
    check(
        rel <= 0.05,
        format!("estimate {est:.4} vs -3.0 (relative error {:.1}%), {secs:.1} s", 100.0 * rel),
    )
}

fn as_exponent(dir: &Path, extra: &[&str]) -> (f64, f64, f64, Value) {
    let args = [&["analyze", "--as-exponent", "--paths", "10000", "--T", "50"], extra].concat();
    let (r, _) = timed_analyze(&args, dir);
    let est = num(&r, "/as_exponent/estimate");
    let lo = num(&r, "/as_exponent/ci_low");
    let hi = num(&r, "/as_exponent/ci_high");
    (est, lo, hi, r)
}

fn as_exponent_ex62(dir: &Path) -> Outcome {
    let (est, lo, hi, _) = as_exponent(dir, &["--example", "ex62"]);
    check(
        (est - -0.1147).abs() <= 0.05 && (hi < 0.0 || lo > 0.0),
        format!("estimate {est:.4} in [{lo:.4}, {hi:.4}], target -0.1147 +/- 0.05"),
    )
}

fn as_exponent_ex61(dir: &Path) -> Outcome {
    let (est, lo, hi, r) = as_exponent(dir, &["--example", "ex61", "--moment-exponent", "2"]);
    let moment = num(&r, "/moment_exponent/estimate");
    check(
        est < -0.2 && hi < 0.0,
        format!("estimate {est:.4} in [{lo:.4}, {hi:.4}]; p = 2 moment estimate {moment:.3} (reported only)"),
    )
}

fn sensitivity(dir: &Path) -> Outcome {
    let model = fixture("smooth.json");
    run_ok(
        &["sensitivity", "--model", model.to_str().unwrap(), "--T", "1", "--paths", "1000"],
        dir,
    );
    let text = fs::read_to_string(dir.join("sensitivity.csv")).unwrap();
    let errors: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    check(
        errors.len() == 3 && errors.windows(2).all(|w| w[1] < w[0]),
        format!("E|Z(T) - s(T)|^2 at delta 1e-1, 1e-2, 1e-3: {errors:?}"),
    )
}

fn random_rates(rng: &mut PathRng, m: usize) -> RateMatrix {
    let mut q = vec![0.0; m * m];
    for i in 0..m {
        let mut exit = 0.0;
        for j in (0..m).filter(|&j| j != i) {
            let v = if rng.uniform() < 0.3 { 0.0 } else { 5.0 * rng.uniform() };
            q[i * m + j] = v;
            exit += v;
        }
        q[i * m + i] = -exit;
    }
    RateMatrix::new(m, q).unwrap()
}

fn coupling() -> Outcome {
    let mut rng = PathRng::new(2024, 0);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for _ in 0..1000 {
        let m = 2 + (rng.uniform() * 4.0) as usize;
        let (qx, qy) = (random_rates(&mut rng, m), random_rates(&mut rng, m));
        let k = ((rng.uniform() * m as f64) as usize).min(m - 1);
        let l = ((rng.uniform() * m as f64) as usize).min(m - 1);
        let c = build_coupling(&qx, &qy, k, l);
        negative += c.entries.iter().filter(|e| e.rate() < 0.0).count();
        for j in 0..m {
            if j != k {
                worst = worst.max((c.first_marginal(j) - qx.get(k, j)).abs());
            }
            if j != l {
                worst = worst.max((c.second_marginal(j) - qy.get(l, j)).abs());
            }
        }
    }
    let model = builtin_example(Example::Ex62);
    let cfg = SimConfig::new(1e-3, 1.0).seed(5);
    let broken = (0..1000)
        .filter(|&k| {
            let p = simulate_coupled_pair(&model, &[0.5], &[0.5], 1, 1, &cfg, k).unwrap();
            p.first.states != p.second.states
                || p.first.regimes != p.second.regimes
                || p.diff_sq.iter().any(|&d| d != 0.0)
        })
        .count();
    check(
        worst <= 1e-12 && negative == 0 && broken == 0,
        format!(
            "max marginal error {worst:.1e} over 1000 pairs, {negative} negative rates, \
             {broken}/1000 equal-start pairs left lockstep"
        ),
    )
}

fn lyapunov_scan(dir: &Path) -> Outcome {
    let model = fixture("contracting.json");
    let mut fractions = Vec::new();
    for (spec, sub) in [("scan_k1.5.json", "k1.5"), ("scan_k2.json", "k2")] {
        let spec = fixture(spec);
        let (r, _) = timed_analyze(
            &["analyze", "--model", model.to_str().unwrap(), "--lyapunov-scan", spec.to_str().unwrap()],
            &dir.join(sub),
        );
        fractions.push(num(&r, "/lyapunov_scan/violation_fraction"));
    }
    check(
        fractions == [0.0, 1.0],
        format!("violation fraction {} at k = 1.5, {} at k = 2", fractions[0], fractions[1]),
    )
}

fn cross_time_ks(r: &Value) -> Vec<(f64, f64)> {
    r.pointer("/distribution/entries")
        .and_then(Value::as_array)
        .unwrap()
        .iter()
        .filter(|e| e["comparison"] == "cross_time")
        .map(|e| (e["ks"].as_f64().unwrap(), e["ks_threshold"].as_f64().unwrap()))
        .collect()
}

fn distribution(dir: &Path) -> Outcome {
    let stable = fixture("ou.json");
    let (r, _) = timed_analyze(
        &[
            "analyze", "--model", stable.to_str().unwrap(), "--dist-conv", "--paths", "10000",
            "--T", "10", "--checkpoints", "5,10",
        ],
        &dir.join("stable"),
    );
    let (ks, threshold) = cross_time_ks(&r)[0];
    let explosive = fixture("explosive.json");
    let (r, _) = timed_analyze(
        &[
            "analyze", "--model", explosive.to_str().unwrap(), "--dist-conv", "--paths", "10000",
            "--T", "10", "--checkpoints", "2.5,5,10",
        ],
        &dir.join("explosive"),
    );
    let control: Vec<f64> = cross_time_ks(&r).iter().map(|e| e.0).collect();
    let grows = control.windows(2).all(|w| w[1] > w[0]);
    check(
        ks < threshold && grows,
        format!(
            "KS(t=5, t=10) = {ks:.4} < {threshold:.4}; explosive control KS {control:.3?} growing: {grows}"
        ),
    )
}

fn reproducibility(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).unwrap();
    let model = dir.join("smooth.json");
    fs::copy(fixture("smooth.json"), &model).unwrap();
    let m = model.to_str().unwrap();
    let commands: [Vec<&str>; 3] = [
        vec!["simulate", "--model", m, "--paths", "50", "--T", "2"],
        vec![
            "analyze", "--example", "ex62", "--paths", "300", "--T", "4", "--criterion", "--stationary",
            "--as-exponent", "--moment-exponent", "2", "--p1", "--p2", "--dist-conv",
        ],
        vec!["sensitivity", "--model", m, "--paths", "200", "--T", "1"],
    ];
    for args in &commands {
        let base = dir.join(args[0]).join("threads1");
        run_ok(&[args.as_slice(), &["--threads", "1"]].concat(), &base);
    }
    // Reruns must not need the original config file.
    fs::remove_file(&model).unwrap();
    for args in &commands {
        let base = dir.join(args[0]).join("threads1");
        let want = outputs(&base);
        for t in ["4", "8"] {
            let out = dir.join(args[0]).join(format!("threads{t}"));
            let manifest = base.join("manifest.json");
            let o = switchjump(&[
                "rerun", manifest.to_str().unwrap(), "--threads", t, "--out", out.to_str().unwrap(),
            ]);
            if !o.status.success() {
                return Err(format!("{} rerun on {t} threads: {}", args[0], stderr(&o)));
            }
            if outputs(&out) != want {
                return Err(format!("{} outputs differ on {t} threads", args[0]));
            }
        }
    }
    Ok("simulate, analyze and sensitivity reruns byte-identical on 1, 4 and 8 threads".into())
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let criteria: [Criterion; 10] = [
        ("stationary distribution of ex62", stationary),
        ("linearized stability sum for ex62", criterion_value),
        ("closed-form moment exponent", moment_oracle),
        ("almost-sure exponent of ex62", as_exponent_ex62),
        ("almost-sure exponent of ex61", as_exponent_ex61),
        ("sensitivity convergence", sensitivity),
        ("coupling marginals and lockstep", |_| coupling()),
        ("Lyapunov scan oracle", lyapunov_scan),
        ("distribution convergence", distribution),
        ("reproducibility from manifests", reproducibility),
    ];
    let mut failed = Vec::new();
    for (n, (name, f)) in criteria.iter().enumerate() {
        let dir = root.join(format!("c{}", n + 1));
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&dir)))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", n + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]", n + 1);
                failed.push(n + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
