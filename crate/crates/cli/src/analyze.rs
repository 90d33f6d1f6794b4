use std::fmt::Write as _;

use switchjump::engine::{fmt_f64, SimConfig};
use switchjump::generator::{lyapunov_scan, ScanSpec};
use switchjump::model::{linearize, Example, LinearizedModel, DEFAULT_FD_STEP};
use switchjump::stability::{
    check_p1, check_p2, criterion_cor34, distribution_convergence, estimate_as_exponent,
    estimate_moment_exponent, scalar_sharp_exponent, stationary_distribution, Comparison,
    DistanceTable, P1Table, P2Diagnostics, StabilityReport,
};

use crate::args::{AnalyzeArgs, Command};
use crate::common::{load_model, prepare_out, regime_index, sim_config, start_state, LoadedModel, Session};
use crate::manifest::write_output;
use crate::{Failure, EXIT_RUNTIME, EXIT_VALIDATION};

const GRID_ROWS: usize = 100;

/// Ex62 is unstable far from the origin; its exponents describe the linearization there.
const EX62_DEFAULT_X0: f64 = 1e-30;

const EX62_NOTE: &str = "ex62: with the published constants the linearized stability sum is 79.5/13 > 0, \
so this criterion cannot confirm the asymptotic stability in the large claimed for the example; \
the scalar sharp exponent (about -0.1145) and the Monte Carlo almost-sure exponent both indicate decay";

struct Run<'a> {
    loaded: &'a LoadedModel,
    cfg: SimConfig,
    x0: Vec<f64>,
    a0: usize,
    report: StabilityReport,
    codes: Vec<u8>,
    linearized: Option<Result<LinearizedModel, switchjump::Error>>,
}

impl Run<'_> {
    fn record<T>(&mut self, analysis: &str, result: Result<T, Failure>) -> Option<T> {
        match result {
            Ok(v) => Some(v),
            Err(f) => {
                eprintln!("{analysis}: failed: {f}");
                self.report.failure(analysis, &f.message);
                self.codes.push(f.code);
                None
            }
        }
    }

    fn linearized(&mut self) -> Result<&LinearizedModel, Failure> {
        let model = &self.loaded.model;
        self.linearized
            .get_or_insert_with(|| linearize(model, DEFAULT_FD_STEP))
            .as_ref()
            .map_err(|e| e.clone().into())
    }
}

pub fn run(args: AnalyzeArgs, session: &mut Session) -> Result<(), Failure> {
    if args.selected_count() == 0 {
        return Err(Failure::validation(
            "no analysis selected; pass at least one of --criterion, --stationary, --moment-exponent, \
             --as-exponent, --lyapunov-scan, --p1, --p2, --dist-conv",
        ));
    }
    let loaded = load_model(&args.model, session)?;
    let cfg = sim_config(&args.run, args.paths, Some(GRID_ROWS))?;
    let default_x0 = match loaded.example {
        Some(Example::Ex62) => EX62_DEFAULT_X0,
        _ => 1.0,
    };
    let (x0, a0) = start_state(&args.run, &loaded.model, default_x0)?;
    let mut report = StabilityReport::new(loaded.source.id.clone());
    report.model_hash = Some(loaded.hash());
    report.config = Some(cfg.clone());
    let mut run = Run {
        loaded: &loaded,
        cfg,
        x0,
        a0,
        report,
        codes: Vec::new(),
        linearized: None,
    };
    let mut tables: Vec<(&str, String)> = Vec::new();

    if args.stationary {
        let r = run
            .linearized()
            .and_then(|lm| Ok(stationary_distribution(&lm.q_hat)?));
        if let Some(s) = run.record("stationary", r) {
            println!("stationary: mu = {:?}", s.mu);
            run.report.stationary = Some(s);
        }
    }
    if args.criterion {
        let r = run.linearized().and_then(|lm| {
            let c = criterion_cor34(lm)?;
            let sharp = if lm.dim_x() == 1 { scalar_sharp_exponent(lm).ok() } else { None };
            Ok((c, sharp))
        });
        if let Some((mut c, sharp)) = run.record("criterion", r) {
            if loaded.example == Some(Example::Ex62) {
                c.notes.push(EX62_NOTE.into());
            }
            println!("criterion: value = {}, verdict {}", c.value, c.verdict);
            if let Some(s) = sharp {
                println!("sharp exponent: {s}");
            }
            run.report.set_criterion(c);
            run.report.sharp_exponent = sharp;
        }
    }
    if let Some(p) = args.moment_exponent {
        let r = estimate_moment_exponent(&loaded.model, &run.x0, run.a0, p, &run.cfg).map_err(Failure::from);
        if let Some(e) = run.record("moment_exponent", r) {
            println!(
                "moment exponent (p = {p}): {} [{}, {}]",
                e.estimate, e.ci_low, e.ci_high
            );
            run.report.set_moment_exponent(e);
        }
    }
    if args.as_exponent {
        let r = estimate_as_exponent(&loaded.model, &run.x0, run.a0, &run.cfg).map_err(Failure::from);
        if let Some(e) = run.record("as_exponent", r) {
            println!("almost-sure exponent: {} [{}, {}]", e.estimate, e.ci_low, e.ci_high);
            run.report.set_as_exponent(e);
        }
    }
    if let Some(path) = &args.lyapunov_scan {
        let r = session.read_input(path).and_then(|text| {
            let spec = ScanSpec::from_json(&text)?;
            let v = spec.test_function()?;
            Ok(lyapunov_scan(&loaded.model, &v, &spec)?)
        });
        if let Some(s) = run.record("lyapunov_scan", r) {
            println!(
                "lyapunov scan: {} points, violation fraction {}, max violation {}",
                s.n_points, s.violation_fraction, s.max_violation
            );
            run.report.set_lyapunov_scan(s);
        }
    }
    if args.p1 {
        let r = check_p1(&loaded.model, &run.x0, run.a0, &run.cfg, &args.radii).map_err(Failure::from);
        if let Some(t) = run.record("p1", r) {
            println!("p1: sup_t P(|X(t)| >= R) = {:?} for R = {:?}", t.sup_over_time, t.radii);
            tables.push(("p1.csv", p1_csv(&t)));
            run.report.p1 = Some(t);
        }
    }
    if args.p2 {
        let r = p2_inputs(&args, &run).and_then(|(y0, j0)| {
            Ok(check_p2(&loaded.model, &run.x0, &y0, run.a0, j0, &run.cfg, &args.eps)?)
        });
        if let Some(d) = run.record("p2", r) {
            println!("p2: slope of ln E|X - Y|^2 = {:?}", d.diff_sq_rate);
            tables.push(("p2.csv", p2_csv(&d)));
            run.report.set_p2(d);
        }
    }
    if args.dist_conv {
        let r = dist_inputs(&args, &run).and_then(|(starts, checkpoints)| {
            Ok(distribution_convergence(&loaded.model, &starts, &run.cfg, &checkpoints)?)
        });
        if let Some(d) = run.record("distribution", r) {
            for e in &d.entries {
                println!(
                    "distribution: {:?} starts {}/{} t {}/{}: ks {} (threshold {}), tv {}",
                    e.comparison, e.start_a + 1, e.start_b + 1, e.t_a, e.t_b, e.ks, e.ks_threshold, e.tv
                );
            }
            tables.push(("distribution.csv", distribution_csv(&d)));
            run.report.distribution = Some(d);
        }
    }

    let dir = args.run.out.clone();
    prepare_out(&dir)?;
    let mut json = run.report.to_json();
    json.push('\n');
    let mut outputs = vec![write_output(&dir, "report.json", json.as_bytes())?];
    for (name, text) in &tables {
        outputs.push(write_output(&dir, name, text.as_bytes())?);
    }
    let n_selected = args.selected_count();
    let codes = std::mem::take(&mut run.codes);
    let cfg = run.cfg.clone();
    session.finish(Command::Analyze(args), &loaded, &cfg, &dir, outputs)?;
    if codes.len() == n_selected {
        let code = if codes.iter().all(|&c| c == EXIT_VALIDATION) {
            EXIT_VALIDATION
        } else {
            EXIT_RUNTIME
        };
        return Err(Failure {
            code,
            message: "every selected analysis failed; see failures in report.json".into(),
        });
    }
    Ok(())
}

fn p2_inputs(args: &AnalyzeArgs, run: &Run) -> Result<(Vec<f64>, usize), Failure> {
    let y0 = match &args.y0 {
        Some(y) => y.clone(),
        None => run.x0.iter().map(|v| 0.5 * v).collect(),
    };
    let j0 = match args.j0 {
        Some(j) => regime_index(j, &run.loaded.model, "j0")?,
        None => run.a0,
    };
    Ok((y0, j0))
}

/// Starts as `(x, zero-based regime)` and checkpoint times.
type DistInputs = (Vec<(f64, usize)>, Vec<f64>);

fn dist_inputs(args: &AnalyzeArgs, run: &Run) -> Result<DistInputs, Failure> {
    let model = &run.loaded.model;
    let starts = match &args.starts {
        Some(list) => list
            .iter()
            .map(|s| parse_start(s, run))
            .collect::<Result<Vec<_>, _>>()?,
        None => (0..model.num_regimes()).map(|i| (run.x0[0], i)).collect(),
    };
    let t = run.cfg.horizon;
    let checkpoints = args.checkpoints.clone().unwrap_or_else(|| vec![0.25 * t, 0.5 * t, t]);
    Ok((starts, checkpoints))
}

fn parse_start(s: &str, run: &Run) -> Result<(f64, usize), Failure> {
    let bad = || Failure::validation(format!("invalid starts: {s:?} is not of the form x:regime"));
    let (x, i) = s.split_once(':').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    Ok((x, regime_index(i, &run.loaded.model, "starts")?))
}

fn p1_csv(t: &P1Table) -> String {
    let mut out = String::from("t");
    for r in &t.radii {
        write!(out, ",p_ge_{}", fmt_f64(*r)).unwrap();
    }
    out.push('\n');
    for (n, time) in t.times.iter().enumerate() {
        out.push_str(&fmt_f64(*time));
        for row in &t.exceedance {
            write!(out, ",{}", fmt_f64(row[n])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn p2_csv(d: &P2Diagnostics) -> String {
    let mut out = String::from("t,mean_diff_sq,mean_augmented_diff,same_regime");
    for e in &d.epsilons {
        write!(out, ",p_within_{}", fmt_f64(*e)).unwrap();
    }
    out.push('\n');
    for (n, time) in d.times.iter().enumerate() {
        write!(
            out,
            "{},{},{},{}",
            fmt_f64(*time),
            fmt_f64(d.mean_diff_sq[n]),
            fmt_f64(d.mean_augmented_diff[n]),
            fmt_f64(d.same_regime[n])
        )
        .unwrap();
        for row in &d.prob_within {
            write!(out, ",{}", fmt_f64(row[n])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn distribution_csv(d: &DistanceTable) -> String {
    let mut out = String::from("comparison,start_a,start_b,t_a,t_b,ks,ks_threshold,tv\n");
    for e in &d.entries {
        let kind = match e.comparison {
            Comparison::CrossTime => "cross_time",
            Comparison::CrossStart => "cross_start",
        };
        writeln!(
            out,
            "{kind},{},{},{},{},{},{},{}",
            e.start_a + 1,
            e.start_b + 1,
            fmt_f64(e.t_a),
            fmt_f64(e.t_b),
            fmt_f64(e.ks),
            fmt_f64(e.ks_threshold),
            fmt_f64(e.tv)
        )
        .unwrap();
    }
    out
}
