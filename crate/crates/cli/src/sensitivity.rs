use std::fmt::Write as _;

use switchjump::engine::{finite_difference_sensitivity, fmt_f64};
use switchjump::exec::try_map_indexed;

use crate::args::{Command, SensitivityArgs, DEFAULT_DELTAS};
use crate::common::{load_model, prepare_out, sim_config, start_state, Session};
use crate::manifest::write_output;
use crate::Failure;

pub struct SweepRow {
    pub delta: f64,
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub n_used: usize,
    pub n_divergent: usize,
}

pub fn run(args: SensitivityArgs, session: &mut Session) -> Result<(), Failure> {
    let loaded = load_model(&args.model, session)?;
    let model = &loaded.model;
    if model.dim_x() != 1 {
        return Err(Failure::validation(format!(
            "invalid model: sensitivity needs a scalar state, dim_x = {}",
            model.dim_x()
        )));
    }
    // Only X(T) is needed, so by default record just the endpoints.
    let cfg = sim_config(&args.run, args.paths, Some(1))?;
    let (x0, a0) = start_state(&args.run, model, 1.0)?;
    let deltas = args.delta.clone().unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    if deltas.is_empty() {
        return Err(Failure::validation("invalid delta: the sweep is empty"));
    }

    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let errors = try_map_indexed(cfg.execution, cfg.n_paths, |k| {
            let pair = finite_difference_sensitivity(model, x0[0], delta, a0, &cfg, k)?;
            if pair.is_divergent() {
                return Ok(None);
            }
            let z = pair.finite_difference.as_ref().and_then(|z| z.last().copied());
            let s = pair.variational.last().copied();
            Ok::<_, switchjump::Error>(z.zip(s).map(|(z, s)| (z - s) * (z - s)))
        })?;
        let live: Vec<f64> = errors.iter().flatten().copied().filter(|e| e.is_finite()).collect();
        let n = live.len();
        let mean = live.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            live.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        rows.push(SweepRow {
            delta,
            mean_sq_error: mean,
            std_error: (var / n as f64).sqrt(),
            n_used: n,
            n_divergent: cfg.n_paths - n,
        });
    }
    if rows.iter().all(|r| r.n_used == 0) {
        return Err(Failure::runtime(format!("all {} paths diverged for every delta", cfg.n_paths)));
    }

    let mut csv = String::from("delta,mean_sq_error,std_error,n_paths,n_divergent\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(r.delta),
            fmt_f64(r.mean_sq_error),
            fmt_f64(r.std_error),
            r.n_used,
            r.n_divergent
        )
        .unwrap();
        println!(
            "delta {:e}: E|Z(T) - s(T)|^2 = {:.6e} (se {:.2e}, {} paths)",
            r.delta, r.mean_sq_error, r.std_error, r.n_used
        );
    }
    let dir = args.run.out.clone();
    prepare_out(&dir)?;
    let outputs = vec![write_output(&dir, "sensitivity.csv", csv.as_bytes())?];
    session.finish(Command::Sensitivity(args), &loaded, &cfg, &dir, outputs)
}
