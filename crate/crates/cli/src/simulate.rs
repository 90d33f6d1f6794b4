use switchjump::engine::{simulate_ensemble, write_ensemble_csv};

use crate::args::{Command, SimulateArgs};
use crate::common::{load_model, prepare_out, sim_config, start_state, Session};
use crate::manifest::write_output;
use crate::Failure;

pub fn run(args: SimulateArgs, session: &mut Session) -> Result<(), Failure> {
    let loaded = load_model(&args.model, session)?;
    let cfg = sim_config(&args.run, args.paths, None)?;
    let (x0, a0) = start_state(&args.run, &loaded.model, 1.0)?;
    let ensemble = simulate_ensemble(&loaded.model, &x0, a0, &cfg)?;

    let mut csv = Vec::new();
    let name = if ensemble.paths.len() == 1 {
        ensemble.paths[0].write_csv(&mut csv)
    } else {
        write_ensemble_csv(&ensemble.paths, &mut csv)
    }
    .map(|_| if ensemble.paths.len() == 1 { "trajectory.csv" } else { "trajectories.csv" })
    .expect("writing to memory");

    let dir = args.run.out.clone();
    prepare_out(&dir)?;
    let outputs = vec![write_output(&dir, name, &csv)?];
    let divergent = ensemble.divergent_count();
    session.finish(Command::Simulate(args), &loaded, &cfg, &dir, outputs)?;
    if divergent > 0 {
        eprintln!("warning: {divergent} of {} paths diverged", ensemble.paths.len());
    }
    if divergent == ensemble.paths.len() {
        return Err(Failure::runtime(format!("all {divergent} paths diverged")));
    }
    Ok(())
}
