use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use switchjump::engine::SimConfig;
use switchjump::exec::Execution;
use switchjump::model::config::ModelConfig;
use switchjump::model::{builtin_example, Example, RegimeModel};

use crate::args::{Command, ModelArgs, RerunArgs, RunArgs};
use crate::manifest::{sha256_hex, ModelSource, OutputFile, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
use crate::Failure;

/// Input files and timing of one command invocation.
pub struct Session {
    /// Inputs replayed from a manifest instead of the file system.
    embedded: Option<BTreeMap<String, String>>,
    inputs: BTreeMap<String, String>,
    started: Instant,
    started_unix: u64,
    pub outputs: Vec<OutputFile>,
}

impl Session {
    pub fn fresh() -> Self {
        Self {
            embedded: None,
            inputs: BTreeMap::new(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            outputs: Vec::new(),
        }
    }

    fn replay(inputs: BTreeMap<String, String>) -> Self {
        Self {
            embedded: Some(inputs),
            ..Self::fresh()
        }
    }

    pub fn read_input(&mut self, path: &Path) -> Result<String, Failure> {
        let key = path.to_string_lossy().into_owned();
        let text = match &self.embedded {
            Some(map) => map.get(&key).cloned().ok_or_else(|| {
                Failure::validation(format!("manifest does not embed the input {key}"))
            })?,
            None => fs::read_to_string(path).map_err(|e| Failure::input(path, e))?,
        };
        self.inputs.insert(key, text.clone());
        Ok(text)
    }

    /// Writes the manifest listing `outputs` next to them.
    pub fn finish(
        &mut self,
        invocation: Command,
        model: &LoadedModel,
        cfg: &SimConfig,
        dir: &Path,
        outputs: Vec<OutputFile>,
    ) -> Result<(), Failure> {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: env!("CARGO_BIN_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            invocation,
            model: model.source.clone(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            seed: cfg.seed,
            inputs: self.inputs.clone(),
            outputs: outputs.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            started_unix: self.started_unix,
        };
        let path = manifest.write(dir)?;
        for o in &outputs {
            println!("wrote {}", dir.join(&o.path).display());
        }
        println!("wrote {}", path.display());
        self.outputs = outputs;
        Ok(())
    }
}

pub struct LoadedModel {
    pub model: RegimeModel,
    pub source: ModelSource,
    pub example: Option<Example>,
}

impl LoadedModel {
    /// Hash identifying the model: of the config text, or of the built-in id.
    pub fn hash(&self) -> String {
        match &self.source.sha256 {
            Some(h) => h.clone(),
            None => sha256_hex(format!("builtin:{}", self.source.id).as_bytes()),
        }
    }
}

pub fn load_model(args: &ModelArgs, session: &mut Session) -> Result<LoadedModel, Failure> {
    if let Some(id) = &args.example {
        let example: Example = id.parse()?;
        return Ok(LoadedModel {
            model: builtin_example(example),
            source: ModelSource {
                id: example.id().into(),
                kind: "builtin".into(),
                sha256: None,
            },
            example: Some(example),
        });
    }
    let path = args
        .model
        .as_ref()
        .ok_or_else(|| Failure::validation("one of --example or --model is required"))?;
    let text = session.read_input(path)?;
    let model = ModelConfig::from_json(&text)?.build()?;
    Ok(LoadedModel {
        model,
        source: ModelSource {
            id: path.to_string_lossy().into_owned(),
            kind: "config".into(),
            sha256: Some(sha256_hex(text.as_bytes())),
        },
        example: None,
    })
}

/// With `target_rows`, the default stride keeps about that many grid rows;
/// otherwise every step is recorded.
pub fn sim_config(run: &RunArgs, paths: usize, target_rows: Option<usize>) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::new(run.dt, run.horizon)
        .seed(run.seed)
        .paths(paths)
        .execution(Execution::from_threads(run.threads));
    cfg.validate()?;
    cfg.record_stride = match (run.stride, target_rows) {
        (Some(s), _) => s,
        (None, Some(rows)) => (cfg.n_steps() / rows.max(1)).max(1),
        (None, None) => 1,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Initial state (`default` in every component unless given) and zero-based regime.
pub fn start_state(run: &RunArgs, model: &RegimeModel, default: f64) -> Result<(Vec<f64>, usize), Failure> {
    let x0 = run.x0.clone().unwrap_or_else(|| vec![default; model.dim_x()]);
    if x0.len() != model.dim_x() {
        return Err(Failure::validation(format!(
            "invalid x0: expected {} components, got {}",
            model.dim_x(),
            x0.len()
        )));
    }
    Ok((x0, regime_index(run.regime, model, "regime")?))
}

pub fn regime_index(one_based: usize, model: &RegimeModel, field: &str) -> Result<usize, Failure> {
    let m = model.num_regimes();
    if one_based == 0 || one_based > m {
        return Err(Failure::validation(format!(
            "invalid {field}: {one_based} is outside 1..={m}"
        )));
    }
    Ok(one_based - 1)
}

pub fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::output(dir, e))
}

pub fn rerun(args: RerunArgs) -> Result<(), Failure> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut command = recorded.invocation.clone();
    let run = match &mut command {
        Command::Simulate(a) => &mut a.run,
        Command::Analyze(a) => &mut a.run,
        Command::Sensitivity(a) => &mut a.run,
        Command::Rerun(_) => return Err(Failure::validation("a manifest cannot record a rerun")),
    };
    if let Some(out) = args.out {
        run.out = out;
    }
    if args.threads.is_some() {
        run.threads = args.threads;
    }
    let dir = run.out.clone();
    let mut session = Session::replay(recorded.inputs.clone());
    crate::dispatch(command, &mut session)?;

    let mut mismatched = Vec::new();
    for old in &recorded.outputs {
        match session.outputs.iter().find(|o| o.path == old.path) {
            Some(new) if new.sha256 == old.sha256 => {}
            _ => mismatched.push(old.path.clone()),
        }
    }
    if !mismatched.is_empty() || session.outputs.len() != recorded.outputs.len() {
        return Err(Failure::runtime(format!(
            "rerun into {} does not reproduce the recorded outputs: {mismatched:?}",
            dir.display()
        )));
    }
    println!(
        "reproduced {} outputs byte-for-byte ({} excluded: wall-clock)",
        recorded.outputs.len(),
        MANIFEST_FILE
    );
    Ok(())
}
