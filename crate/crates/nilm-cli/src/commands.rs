//! Command implementations. Each writes its run manifest before any other
//! side effect and finalizes it on success; errors bubble to `main`,
//! which maps them to the documented exit codes.

use std::path::{Path, PathBuf};

use nilm_core::checkpoint::{load_checkpoint, save_checkpoint};
use nilm_core::data::parse_channel_file;
use nilm_core::metrics::{build_report, evaluate_windows};
use nilm_core::model::{init_model, Model};
use nilm_core::synth::{default_household, synth_generate};
use nilm_core::train::train_loop;
use nilm_core::{Error, Result};

use crate::config::{load_config, AppConfig};
use crate::dataset::{
    build_datasets, load_households, load_synth_spec, synth_spec_text, write_channel,
    HOUSEHOLD_MANIFEST,
};
use crate::manifest::RunManifest;
use crate::svg::loss_svg;
use crate::verify::run_verification;

/// Options shared by every command.
pub struct Global {
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Option<PathBuf>,
}

impl Global {
    fn validate(&self) -> Result<()> {
        if self.threads < 1 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Any failure while reading configuration is a configuration error
/// (exit 2), including parse errors inside the file.
fn as_config_error(e: Error) -> Error {
    match e {
        e @ Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn resolve_config(explicit: Option<&Path>, global: &Global) -> Result<AppConfig> {
    let path = explicit.or(global.config.as_deref()).ok_or_else(|| {
        Error::Config("no config file given (pass it as an argument or via --config)".into())
    })?;
    let mut cfg = load_config(path).map_err(as_config_error)?;
    if let Some(seed) = global.seed {
        cfg.model.seed = seed;
        cfg.train.seed = seed;
        cfg.data.synth_seed = seed;
    }
    Ok(cfg)
}

fn config_value(cfg: &AppConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

pub fn cmd_train(
    config_path: Option<&Path>,
    data_dir: &Path,
    out_dir: &Path,
    global: &Global,
) -> Result<()> {
    global.validate()?;
    let cfg = resolve_config(config_path, global)?;
    let mut manifest = RunManifest::begin(
        out_dir,
        "train",
        cfg.train.seed,
        global.threads,
        config_value(&cfg),
    )?;

    let households = load_households(data_dir, &cfg)?;
    let sets = build_datasets(&households, &cfg, None)?;
    println!(
        "windows: {} train, {} seen-test, {} unseen-test",
        sets.train.len(),
        sets.seen_test.len(),
        sets.unseen_test.len()
    );

    let mut model: Model<f32> = init_model(&cfg.model)?;
    model.norm = sets.stats.clone();
    let test = if sets.seen_test.is_empty() { None } else { Some(&sets.seen_test[..]) };
    let log = train_loop(&mut model, &sets.train, test, &cfg.train)?;

    let ckpt = out_dir.join("checkpoint.json");
    save_checkpoint(&model, &ckpt)?;
    std::fs::write(out_dir.join("loss.csv"), log.to_csv())?;
    std::fs::write(out_dir.join("loss.svg"), loss_svg(&log))?;
    for a in ["checkpoint.json", "checkpoint.bin", "loss.csv", "loss.svg"] {
        manifest.add_artifact(a);
    }
    manifest.finish()?;
    println!(
        "trained {} epochs; best validation loss {:.6} at epoch {}",
        log.rows.len(),
        log.best_val().unwrap_or(f64::NAN),
        log.best_epoch + 1
    );
    println!("checkpoint written to {}", ckpt.display());
    Ok(())
}

/// `seen` evaluates held-out ranges of training houses; `unseen` evaluates
/// whole households excluded from training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Seen,
    Unseen,
}

pub fn cmd_eval(
    checkpoint: &Path,
    data_dir: &Path,
    scenario: Scenario,
    out_dir: Option<&Path>,
    global: &Global,
) -> Result<()> {
    global.validate()?;
    let model: Model<f32> = load_checkpoint(checkpoint)?;
    let mut cfg = match global.config.as_deref() {
        Some(p) => load_config(p).map_err(as_config_error)?,
        None => AppConfig::default(),
    };
    // The checkpoint owns the architecture and appliance set.
    cfg.model = model.cfg.clone();
    if let Some(seed) = global.seed {
        cfg.data.synth_seed = seed;
    }
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut manifest = RunManifest::begin(
        &out_dir,
        "eval",
        cfg.data.synth_seed,
        global.threads,
        config_value(&cfg),
    )?;

    let households = load_households(data_dir, &cfg)?;
    let sets = build_datasets(&households, &cfg, Some(model.norm.clone()))?;
    let (name, windows) = match scenario {
        Scenario::Seen => ("seen", &sets.seen_test),
        Scenario::Unseen => ("unseen", &sets.unseen_test),
    };
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "no windows in the {name} scenario for this data directory"
        )));
    }
    let report = build_report(&evaluate_windows(&model, windows)?)?;
    print!("{}", report.to_text());
    let txt = out_dir.join(format!("report_{name}.txt"));
    let csv = out_dir.join(format!("report_{name}.csv"));
    std::fs::write(&txt, report.to_text())?;
    std::fs::write(&csv, report.to_csv())?;
    manifest.add_artifact(&format!("report_{name}.txt"));
    manifest.add_artifact(&format!("report_{name}.csv"));
    manifest.finish()?;
    Ok(())
}

pub fn cmd_disaggregate(
    checkpoint: &Path,
    mains_file: &Path,
    out_dir: &Path,
    global: &Global,
) -> Result<()> {
    global.validate()?;
    let model: Model<f32> = load_checkpoint(checkpoint)?;
    let mut manifest = RunManifest::begin(
        out_dir,
        "disaggregate",
        global.seed.unwrap_or(0),
        global.threads,
        serde_json::to_value(&model.cfg).unwrap_or(serde_json::Value::Null),
    )?;
    let mains = parse_channel_file(mains_file)?;
    let outputs = model.disaggregate(&mains)?;
    for series in &outputs {
        let file = format!("{}.dat", series.name);
        write_channel(&out_dir.join(&file), series)?;
        manifest.add_artifact(&file);
    }
    manifest.finish()?;
    println!(
        "wrote {} appliance channels to {}",
        outputs.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_synth(
    spec_path: Option<&Path>,
    out_dir: &Path,
    days: i64,
    seed: u64,
    global: &Global,
) -> Result<()> {
    global.validate()?;
    if days < 1 {
        return Err(Error::Config("--days must be >= 1".into()));
    }
    let spec = match spec_path {
        Some(p) => load_synth_spec(p).map_err(as_config_error)?,
        None => default_household(),
    };
    let mut manifest = RunManifest::begin(
        out_dir,
        "synth",
        seed,
        global.threads,
        serde_json::to_value(&spec).unwrap_or(serde_json::Value::Null),
    )?;
    let series = synth_generate(&spec, seed, days * 86_400).map_err(as_config_error)?;
    let mut lines = vec!["house = 1".to_string(), "mains = mains.dat".to_string()];
    for (i, s) in series.iter().enumerate() {
        let file = if i == 0 { "mains.dat".to_string() } else { format!("{}.dat", s.name) };
        write_channel(&out_dir.join(&file), s)?;
        manifest.add_artifact(&file);
        if i > 0 {
            lines.push(format!("appliance.{} = {file}", s.name));
        }
    }
    std::fs::write(out_dir.join(HOUSEHOLD_MANIFEST), lines.join("\n") + "\n")?;
    std::fs::write(out_dir.join("synth_used.spec"), synth_spec_text(&spec))?;
    manifest.add_artifact(HOUSEHOLD_MANIFEST);
    manifest.add_artifact("synth_used.spec");
    manifest.finish()?;
    println!(
        "generated {days} day(s) for {} appliances into {}",
        series.len() - 1,
        out_dir.display()
    );
    Ok(())
}

/// Returns `true` when every check passed.
pub fn cmd_verify() -> bool {
    let checks = run_verification();
    let mut all = true;
    println!("{:<34} {:<6} detail", "check", "status");
    for c in &checks {
        println!(
            "{:<34} {:<6} {}",
            c.name,
            if c.pass { "pass" } else { "FAIL" },
            c.detail
        );
        all &= c.pass;
    }
    println!("{}", if all { "all checks passed" } else { "VERIFICATION FAILED" });
    all
}

/// Documented mapping from error kind to process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Parse { .. } => 3,
        Error::Diverged { .. } => 4,
        _ => 1,
    }
}
