//! Plain-text `key = value` configuration with `[section]` headers.
//! `#` starts a comment; keys are unique per section except `appliance`,
//! which repeats once per appliance as `name:max_power:on_threshold`.

use std::path::Path;

use nilm_core::data::ApplianceSpec;
use nilm_core::model::ModelConfig;
use nilm_core::train::TrainConfig;
use nilm_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// One parsed `key = value` line.
#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Sections in file order, each with its entries in file order.
pub fn parse_sections(text: &str, origin: &str) -> Result<Vec<(String, Vec<Entry>)>> {
    let mut sections: Vec<(String, Vec<Entry>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line,
                msg: "unterminated section header".into(),
            })?;
            sections.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line,
            msg: format!("expected key = value, got {trimmed:?}"),
        })?;
        let section = sections.last_mut().ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line,
            msg: "key appears before any [section] header".into(),
        })?;
        section.1.push(Entry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(e: &Entry, origin: &str) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        path: origin.to_string(),
        line: e.line,
        msg: format!("invalid value {:?} for key {}", e.value, e.key),
    })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Data-handling settings that live outside the model and optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub period: i64,
    /// Window stride in samples; 0 means window_len / 2.
    pub stride: usize,
    pub train_houses: Vec<String>,
    pub unseen_houses: Vec<String>,
    /// Final fraction of each train house held out as the seen test range.
    pub seen_test_fraction: f64,
    /// Days generated when the data directory holds a synthetic spec.
    pub synth_days: i64,
    pub synth_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            period: nilm_core::data::DEFAULT_PERIOD,
            stride: 0,
            train_houses: vec!["1".into(), "3".into(), "4".into(), "5".into()],
            unseen_houses: vec!["2".into()],
            seen_test_fraction: 0.2,
            synth_days: 7,
            synth_seed: 1,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period < 1 {
            return Err(Error::Config("data.period must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.seen_test_fraction) {
            return Err(Error::Config(
                "data.seen_test_fraction must lie in [0,1)".into(),
            ));
        }
        if self.synth_days < 1 {
            return Err(Error::Config("data.synth_days must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything a run needs: model architecture, optimizer, data handling.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

pub fn load_config(path: &Path) -> Result<AppConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, origin: &str) -> Result<AppConfig> {
    let mut cfg = AppConfig::default();
    let mut appliances: Vec<ApplianceSpec> = Vec::new();
    for (section, entries) in parse_sections(text, origin)? {
        match section.as_str() {
            "model" => {
                for e in &entries {
                    match e.key.as_str() {
                        "window_len" => cfg.model.window_len = parse_num(e, origin)?,
                        "d_model" => cfg.model.d_model = parse_num(e, origin)?,
                        "n_heads" => cfg.model.n_heads = parse_num(e, origin)?,
                        "n_layers" => cfg.model.n_layers = parse_num(e, origin)?,
                        "d_ff" => cfg.model.d_ff = parse_num(e, origin)?,
                        "kernel_size" => cfg.model.kernel_size = parse_num(e, origin)?,
                        "dropout" => cfg.model.dropout = parse_num(e, origin)?,
                        "seed" => cfg.model.seed = parse_num(e, origin)?,
                        "scales" => {
                            cfg.model.scales = parse_list(&e.value)
                                .iter()
                                .map(|s| {
                                    s.parse::<usize>().map_err(|_| Error::Parse {
                                        path: origin.to_string(),
                                        line: e.line,
                                        msg: format!("invalid scale {s:?}"),
                                    })
                                })
                                .collect::<Result<_>>()?
                        }
                        "appliance" => appliances.push(parse_appliance(e, origin)?),
                        other => return Err(unknown_key(origin, e.line, "model", other)),
                    }
                }
            }
            "train" => {
                for e in &entries {
                    match e.key.as_str() {
                        "learning_rate" => cfg.train.learning_rate = parse_num(e, origin)?,
                        "batch_size" => cfg.train.batch_size = parse_num(e, origin)?,
                        "epochs" => cfg.train.epochs = parse_num(e, origin)?,
                        "state_loss_weight" => cfg.train.state_loss_weight = parse_num(e, origin)?,
                        "beta1" => cfg.train.beta1 = parse_num(e, origin)?,
                        "beta2" => cfg.train.beta2 = parse_num(e, origin)?,
                        "eps" => cfg.train.eps = parse_num(e, origin)?,
                        "validation_fraction" => {
                            cfg.train.validation_fraction = parse_num(e, origin)?
                        }
                        "seed" => cfg.train.seed = parse_num(e, origin)?,
                        "grad_clip" => cfg.train.grad_clip = parse_num(e, origin)?,
                        "early_stop_patience" => {
                            cfg.train.early_stop_patience = Some(parse_num(e, origin)?)
                        }
                        other => return Err(unknown_key(origin, e.line, "train", other)),
                    }
                }
            }
            "data" => {
                for e in &entries {
                    match e.key.as_str() {
                        "period" => cfg.data.period = parse_num(e, origin)?,
                        "stride" => cfg.data.stride = parse_num(e, origin)?,
                        "train_houses" => cfg.data.train_houses = parse_list(&e.value),
                        "unseen_houses" => cfg.data.unseen_houses = parse_list(&e.value),
                        "seen_test_fraction" => {
                            cfg.data.seen_test_fraction = parse_num(e, origin)?
                        }
                        "synth_days" => cfg.data.synth_days = parse_num(e, origin)?,
                        "synth_seed" => cfg.data.synth_seed = parse_num(e, origin)?,
                        other => return Err(unknown_key(origin, e.line, "data", other)),
                    }
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "{origin}: unknown section [{other}] (expected model, train, or data)"
                )))
            }
        }
    }
    if !appliances.is_empty() {
        cfg.model.appliances = appliances;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.data.validate()?;
    Ok(cfg)
}

fn parse_appliance(e: &Entry, origin: &str) -> Result<ApplianceSpec> {
    let parts: Vec<&str> = e.value.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: e.line,
            msg: format!(
                "appliance must be name:max_power:on_threshold, got {:?}",
                e.value
            ),
        });
    }
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: e.line,
            msg: format!("invalid number {s:?} in appliance entry"),
        })
    };
    Ok(ApplianceSpec {
        name: parts[0].to_string(),
        max_power: num(parts[1])?,
        on_threshold: num(parts[2])?,
    })
}

fn unknown_key(origin: &str, line: usize, section: &str, key: &str) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        msg: format!("unknown key {key:?} in [{section}]"),
    }
}
