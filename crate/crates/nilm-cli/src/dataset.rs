//! File-system plumbing: synthetic spec files, household manifests,
//! channel writing, and assembly of train/seen-test/unseen-test window
//! sets from a data directory.

use std::path::{Path, PathBuf};

use nilm_core::data::{
    align_household, make_windows, normalize, parse_channel_file, split_seen_unseen, NormStats,
    PowerSeries, SplitSpec, Window,
};
use nilm_core::synth::{SynthAppliance, SynthSpec};
use nilm_core::{Error, Result};

use crate::config::{parse_sections, AppConfig, Entry};

/// File name that marks a directory as one household of channel files.
pub const HOUSEHOLD_MANIFEST: &str = "household.txt";
/// File name that marks a data directory as synthetic.
pub const SYNTH_SPEC: &str = "synth.spec";

/// Parse a synthetic household spec:
///
/// ```text
/// [household]
/// base_load = 60
/// noise_std = 10
///
/// [appliance.fridge]
/// on_power = 120
/// mean_on_s = 600
/// mean_off_s = 1200
/// duty_jitter = 0.3
/// ```
pub fn parse_synth_spec(text: &str, origin: &str) -> Result<SynthSpec> {
    let mut spec = SynthSpec {
        appliances: Vec::new(),
        base_load: 0.0,
        noise_std: 0.0,
        period_s: nilm_core::data::DEFAULT_PERIOD,
        start_ts: 0,
    };
    let num = |e: &Entry| -> Result<f64> {
        e.value.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: e.line,
            msg: format!("invalid value {:?} for key {}", e.value, e.key),
        })
    };
    for (section, entries) in parse_sections(text, origin)? {
        if section == "household" {
            for e in &entries {
                match e.key.as_str() {
                    "base_load" => spec.base_load = num(e)?,
                    "noise_std" => spec.noise_std = num(e)?,
                    "period" => spec.period_s = num(e)? as i64,
                    "start_ts" => spec.start_ts = num(e)? as i64,
                    other => {
                        return Err(Error::Parse {
                            path: origin.to_string(),
                            line: e.line,
                            msg: format!("unknown key {other:?} in [household]"),
                        })
                    }
                }
            }
        } else if let Some(name) = section.strip_prefix("appliance.") {
            let mut a = SynthAppliance {
                name: name.to_string(),
                on_power: 0.0,
                mean_on_s: 0.0,
                mean_off_s: 0.0,
                duty_jitter: 0.0,
            };
            for e in &entries {
                match e.key.as_str() {
                    "on_power" => a.on_power = num(e)?,
                    "mean_on_s" => a.mean_on_s = num(e)?,
                    "mean_off_s" => a.mean_off_s = num(e)?,
                    "duty_jitter" => a.duty_jitter = num(e)?,
                    other => {
                        return Err(Error::Parse {
                            path: origin.to_string(),
                            line: e.line,
                            msg: format!("unknown key {other:?} in [{section}]"),
                        })
                    }
                }
            }
            spec.appliances.push(a);
        } else {
            return Err(Error::Config(format!(
                "{origin}: unknown section [{section}] in synthetic spec"
            )));
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
    parse_synth_spec(&text, &path.display().to_string())
}

/// Render a spec back to the file format accepted by [`parse_synth_spec`].
pub fn synth_spec_text(spec: &SynthSpec) -> String {
    let mut out = format!(
        "[household]\nbase_load = {}\nnoise_std = {}\nperiod = {}\nstart_ts = {}\n",
        spec.base_load, spec.noise_std, spec.period_s, spec.start_ts
    );
    for a in &spec.appliances {
        out.push_str(&format!(
            "\n[appliance.{}]\non_power = {}\nmean_on_s = {}\nmean_off_s = {}\nduty_jitter = {}\n",
            a.name, a.on_power, a.mean_on_s, a.mean_off_s, a.duty_jitter
        ));
    }
    out
}

/// Write a series in channel format, one `<epoch> <watts>` line per sample.
pub fn write_channel(path: &Path, series: &PowerSeries) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 16);
    for &(ts, w) in &series.samples {
        out.push_str(&format!("{ts} {w}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One household's channel files, resolved relative to the manifest:
///
/// ```text
/// house = 1            # optional, defaults to the directory name
/// mains = mains.dat
/// appliance.fridge = fridge.dat
/// ```
#[derive(Debug)]
pub struct Household {
    pub house: String,
    pub mains: PowerSeries,
    pub appliances: Vec<PowerSeries>,
}

/// Flat `key = value` lines (no section headers).
fn parse_flat(text: &str, origin: &str) -> Result<Vec<Entry>> {
    let mut wrapped = String::from("[_]\n");
    wrapped.push_str(text);
    let mut sections = parse_sections(&wrapped, origin)?;
    let mut entries = sections.remove(0).1;
    // The synthetic [_] header adds one line; restore real line numbers.
    for e in &mut entries {
        e.line -= 1;
    }
    if !sections.is_empty() {
        return Err(Error::Config(format!(
            "{origin}: section headers are not allowed in a household manifest"
        )));
    }
    Ok(entries)
}

/// Load the household described by `dir/household.txt`, returning channels
/// ordered to match `appliance_names`.
pub fn load_household(dir: &Path, appliance_names: &[String]) -> Result<Household> {
    let manifest = dir.join(HOUSEHOLD_MANIFEST);
    let origin = manifest.display().to_string();
    let text = std::fs::read_to_string(&manifest)
        .map_err(|e| Error::Data(format!("cannot read {origin}: {e}")))?;
    let mut house = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "1".into());
    let mut mains_path: Option<PathBuf> = None;
    let mut channel_paths: Vec<(String, PathBuf)> = Vec::new();
    for e in parse_flat(&text, &origin)? {
        match e.key.as_str() {
            "house" => house = e.value.clone(),
            "mains" => mains_path = Some(dir.join(&e.value)),
            key => {
                if let Some(name) = key.strip_prefix("appliance.") {
                    channel_paths.push((name.to_string(), dir.join(&e.value)));
                } else {
                    return Err(Error::Parse {
                        path: origin.clone(),
                        line: e.line,
                        msg: format!("unknown key {key:?} in household manifest"),
                    });
                }
            }
        }
    }
    let mains_path =
        mains_path.ok_or_else(|| Error::Data(format!("{origin}: missing mains entry")))?;
    let mains = parse_channel_file(&mains_path)?;
    let mut appliances = Vec::with_capacity(appliance_names.len());
    for name in appliance_names {
        let (_, path) = channel_paths
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| {
                Error::Data(format!("{origin}: no channel listed for appliance {name}"))
            })?;
        let mut series = parse_channel_file(path)?;
        series.name = name.clone();
        appliances.push(series);
    }
    Ok(Household { house, mains, appliances })
}

/// Train/seen-test/unseen-test windows, already normalized, plus the
/// statistics that normalized them (taken from the training set only).
pub struct DataSets {
    pub train: Vec<Window>,
    pub seen_test: Vec<Window>,
    pub unseen_test: Vec<Window>,
    pub stats: NormStats,
}

fn house_seed(base: u64, house: &str) -> u64 {
    // FNV-1a over the house name, folded into the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in house.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base.wrapping_add(h)
}

/// Every household in the data directory. A directory is synthetic when it
/// holds `synth.spec`: each configured house is then generated with a seed
/// derived from the house name. Otherwise each subdirectory with a
/// `household.txt` (or the directory itself holding one) is a household.
pub fn load_households(data_dir: &Path, cfg: &AppConfig) -> Result<Vec<Household>> {
    if !data_dir.is_dir() {
        return Err(Error::Data(format!(
            "data directory {} does not exist",
            data_dir.display()
        )));
    }
    let names: Vec<String> = cfg.model.appliances.iter().map(|a| a.name.clone()).collect();
    let spec_path = data_dir.join(SYNTH_SPEC);
    if spec_path.is_file() {
        let spec = load_synth_spec(&spec_path)?;
        let mut houses: Vec<String> = cfg.data.train_houses.clone();
        for h in &cfg.data.unseen_houses {
            if !houses.contains(h) {
                houses.push(h.clone());
            }
        }
        let mut out = Vec::new();
        for house in houses {
            let series = nilm_core::synth::synth_generate(
                &spec,
                house_seed(cfg.data.synth_seed, &house),
                cfg.data.synth_days * 86_400,
            )?;
            let mut iter = series.into_iter();
            let mains = iter.next().unwrap();
            let by_name: Vec<PowerSeries> = iter.collect();
            let mut appliances = Vec::with_capacity(names.len());
            for name in &names {
                let s = by_name.iter().find(|s| &s.name == name).ok_or_else(|| {
                    Error::Config(format!(
                        "appliance {name} is configured but absent from the synthetic spec"
                    ))
                })?;
                appliances.push(s.clone());
            }
            out.push(Household { house, mains, appliances });
        }
        return Ok(out);
    }
    if data_dir.join(HOUSEHOLD_MANIFEST).is_file() {
        return Ok(vec![load_household(data_dir, &names)?]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(HOUSEHOLD_MANIFEST).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no household manifests and no synthetic spec",
            data_dir.display()
        )));
    }
    dirs.iter().map(|d| load_household(d, &names)).collect()
}

/// Window every household, split seen/unseen, and normalize all three
/// sets. Statistics come from the training windows unless `stats` is
/// given (evaluation must reuse the stats a checkpoint was trained with).
pub fn build_datasets(
    households: &[Household],
    cfg: &AppConfig,
    stats: Option<NormStats>,
) -> Result<DataSets> {
    let len = cfg.model.window_len;
    let stride = if cfg.data.stride == 0 { (len / 2).max(1) } else { cfg.data.stride };
    let mut windows: Vec<Window> = Vec::new();
    let mut seen_test_ranges = Vec::new();
    for hh in households {
        let aligned =
            align_household(&hh.house, &hh.mains, &hh.appliances, cfg.data.period);
        if aligned.is_empty() {
            return Err(Error::Data(format!(
                "house {}: mains and appliance channels share no time range",
                hh.house
            )));
        }
        if cfg.data.train_houses.contains(&hh.house) && cfg.data.seen_test_fraction > 0.0 {
            let (start, end) = (aligned.start, aligned.end());
            let span = (end - start) as f64;
            let lo = end - (span * cfg.data.seen_test_fraction) as i64;
            seen_test_ranges.push((hh.house.clone(), lo, end));
        }
        windows.extend(make_windows(&aligned, &cfg.model.appliances, len, stride));
    }
    let split = SplitSpec {
        train_houses: cfg.data.train_houses.clone(),
        seen_test_ranges,
        unseen_houses: cfg.data.unseen_houses.clone(),
    };
    let sets = split_seen_unseen(&split, windows)?;
    let stats = match stats {
        Some(s) => s,
        None => {
            if sets.train.is_empty() {
                return Err(Error::Data(
                    "no training windows: check train_houses and window_len against the data"
                        .into(),
                ));
            }
            NormStats::from_windows(&sets.train, &cfg.model.appliances)?
        }
    };
    let norm_all = |ws: &[Window]| -> Result<Vec<Window>> {
        ws.iter().map(|w| normalize(w, &stats)).collect()
    };
    Ok(DataSets {
        train: norm_all(&sets.train)?,
        seen_test: norm_all(&sets.seen_test)?,
        unseen_test: norm_all(&sets.unseen_test)?,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nilm_core::synth::default_household;

    #[test]
    fn synth_spec_round_trip() {
        let spec = default_household();
        let parsed = parse_synth_spec(&synth_spec_text(&spec), "mem").unwrap();
        assert_eq!(parsed.base_load, spec.base_load);
        assert_eq!(parsed.appliances.len(), spec.appliances.len());
        assert_eq!(parsed.appliances[1].name, "dish_washer");
        assert_eq!(parsed.appliances[1].mean_off_s, 40000.0);
    }

    #[test]
    fn synth_spec_rejects_bad_sections() {
        assert!(parse_synth_spec("[meter]\nfoo = 1\n", "mem").is_err());
        assert!(parse_synth_spec("[household]\nbase_load = x\n", "mem").is_err());
    }

    #[test]
    fn channel_write_parse_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch.dat");
        let series = PowerSeries::new("x", vec![(0, 1.5), (6, 0.0), (12, 250.25)], 6.0);
        write_channel(&path, &series).unwrap();
        let back = parse_channel_file(&path).unwrap();
        assert_eq!(back.samples, series.samples);
    }

    #[test]
    fn household_manifest_resolves_channels() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("house_7");
        std::fs::create_dir(&h).unwrap();
        std::fs::write(h.join("mains.dat"), "0 100\n6 100\n").unwrap();
        std::fs::write(h.join("fridge.dat"), "0 80\n6 0\n").unwrap();
        std::fs::write(
            h.join(HOUSEHOLD_MANIFEST),
            "house = 7\nmains = mains.dat\nappliance.fridge = fridge.dat\n",
        )
        .unwrap();
        let hh = load_household(&h, &["fridge".into()]).unwrap();
        assert_eq!(hh.house, "7");
        assert_eq!(hh.mains.len(), 2);
        assert_eq!(hh.appliances[0].name, "fridge");

        let err = load_household(&h, &["kettle".into()]).unwrap_err();
        assert!(err.to_string().contains("kettle"));
    }

    #[test]
    fn missing_data_dir_is_a_data_error() {
        let cfg = AppConfig::default();
        let err = load_households(Path::new("/nonexistent/xyz"), &cfg).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
