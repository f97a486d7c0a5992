//! Ingestion of UK-DALE-style channel files: parsing, 1 Hz → 6 s
//! resampling, mains/appliance alignment, windowing, normalization, and
//! seen/unseen splits.
//!
//! Channel files are plain text, one `"<epoch_seconds> <watts>"` reading
//! per line. The working period is the appliance rate (6 s); mains is
//! downsampled by per-bin mean. Gaps of up to [`MAX_FILL_BINS`] consecutive
//! invalid bins are forward-filled; longer gaps stay invalid, and windows
//! with more than 10% invalid entries are dropped.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working sample period in seconds (the appliance reading rate).
pub const DEFAULT_PERIOD: i64 = 6;
/// Longest run of invalid bins that forward-fill may repair.
pub const MAX_FILL_BINS: usize = 3;
/// Windows with a larger invalid fraction than this are dropped.
pub const MAX_INVALID_FRACTION: f64 = 0.10;

/// One appliance channel's metadata: display name, plausible ceiling used
/// for normalization, and the watt level above which it counts as "on".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub name: String,
    pub max_power: f64,
    pub on_threshold: f64,
}

/// Timestamped power readings for one channel.
#[derive(Debug, Clone)]
pub struct PowerSeries {
    pub name: String,
    /// (UNIX seconds, watts); strictly increasing timestamps.
    pub samples: Vec<(i64, f64)>,
    /// Nominal seconds between readings.
    pub period: f64,
    /// Number of out-of-order lines that had to be sorted during parsing.
    pub sort_warnings: usize,
}

impl PowerSeries {
    pub fn new(name: impl Into<String>, samples: Vec<(i64, f64)>, period: f64) -> Self {
        PowerSeries { name: name.into(), samples, period, sort_warnings: 0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parse a channel file. Duplicate timestamps collapse to the last value;
/// out-of-order lines are sorted and counted in `sort_warnings`.
pub fn parse_channel_file(path: &Path) -> Result<PowerSeries> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_channel_text(&text, &name, &path.display().to_string())
}

pub fn parse_channel_text(text: &str, name: &str, origin: &str) -> Result<PowerSeries> {
    let mut samples: Vec<(i64, f64)> = Vec::new();
    let mut warnings = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (ts, watts) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg: format!("expected \"<epoch> <watts>\", got {line:?}"),
                })
            }
        };
        let ts: i64 = ts.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg: format!("bad timestamp {ts:?}"),
        })?;
        let watts: f64 = watts.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg: format!("bad power value {watts:?}"),
        })?;
        if !watts.is_finite() || watts < 0.0 {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: format!("power must be finite and non-negative, got {watts}"),
            });
        }
        if let Some(&(last_ts, _)) = samples.last() {
            if ts < last_ts {
                warnings += 1;
            }
        }
        samples.push((ts, watts));
    }
    samples.sort_by_key(|&(ts, _)| ts);
    samples.dedup_by(|cur, prev| {
        if cur.0 == prev.0 {
            prev.1 = cur.1; // last value wins
            true
        } else {
            false
        }
    });
    Ok(PowerSeries {
        name: name.to_string(),
        samples,
        period: DEFAULT_PERIOD as f64,
        sort_warnings: warnings,
    })
}

/// Mains and appliance channels resampled onto a shared grid.
#[derive(Debug, Clone)]
pub struct Aligned {
    pub house: String,
    /// First grid timestamp (multiple of `period`-aligned anchor).
    pub start: i64,
    pub period: i64,
    pub mains: Vec<f64>,
    /// One (name, trace) per appliance, each the grid length.
    pub appliances: Vec<(String, Vec<f64>)>,
    /// Bin validity after gap filling.
    pub mask: Vec<bool>,
}

impl Aligned {
    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn end(&self) -> i64 {
        self.start + self.len() as i64 * self.period
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Align a 1 Hz mains series with a single 6 s appliance series. The grid
/// is anchored at the first common timestamp rounded down to a multiple of
/// `period`; disjoint time ranges produce an empty result.
pub fn resample_align(mains: &PowerSeries, appliance: &PowerSeries, period: i64) -> Aligned {
    align_household("", mains, std::slice::from_ref(appliance), period)
}

/// Multi-appliance alignment onto one shared grid.
pub fn align_household(
    house: &str,
    mains: &PowerSeries,
    appliances: &[PowerSeries],
    period: i64,
) -> Aligned {
    let empty = |start| Aligned {
        house: house.to_string(),
        start,
        period,
        mains: Vec::new(),
        appliances: appliances.iter().map(|a| (a.name.clone(), Vec::new())).collect(),
        mask: Vec::new(),
    };
    if mains.is_empty() || appliances.iter().any(|a| a.is_empty()) {
        return empty(0);
    }
    let first_common = appliances
        .iter()
        .map(|a| a.samples[0].0)
        .chain([mains.samples[0].0])
        .max()
        .unwrap();
    let last_common = appliances
        .iter()
        .map(|a| a.samples.last().unwrap().0)
        .chain([mains.samples.last().unwrap().0])
        .min()
        .unwrap();
    let start = floor_div(first_common, period) * period;
    if last_common < start {
        return empty(start);
    }
    let n = (floor_div(last_common - start, period) + 1) as usize;

    // Mains: per-bin arithmetic mean of the 1 Hz samples.
    let mut mains_vals = vec![0.0f64; n];
    let mut mains_counts = vec![0usize; n];
    for &(ts, w) in &mains.samples {
        let bin = floor_div(ts - start, period);
        if bin < 0 || bin as usize >= n {
            continue;
        }
        mains_vals[bin as usize] += w;
        mains_counts[bin as usize] += 1;
    }
    for (v, &c) in mains_vals.iter_mut().zip(&mains_counts) {
        if c > 0 {
            *v /= c as f64;
        }
    }

    // Appliances: snap each sample to the nearest grid point within period/2.
    let half = period as f64 / 2.0;
    let mut app_traces = Vec::with_capacity(appliances.len());
    let mut app_has = Vec::with_capacity(appliances.len());
    for appl in appliances {
        let mut vals = vec![0.0f64; n];
        let mut has = vec![false; n];
        for &(ts, w) in &appl.samples {
            let idx = ((ts - start) as f64 / period as f64).round() as i64;
            if idx < 0 || idx as usize >= n {
                continue;
            }
            let grid_ts = start + idx * period;
            if (ts - grid_ts).abs() as f64 <= half {
                vals[idx as usize] = w;
                has[idx as usize] = true;
            }
        }
        app_traces.push((appl.name.clone(), vals));
        app_has.push(has);
    }

    let mut mask: Vec<bool> = (0..n)
        .map(|i| mains_counts[i] > 0 && app_has.iter().all(|h| h[i]))
        .collect();

    // Forward-fill short gaps from the previous valid bin.
    let mut i = 0usize;
    let mut last_valid: Option<usize> = None;
    while i < n {
        if mask[i] {
            last_valid = Some(i);
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < n && !mask[i] {
            i += 1;
        }
        let gap_len = i - gap_start;
        if gap_len <= MAX_FILL_BINS {
            if let Some(src) = last_valid {
                for j in gap_start..i {
                    mains_vals[j] = mains_vals[src];
                    for (_, trace) in app_traces.iter_mut() {
                        trace[j] = trace[src];
                    }
                    mask[j] = true;
                }
            }
        }
    }

    Aligned {
        house: house.to_string(),
        start,
        period,
        mains: mains_vals,
        appliances: app_traces,
        mask,
    }
}

/// A fixed-length training example: mains input, per-appliance power
/// targets and on/off labels, and a per-timestep validity mask.
#[derive(Debug, Clone)]
pub struct Window {
    pub house: String,
    pub start_ts: i64,
    pub period: i64,
    pub mains: Vec<f64>,
    /// A × L appliance power; raw watts until [`normalize`] runs.
    pub targets: Vec<Vec<f64>>,
    /// A × L on/off labels, from raw watts vs each appliance's threshold.
    pub states: Vec<Vec<u8>>,
    pub mask: Vec<bool>,
    pub normalized: bool,
}

impl Window {
    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn end_ts(&self) -> i64 {
        self.start_ts + self.len() as i64 * self.period
    }
}

/// Slice an aligned household into windows at offsets `0, stride, 2·stride…`.
/// Windows with more than 10% invalid mask entries are dropped.
pub fn make_windows(
    aligned: &Aligned,
    appliances: &[ApplianceSpec],
    window_len: usize,
    stride: usize,
) -> Vec<Window> {
    assert!(window_len >= 1 && stride >= 1, "window_len and stride must be >= 1");
    assert_eq!(
        aligned.appliances.len(),
        appliances.len(),
        "aligned channels ({}) do not match appliance specs ({})",
        aligned.appliances.len(),
        appliances.len()
    );
    let n = aligned.len();
    if n < window_len {
        return Vec::new();
    }
    let mut windows = Vec::new();
    let count = (n - window_len) / stride + 1;
    for w in 0..count {
        let off = w * stride;
        let mask = &aligned.mask[off..off + window_len];
        let invalid = mask.iter().filter(|&&m| !m).count();
        if invalid as f64 > MAX_INVALID_FRACTION * window_len as f64 {
            continue;
        }
        let targets: Vec<Vec<f64>> = aligned
            .appliances
            .iter()
            .map(|(_, trace)| trace[off..off + window_len].to_vec())
            .collect();
        let states: Vec<Vec<u8>> = targets
            .iter()
            .zip(appliances)
            .map(|(trace, spec)| {
                trace
                    .iter()
                    .map(|&w| u8::from(w >= spec.on_threshold))
                    .collect()
            })
            .collect();
        windows.push(Window {
            house: aligned.house.clone(),
            start_ts: aligned.start + off as i64 * aligned.period,
            period: aligned.period,
            mains: aligned.mains[off..off + window_len].to_vec(),
            targets,
            states,
            mask: mask.to_vec(),
            normalized: false,
        });
    }
    windows
}

/// Normalization constants, computed on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mains_mean: f64,
    pub mains_std: f64,
    /// Per-appliance normalization ceiling in watts.
    pub max_power: Vec<f64>,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { mains_mean: 0.0, mains_std: 1.0, max_power: Vec::new() }
    }
}

impl NormStats {
    /// Mains mean/std over the valid timesteps of the given (training)
    /// windows; max_power taken from the appliance specs.
    pub fn from_windows(windows: &[Window], appliances: &[ApplianceSpec]) -> Result<Self> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for w in windows {
            assert!(!w.normalized, "stats must come from raw windows");
            for (v, &valid) in w.mains.iter().zip(&w.mask) {
                if valid {
                    sum += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::Data("no valid mains samples to compute stats".into()));
        }
        let mean = sum / count as f64;
        let mut var = 0.0;
        for w in windows {
            for (v, &valid) in w.mains.iter().zip(&w.mask) {
                if valid {
                    var += (v - mean) * (v - mean);
                }
            }
        }
        let std = (var / count as f64).sqrt();
        if std <= 0.0 {
            return Err(Error::Config(
                "mains standard deviation is zero; cannot normalize constant data".into(),
            ));
        }
        Ok(NormStats {
            mains_mean: mean,
            mains_std: std,
            max_power: appliances.iter().map(|a| a.max_power).collect(),
        })
    }
}

/// Standardize mains and scale appliance targets to `[0,1]` fractions of
/// max_power. State labels were fixed from raw watts in [`make_windows`]
/// and are left untouched.
pub fn normalize(window: &Window, stats: &NormStats) -> Result<Window> {
    if stats.mains_std <= 0.0 {
        return Err(Error::Config("normalize: mains std must be positive".into()));
    }
    assert!(!window.normalized, "window already normalized");
    let mut out = window.clone();
    for v in &mut out.mains {
        *v = (*v - stats.mains_mean) / stats.mains_std;
    }
    for (trace, &maxp) in out.targets.iter_mut().zip(&stats.max_power) {
        for v in trace.iter_mut() {
            *v = (*v / maxp).clamp(0.0, 1.0);
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Map normalized power back to watts for one appliance.
pub fn denormalize_power(value: f64, max_power: f64) -> f64 {
    value * max_power
}

/// Which houses train, which time ranges inside them are held out as the
/// seen test, and which whole houses are unseen.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_houses: Vec<String>,
    /// (house, start, end) half-open UNIX-second ranges within train houses.
    pub seen_test_ranges: Vec<(String, i64, i64)>,
    pub unseen_houses: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for h in &self.unseen_houses {
            if self.train_houses.contains(h) {
                return Err(Error::Config(format!(
                    "house {h} appears in both train and unseen sets"
                )));
            }
        }
        for (h, lo, hi) in &self.seen_test_ranges {
            if lo >= hi {
                return Err(Error::Config(format!(
                    "empty seen-test range [{lo},{hi}) for house {h}"
                )));
            }
            if !self.train_houses.contains(h) {
                return Err(Error::Config(format!(
                    "seen-test range names non-train house {h}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct SplitSets {
    pub train: Vec<Window>,
    pub seen_test: Vec<Window>,
    pub unseen_test: Vec<Window>,
}

/// Partition windows per the split spec. A window of a train house goes to
/// seen_test when it lies fully inside a held-out range; windows straddling
/// a range boundary are discarded so the sets share no (house, timestamp).
pub fn split_seen_unseen(spec: &SplitSpec, windows: Vec<Window>) -> Result<SplitSets> {
    spec.validate()?;
    let mut sets = SplitSets::default();
    for w in windows {
        if spec.unseen_houses.contains(&w.house) {
            sets.unseen_test.push(w);
            continue;
        }
        if !spec.train_houses.contains(&w.house) {
            continue; // house not in the experiment
        }
        let (ws, we) = (w.start_ts, w.end_ts());
        let mut inside = false;
        let mut straddles = false;
        for (h, lo, hi) in &spec.seen_test_ranges {
            if h != &w.house {
                continue;
            }
            if ws >= *lo && we <= *hi {
                inside = true;
            } else if ws < *hi && we > *lo {
                straddles = true;
            }
        }
        if inside {
            sets.seen_test.push(w);
        } else if !straddles {
            sets.train.push(w);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<ApplianceSpec> {
        vec![ApplianceSpec { name: "fridge".into(), max_power: 300.0, on_threshold: 50.0 }]
    }

    #[test]
    fn parse_single_line() {
        let s = parse_channel_text("1234567890 85.2\n", "ch", "test").unwrap();
        assert_eq!(s.samples, vec![(1234567890, 85.2)]);
    }

    #[test]
    fn parse_empty_file() {
        let s = parse_channel_text("", "ch", "test").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn parse_malformed_line_reports_line_number() {
        let err = parse_channel_text("abc 5\n", "ch", "test").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_duplicate_timestamps_keep_last() {
        let s = parse_channel_text("10 1.0\n10 2.0\n16 3.0\n", "ch", "test").unwrap();
        assert_eq!(s.samples, vec![(10, 2.0), (16, 3.0)]);
    }

    #[test]
    fn parse_out_of_order_sorts_with_warning() {
        let s = parse_channel_text("16 3.0\n10 1.0\n", "ch", "test").unwrap();
        assert_eq!(s.samples, vec![(10, 1.0), (16, 3.0)]);
        assert_eq!(s.sort_warnings, 1);
    }

    fn mains_1hz(start: i64, vals: &[f64]) -> PowerSeries {
        PowerSeries::new(
            "mains",
            vals.iter().enumerate().map(|(i, &v)| (start + i as i64, v)).collect(),
            1.0,
        )
    }

    #[test]
    fn resample_bins_mains_by_mean() {
        let mains = mains_1hz(0, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let appl = PowerSeries::new("a", vec![(0, 10.0)], 6.0);
        let out = resample_align(&mains, &appl, 6);
        assert_eq!(out.mains[0], 3.5);
    }

    #[test]
    fn resample_appliance_on_grid_unchanged() {
        let mains = mains_1hz(0, &[1.0; 12]);
        let appl = PowerSeries::new("a", vec![(0, 10.0), (6, 20.0)], 6.0);
        let out = resample_align(&mains, &appl, 6);
        assert_eq!(out.appliances[0].1, vec![10.0, 20.0]);
        assert!(out.mask.iter().all(|&m| m));
    }

    #[test]
    fn resample_long_gap_stays_invalid() {
        // Appliance readings at bins 0 and 5; bins 1..=4 (4 bins) have no
        // appliance sample -> beyond the fill threshold, stay invalid.
        let mains = mains_1hz(0, &(0..36).map(|_| 1.0).collect::<Vec<_>>());
        let appl = PowerSeries::new("a", vec![(0, 10.0), (30, 20.0)], 6.0);
        let out = resample_align(&mains, &appl, 6);
        assert_eq!(out.mask, vec![true, false, false, false, false, true]);
    }

    #[test]
    fn resample_short_gap_fills_forward() {
        let mains = mains_1hz(0, &(0..30).map(|i| i as f64).collect::<Vec<_>>());
        let appl = PowerSeries::new("a", vec![(0, 10.0), (24, 20.0)], 6.0);
        let out = resample_align(&mains, &appl, 6);
        assert!(out.mask.iter().all(|&m| m));
        assert_eq!(out.appliances[0].1, vec![10.0, 10.0, 10.0, 10.0, 20.0]);
    }

    #[test]
    fn resample_disjoint_ranges_empty() {
        let mains = mains_1hz(0, &[1.0; 6]);
        let appl = PowerSeries::new("a", vec![(1000, 5.0)], 6.0);
        assert!(resample_align(&mains, &appl, 6).is_empty());
    }

    #[test]
    fn alignment_is_idempotent_for_6s_series() {
        let vals: Vec<(i64, f64)> = (0..20).map(|i| (i * 6, (i * 7 % 13) as f64)).collect();
        let series = PowerSeries::new("x", vals.clone(), 6.0);
        let out = resample_align(&series, &series, 6);
        assert_eq!(out.mains, vals.iter().map(|&(_, v)| v).collect::<Vec<_>>());
        assert_eq!(out.appliances[0].1, out.mains);
        assert!(out.mask.iter().all(|&m| m));
    }

    fn aligned_fixture(n: usize) -> Aligned {
        Aligned {
            house: "h1".into(),
            start: 0,
            period: 6,
            mains: (0..n).map(|i| 100.0 + i as f64).collect(),
            appliances: vec![("fridge".into(), (0..n).map(|i| if i % 2 == 0 { 120.0 } else { 0.0 }).collect())],
            mask: vec![true; n],
        }
    }

    #[test]
    fn window_count_formula() {
        let w = make_windows(&aligned_fixture(10), &specs(), 4, 2);
        assert_eq!(w.len(), 4);
        assert_eq!(
            w.iter().map(|w| w.start_ts).collect::<Vec<_>>(),
            vec![0, 12, 24, 36]
        );
    }

    #[test]
    fn too_short_series_gives_no_windows() {
        assert!(make_windows(&aligned_fixture(3), &specs(), 4, 1).is_empty());
    }

    #[test]
    fn stride_equal_window_tiles() {
        let w = make_windows(&aligned_fixture(12), &specs(), 4, 4);
        assert_eq!(w.len(), 3);
        assert_eq!(w[1].start_ts, 24);
    }

    #[test]
    fn invalid_heavy_windows_dropped() {
        let mut a = aligned_fixture(8);
        a.mask[0] = false; // 1/4 invalid in the first window of length 4
        let w = make_windows(&a, &specs(), 4, 4);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start_ts, 24);
    }

    #[test]
    fn states_follow_threshold() {
        let w = make_windows(&aligned_fixture(4), &specs(), 4, 4);
        assert_eq!(w[0].states[0], vec![1, 0, 1, 0]);
    }

    #[test]
    fn normalize_mains_and_targets() {
        let w = make_windows(&aligned_fixture(4), &specs(), 4, 4);
        let stats = NormStats { mains_mean: 101.5, mains_std: 2.0, max_power: vec![300.0] };
        let n = normalize(&w[0], &stats).unwrap();
        assert!((n.mains[0] - (100.0 - 101.5) / 2.0).abs() < 1e-12);
        assert!((n.targets[0][0] - 0.4).abs() < 1e-12); // 120/300
        assert_eq!(n.states, w[0].states);
        // round trip
        let back = denormalize_power(n.targets[0][0], 300.0);
        assert!((back - 120.0).abs() < 1e-6);
    }

    #[test]
    fn mains_at_mean_maps_to_zero() {
        let stats = NormStats { mains_mean: 100.0, mains_std: 5.0, max_power: vec![300.0] };
        let mut w = make_windows(&aligned_fixture(4), &specs(), 4, 4).remove(0);
        w.mains = vec![100.0; 4];
        let n = normalize(&w, &stats).unwrap();
        assert!(n.mains.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn appliance_at_max_power_maps_to_one() {
        let stats = NormStats { mains_mean: 0.0, mains_std: 1.0, max_power: vec![120.0] };
        let w = make_windows(&aligned_fixture(4), &specs(), 4, 4);
        let n = normalize(&w[0], &stats).unwrap();
        assert_eq!(n.targets[0][0], 1.0);
    }

    #[test]
    fn split_excludes_unseen_from_train() {
        let mut a1 = aligned_fixture(20);
        a1.house = "h1".into();
        let mut a2 = aligned_fixture(20);
        a2.house = "h2".into();
        let mut windows = make_windows(&a1, &specs(), 4, 4);
        windows.extend(make_windows(&a2, &specs(), 4, 4));
        let spec = SplitSpec {
            train_houses: vec!["h1".into()],
            seen_test_ranges: vec![],
            unseen_houses: vec!["h2".into()],
        };
        let sets = split_seen_unseen(&spec, windows).unwrap();
        assert!(sets.train.iter().all(|w| w.house == "h1"));
        assert!(sets.unseen_test.iter().all(|w| w.house == "h2"));
        assert!(sets.seen_test.is_empty());
    }

    #[test]
    fn split_seen_range_carves_tail() {
        let a = aligned_fixture(20); // grid [0, 120), windows of 24 s
        let windows = make_windows(&a, &specs(), 4, 4); // starts 0,24,...,96
        let spec = SplitSpec {
            train_houses: vec!["h1".into()],
            seen_test_ranges: vec![("h1".into(), 96, 120)],
            unseen_houses: vec![],
        };
        let sets = split_seen_unseen(&spec, windows).unwrap();
        assert_eq!(sets.seen_test.len(), 1);
        assert_eq!(sets.seen_test[0].start_ts, 96);
        assert_eq!(sets.train.len(), 4);
        // disjoint by (house, start)
        for t in &sets.train {
            assert!(sets.seen_test.iter().all(|s| s.start_ts != t.start_ts));
        }
    }

    #[test]
    fn split_overlapping_spec_rejected() {
        let spec = SplitSpec {
            train_houses: vec!["h1".into()],
            seen_test_ranges: vec![],
            unseen_houses: vec!["h1".into()],
        };
        assert!(split_seen_unseen(&spec, Vec::new()).is_err());
    }
}
