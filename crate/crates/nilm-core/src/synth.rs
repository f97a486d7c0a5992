//! Synthetic household generator for desk-scale experiments.
//!
//! Appliances are alternating-renewal rectangular waves: constant
//! `on_power` while on, zero while off, with durations jittered around
//! their means. Mains is the base load plus the appliance sum plus
//! Gaussian noise truncated at zero. Output is deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PowerSeries, DEFAULT_PERIOD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthAppliance {
    pub name: String,
    /// Watts drawn while on (consumption held constant during operation).
    pub on_power: f64,
    pub mean_on_s: f64,
    pub mean_off_s: f64,
    /// 0 = strictly periodic; 1 = fully exponential durations.
    pub duty_jitter: f64,
}

impl SynthAppliance {
    /// Long-run expected power: on_power · on/(on+off).
    pub fn expected_mean_power(&self) -> f64 {
        self.on_power * self.mean_on_s / (self.mean_on_s + self.mean_off_s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub appliances: Vec<SynthAppliance>,
    pub base_load: f64,
    pub noise_std: f64,
    #[serde(default = "default_period")]
    pub period_s: i64,
    #[serde(default)]
    pub start_ts: i64,
}

fn default_period() -> i64 {
    DEFAULT_PERIOD
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.appliances.is_empty() {
            return Err(Error::Config("synthetic spec lists no appliances".into()));
        }
        for a in &self.appliances {
            if a.mean_on_s <= 0.0 || a.mean_off_s <= 0.0 {
                return Err(Error::Config(format!(
                    "appliance {}: durations must be positive (on {}, off {})",
                    a.name, a.mean_on_s, a.mean_off_s
                )));
            }
            if a.on_power <= 0.0 {
                return Err(Error::Config(format!(
                    "appliance {}: on_power must be positive",
                    a.name
                )));
            }
            if !(0.0..=1.0).contains(&a.duty_jitter) {
                return Err(Error::Config(format!(
                    "appliance {}: duty_jitter must lie in [0,1]",
                    a.name
                )));
            }
        }
        if self.base_load < 0.0 || self.noise_std < 0.0 {
            return Err(Error::Config("base_load and noise_std must be non-negative".into()));
        }
        if self.period_s < 1 {
            return Err(Error::Config("period_s must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mixed-exponential duration draw preserving the configured mean.
fn draw_duration(rng: &mut ChaCha8Rng, mean: f64, jitter: f64) -> f64 {
    if jitter <= 0.0 {
        return mean;
    }
    let u: f64 = rng.random();
    let exp = -mean * (1.0 - u).ln();
    (1.0 - jitter) * mean + jitter * exp
}

/// Generate `duration_s` seconds of household data. Returns the mains
/// series first, then one series per appliance in spec order.
pub fn synth_generate(spec: &SynthSpec, seed: u64, duration_s: i64) -> Result<Vec<PowerSeries>> {
    spec.validate()?;
    if duration_s < spec.period_s {
        return Err(Error::Config(format!(
            "duration {duration_s}s shorter than one period ({}s)",
            spec.period_s
        )));
    }
    let n = (duration_s / spec.period_s) as usize;
    let period = spec.period_s;

    // Independent sub-streams so adding an appliance never reshuffles the rest.
    let mut traces: Vec<Vec<f64>> = Vec::with_capacity(spec.appliances.len());
    for (i, appl) in spec.appliances.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)));
        let mut trace = vec![0.0f64; n];
        let mut t = 0.0f64;
        let mut on = false;
        let mut switch_at = draw_duration(&mut rng, appl.mean_off_s, appl.duty_jitter);
        for (k, slot) in trace.iter_mut().enumerate() {
            t = (k as i64 * period) as f64;
            while t >= switch_at {
                on = !on;
                let mean = if on { appl.mean_on_s } else { appl.mean_off_s };
                switch_at += draw_duration(&mut rng, mean, appl.duty_jitter);
            }
            if on {
                *slot = appl.on_power;
            }
        }
        let _ = t;
        traces.push(trace);
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D00D_CAFE);
    let normal = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("bad noise distribution: {e}")))?;
    let mut mains = vec![0.0f64; n];
    for (k, slot) in mains.iter_mut().enumerate() {
        let appl_sum: f64 = traces.iter().map(|t| t[k]).sum();
        let noise = if spec.noise_std > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
        *slot = (spec.base_load + appl_sum + noise).max(0.0);
    }

    let ts = |k: usize| spec.start_ts + k as i64 * period;
    let mut out = Vec::with_capacity(1 + traces.len());
    out.push(PowerSeries::new(
        "mains",
        mains.iter().enumerate().map(|(k, &v)| (ts(k), v)).collect(),
        period as f64,
    ));
    for (appl, trace) in spec.appliances.iter().zip(traces) {
        out.push(PowerSeries::new(
            appl.name.clone(),
            trace.iter().enumerate().map(|(k, &v)| (ts(k), v)).collect(),
            period as f64,
        ));
    }
    Ok(out)
}

/// Fridge / dish washer / washing machine household used by the
/// desk-scale experiments and the default `synth` command spec.
pub fn default_household() -> SynthSpec {
    SynthSpec {
        appliances: vec![
            SynthAppliance {
                name: "fridge".into(),
                on_power: 120.0,
                mean_on_s: 600.0,
                mean_off_s: 1200.0,
                duty_jitter: 0.3,
            },
            SynthAppliance {
                name: "dish_washer".into(),
                on_power: 2000.0,
                mean_on_s: 4800.0,
                mean_off_s: 40000.0,
                duty_jitter: 0.4,
            },
            SynthAppliance {
                name: "washing_machine".into(),
                on_power: 1800.0,
                mean_on_s: 3600.0,
                mean_off_s: 50000.0,
                duty_jitter: 0.4,
            },
        ],
        base_load: 60.0,
        noise_std: 10.0,
        period_s: DEFAULT_PERIOD,
        start_ts: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(noise: f64) -> SynthSpec {
        SynthSpec {
            appliances: vec![SynthAppliance {
                name: "fridge".into(),
                on_power: 120.0,
                mean_on_s: 600.0,
                mean_off_s: 1200.0,
                duty_jitter: 0.3,
            }],
            base_load: 50.0,
            noise_std: noise,
            period_s: 6,
            start_ts: 0,
        }
    }

    #[test]
    fn zero_noise_mains_is_exact_sum() {
        let out = synth_generate(&small_spec(0.0), 7, 3600).unwrap();
        let (mains, fridge) = (&out[0], &out[1]);
        for (m, f) in mains.samples.iter().zip(&fridge.samples) {
            assert_eq!(m.1, 50.0 + f.1);
        }
    }

    #[test]
    fn same_seed_identical_series() {
        let a = synth_generate(&small_spec(10.0), 42, 86400).unwrap();
        let b = synth_generate(&small_spec(10.0), 42, 86400).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples, y.samples);
        }
    }

    #[test]
    fn different_seed_differs() {
        let a = synth_generate(&small_spec(10.0), 1, 86400).unwrap();
        let b = synth_generate(&small_spec(10.0), 2, 86400).unwrap();
        assert_ne!(a[1].samples, b[1].samples);
    }

    #[test]
    fn fridge_duty_cycle_matches_expectation_over_seven_days() {
        // on 120 W, on 600 s, off 1200 s -> long-run mean 40 W +- 5%
        let spec = small_spec(0.0);
        let out = synth_generate(&spec, 1, 7 * 86400).unwrap();
        let fridge = &out[1];
        let mean: f64 =
            fridge.samples.iter().map(|&(_, v)| v).sum::<f64>() / fridge.len() as f64;
        let expected = spec.appliances[0].expected_mean_power();
        assert!((mean - expected).abs() / expected < 0.05, "mean {mean}, expected {expected}");
    }

    #[test]
    fn mains_never_negative() {
        let mut spec = small_spec(200.0); // noise dwarfs the base load
        spec.base_load = 10.0;
        let out = synth_generate(&spec, 3, 86400).unwrap();
        assert!(out[0].samples.iter().all(|&(_, v)| v >= 0.0));
    }

    #[test]
    fn non_positive_duration_rejected() {
        let mut spec = small_spec(0.0);
        spec.appliances[0].mean_on_s = 0.0;
        assert!(synth_generate(&spec, 1, 3600).is_err());
    }
}
