//! End-to-end pipeline: synthesize a household, align and window it,
//! train a small model briefly, persist it, and evaluate the reload.

use nilm_core::checkpoint::{load_checkpoint, save_checkpoint};
use nilm_core::data::{
    align_household, make_windows, normalize, split_seen_unseen, ApplianceSpec, NormStats,
    SplitSpec, Window,
};
use nilm_core::model::{init_model, Model, ModelConfig};
use nilm_core::synth::{default_household, synth_generate};
use nilm_core::train::{eval_loss, train_loop, TrainConfig};

fn specs() -> Vec<ApplianceSpec> {
    default_household()
        .appliances
        .iter()
        .map(|a| ApplianceSpec {
            name: a.name.clone(),
            max_power: a.on_power * 1.25,
            on_threshold: a.on_power * 0.25,
        })
        .collect()
}

fn windows_for(house: &str, seed: u64, days: i64, len: usize, stride: usize) -> Vec<Window> {
    let spec = default_household();
    let series = synth_generate(&spec, seed, days * 86_400).unwrap();
    let (mains, apps) = series.split_first().unwrap();
    let aligned = align_household(house, mains, apps, spec.period_s);
    make_windows(&aligned, &specs(), len, stride)
}

fn small_cfg() -> ModelConfig {
    ModelConfig {
        window_len: 64,
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        scales: vec![1, 2],
        kernel_size: 3,
        dropout: 0.0,
        appliances: specs(),
        seed: 11,
    }
}

#[test]
fn synth_to_training_reduces_loss() {
    let raw = windows_for("1", 42, 1, 64, 64);
    assert!(raw.len() > 100, "expected a full day of windows, got {}", raw.len());
    let stats = NormStats::from_windows(&raw, &specs()).unwrap();
    let windows: Vec<Window> = raw.iter().map(|w| normalize(w, &stats).unwrap()).collect();
    assert!(windows.iter().all(|w| w.normalized));
    assert!(windows
        .iter()
        .flat_map(|w| w.targets.iter().flatten())
        .all(|&v| (0.0..=1.0).contains(&v)));

    let mut model: Model<f32> = init_model(&small_cfg()).unwrap();
    model.norm = stats;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 5,
        batch_size: 16,
        seed: 7,
        ..TrainConfig::default()
    };
    let before = eval_loss(&model, &windows, cfg.state_loss_weight);
    let log = train_loop(&mut model, &windows, None, &cfg).unwrap();
    assert_eq!(log.rows.len(), 5);
    let after = eval_loss(&model, &windows, cfg.state_loss_weight);
    assert!(
        after < before,
        "training did not reduce loss: {before} -> {after}"
    );
    assert!(log.rows.iter().all(|r| r.train.is_finite() && r.val.is_finite()));
}

#[test]
fn checkpoint_preserves_predictions_and_disaggregation_runs() {
    let raw = windows_for("1", 5, 1, 64, 64);
    let stats = NormStats::from_windows(&raw, &specs()).unwrap();
    let windows: Vec<Window> = raw.iter().map(|w| normalize(w, &stats).unwrap()).collect();

    let mut model: Model<f32> = init_model(&small_cfg()).unwrap();
    model.norm = stats;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    };
    train_loop(&mut model, &windows, None, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &path).unwrap();
    let reloaded: Model<f32> = load_checkpoint(&path).unwrap();

    let loss_a = eval_loss(&model, &windows, 1.0);
    let loss_b = eval_loss(&reloaded, &windows, 1.0);
    assert_eq!(loss_a, loss_b, "reloaded model diverges from the original");

    let spec = default_household();
    let series = synth_generate(&spec, 99, 86_400 / 4).unwrap();
    let outputs = reloaded.disaggregate(&series[0]).unwrap();
    assert_eq!(outputs.len(), specs().len());
    for (out, app) in outputs.iter().zip(specs()) {
        assert_eq!(out.name, app.name);
        assert!(out
            .samples
            .iter()
            .all(|&(_, w)| (0.0..=app.max_power).contains(&w)));
    }
}

#[test]
fn seen_unseen_split_respects_house_and_time_boundaries() {
    let mut windows = windows_for("1", 1, 1, 64, 32);
    windows.extend(windows_for("2", 2, 1, 64, 32));
    let total = windows.len();
    let day_end = windows.iter().map(|w| w.end_ts()).max().unwrap();
    let spec = SplitSpec {
        train_houses: vec!["1".into()],
        seen_test_ranges: vec![("1".into(), day_end - 86_400 / 5, day_end)],
        unseen_houses: vec!["2".into()],
    };
    let sets = split_seen_unseen(&spec, windows).unwrap();
    assert!(!sets.train.is_empty() && !sets.seen_test.is_empty() && !sets.unseen_test.is_empty());
    assert!(sets.train.len() + sets.seen_test.len() + sets.unseen_test.len() <= total);
    assert!(sets.unseen_test.iter().all(|w| w.house == "2"));
    assert!(sets.train.iter().all(|w| w.house == "1"));
    let test_start = sets.seen_test.iter().map(|w| w.start_ts).min().unwrap();
    assert!(
        sets.train.iter().all(|w| w.end_ts() <= test_start),
        "train windows overlap the held-out range"
    );
}
