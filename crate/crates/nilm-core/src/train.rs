//! Loss, Adam optimizer, and the training loop: seeded shuffling, batching,
//! gradient clipping, best-validation checkpoint selection, and per-epoch
//! loss logging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::Dropout;
use crate::data::Window;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{lit, Scalar, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the on/off classification term in the composite loss.
    pub state_loss_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
    /// Global-norm gradient clip threshold.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 300,
            state_loss_weight: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            validation_fraction: 0.1,
            seed: 1,
            early_stop_patience: None,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if self.state_loss_weight < 0.0 {
            return Err(Error::Config("state_loss_weight must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return Err(Error::Config("validation_fraction must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch loss record; one row per completed epoch.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossLog {
    pub rows: Vec<LossRow>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRow {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,test_loss\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i + 1, row.train, row.val, row.test));
        }
        out
    }

    pub fn best_val(&self) -> Option<f64> {
        self.rows.get(self.best_epoch).map(|r| r.val)
    }
}

/// Tensors for one normalized window: mains `[L,1]`, power targets `[L,A]`,
/// state targets `[L,A]`, and the validity mask replicated to `[L,A]`.
pub fn window_tensors<T: Scalar>(
    w: &Window,
) -> (Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>) {
    assert!(w.normalized, "training windows must be normalized");
    let l = w.len();
    let a = w.targets.len();
    let mains: Vec<T> = w.mains.iter().map(|&v| lit(v)).collect();
    let mut power = vec![T::zero(); l * a];
    let mut states = vec![T::zero(); l * a];
    let mut mask = vec![T::zero(); l * a];
    for t in 0..l {
        let valid = if w.mask[t] { T::one() } else { T::zero() };
        for ap in 0..a {
            power[t * a + ap] = lit(w.targets[ap][t]);
            states[t * a + ap] = lit(f64::from(w.states[ap][t]));
            mask[t * a + ap] = valid;
        }
    }
    (
        Tensor::from_vec(vec![l, 1], mains),
        Tensor::from_vec(vec![l, a], power),
        Tensor::from_vec(vec![l, a], states),
        Tensor::from_vec(vec![l, a], mask),
    )
}

/// Composite loss: masked mean squared error on normalized power plus
/// `lambda` times masked mean binary cross-entropy on state logits. With
/// `lambda == 0` the classification term is skipped entirely, so the state
/// head receives no gradient at all.
pub fn nilm_loss<T: Scalar>(
    pred_power: &Tensor<T>,
    state_logits: &Tensor<T>,
    target_power: &Tensor<T>,
    target_states: &Tensor<T>,
    mask: &Tensor<T>,
    lambda: f64,
) -> Tensor<T> {
    assert_eq!(
        pred_power.shape(),
        target_power.shape(),
        "loss shape mismatch: pred {:?} vs target {:?}",
        pred_power.shape(),
        target_power.shape()
    );
    let valid: f64 = mask.data().iter().map(|v| v.to_f64().unwrap()).sum();
    let inv: T = lit(1.0 / valid.max(1.0));
    let diff = pred_power.sub(target_power).mul(mask);
    let mse = diff.mul(&diff).sum().scale(inv);
    if lambda == 0.0 {
        return mse;
    }
    let bce = state_logits
        .bce_with_logits(target_states)
        .mul(mask)
        .sum()
        .scale(inv);
    mse.add(&bce.scale(lit(lambda)))
}

/// First/second moment accumulators; shapes mirror the parameter list.
/// Moments are kept in f64 regardless of the training precision.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: usize,
}

impl AdamState {
    pub fn new<T: Scalar>(params: &[(String, Tensor<T>)]) -> Self {
        AdamState {
            m: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over all parameters. Gradients must be
/// populated; the step counter increments exactly once per call.
pub fn adam_step<T: Scalar>(
    params: &[(String, Tensor<T>)],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (name, p)) in params.iter().enumerate() {
        let grad = p.grad().ok_or_else(|| {
            Error::Contract(format!("adam_step: parameter {name} has no gradient"))
        })?;
        let mut data: Vec<T> = p.to_vec();
        for (j, g) in grad.iter().enumerate() {
            let g = g.to_f64().unwrap();
            let m = &mut state.m[i][j];
            let v = &mut state.v[i][j];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let step = cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            data[j] = data[j] - lit::<T>(step);
        }
        p.set_data(&data);
    }
    Ok(())
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_gradients<T: Scalar>(params: &[(String, Tensor<T>)], max_norm: f64) {
    let mut sq = 0.0f64;
    for (_, p) in params {
        if let Some(g) = p.grad() {
            for v in g {
                let v = v.to_f64().unwrap();
                sq += v * v;
            }
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return;
    }
    let factor: f64 = max_norm / norm;
    for (_, p) in params {
        if let Some(g) = p.grad() {
            let scaled: Vec<T> = g.iter().map(|&v| v * lit(factor)).collect();
            p.zero_grad();
            p.accumulate_into(&scaled);
        }
    }
}

/// Mean loss over a window set without touching gradients or dropout.
pub fn eval_loss<T: Scalar>(model: &Model<T>, windows: &[Window], lambda: f64) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for w in windows {
        let (mains, tp, ts, mask) = window_tensors::<T>(w);
        let (power, logits) = model.forward(&mains, None);
        total += nilm_loss(&power, &logits, &tp, &ts, &mask, lambda)
            .item()
            .to_f64()
            .unwrap();
    }
    total / windows.len() as f64
}

/// Train the model in place. A validation split is carved from the training
/// windows by seeded shuffle; the parameters that achieved the best
/// validation loss are restored before returning. `test_windows`, when
/// given, is only ever evaluated, never trained on; with no test set the
/// validation loss is recorded in the test column.
pub fn train_loop<T: Scalar>(
    model: &mut Model<T>,
    windows: &[Window],
    test_windows: Option<&[Window]>,
    cfg: &TrainConfig,
) -> Result<LossLog> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let lambda = cfg.state_loss_weight;
    let params = model.parameters();

    let mut idx: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    idx.shuffle(&mut rng);
    let n_val = ((windows.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, windows.len().saturating_sub(1).max(1));
    let (val_idx, train_idx) = idx.split_at(n_val.min(windows.len() - 1).max(1));
    let val_set: Vec<Window> = val_idx.iter().map(|&i| windows[i].clone()).collect();
    let mut train_idx: Vec<usize> = train_idx.to_vec();
    if train_idx.is_empty() {
        return Err(Error::Data("training set too small to carve a validation split".into()));
    }

    let mut dropout = Dropout {
        rate: model.cfg.dropout,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD509_0C9A),
    };
    let mut adam = AdamState::new(&params);
    let mut log = LossLog::default();
    let mut best_val = f64::INFINITY;
    let mut best_snapshot: Vec<Vec<T>> = Vec::new();
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_no, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            for (_, p) in &params {
                p.zero_grad();
            }
            let mut batch_loss: Option<Tensor<T>> = None;
            for &wi in batch {
                let (mains, tp, ts, mask) = window_tensors::<T>(&windows[wi]);
                let (power, logits) = model.forward(&mains, Some(&mut dropout));
                let loss = nilm_loss(&power, &logits, &tp, &ts, &mask, lambda);
                batch_loss = Some(match batch_loss {
                    Some(acc) => acc.add(&loss),
                    None => loss,
                });
            }
            let loss = batch_loss.unwrap().scale(lit(1.0 / batch.len() as f64));
            let value = loss.item().to_f64().unwrap();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, batch: batch_no });
            }
            loss.backward();
            clip_gradients(&params, cfg.grad_clip);
            adam_step(&params, &mut adam, cfg)?;
            epoch_loss += value;
            n_batches += 1;
        }
        let train = epoch_loss / n_batches as f64;
        let val = eval_loss(model, &val_set, lambda);
        let test = match test_windows {
            Some(tw) if !tw.is_empty() => eval_loss(model, tw, lambda),
            _ => val,
        };
        log.rows.push(LossRow { train, val, test });

        if val < best_val {
            best_val = val;
            log.best_epoch = epoch;
            best_snapshot = params.iter().map(|(_, p)| p.to_vec()).collect();
            since_best = 0;
        } else {
            since_best += 1;
            if let Some(patience) = cfg.early_stop_patience {
                if since_best >= patience {
                    break;
                }
            }
        }
    }

    if !best_snapshot.is_empty() {
        for ((_, p), snap) in params.iter().zip(&best_snapshot) {
            p.set_data(snap);
        }
    }
    Ok(log)
}
