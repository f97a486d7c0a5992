//! Evaluation suite: on/off classification metrics (F1, precision, recall,
//! accuracy, MCC) from thresholded states, and regression metrics (MAE in
//! watts, signed SAE) from power traces. Any 0/0 denominator yields 0,
//! disclosed in the report footer, so reports are always complete.

use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{lit, Scalar, Tensor};

/// On/off confusion counts. TP+FP+TN+FN equals the evaluated timesteps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Exact cell counts over two equal-length binary sequences.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "confusion: length mismatch {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Standard metric formulas over a confusion matrix; 0/0 yields 0.
pub fn classification_metrics(c: &Confusion) -> Classification {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let accuracy = ratio(tp + tn, c.total() as f64);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, mcc_den);
    Classification { precision, recall, f1, accuracy, mcc }
}

/// Mean absolute error in watts over denormalized traces.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "mae: need equal non-empty traces, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Signed relative energy error: (Σpred − Σtrue) / Σtrue.
pub fn sae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "sae: length mismatch {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let total_true: f64 = truth.iter().sum();
    if total_true <= 0.0 {
        return Err(Error::UndefinedMetric(
            "sae undefined: true energy total is zero".into(),
        ));
    }
    let total_pred: f64 = pred.iter().sum();
    Ok((total_pred - total_true) / total_true)
}

/// Evaluation inputs for one appliance, masked timesteps already excluded.
#[derive(Debug, Clone)]
pub struct ApplianceEval {
    pub name: String,
    pub pred_power: Vec<f64>,
    pub true_power: Vec<f64>,
    pub pred_states: Vec<u8>,
    pub true_states: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplianceRow {
    pub name: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub mae: f64,
    pub sae: f64,
}

/// Per-appliance rows plus unweighted overall means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ApplianceRow>,
    pub overall: ApplianceRow,
}

/// Run the model over normalized windows and gather masked per-appliance
/// predictions, denormalized back to watts, ready for [`build_report`].
/// States are predicted from the classification head at probability 0.5.
pub fn evaluate_windows<T: Scalar>(
    model: &Model<T>,
    windows: &[Window],
) -> Result<Vec<ApplianceEval>> {
    let specs = &model.cfg.appliances;
    let n_app = specs.len();
    let mut evals: Vec<ApplianceEval> = specs
        .iter()
        .map(|s| ApplianceEval {
            name: s.name.clone(),
            pred_power: Vec::new(),
            true_power: Vec::new(),
            pred_states: Vec::new(),
            true_states: Vec::new(),
        })
        .collect();
    for w in windows {
        if !w.normalized {
            return Err(Error::Contract(
                "evaluate_windows expects normalized windows".into(),
            ));
        }
        if w.len() != model.cfg.window_len {
            return Err(Error::Contract(format!(
                "window length {} does not match model window_len {}",
                w.len(),
                model.cfg.window_len
            )));
        }
        let mains = Tensor::from_vec(
            vec![w.len(), 1],
            w.mains.iter().map(|&v| lit::<T>(v)).collect(),
        );
        let (power, logits) = model.forward(&mains, None);
        let power = power.to_vec();
        let logits = logits.to_vec();
        for (a, e) in evals.iter_mut().enumerate() {
            let max_power = model.norm.max_power[a];
            for t in 0..w.len() {
                if !w.mask[t] {
                    continue;
                }
                let p = power[t * n_app + a].to_f64().unwrap_or(0.0);
                let z = logits[t * n_app + a].to_f64().unwrap_or(0.0);
                e.pred_power
                    .push(crate::data::denormalize_power(p, max_power).clamp(0.0, max_power));
                e.pred_states.push((z > 0.0) as u8);
                e.true_power
                    .push(crate::data::denormalize_power(w.targets[a][t], max_power));
                e.true_states.push(w.states[a][t]);
            }
        }
    }
    Ok(evals)
}

pub fn build_report(evals: &[ApplianceEval]) -> Result<MetricsReport> {
    if evals.is_empty() {
        return Err(Error::Contract("build_report needs at least one appliance".into()));
    }
    let mut rows = Vec::with_capacity(evals.len());
    for e in evals {
        let annotate = |err: Error| match err {
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{}: {m}", e.name)),
            Error::Contract(m) => Error::Contract(format!("{}: {m}", e.name)),
            other => other,
        };
        let c = confusion(&e.pred_states, &e.true_states).map_err(annotate)?;
        let cls = classification_metrics(&c);
        let annotate = |err: Error| match err {
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{}: {m}", e.name)),
            Error::Contract(m) => Error::Contract(format!("{}: {m}", e.name)),
            other => other,
        };
        let mae = mae(&e.pred_power, &e.true_power).map_err(annotate)?;
        let annotate = |err: Error| match err {
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{}: {m}", e.name)),
            Error::Contract(m) => Error::Contract(format!("{}: {m}", e.name)),
            other => other,
        };
        let sae = sae(&e.pred_power, &e.true_power).map_err(annotate)?;
        rows.push(ApplianceRow {
            name: e.name.clone(),
            f1: cls.f1,
            precision: cls.precision,
            recall: cls.recall,
            accuracy: cls.accuracy,
            mcc: cls.mcc,
            mae,
            sae,
        });
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&ApplianceRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let overall = ApplianceRow {
        name: "overall".into(),
        f1: mean(|r| r.f1),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        accuracy: mean(|r| r.accuracy),
        mcc: mean(|r| r.mcc),
        mae: mean(|r| r.mae),
        sae: mean(|r| r.sae),
    };
    Ok(MetricsReport { rows, overall })
}

impl MetricsReport {
    /// Aligned text table, column order F1, Precision, Recall, Acc, MCC,
    /// MAE, SAE.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {:>7} {:>9} {:>7} {:>7} {:>7} {:>9} {:>8}\n",
            "Appliance", "F1", "Precision", "Recall", "Acc", "MCC", "MAE", "SAE"
        ));
        for r in self.rows.iter().chain([&self.overall]) {
            out.push_str(&format!(
                "{:<18} {:>7.3} {:>9.3} {:>7.3} {:>7.3} {:>7.3} {:>9.2} {:>8.3}\n",
                r.name, r.f1, r.precision, r.recall, r.accuracy, r.mcc, r.mae, r.sae
            ));
        }
        out.push_str("(0/0 denominators reported as 0)\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("appliance,f1,precision,recall,acc,mcc,mae,sae\n");
        for r in self.rows.iter().chain([&self.overall]) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.name, r.f1, r.precision, r.recall, r.accuracy, r.mcc, r.mae, r.sae
            ));
        }
        out
    }
}
