//! Metric formulas cross-checked against an independent brute-force
//! recount on randomized inputs.

use nilm_core::metrics::{classification_metrics, confusion, mae, sae};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(pred: &[u8], truth: &[u8]) -> (f64, f64, f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut tn = 0.0;
    let mut fn_ = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1.0,
            (1, 0) => fp += 1.0,
            (0, 0) => tn += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let div = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = div(2.0 * precision * recall, precision + recall);
    let accuracy = div(tp + tn, tp + fp + tn + fn_);
    let mcc = div(
        tp * tn - fp * fn_,
        ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
    );
    (precision, recall, f1, accuracy, mcc)
}

#[test]
fn classification_metrics_match_brute_force_recount_1000_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..1000 {
        let n = 1 + rng.random_range(0..50);
        // Skewed on-probabilities so degenerate cases (all-off, all-on)
        // appear regularly.
        let p_on = rng.random::<f64>();
        let pred: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < p_on) as u8).collect();
        let truth: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < p_on) as u8).collect();
        let m = classification_metrics(&confusion(&pred, &truth).unwrap());
        let (precision, recall, f1, accuracy, mcc) = brute_force(&pred, &truth);
        assert_eq!(m.precision, precision, "trial {trial}");
        assert_eq!(m.recall, recall, "trial {trial}");
        assert_eq!(m.f1, f1, "trial {trial}");
        assert_eq!(m.accuracy, accuracy, "trial {trial}");
        assert_eq!(m.mcc, mcc, "trial {trial}");
    }
}

#[test]
fn mae_and_sae_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..1000 {
        let n = 1 + rng.random_range(0..40);
        let pred: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3000.0).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3000.0 + 1.0).collect();
        let expect_mae: f64 =
            pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n as f64;
        let got = mae(&pred, &truth).unwrap();
        assert!(
            (got - expect_mae).abs() <= 1e-9 * expect_mae.max(1.0),
            "trial {trial}: mae {got} vs {expect_mae}"
        );
        let sp: f64 = pred.iter().sum();
        let st: f64 = truth.iter().sum();
        let expect_sae = (sp - st) / st;
        let got = sae(&pred, &truth).unwrap();
        assert!(
            (got - expect_sae).abs() <= 1e-9 * expect_sae.abs().max(1.0),
            "trial {trial}: sae {got} vs {expect_sae}"
        );
    }
}
