//! The `verify` command: double-precision finite-difference gradient
//! checks for every block plus the structural and metric invariants.

use nilm_core::blocks::{
    multi_head_attention, multi_head_attention_with_maps, pyramid_branch_widths,
    temporal_pyramid_pool, transformer_block, AttentionParams, BlockParams, HeadParams,
    PyramidParams,
};
use nilm_core::data::ApplianceSpec;
use nilm_core::metrics::{classification_metrics, confusion};
use nilm_core::model::{init_model, Model, ModelConfig};
use nilm_core::tensor::{grad_check, Tensor};
use nilm_core::train::nilm_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub detail: String,
    pub pass: bool,
}

const GRAD_TOL: f64 = 1e-4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
}

fn grad_result(name: &'static str, err: f64) -> Check {
    Check {
        name,
        detail: format!("max relative gradient error {err:.3e} (tolerance {GRAD_TOL:.0e})"),
        pass: err < GRAD_TOL,
    }
}

fn attention_fixture(rng: &mut ChaCha8Rng, d_model: usize, n_heads: usize) -> AttentionParams<f64> {
    let d_head = d_model / n_heads;
    AttentionParams {
        heads: (0..n_heads)
            .map(|_| HeadParams {
                w_q: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_q: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
                w_k: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_k: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
                w_v: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_v: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
            })
            .collect(),
        w_out: Tensor::param(vec![d_model, d_model], rand_vec(rng, d_model * d_model, 0.3)),
        b_out: Tensor::param(vec![d_model], rand_vec(rng, d_model, 0.1)),
    }
}

fn check_matmul() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let a = Tensor::param(vec![3, 4], rand_vec(&mut rng, 12, 1.0));
    let b = Tensor::param(vec![4, 2], rand_vec(&mut rng, 8, 1.0));
    let e1 = grad_check(|a| a.matmul(&b).sum(), &a, 1e-5);
    let e2 = grad_check(|b| a.matmul(b).sum(), &b, 1e-5);
    grad_result("matmul gradient", e1.max(e2))
}

fn check_conv() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let x = Tensor::param(vec![6, 2], rand_vec(&mut rng, 12, 1.0));
    let w = Tensor::param(vec![3, 2, 3], rand_vec(&mut rng, 18, 1.0));
    let b = Tensor::param(vec![3], rand_vec(&mut rng, 3, 0.5));
    let probe = Tensor::from_vec(vec![6, 3], rand_vec(&mut rng, 18, 1.0));
    let mut err: f64 = 0.0;
    for t in [&x, &w, &b] {
        err = err.max(grad_check(|_| x.conv1d_same(&w, &b).mul(&probe).sum(), t, 1e-5));
    }
    grad_result("conv1d gradient", err)
}

fn check_layer_norm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let x = Tensor::param(vec![3, 4], rand_vec(&mut rng, 12, 1.5));
    let gamma = Tensor::param(vec![4], rand_vec(&mut rng, 4, 1.0));
    let beta = Tensor::param(vec![4], rand_vec(&mut rng, 4, 0.5));
    let probe = Tensor::from_vec(vec![3, 4], rand_vec(&mut rng, 12, 1.0));
    let mut err: f64 = 0.0;
    for t in [&x, &gamma, &beta] {
        err = err.max(grad_check(
            |_| x.layer_norm(&gamma, &beta, 1e-5).mul(&probe).sum(),
            t,
            1e-6,
        ));
    }
    grad_result("layer_norm gradient", err)
}

fn check_attention_grad() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let p = attention_fixture(&mut rng, 8, 2);
    let x = Tensor::param(vec![4, 8], rand_vec(&mut rng, 32, 1.0));
    let probe = Tensor::from_vec(vec![4, 8], rand_vec(&mut rng, 32, 1.0));
    let mut err = grad_check(|x| multi_head_attention(x, &p).mul(&probe).sum(), &x, 1e-5);
    let mut params = vec![p.w_out.clone(), p.b_out.clone()];
    for h in &p.heads {
        params.extend([
            h.w_q.clone(),
            h.b_q.clone(),
            h.w_k.clone(),
            h.b_k.clone(),
            h.w_v.clone(),
            h.b_v.clone(),
        ]);
    }
    for t in &params {
        err = err.max(grad_check(
            |_| multi_head_attention(&x, &p).mul(&probe).sum(),
            t,
            1e-5,
        ));
    }
    grad_result("attention gradient", err)
}

fn check_block_grad() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let d = 6;
    let p = BlockParams {
        attn: attention_fixture(&mut rng, d, 2),
        w_ff1: Tensor::param(vec![d, 2 * d], rand_vec(&mut rng, d * 2 * d, 0.4)),
        b_ff1: Tensor::param(vec![2 * d], rand_vec(&mut rng, 2 * d, 0.1)),
        w_ff2: Tensor::param(vec![2 * d, d], rand_vec(&mut rng, 2 * d * d, 0.4)),
        b_ff2: Tensor::param(vec![d], rand_vec(&mut rng, d, 0.1)),
        ln1_gamma: Tensor::param(vec![d], vec![1.0; d]),
        ln1_beta: Tensor::param(vec![d], vec![0.0; d]),
        ln2_gamma: Tensor::param(vec![d], vec![1.0; d]),
        ln2_beta: Tensor::param(vec![d], vec![0.0; d]),
    };
    let x = Tensor::param(vec![4, d], rand_vec(&mut rng, 4 * d, 1.0));
    let probe = Tensor::from_vec(vec![4, d], rand_vec(&mut rng, 4 * d, 1.0));
    let mut err = grad_check(|x| transformer_block(x, &p, None).mul(&probe).sum(), &x, 1e-5);
    for t in [&p.w_ff1, &p.w_ff2, &p.ln1_gamma, &p.ln2_beta] {
        err = err.max(grad_check(
            |_| transformer_block(&x, &p, None).mul(&probe).sum(),
            t,
            1e-5,
        ));
    }
    grad_result("transformer block gradient", err)
}

fn check_pyramid_grad() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let d = 8;
    let scales = [1usize, 2];
    let widths = pyramid_branch_widths(d, scales.len());
    let p = PyramidParams {
        branches: scales
            .iter()
            .zip(&widths)
            .map(|(&s, &w)| {
                (
                    s,
                    Tensor::param(vec![d, w], rand_vec(&mut rng, d * w, 0.4)),
                    Tensor::param(vec![w], rand_vec(&mut rng, w, 0.1)),
                )
            })
            .collect(),
        w_fuse: Tensor::param(vec![2 * d, d], rand_vec(&mut rng, 2 * d * d, 0.3)),
        b_fuse: Tensor::param(vec![d], rand_vec(&mut rng, d, 0.1)),
    };
    let x = Tensor::param(vec![8, d], rand_vec(&mut rng, 8 * d, 1.0));
    let probe = Tensor::from_vec(vec![8, d], rand_vec(&mut rng, 8 * d, 1.0));
    let mut err = grad_check(|x| temporal_pyramid_pool(x, &p).mul(&probe).sum(), &x, 1e-5);
    for (_, w, b) in &p.branches {
        for t in [w, b] {
            err = err.max(grad_check(
                |_| temporal_pyramid_pool(&x, &p).mul(&probe).sum(),
                t,
                1e-5,
            ));
        }
    }
    err = err.max(grad_check(
        |_| temporal_pyramid_pool(&x, &p).mul(&probe).sum(),
        &p.w_fuse,
        1e-5,
    ));
    grad_result("pyramid pool gradient", err)
}

fn tiny_config(window_len: usize) -> ModelConfig {
    ModelConfig {
        window_len,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        scales: vec![1, 2],
        kernel_size: 3,
        dropout: 0.0,
        appliances: vec![ApplianceSpec {
            name: "a".into(),
            max_power: 100.0,
            on_threshold: 10.0,
        }],
        seed: 21,
    }
}

fn check_model_grad() -> Check {
    let m: Model<f64> = init_model(&tiny_config(8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for (_, p) in m.parameters() {
        // Zero-started residual projections get small values so gradient
        // flows through every path.
        if p.to_vec().iter().all(|&v| v == 0.0) {
            p.set_data(&rand_vec(&mut rng, p.len(), 0.2));
        }
    }
    let mains = Tensor::from_vec(vec![8, 1], (0..8).map(|i| (i as f64 * 0.7).sin()).collect());
    let power_t = Tensor::from_vec(vec![8, 1], (0..8).map(|i| 0.1 * i as f64 / 8.0).collect());
    let states_t = Tensor::from_vec(vec![8, 1], vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
    let mask = Tensor::from_vec(vec![8, 1], vec![1.0; 8]);
    let mut err: f64 = 0.0;
    for (_, p) in m.parameters() {
        err = err.max(grad_check(
            |_| {
                let (power, logits) = m.forward(&mains, None);
                nilm_loss(&power, &logits, &power_t, &states_t, &mask, 1.0)
            },
            &p,
            1e-5,
        ));
    }
    grad_result("full loss gradient (tiny model)", err)
}

fn check_attention_rows() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = attention_fixture(&mut rng, 8, 2);
        let x = Tensor::from_vec(vec![6, 8], rand_vec(&mut rng, 48, 2.0));
        let (_, maps) = multi_head_attention_with_maps(&x, &p);
        for map in maps {
            let w = map.to_vec();
            for row in w.chunks(6) {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    Check {
        name: "attention row sums",
        detail: format!("max |row sum - 1| = {worst:.3e} over 100 passes (tolerance 1e-6)"),
        pass: worst < 1e-6,
    }
}

fn check_identity_at_init() -> Check {
    let m: Model<f64> = init_model(&tiny_config(8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut exact = true;
    for _ in 0..100 {
        let x = Tensor::from_vec(vec![5, 8], rand_vec(&mut rng, 40, 2.0));
        let y = transformer_block(&x, &m.blocks[0], None);
        if x.to_vec() != y.to_vec() {
            exact = false;
            break;
        }
    }
    Check {
        name: "identity at init",
        detail: if exact {
            "block output bitwise equals input on 100 random inputs".into()
        } else {
            "block output deviated from input".into()
        },
        pass: exact,
    }
}

fn check_shapes() -> Check {
    let mut ok = true;
    let mut detail = String::new();
    for l in [8usize, 32, 480] {
        let m: Model<f64> = init_model(&tiny_config(l)).unwrap();
        let mains = Tensor::from_vec(vec![l, 1], vec![0.1; l]);
        let (power, logits) = m.forward(&mains, None);
        let good = power.shape() == [l, 1] && logits.shape() == [l, 1];
        ok &= good;
        detail.push_str(&format!("L={l}:{} ", if good { "ok" } else { "BAD" }));
    }
    Check { name: "seq2seq shape contract", detail: detail.trim_end().to_string(), pass: ok }
}

fn check_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut ok = true;
    for _ in 0..1000 {
        let n = 1 + rng.random_range(0..40);
        let p_on = rng.random::<f64>();
        let pred: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < p_on) as u8).collect();
        let truth: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < p_on) as u8).collect();
        let m = classification_metrics(&confusion(&pred, &truth).unwrap());
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0f64, 0.0, 0.0, 0.0);
        for (&p, &t) in pred.iter().zip(&truth) {
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
        ok &= m.precision == precision
            && m.recall == recall
            && m.f1 == div(2.0 * precision * recall, precision + recall)
            && m.accuracy == div(tp + tn, tp + fp + tn + fn_)
            && m.mcc
                == div(
                    tp * tn - fp * fn_,
                    ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
                );
        if !ok {
            break;
        }
    }
    Check {
        name: "metric brute-force recount",
        detail: if ok {
            "exact match on 1000 random sequence pairs".into()
        } else {
            "mismatch against brute-force recount".into()
        },
        pass: ok,
    }
}

fn check_pooling() -> Check {
    let x = Tensor::from_vec(vec![9, 2], vec![3.5; 18]);
    let pooled = x.avg_pool1d(4);
    let constant = pooled.to_vec().iter().all(|&v| (v - 3.5f64).abs() < 1e-12);
    let up = pooled.upsample_nearest(9);
    let lengths = pooled.shape() == [3, 2] && up.shape() == [9, 2];
    Check {
        name: "pooling invariants",
        detail: format!(
            "constant preserved: {constant}; lengths ceil(L/s) and L: {lengths}"
        ),
        pass: constant && lengths,
    }
}

/// Run the whole verification suite in a fixed order.
pub fn run_verification() -> Vec<Check> {
    vec![
        check_matmul(),
        check_conv(),
        check_layer_norm(),
        check_attention_grad(),
        check_block_grad(),
        check_pyramid_grad(),
        check_model_grad(),
        check_attention_rows(),
        check_identity_at_init(),
        check_shapes(),
        check_metrics(),
        check_pooling(),
    ]
}
