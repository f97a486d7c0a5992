//! The full sequence-to-sequence disaggregation network: 1-D conv
//! embedding, sinusoidal positions, a stack of pre-norm transformer
//! blocks, a temporal pyramid pooling stage, and dual output heads
//! (normalized power regression + on/off state logits).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    linear, multi_head_attention_with_maps, pyramid_branch_widths, sinusoidal_pe,
    temporal_pyramid_pool, transformer_block, AttentionParams, BlockParams, Dropout, HeadParams,
    PyramidParams,
};
use crate::data::{ApplianceSpec, NormStats, PowerSeries};
use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub scales: Vec<usize>,
    pub kernel_size: usize,
    pub dropout: f64,
    pub appliances: Vec<ApplianceSpec>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_len: 480, // 48 minutes at the 6 s working period
            d_model: 128,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            scales: vec![1, 2, 4, 8],
            kernel_size: 5,
            dropout: 0.1,
            appliances: vec![
                ApplianceSpec { name: "fridge".into(), max_power: 300.0, on_threshold: 50.0 },
                ApplianceSpec { name: "dish_washer".into(), max_power: 2500.0, on_threshold: 10.0 },
                ApplianceSpec {
                    name: "washing_machine".into(),
                    max_power: 2500.0,
                    on_threshold: 20.0,
                },
            ],
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d_model % 2 != 0 {
            return fail(format!("d_model must be even, got {}", self.d_model));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.scales.is_empty() {
            return fail("pyramid scale set must be non-empty".into());
        }
        if self.scales[0] < 1 || self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "pyramid scales must be strictly increasing from >= 1, got {:?}",
                self.scales
            ));
        }
        if self.scales.len() > self.d_model {
            return fail(format!(
                "more pyramid scales ({}) than d_model ({})",
                self.scales.len(),
                self.d_model
            ));
        }
        if self.window_len < *self.scales.last().unwrap() {
            return fail(format!(
                "window_len ({}) must be >= max pyramid scale ({})",
                self.window_len,
                self.scales.last().unwrap()
            ));
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("conv kernel size must be odd, got {}", self.kernel_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0,1), got {}", self.dropout));
        }
        if self.n_layers == 0 {
            return fail("need at least one transformer layer".into());
        }
        if self.appliances.is_empty() {
            return fail("appliance list must be non-empty".into());
        }
        for a in &self.appliances {
            if a.max_power <= 0.0 {
                return fail(format!("appliance {}: max_power must be positive", a.name));
            }
            if a.on_threshold < 0.0 {
                return fail(format!("appliance {}: on_threshold must be >= 0", a.name));
            }
        }
        Ok(())
    }

    pub fn n_appliances(&self) -> usize {
        self.appliances.len()
    }
}

#[derive(Debug)]
pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    pub norm: NormStats,
    pub conv_w: Tensor<T>,
    pub conv_b: Tensor<T>,
    /// Constant positional table, [L, d_model].
    pub pos: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub pyramid: PyramidParams<T>,
    pub w_power: Tensor<T>,
    pub b_power: Tensor<T>,
    pub w_state: Tensor<T>,
    pub b_state: Tensor<T>,
}

fn uniform_fan_in<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let limit = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| lit((rng.random::<f64>() * 2.0 - 1.0) * limit))
        .collect();
    Tensor::param(shape, data)
}

fn zeros_param<T: Scalar>(shape: Vec<usize>) -> Tensor<T> {
    let n: usize = shape.iter().product();
    Tensor::param(shape, vec![T::zero(); n])
}

fn ones_param<T: Scalar>(shape: Vec<usize>) -> Tensor<T> {
    let n: usize = shape.iter().product();
    Tensor::param(shape, vec![T::one(); n])
}

/// Build a model with scaled-uniform (fan-in) weights. Every projection
/// that ends a residual branch — attention output, second FFN layer, both
/// heads — starts at zero, so the fresh network is near-identity and its
/// raw head outputs are exactly zero.
pub fn init_model<T: Scalar>(cfg: &ModelConfig) -> Result<Model<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.d_model;
    let d_head = d / cfg.n_heads;
    let a = cfg.n_appliances();

    let conv_w = uniform_fan_in(&mut rng, vec![cfg.kernel_size, 1, d], cfg.kernel_size);
    let conv_b = zeros_param(vec![d]);
    let pos = sinusoidal_pe(cfg.window_len, d);

    let blocks = (0..cfg.n_layers)
        .map(|_| {
            let heads = (0..cfg.n_heads)
                .map(|_| HeadParams {
                    w_q: uniform_fan_in(&mut rng, vec![d, d_head], d),
                    b_q: zeros_param(vec![d_head]),
                    w_k: uniform_fan_in(&mut rng, vec![d, d_head], d),
                    b_k: zeros_param(vec![d_head]),
                    w_v: uniform_fan_in(&mut rng, vec![d, d_head], d),
                    b_v: zeros_param(vec![d_head]),
                })
                .collect();
            BlockParams {
                attn: AttentionParams {
                    heads,
                    w_out: zeros_param(vec![d, d]),
                    b_out: zeros_param(vec![d]),
                },
                w_ff1: uniform_fan_in(&mut rng, vec![d, cfg.d_ff], d),
                b_ff1: zeros_param(vec![cfg.d_ff]),
                w_ff2: zeros_param(vec![cfg.d_ff, d]),
                b_ff2: zeros_param(vec![d]),
                ln1_gamma: ones_param(vec![d]),
                ln1_beta: zeros_param(vec![d]),
                ln2_gamma: ones_param(vec![d]),
                ln2_beta: zeros_param(vec![d]),
            }
        })
        .collect();

    let widths = pyramid_branch_widths(d, cfg.scales.len());
    let branches = cfg
        .scales
        .iter()
        .zip(&widths)
        .map(|(&s, &w)| {
            (
                s,
                uniform_fan_in(&mut rng, vec![d, w], d),
                zeros_param(vec![w]),
            )
        })
        .collect();
    let pyramid = PyramidParams {
        branches,
        w_fuse: uniform_fan_in(&mut rng, vec![2 * d, d], 2 * d),
        b_fuse: zeros_param(vec![d]),
    };

    Ok(Model {
        cfg: cfg.clone(),
        norm: NormStats::default(),
        conv_w,
        conv_b,
        pos,
        blocks,
        pyramid,
        w_power: zeros_param(vec![d, a]),
        b_power: zeros_param(vec![a]),
        w_state: zeros_param(vec![d, a]),
        b_state: zeros_param(vec![a]),
    })
}

impl<T: Scalar> Model<T> {
    /// All trainable tensors in a stable, named order. The order defines
    /// the checkpoint layout.
    pub fn parameters(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> = Vec::new();
        out.push(("conv.w".into(), self.conv_w.clone()));
        out.push(("conv.b".into(), self.conv_b.clone()));
        for (i, b) in self.blocks.iter().enumerate() {
            for (h, head) in b.attn.heads.iter().enumerate() {
                out.push((format!("block{i}.attn.head{h}.w_q"), head.w_q.clone()));
                out.push((format!("block{i}.attn.head{h}.b_q"), head.b_q.clone()));
                out.push((format!("block{i}.attn.head{h}.w_k"), head.w_k.clone()));
                out.push((format!("block{i}.attn.head{h}.b_k"), head.b_k.clone()));
                out.push((format!("block{i}.attn.head{h}.w_v"), head.w_v.clone()));
                out.push((format!("block{i}.attn.head{h}.b_v"), head.b_v.clone()));
            }
            out.push((format!("block{i}.attn.w_out"), b.attn.w_out.clone()));
            out.push((format!("block{i}.attn.b_out"), b.attn.b_out.clone()));
            out.push((format!("block{i}.ff.w1"), b.w_ff1.clone()));
            out.push((format!("block{i}.ff.b1"), b.b_ff1.clone()));
            out.push((format!("block{i}.ff.w2"), b.w_ff2.clone()));
            out.push((format!("block{i}.ff.b2"), b.b_ff2.clone()));
            out.push((format!("block{i}.ln1.gamma"), b.ln1_gamma.clone()));
            out.push((format!("block{i}.ln1.beta"), b.ln1_beta.clone()));
            out.push((format!("block{i}.ln2.gamma"), b.ln2_gamma.clone()));
            out.push((format!("block{i}.ln2.beta"), b.ln2_beta.clone()));
        }
        for (i, (_, w, b)) in self.pyramid.branches.iter().enumerate() {
            out.push((format!("pyramid.branch{i}.w"), w.clone()));
            out.push((format!("pyramid.branch{i}.b"), b.clone()));
        }
        out.push(("pyramid.fuse.w".into(), self.pyramid.w_fuse.clone()));
        out.push(("pyramid.fuse.b".into(), self.pyramid.b_fuse.clone()));
        out.push(("head.power.w".into(), self.w_power.clone()));
        out.push(("head.power.b".into(), self.b_power.clone()));
        out.push(("head.state.w".into(), self.w_state.clone()));
        out.push(("head.state.b".into(), self.b_state.clone()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.parameters() {
            p.zero_grad();
        }
    }

    /// Forward pass over one normalized mains window `[L,1]`. Returns the
    /// sigmoid-bounded power fractions `[L,A]` and raw state logits
    /// `[L,A]`. Dropout is applied only when a dropout context is given.
    pub fn forward(
        &self,
        mains: &Tensor<T>,
        mut dropout: Option<&mut Dropout>,
    ) -> (Tensor<T>, Tensor<T>) {
        let l = self.cfg.window_len;
        assert_eq!(
            mains.shape(),
            &[l, 1],
            "forward expects mains of shape [{l},1], got {:?}",
            mains.shape()
        );
        let mut x = mains.conv1d_same(&self.conv_w, &self.conv_b).add(&self.pos);
        for b in &self.blocks {
            x = transformer_block(&x, b, dropout.as_deref_mut());
        }
        let x = temporal_pyramid_pool(&x, &self.pyramid);
        let power = linear(&x, &self.w_power, &self.b_power).sigmoid();
        let state_logits = linear(&x, &self.w_state, &self.b_state);
        (power, state_logits)
    }

    /// Attention maps of every (layer, head) on a given window; used by
    /// the verification command to check row-stochasticity end to end.
    pub fn attention_maps(&self, mains: &Tensor<T>) -> Vec<Tensor<T>> {
        let mut x = mains.conv1d_same(&self.conv_w, &self.conv_b).add(&self.pos);
        let mut maps = Vec::new();
        for b in &self.blocks {
            let eps: T = lit(crate::blocks::LAYER_NORM_EPS);
            let normed = x.layer_norm(&b.ln1_gamma, &b.ln1_beta, eps);
            let (_, m) = multi_head_attention_with_maps(&normed, &b.attn);
            maps.extend(m);
            x = transformer_block(&x, b, None);
        }
        maps
    }

    /// Disaggregate a mains series already on the 6 s grid. Windows slide
    /// with stride L/2 (plus a final end-aligned window so the tail is
    /// covered); overlapping predictions are averaged, power is
    /// de-normalized and clamped to [0, max_power], and timesteps whose
    /// averaged state probability is ≤ 0.5 are gated to zero.
    pub fn disaggregate(&self, series: &PowerSeries) -> Result<Vec<PowerSeries>> {
        let l = self.cfg.window_len;
        let n = series.len();
        if n < l {
            return Err(Error::Contract(format!(
                "series has {n} samples but the model window is {l}; pad the series to at least one window"
            )));
        }
        let a = self.cfg.n_appliances();
        let stride = (l / 2).max(1);
        let mut offsets: Vec<usize> = (0..=(n - l)).step_by(stride).collect();
        if *offsets.last().unwrap() != n - l {
            offsets.push(n - l);
        }

        let mut power_sum = vec![vec![0.0f64; n]; a];
        let mut prob_sum = vec![vec![0.0f64; n]; a];
        let mut counts = vec![0.0f64; n];
        for off in offsets {
            let window: Vec<T> = series.samples[off..off + l]
                .iter()
                .map(|&(_, w)| lit((w - self.norm.mains_mean) / self.norm.mains_std))
                .collect();
            let x = Tensor::from_vec(vec![l, 1], window);
            let (power, logits) = self.forward(&x, None);
            let pv = power.to_vec();
            let sv = logits.sigmoid().to_vec();
            for t in 0..l {
                counts[off + t] += 1.0;
                for ap in 0..a {
                    power_sum[ap][off + t] += pv[t * a + ap].to_f64().unwrap();
                    prob_sum[ap][off + t] += sv[t * a + ap].to_f64().unwrap();
                }
            }
        }

        let mut out = Vec::with_capacity(a);
        for (ap, spec) in self.cfg.appliances.iter().enumerate() {
            let samples: Vec<(i64, f64)> = (0..n)
                .map(|t| {
                    let c = counts[t];
                    let watts = (power_sum[ap][t] / c * spec.max_power).clamp(0.0, spec.max_power);
                    let on = prob_sum[ap][t] / c > 0.5;
                    (series.samples[t].0, if on { watts } else { 0.0 })
                })
                .collect();
            out.push(PowerSeries::new(spec.name.clone(), samples, series.period));
        }
        Ok(out)
    }
}
