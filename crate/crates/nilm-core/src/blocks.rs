//! Building blocks of the disaggregation network: sinusoidal positional
//! encoding, multi-head self-attention, pre-norm residual transformer
//! blocks, and temporal pyramid pooling.
//!
//! Blocks are pure functions of (input, params). Attention is unmasked
//! encoder-style self-attention: a disaggregation window is seen whole,
//! so every timestep may attend to every other.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{lit, Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-head query/key/value projections plus a shared output projection.
#[derive(Debug)]
pub struct AttentionParams<T: Scalar> {
    pub heads: Vec<HeadParams<T>>,
    pub w_out: Tensor<T>,
    pub b_out: Tensor<T>,
}

#[derive(Debug)]
pub struct HeadParams<T: Scalar> {
    pub w_q: Tensor<T>,
    pub b_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub b_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub b_v: Tensor<T>,
}

/// One pre-norm transformer block: attention and feed-forward sublayers,
/// each wrapped in a residual connection.
#[derive(Debug)]
pub struct BlockParams<T: Scalar> {
    pub attn: AttentionParams<T>,
    pub w_ff1: Tensor<T>,
    pub b_ff1: Tensor<T>,
    pub w_ff2: Tensor<T>,
    pub b_ff2: Tensor<T>,
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
}

/// Multi-scale pooling branches plus the fusion projection.
#[derive(Debug)]
pub struct PyramidParams<T: Scalar> {
    /// (scale, projection, bias); branch widths sum to d_model.
    pub branches: Vec<(usize, Tensor<T>, Tensor<T>)>,
    pub w_fuse: Tensor<T>,
    pub b_fuse: Tensor<T>,
}

/// Branch widths for a scale set: d_model split as evenly as possible,
/// remainder going to the last branch.
pub fn pyramid_branch_widths(d_model: usize, n_scales: usize) -> Vec<usize> {
    let base = d_model / n_scales;
    let mut widths = vec![base; n_scales];
    *widths.last_mut().expect("empty scale set") += d_model - base * n_scales;
    widths
}

/// Seeded inverted-dropout mask source, active only in training mode.
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    fn apply<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        if self.rate <= 0.0 {
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let inv: T = lit(1.0 / keep);
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    inv
                } else {
                    T::zero()
                }
            })
            .collect();
        x.mul(&Tensor::from_vec(x.shape().to_vec(), mask))
    }
}

fn maybe_drop<T: Scalar>(x: Tensor<T>, dropout: &mut Option<&mut Dropout>) -> Tensor<T> {
    match dropout {
        Some(d) => d.apply(&x),
        None => x,
    }
}

pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    x.matmul(w).add_bias(b)
}

/// Sinusoidal positional table: `PE[pos,2i] = sin(pos/10000^(2i/d))`,
/// `PE[pos,2i+1] = cos(pos/10000^(2i/d))`. Requires even `d_model`.
pub fn sinusoidal_pe<T: Scalar>(len: usize, d_model: usize) -> Tensor<T> {
    assert!(d_model % 2 == 0, "sinusoidal_pe requires even d_model, got {d_model}");
    let mut data = vec![T::zero(); len * d_model];
    for pos in 0..len {
        for i in 0..d_model / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            let angle = pos as f64 * freq;
            data[pos * d_model + 2 * i] = lit(angle.sin());
            data[pos * d_model + 2 * i + 1] = lit(angle.cos());
        }
    }
    Tensor::from_vec(vec![len, d_model], data)
}

/// Full (unmasked) multi-head self-attention over `[L, d_model]`.
pub fn multi_head_attention<T: Scalar>(x: &Tensor<T>, p: &AttentionParams<T>) -> Tensor<T> {
    multi_head_attention_with_maps(x, p).0
}

/// As [`multi_head_attention`] but also returns the per-head attention
/// weight matrices (each `[L, L]`, rows summing to 1).
pub fn multi_head_attention_with_maps<T: Scalar>(
    x: &Tensor<T>,
    p: &AttentionParams<T>,
) -> (Tensor<T>, Vec<Tensor<T>>) {
    assert!(!p.heads.is_empty(), "attention needs at least one head");
    let d_head = p.heads[0].w_q.shape()[1];
    let inv_sqrt: T = lit(1.0 / (d_head as f64).sqrt());
    let mut head_outs = Vec::with_capacity(p.heads.len());
    let mut maps = Vec::with_capacity(p.heads.len());
    for h in &p.heads {
        let q = linear(x, &h.w_q, &h.b_q);
        let k = linear(x, &h.w_k, &h.b_k);
        let v = linear(x, &h.w_v, &h.b_v);
        let scores = q.matmul(&k.transpose()).scale(inv_sqrt);
        let weights = scores.softmax();
        head_outs.push(weights.matmul(&v));
        maps.push(weights);
    }
    let concat = Tensor::concat_cols(&head_outs);
    (linear(&concat, &p.w_out, &p.b_out), maps)
}

/// Pre-norm residual block: `h = x + Attn(LN(x)); out = h + FFN(LN(h))`.
/// With zero-valued attention output projection and second FFN layer the
/// block is an exact identity.
pub fn transformer_block<T: Scalar>(
    x: &Tensor<T>,
    p: &BlockParams<T>,
    mut dropout: Option<&mut Dropout>,
) -> Tensor<T> {
    let eps: T = lit(LAYER_NORM_EPS);
    let normed = x.layer_norm(&p.ln1_gamma, &p.ln1_beta, eps);
    let attn = multi_head_attention(&normed, &p.attn);
    let attn = maybe_drop(attn, &mut dropout);
    let h = x.add(&attn);

    let normed2 = h.layer_norm(&p.ln2_gamma, &p.ln2_beta, eps);
    let ff = linear(&linear(&normed2, &p.w_ff1, &p.b_ff1).gelu(), &p.w_ff2, &p.b_ff2);
    let ff = maybe_drop(ff, &mut dropout);
    h.add(&ff)
}

/// Temporal pyramid pooling: each branch mean-pools at its scale, projects
/// to its slice of d_model, and upsamples back to L; the concatenated
/// branches plus the raw input are fused by a linear layer back to d_model.
pub fn temporal_pyramid_pool<T: Scalar>(x: &Tensor<T>, p: &PyramidParams<T>) -> Tensor<T> {
    assert!(!p.branches.is_empty(), "pyramid needs at least one scale");
    let len = x.shape()[0];
    let mut parts = Vec::with_capacity(p.branches.len() + 1);
    for (scale, w, b) in &p.branches {
        let pooled = x.avg_pool1d(*scale);
        let projected = linear(&pooled, w, b);
        parts.push(projected.upsample_nearest(len));
    }
    parts.push(x.clone());
    linear(&Tensor::concat_cols(&parts), &p.w_fuse, &p.b_fuse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
    }

    fn rand_attention(rng: &mut ChaCha8Rng, d_model: usize, n_heads: usize) -> AttentionParams<f64> {
        let d_head = d_model / n_heads;
        let heads = (0..n_heads)
            .map(|_| HeadParams {
                w_q: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_q: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
                w_k: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_k: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
                w_v: Tensor::param(vec![d_model, d_head], rand_vec(rng, d_model * d_head, 0.5)),
                b_v: Tensor::param(vec![d_head], rand_vec(rng, d_head, 0.1)),
            })
            .collect();
        AttentionParams {
            heads,
            w_out: Tensor::param(vec![d_model, d_model], rand_vec(rng, d_model * d_model, 0.5)),
            b_out: Tensor::param(vec![d_model], rand_vec(rng, d_model, 0.1)),
        }
    }

    #[test]
    fn pe_row_zero_alternates() {
        let pe = sinusoidal_pe::<f64>(3, 6);
        let row0 = &pe.to_vec()[0..6];
        assert_eq!(row0, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pe_entries_bounded() {
        let pe = sinusoidal_pe::<f64>(480, 128);
        assert!(pe.to_vec().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn pe_position_one_first_column() {
        let pe = sinusoidal_pe::<f64>(2, 4);
        let v = pe.to_vec();
        assert!((v[4] - 1f64.sin()).abs() < 1e-12); // PE[1,0] = sin(1)
        assert!((v[4] - 0.841471).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "even d_model")]
    fn pe_odd_width_panics() {
        sinusoidal_pe::<f64>(4, 5);
    }

    #[test]
    fn attention_single_row_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = rand_attention(&mut rng, 4, 2);
        let x = Tensor::from_vec(vec![1, 4], rand_vec(&mut rng, 4, 1.0));
        let (out, maps) = multi_head_attention_with_maps(&x, &p);
        for m in &maps {
            assert_eq!(m.shape(), &[1, 1]);
            assert_eq!(m.item(), 1.0);
        }
        assert_eq!(out.shape(), &[1, 4]);
    }

    #[test]
    fn attention_identical_rows_give_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_attention(&mut rng, 6, 2);
        let row = rand_vec(&mut rng, 6, 1.0);
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&row);
        }
        let x = Tensor::from_vec(vec![5, 6], data);
        let out = multi_head_attention(&x, &p).to_vec();
        for r in 1..5 {
            for j in 0..6 {
                assert!((out[r * 6 + j] - out[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = rand_attention(&mut rng, 8, 2);
        let x = Tensor::from_vec(vec![6, 8], rand_vec(&mut rng, 48, 2.0));
        let (_, maps) = multi_head_attention_with_maps(&x, &p);
        for m in maps {
            let mv = m.to_vec();
            for r in 0..6 {
                let s: f64 = mv[r * 6..(r + 1) * 6].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
                assert!(mv[r * 6..(r + 1) * 6].iter().all(|&w| w >= 0.0));
            }
        }
    }

    fn zeroed_residual_block(rng: &mut ChaCha8Rng, d_model: usize, d_ff: usize) -> BlockParams<f64> {
        let mut attn = rand_attention(rng, d_model, 2);
        attn.w_out = Tensor::param(vec![d_model, d_model], vec![0.0; d_model * d_model]);
        attn.b_out = Tensor::param(vec![d_model], vec![0.0; d_model]);
        BlockParams {
            attn,
            w_ff1: Tensor::param(vec![d_model, d_ff], rand_vec(rng, d_model * d_ff, 0.5)),
            b_ff1: Tensor::param(vec![d_ff], rand_vec(rng, d_ff, 0.1)),
            w_ff2: Tensor::param(vec![d_ff, d_model], vec![0.0; d_ff * d_model]),
            b_ff2: Tensor::param(vec![d_model], vec![0.0; d_model]),
            ln1_gamma: Tensor::param(vec![d_model], vec![1.0; d_model]),
            ln1_beta: Tensor::param(vec![d_model], vec![0.0; d_model]),
            ln2_gamma: Tensor::param(vec![d_model], vec![1.0; d_model]),
            ln2_beta: Tensor::param(vec![d_model], vec![0.0; d_model]),
        }
    }

    #[test]
    fn block_is_identity_with_zero_residual_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = zeroed_residual_block(&mut rng, 4, 8);
        let x = Tensor::from_vec(vec![6, 4], rand_vec(&mut rng, 24, 3.0));
        let y = transformer_block(&x, &p, None);
        assert_eq!(x.to_vec(), y.to_vec()); // bitwise
    }

    #[test]
    fn block_preserves_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (l, d) in [(4usize, 8usize), (480, 128)] {
            let p = zeroed_residual_block(&mut rng, d, 2 * d);
            let x = Tensor::from_vec(vec![l, d], rand_vec(&mut rng, l * d, 1.0));
            assert_eq!(transformer_block(&x, &p, None).shape(), &[l, d]);
        }
    }

    #[test]
    fn pyramid_widths_cover_d_model() {
        assert_eq!(pyramid_branch_widths(128, 4), vec![32, 32, 32, 32]);
        assert_eq!(pyramid_branch_widths(32, 3), vec![10, 10, 12]);
        assert_eq!(pyramid_branch_widths(8, 2), vec![4, 4]);
    }

    fn rand_pyramid(rng: &mut ChaCha8Rng, d_model: usize, scales: &[usize]) -> PyramidParams<f64> {
        let widths = pyramid_branch_widths(d_model, scales.len());
        let branches = scales
            .iter()
            .zip(&widths)
            .map(|(&s, &w)| {
                (
                    s,
                    Tensor::param(vec![d_model, w], rand_vec(rng, d_model * w, 0.5)),
                    Tensor::param(vec![w], rand_vec(rng, w, 0.1)),
                )
            })
            .collect();
        PyramidParams {
            branches,
            w_fuse: Tensor::param(vec![2 * d_model, d_model], rand_vec(rng, 2 * d_model * d_model, 0.3)),
            b_fuse: Tensor::param(vec![d_model], rand_vec(rng, d_model, 0.1)),
        }
    }

    #[test]
    fn pyramid_constant_input_gives_constant_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = rand_pyramid(&mut rng, 6, &[1, 2, 4]);
        let row = rand_vec(&mut rng, 6, 1.0);
        let mut data = Vec::new();
        for _ in 0..8 {
            data.extend_from_slice(&row);
        }
        let x = Tensor::from_vec(vec![8, 6], data);
        let out = temporal_pyramid_pool(&x, &p).to_vec();
        for r in 1..8 {
            for j in 0..6 {
                assert!((out[r * 6 + j] - out[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pyramid_scale_one_identity_composition() {
        // scales={1}, projection = identity, fusion selects the raw branch.
        let d = 3;
        let mut id = vec![0.0; d * d];
        for i in 0..d {
            id[i * d + i] = 1.0;
        }
        let mut fuse = vec![0.0; 2 * d * d];
        for i in 0..d {
            fuse[(d + i) * d + i] = 1.0; // pick the raw-x half
        }
        let p = PyramidParams {
            branches: vec![(
                1,
                Tensor::from_vec(vec![d, d], id),
                Tensor::from_vec(vec![d], vec![0.0; d]),
            )],
            w_fuse: Tensor::from_vec(vec![2 * d, d], fuse),
            b_fuse: Tensor::from_vec(vec![d], vec![0.0; d]),
        };
        let x = Tensor::from_vec(vec![4, 3], (0..12).map(|i| i as f64).collect());
        assert_eq!(temporal_pyramid_pool(&x, &p).to_vec(), x.to_vec());
    }

    #[test]
    fn pyramid_output_length_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for l in [1usize, 3, 8, 17, 64] {
            let p = rand_pyramid(&mut rng, 4, &[1, 2]);
            let x = Tensor::from_vec(vec![l, 4], rand_vec(&mut rng, l * 4, 1.0));
            assert_eq!(temporal_pyramid_pool(&x, &p).shape(), &[l, 4]);
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut d = Dropout { rate: 0.0, rng: ChaCha8Rng::seed_from_u64(1) };
        let x = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.apply(&x).to_vec(), x.to_vec());
    }
}
