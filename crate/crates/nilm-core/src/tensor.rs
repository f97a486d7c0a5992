//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! The engine covers exactly the operations the disaggregation model needs:
//! matmul, elementwise ops, softmax, layer norm, same-padded 1-D convolution,
//! average pooling, nearest upsampling, and reductions. Tensors are handles
//! into a dynamically built tape; calling [`Tensor::backward`] on a scalar
//! walks the tape in reverse topological order and accumulates gradients
//! into every reachable tensor that requires them.
//!
//! Storage is flat row-major with no views; slices copy. Training runs in
//! `f32`, verification (finite-difference checks) in `f64`.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of the engine. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + 'static
{
}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lossless-enough f64 → T conversion of constants.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable")
}

type BackwardFn<T> = Box<dyn Fn(&[T])>;

struct Node<T: Scalar> {
    data: RefCell<Vec<T>>,
    shape: Vec<usize>,
    grad: RefCell<Option<Vec<T>>>,
    /// Leaf parameter flag: gradient is retained for this tensor.
    requires_grad: bool,
    /// True when this node or any ancestor requires a gradient; constants
    /// and subgraphs of constants are skipped during backward.
    needs_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// A handle to a tape node. Cloning is cheap (reference counted).
pub struct Tensor<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    // ── Constructors ────────────────────────────────────────────────

    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor(Rc::new(Node {
            data: RefCell::new(data),
            shape,
            grad: RefCell::new(None),
            requires_grad: false,
            needs_grad: false,
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Leaf tensor that participates in gradient accumulation.
    pub fn param(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(numel(&shape), data.len(), "shape/data mismatch");
        Tensor(Rc::new(Node {
            data: RefCell::new(data),
            shape,
            grad: RefCell::new(None),
            requires_grad: true,
            needs_grad: true,
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor::from_vec(shape, vec![T::zero(); n])
    }

    pub fn scalar(x: T) -> Self {
        Tensor::from_vec(vec![1], vec![x])
    }

    fn from_op(shape: Vec<usize>, data: Vec<T>, parents: Vec<Tensor<T>>, bf: BackwardFn<T>) -> Self {
        let needs = parents.iter().any(|p| p.0.needs_grad);
        Tensor(Rc::new(Node {
            data: RefCell::new(data),
            shape,
            grad: RefCell::new(None),
            requires_grad: false,
            needs_grad: needs,
            parents,
            backward: if needs { Some(bf) } else { None },
        }))
    }

    // ── Accessors ───────────────────────────────────────────────────

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor {:?}", self.0.shape);
        self.0.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Populated gradient, if any. Present after a backward pass for every
    /// tensor with `requires_grad`.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrite the stored values in place (optimizer step). Length must match.
    pub fn set_data(&self, new: &[T]) {
        let mut d = self.0.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    /// Add a contribution into the stored gradient. Used by the optimizer's
    /// clipping path and by tests that seed gradients by hand.
    pub fn accumulate_into(&self, contrib: &[T]) {
        assert_eq!(contrib.len(), self.len(), "gradient length mismatch");
        let mut g = self.0.grad.borrow_mut();
        let g = g.get_or_insert_with(|| vec![T::zero(); self.len()]);
        for (gi, ci) in g.iter_mut().zip(contrib) {
            *gi = *gi + *ci;
        }
    }

    fn accumulate(&self, contrib: &[T]) {
        if !self.0.needs_grad {
            return;
        }
        let mut g = self.0.grad.borrow_mut();
        let g = g.get_or_insert_with(|| vec![T::zero(); self.len()]);
        for (gi, ci) in g.iter_mut().zip(contrib) {
            *gi = *gi + *ci;
        }
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients accumulate; call
    /// [`Tensor::zero_grad`] on parameters between steps.
    pub fn backward(&self) {
        assert_eq!(
            self.len(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.0.shape
        );
        // Iterative post-order DFS: children before parents in `order`.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashSet<*const Node<T>> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        while let Some((node, child_idx)) = stack.pop() {
            let ptr = Rc::as_ptr(&node.0);
            if child_idx == 0 {
                if visited.contains(&ptr) {
                    continue;
                }
                visited.insert(ptr);
            }
            if child_idx < node.0.parents.len() {
                let next = node.0.parents[child_idx].clone();
                stack.push((node, child_idx + 1));
                if !visited.contains(&Rc::as_ptr(&next.0)) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        self.accumulate_seed();
        for node in order.iter().rev() {
            if let Some(bf) = &node.0.backward {
                let g = node.0.grad.borrow();
                if let Some(g) = g.as_ref() {
                    bf(g);
                }
            }
        }
    }

    fn accumulate_seed(&self) {
        let mut g = self.0.grad.borrow_mut();
        let g = g.get_or_insert_with(|| vec![T::zero(); 1]);
        g[0] = g[0] + T::one();
    }

    // ── Elementwise ─────────────────────────────────────────────────

    fn binary_same_shape(
        &self,
        other: &Tensor<T>,
        op: &str,
        f: impl Fn(T, T) -> T,
        bf: BackwardFn<T>,
    ) -> Tensor<T> {
        assert_eq!(
            self.0.shape, other.0.shape,
            "{op} shape mismatch: {:?} vs {:?}",
            self.0.shape, other.0.shape
        );
        let out: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone(), other.clone()],
            bf,
        )
    }

    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        let (a, b) = (self.clone(), other.clone());
        self.binary_same_shape(
            other,
            "add",
            |x, y| x + y,
            Box::new(move |g| {
                a.accumulate(g);
                b.accumulate(g);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        let (a, b) = (self.clone(), other.clone());
        self.binary_same_shape(
            other,
            "sub",
            |x, y| x - y,
            Box::new(move |g| {
                a.accumulate(g);
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                b.accumulate(&neg);
            }),
        )
    }

    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (a, b) = (self.clone(), other.clone());
        let (av, bv) = (self.to_vec(), other.to_vec());
        self.binary_same_shape(
            other,
            "mul",
            |x, y| x * y,
            Box::new(move |g| {
                let da: Vec<T> = g.iter().zip(&bv).map(|(&gi, &bi)| gi * bi).collect();
                a.accumulate(&da);
                let db: Vec<T> = g.iter().zip(&av).map(|(&gi, &ai)| gi * ai).collect();
                b.accumulate(&db);
            }),
        )
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        let a = self.clone();
        let out: Vec<T> = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let da: Vec<T> = g.iter().map(|&gi| gi * c).collect();
                a.accumulate(&da);
            }),
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        let a = self.clone();
        let xv = self.to_vec();
        let out: Vec<T> = xv.iter().map(|&x| x.max(T::zero())).collect();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let da: Vec<T> = g
                    .iter()
                    .zip(&xv)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                    .collect();
                a.accumulate(&da);
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let a = self.clone();
        let out: Vec<T> = self.data().iter().map(|&x| sigmoid_val(x)).collect();
        let sv = out.clone();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let da: Vec<T> = g
                    .iter()
                    .zip(&sv)
                    .map(|(&gi, &s)| gi * s * (T::one() - s))
                    .collect();
                a.accumulate(&da);
            }),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor<T> {
        let a = self.clone();
        let xv = self.to_vec();
        let c: T = lit(0.797_884_560_802_865_4); // sqrt(2/pi)
        let k: T = lit(0.044715);
        let half: T = lit(0.5);
        let out: Vec<T> = xv
            .iter()
            .map(|&x| {
                let u = c * (x + k * x * x * x);
                half * x * (T::one() + u.tanh())
            })
            .collect();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let three: T = lit(3.0);
                let da: Vec<T> = g
                    .iter()
                    .zip(&xv)
                    .map(|(&gi, &x)| {
                        let u = c * (x + k * x * x * x);
                        let t = u.tanh();
                        let du = c * (T::one() + three * k * x * x);
                        let d = half * (T::one() + t) + half * x * (T::one() - t * t) * du;
                        gi * d
                    })
                    .collect();
                a.accumulate(&da);
            }),
        )
    }

    // ── Matrix ops ──────────────────────────────────────────────────

    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        let (m, k) = dims2(self.shape(), "matmul lhs");
        let (k2, n) = dims2(other.shape(), "matmul rhs");
        assert_eq!(
            k, k2,
            "matmul shape mismatch: {:?} x {:?}",
            self.0.shape, other.0.shape
        );
        let av = self.to_vec();
        let bv = other.to_vec();
        let out = matmul_raw(&av, &bv, m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                if a.0.needs_grad {
                    // dA = dC · Bᵀ
                    a.accumulate(&matmul_nt(g, &bv, m, n, k));
                }
                if b.0.needs_grad {
                    // dB = Aᵀ · dC
                    b.accumulate(&matmul_tn(&av, g, m, k, n));
                }
            }),
        )
    }

    pub fn transpose(&self) -> Tensor<T> {
        let (r, c) = dims2(self.shape(), "transpose");
        let src = self.data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        drop(src);
        let a = self.clone();
        Tensor::from_op(
            vec![c, r],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut da = vec![T::zero(); r * c];
                for j in 0..c {
                    for i in 0..r {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                a.accumulate(&da);
            }),
        )
    }

    /// Row-broadcast bias add: `[r,c] + [c]`.
    pub fn add_bias(&self, bias: &Tensor<T>) -> Tensor<T> {
        let (r, c) = dims2(self.shape(), "add_bias input");
        assert_eq!(
            bias.shape(),
            &[c],
            "add_bias shape mismatch: {:?} + {:?}",
            self.0.shape,
            bias.0.shape
        );
        let bv = bias.to_vec();
        let out: Vec<T> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % c])
            .collect();
        let (a, b) = (self.clone(), bias.clone());
        Tensor::from_op(
            vec![r, c],
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                a.accumulate(g);
                if b.0.needs_grad {
                    let mut db = vec![T::zero(); c];
                    for (i, &gi) in g.iter().enumerate() {
                        db[i % c] = db[i % c] + gi;
                    }
                    b.accumulate(&db);
                }
            }),
        )
    }

    // ── Softmax / layer norm ────────────────────────────────────────

    /// Softmax along the last axis, max-subtracted for stability.
    pub fn softmax(&self) -> Tensor<T> {
        let shape = self.0.shape.clone();
        let n = *shape.last().expect("softmax on 0-d tensor");
        assert!(n >= 1);
        let rows = self.len() / n;
        let src = self.to_vec();
        let mut out = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mx = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - mx).exp();
                out[r * n + j] = e;
                sum = sum + e;
            }
            for j in 0..n {
                out[r * n + j] = out[r * n + j] / sum;
            }
        }
        let yv = out.clone();
        let a = self.clone();
        Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut da = vec![T::zero(); yv.len()];
                for r in 0..rows {
                    let base = r * n;
                    let mut dot = T::zero();
                    for j in 0..n {
                        dot = dot + g[base + j] * yv[base + j];
                    }
                    for j in 0..n {
                        da[base + j] = yv[base + j] * (g[base + j] - dot);
                    }
                }
                a.accumulate(&da);
            }),
        )
    }

    /// Per-row layer normalization with affine transform.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Tensor<T> {
        let (rows, c) = dims2(self.shape(), "layer_norm input");
        assert_eq!(gamma.shape(), &[c], "layer_norm gamma shape {:?}, want [{c}]", gamma.shape());
        assert_eq!(beta.shape(), &[c], "layer_norm beta shape {:?}, want [{c}]", beta.shape());
        assert!(eps > T::zero(), "layer_norm eps must be positive");
        let src = self.to_vec();
        let gv = gamma.to_vec();
        let bv = beta.to_vec();
        let cn: T = lit(c as f64);
        let mut out = vec![T::zero(); src.len()];
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &src[r * c..(r + 1) * c];
            let mean = row.iter().fold(T::zero(), |s, &x| s + x) / cn;
            let var = row
                .iter()
                .fold(T::zero(), |s, &x| s + (x - mean) * (x - mean))
                / cn;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..c {
                let xh = (row[j] - mean) * istd;
                xhat[r * c + j] = xh;
                out[r * c + j] = gv[j] * xh + bv[j];
            }
        }
        let (a, gp, bp) = (self.clone(), gamma.clone(), beta.clone());
        Tensor::from_op(
            vec![rows, c],
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g| {
                if gp.0.needs_grad {
                    let mut dg = vec![T::zero(); c];
                    for r in 0..rows {
                        for j in 0..c {
                            dg[j] = dg[j] + g[r * c + j] * xhat[r * c + j];
                        }
                    }
                    gp.accumulate(&dg);
                }
                if bp.0.needs_grad {
                    let mut db = vec![T::zero(); c];
                    for r in 0..rows {
                        for j in 0..c {
                            db[j] = db[j] + g[r * c + j];
                        }
                    }
                    bp.accumulate(&db);
                }
                if a.0.needs_grad {
                    let mut da = vec![T::zero(); rows * c];
                    for r in 0..rows {
                        let base = r * c;
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for j in 0..c {
                            let dxh = g[base + j] * gv[j];
                            sum_dxh = sum_dxh + dxh;
                            sum_dxh_xh = sum_dxh_xh + dxh * xhat[base + j];
                        }
                        for j in 0..c {
                            let dxh = g[base + j] * gv[j];
                            da[base + j] = inv_std[r]
                                * (dxh - sum_dxh / cn - xhat[base + j] * sum_dxh_xh / cn);
                        }
                    }
                    a.accumulate(&da);
                }
            }),
        )
    }

    // ── Convolution / pooling ───────────────────────────────────────

    /// Same-padded 1-D convolution. `self` is `[L, c_in]`, `kernel` is
    /// `[k, c_in, c_out]` (flat), `bias` is `[c_out]`. Output is `[L, c_out]`.
    pub fn conv1d_same(&self, kernel: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
        let (l, cin) = dims2(self.shape(), "conv1d input");
        let ks = kernel.shape();
        assert_eq!(ks.len(), 3, "conv1d kernel must be [k, c_in, c_out], got {:?}", ks);
        let (k, kcin, cout) = (ks[0], ks[1], ks[2]);
        assert!(k % 2 == 1, "conv1d kernel size must be odd, got {k}");
        assert_eq!(kcin, cin, "conv1d channel mismatch: input {:?}, kernel {:?}", self.shape(), ks);
        assert_eq!(bias.shape(), &[cout], "conv1d bias shape {:?}, want [{cout}]", bias.shape());
        let pad = (k - 1) / 2;
        let xv = self.to_vec();
        let wv = kernel.to_vec();
        let bv = bias.to_vec();
        let mut out = vec![T::zero(); l * cout];
        for t in 0..l {
            for co in 0..cout {
                let mut acc = bv[co];
                for j in 0..k {
                    let src = t as isize + j as isize - pad as isize;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    let src = src as usize;
                    for ci in 0..cin {
                        acc = acc + xv[src * cin + ci] * wv[(j * cin + ci) * cout + co];
                    }
                }
                out[t * cout + co] = acc;
            }
        }
        let (a, wp, bp) = (self.clone(), kernel.clone(), bias.clone());
        Tensor::from_op(
            vec![l, cout],
            out,
            vec![self.clone(), kernel.clone(), bias.clone()],
            Box::new(move |g| {
                if bp.0.needs_grad {
                    let mut db = vec![T::zero(); cout];
                    for t in 0..l {
                        for co in 0..cout {
                            db[co] = db[co] + g[t * cout + co];
                        }
                    }
                    bp.accumulate(&db);
                }
                if wp.0.needs_grad {
                    let mut dw = vec![T::zero(); k * cin * cout];
                    for t in 0..l {
                        for j in 0..k {
                            let src = t as isize + j as isize - pad as isize;
                            if src < 0 || src >= l as isize {
                                continue;
                            }
                            let src = src as usize;
                            for ci in 0..cin {
                                let x = xv[src * cin + ci];
                                for co in 0..cout {
                                    let idx = (j * cin + ci) * cout + co;
                                    dw[idx] = dw[idx] + x * g[t * cout + co];
                                }
                            }
                        }
                    }
                    wp.accumulate(&dw);
                }
                if a.0.needs_grad {
                    let mut da = vec![T::zero(); l * cin];
                    for t in 0..l {
                        for j in 0..k {
                            let src = t as isize + j as isize - pad as isize;
                            if src < 0 || src >= l as isize {
                                continue;
                            }
                            let src = src as usize;
                            for ci in 0..cin {
                                let mut acc = T::zero();
                                for co in 0..cout {
                                    acc = acc + wv[(j * cin + ci) * cout + co] * g[t * cout + co];
                                }
                                da[src * cin + ci] = da[src * cin + ci] + acc;
                            }
                        }
                    }
                    a.accumulate(&da);
                }
            }),
        )
    }

    /// Segment-mean pooling along rows; a partial final segment is averaged
    /// over its actual length.
    pub fn avg_pool1d(&self, scale: usize) -> Tensor<T> {
        assert!(scale >= 1, "avg_pool1d scale must be >= 1, got {scale}");
        let (l, d) = dims2(self.shape(), "avg_pool1d input");
        let out_len = l.div_ceil(scale);
        let xv = self.to_vec();
        let mut out = vec![T::zero(); out_len * d];
        let mut seg_lens = vec![0usize; out_len];
        for o in 0..out_len {
            let lo = o * scale;
            let hi = (lo + scale).min(l);
            seg_lens[o] = hi - lo;
            let inv: T = lit(1.0 / (hi - lo) as f64);
            for j in 0..d {
                let mut s = T::zero();
                for t in lo..hi {
                    s = s + xv[t * d + j];
                }
                out[o * d + j] = s * inv;
            }
        }
        let a = self.clone();
        Tensor::from_op(
            vec![out_len, d],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut da = vec![T::zero(); l * d];
                for o in 0..out_len {
                    let lo = o * scale;
                    let hi = (lo + scale).min(l);
                    let inv: T = lit(1.0 / seg_lens[o] as f64);
                    for t in lo..hi {
                        for j in 0..d {
                            da[t * d + j] = da[t * d + j] + g[o * d + j] * inv;
                        }
                    }
                }
                a.accumulate(&da);
            }),
        )
    }

    /// Nearest-neighbor upsampling of rows to `target_len`; row `i` of the
    /// output copies input row `floor(i*m/target_len)`.
    pub fn upsample_nearest(&self, target_len: usize) -> Tensor<T> {
        let (m, d) = dims2(self.shape(), "upsample input");
        assert!(m >= 1, "upsample_nearest on empty input");
        let xv = self.to_vec();
        let mut out = vec![T::zero(); target_len * d];
        let mut src_row = vec![0usize; target_len];
        for i in 0..target_len {
            let s = i * m / target_len;
            src_row[i] = s;
            out[i * d..(i + 1) * d].copy_from_slice(&xv[s * d..(s + 1) * d]);
        }
        let a = self.clone();
        Tensor::from_op(
            vec![target_len, d],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut da = vec![T::zero(); m * d];
                for i in 0..target_len {
                    let s = src_row[i];
                    for j in 0..d {
                        da[s * d + j] = da[s * d + j] + g[i * d + j];
                    }
                }
                a.accumulate(&da);
            }),
        )
    }

    /// Column-wise concatenation of equal-row-count matrices.
    pub fn concat_cols(parts: &[Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat_cols of no tensors");
        let r = dims2(parts[0].shape(), "concat_cols").0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pr, pc) = dims2(p.shape(), "concat_cols part");
                assert_eq!(pr, r, "concat_cols row mismatch: {:?} vs {r} rows", p.shape());
                pc
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); r * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pv = p.data();
            for i in 0..r {
                out[i * total + off..i * total + off + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let handles: Vec<Tensor<T>> = parts.to_vec();
        let bw_handles = handles.clone();
        let bw_widths = widths.clone();
        Tensor::from_op(
            vec![r, total],
            out,
            handles,
            Box::new(move |g| {
                let mut off = 0;
                for (p, &w) in bw_handles.iter().zip(&bw_widths) {
                    if p.0.needs_grad {
                        let mut dp = vec![T::zero(); r * w];
                        for i in 0..r {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + off..i * total + off + w]);
                        }
                        p.accumulate(&dp);
                    }
                    off += w;
                }
            }),
        )
    }

    // ── Reductions / losses ─────────────────────────────────────────

    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let n = self.len();
        let a = self.clone();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |g| {
                a.accumulate(&vec![g[0]; n]);
            }),
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.len();
        self.sum().scale(lit(1.0 / n as f64))
    }

    /// Numerically stable binary cross-entropy from logits, elementwise.
    /// `targets` is treated as constant.
    pub fn bce_with_logits(&self, targets: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            self.0.shape, targets.0.shape,
            "bce_with_logits shape mismatch: {:?} vs {:?}",
            self.0.shape, targets.0.shape
        );
        let zv = self.to_vec();
        let yv = targets.to_vec();
        let out: Vec<T> = zv
            .iter()
            .zip(&yv)
            .map(|(&z, &y)| z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln())
            .collect();
        let a = self.clone();
        Tensor::from_op(
            self.0.shape.clone(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let da: Vec<T> = g
                    .iter()
                    .zip(zv.iter().zip(&yv))
                    .map(|(&gi, (&z, &y))| gi * (sigmoid_val(z) - y))
                    .collect();
                a.accumulate(&da);
            }),
        )
    }
}

#[inline]
fn sigmoid_val<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn dims2(shape: &[usize], what: &str) -> (usize, usize) {
    assert_eq!(shape.len(), 2, "{what} expects a 2-d tensor, got {:?}", shape);
    (shape[0], shape[1])
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aip * brow[j];
            }
        }
    }
    out
}

/// `a[m,n] · b[k,n]ᵀ -> [m,k]`
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut s = T::zero();
            for p in 0..n {
                s = s + arow[p] * brow[p];
            }
            out[i * k + j] = s;
        }
    }
    out
}

/// `a[m,k]ᵀ · b[m,n] -> [k,n]`
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aip * brow[j];
            }
        }
    }
    out
}

/// Maximum relative error between the analytic gradient of `f` at `x` and
/// central finite differences with step `eps`. Denominator is
/// `max(1, |analytic|)` per coordinate. Run at `f64`.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> T
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Tensor<T>,
{
    x.zero_grad();
    let loss = f(x);
    loss.backward();
    let analytic = x.grad().expect("grad_check: x received no gradient");
    let n = x.len();
    let mut max_err = T::zero();
    let two = lit::<T>(2.0);
    for i in 0..n {
        let orig = x.data()[i];
        poke(x, i, orig + eps);
        let fp = f(x).item();
        poke(x, i, orig - eps);
        let fm = f(x).item();
        poke(x, i, orig);
        let numeric = (fp - fm) / (two * eps);
        let denom = T::one().max(analytic[i].abs());
        let err = (analytic[i] - numeric).abs() / denom;
        max_err = max_err.max(err);
    }
    max_err
}

fn poke<T: Scalar>(x: &Tensor<T>, i: usize, v: T) {
    x.0.data.borrow_mut()[i] = v;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data)
    }

    #[test]
    fn matmul_identity() {
        let a = t64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let id = t64(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.matmul(&id).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_case() {
        let a = t64(vec![1, 2], vec![1.0, 2.0]);
        let b = t64(vec![2, 1], vec![3.0, 4.0]);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.item(), 11.0);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_mismatch_panics() {
        let a = t64(vec![2, 3], vec![0.0; 6]);
        let b = t64(vec![2, 2], vec![0.0; 4]);
        a.matmul(&b);
    }

    #[test]
    fn elementwise_basics() {
        let a = t64(vec![2], vec![1.0, 2.0]);
        let b = t64(vec![2], vec![3.0, 4.0]);
        assert_eq!(a.add(&b).to_vec(), vec![4.0, 6.0]);
        let x = t64(vec![3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().to_vec(), vec![0.0, 0.0, 2.0]);
        let z = t64(vec![1], vec![0.0]);
        assert_eq!(z.sigmoid().item(), 0.5);
    }

    #[test]
    fn softmax_cases() {
        let x = t64(vec![1, 2], vec![0.0, 0.0]);
        assert_eq!(x.softmax().to_vec(), vec![0.5, 0.5]);
        let single = t64(vec![1, 1], vec![123.456]);
        assert_eq!(single.softmax().item(), 1.0);
        let logs = t64(vec![1, 2], vec![1.0f64.ln(), 3.0f64.ln()]);
        let y = logs.softmax().to_vec();
        assert!((y[0] - 0.25).abs() < 1e-12 && (y[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t64(vec![3, 4], (0..12).map(|i| (i as f64) * 0.7 - 3.0).collect());
        let y = x.softmax();
        let yd = y.to_vec();
        for r in 0..3 {
            let s: f64 = yd[r * 4..(r + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(yd[r * 4..(r + 1) * 4].iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn layer_norm_constant_row() {
        let x = t64(vec![1, 4], vec![5.0; 4]);
        let gamma = t64(vec![4], vec![1.0; 4]);
        let beta = t64(vec![4], vec![0.0; 4]);
        let y = x.layer_norm(&gamma, &beta, 1e-5);
        assert!(y.to_vec().iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn layer_norm_already_normalized() {
        let x = t64(vec![1, 2], vec![1.0, -1.0]);
        let gamma = t64(vec![2], vec![1.0; 2]);
        let beta = t64(vec![2], vec![0.0; 2]);
        let y = x.layer_norm(&gamma, &beta, 1e-12).to_vec();
        assert!((y[0] - 1.0).abs() < 1e-6 && (y[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = t64(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let w = t64(vec![1, 1, 1], vec![1.0]);
        let b = t64(vec![1], vec![0.0]);
        assert_eq!(x.conv1d_same(&w, &b).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv1d_averaging_kernel() {
        let x = t64(vec![3, 1], vec![1.0, 2.0, 3.0]);
        let w = t64(vec![3, 1, 1], vec![1.0 / 3.0; 3]);
        let b = t64(vec![1], vec![0.0]);
        let y = x.conv1d_same(&w, &b).to_vec();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!((y[1] - 2.0).abs() < 1e-12);
        assert!((y[2] - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "kernel size must be odd")]
    fn conv1d_even_kernel_panics() {
        let x = t64(vec![4, 1], vec![0.0; 4]);
        let w = t64(vec![2, 1, 1], vec![0.0; 2]);
        let b = t64(vec![1], vec![0.0]);
        x.conv1d_same(&w, &b);
    }

    #[test]
    fn avg_pool_cases() {
        let x = t64(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.avg_pool1d(2).to_vec(), vec![1.5, 3.5]);
        assert_eq!(x.avg_pool1d(1).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        // partial final segment: [1,2,3] at scale 2 -> [1.5, 3]
        let y = t64(vec![3, 1], vec![1.0, 2.0, 3.0]);
        assert_eq!(y.avg_pool1d(2).to_vec(), vec![1.5, 3.0]);
        let c = t64(vec![6, 1], vec![7.0; 6]);
        assert!(c.avg_pool1d(4).to_vec().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn upsample_cases() {
        let x = t64(vec![2, 1], vec![1.0, 2.0]);
        assert_eq!(x.upsample_nearest(4).to_vec(), vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(x.upsample_nearest(2).to_vec(), vec![1.0, 2.0]);
        let s = t64(vec![1, 1], vec![5.0]);
        assert_eq!(s.upsample_nearest(3).to_vec(), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn pool_then_upsample_preserves_segment_means() {
        let x = t64(vec![8, 2], (0..16).map(|i| i as f64).collect());
        let y = x.avg_pool1d(2).upsample_nearest(8);
        let xv = x.to_vec();
        let yv = y.to_vec();
        for seg in 0..4 {
            for j in 0..2 {
                let mean = (xv[(2 * seg) * 2 + j] + xv[(2 * seg + 1) * 2 + j]) / 2.0;
                assert_eq!(yv[(2 * seg) * 2 + j], mean);
                assert_eq!(yv[(2 * seg + 1) * 2 + j], mean);
            }
        }
    }

    #[test]
    fn backward_sum_is_ones() {
        let x = Tensor::<f64>::param(vec![2, 3], vec![0.3; 6]);
        x.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn backward_sum_of_squares() {
        let x = Tensor::<f64>::param(vec![2], vec![1.0, 2.0]);
        x.mul(&x).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn backward_shared_subexpression_accumulates() {
        // f(x) = x*x + x  ->  f'(x) = 2x + 1
        let x = Tensor::<f64>::param(vec![2], vec![3.0, -1.5]);
        x.mul(&x).add(&x).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![7.0, -2.0]);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let x = Tensor::<f64>::param(vec![2], vec![1.0, 1.0]);
        x.sum().backward();
        x.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_non_scalar_panics() {
        let x = Tensor::<f64>::param(vec![2], vec![1.0, 2.0]);
        x.backward();
    }

    #[test]
    fn grad_check_sum_exact() {
        let x = Tensor::<f64>::param(vec![3], vec![0.1, -0.7, 2.0]);
        let err = grad_check(|x| x.sum(), &x, 1e-5);
        assert!(err < 1e-10, "err={err}");
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let x = Tensor::<f64>::param(vec![4], vec![0.5, -1.0, 2.0, 0.0]);
        let err = grad_check(|x| x.mul(x).sum(), &x, 1e-5);
        assert!(err < 1e-7, "err={err}");
    }

    #[test]
    fn gelu_gradient_at_fixed_points() {
        for &v in &[-2.0, -0.5, 0.0, 0.5, 2.0] {
            let x = Tensor::<f64>::param(vec![1], vec![v]);
            let err = grad_check(|x| x.gelu().sum(), &x, 1e-6);
            assert!(err < 1e-6, "gelu grad err {err} at x={v}");
        }
    }

    #[test]
    fn bce_with_logits_hand_value() {
        // logit 0, target 0 -> ln 2
        let z = Tensor::<f64>::from_vec(vec![1], vec![0.0]);
        let y = Tensor::<f64>::from_vec(vec![1], vec![0.0]);
        assert!((z.bce_with_logits(&y).item() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_extreme_logits_stay_finite() {
        let z = Tensor::<f64>::from_vec(vec![2], vec![500.0, -500.0]);
        let y = Tensor::<f64>::from_vec(vec![2], vec![1.0, 0.0]);
        let v = z.bce_with_logits(&y).to_vec();
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
}
