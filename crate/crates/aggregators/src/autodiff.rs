//! Minimal reverse-mode automatic differentiation over 2-D arrays.
//!
//! A [`Tape`] records one forward pass; every operation pushes a node holding
//! its value and a backward closure. Vectors are 1xK or Kx1 matrices and
//! scalars are 1x1, which keeps the op set small. Gradients flow only into
//! subgraphs rooted at parameter leaves; constants (bag embeddings, masks)
//! never allocate gradient buffers.
//!
//! Shape mismatches inside the engine are programmer errors and panic; the
//! public model API validates inputs before building a tape.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};

use crate::scalar::Scalar;

/// Handle to a tape node. Carries the shape so ops can check compatibility
/// without borrowing the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    pub rows: usize,
    pub cols: usize,
}

pub(crate) type BackFn<F> = Box<dyn Fn(&Array2<F>, &mut GradSink<F>)>;

struct Node<F: Scalar> {
    value: Arc<Array2<F>>,
    needs_grad: bool,
    back: Option<BackFn<F>>,
}

/// Gradient accumulator used during the reverse sweep.
pub struct GradSink<F: Scalar> {
    slots: Vec<Option<Array2<F>>>,
    needs: Vec<bool>,
}

impl<F: Scalar> GradSink<F> {
    /// Adds `g` to the gradient of `target`, skipping subgraphs that cannot
    /// reach a parameter.
    pub fn add(&mut self, target: Var, g: Array2<F>) {
        if !self.needs[target.id] {
            return;
        }
        debug_assert_eq!(g.dim(), (target.rows, target.cols));
        match &mut self.slots[target.id] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

pub struct Tape<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(128)),
        }
    }

    pub(crate) fn push(&self, value: Arc<Array2<F>>, needs_grad: bool, back: Option<BackFn<F>>) -> Var {
        let (rows, cols) = value.dim();
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            needs_grad,
            back,
        });
        Var { id, rows, cols }
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes.borrow()[v.id].needs_grad
    }

    /// Shared value of a node.
    pub fn value(&self, v: Var) -> Arc<Array2<F>> {
        Arc::clone(&self.nodes.borrow()[v.id].value)
    }

    pub fn scalar_value(&self, v: Var) -> F {
        assert_eq!((v.rows, v.cols), (1, 1), "scalar_value on non-scalar");
        self.nodes.borrow()[v.id].value[[0, 0]]
    }

    /// Differentiable leaf (a model parameter).
    pub fn param(&self, value: Arc<Array2<F>>) -> Var {
        self.push(value, true, None)
    }

    /// Non-differentiable leaf (inputs, masks, fixed matrices).
    pub fn constant(&self, value: Arc<Array2<F>>) -> Var {
        self.push(value, false, None)
    }

    pub fn constant_owned(&self, value: Array2<F>) -> Var {
        self.constant(Arc::new(value))
    }

    /// Reverse sweep from `loss` (must be 1x1). Returns gradients for
    /// `wanted` leaves, zero-filled where a leaf is unreachable.
    pub fn backward(&self, loss: Var, wanted: &[Var]) -> Vec<Array2<F>> {
        assert_eq!((loss.rows, loss.cols), (1, 1), "loss must be scalar");
        let nodes = self.nodes.borrow();
        let mut sink = GradSink {
            slots: (0..nodes.len()).map(|_| None).collect(),
            needs: nodes.iter().map(|n| n.needs_grad).collect(),
        };
        if sink.needs[loss.id] {
            sink.slots[loss.id] = Some(Array2::ones((1, 1)));
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = sink.slots[id].take() else {
                continue;
            };
            match &nodes[id].back {
                Some(back) => back(&g, &mut sink),
                None => sink.slots[id] = Some(g), // leaf: keep for collection
            }
        }
        wanted
            .iter()
            .map(|v| {
                sink.slots[v.id]
                    .take()
                    .unwrap_or_else(|| Array2::zeros((v.rows, v.cols)))
            })
            .collect()
    }

    // ----- basic arithmetic -------------------------------------------------

    /// Elementwise add; `b` may be the same shape, a 1xM row, an Nx1 column,
    /// or 1x1.
    pub fn add(&self, a: Var, b: Var) -> Var {
        self.broadcast_op(a, b, |x, y| x + y, BroadcastKind::Add)
    }

    /// Elementwise multiply with the same broadcast rules as [`Tape::add`].
    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.broadcast_op(a, b, |x, y| x * y, BroadcastKind::Mul)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let neg_b = self.scale(b, -1.0);
        self.add(a, neg_b)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let c_f = F::fl(c);
        let out = av.mapv(|x| x * c_f);
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(a, g.mapv(|x| x * c_f));
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Add a compile-time constant to every element.
    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let c_f = F::fl(c);
        let out = av.mapv(|x| x + c_f);
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(a, g.clone());
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "matmul {}x{} @ {}x{}", a.rows, a.cols, b.rows, b.cols);
        let av = self.value(a);
        let bv = self.value(b);
        let out = av.dot(&*bv);
        let needs_a = self.needs(a);
        let needs_b = self.needs(b);
        let needs = needs_a || needs_b;
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                if needs_a {
                    sink.add(a, g.dot(&bv.t()));
                }
                if needs_b {
                    sink.add(b, av.t().dot(g));
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    pub fn transpose(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.t().to_owned();
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(a, g.t().to_owned());
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    // ----- activations ------------------------------------------------------

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, |x| x.max(F::zero()), |y, g| if y > F::zero() { g } else { F::zero() })
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), |y, g| g * (F::one() - y * y))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid_scalar, |y, g| g * y * (F::one() - y))
    }

    /// Numerically stable `ln(1 + exp(x))`; backward uses the saved input.
    pub fn softplus(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.mapv(softplus_scalar);
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let av = Arc::clone(&av);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = g.clone();
                gi.zip_mut_with(&av, |gv, &xv| *gv = *gv * sigmoid_scalar(xv));
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Elementwise reciprocal.
    pub fn recip(&self, a: Var) -> Var {
        self.unary(a, |x| F::one() / x, |y, g| -g * y * y)
    }

    /// Unary op whose backward depends only on the output value.
    fn unary(&self, a: Var, f: impl Fn(F) -> F, df: impl Fn(F, F) -> F + 'static) -> Var {
        let av = self.value(a);
        let out = Arc::new(av.mapv(f));
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let out = Arc::clone(&out);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = g.clone();
                gi.zip_mut_with(&out, |gv, &yv| *gv = df(yv, *gv));
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(out, needs, back)
    }

    // ----- reductions -------------------------------------------------------

    pub fn sum_all(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = Array2::from_elem((1, 1), av.sum());
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(a, Array2::from_elem((a.rows, a.cols), g[[0, 0]]));
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Sum over rows -> 1xM.
    pub fn sum_rows(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.sum_axis(Axis(0)).insert_axis(Axis(0));
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                for mut row in gi.rows_mut() {
                    row.assign(&g.row(0));
                }
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Sum over columns -> Nx1.
    pub fn sum_cols(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.sum_axis(Axis(1)).insert_axis(Axis(1));
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                for (mut row, &gv) in gi.rows_mut().into_iter().zip(g.column(0)) {
                    row.fill(gv);
                }
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (a.rows * a.cols) as f64)
    }

    /// Maximum over all entries -> 1x1; ties resolve to the first element in
    /// row-major order.
    pub fn max_all(&self, a: Var) -> Var {
        let av = self.value(a);
        let mut best = (0usize, 0usize);
        let mut best_v = av[[0, 0]];
        for ((i, j), &v) in av.indexed_iter() {
            if v > best_v {
                best_v = v;
                best = (i, j);
            }
        }
        let out = Array2::from_elem((1, 1), best_v);
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                gi[[best.0, best.1]] = g[[0, 0]];
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    // ----- softmax family ---------------------------------------------------

    /// Softmax over an Nx1 column.
    pub fn softmax_col(&self, a: Var) -> Var {
        assert_eq!(a.cols, 1, "softmax_col expects Nx1");
        let av = self.value(a);
        let max = av.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut out = av.mapv(|x| (x - max).exp());
        let sum = out.sum();
        out.mapv_inplace(|x| x / sum);
        let out = Arc::new(out);
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let y = Arc::clone(&out);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let dot = g
                    .iter()
                    .zip(y.iter())
                    .fold(F::zero(), |acc, (&gv, &yv)| acc + gv * yv);
                let mut gi = g.clone();
                gi.zip_mut_with(&y, |gv, &yv| *gv = yv * (*gv - dot));
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(out, needs, back)
    }

    /// Row-wise softmax of an NxM matrix.
    pub fn softmax_rows(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = Arc::new(softmax_rows_value(&av));
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let y = Arc::clone(&out);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                sink.add(a, softmax_rows_backward(&y, g));
            }) as BackFn<F>
        });
        self.push(out, needs, back)
    }

    /// Fused `softmax_rows(scale * a @ b^T)`: never materializes the logits
    /// as a tape node, which matters for very long sequences.
    pub fn attn_scores(&self, a: Var, b: Var, scale: f64) -> Var {
        assert_eq!(a.cols, b.cols, "attn_scores dims");
        let av = self.value(a);
        let bv = self.value(b);
        let s = F::fl(scale);
        let mut logits = av.dot(&bv.t());
        logits.mapv_inplace(|x| x * s);
        let out = Arc::new(softmax_rows_value(&logits));
        drop(logits);
        let needs_a = self.needs(a);
        let needs_b = self.needs(b);
        let needs = needs_a || needs_b;
        let back: Option<BackFn<F>> = needs.then(|| {
            let y = Arc::clone(&out);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut dl = softmax_rows_backward(&y, g);
                dl.mapv_inplace(|x| x * s);
                if needs_a {
                    sink.add(a, dl.dot(&*bv));
                }
                if needs_b {
                    sink.add(b, dl.t().dot(&*av));
                }
            }) as BackFn<F>
        });
        self.push(out, needs, back)
    }

    // ----- structure ops ----------------------------------------------------

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = parts[0].cols;
        assert!(parts.iter().all(|p| p.cols == cols));
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows");
        let needs_any = parts.iter().any(|&p| self.needs(p));
        let parts_owned: Vec<Var> = parts.to_vec();
        let back: Option<BackFn<F>> = needs_any.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut start = 0;
                for &p in &parts_owned {
                    let slice = g.slice(s![start..start + p.rows, ..]).to_owned();
                    sink.add(p, slice);
                    start += p.rows;
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs_any, back)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        assert!(parts.iter().all(|p| p.rows == rows));
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols");
        let needs_any = parts.iter().any(|&p| self.needs(p));
        let parts_owned: Vec<Var> = parts.to_vec();
        let back: Option<BackFn<F>> = needs_any.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut start = 0;
                for &p in &parts_owned {
                    let slice = g.slice(s![.., start..start + p.cols]).to_owned();
                    sink.add(p, slice);
                    start += p.cols;
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs_any, back)
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= a.cols);
        let av = self.value(a);
        let out = av.slice(s![.., start..start + len]).to_owned();
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                gi.slice_mut(s![.., start..start + len]).assign(g);
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Row gather: `out[r] = a[idx[r]]`. Backward scatter-adds, so repeated
    /// indices (sequence squaring) accumulate correctly.
    pub fn gather_rows(&self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let av = self.value(a);
        let mut out = Array2::zeros((idx.len(), a.cols));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&av.row(i));
        }
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let idx = Arc::clone(&idx);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                for (r, &i) in idx.iter().enumerate() {
                    let mut target = gi.row_mut(i);
                    target += &g.row(r);
                }
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    /// Means of `m` near-equal contiguous row segments (landmark construction
    /// for the low-rank attention path).
    pub fn segment_mean_rows(&self, a: Var, m: usize) -> Var {
        assert!(m >= 1 && m <= a.rows);
        let bounds = segment_bounds(a.rows, m);
        let av = self.value(a);
        let mut out = Array2::zeros((m, a.cols));
        for (seg, &(lo, hi)) in bounds.iter().enumerate() {
            let mean = av
                .slice(s![lo..hi, ..])
                .mean_axis(Axis(0))
                .expect("non-empty segment");
            out.row_mut(seg).assign(&mean);
        }
        let needs = self.needs(a);
        let back: Option<BackFn<F>> = needs.then(|| {
            let bounds = bounds.clone();
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let mut gi = Array2::zeros((a.rows, a.cols));
                for (seg, &(lo, hi)) in bounds.iter().enumerate() {
                    let w = F::fl(1.0 / (hi - lo) as f64);
                    let grow = g.row(seg);
                    for r in lo..hi {
                        let mut t = gi.row_mut(r);
                        t.zip_mut_with(&grow, |tv, &gv| *tv = *tv + gv * w);
                    }
                }
                sink.add(a, gi);
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    // ----- normalization ----------------------------------------------------

    /// Row-wise layer normalization with learned 1xM gain and shift.
    pub fn layer_norm_rows(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        assert_eq!(gamma.cols, x.cols);
        assert_eq!(beta.cols, x.cols);
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let m = x.cols;
        let eps_f = F::fl(eps);
        let inv_m = F::fl(1.0 / m as f64);

        let mut xhat = Array2::zeros((x.rows, m));
        let mut inv_std = Array2::zeros((x.rows, 1));
        let mut out = Array2::zeros((x.rows, m));
        for r in 0..x.rows {
            let row = xv.row(r);
            let mu = row.sum() * inv_m;
            let var = row.fold(F::zero(), |acc, &v| acc + (v - mu) * (v - mu)) * inv_m;
            let istd = F::one() / (var + eps_f).sqrt();
            inv_std[[r, 0]] = istd;
            for c in 0..m {
                let xh = (row[c] - mu) * istd;
                xhat[[r, c]] = xh;
                out[[r, c]] = xh * gv[[0, c]] + bv[[0, c]];
            }
        }
        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);

        let needs_x = self.needs(x);
        let needs_g = self.needs(gamma);
        let needs_b = self.needs(beta);
        let needs = needs_x || needs_g || needs_b;
        let back: Option<BackFn<F>> = needs.then(|| {
            let xhat = Arc::clone(&xhat);
            let inv_std = Arc::clone(&inv_std);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                if needs_b {
                    sink.add(beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if needs_g {
                    let dgamma = (g * &*xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    sink.add(gamma, dgamma);
                }
                if needs_x {
                    let rows = g.nrows();
                    let m = g.ncols();
                    let inv_m = F::fl(1.0 / m as f64);
                    let mut gi = Array2::zeros((rows, m));
                    for r in 0..rows {
                        // dxhat = g * gamma
                        let mut sum_d = F::zero();
                        let mut sum_dx = F::zero();
                        for c in 0..m {
                            let d = g[[r, c]] * gv[[0, c]];
                            sum_d = sum_d + d;
                            sum_dx = sum_dx + d * xhat[[r, c]];
                        }
                        let istd = inv_std[[r, 0]];
                        for c in 0..m {
                            let d = g[[r, c]] * gv[[0, c]];
                            gi[[r, c]] = istd
                                * (d - sum_d * inv_m - xhat[[r, c]] * sum_dx * inv_m);
                        }
                    }
                    sink.add(x, gi);
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    // ----- losses -----------------------------------------------------------

    /// Binary cross-entropy on a single logit, stable for large |z|:
    /// `max(z,0) - z*y + ln(1 + exp(-|z|))`.
    pub fn bce_with_logit(&self, z: Var, label: f64) -> Var {
        assert_eq!((z.rows, z.cols), (1, 1), "bce expects a scalar logit");
        let zv = self.scalar_value(z);
        let y = F::fl(label);
        let loss = zv.max(F::zero()) - zv * y + softplus_scalar(-zv.abs());
        let needs = self.needs(z);
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                let d = (sigmoid_scalar(zv) - y) * g[[0, 0]];
                sink.add(z, Array2::from_elem((1, 1), d));
            }) as BackFn<F>
        });
        self.push(Arc::new(Array2::from_elem((1, 1), loss)), needs, back)
    }

    /// Depthwise 2-D convolution of tokens arranged on a `grid x grid`
    /// row-major square, one `k x k` kernel per channel, zero padding,
    /// unit stride. `x` is (grid^2)xC, `weight` Cx(k^2) with kernel entry
    /// `(dy, dx)` at column `dy*k + dx`, `bias` 1xC.
    pub fn grid_dw_conv(&self, x: Var, weight: Var, bias: Var, grid: usize, k: usize) -> Var {
        assert_eq!(x.rows, grid * grid, "token count must fill the grid");
        assert_eq!(weight.rows, x.cols, "one kernel per channel");
        assert_eq!(weight.cols, k * k);
        assert_eq!(bias.cols, x.cols);
        assert!(k % 2 == 1, "odd kernels only");
        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = self.value(bias);
        let c = x.cols;
        let off = (k / 2) as isize;

        let mut out = Array2::zeros((grid * grid, c));
        for mut row in out.rows_mut() {
            row.assign(&bv.row(0));
        }
        conv_accumulate(&mut out, &xv, &wv, grid, k, off, false);

        let needs_x = self.needs(x);
        let needs_w = self.needs(weight);
        let needs_b = self.needs(bias);
        let needs = needs_x || needs_w || needs_b;
        let back: Option<BackFn<F>> = needs.then(|| {
            let xv = Arc::clone(&xv);
            let wv = Arc::clone(&wv);
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| {
                if needs_b {
                    sink.add(bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if needs_x {
                    let mut gx = Array2::zeros((grid * grid, c));
                    conv_accumulate(&mut gx, g, &wv, grid, k, off, true);
                    sink.add(x, gx);
                }
                if needs_w {
                    let mut gw = Array2::zeros((c, k * k));
                    for dy in 0..k {
                        for dx in 0..k {
                            let (sdy, sdx) = (dy as isize - off, dx as isize - off);
                            let mut acc = vec![F::zero(); c];
                            for r in 0..grid {
                                let sr = r as isize + sdy;
                                if sr < 0 || sr >= grid as isize {
                                    continue;
                                }
                                let (c0, c1) = col_range(grid, sdx);
                                if c0 >= c1 {
                                    continue;
                                }
                                for col in c0..c1 {
                                    let src = (sr as usize) * grid + (col as isize + sdx) as usize;
                                    let dst = r * grid + col;
                                    for ch in 0..c {
                                        acc[ch] = acc[ch] + xv[[src, ch]] * g[[dst, ch]];
                                    }
                                }
                            }
                            for ch in 0..c {
                                gw[[ch, dy * k + dx]] = acc[ch];
                            }
                        }
                    }
                    sink.add(weight, gw);
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }

    // ----- regularization ---------------------------------------------------

    /// Inverted dropout: multiplies by a 0 / (1-p)^-1 mask drawn from `rng`.
    /// Identity when `p == 0`.
    pub fn dropout<R: rand::Rng + ?Sized>(&self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        assert!(p < 1.0, "dropout rate must be < 1");
        let keep = F::fl(1.0 / (1.0 - p));
        let mask = Array2::from_shape_fn((a.rows, a.cols), |_| {
            if rng.random_bool(1.0 - p) {
                keep
            } else {
                F::zero()
            }
        });
        let m = self.constant_owned(mask);
        self.mul(a, m)
    }

    // ----- helpers ----------------------------------------------------------

    fn broadcast_op(
        &self,
        a: Var,
        b: Var,
        f: impl Fn(F, F) -> F,
        kind: BroadcastKind,
    ) -> Var {
        let (ar, ac) = (a.rows, a.cols);
        let (br, bc) = (b.rows, b.cols);
        let valid = (br == ar || br == 1) && (bc == ac || bc == 1);
        assert!(valid, "broadcast {}x{} with {}x{}", ar, ac, br, bc);

        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Array2::zeros((ar, ac));
        for i in 0..ar {
            let bi = if br == 1 { 0 } else { i };
            for j in 0..ac {
                let bj = if bc == 1 { 0 } else { j };
                out[[i, j]] = f(av[[i, j]], bv[[bi, bj]]);
            }
        }
        let needs_a = self.needs(a);
        let needs_b = self.needs(b);
        let needs = needs_a || needs_b;
        let back: Option<BackFn<F>> = needs.then(|| {
            Box::new(move |g: &Array2<F>, sink: &mut GradSink<F>| match kind {
                BroadcastKind::Add => {
                    if needs_a {
                        sink.add(a, g.clone());
                    }
                    if needs_b {
                        sink.add(b, reduce_to_shape(g, b.rows, b.cols));
                    }
                }
                BroadcastKind::Mul => {
                    if needs_a {
                        let mut ga = g.clone();
                        for i in 0..ga.nrows() {
                            let bi = if b.rows == 1 { 0 } else { i };
                            for j in 0..ga.ncols() {
                                let bj = if b.cols == 1 { 0 } else { j };
                                ga[[i, j]] = ga[[i, j]] * bv[[bi, bj]];
                            }
                        }
                        sink.add(a, ga);
                    }
                    if needs_b {
                        let gb_full = g * &*av;
                        sink.add(b, reduce_to_shape(&gb_full, b.rows, b.cols));
                    }
                }
            }) as BackFn<F>
        });
        self.push(Arc::new(out), needs, back)
    }
}

#[derive(Clone, Copy)]
enum BroadcastKind {
    Add,
    Mul,
}

fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn softplus_scalar<F: Scalar>(x: F) -> F {
    // max(x, 0) + ln(1 + exp(-|x|))
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn softmax_rows_value<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

fn softmax_rows_backward<F: Scalar>(y: &Array2<F>, g: &Array2<F>) -> Array2<F> {
    let mut out = g.clone();
    for (mut orow, yrow) in out.rows_mut().into_iter().zip(y.rows()) {
        let dot = orow
            .iter()
            .zip(yrow.iter())
            .fold(F::zero(), |acc, (&gv, &yv)| acc + gv * yv);
        for (ov, &yv) in orow.iter_mut().zip(yrow.iter()) {
            *ov = yv * (*ov - dot);
        }
    }
    out
}

/// Sums `g` down to a (rows, cols) shape where each target axis is either
/// full-size or 1 (broadcast axis).
fn reduce_to_shape<F: Scalar>(g: &Array2<F>, rows: usize, cols: usize) -> Array2<F> {
    let mut out = g.clone();
    if rows == 1 && out.nrows() > 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if cols == 1 && out.ncols() > 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

/// Shared kernel for the depthwise grid conv forward and its input gradient
/// (which is the same stencil with the kernel flipped, `flip = true`).
fn conv_accumulate<F: Scalar>(
    out: &mut Array2<F>,
    src: &Array2<F>,
    weight: &Array2<F>,
    grid: usize,
    k: usize,
    off: isize,
    flip: bool,
) {
    let c = out.ncols();
    for dy in 0..k {
        for dx in 0..k {
            let (sdy, sdx) = if flip {
                (off - dy as isize, off - dx as isize)
            } else {
                (dy as isize - off, dx as isize - off)
            };
            let wcol = dy * k + dx;
            for r in 0..grid {
                let sr = r as isize + sdy;
                if sr < 0 || sr >= grid as isize {
                    continue;
                }
                let (c0, c1) = col_range(grid, sdx);
                if c0 >= c1 {
                    continue;
                }
                let src_start = (sr as usize) * grid + (c0 as isize + sdx) as usize;
                let dst_start = r * grid + c0;
                let len = c1 - c0;
                let src_block = src.slice(s![src_start..src_start + len, ..]);
                let mut dst_block = out.slice_mut(s![dst_start..dst_start + len, ..]);
                for (mut drow, srow) in dst_block.rows_mut().into_iter().zip(src_block.rows()) {
                    for ch in 0..c {
                        drow[ch] = drow[ch] + srow[ch] * weight[[ch, wcol]];
                    }
                }
            }
        }
    }
}

/// Valid destination-column range so that `col + sdx` stays inside the grid.
fn col_range(grid: usize, sdx: isize) -> (usize, usize) {
    let lo = if sdx < 0 { (-sdx) as usize } else { 0 };
    let hi = if sdx > 0 {
        grid.saturating_sub(sdx as usize)
    } else {
        grid
    };
    (lo, hi)
}

/// `m` near-equal contiguous segments of `0..n`: the first `n % m` segments
/// get the extra element.
pub fn segment_bounds(n: usize, m: usize) -> Vec<(usize, usize)> {
    let base = n / m;
    let rem = n % m;
    let mut bounds = Vec::with_capacity(m);
    let mut start = 0;
    for seg in 0..m {
        let len = base + usize::from(seg < rem);
        bounds.push((start, start + len));
        start += len;
    }
    debug_assert_eq!(start, n);
    bounds
}
