use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Variance floor used by [`ValueGraph::instance_norm`].
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Handle to a node recorded in a [`ValueGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf { param: Option<ParamId> },
    Conv2d { x: NodeId, w: NodeId, b: NodeId },
    AvgPool2 { x: NodeId },
    Upsample2 { x: NodeId },
    InstanceNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<T>, inv_std: Vec<T> },
    Gelu { x: NodeId },
    Sigmoid { x: NodeId },
    Concat { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Eagerly evaluated tape: every operation computes its output when it is
/// recorded, so nodes are topologically ordered by construction. A single
/// reverse sweep then propagates seed gradients to every node.
#[derive(Debug, Clone, Default)]
pub struct ValueGraph<T = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

fn graph_err(msg: impl Into<String>) -> Error {
    Error::Graph(msg.into())
}

fn exact_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn exact_gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn stable_sigmoid(x: f64) -> f64 {
    crate::imagecore::sigmoid(x)
}

impl<T: Scalar> ValueGraph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&Tensor<T>> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| graph_err(format!("node {} does not belong to this graph", id.0)))
    }

    fn check_chw(&self, id: NodeId) -> Result<(usize, usize, usize)> {
        let t = self.check(id)?;
        match t.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(graph_err(format!("expected a [C, H, W] tensor, got {:?}", t.shape))),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of the seeded objective with respect to `id`, once
    /// [`backward`](Self::backward) has run (`None` if nothing reached it).
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Records a constant input (image, trimap, ...). Gradients still flow
    /// to it, which is what the per-op finite-difference checks use.
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: None }, t)
    }

    /// Records the current value of a parameter as a leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(Op::Leaf { param: Some(id) }, store.value(id).clone())
    }

    /// `k × k` convolution, stride 1, zero padding `k / 2` (odd `k`).
    /// `w` is `[C_out, C_in, k, k]`, `b` is `[C_out]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (ci, h, wd) = self.check_chw(x)?;
        let wt = self.check(w)?;
        let (co, wci, k) = match wt.shape[..] {
            [co, wci, k1, k2] if k1 == k2 && k1 % 2 == 1 => (co, wci, k1),
            _ => return Err(graph_err(format!("conv2d weight must be [C_out, C_in, k, k] with odd k, got {:?}", wt.shape))),
        };
        if wci != ci {
            return Err(graph_err(format!("conv2d expects {wci} input channels, got {ci}")));
        }
        if self.check(b)?.shape != [co] {
            return Err(graph_err(format!("conv2d bias must be [{co}], got {:?}", self.value(b).shape)));
        }
        let out = conv_forward(&self.value(x).data, &wt.data, &self.value(b).data, ci, co, h, wd, k);
        Ok(self.push(Op::Conv2d { x, w, b }, Tensor::new(vec![co, h, wd], out)))
    }

    /// 2×2 average pooling; height and width must be even.
    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.check_chw(x)?;
        if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(graph_err(format!("avg_pool2 needs even spatial size, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = &self.value(x).data;
        let quarter = T::from_f64(0.25);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let i = ch * h * w + 2 * y * w + 2 * xx;
                    out[ch * oh * ow + y * ow + xx] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
                }
            }
        }
        Ok(self.push(Op::AvgPool2 { x }, Tensor::new(vec![c, oh, ow], out)))
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.check_chw(x)?;
        let (oh, ow) = (2 * h, 2 * w);
        let src = &self.value(x).data;
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[ch * oh * ow + y * ow + xx] = src[ch * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        Ok(self.push(Op::Upsample2 { x }, Tensor::new(vec![c, oh, ow], out)))
    }

    /// Per-channel normalization to zero mean and unit (biased) variance with
    /// `ε = 1e-5`, followed by the affine `γ x̂ + β`.
    pub fn instance_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.check_chw(x)?;
        if self.check(gamma)?.shape != [c] || self.check(beta)?.shape != [c] {
            return Err(graph_err(format!("instance_norm affine parameters must be [{c}]")));
        }
        let n = h * w;
        let src = &self.value(x).data;
        let (g, bt) = (&self.value(gamma).data, &self.value(beta).data);
        let mut xhat = vec![T::zero(); c * n];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); c * n];
        for ch in 0..c {
            let plane = &src[ch * n..(ch + 1) * n];
            let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let var = plane.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
            inv_std[ch] = T::from_f64(is);
            for i in 0..n {
                let xh = T::from_f64((plane[i].as_f64() - mean) * is);
                xhat[ch * n + i] = xh;
                out[ch * n + i] = g[ch] * xh + bt[ch];
            }
        }
        Ok(self.push(
            Op::InstanceNorm { x, gamma, beta, xhat, inv_std },
            Tensor::new(vec![c, h, w], out),
        ))
    }

    /// Exact GELU, `x Φ(x)` with the Gaussian CDF.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.check(x)?;
        let out = t.data.iter().map(|&v| T::from_f64(exact_gelu(v.as_f64()))).collect();
        let shape = t.shape.clone();
        Ok(self.push(Op::Gelu { x }, Tensor::new(shape, out)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.check(x)?;
        let out = t.data.iter().map(|&v| T::from_f64(stable_sigmoid(v.as_f64()))).collect();
        let shape = t.shape.clone();
        Ok(self.push(Op::Sigmoid { x }, Tensor::new(shape, out)))
    }

    /// Channel-axis concatenation `[a; b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ca, ha, wa) = self.check_chw(a)?;
        let (cb, hb, wb) = self.check_chw(b)?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::ShapeMismatch { expected: (ha, wa), got: (hb, wb) });
        }
        let mut out = self.value(a).data.clone();
        out.extend_from_slice(&self.value(b).data);
        Ok(self.push(Op::Concat { a, b }, Tensor::new(vec![ca + cb, ha, wa], out)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape != tb.shape {
            return Err(graph_err(format!("add needs equal shapes, got {:?} and {:?}", ta.shape, tb.shape)));
        }
        let out = ta.data.iter().zip(&tb.data).map(|(&u, &v)| u + v).collect();
        let shape = ta.shape.clone();
        Ok(self.push(Op::Add { a, b }, Tensor::new(shape, out)))
    }

    /// Clears every gradient buffer so that another backward pass may run.
    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    /// Reverse sweep from one or more seeds `(node, ∂L/∂node)`.
    ///
    /// Fails if nothing has been recorded yet, or if gradients from an
    /// earlier pass have not been cleared with [`zero_grad`](Self::zero_grad).
    pub fn backward(&mut self, seeds: &[(NodeId, &[T])]) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(graph_err("backward called before any forward operation"));
        }
        if self.backward_done {
            return Err(graph_err("gradients already populated; call zero_grad before another backward"));
        }
        if seeds.is_empty() {
            return Err(graph_err("backward needs at least one seed"));
        }
        for (id, g) in seeds {
            let v = self.check(*id)?;
            if v.len() != g.len() {
                return Err(graph_err(format!(
                    "seed for node {} has {} values, node has {}",
                    id.0,
                    g.len(),
                    v.len()
                )));
            }
        }
        for (id, g) in seeds {
            accumulate(&mut self.grads, *id, g);
        }
        self.backward_done = true;

        for i in (0..self.nodes.len()).rev() {
            let Some(dy) = self.grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { .. } => {}
                Op::Conv2d { x, w, b } => {
                    let (ci, h, wd) = self.nodes[x.0].value.chw();
                    let wt = &self.nodes[w.0].value;
                    let (co, k) = (wt.shape[0], wt.shape[2]);
                    let (dx, dw, db) =
                        conv_backward(&self.nodes[x.0].value.data, &wt.data, &dy, ci, co, h, wd, k);
                    accumulate(&mut self.grads, *x, &dx);
                    accumulate(&mut self.grads, *w, &dw);
                    accumulate(&mut self.grads, *b, &db);
                }
                Op::AvgPool2 { x } => {
                    let (c, h, w) = self.nodes[x.0].value.chw();
                    let (oh, ow) = (h / 2, w / 2);
                    let quarter = T::from_f64(0.25);
                    let mut dx = vec![T::zero(); c * h * w];
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                dx[ch * h * w + y * w + xx] = dy[ch * oh * ow + (y / 2) * ow + xx / 2] * quarter;
                            }
                        }
                    }
                    accumulate(&mut self.grads, *x, &dx);
                }
                Op::Upsample2 { x } => {
                    let (c, h, w) = self.nodes[x.0].value.chw();
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![T::zero(); c * h * w];
                    for ch in 0..c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                dx[ch * h * w + (y / 2) * w + xx / 2] =
                                    dx[ch * h * w + (y / 2) * w + xx / 2] + dy[ch * oh * ow + y * ow + xx];
                            }
                        }
                    }
                    accumulate(&mut self.grads, *x, &dx);
                }
                Op::InstanceNorm { x, gamma, beta, xhat, inv_std } => {
                    let (c, h, w) = self.nodes[x.0].value.chw();
                    let n = h * w;
                    let g = &self.nodes[gamma.0].value.data;
                    let mut dx = vec![T::zero(); c * n];
                    let mut dg = vec![T::zero(); c];
                    let mut db = vec![T::zero(); c];
                    for ch in 0..c {
                        let r = ch * n..(ch + 1) * n;
                        let (dyc, xh) = (&dy[r.clone()], &xhat[r.clone()]);
                        let mut sum_dy = 0.0;
                        let mut sum_dy_xh = 0.0;
                        for (d, x) in dyc.iter().zip(xh) {
                            sum_dy += d.as_f64();
                            sum_dy_xh += d.as_f64() * x.as_f64();
                        }
                        dg[ch] = T::from_f64(sum_dy_xh);
                        db[ch] = T::from_f64(sum_dy);
                        // dx = γ/σ · (dy - mean(dy) - x̂ · mean(dy · x̂))
                        let scale = g[ch].as_f64() * inv_std[ch].as_f64();
                        let (m1, m2) = (sum_dy / n as f64, sum_dy_xh / n as f64);
                        for (o, (d, x)) in dx[r].iter_mut().zip(dyc.iter().zip(xh)) {
                            *o = T::from_f64(scale * (d.as_f64() - m1 - x.as_f64() * m2));
                        }
                    }
                    accumulate(&mut self.grads, *x, &dx);
                    accumulate(&mut self.grads, *gamma, &dg);
                    accumulate(&mut self.grads, *beta, &db);
                }
                Op::Gelu { x } => {
                    let dx: Vec<T> = self.nodes[x.0]
                        .value
                        .data
                        .iter()
                        .zip(&dy)
                        .map(|(&v, &d)| d * T::from_f64(exact_gelu_grad(v.as_f64())))
                        .collect();
                    accumulate(&mut self.grads, *x, &dx);
                }
                Op::Sigmoid { x } => {
                    let dx: Vec<T> = node
                        .value
                        .data
                        .iter()
                        .zip(&dy)
                        .map(|(&s, &d)| d * s * (T::one() - s))
                        .collect();
                    accumulate(&mut self.grads, *x, &dx);
                }
                Op::Concat { a, b } => {
                    let na = self.nodes[a.0].value.len();
                    accumulate(&mut self.grads, *a, &dy[..na]);
                    accumulate(&mut self.grads, *b, &dy[na..]);
                }
                Op::Add { a, b } => {
                    accumulate(&mut self.grads, *a, &dy);
                    accumulate(&mut self.grads, *b, &dy);
                }
            }
            self.grads[i] = Some(dy);
        }
        Ok(())
    }

    /// Adds the gradient of every parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) -> Result<()> {
        if !self.backward_done {
            return Err(graph_err("no gradients to collect; run backward first"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Leaf { param: Some(pid) }, Some(g)) = (&node.op, &self.grads[i]) {
                store.add_grad(*pid, g)?;
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, g: &[T]) {
    match &mut grads[id.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &v)| *a = *a + v),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Rows `[lo, hi)` of the output that see input row `y + d` inside `[0, n)`.
#[inline]
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], ci: usize, co: usize, h: usize, wd: usize, k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let plane = h * wd;
    let mut out = vec![T::zero(); co * plane];
    for o in 0..co {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..ci {
            let src = &x[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let wv = w[((o * ci + c) * k + ky) * k + kx];
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = (x0 as isize + dx) as usize;
                        let srow = &src[sy * wd + s0..sy * wd + s0 + (x1 - x0)];
                        let drow = &mut dst[y * wd + x0..y * wd + x1];
                        for (d, &s) in drow.iter_mut().zip(srow) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn conv_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
    k: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let pad = (k / 2) as isize;
    let plane = h * wd;
    let mut dx = vec![T::zero(); ci * plane];
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); co];
    for o in 0..co {
        let g = &dy[o * plane..(o + 1) * plane];
        db[o] = g.iter().fold(T::zero(), |a, &v| a + v);
        for c in 0..ci {
            let src = &x[c * plane..(c + 1) * plane];
            let dsrc = &mut dx[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let oy = ky as isize - pad;
                let (y0, y1) = valid_range(h, oy);
                for kx in 0..k {
                    let wi = ((o * ci + c) * k + ky) * k + kx;
                    let wv = w[wi];
                    let ox = kx as isize - pad;
                    let (x0, x1) = valid_range(wd, ox);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + oy) as usize;
                        let s0 = sy * wd + (x0 as isize + ox) as usize;
                        let grow = &g[y * wd + x0..y * wd + x1];
                        let srow = &src[s0..s0 + (x1 - x0)];
                        for (&gv, &sv) in grow.iter().zip(srow) {
                            acc = acc + gv * sv;
                        }
                        let drow = &mut dsrc[s0..s0 + (x1 - x0)];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d = *d + wv * gv;
                        }
                    }
                    dw[wi] = acc;
                }
            }
        }
    }
    (dx, dw, db)
}
