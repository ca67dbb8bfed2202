//! Dense tanh networks mapping `(x, y)` to a scalar, evaluated together with
//! their spatial first and second derivatives.
//!
//! Every hidden layer propagates a second-order Taylor jet of its activations:
//! the value, the two input-space first derivatives, and the three distinct
//! second derivatives. For `a = W z + b` and `h = tanh(a)`:
//!
//! ```text
//! h     = t
//! h_x   = t' a_x
//! h_xx  = t'' a_x^2 + t' a_xx
//! h_xy  = t'' a_x a_y + t' a_xy
//! t' = 1 - t^2,  t'' = -2 t t'
//! ```
//!
//! Batches are laid out channel-major: rows `[c*N, (c+1)*N)` of every
//! activation matrix hold channel `c` for all `N` points. The affine part of a
//! layer is then one GEMM over all channels, and reverse accumulation through
//! the recorded batch ([`JetTape`]) yields parameter gradients of any loss that
//! mixes values, gradients, and Laplacians.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;
use thiserror::Error;

/// A point in the plane.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("network needs at least an input and an output width, got {0:?}")]
    TooFewLayers(Vec<usize>),
    #[error("network input width must be 2 and output width 1, got {input} -> {output}")]
    BadEndpoints { input: usize, output: usize },
    #[error("layer {layer} has zero width")]
    ZeroWidth { layer: usize },
    #[error("layer {layer}: weight shape {got:?} does not match expected {expected:?}")]
    Shape {
        layer: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("non-finite parameter at flat index {index}")]
    NonFiniteParameter { index: usize },
    #[error("loss diverged: {value}")]
    Divergence { value: f64 },
}

/// Value of the network together with its spatial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JetEval {
    pub value: f64,
    /// `(du/dx, du/dy)`
    pub grad: [f64; 2],
    /// `(d2u/dx2, d2u/dy2)`
    pub hess_diag: [f64; 2],
    /// `d2u/dxdy`
    pub cross: f64,
}

impl JetEval {
    pub fn laplacian(&self) -> f64 {
        self.hess_diag[0] + self.hess_diag[1]
    }

    pub fn normal_derivative(&self, normal: Point) -> f64 {
        self.grad[0] * normal[0] + self.grad[1] * normal[1]
    }

    fn channel(&self, c: Channel) -> f64 {
        match c {
            Channel::Value => self.value,
            Channel::Dx => self.grad[0],
            Channel::Dy => self.grad[1],
            Channel::Dxx => self.hess_diag[0],
            Channel::Dyy => self.hess_diag[1],
            Channel::Dxy => self.cross,
        }
    }

    fn set_channel(&mut self, c: Channel, v: f64) {
        match c {
            Channel::Value => self.value = v,
            Channel::Dx => self.grad[0] = v,
            Channel::Dy => self.grad[1] = v,
            Channel::Dxx => self.hess_diag[0] = v,
            Channel::Dyy => self.hess_diag[1] = v,
            Channel::Dxy => self.cross = v,
        }
    }
}

/// Sensitivity of a scalar loss to each component of a [`JetEval`].
pub type JetAdjoint = JetEval;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Value,
    Dx,
    Dy,
    Dxx,
    Dyy,
    Dxy,
}

/// How much of the jet a batch evaluation carries. Lower orders skip the
/// channels a loss does not read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum JetOrder {
    /// value only
    #[default]
    Value,
    /// value and gradient
    Gradient,
    /// value, gradient and the Laplacian diagonal
    Laplacian,
    /// everything, including the mixed derivative
    Full,
}

impl JetOrder {
    fn channels(self) -> &'static [Channel] {
        use Channel::*;
        match self {
            JetOrder::Value => &[Value],
            JetOrder::Gradient => &[Value, Dx, Dy],
            JetOrder::Laplacian => &[Value, Dx, Dy, Dxx, Dyy],
            JetOrder::Full => &[Value, Dx, Dy, Dxx, Dyy, Dxy],
        }
    }

    fn position(self, c: Channel) -> Option<usize> {
        self.channels().iter().position(|&x| x == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerShape {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.inputs * self.outputs
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.outputs
    }
}

/// Fully connected network, tanh on hidden layers, identity on the output.
///
/// All parameters live in one flat vector; layer `l` stores its row-major
/// `(outputs x inputs)` weight block followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

fn layout(widths: &[usize]) -> Result<(Vec<LayerShape>, usize), NetError> {
    if widths.len() < 2 {
        return Err(NetError::TooFewLayers(widths.to_vec()));
    }
    if widths[0] != 2 || widths[widths.len() - 1] != 1 {
        return Err(NetError::BadEndpoints {
            input: widths[0],
            output: widths[widths.len() - 1],
        });
    }
    if let Some(layer) = widths.iter().position(|&w| w == 0) {
        return Err(NetError::ZeroWidth { layer });
    }
    let mut shapes = Vec::with_capacity(widths.len() - 1);
    let mut offset = 0;
    for pair in widths.windows(2) {
        let (inputs, outputs) = (pair[0], pair[1]);
        let weight_offset = offset;
        let bias_offset = offset + inputs * outputs;
        offset = bias_offset + outputs;
        shapes.push(LayerShape {
            inputs,
            outputs,
            weight_offset,
            bias_offset,
        });
    }
    Ok((shapes, offset))
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    ///
    /// `hidden` lists the hidden-layer widths; the input width 2 and output
    /// width 1 are implied.
    pub fn glorot<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Result<Self, NetError> {
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let (shapes, count) = layout(&widths)?;
        let mut params = vec![0.0; count];
        for shape in &shapes {
            let limit = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            for w in &mut params[shape.weight_range()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(Self { widths, shapes, params })
    }

    /// Builds a network from explicit `(weights, bias)` pairs, weights given
    /// as `outputs x inputs`.
    pub fn from_layers(layers: Vec<(Array2<f64>, Vec<f64>)>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::TooFewLayers(vec![]));
        }
        let mut widths = vec![layers[0].0.ncols()];
        for (w, _) in &layers {
            widths.push(w.nrows());
        }
        let (shapes, count) = layout(&widths)?;
        let mut params = Vec::with_capacity(count);
        for (layer, ((w, b), shape)) in layers.iter().zip(&shapes).enumerate() {
            if w.dim() != (shape.outputs, shape.inputs) {
                return Err(NetError::Shape {
                    layer,
                    got: w.dim(),
                    expected: (shape.outputs, shape.inputs),
                });
            }
            if b.len() != shape.outputs {
                return Err(NetError::Shape {
                    layer,
                    got: (b.len(), 1),
                    expected: (shape.outputs, 1),
                });
            }
            params.extend(w.iter().copied());
            params.extend(b.iter().copied());
        }
        Self::from_flat(&widths, params)
    }

    /// Builds a network from full layer widths (including the 2 inputs and
    /// the single output) and a flat parameter vector.
    pub fn from_flat(widths: &[usize], params: Vec<f64>) -> Result<Self, NetError> {
        let (shapes, count) = layout(widths)?;
        if params.len() != count {
            return Err(NetError::Shape {
                layer: 0,
                got: (params.len(), 1),
                expected: (count, 1),
            });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(NetError::NonFiniteParameter { index });
        }
        Ok(Self {
            widths: widths.to_vec(),
            shapes,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access for optimizers. Callers keep the entries finite.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let shape = self.shapes[layer];
        ArrayView2::from_shape((shape.outputs, shape.inputs), &self.params[shape.weight_range()])
            .expect("layout is consistent")
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.shapes[layer].bias_range()]
    }

    /// Flat index of weight `(row, col)` of `layer`.
    pub fn weight_index(&self, layer: usize, row: usize, col: usize) -> usize {
        let shape = self.shapes[layer];
        shape.weight_offset + row * shape.inputs + col
    }

    /// Flat index of bias entry `row` of `layer`.
    pub fn bias_index(&self, layer: usize, row: usize) -> usize {
        self.shapes[layer].bias_offset + row
    }

    /// Value, gradient and Hessian of the network at one point.
    pub fn forward_jet(&self, point: Point) -> JetEval {
        self.forward_batch(&[point], JetOrder::Full).jets()[0]
    }

    pub fn forward_jets(&self, points: &[Point], order: JetOrder) -> Vec<JetEval> {
        self.forward_batch(points, order).jets()
    }

    /// Plain network values.
    pub fn values(&self, points: &[Point]) -> Vec<f64> {
        let tape = self.forward_batch(points, JetOrder::Value);
        tape.output.column(0).to_vec()
    }

    /// Evaluates a batch and records everything reverse accumulation needs.
    pub fn forward_batch(&self, points: &[Point], order: JetOrder) -> JetTape {
        let mut tape = JetTape::default();
        self.forward_into(points, order, &mut tape);
        tape
    }

    /// Like [`Mlp::forward_batch`], reusing the buffers of `tape`.
    pub fn forward_into(&self, points: &[Point], order: JetOrder, tape: &mut JetTape) {
        let n = points.len();
        let channels = order.channels();
        let rows = channels.len() * n;
        let layers = self.shapes.len();
        tape.order = order;
        tape.n = n;
        tape.inputs.resize_with(layers, Default::default);
        tape.pre.resize_with(layers - 1, Default::default);
        tape.tanh.resize_with(layers - 1, Default::default);

        let z = &mut tape.inputs[0];
        ensure_shape(z, rows, 2);
        z.fill(0.0);
        for (i, p) in points.iter().enumerate() {
            z[[i, 0]] = p[0];
            z[[i, 1]] = p[1];
        }
        if let Some(cx) = order.position(Channel::Dx) {
            for i in 0..n {
                z[[cx * n + i, 0]] = 1.0;
            }
        }
        if let Some(cy) = order.position(Channel::Dy) {
            for i in 0..n {
                z[[cy * n + i, 1]] = 1.0;
            }
        }

        for (l, shape) in self.shapes.iter().enumerate() {
            let (done, rest) = tape.inputs.split_at_mut(l + 1);
            let z = &done[l];
            let a = if l + 1 == layers {
                &mut tape.output
            } else {
                &mut tape.pre[l]
            };
            ensure_shape(a, rows, shape.outputs);
            general_mat_mul(1.0, z, &self.weights(l).t(), 0.0, a);
            let bias = self.bias(l);
            for mut row in a.slice_mut(s![0..n, ..]).rows_mut() {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l + 1 < layers {
                activate(
                    &tape.pre[l],
                    order,
                    n,
                    &mut rest[0],
                    &mut tape.tanh[l],
                    &mut tape.t1,
                    &mut tape.t2,
                );
            }
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// sensitivities to the recorded jets are `adjoints` (one per point).
    /// The tape's scratch buffers are reused, hence `&mut`.
    pub fn backward(&self, tape: &mut JetTape, adjoints: &[JetAdjoint], grad: &mut ParamGrad) {
        assert_eq!(adjoints.len(), tape.n, "one adjoint per recorded point");
        assert_eq!(grad.params.len(), self.params.len(), "gradient layout mismatch");
        let n = tape.n;
        let order = tape.order;
        let channels = order.channels();
        let rows = channels.len() * n;
        let layers = self.shapes.len();
        tape.adj.resize_with(layers, Default::default);
        tape.hbar.resize_with(layers, Default::default);

        let top = &mut tape.adj[layers - 1];
        ensure_shape(top, rows, 1);
        for (ci, &c) in channels.iter().enumerate() {
            for (i, adj) in adjoints.iter().enumerate() {
                top[[ci * n + i, 0]] = adj.channel(c);
            }
        }

        for l in (0..layers).rev() {
            let shape = self.shapes[l];
            let (below, current) = tape.adj.split_at_mut(l);
            let abar = &current[0];
            let z = &tape.inputs[l];
            {
                let gw = &mut grad.params[shape.weight_range()];
                let mut gw =
                    ArrayViewMut2::from_shape((shape.outputs, shape.inputs), gw).expect("layout is consistent");
                general_mat_mul(1.0, &abar.t(), z, 1.0, &mut gw);
            }
            {
                let gb = &mut grad.params[shape.bias_range()];
                for row in abar.slice(s![0..n, ..]).rows() {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let hbar = &mut tape.hbar[l];
            ensure_shape(hbar, rows, shape.inputs);
            general_mat_mul(1.0, abar, &self.weights(l), 0.0, hbar);
            activate_backward(
                hbar,
                &tape.pre[l - 1],
                &tape.tanh[l - 1],
                order,
                n,
                &mut tape.t1,
                &mut tape.t2,
                &mut below[l - 1],
            );
        }
    }

    /// Loss over one batch of points: `loss = sum_i f(i, jet_i)` where `f`
    /// returns the contribution and its sensitivity to the jet.
    pub fn loss_backward<F>(&self, points: &[Point], order: JetOrder, mut f: F) -> Result<(f64, ParamGrad), NetError>
    where
        F: FnMut(usize, &JetEval) -> (f64, JetAdjoint),
    {
        let mut tape = self.forward_batch(points, order);
        let mut loss = 0.0;
        let adjoints: Vec<JetAdjoint> = tape
            .jets()
            .iter()
            .enumerate()
            .map(|(i, jet)| {
                let (v, adj) = f(i, jet);
                loss += v;
                adj
            })
            .collect();
        if !loss.is_finite() {
            return Err(NetError::Divergence { value: loss });
        }
        let mut grad = ParamGrad::zeros(self);
        self.backward(&mut tape, &adjoints, &mut grad);
        Ok((loss, grad))
    }
}

/// Per-channel contiguous blocks of a channel-major matrix.
struct Blocks<'a> {
    data: &'a [f64],
    len: usize,
    order: JetOrder,
}

impl<'a> Blocks<'a> {
    fn new(m: &'a Array2<f64>, order: JetOrder, n: usize) -> Self {
        Self {
            data: m.as_slice().expect("standard layout"),
            len: n * m.ncols(),
            order,
        }
    }

    fn get(&self, c: Channel) -> Option<&'a [f64]> {
        self.order
            .position(c)
            .map(|k| &self.data[k * self.len..(k + 1) * self.len])
    }
}

fn block_mut(m: &mut [f64], order: JetOrder, c: Channel, len: usize) -> Option<&mut [f64]> {
    order.position(c).map(|k| &mut m[k * len..(k + 1) * len])
}

fn ensure_shape(buf: &mut Array2<f64>, rows: usize, cols: usize) {
    if buf.dim() != (rows, cols) {
        *buf = Array2::zeros((rows, cols));
    }
}

/// `tanh` through one `exp`; absolute error stays at the rounding level.
#[inline]
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// `t' = 1 - t^2` and `t'' = -2 t t'`.
fn tanh_derivatives(t: &[f64], t1: &mut Vec<f64>, t2: &mut Vec<f64>) {
    t1.clear();
    t1.extend(t.iter().map(|t| 1.0 - t * t));
    t2.clear();
    t2.extend(t.iter().zip(t1.iter()).map(|(t, d)| -2.0 * t * d));
}

/// Writes every recorded channel of `h = tanh(a)` and the value-channel
/// `tanh` into `t`.
fn activate(
    a: &Array2<f64>,
    order: JetOrder,
    n: usize,
    h: &mut Array2<f64>,
    t: &mut Vec<f64>,
    t1: &mut Vec<f64>,
    t2: &mut Vec<f64>,
) {
    use Channel::*;
    let len = n * a.ncols();
    let src = Blocks::new(a, order, n);
    ensure_shape(h, a.nrows(), a.ncols());
    t.clear();
    t.extend(src.get(Value).unwrap().iter().map(|&v| tanh(v)));
    tanh_derivatives(t, t1, t2);
    let hs = h.as_slice_mut().expect("standard layout");
    hs[..len].copy_from_slice(t);
    let ax = src.get(Dx);
    let ay = src.get(Dy);
    for (c, first) in [(Dx, ax), (Dy, ay)] {
        if let (Some(out), Some(ad)) = (block_mut(hs, order, c, len), first) {
            for ((o, d), a) in out.iter_mut().zip(t1.iter()).zip(ad) {
                *o = d * a;
            }
        }
    }
    for (c, u, v) in [(Dxx, ax, ax), (Dyy, ay, ay), (Dxy, ax, ay)] {
        if let (Some(out), Some(a2), Some(u), Some(v)) = (block_mut(hs, order, c, len), src.get(c), u, v) {
            for i in 0..len {
                out[i] = t2[i] * u[i] * v[i] + t1[i] * a2[i];
            }
        }
    }
}

/// Maps sensitivities of `h = tanh(a)` back to sensitivities of `a`,
/// overwriting every recorded channel of `abar`.
#[allow(clippy::too_many_arguments)]
fn activate_backward(
    hbar: &Array2<f64>,
    a: &Array2<f64>,
    t: &[f64],
    order: JetOrder,
    n: usize,
    t1: &mut Vec<f64>,
    t2: &mut Vec<f64>,
    abar: &mut Array2<f64>,
) {
    use Channel::*;
    let len = n * a.ncols();
    let pre = Blocks::new(a, order, n);
    let adj = Blocks::new(hbar, order, n);
    tanh_derivatives(t, t1, t2);
    let (t1, t2) = (&t1[..], &t2[..]);

    ensure_shape(abar, a.nrows(), a.ncols());
    let out = abar.as_slice_mut().expect("standard layout");

    // value channel collects d/da of every output channel
    {
        let v = &mut out[..len];
        let hv = adj.get(Value).unwrap();
        for i in 0..len {
            v[i] = hv[i] * t1[i];
        }
        if order >= JetOrder::Gradient {
            let (ax, ay) = (pre.get(Dx).unwrap(), pre.get(Dy).unwrap());
            let (hx, hy) = (adj.get(Dx).unwrap(), adj.get(Dy).unwrap());
            for i in 0..len {
                v[i] += t2[i] * (hx[i] * ax[i] + hy[i] * ay[i]);
            }
            if order >= JetOrder::Laplacian {
                let (axx, ayy) = (pre.get(Dxx).unwrap(), pre.get(Dyy).unwrap());
                let (hxx, hyy) = (adj.get(Dxx).unwrap(), adj.get(Dyy).unwrap());
                for i in 0..len {
                    let t3 = (6.0 * t[i] * t[i] - 2.0) * t1[i];
                    v[i] +=
                        hxx[i] * (t3 * ax[i] * ax[i] + t2[i] * axx[i]) + hyy[i] * (t3 * ay[i] * ay[i] + t2[i] * ayy[i]);
                }
            }
            if let (Some(axy), Some(hxy)) = (pre.get(Dxy), adj.get(Dxy)) {
                for i in 0..len {
                    let t3 = (6.0 * t[i] * t[i] - 2.0) * t1[i];
                    v[i] += hxy[i] * (t3 * ax[i] * ay[i] + t2[i] * axy[i]);
                }
            }
        }
    }

    if order >= JetOrder::Gradient {
        let (ax, ay) = (pre.get(Dx).unwrap(), pre.get(Dy).unwrap());
        for (c, own, other, second) in [(Dx, ax, ay, Dxx), (Dy, ay, ax, Dyy)] {
            let o = block_mut(out, order, c, len).unwrap();
            let h1 = adj.get(c).unwrap();
            for i in 0..len {
                o[i] = h1[i] * t1[i];
            }
            if let Some(h2) = adj.get(second) {
                for i in 0..len {
                    o[i] += 2.0 * h2[i] * t2[i] * own[i];
                }
            }
            if let Some(hxy) = adj.get(Dxy) {
                for i in 0..len {
                    o[i] += hxy[i] * t2[i] * other[i];
                }
            }
        }
    }
    for c in [Dxx, Dyy, Dxy] {
        if let (Some(o), Some(h2)) = (block_mut(out, order, c, len), adj.get(c)) {
            for i in 0..len {
                o[i] = h2[i] * t1[i];
            }
        }
    }
}

/// Record of one batch evaluation, plus scratch space for reverse
/// accumulation. Reusable across calls of the same shape.
#[derive(Debug, Clone, Default)]
pub struct JetTape {
    order: JetOrder,
    n: usize,
    /// input jets of every layer
    inputs: Vec<Array2<f64>>,
    /// pre-activation jets of hidden layers
    pre: Vec<Array2<f64>>,
    /// tanh of hidden pre-activations (value channel only)
    tanh: Vec<Vec<f64>>,
    output: Array2<f64>,
    adj: Vec<Array2<f64>>,
    hbar: Vec<Array2<f64>>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl JetTape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    /// Output jets; channels outside the recorded order read as zero.
    pub fn jets(&self) -> Vec<JetEval> {
        let mut out = vec![JetEval::default(); self.n];
        for (ci, &c) in self.order.channels().iter().enumerate() {
            for (i, jet) in out.iter_mut().enumerate() {
                jet.set_channel(c, self.output[[ci * self.n + i, 0]]);
            }
        }
        out
    }
}

/// Gradient with respect to every network parameter, in the flat layout of
/// [`Mlp::params`], plus the Robin parameter when the loss depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub params: Vec<f64>,
    pub robin: f64,
}

impl ParamGrad {
    pub fn zeros(net: &Mlp) -> Self {
        Self {
            params: vec![0.0; net.num_params()],
            robin: 0.0,
        }
    }

    /// Index of the first non-finite entry; `params.len()` denotes the Robin entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.params
            .iter()
            .position(|g| !g.is_finite())
            .or_else(|| (!self.robin.is_finite()).then_some(self.params.len()))
    }

    pub fn dot(&self, direction: &[f64]) -> f64 {
        self.params.iter().zip(direction).map(|(g, d)| g * d).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(hidden: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::glorot(hidden, &mut rng).unwrap();
        // non-zero biases so every code path is exercised
        for l in 0..net.num_layers() {
            for r in 0..net.widths()[l + 1] {
                let idx = net.bias_index(l, r);
                net.params_mut()[idx] = rng.random_range(-0.5..0.5);
            }
        }
        net
    }

    #[test]
    fn zero_net_is_constant_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::glorot(&[5, 4], &mut rng).unwrap();
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let idx = net.bias_index(net.num_layers() - 1, 0);
        net.params_mut()[idx] = 0.7;
        let jet = net.forward_jet([0.3, -0.4]);
        assert_eq!(
            jet,
            JetEval {
                value: 0.7,
                grad: [0.0, 0.0],
                hess_diag: [0.0, 0.0],
                cross: 0.0
            }
        );
    }

    #[test]
    fn affine_net_has_no_curvature() {
        let net = Mlp::from_layers(vec![(array![[1.0, 2.0]], vec![0.0])]).unwrap();
        let jet = net.forward_jet([0.3, -0.1]);
        assert!((jet.value - 0.1).abs() < 1e-15);
        assert_eq!(jet.grad, [1.0, 2.0]);
        assert_eq!(jet.hess_diag, [0.0, 0.0]);
        assert_eq!(jet.cross, 0.0);
    }

    #[test]
    fn rejects_malformed_networks() {
        assert!(matches!(
            Mlp::from_flat(&[3, 1], vec![0.0; 4]),
            Err(NetError::BadEndpoints { .. })
        ));
        assert!(matches!(
            Mlp::from_flat(&[2, 0, 1], vec![]),
            Err(NetError::ZeroWidth { layer: 1 })
        ));
        assert!(matches!(
            Mlp::from_flat(&[2, 1], vec![0.0, f64::NAN, 0.0]),
            Err(NetError::NonFiniteParameter { index: 1 })
        ));
        assert!(matches!(
            Mlp::from_layers(vec![
                (Array2::zeros((3, 2)), vec![0.0; 3]),
                (Array2::zeros((1, 4)), vec![0.0]),
            ]),
            Err(NetError::Shape { layer: 1, .. })
        ));
    }

    fn fd_jet(net: &Mlp, p: Point, h: f64) -> JetEval {
        let f = |x: f64, y: f64| net.values(&[[x, y]])[0];
        let (x, y) = (p[0], p[1]);
        let f0 = f(x, y);
        JetEval {
            value: f0,
            grad: [
                (f(x + h, y) - f(x - h, y)) / (2.0 * h),
                (f(x, y + h) - f(x, y - h)) / (2.0 * h),
            ],
            hess_diag: [
                (f(x + h, y) - 2.0 * f0 + f(x - h, y)) / (h * h),
                (f(x, y + h) - 2.0 * f0 + f(x, y - h)) / (h * h),
            ],
            cross: (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h),
        }
    }

    #[test]
    fn first_derivatives_match_central_differences() {
        let net = random_net(&[8, 8], 11);
        for p in [[0.1, 0.2], [-0.7, 0.4], [0.9, -0.9]] {
            let jet = net.forward_jet(p);
            let fd = fd_jet(&net, p, 1e-4);
            let scale = jet.grad[0].abs().max(jet.grad[1].abs()).max(1.0);
            for k in 0..2 {
                assert!((jet.grad[k] - fd.grad[k]).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn lower_orders_agree_with_full_jet() {
        let net = random_net(&[6, 5], 3);
        let pts = [[0.2, -0.3], [0.5, 0.5], [-1.0, 0.1]];
        let full = net.forward_jets(&pts, JetOrder::Full);
        for order in [JetOrder::Value, JetOrder::Gradient, JetOrder::Laplacian] {
            let part = net.forward_jets(&pts, order);
            for (a, b) in full.iter().zip(&part) {
                assert!((a.value - b.value).abs() < 1e-14);
                if order >= JetOrder::Gradient {
                    assert!((a.grad[0] - b.grad[0]).abs() < 1e-14);
                }
                if order >= JetOrder::Laplacian {
                    assert!((a.laplacian() - b.laplacian()).abs() < 1e-13);
                    assert_eq!(b.cross, 0.0);
                }
            }
        }
    }

    #[test]
    fn quadratic_in_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::glorot(&[4], &mut rng).unwrap();
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let out_bias = net.bias_index(1, 0);
        net.params_mut()[out_bias] = 0.5;
        let (loss, grad) = net
            .loss_backward(&[[0.2, 0.3]], JetOrder::Value, |_, jet| {
                (
                    jet.value * jet.value,
                    JetAdjoint {
                        value: 2.0 * jet.value,
                        ..Default::default()
                    },
                )
            })
            .unwrap();
        assert_eq!(loss, 0.25);
        for (i, g) in grad.params.iter().enumerate() {
            if i == out_bias {
                assert_eq!(*g, 1.0);
            } else {
                assert_eq!(*g, 0.0, "entry {i}");
            }
        }
    }

    #[test]
    fn dead_path_has_exactly_zero_gradient() {
        let mut net = random_net(&[3, 3], 5);
        // hidden unit 1 of layer 1 feeds nothing downstream
        for r in 0..1 {
            let idx = net.weight_index(2, r, 1);
            net.params_mut()[idx] = 0.0;
        }
        let pts = [[0.3, 0.1], [-0.2, 0.8]];
        let (_, grad) = net
            .loss_backward(&pts, JetOrder::Laplacian, |_, jet| {
                let lap = jet.laplacian();
                (
                    lap * lap + jet.value,
                    JetAdjoint {
                        value: 1.0,
                        hess_diag: [2.0 * lap, 2.0 * lap],
                        ..Default::default()
                    },
                )
            })
            .unwrap();
        for c in 0..3 {
            assert_eq!(grad.params[net.weight_index(1, 1, c)], 0.0);
        }
        assert_eq!(grad.params[net.bias_index(1, 1)], 0.0);
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let net = random_net(&[3], 2);
        let err = net
            .loss_backward(&[[0.0, 0.0]], JetOrder::Value, |_, _| {
                (f64::INFINITY, JetAdjoint::default())
            })
            .unwrap_err();
        assert!(matches!(err, NetError::Divergence { .. }));
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let net = random_net(&[20, 20, 20], 9);
        let a = net.forward_jet([0.123, -0.456]);
        let b = net.forward_jet([0.123, -0.456]);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.hess_diag[1].to_bits(), b.hess_diag[1].to_bits());
    }

    #[test]
    fn width_stacked_network_sums_jets() {
        let n1 = Mlp::from_layers(vec![
            (array![[0.5, -1.0], [0.3, 0.2]], vec![0.1, -0.2]),
            (array![[1.5, -0.7]], vec![0.25]),
        ])
        .unwrap();
        let n2 = Mlp::from_layers(vec![(array![[2.0, 0.75]], vec![-0.4]), (array![[0.9]], vec![-1.0])]).unwrap();
        let stacked = Mlp::from_layers(vec![
            (array![[0.5, -1.0], [0.3, 0.2], [2.0, 0.75]], vec![0.1, -0.2, -0.4]),
            (array![[1.5, -0.7, 0.9]], vec![-0.75]),
        ])
        .unwrap();
        for p in [[0.4, -0.6], [-0.9, 0.05]] {
            let (a, b, c) = (n1.forward_jet(p), n2.forward_jet(p), stacked.forward_jet(p));
            assert!((a.value + b.value - c.value).abs() < 1e-14);
            for k in 0..2 {
                assert!((a.grad[k] + b.grad[k] - c.grad[k]).abs() < 1e-14);
                assert!((a.hess_diag[k] + b.hess_diag[k] - c.hess_diag[k]).abs() < 1e-14);
            }
            assert!((a.cross + b.cross - c.cross).abs() < 1e-14);
        }
    }
}
