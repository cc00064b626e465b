use std::cell::RefCell;
use std::sync::Arc;

use super::conv;
use super::{Scalar, Shape, Tensor};

/// Index of a recorded operation on its tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// A linear map applied independently to every (n, c) plane of an NCHW
/// tensor. The backward pass of a linear operator is its transpose, so one
/// pair of routines covers resampling and block transforms.
pub trait LinearOp<T: Scalar>: Send + Sync {
    fn in_dims(&self) -> (usize, usize);
    fn out_dims(&self) -> (usize, usize);
    fn apply(&self, plane: &[T]) -> Vec<T>;
    fn transpose(&self, cotangent: &[T]) -> Vec<T>;
}

/// One operand of a recorded operation. Values are captured so backward never
/// needs to look anything up; `node` is present only for tracked operands.
struct Input<T: Scalar> {
    data: Arc<Vec<T>>,
    shape: Shape,
    node: Option<NodeId>,
}

impl<T: Scalar> Input<T> {
    fn of(t: &Tensor<T>) -> Self {
        Input {
            data: t.data_arc(),
            shape: t.shape().clone(),
            node: t.node(),
        }
    }
}

enum Op<T: Scalar> {
    Leaf,
    Add { a: Input<T>, b: Input<T> },
    Sub { a: Input<T>, b: Input<T> },
    /// Elementwise product; either operand may be a 1-element scalar.
    Mul { a: Input<T>, b: Input<T> },
    /// Elementwise quotient; either operand may be a 1-element scalar.
    Div { a: Input<T>, b: Input<T> },
    Scale { x: Input<T>, k: T },
    Offset { x: Input<T> },
    Sum { x: Input<T> },
    Mse { a: Input<T>, b: Input<T> },
    LeakyRelu { x: Input<T>, slope: T },
    Conv2d {
        input: Input<T>,
        weight: Input<T>,
        bias: Input<T>,
        padding: usize,
    },
    StopGrad,
    StdDev { x: Input<T>, mean: T, sigma: T },
    SoftL0 { x: Input<T>, tau: T },
    Slice { x: Input<T>, offset: usize },
    Concat { parts: Vec<Input<T>> },
    Linear { x: Input<T>, op: Arc<dyn LinearOp<T>> },
}

/// Wengert tape: ordered record of primitive operations. Every node's inputs
/// precede it, so one reverse sweep visits each node exactly once. Single
/// threaded by design; independent training tasks own independent tapes.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Op<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn record(&self, op: Op<T>, value: Vec<T>, shape: Shape) -> Tensor<T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len());
        nodes.push(op);
        Tensor::from_parts(shape, Arc::new(value), Some(id))
    }

    /// Tracked input tensor; the only way gradient can reach a value.
    pub fn leaf(&self, data: Vec<T>, shape: impl Into<Shape>) -> Tensor<T> {
        let shape = shape.into();
        assert_eq!(data.len(), shape.numel(), "leaf data/shape mismatch");
        self.record(Op::Leaf, data, shape)
    }

    fn any_tracked(inputs: &[&Tensor<T>]) -> bool {
        inputs.iter().any(|t| t.requires_grad())
    }

    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        self.add_impl(a, b, None)
    }

    /// Add with a caller-supplied forward value. `pinned` must equal a + b up
    /// to rounding; the tape stores it verbatim so downstream consumers see
    /// exactly that value. Backward is the ordinary sum rule.
    pub(crate) fn add_pinned(&self, a: &Tensor<T>, b: &Tensor<T>, pinned: Vec<T>) -> Tensor<T> {
        self.add_impl(a, b, Some(pinned))
    }

    fn add_impl(&self, a: &Tensor<T>, b: &Tensor<T>, pinned: Option<Vec<T>>) -> Tensor<T> {
        assert_eq!(
            a.shape().dims(),
            b.shape().dims(),
            "add: shape mismatch {:?} vs {:?}",
            a.shape().dims(),
            b.shape().dims()
        );
        let value = match pinned {
            Some(v) => {
                assert_eq!(v.len(), a.data().len(), "pinned value length mismatch");
                v
            }
            None => a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| x + y)
                .collect(),
        };
        if !Self::any_tracked(&[a, b]) {
            return Tensor::constant(value, a.shape().clone());
        }
        self.record(
            Op::Add {
                a: Input::of(a),
                b: Input::of(b),
            },
            value,
            a.shape().clone(),
        )
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            a.shape().dims(),
            b.shape().dims(),
            "sub: shape mismatch {:?} vs {:?}",
            a.shape().dims(),
            b.shape().dims()
        );
        let value: Vec<T> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x - y)
            .collect();
        if !Self::any_tracked(&[a, b]) {
            return Tensor::constant(value, a.shape().clone());
        }
        self.record(
            Op::Sub {
                a: Input::of(a),
                b: Input::of(b),
            },
            value,
            a.shape().clone(),
        )
    }

    fn broadcast_check(a: &Tensor<T>, b: &Tensor<T>, what: &str) {
        let (la, lb) = (a.data().len(), b.data().len());
        assert!(
            la == lb || la == 1 || lb == 1,
            "{what}: incompatible lengths {la} vs {lb}"
        );
    }

    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        Self::broadcast_check(a, b, "mul");
        let (la, lb) = (a.data().len(), b.data().len());
        let out_shape = if la >= lb {
            a.shape().clone()
        } else {
            b.shape().clone()
        };
        let value: Vec<T> = if la == lb {
            a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect()
        } else if lb == 1 {
            let k = b.data()[0];
            a.data().iter().map(|&x| x * k).collect()
        } else {
            let k = a.data()[0];
            b.data().iter().map(|&x| k * x).collect()
        };
        if !Self::any_tracked(&[a, b]) {
            return Tensor::constant(value, out_shape);
        }
        self.record(
            Op::Mul {
                a: Input::of(a),
                b: Input::of(b),
            },
            value,
            out_shape,
        )
    }

    pub fn div(&self, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        Self::broadcast_check(a, b, "div");
        let (la, lb) = (a.data().len(), b.data().len());
        let out_shape = if la >= lb {
            a.shape().clone()
        } else {
            b.shape().clone()
        };
        let value: Vec<T> = if la == lb {
            a.data().iter().zip(b.data()).map(|(&x, &y)| x / y).collect()
        } else if lb == 1 {
            let k = b.data()[0];
            a.data().iter().map(|&x| x / k).collect()
        } else {
            let k = a.data()[0];
            b.data().iter().map(|&x| k / x).collect()
        };
        if !Self::any_tracked(&[a, b]) {
            return Tensor::constant(value, out_shape);
        }
        self.record(
            Op::Div {
                a: Input::of(a),
                b: Input::of(b),
            },
            value,
            out_shape,
        )
    }

    pub fn scale(&self, x: &Tensor<T>, k: T) -> Tensor<T> {
        let value: Vec<T> = x.data().iter().map(|&v| v * k).collect();
        if !x.requires_grad() {
            return Tensor::constant(value, x.shape().clone());
        }
        self.record(Op::Scale { x: Input::of(x), k }, value, x.shape().clone())
    }

    pub fn offset(&self, x: &Tensor<T>, k: T) -> Tensor<T> {
        let value: Vec<T> = x.data().iter().map(|&v| v + k).collect();
        if !x.requires_grad() {
            return Tensor::constant(value, x.shape().clone());
        }
        self.record(Op::Offset { x: Input::of(x) }, value, x.shape().clone())
    }

    pub fn sum(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut acc = T::ZERO;
        for &v in x.data() {
            acc += v;
        }
        if !x.requires_grad() {
            return Tensor::scalar(acc);
        }
        self.record(Op::Sum { x: Input::of(x) }, vec![acc], Shape::scalar())
    }

    /// Mean of squared differences; differentiable in both arguments.
    pub fn mse(&self, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!(
            a.shape().dims(),
            b.shape().dims(),
            "mse: shape mismatch {:?} vs {:?}",
            a.shape().dims(),
            b.shape().dims()
        );
        let n = T::from_f64(a.data().len() as f64);
        let mut acc = T::ZERO;
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let d = x - y;
            acc += d * d;
        }
        let value = acc / n;
        if !Self::any_tracked(&[a, b]) {
            return Tensor::scalar(value);
        }
        self.record(
            Op::Mse {
                a: Input::of(a),
                b: Input::of(b),
            },
            vec![value],
            Shape::scalar(),
        )
    }

    /// Elementwise max(x, slope * x). Backward passes 1 for x >= 0, slope below.
    pub fn leaky_relu(&self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        let value: Vec<T> = x
            .data()
            .iter()
            .map(|&v| if v >= T::ZERO { v } else { v * slope })
            .collect();
        if !x.requires_grad() {
            return Tensor::constant(value, x.shape().clone());
        }
        self.record(
            Op::LeakyRelu {
                x: Input::of(x),
                slope,
            },
            value,
            x.shape().clone(),
        )
    }

    /// Stride-1 2-D convolution (cross-correlation), NCHW input, OIKK weight,
    /// O bias, symmetric zero padding in pixels.
    pub fn conv2d(
        &self,
        input: &Tensor<T>,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        padding: usize,
    ) -> Tensor<T> {
        let (value, out_shape) = conv::forward(
            input.data(),
            input.shape(),
            weight.data(),
            weight.shape(),
            bias.data(),
            bias.shape(),
            padding,
        );
        if !Self::any_tracked(&[input, weight, bias]) {
            return Tensor::constant(value, out_shape);
        }
        self.record(
            Op::Conv2d {
                input: Input::of(input),
                weight: Input::of(weight),
                bias: Input::of(bias),
                padding,
            },
            value,
            out_shape,
        )
    }

    /// Forward identity, backward annihilator.
    pub fn stop_gradient(&self, x: &Tensor<T>) -> Tensor<T> {
        if !x.requires_grad() {
            return x.clone();
        }
        self.record(Op::StopGrad, x.data().to_vec(), x.shape().clone())
    }

    /// Population standard deviation over all elements (divisor N).
    /// ∂σ/∂x_j = (x_j − x̄) / (N σ); contributes zeros when σ = 0.
    pub fn std_dev(&self, x: &Tensor<T>) -> Tensor<T> {
        let n = x.data().len();
        assert!(n >= 2, "std_dev needs at least 2 elements, got {n}");
        let nf = T::from_f64(n as f64);
        let mut mean = T::ZERO;
        for &v in x.data() {
            mean += v;
        }
        mean = mean / nf;
        let mut var = T::ZERO;
        for &v in x.data() {
            let d = v - mean;
            var += d * d;
        }
        let sigma = (var / nf).sqrt();
        if !x.requires_grad() {
            return Tensor::scalar(sigma);
        }
        self.record(
            Op::StdDev {
                x: Input::of(x),
                mean,
                sigma,
            },
            vec![sigma],
            Shape::scalar(),
        )
    }

    /// Smooth nonzero count Σ x² / (x² + τ²), summed to a scalar.
    pub fn soft_l0(&self, x: &Tensor<T>, tau: T) -> Tensor<T> {
        assert!(tau > T::ZERO, "soft_l0 requires tau > 0");
        let t2 = tau * tau;
        let mut acc = T::ZERO;
        for &v in x.data() {
            let v2 = v * v;
            acc += v2 / (v2 + t2);
        }
        if !x.requires_grad() {
            return Tensor::scalar(acc);
        }
        self.record(
            Op::SoftL0 {
                x: Input::of(x),
                tau,
            },
            vec![acc],
            Shape::scalar(),
        )
    }

    /// Contiguous range of the flat layout, reshaped to `out_shape`.
    pub fn slice(
        &self,
        x: &Tensor<T>,
        offset: usize,
        len: usize,
        out_shape: impl Into<Shape>,
    ) -> Tensor<T> {
        let out_shape = out_shape.into();
        assert_eq!(out_shape.numel(), len, "slice shape/len mismatch");
        assert!(
            offset + len <= x.data().len(),
            "slice range {}..{} out of bounds for length {}",
            offset,
            offset + len,
            x.data().len()
        );
        let value = x.data()[offset..offset + len].to_vec();
        if !x.requires_grad() {
            return Tensor::constant(value, out_shape);
        }
        self.record(
            Op::Slice {
                x: Input::of(x),
                offset,
            },
            value,
            out_shape,
        )
    }

    /// Concatenation of flat layouts, reshaped to `out_shape`.
    pub fn concat(&self, parts: &[&Tensor<T>], out_shape: impl Into<Shape>) -> Tensor<T> {
        let out_shape = out_shape.into();
        assert!(!parts.is_empty(), "concat of zero tensors");
        let total: usize = parts.iter().map(|p| p.data().len()).sum();
        assert_eq!(out_shape.numel(), total, "concat shape/len mismatch");
        let mut value = Vec::with_capacity(total);
        for p in parts {
            value.extend_from_slice(p.data());
        }
        if !parts.iter().any(|p| p.requires_grad()) {
            return Tensor::constant(value, out_shape);
        }
        self.record(
            Op::Concat {
                parts: parts.iter().map(|p| Input::of(p)).collect(),
            },
            value,
            out_shape,
        )
    }

    /// Apply a linear plane operator to every (n, c) plane of an NCHW tensor.
    pub fn linear(&self, x: &Tensor<T>, op: Arc<dyn LinearOp<T>>) -> Tensor<T> {
        let (n, c, h, w) = x.shape().nchw();
        assert_eq!(op.in_dims(), (h, w), "linear op built for different dims");
        let (oh, ow) = op.out_dims();
        let mut value = Vec::with_capacity(n * c * oh * ow);
        for plane in x.data().chunks_exact(h * w) {
            value.extend_from_slice(&op.apply(plane));
        }
        let out_shape = Shape::new(vec![n, c, oh, ow]);
        if !x.requires_grad() {
            return Tensor::constant(value, out_shape);
        }
        self.record(Op::Linear { x: Input::of(x), op }, value, out_shape)
    }

    /// Reverse sweep from a scalar loss. Every tracked tensor reachable from
    /// the loss receives its full accumulated gradient; accumulation order is
    /// fixed by the tape order, so results are bit-reproducible.
    pub fn backward(&self, loss: &Tensor<T>) -> Gradients<T> {
        assert_eq!(loss.data().len(), 1, "backward requires a scalar loss");
        let root = loss
            .node()
            .expect("backward requires the loss to be on the tape");
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::ONE]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            propagate(&nodes[i], &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    input: &Input<T>,
    contrib: impl Iterator<Item = T>,
) {
    let Some(NodeId(id)) = input.node else { return };
    let buf = grads[id].get_or_insert_with(|| vec![T::ZERO; input.data.len()]);
    for (slot, c) in buf.iter_mut().zip(contrib) {
        *slot += c;
    }
}

/// Scatter-accumulate at an offset (slice backward).
fn accumulate_at<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    input: &Input<T>,
    offset: usize,
    cotangent: &[T],
) {
    let Some(NodeId(id)) = input.node else { return };
    let buf = grads[id].get_or_insert_with(|| vec![T::ZERO; input.data.len()]);
    for (slot, &c) in buf[offset..offset + cotangent.len()].iter_mut().zip(cotangent) {
        *slot += c;
    }
}

fn propagate<T: Scalar>(op: &Op<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
    match op {
        Op::Leaf | Op::StopGrad => {}
        Op::Add { a, b } => {
            accumulate(grads, a, g.iter().copied());
            accumulate(grads, b, g.iter().copied());
        }
        Op::Sub { a, b } => {
            accumulate(grads, a, g.iter().copied());
            accumulate(grads, b, g.iter().map(|&v| -v));
        }
        Op::Mul { a, b } => {
            let (la, lb) = (a.data.len(), b.data.len());
            if la == lb {
                accumulate(grads, a, g.iter().zip(b.data.iter()).map(|(&gv, &bv)| gv * bv));
                accumulate(grads, b, g.iter().zip(a.data.iter()).map(|(&gv, &av)| gv * av));
            } else if lb == 1 {
                let k = b.data[0];
                accumulate(grads, a, g.iter().map(|&gv| gv * k));
                let mut acc = T::ZERO;
                for (&gv, &av) in g.iter().zip(a.data.iter()) {
                    acc += gv * av;
                }
                accumulate(grads, b, std::iter::once(acc));
            } else {
                let k = a.data[0];
                accumulate(grads, b, g.iter().map(|&gv| gv * k));
                let mut acc = T::ZERO;
                for (&gv, &bv) in g.iter().zip(b.data.iter()) {
                    acc += gv * bv;
                }
                accumulate(grads, a, std::iter::once(acc));
            }
        }
        Op::Div { a, b } => {
            let (la, lb) = (a.data.len(), b.data.len());
            if la == lb {
                accumulate(
                    grads,
                    a,
                    g.iter().zip(b.data.iter()).map(|(&gv, &bv)| gv / bv),
                );
                accumulate(
                    grads,
                    b,
                    g.iter()
                        .zip(a.data.iter().zip(b.data.iter()))
                        .map(|(&gv, (&av, &bv))| -gv * av / (bv * bv)),
                );
            } else if lb == 1 {
                let k = b.data[0];
                accumulate(grads, a, g.iter().map(|&gv| gv / k));
                let mut acc = T::ZERO;
                for (&gv, &av) in g.iter().zip(a.data.iter()) {
                    acc += -gv * av / (k * k);
                }
                accumulate(grads, b, std::iter::once(acc));
            } else {
                let k = a.data[0];
                accumulate(
                    grads,
                    b,
                    g.iter()
                        .zip(b.data.iter())
                        .map(|(&gv, &bv)| -gv * k / (bv * bv)),
                );
                let mut acc = T::ZERO;
                for (&gv, &bv) in g.iter().zip(b.data.iter()) {
                    acc += gv / bv;
                }
                accumulate(grads, a, std::iter::once(acc));
            }
        }
        Op::Scale { x, k } => {
            accumulate(grads, x, g.iter().map(|&gv| gv * *k));
        }
        Op::Offset { x } => {
            accumulate(grads, x, g.iter().copied());
        }
        Op::Sum { x } => {
            let g0 = g[0];
            accumulate(grads, x, std::iter::repeat(g0).take(x.data.len()));
        }
        Op::Mse { a, b } => {
            let g0 = g[0];
            let scale = T::from_f64(2.0 / a.data.len() as f64) * g0;
            accumulate(
                grads,
                a,
                a.data
                    .iter()
                    .zip(b.data.iter())
                    .map(|(&av, &bv)| scale * (av - bv)),
            );
            accumulate(
                grads,
                b,
                a.data
                    .iter()
                    .zip(b.data.iter())
                    .map(|(&av, &bv)| -scale * (av - bv)),
            );
        }
        Op::LeakyRelu { x, slope } => {
            accumulate(
                grads,
                x,
                g.iter()
                    .zip(x.data.iter())
                    .map(|(&gv, &xv)| if xv >= T::ZERO { gv } else { gv * *slope }),
            );
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            padding,
        } => {
            let parts = conv::backward(
                g,
                &input.data,
                &input.shape,
                &weight.data,
                &weight.shape,
                *padding,
                input.node.is_some(),
                weight.node.is_some(),
                bias.node.is_some(),
            );
            if let Some(dx) = parts.input {
                accumulate_slice(grads, input, &dx);
            }
            if let Some(dw) = parts.weight {
                accumulate_slice(grads, weight, &dw);
            }
            if let Some(db) = parts.bias {
                accumulate_slice(grads, bias, &db);
            }
        }
        Op::StdDev { x, mean, sigma } => {
            let g0 = g[0];
            if *sigma == T::ZERO {
                return;
            }
            let denom = T::from_f64(x.data.len() as f64) * *sigma;
            accumulate(
                grads,
                x,
                x.data.iter().map(|&xv| g0 * (xv - *mean) / denom),
            );
        }
        Op::SoftL0 { x, tau } => {
            let g0 = g[0];
            let t2 = *tau * *tau;
            accumulate(
                grads,
                x,
                x.data.iter().map(|&xv| {
                    let d = xv * xv + t2;
                    g0 * (T::from_f64(2.0) * xv * t2) / (d * d)
                }),
            );
        }
        Op::Slice { x, offset } => {
            accumulate_at(grads, x, *offset, g);
        }
        Op::Concat { parts } => {
            let mut off = 0;
            for p in parts {
                let len = p.data.len();
                accumulate(grads, p, g[off..off + len].iter().copied());
                off += len;
            }
        }
        Op::Linear { x, op } => {
            if x.node.is_none() {
                return;
            }
            let (oh, ow) = op.out_dims();
            let mut contrib = Vec::with_capacity(x.data.len());
            for gplane in g.chunks_exact(oh * ow) {
                contrib.extend_from_slice(&op.transpose(gplane));
            }
            debug_assert_eq!(contrib.len(), x.data.len());
            accumulate_slice(grads, x, &contrib);
        }
    }
}

fn accumulate_slice<T: Scalar>(grads: &mut [Option<Vec<T>>], input: &Input<T>, contrib: &[T]) {
    accumulate(grads, input, contrib.iter().copied());
}

/// Gradient of a scalar loss with respect to every tracked tensor.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. `t`, or None when `t` is untracked or unreachable
    /// from the loss (an unreachable tracked tensor has zero gradient).
    pub fn wrt(&self, t: &Tensor<T>) -> Option<&[T]> {
        let NodeId(id) = t.node()?;
        self.grads.get(id)?.as_deref()
    }

    pub fn wrt_or_zeros(&self, t: &Tensor<T>) -> Vec<T> {
        self.wrt(t)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::ZERO; t.data().len()])
    }
}
