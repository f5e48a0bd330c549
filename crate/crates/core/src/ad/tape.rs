//! Reverse-mode differentiation over a linear tape.
//!
//! Every primitive appends one node whose inputs are strictly earlier
//! nodes, so walking the tape backwards from the root visits nodes in
//! reverse topological order, each exactly once.

use std::sync::atomic::{AtomicU64, Ordering};

use super::array::{matmul_into, transpose_data, NumericArray, Scalar};
use super::params::ParameterStore;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

/// The primitive set.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive<T> {
    /// `[m,k] · [k,n] -> [m,n]`
    MatMul,
    /// Elementwise sum of equal shapes.
    Add,
    /// `[m,n] + [n]`, the vector added to every row.
    AddBias,
    /// Elementwise product of equal shapes.
    Mul,
    Scale(T),
    Tanh,
    Sigmoid,
    Relu,
    Ln,
    Softmax { axis: usize },
    /// Sum of all elements, producing a scalar.
    Sum,
    /// Mean of all elements, producing a scalar.
    Mean,
    /// Maximum along an axis; the axis is removed from the shape.
    MaxAxis { axis: usize },
    Transpose,
    Reshape(Vec<usize>),
    /// Elementwise binary cross-entropy of probabilities against constant
    /// soft targets, with the probability clamped to `[1e-7, 1 - 1e-7]`.
    BinaryCrossEntropy(Vec<T>),
}

impl<T> Primitive<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::AddBias => "add_bias",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Ln => "ln",
            Primitive::Softmax { .. } => "softmax",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::MaxAxis { .. } => "max_axis",
            Primitive::Transpose => "transpose",
            Primitive::Reshape(_) => "reshape",
            Primitive::BinaryCrossEntropy(_) => "binary_cross_entropy",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::AddBias | Primitive::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
enum Origin<T> {
    Constant,
    Param(String),
    Applied {
        prim: Primitive<T>,
        inputs: Vec<usize>,
        /// Argmax positions for `MaxAxis`.
        aux: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: NumericArray<T>,
    origin: Origin<T>,
}

/// Records primitive applications for one forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that evaluates primitives without keeping backward
    /// information. Inference only.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: NumericArray<T>, origin: Origin<T>) -> NodeId {
        self.nodes.push(Node { value, origin });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index_of(&self, id: NodeId) -> Result<usize> {
        if id.tape != self.id || id.index >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(id.index)
    }

    pub fn constant(&mut self, value: NumericArray<T>) -> NodeId {
        self.push(value, Origin::Constant)
    }

    /// Reads a parameter's current value onto the tape. Gradients reaching
    /// this node are accumulated into `store` by [`Tape::backward`].
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<NodeId> {
        let value = store.value(name)?.clone();
        let origin = if self.recording {
            Origin::Param(name.to_string())
        } else {
            Origin::Constant
        };
        Ok(self.push(value, origin))
    }

    pub fn value(&self, id: NodeId) -> &NumericArray<T> {
        assert_eq!(id.tape, self.id, "node from a different tape");
        &self.nodes[id.index].value
    }

    pub fn apply(&mut self, prim: Primitive<T>, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != prim.arity() {
            return Err(Error::Shape {
                op: prim.name(),
                detail: format!("expects {} inputs, got {}", prim.arity(), inputs.len()),
            });
        }
        let idx = inputs
            .iter()
            .map(|&i| self.index_of(i))
            .collect::<Result<Vec<_>>>()?;
        let args: Vec<&NumericArray<T>> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let (value, aux) = forward(&prim, &args)?;
        if !value.all_finite() {
            return Err(Error::NonFinite { op: prim.name() });
        }
        let origin = if self.recording {
            Origin::Applied {
                prim,
                inputs: idx,
                aux,
            }
        } else {
            Origin::Constant
        };
        Ok(self.push(value, origin))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.apply(Primitive::AddBias, &[a, bias])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        self.apply(Primitive::Scale(c), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sigmoid, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Ln, &[a])
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.apply(Primitive::Softmax { axis }, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn max_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.apply(Primitive::MaxAxis { axis }, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Transpose, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }

    pub fn binary_cross_entropy(&mut self, probs: NodeId, targets: Vec<T>) -> Result<NodeId> {
        self.apply(Primitive::BinaryCrossEntropy(targets), &[probs])
    }

    /// Propagates d(root)/d(node) back through the tape and adds the
    /// parameter gradients into `store`.
    pub fn backward(&self, root: NodeId, store: &mut ParameterStore<T>) -> Result<()> {
        let root_idx = self.index_of(root)?;
        if !self.recording {
            return Err(Error::NotRecording);
        }
        let root_value = &self.nodes[root_idx].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: root_value.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; root_idx + 1];
        grads[root_idx] = Some(vec![T::one()]);

        for i in (0..=root_idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.origin {
                Origin::Constant => {}
                Origin::Param(name) => store.accumulate_grad(name, &g)?,
                Origin::Applied { prim, inputs, aux } => {
                    let args: Vec<&NumericArray<T>> =
                        inputs.iter().map(|&j| &self.nodes[j].value).collect();
                    let local = local_grads(prim, &args, &node.value, aux, &g);
                    for (&j, lg) in inputs.iter().zip(local) {
                        match &mut grads[j] {
                            Some(acc) => acc.iter_mut().zip(&lg).for_each(|(a, &b)| *a = *a + b),
                            slot @ None => *slot = Some(lg),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err(
            op,
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn map<T: Scalar>(a: &NumericArray<T>, f: impl Fn(T) -> T) -> NumericArray<T> {
    NumericArray::new(a.shape().to_vec(), a.data().iter().map(|&v| f(v)).collect())
        .expect("shape preserved")
}

fn sigmoid<T: Scalar>(x: T) -> T {
    // Branch on sign so that exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = T::from_f64_lossy(PROB_CLAMP);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

fn forward<T: Scalar>(
    prim: &Primitive<T>,
    args: &[&NumericArray<T>],
) -> Result<(NumericArray<T>, Vec<usize>)> {
    let name = prim.name();
    let a = args[0];
    let out = match prim {
        Primitive::MatMul => {
            let b = args[1];
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(shape_err(
                    name,
                    format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![T::zero(); m * n];
            matmul_into(a.data(), b.data(), &mut out, m, k, n);
            NumericArray::new(vec![m, n], out)?
        }
        Primitive::Add | Primitive::Mul => {
            let b = args[1];
            if a.shape() != b.shape() {
                return Err(shape_err(
                    name,
                    format!("operands {:?} and {:?} differ", a.shape(), b.shape()),
                ));
            }
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| if matches!(prim, Primitive::Add) { x + y } else { x * y })
                .collect();
            NumericArray::new(a.shape().to_vec(), data)?
        }
        Primitive::AddBias => {
            let b = args[1];
            if a.shape().len() != 2 || b.shape() != [a.shape()[1]] {
                return Err(shape_err(
                    name,
                    format!("bias {:?} does not match rows of {:?}", b.shape(), a.shape()),
                ));
            }
            let cols = a.shape()[1];
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + b.data()[i % cols])
                .collect();
            NumericArray::new(a.shape().to_vec(), data)?
        }
        Primitive::Scale(c) => map(a, |v| v * *c),
        Primitive::Tanh => map(a, T::tanh),
        Primitive::Sigmoid => map(a, sigmoid),
        Primitive::Relu => map(a, |v| if v > T::zero() { v } else { T::zero() }),
        Primitive::Ln => map(a, T::ln),
        Primitive::Softmax { axis } => {
            let (outer, len, inner) = axis_split(name, a.shape(), *axis)?;
            let mut out = a.data().to_vec();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * len * inner + k * inner + i;
                    let max = (0..len)
                        .map(|k| out[at(k)])
                        .fold(T::neg_infinity(), T::max);
                    let mut total = T::zero();
                    for k in 0..len {
                        let e = (out[at(k)] - max).exp();
                        out[at(k)] = e;
                        total = total + e;
                    }
                    for k in 0..len {
                        out[at(k)] = out[at(k)] / total;
                    }
                }
            }
            NumericArray::new(a.shape().to_vec(), out)?
        }
        Primitive::Sum => NumericArray::scalar(a.data().iter().fold(T::zero(), |s, &v| s + v)),
        Primitive::Mean => {
            let s = a.data().iter().fold(T::zero(), |s, &v| s + v);
            NumericArray::scalar(s / T::from_usize(a.len()).expect("length fits"))
        }
        Primitive::MaxAxis { axis } => {
            let (outer, len, inner) = axis_split(name, a.shape(), *axis)?;
            let mut out = Vec::with_capacity(outer * inner);
            let mut argmax = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let mut best = o * len * inner + i;
                    for k in 1..len {
                        let at = o * len * inner + k * inner + i;
                        if a.data()[at] > a.data()[best] {
                            best = at;
                        }
                    }
                    out.push(a.data()[best]);
                    argmax.push(best);
                }
            }
            let mut shape = a.shape().to_vec();
            shape.remove(*axis);
            return Ok((NumericArray::new(shape, out)?, argmax));
        }
        Primitive::Transpose => {
            if a.shape().len() != 2 {
                return Err(shape_err(
                    name,
                    format!("needs a rank-2 array, got {:?}", a.shape()),
                ));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            NumericArray::new(vec![c, r], transpose_data(a.data(), r, c))?
        }
        Primitive::Reshape(shape) => {
            let len: usize = shape.iter().product();
            if len != a.len() {
                return Err(shape_err(
                    name,
                    format!("cannot reshape {:?} into {:?}", a.shape(), shape),
                ));
            }
            NumericArray::new(shape.clone(), a.data().to_vec())?
        }
        Primitive::BinaryCrossEntropy(targets) => {
            if targets.len() != a.len() {
                return Err(shape_err(
                    name,
                    format!("{} targets for {} predictions", targets.len(), a.len()),
                ));
            }
            if let Some(t) = targets.iter().find(|&&t| !(t >= T::zero() && t <= T::one())) {
                return Err(Error::InvalidInput(format!(
                    "cross-entropy target {t} outside [0, 1]"
                )));
            }
            let data = a
                .data()
                .iter()
                .zip(targets)
                .map(|(&p, &t)| {
                    let p = clamp_prob(p);
                    -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
                })
                .collect();
            NumericArray::new(a.shape().to_vec(), data)?
        }
    };
    Ok((out, Vec::new()))
}

fn local_grads<T: Scalar>(
    prim: &Primitive<T>,
    args: &[&NumericArray<T>],
    out: &NumericArray<T>,
    aux: &[usize],
    g: &[T],
) -> Vec<Vec<T>> {
    let a = args[0];
    let zip_map = |f: &dyn Fn(T, T) -> T, xs: &[T]| -> Vec<T> {
        g.iter().zip(xs).map(|(&gi, &x)| f(gi, x)).collect()
    };
    match prim {
        Primitive::MatMul => {
            let b = args[1];
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let bt = transpose_data(b.data(), k, n);
            let mut ga = vec![T::zero(); m * k];
            matmul_into(g, &bt, &mut ga, m, n, k);
            let at = transpose_data(a.data(), m, k);
            let mut gb = vec![T::zero(); k * n];
            matmul_into(&at, g, &mut gb, k, m, n);
            vec![ga, gb]
        }
        Primitive::Add => vec![g.to_vec(), g.to_vec()],
        Primitive::AddBias => {
            let cols = a.shape()[1];
            let mut gb = vec![T::zero(); cols];
            for (i, &gi) in g.iter().enumerate() {
                gb[i % cols] = gb[i % cols] + gi;
            }
            vec![g.to_vec(), gb]
        }
        Primitive::Mul => {
            let b = args[1];
            vec![
                zip_map(&|gi, y| gi * y, b.data()),
                zip_map(&|gi, x| gi * x, a.data()),
            ]
        }
        Primitive::Scale(c) => vec![g.iter().map(|&gi| gi * *c).collect()],
        Primitive::Tanh => vec![zip_map(&|gi, y| gi * (T::one() - y * y), out.data())],
        Primitive::Sigmoid => vec![zip_map(&|gi, y| gi * y * (T::one() - y), out.data())],
        Primitive::Relu => vec![zip_map(
            &|gi, x| if x > T::zero() { gi } else { T::zero() },
            a.data(),
        )],
        Primitive::Ln => vec![zip_map(&|gi, x| gi / x, a.data())],
        Primitive::Softmax { axis } => {
            let shape = a.shape();
            let outer: usize = shape[..*axis].iter().product();
            let len = shape[*axis];
            let inner: usize = shape[*axis + 1..].iter().product();
            let y = out.data();
            let mut ga = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * len * inner + k * inner + i;
                    let dot = (0..len).fold(T::zero(), |s, k| s + g[at(k)] * y[at(k)]);
                    for k in 0..len {
                        ga[at(k)] = y[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![ga]
        }
        Primitive::Sum => vec![vec![g[0]; a.len()]],
        Primitive::Mean => {
            let n = T::from_usize(a.len()).expect("length fits");
            vec![vec![g[0] / n; a.len()]]
        }
        Primitive::MaxAxis { .. } => {
            let mut ga = vec![T::zero(); a.len()];
            for (&pos, &gi) in aux.iter().zip(g) {
                ga[pos] = ga[pos] + gi;
            }
            vec![ga]
        }
        Primitive::Transpose => {
            // g has the transposed shape [c, r].
            let (r, c) = (a.shape()[0], a.shape()[1]);
            vec![transpose_data(g, c, r)]
        }
        Primitive::Reshape(_) => vec![g.to_vec()],
        Primitive::BinaryCrossEntropy(targets) => {
            let lo = T::from_f64_lossy(PROB_CLAMP);
            let hi = T::one() - lo;
            let ga = a
                .data()
                .iter()
                .zip(targets)
                .zip(g)
                .map(|((&p, &t), &gi)| {
                    if p < lo || p > hi {
                        T::zero()
                    } else {
                        gi * (p - t) / (p * (T::one() - p))
                    }
                })
                .collect();
            vec![ga]
        }
    }
}
