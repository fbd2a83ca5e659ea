//! Reverse-mode differentiation for the small set of operations the toolkit
//! needs: dense affine maps, ReLU, elementwise product, sum, squared L2
//! norm, softmax, and the inverse real FFT of a fixed-magnitude phase
//! parameterization. Not a general autodiff; programs are straight-line
//! compositions built once and evaluated as pure functions.

use crate::error::{Error, Result};
use crate::fft::{irfft2, phase_spectrum, phase_spectrum_vjp, SpectrumMagnitude};
use crate::tensor::{dot, softmax, squared_norm, Tensor};

/// Handle to a node inside a [`DiffProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { name: String },
    Affine { input: NodeId, weights: Tensor, bias: Vec<f64> },
    Relu { input: NodeId },
    Mul { lhs: NodeId, rhs: NodeId },
    Sum { input: NodeId },
    SquaredNorm { input: NodeId },
    Softmax { input: NodeId },
    IrfftPhase { input: NodeId, magnitude: SpectrumMagnitude },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// An ordered composition of primitives with designated input leaves and a
/// single output node. Evaluation and gradients are deterministic pure
/// functions of the inputs.
#[derive(Debug, Clone)]
pub struct DiffProgram {
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
    output: Option<NodeId>,
}

impl Default for DiffProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl DiffProgram {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaves: Vec::new(),
            output: None,
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, shape });
        id
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].shape.iter().product()
    }

    /// Declares an input leaf with a fixed shape.
    pub fn leaf(&mut self, name: impl Into<String>, shape: Vec<usize>) -> NodeId {
        let id = self.push(Op::Leaf { name: name.into() }, shape);
        self.leaves.push(id);
        id
    }

    /// Dense affine map `y = W x + b` with constant weights; `W` is
    /// rows x cols and the input is consumed as a flat vector of length cols.
    pub fn affine(&mut self, input: NodeId, weights: Tensor, bias: Vec<f64>) -> Result<NodeId> {
        let dims = weights.shape();
        if dims.len() != 2 {
            return Err(Error::ShapeMismatch {
                context: "affine weights".into(),
                expected: "2-d weight matrix".into(),
                got: format!("{dims:?}"),
            });
        }
        let (rows, cols) = (dims[0], dims[1]);
        if self.len_of(input) != cols || bias.len() != rows {
            return Err(Error::ShapeMismatch {
                context: "affine".into(),
                expected: format!("input of {cols}, bias of {rows}"),
                got: format!("input of {}, bias of {}", self.len_of(input), bias.len()),
            });
        }
        Ok(self.push(Op::Affine { input, weights, bias }, vec![rows]))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let shape = self.shape(input).to_vec();
        self.push(Op::Relu { input }, shape)
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::ShapeMismatch {
                context: "mul".into(),
                expected: format!("{:?}", self.shape(lhs)),
                got: format!("{:?}", self.shape(rhs)),
            });
        }
        let shape = self.shape(lhs).to_vec();
        Ok(self.push(Op::Mul { lhs, rhs }, shape))
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Sum { input }, vec![1])
    }

    pub fn squared_norm(&mut self, input: NodeId) -> NodeId {
        self.push(Op::SquaredNorm { input }, vec![1])
    }

    pub fn softmax(&mut self, input: NodeId) -> NodeId {
        let shape = self.shape(input).to_vec();
        self.push(Op::Softmax { input }, shape)
    }

    /// Inverse real FFT of `r * exp(i*phase)` where the magnitudes `r` are
    /// fixed and the phase field is the (differentiable) input.
    pub fn irfft_phase(&mut self, input: NodeId, magnitude: SpectrumMagnitude) -> Result<NodeId> {
        let slots = magnitude.height * magnitude.spectral_width();
        if self.len_of(input) != slots {
            return Err(Error::ShapeMismatch {
                context: "irfft_phase".into(),
                expected: format!("{slots} phase values"),
                got: format!("{}", self.len_of(input)),
            });
        }
        let shape = vec![magnitude.height, magnitude.width];
        Ok(self.push(Op::IrfftPhase { input, magnitude }, shape))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    fn check_inputs(&self, inputs: &[&Tensor]) -> Result<()> {
        if inputs.len() != self.leaves.len() {
            return Err(Error::InvalidArgument(format!(
                "program has {} leaves, got {} inputs",
                self.leaves.len(),
                inputs.len()
            )));
        }
        for (leaf, input) in self.leaves.iter().zip(inputs) {
            let expected: usize = self.nodes[leaf.0].shape.iter().product();
            if input.len() != expected {
                let name = match &self.nodes[leaf.0].op {
                    Op::Leaf { name } => name.clone(),
                    _ => unreachable!(),
                };
                return Err(Error::ShapeMismatch {
                    context: format!("leaf '{name}'"),
                    expected: format!("{expected} elements"),
                    got: format!("{} elements", input.len()),
                });
            }
        }
        Ok(())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(inputs)?;
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        let mut next_leaf = 0usize;
        for node in &self.nodes {
            let value = match &node.op {
                Op::Leaf { .. } => {
                    let v = inputs[next_leaf].data().to_vec();
                    next_leaf += 1;
                    v
                }
                Op::Affine { input, weights, bias } => {
                    let x = &values[input.0];
                    let rows = weights.shape()[0];
                    let cols = weights.shape()[1];
                    let w = weights.data();
                    (0..rows)
                        .map(|i| dot(&w[i * cols..(i + 1) * cols], x) + bias[i])
                        .collect()
                }
                Op::Relu { input } => values[input.0].iter().map(|&v| v.max(0.0)).collect(),
                Op::Mul { lhs, rhs } => values[lhs.0]
                    .iter()
                    .zip(&values[rhs.0])
                    .map(|(a, b)| a * b)
                    .collect(),
                Op::Sum { input } => vec![values[input.0].iter().sum()],
                Op::SquaredNorm { input } => vec![squared_norm(&values[input.0])],
                Op::Softmax { input } => softmax(&values[input.0]),
                Op::IrfftPhase { input, magnitude } => {
                    let spec = phase_spectrum(magnitude, &values[input.0])?;
                    irfft2(&spec).into_data()
                }
            };
            values.push(value);
        }
        Ok(values)
    }

    fn output_node(&self) -> Result<NodeId> {
        self.output
            .ok_or_else(|| Error::InvalidArgument("program has no output".into()))
    }

    /// Deterministic forward evaluation.
    pub fn evaluate(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let out = self.output_node()?;
        let values = self.forward(inputs)?;
        Tensor::new(self.nodes[out.0].shape.clone(), values[out.0].clone())
    }

    /// Exact reverse-mode gradient of the (scalar) output with respect to
    /// the named leaf. For vector outputs a component must be selected.
    pub fn gradient(
        &self,
        inputs: &[&Tensor],
        wrt: NodeId,
        component: Option<usize>,
    ) -> Result<Tensor> {
        let out = self.output_node()?;
        if !matches!(self.nodes[wrt.0].op, Op::Leaf { .. }) {
            return Err(Error::InvalidArgument(
                "gradient target must be a leaf".into(),
            ));
        }
        let values = self.forward(inputs)?;
        let out_len = values[out.0].len();
        let mut seed = vec![0.0; out_len];
        match component {
            Some(c) if c < out_len => seed[c] = 1.0,
            Some(c) => {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: out_len,
                })
            }
            None if out_len == 1 => seed[0] = 1.0,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "output has {out_len} components; select one to differentiate"
                )))
            }
        }

        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adjoint[out.0] = Some(seed);
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf { .. } => {
                    adjoint[idx] = Some(g);
                }
                Op::Affine { input, weights, .. } => {
                    let rows = weights.shape()[0];
                    let cols = weights.shape()[1];
                    let w = weights.data();
                    let mut gx = vec![0.0; cols];
                    for i in 0..rows {
                        let gi = g[i];
                        if gi != 0.0 {
                            for j in 0..cols {
                                gx[j] += gi * w[i * cols + j];
                            }
                        }
                    }
                    accumulate(&mut adjoint[input.0], gx);
                }
                Op::Relu { input } => {
                    let gx = values[input.0]
                        .iter()
                        .zip(&g)
                        .map(|(&x, &gi)| if x > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut adjoint[input.0], gx);
                }
                Op::Mul { lhs, rhs } => {
                    let gl: Vec<f64> = g.iter().zip(&values[rhs.0]).map(|(a, b)| a * b).collect();
                    let gr: Vec<f64> = g.iter().zip(&values[lhs.0]).map(|(a, b)| a * b).collect();
                    accumulate(&mut adjoint[lhs.0], gl);
                    accumulate(&mut adjoint[rhs.0], gr);
                }
                Op::Sum { input } => {
                    let gx = vec![g[0]; values[input.0].len()];
                    accumulate(&mut adjoint[input.0], gx);
                }
                Op::SquaredNorm { input } => {
                    let gx = values[input.0].iter().map(|&x| 2.0 * x * g[0]).collect();
                    accumulate(&mut adjoint[input.0], gx);
                }
                Op::Softmax { input } => {
                    let y = &values[idx];
                    let inner: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let gx = y.iter().zip(&g).map(|(&yi, &gi)| yi * (gi - inner)).collect();
                    accumulate(&mut adjoint[input.0], gx);
                }
                Op::IrfftPhase { input, magnitude } => {
                    let gx = phase_spectrum_vjp(magnitude, &values[input.0], &g);
                    accumulate(&mut adjoint[input.0], gx);
                }
            }
        }

        let shape = self.nodes[wrt.0].shape.clone();
        let grad = adjoint[wrt.0]
            .take()
            .unwrap_or_else(|| vec![0.0; shape.iter().product()]);
        Tensor::new(shape, grad)
    }

    /// Central finite differences: `(f(x + h e_i) - f(x - h e_i)) / 2h` per
    /// coordinate of the named leaf. Built on `evaluate` alone so it can
    /// serve as an independent oracle for `gradient`.
    pub fn central_difference_gradient(
        &self,
        inputs: &[&Tensor],
        wrt: NodeId,
        step: f64,
        component: Option<usize>,
    ) -> Result<Tensor> {
        if step <= 0.0 {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        let leaf_pos = self
            .leaves
            .iter()
            .position(|&l| l == wrt)
            .ok_or_else(|| Error::InvalidArgument("gradient target must be a leaf".into()))?;
        let base = inputs[leaf_pos];
        let mut grad = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = base.data().to_vec();
            let mut minus = base.data().to_vec();
            plus[i] += step;
            minus[i] -= step;
            let f_plus = self.eval_with_replaced(inputs, leaf_pos, plus, component)?;
            let f_minus = self.eval_with_replaced(inputs, leaf_pos, minus, component)?;
            grad.push((f_plus - f_minus) / (2.0 * step));
        }
        Tensor::new(base.shape().to_vec(), grad)
    }

    fn eval_with_replaced(
        &self,
        inputs: &[&Tensor],
        leaf_pos: usize,
        data: Vec<f64>,
        component: Option<usize>,
    ) -> Result<f64> {
        let replaced = Tensor::new(inputs[leaf_pos].shape().to_vec(), data)?;
        let mut swapped: Vec<&Tensor> = inputs.to_vec();
        swapped[leaf_pos] = &replaced;
        let out = self.evaluate(&swapped)?;
        match component {
            Some(c) => Ok(out.data()[c]),
            None => out.item(),
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        None => *slot = Some(contribution),
    }
}
