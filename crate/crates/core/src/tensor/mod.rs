//! Minimal reverse-mode automatic differentiation on a tape.
//!
//! A [`Tape`] owns every node of one differentiation graph; a [`Tensor`] is a
//! cheap handle (index) into that tape. Operations append nodes, so creation
//! order is already a topological order and [`Tape::backward`] simply walks
//! the nodes in reverse. One tape is confined to one thread; independent
//! tapes may run concurrently.
//!
//! Only the operators needed by the pattern network are provided: 1-D
//! convolution and max-pooling, a dense layer, elementwise arithmetic,
//! the usual nonlinearities, softmax, log-add-exp and reductions.

mod adam;
mod gradcheck;

pub use adam::{adam_step, AdamParams, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_subset};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor(usize);

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    /// Accumulated gradient; zeros until `backward` touches the node.
    grad: Vec<f64>,
    /// True for parameters and anything computed from one.
    needs_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// `mul * x + add`, elementwise with scalar coefficients.
    Affine { input: usize, mul: f64, add: f64 },
    /// `x^e` with a fixed exponent.
    PowConst { input: usize, exponent: f64 },
    Ln(usize),
    Exp(usize),
    Sigmoid(usize),
    Softplus(usize),
    Relu(usize),
    Softmax(usize),
    LogAddExp(usize, usize),
    Sum(usize),
    Mean(usize),
    /// `W x + b` with `W: [out, in]`, `x` flattened to `in`, `b: [out]`.
    Dense { input: usize, weight: usize, bias: usize },
    /// Cross-correlation of `[c_in, len]` with `[c_out, c_in, width]`.
    Conv1d { input: usize, kernels: usize, stride: usize, padding: usize },
    MaxPool1d { input: usize, argmax: Vec<usize> },
    /// `y[j] = sum_i coeffs[i] * rows[i, j]` with `rows: [k, m]`.
    MixRows { coeffs: usize, rows: usize },
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// One differentiation graph.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, needs_grad: bool, op: Op) -> Tensor {
        debug_assert_eq!(product(&shape), values.len());
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node {
            shape,
            values,
            grad,
            needs_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    /// Insert a trainable parameter; gradients flow into it.
    pub fn param(&mut self, shape: &[usize], values: &[f64]) -> Result<Tensor> {
        self.leaf(shape, values, true)
    }

    /// Insert a constant; backward never visits it.
    pub fn constant(&mut self, shape: &[usize], values: &[f64]) -> Result<Tensor> {
        self.leaf(shape, values, false)
    }

    /// Constant scalar.
    pub fn scalar(&mut self, value: f64) -> Tensor {
        self.push(vec![1], vec![value], false, Op::Leaf)
    }

    fn leaf(&mut self, shape: &[usize], values: &[f64], needs_grad: bool) -> Result<Tensor> {
        if product(shape) != values.len() {
            return Err(Error::Dimension(format!(
                "leaf shape {:?} implies {} values, got {}",
                shape,
                product(shape),
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values.to_vec(), needs_grad, Op::Leaf))
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].values
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, t: Tensor) -> f64 {
        debug_assert_eq!(self.nodes[t.0].values.len(), 1);
        self.nodes[t.0].values[0]
    }

    /// Accumulated gradient (zeros before the first backward pass).
    pub fn grad(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.0].grad
    }

    /// Reset every accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            for g in &mut node.grad {
                *g = 0.0;
            }
        }
    }

    fn binary_same_shape(&self, a: Tensor, b: Tensor, what: &str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::Dimension(format!(
                "{what}: left shape {:?} vs right shape {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary_same_shape(a, b, "add")?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(self.nodes[a.0].shape.clone(), values, needs, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary_same_shape(a, b, "sub")?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(self.nodes[a.0].shape.clone(), values, needs, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary_same_shape(a, b, "mul")?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(self.nodes[a.0].shape.clone(), values, needs, Op::Mul(a.0, b.0)))
    }

    pub fn div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary_same_shape(a, b, "div")?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x / y)
            .collect();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(self.nodes[a.0].shape.clone(), values, needs, Op::Div(a.0, b.0)))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: Tensor, mul: f64, add: f64) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| mul * v + add).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(
            self.nodes[x.0].shape.clone(),
            values,
            needs,
            Op::Affine { input: x.0, mul, add },
        )
    }

    pub fn neg(&mut self, x: Tensor) -> Tensor {
        self.affine(x, -1.0, 0.0)
    }

    /// Elementwise power with a fixed exponent; inputs must stay positive
    /// when the exponent is fractional.
    pub fn pow_const(&mut self, x: Tensor, exponent: f64) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.powf(exponent)).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(
            self.nodes[x.0].shape.clone(),
            values,
            needs,
            Op::PowConst { input: x.0, exponent },
        )
    }

    pub fn ln(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.ln()).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Ln(x.0))
    }

    pub fn exp(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.exp()).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Exp(x.0))
    }

    pub fn sigmoid(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| stable_sigmoid(v)).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Sigmoid(x.0))
    }

    pub fn softplus(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| stable_softplus(v)).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Softplus(x.0))
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.max(0.0)).collect();
        let needs = self.nodes[x.0].needs_grad;
        self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Relu(x.0))
    }

    /// Numerically stable softmax over the whole (flattened) tensor.
    pub fn softmax(&mut self, x: Tensor) -> Result<Tensor> {
        let input = &self.nodes[x.0].values;
        if input.is_empty() {
            return Err(Error::Contract("softmax of an empty tensor".into()));
        }
        let max = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = input.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let values: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(self.nodes[x.0].shape.clone(), values, needs, Op::Softmax(x.0)))
    }

    /// Elementwise `ln(exp(a) + exp(b))` without overflow.
    pub fn log_add_exp(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary_same_shape(a, b, "log_add_exp")?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| {
                let hi = x.max(y);
                let lo = x.min(y);
                hi + (lo - hi).exp().ln_1p()
            })
            .collect();
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(self.nodes[a.0].shape.clone(), values, needs, Op::LogAddExp(a.0, b.0)))
    }

    /// Sum of all elements; accumulation runs left to right for
    /// reproducibility.
    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let mut total = 0.0;
        for v in &self.nodes[x.0].values {
            total += v;
        }
        let needs = self.nodes[x.0].needs_grad;
        self.push(vec![1], vec![total], needs, Op::Sum(x.0))
    }

    pub fn mean(&mut self, x: Tensor) -> Result<Tensor> {
        let n = self.nodes[x.0].values.len();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let mut total = 0.0;
        for v in &self.nodes[x.0].values {
            total += v;
        }
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(vec![1], vec![total / n as f64], needs, Op::Mean(x.0)))
    }

    /// Dense layer `W x + b`. The input is used flattened; `W` is
    /// `[out, in]` row-major and `b` is `[out]`.
    pub fn dense(&mut self, x: Tensor, weight: Tensor, bias: Tensor) -> Result<Tensor> {
        let in_features = self.nodes[x.0].values.len();
        let w_shape = &self.nodes[weight.0].shape;
        if w_shape.len() != 2 || w_shape[1] != in_features {
            return Err(Error::Dimension(format!(
                "dense: weight shape {:?} incompatible with input of {} features",
                w_shape, in_features
            )));
        }
        let out_features = w_shape[0];
        if self.nodes[bias.0].values.len() != out_features {
            return Err(Error::Dimension(format!(
                "dense: bias has {} entries, weight implies {}",
                self.nodes[bias.0].values.len(),
                out_features
            )));
        }
        let w = &self.nodes[weight.0].values;
        let xv = &self.nodes[x.0].values;
        let bv = &self.nodes[bias.0].values;
        let mut values = Vec::with_capacity(out_features);
        for o in 0..out_features {
            let row = &w[o * in_features..(o + 1) * in_features];
            let mut acc = bv[o];
            for (wv, xvv) in row.iter().zip(xv) {
                acc += wv * xvv;
            }
            values.push(acc);
        }
        let needs = self.needs(&[x.0, weight.0, bias.0]);
        Ok(self.push(
            vec![out_features],
            values,
            needs,
            Op::Dense { input: x.0, weight: weight.0, bias: bias.0 },
        ))
    }

    /// 1-D cross-correlation (no kernel flip). `input: [c_in, len]`,
    /// `kernels: [c_out, c_in, width]`; zero padding on both ends.
    pub fn conv1d(&mut self, input: Tensor, kernels: Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        if stride == 0 {
            return Err(Error::Contract("conv1d: stride must be positive".into()));
        }
        let in_shape = self.nodes[input.0].shape.clone();
        let k_shape = self.nodes[kernels.0].shape.clone();
        if in_shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "conv1d: input must be [channels, length], got {:?}",
                in_shape
            )));
        }
        if k_shape.len() != 3 {
            return Err(Error::Dimension(format!(
                "conv1d: kernels must be [c_out, c_in, width], got {:?}",
                k_shape
            )));
        }
        let (c_in, len) = (in_shape[0], in_shape[1]);
        let (c_out, k_cin, width) = (k_shape[0], k_shape[1], k_shape[2]);
        if k_cin != c_in {
            return Err(Error::Dimension(format!(
                "conv1d: input has {c_in} channels but kernels expect {k_cin}"
            )));
        }
        if width > len + 2 * padding {
            return Err(Error::Dimension(format!(
                "conv1d: kernel width {width} exceeds padded length {}",
                len + 2 * padding
            )));
        }
        let out_len = (len + 2 * padding - width) / stride + 1;
        let inp = &self.nodes[input.0].values;
        let ker = &self.nodes[kernels.0].values;
        let mut values = vec![0.0; c_out * out_len];
        for o in 0..c_out {
            let out_row = &mut values[o * out_len..(o + 1) * out_len];
            for c in 0..c_in {
                let in_row = &inp[c * len..(c + 1) * len];
                let k_row = &ker[(o * c_in + c) * width..(o * c_in + c + 1) * width];
                for (w, &kv) in k_row.iter().enumerate() {
                    if kv == 0.0 {
                        continue;
                    }
                    for (t, out) in out_row.iter_mut().enumerate() {
                        let pos = t * stride + w;
                        if pos >= padding && pos - padding < len {
                            *out += kv * in_row[pos - padding];
                        }
                    }
                }
            }
        }
        let needs = self.needs(&[input.0, kernels.0]);
        Ok(self.push(
            vec![c_out, out_len],
            values,
            needs,
            Op::Conv1d { input: input.0, kernels: kernels.0, stride, padding },
        ))
    }

    /// Max pooling over each window; gradient routes to the first maximal
    /// element of the window.
    pub fn maxpool1d(&mut self, input: Tensor, window: usize, stride: usize) -> Result<Tensor> {
        if window == 0 || stride == 0 {
            return Err(Error::Contract("maxpool1d: window and stride must be positive".into()));
        }
        let in_shape = self.nodes[input.0].shape.clone();
        if in_shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "maxpool1d: input must be [channels, length], got {:?}",
                in_shape
            )));
        }
        let (channels, len) = (in_shape[0], in_shape[1]);
        if window > len {
            return Err(Error::Dimension(format!(
                "maxpool1d: window {window} exceeds input length {len}"
            )));
        }
        let out_len = (len - window) / stride + 1;
        let inp = &self.nodes[input.0].values;
        let mut values = vec![0.0; channels * out_len];
        let mut argmax = vec![0usize; channels * out_len];
        for c in 0..channels {
            let row = &inp[c * len..(c + 1) * len];
            for t in 0..out_len {
                let start = t * stride;
                let mut best = row[start];
                let mut best_idx = start;
                for (offset, &v) in row[start..start + window].iter().enumerate() {
                    if v > best {
                        best = v;
                        best_idx = start + offset;
                    }
                }
                values[c * out_len + t] = best;
                argmax[c * out_len + t] = c * len + best_idx;
            }
        }
        let needs = self.nodes[input.0].needs_grad;
        Ok(self.push(
            vec![channels, out_len],
            values,
            needs,
            Op::MaxPool1d { input: input.0, argmax },
        ))
    }

    /// Weighted sum of the rows of `rows: [k, m]` with coefficients
    /// `coeffs: [k]`, yielding `[m]`.
    pub fn mix_rows(&mut self, coeffs: Tensor, rows: Tensor) -> Result<Tensor> {
        let r_shape = self.nodes[rows.0].shape.clone();
        if r_shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "mix_rows: rows must be [k, m], got {:?}",
                r_shape
            )));
        }
        let (k, m) = (r_shape[0], r_shape[1]);
        if self.nodes[coeffs.0].values.len() != k {
            return Err(Error::Dimension(format!(
                "mix_rows: {} coefficients for {} rows",
                self.nodes[coeffs.0].values.len(),
                k
            )));
        }
        let cv = &self.nodes[coeffs.0].values;
        let rv = &self.nodes[rows.0].values;
        let mut values = vec![0.0; m];
        for (i, &c) in cv.iter().enumerate() {
            let row = &rv[i * m..(i + 1) * m];
            for (out, &r) in values.iter_mut().zip(row) {
                *out += c * r;
            }
        }
        let needs = self.needs(&[coeffs.0, rows.0]);
        Ok(self.push(vec![m], values, needs, Op::MixRows { coeffs: coeffs.0, rows: rows.0 }))
    }

    /// Reverse pass from a scalar loss. Gradients accumulate into every
    /// node reachable from a parameter; call [`Tape::zero_grad`] between
    /// unrelated passes.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        // Per-call flows; the persistent `grad` fields only receive the
        // final contributions so repeated backward calls accumulate.
        let mut flows: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        flows[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let flow = match flows[id].take() {
                Some(f) => f,
                None => continue,
            };
            if !self.nodes[id].needs_grad {
                continue;
            }
            self.propagate(id, &flow, &mut flows);
            for (g, f) in self.nodes[id].grad.iter_mut().zip(&flow) {
                *g += f;
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, flow: &[f64], flows: &mut [Option<Vec<f64>>]) {
        fn add_into(flows: &mut [Option<Vec<f64>>], target: usize, len: usize) -> &mut Vec<f64> {
            flows[target].get_or_insert_with(|| vec![0.0; len])
        }
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (parent, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if self.nodes[parent].needs_grad {
                        let dst = add_into(flows, parent, flow.len());
                        for (d, f) in dst.iter_mut().zip(flow) {
                            *d += sign * f;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                for (parent, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if self.nodes[parent].needs_grad {
                        let dst = add_into(flows, parent, flow.len());
                        for (d, f) in dst.iter_mut().zip(flow) {
                            *d += sign * f;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].needs_grad {
                    let bv = &self.nodes[b].values;
                    let dst = add_into(flows, a, flow.len());
                    for ((d, f), v) in dst.iter_mut().zip(flow).zip(bv) {
                        *d += f * v;
                    }
                }
                if self.nodes[b].needs_grad {
                    let av = &self.nodes[a].values;
                    let dst = add_into(flows, b, flow.len());
                    for ((d, f), v) in dst.iter_mut().zip(flow).zip(av) {
                        *d += f * v;
                    }
                }
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].needs_grad {
                    let bv = &self.nodes[b].values;
                    let dst = add_into(flows, a, flow.len());
                    for ((d, f), v) in dst.iter_mut().zip(flow).zip(bv) {
                        *d += f / v;
                    }
                }
                if self.nodes[b].needs_grad {
                    let av = &self.nodes[a].values;
                    let bv = &self.nodes[b].values;
                    let dst = add_into(flows, b, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d -= f * av[i] / (bv[i] * bv[i]);
                    }
                }
            }
            Op::Affine { input, mul, .. } => {
                if self.nodes[*input].needs_grad {
                    let dst = add_into(flows, *input, flow.len());
                    for (d, f) in dst.iter_mut().zip(flow) {
                        *d += mul * f;
                    }
                }
            }
            Op::PowConst { input, exponent } => {
                if self.nodes[*input].needs_grad {
                    let xv = &self.nodes[*input].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * exponent * xv[i].powf(exponent - 1.0);
                    }
                }
            }
            Op::Ln(input) => {
                if self.nodes[*input].needs_grad {
                    let xv = &self.nodes[*input].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f / xv[i];
                    }
                }
            }
            Op::Exp(input) => {
                if self.nodes[*input].needs_grad {
                    let out = &self.nodes[id].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * out[i];
                    }
                }
            }
            Op::Sigmoid(input) => {
                if self.nodes[*input].needs_grad {
                    let out = &self.nodes[id].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * out[i] * (1.0 - out[i]);
                    }
                }
            }
            Op::Softplus(input) => {
                if self.nodes[*input].needs_grad {
                    let xv = &self.nodes[*input].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * stable_sigmoid(xv[i]);
                    }
                }
            }
            Op::Relu(input) => {
                if self.nodes[*input].needs_grad {
                    let xv = &self.nodes[*input].values;
                    let dst = add_into(flows, *input, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        if xv[i] > 0.0 {
                            *d += f;
                        }
                    }
                }
            }
            Op::Softmax(input) => {
                if self.nodes[*input].needs_grad {
                    let out = &self.nodes[id].values;
                    let dot: f64 = flow.iter().zip(out).map(|(f, z)| f * z).sum();
                    let dst = add_into(flows, *input, flow.len());
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d += out[i] * (flow[i] - dot);
                    }
                }
            }
            Op::LogAddExp(a, b) => {
                let (a, b) = (*a, *b);
                let av = &self.nodes[a].values;
                let bv = &self.nodes[b].values;
                if self.nodes[a].needs_grad {
                    let dst = add_into(flows, a, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * stable_sigmoid(av[i] - bv[i]);
                    }
                }
                if self.nodes[b].needs_grad {
                    let dst = add_into(flows, b, flow.len());
                    for (i, (d, f)) in dst.iter_mut().zip(flow).enumerate() {
                        *d += f * stable_sigmoid(bv[i] - av[i]);
                    }
                }
            }
            Op::Sum(input) => {
                if self.nodes[*input].needs_grad {
                    let n = self.nodes[*input].values.len();
                    let dst = add_into(flows, *input, n);
                    for d in dst.iter_mut() {
                        *d += flow[0];
                    }
                }
            }
            Op::Mean(input) => {
                if self.nodes[*input].needs_grad {
                    let n = self.nodes[*input].values.len();
                    let share = flow[0] / n as f64;
                    let dst = add_into(flows, *input, n);
                    for d in dst.iter_mut() {
                        *d += share;
                    }
                }
            }
            Op::Dense { input, weight, bias } => {
                let (input, weight, bias) = (*input, *weight, *bias);
                let in_features = self.nodes[input].values.len();
                if self.nodes[input].needs_grad {
                    let w = &self.nodes[weight].values;
                    let dst = add_into(flows, input, in_features);
                    for (o, f) in flow.iter().enumerate() {
                        let row = &w[o * in_features..(o + 1) * in_features];
                        for (d, wv) in dst.iter_mut().zip(row) {
                            *d += f * wv;
                        }
                    }
                }
                if self.nodes[weight].needs_grad {
                    let xv = &self.nodes[input].values;
                    let dst = add_into(flows, weight, self.nodes[weight].values.len());
                    for (o, f) in flow.iter().enumerate() {
                        let row = &mut dst[o * in_features..(o + 1) * in_features];
                        for (d, xvv) in row.iter_mut().zip(xv) {
                            *d += f * xvv;
                        }
                    }
                }
                if self.nodes[bias].needs_grad {
                    let dst = add_into(flows, bias, flow.len());
                    for (d, f) in dst.iter_mut().zip(flow) {
                        *d += f;
                    }
                }
            }
            Op::Conv1d { input, kernels, stride, padding } => {
                let (input, kernels, stride, padding) = (*input, *kernels, *stride, *padding);
                let in_shape = &self.nodes[input].shape;
                let k_shape = &self.nodes[kernels].shape;
                let (c_in, len) = (in_shape[0], in_shape[1]);
                let (c_out, width) = (k_shape[0], k_shape[2]);
                let out_len = self.nodes[id].shape[1];
                let inp = &self.nodes[input].values;
                let ker = &self.nodes[kernels].values;
                let input_needs = self.nodes[input].needs_grad;
                if input_needs {
                    let dst = add_into(flows, input, inp.len());
                    for o in 0..c_out {
                        let g_row = &flow[o * out_len..(o + 1) * out_len];
                        for c in 0..c_in {
                            let k_row = &ker[(o * c_in + c) * width..(o * c_in + c + 1) * width];
                            let d_row = &mut dst[c * len..(c + 1) * len];
                            for (w, &kv) in k_row.iter().enumerate() {
                                for (t, &g) in g_row.iter().enumerate() {
                                    let pos = t * stride + w;
                                    if pos >= padding && pos - padding < len {
                                        d_row[pos - padding] += g * kv;
                                    }
                                }
                            }
                        }
                    }
                }
                if self.nodes[kernels].needs_grad {
                    let dst = add_into(flows, kernels, ker.len());
                    for o in 0..c_out {
                        let g_row = &flow[o * out_len..(o + 1) * out_len];
                        for c in 0..c_in {
                            let in_row = &inp[c * len..(c + 1) * len];
                            let d_row = &mut dst[(o * c_in + c) * width..(o * c_in + c + 1) * width];
                            for (w, d) in d_row.iter_mut().enumerate() {
                                let mut acc = 0.0;
                                for (t, &g) in g_row.iter().enumerate() {
                                    let pos = t * stride + w;
                                    if pos >= padding && pos - padding < len {
                                        acc += g * in_row[pos - padding];
                                    }
                                }
                                *d += acc;
                            }
                        }
                    }
                }
            }
            Op::MaxPool1d { input, argmax } => {
                if self.nodes[*input].needs_grad {
                    let n = self.nodes[*input].values.len();
                    let dst = add_into(flows, *input, n);
                    for (f, &src) in flow.iter().zip(argmax) {
                        dst[src] += f;
                    }
                }
            }
            Op::MixRows { coeffs, rows } => {
                let (coeffs, rows) = (*coeffs, *rows);
                let k = self.nodes[coeffs].values.len();
                let m = flow.len();
                if self.nodes[coeffs].needs_grad {
                    let rv = &self.nodes[rows].values;
                    let dst = add_into(flows, coeffs, k);
                    for (i, d) in dst.iter_mut().enumerate() {
                        let row = &rv[i * m..(i + 1) * m];
                        let mut acc = 0.0;
                        for (f, r) in flow.iter().zip(row) {
                            acc += f * r;
                        }
                        *d += acc;
                    }
                }
                if self.nodes[rows].needs_grad {
                    let cv = &self.nodes[coeffs].values;
                    let dst = add_into(flows, rows, k * m);
                    for (i, &c) in cv.iter().enumerate() {
                        let row = &mut dst[i * m..(i + 1) * m];
                        for (d, f) in row.iter_mut().zip(flow) {
                            *d += c * f;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
