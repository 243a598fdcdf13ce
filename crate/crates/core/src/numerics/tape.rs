use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::kernels::{self, ConvGeometry};
use super::{NumericsError, Tensor};

type Result<T> = std::result::Result<T, NumericsError>;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Softmax { input: usize, axis: usize },
    Conv2d { input: usize, weight: usize, bias: usize, geom: ConvGeometry },
    Reshape(usize),
    SliceRows { input: usize, start: usize },
    SelectRows { input: usize, rows: Vec<usize> },
    MseLoss(usize, usize),
    GraphAttention { feats: usize, self_scores: usize, nbr_scores: usize, neighbors: Rc<Vec<Vec<usize>>>, slope: f64, alpha: Vec<Vec<f64>> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one reverse pass. Nodes are appended in evaluation
/// order, which is a topological order of the graph.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Gradients of a scalar with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: &Var<'_>) -> Option<&Tensor> {
        self.grads[v.id].as_ref()
    }

    /// Gradient of `v`, or zeros of `v`'s shape if nothing flowed into it.
    pub fn take_or_zeros(&mut self, v: &Var<'_>) -> Tensor {
        self.grads[v.id].take().unwrap_or_else(|| Tensor::zeros(v.shape()))
    }
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> NumericsError {
    NumericsError::Shape { op, shapes: shapes.iter().map(|s| s.to_vec()).collect() }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse pass from a one-element `output`.
    pub fn backward(&self, output: &Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[output.id].value.len() != 1 {
            return Err(shape_err("backward", &[nodes[output.id].value.shape()]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::filled(nodes[output.id].value.shape(), 1.0));

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            backprop(node, &g, &nodes, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn acc<'a>(grads: &'a mut [Option<Tensor>], nodes: &[Node], id: usize) -> &'a mut [f64] {
    grads[id].get_or_insert_with(|| Tensor::zeros(nodes[id].value.shape())).data_mut()
}

fn backprop(node: &Node, g: &Tensor, nodes: &[Node], grads: &mut [Option<Tensor>]) {
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            kernels::matmul_grad_lhs(gd, bv.data(), m, k, n, acc(grads, nodes, *a));
            kernels::matmul_grad_rhs(av.data(), gd, m, k, n, acc(grads, nodes, *b));
        }
        Op::Add(a, b) => {
            for id in [*a, *b] {
                for (o, v) in acc(grads, nodes, id).iter_mut().zip(gd) {
                    *o += v;
                }
            }
        }
        Op::AddBias(a, b) => {
            for (o, v) in acc(grads, nodes, *a).iter_mut().zip(gd) {
                *o += v;
            }
            let n = nodes[*b].value.len();
            let gb = acc(grads, nodes, *b);
            for (i, v) in gd.iter().enumerate() {
                gb[i % n] += v;
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
            for (i, o) in acc(grads, nodes, *a).iter_mut().enumerate() {
                *o += gd[i] * bv[i];
            }
            for (i, o) in acc(grads, nodes, *b).iter_mut().enumerate() {
                *o += gd[i] * av[i];
            }
        }
        Op::Scale(a, c) => {
            for (o, v) in acc(grads, nodes, *a).iter_mut().zip(gd) {
                *o += c * v;
            }
        }
        Op::Sum(a) => {
            for o in acc(grads, nodes, *a).iter_mut() {
                *o += gd[0];
            }
        }
        Op::Concat { inputs, axis } => {
            let out_shape = node.value.shape();
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[axis + 1..].iter().product();
            let total = out_shape[*axis] * inner;
            let mut offset = 0;
            for &id in inputs {
                let span = nodes[id].value.shape()[*axis] * inner;
                let gi = acc(grads, nodes, id);
                for o in 0..outer {
                    for k in 0..span {
                        gi[o * span + k] += gd[o * total + offset + k];
                    }
                }
                offset += span;
            }
        }
        Op::Relu(a) => {
            let x = nodes[*a].value.data();
            for (i, o) in acc(grads, nodes, *a).iter_mut().enumerate() {
                if x[i] > 0.0 {
                    *o += gd[i];
                }
            }
        }
        Op::LeakyRelu(a, slope) => {
            let x = nodes[*a].value.data();
            for (i, o) in acc(grads, nodes, *a).iter_mut().enumerate() {
                *o += if x[i] > 0.0 { gd[i] } else { slope * gd[i] };
            }
        }
        Op::Sigmoid(a) => {
            let y = node.value.data();
            for (i, o) in acc(grads, nodes, *a).iter_mut().enumerate() {
                *o += gd[i] * y[i] * (1.0 - y[i]);
            }
        }
        Op::Softmax { input, axis } => {
            let shape = node.value.shape();
            let (outer, len, inner) = split_axis(shape, *axis);
            let y = node.value.data();
            let gi = acc(grads, nodes, *input);
            for o in 0..outer {
                for k in 0..inner {
                    let idx = |j: usize| (o * len + j) * inner + k;
                    let dot: f64 = (0..len).map(|j| y[idx(j)] * gd[idx(j)]).sum();
                    for j in 0..len {
                        gi[idx(j)] += y[idx(j)] * (gd[idx(j)] - dot);
                    }
                }
            }
        }
        Op::Conv2d { input, weight, bias, geom } => {
            let (iv, wv) = (nodes[*input].value.data(), nodes[*weight].value.data());
            let mut gin = vec![0.0; iv.len()];
            let mut gw = vec![0.0; wv.len()];
            let mut gb = vec![0.0; geom.out_c];
            kernels::conv2d_backward(iv, wv, gd, geom, &mut gin, &mut gw, &mut gb);
            for (id, part) in [(*input, gin), (*weight, gw), (*bias, gb)] {
                for (o, v) in acc(grads, nodes, id).iter_mut().zip(&part) {
                    *o += v;
                }
            }
        }
        Op::Reshape(a) => {
            for (o, v) in acc(grads, nodes, *a).iter_mut().zip(gd) {
                *o += v;
            }
        }
        Op::SliceRows { input, start } => {
            let row: usize = node.value.shape()[1..].iter().product();
            let gi = acc(grads, nodes, *input);
            for (k, v) in gd.iter().enumerate() {
                gi[start * row + k] += v;
            }
        }
        Op::SelectRows { input, rows } => {
            let row: usize = node.value.shape()[1..].iter().product();
            let gi = acc(grads, nodes, *input);
            for (r, &src) in rows.iter().enumerate() {
                for k in 0..row {
                    gi[src * row + k] += gd[r * row + k];
                }
            }
        }
        Op::MseLoss(p, t) => {
            let (pv, tv) = (nodes[*p].value.data(), nodes[*t].value.data());
            let scale = 2.0 * gd[0] / pv.len() as f64;
            for (i, o) in acc(grads, nodes, *p).iter_mut().enumerate() {
                *o += scale * (pv[i] - tv[i]);
            }
            for (i, o) in acc(grads, nodes, *t).iter_mut().enumerate() {
                *o -= scale * (pv[i] - tv[i]);
            }
        }
        Op::GraphAttention { feats, self_scores, nbr_scores, neighbors, slope, alpha } => {
            let z = &nodes[*feats].value;
            let width = z.shape()[1];
            let (ss, ns) = (nodes[*self_scores].value.data(), nodes[*nbr_scores].value.data());
            let mut gz = vec![0.0; z.len()];
            let mut gss = vec![0.0; ss.len()];
            let mut gns = vec![0.0; ns.len()];
            for (i, nbrs) in neighbors.iter().enumerate() {
                if nbrs.is_empty() {
                    continue;
                }
                let gi = &gd[i * width..(i + 1) * width];
                let a = &alpha[i];
                // d out / d alpha_j = g . z_j
                let dalpha: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| gi.iter().zip(z.row(j)).map(|(x, y)| x * y).sum())
                    .collect();
                let mean: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
                for (k, &j) in nbrs.iter().enumerate() {
                    for (o, v) in gz[j * width..(j + 1) * width].iter_mut().zip(gi) {
                        *o += a[k] * v;
                    }
                    let de = a[k] * (dalpha[k] - mean);
                    let raw = ss[i] + ns[j];
                    let draw = if raw > 0.0 { de } else { slope * de };
                    gss[i] += draw;
                    gns[j] += draw;
                }
            }
            for (id, part) in [(*feats, gz), (*self_scores, gss), (*nbr_scores, gns)] {
                for (o, v) in acc(grads, nodes, id).iter_mut().zip(&part) {
                    *o += v;
                }
            }
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value();
        let data = v.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        drop(v);
        self.tape.push(t, op)
    }

    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(op, &[a.shape(), b.shape()]));
        }
        Ok(())
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(shape_err("matmul", &[a.shape(), b.shape()]));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let out = Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))?;
        drop((a, b));
        Ok(self.tape.push(out, Op::MatMul(self.id, rhs.id)))
    }

    pub fn add(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "add")?;
        let data = self.value().data().iter().zip(rhs.value().data()).map(|(a, b)| a + b).collect();
        let out = Tensor::new(self.shape(), data)?;
        Ok(self.tape.push(out, Op::Add(self.id, rhs.id)))
    }

    /// Adds a length-`n` bias to every row of a `[.., n]` tensor (declared broadcast).
    pub fn add_bias(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), bias.value());
        let n = *a.shape().last().unwrap_or(&0);
        if b.rank() != 1 || b.len() != n {
            return Err(shape_err("add_bias", &[a.shape(), b.shape()]));
        }
        let data = a.data().iter().enumerate().map(|(i, v)| v + b.data()[i % n]).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        drop((a, b));
        Ok(self.tape.push(out, Op::AddBias(self.id, bias.id)))
    }

    pub fn mul(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "mul")?;
        let data = self.value().data().iter().zip(rhs.value().data()).map(|(a, b)| a * b).collect();
        let out = Tensor::new(self.shape(), data)?;
        Ok(self.tape.push(out, Op::Mul(self.id, rhs.id)))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), |x| kernels::leaky_relu(x, slope))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let v = self.value();
        if axis >= v.rank() {
            return Err(shape_err("softmax", &[v.shape()]));
        }
        let (outer, len, inner) = split_axis(v.shape(), axis);
        let x = v.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for k in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + k;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..len {
                    y[idx(j)] = (x[idx(j)] - max).exp();
                    z += y[idx(j)];
                }
                for j in 0..len {
                    y[idx(j)] /= z;
                }
            }
        }
        let out = Tensor::new(v.shape().to_vec(), y)?;
        drop(v);
        Ok(self.tape.push(out, Op::Softmax { input: self.id, axis }))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let out = self.to_tensor().reshaped(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Rows `start..end` along axis 0.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let v = self.value();
        if v.rank() == 0 || start > end || end > v.shape()[0] {
            return Err(NumericsError::Invalid {
                op: "slice_rows",
                message: format!("range {start}..{end} on shape {:?}", v.shape()),
            });
        }
        let row: usize = v.shape()[1..].iter().product();
        let mut shape = v.shape().to_vec();
        shape[0] = end - start;
        let out = Tensor::new(shape, v.data()[start * row..end * row].to_vec())?;
        drop(v);
        Ok(self.tape.push(out, Op::SliceRows { input: self.id, start }))
    }

    /// Gathers rows along axis 0; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        if v.rank() == 0 || rows.iter().any(|&r| r >= v.shape()[0]) {
            return Err(NumericsError::Invalid {
                op: "select_rows",
                message: format!("rows {rows:?} on shape {:?}", v.shape()),
            });
        }
        let row: usize = v.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * row);
        for &r in rows {
            data.extend_from_slice(&v.data()[r * row..(r + 1) * row]);
        }
        let mut shape = v.shape().to_vec();
        shape[0] = rows.len();
        let out = Tensor::new(shape, data)?;
        drop(v);
        Ok(self.tape.push(out, Op::SelectRows { input: self.id, rows: rows.to_vec() }))
    }

    /// `[batch, in_c, h, w]` input, `[out_c, in_c, kh, kw]` weight, `[out_c]` bias.
    pub fn conv2d(&self, weight: &Var<'t>, bias: &Var<'t>, stride: usize, padding: usize) -> Result<Var<'t>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let (xs, ws) = (x.shape(), w.shape());
        if x.rank() != 4
            || w.rank() != 4
            || xs[1] != ws[1]
            || b.shape() != [ws[0]]
            || stride == 0
            || xs[2] + 2 * padding < ws[2]
            || xs[3] + 2 * padding < ws[3]
        {
            return Err(shape_err("conv2d", &[xs, ws, b.shape()]));
        }
        let geom = ConvGeometry {
            batch: xs[0],
            in_c: xs[1],
            h: xs[2],
            w: xs[3],
            out_c: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            padding,
        };
        let data = kernels::conv2d(x.data(), w.data(), b.data(), &geom);
        let out = Tensor::new(vec![geom.batch, geom.out_c, geom.out_h(), geom.out_w()], data)?;
        drop((x, w, b));
        Ok(self.tape.push(out, Op::Conv2d { input: self.id, weight: weight.id, bias: bias.id, geom }))
    }

    /// Mean squared error against `target` of the same shape; returns a scalar.
    pub fn mse_loss(&self, target: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(target, "mse_loss")?;
        let (p, t) = (self.value(), target.value());
        if p.is_empty() {
            return Err(shape_err("mse_loss", &[p.shape()]));
        }
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let out = Tensor::scalar(s / p.len() as f64);
        drop((p, t));
        Ok(self.tape.push(out, Op::MseLoss(self.id, target.id)))
    }

    /// Additive-attention aggregation over a neighbour structure.
    ///
    /// `self` holds per-node features `[n, d]`; `self_scores` and `nbr_scores`
    /// are `[n, 1]` projections. Row `i` of the output is
    /// `sum_j alpha_ij z_j` over `neighbors[i]` (ascending), with
    /// `alpha_i = softmax(leaky_relu(self_scores[i] + nbr_scores[j]))`, and
    /// zero when `neighbors[i]` is empty.
    pub fn graph_attention(
        &self,
        self_scores: &Var<'t>,
        nbr_scores: &Var<'t>,
        neighbors: Rc<Vec<Vec<usize>>>,
        slope: f64,
    ) -> Result<Var<'t>> {
        let (z, ss, ns) = (self.value(), self_scores.value(), nbr_scores.value());
        let n = z.shape().first().copied().unwrap_or(0);
        if z.rank() != 2
            || ss.shape() != [n, 1]
            || ns.shape() != [n, 1]
            || neighbors.len() != n
            || neighbors.iter().flatten().any(|&j| j >= n)
        {
            return Err(shape_err("graph_attention", &[z.shape(), ss.shape(), ns.shape()]));
        }
        let width = z.shape()[1];
        let mut out = Vec::with_capacity(n * width);
        let mut alpha = Vec::with_capacity(n);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let scores: Vec<f64> = nbrs.iter().map(|&j| ns.data()[j]).collect();
            let a = kernels::attention_weights(ss.data()[i], &scores, slope);
            let rows: Vec<&[f64]> = nbrs.iter().map(|&j| z.row(j)).collect();
            out.extend(kernels::attend(&a, &rows, width));
            alpha.push(a);
        }
        let t = Tensor::new(vec![n, width], out)?;
        drop((z, ss, ns));
        Ok(self.tape.push(
            t,
            Op::GraphAttention {
                feats: self.id,
                self_scores: self_scores.id,
                nbr_scores: nbr_scores.id,
                neighbors,
                slope,
                alpha,
            },
        ))
    }

    /// Attention weights recorded by a `graph_attention` node, per row.
    pub fn attention_weights(&self) -> Option<Vec<Vec<f64>>> {
        match &self.tape.nodes.borrow()[self.id].op {
            Op::GraphAttention { alpha, .. } => Some(alpha.clone()),
            _ => None,
        }
    }
}

/// Concatenation along `axis`; all other dimensions must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts.first().ok_or(NumericsError::Invalid { op: "concat", message: "no inputs".into() })?;
    let tape = first.tape;
    let values: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
    let base = values[0].shape().to_vec();
    if axis >= base.len()
        || values.iter().any(|v| {
            v.rank() != base.len() || v.shape().iter().enumerate().any(|(d, s)| d != axis && *s != base[d])
        })
    {
        let shapes: Vec<&[usize]> = values.iter().map(|v| v.shape()).collect();
        return Err(shape_err("concat", &shapes));
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let mut shape = base.clone();
    shape[axis] = values.iter().map(|v| v.shape()[axis]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for v in &values {
            let span = v.shape()[axis] * inner;
            data.extend_from_slice(&v.data()[o * span..(o + 1) * span]);
        }
    }
    let out = Tensor::new(shape, data)?;
    drop(values);
    Ok(tape.push(out, Op::Concat { inputs: parts.iter().map(|p| p.id).collect(), axis }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_single_element() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.7]));
        let y = x.softmax(0).unwrap();
        assert_eq!(y.value().data(), &[1.0]);
        let g = tape.backward(&y.sum()).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn leaky_relu_negative() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0, 2.0]));
        assert_eq!(x.leaky_relu(0.2).value().data(), &[-0.2, 2.0]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros([2, 3]));
        let b = tape.leaf(Tensor::zeros([4, 5]));
        let err = a.matmul(&b).err().unwrap();
        assert_eq!(err, NumericsError::Shape { op: "matmul", shapes: vec![vec![2, 3], vec![4, 5]] });
        assert!(err.to_string().contains("matmul"));
        assert!(a.add(&b).is_err());
        assert!(concat(&[a, b], 1).is_err());
    }

    #[test]
    fn inputs_are_not_mutated() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, -2.0]));
        let before = a.to_tensor();
        let y = a.relu().mul(&a).unwrap().sum();
        tape.backward(&y).unwrap();
        assert_eq!(a.to_tensor(), before);
    }

    #[test]
    fn gradient_accumulates_over_reuse() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.0]));
        let y = x.mul(&x).unwrap().add(&x).unwrap().sum();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn attention_single_neighbor_copies_features() {
        let tape = Tape::new();
        let z = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = tape.leaf(Tensor::matrix(2, 1, vec![0.1, -0.3]).unwrap());
        let nbrs = Rc::new(vec![vec![1], vec![]]);
        let out = z.graph_attention(&s, &s, nbrs, 0.2).unwrap();
        assert_eq!(out.value().data(), &[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(out.attention_weights().unwrap(), vec![vec![1.0], vec![]]);
    }
}
