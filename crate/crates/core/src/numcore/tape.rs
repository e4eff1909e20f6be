//! Reverse-mode differentiation over a recorded tape of vector operations.
//!
//! Nodes hold dense `f64` vectors and are appended in evaluation order, so a
//! single reverse sweep over the node list visits every node after all of
//! its consumers. Parameters live outside the tape in a [`ParamStore`];
//! `backward` accumulates into their `grad` buffers.
//!
//! Only the operators used by the selection and caption networks exist:
//! matrix-vector products, elementwise add/mul/sigmoid/tanh, concat/slice,
//! softmax, convex mixing, embedding lookup, a fused LSTM cell, and fused
//! softmax / sigmoid cross-entropy losses.

use super::lstm::{lstm_cell_backward, lstm_cell_forward, LstmCache};
use super::matrix::{axpy, dot, log_sum_exp, sigmoid, softmax_unchecked};
use super::params::{LstmParams, ParamId, ParamStore};
use crate::error::{MftError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatVec { w: ParamId, x: NodeId },
    Embed { table: ParamId, row: usize },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { src: NodeId, start: usize },
    Softmax(NodeId),
    Mix { weights: NodeId, items: Vec<NodeId> },
    Lstm {
        x: NodeId,
        h: NodeId,
        c: NodeId,
        params: LstmParams,
        cache: Box<LstmCache>,
    },
    SoftmaxXent { logits: NodeId, target: usize, scale: f64 },
    SigmoidBce { logit: NodeId, label: f64, scale: f64 },
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.nodes[node.0].value
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.nodes[node.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node.0 >= self.nodes.len() {
            return Err(MftError::contract(format!("node {} not on this tape", node.0)));
        }
        Ok(())
    }

    fn same_len(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if la != lb {
            return Err(MftError::contract(format!("{what}: lengths {la} and {lb} differ")));
        }
        Ok(())
    }

    /// Constant (non-differentiated) input vector.
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(vec![0.0; len])
    }

    /// A whole parameter, flattened row-major.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).as_slice().to_vec(), Op::Param(id))
    }

    pub fn matvec(&mut self, store: &ParamStore, w: ParamId, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let value = store.value(w).matvec(&self.nodes[x.0].value)?;
        Ok(self.push(value, Op::MatVec { w, x }))
    }

    pub fn embed(&mut self, store: &ParamStore, table: ParamId, row: usize) -> Result<NodeId> {
        let m = store.value(table);
        if row >= m.rows() {
            return Err(MftError::contract(format!(
                "embedding row {row} out of range for table with {} rows",
                m.rows()
            )));
        }
        Ok(self.push(m.row(row).to_vec(), Op::Embed { table, row }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "add")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "mul")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.iter().map(|x| x * factor).collect();
        Ok(self.push(value, Op::Scale(a, factor)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.iter().map(|&x| sigmoid(x)).collect();
        Ok(self.push(value, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        Ok(self.push(value, Op::Tanh(a)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut value = Vec::new();
        for &p in parts {
            self.check(p)?;
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check(src)?;
        let v = &self.nodes[src.0].value;
        if start + len > v.len() {
            return Err(MftError::contract(format!(
                "slice [{start}, {}) out of range for length {}",
                start + len,
                v.len()
            )));
        }
        let value = v[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice { src, start }))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        if self.nodes[a.0].value.is_empty() {
            return Err(MftError::contract("softmax of an empty vector"));
        }
        let value = softmax_unchecked(&self.nodes[a.0].value);
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// `Σ_i weights[i] * items[i]`
    pub fn mix(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        self.check(weights)?;
        if self.nodes[weights.0].value.len() != items.len() || items.is_empty() {
            return Err(MftError::contract(format!(
                "mix: {} weights for {} items",
                self.nodes[weights.0].value.len(),
                items.len()
            )));
        }
        let dim = self.nodes[items[0].0].value.len();
        let mut value = vec![0.0; dim];
        for (k, &it) in items.iter().enumerate() {
            self.check(it)?;
            if self.nodes[it.0].value.len() != dim {
                return Err(MftError::contract("mix: items differ in length"));
            }
            axpy(&mut value, self.nodes[weights.0].value[k], &self.nodes[it.0].value);
        }
        Ok(self.push(
            value,
            Op::Mix {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    /// One LSTM step. Returns `(h, c)` node handles.
    pub fn lstm(
        &mut self,
        store: &ParamStore,
        params: &LstmParams,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        self.check(x)?;
        self.check(h)?;
        self.check(c)?;
        let (hv, cv, cache) = lstm_cell_forward(
            &self.nodes[x.0].value,
            &self.nodes[h.0].value,
            &self.nodes[c.0].value,
            params,
            store,
        )?;
        let hs = hv.len();
        let mut both = hv;
        both.extend(cv);
        let joint = self.push(
            both,
            Op::Lstm {
                x,
                h,
                c,
                params: *params,
                cache: Box::new(cache),
            },
        );
        let h_out = self.slice(joint, 0, hs)?;
        let c_out = self.slice(joint, hs, hs)?;
        Ok((h_out, c_out))
    }

    /// `scale * -log softmax(logits)[target]`, a scalar node.
    pub fn softmax_xent(&mut self, logits: NodeId, target: usize, scale: f64) -> Result<NodeId> {
        self.check(logits)?;
        let l = &self.nodes[logits.0].value;
        if target >= l.len() {
            return Err(MftError::contract(format!(
                "cross entropy target {target} out of range for {} classes",
                l.len()
            )));
        }
        let value = scale * (log_sum_exp(l) - l[target]);
        Ok(self.push(
            vec![value],
            Op::SoftmaxXent {
                logits,
                target,
                scale,
            },
        ))
    }

    /// `scale * BCE(sigmoid(logit), label)` for a length-1 `logit` node.
    pub fn sigmoid_bce(&mut self, logit: NodeId, label: f64, scale: f64) -> Result<NodeId> {
        self.check(logit)?;
        if self.nodes[logit.0].value.len() != 1 {
            return Err(MftError::contract("sigmoid_bce expects a scalar logit"));
        }
        let z = self.nodes[logit.0].value[0];
        // softplus(z) - label * z, evaluated stably
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        let value = scale * (softplus - label * z);
        Ok(self.push(vec![value], Op::SigmoidBce { logit, label, scale }))
    }

    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let mut total = 0.0;
        for &t in terms {
            self.check(t)?;
            if self.nodes[t.0].value.len() != 1 {
                return Err(MftError::contract("sum expects scalar nodes"));
            }
            total += self.nodes[t.0].value[0];
        }
        Ok(self.push(vec![total], Op::Sum(terms.to_vec())))
    }

    /// Propagates d(loss)/d(node) back through the tape and accumulates into
    /// the parameter gradients of `store`. Gradients add to whatever is
    /// already in the buffers.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(MftError::contract("backward called on an empty tape"));
        }
        self.check(loss)?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(MftError::contract("backward needs a scalar loss node"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    axpy(store.get_mut(*id).grad.as_mut_slice(), 1.0, &g);
                }
                Op::MatVec { w, x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = store.value(*w).matvec_transposed(&g);
                    store.get_mut(*w).grad.add_outer(&g, xv);
                    accumulate(&mut grads, *x, &dx);
                }
                Op::Embed { table, row } => {
                    axpy(store.get_mut(*table).grad.row_mut(*row), 1.0, &g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let da: Vec<f64> = g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    accumulate(&mut grads, *a, &da);
                    accumulate(&mut grads, *b, &db);
                }
                Op::Scale(a, factor) => {
                    let da: Vec<f64> = g.iter().map(|gi| gi * factor).collect();
                    accumulate(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, s)| gi * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads, *a, &d);
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(gi, t)| gi * (1.0 - t * t))
                        .collect();
                    accumulate(&mut grads, *a, &d);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut grads, *p, &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Slice { src, start } => {
                    let slot = grads[src.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[src.0].value.len()]);
                    axpy(&mut slot[*start..*start + g.len()], 1.0, &g);
                }
                Op::Softmax(a) => {
                    let s = &node.value;
                    let gs = dot(&g, s);
                    let d: Vec<f64> = g.iter().zip(s).map(|(gi, si)| si * (gi - gs)).collect();
                    accumulate(&mut grads, *a, &d);
                }
                Op::Mix { weights, items } => {
                    let w = &self.nodes[weights.0].value;
                    let dw: Vec<f64> = items
                        .iter()
                        .map(|it| dot(&g, &self.nodes[it.0].value))
                        .collect();
                    accumulate(&mut grads, *weights, &dw);
                    for (k, it) in items.iter().enumerate() {
                        if matches!(self.nodes[it.0].op, Op::Input) {
                            continue;
                        }
                        let d: Vec<f64> = g.iter().map(|gi| gi * w[k]).collect();
                        accumulate(&mut grads, *it, &d);
                    }
                }
                Op::Lstm {
                    x,
                    h,
                    c,
                    params,
                    cache,
                } => {
                    let hs = params.hidden_size;
                    let lg = lstm_cell_backward(cache, &g[..hs], &g[hs..], params, store);
                    accumulate(&mut grads, *x, &lg.dx);
                    accumulate(&mut grads, *h, &lg.dh_prev);
                    accumulate(&mut grads, *c, &lg.dc_prev);
                }
                Op::SoftmaxXent {
                    logits,
                    target,
                    scale,
                } => {
                    let mut d = softmax_unchecked(&self.nodes[logits.0].value);
                    d[*target] -= 1.0;
                    let factor = g[0] * scale;
                    d.iter_mut().for_each(|v| *v *= factor);
                    accumulate(&mut grads, *logits, &d);
                }
                Op::SigmoidBce { logit, label, scale } => {
                    let z = self.nodes[logit.0].value[0];
                    accumulate(&mut grads, *logit, &[g[0] * scale * (sigmoid(z) - label)]);
                }
                Op::Sum(terms) => {
                    for t in terms {
                        accumulate(&mut grads, *t, &g);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], node: NodeId, g: &[f64]) {
    match &mut grads[node.0] {
        Some(existing) => axpy(existing, 1.0, g),
        slot @ None => *slot = Some(g.to_vec()),
    }
}
