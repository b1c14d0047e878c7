//! Reverse-mode tape over row-major matrices.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
        scale: f64,
    },
    Nll {
        logp: Var,
        targets: Vec<usize>,
    },
    /// Scalar `-log P`; `dlogp` holds d(log P)/d(logp).
    Ctc {
        logp: Var,
        dlogp: Vec<f64>,
    },
    Sum(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single forward pass. Parameters enter once each and are cached by id.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A tracked leaf that is not a stored parameter (used by tests and probes).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let p = store.get(id);
        self.nodes.push(Node {
            value: p.tensor.clone(),
            op: Op::Leaf,
            needs_grad: !p.frozen,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::matrix(rows, cols, data).expect("internal shape")
    }

    /// `a[m,k] · b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dims");
        let out = matmul(self.data(a), m, k, self.data(b), n);
        self.push(Self::mat(m, n, out), Op::MatMul(a, b), &[a, b])
    }

    /// `a[m,k] · b[n,k]ᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        assert_eq!(k, k2, "matmul_t inner dims");
        let out = matmul_t(self.data(a), m, k, self.data(b), n);
        self.push(Self::mat(m, n, out), Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!((m, n), self.dims(b), "add shapes");
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        self.push(Self::mat(m, n, out), Op::Add(a, b), &[a, b])
    }

    /// Broadcasts a length-`n` row over every row of `x[m,n]`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(self.nodes[row.0].value.numel(), n, "add_row width");
        let r = self.data(row);
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|xr| xr.iter().zip(r).map(|(a, b)| a + b))
            .collect();
        self.push(Self::mat(m, n, out), Op::AddRow(x, row), &[x, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!((m, n), self.dims(b), "mul shapes");
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        self.push(Self::mat(m, n, out), Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (m, n) = self.dims(x);
        let out = self.data(x).iter().map(|v| v * s).collect();
        self.push(Self::mat(m, n, out), Op::Scale(x, s), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let out = self.data(x).iter().map(|v| v.max(0.0)).collect();
        self.push(Self::mat(m, n, out), Op::Relu(x), &[x])
    }

    /// Row softmax. With `causal`, entry `(i, j)` for `j > i` is excluded.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let (m, n) = self.dims(x);
        let mut out = vec![0.0; m * n];
        for (i, (xr, yr)) in self.data(x).chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let live = if causal { (i + 1).min(n) } else { n };
            let max = xr[..live].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (y, v) in yr[..live].iter_mut().zip(xr) {
                *y = (v - max).exp();
                z += *y;
            }
            yr[..live].iter_mut().for_each(|y| *y /= z);
        }
        self.push(Self::mat(m, n, out), Op::Softmax(x), &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let mut out = Vec::with_capacity(m * n);
        for xr in self.data(x).chunks(n) {
            let lse = log_sum_exp(xr);
            out.extend(xr.iter().map(|v| v - lse));
        }
        self.push(Self::mat(m, n, out), Op::LogSoftmax(x), &[x])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (m, n) = self.dims(x);
        let g = self.data(gamma);
        let b = self.data(beta);
        assert!(g.len() == n && b.len() == n, "layer_norm width");
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for xr in self.data(x).chunks(n) {
            let mean = xr.iter().sum::<f64>() / n as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in xr.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        self.push(
            Self::mat(m, n, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(x);
        assert!(start + len <= n, "slice_cols range");
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        self.push(Self::mat(m, len, out), Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.dims(p);
                assert_eq!(r, m, "concat_cols rows");
                c
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        self.push(Self::mat(m, n, out), Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows of `table` selected by `ids`, multiplied by `scale`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], scale: f64) -> Var {
        let (r, n) = self.dims(table);
        let t = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            assert!(id < r, "gather_rows id {id} out of range {r}");
            out.extend(t[id * n..(id + 1) * n].iter().map(|v| v * scale));
        }
        self.push(
            Self::mat(ids.len(), n, out),
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
                scale,
            },
            &[table],
        )
    }

    /// Summed negative log-likelihood of `targets[i]` under row `i` of `logp`.
    pub fn nll(&mut self, logp: Var, targets: &[usize]) -> Var {
        let (m, n) = self.dims(logp);
        assert_eq!(m, targets.len(), "nll rows");
        let d = self.data(logp);
        let loss = -targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                assert!(t < n, "nll target out of range");
                d[i * n + t]
            })
            .sum::<f64>();
        self.push(
            Self::mat(1, 1, vec![loss]),
            Op::Nll {
                logp,
                targets: targets.to_vec(),
            },
            &[logp],
        )
    }

    /// `-log P(z | x)` for the log-probabilities held in `logp`.
    pub fn ctc_loss(&mut self, logp: Var, z: &[usize], blank: usize) -> crate::Result<Var> {
        let (ll, dlogp) = super::ctc::ctc_with_grad(self.value(logp), z, blank)?;
        if !ll.is_finite() {
            return Err(crate::Error::Infeasible(format!(
                "no CTC alignment of {} labels in {} frames",
                z.len(),
                self.dims(logp).0
            )));
        }
        Ok(self.push(Self::mat(1, 1, vec![-ll]), Op::Ctc { logp, dlogp }, &[logp]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(Self::mat(1, 1, vec![s]), Op::Sum(x), &[x])
    }

    /// Inverted dropout with a precomputed keep mask (values 0 or 1/(1-p)).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(mask.len(), m * n, "dropout mask");
        let out = self.data(x).iter().zip(&mask).map(|(a, b)| a * b).collect();
        self.push(Self::mat(m, n, out), Op::Dropout { x, mask }, &[x])
    }

    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0; self.nodes[root.0].value.numel()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Gradients { grads }
    }

    fn backprop(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, g: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(a) => a.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                slot @ None => *slot = Some(g),
            }
        };
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if needs(*a) {
                    acc(*a, matmul_t(dy, m, n, self.data(*b), k));
                }
                if needs(*b) {
                    acc(*b, t_matmul(self.data(*a), m, k, dy, n));
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                if needs(*a) {
                    acc(*a, matmul(dy, m, n, self.data(*b), k));
                }
                if needs(*b) {
                    acc(*b, t_matmul(dy, m, n, self.data(*a), k));
                }
            }
            Op::Add(a, b) => {
                acc(*a, dy.to_vec());
                acc(*b, dy.to_vec());
            }
            Op::AddRow(x, row) => {
                acc(*x, dy.to_vec());
                let n = self.nodes[row.0].value.numel();
                let mut g = vec![0.0; n];
                for r in dy.chunks(n) {
                    g.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                acc(*row, g);
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, dy.iter().zip(self.data(*b)).map(|(d, y)| d * y).collect());
                }
                if needs(*b) {
                    acc(*b, dy.iter().zip(self.data(*a)).map(|(d, x)| d * x).collect());
                }
            }
            Op::Scale(x, s) => acc(*x, dy.iter().map(|d| d * s).collect()),
            Op::Relu(x) => acc(
                *x,
                dy.iter()
                    .zip(self.data(*x))
                    .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                    .collect(),
            ),
            Op::Softmax(x) => {
                let n = self.dims(*x).1;
                let y = node.value.data();
                let mut g = Vec::with_capacity(y.len());
                for (yr, dr) in y.chunks(n).zip(dy.chunks(n)) {
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    g.extend(yr.iter().zip(dr).map(|(a, b)| a * (b - dot)));
                }
                acc(*x, g);
            }
            Op::LogSoftmax(x) => {
                let n = self.dims(*x).1;
                let y = node.value.data();
                let mut g = Vec::with_capacity(y.len());
                for (yr, dr) in y.chunks(n).zip(dy.chunks(n)) {
                    let s: f64 = dr.iter().sum();
                    g.extend(yr.iter().zip(dr).map(|(a, b)| b - a.exp() * s));
                }
                acc(*x, g);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = self.dims(*x).1;
                let gm = self.data(*gamma);
                if needs(*gamma) || needs(*beta) {
                    let mut dg = vec![0.0; n];
                    let mut db = vec![0.0; n];
                    for (hr, dr) in xhat.chunks(n).zip(dy.chunks(n)) {
                        for j in 0..n {
                            dg[j] += dr[j] * hr[j];
                            db[j] += dr[j];
                        }
                    }
                    acc(*gamma, dg);
                    acc(*beta, db);
                }
                if needs(*x) {
                    let nf = n as f64;
                    let mut g = Vec::with_capacity(dy.len());
                    for ((hr, dr), is) in xhat.chunks(n).zip(dy.chunks(n)).zip(inv_std) {
                        let dh: Vec<f64> = dr.iter().zip(gm).map(|(d, g)| d * g).collect();
                        let s1: f64 = dh.iter().sum();
                        let s2: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        g.extend(
                            dh.iter()
                                .zip(hr)
                                .map(|(d, h)| is / nf * (nf * d - s1 - h * s2)),
                        );
                    }
                    acc(*x, g);
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.dims(*x);
                let w = node.value.dims2().1;
                let mut g = vec![0.0; m * n];
                for i in 0..m {
                    g[i * n + start..i * n + start + w].copy_from_slice(&dy[i * w..(i + 1) * w]);
                }
                acc(*x, g);
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.dims2();
                let mut off = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    let mut g = Vec::with_capacity(m * w);
                    for i in 0..m {
                        g.extend_from_slice(&dy[i * n + off..i * n + off + w]);
                    }
                    acc(p, g);
                    off += w;
                }
            }
            Op::GatherRows { table, ids, scale } => {
                let (r, n) = self.dims(*table);
                let mut g = vec![0.0; r * n];
                for (k, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        g[id * n + j] += dy[k * n + j] * scale;
                    }
                }
                acc(*table, g);
            }
            Op::Nll { logp, targets } => {
                let (m, n) = self.dims(*logp);
                let mut g = vec![0.0; m * n];
                for (i, &t) in targets.iter().enumerate() {
                    g[i * n + t] = -dy[0];
                }
                acc(*logp, g);
            }
            Op::Ctc { logp, dlogp } => acc(*logp, dlogp.iter().map(|d| -d * dy[0]).collect()),
            Op::Sum(x) => acc(*x, vec![dy[0]; self.nodes[x.0].value.numel()]),
            Op::Dropout { x, mask } => {
                acc(*x, dy.iter().zip(mask).map(|(d, k)| d * k).collect())
            }
        }
    }

    /// Adds this pass's parameter gradients into the store.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        let mut entries: Vec<_> = self.params.iter().collect();
        entries.sort();
        for (&id, &v) in entries {
            if let Some(g) = grads.wrt(v) {
                store.get_mut(id).tensor.accumulate_grad(g);
            }
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn matmul_t(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = ar.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[m,k]ᵀ · d[m,n]` → `[k,n]`.
fn t_matmul(a: &[f64], m: usize, k: usize, d: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let dr = &d[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, dv) in out[p * n..(p + 1) * n].iter_mut().zip(dr) {
                *o += av * dv;
            }
        }
    }
    out
}
