//! Tape of 2-D tensor operations with reverse-mode differentiation.

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(usize),
    Input,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `[n, m] + [1, m]`.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    RepeatRows(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Tensor, inv_std: Vec<f64> },
    /// Gates `[1, 4H]` in i, f, g, o order and previous cell `[1, H]`;
    /// value is `[h, c]`.
    LstmCell { gates: Var, c_prev: Var, act: Vec<f64> },
    BceLogits(Var, Vec<f64>),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(i)) => self.store.tensor(*i),
            _ => unreachable!("only parameters are stored by reference"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, index: usize) -> Var {
        if let Some(v) = self.param_vars[index] {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(index) });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[index] = Some(v);
        v
    }

    /// Parameter by name; panics on unknown names, which are programming errors.
    pub fn p(&mut self, name: &str) -> Var {
        let i = self.store.index(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(i)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(v.shape(), self.value(b).shape(), "add shapes");
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((1, av.cols()), bv.shape(), "add_row shapes");
        let mut v = av.clone();
        let cols = v.cols();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += bv.data()[i % cols];
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let v = Tensor::from_vec(av.rows(), av.cols(), data).expect("same shape");
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Smallest `|x|` fed to any ReLU so far; infinite when there is none.
    /// A finite-difference probe wider than this may straddle a kink.
    pub fn relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.value(a)),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in &ids {
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor::from_vec(ids.len(), t.cols(), data).expect("gathered rows");
        self.push(v, Op::Gather(table, ids))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols rows");
                data.extend_from_slice(t.row(r));
            }
        }
        let v = Tensor::from_vec(rows, cols, data).expect("concat");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows cols");
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols.max(1);
        let v = Tensor::from_vec(rows, cols, data).expect("concat");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let v = Tensor::from_vec(t.rows(), len, data).expect("slice");
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let v = Tensor::from_vec(len, c, t.data()[start * c..(start + len) * c].to_vec()).expect("slice");
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// `[1, m]` repeated into `[n, m]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), 1, "repeat_rows takes a row vector");
        let data = t.data().repeat(n);
        let v = Tensor::from_vec(n, t.cols(), data).expect("repeat");
        self.push(v, Op::RepeatRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut v = t.clone();
        let cols = v.cols();
        for row in v.data_mut().chunks_mut(cols) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row normalization with `[1, d]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let t = self.value(x);
        let (rows, d) = t.shape();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = Tensor::zeros(rows, d);
        let mut out = Tensor::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat.data_mut()[r * d + c] = h;
                out.data_mut()[r * d + c] = g[c] * h + b[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let g = self.value(gates).data();
        let cp = self.value(c_prev).data();
        let h = cp.len();
        assert_eq!(g.len(), 4 * h, "lstm gate width");
        // act = [i, f, g, o, tanh(c)]
        let mut act = vec![0.0; 5 * h];
        let mut out = vec![0.0; 2 * h];
        for k in 0..h {
            let i = sigmoid(g[k]);
            let f = sigmoid(g[h + k]);
            let gg = g[2 * h + k].tanh();
            let o = sigmoid(g[3 * h + k]);
            let c = f * cp[k] + i * gg;
            let tc = c.tanh();
            act[k] = i;
            act[h + k] = f;
            act[2 * h + k] = gg;
            act[3 * h + k] = o;
            act[4 * h + k] = tc;
            out[k] = o * tc;
            out[h + k] = c;
        }
        self.push(Tensor::row_vector(out), Op::LstmCell { gates, c_prev, act })
    }

    /// Mean binary cross-entropy of `[n, 1]` logits against 0/1 targets.
    pub fn bce_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        let z = self.value(logits).data();
        assert_eq!(z.len(), targets.len(), "bce lengths");
        let n = z.len() as f64;
        let total: f64 = z.iter().zip(&targets).map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()).sum();
        self.push(Tensor::row_vector(vec![total / n]), Op::BceLogits(logits, targets))
    }

    /// Gradients of the scalar `loss` with respect to every parameter of the
    /// store, zero for parameters not on the tape.
    pub fn backward(&self, loss: Var) -> Vec<Tensor> {
        assert_eq!(self.value(loss).len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::row_vector(vec![1.0]));
        let mut param_grads: Vec<Tensor> = self.store.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param(i) => param_grads[*i].add_assign(&dy),
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let da = dy.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&dy);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, dy.clone());
                    acc(&mut grads, *a, dy);
                }
                Op::AddRow(a, b) => {
                    let mut db = Tensor::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (x, y) in db.data_mut().iter_mut().zip(dy.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = elementwise(&dy, bv, |g, y| g * y);
                    let db = elementwise(&dy, av, |g, x| g * x);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, dy.map(|g| g * s)),
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    acc(&mut grads, *a, elementwise(&dy, y, |g, y| g * y * (1.0 - y)));
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    acc(&mut grads, *a, elementwise(&dy, y, |g, y| g * (1.0 - y * y)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, elementwise(&dy, x, |g, x| if x > 0.0 { g } else { 0.0 }));
                }
                Op::Gather(table, ids) => {
                    let t = self.value(*table);
                    let mut dt = Tensor::zeros(t.rows(), t.cols());
                    let c = t.cols();
                    for (r, &i) in ids.iter().enumerate() {
                        for (x, y) in dt.data_mut()[i * c..(i + 1) * c].iter_mut().zip(dy.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut d = Vec::with_capacity(dy.rows() * w);
                        for r in 0..dy.rows() {
                            d.extend_from_slice(&dy.row(r)[start..start + w]);
                        }
                        acc(&mut grads, p, Tensor::from_vec(dy.rows(), w, d).unwrap());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let c = dy.cols();
                    let mut start = 0;
                    for &p in parts {
                        let n = self.value(p).rows();
                        let d = dy.data()[start * c..(start + n) * c].to_vec();
                        acc(&mut grads, p, Tensor::from_vec(n, c, d).unwrap());
                        start += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let (c, w) = (av.cols(), dy.cols());
                    for r in 0..dy.rows() {
                        da.data_mut()[r * c + start..r * c + start + w].copy_from_slice(dy.row(r));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let c = av.cols();
                    da.data_mut()[start * c..start * c + dy.len()].copy_from_slice(dy.data());
                    acc(&mut grads, *a, da);
                }
                Op::Transpose(a) => acc(&mut grads, *a, dy.transpose()),
                Op::RepeatRows(a) => {
                    let mut da = Tensor::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (x, y) in da.data_mut().iter_mut().zip(dy.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().unwrap();
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    let c = y.cols();
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), dy.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            da.data_mut()[r * c + k] = yr[k] * (gr[k] - dot);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let g = self.value(*gain).data();
                    let (rows, d) = xhat.shape();
                    let mut dx = Tensor::zeros(rows, d);
                    let mut dg = Tensor::zeros(1, d);
                    let mut db = Tensor::zeros(1, d);
                    for r in 0..rows {
                        let (h, gy) = (xhat.row(r), dy.row(r));
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for c in 0..d {
                            let dh = gy[c] * g[c];
                            mean_dh += dh;
                            mean_dh_h += dh * h[c];
                            dg.data_mut()[c] += gy[c] * h[c];
                            db.data_mut()[c] += gy[c];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for c in 0..d {
                            let dh = gy[c] * g[c];
                            dx.data_mut()[r * d + c] = inv_std[r] * (dh - mean_dh - h[c] * mean_dh_h);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, dg);
                    acc(&mut grads, *bias, db);
                }
                Op::LstmCell { gates, c_prev, act } => {
                    let cp = self.value(*c_prev).data();
                    let h = cp.len();
                    let mut dg = vec![0.0; 4 * h];
                    let mut dcp = vec![0.0; h];
                    for k in 0..h {
                        let (i, f, g, o, tc) = (act[k], act[h + k], act[2 * h + k], act[3 * h + k], act[4 * h + k]);
                        let (dh, dc_out) = (dy.data()[k], dy.data()[h + k]);
                        let dc = dc_out + dh * o * (1.0 - tc * tc);
                        dg[k] = dc * g * i * (1.0 - i);
                        dg[h + k] = dc * cp[k] * f * (1.0 - f);
                        dg[2 * h + k] = dc * i * (1.0 - g * g);
                        dg[3 * h + k] = dh * tc * o * (1.0 - o);
                        dcp[k] = dc * f;
                    }
                    acc(&mut grads, *gates, Tensor::row_vector(dg));
                    acc(&mut grads, *c_prev, Tensor::row_vector(dcp));
                }
                Op::BceLogits(logits, targets) => {
                    let z = self.value(*logits);
                    let n = targets.len() as f64;
                    let scale = dy.data()[0] / n;
                    let d: Vec<f64> = z.data().iter().zip(targets).map(|(&z, &y)| (sigmoid(z) - y) * scale).collect();
                    acc(&mut grads, *logits, Tensor::from_vec(z.rows(), z.cols(), d).unwrap());
                }
            }
        }
        param_grads
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}
