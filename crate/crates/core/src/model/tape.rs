//! Reverse-mode differentiation over a recorded list of coarse tensor ops.
//!
//! Values are row-major `f64` buffers. Parameters live in one flat slice and
//! ops refer to them by offset, so `backward` returns a gradient with the
//! same layout as the parameter vector.

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    /// `[3H, D]` input weights, gate order reset, update, candidate.
    pub w_i: usize,
    /// `[3H, H]` recurrent weights.
    pub w_h: usize,
    pub b_i: usize,
    pub b_h: usize,
}

#[derive(Debug)]
struct GruCache {
    /// Per step: r, z, n, hidden-side candidate pre-activation, previous hidden.
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    h_prev: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param { offset: usize },
    Conv3x3 { x: Var, w: usize, b: usize, cin: usize, cout: usize, h: usize, wd: usize },
    Conv1x1 { x: Var, w: usize, b: usize, cin: usize, cout: usize, hw: usize },
    Slice { x: Var, start: usize },
    Sigmoid { x: Var },
    Mul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AvgPool { x: Var, c: usize, h: usize, wd: usize, ph: usize, pw: usize },
    ToSequence { x: Var, c: usize, t: usize, k: usize },
    Gru { x: Var, t: usize, d: usize, hidden: usize, p: GruWeights, reverse: bool, cache: GruCache },
    ConcatCols { a: Var, b: Var, rows: usize, ca: usize, cb: usize },
    Dense { x: Var, rows: usize, din: usize, dout: usize, w: usize, b: usize },
    SoftmaxRows { x: Var, rows: usize, cols: usize },
    SumRows { x: Var, rows: usize, cols: usize },
    MeanRows { x: Var, rows: usize, cols: usize },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[r] += m[r, :] . v` for a row-major `rows x cols` matrix.
fn matvec_add(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, v);
    }
}

/// `out += m^T . v`.
fn matvec_t_add(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = out.len();
    for (&g, row) in v.iter().zip(m.chunks_exact(cols)) {
        if g != 0.0 {
            axpy(out, g, row);
        }
    }
}

/// `m += u v^T`.
fn outer_add(m: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (&g, row) in u.iter().zip(m.chunks_exact_mut(cols)) {
        if g != 0.0 {
            axpy(row, g, v);
        }
    }
}

/// Valid output range for a kernel tap offset `d` in `-1..=1` over length `n`.
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    ((-d).max(0) as usize, (n as isize - d.max(0)) as usize)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    fn p(&self, offset: usize, len: usize) -> &'p [f64] {
        &self.params[offset..offset + len]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Vec<f64>, shape: Vec<usize>) -> Var {
        self.push(value, shape, Op::Leaf)
    }

    /// A block of parameters used directly as a tensor.
    pub fn param(&mut self, offset: usize, shape: Vec<usize>) -> Var {
        let len = shape.iter().product();
        let value = self.p(offset, len).to_vec();
        self.push(value, shape, Op::Param { offset })
    }

    /// Same-padded 3x3 convolution on `[cin, h, w]`; weights `[cout, cin, 3, 3]`.
    pub fn conv3x3(&mut self, x: Var, w: usize, b: usize, cout: usize) -> Var {
        let (cin, h, wd) = match self.shape(x) {
            &[c, h, w] => (c, h, w),
            s => panic!("conv3x3 expects [c, h, w], got {s:?}"),
        };
        let weights = self.p(w, cout * cin * 9);
        let bias = self.p(b, cout);
        let input = &self.nodes[x.0].value;
        let plane = h * wd;
        let mut out = vec![0.0; cout * plane];
        for co in 0..cout {
            let o = &mut out[co * plane..(co + 1) * plane];
            o.fill(bias[co]);
            for ci in 0..cin {
                let src = &input[ci * plane..(ci + 1) * plane];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = tap_range(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = tap_range(dx, wd);
                        let wv = weights[((co * cin + ci) * 3 + ky) * 3 + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let orow = &mut o[y * wd + x0..y * wd + x1];
                            let srow = &src[sy * wd + (x0 as isize + dx) as usize..sy * wd + (x1 as isize + dx) as usize];
                            axpy(orow, wv, srow);
                        }
                    }
                }
            }
        }
        self.push(out, vec![cout, h, wd], Op::Conv3x3 { x, w, b, cin, cout, h, wd })
    }

    /// Per-position channel mixing on `[cin, h, w]`; weights `[cout, cin]`.
    pub fn conv1x1(&mut self, x: Var, w: usize, b: usize, cout: usize) -> Var {
        let (cin, h, wd) = match self.shape(x) {
            &[c, h, w] => (c, h, w),
            s => panic!("conv1x1 expects [c, h, w], got {s:?}"),
        };
        let hw = h * wd;
        let weights = self.p(w, cout * cin);
        let bias = self.p(b, cout);
        let input = &self.nodes[x.0].value;
        let mut out = vec![0.0; cout * hw];
        for co in 0..cout {
            let o = &mut out[co * hw..(co + 1) * hw];
            o.fill(bias[co]);
            for ci in 0..cin {
                axpy(o, weights[co * cin + ci], &input[ci * hw..(ci + 1) * hw]);
            }
        }
        self.push(out, vec![cout, h, wd], Op::Conv1x1 { x, w, b, cin, cout, hw })
    }

    /// Channels `[start, start + len)` of a `[c, ...]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let shape = self.shape(x).to_vec();
        let per: usize = shape[1..].iter().product();
        assert!(start + len <= shape[0], "channel slice out of range");
        let value = self.value(x)[start * per..(start + len) * per].to_vec();
        let mut new_shape = shape;
        new_shape[0] = len;
        self.push(value, new_shape, Op::Slice { x, start: start * per })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(value, shape, Op::Sigmoid { x })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Mul { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push(value, shape, Op::Add { a, b })
    }

    /// Non-overlapping `ph x pw` average pooling on `[c, h, w]`; `h`, `w` must divide.
    pub fn avg_pool(&mut self, x: Var, ph: usize, pw: usize) -> Var {
        let (c, h, wd) = match self.shape(x) {
            &[c, h, w] => (c, h, w),
            s => panic!("avg_pool expects [c, h, w], got {s:?}"),
        };
        assert!(h % ph == 0 && wd % pw == 0, "pooling {ph}x{pw} does not divide {h}x{wd}");
        let (oh, ow) = (h / ph, wd / pw);
        let scale = 1.0 / (ph * pw) as f64;
        let input = self.value(x);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..h {
                let row = &input[(ch * h + y) * wd..(ch * h + y + 1) * wd];
                let orow = &mut out[(ch * oh + y / ph) * ow..(ch * oh + y / ph + 1) * ow];
                for (xx, &v) in row.iter().enumerate() {
                    orow[xx / pw] += v * scale;
                }
            }
        }
        self.push(out, vec![c, oh, ow], Op::AvgPool { x, c, h, wd, ph, pw })
    }

    /// `[c, t, k]` to `[t, c * k]`: one feature vector per time step.
    pub fn to_sequence(&mut self, x: Var) -> Var {
        let (c, t, k) = match self.shape(x) {
            &[c, t, k] => (c, t, k),
            s => panic!("to_sequence expects [c, t, k], got {s:?}"),
        };
        let input = self.value(x);
        let mut out = vec![0.0; t * c * k];
        for ch in 0..c {
            for tt in 0..t {
                out[tt * c * k + ch * k..tt * c * k + (ch + 1) * k].copy_from_slice(&input[(ch * t + tt) * k..(ch * t + tt + 1) * k]);
            }
        }
        self.push(out, vec![t, c * k], Op::ToSequence { x, c, t, k })
    }

    /// Gated recurrent layer over `[t, d]`, zero initial state, returning `[t, hidden]`.
    /// `reverse` scans from the last step to the first.
    pub fn gru(&mut self, x: Var, hidden: usize, p: GruWeights, reverse: bool) -> Var {
        let (t, d) = match self.shape(x) {
            &[t, d] => (t, d),
            s => panic!("gru expects [t, d], got {s:?}"),
        };
        let hh = hidden;
        let w_i = self.p(p.w_i, 3 * hh * d);
        let w_h = self.p(p.w_h, 3 * hh * hh);
        let b_i = self.p(p.b_i, 3 * hh);
        let b_h = self.p(p.b_h, 3 * hh);
        let input = &self.nodes[x.0].value;
        let mut cache = GruCache {
            r: vec![0.0; t * hh],
            z: vec![0.0; t * hh],
            n: vec![0.0; t * hh],
            hn: vec![0.0; t * hh],
            h_prev: vec![0.0; t * hh],
        };
        let mut out = vec![0.0; t * hh];
        let mut h = vec![0.0; hh];
        let mut gi = vec![0.0; 3 * hh];
        let mut gh = vec![0.0; 3 * hh];
        for step in 0..t {
            let tt = if reverse { t - 1 - step } else { step };
            gi.copy_from_slice(b_i);
            matvec_add(&mut gi, w_i, &input[tt * d..(tt + 1) * d]);
            gh.copy_from_slice(b_h);
            matvec_add(&mut gh, w_h, &h);
            let s = tt * hh;
            cache.h_prev[s..s + hh].copy_from_slice(&h);
            for j in 0..hh {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[hh + j] + gh[hh + j]);
                let n = (gi[2 * hh + j] + r * gh[2 * hh + j]).tanh();
                cache.r[s + j] = r;
                cache.z[s + j] = z;
                cache.n[s + j] = n;
                cache.hn[s + j] = gh[2 * hh + j];
                h[j] = (1.0 - z) * n + z * h[j];
            }
            out[s..s + hh].copy_from_slice(&h);
        }
        self.push(out, vec![t, hh], Op::Gru { x, t, d, hidden, p, reverse, cache })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (rows, ca) = match self.shape(a) {
            &[r, c] => (r, c),
            s => panic!("concat_cols expects [rows, cols], got {s:?}"),
        };
        let cb = self.shape(b)[1];
        assert_eq!(self.shape(b)[0], rows, "concat_cols row mismatch");
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&self.value(a)[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&self.value(b)[r * cb..(r + 1) * cb]);
        }
        self.push(out, vec![rows, ca + cb], Op::ConcatCols { a, b, rows, ca, cb })
    }

    /// Row-wise affine map `[rows, din] -> [rows, dout]`; weights `[dout, din]`.
    pub fn dense(&mut self, x: Var, w: usize, b: usize, dout: usize) -> Var {
        let (rows, din) = match self.shape(x) {
            &[r, c] => (r, c),
            s => panic!("dense expects [rows, cols], got {s:?}"),
        };
        let weights = self.p(w, dout * din);
        let bias = self.p(b, dout);
        let input = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(rows * dout);
        for r in 0..rows {
            let start = out.len();
            out.extend_from_slice(bias);
            matvec_add(&mut out[start..], weights, &input[r * din..(r + 1) * din]);
        }
        self.push(out, vec![rows, dout], Op::Dense { x, rows, din, dout, w, b })
    }

    /// Softmax down each column of `[rows, cols]`.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (rows, cols) = match self.shape(x) {
            &[r, c] => (r, c),
            s => panic!("softmax_rows expects [rows, cols], got {s:?}"),
        };
        let input = self.value(x);
        let mut out = vec![0.0; rows * cols];
        for c in 0..cols {
            let max = (0..rows).map(|r| input[r * cols + c]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for r in 0..rows {
                let e = (input[r * cols + c] - max).exp();
                out[r * cols + c] = e;
                sum += e;
            }
            for r in 0..rows {
                out[r * cols + c] /= sum;
            }
        }
        self.push(out, vec![rows, cols], Op::SoftmaxRows { x, rows, cols })
    }

    /// Column sums of `[rows, cols]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let (rows, cols, out) = self.column_sums(x);
        self.push(out, vec![cols], Op::SumRows { x, rows, cols })
    }

    /// Column means of `[rows, cols]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (rows, cols, mut out) = self.column_sums(x);
        out.iter_mut().for_each(|v| *v /= rows as f64);
        self.push(out, vec![cols], Op::MeanRows { x, rows, cols })
    }

    fn column_sums(&self, x: Var) -> (usize, usize, Vec<f64>) {
        let (rows, cols) = match self.shape(x) {
            &[r, c] => (r, c),
            s => panic!("row reduction expects [rows, cols], got {s:?}"),
        };
        let mut out = vec![0.0; cols];
        for row in self.value(x).chunks_exact(cols) {
            axpy(&mut out, 1.0, row);
        }
        (rows, cols, out)
    }

    /// Propagates `seeds` (gradients of a scalar with respect to the given
    /// nodes) back to the parameters. Consumes the tape.
    pub fn backward(self, seeds: &[(Var, &[f64])]) -> Vec<f64> {
        let mut pg = vec![0.0; self.params.len()];
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.len(), self.nodes[v.0].value.len(), "seed gradient shape mismatch");
            axpy(grad_mut(&mut grads, &self.nodes, *v), 1.0, g);
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backward_node(node, &g, &mut grads, &mut pg);
        }
        pg
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>], pg: &mut [f64]) {
        let nodes = &self.nodes;
        let val = |v: Var| -> &[f64] { &nodes[v.0].value };
        match node.op {
            Op::Leaf => {}
            Op::Param { offset } => axpy(&mut pg[offset..offset + g.len()], 1.0, g),
            Op::Conv3x3 { x, w, b, cin, cout, h, wd } => {
                let plane = h * wd;
                let input = val(x);
                let weights = self.p(w, cout * cin * 9);
                let mut dw = vec![0.0; cout * cin * 9];
                for co in 0..cout {
                    pg[b + co] += g[co * plane..(co + 1) * plane].iter().sum::<f64>();
                }
                let dx = grad_mut(grads, nodes, x);
                for co in 0..cout {
                    let go = &g[co * plane..(co + 1) * plane];
                    for ci in 0..cin {
                        let src = &input[ci * plane..(ci + 1) * plane];
                        let dsrc = &mut dx[ci * plane..(ci + 1) * plane];
                        for ky in 0..3 {
                            let dy = ky as isize - 1;
                            let (y0, y1) = tap_range(dy, h);
                            for kx in 0..3 {
                                let ddx = kx as isize - 1;
                                let (x0, x1) = tap_range(ddx, wd);
                                let widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                                let wv = weights[widx];
                                let mut acc = 0.0;
                                for y in y0..y1 {
                                    let sy = (y as isize + dy) as usize;
                                    let grow = &go[y * wd + x0..y * wd + x1];
                                    let s0 = sy * wd + (x0 as isize + ddx) as usize;
                                    let s1 = sy * wd + (x1 as isize + ddx) as usize;
                                    acc += dot(grow, &src[s0..s1]);
                                    axpy(&mut dsrc[s0..s1], wv, grow);
                                }
                                dw[widx] += acc;
                            }
                        }
                    }
                }
                axpy(&mut pg[w..w + dw.len()], 1.0, &dw);
            }
            Op::Conv1x1 { x, w, b, cin, cout, hw } => {
                let input = val(x);
                let weights = self.p(w, cout * cin);
                for co in 0..cout {
                    let go = &g[co * hw..(co + 1) * hw];
                    pg[b + co] += go.iter().sum::<f64>();
                    for ci in 0..cin {
                        pg[w + co * cin + ci] += dot(go, &input[ci * hw..(ci + 1) * hw]);
                    }
                }
                let dx = grad_mut(grads, nodes, x);
                for co in 0..cout {
                    let go = &g[co * hw..(co + 1) * hw];
                    for ci in 0..cin {
                        axpy(&mut dx[ci * hw..(ci + 1) * hw], weights[co * cin + ci], go);
                    }
                }
            }
            Op::Slice { x, start } => {
                let dx = grad_mut(grads, nodes, x);
                axpy(&mut dx[start..start + g.len()], 1.0, g);
            }
            Op::Sigmoid { x } => {
                let dx = grad_mut(grads, nodes, x);
                for ((d, &gy), &y) in dx.iter_mut().zip(g).zip(&node.value) {
                    *d += gy * y * (1.0 - y);
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (val(a), val(b));
                let da = grad_mut(grads, nodes, a);
                for ((d, &gy), &y) in da.iter_mut().zip(g).zip(vb) {
                    *d += gy * y;
                }
                let db = grad_mut(grads, nodes, b);
                for ((d, &gy), &y) in db.iter_mut().zip(g).zip(va) {
                    *d += gy * y;
                }
            }
            Op::Add { a, b } => {
                axpy(grad_mut(grads, nodes, a), 1.0, g);
                axpy(grad_mut(grads, nodes, b), 1.0, g);
            }
            Op::AvgPool { x, c, h, wd, ph, pw } => {
                let (oh, ow) = (h / ph, wd / pw);
                let scale = 1.0 / (ph * pw) as f64;
                let dx = grad_mut(grads, nodes, x);
                for ch in 0..c {
                    for y in 0..h {
                        let grow = &g[(ch * oh + y / ph) * ow..(ch * oh + y / ph + 1) * ow];
                        let drow = &mut dx[(ch * h + y) * wd..(ch * h + y + 1) * wd];
                        for (xx, d) in drow.iter_mut().enumerate() {
                            *d += grow[xx / pw] * scale;
                        }
                    }
                }
            }
            Op::ToSequence { x, c, t, k } => {
                let dx = grad_mut(grads, nodes, x);
                for ch in 0..c {
                    for tt in 0..t {
                        axpy(&mut dx[(ch * t + tt) * k..(ch * t + tt + 1) * k], 1.0, &g[tt * c * k + ch * k..tt * c * k + (ch + 1) * k]);
                    }
                }
            }
            Op::Gru { x, t, d, hidden: hh, p, reverse, ref cache } => {
                let input = val(x);
                let w_i = self.p(p.w_i, 3 * hh * d);
                let w_h = self.p(p.w_h, 3 * hh * hh);
                let mut dwi = vec![0.0; 3 * hh * d];
                let mut dwh = vec![0.0; 3 * hh * hh];
                let mut dbi = vec![0.0; 3 * hh];
                let mut dbh = vec![0.0; 3 * hh];
                let mut dxs = vec![0.0; t * d];
                let mut dh_next = vec![0.0; hh];
                let mut gi = vec![0.0; 3 * hh];
                let mut ghv = vec![0.0; 3 * hh];
                for step in (0..t).rev() {
                    let tt = if reverse { t - 1 - step } else { step };
                    let s = tt * hh;
                    let mut dh_prev = vec![0.0; hh];
                    for j in 0..hh {
                        let dh = g[s + j] + dh_next[j];
                        let (r, z, n, hn, hp) = (cache.r[s + j], cache.z[s + j], cache.n[s + j], cache.hn[s + j], cache.h_prev[s + j]);
                        let dn = dh * (1.0 - z);
                        let dz = dh * (hp - n);
                        dh_prev[j] = dh * z;
                        let dn_pre = dn * (1.0 - n * n);
                        let dr_pre = dn_pre * hn * r * (1.0 - r);
                        let dz_pre = dz * z * (1.0 - z);
                        gi[j] = dr_pre;
                        gi[hh + j] = dz_pre;
                        gi[2 * hh + j] = dn_pre;
                        ghv[j] = dr_pre;
                        ghv[hh + j] = dz_pre;
                        ghv[2 * hh + j] = dn_pre * r;
                    }
                    let xt = &input[tt * d..(tt + 1) * d];
                    outer_add(&mut dwi, &gi, xt);
                    axpy(&mut dbi, 1.0, &gi);
                    matvec_t_add(&mut dxs[tt * d..(tt + 1) * d], w_i, &gi);
                    outer_add(&mut dwh, &ghv, &cache.h_prev[s..s + hh]);
                    axpy(&mut dbh, 1.0, &ghv);
                    matvec_t_add(&mut dh_prev, w_h, &ghv);
                    dh_next = dh_prev;
                }
                axpy(&mut pg[p.w_i..p.w_i + dwi.len()], 1.0, &dwi);
                axpy(&mut pg[p.w_h..p.w_h + dwh.len()], 1.0, &dwh);
                axpy(&mut pg[p.b_i..p.b_i + dbi.len()], 1.0, &dbi);
                axpy(&mut pg[p.b_h..p.b_h + dbh.len()], 1.0, &dbh);
                axpy(grad_mut(grads, nodes, x), 1.0, &dxs);
            }
            Op::ConcatCols { a, b, rows, ca, cb } => {
                let da = grad_mut(grads, nodes, a);
                for r in 0..rows {
                    axpy(&mut da[r * ca..(r + 1) * ca], 1.0, &g[r * (ca + cb)..r * (ca + cb) + ca]);
                }
                let db = grad_mut(grads, nodes, b);
                for r in 0..rows {
                    axpy(&mut db[r * cb..(r + 1) * cb], 1.0, &g[r * (ca + cb) + ca..(r + 1) * (ca + cb)]);
                }
            }
            Op::Dense { x, rows, din, dout, w, b } => {
                let input = val(x);
                let weights = self.p(w, dout * din);
                for r in 0..rows {
                    let go = &g[r * dout..(r + 1) * dout];
                    axpy(&mut pg[b..b + dout], 1.0, go);
                    outer_add(&mut pg[w..w + dout * din], go, &input[r * din..(r + 1) * din]);
                }
                let dx = grad_mut(grads, nodes, x);
                for r in 0..rows {
                    matvec_t_add(&mut dx[r * din..(r + 1) * din], weights, &g[r * dout..(r + 1) * dout]);
                }
            }
            Op::SoftmaxRows { x, rows, cols } => {
                let y = &node.value;
                let dx = grad_mut(grads, nodes, x);
                for c in 0..cols {
                    let s: f64 = (0..rows).map(|r| g[r * cols + c] * y[r * cols + c]).sum();
                    for r in 0..rows {
                        dx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - s);
                    }
                }
            }
            Op::SumRows { x, rows, cols } | Op::MeanRows { x, rows, cols } => {
                let scale = if matches!(node.op, Op::MeanRows { .. }) { 1.0 / rows as f64 } else { 1.0 };
                let dx = grad_mut(grads, nodes, x);
                for row in dx.chunks_exact_mut(cols) {
                    axpy(row, scale, g);
                }
            }
        }
    }
}

fn grad_mut<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Scalar probe: weighted sum of a node's value with fixed weights.
    fn probe(values: &[f64], weights: &[f64]) -> f64 {
        dot(values, weights)
    }

    /// Checks d(probe(build(params)))/dparams against central differences.
    fn check<F>(n_params: usize, build: F)
    where
        F: Fn(&mut Tape) -> Var,
    {
        let mut rng = crate::rng::keyed(&[99, n_params as u64]);
        let params: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (weights, analytic) = {
            let mut tape = Tape::new(&params);
            let out = build(&mut tape);
            let weights: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = tape.backward(&[(out, &weights)]);
            (weights, g)
        };
        let eval = |p: &[f64]| {
            let mut tape = Tape::new(p);
            let out = build(&mut tape);
            probe(tape.value(out), &weights)
        };
        let h = 1e-5;
        for i in 0..n_params {
            let mut p = params.clone();
            p[i] += h;
            let up = eval(&p);
            p[i] -= 2.0 * h;
            let down = eval(&p);
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
            assert!(err < 1e-6, "param {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }

    #[test]
    fn conv3x3_gradient() {
        // input 2x4x5 as params, weights 3x2x3x3, bias 3.
        check(40 + 54 + 3, |t| {
            let x = t.param(0, vec![2, 4, 5]);
            t.conv3x3(x, 40, 94, 3)
        });
    }

    #[test]
    fn conv1x1_and_gating() {
        check(24 + 9 + 3, |t| {
            let x = t.param(0, vec![3, 2, 4]);
            let gate = t.conv1x1(x, 24, 33, 3);
            let s = t.sigmoid(gate);
            t.mul(x, s)
        });
    }

    #[test]
    fn glu_halves_and_pooling() {
        check(4 * 4 * 6, |t| {
            let x = t.param(0, vec![4, 4, 6]);
            let a = t.slice_channels(x, 0, 2);
            let b = t.slice_channels(x, 2, 2);
            let s = t.sigmoid(b);
            let y = t.mul(a, s);
            let y = t.add(y, a);
            t.avg_pool(y, 2, 3)
        });
    }

    #[test]
    fn gru_both_directions() {
        let (tt, d, h) = (5, 3, 2);
        let n_wi = 3 * h * d;
        let n_wh = 3 * h * h;
        let per = n_wi + n_wh + 6 * h;
        let weights = |base: usize| GruWeights { w_i: base, w_h: base + n_wi, b_i: base + n_wi + n_wh, b_h: base + n_wi + n_wh + 3 * h };
        check(tt * d + 2 * per, |t| {
            let x = t.param(0, vec![tt, d]);
            let f = t.gru(x, h, weights(tt * d), false);
            let b = t.gru(x, h, weights(tt * d + per), true);
            t.concat_cols(f, b)
        });
    }

    #[test]
    fn sequence_dense_softmax_pooling() {
        // x [2, 3, 2] -> seq [3, 4] -> dense 4->2 -> attention-weighted sum.
        check(12 + 8 + 2 + 8 + 2, |t| {
            let x = t.param(0, vec![2, 3, 2]);
            let seq = t.to_sequence(x);
            let logits = t.dense(seq, 12, 20, 2);
            let strong = t.sigmoid(logits);
            let att = t.dense(seq, 22, 30, 2);
            let w = t.softmax_rows(att);
            let weighted = t.mul(w, strong);
            let s = t.sum_rows(weighted);
            let m = t.mean_rows(strong);
            t.add(s, m)
        });
    }

    #[test]
    fn to_sequence_layout() {
        let p: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut t = Tape::new(&p);
        let x = t.param(0, vec![2, 3, 2]);
        let s = t.to_sequence(x);
        assert_eq!(t.value(s), &[0., 1., 6., 7., 2., 3., 8., 9., 4., 5., 10., 11.]);
    }

    #[test]
    fn constant_output_has_zero_gradient() {
        let p = vec![0.3; 4];
        let mut t = Tape::new(&p);
        let x = t.input(vec![1.0, 2.0], vec![1, 2]);
        let y = t.sigmoid(x);
        assert_eq!(t.backward(&[(y, &[1.0, 1.0])]), vec![0.0; 4]);
    }
}
