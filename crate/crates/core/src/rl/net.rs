//! Flat-parameter dense layers, tanh MLPs and an LSTM cell with
//! hand-written backward passes.
//!
//! Every layer stores offsets into one shared `&[f64]` so the whole network
//! is a single vector for Adam, checkpoints and finite differences.

use nalgebra::DMatrix;

use crate::dynamics::RngStream;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered named tensors packed back to back.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.len;
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.len += spec.len();
        self.tensors.push(spec);
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Row-major `rows × cols` orthogonal matrix scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut RngStream) -> Vec<f64> {
    let (r, c) = if rows < cols { (cols, rows) } else { (rows, cols) };
    let g = DMatrix::<f64>::from_fn(r, c, |_, _| rng.standard_normal());
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..c {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows < cols { q[(j, i)] } else { q[(i, j)] };
            out[i * cols + j] = gain * v;
        }
    }
    out
}

/// `y = W x + b` with `W` stored row-major as `n_out × n_in`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = layout.push(format!("{name}.weight"), &[n_out, n_in]);
        let b = layout.push(format!("{name}.bias"), &[n_out]);
        Self { n_in, n_out, w, b }
    }

    pub fn init(&self, params: &mut [f64], gain: f64, rng: &mut RngStream) {
        let w = orthogonal(self.n_out, self.n_in, gain, rng);
        params[self.w..self.w + w.len()].copy_from_slice(&w);
        params[self.b..self.b + self.n_out].fill(0.0);
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        let b = &p[self.b..self.b + self.n_out];
        (0..self.n_out)
            .map(|o| {
                let row = &w[o * self.n_in..(o + 1) * self.n_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns `∂L/∂x` when asked.
    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64], want_dx: bool) -> Vec<f64> {
        let n_in = self.n_in;
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let gw = &mut g[self.w + o * n_in..self.w + (o + 1) * n_in];
            for (gi, xi) in gw.iter_mut().zip(x) {
                *gi += d * xi;
            }
            g[self.b + o] += d;
        }
        if !want_dx {
            return Vec::new();
        }
        let w = &p[self.w..self.w + n_in * self.n_out];
        let mut dx = vec![0.0; n_in];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (dxi, wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *dxi += d * wi;
            }
        }
        dx
    }
}

/// Stack of linear layers, each followed by tanh.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    n_in: usize,
}

impl Mlp {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = n_in;
        for (k, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(layout, &format!("{name}.{k}"), prev, h));
            prev = h;
        }
        Self { layers, n_in }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(self.n_in, |l| l.n_out)
    }

    pub fn init(&self, params: &mut [f64], gain: f64, rng: &mut RngStream) {
        for l in &self.layers {
            l.init(params, gain, rng);
        }
    }

    /// Activations: input first, then each layer's tanh output.
    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let mut y = l.forward(p, acts.last().expect("non-empty"));
            y.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(y);
        }
        acts
    }

    /// Returns `∂L/∂input` given `∂L/∂output`.
    pub fn backward(&self, p: &[f64], acts: &[Vec<f64>], dout: &[f64], g: &mut [f64], want_dx: bool) -> Vec<f64> {
        let mut d = dout.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let y = &acts[k + 1];
            for (dv, yv) in d.iter_mut().zip(y) {
                *dv *= 1.0 - yv * yv;
            }
            d = l.backward(p, &acts[k], &d, g, k > 0 || want_dx);
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        Self {
            h: vec![0.0; n],
            c: vec![0.0; n],
        }
    }
}

/// Values saved by a forward step for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates in order i, f, g, o.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Single LSTM cell, gate order i, f, g, o.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub n_in: usize,
    pub n_hidden: usize,
    w_ih: usize,
    w_hh: usize,
    b: usize,
}

impl Lstm {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, n_hidden: usize) -> Self {
        let w_ih = layout.push(format!("{name}.weight_ih"), &[4 * n_hidden, n_in]);
        let w_hh = layout.push(format!("{name}.weight_hh"), &[4 * n_hidden, n_hidden]);
        let b = layout.push(format!("{name}.bias"), &[4 * n_hidden]);
        Self {
            n_in,
            n_hidden,
            w_ih,
            w_hh,
            b,
        }
    }

    /// Orthogonal blocks per gate, zero biases.
    pub fn init(&self, params: &mut [f64], gain: f64, rng: &mut RngStream) {
        let h = self.n_hidden;
        for gate in 0..4 {
            let wi = orthogonal(h, self.n_in, gain, rng);
            let off = self.w_ih + gate * h * self.n_in;
            params[off..off + wi.len()].copy_from_slice(&wi);
            let wh = orthogonal(h, h, gain, rng);
            let off = self.w_hh + gate * h * h;
            params[off..off + wh.len()].copy_from_slice(&wh);
        }
        params[self.b..self.b + 4 * h].fill(0.0);
    }

    pub fn step(&self, p: &[f64], x: &[f64], state: &LstmState) -> (LstmState, LstmCache) {
        let h = self.n_hidden;
        let w_ih = &p[self.w_ih..self.w_ih + 4 * h * self.n_in];
        let w_hh = &p[self.w_hh..self.w_hh + 4 * h * h];
        let b = &p[self.b..self.b + 4 * h];
        let mut gates = vec![0.0; 4 * h];
        for (r, z) in gates.iter_mut().enumerate() {
            let mut acc = b[r];
            acc += w_ih[r * self.n_in..(r + 1) * self.n_in]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>();
            acc += w_hh[r * h..(r + 1) * h]
                .iter()
                .zip(&state.h)
                .map(|(a, b)| a * b)
                .sum::<f64>();
            let gate = r / h;
            *z = if gate == 2 { acc.tanh() } else { sigmoid(acc) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            c[k] = f * state.c[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h_new[k] = o * tanh_c[k];
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        (LstmState { h: h_new, c }, cache)
    }

    /// Backpropagation through time over one sequence. `dh[t]` is the
    /// upstream gradient on the hidden output at step `t`; the initial state
    /// is treated as a constant.
    pub fn backward(&self, p: &[f64], caches: &[LstmCache], dh: &[Vec<f64>], g: &mut [f64]) {
        let h = self.n_hidden;
        let n_in = self.n_in;
        let w_hh = &p[self.w_hh..self.w_hh + 4 * h * h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for (cache, dh_up) in caches.iter().zip(dh).rev() {
            for k in 0..h {
                let gi = cache.gates[k];
                let gf = cache.gates[h + k];
                let gg = cache.gates[2 * h + k];
                let go = cache.gates[3 * h + k];
                let tc = cache.tanh_c[k];
                let dhk = dh_up[k] + dh_next[k];
                let dc = dc_next[k] + dhk * go * (1.0 - tc * tc);
                dz[k] = dc * gg * gi * (1.0 - gi);
                dz[h + k] = dc * cache.c_prev[k] * gf * (1.0 - gf);
                dz[2 * h + k] = dc * gi * (1.0 - gg * gg);
                dz[3 * h + k] = dhk * tc * go * (1.0 - go);
                dc_next[k] = dc * gf;
            }
            dh_next.fill(0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let gw = &mut g[self.w_ih + r * n_in..self.w_ih + (r + 1) * n_in];
                for (gi, xi) in gw.iter_mut().zip(&cache.x) {
                    *gi += d * xi;
                }
                let gw = &mut g[self.w_hh + r * h..self.w_hh + (r + 1) * h];
                for (gi, hi) in gw.iter_mut().zip(&cache.h_prev) {
                    *gi += d * hi;
                }
                g[self.b + r] += d;
                for (dn, wi) in dh_next.iter_mut().zip(&w_hh[r * h..(r + 1) * h]) {
                    *dn += d * wi;
                }
            }
        }
    }
}
