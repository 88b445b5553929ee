//! Parameter layout, forward pass and backpropagation for the recommender
//! network.
//!
//! ```text
//! dense x ──affine──► v0 ┐
//! cat 1 ──embed──────► v1 ├─► [v0 | v1 | … | vq, <vi,vj> for i<j] ──tanh MLP──► z
//! cat m ──embed──────► vm ┘
//! ```
//!
//! All parameters live in one flat `Vec<f64>` so that optimizers and the
//! finite-difference checker can address them by index.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub dim: usize,
    /// Rows per embedding table (vocabulary + one out-of-vocabulary row).
    pub table_rows: Vec<usize>,
    pub table_offsets: Vec<usize>,
    pub dense: Option<Dense>,
    pub mlp: Vec<Dense>,
    pub n_vectors: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(dim: usize, vocab_sizes: &[usize], n_dense: usize, hidden: &[usize]) -> Self {
        let mut off = 0;
        let mut table_rows = Vec::new();
        let mut table_offsets = Vec::new();
        for &v in vocab_sizes {
            table_offsets.push(off);
            table_rows.push(v + 1);
            off += (v + 1) * dim;
        }
        let dense = (n_dense > 0).then(|| {
            let d = Dense {
                w: off,
                b: off + dim * n_dense,
                n_in: n_dense,
                n_out: dim,
            };
            off += dim * n_dense + dim;
            d
        });
        let n_vectors = vocab_sizes.len() + usize::from(n_dense > 0);
        let top_in = n_vectors * dim + n_vectors * n_vectors.saturating_sub(1) / 2;
        let mut mlp = Vec::new();
        let mut n_in = top_in;
        for &n_out in hidden.iter().chain(std::iter::once(&1)) {
            mlp.push(Dense {
                w: off,
                b: off + n_in * n_out,
                n_in,
                n_out,
            });
            off += n_in * n_out + n_out;
            n_in = n_out;
        }
        Layout {
            dim,
            table_rows,
            table_offsets,
            dense,
            mlp,
            n_vectors,
            total: off,
        }
    }

    /// Parameter index ranges that are weights (as opposed to biases or
    /// embeddings), with their fan-in.
    pub fn init_groups(&self) -> Vec<(std::ops::Range<usize>, usize)> {
        let mut groups = Vec::new();
        for (&off, &rows) in self.table_offsets.iter().zip(&self.table_rows) {
            groups.push((off..off + rows * self.dim, self.dim));
        }
        if let Some(d) = &self.dense {
            groups.push((d.w..d.w + d.n_in * d.n_out, d.n_in));
            groups.push((d.b..d.b + d.n_out, d.n_in));
        }
        for l in &self.mlp {
            groups.push((l.w..l.w + l.n_in * l.n_out, l.n_in));
            groups.push((l.b..l.b + l.n_out, l.n_in));
        }
        groups
    }

    pub fn output_bias(&self) -> usize {
        self.mlp.last().expect("output layer").b
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Default)]
pub struct Cache {
    vectors: Vec<f64>,
    /// Input to each MLP layer; the last entry is the output layer's input.
    inputs: Vec<Vec<f64>>,
}

fn affine(params: &[f64], l: &Dense, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for o in 0..l.n_out {
        let row = &params[l.w + o * l.n_in..l.w + (o + 1) * l.n_in];
        let mut s = params[l.b + o];
        for (w, xi) in row.iter().zip(x) {
            s += w * xi;
        }
        out.push(s);
    }
}

/// Raw output score for one example. `cats[i]` indexes table `i` (already
/// mapped to the out-of-vocabulary row when unknown).
pub fn forward(
    layout: &Layout,
    params: &[f64],
    cats: &[u32],
    dense: &[f64],
    cache: &mut Cache,
) -> f64 {
    let d = layout.dim;
    cache.vectors.clear();
    let mut tmp = Vec::with_capacity(d);
    if let Some(l) = &layout.dense {
        affine(params, l, dense, &mut tmp);
        cache.vectors.extend_from_slice(&tmp);
    }
    for (i, &k) in cats.iter().enumerate() {
        let start = layout.table_offsets[i] + k as usize * d;
        cache.vectors.extend_from_slice(&params[start..start + d]);
    }
    let q = layout.n_vectors;
    let mut x = cache.vectors.clone();
    for i in 0..q {
        for j in i + 1..q {
            let a = &cache.vectors[i * d..(i + 1) * d];
            let b = &cache.vectors[j * d..(j + 1) * d];
            x.push(a.iter().zip(b).map(|(p, q)| p * q).sum());
        }
    }
    cache.inputs.clear();
    let n_layers = layout.mlp.len();
    for (li, l) in layout.mlp.iter().enumerate() {
        let mut out = Vec::with_capacity(l.n_out);
        affine(params, l, &x, &mut out);
        if li + 1 < n_layers {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        cache.inputs.push(std::mem::replace(&mut x, out));
    }
    x[0]
}

/// Accumulate `dz * ∂z/∂θ` into `grad` for the example last run through
/// [`forward`] with `cache`.
pub fn backward(
    layout: &Layout,
    params: &[f64],
    cats: &[u32],
    dense: &[f64],
    cache: &Cache,
    dz: f64,
    grad: &mut [f64],
) {
    let d = layout.dim;
    let mut g = vec![dz];
    for li in (0..layout.mlp.len()).rev() {
        let l = &layout.mlp[li];
        let input = &cache.inputs[li];
        let mut g_in = vec![0.0; l.n_in];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let w_row = l.w + o * l.n_in;
            for i in 0..l.n_in {
                grad[w_row + i] += go * input[i];
                g_in[i] += go * params[w_row + i];
            }
            grad[l.b + o] += go;
        }
        if li > 0 {
            // input is the tanh output of the previous layer
            for (gi, h) in g_in.iter_mut().zip(input) {
                *gi *= 1.0 - h * h;
            }
        }
        g = g_in;
    }

    let q = layout.n_vectors;
    let v = &cache.vectors;
    let mut gv = g[..q * d].to_vec();
    let mut p = q * d;
    for i in 0..q {
        for j in i + 1..q {
            let gp = g[p];
            p += 1;
            if gp == 0.0 {
                continue;
            }
            for t in 0..d {
                gv[i * d + t] += gp * v[j * d + t];
                gv[j * d + t] += gp * v[i * d + t];
            }
        }
    }

    let mut vi = 0;
    if let Some(l) = &layout.dense {
        let g0 = &gv[..d];
        for o in 0..d {
            for i in 0..l.n_in {
                grad[l.w + o * l.n_in + i] += g0[o] * dense[i];
            }
            grad[l.b + o] += g0[o];
        }
        vi = 1;
    }
    for (i, &k) in cats.iter().enumerate() {
        let start = layout.table_offsets[i] + k as usize * d;
        let gvi = &gv[(vi + i) * d..(vi + i + 1) * d];
        for t in 0..d {
            grad[start + t] += gvi[t];
        }
    }
}
