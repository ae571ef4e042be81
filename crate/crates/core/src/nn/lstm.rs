//! LSTM layer with backpropagation through time, and the bidirectional wrapper.
//!
//! Gate blocks are packed along the `4 * units` axis in the order input,
//! forget, candidate, output (`i, f, g, o`):
//!
//! ```text
//! z = x W_in + h_prev W_rec + b
//! i = sigmoid(z_i)  f = sigmoid(z_f)  g = tanh(z_g)  o = sigmoid(z_o)
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```

use super::linalg::{gemm, View, ViewMut};
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Input weights `[in_dim, 4U]`, recurrent weights `[U, 4U]`, bias `[4U]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    pub fn units(&self) -> usize {
        self.recurrent.dim(0)
    }

    pub fn in_dim(&self) -> usize {
        self.input.dim(0)
    }

    fn validate(&self) -> Result<()> {
        let u = self.units();
        if self.recurrent.shape() != [u, 4 * u]
            || self.input.dim(1) != 4 * u
            || self.bias.shape() != [4 * u]
        {
            return Err(Error::Shape(format!(
                "inconsistent LSTM params: input {:?}, recurrent {:?}, bias {:?}",
                self.input.shape(),
                self.recurrent.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    direction: Direction,
    input: Tensor,
    /// Gate activations per processing step, `[L][B * 4U]`.
    gates: Vec<Vec<f64>>,
    /// Cell state per processing step, `[L][B * U]`.
    cells: Vec<Vec<f64>>,
    /// Hidden state per processing step, `[L][B * U]`.
    hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub input: Tensor,
    pub params: LstmParams,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn time_index(direction: Direction, step: usize, len: usize) -> usize {
    match direction {
        Direction::Forward => step,
        Direction::Reverse => len - 1 - step,
    }
}

/// Runs the cell over `x: [B, L, C]`. The returned hidden sequence `[B, L, U]`
/// is indexed by input position for both directions; in reverse mode the
/// state at position 0 is the one produced last.
pub fn lstm_forward(
    x: &Tensor,
    p: &LstmParams,
    direction: Direction,
) -> Result<(Tensor, LstmCache)> {
    x.expect_rank(3, "lstm input")?;
    p.validate()?;
    let (b, l, c) = (x.dim(0), x.dim(1), x.dim(2));
    let u = p.units();
    let g4 = 4 * u;
    if c != p.in_dim() {
        return Err(Error::Shape(format!(
            "lstm expects {} input features, got {c}",
            p.in_dim()
        )));
    }

    // input projections for every position at once: [B*L, 4U]
    let mut projected = vec![0.0; b * l * g4];
    gemm(
        1.0,
        View::new(x.data(), b * l, c),
        View::new(p.input.data(), c, g4),
        0.0,
        ViewMut::new(&mut projected, g4),
    );

    let mut out = vec![0.0; b * l * u];
    let mut gates_all = Vec::with_capacity(l);
    let mut cells = Vec::with_capacity(l);
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(l);
    let zeros = vec![0.0; b * u];
    for step in 0..l {
        let t = time_index(direction, step, l);
        let mut z = vec![0.0; b * g4];
        for bi in 0..b {
            let src = &projected[(bi * l + t) * g4..(bi * l + t + 1) * g4];
            for ((dst, s), bias) in z[bi * g4..(bi + 1) * g4]
                .iter_mut()
                .zip(src)
                .zip(p.bias.data())
            {
                *dst = s + bias;
            }
        }
        let h_prev = hidden.last().unwrap_or(&zeros);
        gemm(
            1.0,
            View::new(h_prev, b, u),
            View::new(p.recurrent.data(), u, g4),
            1.0,
            ViewMut::new(&mut z, g4),
        );
        let c_prev = cells.last().unwrap_or(&zeros);
        let mut c_new = vec![0.0; b * u];
        let mut h_new = vec![0.0; b * u];
        for bi in 0..b {
            let zr = &mut z[bi * g4..(bi + 1) * g4];
            for j in 0..u {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[u + j]);
                let g = zr[2 * u + j].tanh();
                let o = sigmoid(zr[3 * u + j]);
                zr[j] = i;
                zr[u + j] = f;
                zr[2 * u + j] = g;
                zr[3 * u + j] = o;
                let cell = f * c_prev[bi * u + j] + i * g;
                c_new[bi * u + j] = cell;
                h_new[bi * u + j] = o * cell.tanh();
            }
            out[(bi * l + t) * u..(bi * l + t + 1) * u]
                .copy_from_slice(&h_new[bi * u..(bi + 1) * u]);
        }
        gates_all.push(z);
        cells.push(c_new);
        hidden.push(h_new);
    }
    let output = Tensor::from_vec(&[b, l, u], out)?;
    Ok((
        output,
        LstmCache {
            direction,
            input: x.clone(),
            gates: gates_all,
            cells,
            hidden,
        },
    ))
}

/// Backpropagation through time given the gradient of every hidden output `[B, L, U]`.
pub fn lstm_backward(cache: &LstmCache, grad_out: &Tensor, p: &LstmParams) -> LstmGrads {
    let x = &cache.input;
    let (b, l, c) = (x.dim(0), x.dim(1), x.dim(2));
    let u = p.units();
    let g4 = 4 * u;
    assert_eq!(grad_out.shape(), &[b, l, u], "lstm grad shape");

    // pre-activation gradients laid out like the input projections: [B*L, 4U]
    let mut dz_all = vec![0.0; b * l * g4];
    let mut d_rec = vec![0.0; u * g4];
    let mut dh_next = vec![0.0; b * u];
    let mut dc_next = vec![0.0; b * u];
    let mut dz = vec![0.0; b * g4];
    for step in (0..l).rev() {
        let t = time_index(cache.direction, step, l);
        let gates = &cache.gates[step];
        let cell = &cache.cells[step];
        for bi in 0..b {
            for j in 0..u {
                let k = bi * u + j;
                let gr = &gates[bi * g4..(bi + 1) * g4];
                let (i, f, g, o) = (gr[j], gr[u + j], gr[2 * u + j], gr[3 * u + j]);
                let c_prev = if step > 0 {
                    cache.cells[step - 1][k]
                } else {
                    0.0
                };
                let tanh_c = cell[k].tanh();
                let dh = grad_out.data()[(bi * l + t) * u + j] + dh_next[k];
                let d_o = dh * tanh_c;
                let dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next[k];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dc_next[k] = dc * f;
                let dzr = &mut dz[bi * g4..(bi + 1) * g4];
                dzr[j] = d_i * i * (1.0 - i);
                dzr[u + j] = d_f * f * (1.0 - f);
                dzr[2 * u + j] = d_g * (1.0 - g * g);
                dzr[3 * u + j] = d_o * o * (1.0 - o);
            }
            dz_all[(bi * l + t) * g4..(bi * l + t + 1) * g4]
                .copy_from_slice(&dz[bi * g4..(bi + 1) * g4]);
        }
        if step > 0 {
            gemm(
                1.0,
                View::new(&cache.hidden[step - 1], b, u).t(),
                View::new(&dz, b, g4),
                1.0,
                ViewMut::new(&mut d_rec, g4),
            );
        }
        gemm(
            1.0,
            View::new(&dz, b, g4),
            View::new(p.recurrent.data(), u, g4).t(),
            0.0,
            ViewMut::new(&mut dh_next, u),
        );
    }

    let mut d_bias = vec![0.0; g4];
    for row in dz_all.chunks_exact(g4) {
        for (d, v) in d_bias.iter_mut().zip(row) {
            *d += v;
        }
    }
    let mut d_in_w = vec![0.0; c * g4];
    gemm(
        1.0,
        View::new(x.data(), b * l, c).t(),
        View::new(&dz_all, b * l, g4),
        0.0,
        ViewMut::new(&mut d_in_w, g4),
    );
    let mut d_x = vec![0.0; b * l * c];
    gemm(
        1.0,
        View::new(&dz_all, b * l, g4),
        View::new(p.input.data(), c, g4).t(),
        0.0,
        ViewMut::new(&mut d_x, c),
    );
    let t = |shape: &[usize], v| Tensor::from_vec(shape, v).expect("finite lstm grad");
    LstmGrads {
        input: t(&[b, l, c], d_x),
        params: LstmParams {
            input: t(&[c, g4], d_in_w),
            recurrent: t(&[u, g4], d_rec),
            bias: t(&[g4], d_bias),
        },
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    reverse: LstmCache,
    seq_len: usize,
    units: usize,
}

#[derive(Debug, Clone)]
pub struct BiLstmGrads {
    pub input: Tensor,
    pub forward: LstmParams,
    pub reverse: LstmParams,
}

/// `[B, L, C] -> [B, 2U]`: the final forward state followed by the final
/// reverse-direction state.
pub fn bilstm_forward(
    x: &Tensor,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<(Tensor, BiLstmCache)> {
    if fwd.input.shape() != bwd.input.shape() || fwd.recurrent.shape() != bwd.recurrent.shape() {
        return Err(Error::Shape(
            "bidirectional LSTM directions differ in shape".into(),
        ));
    }
    let (hf, cf) = lstm_forward(x, fwd, Direction::Forward)?;
    let (hr, cr) = lstm_forward(x, bwd, Direction::Reverse)?;
    let (b, l, u) = (hf.dim(0), hf.dim(1), hf.dim(2));
    if l == 0 {
        return Err(Error::Shape(
            "bidirectional LSTM over an empty sequence".into(),
        ));
    }
    let mut out = Vec::with_capacity(b * 2 * u);
    for bi in 0..b {
        let last = (bi * l + l - 1) * u;
        out.extend_from_slice(&hf.data()[last..last + u]);
        let first = bi * l * u;
        out.extend_from_slice(&hr.data()[first..first + u]);
    }
    Ok((
        Tensor::from_vec(&[b, 2 * u], out)?,
        BiLstmCache {
            forward: cf,
            reverse: cr,
            seq_len: l,
            units: u,
        },
    ))
}

pub fn bilstm_backward(
    cache: &BiLstmCache,
    grad_out: &Tensor,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> BiLstmGrads {
    let (l, u) = (cache.seq_len, cache.units);
    let b = grad_out.dim(0);
    let mut gf = vec![0.0; b * l * u];
    let mut gr = vec![0.0; b * l * u];
    for bi in 0..b {
        let src = &grad_out.data()[bi * 2 * u..(bi + 1) * 2 * u];
        let last = (bi * l + l - 1) * u;
        gf[last..last + u].copy_from_slice(&src[..u]);
        let first = bi * l * u;
        gr[first..first + u].copy_from_slice(&src[u..]);
    }
    let gf = Tensor::from_vec(&[b, l, u], gf).expect("finite");
    let gr = Tensor::from_vec(&[b, l, u], gr).expect("finite");
    let df = lstm_backward(&cache.forward, &gf, fwd);
    let dr = lstm_backward(&cache.reverse, &gr, bwd);
    let mut input = df.input;
    input.add_assign(&dr.input);
    BiLstmGrads {
        input,
        forward: df.params,
        reverse: dr.params,
    }
}
