//! Valid 1-D convolution with built-in ReLU, and global max pooling over time.

use super::linalg::{gemm, View, ViewMut};
use super::Tensor;
use crate::{Error, Result};

/// Kernel `[kernel_size, in_dim, filters]` and bias `[filters]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl Conv1dParams {
    pub fn kernel_size(&self) -> usize {
        self.kernel.dim(0)
    }

    pub fn in_dim(&self) -> usize {
        self.kernel.dim(1)
    }

    pub fn filters(&self) -> usize {
        self.kernel.dim(2)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    input: Tensor,
    output: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// `[B, L, C] -> [B, L - K + 1, F]`, then ReLU.
pub fn conv1d_forward(x: &Tensor, p: &Conv1dParams) -> Result<(Tensor, Conv1dCache)> {
    x.expect_rank(3, "conv1d input")?;
    let (b, l, c) = (x.dim(0), x.dim(1), x.dim(2));
    let (k, f) = (p.kernel_size(), p.filters());
    if p.in_dim() != c {
        return Err(Error::Shape(format!(
            "conv1d kernel expects {} channels, input has {c}",
            p.in_dim()
        )));
    }
    if l < k {
        return Err(Error::Shape(format!(
            "conv1d input length {l} shorter than kernel size {k}"
        )));
    }
    let t = l - k + 1;
    let mut out = vec![0.0; b * t * f];
    for (row, bias) in out
        .chunks_exact_mut(f)
        .zip(std::iter::repeat(p.bias.data()))
    {
        row.copy_from_slice(bias);
    }
    let kernel = View::new(p.kernel.data(), k * c, f);
    for bi in 0..b {
        // window t starts at row t of the sample; windows overlap with row stride C
        let windows = View {
            data: x.data(),
            offset: bi * l * c,
            rows: t,
            cols: k * c,
            rs: c,
            cs: 1,
        };
        let dst = ViewMut {
            data: &mut out,
            offset: bi * t * f,
            rs: f,
            cs: 1,
        };
        gemm(1.0, windows, kernel, 1.0, dst);
    }
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    let output = Tensor::from_vec(&[b, t, f], out)?;
    Ok((
        output.clone(),
        Conv1dCache {
            input: x.clone(),
            output,
        },
    ))
}

pub fn conv1d_backward(cache: &Conv1dCache, grad_out: &Tensor, p: &Conv1dParams) -> Conv1dGrads {
    let x = &cache.input;
    let (b, l, c) = (x.dim(0), x.dim(1), x.dim(2));
    let (k, f) = (p.kernel_size(), p.filters());
    let t = l - k + 1;
    assert_eq!(grad_out.shape(), &[b, t, f], "conv1d grad shape");

    // through the ReLU
    let dz: Vec<f64> = grad_out
        .data()
        .iter()
        .zip(cache.output.data())
        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
        .collect();

    let mut d_bias = vec![0.0; f];
    for row in dz.chunks_exact(f) {
        for (d, g) in d_bias.iter_mut().zip(row) {
            *d += g;
        }
    }

    let mut d_kernel = vec![0.0; k * c * f];
    let mut d_input = vec![0.0; b * l * c];
    for bi in 0..b {
        let dz_b = View {
            data: &dz,
            offset: bi * t * f,
            rows: t,
            cols: f,
            rs: f,
            cs: 1,
        };
        let windows = View {
            data: x.data(),
            offset: bi * l * c,
            rows: t,
            cols: k * c,
            rs: c,
            cs: 1,
        };
        gemm(1.0, windows.t(), dz_b, 1.0, ViewMut::new(&mut d_kernel, f));
        // each kernel tap scatters into the input rows it touched
        for tap in 0..k {
            let w_tap_t = View {
                data: p.kernel.data(),
                offset: tap * c * f,
                rows: f,
                cols: c,
                rs: 1,
                cs: f,
            };
            let dst = ViewMut {
                data: &mut d_input,
                offset: bi * l * c + tap * c,
                rs: c,
                cs: 1,
            };
            gemm(1.0, dz_b, w_tap_t, 1.0, dst);
        }
    }
    Conv1dGrads {
        input: Tensor::from_vec(&[b, l, c], d_input).expect("finite conv grad"),
        kernel: Tensor::from_vec(&[k, c, f], d_kernel).expect("finite conv grad"),
        bias: Tensor::from_vec(&[f], d_bias).expect("finite conv grad"),
    }
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    steps: usize,
}

/// `[B, T, F] -> [B, F]`, keeping the first time step on ties.
pub fn global_max_pool(x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
    x.expect_rank(3, "global max pool input")?;
    let (b, t, f) = (x.dim(0), x.dim(1), x.dim(2));
    if t == 0 {
        return Err(Error::Shape("global max pool over zero time steps".into()));
    }
    let data = x.data();
    let mut out = Vec::with_capacity(b * f);
    let mut argmax = Vec::with_capacity(b * f);
    for bi in 0..b {
        let base = bi * t * f;
        let mut best = data[base..base + f].to_vec();
        let mut best_t = vec![0; f];
        for step in 1..t {
            let row = &data[base + step * f..base + (step + 1) * f];
            for j in 0..f {
                if row[j] > best[j] {
                    best[j] = row[j];
                    best_t[j] = step;
                }
            }
        }
        out.extend(best);
        argmax.extend(best_t);
    }
    Ok((
        Tensor::from_vec(&[b, f], out)?,
        MaxPoolCache { argmax, steps: t },
    ))
}

pub fn global_max_pool_backward(cache: &MaxPoolCache, grad_out: &Tensor) -> Tensor {
    let (b, f) = (grad_out.dim(0), grad_out.dim(1));
    let t = cache.steps;
    let mut d = vec![0.0; b * t * f];
    for bi in 0..b {
        for j in 0..f {
            let step = cache.argmax[bi * f + j];
            d[(bi * t + step) * f + j] = grad_out.data()[bi * f + j];
        }
    }
    Tensor::from_vec(&[b, t, f], d).expect("finite pool grad")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_kernel_is_rectified() {
        let x = Tensor::from_vec(&[1, 3, 1], vec![1.0, 2.0, 4.0]).unwrap();
        let p = Conv1dParams {
            kernel: Tensor::from_vec(&[2, 1, 1], vec![1.0, -1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        let (y, _) = conv1d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(y.data(), &[0.0, 0.0]);

        // reversed kernel gives the positive differences
        let p = Conv1dParams {
            kernel: Tensor::from_vec(&[2, 1, 1], vec![-1.0, 1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        assert_eq!(conv1d_forward(&x, &p).unwrap().0.data(), &[1.0, 2.0]);
    }

    #[test]
    fn unit_kernel_is_relu() {
        let x = Tensor::from_vec(&[1, 4, 1], vec![-1.0, 0.5, 3.0, -2.0]).unwrap();
        let p = Conv1dParams {
            kernel: Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        assert_eq!(
            conv1d_forward(&x, &p).unwrap().0.data(),
            &[0.0, 0.5, 3.0, 0.0]
        );
    }

    #[test]
    fn hand_computed_multichannel() {
        // C=2, F=2, K=2, L=3
        let x = Tensor::from_vec(&[1, 3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        // kernel[k][c][f]
        let kernel = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0];
        let p = Conv1dParams {
            kernel: Tensor::from_vec(&[2, 2, 2], kernel).unwrap(),
            bias: Tensor::from_vec(&[2], vec![0.5, 10.0]).unwrap(),
        };
        let (y, _) = conv1d_forward(&x, &p).unwrap();
        // f0 = x[t][0] + x[t+1][0] + 0.5 ; f1 = x[t][1] - x[t+1][1] + 10
        assert_eq!(y.data(), &[4.5, 8.0, 8.5, 8.0]);
    }

    #[test]
    fn too_short_input() {
        let x = Tensor::zeros(&[1, 2, 1]);
        let p = Conv1dParams {
            kernel: Tensor::zeros(&[3, 1, 1]),
            bias: Tensor::zeros(&[1]),
        };
        assert!(matches!(conv1d_forward(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn pool_examples() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![-1.0, 5.0, 3.0, 2.0]).unwrap();
        let (y, _) = global_max_pool(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);

        let x = Tensor::from_vec(&[1, 1, 3], vec![1.0, -2.0, 0.0]).unwrap();
        assert_eq!(global_max_pool(&x).unwrap().0.data(), x.data());
    }

    #[test]
    fn pool_tie_routes_to_first() {
        let x = Tensor::from_vec(&[1, 2, 1], vec![2.0, 2.0]).unwrap();
        let (_, cache) = global_max_pool(&x).unwrap();
        let g = global_max_pool_backward(&cache, &Tensor::from_vec(&[1, 1], vec![1.0]).unwrap());
        assert_eq!(g.data(), &[1.0, 0.0]);
    }
}
