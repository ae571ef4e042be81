use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, View, ViewMut};
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

/// Weight `[in, out]` and bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    output: Tensor,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Row-wise softmax of a `[B, K]` tensor with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let k = x.dim(1);
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(x.shape(), out).expect("finite softmax")
}

/// `activation(x W + b)` for `x: [B, N]`.
pub fn dense_forward(
    x: &Tensor,
    p: &DenseParams,
    activation: Activation,
) -> Result<(Tensor, DenseCache)> {
    x.expect_rank(2, "dense input")?;
    let (b, n) = (x.dim(0), x.dim(1));
    let m = p.weight.dim(1);
    if p.weight.dim(0) != n || p.bias.shape() != [m] {
        return Err(Error::Shape(format!(
            "dense input [{b}, {n}] against weight {:?} and bias {:?}",
            p.weight.shape(),
            p.bias.shape()
        )));
    }
    let mut out = Vec::with_capacity(b * m);
    for _ in 0..b {
        out.extend_from_slice(p.bias.data());
    }
    gemm(
        1.0,
        View::new(x.data(), b, n),
        View::new(p.weight.data(), n, m),
        1.0,
        ViewMut::new(&mut out, m),
    );
    let mut output = Tensor::from_vec(&[b, m], out)?;
    match activation {
        Activation::Relu => output.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softmax => output = softmax_rows(&output),
        Activation::None => {}
    }
    Ok((
        output.clone(),
        DenseCache {
            input: x.clone(),
            output,
            activation,
        },
    ))
}

pub fn dense_backward(cache: &DenseCache, grad_out: &Tensor, p: &DenseParams) -> DenseGrads {
    let (b, n) = (cache.input.dim(0), cache.input.dim(1));
    let m = p.weight.dim(1);
    assert_eq!(grad_out.shape(), &[b, m], "dense grad shape");
    let y = cache.output.data();
    let dz: Vec<f64> = match cache.activation {
        Activation::None => grad_out.data().to_vec(),
        Activation::Relu => grad_out
            .data()
            .iter()
            .zip(y)
            .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            // J^T g = y * (g - <g, y>) per row
            let mut dz = vec![0.0; b * m];
            for ((dz, g), y) in dz
                .chunks_exact_mut(m)
                .zip(grad_out.data().chunks_exact(m))
                .zip(y.chunks_exact(m))
            {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for j in 0..m {
                    dz[j] = y[j] * (g[j] - dot);
                }
            }
            dz
        }
    };
    let mut d_bias = vec![0.0; m];
    for row in dz.chunks_exact(m) {
        for (d, v) in d_bias.iter_mut().zip(row) {
            *d += v;
        }
    }
    let mut d_w = vec![0.0; n * m];
    gemm(
        1.0,
        View::new(cache.input.data(), b, n).t(),
        View::new(&dz, b, m),
        0.0,
        ViewMut::new(&mut d_w, m),
    );
    let mut d_x = vec![0.0; b * n];
    gemm(
        1.0,
        View::new(&dz, b, m),
        View::new(p.weight.data(), n, m).t(),
        0.0,
        ViewMut::new(&mut d_x, n),
    );
    DenseGrads {
        input: Tensor::from_vec(&[b, n], d_x).expect("finite dense grad"),
        weight: Tensor::from_vec(&[n, m], d_w).expect("finite dense grad"),
        bias: Tensor::from_vec(&[m], d_bias).expect("finite dense grad"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-element multipliers applied by a dropout pass (`0` or `1 / (1 - rate)`).
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; inference is the identity.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), DropoutMask(None)));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), out)?, DropoutMask(Some(mask))))
}

pub fn dropout_backward(mask: &DropoutMask, grad_out: &Tensor) -> Tensor {
    match &mask.0 {
        None => grad_out.clone(),
        Some(m) => {
            let d = grad_out.data().iter().zip(m).map(|(g, m)| g * m).collect();
            Tensor::from_vec(grad_out.shape(), d).expect("finite dropout grad")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weight_passes_through() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let p = DenseParams {
            weight: w,
            bias: Tensor::zeros(&[3]),
        };
        let (y, _) = dense_forward(&x, &p, Activation::None).unwrap();
        assert_eq!(y, x);
        let (y, _) = dense_forward(&x, &p, Activation::Relu).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 3.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn zero_logits_softmax_uniform() {
        let p = DenseParams {
            weight: Tensor::zeros(&[2, 3]),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::from_vec(&[1, 2], vec![4.0, -7.0]).unwrap();
        let (y, _) = dense_forward(&x, &p, Activation::Softmax).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = DenseParams {
            weight: Tensor::zeros(&[2, 3]),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::zeros(&[1, 4]);
        assert!(matches!(
            dense_forward(&x, &p, Activation::None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dropout_infer_and_zero_rate_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout(&x, 0.5, Mode::Infer, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Infer, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let x =
            Tensor::from_vec(&[n], (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect()).unwrap();
        let (y, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean_x: f64 = x.data().iter().sum::<f64>() / n as f64;
        let mean_y: f64 = y.data().iter().sum::<f64>() / n as f64;
        assert!(
            ((mean_y - mean_x) / mean_x).abs() < 0.05,
            "{mean_x} vs {mean_y}"
        );
        let zeros = y.data().iter().filter(|v| **v == 0.0).count();
        assert!((4500..5500).contains(&zeros));
    }
}
