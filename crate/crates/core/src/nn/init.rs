//! Parameter initializers.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("finite init")
}

/// Glorot/Xavier uniform with limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}

/// `[rows, cols]` matrix whose rows (if `rows <= cols`) or columns are orthonormal.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    // Gram-Schmidt over the shorter dimension's vectors
    let (count, len) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut data = vec![0.0; rows * cols];
    for (i, q) in basis.iter().enumerate() {
        for (j, &value) in q.iter().enumerate() {
            if rows <= cols {
                data[i * cols + j] = value;
            } else {
                data[j * cols + i] = value;
            }
        }
    }
    Tensor::from_vec(&[rows, cols], data).expect("finite init")
}
