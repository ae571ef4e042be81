//! Central finite-difference verification of analytic gradients.

use std::fmt;

use super::Tensor;
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Magnitudes below this are compared on an absolute scale; central
/// differences of an O(1) loss carry roughly 1e-11 of rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.max_rel_error <= self.tolerance)
    }

    /// Turns a failing report into an error naming the worst block.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let w = self.worst().expect("failing report has blocks");
        Err(Error::Data(format!(
            "gradient check failed: block `{}` rel error {:.3e} > {:.1e} at index {} (analytic {:.6e}, numeric {:.6e})",
            w.name, w.max_rel_error, self.tolerance, w.worst_index, w.analytic, w.numeric
        )))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<24} max rel err {:.3e} {}",
                b.name,
                b.max_rel_error,
                if b.max_rel_error <= self.tolerance {
                    "ok"
                } else {
                    "FAIL"
                }
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic[i]` against central differences of `loss` taken
/// element by element over `params[i]`.
pub fn check_blocks(
    names: &[String],
    params: &[Tensor],
    analytic: &[Tensor],
    step: f64,
    tolerance: f64,
    mut loss: impl FnMut(&[Tensor]) -> Result<f64>,
) -> Result<GradCheckReport> {
    if names.len() != params.len() || params.len() != analytic.len() {
        return Err(Error::Shape(
            "gradient check block lists differ in length".into(),
        ));
    }
    let mut work = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for (bi, name) in names.iter().enumerate() {
        if analytic[bi].shape() != params[bi].shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has the wrong shape"
            )));
        }
        let mut block = BlockError {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..params[bi].len() {
            let original = params[bi].data()[i];
            work[bi].data_mut()[i] = original + step;
            let plus = loss(&work)?;
            work[bi].data_mut()[i] = original - step;
            let minus = loss(&work)?;
            work[bi].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[bi].data()[i];
            let err = relative_error(a, numeric);
            if err > block.max_rel_error {
                block = BlockError {
                    max_rel_error: err,
                    worst_index: i,
                    analytic: a,
                    numeric,
                    ..block
                };
            }
        }
        blocks.push(block);
    }
    Ok(GradCheckReport { blocks, tolerance })
}

#[cfg(test)]
mod tests {
    //! Layer-level checks: each layer's backward against central differences
    //! of a random linear functional of its output.
    use super::*;
    use crate::nn::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-4;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn assert_passes(report: GradCheckReport) {
        println!("{report}");
        report.into_result().unwrap();
    }

    #[test]
    fn conv1d_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 7, 3], &mut rng);
        let p = Conv1dParams {
            kernel: random(&[3, 3, 4], &mut rng),
            bias: random(&[4], &mut rng),
        };
        let probe = random(&[2, 5, 4], &mut rng);
        let (_, cache) = conv1d_forward(&x, &p).unwrap();
        let g = conv1d_backward(&cache, &probe, &p);
        let report = check_blocks(
            &names(&["input", "kernel", "bias"]),
            &[x, p.kernel.clone(), p.bias.clone()],
            &[g.input, g.kernel, g.bias],
            DEFAULT_STEP,
            TOL,
            |v| {
                let p = Conv1dParams {
                    kernel: v[1].clone(),
                    bias: v[2].clone(),
                };
                Ok(dot(&conv1d_forward(&v[0], &p)?.0, &probe))
            },
        )
        .unwrap();
        assert_passes(report);
    }

    #[test]
    fn max_pool_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 5, 3], &mut rng);
        let probe = random(&[2, 3], &mut rng);
        let (_, cache) = global_max_pool(&x).unwrap();
        let g = global_max_pool_backward(&cache, &probe);
        let report = check_blocks(&names(&["input"]), &[x], &[g], DEFAULT_STEP, TOL, |v| {
            Ok(dot(&global_max_pool(&v[0])?.0, &probe))
        })
        .unwrap();
        assert_passes(report);
    }

    #[test]
    fn dense_matches_differences() {
        for (seed, act) in [
            (3, Activation::None),
            (4, Activation::Relu),
            (5, Activation::Softmax),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[3, 4], &mut rng);
            let p = DenseParams {
                weight: random(&[4, 5], &mut rng),
                bias: random(&[5], &mut rng),
            };
            let probe = random(&[3, 5], &mut rng);
            let (_, cache) = dense_forward(&x, &p, act).unwrap();
            let g = dense_backward(&cache, &probe, &p);
            let report = check_blocks(
                &names(&["input", "weight", "bias"]),
                &[x, p.weight.clone(), p.bias.clone()],
                &[g.input, g.weight, g.bias],
                DEFAULT_STEP,
                TOL,
                |v| {
                    let p = DenseParams {
                        weight: v[1].clone(),
                        bias: v[2].clone(),
                    };
                    Ok(dot(&dense_forward(&v[0], &p, act)?.0, &probe))
                },
            )
            .unwrap();
            assert_passes(report);
        }
    }

    #[test]
    fn embedding_backward_accumulates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let table = random(&[6, 3], &mut rng);
        let ids = IdBatch::new(vec![1, 4, 4, 0, 5, 1, 1, 2], 2, 4).unwrap();
        let probe = random(&[2, 4, 3], &mut rng);
        let g = embedding_backward(&ids, &probe, table.shape());
        let report = check_blocks(&names(&["table"]), &[table], &[g], DEFAULT_STEP, TOL, |v| {
            Ok(dot(&embedding_forward(&ids, &v[0])?, &probe))
        })
        .unwrap();
        assert_passes(report);
    }

    #[test]
    fn lstm_matches_differences() {
        for (seed, dir) in [(7, Direction::Forward), (8, Direction::Reverse)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (b, l, c, u) = (2, 3, 3, 4);
            let x = random(&[b, l, c], &mut rng);
            let p = LstmParams {
                input: random(&[c, 4 * u], &mut rng),
                recurrent: random(&[u, 4 * u], &mut rng),
                bias: random(&[4 * u], &mut rng),
            };
            let probe = random(&[b, l, u], &mut rng);
            let (_, cache) = lstm_forward(&x, &p, dir).unwrap();
            let g = lstm_backward(&cache, &probe, &p);
            let report = check_blocks(
                &names(&["input", "w_in", "w_rec", "bias"]),
                &[x, p.input.clone(), p.recurrent.clone(), p.bias.clone()],
                &[g.input, g.params.input, g.params.recurrent, g.params.bias],
                DEFAULT_STEP,
                TOL,
                |v| {
                    let p = LstmParams {
                        input: v[1].clone(),
                        recurrent: v[2].clone(),
                        bias: v[3].clone(),
                    };
                    Ok(dot(&lstm_forward(&v[0], &p, dir)?.0, &probe))
                },
            )
            .unwrap();
            assert_passes(report);
        }
    }

    #[test]
    fn bilstm_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (b, l, c, u) = (2, 5, 3, 4);
        let x = random(&[b, l, c], &mut rng);
        let mk = |rng: &mut ChaCha8Rng| LstmParams {
            input: random(&[c, 4 * u], rng),
            recurrent: random(&[u, 4 * u], rng),
            bias: random(&[4 * u], rng),
        };
        let fwd = mk(&mut rng);
        let bwd = mk(&mut rng);
        let probe = random(&[b, 2 * u], &mut rng);
        let (_, cache) = bilstm_forward(&x, &fwd, &bwd).unwrap();
        let g = bilstm_backward(&cache, &probe, &fwd, &bwd);
        let report = check_blocks(
            &names(&[
                "input", "fwd_in", "fwd_rec", "fwd_bias", "bwd_in", "bwd_rec", "bwd_bias",
            ]),
            &[
                x,
                fwd.input.clone(),
                fwd.recurrent.clone(),
                fwd.bias.clone(),
                bwd.input.clone(),
                bwd.recurrent.clone(),
                bwd.bias.clone(),
            ],
            &[
                g.input,
                g.forward.input,
                g.forward.recurrent,
                g.forward.bias,
                g.reverse.input,
                g.reverse.recurrent,
                g.reverse.bias,
            ],
            DEFAULT_STEP,
            TOL,
            |v| {
                let f = LstmParams {
                    input: v[1].clone(),
                    recurrent: v[2].clone(),
                    bias: v[3].clone(),
                };
                let r = LstmParams {
                    input: v[4].clone(),
                    recurrent: v[5].clone(),
                    bias: v[6].clone(),
                };
                Ok(dot(&bilstm_forward(&v[0], &f, &r)?.0, &probe))
            },
        )
        .unwrap();
        assert_passes(report);
    }

    #[test]
    fn dropout_backward_with_fixed_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(&[4, 5], &mut rng);
        let probe = random(&[4, 5], &mut rng);
        let run = |x: &Tensor| {
            let mut r = ChaCha8Rng::seed_from_u64(77);
            dropout(x, 0.5, Mode::Train, &mut r)
        };
        let (_, mask) = run(&x).unwrap();
        let g = dropout_backward(&mask, &probe);
        let report = check_blocks(&names(&["input"]), &[x], &[g], DEFAULT_STEP, TOL, |v| {
            Ok(dot(&run(&v[0])?.0, &probe))
        })
        .unwrap();
        assert_passes(report);
    }

    #[test]
    fn failing_check_names_block() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let wrong = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let report = check_blocks(&names(&["w"]), &[x], &[wrong], DEFAULT_STEP, TOL, |v| {
            Ok(v[0].data().iter().sum())
        })
        .unwrap();
        assert!(!report.passed());
        let err = report.into_result().unwrap_err().to_string();
        assert!(err.contains("`w`"), "{err}");
    }
}
