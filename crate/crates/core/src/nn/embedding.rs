use super::Tensor;
use crate::textenc::EncodedSequence;
use crate::{Error, Result};

/// A `batch x seq_len` block of token ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdBatch {
    ids: Vec<usize>,
    batch: usize,
    seq_len: usize,
}

impl IdBatch {
    pub fn new(ids: Vec<usize>, batch: usize, seq_len: usize) -> Result<Self> {
        if ids.len() != batch * seq_len {
            return Err(Error::Shape(format!(
                "{} ids cannot form a {batch}x{seq_len} batch",
                ids.len()
            )));
        }
        Ok(IdBatch {
            ids,
            batch,
            seq_len,
        })
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a EncodedSequence>) -> Result<Self> {
        let mut ids = Vec::new();
        let mut batch = 0;
        let mut seq_len = None;
        for s in seqs {
            match seq_len {
                None => seq_len = Some(s.ids.len()),
                Some(l) if l != s.ids.len() => {
                    return Err(Error::Shape(format!(
                        "sequence of length {} in a batch of length {l}",
                        s.ids.len()
                    )))
                }
                _ => {}
            }
            ids.extend_from_slice(&s.ids);
            batch += 1;
        }
        IdBatch::new(ids, batch, seq_len.unwrap_or(0))
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.seq_len..(b + 1) * self.seq_len]
    }
}

/// Looks up one `table` row per id: `[batch, seq_len, dim]`. Padding ids are
/// ordinary rows.
pub fn embedding_forward(ids: &IdBatch, table: &Tensor) -> Result<Tensor> {
    table.expect_rank(2, "embedding table")?;
    let (vocab, dim) = (table.dim(0), table.dim(1));
    let mut out = Vec::with_capacity(ids.ids.len() * dim);
    for &id in &ids.ids {
        if id >= vocab {
            return Err(Error::Index(format!(
                "token id {id} >= vocabulary size {vocab}"
            )));
        }
        out.extend_from_slice(&table.data()[id * dim..(id + 1) * dim]);
    }
    Tensor::from_vec(&[ids.batch, ids.seq_len, dim], out)
}

/// Gradient of the table: upstream rows summed into the rows of their ids.
pub fn embedding_backward(ids: &IdBatch, grad_out: &Tensor, table_shape: &[usize]) -> Tensor {
    let dim = table_shape[1];
    assert_eq!(grad_out.len(), ids.ids.len() * dim, "embedding grad shape");
    let mut grad = Tensor::zeros(table_shape);
    let g = grad.data_mut();
    for (pos, &id) in ids.ids.iter().enumerate() {
        let src = &grad_out.data()[pos * dim..(pos + 1) * dim];
        for (d, s) in g[id * dim..(id + 1) * dim].iter_mut().zip(src) {
            *d += s;
        }
    }
    grad
}
