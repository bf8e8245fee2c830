use crate::error::{Error, Result};
use crate::params::Params;
use crate::seqcore::{FeatureSequence, Rng};

/// Token lookup table, `vocab × dim`.
#[derive(Clone, Debug)]
pub struct Embedding {
    vocab: usize,
    dim: usize,
    pub table: Vec<f32>,
}

impl Embedding {
    pub fn random(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            vocab,
            dim,
            table: (0..vocab * dim).map(|_| rng.normal_f32()).collect(),
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, id: u32) -> Result<&[f32]> {
        let id = id as usize;
        if id >= self.vocab {
            return Err(Error::Usage(format!("token {id} outside vocabulary of {}", self.vocab)));
        }
        Ok(&self.table[id * self.dim..(id + 1) * self.dim])
    }

    pub fn lookup(&self, ids: &[u32]) -> Result<FeatureSequence> {
        let mut out = FeatureSequence::zeros(ids.len(), self.dim);
        for (row, &id) in out.rows_mut().zip(ids) {
            row.copy_from_slice(self.row(id)?);
        }
        Ok(out)
    }

    /// `rows[t] += table[ids[t]]`.
    pub fn add_into(&self, ids: &[u32], rows: &mut FeatureSequence) -> Result<()> {
        for (row, &id) in rows.rows_mut().zip(ids) {
            row.iter_mut().zip(self.row(id)?).for_each(|(r, e)| *r += e);
        }
        Ok(())
    }
}

impl Params for Embedding {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.table)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.table)
    }
}
