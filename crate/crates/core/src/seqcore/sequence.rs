use std::ops::Range;

use crate::error::{shape_err, Result};
use crate::seqcore::Rng;

/// An `L × D` row-major token sequence: `L` tokens of `D` channels each.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    len: usize,
    dim: usize,
}

impl FeatureSequence {
    /// # Panics
    /// If `dim == 0`.
    pub fn zeros(len: usize, dim: usize) -> Self {
        assert!(dim > 0, "FeatureSequence requires at least one channel");
        Self {
            data: vec![0.0; len * dim],
            len,
            dim,
        }
    }

    pub fn from_vec(len: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(shape_err!("channel count must be at least 1"));
        }
        if data.len() != len * dim {
            return Err(shape_err!(
                "buffer of {} values cannot hold {len}x{dim}",
                data.len()
            ));
        }
        Ok(Self { data, len, dim })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(shape_err!("ragged rows"));
        }
        Self::from_vec(rows.len(), dim, rows.concat())
    }

    /// Entries drawn from `N(0, std²)`.
    pub fn random(len: usize, dim: usize, std: f32, rng: &mut Rng) -> Self {
        let mut s = Self::zeros(len, dim);
        s.data.iter_mut().for_each(|v| *v = rng.normal_f32() * std);
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(shape_err!("expected {dim} channels, got {}", self.dim));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.len != other.len || self.dim != other.dim {
            return Err(shape_err!(
                "{}x{} vs {}x{}",
                self.len,
                self.dim,
                other.len,
                other.dim
            ));
        }
        Ok(())
    }

    /// Concatenate along the token axis.
    pub fn concat(parts: &[&FeatureSequence]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(shape_err!("cannot concatenate zero sequences"));
        };
        let dim = first.dim;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            p.check_dim(dim)?;
            data.extend_from_slice(&p.data);
        }
        Self::from_vec(data.len() / dim, dim, data)
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        Self {
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
            len: range.len(),
            dim: self.dim,
        }
    }

    /// Split channels `[0, at)` and `[at, dim)` into two sequences.
    pub fn split_channels(&self, at: usize) -> (Self, Self) {
        assert!(at > 0 && at < self.dim);
        let mut left = Vec::with_capacity(self.len * at);
        let mut right = Vec::with_capacity(self.len * (self.dim - at));
        for row in self.rows() {
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        (
            Self { data: left, len: self.len, dim: at },
            Self { data: right, len: self.len, dim: self.dim - at },
        )
    }

    /// Token order reversed.
    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows().rev() {
            data.extend_from_slice(row);
        }
        Self { data, len: self.len, dim: self.dim }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            len: self.len,
            dim: self.dim,
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f32) -> Result<()> {
        self.check_same_shape(other)?;
        if scale == 1.0 {
            self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        } else {
            self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += scale * b);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.check_same_shape(other).is_err() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len == other.len
            && self.dim == other.dim
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Bit-exact equality of the first `t` rows.
    pub fn prefix_bit_eq(&self, other: &Self, t: usize) -> bool {
        self.dim == other.dim
            && self.len >= t
            && other.len >= t
            && self.data[..t * self.dim]
                .iter()
                .zip(&other.data[..t * self.dim])
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
