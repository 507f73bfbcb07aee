use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative N_c × M power table {P_km}, stored row-major by subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    block_len: usize,
    n_streams: usize,
    data: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(block_len: usize, n_streams: usize) -> Self {
        Self::filled(block_len, n_streams, 0.0)
    }

    pub fn filled(block_len: usize, n_streams: usize, value: f64) -> Self {
        Self {
            block_len,
            n_streams,
            data: vec![value; block_len * n_streams],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_streams = rows.first().map(Vec::len).unwrap_or(0);
        if n_streams == 0 || rows.iter().any(|r| r.len() != n_streams) {
            return Err(Error::DimensionMismatch("ragged power table".into()));
        }
        let block_len = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("powers must be finite and ≥ 0".into()));
        }
        Ok(Self {
            block_len,
            n_streams,
            data,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.data[k * self.n_streams + m]
    }

    pub fn set(&mut self, k: usize, m: usize, value: f64) {
        self.data[k * self.n_streams + m] = value;
    }

    /// Powers of subcarrier `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_streams..(k + 1) * self.n_streams]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Σ_k P_km.
    pub fn stream_total(&self, m: usize) -> f64 {
        (0..self.block_len).map(|k| self.get(k, m)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }

    /// θ·self + (1−θ)·other for θ ∈ [0, 1].
    pub fn blend(&self, other: &Self, theta: f64) -> Self {
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (theta * a + (1.0 - theta) * b).max(0.0))
                .collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
