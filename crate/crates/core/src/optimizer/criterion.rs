//! Criterion catalog over the stream MSEs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::equalizer::StreamMse;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriterionKind {
    /// Arithmetic MSE.
    Amse,
    /// Geometric MSE.
    Gmse,
    /// Maximum MSE.
    MaxMse,
    /// Arithmetic SINR.
    Asinr,
    /// Geometric SINR.
    Gsinr,
    /// Harmonic SINR.
    Hsinr,
    /// Arithmetic bit error rate.
    Aber,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 7] = [
        CriterionKind::Amse,
        CriterionKind::Gmse,
        CriterionKind::MaxMse,
        CriterionKind::Asinr,
        CriterionKind::Gsinr,
        CriterionKind::Hsinr,
        CriterionKind::Aber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Amse => "amse",
            CriterionKind::Gmse => "gmse",
            CriterionKind::MaxMse => "maxmse",
            CriterionKind::Asinr => "asinr",
            CriterionKind::Gsinr => "gsinr",
            CriterionKind::Hsinr => "hsinr",
            CriterionKind::Aber => "aber",
        }
    }

    /// The criterion whose power allocation this one shares.
    ///
    /// Schur-convex criteria differ from AMSE only by the rotation V_0.
    pub fn allocation_kind(self) -> CriterionKind {
        match schur_class_of(self) {
            SchurClass::Convex => CriterionKind::Amse,
            SchurClass::Concave => self,
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriterionKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown criterion '{s}'")))
    }
}

/// An optimization criterion. `ber_alpha`/`ber_beta` only matter for ABER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub kind: CriterionKind,
    pub ber_alpha: f64,
    pub ber_beta: f64,
}

impl Criterion {
    /// Criterion with the Gray-mapped QPSK constants α = β = 1.
    pub fn new(kind: CriterionKind) -> Self {
        Self {
            kind,
            ber_alpha: 1.0,
            ber_beta: 1.0,
        }
    }

    pub fn aber(alpha: f64, beta: f64) -> Self {
        Self {
            kind: CriterionKind::Aber,
            ber_alpha: alpha,
            ber_beta: beta,
        }
    }
}

impl From<CriterionKind> for Criterion {
    fn from(kind: CriterionKind) -> Self {
        Criterion::new(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchurClass {
    Convex,
    Concave,
}

fn schur_class_of(kind: CriterionKind) -> SchurClass {
    match kind {
        CriterionKind::MaxMse | CriterionKind::Hsinr | CriterionKind::Aber => SchurClass::Convex,
        CriterionKind::Amse | CriterionKind::Gmse | CriterionKind::Asinr | CriterionKind::Gsinr => {
            SchurClass::Concave
        }
    }
}

pub fn schur_class(c: &Criterion) -> SchurClass {
    schur_class_of(c.kind)
}

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Evaluates the criterion on the normalized stream MSEs e_m = Ê_mm/σ_s².
///
/// SINR-based criteria use SINR_m = 1/e_m − 1.
pub fn objective(c: &Criterion, mse: &StreamMse) -> Result<f64> {
    let e = mse.normalized();
    for (stream, &v) in e.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "normalized MSE of stream {stream} out of (0, 1]: {v}"
            )));
        }
    }
    let sinr = |v: f64| (1.0 / v - 1.0).max(0.0);
    let zero_sinr = || {
        e.iter()
            .position(|&v| sinr(v) == 0.0)
            .map(|stream| Error::ZeroSinr { stream })
    };
    let value = match c.kind {
        CriterionKind::Amse => e.iter().sum(),
        CriterionKind::Gmse => e.iter().product(),
        CriterionKind::MaxMse => e.iter().copied().fold(f64::MIN, f64::max),
        CriterionKind::Asinr => -e.iter().map(|&v| sinr(v)).sum::<f64>(),
        CriterionKind::Gsinr => {
            if let Some(err) = zero_sinr() {
                return Err(err);
            }
            -e.iter().map(|&v| sinr(v)).product::<f64>()
        }
        CriterionKind::Hsinr => {
            if let Some(err) = zero_sinr() {
                return Err(err);
            }
            e.iter().map(|&v| 1.0 / sinr(v)).sum()
        }
        CriterionKind::Aber => e
            .iter()
            .map(|&v| c.ber_alpha * q_function((c.ber_beta * sinr(v)).sqrt()))
            .sum(),
    };
    Ok(value)
}
