use crate::channel::ChannelSvd;
use crate::equalizer::{BeamformerSet, StructuredParts};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

use super::criterion::{schur_class, Criterion, SchurClass};
use super::power::PowerAllocation;

/// V_0: identity for Schur-concave criteria, the unitary M-point DFT for
/// Schur-convex ones. The DFT equalizes the diagonal of V_0†·D·V_0 for any
/// diagonal D.
pub fn rotation_matrix(m: usize, cls: SchurClass) -> CMatrix {
    match cls {
        SchurClass::Concave => linalg::identity(m),
        SchurClass::Convex => linalg::unitary_dft(m),
    }
}

/// P_k = V̄_H^(k)·diag(√P_km)·V_0 for every subcarrier.
pub fn assemble_beamformer(
    svd: &ChannelSvd,
    p: &PowerAllocation,
    c: &Criterion,
) -> Result<BeamformerSet> {
    assemble_with_rotation(svd, p, rotation_matrix(svd.n_streams(), schur_class(c)))
}

pub fn assemble_with_rotation(
    svd: &ChannelSvd,
    p: &PowerAllocation,
    rotation: CMatrix,
) -> Result<BeamformerSet> {
    let m = svd.n_streams();
    if p.block_len() != svd.block_len() || p.n_streams() != m {
        return Err(Error::DimensionMismatch(format!(
            "allocation is {}x{}, channel has {} subcarriers and {} streams",
            p.block_len(),
            p.n_streams(),
            svd.block_len(),
            m
        )));
    }
    if rotation.shape() != (m, m) {
        return Err(Error::DimensionMismatch("rotation must be M x M".into()));
    }
    if p.as_slice().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidConfig("powers must be finite and ≥ 0".into()));
    }
    let precoders = svd
        .subcarriers
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let amplitudes: Vec<f64> = p.row(k).iter().map(|x| x.sqrt()).collect();
            let mut vbar = s.strongest_right(m);
            for (j, a) in amplitudes.iter().enumerate() {
                vbar.column_mut(j).scale_mut(*a);
            }
            vbar * &rotation
        })
        .collect();
    Ok(BeamformerSet {
        precoders,
        rotation,
        structure: Some(StructuredParts {
            allocation: p.clone(),
            gains: svd.gains.clone(),
        }),
    })
}
