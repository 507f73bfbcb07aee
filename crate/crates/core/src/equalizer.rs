//! Linear MMSE frequency-domain equalization and stream MSEs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{block_diagonal, build_block_circulant, FrequencyDomainChannel, TimeDomainChannel};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::optimizer::PowerAllocation;

/// Largest block length accepted by [`dense_mse_matrix`].
pub const DENSE_LIMIT: usize = 32;

/// Allocation and mode gains behind a beamformer with the SVD structure.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredParts {
    pub allocation: PowerAllocation,
    pub gains: Vec<Vec<f64>>,
}

/// Per-subcarrier precoders P_k (N_t × M) and the rotation V_0.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub precoders: Vec<CMatrix>,
    pub rotation: CMatrix,
    /// Present when the precoders are V̄_H·diag(√P)·V_0.
    pub structure: Option<StructuredParts>,
}

impl BeamformerSet {
    /// Arbitrary precoders without the SVD structure.
    pub fn unstructured(precoders: Vec<CMatrix>) -> Result<Self> {
        let first = precoders
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no precoders".into()))?;
        let shape = first.shape();
        if precoders.iter().any(|p| p.shape() != shape) {
            return Err(Error::DimensionMismatch("precoders differ in shape".into()));
        }
        Ok(Self {
            rotation: linalg::identity(shape.1),
            precoders,
            structure: None,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.precoders[0].ncols()
    }

    /// Σ_k tr(P_k P_k†).
    pub fn total_power(&self) -> f64 {
        self.precoders
            .iter()
            .map(|p| p.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Per-subcarrier MMSE filters W_k (M × N_r).
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerSet {
    pub filters: Vec<CMatrix>,
}

/// Diagonal of the time-domain MSE matrix Ê.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMse {
    pub values: Vec<f64>,
    pub sigma_s2: f64,
    /// log₂det(Ê/σ_s²) when Ê is not known to be diagonal; `None` means the
    /// diagonal is the whole matrix.
    #[serde(default)]
    pub log2_det: Option<f64>,
}

impl StreamMse {
    /// MSEs of a diagonal Ê.
    pub fn new(values: Vec<f64>, sigma_s2: f64) -> Self {
        Self {
            values,
            sigma_s2,
            log2_det: None,
        }
    }

    /// log₂det(Ê/σ_s²), from the diagonal when Ê is diagonal.
    pub fn log2_det(&self) -> f64 {
        self.log2_det
            .unwrap_or_else(|| self.normalized().iter().map(|e| e.log2()).sum())
    }

    /// e_m = Ê_mm / σ_s².
    pub fn normalized(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / self.sigma_s2).collect()
    }

    /// SINR_m = 1/e_m − 1.
    pub fn sinr(&self) -> Vec<f64> {
        self.normalized().iter().map(|e| (1.0 / e - 1.0).max(0.0)).collect()
    }
}

fn check_link(fd: &FrequencyDomainChannel, bf: &BeamformerSet) -> Result<()> {
    if fd.block_len() != bf.precoders.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} subcarriers but {} precoders",
            fd.block_len(),
            bf.precoders.len()
        )));
    }
    if bf.precoders[0].nrows() != fd.n_tx() {
        return Err(Error::DimensionMismatch(format!(
            "precoders have {} rows, channel has {} transmit antennas",
            bf.precoders[0].nrows(),
            fd.n_tx()
        )));
    }
    Ok(())
}

/// Ψ_k = (σ_s²/σ_n²)·P_k†H_{f,k}†H_{f,k}P_k + I_M.
pub fn psi_k(h_fk: &CMatrix, p_k: &CMatrix, cfg: &SystemConfig) -> Result<CMatrix> {
    if h_fk.ncols() != p_k.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, P is {}x{}",
            h_fk.nrows(),
            h_fk.ncols(),
            p_k.nrows(),
            p_k.ncols()
        )));
    }
    let hp = h_fk * p_k;
    let mut psi = hp.adjoint() * &hp * Complex64::new(cfg.signal_to_noise(), 0.0);
    for i in 0..psi.nrows() {
        psi[(i, i)] += Complex64::new(1.0, 0.0);
    }
    // Enforce exact Hermitian symmetry against round-off.
    Ok((&psi + psi.adjoint()) * Complex64::new(0.5, 0.0))
}

fn psi_inverse(psi: &CMatrix) -> CMatrix {
    linalg::hpd_inverse(psi).expect("Ψ_k ⪰ I is positive definite")
}

/// W_k = (σ_s²/σ_n²)·Ψ_k⁻¹·P_k†·H_{f,k}† for every subcarrier.
pub fn mmse_filter(
    fd: &FrequencyDomainChannel,
    bf: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<EqualizerSet> {
    check_link(fd, bf)?;
    let filters = fd
        .subcarriers
        .iter()
        .zip(&bf.precoders)
        .map(|(h, p)| {
            let psi = psi_k(h, p, cfg)?;
            let rhs = p.adjoint() * h.adjoint();
            let chol = psi.cholesky().expect("Ψ_k ⪰ I is positive definite");
            Ok(chol.solve(&rhs) * Complex64::new(cfg.signal_to_noise(), 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EqualizerSet { filters })
}

/// Ê = (σ_s²/N_c)·Σ_k Ψ_k⁻¹ under the MMSE filter, for any beamformer.
pub fn mse_matrix(
    fd: &FrequencyDomainChannel,
    bf: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<CMatrix> {
    check_link(fd, bf)?;
    let m = bf.n_streams();
    let mut acc = CMatrix::zeros(m, m);
    for (h, p) in fd.subcarriers.iter().zip(&bf.precoders) {
        acc += psi_inverse(&psi_k(h, p, cfg)?);
    }
    Ok(acc * Complex64::new(cfg.sigma_s2 / fd.block_len() as f64, 0.0))
}

/// Ê for an arbitrary filter set: (1/N_c)·Σ_k [σ_s²(W_kH_kP_k − I)(·)† + σ_n²W_kW_k†].
pub fn mse_matrix_with_filter(
    fd: &FrequencyDomainChannel,
    bf: &BeamformerSet,
    eq: &EqualizerSet,
    cfg: &SystemConfig,
) -> Result<CMatrix> {
    check_link(fd, bf)?;
    if eq.filters.len() != fd.block_len() {
        return Err(Error::DimensionMismatch("filter count differs from N_c".into()));
    }
    let m = bf.n_streams();
    let mut acc = CMatrix::zeros(m, m);
    for ((h, p), w) in fd.subcarriers.iter().zip(&bf.precoders).zip(&eq.filters) {
        let mut g = w * h * p;
        for i in 0..m {
            g[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        acc += &g * g.adjoint() * Complex64::new(cfg.sigma_s2, 0.0)
            + w * w.adjoint() * Complex64::new(cfg.sigma_n2, 0.0);
    }
    Ok(acc / Complex64::new(fd.block_len() as f64, 0.0))
}

/// Diagonal of Ê computed through the general matrix path.
pub fn stream_mse_general(
    fd: &FrequencyDomainChannel,
    bf: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<StreamMse> {
    let e = mse_matrix(fd, bf, cfg)?;
    let normalized = &e / Complex64::new(cfg.sigma_s2, 0.0);
    let chol = normalized.cholesky().expect("Ê ≻ 0 under the MMSE filter");
    let log2_det = 2.0 * (0..e.nrows()).map(|i| chol.l()[(i, i)].re.log2()).sum::<f64>();
    Ok(StreamMse {
        values: (0..e.nrows()).map(|i| e[(i, i)].re).collect(),
        sigma_s2: cfg.sigma_s2,
        log2_det: Some(log2_det),
    })
}

/// Stream MSEs from the diagonalized form:
/// Ê = (σ_s²/N_c)·Σ_k V_0†·diag(Ψ_km⁻¹)·V_0.
pub fn stream_mse_structured(
    parts: &StructuredParts,
    rotation: &CMatrix,
    cfg: &SystemConfig,
) -> StreamMse {
    let p = &parts.allocation;
    let snr = cfg.signal_to_noise();
    let m = p.n_streams();
    let mut mean_inv = vec![0.0; m];
    for k in 0..p.block_len() {
        for (j, acc) in mean_inv.iter_mut().enumerate() {
            *acc += 1.0 / (snr * p.get(k, j) * parts.gains[k][j] + 1.0);
        }
    }
    let scale = cfg.sigma_s2 / p.block_len() as f64;
    // det Ê = Π_j d_j for any unitary V_0.
    let log2_det = mean_inv.iter().map(|d| (d * scale / cfg.sigma_s2).log2()).sum();
    // diag(V_0† D V_0)_i = Σ_j |V_0[j,i]|²·d_j
    let values = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| rotation[(j, i)].norm_sqr() * mean_inv[j])
                .sum::<f64>()
                * scale
        })
        .collect();
    StreamMse {
        values,
        sigma_s2: cfg.sigma_s2,
        log2_det: Some(log2_det),
    }
}

/// Per-stream MSEs under the MMSE filter. Structured beamformers use the
/// O(N_c·M) scalar formula; anything else goes through the matrix path.
pub fn stream_mse(
    fd: &FrequencyDomainChannel,
    bf: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<StreamMse> {
    check_link(fd, bf)?;
    match &bf.structure {
        Some(parts) => Ok(stream_mse_structured(parts, &bf.rotation, cfg)),
        None => stream_mse_general(fd, bf, cfg),
    }
}

/// Dense M·N_c × M·N_c error covariance built from the full block matrices:
/// E = F_M†[σ_s²(W H P P†H†W† − W H P − P†H†W† + I) + σ_n² W W†]F_M, with
/// H_f obtained from the block-circulant time-domain channel.
pub fn dense_mse_matrix(
    ch: &TimeDomainChannel,
    bf: &BeamformerSet,
    eq: &EqualizerSet,
    cfg: &SystemConfig,
) -> Result<CMatrix> {
    let n_c = bf.precoders.len();
    if n_c > DENSE_LIMIT {
        return Err(Error::TooLarge {
            block_len: n_c,
            limit: DENSE_LIMIT,
        });
    }
    if eq.filters.len() != n_c {
        return Err(Error::DimensionMismatch("filter count differs from N_c".into()));
    }
    let (nr, nt, m) = (ch.n_rx(), ch.n_tx(), bf.n_streams());
    let h_t = build_block_circulant(ch, n_c)?;
    let h_f = linalg::block_dft(n_c, nr) * h_t * linalg::block_dft(n_c, nt).adjoint();
    let p_f = block_diagonal(&bf.precoders);
    let w_f = block_diagonal(&eq.filters);
    let whp = &w_f * h_f * p_f;
    let mut inner = (&whp * whp.adjoint() - &whp - whp.adjoint()) * Complex64::new(cfg.sigma_s2, 0.0);
    for i in 0..m * n_c {
        inner[(i, i)] += Complex64::new(cfg.sigma_s2, 0.0);
    }
    inner += &w_f * w_f.adjoint() * Complex64::new(cfg.sigma_n2, 0.0);
    let f_m = linalg::block_dft(n_c, m);
    Ok(f_m.adjoint() * inner * f_m)
}
