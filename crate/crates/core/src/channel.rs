//! Time-dispersive MIMO channels and their per-subcarrier decompositions.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Relative singular-value threshold below which a mode counts as absent.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Exponential power delay profile p[l] ∝ e^(−l/σ_t), l = 0..L−1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub decay: f64,
    pub length: usize,
}

impl PowerDelayProfile {
    pub fn new(decay: f64, length: usize) -> Result<Self> {
        let pdp = Self { decay, length };
        pdp.validate()?;
        Ok(pdp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pdp decay must be finite and > 0, got {}",
                self.decay
            )));
        }
        if self.length == 0 {
            return Err(Error::InvalidConfig("pdp length must be at least 1".into()));
        }
        Ok(())
    }

    /// Unnormalized weights (1/σ_t)·e^(−l/σ_t).
    pub fn raw_weights(&self) -> Vec<f64> {
        (0..self.length)
            .map(|l| (-(l as f64) / self.decay).exp() / self.decay)
            .collect()
    }

    /// Weights scaled to unit total energy.
    pub fn weights(&self) -> Vec<f64> {
        let raw = self.raw_weights();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Channel impulse response: one N_r × N_t matrix per tap.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainChannel {
    pub taps: Vec<CMatrix>,
}

impl TimeDomainChannel {
    pub fn new(taps: Vec<CMatrix>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::DimensionMismatch("channel needs at least one tap".into()))?;
        let shape = first.shape();
        if taps.iter().any(|t| t.shape() != shape) {
            return Err(Error::DimensionMismatch("taps differ in shape".into()));
        }
        Ok(Self { taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn n_rx(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// Per-subcarrier channel matrices H_{f,k}, k = 0..N_c−1.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDomainChannel {
    pub subcarriers: Vec<CMatrix>,
}

impl FrequencyDomainChannel {
    pub fn block_len(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn n_rx(&self) -> usize {
        self.subcarriers[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.subcarriers[0].ncols()
    }
}

/// Full SVD of one subcarrier matrix, singular values in ascending order.
///
/// With r = min(N_t, N_r), the singular values occupy the bottom-right r × r
/// corner of the N_r × N_t singular-value matrix, so the right-most columns
/// of `u` and `v` belong to the strongest modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierSvd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl SubcarrierSvd {
    /// N_r × N_t singular-value matrix.
    pub fn lambda(&self) -> CMatrix {
        let (nr, nt) = (self.u.nrows(), self.v.nrows());
        let r = self.singular_values.len();
        let mut out = CMatrix::zeros(nr, nt);
        for (i, s) in self.singular_values.iter().enumerate() {
            out[(nr - r + i, nt - r + i)] = Complex64::new(*s, 0.0);
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        &self.u * self.lambda() * self.v.adjoint()
    }

    /// The `m` right-most columns of V (strongest right singular vectors).
    pub fn strongest_right(&self, m: usize) -> CMatrix {
        let n = self.v.ncols();
        self.v.columns(n - m, m).into_owned()
    }
}

/// Cached per-subcarrier SVDs plus the retained mode gains H_km.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSvd {
    pub subcarriers: Vec<SubcarrierSvd>,
    /// `gains[k][m]`: square of the (r−M+m)-th ascending singular value.
    pub gains: Vec<Vec<f64>>,
    pub n_streams: usize,
}

impl ChannelSvd {
    pub fn block_len(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    /// H_km.
    pub fn gain(&self, k: usize, m: usize) -> f64 {
        self.gains[k][m]
    }

    /// Builds a decomposition directly from gains, with identity singular
    /// vectors. Useful for exercising the power allocation in isolation.
    pub fn from_gains(gains: Vec<Vec<f64>>) -> Result<Self> {
        let m = gains
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::DimensionMismatch("empty gain table".into()))?;
        if m == 0 || gains.iter().any(|g| g.len() != m) {
            return Err(Error::DimensionMismatch("ragged gain table".into()));
        }
        if gains.iter().flatten().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidConfig("gains must be finite and ≥ 0".into()));
        }
        let subcarriers = gains
            .iter()
            .map(|g| {
                let mut sv: Vec<f64> = g.iter().map(|x| x.sqrt()).collect();
                sv.sort_by(f64::total_cmp);
                SubcarrierSvd {
                    u: linalg::identity(m),
                    singular_values: sv,
                    v: linalg::identity(m),
                }
            })
            .collect();
        let gains = gains
            .into_iter()
            .map(|mut g| {
                g.sort_by(f64::total_cmp);
                g
            })
            .collect();
        Ok(Self {
            subcarriers,
            gains,
            n_streams: m,
        })
    }
}

/// Draws an uncorrelated Rayleigh channel from the substream seeded by `seed`.
pub fn generate_channel(
    cfg: &SystemConfig,
    pdp: &PowerDelayProfile,
    seed: u64,
) -> Result<TimeDomainChannel> {
    let mut rng = crate::rng::substream(seed, crate::rng::DOMAIN_CHANNEL, 0, 0);
    generate_channel_with(cfg, pdp, &mut rng)
}

/// Draws an uncorrelated Rayleigh channel: every entry of tap l is
/// CN(0, p[l]) with unit-energy PDP weights.
pub fn generate_channel_with<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    pdp: &PowerDelayProfile,
    rng: &mut R,
) -> Result<TimeDomainChannel> {
    pdp.validate()?;
    if pdp.length != cfg.cir_len {
        return Err(Error::DimensionMismatch(format!(
            "pdp length {} differs from cir_len {}",
            pdp.length, cfg.cir_len
        )));
    }
    let taps = pdp
        .weights()
        .into_iter()
        .map(|p| {
            let scale = (p / 2.0).sqrt();
            CMatrix::from_fn(cfg.n_rx, cfg.n_tx, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(scale * re, scale * im)
            })
        })
        .collect();
    Ok(TimeDomainChannel { taps })
}

/// Entrywise unnormalized DFT of the zero-padded tap sequence:
/// H_{f,k} = Σ_l H_{t,l}·e^(−j2πkl/N_c).
pub fn to_frequency_domain(ch: &TimeDomainChannel, n_c: usize) -> Result<FrequencyDomainChannel> {
    if n_c < ch.len() {
        return Err(Error::DimensionMismatch(format!(
            "block length {n_c} shorter than channel length {}",
            ch.len()
        )));
    }
    let (nr, nt) = (ch.n_rx(), ch.n_tx());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_c);
    let mut subcarriers = vec![CMatrix::zeros(nr, nt); n_c];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_c];
    for i in 0..nr {
        for j in 0..nt {
            buf.fill(Complex64::new(0.0, 0.0));
            for (slot, tap) in buf.iter_mut().zip(&ch.taps) {
                *slot = tap[(i, j)];
            }
            fft.process(&mut buf);
            for (h, v) in subcarriers.iter_mut().zip(&buf) {
                h[(i, j)] = *v;
            }
        }
    }
    Ok(FrequencyDomainChannel { subcarriers })
}

fn svd_ascending(h: &CMatrix) -> SubcarrierSvd {
    let svd = h.clone().svd(true, true);
    let u_thin = svd.u.expect("u requested");
    let v_thin = svd.v_t.expect("v_t requested").adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMatrix::from_columns(&order.iter().map(|&i| u_thin.column(i)).collect::<Vec<_>>());
    let v_sorted = CMatrix::from_columns(&order.iter().map(|&i| v_thin.column(i)).collect::<Vec<_>>());
    SubcarrierSvd {
        u: linalg::complete_unitary(&u_sorted),
        singular_values,
        v: linalg::complete_unitary(&v_sorted),
    }
}

/// Per-subcarrier SVDs with the `m` strongest mode gains retained.
pub fn decompose(fd: &FrequencyDomainChannel, m: usize) -> Result<ChannelSvd> {
    let r = fd.n_rx().min(fd.n_tx());
    if m == 0 || m > r {
        return Err(Error::DimensionMismatch(format!(
            "cannot retain {m} modes of a {}x{} channel",
            fd.n_rx(),
            fd.n_tx()
        )));
    }
    let mut subcarriers = Vec::with_capacity(fd.block_len());
    let mut gains = Vec::with_capacity(fd.block_len());
    for (k, h) in fd.subcarriers.iter().enumerate() {
        let svd = svd_ascending(h);
        let largest = svd.singular_values[r - 1];
        let weakest_kept = svd.singular_values[r - m];
        let ratio = if largest > 0.0 { weakest_kept / largest } else { 0.0 };
        if ratio < RANK_THRESHOLD {
            return Err(Error::RankDeficient {
                subcarrier: k,
                required: m,
                ratio,
            });
        }
        gains.push(svd.singular_values[r - m..].iter().map(|s| s * s).collect());
        subcarriers.push(svd);
    }
    Ok(ChannelSvd {
        subcarriers,
        gains,
        n_streams: m,
    })
}

/// Dense block-circulant matrix whose (r, c) block is H_{t,(r−c) mod N_c}.
pub fn build_block_circulant(ch: &TimeDomainChannel, n_c: usize) -> Result<CMatrix> {
    if n_c < ch.len() {
        return Err(Error::DimensionMismatch(format!(
            "block length {n_c} shorter than channel length {}",
            ch.len()
        )));
    }
    let (nr, nt) = (ch.n_rx(), ch.n_tx());
    let mut out = CMatrix::zeros(nr * n_c, nt * n_c);
    for r in 0..n_c {
        for c in 0..n_c {
            let l = (r + n_c - c) % n_c;
            if let Some(tap) = ch.taps.get(l) {
                out.view_mut((r * nr, c * nt), (nr, nt)).copy_from(tap);
            }
        }
    }
    Ok(out)
}

/// Block-diagonal matrix from per-subcarrier blocks.
pub fn block_diagonal(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
