//! Link dimensions and signal levels shared by every stage of the chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions, block structure and signal levels of an SC-FDE link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub n_tx: usize,
    /// Receive antennas.
    pub n_rx: usize,
    /// Spatial data streams.
    pub n_streams: usize,
    /// Symbols per block (FFT size).
    pub block_len: usize,
    /// Channel impulse response length in taps.
    pub cir_len: usize,
    /// Cyclic prefix length in vector symbols.
    pub cp_len: usize,
    /// Symbol variance.
    pub sigma_s2: f64,
    /// Noise variance per receive antenna and time slot.
    pub sigma_n2: f64,
    /// Total power budget of the beamformer.
    pub power_budget: f64,
}

impl Default for SystemConfig {
    /// Two-by-two link with 64-symbol blocks and 16-tap channels, unit symbol
    /// variance and a budget of one unit of power per (subcarrier, stream).
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 2,
            n_streams: 2,
            block_len: 64,
            cir_len: 16,
            cp_len: 16,
            sigma_s2: 1.0,
            sigma_n2: 1.0,
            power_budget: 128.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_streams", self.n_streams),
            ("block_len", self.block_len),
            ("cir_len", self.cir_len),
            ("cp_len", self.cp_len),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.n_streams > self.n_tx.min(self.n_rx) {
            return Err(Error::InvalidConfig("M ≤ min(N_t,N_r) violated".into()));
        }
        if self.cp_len < self.cir_len {
            return Err(Error::InvalidConfig("cp_len must be ≥ cir_len".into()));
        }
        if self.block_len < self.cir_len {
            return Err(Error::InvalidConfig("block_len must be ≥ cir_len".into()));
        }
        for (name, v) in [
            ("sigma_s2", self.sigma_s2),
            ("sigma_n2", self.sigma_n2),
            ("power_budget", self.power_budget),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// SNR = σ_s²·P_T / (M·N_c·σ_n²), linear.
    pub fn snr(&self) -> f64 {
        self.sigma_s2 * self.power_budget
            / (self.n_streams as f64 * self.block_len as f64 * self.sigma_n2)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr().log10()
    }

    /// Copy with σ_n² chosen so that [`SystemConfig::snr_db`] equals `snr_db`.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        let snr = 10f64.powf(snr_db / 10.0);
        Self {
            sigma_n2: self.sigma_s2 * self.power_budget
                / (self.n_streams as f64 * self.block_len as f64 * snr),
            ..*self
        }
    }

    /// Ratio σ_s²/σ_n².
    pub fn signal_to_noise(&self) -> f64 {
        self.sigma_s2 / self.sigma_n2
    }
}
