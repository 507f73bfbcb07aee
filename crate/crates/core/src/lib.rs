//! Optimal transmit beamforming for MIMO single-carrier frequency-domain
//! equalization (SC-FDE) links.
//!
//! The crate is organized around the processing chain:
//!
//! - [`channel`]: random time-dispersive MIMO channels, their per-subcarrier
//!   frequency responses and cached SVDs.
//! - [`equalizer`]: the linear MMSE frequency-domain equalizer and the
//!   resulting per-stream time-domain MSEs.
//! - [`optimizer`]: the criterion catalog, the SVD beamformer structure and
//!   the waterfilling power allocation solved by dual subgradient ascent.
//! - [`simulator`]: a waveform-level Monte Carlo link simulator producing BER
//!   and achievable-bit-rate estimates.

pub mod channel;
pub mod config;
pub mod equalizer;
pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod rng;
pub mod simulator;

pub use channel::{
    build_block_circulant, decompose, generate_channel, to_frequency_domain, ChannelSvd,
    FrequencyDomainChannel, PowerDelayProfile, SubcarrierSvd, TimeDomainChannel,
};
pub use config::SystemConfig;
pub use equalizer::{
    dense_mse_matrix, mmse_filter, psi_k, stream_mse, BeamformerSet, EqualizerSet, StreamMse,
};
pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use optimizer::{
    assemble_beamformer, b_factor, convexity_probe, objective, rotation_matrix, schur_class,
    solve_dual, solve_inner, waterfill, Criterion, CriterionKind, DualSolution, DualState,
    PowerAllocation, SchurClass, SolverConfig,
};
pub use simulator::{
    achievable_bit_rate, epa_allocation, monte_carlo_sweep, run_block, theoretical_aber,
    LinkRealization, MonteCarloReport, Scheme, SweepConfig,
};
