//! Waveform-level Monte Carlo link simulation.
//!
//! A block of QPSK symbols is taken to the frequency domain per stream,
//! precoded per subcarrier, brought back to the time domain per antenna,
//! extended with a cyclic prefix and convolved with the channel taps. The
//! receiver drops the prefix, equalizes per subcarrier with the MMSE filter
//! and makes hard decisions in the time domain.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{decompose, generate_channel_with, to_frequency_domain, ChannelSvd, PowerDelayProfile, TimeDomainChannel};
use crate::config::SystemConfig;
use crate::equalizer::{mmse_filter, stream_mse, BeamformerSet, EqualizerSet, StreamMse};
use crate::error::{Error, Result};
use crate::optimizer::{
    assemble_beamformer, assemble_with_rotation, q_function, rotation_matrix, solve_dual, Criterion,
    CriterionKind, PowerAllocation, SchurClass, SolverConfig, TraceRecord,
};
use crate::rng::{substream, DOMAIN_BLOCK, DOMAIN_CHANNEL};

/// A transmit scheme: an optimized criterion or the equal-power baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Optimized(Criterion),
    /// Equal power on the strongest SVD modes, no rotation.
    Epa,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Optimized(c) => c.kind.name(),
            Scheme::Epa => "epa",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("epa") {
            Ok(Scheme::Epa)
        } else {
            Ok(Scheme::Optimized(Criterion::new(s.parse::<CriterionKind>()?)))
        }
    }
}

/// P_km = P_T/(N_c·M).
pub fn epa_allocation(cfg: &SystemConfig) -> PowerAllocation {
    PowerAllocation::filled(
        cfg.block_len,
        cfg.n_streams,
        cfg.power_budget / (cfg.block_len * cfg.n_streams) as f64,
    )
}

/// ABR = −log₂det(Ê/σ_s²) bits per symbol period; −Σ_m log₂(e_m) when Ê
/// is diagonal. The determinant form is unaffected by the rotation V_0.
pub fn achievable_bit_rate(mse: &StreamMse) -> f64 {
    -mse.log2_det()
}

/// Mean per-stream BER prediction (1/M)·Σ_m α·Q(√(β·SINR_m)).
pub fn theoretical_aber(mse: &StreamMse, c: &Criterion) -> f64 {
    let sinr = mse.sinr();
    sinr.iter()
        .map(|s| c.ber_alpha * q_function((c.ber_beta * s).sqrt()))
        .sum::<f64>()
        / sinr.len() as f64
}

/// A designed link ready for block transmission.
#[derive(Debug, Clone)]
pub struct LinkRealization {
    pub channel: TimeDomainChannel,
    pub beamformer: BeamformerSet,
    pub equalizer: EqualizerSet,
    pub snr_db: f64,
}

/// Designed link plus the analytic stream MSEs and solver output.
#[derive(Debug, Clone)]
pub struct DesignedLink {
    pub link: LinkRealization,
    pub mse: StreamMse,
    pub solution: Option<crate::optimizer::DualSolution>,
}

impl LinkRealization {
    /// Designs beamformer and equalizer for `scheme` on `channel`. `cfg`
    /// must already carry the noise variance of the operating point.
    pub fn design(
        channel: TimeDomainChannel,
        scheme: &Scheme,
        cfg: &SystemConfig,
        sc: &SolverConfig,
    ) -> Result<DesignedLink> {
        let fd = to_frequency_domain(&channel, cfg.block_len)?;
        let svd = decompose(&fd, cfg.n_streams)?;
        Self::design_with_svd(channel, &fd, &svd, scheme, cfg, sc)
    }

    pub fn design_with_svd(
        channel: TimeDomainChannel,
        fd: &crate::channel::FrequencyDomainChannel,
        svd: &ChannelSvd,
        scheme: &Scheme,
        cfg: &SystemConfig,
        sc: &SolverConfig,
    ) -> Result<DesignedLink> {
        let (beamformer, solution) = match scheme {
            Scheme::Optimized(c) => {
                let sol = solve_dual(c, svd, cfg, sc)?;
                (assemble_beamformer(svd, &sol.allocation, c)?, Some(sol))
            }
            Scheme::Epa => (
                assemble_with_rotation(
                    svd,
                    &epa_allocation(cfg),
                    rotation_matrix(cfg.n_streams, SchurClass::Concave),
                )?,
                None,
            ),
        };
        let equalizer = mmse_filter(fd, &beamformer, cfg)?;
        let mse = stream_mse(fd, &beamformer, cfg)?;
        Ok(DesignedLink {
            link: LinkRealization {
                channel,
                beamformer,
                equalizer,
                snr_db: cfg.snr_db(),
            },
            mse,
            solution,
        })
    }
}

/// FFT plans for one block length; transforms are unitary.
#[derive(Clone)]
pub struct BlockEngine {
    n_c: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for BlockEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockEngine").field("n_c", &self.n_c).finish()
    }
}

impl BlockEngine {
    pub fn new(n_c: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_c,
            forward: planner.plan_fft_forward(n_c),
            inverse: planner.plan_fft_inverse(n_c),
            scale: 1.0 / (n_c as f64).sqrt(),
        }
    }

    /// Unitary transform of every column of an interleaved `n_c × width`
    /// array (index n·width + j).
    fn transform(&self, data: &[Complex64], width: usize, inverse: bool) -> Vec<Complex64> {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_c];
        for j in 0..width {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = data[n * width + j];
            }
            plan.process(&mut buf);
            for (n, b) in buf.iter().enumerate() {
                out[n * width + j] = b * self.scale;
            }
        }
        out
    }
}

/// Gray-mapped QPSK: bit pair (b0, b1) → √(σ_s²/2)·((1−2b0) + j(1−2b1)).
pub fn qpsk_modulate(bits: &[u8], sigma_s2: f64) -> Vec<Complex64> {
    let a = (sigma_s2 / 2.0).sqrt();
    bits.chunks_exact(2)
        .map(|b| {
            Complex64::new(
                a * (1.0 - 2.0 * b[0] as f64),
                a * (1.0 - 2.0 * b[1] as f64),
            )
        })
        .collect()
}

pub fn qpsk_demodulate(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [(s.re < 0.0) as u8, (s.im < 0.0) as u8])
        .collect()
}

/// Time-domain transmit samples (before the prefix), index n·N_t + t.
pub fn precode(link: &LinkRealization, engine: &BlockEngine, symbols: &[Complex64]) -> Vec<Complex64> {
    let m = link.beamformer.n_streams();
    let nt = link.channel.n_tx();
    let freq = engine.transform(symbols, m, false);
    let mut x_f = vec![Complex64::new(0.0, 0.0); engine.n_c * nt];
    for (k, p) in link.beamformer.precoders.iter().enumerate() {
        for t in 0..nt {
            x_f[k * nt + t] = (0..m).map(|j| p[(t, j)] * freq[k * m + j]).sum();
        }
    }
    engine.transform(&x_f, nt, true)
}

/// Prefix insertion, tap-wise convolution, AWGN and prefix removal.
///
/// `noise` holds one sample per receive antenna for each of the K + N_c
/// received time slots (index n·N_r + r).
pub fn propagate(
    channel: &TimeDomainChannel,
    cp_len: usize,
    x: &[Complex64],
    noise: &[Complex64],
) -> Vec<Complex64> {
    let (nr, nt) = (channel.n_rx(), channel.n_tx());
    let n_c = x.len() / nt;
    let total = cp_len + n_c;
    // Extended sample n of the transmitted block, prefix included.
    let tx = |n: usize, t: usize| x[((n + n_c - cp_len % n_c) % n_c) * nt + t];
    let mut y = vec![Complex64::new(0.0, 0.0); n_c * nr];
    for n in cp_len..total {
        for r in 0..nr {
            let mut acc = noise[n * nr + r];
            for (l, tap) in channel.taps.iter().enumerate().take(n + 1) {
                for t in 0..nt {
                    acc += tap[(r, t)] * tx(n - l, t);
                }
            }
            y[(n - cp_len) * nr + r] = acc;
        }
    }
    y
}

/// Frequency-domain MMSE equalization; returns time-domain estimates
/// (index n·M + j).
pub fn equalize(link: &LinkRealization, engine: &BlockEngine, y: &[Complex64]) -> Vec<Complex64> {
    let nr = link.channel.n_rx();
    let m = link.beamformer.n_streams();
    let y_f = engine.transform(y, nr, false);
    let mut s_f = vec![Complex64::new(0.0, 0.0); engine.n_c * m];
    for (k, w) in link.equalizer.filters.iter().enumerate() {
        for j in 0..m {
            s_f[k * m + j] = (0..nr).map(|r| w[(j, r)] * y_f[k * nr + r]).sum();
        }
    }
    engine.transform(&s_f, m, true)
}

/// Runs one block with given symbols and noise; returns the equalized
/// time-domain estimates.
pub fn simulate_block(
    link: &LinkRealization,
    engine: &BlockEngine,
    cfg: &SystemConfig,
    symbols: &[Complex64],
    noise: &[Complex64],
) -> Vec<Complex64> {
    let x = precode(link, engine, symbols);
    let y = propagate(&link.channel, cfg.cp_len, &x, noise);
    equalize(link, engine, &y)
}

/// Random bits and noise for one block.
pub struct BlockInput {
    pub bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

pub fn draw_block_input<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> BlockInput {
    let bits: Vec<u8> = (0..2 * cfg.block_len * cfg.n_streams)
        .map(|_| rng.random::<bool>() as u8)
        .collect();
    let symbols = qpsk_modulate(&bits, cfg.sigma_s2);
    let sd = (cfg.sigma_n2 / 2.0).sqrt();
    let noise = (0..(cfg.cp_len + cfg.block_len) * cfg.n_rx)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * re, sd * im)
        })
        .collect();
    BlockInput { bits, symbols, noise }
}

/// Transmits one random block and returns (transmitted, detected) bits.
pub fn run_block<R: Rng + ?Sized>(
    link: &LinkRealization,
    cfg: &SystemConfig,
    rng: &mut R,
) -> (Vec<u8>, Vec<u8>) {
    let engine = BlockEngine::new(cfg.block_len);
    run_block_with(link, &engine, cfg, rng)
}

pub fn run_block_with<R: Rng + ?Sized>(
    link: &LinkRealization,
    engine: &BlockEngine,
    cfg: &SystemConfig,
    rng: &mut R,
) -> (Vec<u8>, Vec<u8>) {
    let input = draw_block_input(cfg, rng);
    let estimates = simulate_block(link, engine, cfg, &input.symbols, &input.noise);
    (input.bits, qpsk_demodulate(&estimates))
}

/// Monte Carlo sweep parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub snrs_db: Vec<f64>,
    pub n_channels: usize,
    pub blocks_per_channel: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

/// Aggregate for one (SNR, scheme) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub snr_db: f64,
    pub scheme: String,
    pub ber: f64,
    /// Binomial standard error √(ber(1−ber)/bits).
    pub ber_stderr: f64,
    /// Standard error from the spread of the per-channel BERs. Errors cluster
    /// by channel, so across channels this is the honest uncertainty; equal
    /// to `ber_stderr` when only one channel contributed.
    pub ber_stderr_channels: f64,
    pub abr_bits_per_symbol: f64,
    /// Channels that contributed.
    pub trials: usize,
    pub bits_counted: u64,
    pub bit_errors: u64,
    /// (channel index, BER) of every contributing channel, for paired
    /// comparisons between schemes that share the random numbers.
    #[serde(skip)]
    pub channel_ber: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedChannel {
    pub channel: usize,
    pub snr_db: f64,
    pub scheme: String,
    pub reason: String,
}

/// Solver diagnostics for one (channel, SNR, scheme).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    pub channel: usize,
    pub snr_db: f64,
    pub scheme: String,
    pub converged: bool,
    pub iterations: usize,
    pub lambda: f64,
    pub rescale: f64,
    pub kkt_residual: f64,
    pub iterates: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub points: Vec<ReportPoint>,
    pub excluded: Vec<ExcludedChannel>,
    pub traces: Vec<ChannelTrace>,
}

impl MonteCarloReport {
    pub fn point(&self, snr_db: f64, scheme: &str) -> Option<&ReportPoint> {
        self.points
            .iter()
            .find(|p| p.snr_db == snr_db && p.scheme == scheme)
    }
}

#[derive(Default, Clone)]
struct Tally {
    bits: u64,
    errors: u64,
    abr: Vec<f64>,
    channel_ber: Vec<(usize, f64)>,
}

enum Outcome {
    Ok {
        bits: u64,
        errors: u64,
        abr: f64,
        trace: Option<ChannelTrace>,
    },
    Excluded(String),
}

fn simulate_channel(
    cfg: &SystemConfig,
    pdp: &PowerDelayProfile,
    sweep: &SweepConfig,
    engine: &BlockEngine,
    index: usize,
) -> Vec<Outcome> {
    let cells = sweep.snrs_db.len() * sweep.schemes.len();
    let mut rng = substream(sweep.seed, DOMAIN_CHANNEL, index as u64, 0);
    let prepared = generate_channel_with(cfg, pdp, &mut rng).and_then(|ch| {
        let fd = to_frequency_domain(&ch, cfg.block_len)?;
        let svd = decompose(&fd, cfg.n_streams)?;
        Ok((ch, fd, svd))
    });
    let (channel, fd, svd) = match prepared {
        Ok(v) => v,
        Err(e) => return (0..cells).map(|_| Outcome::Excluded(e.to_string())).collect(),
    };
    let mut out = Vec::with_capacity(cells);
    for (si, &snr_db) in sweep.snrs_db.iter().enumerate() {
        let op = cfg.with_snr_db(snr_db);
        for scheme in &sweep.schemes {
            let designed = match LinkRealization::design_with_svd(channel.clone(), &fd, &svd, scheme, &op, &sweep.solver) {
                Ok(d) => d,
                Err(e) => {
                    out.push(Outcome::Excluded(e.to_string()));
                    continue;
                }
            };
            if let Some(sol) = designed.solution.as_ref().filter(|s| !s.converged) {
                out.push(Outcome::Excluded(format!(
                    "solver did not converge after {} iterations (λ {:e}, KKT residual {:e})",
                    sol.state.iteration, sol.state.lambda, sol.kkt_residual
                )));
                continue;
            }
            let (mut bits, mut errors) = (0u64, 0u64);
            for b in 0..sweep.blocks_per_channel {
                let mut block_rng = substream(
                    sweep.seed,
                    DOMAIN_BLOCK,
                    index as u64,
                    ((si as u64) << 32) | b as u64,
                );
                let (tx, rx) = run_block_with(&designed.link, engine, &op, &mut block_rng);
                bits += tx.len() as u64;
                errors += tx.iter().zip(&rx).filter(|(a, b)| a != b).count() as u64;
            }
            let trace = designed.solution.map(|sol| ChannelTrace {
                channel: index,
                snr_db,
                scheme: scheme.name().to_string(),
                converged: sol.converged,
                iterations: sol.state.iteration,
                lambda: sol.state.lambda,
                rescale: sol.rescale,
                kkt_residual: sol.kkt_residual,
                iterates: sol.trace,
            });
            out.push(Outcome::Ok {
                bits,
                errors,
                abr: achievable_bit_rate(&designed.mse),
                trace,
            });
        }
    }
    out
}

/// Runs the sweep over `n_channels` independent channel draws. Work is
/// spread over the current rayon pool; results do not depend on the
/// number of threads.
pub fn monte_carlo_sweep(
    cfg: &SystemConfig,
    pdp: &PowerDelayProfile,
    sweep: &SweepConfig,
) -> Result<MonteCarloReport> {
    cfg.validate()?;
    pdp.validate()?;
    sweep.solver.validate()?;
    if sweep.schemes.is_empty() || sweep.snrs_db.is_empty() {
        return Err(Error::InvalidConfig("need at least one scheme and one SNR".into()));
    }
    if sweep.n_channels == 0 || sweep.blocks_per_channel == 0 {
        return Err(Error::InvalidConfig("channel and block counts must be ≥ 1".into()));
    }
    if sweep.snrs_db.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("SNR values must be finite".into()));
    }
    let engine = BlockEngine::new(cfg.block_len);
    let per_channel: Vec<Vec<Outcome>> = (0..sweep.n_channels)
        .into_par_iter()
        .map(|c| simulate_channel(cfg, pdp, sweep, &engine, c))
        .collect();

    let n_schemes = sweep.schemes.len();
    let mut tallies = vec![Tally::default(); sweep.snrs_db.len() * n_schemes];
    let mut excluded = Vec::new();
    let mut traces = Vec::new();
    for (channel, outcomes) in per_channel.into_iter().enumerate() {
        for (cell, outcome) in outcomes.into_iter().enumerate() {
            let (si, ci) = (cell / n_schemes, cell % n_schemes);
            match outcome {
                Outcome::Ok {
                    bits,
                    errors,
                    abr,
                    trace,
                } => {
                    let t = &mut tallies[cell];
                    t.bits += bits;
                    t.errors += errors;
                    t.abr.push(abr);
                    t.channel_ber.push((channel, errors as f64 / bits as f64));
                    traces.extend(trace);
                }
                Outcome::Excluded(reason) => excluded.push(ExcludedChannel {
                    channel,
                    snr_db: sweep.snrs_db[si],
                    scheme: sweep.schemes[ci].name().to_string(),
                    reason,
                }),
            }
        }
    }
    let points = tallies
        .into_iter()
        .enumerate()
        .map(|(cell, t)| {
            let (si, ci) = (cell / n_schemes, cell % n_schemes);
            let ber = if t.bits > 0 {
                t.errors as f64 / t.bits as f64
            } else {
                f64::NAN
            };
            let n = t.channel_ber.len();
            let ber_stderr = (ber * (1.0 - ber) / t.bits as f64).sqrt();
            let ber_stderr_channels = if n >= 2 {
                // Every channel carries the same number of bits, so the pooled
                // BER is the mean of the per-channel BERs.
                let var = t.channel_ber.iter().map(|(_, b)| (b - ber).powi(2)).sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                ber_stderr
            };
            ReportPoint {
                snr_db: sweep.snrs_db[si],
                scheme: sweep.schemes[ci].name().to_string(),
                ber,
                ber_stderr,
                ber_stderr_channels,
                abr_bits_per_symbol: t.abr.iter().sum::<f64>() / t.abr.len() as f64,
                trials: t.abr.len(),
                bits_counted: t.bits,
                bit_errors: t.errors,
                channel_ber: t.channel_ber,
            }
        })
        .collect();
    Ok(MonteCarloReport {
        points,
        excluded,
        traces,
    })
}
