//! Single-level waterfilling and the criterion-dependent inner solve.
//!
//! With the SVD beamformer structure every criterion reduces to a function of
//! the per-stream averages e_m = (1/N_c)·Σ_k Ψ_km⁻¹, where
//! Ψ_km = (σ_s²/σ_n²)·P_km·H_km + 1. The per-stream objective terms are
//!
//! | criterion | f_m                  | B_m                     |
//! |-----------|----------------------|-------------------------|
//! | AMSE      | σ_s²·e_m             | 1                       |
//! | GMSE      | log₂(σ_s²·e_m)       | 1 / (σ_s²·ln2·e_m)      |
//! | ASINR     | −(1/e_m − 1)         | 1 / (σ_s²·e_m²)         |
//! | GSINR     | −log₂(1/e_m − 1)     | C_m / (ln2·σ_s²·e_m²)   |
//!
//! with C_m = (1/e_m − 1)⁻¹. B_m is the ratio of ∂f_m/∂P_km to the AMSE
//! derivative, so the stationary point of f + λ·ΣP is the waterfilling
//! solution with stream-dependent levels √B_m.

use crate::channel::ChannelSvd;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

use super::criterion::{Criterion, CriterionKind};
use super::dual::SolverConfig;
use super::power::PowerAllocation;

const LN_2: f64 = std::f64::consts::LN_2;

/// e_m = (1/N_c)·Σ_k Ψ_km⁻¹ for one stream.
fn stream_mean_inverse_psi(powers: &[f64], gains: &[f64], cfg: &SystemConfig) -> f64 {
    let snr = cfg.signal_to_noise();
    let sum: f64 = powers
        .iter()
        .zip(gains)
        .map(|(p, h)| 1.0 / (snr * p * h + 1.0))
        .sum();
    sum / powers.len() as f64
}

fn stream_b(kind: CriterionKind, e: f64, stream: usize, cfg: &SystemConfig) -> Result<f64> {
    let s2 = cfg.sigma_s2;
    Ok(match kind {
        CriterionKind::Gmse => 1.0 / (s2 * LN_2 * e),
        CriterionKind::Asinr => 1.0 / (s2 * e * e),
        CriterionKind::Gsinr => {
            let sinr = 1.0 / e - 1.0;
            if sinr <= 0.0 {
                return Err(Error::ZeroSinr { stream });
            }
            (1.0 / sinr) / (LN_2 * s2 * e * e)
        }
        _ => 1.0,
    })
}

fn stream_objective(kind: CriterionKind, e: f64, stream: usize, cfg: &SystemConfig) -> Result<f64> {
    Ok(match kind {
        CriterionKind::Gmse => (cfg.sigma_s2 * e).log2(),
        CriterionKind::Asinr => -(1.0 / e - 1.0),
        CriterionKind::Gsinr => {
            let sinr = 1.0 / e - 1.0;
            if sinr <= 0.0 {
                return Err(Error::ZeroSinr { stream });
            }
            -sinr.log2()
        }
        _ => cfg.sigma_s2 * e,
    })
}

fn column(p: &PowerAllocation, m: usize) -> Vec<f64> {
    (0..p.block_len()).map(|k| p.get(k, m)).collect()
}

fn gain_column(gains: &ChannelSvd, m: usize) -> Vec<f64> {
    (0..gains.block_len()).map(|k| gains.gain(k, m)).collect()
}

fn check_dims(p: &PowerAllocation, gains: &ChannelSvd) -> Result<()> {
    if p.block_len() != gains.block_len() || p.n_streams() != gains.n_streams() {
        return Err(Error::DimensionMismatch(format!(
            "allocation is {}x{}, gains are {}x{}",
            p.block_len(),
            p.n_streams(),
            gains.block_len(),
            gains.n_streams()
        )));
    }
    Ok(())
}

/// Per-stream averages e_m = (1/N_c)·Σ_k Ψ_km⁻¹.
pub fn normalized_stream_mse(p: &PowerAllocation, gains: &ChannelSvd, cfg: &SystemConfig) -> Vec<f64> {
    (0..p.n_streams())
        .map(|m| stream_mean_inverse_psi(&column(p, m), &gain_column(gains, m), cfg))
        .collect()
}

/// Criterion-dependent factors B_m for the allocation `p`.
///
/// Schur-convex criteria share the AMSE allocation and get B_m = 1.
pub fn b_factor(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    check_dims(p, gains)?;
    let kind = c.kind.allocation_kind();
    normalized_stream_mse(p, gains, cfg)
        .into_iter()
        .enumerate()
        .map(|(m, e)| stream_b(kind, e, m, cfg))
        .collect()
}

/// Objective of the reformulated power-allocation problem, Σ_m f_m(P).
pub fn power_objective(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<f64> {
    check_dims(p, gains)?;
    let kind = c.kind.allocation_kind();
    normalized_stream_mse(p, gains, cfg)
        .into_iter()
        .enumerate()
        .map(|(m, e)| stream_objective(kind, e, m, cfg))
        .sum()
}

/// ∂f/∂P_km = −B_m·(σ_s²/N_c)·(σ_s²/σ_n²)·H_km·Ψ_km⁻², in (k, m) row-major
/// order.
pub fn gradient_entries(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    let b = b_factor(c, p, gains, cfg)?;
    let snr = cfg.signal_to_noise();
    let scale = cfg.sigma_s2 / p.block_len() as f64;
    let mut grad = Vec::with_capacity(p.as_slice().len());
    for k in 0..p.block_len() {
        for (m, bm) in b.iter().enumerate() {
            let h = gains.gain(k, m);
            let psi = snr * p.get(k, m) * h + 1.0;
            grad.push(-bm * scale * snr * h / (psi * psi));
        }
    }
    Ok(grad)
}

/// Lagrange multiplier of the reformulated problem that corresponds to the
/// waterfilling level λ: λ·σ_s²/N_c.
pub fn effective_multiplier(lambda: f64, cfg: &SystemConfig, block_len: usize) -> f64 {
    lambda * cfg.sigma_s2 / block_len as f64
}

/// Relative KKT residual of `p` at waterfilling level `lambda`.
///
/// With μ the effective multiplier: on the support, |∂f/∂P_km + μ|/μ; off
/// the support, the amount by which ∂f/∂P_km + μ is negative, over μ.
pub fn kkt_residual(
    c: &Criterion,
    p: &PowerAllocation,
    lambda: f64,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<f64> {
    let mu = effective_multiplier(lambda, cfg, p.block_len());
    let grad = gradient_entries(c, p, gains, cfg)?;
    Ok(grad
        .iter()
        .zip(p.as_slice())
        .map(|(g, &pk)| {
            let r = (g + mu) / mu;
            if pk > 0.0 {
                r.abs()
            } else {
                (-r).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// One waterfilling entry: (√(σ_n²·B/(σ_s²·λ·H)) − σ_n²/(σ_s²·H))⁺, zero for H = 0.
fn waterfill_entry(level: f64, h: f64, cfg: &SystemConfig) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let inv = cfg.sigma_n2 / (cfg.sigma_s2 * h);
    (level * inv.sqrt() - inv).max(0.0)
}

/// Waterfilling allocation for level `lambda` and factors `b`.
pub fn waterfill(
    lambda: f64,
    b: &[f64],
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<PowerAllocation> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be > 0, got {lambda}")));
    }
    if b.len() != gains.n_streams() {
        return Err(Error::DimensionMismatch(format!(
            "{} B factors for {} streams",
            b.len(),
            gains.n_streams()
        )));
    }
    if b.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidConfig("B factors must be finite and > 0".into()));
    }
    let mut p = PowerAllocation::zeros(gains.block_len(), gains.n_streams());
    for k in 0..gains.block_len() {
        for (m, bm) in b.iter().enumerate() {
            p.set(k, m, waterfill_entry((bm / lambda).sqrt(), gains.gain(k, m), cfg));
        }
    }
    Ok(p)
}

/// Stream powers for water level `u` = √(B/λ).
fn stream_fill(u: f64, gains: &[f64], cfg: &SystemConfig) -> Vec<f64> {
    gains.iter().map(|&h| waterfill_entry(u, h, cfg)).collect()
}

/// Water level at which a stream alone consumes `budget`.
fn level_for_budget(gains: &[f64], budget: f64, cfg: &SystemConfig) -> f64 {
    // Σ_k (u·a_k − c_k)⁺ is piecewise linear in u with breakpoints c_k/a_k.
    let mut pts: Vec<(f64, f64, f64)> = gains
        .iter()
        .filter(|&&h| h > 0.0)
        .map(|&h| {
            let c = cfg.sigma_n2 / (cfg.sigma_s2 * h);
            let a = c.sqrt();
            (c / a, a, c)
        })
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut sa, mut sc) = (0.0, 0.0);
    for (i, &(_, a, c)) in pts.iter().enumerate() {
        sa += a;
        sc += c;
        let u = (budget + sc) / sa;
        let next = pts.get(i + 1).map_or(f64::INFINITY, |p| p.0);
        if u <= next {
            return u;
        }
    }
    f64::INFINITY
}

/// Outcome of the inner solve for one stream.
struct StreamSolve {
    powers: Vec<f64>,
    /// Stream hit the implied per-stream cap Σ_k P_km ≤ P_T.
    capped: bool,
}

/// Solves B(P(u)) = λ·u² for the water level u of one stream by bisection,
/// within the implied cap Σ_k P_km ≤ P_T.
fn bracketed_stream(
    kind: CriterionKind,
    lambda: f64,
    stream: usize,
    gains: &[f64],
    cfg: &SystemConfig,
) -> Result<StreamSolve> {
    let residual = |u: f64| -> Result<f64> {
        let powers = stream_fill(u, gains, cfg);
        let e = stream_mean_inverse_psi(&powers, gains, cfg);
        let b = match stream_b(kind, e, stream, cfg) {
            Ok(b) => b,
            Err(Error::ZeroSinr { .. }) => f64::INFINITY,
            Err(err) => return Err(err),
        };
        Ok(b - lambda * u * u)
    };
    let u_max = level_for_budget(gains, cfg.power_budget, cfg);
    if !u_max.is_finite() {
        // Every gain is zero: nothing to allocate.
        return Ok(StreamSolve {
            powers: vec![0.0; gains.len()],
            capped: false,
        });
    }
    if residual(u_max)? >= 0.0 {
        return Ok(StreamSolve {
            powers: stream_fill(u_max, gains, cfg),
            capped: true,
        });
    }
    // Below the weakest activation level the stream is silent and the
    // residual is B(0) > 0.
    let mut lo = gains
        .iter()
        .filter(|&&h| h > 0.0)
        .map(|&h| (cfg.sigma_n2 / (cfg.sigma_s2 * h)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let mut hi = u_max;
    if residual(lo)? < 0.0 {
        return Ok(StreamSolve {
            powers: vec![0.0; gains.len()],
            capped: false,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StreamSolve {
        powers: stream_fill(0.5 * (lo + hi), gains, cfg),
        capped: false,
    })
}

/// Damped fixed point B ← (1−γ)B + γ·B(P(B)) for one stream, started from
/// the equal-power factors. Returns `None` when it fails to converge or
/// leaves the per-stream cap.
fn fixed_point_stream(
    kind: CriterionKind,
    lambda: f64,
    stream: usize,
    gains: &[f64],
    cfg: &SystemConfig,
    sc: &SolverConfig,
) -> Option<Vec<f64>> {
    let equal = cfg.power_budget / (gains.len() * cfg.n_streams) as f64;
    let start = vec![equal; gains.len()];
    let mut b = stream_b(kind, stream_mean_inverse_psi(&start, gains, cfg), stream, cfg).ok()?;
    for _ in 0..sc.max_inner_iters {
        let powers = stream_fill((b / lambda).sqrt(), gains, cfg);
        if powers.iter().sum::<f64>() > cfg.power_budget {
            return None;
        }
        let next = stream_b(kind, stream_mean_inverse_psi(&powers, gains, cfg), stream, cfg).ok()?;
        if !next.is_finite() {
            return None;
        }
        let change = (next - b).abs() / b;
        b = (1.0 - sc.damping) * b + sc.damping * next;
        if change < sc.fixedpoint_tol {
            return Some(stream_fill((b / lambda).sqrt(), gains, cfg));
        }
    }
    None
}

/// Minimizes Σ_m f_m(P) + λ·Σ_km P_km over P ≥ 0 with each stream total
/// capped at P_T (a constraint implied by the power budget).
///
/// AMSE-allocation criteria are a single waterfill. Otherwise each stream
/// runs the damped fixed point on B_m; a stream that does not settle is
/// solved by bisection on its water level. The result must pass the
/// stationarity certificate on every uncapped stream.
pub fn solve_inner(
    lambda: f64,
    c: &Criterion,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    sc: &SolverConfig,
) -> Result<PowerAllocation> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be > 0, got {lambda}")));
    }
    let kind = c.kind.allocation_kind();
    let m_count = gains.n_streams();
    if kind == CriterionKind::Amse {
        return waterfill(lambda, &vec![1.0; m_count], gains, cfg);
    }
    let mut p = PowerAllocation::zeros(gains.block_len(), m_count);
    let mut capped = vec![false; m_count];
    for (m, cap) in capped.iter_mut().enumerate() {
        let g = gain_column(gains, m);
        let powers = match fixed_point_stream(kind, lambda, m, &g, cfg, sc) {
            Some(powers) => powers,
            None => {
                let solved = bracketed_stream(kind, lambda, m, &g, cfg)?;
                *cap = solved.capped;
                solved.powers
            }
        };
        for (k, v) in powers.into_iter().enumerate() {
            p.set(k, m, v);
        }
    }

    let mu = effective_multiplier(lambda, cfg, p.block_len());
    let grad = gradient_entries(c, &p, gains, cfg)?;
    let mut residual: f64 = 0.0;
    for k in 0..p.block_len() {
        for m in (0..m_count).filter(|&m| !capped[m]) {
            let r = (grad[k * m_count + m] + mu) / mu;
            residual = residual.max(if p.get(k, m) > 0.0 { r.abs() } else { (-r).max(0.0) });
        }
    }
    if residual > sc.kkt_tol {
        return Err(Error::InnerNotConverged {
            iterations: sc.max_inner_iters,
            residual,
        });
    }
    Ok(p)
}
