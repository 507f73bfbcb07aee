//! Empirical convexity checks of the power-allocation objectives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSvd;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{substream, DOMAIN_PROBE};

use super::criterion::{Criterion, CriterionKind};
use super::power::PowerAllocation;
use super::waterfill::power_objective;

/// Interpolation weights probed per pair.
pub const THETAS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityViolation {
    pub trial: usize,
    pub theta: f64,
    /// f(θP¹+(1−θ)P²) − θf(P¹) − (1−θ)f(P²).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub trials: usize,
    pub checks: usize,
    /// Largest observed excess relative to max(1, |θf(P¹)+(1−θ)f(P²)|).
    pub max_relative_excess: f64,
    pub violations: Vec<ConvexityViolation>,
    /// AMSE only: worst relative mismatch between the analytic second
    /// derivative and a central finite difference.
    pub second_derivative_error: Option<f64>,
}

/// ∂²f/∂P_km² of the AMSE objective: (2σ_s²/N_c)·Ψ_km⁻³·(σ_s²·H_km/σ_n²)².
pub fn amse_second_derivative(
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    k: usize,
    m: usize,
) -> f64 {
    let a = cfg.signal_to_noise() * gains.gain(k, m);
    let psi = a * p.get(k, m) + 1.0;
    2.0 * cfg.sigma_s2 / p.block_len() as f64 * a * a / psi.powi(3)
}

/// Central second difference in entry (k, m), Richardson-extrapolated.
///
/// Ψ_km varies on the scale s = P_km + σ_n²/(σ_s²·H_km), so the step is taken
/// relative to s; extrapolating D(h) and D(h/2) leaves an O((h/s)⁴) error.
fn central_second_difference(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    k: usize,
    m: usize,
) -> Result<f64> {
    let x = p.get(k, m);
    let gain = gains.gain(k, m);
    let scale = if gain > 0.0 {
        x + cfg.sigma_n2 / (cfg.sigma_s2 * gain)
    } else {
        1.0 + x
    };
    let at = |v: f64| -> Result<f64> {
        let mut q = p.clone();
        q.set(k, m, v);
        power_objective(c, &q, gains, cfg)
    };
    let centre = at(x)?;
    let diff = |h: f64| -> Result<f64> { Ok((at(x + h)? - 2.0 * centre + at(x - h)?) / (h * h)) };
    let h = 2e-3 * scale;
    Ok((4.0 * diff(0.5 * h)? - diff(h)?) / 3.0)
}

fn random_allocation<R: Rng>(rng: &mut R, gains: &ChannelSvd, cfg: &SystemConfig) -> PowerAllocation {
    let (n_c, m) = (gains.block_len(), gains.n_streams());
    let scale = 2.0 * cfg.power_budget / (n_c * m) as f64;
    let mut p = PowerAllocation::zeros(n_c, m);
    for k in 0..n_c {
        for j in 0..m {
            p.set(k, j, scale * rng.random::<f64>());
        }
    }
    p
}

/// Checks f(θP¹+(1−θ)P²) ≤ θf(P¹)+(1−θ)f(P²) + tol on `trials` random
/// allocation pairs; for AMSE also compares the analytic second derivative
/// with central finite differences at every P¹.
pub fn convexity_probe(
    c: &Criterion,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be ≥ 1".into()));
    }
    let mut rng = substream(seed, DOMAIN_PROBE, 0, 0);
    let mut report = ConvexityReport {
        trials,
        checks: 0,
        max_relative_excess: f64::NEG_INFINITY,
        violations: Vec::new(),
        second_derivative_error: None,
    };
    let amse = c.kind.allocation_kind() == CriterionKind::Amse;
    for trial in 0..trials {
        let p1 = random_allocation(&mut rng, gains, cfg);
        let p2 = random_allocation(&mut rng, gains, cfg);
        let (f1, f2) = (
            power_objective(c, &p1, gains, cfg)?,
            power_objective(c, &p2, gains, cfg)?,
        );
        for theta in THETAS {
            let mix = PowerAllocation::from_rows(
                (0..p1.block_len())
                    .map(|k| {
                        p1.row(k)
                            .iter()
                            .zip(p2.row(k))
                            .map(|(a, b)| theta * a + (1.0 - theta) * b)
                            .collect()
                    })
                    .collect(),
            )?;
            let chord = theta * f1 + (1.0 - theta) * f2;
            let excess = power_objective(c, &mix, gains, cfg)? - chord;
            let relative = excess / chord.abs().max(1.0);
            report.checks += 1;
            report.max_relative_excess = report.max_relative_excess.max(relative);
            if relative > tol {
                report.violations.push(ConvexityViolation {
                    trial,
                    theta,
                    excess,
                });
            }
        }
        if amse {
            for k in 0..p1.block_len() {
                for m in 0..p1.n_streams() {
                    let analytic = amse_second_derivative(&p1, gains, cfg, k, m);
                    if analytic == 0.0 {
                        // Dead mode: the objective does not depend on this entry.
                        continue;
                    }
                    let fd = central_second_difference(c, &p1, gains, cfg, k, m)?;
                    let err = (fd - analytic).abs() / analytic.abs();
                    let worst = report.second_derivative_error.get_or_insert(0.0);
                    *worst = worst.max(err);
                }
            }
        }
    }
    Ok(report)
}
