//! Projected subgradient ascent on the power-constraint multiplier.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSvd;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

use super::criterion::{Criterion, CriterionKind};
use super::power::PowerAllocation;
use super::waterfill::{b_factor, kkt_residual, power_objective, solve_inner, waterfill};

/// Numerical knobs of the power-allocation solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Dimensionless step scale: ε^[i] = step0 / (|∂g/∂λ|·i), with g the
    /// relative constraint gap and the slope measured at λ^[0].
    pub step0: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Stop once |Σ P_km − P_T| / P_T falls below this.
    pub power_tol: f64,
    /// Relative change of B_m that ends the inner fixed point.
    pub fixedpoint_tol: f64,
    /// Damping γ of the fixed point B ← (1−γ)B + γ·B(P).
    pub damping: f64,
    /// Relative stationarity residual accepted from the inner solve.
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step0: 2.0,
            max_outer_iters: 5000,
            max_inner_iters: 200,
            power_tol: 1e-10,
            fixedpoint_tol: 1e-13,
            damping: 0.5,
            kkt_tol: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step0", self.step0),
            ("power_tol", self.power_tol),
            ("fixedpoint_tol", self.fixedpoint_tol),
            ("kkt_tol", self.kkt_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("solver.{name} must be > 0, got {v}")));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "solver.damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("solver iteration caps must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Multiplier state after the last update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub iteration: usize,
    pub step: f64,
    /// Σ P_km − P_T of the last inner solution, before any rescaling.
    pub constraint_gap: f64,
}

/// One subgradient iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub step: f64,
    pub gap: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub allocation: PowerAllocation,
    pub state: DualState,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    /// min(1, P_T/ΣP) applied to the final inner solution.
    pub rescale: f64,
    /// KKT residual of the returned allocation at the final λ.
    pub kkt_residual: f64,
}

/// Relative width below which the multiplier bracket counts as collapsed.
const BRACKET_COLLAPSE: f64 = 1e-10;

/// λ at which the AMSE waterfill (B ≡ 1) spends exactly P_T.
pub fn amse_water_level(gains: &ChannelSvd, cfg: &SystemConfig) -> Result<f64> {
    // With B ≡ 1 all (k, m) share the level u = 1/√λ, and Σ P(u) is piecewise
    // linear in u with breakpoints √(σ_n²/(σ_s²·H_km)).
    let mut pts: Vec<(f64, f64)> = gains
        .gains
        .iter()
        .flatten()
        .filter(|&&h| h > 0.0)
        .map(|&h| {
            let c = cfg.sigma_n2 / (cfg.sigma_s2 * h);
            (c.sqrt(), c)
        })
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidConfig("all channel gains are zero".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut sa, mut sc) = (0.0, 0.0);
    for (i, &(a, c)) in pts.iter().enumerate() {
        sa += a;
        sc += c;
        let u = (cfg.power_budget + sc) / sa;
        if u <= pts.get(i + 1).map_or(f64::INFINITY, |p| p.0) {
            return Ok(1.0 / (u * u));
        }
    }
    unreachable!("the last segment is unbounded")
}

fn relative_gap(p: &PowerAllocation, cfg: &SystemConfig) -> f64 {
    (p.total() - cfg.power_budget) / cfg.power_budget
}

fn record(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    iteration: usize,
    lambda: f64,
    step: f64,
) -> TraceRecord {
    TraceRecord {
        iteration,
        lambda,
        step,
        gap: p.total() - cfg.power_budget,
        objective: power_objective(c, p, gains, cfg).ok(),
    }
}

/// Solves min f(P) s.t. Σ P_km ≤ P_T, P ≥ 0 through its dual.
///
/// λ^[0] is the AMSE water level scaled by the mean B_m of that allocation,
/// then λ^[i+1] = λ^[i] − ε^[i+1]·g^[i] with ε^[i] = step0/(|∂g/∂λ|·i) and g
/// the relative constraint gap. Iterates are kept inside the bracket of
/// multipliers already known to over- or under-spend; an update that would
/// leave it (or reach λ ≤ 0) is replaced by the bracket's geometric mean.
///
/// Objectives that are convex but not strictly so (ASINR is linear along
/// rays) can make Σ P(λ) jump across P_T at the optimal multiplier, so no λ
/// spends the budget exactly. Once the bracket has collapsed, the allocations
/// at its two ends both minimize the Lagrangian, and the convex combination
/// of them that spends P_T is primal optimal.
pub fn solve_dual(
    c: &Criterion,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    sc: &SolverConfig,
) -> Result<DualSolution> {
    cfg.validate()?;
    sc.validate()?;
    if gains.n_streams() != cfg.n_streams {
        return Err(Error::DimensionMismatch(format!(
            "gains carry {} streams, config has {}",
            gains.n_streams(),
            cfg.n_streams
        )));
    }
    let kind = c.kind.allocation_kind();
    let lambda_amse = amse_water_level(gains, cfg)?;

    if kind == CriterionKind::Amse {
        let p = waterfill(lambda_amse, &vec![1.0; gains.n_streams()], gains, cfg)?;
        let trace = vec![record(c, &p, gains, cfg, 0, lambda_amse, 0.0)];
        return finish(c, p, gains, cfg, lambda_amse, 0, 0.0, trace, true);
    }

    let amse_p = waterfill(lambda_amse, &vec![1.0; gains.n_streams()], gains, cfg)?;
    let b_scale = {
        let finite: Vec<f64> = (0..gains.n_streams())
            .filter_map(|m| {
                let b = b_factor(c, &amse_p, gains, cfg);
                b.ok().map(|b| b[m]).filter(|x| x.is_finite())
            })
            .collect();
        if finite.is_empty() {
            1.0
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    };
    let mut lambda = lambda_amse * b_scale;

    let mut p = solve_inner(lambda, c, gains, cfg, sc)?;
    let mut gap = relative_gap(&p, cfg);

    // Local slope of the relative gap for the step normalization.
    let slope = {
        let h = 1e-4;
        let probe = solve_inner(lambda * (1.0 + h), c, gains, cfg, sc)?;
        let d = (relative_gap(&probe, cfg) - gap) / (lambda * h);
        if d.is_finite() && d < 0.0 {
            d
        } else {
            -0.5 / lambda
        }
    };
    let step0 = sc.step0 / slope.abs();

    let mut trace = vec![record(c, &p, gains, cfg, 0, lambda, 0.0)];
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let (mut p_lo, mut p_hi) = (None, None);
    let mut step = 0.0;
    let mut converged = gap.abs() < sc.power_tol;
    let mut iteration = 0;
    while !converged && iteration < sc.max_outer_iters {
        iteration += 1;
        if gap > 0.0 {
            if lambda >= lo {
                lo = lambda;
                p_lo = Some(p.clone());
            }
        } else if lambda <= hi {
            hi = lambda;
            p_hi = Some(p.clone());
        }
        if let (Some(over), Some(under)) = (&p_lo, &p_hi) {
            if hi - lo <= BRACKET_COLLAPSE * hi {
                let (t_over, t_under) = (over.total(), under.total());
                let theta = ((cfg.power_budget - t_under) / (t_over - t_under)).clamp(0.0, 1.0);
                p = over.blend(under, theta);
                lambda = (lo * hi).sqrt();
                step = 0.0;
                gap = relative_gap(&p, cfg);
                trace.push(record(c, &p, gains, cfg, iteration, lambda, step));
                converged = gap.abs() < sc.power_tol;
                break;
            }
        }
        step = step0 / iteration as f64;
        let mut next = lambda - step * gap;
        if !(next > lo && next < hi) {
            next = match (lo > 0.0, hi.is_finite()) {
                (true, true) => (lo * hi).sqrt(),
                (true, false) => 2.0 * lo,
                (false, true) => 0.5 * hi,
                (false, false) => unreachable!("one side is always set"),
            };
        }
        lambda = next;
        p = solve_inner(lambda, c, gains, cfg, sc)?;
        gap = relative_gap(&p, cfg);
        trace.push(record(c, &p, gains, cfg, iteration, lambda, step));
        converged = gap.abs() < sc.power_tol;
    }
    finish(c, p, gains, cfg, lambda, iteration, step, trace, converged)
}

/// When one stream spends the whole budget (the implied per-stream cap is
/// active), every λ below that stream's own level reproduces the same
/// allocation, so the subgradient loop stops at an arbitrary multiplier. The
/// true one is B_m/u_m² with u_m the stream's water level.
fn capped_stream_multiplier(
    c: &Criterion,
    p: &PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> Result<Option<f64>> {
    let Some(m) = (0..p.n_streams())
        .find(|&m| p.stream_total(m) >= cfg.power_budget * (1.0 - 1e-12))
    else {
        return Ok(None);
    };
    let Some(k) = (0..p.block_len()).max_by(|&a, &b| p.get(a, m).total_cmp(&p.get(b, m))) else {
        return Ok(None);
    };
    let h = gains.gain(k, m);
    if !(p.get(k, m) > 0.0 && h > 0.0) {
        return Ok(None);
    }
    // P = u·√c − c with c = σ_n²/(σ_s²·H).
    let cc = cfg.sigma_n2 / (cfg.sigma_s2 * h);
    let u = (p.get(k, m) + cc) / cc.sqrt();
    let Ok(b) = b_factor(c, p, gains, cfg).map(|b| b[m]) else {
        return Ok(None);
    };
    Ok((b.is_finite() && b > 0.0).then(|| b / (u * u)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    c: &Criterion,
    p: PowerAllocation,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
    lambda: f64,
    iteration: usize,
    step: f64,
    trace: Vec<TraceRecord>,
    converged: bool,
) -> Result<DualSolution> {
    let total = p.total();
    let rescale = if total > cfg.power_budget {
        cfg.power_budget / total
    } else {
        1.0
    };
    let allocation = if rescale < 1.0 { p.scaled(rescale) } else { p };
    let lambda = capped_stream_multiplier(c, &allocation, gains, cfg)?.unwrap_or(lambda);
    let kkt = kkt_residual(c, &allocation, lambda, gains, cfg)?;
    Ok(DualSolution {
        allocation,
        state: DualState {
            lambda,
            iteration,
            step,
            constraint_gap: total - cfg.power_budget,
        },
        trace,
        converged,
        rescale,
        kkt_residual: kkt,
    })
}
