//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use txbf::{
    decompose, generate_channel, to_frequency_domain, ChannelSvd, CriterionKind,
    FrequencyDomainChannel, PowerDelayProfile, SystemConfig, TimeDomainChannel,
};

/// Square system with M = N_t = N_r, σ_s² = 1, P_T = M·N_c and the noise
/// set from `snr_db`.
pub fn square_cfg(n_c: usize, m: usize, cir_len: usize, snr_db: f64) -> SystemConfig {
    SystemConfig {
        n_tx: m,
        n_rx: m,
        n_streams: m,
        block_len: n_c,
        cir_len,
        cp_len: cir_len,
        sigma_s2: 1.0,
        sigma_n2: 1.0,
        power_budget: (m * n_c) as f64,
    }
    .with_snr_db(snr_db)
}

pub struct Link {
    pub time: TimeDomainChannel,
    pub freq: FrequencyDomainChannel,
    pub svd: ChannelSvd,
}

pub fn random_link(cfg: &SystemConfig, seed: u64) -> Link {
    let pdp = PowerDelayProfile::new(2.0, cfg.cir_len).unwrap();
    let time = generate_channel(cfg, &pdp, seed).unwrap();
    let freq = to_frequency_domain(&time, cfg.block_len).unwrap();
    let svd = decompose(&freq, cfg.n_streams).unwrap();
    Link { time, freq, svd }
}

fn gain(gains: &ChannelSvd, k: usize, m: usize) -> f64 {
    gains.gain(k, m)
}

/// e_m = (1/N_c)·Σ_k 1/(1 + snr·x_km·H_km) for a row-major allocation.
fn stream_means(x: &[f64], gains: &ChannelSvd, cfg: &SystemConfig) -> Vec<f64> {
    let (n_c, m) = (gains.block_len(), gains.n_streams());
    let snr = cfg.sigma_s2 / cfg.sigma_n2;
    (0..m)
        .map(|j| {
            (0..n_c)
                .map(|k| 1.0 / (1.0 + snr * x[k * m + j] * gain(gains, k, j)))
                .sum::<f64>()
                / n_c as f64
        })
        .collect()
}

/// Objective of the power-allocation problem written directly from the
/// criterion definitions; +∞ where a log-SINR term is undefined.
pub fn oracle_objective(kind: CriterionKind, x: &[f64], gains: &ChannelSvd, cfg: &SystemConfig) -> f64 {
    let s2 = cfg.sigma_s2;
    stream_means(x, gains, cfg)
        .into_iter()
        .map(|e| match kind {
            CriterionKind::Amse => s2 * e,
            CriterionKind::Gmse => (s2 * e).log2(),
            CriterionKind::Asinr => -(1.0 / e - 1.0),
            CriterionKind::Gsinr => {
                let sinr = 1.0 / e - 1.0;
                if sinr > 0.0 {
                    -sinr.log2()
                } else {
                    f64::INFINITY
                }
            }
            other => panic!("no scalar oracle for {other}"),
        })
        .sum()
}

/// Chain rule on the stream means: ∂f/∂x_km = f_m'(e_m)·∂e_m/∂x_km.
pub fn oracle_gradient(kind: CriterionKind, x: &[f64], gains: &ChannelSvd, cfg: &SystemConfig) -> Vec<f64> {
    let (n_c, m) = (gains.block_len(), gains.n_streams());
    let snr = cfg.sigma_s2 / cfg.sigma_n2;
    let ln2 = std::f64::consts::LN_2;
    let outer: Vec<f64> = stream_means(x, gains, cfg)
        .into_iter()
        .map(|e| match kind {
            CriterionKind::Amse => cfg.sigma_s2,
            CriterionKind::Gmse => 1.0 / (e * ln2),
            CriterionKind::Asinr => 1.0 / (e * e),
            CriterionKind::Gsinr => 1.0 / (ln2 * e * (1.0 - e)),
            other => panic!("no scalar oracle for {other}"),
        })
        .collect();
    let mut g = vec![0.0; n_c * m];
    for k in 0..n_c {
        for j in 0..m {
            let h = gain(gains, k, j);
            let psi = 1.0 + snr * x[k * m + j] * h;
            g[k * m + j] = -outer[j] * snr * h / (n_c as f64 * psi * psi);
        }
    }
    g
}

/// Euclidean projection onto {x ≥ 0, Σx = total}.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - total) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

/// Projected gradient with Barzilai–Borwein steps and backtracking on the
/// full-budget simplex. All objectives here decrease in every entry, so the
/// budget is active at the optimum.
pub fn projected_gradient(kind: CriterionKind, gains: &ChannelSvd, cfg: &SystemConfig) -> (Vec<f64>, f64) {
    let n = gains.block_len() * gains.n_streams();
    let f = |x: &[f64]| oracle_objective(kind, x, gains, cfg);
    let mut x = vec![cfg.power_budget / n as f64; n];
    let mut fx = f(&x);
    let mut g = oracle_gradient(kind, &x, gains, cfg);
    let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut t = cfg.power_budget / n as f64 / gmax.max(1e-300);
    let mut still = 0;
    for _ in 0..200_000 {
        let (z, fz) = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let z = project_simplex(&trial, cfg.power_budget);
            let fz = f(&z);
            let d: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let quad: f64 = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
            if fz <= fx + lin + quad || t < 1e-300 {
                break (z, fz);
            }
            t *= 0.5;
        };
        let gz = oracle_gradient(kind, &z, gains, cfg);
        let s: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gz.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        x = z;
        fx = fz;
        g = gz;
        if step < 1e-14 * cfg.power_budget {
            still += 1;
            if still > 5 {
                break;
            }
        } else {
            still = 0;
        }
        // BB steps blow up where the objective is linear (flat channels);
        // a huge step would wreck the projection's cancellation.
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        t = if sy > 0.0 { ss / sy } else { t * 2.0 }.min(1e3 * cfg.power_budget / gmax);
    }
    (x, fx)
}

/// Relative difference with a unit floor, for objectives that may be ≈ 0.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Projected gradient for min f(x) + μ·Σx over x ≥ 0 (the inner Lagrangian).
pub fn lagrangian_oracle(
    kind: CriterionKind,
    mu: f64,
    gains: &ChannelSvd,
    cfg: &SystemConfig,
) -> (Vec<f64>, f64) {
    let n = gains.block_len() * gains.n_streams();
    let f = |x: &[f64]| oracle_objective(kind, x, gains, cfg) + mu * x.iter().sum::<f64>();
    let grad = |x: &[f64]| -> Vec<f64> {
        oracle_gradient(kind, x, gains, cfg).into_iter().map(|g| g + mu).collect()
    };
    let mut x = vec![cfg.power_budget / n as f64; n];
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut t = 1.0;
    for _ in 0..200_000 {
        let (z, fz) = loop {
            let z: Vec<f64> = x.iter().zip(&g).map(|(a, b)| (a - t * b).max(0.0)).collect();
            let fz = f(&z);
            let d: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let quad: f64 = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
            if fz <= fx + lin + quad || t < 1e-300 {
                break (z, fz);
            }
            t *= 0.5;
        };
        let gz = grad(&z);
        let s: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gz.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        x = z;
        fx = fz;
        g = gz;
        if step < 1e-15 * cfg.power_budget {
            break;
        }
        t = if sy > 0.0 { ss / sy } else { t * 2.0 };
    }
    (x, fx)
}
