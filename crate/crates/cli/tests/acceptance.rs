//! End-to-end acceptance checks. Each test prints one line,
//! `ACCEPTANCE <n> PASS|FAIL <title>: <details>`, before asserting.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::fs;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use txbf::equalizer::{mse_matrix, stream_mse_general};
use txbf::linalg::rel_diff;
use txbf::optimizer::{effective_multiplier, q_function};
use txbf::rng::{substream, DOMAIN_BLOCK, DOMAIN_PROBE};
use txbf::simulator::{draw_block_input, run_block_with, simulate_block, BlockEngine, LinkRealization, Scheme};
use txbf::{
    assemble_beamformer, convexity_probe, dense_mse_matrix, generate_channel, mmse_filter, objective,
    solve_dual, to_frequency_domain, BeamformerSet, CMatrix, Criterion, CriterionKind,
    FrequencyDomainChannel, PowerDelayProfile, SolverConfig, SystemConfig,
};
use txbf_cli::{parse_spec_str, run_experiment, ExperimentSpec, ABR_CSV, BER_CSV};

use common::{oracle_gradient, oracle_objective, projected_gradient, random_link, rel_gap, square_cfg};

const CONCAVE: [CriterionKind; 4] = [
    CriterionKind::Amse,
    CriterionKind::Gmse,
    CriterionKind::Asinr,
    CriterionKind::Gsinr,
];
const CONVEX: [CriterionKind; 3] = [CriterionKind::MaxMse, CriterionKind::Hsinr, CriterionKind::Aber];

fn verdict(id: u32, title: &str, pass: bool, details: String) {
    println!(
        "ACCEPTANCE {id} {} {title}: {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {id} ({title}) failed: {details}");
}

fn sc() -> SolverConfig {
    SolverConfig::default()
}

/// The paper's simulation setup at a given SNR.
fn paper_cfg(snr_db: f64) -> SystemConfig {
    square_cfg(64, 2, 16, snr_db)
}

#[test]
fn acceptance_1_solver_matches_primal_oracle() {
    let start = Instant::now();
    let (mut worst_gap, mut worst_kkt, mut worst_stationarity) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for i in 0..50u64 {
        let n_c = [2, 4, 8][i as usize % 3];
        let m = [1, 2][(i as usize / 3) % 2];
        let cir_len = (n_c / 2).max(1);
        let snr_db = [0.0, 5.0, 10.0, 15.0, 20.0][(i as usize / 6) % 5];
        let cfg = square_cfg(n_c, m, cir_len, snr_db);
        let link = random_link(&cfg, 10_000 + i);
        for kind in CONCAVE {
            let sol = solve_dual(&kind.into(), &link.svd, &cfg, &sc()).unwrap();
            let ours = oracle_objective(kind, sol.allocation.as_slice(), &link.svd, &cfg);
            let (_, best) = projected_gradient(kind, &link.svd, &cfg);
            let gap = rel_gap(ours, best);
            // Stationarity on the active support with an independent gradient.
            let mu = effective_multiplier(sol.state.lambda, &cfg, cfg.block_len);
            let g = oracle_gradient(kind, sol.allocation.as_slice(), &link.svd, &cfg);
            let stationarity = g
                .iter()
                .zip(sol.allocation.as_slice())
                .filter(|(_, &p)| p > 0.0)
                .map(|(gk, _)| ((gk + mu) / mu).abs())
                .fold(0.0, f64::max);
            worst_gap = worst_gap.max(gap);
            worst_kkt = worst_kkt.max(sol.kkt_residual);
            worst_stationarity = worst_stationarity.max(stationarity);
            if gap >= 1e-5 || sol.kkt_residual >= 1e-6 || stationarity >= 1e-6 || !sol.converged {
                failures.push(format!("instance {i} {kind}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "solver vs projected-gradient oracle",
        failures.is_empty() && secs < 120.0,
        format!(
            "200 solves, worst objective gap {worst_gap:.1e}, worst KKT {worst_kkt:.1e}, \
             worst independent stationarity {worst_stationarity:.1e}, {secs:.1} s, failures {failures:?}"
        ),
    );
}

#[test]
fn acceptance_2_schur_convex_allocations_equal_amse() {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..100u64 {
        let cfg = paper_cfg([0.0, 4.0, 8.0, 12.0, 16.0][i as usize % 5]);
        let link = random_link(&cfg, 20_000 + i);
        let amse = solve_dual(&CriterionKind::Amse.into(), &link.svd, &cfg, &sc()).unwrap();
        let tol = 1e-6 * cfg.power_budget / (cfg.block_len * cfg.n_streams) as f64;
        for kind in CONVEX {
            let sol = solve_dual(&kind.into(), &link.svd, &cfg, &sc()).unwrap();
            let d = sol.allocation.max_abs_diff(&amse.allocation);
            worst = worst.max(d / tol);
            if d > tol {
                failures += 1;
            }
        }
    }
    verdict(
        2,
        "maxMSE/HSINR/ABER allocations equal AMSE",
        failures == 0,
        format!("100 channels × 3 criteria, worst entry difference {worst:.1e} of the tolerance, {failures} failures"),
    );
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Scales the precoders so that Σ_k ‖P_k‖² = P_T.
fn to_budget(mut precoders: Vec<CMatrix>, budget: f64) -> Vec<CMatrix> {
    let power: f64 = precoders.iter().map(|p| p.norm_squared()).sum();
    let s = Complex64::new((budget / power).sqrt(), 0.0);
    for p in &mut precoders {
        *p *= s;
    }
    precoders
}

fn general_objective(c: &Criterion, fd: &FrequencyDomainChannel, precoders: &[CMatrix], cfg: &SystemConfig) -> f64 {
    let bf = BeamformerSet::unstructured(precoders.to_vec()).unwrap();
    objective(c, &stream_mse_general(fd, &bf, cfg).unwrap()).unwrap()
}

#[test]
fn acceptance_3_structure_beats_unstructured_beamformers() {
    const RANDOM: usize = 10_000;
    const POLISHED: usize = 10;
    const POLISH_STEPS: usize = 300;
    let mut violations = 0;
    let mut closest = f64::INFINITY;
    let mut evaluated = 0;
    for (case, (seed, snr_db)) in [(1u64, 0.0), (2, 10.0)].into_iter().enumerate() {
        let cfg = square_cfg(2, 2, 2, snr_db);
        let link = random_link(&cfg, 30_000 + seed);
        for kind in CriterionKind::ALL {
            let c = Criterion::new(kind);
            let sol = solve_dual(&c, &link.svd, &cfg, &sc()).unwrap();
            let bf = assemble_beamformer(&link.svd, &sol.allocation, &c).unwrap();
            let structured = general_objective(&c, &link.freq, &bf.precoders, &cfg);
            let tol = 1e-9 * structured.abs().max(1.0);

            let mut rng = substream(seed, DOMAIN_PROBE, 40 + case as u64, kind as u64);
            let mut pool: Vec<(f64, Vec<CMatrix>)> = (0..RANDOM)
                .map(|_| {
                    let p = to_budget((0..2).map(|_| gaussian(&mut rng, 2, 2)).collect(), cfg.power_budget);
                    (general_objective(&c, &link.freq, &p, &cfg), p)
                })
                .collect();
            evaluated += RANDOM;
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            // Local polish: accept-if-better random perturbations on the
            // budget sphere with a shrinking radius.
            for (f, p) in pool.iter_mut().take(POLISHED) {
                let mut radius = 0.3;
                for _ in 0..POLISH_STEPS {
                    let trial: Vec<CMatrix> = p
                        .iter()
                        .map(|pk| pk + gaussian(&mut rng, 2, 2) * Complex64::new(radius, 0.0))
                        .collect();
                    let trial = to_budget(trial, cfg.power_budget);
                    let ft = general_objective(&c, &link.freq, &trial, &cfg);
                    evaluated += 1;
                    if ft < *f {
                        *f = ft;
                        *p = trial;
                    } else {
                        radius *= 0.97;
                    }
                }
            }
            for (f, _) in &pool {
                closest = closest.min((f - structured) / structured.abs().max(1.0));
                if *f < structured - tol {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        3,
        "structured beamformer beats unstructured ones",
        violations == 0,
        format!(
            "2 channels × 7 criteria × {RANDOM} random + {POLISHED}×{POLISH_STEPS} polish steps \
             ({evaluated} evaluations), {violations} violations, closest relative margin {closest:.2e}"
        ),
    );
}

#[test]
fn acceptance_4_schur_convex_criteria_equalize_stream_mses() {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (i, (n, m)) in [(2, 2), (2, 2), (2, 2), (3, 3), (4, 3), (4, 4)].into_iter().enumerate() {
        for snr_db in [0.0, 6.0, 12.0, 18.0] {
            let cfg = SystemConfig {
                n_tx: n,
                n_rx: n,
                n_streams: m,
                power_budget: (m * 64) as f64,
                ..paper_cfg(0.0)
            }
            .with_snr_db(snr_db);
            let link = random_link(&cfg, 40_000 + i as u64);
            for kind in CONVEX {
                let c = Criterion::new(kind);
                let sol = solve_dual(&c, &link.svd, &cfg, &sc()).unwrap();
                let bf = assemble_beamformer(&link.svd, &sol.allocation, &c).unwrap();
                let e = stream_mse_general(&link.freq, &bf, &cfg).unwrap().values;
                let hi = e.iter().cloned().fold(f64::MIN, f64::max);
                let lo = e.iter().cloned().fold(f64::MAX, f64::min);
                worst = worst.max((hi - lo) / hi);
                checked += 1;
            }
        }
    }
    verdict(
        4,
        "equal stream MSEs under Schur-convex criteria",
        worst < 1e-9,
        format!("{checked} designs (M = 2, 3, 4), worst relative spread {worst:.1e}"),
    );
}

#[test]
fn acceptance_5_dense_and_frequency_domain_mse_agree() {
    let mut worst_block = 0.0f64;
    let mut designs = 0;
    for (n_c, l, m, seed) in [(2, 1, 1, 1u64), (2, 2, 2, 2), (4, 2, 2, 3), (4, 4, 1, 4), (8, 3, 2, 5), (8, 8, 2, 6)] {
        let cfg = square_cfg(n_c, m, l, 7.0);
        let link = random_link(&cfg, 50_000 + seed);
        let mut rng = substream(seed, DOMAIN_PROBE, 50, 0);
        let mut beamformers: Vec<BeamformerSet> = CriterionKind::ALL
            .iter()
            .map(|&kind| {
                let c = Criterion::new(kind);
                let sol = solve_dual(&c, &link.svd, &cfg, &sc()).unwrap();
                assemble_beamformer(&link.svd, &sol.allocation, &c).unwrap()
            })
            .collect();
        beamformers.push(
            BeamformerSet::unstructured(to_budget(
                (0..n_c).map(|_| gaussian(&mut rng, m, m)).collect(),
                cfg.power_budget,
            ))
            .unwrap(),
        );
        for bf in &beamformers {
            let eq = mmse_filter(&link.freq, bf, &cfg).unwrap();
            let dense = dense_mse_matrix(&link.time, bf, &eq, &cfg).unwrap();
            let e_hat = mse_matrix(&link.freq, bf, &cfg).unwrap();
            for n in 0..n_c {
                let block = dense.view((n * m, n * m), (m, m)).into_owned();
                worst_block = worst_block.max(rel_diff(&block, &e_hat));
            }
            designs += 1;
        }
    }

    // Waveform-level error variance against the analytic stream MSEs.
    let blocks = 10_000;
    let mut worst_z = 0.0f64;
    for (kind, snr_db, seed) in [(CriterionKind::Gmse, 6.0, 7u64), (CriterionKind::MaxMse, 10.0, 8)] {
        let cfg = paper_cfg(snr_db);
        let link = random_link(&cfg, 50_100 + seed);
        let d = LinkRealization::design(link.time, &Scheme::Optimized(kind.into()), &cfg, &sc()).unwrap();
        let engine = BlockEngine::new(cfg.block_len);
        let m = cfg.n_streams;
        let mut means = vec![Vec::with_capacity(blocks); m];
        for b in 0..blocks {
            let mut rng = substream(seed, DOMAIN_BLOCK, 5, b as u64);
            let input = draw_block_input(&cfg, &mut rng);
            let est = simulate_block(&d.link, &engine, &cfg, &input.symbols, &input.noise);
            for (j, v) in means.iter_mut().enumerate() {
                let sum: f64 = (0..cfg.block_len)
                    .map(|n| (est[n * m + j] - input.symbols[n * m + j]).norm_sqr())
                    .sum();
                v.push(sum / cfg.block_len as f64);
            }
        }
        for (j, v) in means.iter().enumerate() {
            let mean = v.iter().sum::<f64>() / blocks as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (blocks - 1) as f64;
            let se = (var / blocks as f64).sqrt();
            worst_z = worst_z.max((mean - d.mse.values[j]).abs() / se);
        }
    }
    verdict(
        5,
        "block-circulant consistency",
        worst_block < 1e-9 && worst_z < 3.0,
        format!(
            "{designs} beamformers with N_c ≤ 8, worst blockwise difference {worst_block:.1e}; \
             empirical vs analytic MSE over {blocks} blocks, worst |z| {worst_z:.2}"
        ),
    );
}

#[test]
fn acceptance_6_midpoint_convexity_and_curvature() {
    let mut violations = 0;
    let mut worst_excess = f64::MIN;
    let mut worst_curvature = 0.0f64;
    let mut checks = 0;
    for (i, snr_db) in [0.0, 8.0, 16.0].into_iter().enumerate() {
        let cfg = paper_cfg(snr_db);
        let link = random_link(&cfg, 60_000 + i as u64);
        for kind in CONCAVE {
            let report = convexity_probe(&kind.into(), &link.svd, &cfg, 100, i as u64, 1e-9).unwrap();
            violations += report.violations.len();
            worst_excess = worst_excess.max(report.max_relative_excess);
            checks += report.checks;
            if let Some(e) = report.second_derivative_error {
                worst_curvature = worst_curvature.max(e);
            }
        }
    }
    verdict(
        6,
        "convexity of the allocation objectives",
        violations == 0 && worst_curvature < 1e-5,
        format!(
            "{checks} midpoint checks over 3 channels × 4 criteria × 100 pairs, {violations} violations \
             (largest relative excess {worst_excess:.1e}); AMSE second derivative vs central FD {worst_curvature:.1e}"
        ),
    );
}

/// Mean and standard error of the per-channel BER difference a − b.
fn paired(a: &[(usize, f64)], b: &[(usize, f64)]) -> (f64, f64) {
    let b: HashMap<usize, f64> = b.iter().cloned().collect();
    let d: Vec<f64> = a.iter().filter_map(|(c, x)| b.get(c).map(|y| x - y)).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn acceptance_7_paper_orderings() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut spec = parse_spec_str("snrs_db = [4, 8, 12]\nn_channels = 200\nblocks_per_channel = 100\nseed = 2024\n").unwrap();
    spec.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&spec).unwrap().report;

    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for &snr in &spec.snrs_db {
        let amse = report.point(snr, "amse").unwrap();
        let epa = report.point(snr, "epa").unwrap();
        let (d, se) = paired(&epa.channel_ber, &amse.channel_ber);
        lines.push(format!("{snr} dB EPA−AMSE {d:.2e} ({:.1}σ)", d / se));
        if d <= 3.0 * se {
            failures.push(format!("{snr} dB AMSE vs EPA"));
        }
        for kind in CONVEX {
            let p = report.point(snr, kind.name()).unwrap();
            let (d, se) = paired(&amse.channel_ber, &p.channel_ber);
            lines.push(format!("AMSE−{kind} {d:.2e} ({:.1}σ)", d / se));
            if d <= 3.0 * se {
                failures.push(format!("{snr} dB {kind} vs AMSE"));
            }
        }
    }

    // Analytic ABR on the same channel draws, per channel and SNR.
    let schemes: Vec<Scheme> = spec.schemes().unwrap();
    let pdp = PowerDelayProfile::new(2.0, 16).unwrap();
    let (mut gmse_slack, mut rotation_gap) = (f64::INFINITY, 0.0f64);
    for c in 0..spec.n_channels as u64 {
        let ch = generate_channel(&paper_cfg(0.0), &pdp, 70_000 + c).unwrap();
        let fd = to_frequency_domain(&ch, 64).unwrap();
        let svd = txbf::decompose(&fd, 2).unwrap();
        for &snr in &spec.snrs_db {
            let cfg = paper_cfg(snr);
            let abr: HashMap<&str, f64> = schemes
                .iter()
                .map(|s| {
                    let d = LinkRealization::design_with_svd(ch.clone(), &fd, &svd, s, &cfg, &sc()).unwrap();
                    (s.name(), txbf::achievable_bit_rate(&d.mse))
                })
                .collect();
            for (name, v) in &abr {
                if *name != "gmse" {
                    gmse_slack = gmse_slack.min(abr["gmse"] - v);
                }
            }
            for kind in CONVEX {
                rotation_gap = rotation_gap.max((abr[kind.name()] - abr["amse"]).abs());
            }
        }
    }
    if gmse_slack < -1e-8 {
        failures.push(format!("ABR(GMSE) below another criterion by {:.1e}", -gmse_slack));
    }
    if rotation_gap > 1e-8 {
        failures.push(format!("rotation changes the ABR by {rotation_gap:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 900.0 {
        failures.push(format!("runtime {secs:.0} s"));
    }
    verdict(
        7,
        "BER and ABR orderings at desk scale",
        failures.is_empty(),
        format!(
            "200 channels × 100 blocks per point; {}; min ABR(GMSE) − ABR(other) {gmse_slack:.1e}, \
             max |ABR(convex) − ABR(AMSE)| {rotation_gap:.1e}; {secs:.0} s; failures {failures:?}",
            lines.join(", ")
        ),
    );
}

#[test]
fn acceptance_8_flat_qpsk_link_matches_gaussian_tail() {
    let mut worst_z = 0.0f64;
    let mut details = Vec::new();
    let pdp = PowerDelayProfile::new(2.0, 1).unwrap();
    let ch = generate_channel(&square_cfg(64, 1, 1, 0.0), &pdp, 80_000).unwrap();
    for (i, snr_db) in [0.0, 2.0, 4.0, 6.0, 8.0, 10.0].into_iter().enumerate() {
        let cfg = square_cfg(64, 1, 1, snr_db);
        let d = LinkRealization::design(ch.clone(), &Scheme::Epa, &cfg, &sc()).unwrap();
        let e = d.mse.normalized()[0];
        let predicted = q_function((1.0 / e - 1.0).sqrt());
        let engine = BlockEngine::new(cfg.block_len);
        let (mut bits, mut errors) = (0u64, 0u64);
        for b in 0..4000 {
            let mut rng = substream(80, DOMAIN_BLOCK, i as u64, b);
            let (tx, rx) = run_block_with(&d.link, &engine, &cfg, &mut rng);
            bits += tx.len() as u64;
            errors += tx.iter().zip(&rx).filter(|(a, b)| a != b).count() as u64;
        }
        let ber = errors as f64 / bits as f64;
        let se = (predicted * (1.0 - predicted) / bits as f64).sqrt();
        let z = (ber - predicted) / se;
        worst_z = worst_z.max(z.abs());
        details.push(format!("{snr_db} dB {ber:.3e} vs {predicted:.3e} ({z:+.2}σ)"));
    }
    verdict(
        8,
        "flat QPSK link BER = Q(√SINR)",
        worst_z < 3.0,
        details.join(", "),
    );
}

fn determinism_spec(out: &std::path::Path) -> ExperimentSpec {
    let mut spec = parse_spec_str("snrs_db = [2, 9]\nn_channels = 6\nblocks_per_channel = 4\nseed = 99\n").unwrap();
    spec.output_dir = out.to_path_buf();
    spec
}

#[test]
fn acceptance_9_reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [1, 1, 4].into_iter().enumerate() {
        let out = root.path().join(format!("lib{i}"));
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&determinism_spec(&out)))
            .unwrap();
        outputs.push((format!("library, {threads} thread(s)"), out));
    }
    let spec_path = root.path().join("spec.toml");
    fs::write(&spec_path, determinism_spec(root.path()).to_toml()).unwrap();
    for threads in ["1", "3"] {
        let out = root.path().join(format!("bin{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_txbf"))
            .args(["--spec", spec_path.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push((format!("binary, {threads} thread(s)"), out));
    }
    let read = |dir: &std::path::Path| -> Vec<u8> {
        [BER_CSV, ABR_CSV].iter().flat_map(|f| fs::read(dir.join(f)).unwrap()).collect()
    };
    let reference = read(&outputs[0].1);
    let mismatched: Vec<&str> = outputs
        .iter()
        .filter(|(_, dir)| read(dir) != reference)
        .map(|(label, _)| label.as_str())
        .collect();
    verdict(
        9,
        "byte-identical CSVs across reruns and thread counts",
        mismatched.is_empty() && reference.len() > 200,
        format!("{} runs (library and binary, 1–4 threads), mismatches {mismatched:?}", outputs.len()),
    );
}
