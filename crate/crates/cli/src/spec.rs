//! The experiment description read from TOML.
//!
//! Every key is optional; omitted keys take the values of the paper's
//! simulation setup (N_c = 64, L = K = 16, M = N_t = N_r = 2, σ_t = 2).
//! Command-line flags are applied on top through [`Overrides`], so the
//! precedence is flags > file > defaults.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use txbf::{Criterion, PowerDelayProfile, Scheme, SolverConfig, SystemConfig};

use crate::error::{CliError, FieldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Master seed; every channel and block stream derives from it.
    pub seed: u64,
    pub snrs_db: Vec<f64>,
    /// Criterion names (`amse`, `gmse`, `maxmse`, `asinr`, `gsinr`, `hsinr`,
    /// `aber`) and the `epa` baseline.
    pub criteria: Vec<String>,
    pub n_channels: usize,
    pub blocks_per_channel: usize,
    pub output_dir: PathBuf,
    /// Largest fraction of (channel, SNR, criterion) cells that may be
    /// dropped because the solver failed.
    pub exclusion_budget: f64,
    pub system: SystemSection,
    pub pdp: PdpSection,
    pub solver: SolverConfig,
    pub ber: BerSection,
}

/// Link dimensions. The noise level is not set here: it follows from each
/// SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub block_len: usize,
    pub cir_len: usize,
    pub cp_len: usize,
    pub sigma_s2: f64,
    /// Defaults to M·N_c, one unit of power per (subcarrier, stream).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_budget: Option<f64>,
}

/// Exponential power delay profile; its length is `system.cir_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdpSection {
    pub decay: f64,
}

/// BER-approximation constants of the ABER criterion, BER ≈ α·Q(√(β·SINR)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSection {
    pub alpha: f64,
    pub beta: f64,
}

pub const DEFAULT_CRITERIA: [&str; 8] = ["amse", "gmse", "maxmse", "asinr", "gsinr", "hsinr", "aber", "epa"];

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            snrs_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            criteria: DEFAULT_CRITERIA.iter().map(|s| s.to_string()).collect(),
            n_channels: 200,
            blocks_per_channel: 50,
            output_dir: PathBuf::from("results"),
            exclusion_budget: 0.01,
            system: SystemSection::default(),
            pdp: PdpSection::default(),
            solver: SolverConfig::default(),
            ber: BerSection::default(),
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 2,
            n_streams: 2,
            block_len: 64,
            cir_len: 16,
            cp_len: 16,
            sigma_s2: 1.0,
            power_budget: None,
        }
    }
}

impl Default for PdpSection {
    fn default() -> Self {
        Self { decay: 2.0 }
    }
}

impl Default for BerSection {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// Values given on the command line; `None` leaves the file value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub snrs_db: Option<Vec<f64>>,
    pub criteria: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub n_channels: Option<usize>,
    pub blocks_per_channel: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(v) = &self.snrs_db {
            spec.snrs_db = v.clone();
        }
        if let Some(v) = &self.criteria {
            spec.criteria = v.clone();
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = &self.output_dir {
            spec.output_dir = v.clone();
        }
        if let Some(v) = self.n_channels {
            spec.n_channels = v;
        }
        if let Some(v) = self.blocks_per_channel {
            spec.blocks_per_channel = v;
        }
    }
}

/// Reads, validates and normalizes a spec file.
pub fn parse_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = parse_spec_str_unchecked(&text, &path.display().to_string())?;
    spec.validate()?;
    Ok(spec)
}

/// [`parse_spec`] for in-memory text.
pub fn parse_spec_str(text: &str) -> Result<ExperimentSpec, CliError> {
    let spec = parse_spec_str_unchecked(text, "<spec>")?;
    spec.validate()?;
    Ok(spec)
}

/// Parses and normalizes without validating, so that flags can still be
/// applied before the final check.
pub fn parse_spec_str_unchecked(text: &str, origin: &str) -> Result<ExperimentSpec, CliError> {
    let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((1, 1));
        CliError::Parse {
            origin: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    spec.normalize();
    Ok(spec)
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ExperimentSpec {
    /// Fills derived defaults and canonicalizes criterion names. Idempotent.
    pub fn normalize(&mut self) {
        if self.system.power_budget.is_none() {
            self.system.power_budget = Some((self.system.n_streams * self.system.block_len) as f64);
        }
        for c in &mut self.criteria {
            *c = c.trim().to_ascii_lowercase();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec fields are all TOML-representable")
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let mut fail = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        let s = &self.system;

        for (name, v) in [
            ("n_tx", s.n_tx),
            ("n_rx", s.n_rx),
            ("n_streams", s.n_streams),
            ("block_len", s.block_len),
            ("cir_len", s.cir_len),
            ("cp_len", s.cp_len),
        ] {
            if v == 0 {
                fail(&format!("system.{name}"), "must be at least 1".into());
            }
        }
        if s.n_streams > s.n_tx.min(s.n_rx) {
            fail(
                "system.n_streams",
                format!("M ≤ min(N_t,N_r) violated: M = {}, N_t = {}, N_r = {}", s.n_streams, s.n_tx, s.n_rx),
            );
        }
        if s.cp_len < s.cir_len {
            fail("system.cp_len", format!("cyclic prefix {} shorter than the channel ({} taps)", s.cp_len, s.cir_len));
        }
        if s.block_len < s.cir_len {
            fail("system.block_len", format!("block {} shorter than the channel ({} taps)", s.block_len, s.cir_len));
        }
        if !positive(s.sigma_s2) {
            fail("system.sigma_s2", format!("must be finite and > 0, got {}", s.sigma_s2));
        }
        if let Some(p) = s.power_budget {
            if !positive(p) {
                fail("system.power_budget", format!("must be finite and > 0, got {p}"));
            }
        }
        if !positive(self.pdp.decay) {
            fail("pdp.decay", format!("must be finite and > 0, got {}", self.pdp.decay));
        }
        if let Err(e) = self.solver.validate() {
            fail("solver", e.to_string());
        }
        for (name, v) in [("ber.alpha", self.ber.alpha), ("ber.beta", self.ber.beta)] {
            if !positive(v) {
                fail(name, format!("must be finite and > 0, got {v}"));
            }
        }

        if self.criteria.is_empty() {
            fail("criteria", "at least one criterion is required".into());
        }
        let mut seen = HashSet::new();
        for c in &self.criteria {
            if c.parse::<Scheme>().is_err() {
                fail(
                    "criteria",
                    format!("unknown criterion '{c}', expected one of {}", DEFAULT_CRITERIA.join(", ")),
                );
            } else if !seen.insert(c.trim().to_ascii_lowercase()) {
                fail("criteria", format!("'{c}' listed twice"));
            }
        }

        if self.snrs_db.is_empty() {
            fail("snrs_db", "at least one SNR point is required".into());
        }
        let mut seen = HashSet::new();
        for &x in &self.snrs_db {
            if !x.is_finite() {
                fail("snrs_db", format!("{x} is not finite"));
            } else if !seen.insert(x.to_bits()) {
                fail("snrs_db", format!("{x} dB listed twice"));
            }
        }

        if self.n_channels == 0 {
            fail("n_channels", "must be at least 1".into());
        }
        if self.blocks_per_channel == 0 {
            fail("blocks_per_channel", "must be at least 1".into());
        }
        if i64::try_from(self.seed).is_err() {
            fail("seed", format!("must fit a TOML integer (≤ {}), got {}", i64::MAX, self.seed));
        }
        if !(0.0..=1.0).contains(&self.exclusion_budget) {
            fail("exclusion_budget", format!("must lie in [0, 1], got {}", self.exclusion_budget));
        }
        if self.output_dir.as_os_str().is_empty() {
            fail("output_dir", "must not be empty".into());
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(errors))
        }
    }

    /// Link parameters at unit noise; the sweep sets σ_n² per SNR point.
    pub fn system_config(&self) -> SystemConfig {
        let s = &self.system;
        SystemConfig {
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            n_streams: s.n_streams,
            block_len: s.block_len,
            cir_len: s.cir_len,
            cp_len: s.cp_len,
            sigma_s2: s.sigma_s2,
            sigma_n2: 1.0,
            power_budget: s
                .power_budget
                .unwrap_or((s.n_streams * s.block_len) as f64),
        }
    }

    pub fn power_delay_profile(&self) -> Result<PowerDelayProfile, CliError> {
        Ok(PowerDelayProfile::new(self.pdp.decay, self.system.cir_len)?)
    }

    /// The criteria as simulator schemes, in the order given.
    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        self.criteria
            .iter()
            .map(|c| {
                Ok(match c.parse::<Scheme>()? {
                    Scheme::Optimized(Criterion { kind, .. }) => Scheme::Optimized(Criterion {
                        kind,
                        ber_alpha: self.ber.alpha,
                        ber_beta: self.ber.beta,
                    }),
                    Scheme::Epa => Scheme::Epa,
                })
            })
            .collect()
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}
