//! Run configuration: a human-editable TOML file with a versioned schema.
//!
//! The file is the single source of an experiment's identity: model, scale
//! parameters, probe selection, seed, and worker count. `load` reports parse
//! failures with line/column positions and validation failures with the
//! dotted path of the offending field. A run directory always contains the
//! exact effective configuration, and re-serializing that snapshot is
//! byte-identical to the file written.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use msalab::model::{DisorderFamily, DisorderSpec, InteractionSpec, Interval};
use msalab::experiments::TrialPlan;
use msalab::MsaParams64;

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// The probes the `run` subcommand can execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum ProbeKind {
    CtCheck,
    Wegner,
    Initial,
    Stability,
    Pair,
    Correlator,
    Eigdecay,
    Dynloc,
    Recursion,
    Cover,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ProbeKind::CtCheck => "ct-check",
            ProbeKind::Wegner => "wegner",
            ProbeKind::Initial => "initial",
            ProbeKind::Stability => "stability",
            ProbeKind::Pair => "pair",
            ProbeKind::Correlator => "correlator",
            ProbeKind::Eigdecay => "eigdecay",
            ProbeKind::Dynloc => "dynloc",
            ProbeKind::Recursion => "recursion",
            ProbeKind::Cover => "cover",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Config schema version; this build accepts exactly `1`.
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeKind>,
    pub trials: usize,
    pub master_seed: u64,
    /// Worker threads; 0 means available parallelism. Results never depend
    /// on this value.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub msa: MsaConfig,
    #[serde(default)]
    pub probe_options: ProbeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Maximal particle number `N` of the analysis.
    pub big_n: usize,
    /// Per-particle lattice dimension.
    pub d: usize,
    /// Particle number of the cubes under study.
    pub n: usize,
    pub disorder: DisorderConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    /// `uniform`, `truncated-gaussian`, or `piecewise-density`.
    pub family: String,
    /// Support half-width `M`; the potential lives on `[-M, M]`.
    pub support_bound: f64,
    /// Width ratio for `truncated-gaussian`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_ratio: Option<f64>,
    /// Bin weights for `piecewise-density`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Weighted-density exponent, recorded for validation.
    #[serde(default = "default_density_weight_exponent")]
    pub density_weight_exponent: f64,
}

fn default_density_weight_exponent() -> f64 {
    0.5
}

impl DisorderConfig {
    pub fn to_spec(&self, master_seed: u64) -> Result<DisorderSpec<f64>> {
        let family = match self.family.as_str() {
            "uniform" => DisorderFamily::Uniform,
            "truncated-gaussian" => DisorderFamily::TruncatedGaussian {
                sigma_ratio: self.sigma_ratio.ok_or_else(|| {
                    anyhow!("model.disorder.sigma_ratio: required for family `truncated-gaussian`")
                })?,
            },
            "piecewise-density" => DisorderFamily::PiecewiseDensity {
                weights: self.weights.clone().ok_or_else(|| {
                    anyhow!("model.disorder.weights: required for family `piecewise-density`")
                })?,
            },
            other => bail!(
                "model.disorder.family: unknown family `{other}` \
                 (expected uniform | truncated-gaussian | piecewise-density)"
            ),
        };
        let spec = DisorderSpec {
            family,
            support_bound: self.support_bound,
            density_weight_exponent: self.density_weight_exponent,
            master_seed,
        };
        spec.validate().map_err(|e| anyhow!("model.disorder: {e}"))?;
        Ok(spec)
    }
}

/// Pair interaction; the default is no interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    pub amplitude: f64,
    pub range: i64,
    pub phi: Vec<f64>,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            range: 0,
            phi: vec![0.0],
        }
    }
}

impl InteractionConfig {
    pub fn to_spec(&self) -> Result<InteractionSpec<f64>> {
        InteractionSpec::new(self.amplitude, self.range, self.phi.clone())
            .map_err(|e| anyhow!("model.interaction: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsaConfig {
    pub m: f64,
    pub p: f64,
    pub theta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub l0: i64,
    #[serde(default = "default_resonance_exponent")]
    pub resonance_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_threshold: Option<usize>,
}

fn default_alpha() -> f64 {
    1.5
}

fn default_resonance_exponent() -> f64 {
    0.5
}

/// One cube for the off-spectrum decay probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtCubeConfig {
    pub n: usize,
    pub center: Vec<i64>,
    pub radius: i64,
}

/// Probe-specific knobs; everything is optional with documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    /// Fixed probe energies; probes that take a single energy run once per
    /// entry.
    pub energies: Vec<f64>,
    /// `[lo, hi]`; probes without fixed energies take 5 equispaced interior
    /// points, interval probes scan it on a grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Cube radii: scales for `wegner`, region radii for `dynloc`.
    pub scales: Vec<i64>,
    /// Couplings for `stability` (default `[0.01, 0.1, 1.0]`).
    pub h_list: Vec<f64>,
    /// Measured single-particle decay rate feeding `m*` for `initial`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<f64>,
    /// Coupling for `initial` (default: the model interaction amplitude).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Sub-cube scan stride for resonance scans (default 1; `recursion`
    /// defaults to 4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<i64>,
    /// Stride of the singular-sub-cube scan in `recursion` (default 4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_stride: Option<i64>,
    /// Largest site separation for `correlator` (default `min(20, 2 radius)`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_r: Option<i64>,
    /// Cube radius for `correlator` (default 50) and `eigdecay` (default 20).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<i64>,
    /// Moment order `s` for `dynloc` (default 2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_order: Option<f64>,
    /// Threshold step index `k` for `cover` (default 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_step: Option<usize>,
    /// Cube radius for `cover` (default 10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_l: Option<i64>,
    /// Second cube center for `pair` (flattened coordinates).
    pub pair_center: Vec<i64>,
    /// Cube radius for `pair` (default: the initial scale).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_l: Option<i64>,
    /// Cubes for `ct-check`; default: a one-particle cube of radius 4 and,
    /// when `N >= 2`, a two-particle cube of radius 2.
    pub ct_cubes: Vec<CtCubeConfig>,
}

impl RunConfig {
    /// Parses a config file; parse errors carry line/column, validation
    /// errors carry the dotted field path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural validation with dotted field paths in every message.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            bail!(
                "schema: version {} not supported (this build reads {SCHEMA_VERSION})",
                self.schema
            );
        }
        if self.trials == 0 {
            bail!("trials: must be at least 1");
        }
        self.msa_params().map(|_| ())?;
        self.model.disorder.to_spec(self.master_seed).map(|_| ())?;
        self.model.interaction.to_spec().map(|_| ())?;
        if let Some([lo, hi]) = self.probe_options.energy_interval {
            Interval::new(lo, hi)
                .map_err(|e| anyhow!("probe_options.energy_interval: {e}"))?;
        }
        if let Some(step) = self.probe_options.grid_step {
            if !(step > 0.0) || !step.is_finite() {
                bail!("probe_options.grid_step: must be positive, got {step}");
            }
        }
        if self.probe_options.scales.iter().any(|&l| l < 1) {
            bail!("probe_options.scales: every scale must be >= 1");
        }
        Ok(())
    }

    /// The scale-analysis parameters implied by `[model]` + `[msa]`.
    pub fn msa_params(&self) -> Result<MsaParams64> {
        let params = MsaParams64 {
            big_n: self.model.big_n,
            d: self.model.d,
            n: self.model.n,
            m: self.msa.m,
            p: self.msa.p,
            theta: self.msa.theta,
            alpha: self.msa.alpha,
            l0: self.msa.l0,
            resonance_exponent: self.msa.resonance_exponent,
            j_threshold: self.msa.j_threshold,
        };
        params.validate().map_err(|e| anyhow!("msa: {e}"))?;
        Ok(params)
    }

    /// The reproducible Monte Carlo plan this config describes.
    pub fn to_plan(&self) -> Result<TrialPlan> {
        let params = self.msa_params()?;
        let disorder = self.model.disorder.to_spec(self.master_seed)?;
        let interaction = self.model.interaction.to_spec()?;
        let mut plan = TrialPlan::new(
            self.trials,
            self.master_seed,
            params,
            disorder,
            interaction,
        )
        .map_err(|e| anyhow!("config does not form a valid plan: {e}"))?;
        plan.energies = self.probe_options.energies.clone();
        plan.energy_interval = match self.probe_options.energy_interval {
            Some([lo, hi]) => {
                Some(Interval::new(lo, hi).map_err(|e| anyhow!("probe_options.energy_interval: {e}"))?)
            }
            None => None,
        };
        plan.grid_step = self.probe_options.grid_step;
        plan.validate().map_err(|e| anyhow!("probe_options: {e}"))?;
        Ok(plan)
    }

    /// Serializes exactly as the snapshot writer does, so the snapshot
    /// round-trips byte-identically.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("config serialization failed")
    }
}

/// Mode report of the `validate` subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    /// Whether the parameters meet the constraints the decay statements
    /// are proved under.
    pub strict: bool,
    /// Violated strict-mode constraints (empty in strict mode).
    pub violations: Vec<String>,
}

pub fn validation_report(config: &RunConfig) -> Result<ValidationReport> {
    let params = config.msa_params()?;
    let violations = params.strict_violations();
    Ok(ValidationReport {
        strict: violations.is_empty(),
        violations,
    })
}
