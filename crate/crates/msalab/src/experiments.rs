//! Monte Carlo estimators for the probabilistic statements of the theory:
//! resonance/Wegner decay, the initial-scale singularity bound, stability of
//! verdicts under weak interaction, pair singularity over an energy
//! interval, eigenfunction and correlator decay, dynamical-localization
//! moments, and the two-scale probability recursion.
//!
//! Model quantities stay generic over the scalar type; the estimation layer
//! (counts, Wilson intervals, least-squares fits, reports) is `f64`
//! regardless, since those are aggregate statistics. Every probability
//! estimate carries a Wilson 95% interval, and assertions downstream
//! compare intervals, not point estimates. Trials are independent work
//! items keyed by trial index; results reduce by index-ordered collection,
//! so any parallel schedule yields bit-identical reports.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    classify_interactivity, is_separable, sup_distance, BoundingBox, Config, Interactivity,
    MultiParticleCube,
};
use crate::model::{
    assemble, sample_disorder, site_stream_key, DisorderRealization, DisorderSpec,
    InteractionSpec, Interval,
};
use crate::msa::{
    classify_cube, classify_fast, count_singular_subcubes, is_cnr, recursion_rhs, FeThresholds,
    MsaParams, RecursionLedger, VerdictRecord,
};
use crate::spectral::{
    combes_thomas_check, diagonalize_capped, green_row, SpectralData,
};
use crate::scalar::Scalar;
use crate::{DEFAULT_DIM_CAP, DEGENERATE_GAP};

const Z_95: f64 = 1.959963984540054;

/// Wilson 95% score interval for a binomial proportion. With zero trials
/// the interval is the uninformative `[0, 1]`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    // at the boundaries the score interval ends exactly on 0 or 1; keep
    // that exact despite roundoff
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// A binomial estimate with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub successes: usize,
    pub trials: usize,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let point = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let (lo, hi) = wilson_interval(successes, trials);
        Self {
            successes,
            trials,
            point,
            lo,
            hi,
        }
    }
}

/// Weighted least-squares line with a normal-approximation slope interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitLine {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub r_squared: f64,
    pub ssr: f64,
    pub points: usize,
}

/// Fits `y = intercept + slope x` with weights interpreted as inverse
/// variances (so the slope standard error is `sqrt(sum w / det)`).
pub fn weighted_least_squares(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<FitLine> {
    if xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} abscissae, {} ordinates, {} weights",
            xs.len(),
            ys.len(),
            weights.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Parameter("line fit needs at least 2 points".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::Parameter("weights must be positive and finite".into()));
    }
    let sw: f64 = weights.iter().sum();
    let sx: f64 = xs.iter().zip(weights).map(|(x, w)| w * x).sum();
    let sy: f64 = ys.iter().zip(weights).map(|(y, w)| w * y).sum();
    let sxx: f64 = xs.iter().zip(weights).map(|(x, w)| w * x * x).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((x, y), w)| w * x * y)
        .sum();
    let det = sw * sxx - sx * sx;
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::Parameter(
            "degenerate abscissae: slope is not identifiable".into(),
        ));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let slope_se = (sw / det).sqrt();
    let y_bar = sy / sw;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(weights) {
        let resid = y - (intercept + slope * x);
        ssr += w * resid * resid;
        let dev = y - y_bar;
        sst += w * dev * dev;
    }
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).max(0.0)
    } else if ssr <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(FitLine {
        slope,
        intercept,
        slope_se,
        slope_lo: slope - Z_95 * slope_se,
        slope_hi: slope + Z_95 * slope_se,
        r_squared,
        ssr,
        points: xs.len(),
    })
}

/// A reproducible Monte Carlo plan: trial `t` draws its disorder through
/// the per-site counter stream keyed by `(master_seed, t, site)`, so
/// re-running the plan is bit-reproducible and trials are independent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialPlan {
    pub trials: usize,
    pub master_seed: u64,
    pub params: MsaParams<f64>,
    pub disorder: DisorderSpec<f64>,
    pub interaction: InteractionSpec<f64>,
    /// Fixed probe energies; when empty, probes that need one take five
    /// equispaced interior energies of `energy_interval`.
    #[serde(default)]
    pub energies: Vec<f64>,
    #[serde(default)]
    pub energy_interval: Option<Interval<f64>>,
    #[serde(default)]
    pub grid_step: Option<f64>,
}

impl TrialPlan {
    /// Builds a plan, rekeying the disorder stream to `master_seed` so the
    /// plan is the single source of reproducibility.
    pub fn new(
        trials: usize,
        master_seed: u64,
        params: MsaParams<f64>,
        mut disorder: DisorderSpec<f64>,
        interaction: InteractionSpec<f64>,
    ) -> Result<Self> {
        disorder.master_seed = master_seed;
        let plan = Self {
            trials,
            master_seed,
            params,
            disorder,
            interaction,
            energies: Vec::new(),
            energy_interval: None,
            grid_step: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("a plan needs at least one trial".into()));
        }
        self.params.validate()?;
        self.disorder.validate()?;
        if self.disorder.master_seed != self.master_seed {
            return Err(Error::Parameter(
                "disorder stream seed must equal the plan master seed".into(),
            ));
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Parameter("probe energies must be finite".into()));
        }
        if let Some(step) = self.grid_step {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::Parameter(format!("grid step must be positive, got {step}")));
            }
        }
        Ok(())
    }

    /// The fixed-energy list: the explicit energies when given, otherwise
    /// five equispaced interior points of the energy interval.
    pub fn fixed_energies(&self) -> Result<Vec<f64>> {
        if !self.energies.is_empty() {
            return Ok(self.energies.clone());
        }
        match &self.energy_interval {
            Some(interval) => Ok(interval.interior_grid(5)),
            None => Err(Error::Parameter(
                "no probe energies: set an energy list or an energy interval".into(),
            )),
        }
    }

    fn origin(&self) -> Config {
        Config::new(
            self.params.n,
            self.params.d,
            vec![0; self.params.n * self.params.d],
        )
        .expect("origin configuration is always valid")
    }
}

/// One row of the per-probe CSV summary; the column set is fixed:
/// `probe, L, n, h, E_or_grid, estimate, ci_lo, ci_hi, trials, seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub probe: String,
    #[serde(rename = "L")]
    pub l: i64,
    pub n: usize,
    pub h: f64,
    #[serde(rename = "E_or_grid")]
    pub e_or_grid: String,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: usize,
    pub seed: u64,
}

fn aux_uniform(master_seed: u64, trial: u64, salt: u64, lo: f64, hi: f64) -> f64 {
    use rand::{Rng, SeedableRng};
    let key = site_stream_key(master_seed ^ salt, trial, &[]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(key);
    rng.gen_range(lo..hi)
}

fn run_trials<O, F>(trials: usize, per_trial: F) -> Result<Vec<O>>
where
    O: Send,
    F: Fn(u64) -> Result<O> + Sync + Send,
{
    (0..trials as u64)
        .into_par_iter()
        .map(per_trial)
        .collect::<Result<Vec<O>>>()
}

/// `m* = min(1/(2^N 12 N d), mu_tilde / 2^{N+1})`: the initial-scale decay
/// mass implied by a single-particle correlator rate `mu_tilde`.
pub fn m_star(big_n: usize, d: usize, mu_tilde: f64) -> f64 {
    let nd = (big_n * d) as f64;
    let first = 1.0 / (2f64.powi(big_n as i32) * 12.0 * nd);
    first.min(mu_tilde / 2f64.powi(big_n as i32 + 1))
}

// ---------------------------------------------------------------------------
// Resonance / Wegner probes
// ---------------------------------------------------------------------------

/// Monte Carlo vs analytic resonance probability for a single-site cube:
/// the site is resonant at `e` within `width` iff its potential falls in a
/// window whose disorder mass is computable in closed form.
#[derive(Clone, Debug, Serialize)]
pub struct SingleSiteResonanceReport {
    pub e: f64,
    pub width: f64,
    pub estimate: Estimate,
    pub analytic: f64,
}

pub fn single_site_resonance_probe(
    plan: &TrialPlan,
    e: f64,
    width: f64,
) -> Result<SingleSiteResonanceReport> {
    if plan.params.n != 1 {
        return Err(Error::Parameter(
            "the single-site analytic oracle is a one-particle statement".into(),
        ));
    }
    if !(width >= 0.0) || !width.is_finite() {
        return Err(Error::Parameter(format!("width must be >= 0, got {width}")));
    }
    let d = plan.params.d;
    let origin = plan.origin();
    let bbox = MultiParticleCube::equal_radius(origin, 0)?.support_box();
    let diag = 2.0 * d as f64;
    let hits = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let v = r.value(&vec![0; d][..])?;
        Ok(usize::from((diag + v - e).abs() <= width))
    })?;
    let successes: usize = hits.iter().sum();
    let analytic = plan
        .disorder
        .window_mass(e - diag - width, e - diag + width);
    Ok(SingleSiteResonanceReport {
        e,
        width,
        estimate: Estimate::from_counts(successes, plan.trials),
        analytic,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WegnerRow {
    pub l: i64,
    pub estimate: Estimate,
}

/// Per-scale frequency of "not completely non-resonant", with the decay
/// slope of `log P` against `sqrt(L)`.
#[derive(Clone, Debug, Serialize)]
pub struct WegnerReport {
    pub e: f64,
    pub rows: Vec<WegnerRow>,
    /// Slope of the smoothed log-frequency against `sqrt(L)`; `None` with
    /// fewer than two scales.
    pub slope: Option<FitLine>,
    pub records: Vec<VerdictRecord>,
}

impl WegnerReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        self.rows
            .iter()
            .map(|row| SummaryRow {
                probe: "wegner".into(),
                l: row.l,
                n: plan.params.n,
                h: plan.interaction.amplitude,
                e_or_grid: format!("{}", self.e),
                estimate: row.estimate.point,
                ci_lo: row.estimate.lo,
                ci_hi: row.estimate.hi,
                trials: row.estimate.trials,
                seed: plan.master_seed,
            })
            .collect()
    }
}

/// Estimates `P(cube of radius L is not completely non-resonant at e)` for
/// each scale. Scales too small for the sub-cube scan fall back to the
/// cube's own resonance flag.
pub fn wegner_probe(
    plan: &TrialPlan,
    scales: &[i64],
    e: f64,
    stride: i64,
) -> Result<WegnerReport> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &l in scales {
        let cube = MultiParticleCube::equal_radius(plan.origin(), l)?;
        let bbox = cube.support_box();
        let scan_possible = (l as f64).powf(1.0 / plan.params.alpha) >= 2.0;
        let outcomes = run_trials(plan.trials, |t| {
            let r = sample_disorder(&plan.disorder, &bbox, t)?;
            let mut verdict = classify_fast(&cube, &r, &plan.interaction, e, &plan.params)?;
            if scan_possible {
                let scan = is_cnr(&cube, e, &plan.params, &r, &plan.interaction, stride)?;
                verdict.cnr = Some(scan.cnr);
            }
            let hit = match verdict.cnr {
                Some(cnr) => !cnr,
                None => verdict.resonant,
            };
            let record =
                VerdictRecord::new(&cube, e, &plan.params, plan.interaction.amplitude, &verdict);
            Ok((hit, record))
        })?;
        let successes = outcomes.iter().filter(|(hit, _)| *hit).count();
        records.extend(outcomes.into_iter().map(|(_, rec)| rec));
        rows.push(WegnerRow {
            l,
            estimate: Estimate::from_counts(successes, plan.trials),
        });
    }
    let slope = if rows.len() >= 2 {
        // smoothed proportions keep zero-count scales in the fit; weights
        // are the inverse delta-method variances of the log-proportion
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for row in &rows {
            let t = row.estimate.trials as f64;
            let p = (row.estimate.successes as f64 + 0.5) / (t + 1.0);
            xs.push((row.l as f64).sqrt());
            ys.push(p.ln());
            ws.push(t * p / (1.0 - p));
        }
        Some(weighted_least_squares(&xs, &ys, &ws)?)
    } else {
        None
    };
    Ok(WegnerReport {
        e,
        rows,
        slope,
        records,
    })
}

/// Pair version: both cubes of a separable pair fail complete
/// non-resonance at the same energy, under coupled disorder.
#[derive(Clone, Debug, Serialize)]
pub struct WegnerPairReport {
    pub e: f64,
    pub l: i64,
    pub estimate: Estimate,
}

pub fn wegner_pair_probe(
    plan: &TrialPlan,
    l: i64,
    second_center: &Config,
    e: f64,
    stride: i64,
) -> Result<WegnerPairReport> {
    let first = plan.origin();
    if !is_separable(&first, second_center, l, plan.params.big_n)?.separable {
        return Err(Error::Parameter(
            "pair probe needs a separable pair of cubes".into(),
        ));
    }
    let cube_a = MultiParticleCube::equal_radius(first, l)?;
    let cube_b = MultiParticleCube::equal_radius(second_center.clone(), l)?;
    let bbox = BoundingBox::hull(&[cube_a.support_box(), cube_b.support_box()])?;
    let hits = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let a = is_cnr(&cube_a, e, &plan.params, &r, &plan.interaction, stride)?;
        if a.cnr {
            return Ok(0usize);
        }
        let b = is_cnr(&cube_b, e, &plan.params, &r, &plan.interaction, stride)?;
        Ok(usize::from(!b.cnr))
    })?;
    Ok(WegnerPairReport {
        e,
        l,
        estimate: Estimate::from_counts(hits.iter().sum(), plan.trials),
    })
}

// ---------------------------------------------------------------------------
// Initial scale
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct InitialScaleReport {
    pub e: f64,
    pub h: f64,
    pub mu_tilde: f64,
    pub m_star: f64,
    pub estimate: Estimate,
    /// `L0^{-2 p 4^{N-n}}`, the desk-mode target; the comparison is
    /// reported, never asserted.
    pub desk_target: f64,
    pub within_target: bool,
    pub records: Vec<VerdictRecord>,
}

impl InitialScaleReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        vec![SummaryRow {
            probe: "initial".into(),
            l: plan.params.l0,
            n: plan.params.n,
            h: self.h,
            e_or_grid: format!("{}", self.e),
            estimate: self.estimate.point,
            ci_lo: self.estimate.lo,
            ci_hi: self.estimate.hi,
            trials: self.estimate.trials,
            seed: plan.master_seed,
        }]
    }
}

/// Empirical singularity probability at the initial scale with the decay
/// mass `m*` derived from a measured single-particle correlator rate.
pub fn initial_scale_probe(
    plan: &TrialPlan,
    e: f64,
    mu_tilde: f64,
    h: f64,
) -> Result<InitialScaleReport> {
    if !(mu_tilde > 0.0) || !mu_tilde.is_finite() {
        return Err(Error::Parameter(format!(
            "mu_tilde must be positive, got {mu_tilde}"
        )));
    }
    let mut params = plan.params.clone();
    params.m = m_star(params.big_n, params.d, mu_tilde);
    params.validate()?;
    let mut interaction = plan.interaction.clone();
    interaction.amplitude = h;
    let cube = MultiParticleCube::equal_radius(plan.origin(), params.l0)?;
    let bbox = cube.support_box();
    let outcomes = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let verdict = classify_fast(&cube, &r, &interaction, e, &params)?;
        let record = VerdictRecord::new(&cube, e, &params, h, &verdict);
        Ok((!verdict.ns, record))
    })?;
    let successes = outcomes.iter().filter(|(hit, _)| *hit).count();
    let records = outcomes.into_iter().map(|(_, rec)| rec).collect();
    let desk_target = crate::msa::paper_target(&params, 0, params.l0);
    let estimate = Estimate::from_counts(successes, plan.trials);
    Ok(InitialScaleReport {
        e,
        h,
        mu_tilde,
        m_star: params.m,
        within_target: estimate.point <= desk_target,
        estimate,
        desk_target,
        records,
    })
}

// ---------------------------------------------------------------------------
// Weak-interaction stability
// ---------------------------------------------------------------------------

/// One resolvent-difference check:
/// `||G_0 - G_h|| <= |h| ||U|| ||G_0|| ||G_h||`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DriftCheck {
    pub drift: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Compares the resolvents of two Hamiltonians differing by `h U` at
/// energy `e`. Returns `None` when either resolvent does not exist
/// (spectrum within the degenerate gap of `e`).
pub fn resolvent_drift_check(
    h0: &DMatrix<f64>,
    hh: &DMatrix<f64>,
    u_sup: f64,
    h: f64,
    e: f64,
) -> Result<Option<DriftCheck>> {
    let dim = h0.nrows();
    if h0.ncols() != dim || hh.nrows() != dim || hh.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "resolvent drift needs square matrices of equal size, got {}x{} and {}x{}",
            h0.nrows(),
            h0.ncols(),
            hh.nrows(),
            hh.ncols()
        )));
    }
    let eta0 = h0
        .symmetric_eigenvalues()
        .iter()
        .map(|l| (l - e).abs())
        .fold(f64::INFINITY, f64::min);
    let eta_h = hh
        .symmetric_eigenvalues()
        .iter()
        .map(|l| (l - e).abs())
        .fold(f64::INFINITY, f64::min);
    if eta0 <= DEGENERATE_GAP || eta_h <= DEGENERATE_GAP {
        return Ok(None);
    }
    let shift = DMatrix::<f64>::identity(dim, dim) * e;
    let g0 = (h0 - &shift)
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("resolvent inversion failed".into()))?;
    let gh = (hh - &shift)
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("resolvent inversion failed".into()))?;
    let drift = (g0 - gh)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()));
    let bound = h.abs() * u_sup / (eta0 * eta_h);
    Ok(Some(DriftCheck {
        drift,
        bound,
        ok: drift <= bound * (1.0 + 1e-9) + 1e-12,
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub h: f64,
    /// Trials where the second-resolvent inequality failed (expected 0).
    pub violations: usize,
    /// Trials where some resolvent did not exist at this coupling.
    pub resonant_trials: usize,
    pub max_drift: f64,
    /// Largest observed `drift / bound` (at most 1 when the inequality
    /// holds).
    pub max_bound_ratio: f64,
    pub singular: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub e: f64,
    /// Singularity estimate of the uncoupled (`h = 0`) system.
    pub base_singular: Estimate,
    pub rows: Vec<StabilityRow>,
    /// Largest probed coupling whose singularity probability stays within
    /// a factor 2 of the uncoupled one.
    pub h_star: Option<f64>,
    pub records: Vec<VerdictRecord>,
}

impl StabilityReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        self.rows
            .iter()
            .map(|row| SummaryRow {
                probe: "stability".into(),
                l: plan.params.l0,
                n: plan.params.n,
                h: row.h,
                e_or_grid: format!("{}", self.e),
                estimate: row.singular.point,
                ci_lo: row.singular.lo,
                ci_hi: row.singular.hi,
                trials: row.singular.trials,
                seed: plan.master_seed,
            })
            .collect()
    }
}

/// Couples one disorder realization per trial across every coupling in
/// `h_list`, verifying the second-resolvent inequality trial by trial and
/// estimating the largest coupling that keeps the singularity probability
/// within a factor 2 of the uncoupled value.
pub fn weak_interaction_stability(
    plan: &TrialPlan,
    h_list: &[f64],
    e: f64,
) -> Result<StabilityReport> {
    if h_list.iter().any(|h| !h.is_finite()) {
        return Err(Error::Parameter("couplings must be finite".into()));
    }
    let cube = MultiParticleCube::equal_radius(plan.origin(), plan.params.l0)?;
    let bbox = cube.support_box();
    let mut unit = plan.interaction.clone();
    unit.amplitude = 1.0;
    let u_sup = unit.sup_norm_on(&cube);

    struct TrialOut {
        base_singular: bool,
        base_record: VerdictRecord,
        per_h: Vec<(Option<DriftCheck>, bool, VerdictRecord)>,
    }

    let outcomes = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let mut zero = plan.interaction.clone();
        zero.amplitude = 0.0;
        let ham0 = assemble(&cube, &r, &zero)?;
        let verdict0 = classify_cube(&ham0, e, &plan.params)?;
        let base_record = VerdictRecord::new(&cube, e, &plan.params, 0.0, &verdict0);
        let mut per_h = Vec::with_capacity(h_list.len());
        for &h in h_list {
            let mut coupled = plan.interaction.clone();
            coupled.amplitude = h;
            let ham_h = assemble(&cube, &r, &coupled)?;
            let check = resolvent_drift_check(&ham0.matrix, &ham_h.matrix, u_sup, h, e)?;
            let verdict_h = classify_cube(&ham_h, e, &plan.params)?;
            let record = VerdictRecord::new(&cube, e, &plan.params, h, &verdict_h);
            per_h.push((check, !verdict_h.ns, record));
        }
        Ok(TrialOut {
            base_singular: !verdict0.ns,
            base_record,
            per_h,
        })
    })?;

    let base_successes = outcomes.iter().filter(|o| o.base_singular).count();
    let base_singular = Estimate::from_counts(base_successes, plan.trials);
    let mut records: Vec<VerdictRecord> =
        outcomes.iter().map(|o| o.base_record.clone()).collect();
    let mut rows = Vec::with_capacity(h_list.len());
    for (j, &h) in h_list.iter().enumerate() {
        let mut violations = 0;
        let mut resonant_trials = 0;
        let mut max_drift = 0.0f64;
        let mut max_ratio = 0.0f64;
        let mut singular_count = 0;
        for out in &outcomes {
            let (check, singular, record) = &out.per_h[j];
            records.push(record.clone());
            singular_count += usize::from(*singular);
            match check {
                None => resonant_trials += 1,
                Some(c) => {
                    if !c.ok {
                        violations += 1;
                    }
                    max_drift = max_drift.max(c.drift);
                    if c.bound > 0.0 {
                        max_ratio = max_ratio.max(c.drift / c.bound);
                    }
                }
            }
        }
        rows.push(StabilityRow {
            h,
            violations,
            resonant_trials,
            max_drift,
            max_bound_ratio: max_ratio,
            singular: Estimate::from_counts(singular_count, plan.trials),
        });
    }
    let mut h_star = None;
    let mut sorted: Vec<&StabilityRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.h.abs().partial_cmp(&b.h.abs()).expect("finite couplings"));
    for row in sorted {
        let within = if base_singular.point == 0.0 {
            row.singular.point == 0.0
        } else {
            row.singular.point <= 2.0 * base_singular.point
        };
        if within {
            h_star = Some(row.h);
        }
    }
    Ok(StabilityReport {
        e,
        base_singular,
        rows,
        h_star,
        records,
    })
}

// ---------------------------------------------------------------------------
// Pair singularity over an energy interval
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PairSingularityReport {
    pub l: i64,
    pub two_a: f64,
    pub grid_len: usize,
    pub estimate: Estimate,
}

impl PairSingularityReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        vec![SummaryRow {
            probe: "pair".into(),
            l: self.l,
            n: plan.params.n,
            h: plan.interaction.amplitude,
            e_or_grid: format!("grid[{}]", self.grid_len),
            estimate: self.estimate.point,
            ci_lo: self.estimate.lo,
            ci_hi: self.estimate.hi,
            trials: self.estimate.trials,
            seed: plan.master_seed,
        }]
    }
}

fn boundary_sup<T: Scalar>(
    spec: &SpectralData<T>,
    e: T,
    boundary: &[usize],
) -> Result<Option<T>> {
    if spec.gap(e) <= crate::scalar::lit::<T>(DEGENERATE_GAP) {
        return Ok(None); // on the spectrum: treated as exceeding any threshold
    }
    let row = green_row(spec, e, spec.cube().center(), boundary)?;
    Ok(Some(
        row.iter().map(|g| g.abs()).fold(T::zero(), |a, b| a.max(b)),
    ))
}

/// Estimates the probability that some grid energy makes both cubes of a
/// separable pair exceed the variable-energy threshold `2a` simultaneously.
pub fn pair_singularity_probe(
    plan: &TrialPlan,
    l: i64,
    x: &Config,
    y: &Config,
) -> Result<PairSingularityReport> {
    if !is_separable(x, y, l, plan.params.big_n)?.separable {
        return Err(Error::Parameter(
            "pair singularity probe needs a separable pair".into(),
        ));
    }
    let interval = plan
        .energy_interval
        .clone()
        .ok_or_else(|| Error::Parameter("pair probe needs an energy interval".into()))?;
    let thresholds = plan.params.fe_thresholds(l, 0);
    let mut step = thresholds.b / 4.0;
    if let Some(s) = plan.grid_step {
        step = step.min(s);
    }
    let grid = interval.stepped_grid(step);
    let two_a = 2.0 * thresholds.a;
    let cube_x = MultiParticleCube::equal_radius(x.clone(), l)?;
    let cube_y = MultiParticleCube::equal_radius(y.clone(), l)?;
    let bbox = BoundingBox::hull(&[cube_x.support_box(), cube_y.support_box()])?;
    let boundary_x = cube_x.internal_boundary_indices();
    let boundary_y = cube_y.internal_boundary_indices();
    let hits = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let spec_x = diagonalize_capped(
            &assemble(&cube_x, &r, &plan.interaction)?,
            DEFAULT_DIM_CAP,
        )?;
        let spec_y = diagonalize_capped(
            &assemble(&cube_y, &r, &plan.interaction)?,
            DEFAULT_DIM_CAP,
        )?;
        for &e in &grid {
            let fx = boundary_sup(&spec_x, e, &boundary_x)?;
            if matches!(fx, Some(v) if v < two_a) {
                continue;
            }
            let fy = boundary_sup(&spec_y, e, &boundary_y)?;
            if !matches!(fy, Some(v) if v < two_a) {
                return Ok(1usize);
            }
        }
        Ok(0usize)
    })?;
    Ok(PairSingularityReport {
        l,
        two_a,
        grid_len: grid.len(),
        estimate: Estimate::from_counts(hits.iter().sum(), plan.trials),
    })
}

// ---------------------------------------------------------------------------
// Correlator decay
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorRow {
    pub r: i64,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorReport {
    pub radius: i64,
    pub rows: Vec<CorrelatorRow>,
    pub fit: FitLine,
    pub mu_tilde_hat: f64,
    pub mu_ci: (f64, f64),
    /// Whether the decay-rate interval excludes zero from below.
    pub localized: bool,
}

impl CorrelatorReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        vec![SummaryRow {
            probe: "correlator".into(),
            l: self.radius,
            n: plan.params.n,
            h: plan.interaction.amplitude,
            e_or_grid: format!("r<= {}", self.rows.last().map_or(0, |r| r.r)),
            estimate: self.mu_tilde_hat,
            ci_lo: self.mu_ci.0,
            ci_hi: self.mu_ci.1,
            trials: plan.trials,
            seed: plan.master_seed,
        }]
    }
}

/// Estimates the eigenfunction-correlator decay rate on a one-particle
/// chain: per trial the correlator is averaged over all translates at each
/// even separation, and the across-trial means feed a weighted log-linear
/// fit whose negated slope is the decay rate.
pub fn correlator_decay_probe(
    plan: &TrialPlan,
    radius: i64,
    interval: &Interval<f64>,
    max_r: i64,
) -> Result<CorrelatorReport> {
    if plan.params.n != 1 || plan.params.d != 1 {
        return Err(Error::Parameter(
            "the correlator probe runs on a one-particle chain".into(),
        ));
    }
    if max_r < 4 || max_r > 2 * radius {
        return Err(Error::Parameter(format!(
            "separations must satisfy 4 <= max_r <= 2 radius, got max_r = {max_r}, radius = {radius}"
        )));
    }
    let cube = MultiParticleCube::equal_radius(plan.origin(), radius)?;
    let bbox = cube.support_box();
    let rs: Vec<i64> = (1..=max_r / 2).map(|k| 2 * k).collect();
    let side = 2 * radius + 1;
    let per_trial = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let spec = diagonalize_capped(&assemble(&cube, &r, &plan.interaction)?, DEFAULT_DIM_CAP)?;
        let mut means = Vec::with_capacity(rs.len());
        for &sep in &rs {
            let pairs = (side - sep) as usize;
            let mut acc = 0.0;
            for i in 0..pairs {
                acc += crate::spectral::correlator_by_index(&spec, i, i + sep as usize, interval);
            }
            means.push(acc / pairs as f64);
        }
        Ok(means)
    })?;
    let t = plan.trials as f64;
    let mut rows = Vec::with_capacity(rs.len());
    for (j, &sep) in rs.iter().enumerate() {
        let mean = per_trial.iter().map(|m| m[j]).sum::<f64>() / t;
        let var = if plan.trials > 1 {
            per_trial
                .iter()
                .map(|m| (m[j] - mean).powi(2))
                .sum::<f64>()
                / (t - 1.0)
        } else {
            0.0
        };
        rows.push(CorrelatorRow {
            r: sep,
            mean,
            sem: (var / t).sqrt(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for row in &rows {
        if row.mean > 0.0 {
            xs.push(row.r as f64);
            ys.push(row.mean.ln());
            // delta method: Var(ln mean) = (sem/mean)^2, floored to keep
            // exactly-replicated regimes (zero variance) finite
            let rel = (row.sem / row.mean).max(1e-9);
            ws.push(1.0 / (rel * rel));
        }
    }
    let fit = weighted_least_squares(&xs, &ys, &ws)?;
    let mu_tilde_hat = -fit.slope;
    // inflate the slope error by the residual scale so a lack-of-fit (or a
    // deterministic zero-variance batch) widens the interval instead of
    // producing spurious certainty
    let scale = if xs.len() > 2 {
        (fit.ssr / (xs.len() as f64 - 2.0)).sqrt().max(1.0)
    } else {
        1.0
    };
    let se = fit.slope_se * scale;
    let mu_ci = (mu_tilde_hat - Z_95 * se, mu_tilde_hat + Z_95 * se);
    // localized = significantly positive rate AND at least a factor 10 of
    // predicted decay across the measured separations
    let span = xs.last().copied().unwrap_or(0.0) - xs.first().copied().unwrap_or(0.0);
    let localized = mu_ci.0 > 0.0 && mu_tilde_hat * span >= 10f64.ln();
    Ok(CorrelatorReport {
        radius,
        rows,
        fit,
        mu_tilde_hat,
        mu_ci,
        localized,
    })
}

// ---------------------------------------------------------------------------
// Eigenfunction decay profiles
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProfileFit {
    /// Decay rate: `a` in `exp(-a (ln r)^{1+c})` or `b` in `exp(-b r)`.
    pub rate: f64,
    /// Shape exponent `c` (zero for the pure exponential fit).
    pub shape_c: f64,
    pub log_amplitude: f64,
    pub ssr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayProfile {
    pub eigenvalue: f64,
    pub center: Config,
    /// `profile[r] = max { |psi(x)| : sup-distance(x, center) = r }`.
    pub profile: Vec<f64>,
    pub log_log_fit: Option<ProfileFit>,
    pub exponential_fit: Option<ProfileFit>,
    /// Whether the `exp(-a (ln r)^{1+c})` form fit with smaller residual
    /// than the pure exponential (it has one more free parameter; the
    /// comparison is descriptive).
    pub log_log_better: Option<bool>,
    /// Whether the fitted exponential decays by at least a factor 10
    /// across the available range.
    pub localized: bool,
}

fn fit_profile(rs: &[f64], logs: &[f64], shape_c: f64) -> Option<ProfileFit> {
    let xs: Vec<f64> = rs.iter().map(|r| r.ln().powf(1.0 + shape_c)).collect();
    let ws = vec![1.0; xs.len()];
    let fit = weighted_least_squares(&xs, logs, &ws).ok()?;
    Some(ProfileFit {
        rate: -fit.slope,
        shape_c,
        log_amplitude: fit.intercept,
        ssr: fit.ssr,
    })
}

/// Per-eigenpair decay profiles around the localization center, fitted to
/// both the log-power form `exp(-a (ln r)^{1+c})` and a pure exponential.
pub fn eigenfunction_decay_probe(
    realization: &DisorderRealization<f64>,
    interaction: &InteractionSpec<f64>,
    cube: &MultiParticleCube,
    interval: &Interval<f64>,
) -> Result<Vec<DecayProfile>> {
    if cube.n() > 2 {
        return Err(Error::Parameter(
            "decay profiles are computed for at most two particles".into(),
        ));
    }
    let spec = diagonalize_capped(&assemble(cube, realization, interaction)?, DEFAULT_DIM_CAP)?;
    let sites = cube.sites();
    let mut out = Vec::new();
    for (j, &lambda) in spec.eigenvalues().iter().enumerate() {
        if !interval.contains(lambda) {
            continue;
        }
        let column = spec.eigenvectors().column(j);
        let center_idx = column
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite entries"))
            .map(|(i, _)| i)
            .expect("nonempty eigenvector");
        let center = sites[center_idx].clone();
        let max_r = sites
            .iter()
            .map(|x| sup_distance(x, &center).expect("same shape"))
            .max()
            .unwrap_or(0);
        let mut profile = vec![0.0f64; (max_r + 1) as usize];
        for (i, x) in sites.iter().enumerate() {
            let r = sup_distance(x, &center)? as usize;
            profile[r] = profile[r].max(column[i].abs());
        }
        let mut rs = Vec::new();
        let mut logs = Vec::new();
        for (r, &v) in profile.iter().enumerate().skip(1) {
            if v > 0.0 {
                rs.push(r as f64);
                logs.push(v.max(1e-300).ln());
            }
        }
        let (log_log_fit, exponential_fit) = if rs.len() >= 3 {
            // pure exponential: regress log profile on the radius itself
            let ws = vec![1.0; rs.len()];
            let exp_fit = weighted_least_squares(&rs, &logs, &ws).ok().map(|fit| ProfileFit {
                rate: -fit.slope,
                shape_c: 0.0,
                log_amplitude: fit.intercept,
                ssr: fit.ssr,
            });
            // log-power form: regress on (ln r)^{1+c} over a shape grid
            let mut best: Option<ProfileFit> = None;
            let mut c = 0.0;
            while c <= 3.0 + 1e-12 {
                if let Some(fit) = fit_profile(&rs, &logs, c) {
                    if best.as_ref().map_or(true, |b| fit.ssr < b.ssr) {
                        best = Some(fit);
                    }
                }
                c += 0.05;
            }
            (best, exp_fit)
        } else {
            (None, None)
        };
        let log_log_better = match (&log_log_fit, &exponential_fit) {
            (Some(a), Some(b)) => Some(a.ssr < b.ssr),
            _ => None,
        };
        let localized = match (&exponential_fit, rs.last()) {
            (Some(fit), Some(&r_max)) => fit.rate * r_max >= 10f64.ln(),
            _ => false,
        };
        out.push(DecayProfile {
            eigenvalue: lambda,
            center,
            profile,
            log_log_fit,
            exponential_fit,
            log_log_better,
            localized,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dynamical-localization moments
// ---------------------------------------------------------------------------

/// `sum_{x in cube} sum_{y in K} |x|^s correlator(x, y; I)^2`: the exact
/// finite-volume Hilbert–Schmidt supremum over unit Borel functions of the
/// Hamiltonian, localized to the region `K`.
pub fn dynamical_moment<T: Scalar>(
    spec: &SpectralData<T>,
    k_region: &[Config],
    interval: &Interval<T>,
    s: f64,
) -> Result<T> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Parameter(format!("moment order must be >= 0, got {s}")));
    }
    let cube = spec.cube();
    let mut k_indices = Vec::with_capacity(k_region.len());
    for y in k_region {
        let idx = cube.index_of(y).ok_or_else(|| {
            Error::Region(format!(
                "moment region site {:?} lies outside the cube",
                y.coords()
            ))
        })?;
        k_indices.push(idx);
    }
    let in_window: Vec<usize> = spec
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, l)| interval.contains(**l))
        .map(|(j, _)| j)
        .collect();
    let sites = cube.sites();
    let vectors = spec.eigenvectors();
    let mut total = T::zero();
    for (i, x) in sites.iter().enumerate() {
        let weight = crate::scalar::lit::<T>((x.sup_norm() as f64).powf(s));
        if weight == T::zero() {
            continue;
        }
        for &yi in &k_indices {
            let mut upsilon = T::zero();
            for &j in &in_window {
                upsilon += vectors[(i, j)].abs() * vectors[(yi, j)].abs();
            }
            total += weight * upsilon * upsilon;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub l: i64,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub s: f64,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        self.rows
            .iter()
            .map(|row| SummaryRow {
                probe: "dynloc".into(),
                l: row.l,
                n: plan.params.n,
                h: plan.interaction.amplitude,
                e_or_grid: format!("s={}", self.s),
                estimate: row.mean,
                ci_lo: row.mean - Z_95 * row.sem,
                ci_hi: row.mean + Z_95 * row.sem,
                trials: plan.trials,
                seed: plan.master_seed,
            })
            .collect()
    }
}

/// Mean dynamical moment per cube radius, with the origin singleton as the
/// default region: growth that flattens as the cube expands is the
/// finite-volume signature of dynamical localization.
pub fn moment_saturation_probe(
    plan: &TrialPlan,
    radii: &[i64],
    interval: &Interval<f64>,
    s: f64,
) -> Result<MomentReport> {
    let origin = plan.origin();
    let mut rows = Vec::with_capacity(radii.len());
    for &l in radii {
        let cube = MultiParticleCube::equal_radius(origin.clone(), l)?;
        let bbox = cube.support_box();
        let k_region = vec![origin.clone()];
        let values = run_trials(plan.trials, |t| {
            let r = sample_disorder(&plan.disorder, &bbox, t)?;
            let spec =
                diagonalize_capped(&assemble(&cube, &r, &plan.interaction)?, DEFAULT_DIM_CAP)?;
            dynamical_moment(&spec, &k_region, interval, s)
        })?;
        let t = plan.trials as f64;
        let mean = values.iter().sum::<f64>() / t;
        let var = if plan.trials > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
        } else {
            0.0
        };
        rows.push(MomentRow {
            l,
            mean,
            sem: (var / t).sqrt(),
        });
    }
    Ok(MomentReport { s, rows })
}

// ---------------------------------------------------------------------------
// Two-scale recursion
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct RecursionProbeRow {
    pub k: usize,
    pub l: i64,
    pub p: Estimate,
    pub q: Option<Estimate>,
    pub s: Option<Estimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionProbeReport {
    pub e: f64,
    pub rows: Vec<RecursionProbeRow>,
    pub ledger: RecursionLedger<f64>,
    /// Recursion right-hand side evaluated at the conservative interval
    /// corners (upper P_0, upper Q_1, upper S_1).
    pub ci_rhs: f64,
    /// Whether the lower interval end of `P_1` stays below `ci_rhs`.
    pub holds_at_ci: bool,
    pub records: Vec<VerdictRecord>,
}

impl RecursionProbeReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for row in &self.rows {
            let mut push = |tag: &str, est: &Estimate| {
                out.push(SummaryRow {
                    probe: format!("recursion:{tag}"),
                    l: row.l,
                    n: plan.params.n,
                    h: plan.interaction.amplitude,
                    e_or_grid: format!("{}", self.e),
                    estimate: est.point,
                    ci_lo: est.lo,
                    ci_hi: est.hi,
                    trials: est.trials,
                    seed: plan.master_seed,
                });
            };
            push("P", &row.p);
            if let Some(q) = &row.q {
                push("Q", q);
            }
            if let Some(s) = &row.s {
                push("S", s);
            }
        }
        out
    }
}

/// Measures `P_0` at the initial scale and `(P_1, Q_1, S_1)` at the next
/// scale on coupled realizations, then checks the probability recursion at
/// the conservative interval corners. `S_1` follows its definition: the
/// cube contains a singular partially-interactive sub-cube at the previous
/// scale, scanned on a stride.
pub fn recursion_probe(
    plan: &TrialPlan,
    e: f64,
    cnr_stride: i64,
    s_stride: i64,
) -> Result<RecursionProbeReport> {
    let params = &plan.params;
    let l0 = params.scale(0);
    let l1 = params.scale(1);
    let origin = plan.origin();
    let cube0 = MultiParticleCube::equal_radius(origin.clone(), l0)?;
    let cube1 = MultiParticleCube::equal_radius(origin.clone(), l1)?;
    let bbox = cube1.support_box();
    if s_stride < 1 {
        return Err(Error::Parameter(format!("stride must be >= 1, got {s_stride}")));
    }

    struct TrialOut {
        p0: bool,
        p1: bool,
        q1: bool,
        s1: bool,
        records: Vec<VerdictRecord>,
    }

    let axes = params.n * params.d;
    let span = l1 - l0;
    let offsets: Vec<i64> = (-span..=span).step_by(s_stride as usize).collect();
    let outcomes = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let v0 = classify_fast(&cube0, &r, &plan.interaction, e, params)?;
        let mut v1 = classify_fast(&cube1, &r, &plan.interaction, e, params)?;
        let scan = is_cnr(&cube1, e, params, &r, &plan.interaction, cnr_stride)?;
        v1.cnr = Some(scan.cnr);
        // S: some partially interactive sub-cube at the previous scale is
        // singular
        let mut s1 = false;
        let mut idx = vec![0usize; axes];
        'outer: loop {
            let coords: Vec<i64> = (0..axes).map(|a| offsets[idx[a]]).collect();
            let sub_center = Config::new(params.n, params.d, coords)?;
            let sub = MultiParticleCube::equal_radius(sub_center, l0)?;
            if matches!(
                classify_interactivity(&sub, plan.interaction.range)?,
                Interactivity::PartiallyInteractive(_)
            ) {
                let v = classify_fast(&sub, &r, &plan.interaction, e, params)?;
                if !v.ns {
                    s1 = true;
                    break 'outer;
                }
            }
            let mut a = axes;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < offsets.len() {
                    break;
                }
                idx[a] = 0;
            }
            if a == 0 && idx[0] == 0 {
                break;
            }
        }
        let records = vec![
            VerdictRecord::new(&cube0, e, params, plan.interaction.amplitude, &v0),
            VerdictRecord::new(&cube1, e, params, plan.interaction.amplitude, &v1),
        ];
        Ok(TrialOut {
            p0: !v0.ns,
            p1: !v1.ns,
            q1: !scan.cnr,
            s1,
            records,
        })
    })?;

    let count = |f: &dyn Fn(&TrialOut) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let p0 = Estimate::from_counts(count(&|o| o.p0), plan.trials);
    let p1 = Estimate::from_counts(count(&|o| o.p1), plan.trials);
    let q1 = Estimate::from_counts(count(&|o| o.q1), plan.trials);
    let s1 = Estimate::from_counts(count(&|o| o.s1), plan.trials);
    let records: Vec<VerdictRecord> = outcomes
        .into_iter()
        .flat_map(|o| o.records.into_iter())
        .collect();

    let mut ledger = RecursionLedger::new();
    ledger.push_scale(params, p0.point, 0.0, 0.0)?;
    ledger.push_scale(params, p1.point, q1.point, s1.point)?;
    let ci_rhs = recursion_rhs(params.n, params.d, l1, p0.hi, q1.hi, s1.hi);
    let holds_at_ci = p1.lo <= ci_rhs;
    Ok(RecursionProbeReport {
        e,
        rows: vec![
            RecursionProbeRow {
                k: 0,
                l: l0,
                p: p0,
                q: None,
                s: None,
            },
            RecursionProbeRow {
                k: 1,
                l: l1,
                p: p1,
                q: Some(q1),
                s: Some(s1),
            },
        ],
        ledger,
        ci_rhs,
        holds_at_ci,
        records,
    })
}

// ---------------------------------------------------------------------------
// Interval cover probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CoverProbeReport {
    pub l: i64,
    pub trials: usize,
    pub grid_len: usize,
    pub thresholds: FeThresholds<f64>,
    pub condition_ok: bool,
    pub trials_with_bad: usize,
    pub total_bad: usize,
    pub total_uncovered: usize,
}

impl CoverProbeReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        let est = Estimate::from_counts(self.trials_with_bad, self.trials);
        vec![SummaryRow {
            probe: "cover".into(),
            l: self.l,
            n: plan.params.n,
            h: plan.interaction.amplitude,
            e_or_grid: format!("grid[{}]", self.grid_len),
            estimate: est.point,
            ci_lo: est.lo,
            ci_hi: est.hi,
            trials: self.trials,
            seed: plan.master_seed,
        }]
    }
}

/// Runs the fixed-to-variable-energy cover over sampled realizations and
/// aggregates bad and uncovered grid energies.
pub fn cover_probe(plan: &TrialPlan, l: i64, k: usize) -> Result<CoverProbeReport> {
    let interval = plan
        .energy_interval
        .clone()
        .ok_or_else(|| Error::Parameter("cover probe needs an energy interval".into()))?;
    let thresholds = plan.params.fe_thresholds(l, k);
    let mut step = thresholds.b / 4.0;
    if let Some(s) = plan.grid_step {
        step = step.min(s);
    }
    let cube = MultiParticleCube::equal_radius(plan.origin(), l)?;
    let bbox = cube.support_box();
    let reports = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let spec = diagonalize_capped(&assemble(&cube, &r, &plan.interaction)?, DEFAULT_DIM_CAP)?;
        crate::msa::energy_interval_cover(&spec, &plan.params, k, &interval, step)
    })?;
    let grid_len = reports.first().map_or(0, |r| r.grid_len);
    Ok(CoverProbeReport {
        l,
        trials: plan.trials,
        grid_len,
        thresholds,
        condition_ok: reports.first().map_or(false, |r| r.condition_ok),
        trials_with_bad: reports.iter().filter(|r| !r.bad.is_empty()).count(),
        total_bad: reports.iter().map(|r| r.bad.len()).sum(),
        total_uncovered: reports.iter().map(|r| r.uncovered.len()).sum(),
    })
}

// ---------------------------------------------------------------------------
// Off-spectrum decay probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CtProbeReport {
    pub checks: usize,
    pub pairs_checked: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub min_eta: f64,
    pub max_eta: f64,
}

impl CtProbeReport {
    pub fn summary_rows(&self, plan: &TrialPlan) -> Vec<SummaryRow> {
        vec![SummaryRow {
            probe: "ct-check".into(),
            l: -1,
            n: plan.params.n,
            h: plan.interaction.amplitude,
            e_or_grid: format!("checks[{}]", self.checks),
            estimate: self.max_ratio,
            ci_lo: 0.0,
            ci_hi: self.max_ratio,
            trials: plan.trials,
            seed: plan.master_seed,
        }]
    }
}

/// Probes the off-spectrum decay bound on sampled realizations: for each
/// cube the energy sits a seeded uniform distance in `(0.1, 1)` below the
/// bottom (and above the top) of the spectrum, so the gap lies in `(0, 1]`
/// by construction, and every site pair is checked against
/// `2 eta^{-1} e^{-(eta/12 nu)|x-y|}`.
pub fn ct_check_probe(plan: &TrialPlan, cubes: &[MultiParticleCube]) -> Result<CtProbeReport> {
    if cubes.is_empty() {
        return Err(Error::Parameter("no cubes to check".into()));
    }
    struct Out {
        pairs: usize,
        ratios: Vec<f64>,
        etas: Vec<f64>,
    }
    let outcomes = run_trials(plan.trials, |t| {
        let mut pairs = 0usize;
        let mut ratios = Vec::new();
        let mut etas = Vec::new();
        for (ci, cube) in cubes.iter().enumerate() {
            let bbox = cube.support_box();
            let r = sample_disorder(&plan.disorder, &bbox, t)?;
            let spec =
                diagonalize_capped(&assemble(cube, &r, &plan.interaction)?, DEFAULT_DIM_CAP)?;
            let nu = (cube.n() * cube.d()) as f64;
            let lo = spec.eigenvalues()[0];
            let hi = spec.eigenvalues()[spec.dim() - 1];
            let u = aux_uniform(plan.master_seed, t, 0xCC00 + ci as u64, 0.1, 1.0);
            for e in [lo - u, hi + u] {
                let report = combes_thomas_check(&spec, e, nu)?;
                pairs += report.pairs_checked;
                ratios.push(report.max_ratio);
                etas.push(report.eta);
            }
        }
        Ok(Out {
            pairs,
            ratios,
            etas,
        })
    })?;
    let mut checks = 0;
    let mut pairs_checked = 0;
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    let mut min_eta = f64::INFINITY;
    let mut max_eta = 0.0f64;
    for out in &outcomes {
        pairs_checked += out.pairs;
        for &ratio in &out.ratios {
            checks += 1;
            if ratio > 1.0 {
                violations += 1;
            }
            max_ratio = max_ratio.max(ratio);
        }
        for &eta in &out.etas {
            min_eta = min_eta.min(eta);
            max_eta = max_eta.max(eta);
        }
    }
    Ok(CtProbeReport {
        checks,
        pairs_checked,
        violations,
        max_ratio,
        min_eta,
        max_eta,
    })
}

// ---------------------------------------------------------------------------
// Conditional surrogate: CNR + small counts vs non-singularity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SurrogateReport {
    pub trials: usize,
    pub cnr_trials: usize,
    pub small_count_trials: usize,
    /// Trials satisfying both conditions of the induction hypothesis.
    pub conditioned: usize,
    /// Conditioned trials where the cube still failed non-singularity.
    pub ns_failures: usize,
    pub estimate: Option<Estimate>,
}

impl SurrogateReport {
    pub fn summary_rows(&self, plan: &TrialPlan, l: i64, e: f64) -> Vec<SummaryRow> {
        let est = self
            .estimate
            .unwrap_or_else(|| Estimate::from_counts(0, 0));
        vec![SummaryRow {
            probe: "surrogate".into(),
            l,
            n: plan.params.n,
            h: plan.interaction.amplitude,
            e_or_grid: format!("{e}"),
            estimate: est.point,
            ci_lo: est.lo,
            ci_hi: est.hi,
            trials: self.conditioned,
            seed: plan.master_seed,
        }]
    }
}

/// Conditional frequency of "cube is singular" given complete
/// non-resonance and at most `J` singular sub-cubes of each kind — the
/// finite-volume surrogate of the induction step. Report-only: nothing is
/// asserted about the conditional rate.
pub fn cnr_ns_surrogate(
    plan: &TrialPlan,
    l_next: i64,
    sub_k: usize,
    e: f64,
    cnr_stride: i64,
    count_stride: i64,
) -> Result<SurrogateReport> {
    let cube = MultiParticleCube::equal_radius(plan.origin(), l_next)?;
    let bbox = cube.support_box();
    let j = plan.params.j();
    struct Out {
        cnr: bool,
        small: bool,
        singular: Option<bool>,
    }
    let outcomes = run_trials(plan.trials, |t| {
        let r = sample_disorder(&plan.disorder, &bbox, t)?;
        let scan = is_cnr(&cube, e, &plan.params, &r, &plan.interaction, cnr_stride)?;
        let counts = count_singular_subcubes(
            &cube,
            e,
            &plan.params,
            &r,
            &plan.interaction,
            sub_k,
            count_stride,
        )?;
        let small = counts.pi + counts.fi <= j;
        let singular = if scan.cnr && small {
            let v = classify_fast(&cube, &r, &plan.interaction, e, &plan.params)?;
            Some(!v.ns)
        } else {
            None
        };
        Ok(Out {
            cnr: scan.cnr,
            small,
            singular,
        })
    })?;
    let cnr_trials = outcomes.iter().filter(|o| o.cnr).count();
    let small_count_trials = outcomes.iter().filter(|o| o.small).count();
    let conditioned = outcomes.iter().filter(|o| o.singular.is_some()).count();
    let ns_failures = outcomes
        .iter()
        .filter(|o| o.singular == Some(true))
        .count();
    Ok(SurrogateReport {
        trials: plan.trials,
        cnr_trials,
        small_count_trials,
        conditioned,
        ns_failures,
        estimate: (conditioned > 0).then(|| Estimate::from_counts(ns_failures, conditioned)),
    })
}
