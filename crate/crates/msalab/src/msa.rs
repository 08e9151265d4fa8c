//! Scale machinery and cube verdicts for the multi-scale induction.
//!
//! A scale sequence `L_{k+1} = floor(L_k^alpha)` carries per-scale decay
//! exponents `gamma(m, L, n) = m (1 + L^{-1/8})^{N-n+1}` and probability
//! exponents `p_k = p (1+theta)^k`. Cubes receive verdicts at an energy:
//! non-singular when the center-to-boundary Green function decays below
//! `e^{-gamma L}`, resonant when the spectrum comes within `e^{-sqrt(L)}`
//! of the energy, completely non-resonant when no sub-cube of radius at
//! least `L^{1/alpha}` is resonant. On top of the verdicts sit the
//! singular-sub-cube packing counts, the probability recursion
//! `P_{k+1} <= (3^{2nd}/2) L_{k+1}^{2nd} P_k^2 + Q_{k+1} + S_{k+1}`, and the
//! fixed-to-variable-energy interval cover with thresholds `a, b, c`.
//!
//! Two verdict backends agree on flags: the dense path diagonalizes the
//! cube (exact gap), the banded path uses factorization inertia counts for
//! the resonance flags and one band-LU solve for the boundary Green row,
//! with an inverse-iteration gap estimate kept as a diagnostic.

use serde::{Deserialize, Serialize};

use crate::band::{estimate_gap_with, SymBandMatrix};
use crate::error::{Error, Result};
use crate::lattice::{sup_distance, Config, MultiParticleCube};
use crate::model::{
    assemble_banded, assemble_capped, DisorderRealization, InteractionSpec, Interval,
};
use crate::scalar::{lit, Scalar};
use crate::spectral::{diagonalize_capped, green_row, SpectralData};
use crate::{DEFAULT_DIM_CAP, DEGENERATE_GAP};

fn default_alpha<T: Scalar>() -> T {
    lit(1.5)
}

fn default_resonance_exponent<T: Scalar>() -> T {
    lit(0.5)
}

/// Scale-induction parameters.
///
/// `j_threshold` of `None` means the derived default `kappa(n) + 5` with
/// `kappa(n) = n^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct MsaParams<T> {
    /// Maximal particle number `N` of the analysis.
    pub big_n: usize,
    /// Per-particle lattice dimension.
    pub d: usize,
    /// Particle number of the cubes under study, `1 <= n <= N`.
    pub n: usize,
    /// Decay mass `m > 0`.
    pub m: T,
    /// Probability exponent `p > 0`.
    pub p: T,
    /// Exponent growth ratio, in `(0, 1/3)`.
    pub theta: T,
    /// Scale growth exponent, `> 1`.
    #[serde(default = "default_alpha")]
    pub alpha: T,
    /// Initial scale `L_0 >= 1`.
    pub l0: i64,
    /// Resonance width exponent: a cube is resonant when the gap is at most
    /// `e^{-L^{resonance_exponent}}`.
    #[serde(default = "default_resonance_exponent")]
    pub resonance_exponent: T,
    #[serde(default)]
    pub j_threshold: Option<usize>,
}

impl<T: Scalar> MsaParams<T> {
    pub fn new(
        big_n: usize,
        d: usize,
        n: usize,
        m: T,
        p: T,
        theta: T,
        l0: i64,
    ) -> Result<Self> {
        let params = Self {
            big_n,
            d,
            n,
            m,
            p,
            theta,
            alpha: default_alpha(),
            l0,
            resonance_exponent: default_resonance_exponent(),
            j_threshold: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.big_n == 0 || self.n == 0 || self.n > self.big_n {
            return Err(Error::Parameter(format!(
                "particle numbers must satisfy 1 <= n <= N, got n = {}, N = {}",
                self.n, self.big_n
            )));
        }
        if self.d == 0 {
            return Err(Error::Parameter("lattice dimension d must be >= 1".into()));
        }
        if !(self.m > T::zero()) || !self.m.as_f64().is_finite() {
            return Err(Error::Parameter(format!(
                "mass m must be positive and finite, got {:?}",
                self.m
            )));
        }
        if !(self.p > T::zero()) || !self.p.as_f64().is_finite() {
            return Err(Error::Parameter(format!(
                "exponent p must be positive, got {:?}",
                self.p
            )));
        }
        if !(self.theta > T::zero() && self.theta < lit::<T>(1.0 / 3.0)) {
            return Err(Error::Parameter(format!(
                "theta must lie in (0, 1/3), got {:?}",
                self.theta
            )));
        }
        if !(self.alpha > T::one()) {
            return Err(Error::Parameter(format!(
                "scale exponent alpha must exceed 1, got {:?}",
                self.alpha
            )));
        }
        if self.l0 < 1 {
            return Err(Error::Parameter(format!(
                "initial scale L0 must be >= 1, got {}",
                self.l0
            )));
        }
        if !(self.resonance_exponent > T::zero() && self.resonance_exponent <= T::one()) {
            return Err(Error::Parameter(format!(
                "resonance exponent must lie in (0, 1], got {:?}",
                self.resonance_exponent
            )));
        }
        if self.j_threshold == Some(0) {
            return Err(Error::Parameter("J threshold must be >= 1".into()));
        }
        Ok(())
    }

    /// `kappa(n) = n^n`, the size of the separability collection.
    pub fn kappa(&self) -> usize {
        self.n.pow(self.n as u32)
    }

    /// Packing threshold `J`; defaults to `kappa(n) + 5`.
    pub fn j(&self) -> usize {
        self.j_threshold.unwrap_or(self.kappa() + 5)
    }

    /// Strict-mode constraint violations; empty means the parameters meet
    /// the regime the decay statements are proved in. Desk-mode parameters
    /// trade these bounds for observable Monte Carlo statistics.
    pub fn strict_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nd = (self.big_n * self.d) as f64;
        let p_floor = 6.0 * nd / (1.0 - 3.0 * self.theta.as_f64());
        if self.p.as_f64() <= p_floor {
            out.push(format!(
                "p = {} must exceed 6Nd/(1-3theta) = {:.6}",
                self.p.as_f64(),
                p_floor
            ));
        }
        let m_cap = 1.0 / (2f64.powi(self.big_n as i32 + 1) * 12.0 * nd);
        if self.m.as_f64() > m_cap {
            out.push(format!(
                "m = {} must not exceed 1/(2^(N+1) 12Nd) = {:.6}",
                self.m.as_f64(),
                m_cap
            ));
        }
        out
    }

    pub fn is_paper_strict(&self) -> bool {
        self.strict_violations().is_empty()
    }

    /// `L_k`: the initial scale pushed through `k` steps of
    /// `L -> floor(L^alpha)`.
    pub fn scale(&self, k: usize) -> i64 {
        let mut l = self.l0;
        for _ in 0..k {
            l = next_scale(l, self.alpha.as_f64());
        }
        l
    }

    /// `p_k = p (1 + theta)^k`.
    pub fn p_k(&self, k: usize) -> T {
        self.p * (T::one() + self.theta).powi(k as i32)
    }

    /// `gamma(m, L, n)` at this parameter set's `m` and `N`.
    pub fn gamma(&self, l: i64, n: usize) -> T {
        gamma(self.m, l, n, self.big_n)
    }

    /// `e^{-gamma(m, L, n) L}`; the product `gamma L` is taken as 0 at
    /// `L = 0`, so a single-site cube gets threshold 1.
    pub fn gamma_threshold(&self, l: i64, n: usize) -> T {
        let exponent = if l == 0 {
            T::zero()
        } else {
            self.gamma(l, n) * lit::<T>(l as f64)
        };
        (-exponent).exp()
    }

    /// Resonance width `e^{-L^{1/2}}` (general exponent configurable).
    pub fn resonance_width(&self, l: i64) -> T {
        (-lit::<T>(l as f64).powf(self.resonance_exponent)).exp()
    }

    /// Variable-energy thresholds at scale `L` and step `k`:
    /// `a = L^{-p_k/5}`, `b = L^{-4 p_k/5}`, `c = 3^{Nd/2} L^{-p_k/5}`.
    pub fn fe_thresholds(&self, l: i64, k: usize) -> FeThresholds<T> {
        let lf = lit::<T>(l as f64);
        let pk = self.p_k(k);
        let five = lit::<T>(5.0);
        let a = lf.powf(-pk / five);
        let b = lf.powf(-(lit::<T>(4.0) * pk) / five);
        let half_nd = lit::<T>((self.big_n * self.d) as f64 / 2.0);
        let c = lit::<T>(3.0).powf(half_nd) * a;
        FeThresholds { a, b, c }
    }
}

/// `floor(L^alpha)`, guarded against floating-point dust on exact powers.
pub fn next_scale(l: i64, alpha: f64) -> i64 {
    ((l as f64).powf(alpha) + 1e-9).floor() as i64
}

/// Decay exponent `gamma(m, L, n) = m (1 + L^{-1/8})^{N-n+1}`.
///
/// Strictly above `m`, decreasing in both `L` and `n`.
pub fn gamma<T: Scalar>(m: T, l: i64, n: usize, big_n: usize) -> T {
    debug_assert!(l >= 1 && n >= 1 && n <= big_n);
    let base = T::one() + lit::<T>(l as f64).powf(lit(-0.125));
    m * base.powi((big_n - n + 1) as i32)
}

/// Fixed-to-variable-energy thresholds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FeThresholds<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

/// Verdict of one cube at one energy.
///
/// `ns` means the energy is off the spectrum and every center-to-boundary
/// Green entry is at most `gamma_threshold`. `resonant` means the gap is at
/// most the resonance width. A gap at or below 1e-12 is degenerate: the
/// cube counts as singular and resonant by convention and the Green row is
/// not evaluated. `cnr` is filled only by the sub-cube scan.
#[derive(Clone, Debug, Serialize)]
pub struct CubeVerdict<T> {
    pub ns: bool,
    pub resonant: bool,
    pub cnr: Option<bool>,
    pub max_boundary_green: Option<T>,
    pub gamma_threshold: T,
    pub spectral_gap: T,
}

/// One verdict as a line of the trial log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub cube: MultiParticleCube,
    #[serde(rename = "E")]
    pub e: f64,
    pub m: f64,
    pub h: f64,
    pub ns: bool,
    pub resonant: bool,
    pub cnr: Option<bool>,
    pub max_boundary_green: Option<f64>,
    pub eta: f64,
}

impl VerdictRecord {
    pub fn new<T: Scalar>(
        cube: &MultiParticleCube,
        e: T,
        params: &MsaParams<T>,
        h: T,
        verdict: &CubeVerdict<T>,
    ) -> Self {
        Self {
            cube: cube.clone(),
            e: e.as_f64(),
            m: params.m.as_f64(),
            h: h.as_f64(),
            ns: verdict.ns,
            resonant: verdict.resonant,
            cnr: verdict.cnr,
            max_boundary_green: verdict.max_boundary_green.map(|g| g.as_f64()),
            eta: verdict.spectral_gap.as_f64(),
        }
    }
}

fn cube_scale(cube: &MultiParticleCube) -> Result<i64> {
    cube.uniform_radius().ok_or_else(|| {
        Error::Classification(format!(
            "verdicts need an equal-radius cube, got radii {:?}",
            cube.radii()
        ))
    })
}

fn check_particle_count<T: Scalar>(cube: &MultiParticleCube, params: &MsaParams<T>) -> Result<()> {
    if cube.n() > params.big_n {
        return Err(Error::Classification(format!(
            "cube has {} particles but the analysis is capped at N = {}",
            cube.n(),
            params.big_n
        )));
    }
    Ok(())
}

/// Verdict from exact eigendata.
pub fn classify_dense<T: Scalar>(
    spec: &SpectralData<T>,
    e: T,
    params: &MsaParams<T>,
) -> Result<CubeVerdict<T>> {
    let cube = spec.cube();
    check_particle_count(cube, params)?;
    let l = cube_scale(cube)?;
    let n = cube.n();
    let threshold = params.gamma_threshold(l, n);
    let eta = spec.gap(e);
    let width = params.resonance_width(l);
    if eta <= lit::<T>(DEGENERATE_GAP) {
        return Ok(CubeVerdict {
            ns: false,
            resonant: true,
            cnr: None,
            max_boundary_green: None,
            gamma_threshold: threshold,
            spectral_gap: eta,
        });
    }
    let boundary = cube.internal_boundary_indices();
    let row = green_row(spec, e, cube.center(), &boundary)?;
    let max_green = row
        .iter()
        .map(|g| g.abs())
        .fold(T::zero(), |a, b| a.max(b));
    Ok(CubeVerdict {
        ns: max_green <= threshold,
        resonant: eta <= width,
        cnr: None,
        max_boundary_green: Some(max_green),
        gamma_threshold: threshold,
        spectral_gap: eta,
    })
}

/// Verdict via a dense eigensolve of the assembled cube: the reference path.
pub fn classify_cube<T: Scalar>(
    ham: &crate::model::AssembledHamiltonian<T>,
    e: T,
    params: &MsaParams<T>,
) -> Result<CubeVerdict<T>> {
    let spec = diagonalize_capped(ham, DEFAULT_DIM_CAP)?;
    classify_dense(&spec, e, params)
}

/// Verdict from band factorizations, no eigensolve.
///
/// Resonance and degeneracy flags come from factorization inertia counts
/// (exact up to the spectral-window boundary), the Green row from one band
/// LU solve, and `spectral_gap` from a few inverse-iteration steps on that
/// same factorization — a diagnostic that can land on a nearby eigenvalue
/// instead of the nearest one; the flags never depend on it. Degenerate
/// cubes report gap 0.
pub fn classify_banded<T: Scalar>(
    band: &SymBandMatrix<T>,
    cube: &MultiParticleCube,
    e: T,
    params: &MsaParams<T>,
) -> Result<CubeVerdict<T>> {
    check_particle_count(cube, params)?;
    let l = cube_scale(cube)?;
    let n = cube.n();
    let threshold = params.gamma_threshold(l, n);
    let width = params.resonance_width(l);
    let resonant = band.count_in_window(e - width, e + width)? > 0;
    if resonant {
        let tol = lit::<T>(DEGENERATE_GAP);
        if band.count_in_window(e - tol, e + tol)? > 0 {
            return Ok(CubeVerdict {
                ns: false,
                resonant: true,
                cnr: None,
                max_boundary_green: None,
                gamma_threshold: threshold,
                spectral_gap: T::zero(),
            });
        }
    }
    let lu = band.shifted_lu(e);
    if lu.near_singular {
        return Err(Error::Decomposition(
            "near-singular shifted factorization in banded verdict".into(),
        ));
    }
    let dim = band.dim();
    let mut rhs = vec![T::zero(); dim];
    rhs[cube.center_index()] = T::one();
    let col = lu.solve(&rhs);
    let max_green = cube
        .internal_boundary_indices()
        .into_iter()
        .map(|v| col[v].abs())
        .fold(T::zero(), |a, b| a.max(b));
    let gap = estimate_gap_with(band, &lu, e, 0xC0FF_EE11);
    Ok(CubeVerdict {
        ns: max_green <= threshold,
        resonant,
        cnr: None,
        max_boundary_green: Some(max_green),
        gamma_threshold: threshold,
        spectral_gap: gap.eta,
    })
}

/// Banded verdict with automatic dense fallback when the factorization
/// path degrades (near-singular shift, counting breakdown).
pub fn classify_fast<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
    e: T,
    params: &MsaParams<T>,
) -> Result<CubeVerdict<T>> {
    let banded = assemble_banded(cube, realization, interaction)
        .and_then(|band| classify_banded(&band, cube, e, params));
    match banded {
        Err(Error::Decomposition(_)) => {
            let ham = assemble_capped(cube, realization, interaction, DEFAULT_DIM_CAP)?;
            classify_cube(&ham, e, params)
        }
        other => other,
    }
}

/// Resonance flag alone, by inertia counts with a dense eigenvalue
/// fallback.
fn resonance_flag<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
    e: T,
    width: T,
) -> Result<bool> {
    let band = assemble_banded(cube, realization, interaction)?;
    match band.count_in_window(e - width, e + width) {
        Ok(count) => Ok(count > 0),
        Err(_) => {
            let ham = assemble_capped(cube, realization, interaction, DEFAULT_DIM_CAP)?;
            let eigenvalues = ham.matrix.symmetric_eigenvalues();
            Ok(eigenvalues.iter().any(|l| (*l - e).abs() <= width))
        }
    }
}

/// Outcome of the complete-non-resonance scan.
#[derive(Clone, Debug, Serialize)]
pub struct CnrVerdict {
    pub cnr: bool,
    /// First resonant sub-cube in scan order (radius ascending, centers
    /// row-major), when one exists.
    pub offender: Option<MultiParticleCube>,
    pub scanned: usize,
}

/// Scans all equal-radius sub-cubes of radius `l` in
/// `[ceil(L^{1/alpha}), L]` whose boxes stay inside the cube; completely
/// non-resonant means none is resonant at its own width `e^{-sqrt(l)}`.
/// `stride > 1` thins the center grid (the low corner of each offset range
/// is always kept, and the full cube itself is always scanned).
pub fn is_cnr<T: Scalar>(
    cube: &MultiParticleCube,
    e: T,
    params: &MsaParams<T>,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
    stride: i64,
) -> Result<CnrVerdict> {
    let l = cube_scale(cube)?;
    if stride < 1 {
        return Err(Error::Parameter(format!("stride must be >= 1, got {stride}")));
    }
    let min_radius_f = (l as f64).powf(1.0 / params.alpha.as_f64());
    if min_radius_f < 2.0 {
        return Err(Error::Parameter(format!(
            "sub-cube scan needs L^(1/alpha) >= 2, got {min_radius_f:.3} at L = {l}"
        )));
    }
    let min_radius = (min_radius_f - 1e-9).ceil() as i64;
    let axes = cube.n() * cube.d();
    let center = cube.center().coords();
    let mut scanned = 0usize;
    for radius in min_radius..=l {
        let span = l - radius;
        let offsets: Vec<i64> = (-span..=span).step_by(stride as usize).collect();
        let width = params.resonance_width(radius);
        let mut idx = vec![0usize; axes];
        loop {
            let coords: Vec<i64> = (0..axes).map(|a| center[a] + offsets[idx[a]]).collect();
            let sub_center = Config::new(cube.n(), cube.d(), coords)?;
            let sub = MultiParticleCube::equal_radius(sub_center, radius)?;
            scanned += 1;
            if resonance_flag(&sub, realization, interaction, e, width)? {
                return Ok(CnrVerdict {
                    cnr: false,
                    offender: Some(sub),
                    scanned,
                });
            }
            // odometer over the offset grid, last axis fastest
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
    }
    Ok(CnrVerdict {
        cnr: true,
        offender: None,
        scanned,
    })
}

/// Largest number of points that are pairwise farther than `min_dist` in
/// the sup metric, by branch and bound; stops early at `cap` (callers that
/// only compare against a threshold `J` pass `cap = J + 1`).
pub fn max_separated_packing(points: &[Config], min_dist: i64, cap: usize) -> Result<usize> {
    let n = points.len();
    let mut conflict = vec![false; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let close = sup_distance(&points[i], &points[j])? <= min_dist;
            conflict[i * n + j] = close;
            conflict[j * n + i] = close;
        }
    }
    fn grow(
        start: usize,
        chosen: &mut Vec<usize>,
        best: &mut usize,
        points_len: usize,
        conflict: &[bool],
        cap: usize,
    ) {
        *best = (*best).max(chosen.len());
        if *best >= cap {
            return;
        }
        for i in start..points_len {
            if chosen.len() + (points_len - i) <= *best {
                return;
            }
            if chosen.iter().any(|&c| conflict[c * points_len + i]) {
                continue;
            }
            chosen.push(i);
            grow(i + 1, chosen, best, points_len, conflict, cap);
            chosen.pop();
            if *best >= cap {
                return;
            }
        }
    }
    let mut best = 0usize;
    let mut chosen = Vec::new();
    grow(0, &mut chosen, &mut best, n, &conflict, cap);
    Ok(best.min(cap))
}

/// Packing counts of singular sub-cubes at the previous scale.
#[derive(Clone, Debug, Serialize)]
pub struct SingularCounts {
    /// Largest pairwise-distant family of partially interactive singular
    /// sub-cube centers (capped at `J + 1`).
    pub pi: usize,
    /// Same for fully interactive sub-cubes.
    pub fi: usize,
    /// Total singular centers seen before packing, PI / FI.
    pub pi_singular_centers: usize,
    pub fi_singular_centers: usize,
}

/// Counts maximal packings of singular sub-cubes of radius `L_k` inside a
/// cube of radius `L_{k+1}`, split by interactivity, with centers pairwise
/// farther than `7 N L_k`.
pub fn count_singular_subcubes<T: Scalar>(
    cube: &MultiParticleCube,
    e: T,
    params: &MsaParams<T>,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
    sub_k: usize,
    stride: i64,
) -> Result<SingularCounts> {
    use crate::lattice::{classify_interactivity, Interactivity};
    let l_next = cube_scale(cube)?;
    let l_k = params.scale(sub_k);
    let min_dist = 7 * params.big_n as i64 * l_k;
    if l_next <= min_dist {
        return Err(Error::Parameter(format!(
            "scale mismatch: sub-cube packing needs L_next > 7 N L_k, got {l_next} <= {min_dist}"
        )));
    }
    if stride < 1 {
        return Err(Error::Parameter(format!("stride must be >= 1, got {stride}")));
    }
    let axes = cube.n() * cube.d();
    let center = cube.center().coords();
    let span = l_next - l_k;
    let offsets: Vec<i64> = (-span..=span).step_by(stride as usize).collect();
    let mut pi_centers = Vec::new();
    let mut fi_centers = Vec::new();
    let mut idx = vec![0usize; axes];
    loop {
        let coords: Vec<i64> = (0..axes).map(|a| center[a] + offsets[idx[a]]).collect();
        let sub_center = Config::new(cube.n(), cube.d(), coords)?;
        let sub = MultiParticleCube::equal_radius(sub_center.clone(), l_k)?;
        let verdict = classify_fast(&sub, realization, interaction, e, params)?;
        if !verdict.ns {
            match classify_interactivity(&sub, interaction.range)? {
                Interactivity::PartiallyInteractive(_) => pi_centers.push(sub_center),
                Interactivity::FullyInteractive => fi_centers.push(sub_center),
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
    let cap = params.j() + 1;
    Ok(SingularCounts {
        pi: max_separated_packing(&pi_centers, min_dist, cap)?,
        fi: max_separated_packing(&fi_centers, min_dist, cap)?,
        pi_singular_centers: pi_centers.len(),
        fi_singular_centers: fi_centers.len(),
    })
}

/// One row of the scale recursion: the measured probabilities at scale
/// `L_k` together with the bound the previous row implies for `p_hat`.
#[derive(Clone, Debug, Serialize)]
pub struct RecursionRow<T> {
    pub k: usize,
    pub l: i64,
    /// Empirical singularity probability at this scale.
    pub p_hat: T,
    /// Empirical non-CNR probability.
    pub q_hat: T,
    /// Empirical PI-singular-sub-cube probability.
    pub s_hat: T,
    /// `(3^{2nd}/2) L_k^{2nd} P_{k-1}^2 + Q_k + S_k`; absent on the first
    /// row.
    pub rhs_bound: Option<T>,
    /// `L_k^{-2 p 4^{N-n} (1+theta)^k}`.
    pub paper_target: T,
    /// Whether `p_hat <= rhs_bound`.
    pub holds: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RecursionLedger<T> {
    pub rows: Vec<RecursionRow<T>>,
}

/// The recursion right-hand side
/// `(3^{2nd}/2) l_next^{2nd} p_k^2 + q_next + s_next`.
pub fn recursion_rhs<T: Scalar>(
    n: usize,
    d: usize,
    l_next: i64,
    p_k: T,
    q_next: T,
    s_next: T,
) -> T {
    let two_nd = (2 * n * d) as i32;
    let combinatorial = lit::<T>(3.0).powi(two_nd) / lit::<T>(2.0);
    let volume = lit::<T>(l_next as f64).powi(two_nd);
    combinatorial * volume * p_k * p_k + q_next + s_next
}

/// Decay target `l^{-2 p 4^{N-n} (1+theta)^k}` at scale index `k`.
pub fn paper_target<T: Scalar>(params: &MsaParams<T>, k: usize, l: i64) -> T {
    let four_pow = lit::<T>(4.0).powi((params.big_n - params.n) as i32);
    let exponent = lit::<T>(2.0) * params.p * four_pow * (T::one() + params.theta).powi(k as i32);
    lit::<T>(l as f64).powf(-exponent)
}

fn check_probability<T: Scalar>(name: &str, value: T) -> Result<()> {
    if !(value >= T::zero() && value <= T::one()) {
        return Err(Error::Parameter(format!(
            "{name} must be a probability in [0, 1], got {:?}",
            value
        )));
    }
    Ok(())
}

impl<T: Scalar> RecursionLedger<T> {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    /// Appends the row for scale index `rows.len()`; from the second row on
    /// the previous row's `p_hat` feeds the recursion bound.
    pub fn push_scale(
        &mut self,
        params: &MsaParams<T>,
        p_hat: T,
        q_hat: T,
        s_hat: T,
    ) -> Result<&RecursionRow<T>> {
        check_probability("P", p_hat)?;
        check_probability("Q", q_hat)?;
        check_probability("S", s_hat)?;
        let k = self.rows.len();
        let l = params.scale(k);
        let rhs_bound = self
            .rows
            .last()
            .map(|prev| recursion_rhs(params.n, params.d, l, prev.p_hat, q_hat, s_hat));
        let holds = rhs_bound.map(|rhs| p_hat <= rhs);
        self.rows.push(RecursionRow {
            k,
            l,
            p_hat,
            q_hat,
            s_hat,
            rhs_bound,
            paper_target: paper_target(params, k, l),
            holds,
        });
        Ok(self.rows.last().expect("row just pushed"))
    }
}

/// Grid scan of `F_u(E) = max_{v in boundary} |G(u, v; E)|` over an energy
/// interval: which grid energies are bad (`F_u >= 2a`) and whether every
/// bad energy sits within `2c` of an eigenvalue.
#[derive(Clone, Debug, Serialize)]
pub struct CoverReport<T> {
    pub thresholds: FeThresholds<T>,
    /// `b <= min(a c^2 / |C|, c)`, reported, not enforced.
    pub condition_ok: bool,
    pub grid_len: usize,
    pub bad: Vec<T>,
    pub uncovered: Vec<T>,
}

pub fn energy_interval_cover<T: Scalar>(
    spec: &SpectralData<T>,
    params: &MsaParams<T>,
    k: usize,
    interval: &Interval<T>,
    grid_step: T,
) -> Result<CoverReport<T>> {
    let cube = spec.cube();
    let l = cube_scale(cube)?;
    let thresholds = params.fe_thresholds(l, k);
    let max_step = thresholds.b / lit::<T>(4.0);
    if !(grid_step > T::zero()) || grid_step > max_step {
        return Err(Error::Parameter(format!(
            "grid too coarse: step {:?} must lie in (0, b/4 = {:?}]",
            grid_step, max_step
        )));
    }
    let volume = lit::<T>(cube.site_count() as f64);
    let condition_ok = thresholds.b
        <= (thresholds.a * thresholds.c * thresholds.c / volume).min(thresholds.c);
    let boundary = cube.internal_boundary_indices();
    let u = cube.center();
    let two_a = lit::<T>(2.0) * thresholds.a;
    let two_c = lit::<T>(2.0) * thresholds.c;
    let grid = interval.stepped_grid(grid_step);
    let mut bad = Vec::new();
    let mut uncovered = Vec::new();
    for &e in &grid {
        let eta = spec.gap(e);
        if eta <= lit::<T>(DEGENERATE_GAP) {
            // numerically on the spectrum: bad and trivially covered
            bad.push(e);
            continue;
        }
        let row = green_row(spec, e, u, &boundary)?;
        let f_u = row.iter().map(|g| g.abs()).fold(T::zero(), |a, b| a.max(b));
        if f_u >= two_a {
            bad.push(e);
            if eta > two_c {
                uncovered.push(e);
            }
        }
    }
    Ok(CoverReport {
        thresholds,
        condition_ok,
        grid_len: grid.len(),
        bad,
        uncovered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoundingBox;
    use crate::model::{assemble, sample_disorder, DisorderSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(n: usize, d: usize, coords: &[i64]) -> Config {
        Config::new(n, d, coords.to_vec()).unwrap()
    }

    fn params(
        big_n: usize,
        d: usize,
        n: usize,
        m: f64,
        p: f64,
        theta: f64,
        l0: i64,
    ) -> MsaParams<f64> {
        MsaParams::new(big_n, d, n, m, p, theta, l0).unwrap()
    }

    fn zero_potential_chain(l: i64) -> (MultiParticleCube, DisorderRealization<f64>) {
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), l).unwrap();
        let bbox = BoundingBox::around(&[0], l).unwrap();
        let values = vec![0.0; bbox.site_count()];
        let spec = DisorderSpec::uniform(0.0, 0);
        let r = DisorderRealization::from_values(spec, bbox, 0, values).unwrap();
        (cube, r)
    }

    #[test]
    fn validation_rules() {
        assert!(MsaParams::new(2, 1, 2, 0.5, 2.0, 0.5, 8).is_err()); // theta
        assert!(MsaParams::new(2, 1, 2, 0.5, 2.0, 1.0 / 3.0, 8).is_err());
        assert!(MsaParams::new(2, 1, 2, -0.5, 2.0, 0.1, 8).is_err()); // m
        assert!(MsaParams::new(2, 1, 2, 0.5, 0.0, 0.1, 8).is_err()); // p
        assert!(MsaParams::new(2, 1, 3, 0.5, 2.0, 0.1, 8).is_err()); // n > N
        assert!(MsaParams::new(2, 1, 2, 0.5, 2.0, 0.1, 0).is_err()); // L0
        let mut bad_alpha = params(2, 1, 2, 0.5, 2.0, 0.1, 8);
        bad_alpha.alpha = 1.0;
        assert!(bad_alpha.validate().is_err());
        assert!(params(2, 1, 2, 0.5, 2.0, 0.1, 8).validate().is_ok());
    }

    #[test]
    fn strict_mode_thresholds() {
        // N=2, d=1, theta=0.1: p must exceed 12/0.7 = 17.142857, m at most 1/192
        let strict = params(2, 1, 2, 1.0 / 200.0, 18.0, 0.1, 8);
        assert!(strict.is_paper_strict(), "{:?}", strict.strict_violations());
        let weak_p = params(2, 1, 2, 1.0 / 200.0, 17.0, 0.1, 8);
        assert!(!weak_p.is_paper_strict());
        let heavy_m = params(2, 1, 2, 0.006, 18.0, 0.1, 8);
        assert!(!heavy_m.is_paper_strict());
    }

    #[test]
    fn scale_sequence_examples() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 8);
        assert_eq!(p.scale(0), 8);
        assert_eq!(p.scale(1), 22); // floor(8^1.5) = floor(22.627)
        assert_eq!(p.scale(2), 103); // floor(22^1.5) = floor(103.189)
        assert_eq!(next_scale(4, 2.0), 16); // exact power stays exact
        assert_eq!(next_scale(10, 1.5), 31);
    }

    #[test]
    fn p_k_growth() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 8);
        assert_relative_eq!(p.p_k(0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(p.p_k(1), 2.2, epsilon = 1e-12);
        assert_relative_eq!(p.p_k(2), 2.42, epsilon = 1e-12);
    }

    #[test]
    fn gamma_dyadic_examples() {
        // 256^{-1/8} = 1/2 exactly
        assert_relative_eq!(gamma(0.5, 256, 2, 2), 0.75, epsilon = 1e-14);
        assert_relative_eq!(gamma(0.5, 256, 1, 2), 1.125, epsilon = 1e-14);
    }

    #[test]
    fn gamma_bounds_and_monotonicity() {
        let big_n = 3;
        let m = 0.7;
        let l0 = 4;
        let cap = m * (1.0 + (l0 as f64).powf(-0.125)).powi(big_n as i32);
        let mut prev_in_l = f64::INFINITY;
        for l in l0..200 {
            let g = gamma(m, l, 1, big_n);
            assert!(g > m);
            assert!(g <= cap);
            assert!(g < prev_in_l);
            prev_in_l = g;
            // decreasing in n
            assert!(gamma(m, l, 1, big_n) > gamma(m, l, 2, big_n));
            assert!(gamma(m, l, 2, big_n) > gamma(m, l, 3, big_n));
        }
    }

    #[test]
    fn resonance_width_examples() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 8);
        assert_relative_eq!(p.resonance_width(100), (-10.0f64).exp(), epsilon = 1e-16);
        assert!((p.resonance_width(100) - 4.54e-5).abs() < 1e-7);
        assert_eq!(p.resonance_width(0), 1.0);
        assert_eq!(p.gamma_threshold(0, 1), 1.0);
    }

    #[test]
    fn j_threshold_default_formula() {
        assert_eq!(params(2, 1, 2, 0.01, 2.0, 0.1, 8).j(), 9); // 2^2 + 5
        assert_eq!(params(2, 1, 1, 0.01, 2.0, 0.1, 8).j(), 6); // 1 + 5
        assert_eq!(params(3, 1, 3, 0.01, 2.0, 0.1, 8).j(), 32); // 27 + 5
    }

    #[test]
    fn classify_three_site_analytic() {
        // zero potential, 3 sites: H = tridiag(-1, 2, -1); at E = -0.5 the
        // resolvent column from the center is known in closed form
        let (cube, r) = zero_potential_chain(1);
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let e = -0.5;
        // det(H - E) = 2.5^3 - 2*2.5; |G(center, ±1)| = 2.5 / det
        let det = 2.5f64.powi(3) - 5.0;
        let boundary_green = 2.5 / det;
        let eta = 2.0 - 2.0f64.sqrt() + 0.5;

        let loose = params(1, 1, 1, 0.5, 2.0, 0.1, 1); // threshold e^{-1}
        let v = classify_cube(&ham, e, &loose).unwrap();
        assert_relative_eq!(v.spectral_gap, eta, epsilon = 1e-12);
        assert_relative_eq!(v.max_boundary_green.unwrap(), boundary_green, epsilon = 1e-12);
        assert_relative_eq!(v.gamma_threshold, (-1.0f64).exp(), epsilon = 1e-12);
        assert!(v.ns);
        assert!(!v.resonant); // width e^{-1} = 0.368 < eta = 1.086

        let tight = params(1, 1, 1, 1.0, 2.0, 0.1, 1); // threshold e^{-2}
        let v = classify_cube(&ham, e, &tight).unwrap();
        assert!(!v.ns); // 0.235 > e^{-2} = 0.135
    }

    #[test]
    fn classify_exact_eigenvalue_degenerate() {
        let (cube, r) = zero_potential_chain(1);
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let p = params(1, 1, 1, 0.5, 2.0, 0.1, 1);
        let v = classify_cube(&ham, 2.0, &p).unwrap();
        assert!(!v.ns);
        assert!(v.resonant);
        assert!(v.max_boundary_green.is_none());
        assert!(v.spectral_gap <= 1e-12);
    }

    #[test]
    fn classify_single_site() {
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 0).unwrap();
        let bbox = BoundingBox::around(&[0], 0).unwrap();
        let r = DisorderRealization::from_values(
            DisorderSpec::uniform(1.0, 0),
            bbox,
            0,
            vec![0.37],
        )
        .unwrap();
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let p = params(1, 1, 1, 0.5, 2.0, 0.1, 1);
        let v = classify_cube(&ham, -0.5, &p).unwrap();
        // single site: boundary is the site itself, threshold e^0 = 1
        assert_eq!(v.gamma_threshold, 1.0);
        assert_relative_eq!(v.spectral_gap, 2.87, epsilon = 1e-12);
        assert_relative_eq!(v.max_boundary_green.unwrap(), 1.0 / 2.87, epsilon = 1e-12);
        assert!(v.ns);
        assert!(!v.resonant); // width e^0 = 1 < 2.87
    }

    #[test]
    fn classify_rejects_mixed_radii() {
        let cube = MultiParticleCube::new(cfg(2, 1, &[0, 9]), vec![1, 2]).unwrap();
        let spec = DisorderSpec::uniform(1.0, 1);
        let r = sample_disorder(&spec, &cube.support_box(), 0).unwrap();
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let p = params(2, 1, 2, 0.5, 2.0, 0.1, 1);
        assert!(matches!(
            classify_cube(&ham, -0.5, &p),
            Err(Error::Classification(_))
        ));
    }

    #[test]
    fn dense_and_banded_verdicts_agree() {
        let p = params(2, 1, 2, 0.05, 2.0, 0.1, 3);
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 2]), 3).unwrap();
        let dspec = DisorderSpec::uniform(1.5, 404);
        let inter = InteractionSpec::contact(0.3);
        for trial in 0..30 {
            let r = sample_disorder(&dspec, &cube.support_box(), trial).unwrap();
            let ham = assemble(&cube, &r, &inter).unwrap();
            let band = assemble_banded(&cube, &r, &inter).unwrap();
            for e in [-3.1, -1.7, 0.3, 2.9] {
                let dense = classify_cube(&ham, e, &p).unwrap();
                let fast = classify_banded(&band, &cube, e, &p).unwrap();
                assert_eq!(dense.ns, fast.ns, "trial {trial} E {e}");
                assert_eq!(dense.resonant, fast.resonant, "trial {trial} E {e}");
                let (a, b) = (
                    dense.max_boundary_green.unwrap(),
                    fast.max_boundary_green.unwrap(),
                );
                assert!(
                    (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) + 1e-12,
                    "trial {trial} E {e}: dense {a} banded {b}"
                );
                // the banded gap is a resolvent-norm bound: it approaches
                // the exact gap from above and never dips below it beyond
                // factorization roundoff
                assert!(
                    fast.spectral_gap >= dense.spectral_gap * (1.0 - 1e-6) - 1e-12,
                    "trial {trial} E {e}: gap est {} below exact {}",
                    fast.spectral_gap,
                    dense.spectral_gap
                );
            }
        }
    }

    #[test]
    fn resonant_and_nonsingular_coexist() {
        // resonance does not imply singularity: a tiny gap whose eigenstate
        // avoids both center and boundary keeps the Green row small
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 4);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 4).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 777);
        let width = p.resonance_width(4);
        let mut found = false;
        for trial in 0..200 {
            let r = sample_disorder(&dspec, &cube.support_box(), trial).unwrap();
            let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
            let spec = diagonalize_capped(&ham, 100).unwrap();
            for j in 0..spec.dim() {
                let e = spec.eigenvalues()[j] + 0.5 * width;
                let v = classify_dense(&spec, e, &p).unwrap();
                if v.resonant && v.ns {
                    found = true;
                    break;
                }
            }
            if found {
                break;
            }
        }
        assert!(found, "no resonant-yet-nonsingular instance in the sweep");
    }

    #[test]
    fn cnr_far_energy_scans_everything() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 8).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 31);
        let r = sample_disorder(&dspec, &cube.support_box(), 0).unwrap();
        let v = is_cnr(&cube, -60.0, &p, &r, &InteractionSpec::zero(), 1).unwrap();
        assert!(v.cnr);
        assert!(v.offender.is_none());
        // radii 4..=8 with all centers: sum of (2(8-l)+1)
        let expected: usize = (4..=8).map(|l| (2 * (8 - l) + 1) as usize).sum();
        assert_eq!(v.scanned, expected);
    }

    #[test]
    fn cnr_fails_on_resonant_cube_itself() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 8).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 32);
        let r = sample_disorder(&dspec, &cube.support_box(), 3).unwrap();
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let spec = diagonalize_capped(&ham, 100).unwrap();
        let e = spec.eigenvalues()[8]; // exactly on the spectrum
        let v = is_cnr(&cube, e, &p, &r, &InteractionSpec::zero(), 1).unwrap();
        assert!(!v.cnr);
        assert!(v.offender.is_some());
    }

    #[test]
    fn cnr_scale_precondition() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 2);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 2).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 33);
        let r = sample_disorder(&dspec, &cube.support_box(), 0).unwrap();
        // 2^{2/3} = 1.587 < 2
        assert!(matches!(
            is_cnr(&cube, 0.0, &p, &r, &InteractionSpec::zero(), 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cnr_thinned_scan_is_conservative_and_usually_agrees() {
        // the stride-2 center grid is a subset of the full grid, so the
        // thinned scan can only miss offenders, never invent them; because
        // overlapping sub-cube spectra interlace, it rarely misses
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 8).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 606);
        let mut agree = 0;
        for trial in 0..50 {
            let r = sample_disorder(&dspec, &cube.support_box(), trial).unwrap();
            let full = is_cnr(&cube, 0.0, &p, &r, &InteractionSpec::zero(), 1).unwrap();
            let thin = is_cnr(&cube, 0.0, &p, &r, &InteractionSpec::zero(), 2).unwrap();
            if full.cnr {
                assert!(thin.cnr, "trial {trial}: subset scan found an extra offender");
            }
            agree += usize::from(full.cnr == thin.cnr);
        }
        assert!(agree >= 40, "only {agree}/50 trials agreed");
    }

    #[test]
    fn packing_hand_examples() {
        let pts: Vec<Config> = [0i64, 10, 20, 30]
            .iter()
            .map(|&x| cfg(1, 1, &[x]))
            .collect();
        // pairs farther than 15: (0,20),(0,30),(10,30) -> best family {0,20} etc.
        assert_eq!(max_separated_packing(&pts, 15, 100).unwrap(), 2);
        // farther than 9: all consecutive gaps are 10 > 9
        assert_eq!(max_separated_packing(&pts, 9, 100).unwrap(), 4);
        // cap truncates early
        assert_eq!(max_separated_packing(&pts, 9, 3).unwrap(), 3);
        assert_eq!(max_separated_packing(&[], 5, 10).unwrap(), 0);
    }

    fn exhaustive_packing(points: &[Config], min_dist: i64) -> usize {
        let n = points.len();
        let mut best = 0;
        for mask in 0u32..(1 << n) {
            let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let ok = chosen.iter().enumerate().all(|(idx, &i)| {
                chosen[idx + 1..]
                    .iter()
                    .all(|&j| sup_distance(&points[i], &points[j]).unwrap() > min_dist)
            });
            if ok {
                best = best.max(chosen.len());
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn packing_matches_exhaustive_oracle(
            raw in proptest::collection::vec((-25i64..=25, -25i64..=25), 1..10),
            min_dist in 1i64..20,
        ) {
            let pts: Vec<Config> = raw.iter().map(|&(a, b)| cfg(2, 1, &[a, b])).collect();
            let fast = max_separated_packing(&pts, min_dist, 100).unwrap();
            prop_assert_eq!(fast, exhaustive_packing(&pts, min_dist));
        }

        #[test]
        fn packing_monotone_under_insertion(
            raw in proptest::collection::vec((-25i64..=25, -25i64..=25), 2..10),
            min_dist in 1i64..20,
        ) {
            let pts: Vec<Config> = raw.iter().map(|&(a, b)| cfg(2, 1, &[a, b])).collect();
            let without = max_separated_packing(&pts[..pts.len() - 1], min_dist, 100).unwrap();
            let with = max_separated_packing(&pts, min_dist, 100).unwrap();
            prop_assert!(with >= without);
        }
    }

    #[test]
    fn count_singular_none_far_from_spectrum() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 1);
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 3]), 15).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 909);
        let r = sample_disorder(&dspec, &cube.support_box(), 0).unwrap();
        let counts =
            count_singular_subcubes(&cube, -60.0, &p, &r, &InteractionSpec::contact(0.5), 0, 3)
                .unwrap();
        assert_eq!(counts.pi, 0);
        assert_eq!(counts.fi, 0);
        assert_eq!(counts.pi_singular_centers, 0);
        assert_eq!(counts.fi_singular_centers, 0);
    }

    #[test]
    fn count_singular_scale_mismatch() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 1);
        // L_next = 10 <= 7*2*1 = 14
        let cube = MultiParticleCube::equal_radius(cfg(2, 1, &[0, 3]), 10).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 910);
        let r = sample_disorder(&dspec, &cube.support_box(), 0).unwrap();
        assert!(matches!(
            count_singular_subcubes(&cube, 0.0, &p, &r, &InteractionSpec::contact(0.5), 0, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn recursion_anchor_row() {
        // n=2, d=1, L_next=22: (3^4/2) * 22^4 * (1e-3)^2 + 1e-5 + 1e-5
        let rhs: f64 = recursion_rhs(2, 1, 22, 1e-3, 1e-5, 1e-5);
        let expected = 40.5 * 234256.0 * 1e-6 + 2e-5;
        assert_eq!(rhs, expected);
        assert!((rhs - 9.487388).abs() < 1e-6);
        assert_eq!(recursion_rhs(2, 1, 22, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn recursion_ledger_flow() {
        let p = params(2, 1, 2, 0.01, 2.0, 0.1, 8);
        let mut ledger = RecursionLedger::new();
        let first = ledger.push_scale(&p, 1e-3, 2e-3, 5e-4).unwrap();
        assert_eq!(first.k, 0);
        assert_eq!(first.l, 8);
        assert!(first.rhs_bound.is_none());
        assert!(first.holds.is_none());
        let second = ledger.push_scale(&p, 5e-4, 1e-5, 1e-5).unwrap();
        assert_eq!(second.l, 22);
        let rhs = second.rhs_bound.unwrap();
        assert_relative_eq!(rhs, recursion_rhs(2, 1, 22, 1e-3, 1e-5, 1e-5), epsilon = 1e-15);
        assert_eq!(second.holds, Some(true));
        // target arithmetic: L^{-2 p 4^{N-n} (1+theta)^k}
        assert_relative_eq!(
            second.paper_target,
            22f64.powf(-2.0 * 2.0 * 1.0 * 1.1),
            epsilon = 1e-15
        );
        assert!(ledger.push_scale(&p, 1.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn fe_threshold_substitution() {
        // L=10, p_k=10, Nd=2: a=1e-2, b=1e-8, c=3e-2
        let p = params(2, 1, 2, 0.01, 10.0, 0.1, 8);
        let t = p.fe_thresholds(10, 0);
        assert_relative_eq!(t.a, 1e-2, epsilon = 1e-16);
        assert_relative_eq!(t.b, 1e-8, epsilon = 1e-22);
        assert_relative_eq!(t.c, 3e-2, epsilon = 1e-15);
    }

    #[test]
    fn cover_grid_too_coarse() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 10).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 11);
        let r = sample_disorder(&dspec, &cube.support_box(), 0).unwrap();
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let spec = diagonalize_capped(&ham, 100).unwrap();
        let interval = Interval::new(-2.0, 2.0).unwrap();
        // b(10) = 10^{-1.6} = 0.0251, so b/4 = 6.28e-3
        assert!(matches!(
            energy_interval_cover(&spec, &p, 0, &interval, 0.01),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cover_far_interval_has_no_bad_energies() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 10).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 12);
        let r = sample_disorder(&dspec, &cube.support_box(), 1).unwrap();
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let spec = diagonalize_capped(&ham, 100).unwrap();
        let interval = Interval::new(-100.0, -99.5).unwrap();
        let report = energy_interval_cover(&spec, &p, 0, &interval, 5e-3).unwrap();
        assert!(report.bad.is_empty());
        assert!(report.uncovered.is_empty());
        assert!(report.grid_len >= 100);
    }

    #[test]
    fn cover_bad_energies_sit_near_eigenvalues() {
        let p = params(1, 1, 1, 0.01, 2.0, 0.1, 8);
        let cube = MultiParticleCube::equal_radius(cfg(1, 1, &[0]), 10).unwrap();
        let dspec = DisorderSpec::uniform(5.0, 13);
        let interval = Interval::new(-2.0, 2.0).unwrap();
        let mut saw_bad = false;
        for trial in 0..10 {
            let r = sample_disorder(&dspec, &cube.support_box(), trial).unwrap();
            let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
            let spec = diagonalize_capped(&ham, 100).unwrap();
            let report = energy_interval_cover(&spec, &p, 0, &interval, 5e-3).unwrap();
            saw_bad |= !report.bad.is_empty();
            assert!(
                report.uncovered.is_empty(),
                "trial {trial}: {:?}",
                report.uncovered
            );
        }
        assert!(saw_bad, "grid never crossed the bad threshold");
    }

    #[test]
    fn verdict_record_serializes_expected_fields() {
        let p = params(1, 1, 1, 0.5, 2.0, 0.1, 1);
        let (cube, r) = zero_potential_chain(1);
        let ham = assemble(&cube, &r, &InteractionSpec::zero()).unwrap();
        let v = classify_cube(&ham, -0.5, &p).unwrap();
        let record = VerdictRecord::new(&cube, -0.5, &p, 0.0, &v);
        let json = serde_json::to_value(&record).unwrap();
        for key in [
            "cube",
            "E",
            "m",
            "h",
            "ns",
            "resonant",
            "cnr",
            "max_boundary_green",
            "eta",
        ] {
            assert!(json.get(key).is_some(), "missing field {key}");
        }
        assert_eq!(json["E"], -0.5);
    }
}
