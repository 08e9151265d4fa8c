//! Random Hamiltonians on multi-particle cubes.
//!
//! The operator is `H = -Delta + sum_j V(x_j, omega) + h U(x)` restricted to
//! a cube with simple truncation: the full diagonal `2dn + sum V + hU` is
//! kept everywhere and hopping terms leaving the cube are dropped. The
//! potential `V` is i.i.d. over `Z^d` with a bounded compactly supported
//! density; the interaction `U` is a finite-range symmetric pair sum.
//!
//! Disorder values are derived per site from `(master seed, trial, site)`
//! through a counter-based stream, so a realization restricted to a smaller
//! box equals the smaller box's realization verbatim. That coupling is what
//! lets probes vary the cube or the interaction strength against a fixed
//! environment.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::SymBandMatrix;
use crate::error::{Error, Result};
use crate::lattice::{BoundingBox, Config, Coord, MultiParticleCube};
use crate::scalar::{lit, Scalar};
use crate::DEFAULT_DIM_CAP;

/// Closed energy interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo > hi {
            return Err(Error::Parameter(format!(
                "empty interval [{:?}, {:?}]",
                lo, hi
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    /// `count` energies strictly inside the interval, equispaced.
    pub fn interior_grid(&self, count: usize) -> Vec<T> {
        let step = self.width() / lit::<T>((count + 1) as f64);
        (1..=count).map(|i| self.lo + step * lit::<T>(i as f64)).collect()
    }

    /// Inclusive grid with the given step, starting at `lo`.
    pub fn stepped_grid(&self, step: T) -> Vec<T> {
        let mut out = Vec::new();
        let mut e = self.lo;
        while e <= self.hi {
            out.push(e);
            e += step;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum DisorderFamily {
    /// Uniform density `1/(2M)` on `[-M, M]`.
    Uniform,
    /// Gaussian of width `sigma_ratio * M` conditioned on `[-M, M]`.
    TruncatedGaussian { sigma_ratio: f64 },
    /// Piecewise-constant density: equal-width bins on `[-M, M]` with the
    /// given nonnegative weights.
    PiecewiseDensity { weights: Vec<f64> },
}

/// Site potential distribution plus the master seed of the disorder stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec<T> {
    pub family: DisorderFamily,
    /// Support half-width `M`; `M = 0` is the deterministic `V = 0` control.
    pub support_bound: T,
    /// Weighted-density exponent in `(0, 1)`; recorded for validation only.
    pub density_weight_exponent: f64,
    pub master_seed: u64,
}

fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn zigzag(c: Coord) -> u64 {
    ((c << 1) ^ (c >> 63)) as u64
}

/// Per-site stream key: avalanche-mixed fold of master seed, trial index,
/// and the site coordinates. Independent of any enclosing box.
pub fn site_stream_key(master_seed: u64, trial: u64, site: &[Coord]) -> u64 {
    let mut s = splitmix64(master_seed);
    s = splitmix64(s ^ trial);
    for &c in site {
        s = splitmix64(s ^ zigzag(c));
    }
    s
}

impl<T: Scalar> DisorderSpec<T> {
    pub fn uniform(support_bound: T, master_seed: u64) -> Self {
        Self {
            family: DisorderFamily::Uniform,
            support_bound,
            density_weight_exponent: 0.5,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.support_bound.as_f64();
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Parameter(format!(
                "disorder support bound must be finite and >= 0, got {m}"
            )));
        }
        let kappa = self.density_weight_exponent;
        if !(0.0 < kappa && kappa < 1.0) {
            return Err(Error::Parameter(format!(
                "density weight exponent must lie in (0, 1), got {kappa}"
            )));
        }
        match &self.family {
            DisorderFamily::Uniform => {}
            DisorderFamily::TruncatedGaussian { sigma_ratio } => {
                if !sigma_ratio.is_finite() || *sigma_ratio <= 0.0 {
                    return Err(Error::Parameter(format!(
                        "truncated gaussian needs sigma_ratio > 0, got {sigma_ratio}"
                    )));
                }
            }
            DisorderFamily::PiecewiseDensity { weights } => {
                if weights.is_empty()
                    || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return Err(Error::Parameter(
                        "piecewise density needs nonnegative weights with positive sum".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Potential value at a site for the given trial. Deterministic in
    /// `(master_seed, trial, site)` and nothing else.
    pub fn sample_site(&self, trial: u64, site: &[Coord]) -> T {
        let m = self.support_bound.as_f64();
        if m == 0.0 {
            return T::zero();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(site_stream_key(self.master_seed, trial, site));
        let v = match &self.family {
            DisorderFamily::Uniform => m * (2.0 * rng.gen::<f64>() - 1.0),
            DisorderFamily::TruncatedGaussian { sigma_ratio } => {
                let sigma = sigma_ratio * m;
                let mut v = 0.0;
                for _ in 0..10_000 {
                    let g: f64 = rng.sample(rand_distr::StandardNormal);
                    v = sigma * g;
                    if v.abs() <= m {
                        break;
                    }
                    v = v.clamp(-m, m);
                }
                v
            }
            DisorderFamily::PiecewiseDensity { weights } => {
                let total: f64 = weights.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut bin = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if pick < *w {
                        bin = i;
                        break;
                    }
                    pick -= w;
                }
                let bin_width = 2.0 * m / weights.len() as f64;
                -m + bin_width * (bin as f64 + rng.gen::<f64>())
            }
        };
        lit(v)
    }

    /// Probability mass the site distribution puts on `[lo, hi]`.
    pub fn window_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        let m = self.support_bound.as_f64();
        if m == 0.0 {
            return if lo <= 0.0 && 0.0 <= hi { 1.0 } else { 0.0 };
        }
        let (lo, hi) = (lo.max(-m), hi.min(m));
        if hi < lo {
            return 0.0;
        }
        match &self.family {
            DisorderFamily::Uniform => (hi - lo) / (2.0 * m),
            DisorderFamily::TruncatedGaussian { sigma_ratio } => {
                let sigma = sigma_ratio * m;
                let phi = |x: f64| 0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)));
                let z = phi(m) - phi(-m);
                (phi(hi) - phi(lo)) / z
            }
            DisorderFamily::PiecewiseDensity { weights } => {
                let total: f64 = weights.iter().sum();
                let b = weights.len() as f64;
                let bin_width = 2.0 * m / b;
                let mut mass = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    let bl = -m + bin_width * i as f64;
                    let bh = bl + bin_width;
                    let overlap = (hi.min(bh) - lo.max(bl)).max(0.0);
                    mass += overlap / bin_width * (w / total);
                }
                mass
            }
        }
    }

    /// Continuity modulus `s(eps)`: the largest probability any window of
    /// width `eps` can carry. Uniform gives `min(eps / 2M, 1)` exactly.
    pub fn continuity_modulus(&self, eps: f64) -> Result<f64> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::Parameter(format!(
                "continuity modulus needs eps >= 0, got {eps}"
            )));
        }
        let m = self.support_bound.as_f64();
        if m == 0.0 {
            return Ok(1.0);
        }
        if eps >= 2.0 * m {
            return Ok(1.0);
        }
        Ok(match &self.family {
            DisorderFamily::Uniform => (eps / (2.0 * m)).min(1.0),
            // density peaks at the origin: the centered window is extremal
            DisorderFamily::TruncatedGaussian { .. } => {
                self.window_mass(-eps / 2.0, eps / 2.0)
            }
            DisorderFamily::PiecewiseDensity { weights } => {
                // window mass is piecewise linear in the window position;
                // extrema occur where an endpoint hits a bin edge
                let bin_width = 2.0 * m / weights.len() as f64;
                let mut best: f64 = 0.0;
                for i in 0..=weights.len() {
                    let edge = -m + bin_width * i as f64;
                    for x in [edge, edge - eps] {
                        let x = x.clamp(-m, m - eps.min(2.0 * m));
                        best = best.max(self.window_mass(x, x + eps));
                    }
                }
                best.min(1.0)
            }
        })
    }
}

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Disorder values materialized on a box of `Z^d` for one trial.
#[derive(Clone, Debug)]
pub struct DisorderRealization<T> {
    spec: DisorderSpec<T>,
    bbox: BoundingBox,
    trial: u64,
    values: Vec<T>,
}

/// Samples the potential on every site of the box, row-major.
pub fn sample_disorder<T: Scalar>(
    spec: &DisorderSpec<T>,
    bbox: &BoundingBox,
    trial: u64,
) -> Result<DisorderRealization<T>> {
    spec.validate()?;
    let mut values = vec![T::zero(); bbox.site_count()];
    bbox.for_each_point(|idx, p| {
        values[idx] = spec.sample_site(trial, p);
    });
    Ok(DisorderRealization {
        spec: spec.clone(),
        bbox: bbox.clone(),
        trial,
        values,
    })
}

impl<T: Scalar> DisorderRealization<T> {
    /// Wraps explicit site values (deterministic controls and tests).
    pub fn from_values(
        spec: DisorderSpec<T>,
        bbox: BoundingBox,
        trial: u64,
        values: Vec<T>,
    ) -> Result<Self> {
        if values.len() != bbox.site_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a box of {} sites",
                values.len(),
                bbox.site_count()
            )));
        }
        Ok(Self {
            spec,
            bbox,
            trial,
            values,
        })
    }

    pub fn spec(&self) -> &DisorderSpec<T> {
        &self.spec
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn value(&self, site: &[Coord]) -> Result<T> {
        self.bbox
            .index_of(site)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Coverage(format!("site {site:?} outside realization box")))
    }

    pub fn covers(&self, cube: &MultiParticleCube) -> bool {
        self.bbox.contains_box(&cube.support_box())
    }
}

/// Finite-range symmetric pair interaction `U(x) = sum_{i<j} Phi(|x_i - x_j|)`
/// scaled by the amplitude `h`; `phi[r]` is the value at particle distance
/// `r`, zero beyond `range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec<T> {
    pub amplitude: T,
    pub range: i64,
    pub phi: Vec<T>,
}

impl<T: Scalar> InteractionSpec<T> {
    pub fn new(amplitude: T, range: i64, phi: Vec<T>) -> Result<Self> {
        if range < 0 {
            return Err(Error::Parameter(format!("interaction range {range} < 0")));
        }
        if phi.len() != (range + 1) as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} interaction values for range {range}",
                phi.len()
            )));
        }
        if phi.iter().any(|v| !v.as_f64().is_finite()) {
            return Err(Error::Parameter("non-finite interaction value".into()));
        }
        Ok(Self {
            amplitude,
            range,
            phi,
        })
    }

    /// Contact interaction: `Phi = 1` at distances 0 and 1.
    pub fn contact(amplitude: T) -> Self {
        Self {
            amplitude,
            range: 1,
            phi: vec![T::one(), T::one()],
        }
    }

    pub fn zero() -> Self {
        Self {
            amplitude: T::zero(),
            range: 0,
            phi: vec![T::zero()],
        }
    }

    pub fn phi_at(&self, r: i64) -> T {
        if (0..=self.range).contains(&r) {
            self.phi[r as usize]
        } else {
            T::zero()
        }
    }

    fn energy_from_coords(&self, p: &[Coord], n: usize, d: usize) -> T {
        let mut u = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = (0..d)
                    .map(|a| (p[i * d + a] - p[j * d + a]).abs())
                    .max()
                    .unwrap_or(0);
                u += self.phi_at(dist);
            }
        }
        u
    }

    /// Unscaled interaction energy `U(x)` of a configuration.
    pub fn energy(&self, x: &Config) -> T {
        self.energy_from_coords(x.coords(), x.n(), x.d())
    }

    /// `max_x |U(x)|` over the cube's sites.
    pub fn sup_norm_on(&self, cube: &MultiParticleCube) -> T {
        if cube.n() < 2 || self.range < 0 {
            return T::zero();
        }
        let (n, d) = (cube.n(), cube.d());
        let mut sup = T::zero();
        cube.for_each_site(|_, p| {
            let u = self.energy_from_coords(p, n, d).abs();
            if u > sup {
                sup = u;
            }
        });
        sup
    }
}

/// Dense restriction of the Hamiltonian to a cube.
#[derive(Clone, Debug)]
pub struct AssembledHamiltonian<T: Scalar> {
    pub cube: MultiParticleCube,
    pub matrix: DMatrix<T>,
    pub amplitude: T,
    /// `(master seed, trial)` of the realization that filled the diagonal.
    pub realization_id: (u64, u64),
    /// `max |U|` over the cube, for spectrum enclosures.
    pub interaction_sup: T,
}

fn diagonal_values<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
) -> Result<(Vec<T>, T)> {
    if !realization.covers(cube) {
        return Err(Error::Coverage(format!(
            "cube with support box {:?}..{:?} exceeds realization box {:?}..{:?}",
            cube.support_box().lo(),
            cube.support_box().hi(),
            realization.bounding_box().lo(),
            realization.bounding_box().hi()
        )));
    }
    let (n, d) = (cube.n(), cube.d());
    let base = lit::<T>((2 * d * n) as f64);
    let dim = cube.site_count();
    let mut diag = vec![T::zero(); dim];
    let mut u_sup = T::zero();
    let mut err = None;
    cube.for_each_site(|idx, p| {
        if err.is_some() {
            return;
        }
        let mut v_sum = T::zero();
        for i in 0..n {
            match realization.value(&p[i * d..(i + 1) * d]) {
                Ok(v) => v_sum += v,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            }
        }
        let u = interaction.energy_from_coords(p, n, d);
        if u.abs() > u_sup {
            u_sup = u.abs();
        }
        diag[idx] = base + v_sum + interaction.amplitude * u;
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok((diag, u_sup))
}

/// Off-diagonal structure: `-1` between sites differing by one step along
/// one axis, i.e. nearest neighbors of `Z^{nd}` in the 1-norm.
fn hopping_pairs(cube: &MultiParticleCube, mut couple: impl FnMut(usize, usize)) {
    let axes = cube.n() * cube.d();
    let dim = cube.site_count();
    for a in 0..axes {
        let stride = cube.stride(a);
        let extent = cube.extent(a);
        if extent < 2 {
            continue;
        }
        let block = stride * extent;
        for idx in 0..dim {
            // skip sites on the last layer of axis a
            if (idx % block) / stride == extent - 1 {
                continue;
            }
            couple(idx, idx + stride);
        }
    }
}

/// Assembles the dense cube restriction with simple truncation.
pub fn assemble<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
) -> Result<AssembledHamiltonian<T>> {
    assemble_capped(cube, realization, interaction, DEFAULT_DIM_CAP)
}

pub fn assemble_capped<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
    dim_cap: usize,
) -> Result<AssembledHamiltonian<T>> {
    let dim = cube.site_count();
    if dim > dim_cap {
        return Err(Error::Resource(format!(
            "cube has {dim} sites, dense cap is {dim_cap}"
        )));
    }
    let (diag, u_sup) = diagonal_values(cube, realization, interaction)?;
    let mut matrix = DMatrix::<T>::zeros(dim, dim);
    for (i, v) in diag.iter().enumerate() {
        matrix[(i, i)] = *v;
    }
    hopping_pairs(cube, |i, j| {
        matrix[(i, j)] = -T::one();
        matrix[(j, i)] = -T::one();
    });
    Ok(AssembledHamiltonian {
        cube: cube.clone(),
        matrix,
        amplitude: interaction.amplitude,
        realization_id: (realization.spec().master_seed, realization.trial()),
        interaction_sup: u_sup,
    })
}

/// Same operator in symmetric band storage; the half-bandwidth is the
/// largest axis stride, so narrow multi-particle cubes stay cheap to factor.
pub fn assemble_banded<T: Scalar>(
    cube: &MultiParticleCube,
    realization: &DisorderRealization<T>,
    interaction: &InteractionSpec<T>,
) -> Result<SymBandMatrix<T>> {
    let (diag, _) = diagonal_values(cube, realization, interaction)?;
    let half_bandwidth = if cube.site_count() == 1 { 0 } else { cube.stride(0) };
    let mut band = SymBandMatrix::zeros(cube.site_count(), half_bandwidth);
    for (i, v) in diag.iter().enumerate() {
        band.set(i, i, *v);
    }
    hopping_pairs(cube, |i, j| {
        band.set(i, j, -T::one());
    });
    Ok(band)
}

/// Deterministic enclosure of the spectrum over all cubes and realizations:
/// `[-1 - N(4d + M) - |h| u_norm, N(4d + M) + |h| u_norm + 1]`.
pub fn spectrum_interval<T: Scalar>(
    big_n: usize,
    d: usize,
    support_bound: T,
    amplitude: T,
    u_norm: T,
) -> Result<Interval<T>> {
    if big_n == 0 || d == 0 {
        return Err(Error::Parameter(format!(
            "spectrum interval needs N >= 1, d >= 1, got N = {big_n}, d = {d}"
        )));
    }
    let body = lit::<T>(big_n as f64)
        * (lit::<T>(4.0 * d as f64) + support_bound)
        + amplitude.abs() * u_norm;
    Interval::new(-T::one() - body, body + T::one())
}
