//! Spectra, Green functions, and resolvent identities on cubes.
//!
//! The dense symmetric eigensolver is the reference backend: every spectral
//! object (resolvent entries, eigenfunction correlators, tensor products of
//! factor spectra, the partially-interactive resolvent decomposition, the
//! off-spectrum decay bound check) is computed from one `SpectralData` per
//! cube and realization, reused across energies.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Config, MultiParticleCube, PiIndexMap};
use crate::model::{AssembledHamiltonian, Interval};
use crate::scalar::{lit, Scalar};
use crate::{DEFAULT_DIM_CAP, DEGENERATE_GAP};

/// Eigenpairs of a cube restriction: eigenvalues ascending, eigenvectors as
/// matching columns with the first nonzero component positive.
#[derive(Clone, Debug)]
pub struct SpectralData<T: Scalar> {
    cube: MultiParticleCube,
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
}

fn canonical_sign<T: Scalar>(column: &mut [T]) {
    let threshold = lit::<T>(1e-12);
    for v in column.iter() {
        if v.abs() > threshold {
            if *v < T::zero() {
                for x in column.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

impl<T: Scalar> SpectralData<T> {
    /// Wraps precomputed eigenpairs; the caller guarantees ordering,
    /// orthonormality, and the sign convention.
    pub fn from_raw(
        cube: MultiParticleCube,
        eigenvalues: DVector<T>,
        eigenvectors: DMatrix<T>,
    ) -> Result<Self> {
        let dim = cube.site_count();
        if eigenvalues.len() != dim || eigenvectors.nrows() != dim || eigenvectors.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "eigendata of size {}x{} for a cube of {dim} sites",
                eigenvectors.nrows(),
                eigenvectors.ncols()
            )));
        }
        Ok(Self {
            cube,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn cube(&self) -> &MultiParticleCube {
        &self.cube
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    /// Component of eigenvector `j` at site index `i`.
    pub fn psi(&self, j: usize, i: usize) -> T {
        self.eigenvectors[(i, j)]
    }

    /// Distance from `e` to the spectrum.
    pub fn gap(&self, e: T) -> T {
        self.eigenvalues
            .iter()
            .map(|l| (*l - e).abs())
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
    }

    /// Eigenvalues inside a closed interval.
    pub fn eigenvalues_in(&self, interval: &Interval<T>) -> Vec<(usize, T)> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| interval.contains(**l))
            .map(|(j, l)| (j, *l))
            .collect()
    }
}

/// Dense symmetric eigensolve of an assembled cube, default dimension cap.
pub fn diagonalize<T: Scalar>(ham: &AssembledHamiltonian<T>) -> Result<SpectralData<T>> {
    diagonalize_capped(ham, DEFAULT_DIM_CAP)
}

pub fn diagonalize_capped<T: Scalar>(
    ham: &AssembledHamiltonian<T>,
    dim_cap: usize,
) -> Result<SpectralData<T>> {
    let dim = ham.matrix.nrows();
    if dim > dim_cap {
        return Err(Error::Resource(format!(
            "matrix dimension {dim} exceeds eigensolver cap {dim_cap}"
        )));
    }
    let eigen = ham.matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .expect("symmetric spectra are finite")
    });
    let eigenvalues = DVector::from_fn(dim, |i, _| eigen.eigenvalues[order[i]]);
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (new, &old) in order.iter().enumerate() {
        let mut col: Vec<T> = eigen.eigenvectors.column(old).iter().copied().collect();
        canonical_sign(&mut col);
        for (r, v) in col.iter().enumerate() {
            eigenvectors[(r, new)] = *v;
        }
    }
    SpectralData::from_raw(ham.cube.clone(), eigenvalues, eigenvectors)
}

fn site_index<T: Scalar>(spec: &SpectralData<T>, x: &Config) -> Result<usize> {
    spec.cube.index_of(x).ok_or_else(|| {
        Error::Region(format!(
            "configuration {:?} outside cube around {:?}",
            x.coords(),
            spec.cube.center().coords()
        ))
    })
}

fn require_off_spectrum<T: Scalar>(spec: &SpectralData<T>, e: T) -> Result<()> {
    let eta = spec.gap(e);
    if eta <= lit::<T>(DEGENERATE_GAP) {
        return Err(Error::Resonant { eta: eta.as_f64() });
    }
    Ok(())
}

/// Green function `G(x, y; e) = <delta_x, (H - e)^{-1} delta_y>` by
/// eigenfunction expansion.
pub fn green<T: Scalar>(spec: &SpectralData<T>, e: T, x: &Config, y: &Config) -> Result<T> {
    require_off_spectrum(spec, e)?;
    let xi = site_index(spec, x)?;
    let yi = site_index(spec, y)?;
    Ok(green_by_index(spec, e, xi, yi))
}

fn green_by_index<T: Scalar>(spec: &SpectralData<T>, e: T, xi: usize, yi: usize) -> T {
    let mut sum = T::zero();
    for j in 0..spec.dim() {
        sum += spec.psi(j, xi) * spec.psi(j, yi) / (spec.eigenvalues[j] - e);
    }
    sum
}

/// One resolvent row: `G(x, t; e)` for each target site index.
pub fn green_row<T: Scalar>(
    spec: &SpectralData<T>,
    e: T,
    x: &Config,
    targets: &[usize],
) -> Result<Vec<T>> {
    require_off_spectrum(spec, e)?;
    let xi = site_index(spec, x)?;
    Ok(targets
        .iter()
        .map(|&t| green_by_index(spec, e, xi, t))
        .collect())
}

/// Eigenfunction correlator `sum_{lambda_j in I} |psi_j(x) psi_j(y)|`: the
/// sup over Borel functions bounded by one of `|<delta_x, f(H) delta_y>|`.
pub fn correlator<T: Scalar>(
    spec: &SpectralData<T>,
    x: &Config,
    y: &Config,
    interval: &Interval<T>,
) -> Result<T> {
    let xi = site_index(spec, x)?;
    let yi = site_index(spec, y)?;
    Ok(correlator_by_index(spec, xi, yi, interval))
}

pub(crate) fn correlator_by_index<T: Scalar>(
    spec: &SpectralData<T>,
    xi: usize,
    yi: usize,
    interval: &Interval<T>,
) -> T {
    let mut sum = T::zero();
    for j in 0..spec.dim() {
        if interval.contains(spec.eigenvalues[j]) {
            sum += (spec.psi(j, xi) * spec.psi(j, yi)).abs();
        }
    }
    sum
}

/// Eigenpairs of a sum of commuting factor operators on the product cube:
/// eigenvalues are all sums, eigenvectors the matching tensor products, in
/// the product cube's row-major enumeration (factor order preserved).
pub fn tensor_eigenpairs<T: Scalar>(
    parts: &[&SpectralData<T>],
    dim_cap: usize,
) -> Result<SpectralData<T>> {
    if parts.is_empty() {
        return Err(Error::Parameter("tensor product of no factors".into()));
    }
    let d = parts[0].cube.d();
    if parts.iter().any(|p| p.cube.d() != d) {
        return Err(Error::DimensionMismatch(
            "tensor factors over different lattice dimensions".into(),
        ));
    }
    let mut dim = 1usize;
    for p in parts.iter() {
        dim = dim
            .checked_mul(p.dim())
            .filter(|&v| v <= dim_cap)
            .ok_or_else(|| {
                Error::Resource(format!("tensor product dimension exceeds cap {dim_cap}"))
            })?;
    }
    // product cube: concatenate particle blocks in factor order
    let mut particles: Vec<&[i64]> = Vec::new();
    let mut radii: Vec<i64> = Vec::new();
    for p in parts.iter() {
        let c = p.cube.center();
        for i in 0..c.n() {
            particles.push(c.particle(i));
            radii.push(p.cube.radii()[i]);
        }
    }
    let center = Config::from_particles(&particles)?;
    let cube = MultiParticleCube::new(center, radii)?;
    debug_assert_eq!(cube.site_count(), dim);

    // enumerate factor index tuples; the full row-major site order is the
    // mixed-radix order of (site_1, .., site_k), so tensor entries are
    // products over factors at the mixed-radix digits
    let mut sums = vec![T::zero(); dim];
    for idx in 0..dim {
        let mut rem = idx;
        let mut lam = T::zero();
        for p in parts.iter().rev() {
            let k = rem % p.dim();
            rem /= p.dim();
            lam += p.eigenvalues[k];
        }
        sums[idx] = lam;
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).expect("finite sums"));

    let eigenvalues = DVector::from_fn(dim, |i, _| sums[order[i]]);
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    let mut col = vec![T::zero(); dim];
    for (new, &flat) in order.iter().enumerate() {
        // decode the factor eigenindex tuple of this column
        let mut digits = Vec::with_capacity(parts.len());
        let mut rem = flat;
        for p in parts.iter().rev() {
            digits.push(rem % p.dim());
            rem /= p.dim();
        }
        digits.reverse();
        // entry at full site index s: product of factor components at the
        // mixed-radix digits of s
        for (s, slot) in col.iter_mut().enumerate() {
            let mut rem = s;
            let mut v = T::one();
            for (p, &ei) in parts.iter().rev().zip(digits.iter().rev()) {
                let si = rem % p.dim();
                rem /= p.dim();
                v *= p.psi(ei, si);
            }
            *slot = v;
        }
        canonical_sign(&mut col);
        for (r, v) in col.iter().enumerate() {
            eigenvectors[(r, new)] = *v;
        }
    }
    SpectralData::from_raw(cube, eigenvalues, eigenvectors)
}

/// Off-spectrum exponential decay check: compares every resolvent entry
/// against `2 eta^{-1} exp(-(eta / 12 nu) |x - y|)`.
#[derive(Clone, Debug, Serialize)]
pub struct CtReport<T> {
    pub eta: T,
    /// Largest `|G(x,y)| / bound(x,y)` over all site pairs.
    pub max_ratio: T,
    pub worst_distance: i64,
    pub pairs_checked: usize,
}

/// The decay bound itself.
pub fn ct_bound<T: Scalar>(eta: T, nu: T, distance: i64) -> T {
    lit::<T>(2.0) / eta * (-(eta / (lit::<T>(12.0) * nu)) * lit::<T>(distance as f64)).exp()
}

/// Runs the decay-bound comparison over all pairs of cube sites. Requires
/// `dist(e, spectrum) in (0, 1]`, the regime where the bound is asserted.
pub fn combes_thomas_check<T: Scalar>(
    spec: &SpectralData<T>,
    e: T,
    nu: T,
) -> Result<CtReport<T>> {
    let eta = spec.gap(e);
    if eta <= lit::<T>(DEGENERATE_GAP) {
        return Err(Error::Resonant { eta: eta.as_f64() });
    }
    if eta > T::one() {
        return Err(Error::Parameter(format!(
            "decay bound check needs a gap in (0, 1], got {:.3e}",
            eta.as_f64()
        )));
    }
    if nu <= T::zero() {
        return Err(Error::Parameter("nu must be positive".into()));
    }
    let dim = spec.dim();
    // distance table via site decoding
    let sites = spec.cube.sites();
    let mut max_ratio = T::zero();
    let mut worst_distance = 0i64;
    let mut pairs = 0usize;
    for xi in 0..dim {
        for yi in xi..dim {
            let g = green_by_index(spec, e, xi, yi).abs();
            let dist = crate::lattice::sup_distance(&sites[xi], &sites[yi])
                .expect("sites share a shape");
            let bound = ct_bound(eta, nu, dist);
            let ratio = g / bound;
            if ratio > max_ratio {
                max_ratio = ratio;
                worst_distance = dist;
            }
            pairs += 1;
        }
    }
    Ok(CtReport {
        eta,
        max_ratio,
        worst_distance,
        pairs_checked: pairs,
    })
}

/// Resolvent of a two-block cube through its factors, both ways.
#[derive(Clone, Debug)]
pub struct PiGreenReport<T> {
    /// Internal boundary site indices of the full cube.
    pub boundary: Vec<usize>,
    /// `G(u, y)` by a pivoted linear solve on the full cube.
    pub direct: Vec<T>,
    /// Expansion over left eigenpairs with right resolvents at shifted
    /// energies.
    pub via_left: Vec<T>,
    /// Expansion over right eigenpairs with left resolvents.
    pub via_right: Vec<T>,
    pub max_rel_err_left: T,
    pub max_rel_err_right: T,
}

/// The two factor expansions of the full resolvent from the cube center to
/// its internal boundary, compared against a direct linear solve.
///
/// `G(u, y; e) = sum_i phi_i(u')phi_i(y') G''(u'', y''; e - lambda_i)`
/// and symmetrically over the right factor. Well-defined whenever `e` keeps
/// a gap from the full (sum) spectrum: every shifted energy then keeps the
/// same gap from the other factor's spectrum. The reference column is
/// computed by a pivoted solve of `(H - e) g = delta_u` rather than through
/// the full cube's eigenpairs: the solve is backward stable in the assembled
/// matrix, so the comparison measures the factor expansions alone instead of
/// folding in the larger eigensolve's rounding.
pub fn pi_green_from_parts<T: Scalar>(
    ham: &AssembledHamiltonian<T>,
    left: &SpectralData<T>,
    right: &SpectralData<T>,
    map: &PiIndexMap,
    e: T,
) -> Result<PiGreenReport<T>> {
    let dim = ham.matrix.nrows();
    if left.dim() * right.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "factors of dimension {} x {} against a full cube of {}",
            left.dim(),
            right.dim(),
            dim
        )));
    }
    // the full spectrum of a separated two-block cube is the sum set of the
    // factor spectra, so the resonance guard can be evaluated exactly from
    // the parts
    let mut gap = T::max_value().expect("real field has a max");
    for i in 0..left.dim() {
        for j in 0..right.dim() {
            gap = gap.min((left.eigenvalues[i] + right.eigenvalues[j] - e).abs());
        }
    }
    if gap <= lit::<T>(DEGENERATE_GAP) {
        return Err(Error::Resonant { eta: gap.as_f64() });
    }
    let u = ham.cube.center_index();
    let boundary = ham.cube.internal_boundary_indices();
    let mut shifted = ham.matrix.clone();
    for i in 0..dim {
        shifted[(i, i)] -= e;
    }
    let mut rhs = DVector::zeros(dim);
    rhs[u] = T::one();
    let column = shifted
        .lu()
        .solve(&rhs)
        .ok_or(Error::Resonant { eta: gap.as_f64() })?;
    let direct: Vec<T> = boundary.iter().map(|&y| column[y]).collect();
    let (ul, ur) = (map.left_of[u], map.right_of[u]);
    let mut via_left = vec![T::zero(); boundary.len()];
    let mut via_right = vec![T::zero(); boundary.len()];
    for (slot, &y) in boundary.iter().enumerate() {
        let (yl, yr) = (map.left_of[y], map.right_of[y]);
        let mut sum_l = T::zero();
        for i in 0..left.dim() {
            let w = left.psi(i, ul) * left.psi(i, yl);
            if w != T::zero() {
                sum_l += w * green_by_index(right, e - left.eigenvalues[i], ur, yr);
            }
        }
        via_left[slot] = sum_l;
        let mut sum_r = T::zero();
        for j in 0..right.dim() {
            let w = right.psi(j, ur) * right.psi(j, yr);
            if w != T::zero() {
                sum_r += w * green_by_index(left, e - right.eigenvalues[j], ul, yl);
            }
        }
        via_right[slot] = sum_r;
    }
    let rel = |a: T, b: T| {
        let denom = a.abs().max(b.abs()).max(lit::<T>(1e-300));
        (a - b).abs() / denom
    };
    let mut max_l = T::zero();
    let mut max_r = T::zero();
    for i in 0..boundary.len() {
        max_l = max_l.max(rel(direct[i], via_left[i]));
        max_r = max_r.max(rel(direct[i], via_right[i]));
    }
    Ok(PiGreenReport {
        boundary,
        direct,
        via_left,
        via_right,
        max_rel_err_left: max_l,
        max_rel_err_right: max_r,
    })
}

/// Classifies the cube, splits it, assembles and diagonalizes the factors,
/// and compares the factor expansions against the direct resolvent.
pub fn pi_green_decomposition<T: Scalar>(
    ham: &AssembledHamiltonian<T>,
    realization: &crate::model::DisorderRealization<T>,
    interaction: &crate::model::InteractionSpec<T>,
    e: T,
    dim_cap: usize,
) -> Result<PiGreenReport<T>> {
    use crate::lattice::{classify_interactivity, Interactivity};
    let split = match classify_interactivity(&ham.cube, interaction.range)? {
        Interactivity::PartiallyInteractive(s) => s,
        Interactivity::FullyInteractive => {
            return Err(Error::Decomposition(
                "cube is fully interactive: no separated split exists".into(),
            ))
        }
    };
    let map = PiIndexMap::new(&ham.cube, &split)?;
    let dim = ham.matrix.nrows();
    if dim > dim_cap {
        return Err(Error::Resource(format!(
            "matrix dimension {dim} exceeds dense-solve cap {dim_cap}"
        )));
    }
    let left_ham = crate::model::assemble_capped(&map.left_cube, realization, interaction, dim_cap)?;
    let right_ham =
        crate::model::assemble_capped(&map.right_cube, realization, interaction, dim_cap)?;
    let left = diagonalize_capped(&left_ham, dim_cap)?;
    let right = diagonalize_capped(&right_ham, dim_cap)?;
    pi_green_from_parts(ham, &left, &right, &map, e)
}
