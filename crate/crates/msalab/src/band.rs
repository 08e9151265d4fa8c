//! Symmetric band linear algebra for cube restrictions.
//!
//! Hamiltonians on product cubes are banded in the row-major site order:
//! hopping couples indices at axis strides, so the half-bandwidth is the
//! largest stride. Everything a resonance verdict needs (eigenvalue counts
//! near an energy, one resolvent row, a spectral-gap estimate) comes out of
//! direct band factorizations in `O(dim * bandwidth^2)` time, no full
//! eigensolve required. The dense eigensolver remains the reference these
//! routines are tested against.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Symmetric matrix stored as upper band rows: row `i` keeps columns
/// `i ..= min(dim-1, i+hbw)`.
#[derive(Clone, Debug)]
pub struct SymBandMatrix<T> {
    dim: usize,
    hbw: usize,
    rows: Vec<T>,
}

impl<T: Scalar> SymBandMatrix<T> {
    pub fn zeros(dim: usize, half_bandwidth: usize) -> Self {
        Self {
            dim,
            hbw: half_bandwidth,
            rows: vec![T::zero(); dim * (half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hbw
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi - lo > self.hbw {
            T::zero()
        } else {
            self.rows[lo * (self.hbw + 1) + (hi - lo)]
        }
    }

    /// Sets the symmetric pair; `|i - j|` must fit the band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        assert!(hi - lo <= self.hbw, "entry ({i}, {j}) outside bandwidth {}", self.hbw);
        self.rows[lo * (self.hbw + 1) + (hi - lo)] = v;
    }

    /// Largest absolute entry; the scale all pivot guards refer to.
    pub fn scale(&self) -> T {
        self.rows
            .iter()
            .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![T::zero(); self.dim];
        let w = self.hbw + 1;
        for i in 0..self.dim {
            let row = &self.rows[i * w..i * w + w];
            let mut acc = row[0] * x[i];
            let reach = (self.dim - 1 - i).min(self.hbw);
            for t in 1..=reach {
                acc += row[t] * x[i + t];
                y[i + t] += row[t] * x[i];
            }
            y[i] += acc;
        }
        y
    }

    /// Unpivoted `LDL^T` of `A - shift I`, returning the number of negative
    /// pivots: by Sylvester's law, the number of eigenvalues below `shift`.
    /// `None` signals a breakdown (pivot too small or multiplier too large),
    /// which the jittered wrapper resolves.
    fn try_count_below(&self, shift: T) -> Option<usize> {
        let n = self.dim;
        let b = self.hbw;
        let w = b + 1;
        let scale = self.scale().max(shift.abs()).max(T::one());
        let eps = T::default_epsilon();
        let pivmin = scale * eps * eps;
        let mul_cap = T::one() / eps;
        let mut work = self.rows.clone();
        for i in 0..n {
            work[i * w] -= shift;
        }
        let mut row_k = vec![T::zero(); w];
        let mut negatives = 0usize;
        for k in 0..n {
            let d = work[k * w];
            if d.abs() <= pivmin {
                return None;
            }
            if d < T::zero() {
                negatives += 1;
            }
            let reach = (n - 1 - k).min(b);
            row_k[..=reach].copy_from_slice(&work[k * w..k * w + reach + 1]);
            for i in (k + 1)..=(k + reach) {
                let a_ki = row_k[i - k];
                if a_ki == T::zero() {
                    continue;
                }
                let l = a_ki / d;
                if l.abs() >= mul_cap {
                    return None;
                }
                // row i update stays inside the band of row k
                let row_i = &mut work[i * w..i * w + (k + reach - i) + 1];
                for (j, slot) in row_i.iter_mut().enumerate() {
                    *slot -= l * row_k[j + (i - k)];
                }
            }
        }
        Some(negatives)
    }

    /// Eigenvalue count below `shift`, retrying with tiny shift jitter on
    /// factorization breakdown. The jitter stays far below any verdict
    /// threshold, so counts against windows wider than ~1e-12 * scale are
    /// unaffected.
    pub fn count_below(&self, shift: T) -> Result<usize> {
        let scale = self.scale().max(T::one());
        let delta = scale * T::default_epsilon() * lit::<T>(4.0);
        for mult in [0.0, 1.0, -1.0, 8.0, -8.0, 64.0, -64.0] {
            if let Some(c) = self.try_count_below(shift + delta * lit::<T>(mult)) {
                return Ok(c);
            }
        }
        Err(Error::Decomposition(format!(
            "inertia breakdown at shift {:.6e} despite jitter",
            shift.as_f64()
        )))
    }

    /// Number of eigenvalues in `[lo, hi]` (boundary ties resolved by the
    /// jittered counts; exact ties are measure-zero under the disorder).
    pub fn count_in_window(&self, lo: T, hi: T) -> Result<usize> {
        if hi < lo {
            return Ok(0);
        }
        let below_hi = self.count_below(hi)?;
        let below_lo = self.count_below(lo)?;
        Ok(below_hi.saturating_sub(below_lo))
    }

    /// Band LU of `A - e I` with partial pivoting, kept as an elimination
    /// replay (pivot sequence + multipliers + banded U).
    pub fn shifted_lu(&self, e: T) -> BandLu<T> {
        BandLu::factor(self, e)
    }
}

/// Elimination-replay LU of `A - e I` for a symmetric band matrix `A`:
/// partial pivoting keeps the upper factor within bandwidth `2 hbw`.
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    dim: usize,
    hbw: usize,
    /// Row `i` of U over columns `i-hbw ..= i+2 hbw` (offset `col - i + hbw`).
    work: Vec<T>,
    pivots: Vec<usize>,
    multipliers: Vec<T>,
    /// A pivot fell below the safety floor and was replaced; the shift is an
    /// eigenvalue to machine precision.
    pub near_singular: bool,
}

impl<T: Scalar> BandLu<T> {
    fn factor(a: &SymBandMatrix<T>, e: T) -> Self {
        let n = a.dim();
        let b = a.half_bandwidth();
        let w = 3 * b + 1;
        let mut work = vec![T::zero(); n * w];
        for i in 0..n {
            // initial band: columns i..i+b from the symmetric storage plus
            // the mirrored columns i-b..i-1
            for t in 0..=b.min(n - 1 - i) {
                work[i * w + (t + b)] = a.get(i, i + t);
            }
            for t in 1..=b.min(i) {
                work[i * w + (b - t)] = a.get(i, i - t);
            }
            work[i * w + b] -= e;
        }
        let scale = a.scale().max(e.abs()).max(T::one());
        let floor = scale * T::default_epsilon() * lit::<T>(100.0);
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![T::zero(); n * b.max(1)];
        let mut near_singular = false;
        let off = |r: usize, col: usize| -> usize { r * w + (col + b - r) };
        for k in 0..n {
            let reach = (n - 1 - k).min(b);
            let mut p = k;
            let mut best = work[off(k, k)].abs();
            for r in (k + 1)..=(k + reach) {
                let v = work[off(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            if p != k {
                // active segments cover columns k ..= k+2b in both rows
                let span = (2 * b).min(n - 1 - k);
                for t in 0..=span {
                    work.swap(off(k, k + t), off(p, k + t));
                }
            }
            let mut pivot = work[off(k, k)];
            if pivot.abs() <= floor {
                pivot = if pivot >= T::zero() { floor } else { -floor };
                work[off(k, k)] = pivot;
                near_singular = true;
            }
            let span = (2 * b).min(n - 1 - k);
            for r in (k + 1)..=(k + reach) {
                let m = work[off(r, k)] / pivot;
                multipliers[k * b.max(1) + (r - k - 1)] = m;
                if m != T::zero() {
                    for t in 1..=span {
                        let u = work[off(k, k + t)];
                        if u != T::zero() {
                            work[off(r, k + t)] -= m * u;
                        }
                    }
                }
                work[off(r, k)] = T::zero();
            }
        }
        Self {
            dim: n,
            hbw: b,
            work,
            pivots,
            multipliers,
            near_singular,
        }
    }

    /// Solves `(A - e I) x = rhs` by replaying the elimination.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.dim);
        let n = self.dim;
        let b = self.hbw;
        let w = 3 * b + 1;
        let off = |r: usize, col: usize| -> usize { r * w + (col + b - r) };
        let mut y = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let reach = (n - 1 - k).min(b);
            for r in (k + 1)..=(k + reach) {
                let m = self.multipliers[k * b.max(1) + (r - k - 1)];
                if m != T::zero() {
                    let yk = y[k];
                    y[r] -= m * yk;
                }
            }
        }
        for i in (0..n).rev() {
            let span = (2 * b).min(n - 1 - i);
            let mut acc = y[i];
            for t in 1..=span {
                acc -= self.work[off(i, i + t)] * y[i + t];
            }
            y[i] = acc / self.work[off(i, i)];
        }
        y
    }
}

/// Spectral-gap estimate from shift-and-invert iteration.
#[derive(Clone, Copy, Debug)]
pub struct GapEstimate<T> {
    /// Rayleigh quotient of the converged vector: the eigenvalue nearest the
    /// shift, up to `residual`.
    pub lambda: T,
    /// `|lambda - shift|`.
    pub eta: T,
    /// `||A v - lambda v||` for the final unit vector: an eigenvalue of `A`
    /// lies within this of `lambda`.
    pub residual: T,
    pub converged: bool,
}

/// Inverse iteration with the band LU at the given shift, restarted with
/// Rayleigh-quotient shifts when a near-tie between eigenvalues stalls the
/// plain iteration. Deterministic in `seed`. When the shift sits on an
/// eigenvalue to machine precision the estimate degenerates to `eta ~ 0`
/// with a small residual, which is the correct verdict input.
pub fn nearest_eigenvalue<T: Scalar>(a: &SymBandMatrix<T>, shift: T, seed: u64) -> GapEstimate<T> {
    let n = a.dim();
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let bits = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        lit::<T>((bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
    };
    let mut v: Vec<T> = (0..n).map(|_| next()).collect();
    normalize(&mut v);
    let scale = a.scale().max(T::one());
    let tol = scale * T::default_epsilon() * lit::<T>(64.0);
    let mut best = GapEstimate {
        lambda: shift,
        eta: T::zero(),
        residual: scale,
        converged: false,
    };
    let mut lu = a.shifted_lu(shift);
    let mut lu_shift = shift;
    'outer: for _restart in 0..5 {
        for _ in 0..6 {
            let y = lu.solve(&v);
            let norm = l2_norm(&y);
            if !norm.is_finite() || norm == T::zero() {
                // solve blew up: the factorization shift is an eigenvalue
                // to working precision
                return GapEstimate {
                    lambda: lu_shift,
                    eta: (lu_shift - shift).abs(),
                    residual: tol,
                    converged: true,
                };
            }
            v = y;
            let inv = T::one() / norm;
            for x in v.iter_mut() {
                *x *= inv;
            }
            let av = a.matvec(&v);
            let lambda = dot(&v, &av);
            let mut res_sq = T::zero();
            for i in 0..n {
                let r = av[i] - lambda * v[i];
                res_sq += r * r;
            }
            let residual = res_sq.sqrt();
            if residual < best.residual {
                best = GapEstimate {
                    lambda,
                    eta: (lambda - shift).abs(),
                    residual,
                    converged: residual <= tol,
                };
            }
            if best.converged {
                break 'outer;
            }
        }
        // Rayleigh restart: cubic convergence even from a near-tie
        if (best.lambda - lu_shift).abs() > tol {
            lu_shift = best.lambda;
            lu = a.shifted_lu(lu_shift);
        }
    }
    certify_gap(a, shift, best)
}

/// Inverse iteration can land on a non-nearest eigenvalue when two sit at
/// comparable distance. An inertia count over the open window certifies the
/// estimate; if a nearer eigenvalue hides inside, bisection pins the true
/// gap. Counting failures leave the heuristic estimate marked unconverged.
fn certify_gap<T: Scalar>(a: &SymBandMatrix<T>, shift: T, est: GapEstimate<T>) -> GapEstimate<T> {
    let scale = a.scale().max(T::one());
    let slack = est
        .residual
        .max(est.eta * lit::<T>(1e-9))
        .max(scale * T::default_epsilon() * lit::<T>(8.0));
    let inner = est.eta - slack;
    if inner <= T::zero() {
        return est;
    }
    match a.count_in_window(shift - inner, shift + inner) {
        Ok(0) => GapEstimate {
            converged: true,
            ..est
        },
        Ok(_) => {
            // a nearer eigenvalue exists: bisect the window half-width
            let mut lo = T::zero();
            let mut hi = inner;
            for _ in 0..80 {
                if hi - lo <= hi * lit::<T>(1e-9) + scale * T::default_epsilon() {
                    break;
                }
                let mid = (lo + hi) * lit::<T>(0.5);
                match a.count_in_window(shift - mid, shift + mid) {
                    Ok(0) => lo = mid,
                    Ok(_) => hi = mid,
                    Err(_) => return est,
                }
            }
            let slop = hi - lo + scale * T::default_epsilon() * lit::<T>(128.0);
            let above = matches!(a.count_in_window(shift, shift + hi + slop), Ok(c) if c >= 1);
            GapEstimate {
                lambda: if above { shift + hi } else { shift - hi },
                eta: hi,
                residual: slop,
                converged: true,
            }
        }
        Err(_) => GapEstimate {
            converged: false,
            ..est
        },
    }
}

/// Gap estimate from a handful of plain inverse-iteration steps on an
/// existing factorization: no restarts, no certification. Verdict hot paths
/// use this for the diagnostic gap value while resonance flags come from
/// inertia counts.
///
/// `eta` here is the resolvent-norm bound `1 / ||(A - shift)^{-1} v||`
/// minimized over the iterates: it converges to the true gap from above and
/// never undershoots it beyond factorization roundoff, even when a near-tie
/// between eigenvalues on both sides of the shift keeps the Rayleigh
/// quotient from settling. `lambda` remains the best Rayleigh quotient.
pub fn estimate_gap_with<T: Scalar>(
    a: &SymBandMatrix<T>,
    lu: &BandLu<T>,
    shift: T,
    seed: u64,
) -> GapEstimate<T> {
    let n = a.dim();
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let bits = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        lit::<T>((bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
    };
    let mut v: Vec<T> = (0..n).map(|_| next()).collect();
    normalize(&mut v);
    let scale = a.scale().max(T::one());
    let tol = scale * T::default_epsilon() * lit::<T>(64.0);
    let mut best = GapEstimate {
        lambda: shift,
        eta: T::zero(),
        residual: scale,
        converged: false,
    };
    let mut eta_bound = scale;
    for _ in 0..6 {
        let y = lu.solve(&v);
        let norm = l2_norm(&y);
        if !norm.is_finite() || norm == T::zero() {
            return GapEstimate {
                lambda: shift,
                eta: T::zero(),
                residual: tol,
                converged: true,
            };
        }
        // v entered the solve as a unit vector, so ||y|| <= 1/gap and the
        // reciprocal bounds the gap from above
        eta_bound = eta_bound.min(T::one() / norm);
        v = y;
        let inv = T::one() / norm;
        for x in v.iter_mut() {
            *x *= inv;
        }
        let av = a.matvec(&v);
        let lambda = dot(&v, &av);
        let mut res_sq = T::zero();
        for i in 0..n {
            let r = av[i] - lambda * v[i];
            res_sq += r * r;
        }
        let residual = res_sq.sqrt();
        if residual < best.residual {
            best = GapEstimate {
                lambda,
                eta: eta_bound,
                residual,
                converged: residual <= tol,
            };
        }
        if best.converged {
            break;
        }
    }
    best.eta = eta_bound;
    best
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn l2_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let n = l2_norm(v);
    if n > T::zero() {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(dim: usize, hbw: usize, seed: u64) -> SymBandMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = SymBandMatrix::zeros(dim, hbw);
        for i in 0..dim {
            a.set(i, i, 4.0 * rng.gen::<f64>() - 2.0);
            for j in (i + 1)..=(i + hbw).min(dim - 1) {
                a.set(i, j, 2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        a
    }

    fn to_dense(a: &SymBandMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.dim(), a.dim(), |i, j| a.get(i, j))
    }

    #[test]
    fn storage_roundtrip_and_out_of_band_zero() {
        let mut a = SymBandMatrix::<f64>::zeros(5, 2);
        a.set(1, 3, 7.0);
        a.set(4, 4, -2.0);
        assert_eq!(a.get(3, 1), 7.0);
        assert_eq!(a.get(1, 3), 7.0);
        assert_eq!(a.get(4, 4), -2.0);
        assert_eq!(a.get(0, 4), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        for (dim, hbw, seed) in [(7usize, 1usize, 1u64), (20, 3, 2), (15, 14, 3)] {
            let a = random_band(dim, hbw, seed);
            let d = to_dense(&a);
            let x: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.7).sin()).collect();
            let y = a.matvec(&x);
            let yd = &d * nalgebra::DVector::from_vec(x.clone());
            for i in 0..dim {
                approx::assert_relative_eq!(y[i], yd[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inertia_counts_match_dense_eigenvalues() {
        for (dim, hbw, seed) in [
            (12usize, 1usize, 10u64),
            (30, 3, 11),
            (25, 5, 12),
            (40, 2, 13),
            (10, 9, 14),
        ] {
            let a = random_band(dim, hbw, seed);
            let eigs = to_dense(&a).symmetric_eigenvalues();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..25 {
                let s = 6.0 * rng.gen::<f64>() - 3.0;
                let want = eigs.iter().filter(|l| **l < s).count();
                assert_eq!(a.count_below(s).unwrap(), want, "dim {dim} hbw {hbw} shift {s}");
            }
            // windows, including ones hugging eigenvalues
            let mut sorted: Vec<f64> = eigs.iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            for k in 0..sorted.len().min(5) {
                let c = a
                    .count_in_window(sorted[k] - 1e-9, sorted[k] + 1e-9)
                    .unwrap();
                assert!(c >= 1, "window around eigenvalue {k} missed it");
            }
            let below_all = a.count_below(sorted[0] - 1.0).unwrap();
            assert_eq!(below_all, 0);
            let above_all = a.count_below(sorted[dim - 1] + 1.0).unwrap();
            assert_eq!(above_all, dim);
        }
    }

    #[test]
    fn inertia_survives_shift_on_eigenvalue() {
        // diagonal matrix: shifts exactly on eigenvalues trigger the jitter
        let mut a = SymBandMatrix::<f64>::zeros(6, 1);
        for (i, v) in [1.0, 2.0, 2.0, 3.0, 5.0, 8.0].iter().enumerate() {
            a.set(i, i, *v);
        }
        let c = a.count_below(2.0).unwrap();
        assert!(c == 1 || c == 3, "jittered count must land on a side, got {c}");
        assert_eq!(a.count_in_window(1.5, 2.5).unwrap(), 2);
    }

    #[test]
    fn band_lu_solves_match_dense() {
        for (dim, hbw, seed) in [
            (10usize, 1usize, 21u64),
            (30, 4, 22),
            (25, 7, 23),
            (12, 11, 24),
            (50, 2, 25),
        ] {
            let a = random_band(dim, hbw, seed);
            let d = to_dense(&a);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            for _ in 0..5 {
                let e = 2.0 * rng.gen::<f64>() - 1.0;
                let rhs: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
                let lu = a.shifted_lu(e);
                assert!(!lu.near_singular);
                let x = lu.solve(&rhs);
                let shifted = &d - DMatrix::identity(dim, dim) * e;
                let xd = shifted
                    .lu()
                    .solve(&nalgebra::DVector::from_vec(rhs.clone()))
                    .unwrap();
                for i in 0..dim {
                    approx::assert_relative_eq!(x[i], xd[i], epsilon = 1e-8, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn band_lu_flags_singular_shift() {
        let mut a = SymBandMatrix::<f64>::zeros(4, 0);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            a.set(i, i, *v);
        }
        let lu = a.shifted_lu(3.0);
        assert!(lu.near_singular);
    }

    #[test]
    fn gap_estimates_match_dense_spectra() {
        for (dim, hbw, seed) in [(20usize, 2usize, 31u64), (35, 5, 32), (15, 3, 33)] {
            let a = random_band(dim, hbw, seed);
            let eigs = to_dense(&a).symmetric_eigenvalues();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in 0..8 {
                let shift = 5.0 * rng.gen::<f64>() - 2.5;
                let true_eta = eigs.iter().map(|l| (l - shift).abs()).fold(f64::MAX, f64::min);
                let est = nearest_eigenvalue(&a, shift, 1000 + t);
                assert!(est.converged, "no convergence at shift {shift}");
                // the Rayleigh certificate places an eigenvalue within residual
                let nearest_to_lambda = eigs
                    .iter()
                    .map(|l| (l - est.lambda).abs())
                    .fold(f64::MAX, f64::min);
                assert!(nearest_to_lambda <= est.residual.max(1e-10));
                approx::assert_relative_eq!(est.eta, true_eta, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn gap_estimate_degenerates_on_exact_eigenvalue() {
        let mut a = SymBandMatrix::<f64>::zeros(5, 1);
        for i in 0..5 {
            a.set(i, i, i as f64);
        }
        a.set(0, 1, 0.5);
        let eigs = to_dense(&a).symmetric_eigenvalues();
        let target = eigs[2];
        let est = nearest_eigenvalue(&a, target, 9);
        assert!(est.eta <= 1e-9, "eta {} should collapse", est.eta);
    }
}
