//! Timing sweep for the spectral backends at the cube sizes the probes use.

use msalab::band::{nearest_eigenvalue, SymBandMatrix};
use nalgebra::DMatrix;
use std::time::Instant;

fn random_sym(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut s = 12345u64;
    let mut next = || {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        (s.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for i in 0..n {
        m[(i, i)] = 4.0 + next();
        if i + 1 < n {
            m[(i, i + 1)] = -1.0 + 0.1 * next();
            m[(i + 1, i)] = m[(i, i + 1)];
        }
        if i + 45 < n {
            m[(i, i + 45)] = -1.0;
            m[(i + 45, i)] = -1.0;
        }
    }
    m
}

fn random_band(n: usize, b: usize) -> SymBandMatrix<f64> {
    let mut a = SymBandMatrix::zeros(n, b);
    let mut s = 777u64;
    let mut next = || {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        (s.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for i in 0..n {
        a.set(i, i, 4.0 + 2.0 * next());
        if i + 1 < n {
            a.set(i, i + 1, -1.0);
        }
        if i + b < n && b > 1 {
            a.set(i, i + b, -1.0);
        }
    }
    a
}

fn main() {
    for n in [289usize, 441, 1025, 2025] {
        let m = random_sym(n);
        let t = Instant::now();
        let se = m.clone().symmetric_eigen();
        let full = t.elapsed();
        let t = Instant::now();
        let vals = m.clone().symmetric_eigenvalues();
        let values_only = t.elapsed();
        println!(
            "dense n={n}: eigen+vectors {:?}, values-only {:?} (first {:.3}, {:.3})",
            full,
            values_only,
            se.eigenvalues[0],
            vals[0]
        );
    }
    for (n, b) in [(289usize, 17usize), (2025, 45), (2025, 91)] {
        let a = random_band(n, b);
        let t = Instant::now();
        let mut acc = 0usize;
        for k in 0..10 {
            acc += a.count_below(3.0 + 0.01 * k as f64).unwrap();
        }
        let count10 = t.elapsed();
        let t = Instant::now();
        let lu = a.shifted_lu(3.0);
        let rhs = vec![1.0; n];
        let x = lu.solve(&rhs);
        let lu_once = t.elapsed();
        let t = Instant::now();
        let gap = nearest_eigenvalue(&a, 3.0, 42);
        let invit = t.elapsed();
        println!(
            "band n={n} b={b}: 10 inertia counts {:?}, LU+solve {:?}, gap {:?} (acc {acc}, x0 {:.3e}, eta {:.3e})",
            count10, lu_once, invit, x[0], gap.eta
        );
    }
}
