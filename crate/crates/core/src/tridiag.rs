//! Symmetric tridiagonal eigenpairs in an energy window: Sturm-count
//! bisection for the values, inverse iteration for the vectors.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

/// Eigenpairs sorted by value; `vectors[k]` is unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymTridiagonal {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() || e.len() + 1 != d.len() {
            return Err(Error::param("e", "off-diagonal must be one shorter than the diagonal"));
        }
        Ok(SymTridiagonal { d, e })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.e[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.e[i].abs() } else { 0.0 };
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    fn scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `x` (Sylvester inertia of `T - x`).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE * self.scale().max(1.0);
        let mut count = 0;
        let mut q = self.d[0] - x;
        for i in 0..self.len() {
            if i > 0 {
                q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / q;
            }
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalues in `[lo, hi)`, each to absolute accuracy ~`4 ε ‖T‖`.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let tol = 4.0 * f64::EPSILON * self.scale();
        let mut out = Vec::new();
        let (clo, chi) = (self.count_below(lo), self.count_below(hi));
        self.isolate(lo, clo, hi, chi, tol, &mut out);
        out
    }

    fn isolate(&self, lo: f64, clo: usize, hi: f64, chi: usize, tol: f64, out: &mut Vec<f64>) {
        if chi <= clo {
            return;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            for _ in clo..chi {
                out.push(mid);
            }
            return;
        }
        let cmid = self.count_below(mid);
        self.isolate(lo, clo, mid, cmid, tol, out);
        self.isolate(mid, cmid, hi, chi, tol, out);
    }

    /// Eigenpairs with values in `[lo, hi)`.
    ///
    /// Vectors of eigenvalues closer than `1e-3 ‖T‖` are re-orthogonalized
    /// against each other during inverse iteration.
    pub fn eigensystem_in(&self, lo: f64, hi: f64) -> EigenSystem {
        let values = self.eigenvalues_in(lo, hi);
        let n = self.len();
        let cluster_gap = 1e-3 * self.scale();
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        for (k, &lam) in values.iter().enumerate() {
            if k > 0 && lam - values[k - 1] > cluster_gap {
                cluster_start = k;
            }
            // nudge the shift off the exact eigenvalue so the factorization stays finite
            let shift = lam + 2.0 * f64::EPSILON * self.scale() * if k % 2 == 0 { 1.0 } else { -1.0 };
            let lu = TridiagLu::factor(&self.d, &self.e, shift);
            let mut v = start_vector(n, k);
            for _ in 0..3 {
                lu.solve(&mut v);
                for w in &vectors[cluster_start..k] {
                    let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(w).for_each(|(a, b)| *a -= dot * b);
                }
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
            }
            // fix the sign: largest entry positive
            let imax = (0..n).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap_or(0);
            if v[imax] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            vectors.push(v);
        }
        EigenSystem { values, vectors }
    }

    /// `T v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.d[i] * v[i];
                if i > 0 {
                    s += self.e[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.e[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Deterministic, non-degenerate start vector.
fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    let mut state = 0x2545_F491_4F6C_DD1Du64 ^ (salt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// LU with partial pivoting of `T - λ`; `U` has two superdiagonals.
struct TridiagLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(d: &[f64], e: &[f64], lam: f64) -> Self {
        let n = d.len();
        let tiny = f64::EPSILON * d.iter().chain(e).fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let mut f = TridiagLu {
            u0: alloc::vec![0.0; n],
            u1: alloc::vec![0.0; n],
            u2: alloc::vec![0.0; n],
            mult: alloc::vec![0.0; n],
            swapped: alloc::vec![false; n],
        };
        let mut a = d[0] - lam;
        let mut b = if n > 1 { e[0] } else { 0.0 };
        for k in 0..n.saturating_sub(1) {
            let sub = e[k];
            let nd = d[k + 1] - lam;
            let ne = if k + 2 < n { e[k + 1] } else { 0.0 };
            if sub.abs() > a.abs() {
                f.swapped[k] = true;
                f.u0[k] = sub;
                f.u1[k] = nd;
                f.u2[k] = ne;
                let m = a / sub;
                f.mult[k] = m;
                a = b - m * nd;
                b = -m * ne;
            } else {
                if a == 0.0 {
                    a = tiny;
                }
                f.u0[k] = a;
                f.u1[k] = b;
                f.u2[k] = 0.0;
                let m = sub / a;
                f.mult[k] = m;
                a = nd - m * b;
                b = ne;
            }
        }
        f.u0[n - 1] = if a == 0.0 { tiny } else { a };
        f
    }

    fn solve(&self, y: &mut [f64]) {
        let n = y.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                y.swap(k, k + 1);
            }
            y[k + 1] -= self.mult[k] * y[k];
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            if k + 1 < n {
                s -= self.u1[k] * y[k + 1];
            }
            if k + 2 < n {
                s -= self.u2[k] * y[k + 2];
            }
            y[k] = s / self.u0[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(alloc::vec![2.0; n], alloc::vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        let sys = t.eigensystem_in(-1.0, 5.0);
        assert_eq!(sys.values.len(), n);
        for (k, &lam) in sys.values.iter().enumerate() {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((lam - want).abs() < 1e-13);
        }
        for (k, v) in sys.vectors.iter().enumerate() {
            let tv = t.apply(v);
            let res: f64 = tv.iter().zip(v).map(|(a, b)| (a - sys.values[k] * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-12);
            for w in &sys.vectors[k + 1..] {
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn window_counts() {
        let t = laplacian(20);
        let inside = t.eigenvalues_in(1.0, 3.0);
        assert_eq!(inside.len(), t.count_below(3.0) - t.count_below(1.0));
        assert!(inside.iter().all(|&x| (1.0..3.0).contains(&x)));
        assert!(t.eigenvalues_in(5.0, 6.0).is_empty());
    }

    #[test]
    fn one_by_one_and_validation() {
        let t = SymTridiagonal::new(alloc::vec![3.0], alloc::vec![]).unwrap();
        let sys = t.eigensystem_in(0.0, 4.0);
        assert_eq!(sys.values.len(), 1);
        assert!((sys.values[0] - 3.0).abs() < 1e-14);
        assert!((sys.vectors[0][0] - 1.0).abs() < 1e-14);
        assert!(SymTridiagonal::new(alloc::vec![1.0, 2.0], alloc::vec![]).is_err());
    }

    #[test]
    fn zero_pivots_handled() {
        // d = 0 forces a pivot swap at every step
        let t = SymTridiagonal::new(alloc::vec![0.0; 6], alloc::vec![1.0; 5]).unwrap();
        let sys = t.eigensystem_in(-3.0, 3.0);
        assert_eq!(sys.values.len(), 6);
        for (k, v) in sys.vectors.iter().enumerate() {
            let tv = t.apply(v);
            let res: f64 = tv.iter().zip(v).map(|(a, b)| (a - sys.values[k] * b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-12);
        }
    }
}
