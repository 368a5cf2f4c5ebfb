//! Exact transfer matrices of `-φ'' + (λV_ω - E)φ = 0` on `(φ, φ')` data.
//!
//! The potential is piecewise constant, so every unit cell is a product of
//! closed-form constant-coefficient propagators.

use alloc::vec::Vec;

// unused whenever std float methods are in scope (tests, std-enabled dev builds)
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{DisorderRealization, Piece};

/// Threshold on `|κ²ℓ²|` below which the truncated Taylor branch is used.
const SERIES_THRESHOLD: f64 = 1e-8;

/// Real 2×2 matrix `[[a, b], [c, d]]` acting on column vectors `(φ, φ')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        TransferMatrix { a, b, c, d }
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.c, self.d]]
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Inverse, assuming unit determinant.
    pub fn unimodular_inverse(&self) -> TransferMatrix {
        TransferMatrix { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// Operator 2-norm (largest singular value).
    pub fn norm(&self) -> f64 {
        let p = (self.a + self.d).hypot(self.b - self.c);
        let m = (self.a - self.d).hypot(self.b + self.c);
        0.5 * (p + m)
    }

    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        (self.a - other.a)
            .abs()
            .max((self.b - other.b).abs())
            .max((self.c - other.c).abs())
            .max((self.d - other.d).abs())
    }
}

/// Propagator across `length` of constant potential `q` at energy `E`.
pub fn constant_step(q: f64, energy: f64, length: f64) -> Result<TransferMatrix> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::param("length", alloc::format!("must be positive and finite, got {length}")));
    }
    Ok(step(energy - q, length))
}

pub(crate) fn step(kappa2: f64, len: f64) -> TransferMatrix {
    let (c, sc) = cos_sinc(kappa2 * len * len);
    TransferMatrix { a: c, b: len * sc, c: -kappa2 * len * sc, d: c }
}

/// `(cos √z, sin √z / √z)` continued analytically to `z < 0`.
pub(crate) fn cos_sinc(z: f64) -> (f64, f64) {
    if z.abs() < SERIES_THRESHOLD {
        (1.0 - z / 2.0 + z * z / 24.0, 1.0 - z / 6.0 + z * z / 120.0)
    } else if z > 0.0 {
        let s = z.sqrt();
        (s.cos(), s.sin() / s)
    } else {
        let s = (-z).sqrt();
        (s.cosh(), s.sinh() / s)
    }
}

/// Per-energy cache of the unit-cell layout. Zero-height pieces do not
/// depend on the cell, so their propagators are computed once.
#[derive(Debug, Clone)]
pub struct CellStepper {
    energy: f64,
    pieces: Vec<(Piece, Option<TransferMatrix>)>,
}

impl CellStepper {
    pub fn new(pieces: &[Piece], energy: f64) -> Self {
        let pieces =
            pieces.iter().map(|p| (*p, if p.height == 0.0 { Some(step(energy, p.len)) } else { None })).collect();
        CellStepper { energy, pieces }
    }

    pub fn for_realization(r: &DisorderRealization, energy: f64) -> Self {
        Self::new(r.config().single_site.pieces(), energy)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Transfer matrix of a cell whose bump carries amplitude `amp = λ a_n ω_n`.
    pub fn cell(&self, amp: f64) -> TransferMatrix {
        self.pieces.iter().fold(TransferMatrix::IDENTITY, |acc, (p, cached)| {
            let m = match cached {
                Some(m) => *m,
                None => step(self.energy - amp * p.height, p.len),
            };
            m.mul(&acc)
        })
    }

    /// Transfer matrix across `[lo, hi] ⊂ [0, 1]` of a cell.
    pub fn partial(&self, amp: f64, lo: f64, hi: f64) -> TransferMatrix {
        if lo <= 0.0 && hi >= 1.0 {
            return self.cell(amp);
        }
        self.pieces.iter().fold(TransferMatrix::IDENTITY, |acc, (p, _)| {
            let a = p.start.max(lo);
            let b = (p.start + p.len).min(hi);
            if b > a {
                step(self.energy - amp * p.height, b - a).mul(&acc)
            } else {
                acc
            }
        })
    }
}

/// `T_{ω,n}(E)`, the propagator from `n` to `n + 1`.
pub fn unit_cell_transfer(r: &DisorderRealization, n: i64, energy: f64) -> Result<TransferMatrix> {
    let amp = r.amplitude(n)?;
    Ok(CellStepper::for_realization(r, energy).cell(amp))
}

/// Propagator `T(y, x; E)` between arbitrary real points (inverse when `y < x`).
pub fn transfer_between(r: &DisorderRealization, x: f64, y: f64, energy: f64) -> Result<TransferMatrix> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::param("x", "endpoints must be finite"));
    }
    if y < x {
        return transfer_between(r, y, x, energy).map(|m| m.unimodular_inverse());
    }
    let first = x.floor() as i64;
    let last = if y.fract() == 0.0 { y as i64 - 1 } else { y.floor() as i64 };
    if y == x {
        return Ok(TransferMatrix::IDENTITY);
    }
    r.check_cells(first, last.max(first))?;
    let stepper = CellStepper::for_realization(r, energy);
    let mut acc = TransferMatrix::IDENTITY;
    for n in first..=last {
        let lo = x - n as f64;
        let hi = y - n as f64;
        acc = stepper.partial(r.amplitude_unchecked(n), lo, hi).mul(&acc);
    }
    Ok(acc)
}

/// Overflow-safe `T(n, m; E) ψ₀`: unit direction plus accumulated log-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub direction: [f64; 2],
    pub log_norm: f64,
    /// Per-cell log increments, in the order cells were applied.
    pub trace: Option<Vec<f64>>,
}

fn unit(v: [f64; 2]) -> Result<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::ZeroVector);
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::param("psi0", alloc::format!("must have unit norm, got {n}")));
    }
    Ok([v[0] / n, v[1] / n])
}

/// Applies `T(n, m; E)` to `psi0`, renormalizing after each cell.
pub fn propagate(r: &DisorderRealization, m: i64, n: i64, energy: f64, psi0: [f64; 2]) -> Result<PropagationResult> {
    propagate_impl(r, m, n, energy, psi0, false)
}

/// As [`propagate`], also returning the per-cell log increments.
pub fn propagate_traced(
    r: &DisorderRealization,
    m: i64,
    n: i64,
    energy: f64,
    psi0: [f64; 2],
) -> Result<PropagationResult> {
    propagate_impl(r, m, n, energy, psi0, true)
}

fn propagate_impl(
    r: &DisorderRealization,
    m: i64,
    n: i64,
    energy: f64,
    psi0: [f64; 2],
    traced: bool,
) -> Result<PropagationResult> {
    let mut v = unit(psi0)?;
    if m != n {
        r.check_cells(m.min(n), m.max(n) - 1)?;
    }
    let stepper = CellStepper::for_realization(r, energy);
    let mut log_norm = 0.0;
    let mut trace = traced.then(|| Vec::with_capacity((m - n).unsigned_abs() as usize));
    let mut apply = |t: TransferMatrix, v: &mut [f64; 2]| {
        let w = t.apply(*v);
        let s = w[0].hypot(w[1]);
        *v = [w[0] / s, w[1] / s];
        let inc = s.ln();
        log_norm += inc;
        if let Some(tr) = trace.as_mut() {
            tr.push(inc);
        }
    };
    if n > m {
        for j in m..n {
            apply(stepper.cell(r.amplitude_unchecked(j)), &mut v);
        }
    } else {
        for j in (n..m).rev() {
            apply(stepper.cell(r.amplitude_unchecked(j)).unimodular_inverse(), &mut v);
        }
    }
    Ok(PropagationResult { direction: v, log_norm, trace })
}

/// `M = exp(½ ∫_a^b |1 + λV_ω - E|)`, so that `M⁻¹ ≤ ‖T(x, y; E)‖ ≤ M` on `[a, b]`.
pub fn apriori_bound(r: &DisorderRealization, a: i64, b: i64, energy: f64) -> Result<f64> {
    if b < a {
        return Err(Error::param("b", "must satisfy a <= b"));
    }
    if a == b {
        return Ok(1.0);
    }
    r.check_cells(a, b - 1)?;
    let integral: f64 = (a..b).map(|n| r.cell_integral_of(n, 0.0, 1.0, |v| (1.0 + v - energy).abs())).sum();
    Ok((0.5 * integral).exp())
}
