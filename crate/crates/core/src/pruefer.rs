//! Modified Prüfer coordinates and the angle/radius flow.
//!
//! Convention: `φ = R sin θ`, `φ' = k R cos θ` with `k = √E`. With it the
//! flow reads
//!
//! ```text
//! θ' = k - (V/k) sin²θ,        (log R)' = (V / 2k) sin 2θ,
//! ```
//!
//! and a free solution has `θ(x) = θ₀ + kx`. A zero of `φ` is a crossing of
//! `θ` through `πℤ`, where `θ' = k > 0`.

use core::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{envelope_value, single_site_cumulative_fourier, single_site_fourier, DisorderRealization};
use crate::transfer::CellStepper;

/// `(log R, θ, k)`; `θ` is a continuous lift, not reduced mod 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrueferState {
    pub log_r: f64,
    pub theta: f64,
    pub k: f64,
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::param("k", alloc::format!("must be positive and finite, got {k}")))
    }
}

/// Prüfer coordinates of `(φ, φ')`; with a hint, `θ` is the lift nearest to it.
pub fn to_pruefer(phi: f64, dphi: f64, k: f64, theta_hint: Option<f64>) -> Result<PrueferState> {
    check_k(k)?;
    if phi == 0.0 && dphi == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = dphi / k;
    let log_r = phi.abs().hypot(s.abs()).ln();
    let mut theta = phi.atan2(s);
    if let Some(h) = theta_hint {
        theta += TAU * ((h - theta) / TAU).round();
    }
    Ok(PrueferState { log_r, theta, k })
}

/// `(φ, φ')` from Prüfer coordinates.
pub fn from_pruefer(state: &PrueferState) -> (f64, f64) {
    let r = state.log_r.exp();
    (r * state.theta.sin(), state.k * r * state.theta.cos())
}

/// `floor(θ_end/π) - floor(θ_start/π)`.
pub fn winding_count(theta_start: f64, theta_end: f64) -> i64 {
    (theta_end / PI).floor() as i64 - (theta_start / PI).floor() as i64
}

fn rhs(k: f64, v: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (k - v / k * s * s, v / k * s * c)
}

fn rk4(k: f64, v: f64, theta: f64, h: f64) -> (f64, f64) {
    let (t1, r1) = rhs(k, v, theta);
    let (t2, r2) = rhs(k, v, theta + 0.5 * h * t1);
    let (t3, r3) = rhs(k, v, theta + 0.5 * h * t2);
    let (t4, r4) = rhs(k, v, theta + h * t3);
    (h / 6.0 * (t1 + 2.0 * t2 + 2.0 * t3 + t4), h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4))
}

/// Local error tolerance per step for the step-doubling controller.
const STEP_TOL: f64 = 1e-13;

/// Adaptive RK4 across a stretch where `V` is the constant `v`.
fn flow_constant(k: f64, v: f64, mut theta: f64, mut log_r: f64, len: f64) -> (f64, f64) {
    // |θ'| ≤ k + |v|/k bounds the angle advance; keep each step under π/4
    let h_max = 0.5 * FRAC_PI_2 / (k + v.abs() / k);
    let mut h = h_max.min(len);
    let mut done = 0.0;
    while len - done > 1e-15 * len.max(1.0) {
        h = h.min(len - done);
        let (dt, dr) = rk4(k, v, theta, h);
        let (dt1, dr1) = rk4(k, v, theta, 0.5 * h);
        let (dt2, dr2) = rk4(k, v, theta + dt1, 0.5 * h);
        let err = ((dt1 + dt2) - dt).abs().max(((dr1 + dr2) - dr).abs());
        if err <= STEP_TOL || h < 1e-10 {
            // Richardson: the two half steps are 16x more accurate
            theta += dt1 + dt2 + ((dt1 + dt2) - dt) / 15.0;
            log_r += dr1 + dr2 + ((dr1 + dr2) - dr) / 15.0;
            done += h;
            let grow = if err > 0.0 { 0.9 * (STEP_TOL / err).powf(0.2) } else { 2.0 };
            h = (h * grow.clamp(0.2, 2.0)).min(h_max);
        } else {
            h *= (0.9 * (STEP_TOL / err).powf(0.2)).clamp(0.1, 0.5);
        }
    }
    (theta, log_r)
}

fn check_energy(state: &PrueferState, energy: f64) -> Result<()> {
    if !(energy > 0.0) {
        return Err(Error::param("energy", "the Prüfer flow needs E > 0"));
    }
    if (state.k - energy.sqrt()).abs() > 1e-12 * state.k {
        return Err(Error::param("state.k", "must equal sqrt(E)"));
    }
    Ok(())
}

/// Integrates the flow on `[x0, x1]` (`x0 <= x1`), splitting at every
/// discontinuity of the potential.
pub fn flow_interval(
    r: &DisorderRealization,
    x0: f64,
    x1: f64,
    state: PrueferState,
    energy: f64,
) -> Result<PrueferState> {
    check_energy(&state, energy)?;
    if !(x0.is_finite() && x1.is_finite() && x0 <= x1) {
        return Err(Error::param("x1", "need finite x0 <= x1"));
    }
    if x0 == x1 {
        return Ok(state);
    }
    let first = x0.floor() as i64;
    let last = if x1.fract() == 0.0 { x1 as i64 - 1 } else { x1.floor() as i64 };
    r.check_cells(first, last.max(first))?;
    let (mut theta, mut log_r) = (state.theta, state.log_r);
    for n in first..=last {
        let amp = r.amplitude_unchecked(n);
        for p in r.config().single_site.pieces() {
            let a = (p.start + n as f64).max(x0);
            let b = (p.start + p.len + n as f64).min(x1);
            if b > a {
                (theta, log_r) = flow_constant(state.k, amp * p.height, theta, log_r, b - a);
            }
        }
    }
    Ok(PrueferState { log_r, theta, k: state.k })
}

/// Flow across the unit cell `[n, n + 1]`.
pub fn flow_cell(r: &DisorderRealization, n: i64, state: PrueferState, energy: f64) -> Result<PrueferState> {
    r.check_cells(n, n)?;
    flow_interval(r, n as f64, n as f64 + 1.0, state, energy)
}

/// Cell-by-cell decomposition of `log R(n) - log R(m)` into the three
/// oscillatory sums, the deterministic drift sum, and a residual.
///
/// With `a = λ a_j ω_j`, `û = ∫u e^{2iky}`, `Ŵ = ∫u(y)(∫_0^y u) e^{2iky} dy`:
///
/// ```text
/// term1 = Σ a/(2k)        Im(e^{2iθ_j} û)
/// term2 = -Σ a²/(2k²)     Re(e^{2iθ_j} Ŵ)
/// term3 = Σ a²/(8k²) |û|² cos 4(θ_j - ν),   ν = -arg(û)/2
/// term4 = Σ a²/(8k²) |û|²
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleDecomposition {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub term4: f64,
    pub residual: f64,
    /// `E[term4] = λ²|û|²/(8k²) Σ_j a_j²`.
    pub drift_prediction: f64,
    pub log_r_increment: f64,
}

/// Exact Prüfer angles at the cell boundaries `m..=n`, from transfer matrices.
///
/// Lifts are taken piece by piece with hint `θ + κ·len`, which stays exact
/// while a piece's angle deviates from the free advance by less than π.
pub fn exact_angles(
    r: &DisorderRealization,
    m: i64,
    n: i64,
    energy: f64,
    start: PrueferState,
) -> Result<alloc::vec::Vec<PrueferState>> {
    check_energy(&start, energy)?;
    if n < m {
        return Err(Error::param("n", "need m <= n"));
    }
    if n > m {
        r.check_cells(m, n - 1)?;
    }
    let k = start.k;
    let stepper = CellStepper::for_realization(r, energy);
    let (mut phi, mut dphi) = from_pruefer(&PrueferState { log_r: 0.0, ..start });
    let mut log_scale = start.log_r;
    let mut theta = start.theta;
    let mut out = alloc::vec::Vec::with_capacity((n - m + 1) as usize);
    out.push(start);
    for j in m..n {
        let amp = r.amplitude_unchecked(j);
        for p in r.config().single_site.pieces() {
            let t = stepper.partial(amp, p.start, p.start + p.len);
            let w = t.apply([phi, dphi]);
            let s = to_pruefer(w[0], w[1], k, Some(theta + k * p.len))?;
            theta = s.theta;
            log_scale += s.log_r;
            let back = from_pruefer(&PrueferState { log_r: 0.0, ..s });
            phi = back.0;
            dphi = back.1;
        }
        out.push(PrueferState { log_r: log_scale, theta, k });
    }
    Ok(out)
}

/// Decomposes `log R(n) - log R(m)` starting from angle `theta0` at `x = m`.
pub fn martingale_decompose(
    r: &DisorderRealization,
    m: i64,
    n: i64,
    energy: f64,
    theta0: f64,
) -> Result<MartingaleDecomposition> {
    if m < 1 {
        return Err(Error::param("m", "the decomposition lives on cells j >= 1"));
    }
    if n <= m {
        return Err(Error::param("n", "need m < n"));
    }
    if !(energy > 0.0) {
        return Err(Error::param("energy", "need E > 0"));
    }
    let k = energy.sqrt();
    let angles = exact_angles(r, m, n, energy, PrueferState { log_r: 0.0, theta: theta0, k })?;
    let u = &r.config().single_site;
    let uh = single_site_fourier(u, 2.0 * k);
    let wh = single_site_cumulative_fourier(u, 2.0 * k);
    let u2 = uh.norm_sqr();
    let nu = -0.5 * uh.arg();
    let lambda = r.config().lambda;

    let mut d = MartingaleDecomposition {
        term1: 0.0,
        term2: 0.0,
        term3: 0.0,
        term4: 0.0,
        residual: 0.0,
        drift_prediction: 0.0,
        log_r_increment: angles[angles.len() - 1].log_r - angles[0].log_r,
    };
    for (i, j) in (m..n).enumerate() {
        let a = r.amplitude_unchecked(j);
        let th = angles[i].theta;
        let e2 = Complex64::from_polar(1.0, 2.0 * th);
        d.term1 += a / (2.0 * k) * (e2 * uh).im;
        d.term2 -= a * a / (2.0 * k * k) * (e2 * wh).re;
        d.term3 += a * a / (8.0 * k * k) * u2 * (4.0 * (th - nu)).cos();
        d.term4 += a * a / (8.0 * k * k) * u2;
        let env = lambda * envelope_value(r.config(), j);
        d.drift_prediction += env * env / (8.0 * k * k) * u2;
    }
    d.residual = d.log_r_increment - d.term1 - d.term2 - d.term3 - d.term4;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_realization, CellWindow, ModelConfig};
    use crate::transfer::{propagate, transfer_between};
    use approx::assert_relative_eq;

    fn zero(cells: usize) -> DisorderRealization {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        DisorderRealization::from_values(&c, 0, alloc::vec![0.0; cells]).unwrap()
    }

    #[test]
    fn to_pruefer_examples() {
        let k = 1.7;
        let s = to_pruefer(0.0, k, k, None).unwrap();
        assert_relative_eq!(s.log_r, 0.0, epsilon = 1e-15);
        assert_relative_eq!(s.theta, 0.0);
        let s = to_pruefer(1.0, 0.0, k, None).unwrap();
        assert_relative_eq!(s.log_r, 0.0);
        assert_relative_eq!(s.theta, FRAC_PI_2);
        assert_eq!(to_pruefer(0.0, 0.0, k, None), Err(Error::ZeroVector));
        assert!(to_pruefer(1.0, 0.0, 0.0, None).is_err());
    }

    #[test]
    fn hint_selects_branch() {
        let s = to_pruefer(0.3, 0.4, 2.0, Some(20.0)).unwrap();
        assert!((s.theta - 20.0).abs() <= PI);
        let base = to_pruefer(0.3, 0.4, 2.0, None).unwrap();
        let turns = (s.theta - base.theta) / TAU;
        assert_relative_eq!(turns, turns.round(), epsilon = 1e-12);
    }

    #[test]
    fn round_trip() {
        for &(phi, dphi, k) in &[(0.3, -2.0, 0.7), (-5.0, 1e-3, 3.0), (1e-8, 1e-8, 1.0)] {
            let s = to_pruefer(phi, dphi, k, None).unwrap();
            let (p, d) = from_pruefer(&s);
            assert_relative_eq!(p, phi, max_relative = 1e-12);
            assert_relative_eq!(d, dphi, max_relative = 1e-12);
        }
    }

    #[test]
    fn winding_examples() {
        assert_eq!(winding_count(0.1, 0.2), 0);
        assert_eq!(winding_count(0.1, PI + 0.1), 1);
        assert_eq!(winding_count(-0.1, TAU), 3);
    }

    #[test]
    fn free_flow_is_linear() {
        let r = zero(3);
        let k = 1.3;
        let s = PrueferState { log_r: 0.25, theta: 0.4, k };
        let out = flow_cell(&r, 1, s, k * k).unwrap();
        assert_relative_eq!(out.theta, 0.4 + k, epsilon = 1e-12);
        assert_relative_eq!(out.log_r, 0.25, epsilon = 1e-14);
        assert!(flow_cell(&r, 1, s, 2.0).is_err());
        assert!(flow_cell(&r, 3, s, k * k).is_err());
    }

    #[test]
    fn flow_matches_transfer() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(0, 20).unwrap(), 4).unwrap();
        let e = 0.8;
        let k = e.sqrt();
        let s0 = PrueferState { log_r: 0.0, theta: 0.3, k };
        for n in 0..20 {
            let out = flow_cell(&r, n, s0, e).unwrap();
            let (p, d) = from_pruefer(&s0);
            let w = transfer_between(&r, n as f64, n as f64 + 1.0, e).unwrap().apply([p, d]);
            let exact = to_pruefer(w[0], w[1], k, Some(out.theta)).unwrap();
            assert!((out.log_r - exact.log_r).abs() < 1e-9, "cell {n}");
            assert!((out.theta - exact.theta).abs() < 1e-9, "cell {n}");
        }
    }

    #[test]
    fn half_cells_compose() {
        let c = ModelConfig::standard(0.25, 2.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(0, 5).unwrap(), 9).unwrap();
        let s0 = PrueferState { log_r: 0.1, theta: -1.0, k: 1.5 };
        let whole = flow_cell(&r, 2, s0, 2.25).unwrap();
        let half = flow_interval(&r, 2.0, 2.5, s0, 2.25).unwrap();
        let both = flow_interval(&r, 2.5, 3.0, half, 2.25).unwrap();
        assert!((whole.theta - both.theta).abs() < 1e-9);
        assert!((whole.log_r - both.log_r).abs() < 1e-9);
    }

    #[test]
    fn exact_angles_agree_with_propagate() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(0, 200).unwrap(), 2).unwrap();
        let e = 1.1;
        let s0 = PrueferState { log_r: 0.0, theta: 0.0, k: e.sqrt() };
        let angles = exact_angles(&r, 1, 200, e, s0).unwrap();
        // θ = 0 is (φ, φ') = (0, k); its Euclidean norm is k
        let p = propagate(&r, 1, 200, e, [0.0, 1.0]).unwrap();
        let (ph, dph) = from_pruefer(angles.last().unwrap());
        let eucl = (ph.hypot(dph) / e.sqrt()).ln();
        assert!((eucl - p.log_norm).abs() < 1e-9);
    }

    #[test]
    fn martingale_zero_disorder() {
        let r = zero(30);
        let d = martingale_decompose(&r, 1, 29, 1.0, 0.3).unwrap();
        for t in [d.term1, d.term2, d.term3, d.term4, d.residual] {
            assert!(t.abs() < 1e-13);
        }
        assert!(martingale_decompose(&r, 0, 29, 1.0, 0.3).is_err());
        assert!(martingale_decompose(&r, 5, 5, 1.0, 0.3).is_err());
    }

    #[test]
    fn martingale_sums_close() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(0, 100).unwrap(), 3).unwrap();
        let d = martingale_decompose(&r, 1, 100, 1.0, 0.7).unwrap();
        let total = d.term1 + d.term2 + d.term3 + d.term4 + d.residual;
        assert!((total - d.log_r_increment).abs() < 1e-12);
        let u2 = single_site_fourier(&c.single_site, 2.0).norm_sqr();
        let direct: f64 = (1..100).map(|j| r.amplitude(j).unwrap().powi(2) * u2 / 8.0).sum();
        assert_relative_eq!(d.term4, direct, max_relative = 1e-13);
    }

    #[test]
    fn residual_is_third_order_in_coupling() {
        let res = |lambda: f64| {
            let c = ModelConfig::standard(0.25, lambda).unwrap();
            let r = DisorderRealization::from_values(&c, 0, alloc::vec![1.5, 1.2, -0.9, 1.7]).unwrap();
            martingale_decompose(&r, 1, 3, 1.3, 0.4).unwrap()
        };
        let (a, b) = (res(0.04), res(0.02));
        assert!(a.term2.abs() > 10.0 * a.residual.abs());
        // halving λ must shrink the residual eightfold
        let ratio = a.residual / b.residual;
        assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
    }
}
