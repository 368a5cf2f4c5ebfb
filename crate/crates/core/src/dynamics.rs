//! Finite-difference box Hamiltonians and time-evolution quantities
//! computed through the eigenbasis: correlators, time-averaged moments and
//! exponentially weighted moments.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::asymptotics::fit_line;
use crate::error::{Error, Result};
use crate::model::{sample_realization, DisorderRealization, ModelConfig};
use crate::sampling::{check_samples, sample_seed, EstimatorResult, Executor, RunningStats};
use crate::spectral::BoxSpec;
use crate::tridiag::{EigenSystem, SymTridiagonal};

pub const DEFAULT_POINTS_PER_CELL: usize = 32;

/// Largest grid the discretization will build.
pub const MAX_GRID_POINTS: usize = 16384;

/// `-Δ_h + λV` on the interior nodes of `[a, b]` with spacing `h = 1/per_cell`
/// and Dirichlet ends. The potential entry of node `x_i` is the exact mean
/// of `λV` over `[x_i - h/2, x_i + h/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBox {
    pub bx: BoxSpec,
    pub per_cell: usize,
    pub h: f64,
    pub x: Vec<f64>,
    pub matrix: SymTridiagonal,
    /// Node range of each cell: `cell_start[c]..cell_start[c + 1]`.
    cell_start: Vec<usize>,
}

impl DiscretizedBox {
    pub fn new(r: &DisorderRealization, bx: BoxSpec, per_cell: usize) -> Result<Self> {
        if per_cell < 2 {
            return Err(Error::param("per_cell", "need at least two nodes per cell"));
        }
        r.check_cells(bx.a, bx.b - 1)?;
        let cells = (bx.b - bx.a) as usize;
        let points = cells * per_cell - 1;
        if points > MAX_GRID_POINTS {
            return Err(Error::GridTooLarge { points, limit: MAX_GRID_POINTS });
        }
        let h = 1.0 / per_cell as f64;
        let mut x = Vec::with_capacity(points);
        let mut d = Vec::with_capacity(points);
        let mut cell_start = alloc::vec![0usize; cells + 1];
        for i in 0..points {
            let j = i + 1;
            let c = j / per_cell;
            let t = (j % per_cell) as f64 * h;
            x.push(bx.a as f64 + c as f64 + t);
            cell_start[c + 1] = i + 1;
            let n = bx.a + c as i64;
            let mut avg = r.cell_integral_of(n, t, (t + 0.5 * h).min(1.0), |v| v);
            if t >= 0.5 * h {
                avg += r.cell_integral_of(n, t - 0.5 * h, t, |v| v);
            } else {
                // node on the left edge of cell n: half the window lies in cell n - 1
                avg += r.cell_integral_of(n - 1, 1.0 - 0.5 * h, 1.0, |v| v);
            }
            d.push(2.0 / (h * h) + avg / h);
        }
        // cells without nodes of their own (never with per_cell >= 2) inherit the previous end
        for c in 1..=cells {
            cell_start[c] = cell_start[c].max(cell_start[c - 1]);
        }
        let e = alloc::vec![-1.0 / (h * h); points - 1];
        Ok(DiscretizedBox { bx, per_cell, h, x, matrix: SymTridiagonal::new(d, e)?, cell_start })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Nodes `x_i` with `floor(x_i) = n`.
    pub fn cell_range(&self, n: i64) -> core::ops::Range<usize> {
        let c = (n - self.bx.a) as usize;
        self.cell_start[c]..self.cell_start[c + 1]
    }

    /// Eigenpairs with energies in `[lo, hi)`.
    pub fn spectrum(&self, lo: f64, hi: f64) -> EigenSystem {
        let (glo, ghi) = self.matrix.gershgorin();
        self.matrix.eigensystem_in(lo.max(glo - 1.0), hi.min(ghi + 1.0))
    }

    /// Normalized uniform vector on the nodes of cell `n`.
    pub fn cell_state(&self, n: i64) -> Result<Vec<f64>> {
        if !self.bx.contains_cell(n) {
            return Err(Error::param("cell", alloc::format!("cell {n} is outside the box")));
        }
        let range = self.cell_range(n);
        let amp = 1.0 / (range.len() as f64).sqrt();
        let mut v = alloc::vec![0.0; self.len()];
        range.for_each(|i| v[i] = amp);
        Ok(v)
    }

    /// `‖χ_n v‖²` for a grid vector.
    pub fn cell_mass(&self, v: &[f64], n: i64) -> f64 {
        self.cell_range(n).map(|i| v[i] * v[i]).sum()
    }
}

/// Correlator surrogate `Σ_{E_k ∈ I} ‖χ_x v_k‖ ‖χ_y v_k‖`.
pub fn correlator(dbox: &DiscretizedBox, x: i64, y: i64, interval: (f64, f64)) -> Result<f64> {
    Ok(correlator_profile(dbox, &[x], y, interval)?[0])
}

/// [`correlator`] for every `x` of `xs`, from one eigen-solve.
pub fn correlator_profile(dbox: &DiscretizedBox, xs: &[i64], y: i64, interval: (f64, f64)) -> Result<Vec<f64>> {
    for &n in xs.iter().chain(core::iter::once(&y)) {
        if !dbox.bx.contains_cell(n) {
            return Err(Error::param("x", alloc::format!("cell {n} is outside the box")));
        }
    }
    let sys = dbox.spectrum(interval.0, interval.1);
    Ok(correlator_from_system(dbox, &sys, xs, y))
}

pub fn correlator_from_system(dbox: &DiscretizedBox, sys: &EigenSystem, xs: &[i64], y: i64) -> Vec<f64> {
    let my: Vec<f64> = sys.vectors.iter().map(|v| dbox.cell_mass(v, y)).collect();
    xs.iter().map(|&x| sys.vectors.iter().zip(&my).map(|(v, m)| (dbox.cell_mass(v, x) * m).sqrt()).sum()).collect()
}

/// Energy cutoff `f` applied to `H` by spectral calculus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyWindow {
    /// `1_[lo, hi)`.
    Indicator { lo: f64, hi: f64 },
    /// Smooth bump `exp(1 - 1/(1 - t²))` on `(lo, hi)`, equal to 1 at the center.
    Bump { lo: f64, hi: f64 },
}

impl EnergyWindow {
    pub fn new_indicator(lo: f64, hi: f64) -> Result<Self> {
        Self::check(lo, hi)?;
        Ok(EnergyWindow::Indicator { lo, hi })
    }

    pub fn new_bump(lo: f64, hi: f64) -> Result<Self> {
        Self::check(lo, hi)?;
        Ok(EnergyWindow::Bump { lo, hi })
    }

    fn check(lo: f64, hi: f64) -> Result<()> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(())
        } else {
            Err(Error::param("window", "need finite lo < hi"))
        }
    }

    /// Indicator of an interval containing the whole spectrum of `dbox`.
    pub fn everything(dbox: &DiscretizedBox) -> Self {
        let (lo, hi) = dbox.matrix.gershgorin();
        EnergyWindow::Indicator { lo: lo - 1.0, hi: hi + 1.0 }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            EnergyWindow::Indicator { lo, hi } | EnergyWindow::Bump { lo, hi } => (lo, hi),
        }
    }

    pub fn value(&self, e: f64) -> f64 {
        match *self {
            EnergyWindow::Indicator { lo, hi } => {
                if e >= lo && e < hi {
                    1.0
                } else {
                    0.0
                }
            }
            EnergyWindow::Bump { lo, hi } => {
                let t = (2.0 * e - lo - hi) / (hi - lo);
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            }
        }
    }
}

/// The `T`-independent pieces of `M(p, f, T)`:
/// `A_nm = ⟨v_n, |X|^p v_m⟩` and `B_nm = ⟨v_m, χ₀ v_n⟩`, weighted by `f`.
#[derive(Debug, Clone)]
pub struct MomentKernel {
    energies: Vec<f64>,
    /// `f_n f_m A_nm B_nm`, row-major.
    weights: Vec<f64>,
}

impl MomentKernel {
    pub fn new(dbox: &DiscretizedBox, p: f64, f: EnergyWindow) -> Result<Self> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::param("p", "must be finite and >= 0"));
        }
        if !dbox.bx.contains_cell(0) {
            return Err(Error::param("box", "the box must contain cell 0"));
        }
        let (lo, hi) = f.support();
        let sys = dbox.spectrum(lo, hi);
        let k = sys.values.len();
        let fv: Vec<f64> = sys.values.iter().map(|&e| f.value(e)).collect();
        let xp: Vec<f64> = dbox.x.iter().map(|x| if p == 0.0 { 1.0 } else { x.abs().powf(p) }).collect();
        let c0 = dbox.cell_range(0);
        let mut weights = alloc::vec![0.0; k * k];
        for n in 0..k {
            for m in n..k {
                let (vn, vm) = (&sys.vectors[n], &sys.vectors[m]);
                let a: f64 = vn.iter().zip(vm).zip(&xp).map(|((a, b), w)| a * b * w).sum();
                let b: f64 = c0.clone().map(|i| vn[i] * vm[i]).sum();
                let w = fv[n] * fv[m] * a * b;
                weights[n * k + m] = w;
                weights[m * k + n] = w;
            }
        }
        Ok(MomentKernel { energies: sys.values, weights })
    }

    /// `M(p, f, T) = Σ_{n,m} f_n f_m A_nm B_nm / (1 + (T (E_n - E_m)/2)²)`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.energies.len();
        let mut acc = 0.0;
        for n in 0..k {
            for m in 0..k {
                let d = 0.5 * t * (self.energies[n] - self.energies[m]);
                acc += self.weights[n * k + m] / (1.0 + d * d);
            }
        }
        acc
    }

    /// Instantaneous `‖|X|^{p/2} e^{-itH} f(H) χ₀‖²_HS` (the integrand of `M`).
    pub fn instantaneous(&self, t: f64) -> f64 {
        let k = self.energies.len();
        let mut acc = 0.0;
        for n in 0..k {
            for m in 0..k {
                acc += self.weights[n * k + m] * (t * (self.energies[n] - self.energies[m])).cos();
            }
        }
        acc
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// Time-averaged spatial density of `e^{-itH} f(H) χ₀` at each node, so that
/// `M(p, f, T) = Σ_i |x_i|^p ρ_i`. Every `ρ_i` is nonnegative.
pub fn moment_density(dbox: &DiscretizedBox, f: EnergyWindow, t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("T", "must be positive"));
    }
    if !dbox.bx.contains_cell(0) {
        return Err(Error::param("box", "the box must contain cell 0"));
    }
    let (lo, hi) = f.support();
    let sys = dbox.spectrum(lo, hi);
    let k = sys.values.len();
    let fv: Vec<f64> = sys.values.iter().map(|&e| f.value(e)).collect();
    let c0 = dbox.cell_range(0);
    let mut rho = alloc::vec![0.0; dbox.len()];
    for n in 0..k {
        for m in 0..k {
            let (vn, vm) = (&sys.vectors[n], &sys.vectors[m]);
            let b: f64 = c0.clone().map(|i| vn[i] * vm[i]).sum();
            let d = 0.5 * t * (sys.values[n] - sys.values[m]);
            let w = fv[n] * fv[m] * b / (1.0 + d * d);
            rho.iter_mut().zip(vn.iter().zip(vm)).for_each(|(r, (a, c))| *r += w * a * c);
        }
    }
    Ok(rho)
}

/// Time-averaged moment `(2/T) ∫ e^{-2t/T} ‖|X|^{p/2} e^{-itH} f(H) χ₀‖²_HS dt`.
pub fn moment_m(dbox: &DiscretizedBox, p: f64, f: EnergyWindow, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("T", "must be positive"));
    }
    Ok(MomentKernel::new(dbox, p, f)?.at(t))
}

/// Result of [`kappa_moment`].
#[derive(Debug, Clone, PartialEq)]
pub struct KappaMoment {
    pub sup: f64,
    pub log_sup: f64,
    pub argmax_t: f64,
    /// `log ‖e^{|X|^κ/2} e^{-itH} P_I ψ‖²` at each time.
    pub log_values: Vec<f64>,
}

/// `sup_t ‖e^{|X|^κ/2} e^{-itH} P_I ψ‖²` over `times`, accumulated in log space.
pub fn kappa_moment(
    dbox: &DiscretizedBox,
    kappa: f64,
    interval: (f64, f64),
    psi: &[f64],
    times: &[f64],
) -> Result<KappaMoment> {
    let sys = dbox.spectrum(interval.0, interval.1);
    kappa_moment_with(dbox, &sys, kappa, psi, times)
}

/// [`kappa_moment`] with a precomputed `P_I` eigenbasis.
pub fn kappa_moment_with(
    dbox: &DiscretizedBox,
    sys: &EigenSystem,
    kappa: f64,
    psi: &[f64],
    times: &[f64],
) -> Result<KappaMoment> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", "must be finite and >= 0"));
    }
    if times.is_empty() {
        return Err(Error::param("times", "need at least one time"));
    }
    if psi.len() != dbox.len() {
        return Err(Error::param("psi", "length must match the grid"));
    }
    let norm: f64 = psi.iter().map(|v| v * v).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::param("psi", "must be normalized"));
    }
    let support: Vec<usize> = (0..psi.len()).filter(|&i| psi[i] != 0.0).collect();
    let cell = |i: usize| dbox.x[i].floor() as i64;
    if support.iter().any(|&i| cell(i) != cell(support[0])) {
        return Err(Error::param("psi", "must be supported in one cell"));
    }
    let coeff: Vec<f64> = sys.vectors.iter().map(|v| v.iter().zip(psi).map(|(a, b)| a * b).sum()).collect();
    let weight: Vec<f64> = dbox.x.iter().map(|x| if kappa == 0.0 { 1.0 } else { x.abs().powf(kappa) }).collect();
    let mut log_values = Vec::with_capacity(times.len());
    let mut amp = alloc::vec![Complex64::new(0.0, 0.0); dbox.len()];
    for &t in times {
        amp.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for ((v, &c), &e) in sys.vectors.iter().zip(&coeff).zip(&sys.values) {
            let z = Complex64::from_polar(c, -t * e);
            amp.iter_mut().zip(v).for_each(|(a, &vi)| *a += z * vi);
        }
        // log-sum-exp of |X|^κ + log|amp|²
        let terms: Vec<f64> =
            amp.iter().zip(&weight).filter(|(a, _)| a.norm_sqr() > 0.0).map(|(a, w)| w + a.norm_sqr().ln()).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lv = if top.is_finite() { top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() } else { top };
        log_values.push(lv);
    }
    let (imax, &log_sup) = log_values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty times");
    Ok(KappaMoment { sup: log_sup.exp(), log_sup, argmax_t: times[imax], log_values })
}

/// Largest `T` a box of half-length `L/2` represents faithfully for energies
/// up to `E_max`: `(L/2) / (2 √E_max)`.
pub fn ballistic_horizon(bx: BoxSpec, e_max: f64) -> f64 {
    0.5 * bx.length() / (2.0 * e_max.max(f64::MIN_POSITIVE).sqrt())
}

/// Output of [`transport_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransportScan {
    pub times: Vec<f64>,
    pub rows: Vec<EstimatorResult>,
    /// Slope of `log mean M` against `log T`.
    pub slope: f64,
    /// Jackknife standard error of `slope` over realizations.
    pub slope_std_error: f64,
    /// Mean and standard error of the per-realization slopes.
    pub realization_slopes: EstimatorResult,
}

/// Monte Carlo `M(p, f, T)` over a grid of `T`, with the log-log slope.
///
/// Every `T` must sit below [`ballistic_horizon`] for the top of `f`'s support.
pub fn transport_scan<X: Executor>(
    config: &ModelConfig,
    p: f64,
    f: EnergyWindow,
    times: &[f64],
    bx: BoxSpec,
    per_cell: usize,
    n_samples: u64,
    root_seed: u64,
    exec: &X,
) -> Result<TransportScan> {
    check_samples(n_samples)?;
    if times.len() < 2 {
        return Err(Error::param("times", "need at least two times"));
    }
    let horizon = ballistic_horizon(bx, f.support().1);
    for &t in times {
        if !(t > 0.0) {
            return Err(Error::param("times", "must be positive"));
        }
        if t > horizon {
            return Err(Error::BeyondHorizon { time: t, horizon });
        }
    }
    let per_sample: Vec<Vec<f64>> = exec
        .map_indexed(n_samples, |i| -> Result<Vec<f64>> {
            let r = sample_realization(config, bx.window(), sample_seed(root_seed, i))?;
            let dbox = DiscretizedBox::new(&r, bx, per_cell)?;
            let k = MomentKernel::new(&dbox, p, f)?;
            Ok(times.iter().map(|&t| k.at(t)).collect())
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let log_t: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let rows: Vec<EstimatorResult> = (0..times.len())
        .map(|j| {
            let mut st = RunningStats::default();
            per_sample.iter().for_each(|v| st.push(v[j]));
            EstimatorResult::from_stats(&st, root_seed).with_meta("T", times[j]).with_meta("p", p)
        })
        .collect();
    let slope_of = |means: &[f64]| -> Result<f64> {
        if means.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::DegenerateProfile("moment vanished; no log-log slope".into()));
        }
        let ly: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        Ok(fit_line(&log_t, &ly)?.0)
    };
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let slope = slope_of(&means)?;
    // jackknife over realizations
    let n = per_sample.len();
    let sums: Vec<f64> = (0..times.len()).map(|j| per_sample.iter().map(|v| v[j]).sum()).collect();
    let mut jack = Vec::with_capacity(n);
    for v in &per_sample {
        let loo: Vec<f64> = sums.iter().zip(v).map(|(s, x)| (s - x) / (n - 1) as f64).collect();
        jack.push(slope_of(&loo)?);
    }
    let jm = jack.iter().sum::<f64>() / n as f64;
    let slope_std_error = ((n - 1) as f64 / n as f64 * jack.iter().map(|s| (s - jm) * (s - jm)).sum::<f64>()).sqrt();
    let individual: Vec<f64> = per_sample.iter().map(|v| slope_of(v)).collect::<Result<_>>()?;
    Ok(TransportScan {
        times: times.to_vec(),
        rows,
        slope,
        slope_std_error,
        realization_slopes: EstimatorResult::from_samples(&individual, root_seed),
    })
}
