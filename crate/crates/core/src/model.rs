//! Ingredients of the random operator `-d²/dx² + λ Σ a_n ω_n u(x - n)`:
//! the decaying envelope `a_n`, the single-site bump `u`, the disorder law of
//! the couplings `ω_n`, and seeded realizations over finite cell windows.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use num_complex::Complex64;
// unused whenever std float methods are in scope (tests, std-enabled dev builds)
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quad;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_6: f64 = SQRT_2 * SQRT_3;

/// Default resource guard on realization windows.
pub const DEFAULT_MAX_WINDOW_CELLS: u64 = 1 << 24;

/// Rule producing the envelope sequence `a_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// `a_n = max(1, |n|)^(-alpha)`.
    Regularized,
    /// `a_n = (offset + |n|)^(-alpha)` with `offset >= 1`.
    Shifted { offset: f64 },
}

impl Envelope {
    pub fn value(&self, alpha: f64, n: i64) -> f64 {
        let m = n.unsigned_abs() as f64;
        match *self {
            Envelope::Regularized => m.max(1.0).powf(-alpha),
            Envelope::Shifted { offset } => (offset + m).powf(-alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Envelope::Regularized => Ok(()),
            Envelope::Shifted { offset } if offset.is_finite() && offset >= 1.0 => Ok(()),
            Envelope::Shifted { offset } => {
                Err(Error::param("envelope.offset", alloc::format!("must be finite and >= 1, got {offset}")))
            }
        }
    }
}

/// One constant piece `height * 1_[start, end)` of the single-site potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub height: f64,
}

/// A piece of the unit-cell decomposition `[start, start + len)` carrying the
/// constant value `height` of `u` (zero on gaps between segments).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub len: f64,
    pub height: f64,
}

/// Piecewise-constant single-site potential `u` supported in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleSitePotential {
    segments: Vec<Segment>,
    pieces: Vec<Piece>,
    lower: f64,
    upper: f64,
    plateau: (f64, f64),
}

impl SingleSitePotential {
    /// Builds `u` from sorted, disjoint segments inside `(0, 1)`.
    ///
    /// The bound constants are derived from the data: `C_u` is the largest
    /// height and the plateau `J` is the first segment attaining it, so
    /// `c_u = C_u` on `J`.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::param("single_site.segments", "at least one segment is required"));
        }
        let mut prev_end = 0.0;
        let mut total = 0.0;
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite() && s.height.is_finite()) {
                return Err(Error::param("single_site.segments", alloc::format!("segment {i} is not finite")));
            }
            if !(s.start > 0.0 && s.end < 1.0 && s.start < s.end) {
                return Err(Error::param(
                    "single_site.segments",
                    alloc::format!("segment {i} must satisfy 0 < start < end < 1"),
                ));
            }
            if s.start < prev_end {
                return Err(Error::param(
                    "single_site.segments",
                    alloc::format!("segment {i} overlaps or is out of order"),
                ));
            }
            if s.height < 0.0 {
                return Err(Error::param("single_site.segments", alloc::format!("segment {i} has negative height")));
            }
            prev_end = s.end;
            total += s.end - s.start;
        }
        debug_assert!(total <= 1.0);

        let (best, upper) = segments.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |(bi, bh), (i, s)| {
            if s.height > bh {
                (i, s.height)
            } else {
                (bi, bh)
            }
        });
        if upper <= 0.0 {
            return Err(Error::param("single_site.segments", "u must be positive on some segment"));
        }
        let plateau = (segments[best].start, segments[best].end);

        let mut pieces = Vec::with_capacity(2 * segments.len() + 1);
        let mut cursor = 0.0;
        for s in &segments {
            if s.start > cursor {
                pieces.push(Piece { start: cursor, len: s.start - cursor, height: 0.0 });
            }
            pieces.push(Piece { start: s.start, len: s.end - s.start, height: s.height });
            cursor = s.end;
        }
        pieces.push(Piece { start: cursor, len: 1.0 - cursor, height: 0.0 });

        Ok(SingleSitePotential { segments, pieces, lower: upper, upper, plateau })
    }

    /// `u = 1_[1/4, 3/4)`.
    pub fn centered_box() -> Self {
        Self::new(alloc::vec![Segment { start: 0.25, end: 0.75, height: 1.0 }]).expect("valid default bump")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Decomposition of `[0, 1)` into constant pieces, gaps included.
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `c_u`, the lower bound of `u` on the plateau `J`.
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    /// `C_u`, the global upper bound.
    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// The plateau interval `J`.
    pub fn plateau(&self) -> (f64, f64) {
        self.plateau
    }

    /// `u(y)` for `y` in `[0, 1)`; zero elsewhere.
    pub fn value(&self, y: f64) -> f64 {
        self.segments.iter().find(|s| y >= s.start && y < s.end).map_or(0.0, |s| s.height)
    }

    /// `∫_0^y u`.
    pub fn cumulative(&self, y: f64) -> f64 {
        self.segments.iter().map(|s| s.height * (y.min(s.end) - s.start).max(0.0)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.cumulative(1.0)
    }
}

/// `∫_0^1 u(y) e^{i f y} dy`, summed over segments in closed form.
pub fn single_site_fourier(u: &SingleSitePotential, frequency: f64) -> Complex64 {
    u.segments()
        .iter()
        .map(|s| {
            let len = s.end - s.start;
            let z = frequency * len;
            // (e^{iz} - 1) / (iz) = sinc z + i (1 - cos z) / z
            let (re, im) = if z.abs() < 1e-4 {
                let z2 = z * z;
                (1.0 - z2 / 6.0 + z2 * z2 / 120.0, z / 2.0 - z * z2 / 24.0)
            } else {
                let half = (0.5 * z).sin();
                (z.sin() / z, 2.0 * half * half / z)
            };
            Complex64::from_polar(s.height * len, frequency * s.start) * Complex64::new(re, im)
        })
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc + c)
}

/// `∫_0^1 u(y) (∫_0^y u) e^{i f y} dy` in closed form.
pub fn single_site_cumulative_fourier(u: &SingleSitePotential, frequency: f64) -> Complex64 {
    let mut below = 0.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for s in u.segments() {
        let len = s.end - s.start;
        let phase = Complex64::from_polar(1.0, frequency * s.start);
        let (m0, m1) = exponential_moments(frequency, len);
        acc += phase * s.height * (m0 * below + m1 * s.height);
        below += s.height * len;
    }
    acc
}

/// `(∫_0^l e^{ifz} dz, ∫_0^l z e^{ifz} dz)`.
fn exponential_moments(f: f64, l: f64) -> (Complex64, Complex64) {
    let i = Complex64::new(0.0, 1.0);
    if (f * l).abs() < 1e-2 {
        // power series in (i f)
        let mut m0 = Complex64::new(0.0, 0.0);
        let mut m1 = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0); // (i f)^m / m!
        let mut lp = l; // l^{m+1}
        for m in 0..12 {
            let mf = m as f64;
            m0 += term * (lp / (mf + 1.0));
            m1 += term * (lp * l / (mf + 2.0));
            term = term * i * f / (mf + 1.0);
            lp *= l;
        }
        (m0, m1)
    } else {
        let e = Complex64::from_polar(1.0, f * l);
        let m0 = (e - 1.0) / (i * f);
        let m1 = e * l / (i * f) + (e - 1.0) / (f * f);
        (m0, m1)
    }
}

/// Family of the coupling distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisorderFamily {
    /// Uniform density on `[lo, hi]`.
    Uniform,
    /// Triangular density on `[lo, hi]` with peak at `mode`.
    Triangular { mode: f64 },
    /// Point mass at zero. Has no density; only for free-operator checks.
    Degenerate,
}

/// Law of the i.i.d. couplings `ω_n`: bounded density, mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderSpec {
    family: DisorderFamily,
    lo: f64,
    hi: f64,
}

impl DisorderSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::checked(DisorderFamily::Uniform, lo, hi)
    }

    pub fn triangular(lo: f64, mode: f64, hi: f64) -> Result<Self> {
        if !(lo <= mode && mode <= hi) {
            return Err(Error::param("disorder.params", "mode must lie in [lo, hi]"));
        }
        Self::checked(DisorderFamily::Triangular { mode }, lo, hi)
    }

    /// Uniform on `[-√3, √3]`.
    pub fn standard_uniform() -> Self {
        Self::uniform(-SQRT_3, SQRT_3).expect("unit-variance uniform law")
    }

    /// Symmetric triangular on `[-√6, √6]`.
    pub fn standard_triangular() -> Self {
        Self::triangular(-SQRT_6, 0.0, SQRT_6).expect("unit-variance triangular law")
    }

    /// `ω ≡ 0`. Bypasses the moment check.
    pub fn degenerate() -> Self {
        DisorderSpec { family: DisorderFamily::Degenerate, lo: 0.0, hi: 0.0 }
    }

    fn checked(family: DisorderFamily, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("disorder.params", "support must be a finite interval lo < hi"));
        }
        let spec = DisorderSpec { family, lo, hi };
        let (mean, var) = spec.quadrature_moments();
        if mean.abs() > 1e-10 || (var - 1.0).abs() > 1e-10 {
            return Err(Error::DisorderMoments(alloc::format!(
                "mean {mean:e} and variance {var} (need 0 and 1 within 1e-10)"
            )));
        }
        Ok(spec)
    }

    pub fn family(&self) -> DisorderFamily {
        self.family
    }

    pub fn omega_minus(&self) -> f64 {
        self.lo
    }

    pub fn omega_plus(&self) -> f64 {
        self.hi
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, DisorderFamily::Degenerate)
    }

    /// `‖ρ‖_∞`; infinite for the point mass.
    pub fn density_sup(&self) -> f64 {
        match self.family {
            DisorderFamily::Uniform => 1.0 / (self.hi - self.lo),
            DisorderFamily::Triangular { .. } => 2.0 / (self.hi - self.lo),
            DisorderFamily::Degenerate => f64::INFINITY,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let w = self.hi - self.lo;
        match self.family {
            DisorderFamily::Uniform => 1.0 / w,
            DisorderFamily::Triangular { mode } => {
                if x < mode {
                    2.0 * (x - self.lo) / (w * (mode - self.lo))
                } else if x > mode {
                    2.0 * (self.hi - x) / (w * (self.hi - mode))
                } else {
                    2.0 / w
                }
            }
            DisorderFamily::Degenerate => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let w = self.hi - self.lo;
        match self.family {
            DisorderFamily::Uniform => (x - self.lo) / w,
            DisorderFamily::Triangular { mode } => {
                if x <= mode {
                    (x - self.lo) * (x - self.lo) / (w * (mode - self.lo))
                } else {
                    1.0 - (self.hi - x) * (self.hi - x) / (w * (self.hi - mode))
                }
            }
            DisorderFamily::Degenerate => 1.0,
        }
    }

    /// Inverse CDF on `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let w = self.hi - self.lo;
        match self.family {
            DisorderFamily::Uniform => self.lo + p * w,
            DisorderFamily::Triangular { mode } => {
                let split = (mode - self.lo) / w;
                if p < split {
                    self.lo + (p * w * (mode - self.lo)).sqrt()
                } else {
                    self.hi - ((1.0 - p) * w * (self.hi - mode)).sqrt()
                }
            }
            DisorderFamily::Degenerate => 0.0,
        }
    }

    /// Mean and variance of the density by composite Simpson on its
    /// polynomial pieces (exact up to rounding for these families).
    pub fn quadrature_moments(&self) -> (f64, f64) {
        let breaks: Vec<f64> = match self.family {
            DisorderFamily::Uniform => alloc::vec![self.lo, self.hi],
            DisorderFamily::Triangular { mode } => alloc::vec![self.lo, mode, self.hi],
            DisorderFamily::Degenerate => return (0.0, 0.0),
        };
        let mut mean = 0.0;
        let mut second = 0.0;
        for w in breaks.windows(2) {
            if w[1] > w[0] {
                // stay off the kink at the mode by sampling interior points only via Simpson nodes
                let f = |x: f64| self.piece_density(x, w[0], w[1]);
                mean += quad::simpson(|x| x * f(x), w[0], w[1], 16);
                second += quad::simpson(|x| x * x * f(x), w[0], w[1], 16);
            }
        }
        (mean, second - mean * mean)
    }

    // density restricted to one polynomial piece, evaluated with the piece's own formula
    fn piece_density(&self, x: f64, a: f64, b: f64) -> f64 {
        match self.family {
            DisorderFamily::Triangular { mode } => {
                let w = self.hi - self.lo;
                if b <= mode {
                    2.0 * (x - self.lo) / (w * (mode - self.lo))
                } else {
                    let _ = a;
                    2.0 * (self.hi - x) / (w * (self.hi - mode))
                }
            }
            _ => self.density(x),
        }
    }

    fn sample_from_unit(&self, p: f64) -> f64 {
        self.quantile(p).clamp(self.lo, self.hi)
    }
}

/// All physical parameters of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub envelope: Envelope,
    pub disorder: DisorderSpec,
    pub single_site: SingleSitePotential,
    pub max_window_cells: u64,
}

impl ModelConfig {
    pub fn new(
        alpha: f64,
        lambda: f64,
        envelope: Envelope,
        disorder: DisorderSpec,
        single_site: SingleSitePotential,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", alloc::format!("must lie in (0, 1), got {alpha}")));
        }
        if !(lambda.is_finite() && lambda != 0.0) {
            return Err(Error::param("lambda", alloc::format!("must be finite and nonzero, got {lambda}")));
        }
        envelope.validate()?;
        Ok(ModelConfig { alpha, lambda, envelope, disorder, single_site, max_window_cells: DEFAULT_MAX_WINDOW_CELLS })
    }

    /// Regularized envelope, unit-variance uniform disorder, `u = 1_[1/4,3/4)`.
    pub fn standard(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(
            alpha,
            lambda,
            Envelope::Regularized,
            DisorderSpec::standard_uniform(),
            SingleSitePotential::centered_box(),
        )
    }

    pub fn with_disorder(mut self, disorder: DisorderSpec) -> Self {
        self.disorder = disorder;
        self
    }

    pub fn with_max_window(mut self, cells: u64) -> Self {
        self.max_window_cells = cells;
        self
    }
}

/// `a_n` for the configured rule.
pub fn envelope_value(config: &ModelConfig, n: i64) -> f64 {
    config.envelope.value(config.alpha, n)
}

/// Inclusive range of cell indices `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellWindow {
    pub min: i64,
    pub max: i64,
}

impl CellWindow {
    pub fn new(min: i64, max: i64) -> Result<Self> {
        if max < min {
            return Err(Error::param("window", alloc::format!("empty window [{min}, {max}]")));
        }
        Ok(CellWindow { min, max })
    }

    pub fn cells(&self) -> u64 {
        (self.max - self.min) as u64 + 1
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.min && n <= self.max
    }
}

/// Couplings `ω_n` over a finite window, together with the folded
/// amplitudes `λ a_n ω_n` the solvers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    window: CellWindow,
    omegas: Vec<f64>,
    amplitudes: Vec<f64>,
    seed: Option<u64>,
    config: ModelConfig,
}

/// Draws `ω_n` for every cell of `window`.
///
/// Each cell's draw is addressed by position in a ChaCha8 keystream seeded
/// from `seed` (stream 0 for `n >= 0` at word `2n`, stream 1 for `n < 0` at
/// word `2(-n-1)`), so overlapping windows with the same seed agree cell by
/// cell.
pub fn sample_realization(config: &ModelConfig, window: CellWindow, seed: u64) -> Result<DisorderRealization> {
    if window.cells() > config.max_window_cells {
        return Err(Error::WindowTooLarge { cells: window.cells(), limit: config.max_window_cells });
    }
    let len = window.cells() as usize;
    let mut omegas = alloc::vec![0.0; len];
    if !config.disorder.is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if window.max >= 0 {
            let first = window.min.max(0);
            rng.set_stream(0);
            rng.set_word_pos(2 * first as u128);
            for n in first..=window.max {
                omegas[(n - window.min) as usize] = config.disorder.sample_from_unit(unit_f64(&mut rng));
            }
        }
        if window.min < 0 {
            let first = window.max.min(-1);
            rng.set_stream(1);
            rng.set_word_pos(2 * (-first - 1) as u128);
            let mut n = first;
            while n >= window.min {
                omegas[(n - window.min) as usize] = config.disorder.sample_from_unit(unit_f64(&mut rng));
                n -= 1;
            }
        }
    }
    DisorderRealization::assemble(config, window, omegas, Some(seed))
}

/// Uniform on `[0, 1)` from the top 53 bits of one 64-bit word.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl DisorderRealization {
    /// Realization with prescribed couplings, `values[i] = ω_{n_min + i}`.
    pub fn from_values(config: &ModelConfig, n_min: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("values", "at least one coupling is required"));
        }
        let window = CellWindow::new(n_min, n_min + values.len() as i64 - 1)?;
        if window.cells() > config.max_window_cells {
            return Err(Error::WindowTooLarge { cells: window.cells(), limit: config.max_window_cells });
        }
        let (lo, hi) = (config.disorder.omega_minus(), config.disorder.omega_plus());
        if let Some(bad) = values.iter().position(|&w| !(w >= lo && w <= hi)) {
            return Err(Error::param(
                "values",
                alloc::format!("coupling {} at cell {} is outside [{lo}, {hi}]", values[bad], n_min + bad as i64),
            ));
        }
        Self::assemble(config, window, values, None)
    }

    fn assemble(config: &ModelConfig, window: CellWindow, omegas: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        let amplitudes = omegas
            .iter()
            .enumerate()
            .map(|(i, &w)| config.lambda * envelope_value(config, window.min + i as i64) * w)
            .collect();
        Ok(DisorderRealization { window, omegas, amplitudes, seed, config: config.clone() })
    }

    pub fn window(&self) -> CellWindow {
        self.window
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn omega(&self, n: i64) -> Result<f64> {
        self.index(n).map(|i| self.omegas[i])
    }

    /// `λ a_n ω_n`, the height multiplier of `u` in cell `n`.
    pub fn amplitude(&self, n: i64) -> Result<f64> {
        self.index(n).map(|i| self.amplitudes[i])
    }

    pub(crate) fn amplitude_unchecked(&self, n: i64) -> f64 {
        self.amplitudes[(n - self.window.min) as usize]
    }

    pub fn check_cells(&self, first: i64, last: i64) -> Result<()> {
        for n in [first, last] {
            if !self.window.contains(n) {
                return Err(Error::OutsideWindow { cell: n, min: self.window.min, max: self.window.max });
            }
        }
        Ok(())
    }

    fn index(&self, n: i64) -> Result<usize> {
        if self.window.contains(n) {
            Ok((n - self.window.min) as usize)
        } else {
            Err(Error::OutsideWindow { cell: n, min: self.window.min, max: self.window.max })
        }
    }

    /// The full potential `λ V_ω(x)`.
    pub fn eval_potential(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::param("x", "must be finite"));
        }
        let n = x.floor() as i64;
        let amp = self.amplitude(n)?;
        Ok(amp * self.config.single_site.value(x - n as f64))
    }

    /// `∫_x0^x1 λV_ω` restricted to one cell, exact for piecewise-constant `u`.
    pub(crate) fn cell_integral_of<F: Fn(f64) -> f64>(&self, n: i64, lo: f64, hi: f64, f: F) -> f64 {
        let amp = self.amplitude_unchecked(n);
        self.config
            .single_site
            .pieces()
            .iter()
            .map(|p| {
                let a = p.start.max(lo);
                let b = (p.start + p.len).min(hi);
                if b > a {
                    (b - a) * f(amp * p.height)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn envelope_defaults() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        assert_eq!(envelope_value(&c, 0), 1.0);
        assert_relative_eq!(envelope_value(&c, 16), 0.5, epsilon = 1e-15);
        let c = ModelConfig::standard(0.5, 1.0).unwrap();
        assert_relative_eq!(envelope_value(&c, -9), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn envelope_even_and_nonincreasing() {
        let c = ModelConfig::standard(0.3, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..200 {
            let a = envelope_value(&c, n);
            assert_eq!(a, envelope_value(&c, -n));
            assert!(a <= prev);
            prev = a;
        }
        // a_n |n|^alpha -> 1
        assert_relative_eq!(envelope_value(&c, 1_000_000) * 1e6f64.powf(0.3), 1.0, epsilon = 1e-12);
        let shifted = Envelope::Shifted { offset: 2.0 };
        assert_relative_eq!(shifted.value(0.3, 1_000_000) * 1e6f64.powf(0.3), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn config_rejects_bad_parameters() {
        assert!(ModelConfig::standard(0.0, 1.0).is_err());
        assert!(ModelConfig::standard(1.0, 1.0).is_err());
        assert!(ModelConfig::standard(0.25, 0.0).is_err());
        let bad = ModelConfig::new(
            0.25,
            1.0,
            Envelope::Shifted { offset: 0.5 },
            DisorderSpec::standard_uniform(),
            SingleSitePotential::centered_box(),
        );
        assert!(matches!(bad, Err(Error::InvalidParameter { name: "envelope.offset", .. })));
    }

    #[test]
    fn single_site_validation() {
        let seg = |s, e, h| Segment { start: s, end: e, height: h };
        assert!(SingleSitePotential::new(alloc::vec![seg(0.0, 0.5, 1.0)]).is_err());
        assert!(SingleSitePotential::new(alloc::vec![seg(0.5, 1.0, 1.0)]).is_err());
        assert!(SingleSitePotential::new(alloc::vec![seg(0.2, 0.5, 1.0), seg(0.4, 0.6, 1.0)]).is_err());
        assert!(SingleSitePotential::new(alloc::vec![seg(0.2, 0.5, -1.0)]).is_err());
        assert!(SingleSitePotential::new(alloc::vec![seg(0.2, 0.5, 0.0)]).is_err());
        let u = SingleSitePotential::new(alloc::vec![seg(0.1, 0.3, 0.5), seg(0.4, 0.7, 2.0)]).unwrap();
        assert_eq!(u.upper_bound(), 2.0);
        assert_eq!(u.plateau(), (0.4, 0.7));
        assert_eq!(u.pieces().len(), 5);
        let total: f64 = u.pieces().iter().map(|p| p.len).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
        assert_relative_eq!(u.mass(), 0.1 + 0.6, epsilon = 1e-15);
    }

    #[test]
    fn fourier_examples() {
        let u = SingleSitePotential::centered_box();
        let z0 = single_site_fourier(&u, 0.0);
        assert_relative_eq!(z0.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(z0.im, 0.0, epsilon = 1e-15);
        assert_relative_eq!(single_site_fourier(&u, 2.0).norm(), 0.479_425_538_604_203, epsilon = 1e-12);
        assert!(single_site_fourier(&u, 4.0 * core::f64::consts::PI).norm() < 1e-15);
    }

    #[test]
    fn disorder_laws_have_unit_variance() {
        for d in [DisorderSpec::standard_uniform(), DisorderSpec::standard_triangular()] {
            let (m, v) = d.quadrature_moments();
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        assert!(DisorderSpec::uniform(-1.0, 1.0).is_err());
        assert!(DisorderSpec::uniform(0.0, 12f64.sqrt()).is_err());
        assert!(DisorderSpec::triangular(-SQRT_6, 0.5, SQRT_6).is_err());
        assert_relative_eq!(DisorderSpec::standard_uniform().density_sup(), 1.0 / (2.0 * SQRT_3), epsilon = 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [DisorderSpec::standard_uniform(), DisorderSpec::standard_triangular()] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                assert_relative_eq!(d.cdf(d.quantile(p)), p, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn realization_support_and_determinism() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let w = CellWindow::new(-50, 50).unwrap();
        let r1 = sample_realization(&c, w, 7).unwrap();
        let r2 = sample_realization(&c, w, 7).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.omegas().iter().all(|&x| x.abs() <= SQRT_3));
        let r3 = sample_realization(&c, w, 8).unwrap();
        assert_ne!(r1.omegas(), r3.omegas());
    }

    #[test]
    fn nested_windows_agree() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let big = sample_realization(&c, CellWindow::new(-40, 40).unwrap(), 3).unwrap();
        let small = sample_realization(&c, CellWindow::new(-7, 12).unwrap(), 3).unwrap();
        for n in -7..=12 {
            assert_eq!(big.omega(n).unwrap(), small.omega(n).unwrap());
        }
        let right = sample_realization(&c, CellWindow::new(5, 9).unwrap(), 3).unwrap();
        let left = sample_realization(&c, CellWindow::new(-9, -5).unwrap(), 3).unwrap();
        assert_eq!(right.omega(7).unwrap(), big.omega(7).unwrap());
        assert_eq!(left.omega(-6).unwrap(), big.omega(-6).unwrap());
    }

    #[test]
    fn window_guard() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap().with_max_window(100);
        let err = sample_realization(&c, CellWindow::new(0, 100).unwrap(), 1).unwrap_err();
        assert!(matches!(err, Error::WindowTooLarge { cells: 101, limit: 100 }));
        assert_eq!(err.kind(), crate::ErrorKind::ResourceGuard);
        assert!(CellWindow::new(3, 2).is_err());
    }

    #[test]
    fn potential_examples() {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let zero = DisorderRealization::from_values(&c, 0, alloc::vec![0.0; 20]).unwrap();
        assert_eq!(zero.eval_potential(3.5).unwrap(), 0.0);
        let mut vals = alloc::vec![0.3; 20];
        vals[16] = 1.0;
        let r = DisorderRealization::from_values(&c, 0, vals).unwrap();
        assert_relative_eq!(r.eval_potential(16.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(r.eval_potential(16.0).unwrap(), 0.0);
        assert_eq!(r.eval_potential(16.8).unwrap(), 0.0);
        assert!(matches!(r.eval_potential(20.5), Err(Error::OutsideWindow { cell: 20, .. })));
        assert!(r.eval_potential(-0.1).is_err());
        assert!(DisorderRealization::from_values(&c, 0, alloc::vec![2.0]).is_err());
    }
}
