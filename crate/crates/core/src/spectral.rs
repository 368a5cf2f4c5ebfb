//! Dirichlet spectral theory on finite boxes `[a, b]` by exact shooting.
//!
//! Solutions are carried across the piecewise-constant layout as unit
//! directions plus log-scales, so nothing overflows however long the box.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::asymptotics::{fit_stretched_exponential, StretchedFit};
use crate::error::{Error, Result};
use crate::model::{sample_realization, CellWindow, DisorderRealization, ModelConfig};
use crate::quad::simpson_weight;
use crate::sampling::{check_samples, sample_seed, EstimatorResult, Executor, RunningStats};
use crate::transfer::{step, TransferMatrix};

/// Largest `|E|` the shooting routines accept.
pub const ENERGY_CAP: f64 = 1e4;

/// Simpson intervals per unit cell for inner products.
pub const POINTS_PER_CELL: usize = 32;

/// Matching defect above which an energy is not treated as an eigenvalue.
pub const EIGEN_DEFECT_MAX: f64 = 1e-6;

/// Normalized Wronskian below which a Green's function is refused.
pub const WRONSKIAN_MIN: f64 = 1e-8;

/// Box `[a, b]` with Dirichlet conditions at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxSpec {
    pub a: i64,
    pub b: i64,
}

impl BoxSpec {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if b - a < 2 {
            return Err(Error::param("box", alloc::format!("need b - a >= 2, got [{a}, {b}]")));
        }
        Ok(BoxSpec { a, b })
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a) as f64
    }

    /// Cells `a..b` as a realization window.
    pub fn window(&self) -> CellWindow {
        CellWindow { min: self.a, max: self.b - 1 }
    }

    pub fn contains_cell(&self, n: i64) -> bool {
        n >= self.a && n < self.b
    }

    fn check_cell(&self, n: i64, name: &'static str) -> Result<()> {
        if self.contains_cell(n) {
            Ok(())
        } else {
            Err(Error::param(name, alloc::format!("cell {n} is outside the box [{}, {}]", self.a, self.b)))
        }
    }
}

fn check_energy(energy: f64) -> Result<()> {
    if energy.is_finite() && energy.abs() <= ENERGY_CAP {
        Ok(())
    } else {
        Err(Error::EnergyOutOfRange { energy, cap: ENERGY_CAP })
    }
}

/// Constant pieces of the potential across a box.
#[derive(Debug, Clone)]
struct Layout {
    bx: BoxSpec,
    /// Left end of each piece; one extra entry for `b`.
    x: Vec<f64>,
    len: Vec<f64>,
    /// `λV` on the piece.
    q: Vec<f64>,
    /// Unscaled `u` on the piece.
    height: Vec<f64>,
    /// Index of the first piece of each cell, plus a final sentinel.
    cell_first: Vec<usize>,
}

impl Layout {
    fn new(r: &DisorderRealization, bx: BoxSpec) -> Result<Self> {
        r.check_cells(bx.a, bx.b - 1)?;
        let pieces = r.config().single_site.pieces();
        let cells = (bx.b - bx.a) as usize;
        let np = cells * pieces.len();
        let mut l = Layout {
            bx,
            x: Vec::with_capacity(np + 1),
            len: Vec::with_capacity(np),
            q: Vec::with_capacity(np),
            height: Vec::with_capacity(np),
            cell_first: Vec::with_capacity(cells + 1),
        };
        for n in bx.a..bx.b {
            l.cell_first.push(l.len.len());
            let amp = r.amplitude_unchecked(n);
            for p in pieces {
                l.x.push(n as f64 + p.start);
                l.len.push(p.len);
                l.q.push(amp * p.height);
                l.height.push(p.height);
            }
        }
        l.x.push(bx.b as f64);
        l.cell_first.push(l.len.len());
        Ok(l)
    }

    fn pieces(&self) -> usize {
        self.len.len()
    }

    fn step(&self, i: usize, energy: f64, t: f64) -> TransferMatrix {
        step(energy - self.q[i], t)
    }
}

/// Unit direction and log-scale of a solution at every piece boundary.
#[derive(Debug, Clone)]
struct Track {
    dir: Vec<[f64; 2]>,
    log: Vec<f64>,
}

fn normalize(w: [f64; 2]) -> ([f64; 2], f64) {
    let s = w[0].hypot(w[1]);
    ([w[0] / s, w[1] / s], s.ln())
}

/// Solution with `(φ, φ')(a) = (0, 1)`.
fn shoot_left(l: &Layout, energy: f64) -> Track {
    let np = l.pieces();
    let mut t = Track { dir: Vec::with_capacity(np + 1), log: Vec::with_capacity(np + 1) };
    let mut d = [0.0, 1.0];
    let mut lg = 0.0;
    t.dir.push(d);
    t.log.push(lg);
    for i in 0..np {
        let (nd, inc) = normalize(l.step(i, energy, l.len[i]).apply(d));
        d = nd;
        lg += inc;
        t.dir.push(d);
        t.log.push(lg);
    }
    t
}

/// Solution with `(φ, φ')(b) = (0, 1)`.
fn shoot_right(l: &Layout, energy: f64) -> Track {
    let np = l.pieces();
    let mut dir = alloc::vec![[0.0, 0.0]; np + 1];
    let mut log = alloc::vec![0.0; np + 1];
    let mut d = [0.0, 1.0];
    let mut lg = 0.0;
    dir[np] = d;
    for i in (0..np).rev() {
        let (nd, inc) = normalize(l.step(i, energy, l.len[i]).unimodular_inverse().apply(d));
        d = nd;
        lg += inc;
        dir[i] = d;
        log[i] = lg;
    }
    Track { dir, log }
}

fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

/// Number of Dirichlet eigenvalues of the box strictly below `E`, i.e. the
/// zeros in `(a, b)` of the solution with `(φ, φ')(a) = (0, 1)`.
///
/// On a piece with `κ² = E - q > 0` the solution is `A sin(κt + ψ)` and its
/// zeros are counted exactly from `ψ`; otherwise it has at most one zero.
pub fn count_eigenvalues_below(r: &DisorderRealization, bx: BoxSpec, energy: f64) -> Result<usize> {
    if !energy.is_finite() {
        return Err(Error::param("energy", "must be finite"));
    }
    let l = Layout::new(r, bx)?;
    Ok(count_on_layout(&l, energy))
}

fn count_on_layout(l: &Layout, energy: f64) -> usize {
    use core::f64::consts::PI;
    let mut d = [0.0, 1.0];
    let mut zeros: i64 = 0;
    for i in 0..l.pieces() {
        let k2 = energy - l.q[i];
        let w = l.step(i, energy, l.len[i]).apply(d);
        if k2 > 0.0 {
            let k = k2.sqrt();
            let psi = (k * d[0]).atan2(d[1]);
            zeros += ((psi + k * l.len[i]) / PI).floor() as i64 - (psi / PI).floor() as i64;
        } else if d[0] != 0.0 && (w[0] == 0.0 || (w[0] > 0.0) != (d[0] > 0.0)) {
            zeros += 1;
        }
        d = normalize(w).0;
    }
    if d[0] == 0.0 {
        zeros -= 1;
    }
    zeros.max(0) as usize
}

/// Every Dirichlet eigenvalue in `[lo, hi)`, bisected on the counting
/// function to width `tol`, in increasing order.
pub fn locate_eigenvalues(r: &DisorderRealization, bx: BoxSpec, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>> {
    check_energy(lo)?;
    check_energy(hi)?;
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if hi < lo {
        return Err(Error::param("interval", "need lo <= hi"));
    }
    let l = Layout::new(r, bx)?;
    let mut out = Vec::new();
    let clo = count_on_layout(&l, lo);
    let chi = count_on_layout(&l, hi);
    isolate(&l, lo, clo, hi, chi, tol, &mut out);
    Ok(out)
}

fn isolate(l: &Layout, lo: f64, clo: usize, hi: f64, chi: usize, tol: f64, out: &mut Vec<f64>) {
    if chi <= clo {
        return;
    }
    let mid = 0.5 * (lo + hi);
    if hi - lo <= tol || mid <= lo || mid >= hi {
        // a bracket narrower than tol holding several counts would be a
        // multiple eigenvalue; report it once per count so callers see it
        for _ in clo..chi {
            out.push(mid);
        }
        return;
    }
    let cmid = count_on_layout(l, mid);
    isolate(l, lo, clo, mid, cmid, tol, out);
    isolate(l, mid, cmid, hi, chi, tol, out);
}

/// Quadrature nodes aligned with the constant pieces: each piece gets its
/// own even Simpson rule, so piece endpoints appear twice.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub x: Vec<f64>,
    pub weight: Vec<f64>,
    /// Unscaled single-site value `u` on the node's piece.
    pub bump: Vec<f64>,
    /// Node range of each cell: `cell_start[i]..cell_start[i + 1]`.
    pub cell_start: Vec<usize>,
    pub first_cell: i64,
    piece: Vec<usize>,
    offset: Vec<f64>,
}

impl CellGrid {
    fn for_layout(l: &Layout, per_cell: usize) -> Self {
        let mut g = CellGrid {
            x: Vec::new(),
            weight: Vec::new(),
            bump: Vec::new(),
            cell_start: Vec::with_capacity(l.cell_first.len()),
            first_cell: l.bx.a,
            piece: Vec::new(),
            offset: Vec::new(),
        };
        for c in 0..l.cell_first.len() - 1 {
            g.cell_start.push(g.x.len());
            for i in l.cell_first[c]..l.cell_first[c + 1] {
                let n = (2 * ((per_cell as f64 * l.len[i] / 2.0).ceil() as usize)).max(2);
                let h = l.len[i] / n as f64;
                for j in 0..=n {
                    g.x.push(l.x[i] + j as f64 * h);
                    g.weight.push(simpson_weight(j, n, h));
                    g.bump.push(l.height[i]);
                    g.piece.push(i);
                    g.offset.push(j as f64 * h);
                }
            }
        }
        g.cell_start.push(g.x.len());
        g
    }

    pub fn cells(&self) -> usize {
        self.cell_start.len() - 1
    }

    /// Node range of absolute cell `n`.
    pub fn cell_range(&self, n: i64) -> core::ops::Range<usize> {
        let c = (n - self.first_cell) as usize;
        self.cell_start[c]..self.cell_start[c + 1]
    }
}

/// Normalized Dirichlet eigenfunction sampled on a [`CellGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: f64,
    pub bx: BoxSpec,
    pub grid: CellGrid,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Matching defect of the two shots (zero for synthetic profiles).
    pub defect: f64,
}

impl EigenPair {
    /// Builds a pair from `f(cell, t) = (φ, φ')` on `[cell, cell + 1]`,
    /// `t ∈ [0, 1]`, and normalizes it. For synthetic profiles and tests.
    pub fn from_cell_function<F: Fn(i64, f64) -> (f64, f64)>(
        bx: BoxSpec,
        energy: f64,
        per_cell: usize,
        f: F,
    ) -> Result<Self> {
        let n = (2 * per_cell.div_ceil(2)).max(2);
        let h = 1.0 / n as f64;
        let mut grid = CellGrid {
            x: Vec::new(),
            weight: Vec::new(),
            bump: Vec::new(),
            cell_start: Vec::new(),
            first_cell: bx.a,
            piece: Vec::new(),
            offset: Vec::new(),
        };
        let mut phi = Vec::new();
        let mut dphi = Vec::new();
        for (c, cell) in (bx.a..bx.b).enumerate() {
            grid.cell_start.push(grid.x.len());
            for j in 0..=n {
                let t = j as f64 * h;
                let (p, d) = f(cell, t);
                grid.x.push(cell as f64 + t);
                grid.weight.push(simpson_weight(j, n, h));
                grid.bump.push(0.0);
                grid.piece.push(c);
                grid.offset.push(t);
                phi.push(p);
                dphi.push(d);
            }
        }
        grid.cell_start.push(grid.x.len());
        let mut pair = EigenPair { energy, bx, grid, phi, dphi, defect: 0.0 };
        pair.normalize()?;
        Ok(pair)
    }

    fn normalize(&mut self) -> Result<()> {
        let norm2: f64 = self.grid.weight.iter().zip(&self.phi).map(|(w, p)| w * p * p).sum();
        if !(norm2 > 0.0 && norm2.is_finite()) {
            return Err(Error::DegenerateProfile("eigenfunction has zero or non-finite norm".into()));
        }
        let s = 1.0 / norm2.sqrt();
        self.phi.iter_mut().for_each(|p| *p *= s);
        self.dphi.iter_mut().for_each(|p| *p *= s);
        Ok(())
    }

    /// `(x, φ(x), φ'(x))` at every node.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.grid.x.iter().zip(&self.phi).zip(&self.dphi).map(|((x, p), d)| (*x, *p, *d))
    }

    /// `‖χ_n φ‖²`.
    pub fn cell_mass(&self, n: i64) -> f64 {
        self.grid.cell_range(n).map(|i| self.grid.weight[i] * self.phi[i] * self.phi[i]).sum()
    }

    /// `⟨u_m φ, φ⟩ = ∫ u(x - m) φ(x)² dx`.
    pub fn bump_mass(&self, m: i64) -> f64 {
        self.grid.cell_range(m).map(|i| self.grid.weight[i] * self.grid.bump[i] * self.phi[i] * self.phi[i]).sum()
    }

    /// `‖χ_n φ‖` for every cell of the box.
    pub fn cell_norms(&self) -> Vec<f64> {
        (self.bx.a..self.bx.b).map(|n| self.cell_mass(n).sqrt()).collect()
    }

    /// `∫ φ ψ` on the shared grid; both pairs must come from the same box and realization.
    pub fn inner(&self, other: &EigenPair) -> f64 {
        self.grid.weight.iter().zip(&self.phi).zip(&other.phi).map(|((w, a), b)| w * a * b).sum()
    }
}

/// Eigenfunction at a located eigenvalue `E`.
///
/// Shoots from both ends and glues the shots at the piece boundary where
/// the product of their growths is largest (the localization center), so
/// each half is computed in its stable direction.
pub fn eigenfunction(r: &DisorderRealization, bx: BoxSpec, energy: f64) -> Result<EigenPair> {
    check_energy(energy)?;
    let l = Layout::new(r, bx)?;
    let fa = shoot_left(&l, energy);
    let fb = shoot_right(&l, energy);
    let np = l.pieces();
    let c = (1..np).max_by(|&i, &j| (fa.log[i] + fb.log[i]).total_cmp(&(fa.log[j] + fb.log[j]))).unwrap_or(np / 2);
    let defect = cross(fa.dir[c], fb.dir[c]).abs();
    if !(defect <= EIGEN_DEFECT_MAX) {
        return Err(Error::NotAnEigenvalue { energy, defect });
    }
    let sign = if fa.dir[c][0] * fb.dir[c][0] + fa.dir[c][1] * fb.dir[c][1] >= 0.0 { 1.0 } else { -1.0 };
    let grid = CellGrid::for_layout(&l, POINTS_PER_CELL);
    let mut phi = Vec::with_capacity(grid.x.len());
    let mut dphi = Vec::with_capacity(grid.x.len());
    for (&i, &t) in grid.piece.iter().zip(&grid.offset) {
        let (dir, scale) = if i < c {
            (fa.dir[i], (fa.log[i] - fa.log[c]).exp())
        } else {
            (fb.dir[i], sign * (fb.log[i] - fb.log[c]).exp())
        };
        let v = l.step(i, energy, t).apply(dir);
        phi.push(scale * v[0]);
        dphi.push(scale * v[1]);
    }
    let mut pair = EigenPair { energy, bx, grid, phi, dphi, defect };
    pair.normalize()?;
    Ok(pair)
}

/// Wronskian Green's function `G(s, t) = φ_a(min) φ_b(max) / W(φ_a, φ_b)`
/// with `W(f, g) = f g' - f' g`. With this sign `G` is the kernel of
/// `(E - H)^{-1}`.
#[derive(Debug, Clone)]
pub struct GreenSample {
    pub energy: f64,
    pub bx: BoxSpec,
    layout: Layout,
    fa: Track,
    fb: Track,
    /// `log|W|`.
    log_w: f64,
    w_sign: f64,
    /// `cross` of the unit directions at the midpoint.
    normalized_w: f64,
    log_mass_a: Vec<f64>,
    log_mass_b: Vec<f64>,
}

/// Builds the Green's function of the box at `E`; refuses energies whose
/// normalized Wronskian is below [`WRONSKIAN_MIN`].
pub fn green_function(r: &DisorderRealization, bx: BoxSpec, energy: f64) -> Result<GreenSample> {
    check_energy(energy)?;
    let l = Layout::new(r, bx)?;
    let fa = shoot_left(&l, energy);
    let fb = shoot_right(&l, energy);
    let mid = l.cell_first[l.cell_first.len() / 2];
    let cr = cross(fa.dir[mid], fb.dir[mid]);
    if !(cr.abs() >= WRONSKIAN_MIN) {
        return Err(Error::NearEigenvalue { energy, wronskian: cr.abs() });
    }
    let log_w = fa.log[mid] + fb.log[mid] + cr.abs().ln();
    let grid = CellGrid::for_layout(&l, POINTS_PER_CELL);
    let cells = grid.cells();
    let mut log_mass_a = Vec::with_capacity(cells);
    let mut log_mass_b = Vec::with_capacity(cells);
    for c in 0..cells {
        for (track, out) in [(&fa, &mut log_mass_a), (&fb, &mut log_mass_b)] {
            let range = grid.cell_start[c]..grid.cell_start[c + 1];
            let reference = track.log[grid.piece[range.start]];
            let s: f64 = range
                .map(|j| {
                    let i = grid.piece[j];
                    let v = l.step(i, energy, grid.offset[j]).apply(track.dir[i]);
                    let e = (track.log[i] - reference).exp();
                    grid.weight[j] * e * e * (v[0] * v[0])
                })
                .sum();
            out.push(2.0 * reference + s.ln());
        }
    }
    Ok(GreenSample {
        energy,
        bx,
        layout: l,
        fa,
        fb,
        log_w,
        w_sign: cr.signum(),
        normalized_w: cr,
        log_mass_a,
        log_mass_b,
    })
}

impl GreenSample {
    fn piece_at(&self, x: f64) -> Result<usize> {
        if !(x >= self.bx.a as f64 && x <= self.bx.b as f64) {
            return Err(Error::param("x", alloc::format!("{x} is outside the box")));
        }
        let i = self.layout.x.partition_point(|&p| p <= x).saturating_sub(1);
        Ok(i.min(self.layout.pieces() - 1))
    }

    /// `(log scale, unit-ish value)` of a shot at `x`.
    fn eval(&self, track: &Track, x: f64) -> Result<(f64, f64)> {
        let i = self.piece_at(x)?;
        let v = self.layout.step(i, self.energy, x - self.layout.x[i]).apply(track.dir[i]);
        Ok((track.log[i], v[0]))
    }

    /// `W(φ_a, φ_b)` for the shots normalized by `(φ, φ') = (0, 1)` at their ends.
    pub fn wronskian(&self) -> f64 {
        self.w_sign * self.log_w.exp()
    }

    /// `W` computed from the unit directions at the midpoint; its size
    /// measures the distance to the spectrum.
    pub fn normalized_wronskian(&self) -> f64 {
        self.normalized_w
    }

    /// Kernel `G(s, t)`.
    pub fn kernel(&self, s: f64, t: f64) -> Result<f64> {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let (la, va) = self.eval(&self.fa, lo)?;
        let (lb, vb) = self.eval(&self.fb, hi)?;
        Ok(self.w_sign * (la + lb - self.log_w).exp() * va * vb)
    }

    /// `log ‖χ_x G χ_y‖_HS`.
    pub fn log_cell_norm(&self, x: i64, y: i64) -> Result<f64> {
        self.bx.check_cell(x, "x")?;
        self.bx.check_cell(y, "y")?;
        let (cx, cy) = ((x - self.bx.a) as usize, (y - self.bx.a) as usize);
        if x != y {
            let (lo, hi) = if cx < cy { (cx, cy) } else { (cy, cx) };
            return Ok(0.5 * (self.log_mass_a[lo] + self.log_mass_b[hi]) - self.log_w);
        }
        Ok(0.5 * self.log_diagonal(cx) - self.log_w)
    }

    /// Hilbert–Schmidt norm `‖χ_x G χ_y‖`, an upper bound for the operator norm.
    pub fn cell_norm(&self, x: i64, y: i64) -> Result<f64> {
        self.log_cell_norm(x, y).map(f64::exp)
    }

    /// `log ∫∫_{cell²} (φ_a(min) φ_b(max))²`, via `2 ∫ φ_b(t)² ∫_n^t φ_a² dt`.
    fn log_diagonal(&self, c: usize) -> f64 {
        let l = &self.layout;
        let first = l.cell_first[c];
        let (ra, rb) = (self.fa.log[first], self.fb.log[first]);
        let mut acc_a = 0.0;
        let mut total = 0.0;
        for i in first..l.cell_first[c + 1] {
            let n = (2 * ((64.0 * l.len[i]).ceil() as usize)).max(2);
            let h = l.len[i] / n as f64;
            let ea = (self.fa.log[i] - ra).exp();
            let eb = (self.fb.log[i] - rb).exp();
            let fa2: Vec<f64> =
                (0..=n).map(|j| (ea * l.step(i, self.energy, j as f64 * h).apply(self.fa.dir[i])[0]).powi(2)).collect();
            let fb2: Vec<f64> =
                (0..=n).map(|j| (eb * l.step(i, self.energy, j as f64 * h).apply(self.fb.dir[i])[0]).powi(2)).collect();
            // cumulative ∫ fa2: Simpson on even nodes, quadratic partial panel on odd ones
            let mut cum = alloc::vec![0.0; n + 1];
            cum[0] = acc_a;
            for j in (0..n).step_by(2) {
                cum[j + 1] = cum[j] + h / 12.0 * (5.0 * fa2[j] + 8.0 * fa2[j + 1] - fa2[j + 2]);
                cum[j + 2] = cum[j] + h / 3.0 * (fa2[j] + 4.0 * fa2[j + 1] + fa2[j + 2]);
            }
            acc_a = cum[n];
            total += (0..=n).map(|j| simpson_weight(j, n, h) * fb2[j] * cum[j]).sum::<f64>();
        }
        2.0 * (ra + rb) + (2.0 * total).ln()
    }
}

fn check_s_green(s: f64) -> Result<()> {
    if s > 0.0 && s < 0.5 {
        Ok(())
    } else {
        Err(Error::param("s", alloc::format!("must lie in (0, 1/2), got {s}")))
    }
}

/// `E[‖χ_x G χ_y‖^s]`, skipping near-eigenvalue samples.
pub fn fractional_moment_green<X: Executor>(
    config: &ModelConfig,
    bx: BoxSpec,
    x: i64,
    y: i64,
    energy: f64,
    s: f64,
    n_samples: u64,
    root_seed: u64,
    exec: &X,
) -> Result<EstimatorResult> {
    let mut v = fractional_moment_green_profile(config, bx, &[x], y, energy, s, n_samples, root_seed, exec)?;
    Ok(v.remove(0))
}

/// [`fractional_moment_green`] for every `x` in `xs` on shared realizations.
///
/// Fails with [`Error::RejectionRate`] when more than 20% of the samples sit
/// too close to an eigenvalue.
pub fn fractional_moment_green_profile<X: Executor>(
    config: &ModelConfig,
    bx: BoxSpec,
    xs: &[i64],
    y: i64,
    energy: f64,
    s: f64,
    n_samples: u64,
    root_seed: u64,
    exec: &X,
) -> Result<Vec<EstimatorResult>> {
    check_samples(n_samples)?;
    check_s_green(s)?;
    check_energy(energy)?;
    bx.check_cell(y, "y")?;
    for &x in xs {
        bx.check_cell(x, "x")?;
    }
    let per_sample = exec.map_indexed(n_samples, |i| -> Result<Option<Vec<f64>>> {
        let r = sample_realization(config, bx.window(), sample_seed(root_seed, i))?;
        match green_function(&r, bx, energy) {
            Ok(g) => {
                xs.iter().map(|&x| g.log_cell_norm(x, y).map(|l| (s * l).exp())).collect::<Result<Vec<_>>>().map(Some)
            }
            Err(Error::NearEigenvalue { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let per_sample: Vec<Option<Vec<f64>>> = per_sample.into_iter().collect::<Result<_>>()?;
    let rejected = per_sample.iter().filter(|v| v.is_none()).count();
    if rejected * 5 > per_sample.len() {
        return Err(Error::RejectionRate { rejected, total: per_sample.len() });
    }
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mut st = RunningStats::default();
            per_sample.iter().flatten().for_each(|v| st.push(v[k]));
            let mut e = EstimatorResult::from_stats(&st, root_seed)
                .with_meta("x", x as f64)
                .with_meta("y", y as f64)
                .with_meta("s", s)
                .with_meta("energy", energy);
            e.rejections = rejected as u64;
            e
        })
        .collect())
}

/// Eigenpairs with eigenvalues in `[lo, hi)`.
pub fn eigenpairs_in(r: &DisorderRealization, bx: BoxSpec, lo: f64, hi: f64) -> Result<Vec<EigenPair>> {
    locate_eigenvalues(r, bx, lo, hi, 1e-12)?.into_iter().map(|e| eigenfunction(r, bx, e)).collect()
}

/// `Q(x, m; I, v) = Σ_{E_n ∈ I} ⟨χ_x φ_n, φ_n⟩^{v/2} ⟨u_m φ_n, φ_n⟩^{1 - v/2}`.
pub fn eigenfunction_correlator(
    r: &DisorderRealization,
    bx: BoxSpec,
    x: i64,
    m: i64,
    interval: (f64, f64),
    v: f64,
) -> Result<f64> {
    bx.check_cell(x, "x")?;
    bx.check_cell(m, "m")?;
    let pairs = eigenpairs_in(r, bx, interval.0, interval.1)?;
    correlator_from_pairs(&pairs, x, m, v)
}

/// [`eigenfunction_correlator`] over already computed eigenpairs.
pub fn correlator_from_pairs(pairs: &[EigenPair], x: i64, m: i64, v: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&v) {
        return Err(Error::param("v", alloc::format!("must lie in [0, 2], got {v}")));
    }
    // 0^0 = 1, matching the v = 0 and v = 2 endpoint definitions
    let pow = |b: f64, e: f64| if e == 0.0 { 1.0 } else { b.max(0.0).powf(e) };
    Ok(pairs.iter().map(|p| pow(p.cell_mass(x), v / 2.0) * pow(p.bump_mass(m), 1.0 - v / 2.0)).sum())
}

/// Cell-norm profile of an eigenfunction and its stretched fit in
/// `|x - x_max|^{1-2α}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub fit: StretchedFit,
    pub center: i64,
    pub cell_norms: Vec<f64>,
}

pub fn decay_profile(pair: &EigenPair, alpha: f64) -> Result<DecayProfile> {
    let norms = pair.cell_norms();
    let imax = norms.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    if imax < 10 || norms.len() - 1 - imax < 10 {
        return Err(Error::DegenerateProfile(alloc::format!(
            "maximum at cell {} leaves fewer than 10 cells on one side",
            pair.bx.a + imax as i64
        )));
    }
    if norms.iter().enumerate().all(|(i, &v)| i == imax || v == 0.0) {
        return Err(Error::DegenerateProfile("all mass sits in one cell".into()));
    }
    if norms.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateProfile("a cell carries no mass".into()));
    }
    let xs: Vec<f64> = (0..norms.len()).map(|i| (i as f64 - imax as f64).abs()).collect();
    let fit = fit_stretched_exponential(&xs, &norms, 1.0 - 2.0 * alpha)?;
    Ok(DecayProfile { fit, center: pair.bx.a + imax as i64, cell_norms: norms })
}

pub type Gram = [[f64; 2]; 2];

/// Gram matrix `∫_n^{n+1} φ_i φ_j` of the solutions with data `e_1`, `e_2` at `n`,
/// and the same weighted by `u(x - n)`.
pub fn cell_gram(r: &DisorderRealization, n: i64, energy: f64) -> Result<(Gram, Gram)> {
    r.check_cells(n, n)?;
    let bx = BoxSpec { a: n, b: n + 1 };
    let l = Layout::new(r, bx)?;
    let grid = CellGrid::for_layout(&l, 4 * POINTS_PER_CELL);
    let mut g = [[0.0; 2]; 2];
    let mut gu = [[0.0; 2]; 2];
    // data at the start of each piece for both basis solutions
    let mut starts = Vec::with_capacity(l.pieces());
    let mut cur = TransferMatrix::IDENTITY;
    for i in 0..l.pieces() {
        starts.push(cur);
        cur = l.step(i, energy, l.len[i]).mul(&cur);
    }
    for j in 0..grid.x.len() {
        let i = grid.piece[j];
        let m = l.step(i, energy, grid.offset[j]).mul(&starts[i]);
        // first row of m: φ of the two basis solutions
        let (p1, p2) = (m.a, m.b);
        let w = grid.weight[j];
        let wu = w * grid.bump[j];
        g[0][0] += w * p1 * p1;
        g[0][1] += w * p1 * p2;
        g[1][1] += w * p2 * p2;
        gu[0][0] += wu * p1 * p1;
        gu[0][1] += wu * p1 * p2;
        gu[1][1] += wu * p2 * p2;
    }
    g[1][0] = g[0][1];
    gu[1][0] = gu[0][1];
    Ok((g, gu))
}

fn sym_min_eig(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let d = (m[0][0] - m[1][1]).hypot(2.0 * m[0][1]);
    // stable smaller root: det / larger root
    let big = 0.5 * (tr + d);
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    if big > 0.0 {
        det / big
    } else {
        0.5 * (tr - d)
    }
}

/// Largest `C` with `‖χ_n φ‖ ≥ C (φ(n)² + φ'(n)²)^{1/2}` for every solution at `E`.
pub fn cell_lower_constant(r: &DisorderRealization, n: i64, energy: f64) -> Result<f64> {
    let (g, _) = cell_gram(r, n, energy)?;
    Ok(sym_min_eig(g).max(0.0).sqrt())
}

/// Largest `c` with `⟨u_n φ, φ⟩ ≥ c ‖χ_n φ‖²` for every solution at `E`
/// (generalized minimum eigenvalue of the two Gram matrices).
pub fn bump_to_cell_constant(r: &DisorderRealization, n: i64, energy: f64) -> Result<f64> {
    let (g, gu) = cell_gram(r, n, energy)?;
    // Cholesky of g, then min eigenvalue of L⁻¹ gu L⁻ᵀ
    let l11 = g[0][0].sqrt();
    let l21 = g[1][0] / l11;
    let l22 = (g[1][1] - l21 * l21).max(0.0).sqrt();
    if !(l11 > 0.0 && l22 > 0.0) {
        return Err(Error::Numerical("singular cell Gram matrix".into()));
    }
    let a = gu[0][0] / (l11 * l11);
    let b = (gu[0][1] - l21 * a * l11) / (l11 * l22);
    let c = (gu[1][1] - 2.0 * l21 * gu[0][1] / l11 + l21 * l21 * gu[0][0] / (l11 * l11)) / (l22 * l22);
    Ok(sym_min_eig([[a, b], [b, c]]).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DisorderSpec;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;

    fn free(a: i64, b: i64) -> (DisorderRealization, BoxSpec) {
        let c = ModelConfig::standard(0.25, 1.0).unwrap().with_disorder(DisorderSpec::degenerate());
        let r = sample_realization(&c, CellWindow::new(a, b - 1).unwrap(), 0).unwrap();
        (r, BoxSpec::new(a, b).unwrap())
    }

    fn random(a: i64, b: i64, seed: u64) -> (DisorderRealization, BoxSpec) {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(a, b - 1).unwrap(), seed).unwrap();
        (r, BoxSpec::new(a, b).unwrap())
    }

    #[test]
    fn box_validation() {
        assert!(BoxSpec::new(0, 1).is_err());
        assert!(BoxSpec::new(0, 2).is_ok());
    }

    #[test]
    fn free_counts() {
        let (r, _) = free(0, 2);
        // unit box: the layout still spans whole cells, so use [0, 2] scaled eigenvalues (mπ/2)²
        let bx = BoxSpec { a: 0, b: 2 };
        assert_eq!(count_eigenvalues_below(&r, bx, 50.0).unwrap(), 4);
        assert_eq!(count_eigenvalues_below(&r, bx, -1.0).unwrap(), 0);
        // exactly at an eigenvalue the count is strict
        assert_eq!(count_eigenvalues_below(&r, bx, PI * PI).unwrap(), 1);
    }

    #[test]
    fn counts_monotone_in_energy() {
        let (r, bx) = random(-10, 10, 3);
        let mut prev = 0;
        for i in 0..400 {
            let c = count_eigenvalues_below(&r, bx, -2.0 + i as f64 * 0.05).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(count_eigenvalues_below(&r, bx, -3.0).unwrap(), 0);
    }

    #[test]
    fn free_spectrum_located() {
        let (r, bx) = free(0, 3);
        let eigs = locate_eigenvalues(&r, bx, 0.0, 50.0, 1e-12).unwrap();
        let want: Vec<f64> = (1..=6).map(|m| (m as f64 * PI / 3.0).powi(2)).filter(|e| *e < 50.0).collect();
        assert_eq!(eigs.len(), want.len());
        for (e, w) in eigs.iter().zip(&want) {
            assert!((e - w).abs() < 1e-10);
        }
        assert!(locate_eigenvalues(&r, bx, 0.0, 2e4, 1e-9).is_err());
        assert!(locate_eigenvalues(&r, bx, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn free_eigenfunction_is_sine() {
        let (r, bx) = free(0, 2);
        let e = (PI / 2.0).powi(2);
        let p = eigenfunction(&r, bx, e).unwrap();
        let sign = p.phi[p.phi.len() / 2].signum();
        for (x, phi, _) in p.samples() {
            assert!((sign * phi - (PI * x / 2.0).sin()).abs() < 1e-9);
        }
        assert!(matches!(eigenfunction(&r, bx, 3.0), Err(Error::NotAnEigenvalue { .. })));
    }

    #[test]
    fn eigenfunctions_orthonormal() {
        let (r, bx) = random(-8, 8, 5);
        let pairs = eigenpairs_in(&r, bx, 0.0, 6.0).unwrap();
        assert!(pairs.len() >= 4);
        for (i, p) in pairs.iter().enumerate() {
            assert!((p.inner(p) - 1.0).abs() < 1e-8);
            assert!(p.phi[0].abs() < 1e-8 && p.phi[p.phi.len() - 1].abs() < 1e-8);
            for q in &pairs[i + 1..] {
                assert!(p.inner(q).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn free_green_diagonal() {
        let (r, bx) = free(0, 2);
        // box of length 2 at k = π/4 has the same G(1, 1) as the unit box at k = π/2, halved in scale
        let k: f64 = PI / 4.0;
        let g = green_function(&r, bx, k * k).unwrap();
        let want = (k * 1.0).sin() * (k * 1.0).sin() / (-k * (2.0 * k).sin());
        assert_relative_eq!(g.kernel(1.0, 1.0).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn green_symmetry_and_equation() {
        let (r, bx) = random(-5, 5, 8);
        let e = 1.37;
        let g = green_function(&r, bx, e).unwrap();
        for (s, t) in [(-4.3, 2.2), (0.1, 0.7), (3.9, -1.25)] {
            let a = g.kernel(s, t).unwrap();
            let b = g.kernel(t, s).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
        // -G'' + (V - E) G = 0 away from the source, checked inside a constant piece
        let t = 3.5;
        let x = -2.6; // inside the bump of cell -3
        let h = 1e-3;
        let v = r.eval_potential(x).unwrap();
        let f = |s: f64| g.kernel(s, t).unwrap();
        let lap = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        assert!((-lap + (v - e) * f(x)).abs() < 1e-5 * f(x).abs().max(1.0));
    }

    #[test]
    fn green_hs_matches_quadrature() {
        let (r, bx) = random(0, 6, 2);
        let g = green_function(&r, bx, 0.9).unwrap();
        let n = 400;
        let h = 1.0 / n as f64;
        let brute = |x: i64, y: i64| {
            let mut acc = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    let wi = crate::quad::simpson_weight(i, n, h);
                    let wj = crate::quad::simpson_weight(j, n, h);
                    let k = g.kernel(x as f64 + i as f64 * h, y as f64 + j as f64 * h).unwrap();
                    acc += wi * wj * k * k;
                }
            }
            acc.sqrt()
        };
        // the uniform rule straddles the jumps of V, so it is only second order there
        assert_relative_eq!(g.cell_norm(1, 4).unwrap(), brute(1, 4), max_relative = 1e-6);
        // diagonal has a kink on s = t, so the tensor rule converges slowly
        assert_relative_eq!(g.cell_norm(2, 2).unwrap(), brute(2, 2), max_relative = 1e-4);
    }

    #[test]
    fn correlator_endpoints() {
        let (r, bx) = random(-6, 6, 9);
        let pairs = eigenpairs_in(&r, bx, 0.2, 4.0).unwrap();
        let v2 = correlator_from_pairs(&pairs, 1, 2, 2.0).unwrap();
        let direct: f64 = pairs.iter().map(|p| p.cell_mass(1)).sum();
        assert_relative_eq!(v2, direct, epsilon = 1e-14);
        let v0 = correlator_from_pairs(&pairs, 1, 2, 0.0).unwrap();
        let direct: f64 = pairs.iter().map(|p| p.bump_mass(2)).sum();
        assert_relative_eq!(v0, direct, epsilon = 1e-14);
        assert!(correlator_from_pairs(&pairs, 1, 2, 2.5).is_err());
        assert!(eigenfunction_correlator(&r, bx, 0, 0, (50.0, 50.5), 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn synthetic_decay_profile() {
        let bx = BoxSpec::new(-30, 31).unwrap();
        let p = EigenPair::from_cell_function(bx, 1.0, 32, |n, _| ((-(n.abs() as f64).sqrt()).exp(), 0.0)).unwrap();
        let d = decay_profile(&p, 0.25).unwrap();
        assert_eq!(d.center, 0);
        assert!((d.fit.rate - 1.0).abs() < 1e-6 && (d.fit.r_squared - 1.0).abs() < 1e-6);
        let edge = EigenPair::from_cell_function(bx, 1.0, 32, |n, _| ((-((n + 28).abs() as f64)).exp(), 0.0)).unwrap();
        assert!(matches!(decay_profile(&edge, 0.25), Err(Error::DegenerateProfile(_))));
    }

    #[test]
    fn free_eigenfunction_does_not_decay() {
        let (r, bx) = free(0, 40);
        let d = eigenpairs_in(&r, bx, 0.9, 1.5).unwrap().iter().find_map(|p| decay_profile(p, 0.25).ok()).unwrap();
        assert!(d.fit.rate.abs() < 0.2, "rate {}", d.fit.rate);
    }

    #[test]
    fn cell_constants_bound_solutions() {
        let (r, _) = random(0, 4, 1);
        for n in 0..4 {
            let e = 0.7 + n as f64;
            let c = cell_lower_constant(&r, n, e).unwrap();
            let cu = bump_to_cell_constant(&r, n, e).unwrap();
            assert!(c > 0.0 && cu > 0.0 && cu < 1.0);
            for k in 0..16 {
                let th = k as f64 * PI / 16.0;
                let (g, gu) = cell_gram(&r, n, e).unwrap();
                let v = [th.cos(), th.sin()];
                let q = |m: [[f64; 2]; 2]| m[0][0] * v[0] * v[0] + 2.0 * m[0][1] * v[0] * v[1] + m[1][1] * v[1] * v[1];
                assert!(q(g).sqrt() >= c * (1.0 - 1e-12));
                assert!(q(gu) >= cu * q(g) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn unit_box_examples() {
        let (r, _) = free(0, 2);
        let bx = BoxSpec { a: 0, b: 1 };
        assert_eq!(count_eigenvalues_below(&r, bx, 50.0).unwrap(), 2);
        let eigs = locate_eigenvalues(&r, bx, 0.0, 50.0, 1e-12).unwrap();
        assert_eq!(eigs.len(), 2);
        assert!((eigs[0] - PI * PI).abs() < 1e-10 && (eigs[1] - 4.0 * PI * PI).abs() < 1e-10);
        let g = green_function(&r, bx, PI * PI / 4.0).unwrap();
        assert!((g.kernel(0.5, 0.5).unwrap() + 1.0 / PI).abs() < 1e-12);
        let p = eigenfunction(&r, bx, eigs[0]).unwrap();
        let sign = p.phi[p.phi.len() / 2].signum();
        for (x, phi, _) in p.samples() {
            assert!((sign * phi - 2f64.sqrt() * (PI * x).sin()).abs() < 1e-9);
        }
    }
}
