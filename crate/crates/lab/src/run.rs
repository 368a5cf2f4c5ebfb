//! Experiment dispatch: one function per kind, each filling a [`RunRecord`].

use std::f64::consts::TAU;
use std::time::Instant;

use anderson_core::asymptotics::{
    beta_closed_form, block_statistics, estimate_lyapunov, estimate_negative_moment_profile, fit_stretched_exponential,
    sum_envelope, Convention,
};
use anderson_core::dynamics::{
    ballistic_horizon, correlator_profile, kappa_moment_with, transport_scan, DiscretizedBox,
};
use anderson_core::pruefer::martingale_decompose;
use anderson_core::sampling::{auxiliary_rng, sample_seed, uniform, RunningStats};
use anderson_core::spectral::{decay_profile, eigenpairs_in, fractional_moment_green_profile, BoxSpec};
use anderson_core::{sample_realization, CellWindow, Error as CoreError, EstimatorResult, Executor, ModelConfig};

use crate::error::Result;
use crate::record::{Coord, RunRecord};
use crate::spec::{ExperimentSpec, Kind, Params};

/// Runs `spec` on `exec`. Numeric content depends only on the experiment config.
pub fn run<X: Executor>(spec: &ExperimentSpec, exec: &X) -> Result<RunRecord> {
    let started = Instant::now();
    let columns: &[&str] = match spec.kind {
        Kind::LyapunovScan => &["energy"],
        Kind::BlockStats => &["l", "moment"],
        Kind::NegativeMoment => &["n"],
        Kind::GreenDecay => &["x"],
        Kind::EigenDecay => &["sample", "energy", "center", "r_squared"],
        Kind::CorrelatorDecay => &["x"],
        Kind::KappaDichotomy => &["kappa", "half_length"],
        Kind::TransportCritical => &["T"],
        Kind::MartingaleDiagnostic => &["n", "term"],
    };
    let mut rec = RunRecord::new(spec.kind.name(), spec.to_value(), spec.hash(), columns);
    let (c, ns, seed) = (&spec.model, spec.n_samples, spec.root_seed);
    match &spec.params {
        Params::LyapunovScan { energies, n } => lyapunov(&mut rec, c, energies, *n, ns, seed, exec)?,
        Params::BlockStats { energy, n0, blocks } => {
            for &l in blocks {
                let (first, second) = block_statistics(c, *energy, l, *n0, ns, seed, exec)?;
                rec.push(vec![l.into(), 1u64.into()], first);
                rec.push(vec![l.into(), 2u64.into()], second);
            }
        }
        Params::NegativeMoment { energy, s, m, ns: ends } => {
            let rows = estimate_negative_moment_profile(c, *energy, *m, ends, *s, ns, seed, exec)?;
            let dist: Vec<f64> = ends.iter().map(|n| (n - m).abs() as f64).collect();
            profile_fit(&mut rec, &dist, &rows, 1.0 - 2.0 * c.alpha, "")?;
            for (n, row) in ends.iter().zip(rows) {
                rec.push(vec![(*n).into()], row);
            }
        }
        Params::GreenDecay { energy, s, bx, y, xs } => {
            let rows = fractional_moment_green_profile(c, *bx, xs, *y, *energy, *s, ns, seed, exec)?;
            let dist: Vec<f64> = xs.iter().map(|x| (x - y).abs() as f64).collect();
            profile_fit(&mut rec, &dist, &rows, 1.0 - 2.0 * c.alpha, "")?;
            rec.rejections = rows.first().map_or(0, |r| r.rejections);
            for (x, row) in xs.iter().zip(rows) {
                rec.push(vec![(*x).into()], row);
            }
        }
        Params::EigenDecay { bx, interval } => eigen_decay(&mut rec, c, *bx, *interval, ns, seed, exec)?,
        Params::CorrelatorDecay { bx, interval, y, xs, per_cell, gammas } => {
            let per_sample = collect(exec.map_indexed(ns, |i| {
                let r = sample_realization(c, bx.window(), sample_seed(seed, i))?;
                let dbox = DiscretizedBox::new(&r, *bx, *per_cell)?;
                correlator_profile(&dbox, xs, *y, *interval)
            }))?;
            let rows = fold_columns(&per_sample, xs.len(), seed);
            let dist: Vec<f64> = xs.iter().map(|x| (x - y).abs() as f64).collect();
            let mut best: Option<(f64, f64)> = None;
            for &g in gammas {
                let r2 = profile_fit(&mut rec, &dist, &rows, g, &format!("[gamma={g}]"))?;
                if best.is_none_or(|(_, b)| r2 > b) {
                    best = Some((g, r2));
                }
            }
            if let Some((g, _)) = best {
                rec.fit("best_gamma", g);
                rec.verdict("best_gamma", format!("{g}"));
            }
            for (x, row) in xs.iter().zip(rows) {
                rec.push(vec![(*x).into()], row);
            }
        }
        Params::KappaDichotomy { half_lengths, kappas, interval, n_times, per_cell } => {
            kappa_dichotomy(&mut rec, c, half_lengths, kappas, *interval, *n_times, *per_cell, ns, seed, exec)?
        }
        Params::TransportCritical { bx, window, p, times, per_cell } => {
            let scan = transport_scan(c, *p, *window, times, *bx, *per_cell, ns, seed, exec)?;
            rec.fit("slope", scan.slope);
            rec.fit("slope_std_error", scan.slope_std_error);
            rec.fit("realization_slope_mean", scan.realization_slopes.mean);
            rec.fit("realization_slope_std_error", scan.realization_slopes.std_error);
            rec.fit("horizon", ballistic_horizon(*bx, window.support().1));
            for (t, row) in scan.times.iter().zip(scan.rows) {
                rec.push(vec![(*t).into()], row);
            }
        }
        Params::MartingaleDiagnostic { energy, m, ns: ends } => {
            martingale(&mut rec, c, *energy, *m, ends, ns, seed, exec)?
        }
    }
    rec.wall_time_s = started.elapsed().as_secs_f64().into();
    Ok(rec)
}

fn collect<T>(v: Vec<anderson_core::Result<T>>) -> Result<Vec<T>> {
    Ok(v.into_iter().collect::<anderson_core::Result<Vec<T>>>()?)
}

/// Column-wise estimates over per-sample rows of equal length.
fn fold_columns(per_sample: &[Vec<f64>], width: usize, seed: u64) -> Vec<EstimatorResult> {
    (0..width)
        .map(|j| {
            let mut st = RunningStats::default();
            per_sample.iter().for_each(|v| st.push(v[j]));
            EstimatorResult::from_stats(&st, seed)
        })
        .collect()
}

/// Stretched fit of the row means against `dist^gamma`; stores
/// `rate`, `intercept`, `r_squared` and `gamma` (suffixed) and returns `r²`.
fn profile_fit(rec: &mut RunRecord, dist: &[f64], rows: &[EstimatorResult], gamma: f64, suffix: &str) -> Result<f64> {
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let fit = fit_stretched_exponential(dist, &means, gamma)?;
    rec.fit(&format!("rate{suffix}"), fit.rate);
    rec.fit(&format!("intercept{suffix}"), fit.intercept);
    rec.fit(&format!("r_squared{suffix}"), fit.r_squared);
    rec.fit(&format!("gamma{suffix}"), gamma);
    Ok(fit.r_squared)
}

fn lyapunov<X: Executor>(
    rec: &mut RunRecord,
    c: &ModelConfig,
    energies: &[f64],
    n: u64,
    ns: u64,
    seed: u64,
    exec: &X,
) -> Result<()> {
    for &e in energies {
        let est = estimate_lyapunov(c, e, n, ns, seed, exec)?;
        if let Some(&v) = est.metadata.get("verdict") {
            let name = match v as u8 {
                1 => Convention::TwoK.name(),
                2 => Convention::SqrtE.name(),
                _ => "undecided",
            };
            rec.verdict(&format!("convention[E={e}]"), name);
            for conv in [Convention::TwoK, Convention::SqrtE] {
                rec.fit(&format!("beta_{}[E={e}]", conv.name()), beta_closed_form(c, e, conv)?);
            }
        }
        rec.push(vec![e.into()], est);
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn eigen_decay<X: Executor>(
    rec: &mut RunRecord,
    c: &ModelConfig,
    bx: BoxSpec,
    interval: (f64, f64),
    ns: u64,
    seed: u64,
    exec: &X,
) -> Result<()> {
    type Row = (f64, i64, f64, f64);
    // per realization: fitted states and the number of skipped ones
    let per_sample = collect(exec.map_indexed(ns, |i| -> anderson_core::Result<(Vec<Row>, u64)> {
        let r = sample_realization(c, bx.window(), sample_seed(seed, i))?;
        let mut rows = Vec::new();
        let mut skipped = 0;
        for pair in eigenpairs_in(&r, bx, interval.0, interval.1)? {
            match decay_profile(&pair, c.alpha) {
                Ok(p) => rows.push((pair.energy, p.center, p.fit.r_squared, p.fit.rate)),
                Err(CoreError::DegenerateProfile(_) | CoreError::NotAnEigenvalue { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((rows, skipped))
    }))?;
    let (mut r2, mut rates) = (Vec::new(), Vec::new());
    let mut realizations = 0u64;
    for (i, (rows, skipped)) in per_sample.iter().enumerate() {
        rec.rejections += skipped;
        realizations += u64::from(!rows.is_empty());
        for &(e, center, q, rate) in rows {
            r2.push(q);
            rates.push(rate);
            let mut est = EstimatorResult::from_samples(&[rate], seed);
            est.n_samples = 1;
            rec.push(vec![(i as u64).into(), e.into(), center.into(), q.into()], est);
        }
    }
    rec.fit("n_states", r2.len() as f64);
    rec.fit("n_realizations", realizations as f64);
    rec.fit("median_r_squared", median(&mut r2));
    rec.fit("median_rate", median(&mut rates));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn kappa_dichotomy<X: Executor>(
    rec: &mut RunRecord,
    c: &ModelConfig,
    half_lengths: &[i64],
    kappas: &[f64],
    interval: (f64, f64),
    n_times: usize,
    per_cell: usize,
    ns: u64,
    seed: u64,
    exec: &X,
) -> Result<()> {
    let mut ls = half_lengths.to_vec();
    ls.sort_unstable();
    ls.dedup();
    let largest = *ls.last().expect("validated nonempty");
    let boxes: Vec<BoxSpec> = ls.iter().map(|&l| BoxSpec::new(-l, l)).collect::<anderson_core::Result<_>>()?;
    // every box is probed up to the horizon of the smallest one
    let horizon = ballistic_horizon(boxes[0], interval.1);
    let times: Vec<f64> = (0..n_times).map(|j| horizon * j as f64 / (n_times - 1) as f64).collect();
    let window = CellWindow::new(-largest, largest - 1)?;
    // per sample: sup-moments indexed [box][kappa], all boxes nested in one realization
    let per_sample = collect(exec.map_indexed(ns, |i| -> anderson_core::Result<Vec<f64>> {
        let r = sample_realization(c, window, sample_seed(seed, i))?;
        let mut out = Vec::with_capacity(boxes.len() * kappas.len());
        for &bx in &boxes {
            let dbox = DiscretizedBox::new(&r, bx, per_cell)?;
            let sys = dbox.spectrum(interval.0, interval.1);
            let psi = dbox.cell_state(0)?;
            for &k in kappas {
                out.push(kappa_moment_with(&dbox, &sys, k, &psi, &times)?.sup);
            }
        }
        Ok(out)
    }))?;
    let rows = fold_columns(&per_sample, boxes.len() * kappas.len(), seed);
    for (ki, &k) in kappas.iter().enumerate() {
        let small = rows[ki].mean;
        let large = rows[(boxes.len() - 1) * kappas.len() + ki].mean;
        rec.fit(&format!("relative_change[kappa={k}]"), large / small - 1.0);
    }
    rec.fit("horizon", horizon);
    for (bi, &l) in ls.iter().enumerate() {
        for (ki, &k) in kappas.iter().enumerate() {
            let row = rows[bi * kappas.len() + ki].clone().with_meta("horizon", horizon);
            rec.push(vec![k.into(), l.into()], row);
        }
    }
    Ok(())
}

pub const MARTINGALE_TERMS: [&str; 6] = ["term1", "term2", "term3", "term4", "residual", "log_r_increment"];

#[allow(clippy::too_many_arguments)]
fn martingale<X: Executor>(
    rec: &mut RunRecord,
    c: &ModelConfig,
    energy: f64,
    m: i64,
    ends: &[i64],
    ns: u64,
    seed: u64,
    exec: &X,
) -> Result<()> {
    if m < 1 {
        return Err(crate::error::LabError::spec("m", "the decomposition lives on cells j >= 1"));
    }
    if let Some(&n) = ends.iter().find(|&&n| n <= m) {
        return Err(crate::error::LabError::spec("ns", format!("every n must exceed m, got {n}")));
    }
    let far = *ends.iter().max().expect("validated nonempty");
    let window = CellWindow::new(m, far - 1)?;
    let w = MARTINGALE_TERMS.len();
    let per_sample = collect(exec.map_indexed(ns, |i| -> anderson_core::Result<Vec<f64>> {
        let s = sample_seed(seed, i);
        let r = sample_realization(c, window, s)?;
        let theta0 = TAU * uniform(&mut auxiliary_rng(s));
        let mut out = Vec::with_capacity(ends.len() * w);
        for &n in ends {
            let d = martingale_decompose(&r, m, n, energy, theta0)?;
            let norm = sum_envelope(m as u64, (n - 1) as u64, 2.0 * c.alpha)?;
            for t in [d.term1, d.term2, d.term3, d.term4, d.residual, d.log_r_increment] {
                out.push(t / norm);
            }
        }
        Ok(out)
    }))?;
    let rows = fold_columns(&per_sample, ends.len() * w, seed);
    for conv in [Convention::TwoK, Convention::SqrtE] {
        rec.fit(&format!("beta_{}", conv.name()), beta_closed_form(c, energy, conv)?);
    }
    for (ni, &n) in ends.iter().enumerate() {
        let norm = sum_envelope(m as u64, (n - 1) as u64, 2.0 * c.alpha)?;
        for (ti, name) in MARTINGALE_TERMS.iter().enumerate() {
            let row = rows[ni * w + ti].clone().with_meta("envelope_sum", norm);
            rec.push(vec![n.into(), Coord::from(*name)], row);
        }
    }
    Ok(())
}
