use anderson_core::model::{single_site_fourier, SingleSitePotential};
use anderson_core::pruefer::{flow_cell, flow_interval, from_pruefer, to_pruefer};
use anderson_core::sampling::auxiliary_rng;
use anderson_core::transfer::{apriori_bound, propagate, propagate_traced, transfer_between, unit_cell_transfer};
use anderson_core::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand_chacha::rand_core::RngCore;

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Classical RK4 on `φ'' = (q(x) - E) φ` with `q` constant on each quarter cell.
fn rk4_cell(q: [f64; 4], energy: f64, y0: [f64; 2], steps_per_quarter: usize) -> [f64; 2] {
    let h = 0.25 / steps_per_quarter as f64;
    let mut y = y0;
    for qq in q {
        let f = |y: [f64; 2]| [y[1], (qq - energy) * y[0]];
        for _ in 0..steps_per_quarter {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    y
}

#[test]
fn unit_cell_matches_ode_oracle() {
    let c = ModelConfig::standard(0.25, 1.0).unwrap();
    let mut values = vec![0.0; 17];
    values[16] = 3f64.sqrt();
    let r = DisorderRealization::from_values(&c, 0, values).unwrap();
    let t = unit_cell_transfer(&r, 16, 1.0).unwrap();
    let h = r.amplitude(16).unwrap();
    let q = [0.0, h, h, 0.0];
    let c1 = rk4_cell(q, 1.0, [1.0, 0.0], 2000);
    let c2 = rk4_cell(q, 1.0, [0.0, 1.0], 2000);
    assert!((t.a - c1[0]).abs() < 1e-8 && (t.c - c1[1]).abs() < 1e-8);
    assert!((t.b - c2[0]).abs() < 1e-8 && (t.d - c2[1]).abs() < 1e-8);
}

#[test]
fn fourier_matches_adaptive_quadrature() {
    fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let simpson = |a: f64, b: f64| (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        let (l, r) = (simpson(a, m), simpson(m, b));
        if depth == 0 || (l + r - whole).abs() < 1e-15 {
            l + r + (l + r - whole) / 15.0
        } else {
            adaptive(f, a, m, l, depth - 1) + adaptive(f, m, b, r, depth - 1)
        }
    }
    let u = SingleSitePotential::centered_box();
    let mut rng = auxiliary_rng(7);
    for _ in 0..20 {
        let freq = 40.0 * unit(&mut rng) - 20.0;
        let got = single_site_fourier(&u, freq);
        let re = |y: f64| (freq * y).cos();
        let im = |y: f64| (freq * y).sin();
        let want = Complex64::new(
            adaptive(&re, 0.25, 0.75, (0.5 / 6.0) * (re(0.25) + 4.0 * re(0.5) + re(0.75)), 30),
            adaptive(&im, 0.25, 0.75, (0.5 / 6.0) * (im(0.25) + 4.0 * im(0.5) + im(0.75)), 30),
        );
        assert!((got - want).norm() < 1e-12, "freq {freq}: {got} vs {want}");
    }
}

#[test]
fn determinant_one_over_random_cells() {
    let c = ModelConfig::standard(0.25, 3.0).unwrap();
    let r = sample_realization(&c, CellWindow::new(-5000, 4999).unwrap(), 11).unwrap();
    let mut rng = auxiliary_rng(11);
    for n in -5000..5000 {
        let e = 60.0 * unit(&mut rng) - 10.0;
        let t = unit_cell_transfer(&r, n, e).unwrap();
        let scale = t.norm() * t.norm();
        assert!((t.det() - 1.0).abs() < 1e-10 * scale.max(1.0), "cell {n}, E {e}");
    }
}

#[test]
fn free_cell_closed_form() {
    let c = ModelConfig::standard(0.25, 1.0).unwrap().with_disorder(DisorderSpec::degenerate());
    let r = sample_realization(&c, CellWindow::new(0, 0).unwrap(), 0).unwrap();
    for e in [-4.0f64, -0.3, 0.7, 2.0, 30.0] {
        let t = unit_cell_transfer(&r, 0, e).unwrap();
        let want = if e > 0.0 {
            let k = f64::sqrt(e);
            [k.cos(), k.sin() / k, -k * k.sin(), k.cos()]
        } else {
            let k = (-e).sqrt();
            [k.cosh(), k.sinh() / k, k * k.sinh(), k.cosh()]
        };
        let got = [t.a, t.b, t.c, t.d];
        for i in 0..4 {
            assert!((got[i] - want[i]).abs() < 1e-12 * want[i].abs().max(1.0));
        }
    }
}

#[test]
fn cocycle_two_cells() {
    let c = ModelConfig::standard(0.25, 1.0).unwrap();
    let r = sample_realization(&c, CellWindow::new(-20, 20).unwrap(), 5).unwrap();
    for n in [-20, -3, 0, 7, 19] {
        for e in [0.3, 1.0, 5.0] {
            let prod = unit_cell_transfer(&r, n + 1, e).unwrap().mul(&unit_cell_transfer(&r, n, e).unwrap());
            let c1 = propagate(&r, n, n + 2, e, [1.0, 0.0]).unwrap();
            let c2 = propagate(&r, n, n + 2, e, [0.0, 1.0]).unwrap();
            let s1 = c1.log_norm.exp();
            let s2 = c2.log_norm.exp();
            let rebuilt = TransferMatrix::new(
                s1 * c1.direction[0],
                s2 * c2.direction[0],
                s1 * c1.direction[1],
                s2 * c2.direction[1],
            );
            assert!(prod.max_abs_diff(&rebuilt) < 1e-9);
            let between = transfer_between(&r, n as f64, n as f64 + 2.0, e).unwrap();
            assert!(prod.max_abs_diff(&between) < 1e-9);
        }
    }
}

#[test]
fn apriori_sandwich_per_cell() {
    let c = ModelConfig::standard(0.25, 2.0).unwrap();
    let r = sample_realization(&c, CellWindow::new(0, 299).unwrap(), 9).unwrap();
    for e in [0.2, 1.0, 4.0] {
        let tr = propagate_traced(&r, 0, 300, e, [0.6, 0.8]).unwrap();
        for (n, inc) in tr.trace.unwrap().iter().enumerate() {
            let m = apriori_bound(&r, n as i64, n as i64 + 1, e).unwrap().ln();
            // one cell changes log(|φ|²+|φ'|²)^{1/2} by at most log M either way
            assert!(inc.abs() <= m + 1e-12, "cell {n}: {inc} vs {m}");
        }
    }
}

#[test]
fn continuity_across_branch_points() {
    // the bump piece switches between trigonometric and hyperbolic forms at E = λ a_n ω_n
    let c = ModelConfig::standard(0.25, 1.0).unwrap();
    let r = DisorderRealization::from_values(&c, 0, vec![1.2]).unwrap();
    let branch = r.amplitude(0).unwrap();
    for e0 in [0.0, branch] {
        let eps = 1e-7;
        let lo = unit_cell_transfer(&r, 0, e0 - eps).unwrap();
        let at = unit_cell_transfer(&r, 0, e0).unwrap();
        let hi = unit_cell_transfer(&r, 0, e0 + eps).unwrap();
        assert!(lo.max_abs_diff(&at) < 1e-6 && hi.max_abs_diff(&at) < 1e-6);
        // and the jump is first order, not a branch artifact
        assert!((lo.max_abs_diff(&hi) - 2.0 * at.max_abs_diff(&hi).max(at.max_abs_diff(&lo))).abs() < 1e-9);
    }
}

#[test]
fn pruefer_tracks_transfer_over_a_thousand_cells() {
    let c = ModelConfig::standard(0.25, 1.0).unwrap();
    for (seed, e) in [(1u64, 0.5), (2, 1.3), (3, 2.0)] {
        let r = sample_realization(&c, CellWindow::new(0, 999).unwrap(), seed).unwrap();
        let k = f64::sqrt(e);
        let mut state = to_pruefer(0.0, 1.0, k, None).unwrap();
        let mut v = [0.0, 1.0];
        let mut log_scale = 0.0;
        for n in 0..1000 {
            state = flow_cell(&r, n, state, e).unwrap();
            let w = unit_cell_transfer(&r, n, e).unwrap().apply(v);
            let s = w[0].hypot(w[1]);
            v = [w[0] / s, w[1] / s];
            log_scale += s.ln();
        }
        let (phi, dphi) = from_pruefer(&to_pruefer_scaled(&state, -log_scale));
        let rel = ((phi - v[0]).powi(2) + (dphi - v[1]).powi(2)).sqrt();
        assert!(rel < 1e-6, "seed {seed}: relative error {rel}");
    }
}

fn to_pruefer_scaled(s: &pruefer::PrueferState, shift: f64) -> pruefer::PrueferState {
    pruefer::PrueferState { log_r: s.log_r + shift, ..*s }
}

#[test]
fn angle_crosses_multiples_of_pi_upward() {
    let c = ModelConfig::standard(0.25, 4.0).unwrap();
    let r = sample_realization(&c, CellWindow::new(1, 40).unwrap(), 4).unwrap();
    let e: f64 = 0.6;
    let mut s = to_pruefer(1.0, 0.0, f64::sqrt(e), None).unwrap();
    let mut prev = (s.theta / std::f64::consts::PI).floor();
    for i in 0..4000 {
        let x = 1.0 + i as f64 / 100.0;
        s = flow_interval(&r, x, 1.0 + (i + 1) as f64 / 100.0, s, e).unwrap();
        let now = (s.theta / std::f64::consts::PI).floor();
        assert!(now >= prev, "angle fell back through a multiple of pi at x = {x}");
        prev = now;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_has_equal_norm(seed in any::<u64>(), e in -5.0f64..20.0, len in 1usize..160) {
        let c = ModelConfig::standard(0.3, 1.5).unwrap();
        let r = sample_realization(&c, CellWindow::new(0, len as i64 - 1).unwrap(), seed).unwrap();
        let mut t = TransferMatrix::IDENTITY;
        for n in 0..len as i64 {
            t = unit_cell_transfer(&r, n, e).unwrap().mul(&t);
            if t.norm() > 1e6 {
                break;
            }
        }
        let inv = t.unimodular_inverse();
        prop_assert!((t.norm() - inv.norm()).abs() <= 1e-9 * t.norm());
        let id = t.mul(&inv);
        prop_assert!(id.max_abs_diff(&TransferMatrix::IDENTITY) < 1e-9 * t.norm() * t.norm());
    }

    #[test]
    fn backward_propagation_undoes_forward(seed in any::<u64>(), e in 0.1f64..5.0, angle in 0.0f64..std::f64::consts::TAU) {
        let c = ModelConfig::standard(0.25, 1.0).unwrap();
        let r = sample_realization(&c, CellWindow::new(-10, 30).unwrap(), seed).unwrap();
        let psi = [angle.cos(), angle.sin()];
        let fwd = propagate(&r, -10, 31, e, psi).unwrap();
        let back = propagate(&r, 31, -10, e, fwd.direction).unwrap();
        prop_assert!((fwd.log_norm + back.log_norm).abs() < 1e-8);
        prop_assert!((back.direction[0] - psi[0]).abs() < 1e-8 && (back.direction[1] - psi[1]).abs() < 1e-8);
    }
}
