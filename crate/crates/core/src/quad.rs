//! Composite Simpson rules.

/// Composite Simpson for `f` on `[a, b]` with `n` intervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson weights for `n + 1` equispaced nodes (`n` even) with spacing `h`.
pub fn simpson_weight(i: usize, n: usize, h: f64) -> f64 {
    debug_assert!(n.is_multiple_of(2) && i <= n);
    let w = if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    };
    w * h / 3.0
}

/// Simpson on equispaced samples; `values.len()` must be odd.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    values.iter().enumerate().map(|(i, v)| simpson_weight(i, n, h) * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 2);
        assert!((v - (15.0 / 4.0 - 3.0 + 3.0)).abs() < 1e-13);
    }

    #[test]
    fn odd_counts_round_up() {
        let a = simpson(f64::sin, 0.0, 1.0, 7);
        let b = simpson(f64::sin, 0.0, 1.0, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn samples_match_function_form() {
        let n = 10;
        let h = 0.1;
        let vals: alloc::vec::Vec<f64> = (0..=n).map(|i| (i as f64 * h).exp()).collect();
        let direct = simpson(f64::exp, 0.0, 1.0, n);
        assert!((simpson_samples(&vals, h) - direct).abs() < 1e-14);
    }
}
