//! Composite quadrature on uniform grids.

/// Composite Simpson rule for samples on a uniform grid with an even number of intervals.
///
/// Falls back to Simpson plus a closing trapezoid panel when the interval count is odd.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * h * (f[0] + f[1]);
    }
    let intervals = n - 1;
    let even_end = if intervals % 2 == 0 { n - 1 } else { n - 2 };
    let mut s = f[0] + f[even_end];
    for (i, v) in f.iter().enumerate().take(even_end).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    let mut total = s * h / 3.0;
    if even_end != n - 1 {
        total += 0.5 * h * (f[n - 2] + f[n - 1]);
    }
    total
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    h * (inner + 0.5 * (f[0] + f[n - 1]))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let f: Vec<f64> = (0..=20).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&f, h) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_odd_intervals_close_with_trapezoid() {
        let h = 0.01;
        let f: Vec<f64> = (0..=101).map(|i| (i as f64 * h).sin()).collect();
        let exact = 1.0 - (1.01f64).cos();
        assert!((simpson(&f, h) - exact).abs() < 1e-6);
    }

    #[test]
    fn trapezoid_linear() {
        let f = [0.0, 1.0, 2.0, 3.0];
        assert!((trapezoid(&f, 1.0) - 4.5).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }
}
