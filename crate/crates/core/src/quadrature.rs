//! Deterministic low-dimensional quadrature, used as an independent oracle
//! for normalizing constants and divergences.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// Composite trapezoid rule with `n` intervals on `[a, b]`.
pub fn trapezoid_1d<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

/// Trapezoid rule over an arbitrary increasing grid.
pub fn trapezoid_on_grid<F: FnMut(f64) -> f64>(mut f: F, grid: &[f64]) -> f64 {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    grid.windows(2)
        .zip(vals.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Grid symmetric around `center`: uniform spacing on `[center - inner, center + inner]`
/// with `n_inner` intervals, then geometrically growing steps out to `outer`.
pub fn symmetric_log_grid(center: f64, inner: f64, outer: f64, n_inner: usize, n_tail: usize) -> Vec<f64> {
    let mut right = Vec::with_capacity(n_inner / 2 + n_tail + 1);
    let half = n_inner / 2;
    for i in 0..=half {
        right.push(inner * i as f64 / half as f64);
    }
    let ratio = (outer / inner).ln() / n_tail as f64;
    for i in 1..=n_tail {
        right.push(inner * (ratio * i as f64).exp());
    }
    let mut grid: Vec<f64> = right.iter().rev().map(|r| center - r).collect();
    grid.extend(right.iter().skip(1).map(|r| center + r));
    grid
}

/// Tensor-product trapezoid rule on a rectangle with `n × n` intervals.
pub fn integrate_2d<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    xr: (f64, f64),
    yr: (f64, f64),
    n: usize,
) -> f64 {
    let hx = (xr.1 - xr.0) / n as f64;
    let hy = (yr.1 - yr.0) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let wx = if i == 0 || i == n { 0.5 } else { 1.0 };
        let x = xr.0 + i as f64 * hx;
        let mut row = 0.0;
        for j in 0..=n {
            let wy = if j == 0 || j == n { 0.5 } else { 1.0 };
            row += wy * f(&[x, yr.0 + j as f64 * hy]);
        }
        acc += wx * row;
    }
    acc * hx * hy
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&mut f, a, b, fa, fm, fb, whole, tol, 40)
}
