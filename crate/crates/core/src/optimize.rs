//! Derivative-free one-dimensional maximization on a bracket.

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    /// The maximizer sits on the edge of the bracket; the bracket is likely too small.
    pub at_boundary: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Coarse uniform grid of `grid` points over `[lo, hi]`, then golden-section
/// refinement inside the neighbouring grid cells until the interval is below `tol`.
///
/// Non-finite objective values are treated as `-inf`.
pub fn grid_golden_maximize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Maximum {
    assert!(lo < hi && grid >= 3 && tol > 0.0);
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() { f64::NEG_INFINITY } else { v }
    };
    let step = (hi - lo) / (grid - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..grid {
        let v = eval(lo + step * i as f64);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mut x = 0.5 * (a + b);
    let mut value = eval(x);
    // the grid point itself can beat the refined interior on a plateau edge
    let grid_x = lo + step * best_i as f64;
    if best_v > value {
        x = grid_x;
        value = best_v;
    }
    let at_boundary = x - lo <= tol || hi - x <= tol;
    Maximum { x, value, at_boundary }
}
