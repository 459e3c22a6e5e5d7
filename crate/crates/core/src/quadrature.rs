//! Gauss–Legendre rules and adaptive composite integration on finite intervals.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `npts`-point Gauss–Legendre rule on [-1, 1], nodes ascending.
pub fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(npts > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; npts];
    let mut weights = vec![0.0; npts];
    let m = npts.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (npts as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(npts, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(npts, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[npts - 1 - i] = x;
        weights[i] = w;
        weights[npts - 1 - i] = w;
    }
    if npts % 2 == 1 {
        nodes[npts / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const PANEL_POINTS: usize = 16;
const MAX_DEPTH: usize = 40;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_POINTS))
}

/// Fixed 16-point Gauss–Legendre rule on [a, b].
pub fn gauss_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = panel_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut sum = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        sum += wi * f(mid + half * xi);
    }
    sum * half
}

/// Adaptive composite Gauss–Legendre integration of `f` over [a, b].
///
/// A panel is accepted when the 16-point estimate on the panel and the sum of the
/// estimates on its two halves agree to `tol` relative to the running magnitude of the
/// integral. Panels are processed depth-first so the summation order is fixed.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let whole = gauss_panel(&f, a, b);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    refine(&f, a, b, whole, tol, scale, 0)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    scale: f64,
    depth: usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = gauss_panel(f, a, mid);
    let right = gauss_panel(f, mid, b);
    let split = left + right;
    if (split - whole).abs() <= tol * scale {
        return Ok(split);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureNonConvergence { a, b });
    }
    Ok(refine(f, a, mid, left, tol, scale, depth + 1)?
        + refine(f, mid, b, right, tol, scale, depth + 1)?)
}
