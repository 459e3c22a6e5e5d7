//! Rayleigh–Ritz upper bounds for λ(Ω) on planar star-shaped domains with a Trefftz trial
//! space, and the Robin eigenvalue of balls with negative boundary parameter.
//!
//! Trial functions are exact solutions of −Δu + u = 0, ordered
//! `I_0(r), I_1(r)cos θ, I_1(r)sin θ, I_2(r)cos 2θ, …`, so the space for a smaller M is a
//! leading block of the matrices for a larger one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigen, Matrix};
use crate::quadrature::gauss_legendre;
use crate::shape::StarShape;
use crate::special::{bessel_i, bessel_i_prime, lambda_ball, BesselOrder};

/// Relative slack allowed when checking that λ does not increase with M.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct TrefftzSystem {
    pub modes: usize,
    /// Symmetrized ∫_{∂Ω} (∂_ν u_j) u_k dH¹, i.e. the H¹(Ω) inner products.
    pub a_matrix: Matrix,
    /// ∫_{∂Ω} u_j u_k dH¹.
    pub b_matrix: Matrix,
    /// Largest |A_jk − A_kj| before symmetrization.
    pub asymmetry: f64,
}

/// Number of trial functions for M angular modes.
pub fn trial_count(modes: usize) -> usize {
    2 * modes + 1
}

/// Largest M the shape's grid resolves.
pub fn max_modes(shape: &StarShape) -> usize {
    shape.grid().max_degree() / 2
}

/// (m, is_sine) for trial function `j`.
fn trial_mode(j: usize) -> (usize, bool) {
    if j == 0 {
        (0, false)
    } else {
        (j.div_ceil(2), j.is_multiple_of(2))
    }
}

/// Value, radial derivative and angular derivative of trial function `j` at (r, θ).
fn trial_eval(j: usize, radial: &[(f64, f64)], theta: f64) -> (f64, f64, f64) {
    let (m, sine) = trial_mode(j);
    let (i, di) = radial[m];
    let mt = m as f64 * theta;
    let (s, c) = mt.sin_cos();
    if sine {
        (i * s, di * s, m as f64 * i * c)
    } else {
        (i * c, di * c, -(m as f64) * i * s)
    }
}

/// (I_m(r), I_m'(r)) for m = 0..=modes.
fn radial_table(modes: usize, r: f64) -> Result<Vec<(f64, f64)>> {
    (0..=modes)
        .map(|m| {
            let order = BesselOrder::integer(m as u32);
            Ok((bessel_i(order, r)?, bessel_i_prime(order, r)?))
        })
        .collect()
}

fn check_planar(shape: &StarShape, modes: usize) -> Result<()> {
    if shape.dim() != 2 {
        return Err(Error::UnsupportedDimension(shape.dim()));
    }
    if modes > max_modes(shape) {
        return Err(Error::GridTooCoarse {
            nodes: shape.grid().len(),
            modes,
        });
    }
    Ok(())
}

/// Boundary assembly of the Trefftz matrices for R(θ) = ρ(1 + v(θ)).
pub fn assemble_trefftz(shape: &StarShape, modes: usize) -> Result<TrefftzSystem> {
    check_planar(shape, modes)?;
    let grid = shape.grid();
    let size = trial_count(modes);
    let (dv, _) = shape.gradient();
    let mut a = Matrix::zeros(size, size);
    let mut b = Matrix::zeros(size, size);
    let mut vals = vec![(0.0, 0.0, 0.0); size];
    for (i, &w) in grid.weights().iter().enumerate() {
        let theta = grid.theta(i);
        let r = shape.radius(i);
        let r_theta = shape.rho() * dv[i];
        let radial = radial_table(modes, r)?;
        for (j, slot) in vals.iter_mut().enumerate() {
            *slot = trial_eval(j, &radial, theta);
        }
        let arc = r.hypot(r_theta);
        for (j, &(uj, urj, utj)) in vals.iter().enumerate() {
            let flux = r * urj - r_theta * utj / r;
            for (k, &(uk, _, _)) in vals.iter().enumerate() {
                a[(j, k)] += w * flux * uk;
                b[(j, k)] += w * uj * uk * arc;
            }
        }
    }
    let asymmetry = a.asymmetry();
    Ok(TrefftzSystem {
        modes,
        a_matrix: a.symmetrized(),
        b_matrix: b.symmetrized(),
        asymmetry,
    })
}

/// ∫_Ω ∇u_j·∇u_k + u_j u_k dx by polar quadrature: the grid rule in θ and
/// `radial_points`-point Gauss–Legendre on each ray [0, R(θ)].
pub fn assemble_trefftz_bulk(
    shape: &StarShape,
    modes: usize,
    radial_points: usize,
) -> Result<Matrix> {
    check_planar(shape, modes)?;
    let grid = shape.grid();
    let size = trial_count(modes);
    let (x, wx) = gauss_legendre(radial_points);
    let mut a = Matrix::zeros(size, size);
    let mut vals = vec![(0.0, 0.0, 0.0); size];
    for (i, &w) in grid.weights().iter().enumerate() {
        let theta = grid.theta(i);
        let big_r = shape.radius(i);
        for (xq, wq) in x.iter().zip(&wx) {
            let r = 0.5 * big_r * (xq + 1.0);
            let weight = w * wq * 0.5 * big_r * r;
            let radial = radial_table(modes, r)?;
            for (j, slot) in vals.iter_mut().enumerate() {
                *slot = trial_eval(j, &radial, theta);
            }
            for (j, &(uj, urj, utj)) in vals.iter().enumerate() {
                for (k, &(uk, urk, utk)) in vals.iter().enumerate() {
                    a[(j, k)] += weight * (urj * urk + utj * utk / (r * r) + uj * uk);
                }
            }
        }
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub modes_used: usize,
    /// Relative residual ‖A x − λ B x‖ / (‖A‖ ‖x‖) of the scaled problem.
    pub residual: f64,
    /// True when λ did not increase as M grew from 0 to `modes_used`.
    pub monotone_flag: bool,
    /// Asymmetry of the assembled A before symmetrization.
    pub asymmetry: f64,
    /// Smallest Ritz value for each M' = 0..=modes_used.
    pub history: Vec<f64>,
}

/// Smallest generalized eigenvalue of the leading `size` block after diagonal scaling.
fn smallest_ritz(a: &Matrix, b: &Matrix, size: usize) -> Result<(f64, f64)> {
    let (a, b) = (a.leading(size), b.leading(size));
    let d: Vec<f64> = (0..size).map(|j| 1.0 / b[(j, j)].sqrt()).collect();
    let mut sa = a.clone();
    let mut sb = b.clone();
    for j in 0..size {
        for k in 0..size {
            sa[(j, k)] = a[(j, k)] * d[j] * d[k];
            sb[(j, k)] = b[(j, k)] * d[j] * d[k];
        }
    }
    let e = generalized_symmetric_eigen(&sa, &sb)?;
    Ok((e.values[0], e.residual(&sa, &sb, 0)))
}

/// Rayleigh–Ritz upper bound for λ(Ω) with angular modes 0..=M.
pub fn steklov_lambda(shape: &StarShape, modes: usize) -> Result<EigenResult> {
    let sys = assemble_trefftz(shape, modes)?;
    let mut history = Vec::with_capacity(modes + 1);
    let mut residual = 0.0;
    for m in 0..=modes {
        let (lam, res) = smallest_ritz(&sys.a_matrix, &sys.b_matrix, trial_count(m))?;
        history.push(lam);
        residual = res;
    }
    let monotone_flag = history
        .windows(2)
        .all(|p| p[1] <= p[0] * (1.0 + MONOTONE_SLACK));
    let lambda = *history.last().expect("at least the M = 0 value");
    Ok(EigenResult {
        lambda,
        modes_used: modes,
        residual,
        monotone_flag,
        asymmetry: sys.asymmetry,
        history,
    })
}

/// Smallest Robin eigenvalue of B_R with boundary parameter α ≤ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinResult {
    /// κ = √|λ|.
    pub kappa: f64,
    /// λ_{R,α}(B_R) = −κ².
    pub lambda: f64,
    /// κ I_{n/2}(κR)/I_{n/2−1}(κR) − |α|.
    pub residual: f64,
    /// λ(B_{κR}) − |α|/κ.
    pub bridge: f64,
}

fn robin_function(n: usize, radius: f64, kappa: f64) -> f64 {
    kappa * lambda_ball(n, kappa * radius)
}

/// Solve κ I_{n/2}(κR)/I_{n/2−1}(κR) = |α| by bisection and return λ = −κ².
pub fn robin_ball_eigenvalue(n: usize, radius: f64, alpha: f64) -> Result<RobinResult> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain {
            func: "robin radius",
            value: radius,
        });
    }
    if !(alpha <= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain {
            func: "robin alpha",
            value: alpha,
        });
    }
    if alpha == 0.0 {
        return Ok(RobinResult {
            kappa: 0.0,
            lambda: 0.0,
            residual: 0.0,
            bridge: 0.0,
        });
    }
    let target = -alpha;
    let g = |k: f64| robin_function(n, radius, k) - target;
    let mut lo = 1e-8;
    while g(lo) >= 0.0 {
        lo *= 0.5;
    }
    let mut hi = 1.0f64.max(2.0 * lo);
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa = if g(hi).abs() < g(lo).abs() { hi } else { lo };
    Ok(RobinResult {
        kappa,
        lambda: -kappa * kappa,
        residual: g(kappa),
        bridge: lambda_ball(n, kappa * radius) - target / kappa,
    })
}

/// α ↦ λ_{R,α}(B_R) on α ≤ 0.
pub fn robin_monotone_map(n: usize, radius: f64) -> impl Fn(f64) -> Result<f64> {
    move |alpha| Ok(robin_ball_eigenvalue(n, radius, alpha)?.lambda)
}

/// The α ≤ 0 for which λ_{R,α}(B_R) equals the given λ ≤ 0.
pub fn robin_alpha_for(n: usize, radius: f64, lambda: f64) -> Result<f64> {
    if !(lambda <= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain {
            func: "robin lambda",
            value: lambda,
        });
    }
    let kappa = (-lambda).sqrt();
    Ok(-robin_function(n, radius, kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{default_grid, PROJECTION_TOL};
    use crate::special::bessel_i;
    use crate::sphere::Mode;
    use std::f64::consts::PI;

    fn disk(omega: f64) -> StarShape {
        StarShape::ball(default_grid(2).unwrap(), omega).unwrap()
    }

    fn i(m: u32, s: f64) -> f64 {
        bessel_i(BesselOrder::integer(m), s).unwrap()
    }

    #[test]
    fn disk_m0_closed_form() {
        for omega in [PI, 4.0 * PI, 0.3] {
            let d = disk(omega);
            let rho = d.rho();
            let sys = assemble_trefftz(&d, 0).unwrap();
            let a = 2.0 * PI * rho * i(0, rho) * i(1, rho);
            let b = 2.0 * PI * rho * i(0, rho).powi(2);
            assert!((sys.a_matrix[(0, 0)] - a).abs() < 1e-13 * a);
            assert!((sys.b_matrix[(0, 0)] - b).abs() < 1e-13 * b);
        }
    }

    #[test]
    fn disk_matrices_are_diagonal() {
        let sys = assemble_trefftz(&disk(PI), 8).unwrap();
        for j in 0..17 {
            for k in 0..17 {
                if j != k {
                    assert!(sys.a_matrix[(j, k)].abs() < 1e-14 * sys.a_matrix[(0, 0)]);
                    assert!(sys.b_matrix[(j, k)].abs() < 1e-14 * sys.b_matrix[(0, 0)]);
                }
            }
        }
    }

    #[test]
    fn disk_eigenvalue_is_exact_for_every_m() {
        let want = i(1, 1.0) / i(0, 1.0);
        for m in 0..=16 {
            let r = steklov_lambda(&disk(PI), m).unwrap();
            assert!((r.lambda - want).abs() < 1e-10, "M={m}");
            assert!(r.monotone_flag);
        }
        assert!(
            (steklov_lambda(&disk(PI), 8).unwrap().lambda - 0.446_389_965_896_534_5).abs() < 1e-12
        );
    }

    #[test]
    fn perturbed_chain_and_convergence() {
        let s = StarShape::from_modes(default_grid(2).unwrap(), PI, &[(Mode::new(2, 0), 0.05)])
            .unwrap()
            .project_to_constraints(PROJECTION_TOL)
            .unwrap();
        let r16 = steklov_lambda(&s, 16).unwrap();
        let r24 = steklov_lambda(&s, 24).unwrap();
        let vp = crate::functionals::rayleigh_upper_bound(&s);
        assert!(r16.lambda <= vp * (1.0 + 1e-12));
        assert!(vp < lambda_ball(2, 1.0));
        assert!((r16.lambda - r24.lambda).abs() <= 1e-9);
        assert!(r24.monotone_flag);
        assert!(r24.residual < 1e-10);
    }

    #[test]
    fn boundary_assembly_matches_bulk_quadrature() {
        let s = StarShape::from_modes(
            default_grid(2).unwrap(),
            2.0,
            &[
                (Mode::new(2, 1), 0.06),
                (Mode::new(3, 0), -0.04),
                (Mode::new(5, 1), 0.02),
            ],
        )
        .unwrap()
        .project_to_constraints(PROJECTION_TOL)
        .unwrap();
        let sys = assemble_trefftz(&s, 4).unwrap();
        let bulk = assemble_trefftz_bulk(&s, 4, 40).unwrap();
        let scale = sys.a_matrix.frobenius_norm();
        for j in 0..9 {
            for k in 0..9 {
                assert!(
                    (sys.a_matrix[(j, k)] - bulk[(j, k)]).abs() < 1e-7 * scale,
                    "({j},{k})"
                );
            }
        }
        assert!(sys.asymmetry < 1e-10 * scale);
    }

    #[test]
    fn rejects_unsupported_inputs() {
        let g = std::sync::Arc::new(crate::sphere::make_grid(3, 8).unwrap());
        let ball3 = StarShape::ball(g, 1.0).unwrap();
        assert!(matches!(
            steklov_lambda(&ball3, 2),
            Err(Error::UnsupportedDimension(3))
        ));
        let coarse = StarShape::ball(
            std::sync::Arc::new(crate::sphere::make_grid(2, 16).unwrap()),
            PI,
        )
        .unwrap();
        assert!(matches!(
            assemble_trefftz(&coarse, 4),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(assemble_trefftz(&coarse, 3).is_ok());
    }

    #[test]
    fn robin_unit_disk() {
        let r = robin_ball_eigenvalue(2, 1.0, -1.0).unwrap();
        assert!(r.residual.abs() <= 1e-10);
        assert!(r.bridge.abs() <= 1e-10);
        assert_eq!(r.lambda, -r.kappa * r.kappa);
        // κ I_0'(κ) + α I_0(κ) = 0 with α = −1
        let k = (-r.lambda).sqrt();
        assert!((k * i(1, k) - i(0, k)).abs() < 1e-9);
    }

    #[test]
    fn robin_limits_and_monotonicity() {
        assert_eq!(robin_ball_eigenvalue(3, 2.0, 0.0).unwrap().lambda, 0.0);
        let tiny = robin_ball_eigenvalue(2, 1.0, -1e-9).unwrap();
        assert!(tiny.kappa < 1e-4 && tiny.lambda > -1e-8);
        assert!(robin_ball_eigenvalue(2, 1.0, 0.5).is_err());
        let map = robin_monotone_map(3, 1.5);
        let alphas = [-8.0, -4.0, -2.0, -1.0, -0.5, -0.1, -0.01, 0.0];
        let lams: Vec<f64> = alphas.iter().map(|&a| map(a).unwrap()).collect();
        assert!(lams.windows(2).all(|p| p[0] < p[1]), "{lams:?}");
    }

    #[test]
    fn robin_scaling_and_inversion() {
        for n in [2usize, 3, 5] {
            let base = robin_ball_eigenvalue(n, 1.3, -0.7).unwrap().lambda;
            for c in [0.5, 2.0, 7.0] {
                let scaled = robin_ball_eigenvalue(n, c * 1.3, -0.7 / c).unwrap().lambda;
                assert!((scaled * c * c - base).abs() < 1e-9);
            }
            let alpha = robin_alpha_for(n, 1.3, base).unwrap();
            assert!((alpha + 0.7).abs() < 1e-12);
            let other = robin_alpha_for(n, 2.0, base).unwrap();
            assert!((robin_ball_eigenvalue(n, 2.0, other).unwrap().lambda - base).abs() < 1e-10);
        }
    }

    #[test]
    fn robin_large_arguments() {
        let r = robin_ball_eigenvalue(2, 10.0, -50.0).unwrap();
        assert!(r.residual.abs() < 1e-10 && r.bridge.abs() < 1e-10);
        assert!(r.kappa > 49.0);
    }
}
