//! Star-shaped domains r(ξ) = ρ(1 + v(ξ)) and the volume/barycenter constraint class.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::special::{ball_radius, unit_ball_volume};
use crate::sphere::{
    expand, harmonic_basis, make_grid, modes, norms_from, surface_gradient, synthesize,
    HarmonicExpansion, Mode, SobolevNorms, SphereGrid, DEFAULT_CIRCLE_RESOLUTION,
    DEFAULT_SPHERE_RESOLUTION,
};

const PROJECTION_MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 40;

/// Default tolerance for `project_to_constraints`.
pub const PROJECTION_TOL: f64 = 1e-12;

/// Shared grid at the default resolution for dimension `n`.
pub fn default_grid(n: usize) -> Result<Arc<SphereGrid>> {
    let res = match n {
        2 => DEFAULT_CIRCLE_RESOLUTION,
        3 => DEFAULT_SPHERE_RESOLUTION,
        _ => return Err(Error::UnsupportedDimension(n)),
    };
    Ok(Arc::new(make_grid(n, res)?))
}

/// A star-shaped domain around the origin with target measure ω.
///
/// Samples of v are authoritative for quadrature. Gradient components are kept alongside;
/// for band-limited shapes they come from the coefficients, for clipped shapes they are
/// carried through the clipping.
#[derive(Clone, Debug)]
pub struct StarShape {
    omega: f64,
    rho: f64,
    grid: Arc<SphereGrid>,
    samples: Vec<f64>,
    grad: (Vec<f64>, Vec<f64>),
    coeffs: HarmonicExpansion,
    band_limited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// L^n(Ω) − ω.
    pub measure_residual: f64,
    /// Barycenter X(Ω).
    pub barycenter_residual: Vec<f64>,
    /// max |v| + max |Dv| over the grid.
    pub eps_sup: f64,
}

impl ConstraintReport {
    pub fn barycenter_norm(&self) -> f64 {
        self.barycenter_residual
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            func: "omega",
            value: omega,
        })
    }
}

fn check_star(samples: &[f64]) -> Result<()> {
    for (i, v) in samples.iter().enumerate() {
        if v.is_nan() || 1.0 + v <= 0.0 {
            return Err(Error::NotStarShaped {
                node: i,
                value: 1.0 + v,
            });
        }
    }
    Ok(())
}

impl StarShape {
    /// The ball B_ρ of measure ω.
    pub fn ball(grid: Arc<SphereGrid>, omega: f64) -> Result<Self> {
        let k = grid.shape_band_limit();
        Self::from_coefficients(
            Arc::clone(&grid),
            omega,
            HarmonicExpansion::zeros(grid.dim(), k),
        )
    }

    /// Band-limited shape v = Σ a_k Y_k.
    pub fn from_coefficients(
        grid: Arc<SphereGrid>,
        omega: f64,
        coeffs: HarmonicExpansion,
    ) -> Result<Self> {
        check_omega(omega)?;
        let samples = synthesize(&grid, &coeffs)?;
        check_star(&samples)?;
        let grad = surface_gradient(&grid, &coeffs)?;
        Ok(Self {
            omega,
            rho: ball_radius(grid.dim(), omega),
            grid,
            samples,
            grad,
            coeffs,
            band_limited: true,
        })
    }

    /// Band-limited shape from a sparse list of modes, at the grid's shape band limit.
    pub fn from_modes(grid: Arc<SphereGrid>, omega: f64, entries: &[(Mode, f64)]) -> Result<Self> {
        let k = entries
            .iter()
            .map(|(m, _)| m.degree)
            .max()
            .unwrap_or(0)
            .max(grid.shape_band_limit());
        let mut e = HarmonicExpansion::zeros(grid.dim(), k);
        for &(m, a) in entries {
            e.set(m, e.get(m) + a)?;
        }
        Self::from_coefficients(grid, omega, e)
    }

    /// Polar profile of B_ρ translated by `shift`, expanded to the shape band limit.
    pub fn shifted_ball(grid: Arc<SphereGrid>, omega: f64, shift: &[f64]) -> Result<Self> {
        check_omega(omega)?;
        let n = grid.dim();
        if shift.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: shift.len(),
            });
        }
        let rho = ball_radius(n, omega);
        let d2: f64 = shift.iter().map(|x| x * x).sum();
        if d2 >= rho * rho {
            return Err(Error::Domain {
                func: "shifted_ball",
                value: d2.sqrt(),
            });
        }
        let profile: Vec<f64> = (0..grid.len())
            .map(|i| {
                let dx: f64 = grid.node(i).iter().zip(shift).map(|(a, b)| a * b).sum();
                (dx + (rho * rho - d2 + dx * dx).sqrt()) / rho - 1.0
            })
            .collect();
        let coeffs = expand(&grid, &profile, grid.shape_band_limit())?;
        Self::from_coefficients(grid, omega, coeffs)
    }

    /// Draw v with i.i.d. uniform[−1, 1] coefficients on every mode of degree
    /// `min_degree..=band limit`, rescaled so that max|v| + max|Dv| = `eps`.
    pub fn random_perturbation<R: Rng + ?Sized>(
        grid: Arc<SphereGrid>,
        omega: f64,
        eps: f64,
        min_degree: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let k = grid.shape_band_limit();
        let mut e = HarmonicExpansion::zeros(grid.dim(), k);
        for (m, c) in modes(grid.dim(), k).into_iter().zip(e.coefficients_mut()) {
            if m.degree >= min_degree {
                *c = rng.gen_range(-1.0..=1.0);
            }
        }
        let v = synthesize(&grid, &e)?;
        let (ga, gb) = surface_gradient(&grid, &e)?;
        let size = v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
            + ga.iter()
                .zip(&gb)
                .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
        if eps == 0.0 || size == 0.0 {
            return Self::ball(grid, omega);
        }
        for c in e.coefficients_mut() {
            *c *= eps / size;
        }
        Self::from_coefficients(grid, omega, e)
    }

    /// Same grid and target measure, new coefficients.
    pub fn with_coefficients(&self, coeffs: HarmonicExpansion) -> Result<Self> {
        Self::from_coefficients(Arc::clone(&self.grid), self.omega, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn coefficients(&self) -> &HarmonicExpansion {
        &self.coeffs
    }

    /// Tangential gradient components of v at the nodes.
    pub fn gradient(&self) -> (&[f64], &[f64]) {
        (&self.grad.0, &self.grad.1)
    }

    /// |Dv|² at node `i`.
    pub fn grad_sq(&self, i: usize) -> f64 {
        self.grad.0[i] * self.grad.0[i] + self.grad.1[i] * self.grad.1[i]
    }

    /// False after clipping: the coefficient mirror then only approximates the samples.
    pub fn band_limited(&self) -> bool {
        self.band_limited
    }

    /// Boundary radius ρ(1 + v) at node `i`.
    pub fn radius(&self, i: usize) -> f64 {
        self.rho * (1.0 + self.samples[i])
    }

    pub fn max_radius(&self) -> f64 {
        self.rho
            * (1.0
                + self
                    .samples
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn min_radius(&self) -> f64 {
        self.rho * (1.0 + self.samples.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn is_ball(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    /// L^n(Ω) = (ρ^n/n) ∫ (1+v)^n dσ.
    pub fn measure(&self) -> f64 {
        let n = self.dim() as i32;
        self.rho.powi(n) / n as f64
            * self
                .grid
                .integrate_with(|i| (1.0 + self.samples[i]).powi(n))
    }

    /// X(Ω) = ρ^{n+1}/((n+1) L^n(Ω)) ∫ (1+v)^{n+1} ξ dσ.
    pub fn barycenter(&self) -> Vec<f64> {
        let n = self.dim();
        let scale = self.rho.powi(n as i32 + 1) / ((n as f64 + 1.0) * self.measure());
        (0..n)
            .map(|axis| {
                scale
                    * self.grid.integrate_with(|i| {
                        (1.0 + self.samples[i]).powi(n as i32 + 1) * self.grid.node(i)[axis]
                    })
            })
            .collect()
    }

    /// max |v| + max |Dv| over the grid.
    pub fn eps_sup(&self) -> f64 {
        let sup = self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gsup = (0..self.grid.len()).fold(0.0f64, |m, i| m.max(self.grad_sq(i).sqrt()));
        sup + gsup
    }

    pub fn sobolev_norms(&self) -> SobolevNorms {
        let g2: Vec<f64> = (0..self.grid.len()).map(|i| self.grad_sq(i)).collect();
        norms_from(&self.grid, &self.samples, &g2)
    }

    pub fn constraint_report(&self) -> ConstraintReport {
        ConstraintReport {
            measure_residual: self.measure() - self.omega,
            barycenter_residual: self.barycenter(),
            eps_sup: self.eps_sup(),
        }
    }

    /// Adjust a_0 and the degree-1 coefficients by damped Newton until
    /// |L^n(Ω) − ω| ≤ tol·ω and |X(Ω)| ≤ tol·ρ.
    pub fn project_to_constraints(&self, tol: f64) -> Result<StarShape> {
        let n = self.dim();
        let grid = &self.grid;
        let dofs: Vec<Mode> = std::iter::once(Mode::new(0, 0))
            .chain((0..n).map(|i| Mode::new(1, i)))
            .collect();
        let ys: Vec<Vec<f64>> = dofs
            .iter()
            .map(|&m| harmonic_basis(grid, m))
            .collect::<Result<_>>()?;
        let mut dys = Vec::with_capacity(dofs.len());
        for &m in &dofs {
            dys.push(surface_gradient(
                grid,
                &HarmonicExpansion::single(n, 1, m, 1.0)?,
            )?);
        }
        let omega_n = unit_ball_volume(n);
        let nf = n as f64;

        let mut shape = self.clone();
        let mut last = f64::INFINITY;
        for _ in 0..PROJECTION_MAX_ITER {
            let v = &shape.samples;
            let mut r = vec![0.0; n + 1];
            r[0] = grid.integrate_with(|i| (1.0 + v[i]).powi(n as i32)) / (nf * omega_n) - 1.0;
            for axis in 0..n {
                r[axis + 1] = grid
                    .integrate_with(|i| (1.0 + v[i]).powi(n as i32 + 1) * grid.node(i)[axis])
                    / ((nf + 1.0) * omega_n);
            }
            let bary = shape.barycenter();
            let bnorm = bary.iter().map(|x| x * x).sum::<f64>().sqrt();
            last = ((shape.measure() - shape.omega).abs() / shape.omega).max(bnorm / shape.rho);
            if last <= tol {
                return Ok(shape);
            }
            let mut jac = Matrix::zeros(n + 1, n + 1);
            for (j, y) in ys.iter().enumerate() {
                jac[(0, j)] =
                    grid.integrate_with(|i| (1.0 + v[i]).powi(n as i32 - 1) * y[i]) / omega_n;
                for axis in 0..n {
                    jac[(axis + 1, j)] = grid.integrate_with(|i| {
                        (1.0 + v[i]).powi(n as i32) * grid.node(i)[axis] * y[i]
                    }) / omega_n;
                }
            }
            let neg: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = solve(&jac, &neg)?;
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        v[i] + step * delta.iter().zip(&ys).map(|(d, y)| d * y[i]).sum::<f64>()
                    })
                    .collect();
                if check_star(&trial).is_ok() {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
            let Some(trial) = accepted else {
                check_star(&shape.samples)?;
                return Err(Error::ProjectionDiverged {
                    iterations: PROJECTION_MAX_ITER,
                    residual: last,
                });
            };
            shape.samples = trial;
            for ((&m, d), (ga, gb)) in dofs.iter().zip(&delta).zip(&dys) {
                let c = shape.coeffs.get(m);
                shape.coeffs.set(m, c + step * d)?;
                for i in 0..grid.len() {
                    shape.grad.0[i] += step * d * ga[i];
                    shape.grad.1[i] += step * d * gb[i];
                }
            }
        }
        Err(Error::ProjectionDiverged {
            iterations: PROJECTION_MAX_ITER,
            residual: last,
        })
    }

    /// Ω ∩ B_{r_cut}: radial profile min(r, r_cut).
    pub fn truncate(&self, r_cut: f64) -> Result<StarShape> {
        self.clip(r_cut, |r, c| r > c)
    }

    /// Ω ∪ B_{r_cut}: radial profile max(r, r_cut).
    pub fn union_ball(&self, r_cut: f64) -> Result<StarShape> {
        self.clip(r_cut, |r, c| r < c)
    }

    fn clip(&self, r_cut: f64, replace: impl Fn(f64, f64) -> bool) -> Result<StarShape> {
        if r_cut.is_nan() || r_cut <= 0.0 {
            return Err(Error::Domain {
                func: "r_cut",
                value: r_cut,
            });
        }
        let level = r_cut / self.rho - 1.0;
        let mut out = self.clone();
        let mut changed = false;
        for i in 0..self.grid.len() {
            if replace(self.radius(i), r_cut) {
                out.samples[i] = level;
                out.grad.0[i] = 0.0;
                out.grad.1[i] = 0.0;
                changed = true;
            }
        }
        if changed {
            out.coeffs = expand(&self.grid, &out.samples, self.grid.max_degree())?;
            out.band_limited = false;
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ShapeFile {
        ShapeFile {
            n: self.dim(),
            omega: self.omega,
            coefficients: self
                .coeffs
                .iter()
                .filter(|(_, a)| *a != 0.0)
                .map(|(m, a)| (m.degree, m.index, a))
                .collect(),
        }
    }
}

/// On-disk shape description: `{n, omega, coefficients: [[degree, index, value], …]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFile {
    pub n: usize,
    pub omega: f64,
    pub coefficients: Vec<(usize, usize, f64)>,
}

impl ShapeFile {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn to_shape(&self, grid: Arc<SphereGrid>) -> Result<StarShape> {
        if grid.dim() != self.n {
            return Err(Error::Config(format!(
                "shape file has n = {} but grid has n = {}",
                self.n,
                grid.dim()
            )));
        }
        let entries: Vec<(Mode, f64)> = self
            .coefficients
            .iter()
            .map(|&(k, i, a)| (Mode::new(k, i), a))
            .collect();
        if let Some(&(m, _)) = entries.iter().find(|(m, _)| m.degree > grid.max_degree()) {
            return Err(Error::DegreeTooHigh {
                degree: m.degree,
                max: grid.max_degree(),
            });
        }
        StarShape::from_modes(grid, self.omega, &entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle() -> Arc<SphereGrid> {
        default_grid(2).unwrap()
    }

    fn sphere() -> Arc<SphereGrid> {
        Arc::new(make_grid(3, 24).unwrap())
    }

    #[test]
    fn ball_is_admissible() {
        for g in [circle(), sphere()] {
            let n = g.dim();
            let omega = unit_ball_volume(n) * 1.7;
            let b = StarShape::ball(g, omega).unwrap();
            assert!(b.is_ball());
            assert!((b.measure() - omega).abs() < 1e-12 * omega);
            let rep = b.constraint_report();
            assert!(rep.barycenter_norm() < 1e-14);
            assert_eq!(rep.eps_sup, 0.0);
            assert!((b.rho() - (omega / unit_ball_volume(n)).powf(1.0 / n as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn cos2_amplitude() {
        let s = StarShape::from_modes(circle(), PI, &[(Mode::new(2, 0), 0.05)]).unwrap();
        let sup = s.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((sup - 0.05 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_star_shaped() {
        let a0 = -(2.0 * PI).sqrt();
        let err = StarShape::from_modes(circle(), PI, &[(Mode::new(0, 0), a0)]).unwrap_err();
        assert!(matches!(err, Error::NotStarShaped { .. }));
        assert!(StarShape::ball(circle(), 0.0).is_err());
    }

    #[test]
    fn constant_perturbation_scales_measure() {
        let c = 0.03;
        for g in [circle(), sphere()] {
            let n = g.dim();
            let y0 = 1.0 / g.area().sqrt();
            let s =
                StarShape::from_modes(Arc::clone(&g), 2.0, &[(Mode::new(0, 0), c / y0)]).unwrap();
            assert!((s.measure() - 2.0 * (1.0 + c).powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn barycenter_of_even_and_odd_profiles() {
        let even = StarShape::from_modes(
            circle(),
            PI,
            &[(Mode::new(2, 0), 0.1), (Mode::new(4, 1), 0.05)],
        )
        .unwrap();
        assert!(even.barycenter().iter().all(|x| x.abs() < 1e-15));
        for eps in [1e-2, 1e-3] {
            let s = StarShape::from_modes(circle(), PI, &[(Mode::new(1, 0), eps)]).unwrap();
            let x = s.barycenter();
            // (1 + ε cosθ/√π) is a ball shifted by ε/√π to first order
            let lead = eps / PI.sqrt();
            assert!((x[0] - lead).abs() < 2.0 * eps * lead, "{x:?}");
            assert!(x[1].abs() < 1e-15);
        }
        let s = StarShape::from_modes(sphere(), 1.0, &[(Mode::new(1, 0), 1e-3)]).unwrap();
        let x = s.barycenter();
        assert!(x[2] > 0.0 && x[0].abs() < 1e-15 && x[1].abs() < 1e-15);
    }

    #[test]
    fn projection_fixes_ball_and_keeps_higher_modes() {
        let b = StarShape::ball(circle(), PI).unwrap();
        let p = b.project_to_constraints(1e-12).unwrap();
        assert_eq!(p.samples(), b.samples());

        let s = StarShape::from_modes(circle(), PI, &[(Mode::new(2, 0), 0.05)]).unwrap();
        let p = s.project_to_constraints(1e-12).unwrap();
        let rep = p.constraint_report();
        assert!(rep.measure_residual.abs() <= 1e-10);
        assert!(rep.barycenter_norm() <= 1e-10);
        assert_eq!(p.coefficients().get(Mode::new(2, 0)), 0.05);
        let p2 = p.project_to_constraints(1e-12).unwrap();
        assert_eq!(p2.samples(), p.samples());
    }

    #[test]
    fn projection_of_pure_translation_mode() {
        for g in [circle(), sphere()] {
            let n = g.dim();
            let eps = 0.02;
            let s = StarShape::from_modes(
                Arc::clone(&g),
                unit_ball_volume(n),
                &[(Mode::new(1, 0), eps)],
            )
            .unwrap();
            let p = s.project_to_constraints(1e-12).unwrap();
            let big = p
                .coefficients()
                .coefficients()
                .iter()
                .fold(0.0f64, |m, a| m.max(a.abs()));
            assert!(big < 2.0 * eps * eps, "n={n}: {big}");
        }
    }

    #[test]
    fn projection_on_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = StarShape::random_perturbation(sphere(), 4.0, 0.1, 2, &mut rng).unwrap();
        let p = s.project_to_constraints(1e-12).unwrap();
        let rep = p.constraint_report();
        assert!(rep.measure_residual.abs() <= 1e-12 * 4.0);
        assert!(rep.barycenter_norm() <= 1e-12 * p.rho());
        for m in modes(3, p.coefficients().max_degree())
            .into_iter()
            .filter(|m| m.degree >= 2)
        {
            assert_eq!(p.coefficients().get(m), s.coefficients().get(m));
        }
    }

    #[test]
    fn samples_match_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = StarShape::random_perturbation(circle(), PI, 0.05, 2, &mut rng).unwrap();
        let p = s.project_to_constraints(1e-12).unwrap();
        let synth = synthesize(p.grid(), p.coefficients()).unwrap();
        for (a, b) in synth.iter().zip(p.samples()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((s.eps_sup() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn truncation_and_union() {
        let b = StarShape::ball(circle(), PI).unwrap();
        let t = b.truncate(b.rho()).unwrap();
        assert_eq!(t.samples(), b.samples());
        assert!(t.band_limited());

        let s = StarShape::from_modes(circle(), PI, &[(Mode::new(3, 1), 0.08)]).unwrap();
        assert_eq!(
            s.truncate(s.max_radius() * 1.01).unwrap().samples(),
            s.samples()
        );
        assert_eq!(
            s.union_ball(s.min_radius() * 0.99).unwrap().samples(),
            s.samples()
        );
        let u = s.union_ball(s.rho()).unwrap();
        assert!(!u.band_limited());
        assert!(u.samples().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn truncation_radius_by_bisection_restores_measure() {
        let grown = StarShape::from_modes(
            circle(),
            PI,
            &[(Mode::new(0, 0), 0.05), (Mode::new(2, 0), 0.1)],
        )
        .unwrap();
        assert!(grown.measure() > PI);
        let (mut lo, mut hi) = (grown.min_radius(), grown.max_radius());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if grown.truncate(mid).unwrap().measure() > PI {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = grown.truncate(0.5 * (lo + hi)).unwrap();
        assert!((t.measure() - PI).abs() < 1e-10);
        assert!(t.max_radius() <= 0.5 * (lo + hi) + 1e-15);
    }

    #[test]
    fn report_for_normalized_cos2() {
        let a = 0.05 * PI.sqrt();
        let s = StarShape::from_modes(circle(), PI, &[(Mode::new(2, 0), a)]).unwrap();
        // v = 0.05 cos 2θ, so max|Dv| = 0.1 at the grid's 45° nodes
        assert!((s.constraint_report().eps_sup - 0.15).abs() < 1e-14);
    }

    #[test]
    fn shifted_ball_barycenter() {
        for g in [circle(), sphere()] {
            let n = g.dim();
            let omega = unit_ball_volume(n);
            let mut d = vec![0.0; n];
            d[0] = 0.1;
            let s = StarShape::shifted_ball(Arc::clone(&g), omega, &d).unwrap();
            let x = s.barycenter();
            assert!((x[0] - 0.1).abs() < 1e-9, "n={n}: {x:?}");
            assert!(x[1..].iter().all(|c| c.abs() < 1e-12));
            assert!((s.measure() - omega).abs() < 1e-9);
        }
    }

    #[test]
    fn volume_expansion_defect() {
        // under the volume constraint ∫v + (n−1)/2 ∫v² equals −(1/3)∫v³ for n = 3 and 0 for n = 2
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in [circle(), sphere()] {
            let n = g.dim();
            let c = if n == 2 { 0.0 } else { 1.0 / 3.0 };
            for _ in 0..20 {
                let s =
                    StarShape::random_perturbation(Arc::clone(&g), 1.0, 0.05, 2, &mut rng).unwrap();
                let p = s.project_to_constraints(1e-13).unwrap();
                let v = p.samples();
                let eps = p.eps_sup();
                let i1 = g.integrate(v).unwrap();
                let i2 = g.integrate_with(|i| v[i] * v[i]);
                let defect = (i1 + (n as f64 - 1.0) / 2.0 * i2).abs();
                assert!(
                    defect <= c * eps * i2 + 1e-13,
                    "n={n}: {defect} vs {}",
                    c * eps * i2
                );
            }
        }
    }

    #[test]
    fn taylor_remainder_vanishes_in_low_dimension() {
        // (1+v)^{n−1} is a polynomial of degree ≤ 2 for n ≤ 3, so the second-order expansion is exact
        for n in [2i32, 3] {
            for &v in &[-0.1, -0.03, 0.0, 0.07, 0.1] {
                let nf = n as f64;
                let exact = (1.0f64 + v).powi(n - 1);
                let taylor = 1.0 + (nf - 1.0) * v + (nf - 1.0) * (nf - 2.0) * v * v / 2.0;
                assert!((exact - taylor).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn metric_remainder_has_stable_constant() {
        // 1 + |Dv|²/2 − √(1 + |Dv|²/(1+v)²) ≤ C ε (v² + |Dv|²), C fitted at ε = 0.1 and reused
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let worst = |eps: f64, rng: &mut ChaCha8Rng| {
            let mut c: f64 = 0.0;
            for _ in 0..20 {
                let s = StarShape::random_perturbation(circle(), PI, eps, 2, rng).unwrap();
                for (i, &v) in s.samples().iter().enumerate() {
                    let g2 = s.grad_sq(i);
                    let lhs = 1.0 + g2 / 2.0 - (1.0 + g2 / (1.0 + v).powi(2)).sqrt();
                    let rhs = eps * (v * v + g2);
                    if rhs > 0.0 {
                        c = c.max(lhs / rhs);
                    }
                }
            }
            c
        };
        let fit = worst(0.1, &mut rng);
        assert!(fit.is_finite() && fit < 5.0);
        assert!(worst(0.05, &mut rng) <= fit * 1.2);
    }

    #[test]
    fn shape_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shape.json");
        let s = StarShape::from_modes(
            circle(),
            PI,
            &[(Mode::new(2, 1), 0.04), (Mode::new(5, 0), -0.01)],
        )
        .unwrap();
        s.to_file().write(&path).unwrap();
        let back = ShapeFile::read(&path).unwrap().to_shape(circle()).unwrap();
        assert_eq!(back.samples(), s.samples());
        let bad = ShapeFile {
            n: 3,
            omega: 1.0,
            coefficients: vec![],
        };
        assert!(bad.to_shape(circle()).is_err());
    }
}
