//! Quadrature, real harmonic expansion and surface differentiation on S^{n-1}, n ∈ {2, 3}.
//!
//! Harmonics are ordered degree-major, so the basis up to degree K is a prefix of the
//! basis up to any larger degree. Within degree k the intra-degree `index` is
//!
//! * circle: 0 → cos kθ, 1 → sin kθ (degree 0 has only index 0);
//! * sphere: 0 → zonal, 1..=k → cos(mφ) with m = index, k+1..=2k → sin(mφ) with
//!   m = index − k.
//!
//! On the sphere θ is the polar angle and ξ = (sinθ cosφ, sinθ sinφ, cosθ).

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub const DEFAULT_CIRCLE_RESOLUTION: usize = 256;
pub const DEFAULT_SPHERE_RESOLUTION: usize = 32;

/// A real harmonic on S^{n-1}, identified by degree and intra-degree index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub degree: usize,
    pub index: usize,
}

impl Mode {
    pub const fn new(degree: usize, index: usize) -> Self {
        Self { degree, index }
    }
}

/// Number of independent real harmonics of degree `k` on S^{n-1}.
pub fn degree_dimension(dim: usize, k: usize) -> usize {
    match (dim, k) {
        (2, 0) => 1,
        (2, _) => 2,
        (_, k) => 2 * k + 1,
    }
}

/// Number of harmonics of degree ≤ `max_degree`.
pub fn mode_count(dim: usize, max_degree: usize) -> usize {
    match dim {
        2 => 2 * max_degree + 1,
        _ => (max_degree + 1) * (max_degree + 1),
    }
}

/// Flat position of a mode in the degree-major ordering.
pub fn mode_offset(dim: usize, mode: Mode) -> Result<usize> {
    if mode.index >= degree_dimension(dim, mode.degree) {
        return Err(Error::InvalidMode {
            degree: mode.degree,
            index: mode.index,
        });
    }
    let start = if mode.degree == 0 {
        0
    } else {
        mode_count(dim, mode.degree - 1)
    };
    Ok(start + mode.index)
}

/// All modes up to `max_degree`, in storage order.
pub fn modes(dim: usize, max_degree: usize) -> Vec<Mode> {
    (0..=max_degree)
        .flat_map(|k| (0..degree_dimension(dim, k)).map(move |i| Mode::new(k, i)))
        .collect()
}

/// Laplace–Beltrami eigenvalue k(k + n − 2) of degree-k harmonics.
pub fn harmonic_eigenvalue(dim: usize, k: usize) -> f64 {
    (k * (k + dim - 2)) as f64
}

/// Sampled harmonic basis and its surface-gradient components.
///
/// `grad_a` is ∂/∂θ; on the sphere `grad_b` is (1/sinθ) ∂/∂φ, on the circle it is empty.
#[derive(Debug)]
struct Basis {
    max_degree: usize,
    nodes: usize,
    values: Vec<f64>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Basis {
    fn row(&self, f: usize) -> &[f64] {
        &self.values[f * self.nodes..(f + 1) * self.nodes]
    }
}

/// Quadrature grid on S^{n-1} with weights for the surface measure dσ.
pub struct SphereGrid {
    dim: usize,
    resolution: usize,
    azimuthal: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
    angles: Vec<(f64, f64)>,
    basis_cache: RwLock<Option<Arc<Basis>>>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("dim", &self.dim)
            .field("resolution", &self.resolution)
            .field("azimuthal", &self.azimuthal)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

impl Clone for SphereGrid {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            resolution: self.resolution,
            azimuthal: self.azimuthal,
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            angles: self.angles.clone(),
            basis_cache: RwLock::new(self.basis_cache.read().unwrap().clone()),
        }
    }
}

/// Build the default grid family for dimension `n`: `resolution` equispaced nodes on the
/// circle, or `resolution` Gauss–Legendre polar nodes × `2·resolution` azimuthal nodes on
/// the sphere.
pub fn make_grid(n: usize, resolution: usize) -> Result<SphereGrid> {
    match n {
        2 => SphereGrid::circle(resolution),
        3 => SphereGrid::sphere(resolution, 2 * resolution),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

impl SphereGrid {
    pub fn circle(nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return Err(Error::ResolutionTooLow {
                resolution: nodes,
                min: 8,
            });
        }
        let w = 2.0 * PI / nodes as f64;
        let angles: Vec<(f64, f64)> = (0..nodes).map(|j| (w * j as f64, 0.0)).collect();
        let pts = angles
            .iter()
            .map(|&(t, _)| [t.cos(), t.sin(), 0.0])
            .collect();
        Ok(Self {
            dim: 2,
            resolution: nodes,
            azimuthal: nodes,
            nodes: pts,
            weights: vec![w; nodes],
            angles,
            basis_cache: RwLock::new(None),
        })
    }

    pub fn sphere(polar: usize, azimuthal: usize) -> Result<Self> {
        if polar < 8 {
            return Err(Error::ResolutionTooLow {
                resolution: polar,
                min: 8,
            });
        }
        if azimuthal < 16 {
            return Err(Error::ResolutionTooLow {
                resolution: azimuthal,
                min: 16,
            });
        }
        let (x, wx) = gauss_legendre(polar);
        let dphi = 2.0 * PI / azimuthal as f64;
        let mut nodes = Vec::with_capacity(polar * azimuthal);
        let mut weights = Vec::with_capacity(polar * azimuthal);
        let mut angles = Vec::with_capacity(polar * azimuthal);
        for (xi, wi) in x.iter().zip(&wx) {
            let theta = xi.acos();
            let st = (1.0 - xi * xi).sqrt();
            for j in 0..azimuthal {
                let phi = dphi * j as f64;
                nodes.push([st * phi.cos(), st * phi.sin(), *xi]);
                weights.push(wi * dphi);
                angles.push((theta, phi));
            }
        }
        Ok(Self {
            dim: 3,
            resolution: polar,
            azimuthal,
            nodes,
            weights,
            angles,
            basis_cache: RwLock::new(None),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node `i` as a unit vector of length n.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    /// Polar angle θ (circle: the angle itself) of node `i`.
    pub fn theta(&self, i: usize) -> f64 {
        self.angles[i].0
    }

    /// Surface area of S^{n-1}.
    pub fn area(&self) -> f64 {
        match self.dim {
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        }
    }

    /// Largest degree whose pairwise products the grid integrates exactly.
    pub fn max_degree(&self) -> usize {
        match self.dim {
            2 => self.resolution / 2 - 1,
            _ => (self.resolution - 1).min((self.azimuthal - 1) / 2),
        }
    }

    /// Band limit used for shapes on this grid, so that (1+v)^{n+1} stays resolvable.
    pub fn shape_band_limit(&self) -> usize {
        self.resolution / 4
    }

    /// Weighted sum Σ w_i s_i.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples)?;
        Ok(compensated_sum(
            self.weights.iter().zip(samples).map(|(w, s)| w * s),
        ))
    }

    /// Σ w_i g(i) for a node-indexed integrand.
    pub fn integrate_with<F: Fn(usize) -> f64>(&self, g: F) -> f64 {
        compensated_sum(self.weights.iter().enumerate().map(|(i, w)| w * g(i)))
    }

    fn check_len(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: samples.len(),
            });
        }
        Ok(())
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.max_degree() {
            return Err(Error::DegreeTooHigh {
                degree,
                max: self.max_degree(),
            });
        }
        Ok(())
    }

    fn basis(&self, max_degree: usize) -> Result<Arc<Basis>> {
        self.check_degree(max_degree)?;
        if let Some(b) = self.basis_cache.read().unwrap().as_ref() {
            if b.max_degree >= max_degree {
                return Ok(Arc::clone(b));
            }
        }
        let built = Arc::new(match self.dim {
            2 => self.circle_basis(max_degree),
            _ => self.sphere_basis(max_degree),
        });
        let mut slot = self.basis_cache.write().unwrap();
        match slot.as_ref() {
            Some(b) if b.max_degree >= max_degree => Ok(Arc::clone(b)),
            _ => {
                *slot = Some(Arc::clone(&built));
                Ok(built)
            }
        }
    }

    fn circle_basis(&self, max_degree: usize) -> Basis {
        let n = self.len();
        let count = mode_count(2, max_degree);
        let mut values = vec![0.0; count * n];
        let mut grad_a = vec![0.0; count * n];
        let c0 = 1.0 / (2.0 * PI).sqrt();
        let c = 1.0 / PI.sqrt();
        for (i, &(t, _)) in self.angles.iter().enumerate() {
            values[i] = c0;
            for k in 1..=max_degree {
                let kf = k as f64;
                let (s, co) = (kf * t).sin_cos();
                let fc = 2 * k - 1;
                let fs = 2 * k;
                values[fc * n + i] = c * co;
                values[fs * n + i] = c * s;
                grad_a[fc * n + i] = -c * kf * s;
                grad_a[fs * n + i] = c * kf * co;
            }
        }
        Basis {
            max_degree,
            nodes: n,
            values,
            grad_a,
            grad_b: Vec::new(),
        }
    }

    fn sphere_basis(&self, max_degree: usize) -> Basis {
        let n = self.len();
        let kmax = max_degree;
        let count = mode_count(3, kmax);
        let mut values = vec![0.0; count * n];
        let mut grad_a = vec![0.0; count * n];
        let mut grad_b = vec![0.0; count * n];
        let idx = |k: usize, m: usize| k * (k + 1) / 2 + m;
        let tri = (kmax + 1) * (kmax + 2) / 2;
        let mut p = vec![0.0; tri];
        let mut dp = vec![0.0; tri];
        for (i, &(theta, phi)) in self.angles.iter().enumerate() {
            let (st, x) = theta.sin_cos();
            normalized_legendre(kmax, x, st, &mut p, &mut dp);
            for k in 0..=kmax {
                let base = k * k;
                values[base * n + i] = p[idx(k, 0)];
                grad_a[base * n + i] = dp[idx(k, 0)];
                for m in 1..=k {
                    let mf = m as f64;
                    let (sm, cm) = (mf * phi).sin_cos();
                    let pv = std::f64::consts::SQRT_2 * p[idx(k, m)];
                    let dv = std::f64::consts::SQRT_2 * dp[idx(k, m)];
                    let p_over_sin = pv / st;
                    let fc = base + m;
                    let fs = base + k + m;
                    values[fc * n + i] = pv * cm;
                    values[fs * n + i] = pv * sm;
                    grad_a[fc * n + i] = dv * cm;
                    grad_a[fs * n + i] = dv * sm;
                    grad_b[fc * n + i] = -mf * p_over_sin * sm;
                    grad_b[fs * n + i] = mf * p_over_sin * cm;
                }
            }
        }
        Basis {
            max_degree,
            nodes: n,
            values,
            grad_a,
            grad_b,
        }
    }
}

/// Orthonormal associated Legendre functions p_k^m(cosθ) (unit L² norm on S² once
/// combined with the azimuthal factor) and their θ-derivatives, stored in triangular order.
fn normalized_legendre(kmax: usize, x: f64, st: f64, p: &mut [f64], dp: &mut [f64]) {
    let idx = |k: usize, m: usize| k * (k + 1) / 2 + m;
    p[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=kmax {
        let mf = m as f64;
        p[idx(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * st * p[idx(m - 1, m - 1)];
    }
    for m in 0..kmax {
        p[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[idx(m, m)];
    }
    for m in 0..=kmax {
        let mf = m as f64;
        for k in (m + 2)..=kmax {
            let kf = k as f64;
            let a = ((4.0 * kf * kf - 1.0) / (kf * kf - mf * mf)).sqrt();
            let b = (((kf - 1.0).powi(2) - mf * mf) / (4.0 * (kf - 1.0).powi(2) - 1.0)).sqrt();
            p[idx(k, m)] = a * (x * p[idx(k - 1, m)] - b * p[idx(k - 2, m)]);
        }
    }
    for k in 0..=kmax {
        let kf = k as f64;
        for m in 0..=k {
            let mf = m as f64;
            let lower = if k > m {
                ((2.0 * kf + 1.0) / (2.0 * kf - 1.0) * (kf * kf - mf * mf)).sqrt()
                    * p[idx(k - 1, m)]
            } else {
                0.0
            };
            dp[idx(k, m)] = (kf * x * p[idx(k, m)] - lower) / st;
        }
    }
}

/// Coefficients of a function in the orthonormal real harmonic basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExpansion {
    dim: usize,
    max_degree: usize,
    coeffs: Vec<f64>,
}

impl HarmonicExpansion {
    pub fn zeros(dim: usize, max_degree: usize) -> Self {
        Self {
            dim,
            max_degree,
            coeffs: vec![0.0; mode_count(dim, max_degree)],
        }
    }

    pub fn from_coefficients(dim: usize, max_degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let want = mode_count(dim, max_degree);
        if coeffs.len() != want {
            return Err(Error::LengthMismatch {
                expected: want,
                got: coeffs.len(),
            });
        }
        Ok(Self {
            dim,
            max_degree,
            coeffs,
        })
    }

    /// Single-mode expansion `value · Y_mode`.
    pub fn single(dim: usize, max_degree: usize, mode: Mode, value: f64) -> Result<Self> {
        let mut e = Self::zeros(dim, max_degree);
        e.set(mode, value)?;
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, mode: Mode) -> f64 {
        match mode_offset(self.dim, mode) {
            Ok(o) if o < self.coeffs.len() => self.coeffs[o],
            _ => 0.0,
        }
    }

    pub fn set(&mut self, mode: Mode, value: f64) -> Result<()> {
        if mode.degree > self.max_degree {
            return Err(Error::DegreeTooHigh {
                degree: mode.degree,
                max: self.max_degree,
            });
        }
        let o = mode_offset(self.dim, mode)?;
        self.coeffs[o] = value;
        Ok(())
    }

    /// (mode, coefficient) pairs in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        modes(self.dim, self.max_degree)
            .into_iter()
            .zip(self.coeffs.iter().copied())
    }

    /// Σ a_k², the squared L² norm of the represented function.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum()
    }

    /// Σ k(k+n−2) a_k², the Dirichlet energy ‖Dv‖² computed in coefficients.
    pub fn dirichlet_energy(&self) -> f64 {
        self.iter()
            .map(|(m, a)| harmonic_eigenvalue(self.dim, m.degree) * a * a)
            .sum()
    }

    /// The same function viewed with a different band limit (truncating or zero-padding).
    pub fn with_max_degree(&self, max_degree: usize) -> Self {
        let mut out = Self::zeros(self.dim, max_degree);
        let n = out.coeffs.len().min(self.coeffs.len());
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }
}

/// Samples of the L²-normalized harmonic `mode` at the grid nodes.
pub fn harmonic_basis(grid: &SphereGrid, mode: Mode) -> Result<Vec<f64>> {
    grid.check_degree(mode.degree)?;
    let f = mode_offset(grid.dim, mode)?;
    let basis = grid.basis(mode.degree)?;
    Ok(basis.row(f).to_vec())
}

/// Coefficients a_k = ∫ v Y_k dσ for all modes up to `max_degree`.
pub fn expand(grid: &SphereGrid, samples: &[f64], max_degree: usize) -> Result<HarmonicExpansion> {
    grid.check_len(samples)?;
    let basis = grid.basis(max_degree)?;
    let count = mode_count(grid.dim, max_degree);
    let weighted: Vec<f64> = samples
        .iter()
        .zip(&grid.weights)
        .map(|(s, w)| s * w)
        .collect();
    let coeffs = (0..count)
        .map(|f| basis.row(f).iter().zip(&weighted).map(|(y, s)| y * s).sum())
        .collect();
    Ok(HarmonicExpansion {
        dim: grid.dim,
        max_degree,
        coeffs,
    })
}

/// Node samples of Σ a_k Y_k.
pub fn synthesize(grid: &SphereGrid, expansion: &HarmonicExpansion) -> Result<Vec<f64>> {
    check_expansion(grid, expansion)?;
    let basis = grid.basis(expansion.max_degree)?;
    Ok(combine(&basis.values, grid.len(), &expansion.coeffs))
}

fn check_expansion(grid: &SphereGrid, expansion: &HarmonicExpansion) -> Result<()> {
    if expansion.dim != grid.dim {
        return Err(Error::Shape(format!(
            "expansion on S^{} used with grid on S^{}",
            expansion.dim - 1,
            grid.dim - 1
        )));
    }
    grid.check_degree(expansion.max_degree)
}

fn combine(rows: &[f64], nodes: usize, coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nodes];
    for (f, &a) in coeffs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, y) in out.iter_mut().zip(&rows[f * nodes..(f + 1) * nodes]) {
            *o += a * y;
        }
    }
    out
}

/// Node samples of the two tangential gradient components of Σ a_k Y_k.
///
/// Circle: (dv/dθ, 0). Sphere: (∂v/∂θ, (1/sinθ) ∂v/∂φ).
pub fn surface_gradient(
    grid: &SphereGrid,
    expansion: &HarmonicExpansion,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_expansion(grid, expansion)?;
    let basis = grid.basis(expansion.max_degree)?;
    let n = grid.len();
    let ga = combine(&basis.grad_a, n, &expansion.coeffs);
    let gb = if basis.grad_b.is_empty() {
        vec![0.0; n]
    } else {
        combine(&basis.grad_b, n, &expansion.coeffs)
    };
    Ok((ga, gb))
}

/// Node samples of |Dv|² for v = Σ a_k Y_k.
pub fn surface_gradient_sq(grid: &SphereGrid, expansion: &HarmonicExpansion) -> Result<Vec<f64>> {
    let (ga, gb) = surface_gradient(grid, expansion)?;
    Ok(ga.iter().zip(&gb).map(|(a, b)| a * a + b * b).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SobolevNorms {
    pub l2_sq: f64,
    pub h1_seminorm_sq: f64,
    pub sup: f64,
    pub grad_sup: f64,
}

impl SobolevNorms {
    /// ‖v‖_∞ + ‖Dv‖_∞ on the grid.
    pub fn w1_inf(&self) -> f64 {
        self.sup + self.grad_sup
    }
}

/// L² quantities by quadrature and sup norms as grid maxima; the gradient comes from the
/// expansion at the grid's full band limit.
pub fn sobolev_norms(grid: &SphereGrid, samples: &[f64]) -> Result<SobolevNorms> {
    let e = expand(grid, samples, grid.max_degree())?;
    let g2 = surface_gradient_sq(grid, &e)?;
    Ok(norms_from(grid, samples, &g2))
}

pub(crate) fn norms_from(grid: &SphereGrid, samples: &[f64], grad_sq: &[f64]) -> SobolevNorms {
    SobolevNorms {
        l2_sq: grid.integrate_with(|i| samples[i] * samples[i]),
        h1_seminorm_sq: grid.integrate_with(|i| grad_sq[i]),
        sup: samples.iter().fold(0.0, |m, v| m.max(v.abs())),
        grad_sup: grad_sq.iter().fold(0.0f64, |m, g| m.max(g.sqrt())),
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + carry
}
