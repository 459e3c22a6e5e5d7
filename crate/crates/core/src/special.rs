//! Modified Bessel functions of the first kind and the radial weights built from them.
//!
//! Orders are restricted to non-negative multiples of 1/2, which covers every order
//! ν = n/2 − 1 and ν + 1 that appears for integer dimensions n ≥ 2.
//!
//! Throughout, `Z(r) = r^{-ν} I_ν(r)` is the radial profile of the extremal function
//! `z(x) = |x|^{1-n/2} I_{n/2-1}(|x|)` and `W(r) = Z'(r) = r^{-ν} I_{ν+1}(r)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Order ν of a modified Bessel function, stored as 2ν so half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BesselOrder {
    twice_order: u32,
}

impl BesselOrder {
    pub const fn new(twice_order: u32) -> Self {
        Self { twice_order }
    }

    pub const fn integer(k: u32) -> Self {
        Self { twice_order: 2 * k }
    }

    /// ν = n/2 − 1, the order attached to dimension `n`.
    pub fn for_dimension(n: usize) -> Self {
        assert!(n >= 2, "dimension must be at least 2, got {n}");
        Self {
            twice_order: (n - 2) as u32,
        }
    }

    pub const fn twice(self) -> u32 {
        self.twice_order
    }

    pub fn value(self) -> f64 {
        self.twice_order as f64 / 2.0
    }

    /// The order ν + 1.
    pub const fn succ(self) -> Self {
        Self {
            twice_order: self.twice_order + 2,
        }
    }
}

/// Γ(m/2) for m ≥ 1, from Γ(1) = 1, Γ(1/2) = √π and Γ(x + 1) = xΓ(x).
pub fn gamma_half(twice_arg: u32) -> f64 {
    assert!(twice_arg >= 1, "gamma_half needs a positive argument");
    let (mut g, mut x) = if twice_arg.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    let target = twice_arg as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// Volume ω_n of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    assert!(n >= 1);
    PI.powf(n as f64 / 2.0) / gamma_half(n as u32 + 2)
}

/// Surface area nω_n of the unit sphere S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Radius of the ball in R^n with Lebesgue measure `omega`.
pub fn ball_radius(n: usize, omega: f64) -> f64 {
    (omega / unit_ball_volume(n)).powf(1.0 / n as f64)
}

/// Above this argument the asymptotic expansion replaces the ascending series.
fn switch_point(nu: f64) -> f64 {
    30.0 + 2.0 * nu
}

/// s^{-ν} I_ν(s) from the ascending series, 2^{-ν} Σ (s²/4)^k / (k! Γ(ν+k+1)).
fn reduced_series(order: BesselOrder, s: f64) -> f64 {
    let nu = order.value();
    let q = 0.25 * s * s;
    let mut term = 1.0 / gamma_half(order.twice() + 2);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (nu + k));
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    sum * 2f64.powf(-nu)
}

/// e^{-s} I_ν(s) from the large-argument expansion Σ (−1)^k a_k(ν) / s^k / √(2πs).
fn scaled_asymptotic(order: BesselOrder, s: f64) -> f64 {
    let mu = 4.0 * order.value().powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * s);
        if next == 0.0 || next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * s).sqrt()
}

fn check_arg(func: &'static str, s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { func, value: s })
    }
}

/// I_ν(s) for s ≥ 0. I_0(0) = 1 and I_ν(0) = 0 for ν > 0.
pub fn bessel_i(order: BesselOrder, s: f64) -> Result<f64> {
    check_arg("bessel_i", s)?;
    if s == 0.0 {
        return Ok(if order.twice() == 0 { 1.0 } else { 0.0 });
    }
    let nu = order.value();
    if s <= switch_point(nu) {
        Ok(s.powf(nu) * reduced_series(order, s))
    } else {
        Ok(scaled_asymptotic(order, s) * s.exp())
    }
}

/// e^{-s} I_ν(s), finite for all s ≥ 0.
pub fn bessel_i_scaled(order: BesselOrder, s: f64) -> Result<f64> {
    check_arg("bessel_i_scaled", s)?;
    if s == 0.0 {
        return Ok(if order.twice() == 0 { 1.0 } else { 0.0 });
    }
    let nu = order.value();
    if s <= switch_point(nu) {
        Ok((-s).exp() * s.powf(nu) * reduced_series(order, s))
    } else {
        Ok(scaled_asymptotic(order, s))
    }
}

/// Ascending-series branch only, for overlap checks against the asymptotic branch.
#[doc(hidden)]
pub fn bessel_i_series(order: BesselOrder, s: f64) -> f64 {
    s.powf(order.value()) * reduced_series(order, s)
}

/// Asymptotic branch only, for overlap checks against the series branch.
#[doc(hidden)]
pub fn bessel_i_asymptotic(order: BesselOrder, s: f64) -> f64 {
    scaled_asymptotic(order, s) * s.exp()
}

/// I_ν'(s) = (ν/s) I_ν(s) + I_{ν+1}(s) for s > 0.
pub fn bessel_i_prime(order: BesselOrder, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain {
            func: "bessel_i_prime",
            value: s,
        });
    }
    let nu = order.value();
    Ok(nu / s * bessel_i(order, s)? + bessel_i(order.succ(), s)?)
}

/// r^{-ν} I_ν(r), using the series directly so r = 0 gives 1/(2^ν Γ(ν+1)).
fn reduced(order: BesselOrder, r: f64) -> f64 {
    let nu = order.value();
    if r <= switch_point(nu) {
        reduced_series(order, r)
    } else {
        (r - nu * r.ln()).exp() * scaled_asymptotic(order, r)
    }
}

/// Z(r) = r^{1-n/2} I_{n/2-1}(r), the radial profile of the extremal function.
pub fn z_value(n: usize, r: f64) -> Result<f64> {
    check_arg("z_value", r)?;
    Ok(reduced(BesselOrder::for_dimension(n), r))
}

/// Z'(r) = r^{1-n/2} I_{n/2}(r).
pub fn z_deriv(n: usize, r: f64) -> Result<f64> {
    check_arg("z_deriv", r)?;
    Ok(z_deriv_unchecked(BesselOrder::for_dimension(n), r))
}

fn z_deriv_unchecked(order: BesselOrder, r: f64) -> f64 {
    // r^{-ν} I_{ν+1}(r) = r · r^{-(ν+1)} I_{ν+1}(r)
    r * reduced(order.succ(), r)
}

/// (Z(r), Z'(r)) for the order attached to dimension `n`; r ≥ 0 is assumed.
pub(crate) fn z_pair(order: BesselOrder, r: f64) -> (f64, f64) {
    (reduced(order, r), z_deriv_unchecked(order, r))
}

/// Density of the weighted volume along a ray: Z'(r)² + Z(r)² times the Jacobian r^{n-1}.
pub(crate) fn volume_density(order: BesselOrder, r: f64) -> f64 {
    let (z, w) = z_pair(order, r);
    (z * z + w * w) * r.powi(order.twice() as i32 + 1)
}

/// The radial weights h_ρ(t) = Z(tρ)² and f_ρ(t) = Z(tρ) Z'(tρ) = h_ρ'(t) / (2ρ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialWeight {
    rho: f64,
    n: usize,
    order: BesselOrder,
}

impl RadialWeight {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain {
                func: "RadialWeight::new",
                value: rho,
            });
        }
        Ok(Self {
            rho,
            n,
            order: BesselOrder::for_dimension(n),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> BesselOrder {
        self.order
    }

    pub(crate) fn h_unchecked(&self, t: f64) -> f64 {
        let z = reduced(self.order, t * self.rho);
        z * z
    }

    pub(crate) fn f_unchecked(&self, t: f64) -> f64 {
        let (z, w) = z_pair(self.order, t * self.rho);
        z * w
    }

    /// (h, h', h'') at t, from Z' = W and W' = Z − (2ν+1) W / r.
    pub fn h_derivatives(&self, t: f64) -> [f64; 3] {
        let rho = self.rho;
        let r = t * rho;
        let (z, w) = z_pair(self.order, r);
        let w_over_r = reduced(self.order.succ(), r);
        let c = self.order.twice() as f64 + 1.0;
        let dw = z - c * w_over_r;
        [z * z, 2.0 * rho * z * w, 2.0 * rho * rho * (w * w + z * dw)]
    }

    /// (f, f', f'') at t.
    pub fn f_derivatives(&self, t: f64) -> [f64; 3] {
        let rho = self.rho;
        let r = t * rho;
        let (z, w) = z_pair(self.order, r);
        let w_over_r = reduced(self.order.succ(), r);
        let c = self.order.twice() as f64 + 1.0;
        let dw = z - c * w_over_r;
        // g = W² + Z W' = W² + Z² − c Z W / r
        let g = w * w + z * dw;
        // d/dr (Z W / r) = (W² + Z W') / r − Z W / r², written without dividing by r twice
        let d_zw_over_r = if r > 0.0 { (g - z * w_over_r) / r } else { 0.0 };
        let dg = 2.0 * w * dw + 2.0 * z * w - c * d_zw_over_r;
        [z * w, rho * g, rho * rho * dg]
    }
}

/// h_ρ(t) = ((tρ)^{1-n/2} I_{n/2-1}(tρ))². At t = 0 returns the series limit.
pub fn weight_h(w: &RadialWeight, t: f64) -> Result<f64> {
    check_arg("weight_h", t)?;
    Ok(w.h_unchecked(t))
}

/// f_ρ(t) = (tρ)^{2-n} I_{n/2-1}(tρ) I_{n/2}(tρ). At t = 0 returns 0.
pub fn weight_f(w: &RadialWeight, t: f64) -> Result<f64> {
    check_arg("weight_f", t)?;
    Ok(w.f_unchecked(t))
}

/// λ(B_ρ) = f_ρ(1)/h_ρ(1) = I_{n/2}(ρ)/I_{n/2-1}(ρ).
pub fn lambda_ball(n: usize, rho: f64) -> f64 {
    assert!(
        n >= 2 && rho >= 0.0,
        "lambda_ball needs n >= 2 and rho >= 0"
    );
    let order = BesselOrder::for_dimension(n);
    if rho <= switch_point(order.value()) {
        // W/Z with W = r · r^{-(ν+1)} I_{ν+1}
        rho * reduced_series(order.succ(), rho) / reduced_series(order, rho)
    } else {
        scaled_asymptotic(order.succ(), rho) / scaled_asymptotic(order, rho)
    }
}

fn bessel_pair(n: usize, s: f64) -> (f64, f64, f64) {
    let order = BesselOrder::for_dimension(n);
    let a = bessel_i(order, s).expect("non-negative argument");
    let b = bessel_i(order.succ(), s).expect("non-negative argument");
    (order.value(), a, b)
}

/// H_n(s) = 2s² I_{ν+1}² + 2(2ν+1) s I_ν I_{ν+1} + (2ν + 3 − 2s²) I_ν², ν = n/2 − 1.
pub fn hn(n: usize, s: f64) -> f64 {
    let (nu, a, b) = bessel_pair(n, s);
    2.0 * s * s * b * b
        + 2.0 * (2.0 * nu + 1.0) * s * a * b
        + (2.0 * nu + 3.0 - 2.0 * s * s) * a * a
}

/// s^{-2ν} H_n(s), which stays finite and tends to (2ν+3)/(2^ν Γ(ν+1))² as s → 0.
pub fn hn_reduced(n: usize, s: f64) -> f64 {
    let order = BesselOrder::for_dimension(n);
    let nu = order.value();
    let a = reduced(order, s);
    let b = s * reduced(order.succ(), s);
    2.0 * s * s * b * b
        + 2.0 * (2.0 * nu + 1.0) * s * a * b
        + (2.0 * nu + 3.0 - 2.0 * s * s) * a * a
}

/// H_n'(s) by the product rule, with I_ν' and I_{ν+1}' from the derivation rules.
pub fn hn_derivative(n: usize, s: f64) -> f64 {
    let (nu, a, b) = bessel_pair(n, s);
    let da = nu / s * a + b;
    let db = a - (nu + 1.0) / s * b;
    let c = 2.0 * nu + 1.0;
    4.0 * s * b * b + 4.0 * s * s * b * db + 2.0 * c * (a * b + s * da * b + s * a * db)
        - 4.0 * s * a * a
        + 2.0 * (2.0 * nu + 3.0 - 2.0 * s * s) * a * da
}

/// The closed form of d/ds (s H_2'(s)) in dimension two: 6s I_1² + 2s I_0².
pub fn g2_prime(s: f64) -> f64 {
    let (_, a, b) = bessel_pair(2, s);
    6.0 * s * b * b + 2.0 * s * a * a
}

/// Left-hand side of the second-order stability condition at t = 1:
///
/// ```text
/// (n−1)(f h' − f' h) + (f h'' − f'' h) + 2n h f
/// ```
///
/// with h = h_ρ, f = f_ρ and all derivatives taken analytically in t.
pub fn stability_coefficient(n: usize, rho: f64) -> f64 {
    let w = RadialWeight::new(n, rho).expect("n >= 2 and rho > 0");
    let [h, h1, h2] = w.h_derivatives(1.0);
    let [f, f1, f2] = w.f_derivatives(1.0);
    (n as f64 - 1.0) * (f * h1 - f1 * h) + (f * h2 - f2 * h) + 2.0 * n as f64 * h * f
}
