//! Special functions used across the crate.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, SQRT_2};

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal cdf; `p` must lie in (0, 1).
///
/// The lower half is computed directly and the upper half by symmetry (`1 - p`
/// is exact for `p >= 1/2`). One Halley step on the cdf polishes the starting
/// value into the far tail.
pub fn normal_quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    let mut z = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    if p > 0.0 && z.is_finite() {
        let e = (normal_cdf(z) - p) / normal_pdf(z);
        z -= e / (1.0 + 0.5 * z * e);
    }
    z
}

/// Natural log of the modified Bessel function of the second kind, `ln K_nu(x)`,
/// for real `nu` and `x > 0`.
///
/// Uses `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` with the trapezoidal
/// rule. The integrand is analytic in a strip of half-width pi/2 and decays
/// doubly exponentially, so the rule converges geometrically in the step size.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0);
    // K_{-nu} = K_nu.
    let nu = nu.abs();
    let log_term = |t: f64| -x * t.cosh() + ln_cosh(nu * t);
    // Upper limit where the integrand has dropped by e^-50 from its peak.
    let peak_t = if nu > x { (nu / x).asinh() } else { 0.0 };
    let peak = log_term(peak_t);
    let mut upper = peak_t + 1.0;
    while log_term(upper) > peak - 50.0 {
        upper += 1.0;
    }
    let h = 0.05;
    let n = (upper / h).ceil() as usize;
    let mut acc = 0.5 * (log_term(0.0) - peak).exp();
    for k in 1..=n {
        acc += (log_term(k as f64 * h) - peak).exp();
    }
    peak + (acc * h).ln()
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Matern correlation in the parameterisation
/// `c(d) = (2 sqrt(nu) d)^nu K_nu(2 sqrt(nu) d) / (Gamma(nu) 2^(nu-1))`
/// where `d` is the distance already divided by the correlation length.
pub fn matern(nu: f64, scaled_distance: f64) -> f64 {
    let d = scaled_distance.abs();
    if d == 0.0 {
        return 1.0;
    }
    let u = 2.0 * nu.sqrt() * d;
    // Closed forms for half-integer orders.
    let half_integer = (nu - 0.5).round();
    if (nu - 0.5 - half_integer).abs() < 1e-14 && (0.0..=3.0).contains(&half_integer) {
        let e = (-u).exp();
        return match half_integer as i32 {
            0 => e,
            1 => (1.0 + u) * e,
            2 => (1.0 + u + u * u / 3.0) * e,
            _ => (1.0 + u + 0.4 * u * u + u * u * u / 15.0) * e,
        };
    }
    if u < 1e-10 {
        return 1.0;
    }
    if u > 745.0 + nu * u.ln() {
        return 0.0;
    }
    let ln_c = nu * u.ln() + ln_bessel_k(nu, u) - ln_gamma(nu) - (nu - 1.0) * LN_2;
    ln_c.exp().min(1.0)
}

/// Half-integer Bessel function in closed form, used as an oracle in tests:
/// `K_{1/2}(x) = sqrt(pi / (2x)) e^-x`.
#[cfg(test)]
fn bessel_k_half(x: f64) -> f64 {
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp()
}
