//! Transient heat conduction in a sheet exchanging heat with a fluid on its
//! surface, solved analytically.
//!
//! With the dimensionless depth `x_ds = x / e` and time `t_ds = t / t_D`, the
//! thermal gauge `theta = (T - T_i) / (T_inf - T_i)` reads
//!
//! ```text
//! theta = 1 - 2 sum_n beta_n cos(omega_n x_ds) exp(-omega_n^2 t_ds / 4)
//! beta_n = gamma_n sin(omega_n) / (omega_n (gamma_n + B_i)),  gamma_n = omega_n^2 + B_i^2
//! ```
//!
//! where `omega_n` is the n-th positive root of `omega tan(omega) = B_i`. The
//! series alone is the fraction of the initial temperature gap still to be
//! closed; it equals 1 at `t = 0` and decays to 0.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::model::{Model, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatError {
    #[error("Biot number must be positive, got {0}")]
    NonPositiveBiot(f64),
    #[error("{0}")]
    Domain(String),
    #[error("material parameter `{0}` must be positive and finite")]
    InvalidMaterial(&'static str),
    #[error("h(t) shape needs h_min < h_0 < h_max and t_max > 0")]
    InvalidShape,
}

/// Largest number of series terms ever summed.
pub const MAX_TERMS: usize = 500;
const TERM_TOLERANCE: f64 = 1e-12;
/// Below this dimensionless time the gauge is reported as exactly zero.
const T_DS_ZERO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub e: f64,
    pub lambda: f64,
    pub c_rho: f64,
    pub rho: f64,
    pub h: f64,
}

impl MaterialParams {
    pub const PTFE: Self = Self {
        e: 10e-3,
        lambda: 0.25,
        c_rho: 1300.0,
        rho: 2200.0,
        h: 100.0,
    };

    pub const IRON: Self = Self {
        e: 20e-3,
        lambda: 79.5,
        c_rho: 444.0,
        rho: 7874.0,
        h: 100.0,
    };

    pub fn validate(&self) -> Result<(), HeatError> {
        for (name, v) in [
            ("e", self.e),
            ("lambda", self.lambda),
            ("c_rho", self.c_rho),
            ("rho", self.rho),
            ("h", self.h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HeatError::InvalidMaterial(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// Thermal diffusivity.
    pub alpha: f64,
    /// Diffusion time `e^2 / (4 alpha)`.
    pub t_d: f64,
    pub biot: f64,
}

pub fn derived_params(mat: &MaterialParams) -> DerivedParams {
    let alpha = mat.lambda / (mat.rho * mat.c_rho);
    DerivedParams {
        alpha,
        t_d: mat.e * mat.e / (4.0 * alpha),
        biot: mat.h * mat.e / mat.lambda,
    }
}

/// The k-th (1-based) positive root of `omega tan(omega) = biot`, which lies in
/// `((k-1) pi, (k-1) pi + pi/2)`.
///
/// Works on `g(w) = w sin w - B cos w`, which has the same roots but no pole:
/// bisection narrows the bracket, Newton steps polish the root and are
/// rejected whenever they leave the current bracket.
pub fn omega_root(biot: f64, k: usize) -> f64 {
    assert!(k >= 1);
    let lo0 = (k - 1) as f64 * PI;
    // Scale by (-1)^(k-1) so that f < 0 on the left end and f > 0 on the right.
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    let f = |w: f64| sign * (w * w.sin() - biot * w.cos());
    let df = |w: f64| sign * ((1.0 + biot) * w.sin() + w * w.cos());
    let (mut lo, mut hi) = (lo0, lo0 + FRAC_PI_2);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut w = 0.5 * (lo + hi);
    for _ in 0..100 {
        let fw = f(w);
        if fw == 0.0 {
            break;
        }
        if fw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let step = fw / df(w);
        let mut next = w - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 2.0 * f64::EPSILON * w.max(1.0) || hi - lo <= 2.0 * f64::EPSILON * hi {
            w = next;
            break;
        }
        w = next;
    }
    w
}

pub fn omega_roots(biot: f64, n: usize) -> Result<Vec<f64>, HeatError> {
    if !(biot > 0.0 && biot.is_finite()) {
        return Err(HeatError::NonPositiveBiot(biot));
    }
    Ok((1..=n).map(|k| omega_root(biot, k)).collect())
}

fn beta_n(omega: f64, biot: f64) -> f64 {
    let gamma = omega * omega + biot * biot;
    gamma * omega.sin() / (omega * (gamma + biot))
}

fn check_domain(x_ds: f64, t_ds: f64, biot: f64) -> Result<(), HeatError> {
    if !(biot > 0.0 && biot.is_finite()) {
        return Err(HeatError::NonPositiveBiot(biot));
    }
    if !(0.0..=1.0).contains(&x_ds) {
        return Err(HeatError::Domain(format!("x_ds = {x_ds} outside [0, 1]")));
    }
    if !(t_ds >= 0.0 && t_ds.is_finite()) {
        return Err(HeatError::Domain(format!("t_ds = {t_ds} must be >= 0")));
    }
    Ok(())
}

/// Sums the series with roots supplied by `root(k)`, stopping once a term bound
/// drops below the tolerance or after `max_terms` terms.
fn sum_series(x_ds: f64, t_ds: f64, biot: f64, max_terms: usize, adaptive: bool, root: impl Fn(usize) -> f64) -> f64 {
    if t_ds < T_DS_ZERO {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..=max_terms {
        let w = root(k);
        let decay = (-0.25 * w * w * t_ds).exp();
        let b = beta_n(w, biot);
        s += 2.0 * b * (w * x_ds).cos() * decay;
        // |beta_n| <= 1/omega_n, so this bounds the current and later terms' scale.
        if adaptive && 2.0 / w * decay < TERM_TOLERANCE {
            break;
        }
    }
    (1.0 - s).clamp(0.0, 1.0)
}

/// Thermal gauge at dimensionless depth and time.
pub fn gauge(x_ds: f64, t_ds: f64, biot: f64) -> Result<f64, HeatError> {
    check_domain(x_ds, t_ds, biot)?;
    Ok(sum_series(x_ds, t_ds, biot, MAX_TERMS, true, |k| omega_root(biot, k)))
}

/// Gauge from a fixed number of terms, without the adaptive stop.
pub fn gauge_with_terms(x_ds: f64, t_ds: f64, biot: f64, n_terms: usize) -> Result<f64, HeatError> {
    check_domain(x_ds, t_ds, biot)?;
    Ok(sum_series(x_ds, t_ds, biot, n_terms, false, |k| omega_root(biot, k)))
}

/// Gauge evaluator for a fixed Biot number with all roots precomputed.
#[derive(Debug, Clone)]
pub struct GaugeSeries {
    biot: f64,
    roots: Vec<f64>,
}

impl GaugeSeries {
    pub fn new(biot: f64) -> Result<Self, HeatError> {
        Ok(Self {
            biot,
            roots: omega_roots(biot, MAX_TERMS)?,
        })
    }

    pub fn biot(&self) -> f64 {
        self.biot
    }

    pub fn theta(&self, x_ds: f64, t_ds: f64) -> Result<f64, HeatError> {
        check_domain(x_ds, t_ds, self.biot)?;
        Ok(sum_series(x_ds, t_ds, self.biot, MAX_TERMS, true, |k| {
            self.roots[k - 1]
        }))
    }
}

/// Physical temperature at depth `x` (|x| <= e) and time `t`.
pub fn temperature(x: f64, t: f64, mat: &MaterialParams, t_i: f64, t_inf: f64) -> Result<f64, HeatError> {
    mat.validate()?;
    if x.abs() > mat.e {
        return Err(HeatError::Domain(format!("|x| = {} exceeds e = {}", x.abs(), mat.e)));
    }
    let d = derived_params(mat);
    Ok(t_i + gauge(x.abs() / mat.e, t / d.t_d, d.biot)? * (t_inf - t_i))
}

/// Gauge for physical parameters at fixed dimensionless depth and physical time.
pub fn gauge_physical(mat: &MaterialParams, x_ds: f64, t: f64) -> Result<f64, HeatError> {
    mat.validate()?;
    let d = derived_params(mat);
    gauge(x_ds, t / d.t_d, d.biot)
}

/// Shape of the time-dependent exchange coefficient
/// `h(t) = h_min + (h_max - h_min) / (1 + beta (t - t_max)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HShapeParams {
    pub h_min: f64,
    pub h_max: f64,
    pub h_0: f64,
    pub t_max: f64,
}

impl Default for HShapeParams {
    fn default() -> Self {
        Self {
            h_min: 10.0,
            h_max: 43.0,
            h_0: 20.0,
            t_max: 5.0,
        }
    }
}

impl HShapeParams {
    pub fn validate(&self) -> Result<(), HeatError> {
        let finite = [self.h_min, self.h_max, self.h_0, self.t_max]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.h_min < self.h_0 && self.h_0 < self.h_max && self.t_max > 0.0 {
            Ok(())
        } else {
            Err(HeatError::InvalidShape)
        }
    }

    /// Chosen so that `h(0) = h_0`.
    pub fn beta(&self) -> f64 {
        (self.h_max - self.h_0) / (self.t_max * self.t_max * (self.h_0 - self.h_min))
    }
}

pub fn h_of_t(t: f64, p: &HShapeParams) -> f64 {
    let dt = t - p.t_max;
    p.h_min + (p.h_max - p.h_min) / (1.0 + p.beta() * dt * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// `(x_ds, t_ds) -> theta` at a fixed Biot number.
    GaugeXt,
    /// `(e, lambda, c_rho, rho) -> theta` at fixed depth, time and `h`.
    GaugePhysical,
    /// As above with a fifth input that is ignored.
    GaugePhysicalPlusUseless,
    /// `t -> -h(t)`.
    NegHOfT,
}

impl ModelVariant {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gauge_xt" => Self::GaugeXt,
            "gauge_physical" => Self::GaugePhysical,
            "gauge_physical_plus_useless" => Self::GaugePhysicalPlusUseless,
            "neg_h_of_t" => Self::NegHOfT,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaugeXt => "gauge_xt",
            Self::GaugePhysical => "gauge_physical",
            Self::GaugePhysicalPlusUseless => "gauge_physical_plus_useless",
            Self::NegHOfT => "neg_h_of_t",
        }
    }

    pub fn input_names(&self) -> &'static [&'static str] {
        match self {
            Self::GaugeXt => &["x_ds", "t_ds"],
            Self::GaugePhysical => &["e", "lambda", "c_rho", "rho"],
            Self::GaugePhysicalPlusUseless => &["e", "lambda", "c_rho", "rho", "useless"],
            Self::NegHOfT => &["t"],
        }
    }
}

/// Fixed settings of the benchmark models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    /// Biot number of `gauge_xt`.
    pub biot: f64,
    /// Depth and physical time of the physical variants.
    pub x_ds: f64,
    pub time: f64,
    /// Exchange coefficient of the physical variants.
    pub h: f64,
    pub shape: HShapeParams,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            biot: 4.0,
            x_ds: 0.5,
            time: 572.0,
            h: 100.0,
            shape: HShapeParams::default(),
        }
    }
}

/// One of the benchmark models, evaluable through [`Model`].
#[derive(Debug, Clone)]
pub struct HeatModel {
    variant: ModelVariant,
    settings: ModelSettings,
    series: Option<GaugeSeries>,
}

pub fn make_model(variant: ModelVariant, settings: ModelSettings) -> Result<HeatModel, HeatError> {
    let series = match variant {
        ModelVariant::GaugeXt => Some(GaugeSeries::new(settings.biot)?),
        ModelVariant::NegHOfT => {
            settings.shape.validate()?;
            None
        }
        _ => {
            check_domain(settings.x_ds, 0.0, 1.0)?;
            if !(settings.time >= 0.0 && settings.h > 0.0) {
                return Err(HeatError::Domain("time must be >= 0 and h > 0".into()));
            }
            None
        }
    };
    Ok(HeatModel {
        variant,
        settings,
        series,
    })
}

impl HeatModel {
    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }
}

impl Model for HeatModel {
    fn n_inputs(&self) -> usize {
        self.variant.input_names().len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        let s = &self.settings;
        let r = match self.variant {
            ModelVariant::GaugeXt => self.series.as_ref().expect("series").theta(x[0], x[1]),
            ModelVariant::GaugePhysical | ModelVariant::GaugePhysicalPlusUseless => {
                let mat = MaterialParams {
                    e: x[0],
                    lambda: x[1],
                    c_rho: x[2],
                    rho: x[3],
                    h: s.h,
                };
                gauge_physical(&mat, s.x_ds, s.time)
            }
            ModelVariant::NegHOfT => Ok(-h_of_t(x[0], &s.shape)),
        };
        r.map_err(|e| ModelError::Domain(e.to_string()))
    }
}
