//! Continuous parametric laws with density, cdf, inverse cdf and seeded sampling.
//!
//! Parameters follow the usual listing order of each law, which is also the
//! order used by the textual form `Law(p1, p2, ...)`:
//!
//! | law            | parameters                   |
//! |----------------|------------------------------|
//! | Uniform        | min, max                     |
//! | LogUniform     | min, max                     |
//! | Triangular     | min, max, mode               |
//! | LogTriangular  | min, max, mode               |
//! | Normal         | mean, sigma                  |
//! | LogNormal      | mean, sigma (of `ln X`)      |
//! | Trapezium      | min, max, low, up            |
//! | UniformByParts | min, max, median             |
//! | Exponential    | rate, min                    |
//! | Cauchy         | scale, median                |
//! | GumbelMax      | mode, scale                  |
//! | Weibull        | scale, shape, min            |
//! | Beta           | alpha, beta, min, max        |
//! | GenPareto      | location, scale, shape       |
//! | Gamma          | shape, scale, location       |
//! | InvGamma       | shape, scale, location       |

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::random::RandomStream;
use crate::special::{beta_reg, gamma_lr, gamma_ur, ln_gamma, normal_cdf, normal_pdf, normal_quantile};
use crate::textfmt::format_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{law}: invalid parameters ({reason})")]
    InvalidParams { law: &'static str, reason: String },
    #[error("probability {0} outside (0, 1)")]
    OutOfRange(f64),
    #[error("unknown law `{0}`")]
    UnknownLaw(String),
    #[error("{law} takes {expected} parameters, got {found}")]
    Arity { law: String, expected: usize, found: usize },
    #[error("cannot parse law specification `{0}`")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Uniform { min: f64, max: f64 },
    LogUniform { min: f64, max: f64 },
    Triangular { min: f64, max: f64, mode: f64 },
    LogTriangular { min: f64, max: f64, mode: f64 },
    Normal { mean: f64, sigma: f64 },
    LogNormal { mean: f64, sigma: f64 },
    Trapezium { min: f64, max: f64, low: f64, up: f64 },
    UniformByParts { min: f64, max: f64, median: f64 },
    Exponential { rate: f64, min: f64 },
    Cauchy { scale: f64, median: f64 },
    GumbelMax { mode: f64, scale: f64 },
    Weibull { scale: f64, shape: f64, min: f64 },
    Beta { alpha: f64, beta: f64, min: f64, max: f64 },
    GenPareto { location: f64, scale: f64, shape: f64 },
    Gamma { shape: f64, scale: f64, location: f64 },
    InvGamma { shape: f64, scale: f64, location: f64 },
}

const LAW_NAMES: [(&str, usize); 16] = [
    ("Uniform", 2),
    ("LogUniform", 2),
    ("Triangular", 3),
    ("LogTriangular", 3),
    ("Normal", 2),
    ("LogNormal", 2),
    ("Trapezium", 4),
    ("UniformByParts", 3),
    ("Exponential", 2),
    ("Cauchy", 2),
    ("GumbelMax", 2),
    ("Weibull", 3),
    ("Beta", 4),
    ("GenPareto", 3),
    ("Gamma", 3),
    ("InvGamma", 3),
];

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "Uniform",
            Self::LogUniform { .. } => "LogUniform",
            Self::Triangular { .. } => "Triangular",
            Self::LogTriangular { .. } => "LogTriangular",
            Self::Normal { .. } => "Normal",
            Self::LogNormal { .. } => "LogNormal",
            Self::Trapezium { .. } => "Trapezium",
            Self::UniformByParts { .. } => "UniformByParts",
            Self::Exponential { .. } => "Exponential",
            Self::Cauchy { .. } => "Cauchy",
            Self::GumbelMax { .. } => "GumbelMax",
            Self::Weibull { .. } => "Weibull",
            Self::Beta { .. } => "Beta",
            Self::GenPareto { .. } => "GenPareto",
            Self::Gamma { .. } => "Gamma",
            Self::InvGamma { .. } => "InvGamma",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Uniform { min, max } | Self::LogUniform { min, max } => vec![min, max],
            Self::Triangular { min, max, mode } | Self::LogTriangular { min, max, mode } => {
                vec![min, max, mode]
            }
            Self::Normal { mean, sigma } | Self::LogNormal { mean, sigma } => vec![mean, sigma],
            Self::Trapezium { min, max, low, up } => vec![min, max, low, up],
            Self::UniformByParts { min, max, median } => vec![min, max, median],
            Self::Exponential { rate, min } => vec![rate, min],
            Self::Cauchy { scale, median } => vec![scale, median],
            Self::GumbelMax { mode, scale } => vec![mode, scale],
            Self::Weibull { scale, shape, min } => vec![scale, shape, min],
            Self::Beta { alpha, beta, min, max } => vec![alpha, beta, min, max],
            Self::GenPareto { location, scale, shape } => vec![location, scale, shape],
            Self::Gamma { shape, scale, location } | Self::InvGamma { shape, scale, location } => {
                vec![shape, scale, location]
            }
        }
    }

    pub fn from_params(name: &str, p: &[f64]) -> Result<Self, DistError> {
        let (canonical, arity) = LAW_NAMES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .copied()
            .ok_or_else(|| DistError::UnknownLaw(name.to_string()))?;
        if p.len() != arity {
            return Err(DistError::Arity {
                law: canonical.to_string(),
                expected: arity,
                found: p.len(),
            });
        }
        Ok(match canonical {
            "Uniform" => Self::Uniform { min: p[0], max: p[1] },
            "LogUniform" => Self::LogUniform { min: p[0], max: p[1] },
            "Triangular" => Self::Triangular {
                min: p[0],
                max: p[1],
                mode: p[2],
            },
            "LogTriangular" => Self::LogTriangular {
                min: p[0],
                max: p[1],
                mode: p[2],
            },
            "Normal" => Self::Normal {
                mean: p[0],
                sigma: p[1],
            },
            "LogNormal" => Self::LogNormal {
                mean: p[0],
                sigma: p[1],
            },
            "Trapezium" => Self::Trapezium {
                min: p[0],
                max: p[1],
                low: p[2],
                up: p[3],
            },
            "UniformByParts" => Self::UniformByParts {
                min: p[0],
                max: p[1],
                median: p[2],
            },
            "Exponential" => Self::Exponential { rate: p[0], min: p[1] },
            "Cauchy" => Self::Cauchy {
                scale: p[0],
                median: p[1],
            },
            "GumbelMax" => Self::GumbelMax {
                mode: p[0],
                scale: p[1],
            },
            "Weibull" => Self::Weibull {
                scale: p[0],
                shape: p[1],
                min: p[2],
            },
            "Beta" => Self::Beta {
                alpha: p[0],
                beta: p[1],
                min: p[2],
                max: p[3],
            },
            "GenPareto" => Self::GenPareto {
                location: p[0],
                scale: p[1],
                shape: p[2],
            },
            "Gamma" => Self::Gamma {
                shape: p[0],
                scale: p[1],
                location: p[2],
            },
            _ => Self::InvGamma {
                shape: p[0],
                scale: p[1],
                location: p[2],
            },
        })
    }

    fn validate(&self) -> Result<(), String> {
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(msg.to_string()) };
        match *self {
            Self::Uniform { min, max } => check(min < max, "min < max"),
            Self::LogUniform { min, max } => check(0.0 < min && min < max, "0 < min < max"),
            Self::Triangular { min, max, mode } => {
                check(min < max && min <= mode && mode <= max, "min <= mode <= max, min < max")
            }
            Self::LogTriangular { min, max, mode } => check(
                0.0 < min && min < max && min <= mode && mode <= max,
                "0 < min <= mode <= max, min < max",
            ),
            Self::Normal { sigma, .. } | Self::LogNormal { sigma, .. } => check(sigma > 0.0, "sigma > 0"),
            Self::Trapezium { min, max, low, up } => check(min < low && low < up && up < max, "min < low < up < max"),
            Self::UniformByParts { min, max, median } => check(min < median && median < max, "min < median < max"),
            Self::Exponential { rate, .. } => check(rate > 0.0, "rate > 0"),
            Self::Cauchy { scale, .. } | Self::GumbelMax { scale, .. } => check(scale > 0.0, "scale > 0"),
            Self::Weibull { scale, shape, .. } => check(scale > 0.0 && shape > 0.0, "scale > 0, shape > 0"),
            Self::Beta { alpha, beta, min, max } => {
                check(alpha > 0.0 && beta > 0.0 && min < max, "alpha > 0, beta > 0, min < max")
            }
            Self::GenPareto { scale, .. } => check(scale > 0.0, "scale > 0"),
            Self::Gamma { shape, scale, .. } | Self::InvGamma { shape, scale, .. } => {
                check(shape > 0.0 && scale > 0.0, "shape > 0, scale > 0")
            }
        }
    }
}

/// A validated law. Construction is the only way to obtain one, so every
/// `Distribution` value has admissible parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distribution {
    law: Law,
}

impl Distribution {
    pub fn new(law: Law) -> Result<Self, DistError> {
        law.validate().map_err(|reason| DistError::InvalidParams {
            law: law.name(),
            reason,
        })?;
        Ok(Self { law })
    }

    pub fn uniform(min: f64, max: f64) -> Result<Self, DistError> {
        Self::new(Law::Uniform { min, max })
    }

    pub fn normal(mean: f64, sigma: f64) -> Result<Self, DistError> {
        Self::new(Law::Normal { mean, sigma })
    }

    /// Parses `Law(p1, p2, ...)`, e.g. `Normal(10e-3, 5e-5)`.
    pub fn parse(spec: &str) -> Result<Self, DistError> {
        let spec = spec.trim();
        let open = spec.find('(').ok_or_else(|| DistError::Parse(spec.to_string()))?;
        let inner = spec[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| DistError::Parse(spec.to_string()))?;
        let name = spec[..open].trim();
        let params = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| DistError::Parse(spec.to_string()))?
        };
        Self::new(Law::from_params(name, &params)?)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// Closure of the support; bounds may be infinite.
    pub fn support(&self) -> (f64, f64) {
        let inf = f64::INFINITY;
        match self.law {
            Law::Uniform { min, max }
            | Law::LogUniform { min, max }
            | Law::Triangular { min, max, .. }
            | Law::LogTriangular { min, max, .. }
            | Law::Trapezium { min, max, .. }
            | Law::UniformByParts { min, max, .. }
            | Law::Beta { min, max, .. } => (min, max),
            Law::Normal { .. } | Law::Cauchy { .. } | Law::GumbelMax { .. } => (-inf, inf),
            Law::LogNormal { .. } => (0.0, inf),
            Law::Exponential { min, .. } | Law::Weibull { min, .. } => (min, inf),
            Law::GenPareto { location, scale, shape } => {
                if shape < 0.0 {
                    (location, location - scale / shape)
                } else {
                    (location, inf)
                }
            }
            Law::Gamma { location, .. } | Law::InvGamma { location, .. } => (location, inf),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match self.law {
            Law::Uniform { min, max } => 1.0 / (max - min),
            Law::LogUniform { min, max } => 1.0 / (x * (max / min).ln()),
            Law::Triangular { min, max, mode } => triangular_pdf(min, max, mode, x),
            Law::LogTriangular { min, max, mode } => {
                if x <= 0.0 {
                    0.0
                } else {
                    triangular_pdf(min.ln(), max.ln(), mode.ln(), x.ln()) / x
                }
            }
            Law::Normal { mean, sigma } => normal_pdf((x - mean) / sigma) / sigma,
            Law::LogNormal { mean, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_pdf((x.ln() - mean) / sigma) / (sigma * x)
                }
            }
            Law::Trapezium { min, max, low, up } => {
                let h = 2.0 / ((max - min) + (up - low));
                if x < low {
                    h * (x - min) / (low - min)
                } else if x <= up {
                    h
                } else {
                    h * (max - x) / (max - up)
                }
            }
            Law::UniformByParts { min, max, median } => {
                if x <= median {
                    0.5 / (median - min)
                } else {
                    0.5 / (max - median)
                }
            }
            Law::Exponential { rate, min } => rate * (-rate * (x - min)).exp(),
            Law::Cauchy { scale, median } => {
                let z = (x - median) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            Law::GumbelMax { mode, scale } => {
                let z = (x - mode) / scale;
                (-(z + (-z).exp())).exp() / scale
            }
            Law::Weibull { scale, shape, min } => {
                let z = (x - min) / scale;
                if z == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
            }
            Law::Beta { alpha, beta, min, max } => {
                let w = max - min;
                let z = (x - min) / w;
                let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
                ((alpha - 1.0) * z.ln() + (beta - 1.0) * (1.0 - z).ln() - ln_b).exp() / w
            }
            Law::GenPareto { location, scale, shape } => {
                let z = (x - location) / scale;
                if shape == 0.0 {
                    (-z).exp() / scale
                } else {
                    (1.0 + shape * z).powf(-1.0 / shape - 1.0) / scale
                }
            }
            Law::Gamma { shape, scale, location } => {
                let z = (x - location) / scale;
                if z == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                ((shape - 1.0) * z.ln() - z - ln_gamma(shape)).exp() / scale
            }
            Law::InvGamma { shape, scale, location } => {
                let z = x - location;
                if z <= 0.0 {
                    return 0.0;
                }
                (shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * z.ln() - scale / z).exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let p = match self.law {
            Law::Uniform { min, max } => (x - min) / (max - min),
            Law::LogUniform { min, max } => (x / min).ln() / (max / min).ln(),
            Law::Triangular { min, max, mode } => triangular_cdf(min, max, mode, x),
            Law::LogTriangular { min, max, mode } => triangular_cdf(min.ln(), max.ln(), mode.ln(), x.ln()),
            Law::Normal { mean, sigma } => normal_cdf((x - mean) / sigma),
            Law::LogNormal { mean, sigma } => normal_cdf((x.ln() - mean) / sigma),
            Law::Trapezium { min, max, low, up } => {
                let h = 2.0 / ((max - min) + (up - low));
                if x < low {
                    h * (x - min).powi(2) / (2.0 * (low - min))
                } else if x <= up {
                    h * (low - min) / 2.0 + h * (x - low)
                } else {
                    1.0 - h * (max - x).powi(2) / (2.0 * (max - up))
                }
            }
            Law::UniformByParts { min, max, median } => {
                if x <= median {
                    0.5 * (x - min) / (median - min)
                } else {
                    0.5 + 0.5 * (x - median) / (max - median)
                }
            }
            Law::Exponential { rate, min } => -(-rate * (x - min)).exp_m1(),
            Law::Cauchy { scale, median } => 0.5 + ((x - median) / scale).atan() / PI,
            Law::GumbelMax { mode, scale } => (-(-(x - mode) / scale).exp()).exp(),
            Law::Weibull { scale, shape, min } => -(-((x - min) / scale).powf(shape)).exp_m1(),
            Law::Beta { alpha, beta, min, max } => beta_reg(alpha, beta, (x - min) / (max - min)),
            Law::GenPareto { location, scale, shape } => {
                let z = (x - location) / scale;
                if shape == 0.0 {
                    -(-z).exp_m1()
                } else {
                    -((-1.0 / shape) * (shape * z).ln_1p()).exp_m1()
                }
            }
            Law::Gamma { shape, scale, location } => gamma_lr(shape, (x - location) / scale),
            Law::InvGamma { shape, scale, location } => gamma_ur(shape, scale / (x - location)),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::OutOfRange(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self.law {
            Law::Uniform { min, max } => min + p * (max - min),
            Law::LogUniform { min, max } => min * (max / min).powf(p),
            Law::Triangular { min, max, mode } => triangular_quantile(min, max, mode, p),
            Law::LogTriangular { min, max, mode } => triangular_quantile(min.ln(), max.ln(), mode.ln(), p).exp(),
            Law::Normal { mean, sigma } => mean + sigma * normal_quantile(p),
            Law::LogNormal { mean, sigma } => (mean + sigma * normal_quantile(p)).exp(),
            Law::Trapezium { min, max, low, up } => {
                let h = 2.0 / ((max - min) + (up - low));
                let p1 = h * (low - min) / 2.0;
                let p2 = p1 + h * (up - low);
                if p < p1 {
                    min + (2.0 * p * (low - min) / h).sqrt()
                } else if p <= p2 {
                    low + (p - p1) / h
                } else {
                    max - (2.0 * (1.0 - p) * (max - up) / h).sqrt()
                }
            }
            Law::UniformByParts { min, max, median } => {
                if p <= 0.5 {
                    min + 2.0 * p * (median - min)
                } else {
                    median + (2.0 * p - 1.0) * (max - median)
                }
            }
            Law::Exponential { rate, min } => min - (-p).ln_1p() / rate,
            Law::Cauchy { scale, median } => median + scale * (PI * (p - 0.5)).tan(),
            Law::GumbelMax { mode, scale } => mode - scale * (-p.ln()).ln(),
            Law::Weibull { scale, shape, min } => min + scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Law::GenPareto { location, scale, shape } => {
                let l = -(-p).ln_1p();
                if shape == 0.0 {
                    location + scale * l
                } else {
                    location + scale * (shape * l).exp_m1() / shape
                }
            }
            Law::Beta { min, max, .. } => self.solve_quantile(p, min, max),
            Law::Gamma { shape, scale, location } => {
                let mut hi = location + scale * (shape + 1.0);
                while self.cdf(hi) < p {
                    hi = location + 2.0 * (hi - location);
                }
                self.solve_quantile(p, location, hi)
            }
            Law::InvGamma { scale, location, .. } => {
                let mut hi = location + scale;
                while self.cdf(hi) < p {
                    hi = location + 2.0 * (hi - location);
                }
                self.solve_quantile(p, location, hi)
            }
        }
    }

    /// Bracketed bisection/secant hybrid on the cdf, capped at 200 iterations.
    fn solve_quantile(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut f_lo = self.cdf(lo) - p;
        let mut f_hi = self.cdf(hi) - p;
        if f_lo >= 0.0 {
            return lo;
        }
        if f_hi <= 0.0 {
            return hi;
        }
        let mut use_secant = true;
        for _ in 0..200 {
            let width = hi - lo;
            let mut x = if use_secant {
                lo - f_lo * width / (f_hi - f_lo)
            } else {
                0.5 * (lo + hi)
            };
            // Secant steps that land too close to an end degrade to bisection.
            if !(x > lo + 0.01 * width && x < hi - 0.01 * width) {
                x = 0.5 * (lo + hi);
            }
            let fx = self.cdf(x) - p;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
                f_lo = fx;
            } else {
                hi = x;
                f_hi = fx;
            }
            use_secant = hi - lo < 0.5 * width;
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if -f_lo < f_hi {
            lo
        } else {
            hi
        }
    }

    /// `n` independent draws by inversion of uniforms from `rs`.
    pub fn sample(&self, n: usize, rs: &mut RandomStream) -> Vec<f64> {
        (0..n).map(|_| self.quantile_unchecked(rs.uniform())).collect()
    }

    /// Quantile for a probability already known to be in (0, 1).
    pub(crate) fn quantile_in_unit(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        self.quantile_unchecked(u)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.law.params().into_iter().map(format_f64).collect();
        write!(f, "{}({})", self.law.name(), params.join(", "))
    }
}

fn triangular_pdf(a: f64, b: f64, c: f64, x: f64) -> f64 {
    if x < c {
        2.0 * (x - a) / ((b - a) * (c - a))
    } else if x > c {
        2.0 * (b - x) / ((b - a) * (b - c))
    } else {
        2.0 / (b - a)
    }
}

fn triangular_cdf(a: f64, b: f64, c: f64, x: f64) -> f64 {
    if x <= c {
        if c == a {
            0.0
        } else {
            (x - a).powi(2) / ((b - a) * (c - a))
        }
    } else {
        1.0 - (b - x).powi(2) / ((b - a) * (b - c))
    }
}

fn triangular_quantile(a: f64, b: f64, c: f64, p: f64) -> f64 {
    let fc = (c - a) / (b - a);
    if p < fc {
        a + (p * (b - a) * (c - a)).sqrt()
    } else {
        b - ((1.0 - p) * (b - a) * (b - c)).sqrt()
    }
}

/// One valid parameter set per law, used by the test-suites.
pub fn reference_laws() -> Vec<Distribution> {
    [
        "Uniform(-1, 1)",
        "LogUniform(0.5, 20)",
        "Triangular(0, 1, 0.25)",
        "LogTriangular(1, 10, 3)",
        "Normal(0, 0.5)",
        "LogNormal(0.2, 0.4)",
        "Trapezium(0, 4, 1, 2.5)",
        "UniformByParts(-1, 3, 0.5)",
        "Exponential(2, 0)",
        "Cauchy(0.5, 1)",
        "GumbelMax(-0.4, 0.4)",
        "Weibull(1.5, 2.2, 0.3)",
        "Beta(2.5, 1.5, -1, 2)",
        "GenPareto(0, 1, 0.2)",
        "Gamma(2.5, 1.2, 0.5)",
        "InvGamma(3, 2, 0)",
    ]
    .iter()
    .map(|s| Distribution::parse(s).expect("reference law"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature; test oracle, independent of the cdf code.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
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
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn pdf_examples() {
        let u = Distribution::uniform(-1.0, 1.0).unwrap();
        assert_eq!(u.pdf(0.0), 0.5);
        let n = Distribution::normal(0.0, 0.5).unwrap();
        let want = 1.0 / (0.5 * (2.0 * PI).sqrt());
        assert!((n.pdf(0.0) - want).abs() < 1e-15);
        assert!((n.pdf(0.0) - 0.79788).abs() < 1e-5);
        let t = Distribution::parse("Triangular(0, 1, 0.25)").unwrap();
        assert_eq!(t.pdf(2.0), 0.0);
    }

    #[test]
    fn cdf_examples() {
        let n = Distribution::normal(3.0, 2.0).unwrap();
        assert_eq!(n.cdf(3.0), 0.5);
        let e = Distribution::parse("Exponential(2, 0)").unwrap();
        assert!((e.cdf(2f64.ln() / 2.0) - 0.5).abs() < 1e-15);
        for d in reference_laws() {
            assert_eq!(d.cdf(f64::NEG_INFINITY), 0.0, "{d}");
            assert_eq!(d.cdf(f64::INFINITY), 1.0, "{d}");
        }
    }

    #[test]
    fn quantile_examples() {
        let u = Distribution::uniform(-1.0, 1.0).unwrap();
        assert_eq!(u.quantile(0.75).unwrap(), 0.5);
        let g = Distribution::parse("GumbelMax(-0.4, 0.4)").unwrap();
        let want = -0.4 + 0.4 * (-(2f64.ln()).ln());
        assert!((g.quantile(0.5).unwrap() - want).abs() < 1e-15);
        assert!((want - (-0.2534)).abs() < 1e-4);
        assert!(matches!(u.quantile(0.0), Err(DistError::OutOfRange(_))));
        assert!(matches!(u.quantile(1.0), Err(DistError::OutOfRange(_))));
    }

    #[test]
    fn quantile_round_trip_all_laws() {
        let mut rs = RandomStream::new(11);
        for d in reference_laws() {
            for _ in 0..200 {
                let p = rs.uniform_in(0.001, 0.999);
                let x = d.quantile(p).unwrap();
                let back = d.cdf(x);
                assert!((back - p).abs() < 1e-9, "{d}: p={p} x={x} cdf={back}");
                let x2 = d.quantile(d.cdf(x)).unwrap();
                assert!((x2 - x).abs() <= 1e-9 * x.abs().max(1.0), "{d}: x={x} x2={x2}");
            }
        }
    }

    #[test]
    fn quantile_root_solver_precision() {
        for d in ["Beta(2.5, 1.5, -1, 2)", "Gamma(0.7, 3, 0)", "InvGamma(3, 2, 0)"] {
            let d = Distribution::parse(d).unwrap();
            for &p in &[1e-6, 0.01, 0.5, 0.99, 0.999_999] {
                let x = d.quantile(p).unwrap();
                assert!((d.cdf(x) - p).abs() <= 1e-12 * p.max(1e-3), "{d} p={p}");
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for d in reference_laws() {
            let (lo, hi) = d.support();
            let a = if lo.is_finite() { lo } else { d.quantile(1e-13).unwrap() };
            let b = if hi.is_finite() {
                hi
            } else {
                d.quantile(1.0 - 1e-13).unwrap()
            };
            // Split at interior kinks for the piecewise laws.
            let mut cuts = vec![a];
            for q in [0.25, 0.5, 0.75] {
                cuts.push(d.quantile(q).unwrap());
            }
            if let Law::Cauchy { .. } = d.law() {
                // Heavy tails: compare against the tail mass left out.
                let mass: f64 = (0..4)
                    .map(|i| {
                        let (x0, x1) = (cuts[i], if i == 3 { b } else { cuts[i + 1] });
                        simpson(&|x| d.pdf(x), x0, x1, 1e-12)
                    })
                    .sum();
                assert!((mass - (1.0 - 2e-13)).abs() < 1e-6, "{d}: {mass}");
                continue;
            }
            cuts.push(b);
            let mass: f64 = cuts.windows(2).map(|w| simpson(&|x| d.pdf(x), w[0], w[1], 1e-12)).sum();
            assert!((mass - 1.0).abs() < 1e-6, "{d}: {mass}");
        }
    }

    #[test]
    fn pdf_nonnegative_and_cdf_monotone() {
        for d in reference_laws() {
            let a = d.quantile(1e-4).unwrap();
            let b = d.quantile(1.0 - 1e-4).unwrap();
            let mut last = 0.0;
            for i in 0..=500 {
                let x = a + (b - a) * i as f64 / 500.0;
                assert!(d.pdf(x) >= 0.0);
                let c = d.cdf(x);
                assert!(c >= last, "{d}");
                last = c;
            }
        }
    }

    fn ks_distance(d: &Distribution, sample: &mut [f64]) -> f64 {
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = d.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn ks_test_passes_for_every_law() {
        let n = 10_000;
        let crit = 1.63 / (n as f64).sqrt();
        for (k, d) in reference_laws().into_iter().enumerate() {
            let mut rs = RandomStream::new(100 + k as u64);
            let mut s = d.sample(n, &mut rs);
            let dist = ks_distance(&d, &mut s);
            assert!(dist < crit, "{d}: KS {dist} >= {crit}");
        }
    }

    #[test]
    fn sampling_moments() {
        let mut rs = RandomStream::new(1);
        let u = Distribution::uniform(0.0, 1.0).unwrap().sample(100_000, &mut rs);
        assert!((crate::dataserver::mean(&u) - 0.5).abs() < 0.01);
        let z = Distribution::normal(0.0, 1.0).unwrap().sample(100_000, &mut rs);
        assert!((crate::dataserver::variance(&z).sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = Distribution::parse("Weibull(1, 2, 0)").unwrap();
        let a = d.sample(50, &mut RandomStream::new(4));
        let b = d.sample(50, &mut RandomStream::new(4));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_parameters_rejected() {
        for s in [
            "Uniform(1, 1)",
            "Normal(0, 0)",
            "Normal(1)",
            "Exponential(-1, 0)",
            "Trapezium(0, 4, 2, 1)",
            "UniformByParts(0, 1, 1)",
            "Beta(0, 1, 0, 1)",
            "LogUniform(0, 1)",
            "Gamma(1, -1, 0)",
            "Weibull(1, 0, 0)",
            "Foo(1, 2)",
            "Normal 1 2",
        ] {
            assert!(Distribution::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn display_parses_back() {
        for d in reference_laws() {
            assert_eq!(Distribution::parse(&d.to_string()).unwrap(), d);
        }
    }
}
