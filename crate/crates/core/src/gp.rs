//! Gaussian-process (kriging) surrogate with a deterministic trend.
//!
//! Hyperparameters are fitted by maximising the concentrated log-likelihood
//! `-(n/2) ln s2 - (1/2) ln det R`, where the trend coefficients and the process
//! variance `s2` are replaced by their generalised least-squares estimates.
//! Predictions use the universal-kriging mean and variance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::dataserver::{mse, r_squared, DataTable, TableError};
use crate::design::lhs_unit;
use crate::optimizer::nelder_mead;
use crate::random::RandomStream;
use crate::special::matern;
use crate::textfmt::{join_f64, KeyLines};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("unknown correlation family `{0}`")]
    UnknownFamily(String),
    #[error("unknown trend `{0}`")]
    UnknownTrend(String),
    #[error("correlation matrix is not positive definite")]
    FactorizationFailure,
    #[error("trend matrix is singular on the training inputs")]
    TrendSingular,
    #[error("{found} training points, at least {needed} needed")]
    TooFewSamples { needed: usize, found: usize },
    #[error("no starting point gave a finite likelihood")]
    AllStartsFailed,
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gauss,
    IsoGauss,
    Exponential,
    MaternI,
    MaternII,
    MaternIII,
    Matern32,
    Matern52,
    Matern72,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 9] = [
        Self::Gauss,
        Self::IsoGauss,
        Self::Exponential,
        Self::MaternI,
        Self::MaternII,
        Self::MaternIII,
        Self::Matern32,
        Self::Matern52,
        Self::Matern72,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gauss => "gauss",
            Self::IsoGauss => "isogauss",
            Self::Exponential => "exponential",
            Self::MaternI => "matern1",
            Self::MaternII => "matern2",
            Self::MaternIII => "matern3",
            Self::Matern32 => "matern3/2",
            Self::Matern52 => "matern5/2",
            Self::Matern72 => "matern7/2",
        }
    }

    pub fn parse(s: &str) -> Result<Self, GpError> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "materni" => "matern1",
            "maternii" => "matern2",
            "materniii" => "matern3",
            "matern32" => "matern3/2",
            "matern52" => "matern5/2",
            "matern72" => "matern7/2",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|f| f.name() == alias)
            .ok_or_else(|| GpError::UnknownFamily(s.to_string()))
    }

    pub fn n_lengths(&self, n_x: usize) -> usize {
        match self {
            Self::IsoGauss => 1,
            _ => n_x,
        }
    }

    /// Number of shape parameters (powers or smoothness values).
    pub fn n_extra(&self, n_x: usize) -> usize {
        match self {
            Self::Exponential | Self::MaternI => n_x,
            Self::MaternII | Self::MaternIII => 1,
            _ => 0,
        }
    }

    /// Search interval for the shape parameters.
    fn extra_bounds(&self) -> (f64, f64) {
        match self {
            Self::Exponential => (EXP_POWER_MIN, 2.0),
            _ => (NU_MIN, NU_MAX),
        }
    }
}

const EXP_POWER_MIN: f64 = 0.1;
const NU_MIN: f64 = 0.5;
const NU_MAX: f64 = 5.0;

/// A correlation function with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub lengths: Vec<f64>,
    /// Powers for `Exponential`, smoothness values for the general Matern forms.
    pub extra: Vec<f64>,
}

impl Kernel {
    pub fn new(family: KernelFamily, lengths: Vec<f64>, extra: Vec<f64>) -> Result<Self, GpError> {
        let k = Self { family, lengths, extra };
        k.validate_shape()?;
        Ok(k)
    }

    fn validate_shape(&self) -> Result<(), GpError> {
        let bad = |m: String| Err(GpError::InvalidParams(m));
        if self.lengths.is_empty() || self.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("correlation lengths must be positive".into());
        }
        let n_len = self.lengths.len();
        let want_extra = match self.family {
            KernelFamily::Exponential | KernelFamily::MaternI => n_len,
            KernelFamily::MaternII | KernelFamily::MaternIII => 1,
            _ => 0,
        };
        if self.extra.len() != want_extra {
            return bad(format!(
                "{} needs {want_extra} shape parameters, found {}",
                self.family.name(),
                self.extra.len()
            ));
        }
        match self.family {
            KernelFamily::IsoGauss if n_len != 1 => bad("isogauss has a single length".into()),
            KernelFamily::Exponential if self.extra.iter().any(|p| !(*p > 0.0 && *p <= 2.0)) => {
                bad("exponential powers must lie in (0, 2]".into())
            }
            KernelFamily::MaternI | KernelFamily::MaternII | KernelFamily::MaternIII
                if self.extra.iter().any(|nu| !(nu.is_finite() && *nu >= NU_MIN)) =>
            {
                bad(format!("smoothness must be at least {NU_MIN}"))
            }
            _ => Ok(()),
        }
    }

    /// Checks the parameter count against the input dimension.
    pub fn check_dim(&self, n_x: usize) -> Result<(), GpError> {
        if self.lengths.len() != self.family.n_lengths(n_x) || self.extra.len() != self.family.n_extra(n_x) {
            return Err(GpError::InvalidParams(format!(
                "{} on {n_x} inputs needs {} lengths and {} shape parameters",
                self.family.name(),
                self.family.n_lengths(n_x),
                self.family.n_extra(n_x)
            )));
        }
        Ok(())
    }

    pub fn eval(&self, dx: &[f64]) -> f64 {
        let l = &self.lengths;
        let scaled_sq = || dx.iter().zip(l).map(|(d, l)| (d / l).powi(2)).sum::<f64>();
        match self.family {
            KernelFamily::Gauss => (-scaled_sq()).exp(),
            KernelFamily::IsoGauss => (-dx.iter().map(|d| d * d).sum::<f64>() / (l[0] * l[0])).exp(),
            KernelFamily::Exponential => (-dx
                .iter()
                .zip(l)
                .zip(&self.extra)
                .map(|((d, l), p)| (d.abs() / l).powf(*p))
                .sum::<f64>())
            .exp(),
            KernelFamily::MaternI => dx
                .iter()
                .zip(l)
                .zip(&self.extra)
                .map(|((d, l), nu)| matern(*nu, d / l))
                .product(),
            KernelFamily::MaternII => dx.iter().zip(l).map(|(d, l)| matern(self.extra[0], d / l)).product(),
            KernelFamily::MaternIII => matern(self.extra[0], scaled_sq().sqrt()),
            KernelFamily::Matern32 => matern(1.5, scaled_sq().sqrt()),
            KernelFamily::Matern52 => matern(2.5, scaled_sq().sqrt()),
            KernelFamily::Matern72 => matern(3.5, scaled_sq().sqrt()),
        }
    }

    fn between(&self, a: &[f64], b: &[f64]) -> f64 {
        let dx: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.eval(&dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Const,
    Linear,
}

impl Trend {
    pub fn parse(s: &str) -> Result<Self, GpError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "const" | "constant" => Ok(Self::Const),
            "linear" => Ok(Self::Linear),
            _ => Err(GpError::UnknownTrend(s.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Const => "const",
            Self::Linear => "linear",
        }
    }

    pub fn n_coeffs(&self, n_x: usize) -> usize {
        match self {
            Self::Const => 1,
            Self::Linear => n_x + 1,
        }
    }

    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Const => vec![1.0],
            Self::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
        }
    }
}

/// Nugget added to the diagonal of the correlation matrix.
pub const DEFAULT_NUGGET: f64 = 1e-10;

fn correlation_matrix(kernel: &Kernel, x: &[Vec<f64>], nugget: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut r = DMatrix::identity(n, n) * (1.0 + nugget);
    for i in 0..n {
        for j in 0..i {
            let c = kernel.between(&x[i], &x[j]);
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    r
}

fn trend_matrix(trend: Trend, x: &[Vec<f64>]) -> DMatrix<f64> {
    let q = trend.n_coeffs(x[0].len());
    let mut f = DMatrix::zeros(x.len(), q);
    for (i, row) in x.iter().enumerate() {
        for (j, v) in trend.basis(row).into_iter().enumerate() {
            f[(i, j)] = v;
        }
    }
    f
}

/// Everything that follows from fixed hyperparameters and the training data.
#[derive(Debug, Clone)]
struct Factorised {
    chol: Cholesky<f64, Dyn>,
    /// `L^-1 F`.
    ft: DMatrix<f64>,
    /// Cholesky factor of `F' R^-1 F`.
    gls: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    /// `R^-1 (y - F beta)`.
    alpha: DVector<f64>,
    sigma2: f64,
    log_likelihood: f64,
    degenerate: bool,
}

fn factorise(kernel: &Kernel, trend: Trend, x: &[Vec<f64>], y: &[f64], nugget: f64) -> Result<Factorised, GpError> {
    let n = x.len();
    let r = correlation_matrix(kernel, x, nugget);
    let chol = Cholesky::new(r).ok_or(GpError::FactorizationFailure)?;
    let l = chol.l();
    let f = trend_matrix(trend, x);
    let ft = l.solve_lower_triangular(&f).ok_or(GpError::FactorizationFailure)?;
    let yv = DVector::from_column_slice(y);
    let yt = l.solve_lower_triangular(&yv).ok_or(GpError::FactorizationFailure)?;
    let gls = Cholesky::new(ft.transpose() * &ft).ok_or(GpError::TrendSingular)?;
    let beta = gls.solve(&(ft.transpose() * &yt));
    let rt = &yt - &ft * &beta;
    let sigma2 = rt.norm_squared() / n as f64;
    let alpha = chol.solve(&(&yv - &f * &beta));
    let half_ln_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    // A residual at rounding level means the trend reproduces the data.
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let floor = (f64::EPSILON * scale).powi(2);
    let degenerate = sigma2 <= floor;
    let log_likelihood = -0.5 * n as f64 * sigma2.max(floor).ln() - half_ln_det;
    Ok(Factorised {
        chol,
        ft,
        gls,
        beta,
        alpha,
        sigma2,
        log_likelihood,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    /// Set when the trend reproduces the data and the process variance vanishes.
    /// The value is then computed with a floored variance.
    pub degenerate: bool,
}

/// Concentrated log-likelihood, constant terms dropped.
pub fn log_likelihood(
    kernel: &Kernel,
    trend: Trend,
    x: &[Vec<f64>],
    y: &[f64],
    nugget: f64,
) -> Result<Likelihood, GpError> {
    let fz = factorise(kernel, trend, x, y, nugget)?;
    Ok(Likelihood {
        value: fz.log_likelihood,
        degenerate: fz.degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub input_names: Vec<String>,
    pub output: String,
    pub kernel: Kernel,
    pub trend: Trend,
    pub nugget: f64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    fz: Factorised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpLoo {
    pub predictions: Vec<f64>,
    pub variances: Vec<f64>,
    pub mse: f64,
    pub q2: f64,
    pub standardized_residuals: Vec<f64>,
}

impl GpModel {
    /// Builds the predictor for fixed hyperparameters.
    pub fn with_params(
        input_names: Vec<String>,
        output: &str,
        kernel: Kernel,
        trend: Trend,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        nugget: f64,
    ) -> Result<Self, GpError> {
        let n_x = input_names.len();
        kernel.check_dim(n_x)?;
        let needed = trend.n_coeffs(n_x) + 1;
        if x.len() < needed {
            return Err(GpError::TooFewSamples { needed, found: x.len() });
        }
        let fz = factorise(&kernel, trend, &x, &y, nugget)?;
        Ok(Self {
            input_names,
            output: output.to_string(),
            kernel,
            trend,
            nugget,
            x,
            y,
            fz,
        })
    }

    pub fn beta(&self) -> Vec<f64> {
        self.fz.beta.iter().copied().collect()
    }

    pub fn sigma2(&self) -> f64 {
        self.fz.sigma2
    }

    pub fn log_likelihood(&self) -> Likelihood {
        Likelihood {
            value: self.fz.log_likelihood,
            degenerate: self.fz.degenerate,
        }
    }

    /// Kriging mean and standard deviation at `x`.
    pub fn predict_point(&self, x: &[f64]) -> (f64, f64) {
        let r = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.kernel.between(x, xi)));
        let f = DVector::from_vec(self.trend.basis(x));
        let mean = f.dot(&self.fz.beta) + r.dot(&self.fz.alpha);
        let rt = self
            .fz
            .chol
            .l()
            .solve_lower_triangular(&r)
            .expect("triangular factor is invertible");
        let u = self.fz.ft.transpose() * &rt - &f;
        let var = self.fz.sigma2 * (1.0 - rt.norm_squared() + u.dot(&self.fz.gls.solve(&u)));
        (mean, var.max(0.0).sqrt())
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
        rows.iter().map(|r| self.predict_point(r)).collect()
    }

    pub fn predict(&self, points: &DataTable) -> Result<Vec<(f64, f64)>, GpError> {
        let rows = points
            .rows_of(&self.input_names)
            .map_err(|e| GpError::ColumnMismatch(e.to_string()))?;
        Ok(self.predict_rows(&rows))
    }

    /// Leave-one-out predictions with fixed hyperparameters, from the closed
    /// form `e = Q y / diag(Q)` with `Q = R^-1 - R^-1 F (F' R^-1 F)^-1 F' R^-1`.
    pub fn loo(&self) -> GpLoo {
        let n = self.y.len();
        let rinv = self.fz.chol.inverse();
        let g = &rinv * trend_matrix(self.trend, &self.x);
        let a_inv_gt = self.fz.gls.solve(&g.transpose());
        let q = &rinv - &g * a_inv_gt;
        let qy = &self.fz.alpha;
        let mut predictions = Vec::with_capacity(n);
        let mut variances = Vec::with_capacity(n);
        let mut standardized_residuals = Vec::with_capacity(n);
        for i in 0..n {
            let qii = q[(i, i)];
            let e = qy[i] / qii;
            let v = self.fz.sigma2 / qii;
            predictions.push(self.y[i] - e);
            variances.push(v);
            standardized_residuals.push(e / v.sqrt());
        }
        GpLoo {
            mse: mse(&self.y, &predictions),
            q2: r_squared(&self.y, &predictions),
            predictions,
            variances,
            standardized_residuals,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("uqkit-gp 1\n");
        s += &format!("output {}\n", self.output);
        s += &format!("inputs {}\n", self.input_names.join(" "));
        s += &format!("family {}\n", self.kernel.family.name());
        s += &format!("trend {}\n", self.trend.name());
        s += &format!("lengths {}\n", join_f64(&self.kernel.lengths));
        s += &format!("extra {}\n", join_f64(&self.kernel.extra));
        s += &format!("nugget {}\n", join_f64(&[self.nugget]));
        s += &format!("points {}\n", self.y.len());
        for (x, y) in self.x.iter().zip(&self.y) {
            s += &format!("p {} {}\n", join_f64(x), join_f64(&[*y]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GpError> {
        let (names, output, kernel, trend, x, y, nugget) = Self::parse_text(text).map_err(GpError::Format)?;
        Self::with_params(names, &output, kernel, trend, x, y, nugget)
    }

    #[allow(clippy::type_complexity)]
    fn parse_text(text: &str) -> Result<(Vec<String>, String, Kernel, Trend, Vec<Vec<f64>>, Vec<f64>, f64), String> {
        let mut k = KeyLines::new(text);
        if k.expect("uqkit-gp")? != "1" {
            return Err("unsupported version".into());
        }
        let output = k.expect("output")?.to_string();
        let names: Vec<String> = k.expect("inputs")?.split_whitespace().map(String::from).collect();
        let n_x = names.len();
        let family = KernelFamily::parse(k.expect("family")?).map_err(|e| e.to_string())?;
        let trend = Trend::parse(k.expect("trend")?).map_err(|e| e.to_string())?;
        let lengths = k.expect_f64s("lengths", family.n_lengths(n_x))?;
        let extra = k.expect_f64s("extra", family.n_extra(n_x))?;
        let nugget = k.expect_f64("nugget")?;
        let n = k.expect_usize("points")?;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = k.expect_f64s("p", n_x + 1)?;
            y.push(v.pop().expect("n_x + 1 values"));
            x.push(v);
        }
        k.finish()?;
        let kernel = Kernel::new(family, lengths, extra).map_err(|e| e.to_string())?;
        Ok((names, output, kernel, trend, x, y, nugget))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub family: KernelFamily,
    pub trend: Trend,
    pub n_starts: usize,
    pub max_evals: usize,
    pub nugget: f64,
}

impl GpConfig {
    pub fn new(family: KernelFamily, trend: Trend) -> Self {
        Self {
            family,
            trend,
            n_starts: 20,
            max_evals: 1000,
            nugget: DEFAULT_NUGGET,
        }
    }
}

/// Search box for the hyperparameter vector `(log10 l, shape parameters)`.
/// Each length ranges over `[d_min, 3 d_max]` of the pairwise distances along
/// its dimension (Euclidean distances for a single isotropic length).
pub fn search_bounds(family: KernelFamily, x: &[Vec<f64>]) -> Result<Vec<(f64, f64)>, GpError> {
    let n_x = x[0].len();
    let dims: Vec<Box<dyn Fn(&[f64], &[f64]) -> f64>> = if family.n_lengths(n_x) == 1 && n_x > 1 {
        vec![Box::new(|a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
        })]
    } else {
        (0..n_x)
            .map(|k| Box::new(move |a: &[f64], b: &[f64]| (a[k] - b[k]).abs()) as Box<dyn Fn(&[f64], &[f64]) -> f64>)
            .collect()
    };
    let mut bounds = Vec::new();
    for dist in &dims {
        let mut dmin = f64::INFINITY;
        let mut dmax: f64 = 0.0;
        for i in 0..x.len() {
            for j in 0..i {
                let d = dist(&x[i], &x[j]);
                if d > 0.0 {
                    dmin = dmin.min(d);
                }
                dmax = dmax.max(d);
            }
        }
        if !(dmax > 0.0) {
            return Err(GpError::InvalidParams(
                "an input is constant over the training set".into(),
            ));
        }
        bounds.push((dmin.log10(), (3.0 * dmax).log10()));
    }
    let eb = family.extra_bounds();
    bounds.extend(std::iter::repeat_n(eb, family.n_extra(n_x)));
    Ok(bounds)
}

fn kernel_from(family: KernelFamily, n_len: usize, theta: &[f64]) -> Result<Kernel, GpError> {
    let lengths = theta[..n_len].iter().map(|v| 10f64.powf(*v)).collect();
    Kernel::new(family, lengths, theta[n_len..].to_vec())
}

/// Fits the hyperparameters on arrays: LHS of `n_starts` points in the search
/// box, then a simplex refinement from the best start.
pub fn fit_gp_arrays(
    input_names: Vec<String>,
    output: &str,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    config: &GpConfig,
    rs: &mut RandomStream,
) -> Result<GpModel, GpError> {
    let n_x = input_names.len();
    let needed = config.trend.n_coeffs(n_x) + 2;
    if x.len() < needed {
        return Err(GpError::TooFewSamples { needed, found: x.len() });
    }
    let family = config.family;
    let n_len = family.n_lengths(n_x);
    let bounds = search_bounds(family, &x)?;
    let dim = bounds.len();
    let project = |theta: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .zip(&bounds)
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    };
    let neg_ll = |theta: &[f64]| -> f64 {
        let p = project(theta);
        let penalty: f64 = p.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
        match kernel_from(family, n_len, &p).and_then(|k| factorise(&k, config.trend, &x, &y, config.nugget)) {
            Ok(fz) => -fz.log_likelihood + 1e3 * penalty,
            Err(_) => f64::MAX / 4.0,
        }
    };
    let starts: Vec<Vec<f64>> = lhs_unit(config.n_starts.max(1), dim, rs)
        .into_iter()
        .map(|u| u.iter().zip(&bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect())
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        let v = neg_ll(&s);
        if v < f64::MAX / 8.0 && best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, s));
        }
    }
    let (_, start) = best.ok_or(GpError::AllStartsFailed)?;
    let step: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.1 * (hi - lo)).collect();
    let refined = nelder_mead(neg_ll, &start, &step, 1e-10, config.max_evals.max(dim + 2))
        .map_err(|_| GpError::AllStartsFailed)?;
    let theta = project(&refined.x);
    let kernel = kernel_from(family, n_len, &theta)?;
    GpModel::with_params(input_names, output, kernel, config.trend, x, y, config.nugget)
}

pub fn fit_gp(
    train: &DataTable,
    inputs: &[&str],
    output: &str,
    config: &GpConfig,
    rs: &mut RandomStream,
) -> Result<GpModel, GpError> {
    let x = train
        .rows_of(inputs)
        .map_err(|e| GpError::ColumnMismatch(e.to_string()))?;
    let y = train
        .column(output)
        .map_err(|e| GpError::ColumnMismatch(e.to_string()))?
        .to_vec();
    fit_gp_arrays(inputs.iter().map(|s| s.to_string()).collect(), output, x, y, config, rs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataserver::variance;

    fn sample_dx(rs: &mut RandomStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rs.uniform_in(-2.0, 2.0)).collect()
    }

    fn kernel_for(family: KernelFamily, n_x: usize, rs: &mut RandomStream) -> Kernel {
        let lengths = (0..family.n_lengths(n_x)).map(|_| rs.uniform_in(0.2, 2.0)).collect();
        let extra = (0..family.n_extra(n_x))
            .map(|_| match family {
                KernelFamily::Exponential => rs.uniform_in(0.2, 2.0),
                _ => rs.uniform_in(0.5, 4.0),
            })
            .collect();
        Kernel::new(family, lengths, extra).unwrap()
    }

    #[test]
    fn kernel_basic_properties() {
        let mut rs = RandomStream::new(1);
        for family in KernelFamily::ALL {
            for _ in 0..20 {
                let k = kernel_for(family, 3, &mut rs);
                assert_eq!(k.eval(&[0.0; 3]), 1.0);
                let dx = sample_dx(&mut rs, 3);
                let neg: Vec<f64> = dx.iter().map(|v| -v).collect();
                let c = k.eval(&dx);
                assert!((0.0..=1.0).contains(&c), "{family:?} {c}");
                assert!((c - k.eval(&neg)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matern_half_reduces_to_exponential() {
        let mut rs = RandomStream::new(2);
        let k = Kernel::new(KernelFamily::MaternIII, vec![0.7], vec![0.5]).unwrap();
        for _ in 0..50 {
            let d = rs.uniform_in(-3.0, 3.0);
            let want = (-2f64.sqrt() * d.abs() / 0.7).exp();
            assert!((k.eval(&[d]) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn named_matern_forms_equal_general_form() {
        let mut rs = RandomStream::new(3);
        for (fam, nu) in [
            (KernelFamily::Matern32, 1.5),
            (KernelFamily::Matern52, 2.5),
            (KernelFamily::Matern72, 3.5),
        ] {
            let l = vec![0.5, 1.3];
            let named = Kernel::new(fam, l.clone(), vec![]).unwrap();
            // A smoothness a hair away from the half-integer goes through the Bessel route.
            let general = Kernel::new(KernelFamily::MaternIII, l, vec![nu + 1e-13]).unwrap();
            for _ in 0..30 {
                let dx = sample_dx(&mut rs, 2);
                assert!((named.eval(&dx) - general.eval(&dx)).abs() < 1e-10, "{fam:?}");
            }
        }
    }

    #[test]
    fn exponential_with_power_two_is_gauss() {
        let mut rs = RandomStream::new(4);
        let e = Kernel::new(KernelFamily::Exponential, vec![0.4, 1.1], vec![2.0, 2.0]).unwrap();
        let g = Kernel::new(KernelFamily::Gauss, vec![0.4, 1.1], vec![]).unwrap();
        for _ in 0..30 {
            let dx = sample_dx(&mut rs, 2);
            assert!((e.eval(&dx) - g.eval(&dx)).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_kernel_parameters() {
        assert!(Kernel::new(KernelFamily::Gauss, vec![-1.0], vec![]).is_err());
        assert!(Kernel::new(KernelFamily::Exponential, vec![1.0], vec![2.5]).is_err());
        assert!(Kernel::new(KernelFamily::MaternII, vec![1.0, 1.0], vec![]).is_err());
        assert!(Kernel::new(KernelFamily::IsoGauss, vec![1.0, 2.0], vec![]).is_err());
        assert!(KernelFamily::parse("matern5/2").is_ok());
        assert!(KernelFamily::parse("cubic").is_err());
    }

    #[test]
    fn two_point_likelihood_and_prediction_by_hand() {
        let k = Kernel::new(KernelFamily::Gauss, vec![1.0], vec![]).unwrap();
        let x = vec![vec![0.0], vec![0.5]];
        let y = vec![1.0, 3.0];
        let c = (-0.25f64).exp();
        // Constant trend: beta = 1'R^-1 y / 1'R^-1 1 = mean for a symmetric 2x2 R.
        let beta = 2.0;
        let det = 1.0 - c * c;
        // (y - beta)' R^-1 (y - beta) with residuals (-1, 1).
        let quad = (1.0 + 1.0 + 2.0 * c) / det;
        let s2 = quad / 2.0;
        let want = -(s2.ln()) - 0.5 * det.ln();
        let got = log_likelihood(&k, Trend::Const, &x, &y, 0.0).unwrap();
        assert!((got.value - want).abs() < 1e-10);

        let m = GpModel::with_params(vec!["x".into()], "y", k.clone(), Trend::Const, x, y, 0.0).unwrap();
        let xp = 0.2;
        let r = [(-0.04f64).exp(), (-0.09f64).exp()];
        // R^-1 (y - beta) = (-1 - c, 1 + c) / det, simplifies to (-1, 1) / (1 - c).
        let mean = beta + (r[1] - r[0]) / (1.0 - c);
        let (mu, sd) = m.predict_point(&[xp]);
        assert!((mu - mean).abs() < 1e-10);
        let rinv_r = [(r[0] - c * r[1]) / det, (r[1] - c * r[0]) / det];
        let rr = r[0] * rinv_r[0] + r[1] * rinv_r[1];
        let u = rinv_r[0] + rinv_r[1] - 1.0;
        let one_rinv_one = 2.0 / (1.0 + c);
        let var = s2 * (1.0 - rr + u * u / one_rinv_one);
        assert!((sd - var.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn degenerate_fit_is_flagged() {
        let k = Kernel::new(KernelFamily::Matern52, vec![0.3], vec![]).unwrap();
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v[0]).collect();
        let ll = log_likelihood(&k, Trend::Linear, &x, &y, DEFAULT_NUGGET).unwrap();
        assert!(ll.degenerate && ll.value.is_finite());
        let m = GpModel::with_params(vec!["x".into()], "y", k, Trend::Linear, x, y, DEFAULT_NUGGET).unwrap();
        let loo = m.loo();
        assert!(loo.mse < 1e-20 && (loo.q2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_is_permutation_invariant() {
        let mut rs = RandomStream::new(5);
        let x: Vec<Vec<f64>> = (0..12).map(|_| vec![rs.uniform(), rs.uniform()]).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v[0]).sin() + v[1]).collect();
        let k = Kernel::new(KernelFamily::Matern52, vec![0.4, 0.8], vec![]).unwrap();
        let a = log_likelihood(&k, Trend::Linear, &x, &y, DEFAULT_NUGGET).unwrap().value;
        let perm = rs.permutation(12);
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let b = log_likelihood(&k, Trend::Linear, &xp, &yp, DEFAULT_NUGGET)
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    fn gp_sample(kernel: &Kernel, x: &[Vec<f64>], sigma2: f64, rs: &mut RandomStream) -> Vec<f64> {
        let r = correlation_matrix(kernel, x, 1e-10) * sigma2;
        let l = Cholesky::new(r).unwrap().l();
        let z = DVector::from_iterator(x.len(), (0..x.len()).map(|_| rs.standard_normal()));
        (l * z).iter().copied().collect()
    }

    #[test]
    fn interpolation_and_far_field() {
        let mut rs = RandomStream::new(6);
        let x: Vec<Vec<f64>> = (0..15).map(|_| vec![rs.uniform()]).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v[0]).sin()).collect();
        let k = Kernel::new(KernelFamily::Matern52, vec![0.3], vec![]).unwrap();
        let m = GpModel::with_params(
            vec!["x".into()],
            "y",
            k,
            Trend::Const,
            x.clone(),
            y.clone(),
            DEFAULT_NUGGET,
        )
        .unwrap();
        let range = 2.0;
        for (xi, yi) in x.iter().zip(&y) {
            let (mu, sd) = m.predict_point(xi);
            assert!((mu - yi).abs() < 1e-6 * range);
            assert!(sd < 1e-4 * m.sigma2().sqrt());
        }

        // Far away from a set of mutually uncorrelated points.
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![10.0 * i as f64]).collect();
        let y = gp_sample(
            &Kernel::new(KernelFamily::Gauss, vec![1.0], vec![]).unwrap(),
            &x,
            1.0,
            &mut rs,
        );
        let k = Kernel::new(KernelFamily::Gauss, vec![1.0], vec![]).unwrap();
        let m = GpModel::with_params(vec!["x".into()], "y", k, Trend::Const, x, y, DEFAULT_NUGGET).unwrap();
        let (mu, sd) = m.predict_point(&[1e4]);
        assert!((mu - m.beta()[0]).abs() < 1e-12);
        assert!((sd / m.sigma2().sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn loo_matches_brute_force_refits() {
        let mut rs = RandomStream::new(7);
        let x: Vec<Vec<f64>> = (0..14).map(|_| vec![rs.uniform(), rs.uniform_in(0.0, 10.0)]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] * 3.0).cos() * v[1]).collect();
        let k = Kernel::new(KernelFamily::Matern52, vec![0.5, 4.0], vec![]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let m = GpModel::with_params(
            names.clone(),
            "y",
            k.clone(),
            Trend::Linear,
            x.clone(),
            y.clone(),
            DEFAULT_NUGGET,
        )
        .unwrap();
        let loo = m.loo();
        for i in 0..x.len() {
            let mut xs = x.clone();
            let mut ys = y.clone();
            let xi = xs.remove(i);
            ys.remove(i);
            let mi =
                GpModel::with_params(names.clone(), "y", k.clone(), Trend::Linear, xs, ys, DEFAULT_NUGGET).unwrap();
            let (mu, _) = mi.predict_point(&xi);
            assert!((mu - loo.predictions[i]).abs() < 1e-6, "{i}");
        }
    }

    #[test]
    fn standardized_residuals_of_a_well_specified_gp() {
        let mut rs = RandomStream::new(8);
        let k = Kernel::new(KernelFamily::Matern52, vec![0.2], vec![]).unwrap();
        let x: Vec<Vec<f64>> = (0..100).map(|_| vec![rs.uniform()]).collect();
        let y = gp_sample(&k, &x, 2.0, &mut rs);
        let m = GpModel::with_params(vec!["x".into()], "y", k, Trend::Const, x, y, DEFAULT_NUGGET).unwrap();
        let z = m.loo().standardized_residuals;
        let mean = crate::dataserver::mean(&z);
        let sd = variance(&z).sqrt();
        assert!(mean.abs() < 0.15, "{mean}");
        assert!((sd - 1.0).abs() < 0.3, "{sd}");
    }

    #[test]
    fn fit_recovers_generating_length() {
        let mut rs = RandomStream::new(9);
        let truth = Kernel::new(KernelFamily::Matern52, vec![0.25], vec![]).unwrap();
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 + rs.uniform()) / 60.0]).collect();
        let y = gp_sample(&truth, &x, 1.0, &mut rs);
        let t = DataTable::from_columns([("x", x.iter().map(|v| v[0]).collect::<Vec<_>>()), ("y", y)]).unwrap();
        let m = fit_gp(
            &t,
            &["x"],
            "y",
            &GpConfig::new(KernelFamily::Matern52, Trend::Const),
            &mut rs,
        )
        .unwrap();
        let ratio = m.kernel.lengths[0] / 0.25;
        assert!((ratio - 1.0).abs() < 0.3, "fitted length {}", m.kernel.lengths[0]);

        // The optimum is interior, so the likelihood is flat there.
        let theta = m.kernel.lengths[0].log10();
        let ll = |t: f64| {
            let k = Kernel::new(KernelFamily::Matern52, vec![10f64.powf(t)], vec![]).unwrap();
            log_likelihood(&k, Trend::Const, &m.x, &m.y, DEFAULT_NUGGET)
                .unwrap()
                .value
        };
        let h = 1e-4;
        let grad = (ll(theta + h) - ll(theta - h)) / (2.0 * h);
        assert!(grad.abs() < 1e-3 * ll(theta).abs().max(1.0), "{grad}");
    }

    #[test]
    fn persistence_round_trip() {
        let mut rs = RandomStream::new(10);
        let x: Vec<Vec<f64>> = (0..10).map(|_| vec![rs.uniform(), rs.uniform()]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] - v[1] * v[1]).collect();
        let k = Kernel::new(KernelFamily::MaternII, vec![0.5, 0.9], vec![1.7]).unwrap();
        let m = GpModel::with_params(
            vec!["a".into(), "b".into()],
            "y",
            k,
            Trend::Linear,
            x,
            y,
            DEFAULT_NUGGET,
        )
        .unwrap();
        let text = m.to_text();
        let back = GpModel::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        for p in [[0.3, 0.4], [0.9, 0.1]] {
            let (a, b) = (m.predict_point(&p), back.predict_point(&p));
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
        assert!(GpModel::from_text(&text.replace("family matern2", "family spline")).is_err());
    }
}
