//! Polynomial chaos surrogate fitted by least squares.
//!
//! The basis is the tensor product of univariate orthonormal polynomials
//! (Legendre for uniform inputs, probabilists' Hermite for normal inputs)
//! truncated to a total degree. Coefficients come from an SVD of the design
//! matrix, which also gives the hat-matrix diagonal for analytic
//! leave-one-out residuals.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataserver::{mse, r_squared, DataTable, TableError};
use crate::distributions::{Distribution, Law};
use crate::special::normal_quantile;
use crate::textfmt::{join_f64, parse_f64_list, KeyLines};

#[derive(Debug, Error)]
pub enum PcError {
    #[error("{found} samples for {needed} coefficients")]
    TooFewSamples { needed: usize, found: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("training point {0} has leverage 1, its leave-one-out residual is undefined")]
    LeverageOne(usize),
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyFamily {
    /// Orthonormal Legendre polynomials on [-1, 1] for the uniform weight.
    Legendre,
    /// Normalised probabilists' Hermite polynomials for the standard normal.
    Hermite,
}

impl PolyFamily {
    /// Values of the orthonormal polynomials of degree `0..=p` at `z`.
    pub fn eval_all(&self, z: f64, p: usize) -> Vec<f64> {
        let mut raw = vec![0.0; p + 1];
        raw[0] = 1.0;
        if p >= 1 {
            raw[1] = z;
        }
        for n in 1..p {
            let nf = n as f64;
            raw[n + 1] = match self {
                Self::Legendre => ((2.0 * nf + 1.0) * z * raw[n] - nf * raw[n - 1]) / (nf + 1.0),
                Self::Hermite => z * raw[n] - nf * raw[n - 1],
            };
        }
        let mut fact = 1.0;
        for (n, v) in raw.iter_mut().enumerate() {
            match self {
                Self::Legendre => *v *= (2.0 * n as f64 + 1.0).sqrt(),
                Self::Hermite => {
                    if n > 0 {
                        fact *= n as f64;
                    }
                    *v /= fact.sqrt();
                }
            }
        }
        raw
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Legendre => "legendre",
            Self::Hermite => "hermite",
        }
    }
}

/// Map from a physical input to the natural variable of its polynomial family.
#[derive(Debug, Clone, PartialEq)]
pub enum InputTransform {
    /// `[lo, hi]` onto `[-1, 1]`.
    Affine { lo: f64, hi: f64 },
    /// `(x - mean) / sigma`.
    Standardise { mean: f64, sigma: f64 },
    /// Through the input cdf onto the family's reference law.
    Isoprobabilistic(Distribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcInput {
    pub name: String,
    pub family: PolyFamily,
    pub transform: InputTransform,
}

impl PcInput {
    pub fn legendre(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            family: PolyFamily::Legendre,
            transform: InputTransform::Affine { lo, hi },
        }
    }

    pub fn hermite(name: &str, mean: f64, sigma: f64) -> Self {
        Self {
            name: name.to_string(),
            family: PolyFamily::Hermite,
            transform: InputTransform::Standardise { mean, sigma },
        }
    }

    /// Uniform laws get Legendre, normal laws Hermite, anything else Legendre
    /// after mapping through its own cdf.
    pub fn from_distribution(name: &str, d: &Distribution) -> Self {
        match *d.law() {
            Law::Uniform { min, max } => Self::legendre(name, min, max),
            Law::Normal { mean, sigma } => Self::hermite(name, mean, sigma),
            _ => Self {
                name: name.to_string(),
                family: PolyFamily::Legendre,
                transform: InputTransform::Isoprobabilistic(*d),
            },
        }
    }

    fn reduce(&self, x: f64) -> f64 {
        match &self.transform {
            InputTransform::Affine { lo, hi } => 2.0 * (x - lo) / (hi - lo) - 1.0,
            InputTransform::Standardise { mean, sigma } => (x - mean) / sigma,
            InputTransform::Isoprobabilistic(d) => {
                let u = d.cdf(x).clamp(1e-16, 1.0 - 1e-16);
                match self.family {
                    PolyFamily::Legendre => 2.0 * u - 1.0,
                    PolyFamily::Hermite => normal_quantile(u),
                }
            }
        }
    }
}

/// All multi-indices of `n` variables with total degree at most `p`, by
/// increasing degree and, within a degree, in decreasing lexicographic order:
/// `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
pub fn enumerate_multi_indices(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn compositions(total: usize, n: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            compositions(total - first, n - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=p {
        compositions(d, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// `(n + p)! / (n! p!)`.
pub fn n_coefficients(n: usize, p: usize) -> usize {
    let mut c: u128 = 1;
    for k in 1..=p as u128 {
        c = c * (n as u128 + k) / k;
    }
    c as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcModel {
    pub inputs: Vec<PcInput>,
    pub degree: usize,
    pub output: String,
    pub indices: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
    /// Leave-one-out criteria, absent when some training point has leverage 1.
    pub loo_mse: Option<f64>,
    pub loo_q2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooDiagnostics {
    pub mse: f64,
    pub q2: f64,
}

fn basis_row(inputs: &[PcInput], indices: &[Vec<usize>], degree: usize, x: &[f64]) -> Vec<f64> {
    let per_input: Vec<Vec<f64>> = inputs
        .iter()
        .zip(x)
        .map(|(inp, &v)| inp.family.eval_all(inp.reduce(v), degree))
        .collect();
    indices
        .iter()
        .map(|alpha| alpha.iter().enumerate().map(|(k, &a)| per_input[k][a]).product())
        .collect()
}

fn design_matrix(inputs: &[PcInput], indices: &[Vec<usize>], degree: usize, rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = indices.len();
    let mut h = DMatrix::zeros(rows.len(), p);
    for (i, x) in rows.iter().enumerate() {
        for (j, v) in basis_row(inputs, indices, degree, x).into_iter().enumerate() {
            h[(i, j)] = v;
        }
    }
    h
}

struct LsqFit {
    coefficients: Vec<f64>,
    leverages: Vec<f64>,
    fitted: Vec<f64>,
}

/// Least squares through the thin SVD; leverages are squared row norms of U.
fn least_squares(h: DMatrix<f64>, y: &[f64]) -> Result<LsqFit, PcError> {
    let (n, p) = h.shape();
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.iter().any(|&s| s < 1e-12 * smax) {
        return Err(PcError::RankDeficient);
    }
    let u = svd.u.as_ref().expect("u");
    let v_t = svd.v_t.as_ref().expect("v_t");
    let yv = DVector::from_column_slice(y);
    let uty = u.transpose() * &yv;
    let scaled = DVector::from_iterator(p, uty.iter().zip(svd.singular_values.iter()).map(|(a, s)| a / s));
    let beta = v_t.transpose() * scaled;
    let fitted = &h * &beta;
    let leverages = (0..n).map(|i| u.row(i).norm_squared()).collect();
    Ok(LsqFit {
        coefficients: beta.iter().copied().collect(),
        leverages,
        fitted: fitted.iter().copied().collect(),
    })
}

fn loo_from(y: &[f64], fit: &LsqFit) -> Result<(Vec<f64>, LooDiagnostics), PcError> {
    let mut pred = Vec::with_capacity(y.len());
    for (i, (&yi, (&fi, &lev))) in y.iter().zip(fit.fitted.iter().zip(&fit.leverages)).enumerate() {
        let one_minus = 1.0 - lev;
        if one_minus.abs() < 1e-12 {
            return Err(PcError::LeverageOne(i));
        }
        pred.push(yi - (yi - fi) / one_minus);
    }
    let d = LooDiagnostics {
        mse: mse(y, &pred),
        q2: r_squared(y, &pred),
    };
    Ok((pred, d))
}

fn training_arrays(train: &DataTable, inputs: &[PcInput], output: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>), PcError> {
    let names: Vec<&str> = inputs.iter().map(|i| i.name.as_str()).collect();
    let rows = train
        .rows_of(&names)
        .map_err(|e| PcError::ColumnMismatch(e.to_string()))?;
    let y = train
        .column(output)
        .map_err(|e| PcError::ColumnMismatch(e.to_string()))?
        .to_vec();
    Ok((rows, y))
}

pub fn fit_pc(train: &DataTable, inputs: &[PcInput], degree: usize, output: &str) -> Result<PcModel, PcError> {
    let (rows, y) = training_arrays(train, inputs, output)?;
    let indices = enumerate_multi_indices(inputs.len(), degree);
    if rows.len() < indices.len() {
        return Err(PcError::TooFewSamples {
            needed: indices.len(),
            found: rows.len(),
        });
    }
    let h = design_matrix(inputs, &indices, degree, &rows);
    let fit = least_squares(h, &y)?;
    let loo = loo_from(&y, &fit).ok().map(|(_, d)| d);
    Ok(PcModel {
        inputs: inputs.to_vec(),
        degree,
        output: output.to_string(),
        indices,
        coefficients: fit.coefficients,
        loo_mse: loo.map(|d| d.mse),
        loo_q2: loo.map(|d| d.q2),
    })
}

/// Fits degrees `1..=p_max` (as long as the coefficient count stays within half
/// the sample size) and keeps the one with the best leave-one-out Q2.
pub fn fit_pc_auto(train: &DataTable, inputs: &[PcInput], p_max: usize, output: &str) -> Result<PcModel, PcError> {
    let n = train.n_rows();
    let mut best: Option<PcModel> = None;
    for p in 1..=p_max {
        if 2 * n_coefficients(inputs.len(), p) > n {
            break;
        }
        let m = fit_pc(train, inputs, p, output)?;
        let better = match (&best, m.loo_q2) {
            (None, _) => true,
            (Some(b), Some(q)) => b.loo_q2.is_none_or(|bq| q > bq),
            (Some(_), None) => false,
        };
        if better {
            best = Some(m);
        }
    }
    best.ok_or(PcError::TooFewSamples {
        needed: 2 * n_coefficients(inputs.len(), 1),
        found: n,
    })
}

impl PcModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        basis_row(&self.inputs, &self.indices, self.degree, x)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn predict(&self, points: &DataTable) -> Result<Vec<f64>, PcError> {
        let names: Vec<&str> = self.inputs.iter().map(|i| i.name.as_str()).collect();
        let rows = points
            .rows_of(&names)
            .map_err(|e| PcError::ColumnMismatch(e.to_string()))?;
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Analytic leave-one-out criteria, `e_i / (1 - P_ii)` with `P` the hat matrix.
    pub fn loo_diagnostics(&self, train: &DataTable) -> Result<LooDiagnostics, PcError> {
        Ok(self.loo_predictions(train)?.1)
    }

    pub fn loo_predictions(&self, train: &DataTable) -> Result<(Vec<f64>, LooDiagnostics), PcError> {
        let (rows, y) = training_arrays(train, &self.inputs, &self.output)?;
        let h = design_matrix(&self.inputs, &self.indices, self.degree, &rows);
        let fit = least_squares(h, &y)?;
        loo_from(&y, &fit)
    }

    /// Mean of the surrogate under the input laws, which is the constant term.
    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    /// Variance of the surrogate under the input laws (sum of squared
    /// non-constant coefficients, by orthonormality).
    pub fn variance(&self) -> f64 {
        self.coefficients[1..].iter().map(|c| c * c).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("uqkit-pc 1\n");
        s += &format!("output {}\n", self.output);
        s += &format!("degree {}\n", self.degree);
        s += &format!("inputs {}\n", self.inputs.len());
        for inp in &self.inputs {
            let t = match &inp.transform {
                InputTransform::Affine { lo, hi } => format!("affine {}", join_f64(&[*lo, *hi])),
                InputTransform::Standardise { mean, sigma } => format!("standardise {}", join_f64(&[*mean, *sigma])),
                InputTransform::Isoprobabilistic(d) => format!("law {d}"),
            };
            s += &format!("input {} {} {}\n", inp.name, inp.family.name(), t);
        }
        s += &format!("coefficients {}\n", join_f64(&self.coefficients));
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| join_f64(&[x]));
        s += &format!("loo_mse {}\n", opt(self.loo_mse));
        s += &format!("loo_q2 {}\n", opt(self.loo_q2));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PcError> {
        Self::parse_text(text).map_err(PcError::Format)
    }

    fn parse_text(text: &str) -> Result<Self, String> {
        let mut k = KeyLines::new(text);
        if k.expect("uqkit-pc")? != "1" {
            return Err("unsupported version".into());
        }
        let output = k.expect("output")?.to_string();
        let degree = k.expect_usize("degree")?;
        let n = k.expect_usize("inputs")?;
        let mut inputs = Vec::with_capacity(n);
        for _ in 0..n {
            let rest = k.expect("input")?;
            let mut parts = rest.splitn(4, char::is_whitespace);
            let name = parts.next().ok_or("input name")?.to_string();
            let family = match parts.next() {
                Some("legendre") => PolyFamily::Legendre,
                Some("hermite") => PolyFamily::Hermite,
                other => return Err(format!("unknown family {other:?}")),
            };
            let kind = parts.next().ok_or("transform kind")?;
            let args = parts.next().unwrap_or("");
            let transform = match kind {
                "affine" | "standardise" => {
                    let v = parse_f64_list(args)
                        .filter(|v| v.len() == 2)
                        .ok_or("transform parameters")?;
                    if kind == "affine" {
                        InputTransform::Affine { lo: v[0], hi: v[1] }
                    } else {
                        InputTransform::Standardise {
                            mean: v[0],
                            sigma: v[1],
                        }
                    }
                }
                "law" => InputTransform::Isoprobabilistic(Distribution::parse(args).map_err(|e| e.to_string())?),
                other => return Err(format!("unknown transform `{other}`")),
            };
            inputs.push(PcInput {
                name,
                family,
                transform,
            });
        }
        let indices = enumerate_multi_indices(n, degree);
        let coefficients = k.expect_f64s("coefficients", indices.len())?;
        let opt = |s: &str| -> Result<Option<f64>, String> {
            if s == "none" {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| format!("bad number `{s}`"))
            }
        };
        let loo_mse = opt(k.expect("loo_mse")?)?;
        let loo_q2 = opt(k.expect("loo_q2")?)?;
        k.finish()?;
        Ok(Self {
            inputs,
            degree,
            output,
            indices,
            coefficients,
            loo_mse,
            loo_q2,
        })
    }
}
