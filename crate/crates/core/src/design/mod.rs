//! Designs of experiments over declared input laws.
//!
//! Every design is first built in the unit hypercube of probabilities and then
//! mapped column by column through the inverse cdf of each input. Dependence is
//! imposed afterwards, either by a bivariate copula on a pair of probability
//! columns or by rank reordering towards a Spearman matrix.

mod dependence;
mod sequences;
mod sobol_table;

use thiserror::Error;

use crate::dataserver::{DataTable, TableError};
use crate::distributions::Distribution;
use crate::random::RandomStream;

pub use dependence::{induce_rank_correlation, sample_copula, validate_spearman, Copula, CopulaFamily, DependenceSpec};
pub use sequences::{halton_point, halton_unit, radical_inverse, sobol_unit, SobolSequence, PRIMES};

/// Largest dimension supported by the Halton and Sobol sequences.
pub const MAX_SEQUENCE_DIM: usize = 50;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("a design needs at least one sample")]
    NoSamples,
    #[error("a design needs at least one input")]
    NoInputs,
    #[error("dimension {dim} exceeds the supported maximum of {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("matrix not positive definite")]
    NotPositiveDefinite,
    #[error("invalid correlation matrix: {0}")]
    BadMatrix(String),
    #[error("{family:?} copula: theta = {theta} outside its domain")]
    InvalidTheta { family: CopulaFamily, theta: f64 },
    #[error("copula pair ({0}, {1}) is invalid for this design")]
    BadPair(usize, usize),
    #[error("maximin option {0} is out of range")]
    BadMaximin(&'static str),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Srs,
    Lhs,
    MaximinLhs,
    Halton,
    SobolSeq,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "srs" => Self::Srs,
            "lhs" => Self::Lhs,
            "maximinlhs" | "maximin_lhs" | "maximin" => Self::MaximinLhs,
            "halton" => Self::Halton,
            "sobolseq" | "sobol" => Self::SobolSeq,
            _ => return None,
        })
    }
}

/// Simulated-annealing settings for the maximin LHS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximinOptions {
    /// Exponent of the regularised mindist criterion.
    pub p_exponent: f64,
    pub sa_iterations: usize,
    /// Initial temperature, relative to the criterion of the starting design.
    pub sa_initial_temp: f64,
    /// Geometric cooling factor applied every `n_samples` moves.
    pub sa_cooling: f64,
}

impl Default for MaximinOptions {
    fn default() -> Self {
        Self {
            p_exponent: 50.0,
            sa_iterations: 2000,
            sa_initial_temp: 0.05,
            sa_cooling: 0.95,
        }
    }
}

impl MaximinOptions {
    fn validate(&self) -> Result<(), DesignError> {
        if !(self.p_exponent >= 1.0 && self.p_exponent.is_finite()) {
            return Err(DesignError::BadMaximin("p_exponent"));
        }
        if !(self.sa_initial_temp >= 0.0 && self.sa_initial_temp.is_finite()) {
            return Err(DesignError::BadMaximin("sa_initial_temp"));
        }
        if !(self.sa_cooling > 0.0 && self.sa_cooling < 1.0) {
            return Err(DesignError::BadMaximin("sa_cooling"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub inputs: Vec<(String, Distribution)>,
    pub n_samples: usize,
    pub method: Method,
    pub seed: u64,
    pub maximin: Option<MaximinOptions>,
}

impl DesignSpec {
    pub fn new(inputs: Vec<(String, Distribution)>, n_samples: usize, method: Method, seed: u64) -> Self {
        Self {
            inputs,
            n_samples,
            method,
            seed,
            maximin: None,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.n_samples == 0 {
            return Err(DesignError::NoSamples);
        }
        if self.inputs.is_empty() {
            return Err(DesignError::NoInputs);
        }
        if matches!(self.method, Method::Halton | Method::SobolSeq) && self.inputs.len() > MAX_SEQUENCE_DIM {
            return Err(DesignError::DimensionTooLarge {
                dim: self.inputs.len(),
                max: MAX_SEQUENCE_DIM,
            });
        }
        if let Some(o) = &self.maximin {
            o.validate()?;
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.inputs.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Builds the design described by `spec`: unit-cube points mapped through the
/// input quantiles.
pub fn generate(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    let unit = unit_design(spec)?;
    to_physical(&spec.inputs, &unit)
}

/// The design in probability space, one row per sample.
pub fn unit_design(spec: &DesignSpec) -> Result<Vec<Vec<f64>>, DesignError> {
    spec.validate()?;
    let (n, dim) = (spec.n_samples, spec.inputs.len());
    let mut rs = RandomStream::new(spec.seed);
    Ok(match spec.method {
        Method::Srs => srs_unit(n, dim, &mut rs),
        Method::Lhs => lhs_unit(n, dim, &mut rs),
        Method::MaximinLhs => {
            let opts = spec.maximin.unwrap_or_default();
            maximin_lhs_unit(n, dim, &opts, &mut rs).points
        }
        Method::Halton => halton_unit(n, dim)?,
        Method::SobolSeq => sobol_unit(n, dim)?,
    })
}

/// Maps probability rows through the input quantiles into a table.
pub fn to_physical(inputs: &[(String, Distribution)], unit: &[Vec<f64>]) -> Result<DataTable, DesignError> {
    let lo = f64::EPSILON * 0.5;
    let columns = inputs.iter().enumerate().map(|(j, (name, d))| {
        let values = unit
            .iter()
            .map(|row| d.quantile_in_unit(row[j].clamp(lo, 1.0 - lo)))
            .collect();
        (name.clone(), values)
    });
    Ok(DataTable::from_columns(columns)?)
}

/// Builds the design and then imposes `dependence`. A copula replaces the
/// probability column of the second input of the pair by its conditional
/// inverse given the first; a Spearman target reorders the physical columns.
/// Both draw from substream 1 of the design seed.
pub fn generate_with_dependence(spec: &DesignSpec, dependence: &DependenceSpec) -> Result<DataTable, DesignError> {
    match dependence {
        DependenceSpec::None => generate(spec),
        DependenceSpec::SpearmanMatrix(m) => {
            validate_spearman(m, spec.inputs.len())?;
            let table = generate(spec)?;
            induce_rank_correlation(&table, m, &mut RandomStream::new(spec.seed).substream(1))
        }
        DependenceSpec::Copula { copula, pair } => {
            let (i, j) = *pair;
            let dim = spec.inputs.len();
            if i == j || i >= dim || j >= dim {
                return Err(DesignError::BadPair(i, j));
            }
            let mut unit = unit_design(spec)?;
            let lo = f64::EPSILON * 0.5;
            for row in unit.iter_mut() {
                let u = row[i].clamp(lo, 1.0 - lo);
                row[j] = copula.conditional_inverse(u, row[j].clamp(lo, 1.0 - lo));
            }
            to_physical(&spec.inputs, &unit)
        }
    }
}

/// Convenience for the methods that need only a spec: SRS.
pub fn sample_srs(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    generate(&DesignSpec {
        method: Method::Srs,
        ..spec.clone()
    })
}

pub fn sample_lhs(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    generate(&DesignSpec {
        method: Method::Lhs,
        ..spec.clone()
    })
}

pub fn maximin_lhs(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    generate(&DesignSpec {
        method: Method::MaximinLhs,
        ..spec.clone()
    })
}

pub fn sample_halton(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    generate(&DesignSpec {
        method: Method::Halton,
        ..spec.clone()
    })
}

pub fn sample_sobolseq(spec: &DesignSpec) -> Result<DataTable, DesignError> {
    generate(&DesignSpec {
        method: Method::SobolSeq,
        ..spec.clone()
    })
}

/// Independent uniforms, filled column by column.
pub fn srs_unit(n: usize, dim: usize, rs: &mut RandomStream) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        for row in rows.iter_mut() {
            row[j] = rs.uniform();
        }
    }
    rows
}

/// Latin hypercube: for every column, a random permutation of the strata
/// `[k/n, (k+1)/n)` and a uniform position inside each stratum.
pub fn lhs_unit(n: usize, dim: usize, rs: &mut RandomStream) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; dim]; n];
    let nf = n as f64;
    for j in 0..dim {
        let perm = rs.permutation(n);
        for (row, &k) in rows.iter_mut().zip(&perm) {
            row[j] = (k as f64 + rs.uniform()) / nf;
        }
    }
    rows
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest pairwise Euclidean distance; infinite for fewer than two points.
pub fn min_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(squared_distance(&points[i], &points[j]));
        }
    }
    best.sqrt()
}

/// Regularised maximin criterion `(sum_{i<j} d_ij^-p)^(1/p)`; smaller is better.
/// Computed as `(1/dmin) (sum (dmin/d_ij)^p)^(1/p)` to avoid overflow.
pub fn phi_p(points: &[Vec<f64>], p: f64) -> f64 {
    let n = points.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    phi_from_distances(&d, p)
}

fn phi_from_distances(d: &[f64], p: f64) -> f64 {
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    if d.is_empty() {
        return 0.0;
    }
    if dmin == 0.0 {
        return f64::INFINITY;
    }
    let s: f64 = d.iter().map(|&x| (dmin / x).powf(p)).sum();
    s.powf(1.0 / p) / dmin
}

#[derive(Debug, Clone)]
pub struct MaximinResult {
    /// Best design found, in probability space.
    pub points: Vec<Vec<f64>>,
    pub phi_initial: f64,
    pub phi_final: f64,
    /// Criterion value after every accepted move, in order.
    pub accepted: Vec<f64>,
}

/// Maximin LHS by simulated annealing on the regularised criterion.
///
/// A move swaps one coordinate between two random rows, which keeps every
/// column a permutation of the same stratified values. Uphill moves of size
/// `delta` are accepted with probability `exp(-delta / (T phi_0))`, where
/// `phi_0` is the starting criterion; with `T = 0` only strict improvements
/// are kept. The best design visited is returned.
pub fn maximin_lhs_unit(n: usize, dim: usize, opts: &MaximinOptions, rs: &mut RandomStream) -> MaximinResult {
    let mut points = lhs_unit(n, dim, rs);
    let p = opts.p_exponent;
    let phi_initial = phi_p(&points, p);
    if n < 3 || dim < 2 {
        return MaximinResult {
            points,
            phi_initial,
            phi_final: phi_initial,
            accepted: Vec::new(),
        };
    }

    // Pairwise distances in packed upper-triangular order.
    let idx = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * n - a * (a + 1) / 2 + (b - a - 1)
    };
    let mut dist = vec![0.0; n * (n - 1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            dist[idx(i, j)] = squared_distance(&points[i], &points[j]).sqrt();
        }
    }

    let mut phi = phi_initial;
    let mut best = (phi, points.clone());
    let mut temp = opts.sa_initial_temp;
    let mut accepted = Vec::new();
    let mut saved = vec![0.0; 2 * n];
    for it in 0..opts.sa_iterations {
        if it > 0 && it % n == 0 {
            temp *= opts.sa_cooling;
        }
        let a = rs.below(n);
        let mut b = rs.below(n - 1);
        if b >= a {
            b += 1;
        }
        let k = rs.below(dim);

        let swap = |pts: &mut Vec<Vec<f64>>| {
            let t = pts[a][k];
            pts[a][k] = pts[b][k];
            pts[b][k] = t;
        };
        swap(&mut points);
        for (r, row) in [a, b].into_iter().enumerate() {
            for other in 0..n {
                if other != row {
                    let e = idx(row, other);
                    saved[r * n + other] = dist[e];
                    dist[e] = squared_distance(&points[row], &points[other]).sqrt();
                }
            }
        }
        let candidate = phi_from_distances(&dist, p);
        let delta = candidate - phi;
        let accept = delta < 0.0 || (temp > 0.0 && rs.uniform() < (-delta / (temp * phi_initial)).exp());
        if accept {
            phi = candidate;
            accepted.push(phi);
            if phi < best.0 {
                best = (phi, points.clone());
            }
        } else {
            swap(&mut points);
            // Restore in reverse order so the shared (a, b) entry ends up original.
            for (r, row) in [a, b].into_iter().enumerate().rev() {
                for other in 0..n {
                    if other != row {
                        dist[idx(row, other)] = saved[r * n + other];
                    }
                }
            }
        }
    }
    MaximinResult {
        points: best.1,
        phi_initial,
        phi_final: best.0,
        accepted,
    }
}
