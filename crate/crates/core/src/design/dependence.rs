//! Dependence between inputs: Spearman rank induction and bivariate copulas.

use nalgebra::DMatrix;

use super::DesignError;
use crate::dataserver::{ranks, DataTable};
use crate::distributions::Distribution;
use crate::random::RandomStream;
use crate::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopulaFamily {
    AliMikhailHaq,
    Clayton,
    Frank,
    Plackett,
}

impl CopulaFamily {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "alimikhailhaq" | "amh" => Self::AliMikhailHaq,
            "clayton" => Self::Clayton,
            "frank" => Self::Frank,
            "plackett" => Self::Plackett,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Copula {
    family: CopulaFamily,
    theta: f64,
}

impl Copula {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self, DesignError> {
        let ok = theta.is_finite()
            && match family {
                CopulaFamily::AliMikhailHaq => (-1.0..1.0).contains(&theta),
                CopulaFamily::Clayton => theta > 0.0,
                CopulaFamily::Frank => theta != 0.0,
                CopulaFamily::Plackett => theta > 0.0 && theta != 1.0,
            };
        if !ok {
            return Err(DesignError::InvalidTheta { family, theta });
        }
        Ok(Self { family, theta })
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Joint cdf `C(u, v)`.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let t = self.theta;
        match self.family {
            CopulaFamily::AliMikhailHaq => u * v / (1.0 - t * (1.0 - u) * (1.0 - v)),
            CopulaFamily::Clayton => (u.powf(-t) + v.powf(-t) - 1.0).powf(-1.0 / t),
            CopulaFamily::Frank => {
                let num = (-t * u).exp_m1() * (-t * v).exp_m1();
                -(1.0 + num / (-t).exp_m1()).ln() / t
            }
            CopulaFamily::Plackett => {
                let s = 1.0 + (t - 1.0) * (u + v);
                (s - (s * s - 4.0 * t * (t - 1.0) * u * v).sqrt()) / (2.0 * (t - 1.0))
            }
        }
    }

    /// Conditional cdf `P(V <= v | U = u) = dC/du`.
    pub fn conditional_cdf(&self, u: f64, v: f64) -> f64 {
        let t = self.theta;
        match self.family {
            CopulaFamily::AliMikhailHaq => {
                let d = 1.0 - t * (1.0 - u) * (1.0 - v);
                v * (1.0 - t * (1.0 - v)) / (d * d)
            }
            CopulaFamily::Clayton => u.powf(-t - 1.0) * (u.powf(-t) + v.powf(-t) - 1.0).powf(-1.0 / t - 1.0),
            CopulaFamily::Frank => {
                let a = (-t * u).exp();
                let b = (-t * v).exp_m1();
                a * b / ((-t).exp_m1() + (-t * u).exp_m1() * b)
            }
            CopulaFamily::Plackett => {
                let s = 1.0 + (t - 1.0) * (u + v);
                let root = (s * s - 4.0 * t * (t - 1.0) * u * v).sqrt();
                0.5 - 0.5 * ((t - 1.0) * s - 2.0 * t * (t - 1.0) * v) / ((t - 1.0) * root)
            }
        }
    }

    /// Solves `conditional_cdf(u, v) = w` for `v`.
    pub fn conditional_inverse(&self, u: f64, w: f64) -> f64 {
        let t = self.theta;
        match self.family {
            CopulaFamily::Clayton => ((w.powf(-t / (1.0 + t)) - 1.0) * u.powf(-t) + 1.0).powf(-1.0 / t),
            CopulaFamily::Frank => {
                let r = w * (-t).exp_m1() / (w + (1.0 - w) * (-t * u).exp());
                -r.ln_1p() / t
            }
            CopulaFamily::Plackett => {
                let a = w * (1.0 - w);
                let b = t + a * (t - 1.0) * (t - 1.0);
                let c = 2.0 * a * (u * t * t + 1.0 - u) + t * (1.0 - 2.0 * a);
                let d = t.sqrt() * (t + 4.0 * a * u * (1.0 - u) * (1.0 - t) * (1.0 - t)).sqrt();
                (c - (1.0 - 2.0 * w) * d) / (2.0 * b)
            }
            CopulaFamily::AliMikhailHaq => {
                // The conditional cdf is increasing in v; plain bisection is enough.
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.conditional_cdf(u, mid) < w {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// Dependence structure applied on top of an independent design.
#[derive(Debug, Clone, PartialEq)]
pub enum DependenceSpec {
    None,
    SpearmanMatrix(Vec<Vec<f64>>),
    Copula { copula: Copula, pair: (usize, usize) },
}

/// Draws `n` pairs from `copula` and maps them through the two marginals.
pub fn sample_copula(
    n: usize,
    copula: &Copula,
    marginals: (&Distribution, &Distribution),
    names: [&str; 2],
    rs: &mut RandomStream,
) -> Result<DataTable, DesignError> {
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rs.uniform();
        let w = rs.uniform();
        let v = copula
            .conditional_inverse(u, w)
            .clamp(f64::EPSILON * 0.5, 1.0 - f64::EPSILON * 0.5);
        a.push(marginals.0.quantile_in_unit(u));
        b.push(marginals.1.quantile_in_unit(v));
    }
    Ok(DataTable::from_columns([(names[0], a), (names[1], b)])?)
}

/// Checks symmetry, unit diagonal, entries in [-1, 1] and positive definiteness.
pub fn validate_spearman(m: &[Vec<f64>], dim: usize) -> Result<(), DesignError> {
    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
        return Err(DesignError::BadMatrix(format!("expected a {dim}x{dim} matrix")));
    }
    for i in 0..dim {
        if m[i][i] != 1.0 {
            return Err(DesignError::BadMatrix("diagonal must be 1".into()));
        }
        for j in 0..dim {
            if !(-1.0..=1.0).contains(&m[i][j]) {
                return Err(DesignError::BadMatrix("entries must lie in [-1, 1]".into()));
            }
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return Err(DesignError::BadMatrix("matrix must be symmetric".into()));
            }
        }
    }
    let mat = DMatrix::from_fn(dim, dim, |i, j| m[i][j]);
    mat.cholesky().ok_or(DesignError::NotPositiveDefinite)?;
    Ok(())
}

/// Reorders each column so that the rank correlation approaches `target`,
/// leaving every column's multiset of values untouched.
///
/// Normal scores are drawn as random permutations of the van der Waerden
/// scores, their sample correlation is removed through its Cholesky factor and
/// replaced with the target one; the data columns then copy the ranks of the
/// transformed scores. The Spearman target is converted to the Pearson
/// correlation of the scores through `2 sin(pi rho / 6)`.
pub fn induce_rank_correlation(
    table: &DataTable,
    target: &[Vec<f64>],
    rs: &mut RandomStream,
) -> Result<DataTable, DesignError> {
    let d = table.n_cols();
    let n = table.n_rows();
    validate_spearman(target, d)?;
    if n < 2 {
        return Ok(table.clone());
    }
    let spear = DMatrix::from_fn(d, d, |i, j| target[i][j]);
    let pearson = spear.map(|r| 2.0 * (std::f64::consts::PI * r / 6.0).sin());
    let target_chol = pearson
        .clone()
        .cholesky()
        .or_else(|| spear.clone().cholesky())
        .ok_or(DesignError::NotPositiveDefinite)?
        .l();

    let scores: Vec<f64> = (1..=n).map(|k| normal_quantile(k as f64 / (n as f64 + 1.0))).collect();
    let mut z = DMatrix::zeros(n, d);
    for j in 0..d {
        let perm = rs.permutation(n);
        for i in 0..n {
            z[(i, j)] = scores[perm[i]];
        }
    }
    // Sample correlation of the scores (all columns share mean 0 and variance).
    let ss: f64 = scores.iter().map(|s| s * s).sum();
    let e = (z.transpose() * &z) / ss;
    let t = match e.cholesky() {
        Some(ch) => {
            let l = ch.l();
            let inv_lt = l.transpose().try_inverse().ok_or(DesignError::NotPositiveDefinite)?;
            &z * inv_lt * target_chol.transpose()
        }
        None => &z * target_chol.transpose(),
    };

    let mut cols = Vec::with_capacity(d);
    for (j, c) in table.columns().iter().enumerate() {
        let mut sorted = c.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let tj: Vec<f64> = t.column(j).iter().copied().collect();
        let r = ranks(&tj);
        let values = r
            .iter()
            .map(|&rk| sorted[(rk.round() as usize).clamp(1, n) - 1])
            .collect();
        cols.push((c.name().to_string(), values));
    }
    let mut out = DataTable::from_columns(cols)?;
    for c in table.columns() {
        if let Some(u) = c.unit() {
            out = out.with_unit(c.name(), u)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataserver::spearman;
    use crate::design::{generate, DesignSpec, Method};

    fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                let x = (a[i] - a[j]) * (b[i] - b[j]);
                s += if x > 0.0 {
                    1
                } else if x < 0.0 {
                    -1
                } else {
                    0
                };
            }
        }
        s as f64 / (n * (n - 1) / 2) as f64
    }

    fn two_uniforms(n: usize, seed: u64) -> DataTable {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        let spec = DesignSpec::new(vec![("a".into(), u), ("b".into(), u)], n, Method::Lhs, seed);
        generate(&spec).unwrap()
    }

    #[test]
    fn rank_induction_reaches_target_and_keeps_marginals() {
        let t = two_uniforms(2000, 1);
        let target = vec![vec![1.0, 0.9], vec![0.9, 1.0]];
        let out = induce_rank_correlation(&t, &target, &mut RandomStream::new(2)).unwrap();
        let rho = spearman(out.column("a").unwrap(), out.column("b").unwrap());
        assert!((rho - 0.9).abs() <= 0.05, "rho = {rho}");
        for name in ["a", "b"] {
            let mut x = t.column(name).unwrap().to_vec();
            let mut y = out.column(name).unwrap().to_vec();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn identity_target_gives_small_correlations() {
        let t = two_uniforms(100, 3);
        let target = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = induce_rank_correlation(&t, &target, &mut RandomStream::new(4)).unwrap();
        let rho = spearman(out.column("a").unwrap(), out.column("b").unwrap());
        assert!(rho.abs() < 0.1);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]];
        assert!(matches!(
            validate_spearman(&m, 3),
            Err(DesignError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn clayton_kendall_tau() {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        for &(theta, tol) in &[(0.01, 0.05), (2.0, 0.05)] {
            let c = Copula::new(CopulaFamily::Clayton, theta).unwrap();
            let t = sample_copula(5000, &c, (&u, &u), ["u", "v"], &mut RandomStream::new(7)).unwrap();
            let tau = kendall_tau(t.column("u").unwrap(), t.column("v").unwrap());
            let want = theta / (theta + 2.0);
            assert!((tau - want).abs() < tol, "theta {theta}: tau {tau}");
        }
    }

    #[test]
    fn conditional_inverse_solves_conditional_cdf() {
        let cases = [
            Copula::new(CopulaFamily::AliMikhailHaq, 0.7).unwrap(),
            Copula::new(CopulaFamily::AliMikhailHaq, -0.8).unwrap(),
            Copula::new(CopulaFamily::Clayton, 1.5).unwrap(),
            Copula::new(CopulaFamily::Frank, -4.0).unwrap(),
            Copula::new(CopulaFamily::Frank, 6.0).unwrap(),
            Copula::new(CopulaFamily::Plackett, 5.0).unwrap(),
            Copula::new(CopulaFamily::Plackett, 0.2).unwrap(),
        ];
        let mut rs = RandomStream::new(9);
        for c in cases {
            for _ in 0..200 {
                let (u, w) = (rs.uniform(), rs.uniform());
                let v = c.conditional_inverse(u, w);
                assert!((0.0..=1.0).contains(&v));
                assert!((c.conditional_cdf(u, v) - w).abs() < 1e-9, "{c:?} u={u} w={w}");
                // The conditional cdf is the u-derivative of the joint cdf.
                let h = 1e-6;
                let fd = (c.cdf(u + h, v) - c.cdf(u - h, v)) / (2.0 * h);
                if u > 2.0 * h && u < 1.0 - 2.0 * h {
                    assert!((fd - w).abs() < 1e-5, "{c:?} fd={fd} w={w}");
                }
            }
        }
    }

    /// Brute-force check of a family's dependence sign through Kendall's tau
    /// plus a Kolmogorov-Smirnov check of both marginals.
    #[test]
    fn copula_marginals_pass_ks() {
        let m1 = Distribution::normal(1.0, 2.0).unwrap();
        let m2 = Distribution::parse("Exponential(2, 0)").unwrap();
        let n = 4000;
        let crit = 1.63 / (n as f64).sqrt();
        for (k, c) in [
            Copula::new(CopulaFamily::AliMikhailHaq, 0.5).unwrap(),
            Copula::new(CopulaFamily::Clayton, 3.0).unwrap(),
            Copula::new(CopulaFamily::Frank, 5.0).unwrap(),
            Copula::new(CopulaFamily::Plackett, 4.0).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let t = sample_copula(n, c, (&m1, &m2), ["a", "b"], &mut RandomStream::new(k as u64)).unwrap();
            for (name, d) in [("a", &m1), ("b", &m2)] {
                let mut x = t.column(name).unwrap().to_vec();
                x.sort_by(f64::total_cmp);
                let ks = x
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let f = d.cdf(v);
                        (f - i as f64 / n as f64)
                            .abs()
                            .max(((i + 1) as f64 / n as f64 - f).abs())
                    })
                    .fold(0.0, f64::max);
                assert!(ks < crit, "{c:?} column {name}: {ks}");
            }
            let tau = kendall_tau(t.column("a").unwrap(), t.column("b").unwrap());
            assert!(tau > 0.05, "{c:?}: tau {tau}");
        }
    }

    #[test]
    fn theta_domains() {
        assert!(Copula::new(CopulaFamily::AliMikhailHaq, 1.0).is_err());
        assert!(Copula::new(CopulaFamily::Clayton, 0.0).is_err());
        assert!(Copula::new(CopulaFamily::Frank, 0.0).is_err());
        assert!(Copula::new(CopulaFamily::Plackett, 1.0).is_err());
        assert!(Copula::new(CopulaFamily::Plackett, -1.0).is_err());
    }
}
