//! Global sensitivity analysis: Morris screening, FAST first-order indices and
//! Sobol pick-and-freeze indices with confidence intervals.
//!
//! Every method forms its whole evaluation batch first and hands it to an
//! [`EvalContext`], so results do not depend on the number of threads.

use thiserror::Error;

use crate::dataserver::{mean, pearson, variance};
use crate::design::srs_unit;
use crate::distributions::Distribution;
use crate::model::{EvalContext, Model, ModelError};
use crate::random::RandomStream;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("model has {model} inputs but {declared} were declared")]
    ArityMismatch { model: usize, declared: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("{n_s} samples cannot resolve harmonics up to {needed_frequency} (at least {needed} needed)")]
    FrequencyAliasing {
        n_s: usize,
        needed_frequency: usize,
        needed: usize,
    },
    #[error("output has zero variance")]
    ZeroVariance,
    #[error("model failed in trajectory {trajectory}: {source}")]
    TrajectoryFailure {
        trajectory: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Inputs = [(String, Distribution)];

fn check_arity<M: Model + ?Sized>(model: &M, inputs: &Inputs) -> Result<(), SensitivityError> {
    if model.n_inputs() != inputs.len() || inputs.is_empty() {
        return Err(SensitivityError::ArityMismatch {
            model: model.n_inputs(),
            declared: inputs.len(),
        });
    }
    Ok(())
}

/// Probability mass removed from each tail of a law with unbounded support
/// before mapping the unit interval through its quantile function.
pub const TAIL_COMPRESSION: f64 = 0.005;

fn is_bounded(d: &Distribution) -> bool {
    let (lo, hi) = d.support();
    lo.is_finite() && hi.is_finite()
}

/// Maps `u` in `[0, 1]` to the law's scale. Bounded laws use the closed
/// support; unbounded laws are first squeezed into `[delta, 1 - delta]`.
pub fn unit_to_physical(d: &Distribution, u: f64) -> f64 {
    if is_bounded(d) {
        let (lo, hi) = d.support();
        if u <= 0.0 {
            return lo;
        }
        if u >= 1.0 {
            return hi;
        }
        d.quantile_in_unit(u)
    } else {
        d.quantile_in_unit(TAIL_COMPRESSION + (1.0 - 2.0 * TAIL_COMPRESSION) * u.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorrisIndex {
    pub name: String,
    pub mu: f64,
    pub mu_star: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorrisResult {
    pub indices: Vec<MorrisIndex>,
    pub r: usize,
    pub p: usize,
    pub delta: f64,
    pub n_evals: usize,
    /// Every evaluated point in the unit cube, trajectory after trajectory.
    pub points: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

/// One randomised one-at-a-time trajectory on the `p`-level grid: random
/// factor order and step signs, base levels drawn among those that keep the
/// move inside `[0, 1]`.
pub fn morris_trajectory(
    dim: usize,
    p: usize,
    delta: f64,
    rs: &mut RandomStream,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let step = 1.0 / (p - 1) as f64;
    let levels: Vec<f64> = (0..p).map(|k| k as f64 * step).collect();
    let order = rs.permutation(dim);
    let signs: Vec<f64> = (0..dim).map(|_| if rs.uniform() < 0.5 { 1.0 } else { -1.0 }).collect();
    let eps = 1e-12;
    let base: Vec<f64> = signs
        .iter()
        .map(|&s| {
            let admissible: Vec<f64> = levels
                .iter()
                .copied()
                .filter(|&x| {
                    if s > 0.0 {
                        x + delta <= 1.0 + eps
                    } else {
                        x - delta >= -eps
                    }
                })
                .collect();
            admissible[rs.below(admissible.len())]
        })
        .collect();
    let mut pts = Vec::with_capacity(dim + 1);
    pts.push(base.clone());
    let mut cur = base;
    for &i in &order {
        cur[i] = (cur[i] + signs[i] * delta).clamp(0.0, 1.0);
        pts.push(cur.clone());
    }
    (pts, order, signs)
}

/// Morris elementary effects with `r` trajectories on a `p`-level grid. The
/// default step is `p / (2 (p - 1))`.
pub fn morris<M: Model + ?Sized>(
    model: &M,
    inputs: &Inputs,
    r: usize,
    p: usize,
    delta: Option<f64>,
    rs: &mut RandomStream,
    ctx: &EvalContext,
) -> Result<MorrisResult, SensitivityError> {
    check_arity(model, inputs)?;
    if r < 2 {
        return Err(SensitivityError::InvalidOption(
            "at least 2 trajectories are needed".into(),
        ));
    }
    if p < 2 {
        return Err(SensitivityError::InvalidOption("at least 2 levels are needed".into()));
    }
    let grid = 1.0 / (p - 1) as f64;
    let delta = delta.unwrap_or(p as f64 / (2.0 * (p - 1) as f64));
    let k = (delta / grid).round();
    if !(k >= 1.0 && (delta / grid - k).abs() < 1e-9 && delta <= 1.0 + 1e-12) {
        return Err(SensitivityError::InvalidOption(format!(
            "step {delta} is not a positive multiple of the grid spacing 1/{}",
            p - 1
        )));
    }
    let dim = inputs.len();
    let mut points = Vec::with_capacity(r * (dim + 1));
    let mut moves = Vec::with_capacity(r);
    for _ in 0..r {
        let (pts, order, signs) = morris_trajectory(dim, p, delta, rs);
        points.extend(pts);
        moves.push((order, signs));
    }
    let physical: Vec<Vec<f64>> = points
        .iter()
        .map(|u| {
            u.iter()
                .zip(inputs)
                .map(|(u, (_, d))| unit_to_physical(d, *u))
                .collect()
        })
        .collect();
    let outputs = ctx.evaluate(model, &physical).map_err(|e| match e {
        ModelError::AtRow { index, source } => SensitivityError::TrajectoryFailure {
            trajectory: index / (dim + 1),
            source: *source,
        },
        other => other.into(),
    })?;
    let mut effects = vec![Vec::with_capacity(r); dim];
    for (t, (order, signs)) in moves.iter().enumerate() {
        let y = &outputs[t * (dim + 1)..(t + 1) * (dim + 1)];
        for (step, &i) in order.iter().enumerate() {
            effects[i].push(signs[i] * (y[step + 1] - y[step]) / delta);
        }
    }
    let indices = inputs
        .iter()
        .zip(&effects)
        .map(|((name, _), ee)| MorrisIndex {
            name: name.clone(),
            mu: mean(ee),
            mu_star: ee.iter().map(|v| v.abs()).sum::<f64>() / ee.len() as f64,
            sigma: variance(ee).sqrt(),
        })
        .collect();
    Ok(MorrisResult {
        indices,
        r,
        p,
        delta,
        n_evals: outputs.len(),
        points,
        outputs,
    })
}

/// Integer frequencies chosen greedily from `start` upward so that no integer
/// combination `sum c_j w_j` with `0 < sum |c_j| <= m + 1` vanishes.
pub fn fast_frequencies(n: usize, m: usize, start: usize) -> Vec<usize> {
    let budget = m + 1;
    let mut freqs: Vec<usize> = Vec::with_capacity(n);
    // reach[b] holds every |sum c_j w_j| with sum |c_j| <= b over chosen frequencies.
    let mut reach: Vec<std::collections::BTreeSet<i64>> = vec![std::iter::once(0).collect(); budget + 1];
    let mut w = start.max(1);
    while freqs.len() < n {
        let wi = w as i64;
        let clashes = (1..=budget as i64).any(|c| reach[budget - c as usize].contains(&(c * wi)));
        if !clashes {
            let mut next = reach.clone();
            for b in 1..=budget {
                for c in 1..=b as i64 {
                    for &v in &reach[b - c as usize] {
                        next[b].insert((v + c * wi).abs());
                        next[b].insert((v - c * wi).abs());
                    }
                }
            }
            reach = next;
            freqs.push(w);
        }
        w += 1;
    }
    freqs
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastResult {
    pub names: Vec<String>,
    /// Harmonic power of each input over the harmonic power of all inputs.
    pub first_order: Vec<f64>,
    /// Harmonic power of each input over the sample variance of the output.
    pub first_order_of_variance: Vec<f64>,
    pub frequencies: Vec<usize>,
    pub m: usize,
    pub n_s: usize,
    /// `(1/n) sum f^2 - mean^2` on the search curve.
    pub variance: f64,
    /// `2 sum_{k=1}^{n/2} (A_k^2 + B_k^2)`, which equals `variance` by Parseval.
    pub spectral_power: f64,
}

pub const FAST_START_FREQUENCY: usize = 11;

/// Fourier amplitude sensitivity test. The search curve is
/// `u_i(s) = 1/2 + arcsin(sin(w_i s)) / pi` on `s_j = -pi + pi (2j - 1) / n_s`.
pub fn fast_first_order<M: Model + ?Sized>(
    model: &M,
    inputs: &Inputs,
    n_s: usize,
    m: usize,
    ctx: &EvalContext,
) -> Result<FastResult, SensitivityError> {
    check_arity(model, inputs)?;
    if m == 0 {
        return Err(SensitivityError::InvalidOption(
            "the interference factor must be at least 1".into(),
        ));
    }
    let dim = inputs.len();
    let frequencies = fast_frequencies(dim, m, FAST_START_FREQUENCY);
    let w_max = *frequencies.iter().max().expect("at least one input");
    let needed = 2 * m * w_max + 1;
    if n_s < needed {
        return Err(SensitivityError::FrequencyAliasing {
            n_s,
            needed_frequency: m * w_max,
            needed,
        });
    }
    let pi = std::f64::consts::PI;
    let s: Vec<f64> = (1..=n_s).map(|j| -pi + pi * (2 * j - 1) as f64 / n_s as f64).collect();
    let rows: Vec<Vec<f64>> = s
        .iter()
        .map(|&s| {
            frequencies
                .iter()
                .zip(inputs)
                .map(|(&w, (_, d))| {
                    let u = (0.5 + (w as f64 * s).sin().asin() / pi).clamp(0.0, 1.0);
                    unit_to_physical(d, u)
                })
                .collect()
        })
        .collect();
    let y = ctx.evaluate(model, &rows)?;
    let nf = n_s as f64;
    let power = |k: usize| -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for (yj, sj) in y.iter().zip(&s) {
            let (sn, cs) = (k as f64 * sj).sin_cos();
            a += yj * cs;
            b += yj * sn;
        }
        (a / nf).powi(2) + (b / nf).powi(2)
    };
    let partial: Vec<f64> = frequencies
        .iter()
        .map(|&w| 2.0 * (1..=m).map(|p| power(p * w)).sum::<f64>())
        .collect();
    let ybar = mean(&y);
    let var = y.iter().map(|v| v * v).sum::<f64>() / nf - ybar * ybar;
    let spectral_power = 2.0 * (1..=n_s / 2).map(power).sum::<f64>();
    let total: f64 = partial.iter().sum();
    if !(var > 0.0) || !(total > 0.0) {
        return Err(SensitivityError::ZeroVariance);
    }
    Ok(FastResult {
        names: inputs.iter().map(|(n, _)| n.clone()).collect(),
        first_order: partial.iter().map(|d| d / total).collect(),
        first_order_of_variance: partial.iter().map(|d| d / var).collect(),
        frequencies,
        m,
        n_s,
        variance: var,
        spectral_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndex {
    pub name: String,
    pub first: Estimate,
    pub total: Estimate,
    /// Mean-product estimator of the first-order index.
    pub first_classic: f64,
    /// Jansen estimator of the total index.
    pub total_classic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolResult {
    pub indices: Vec<SobolIndex>,
    pub n_s: usize,
    pub n_evals: usize,
}

const Z_95: f64 = 1.959_963_984_540_054;

/// Correlation with its 95% interval from the Fisher transform.
fn correlation_estimate(a: &[f64], b: &[f64]) -> Result<Estimate, SensitivityError> {
    let rho = pearson(a, b);
    if !rho.is_finite() {
        return Err(SensitivityError::ZeroVariance);
    }
    let rho = rho.clamp(-1.0, 1.0);
    let half = Z_95 / (a.len() as f64 - 3.0).sqrt();
    let z = rho.atanh();
    Ok(Estimate {
        value: rho,
        ci_low: (z - half).tanh().min(rho),
        ci_high: (z + half).tanh().max(rho),
    })
}

/// Pick-and-freeze indices from two independent random matrices `M` and `N`:
/// `S_i = corr(y(M), y(N_i))` and `S_Ti = 1 - corr(y(N), y(N_i))`, where `N_i`
/// is `N` with its column `i` taken from `M`.
pub fn sobol_pick_freeze<M: Model + ?Sized>(
    model: &M,
    inputs: &Inputs,
    n_s: usize,
    rs: &mut RandomStream,
    ctx: &EvalContext,
) -> Result<SobolResult, SensitivityError> {
    check_arity(model, inputs)?;
    if n_s < 4 {
        return Err(SensitivityError::InvalidOption("at least 4 samples are needed".into()));
    }
    let dim = inputs.len();
    let to_physical = |u: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        u.into_iter()
            .map(|row| {
                row.iter()
                    .zip(inputs)
                    .map(|(u, (_, d))| d.quantile_in_unit(*u))
                    .collect()
            })
            .collect()
    };
    let m = to_physical(srs_unit(n_s, dim, rs));
    let n = to_physical(srs_unit(n_s, dim, rs));
    let mut batch = Vec::with_capacity(n_s * (dim + 2));
    batch.extend(m.iter().cloned());
    batch.extend(n.iter().cloned());
    for i in 0..dim {
        batch.extend(n.iter().zip(&m).map(|(nr, mr)| {
            let mut r = nr.clone();
            r[i] = mr[i];
            r
        }));
    }
    let y = ctx.evaluate(model, &batch)?;
    let y_m = &y[..n_s];
    let y_n = &y[n_s..2 * n_s];
    let f0 = mean(y_m);
    let v = y_m.iter().map(|a| a * a).sum::<f64>() / n_s as f64 - f0 * f0;
    if !(variance(y_m) > 0.0 && variance(y_n) > 0.0) {
        return Err(SensitivityError::ZeroVariance);
    }
    let mut indices = Vec::with_capacity(dim);
    for (i, (name, _)) in inputs.iter().enumerate() {
        let y_i = &y[(2 + i) * n_s..(3 + i) * n_s];
        let first = correlation_estimate(y_m, y_i)?;
        let c = correlation_estimate(y_n, y_i)?;
        let total = Estimate {
            value: 1.0 - c.value,
            ci_low: 1.0 - c.ci_high,
            ci_high: 1.0 - c.ci_low,
        };
        let first_classic = (y_m.iter().zip(y_i).map(|(a, b)| a * b).sum::<f64>() / n_s as f64 - f0 * mean(y_i)) / v;
        let total_classic = y_n.iter().zip(y_i).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * n_s as f64) / v;
        indices.push(SobolIndex {
            name: name.clone(),
            first,
            total,
            first_classic,
            total_classic,
        });
    }
    Ok(SobolResult {
        indices,
        n_s,
        n_evals: y.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FnModel;

    fn uniforms(n: usize) -> Vec<(String, Distribution)> {
        (0..n)
            .map(|i| (format!("x{}", i + 1), Distribution::uniform(0.0, 1.0).unwrap()))
            .collect()
    }

    #[test]
    fn morris_trajectories_are_one_at_a_time_on_the_grid() {
        let mut rs = RandomStream::new(1);
        for _ in 0..50 {
            let (pts, order, _) = morris_trajectory(5, 6, 0.6, &mut rs);
            assert_eq!(pts.len(), 6);
            for p in &pts {
                for &v in p {
                    let k = v * 5.0;
                    assert!((k - k.round()).abs() < 1e-9 && (0.0..=1.0).contains(&v));
                }
            }
            let mut seen = [false; 5];
            for (w, &i) in pts.windows(2).zip(&order) {
                let changed: Vec<usize> = (0..5).filter(|&k| w[0][k] != w[1][k]).collect();
                assert_eq!(changed, vec![i]);
                assert!(((w[1][i] - w[0][i]).abs() - 0.6).abs() < 1e-12);
                seen[i] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn morris_constant_and_linear_models() {
        let ctx = EvalContext::serial();
        let c = FnModel::new(3, |_: &[f64]| 7.0);
        let r = morris(&c, &uniforms(3), 5, 4, None, &mut RandomStream::new(2), &ctx).unwrap();
        assert_eq!(r.n_evals, 5 * 4);
        assert!(r
            .indices
            .iter()
            .all(|i| i.mu == 0.0 && i.mu_star == 0.0 && i.sigma == 0.0));

        let a = [1.0, -2.0, 0.5];
        let lin = FnModel::new(3, move |x: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum());
        let inputs = vec![
            ("a".to_string(), Distribution::uniform(0.0, 2.0).unwrap()),
            ("b".to_string(), Distribution::uniform(-1.0, 1.0).unwrap()),
            ("c".to_string(), Distribution::uniform(5.0, 6.0).unwrap()),
        ];
        let r = morris(&lin, &inputs, 10, 6, None, &mut RandomStream::new(3), &ctx).unwrap();
        let ranges = [2.0, 2.0, 1.0];
        for ((idx, a), w) in r.indices.iter().zip(a).zip(ranges) {
            assert!(idx.sigma < 1e-8);
            assert!((idx.mu_star - a.abs() * w).abs() < 1e-9);
            assert!(idx.mu_star >= idx.mu.abs());
        }
    }

    #[test]
    fn morris_rejects_bad_step() {
        let m = FnModel::new(1, |x: &[f64]| x[0]);
        let r = morris(
            &m,
            &uniforms(1),
            4,
            6,
            Some(0.3),
            &mut RandomStream::new(1),
            &EvalContext::serial(),
        );
        assert!(matches!(r, Err(SensitivityError::InvalidOption(_))));
    }

    #[test]
    fn fast_frequencies_are_interference_free() {
        for m in [2, 4] {
            let w = fast_frequencies(6, m, 11);
            assert_eq!(w[0], 11);
            // Brute force over all coefficient vectors with sum |c| <= m + 1.
            fn search(w: &[usize], k: usize, left: i64, acc: i64, nonzero: bool) -> bool {
                if k == w.len() {
                    return nonzero && acc == 0;
                }
                (-left..=left).any(|c| search(w, k + 1, left - c.abs(), acc + c * w[k] as i64, nonzero || c != 0))
            }
            assert!(!search(&w, 0, m as i64 + 1, 0, false), "{w:?}");
        }
    }

    #[test]
    fn fast_single_input_and_additive_model() {
        let ctx = EvalContext::serial();
        let only = FnModel::new(3, |x: &[f64]| (3.0 * x[0]).sin());
        let r = fast_first_order(&only, &uniforms(3), 1001, 4, &ctx).unwrap();
        assert!(r.first_order[0] >= 0.99 && r.first_order[1] <= 0.01 && r.first_order[2] <= 0.01);

        let add = FnModel::new(2, |x: &[f64]| x[0] + 2.0 * x[1]);
        let r = fast_first_order(&add, &uniforms(2), 1001, 4, &ctx).unwrap();
        assert!((r.first_order[0] - 0.2).abs() < 0.05 && (r.first_order[1] - 0.8).abs() < 0.05);
        assert!((r.first_order_of_variance[0] - 0.2).abs() < 0.05);
        assert!(r.first_order_of_variance.iter().sum::<f64>() <= 1.02);
        assert!((r.spectral_power / r.variance - 1.0).abs() < 0.02);

        let err = fast_first_order(&add, &uniforms(2), 50, 4, &ctx);
        assert!(matches!(err, Err(SensitivityError::FrequencyAliasing { .. })));
    }

    #[test]
    fn sobol_single_input() {
        let m = FnModel::new(3, |x: &[f64]| x[0]);
        let r = sobol_pick_freeze(
            &m,
            &uniforms(3),
            1000,
            &mut RandomStream::new(4),
            &EvalContext::serial(),
        )
        .unwrap();
        assert_eq!(r.n_evals, 1000 * 5);
        assert!((r.indices[0].first.value - 1.0).abs() < 1e-12);
        assert!((r.indices[0].total.value - 1.0).abs() < 0.1);
        for idx in &r.indices[1..] {
            assert!(idx.first.ci_low <= 0.0 && 0.0 <= idx.first.ci_high, "{idx:?}");
            assert!(idx.total.value.abs() < 1e-12);
        }
    }

    #[test]
    fn sobol_additive_model_and_affine_invariance() {
        let ctx = EvalContext::serial();
        let m = FnModel::new(2, |x: &[f64]| x[0] + 2.0 * x[1]);
        let r = sobol_pick_freeze(&m, &uniforms(2), 10_000, &mut RandomStream::new(5), &ctx).unwrap();
        let (s1, s2) = (&r.indices[0], &r.indices[1]);
        assert!((s1.first.value - 0.2).abs() < 0.05 && (s2.first.value - 0.8).abs() < 0.05);
        for s in [s1, s2] {
            assert!(s.first.ci_low <= s.first.value && s.first.value <= s.first.ci_high);
            let width = s.first.ci_high - s.first.ci_low;
            assert!((s.first.value - s.first_classic).abs() < 2.0 * width.max(0.02));
            assert!((s.total.value - s.first.value).abs() < 0.05);
        }
        let shifted = FnModel::new(2, |x: &[f64]| 3.0 * (x[0] + 2.0 * x[1]) - 10.0);
        let q = sobol_pick_freeze(&shifted, &uniforms(2), 10_000, &mut RandomStream::new(5), &ctx).unwrap();
        for (a, b) in r.indices.iter().zip(&q.indices) {
            assert!((a.first.value - b.first.value).abs() < 1e-12);
            assert!((a.total.value - b.total.value).abs() < 1e-12);
        }
    }

    #[test]
    fn sobol_zero_variance_and_determinism() {
        let ctx = EvalContext::serial();
        let c = FnModel::new(2, |_: &[f64]| 1.0);
        assert!(matches!(
            sobol_pick_freeze(&c, &uniforms(2), 100, &mut RandomStream::new(1), &ctx),
            Err(SensitivityError::ZeroVariance)
        ));
        let m = FnModel::new(2, |x: &[f64]| x[0] * x[1]);
        let a = sobol_pick_freeze(&m, &uniforms(2), 200, &mut RandomStream::new(9), &ctx).unwrap();
        let b = sobol_pick_freeze(
            &m,
            &uniforms(2),
            200,
            &mut RandomStream::new(9),
            &EvalContext::with_threads(3),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unbounded_laws_are_compressed() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        let lo = unit_to_physical(&d, 0.0);
        assert!((lo - d.quantile(TAIL_COMPRESSION).unwrap()).abs() < 1e-12);
        let u = Distribution::uniform(2.0, 4.0).unwrap();
        assert_eq!((unit_to_physical(&u, 0.0), unit_to_physical(&u, 1.0)), (2.0, 4.0));
    }
}
