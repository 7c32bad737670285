//! Optimisation engines: Nelder-Mead simplex, a Pareto-ranking evolutionary
//! algorithm, calibration distances, and efficient global optimisation (EGO)
//! driven by a kriging surrogate and the expected improvement.

use thiserror::Error;

use crate::design::lhs_unit;
use crate::gp::{fit_gp_arrays, GpConfig, GpError};
use crate::model::{EvalContext, ModelError};
use crate::random::RandomStream;
use crate::special::{normal_cdf, normal_pdf};

#[derive(Debug, Error)]
pub enum OptError {
    #[error("objective is not finite at {0:?}")]
    NonFiniteObjective(Vec<f64>),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("surrogate fit failed at iteration {iteration}: {source}")]
    GpFitFailure {
        iteration: usize,
        #[source]
        source: GpError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Best point and value after each iteration.
    pub trace: Vec<(Vec<f64>, f64)>,
}

/// Downhill simplex with reflection 1, expansion 2, contraction 0.5 and
/// shrink 0.5. Stops when the spread of the simplex values falls below `tol`
/// or when `max_evals` evaluations have been spent.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    tol: f64,
    max_evals: usize,
) -> Result<NelderMeadResult, OptError> {
    let n = x0.len();
    if n == 0 || step.len() != n {
        return Err(OptError::DimensionMismatch(format!(
            "start point has {n} coordinates, step has {}",
            step.len()
        )));
    }
    if step.iter().any(|s| !(*s > 0.0)) {
        return Err(OptError::InvalidOption("simplex steps must be positive".into()));
    }
    let mut n_evals = 0;
    let mut eval = |x: &[f64], n_evals: &mut usize| -> Result<f64, OptError> {
        *n_evals += 1;
        let v = f(x);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(OptError::NonFiniteObjective(x.to_vec()));
        }
        Ok(v)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut n_evals)?));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut n_evals)?;
        simplex.push((x, v));
    }
    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].clone());
        if simplex[n].1 - simplex[0].1 < tol {
            converged = true;
            break;
        }
        if n_evals >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut n_evals)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut n_evals)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < simplex[n].1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut n_evals)?;
            (xc, fc, fc <= fr)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut n_evals)?;
            (xc, fc, fc < simplex[n].1)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = eval(&x, &mut n_evals)?;
            *vertex = (x, v);
        }
    }
    let (x, fbest) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        x,
        f: fbest,
        n_evals,
        converged,
        trace,
    })
}

/// `sqrt((1/m) sum w_j (ref_j - sim_j)^2)` with unit weights when absent.
pub fn rms_distance(reference: &[f64], simulated: &[f64], weights: Option<&[f64]>) -> Result<f64, OptError> {
    let m = reference.len();
    if simulated.len() != m {
        return Err(OptError::LengthMismatch {
            expected: m,
            found: simulated.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != m {
            return Err(OptError::LengthMismatch {
                expected: m,
                found: w.len(),
            });
        }
    }
    let s: f64 = (0..m)
        .map(|j| weights.map_or(1.0, |w| w[j]) * (reference[j] - simulated[j]).powi(2))
        .sum();
    Ok((s / m as f64).sqrt())
}

/// Calibration objective comparing a simulator's outputs with reference values.
pub struct RmsObjective<S> {
    reference: Vec<f64>,
    weights: Option<Vec<f64>>,
    simulator: S,
}

impl<S: Fn(&[f64]) -> Result<Vec<f64>, ModelError>> RmsObjective<S> {
    pub fn new(reference: Vec<f64>, simulator: S, weights: Option<Vec<f64>>) -> Result<Self, OptError> {
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(OptError::InvalidOption("reference values must be finite".into()));
        }
        if let Some(w) = &weights {
            if w.len() != reference.len() {
                return Err(OptError::LengthMismatch {
                    expected: reference.len(),
                    found: w.len(),
                });
            }
            if w.iter().any(|v| !(*v > 0.0)) {
                return Err(OptError::InvalidOption("weights must be positive".into()));
            }
        }
        Ok(Self {
            reference,
            weights,
            simulator,
        })
    }

    pub fn eval(&self, params: &[f64]) -> Result<f64, OptError> {
        let sim = (self.simulator)(params)?;
        rms_distance(&self.reference, &sim, self.weights.as_deref())
    }
}

/// `true` when `a` is no worse than `b` everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Number of candidates dominating each candidate.
pub fn pareto_rank(objectives: &[Vec<f64>]) -> Vec<usize> {
    objectives
        .iter()
        .map(|a| objectives.iter().filter(|b| dominates(b, a)).count())
        .collect()
}

/// Crowding distance within a group: per objective, the gap between the two
/// neighbours normalised by the group's range, summed; extremes are infinite.
pub fn crowding_distance(objectives: &[&[f64]]) -> Vec<f64> {
    let n = objectives.len();
    let mut d = vec![0.0; n];
    if n == 0 {
        return d;
    }
    for m in 0..objectives[0].len() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| objectives[a][m].total_cmp(&objectives[b][m]));
        let lo = objectives[idx[0]][m];
        let hi = objectives[idx[n - 1]][m];
        d[idx[0]] = f64::INFINITY;
        d[idx[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in idx.windows(3) {
                d[w[1]] += (objectives[w[2]][m] - objectives[w[0]][m]) / (hi - lo);
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MooOptions {
    pub pop_size: usize,
    pub keep_fraction: f64,
    pub max_evals: usize,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
}

impl Default for MooOptions {
    fn default() -> Self {
        Self {
            pop_size: 50,
            keep_fraction: 0.5,
            max_evals: 5000,
            eta_crossover: 10.0,
            eta_mutation: 20.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MooResult {
    pub pareto_set: Vec<Vec<f64>>,
    pub pareto_front: Vec<Vec<f64>>,
    pub converged: bool,
    pub generations: usize,
    pub n_evals: usize,
    /// Every evaluated candidate with the generation it belongs to; ranks are
    /// those computed within that generation's population.
    pub history: Vec<(usize, Candidate)>,
    pub final_population: Vec<Candidate>,
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<(), OptError> {
    if bounds.is_empty() {
        return Err(OptError::InvalidBounds("no decision variables".into()));
    }
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(OptError::InvalidBounds(format!("dimension {k}: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Simulated binary crossover of two parents, one child returned.
fn sbx(a: &[f64], b: &[f64], bounds: &[(f64, f64)], eta: f64, rs: &mut RandomStream) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(bounds)
        .map(|((&p1, &p2), &(lo, hi))| {
            let u = rs.uniform();
            let beta = if u <= 0.5 {
                (2.0 * u).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
            };
            let c = if rs.uniform() < 0.5 {
                0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
            } else {
                0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
            };
            c.clamp(lo, hi)
        })
        .collect()
}

/// Polynomial mutation, each coordinate with probability `1/n`.
fn mutate(x: &mut [f64], bounds: &[(f64, f64)], eta: f64, rs: &mut RandomStream) {
    let p = 1.0 / x.len() as f64;
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        if rs.uniform() < p {
            let u = rs.uniform();
            let delta = if u < 0.5 {
                (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
            } else {
                1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
            };
            *v = (*v + delta * (hi - lo)).clamp(lo, hi);
        }
    }
}

/// Orders a population by rank, then by decreasing crowding within a rank.
fn selection_order(pop: &[Candidate]) -> Vec<usize> {
    let mut crowd = vec![0.0; pop.len()];
    let max_rank = pop.iter().map(|c| c.rank).max().unwrap_or(0);
    for r in 0..=max_rank {
        let members: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].rank == r).collect();
        let objs: Vec<&[f64]> = members.iter().map(|&i| pop[i].objectives.as_slice()).collect();
        for (i, d) in members.iter().zip(crowding_distance(&objs)) {
            crowd[*i] = d;
        }
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| pop[a].rank.cmp(&pop[b].rank).then(crowd[b].total_cmp(&crowd[a])));
    order
}

/// Evolutionary multi-objective minimisation.
///
/// Each generation ranks the population by domination count. The run has
/// converged when every candidate is non-dominated. Otherwise the best
/// `keep_fraction` of the population is kept (rank first, crowding second) and
/// the rest is regenerated from the kept candidates by crossover and mutation.
/// Running out of budget ends the run with `converged = false`.
pub fn evolve_moo<F>(
    objectives: F,
    bounds: &[(f64, f64)],
    opts: &MooOptions,
    rs: &mut RandomStream,
    ctx: &EvalContext,
) -> Result<MooResult, OptError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
{
    check_bounds(bounds)?;
    if opts.pop_size < 4 {
        return Err(OptError::InvalidOption("population size must be at least 4".into()));
    }
    if !(opts.keep_fraction > 0.0 && opts.keep_fraction < 1.0) {
        return Err(OptError::InvalidOption("keep fraction must lie in (0, 1)".into()));
    }
    let n = opts.pop_size;
    let dim = bounds.len();
    let evaluate = |xs: Vec<Vec<f64>>| -> Result<Vec<Candidate>, OptError> {
        let objs = ctx.map(&xs, |x| objectives(x));
        xs.into_iter()
            .zip(objs)
            .map(|(x, o)| {
                if o.iter().any(|v| v.is_nan()) {
                    return Err(OptError::NonFiniteObjective(x));
                }
                Ok(Candidate {
                    x,
                    objectives: o,
                    rank: 0,
                })
            })
            .collect()
    };
    let init: Vec<Vec<f64>> = lhs_unit(n, dim, rs)
        .into_iter()
        .map(|u| u.iter().zip(bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect())
        .collect();
    let mut pop = evaluate(init)?;
    let mut n_evals = n;
    let mut history = Vec::new();
    let mut generation = 0;
    let n_keep = ((opts.keep_fraction * n as f64).round() as usize).clamp(2, n - 1);
    let converged = loop {
        let objs: Vec<Vec<f64>> = pop.iter().map(|c| c.objectives.clone()).collect();
        for (c, r) in pop.iter_mut().zip(pareto_rank(&objs)) {
            c.rank = r;
        }
        history.extend(pop.iter().map(|c| (generation, c.clone())));
        if pop.iter().all(|c| c.rank == 0) {
            break true;
        }
        let n_new = n - n_keep;
        if n_evals + n_new > opts.max_evals {
            break false;
        }
        let order = selection_order(&pop);
        let kept: Vec<Candidate> = order[..n_keep].iter().map(|&i| pop[i].clone()).collect();
        // Binary tournament on the kept set; lower position in `kept` wins.
        let tournament = |rs: &mut RandomStream| -> usize {
            let a = rs.below(n_keep);
            let b = rs.below(n_keep);
            a.min(b)
        };
        let children: Vec<Vec<f64>> = (0..n_new)
            .map(|_| {
                let p1 = tournament(rs);
                let p2 = tournament(rs);
                let mut c = sbx(&kept[p1].x, &kept[p2].x, bounds, opts.eta_crossover, rs);
                mutate(&mut c, bounds, opts.eta_mutation, rs);
                c
            })
            .collect();
        let children = evaluate(children)?;
        n_evals += n_new;
        generation += 1;
        pop = kept.into_iter().chain(children).collect();
    };
    let front: Vec<&Candidate> = pop.iter().filter(|c| c.rank == 0).collect();
    Ok(MooResult {
        pareto_set: front.iter().map(|c| c.x.clone()).collect(),
        pareto_front: front.iter().map(|c| c.objectives.clone()).collect(),
        converged,
        generations: generation,
        n_evals,
        history,
        final_population: pop,
    })
}

/// `E[max(f_min - Y, 0)]` for `Y ~ Normal(mean, std^2)`.
pub fn expected_improvement(mean: f64, std: f64, f_min: f64) -> f64 {
    let d = f_min - mean;
    if !(std > 0.0) {
        return d.max(0.0);
    }
    let u = d / std;
    (d * normal_cdf(u) + std * normal_pdf(u)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    /// Number of points added to the initial design.
    pub budget: usize,
    pub gp: GpConfig,
    pub inner: MooOptions,
}

impl EgoConfig {
    pub fn new(budget: usize, gp: GpConfig) -> Self {
        Self {
            budget,
            gp,
            inner: MooOptions {
                pop_size: 40,
                keep_fraction: 0.5,
                max_evals: 2000,
                ..MooOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoStep {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub expected_improvement: f64,
    pub f_best: f64,
    pub n_train: usize,
}

#[derive(Debug, Clone)]
pub struct EgoResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub trace: Vec<EgoStep>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

const DUPLICATE_DISTANCE: f64 = 1e-10;
const JITTER: f64 = 1e-6;

fn argmin(y: &[f64]) -> usize {
    (0..y.len()).fold(0, |b, i| if y[i] < y[b] { i } else { b })
}

/// Efficient global optimisation.
///
/// At each iteration a kriging model is fitted on the current points (inputs
/// scaled to the unit box), the expected improvement is maximised with
/// `evolve_moo`, the objective is evaluated at the winner and the point is
/// appended. Points closer than `1e-10` (unit scale) to an existing point are
/// moved by a uniform jitter of `1e-6` of the range. The loop stops after
/// `budget` added points.
pub fn ego<F>(
    objective: F,
    bounds: &[(f64, f64)],
    initial: &[Vec<f64>],
    config: &EgoConfig,
    rs: &mut RandomStream,
    ctx: &EvalContext,
) -> Result<EgoResult, OptError>
where
    F: Fn(&[f64]) -> Result<f64, ModelError> + Sync,
{
    check_bounds(bounds)?;
    let dim = bounds.len();
    if initial.len() < 4 {
        return Err(OptError::InvalidOption(
            "the initial design needs at least 4 points".into(),
        ));
    }
    for x in initial {
        if x.len() != dim {
            return Err(OptError::DimensionMismatch(format!(
                "initial point has {} coordinates",
                x.len()
            )));
        }
        if x.iter().zip(bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
            return Err(OptError::InvalidBounds(format!(
                "initial point {x:?} lies outside the bounds"
            )));
        }
    }
    let to_unit = |x: &[f64]| -> Vec<f64> { x.iter().zip(bounds).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect() };
    let from_unit = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect() };
    let mut xs: Vec<Vec<f64>> = initial.to_vec();
    let mut ys: Vec<f64> = ctx
        .map(initial, |x| objective(x))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let names: Vec<String> = (0..dim).map(|k| format!("u{k}")).collect();
    let unit_box = vec![(0.0, 1.0); dim];
    let mut trace = Vec::with_capacity(config.budget);
    for iteration in 1..=config.budget {
        let units: Vec<Vec<f64>> = xs.iter().map(|x| to_unit(x)).collect();
        let gp = fit_gp_arrays(names.clone(), "y", units.clone(), ys.clone(), &config.gp, rs)
            .map_err(|source| OptError::GpFitFailure { iteration, source })?;
        let f_min = ys[argmin(&ys)];
        let neg_ei = |u: &[f64]| {
            let (m, s) = gp.predict_point(u);
            vec![-expected_improvement(m, s, f_min)]
        };
        let moo = evolve_moo(neg_ei, &unit_box, &config.inner, rs, ctx)?;
        let best = argmin(&moo.pareto_front.iter().map(|o| o[0]).collect::<Vec<_>>());
        let mut u = moo.pareto_set[best].clone();
        let ei = -moo.pareto_front[best][0];
        let too_close = |u: &[f64]| {
            units
                .iter()
                .any(|p| p.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DUPLICATE_DISTANCE)
        };
        while too_close(&u) {
            for v in u.iter_mut() {
                *v = (*v + rs.uniform_in(-JITTER, JITTER)).clamp(0.0, 1.0);
            }
        }
        let x = from_unit(&u);
        let y = objective(&x)?;
        xs.push(x.clone());
        ys.push(y);
        trace.push(EgoStep {
            iteration,
            x,
            y,
            expected_improvement: ei,
            f_best: ys[argmin(&ys)],
            n_train: xs.len(),
        });
    }
    let b = argmin(&ys);
    Ok(EgoResult {
        x_best: xs[b].clone(),
        f_best: ys[b],
        trace,
        x: xs,
        y: ys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelFamily, Trend};

    #[test]
    fn nelder_mead_bowl_and_shifted_quadratic() {
        let r = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[1.0, 1.0], &[0.5, 0.5], 1e-12, 200).unwrap();
        assert!(r.f < 1e-8, "{r:?}");
        assert!(r.n_evals <= 200 + 3);
        let r = nelder_mead(
            |x| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            &[1.0, 1.0],
            1e-14,
            2000,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn nelder_mead_never_worse_than_start_and_rejects_nan() {
        let mut rs = RandomStream::new(1);
        for _ in 0..20 {
            let x0 = vec![rs.uniform_in(-3.0, 3.0), rs.uniform_in(-3.0, 3.0)];
            let f = |x: &[f64]| (x[0].sin() * 3.0 + x[1]).abs() + 0.1 * x[0].powi(2);
            let start_best = [x0.clone(), vec![x0[0] + 0.3, x0[1]], vec![x0[0], x0[1] + 0.3]]
                .iter()
                .map(|p| f(p))
                .fold(f64::INFINITY, f64::min);
            let r = nelder_mead(f, &x0, &[0.3, 0.3], 1e-10, 300).unwrap();
            assert!(r.f <= start_best);
        }
        assert!(matches!(
            nelder_mead(|_| f64::NAN, &[0.0], &[1.0], 1e-8, 10),
            Err(OptError::NonFiniteObjective(_))
        ));
    }

    #[test]
    fn rms_examples() {
        assert_eq!(rms_distance(&[1.0, 2.0], &[1.0, 2.0], None).unwrap(), 0.0);
        let v = rms_distance(&[3.0, 4.0], &[0.0, 0.0], None).unwrap();
        assert!((v - (12.5f64).sqrt()).abs() < 1e-15);
        let w = rms_distance(&[3.0, 4.0], &[0.0, 0.0], Some(&[2.0, 2.0])).unwrap();
        assert!((w / v - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            rms_distance(&[1.0], &[1.0, 2.0], None),
            Err(OptError::LengthMismatch { .. })
        ));
        let obj = RmsObjective::new(vec![1.0, 4.0], |p: &[f64]| Ok(vec![p[0], p[0] * p[0]]), None).unwrap();
        assert_eq!(obj.eval(&[2.0]).unwrap(), (0.5f64).sqrt());
    }

    #[test]
    fn pareto_rank_examples() {
        assert_eq!(pareto_rank(&[vec![1.0, 2.0]]), vec![0]);
        // (0, 0) is no worse than (2, 0) in both objectives and better in one.
        assert_eq!(
            pareto_rank(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]]),
            vec![0, 1, 1]
        );
        assert_eq!(
            pareto_rank(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]),
            vec![0, 2, 0]
        );
        let mut rs = RandomStream::new(2);
        let objs: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rs.uniform(), rs.uniform(), rs.uniform()])
            .collect();
        let ranks = pareto_rank(&objs);
        for (i, a) in objs.iter().enumerate() {
            let mut count = 0;
            for b in &objs {
                let le = (0..3).all(|k| b[k] <= a[k]);
                let lt = (0..3).any(|k| b[k] < a[k]);
                count += (le && lt) as usize;
            }
            assert_eq!(ranks[i], count);
        }
    }

    #[test]
    fn evolve_single_objective_clusters_at_minimum() {
        let opts = MooOptions {
            pop_size: 30,
            max_evals: 3000,
            ..MooOptions::default()
        };
        let r = evolve_moo(
            |x| vec![x.iter().map(|v| v * v).sum()],
            &[(-2.0, 2.0), (-2.0, 2.0)],
            &opts,
            &mut RandomStream::new(3),
            &EvalContext::serial(),
        )
        .unwrap();
        let kept = &r.final_population[..15];
        assert!(kept
            .iter()
            .all(|c| c.x.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-2));
    }

    #[test]
    fn evolve_two_objectives_covers_pareto_set() {
        let opts = MooOptions {
            pop_size: 40,
            max_evals: 4000,
            ..MooOptions::default()
        };
        let r = evolve_moo(
            |x| vec![x[0] * x[0], (x[0] - 1.0).powi(2)],
            &[(-1.0, 2.0)],
            &opts,
            &mut RandomStream::new(4),
            &EvalContext::serial(),
        )
        .unwrap();
        let set: Vec<f64> = r.pareto_set.iter().map(|x| x[0]).collect();
        let inside = set.iter().filter(|v| (0.0..=1.0).contains(*v)).count();
        assert!(inside as f64 >= 0.9 * set.len() as f64);
        let lo = set.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo >= 0.8, "{lo} {hi}");
        // The reported front is mutually non-dominated.
        assert!(pareto_rank(&r.pareto_front).iter().all(|&k| k == 0));
    }

    #[test]
    fn identical_population_converges_immediately() {
        let r = evolve_moo(
            |_| vec![1.0, 1.0],
            &[(0.0, 1.0)],
            &MooOptions::default(),
            &mut RandomStream::new(5),
            &EvalContext::serial(),
        )
        .unwrap();
        assert!(r.converged && r.generations == 0);
    }

    #[test]
    fn expected_improvement_values() {
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!((expected_improvement(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let mut rs = RandomStream::new(6);
        for _ in 0..50 {
            let (m, f) = (rs.uniform_in(-1.0, 1.0), rs.uniform_in(-1.0, 1.0));
            let s1 = rs.uniform_in(0.1, 1.0);
            let s2 = s1 + rs.uniform_in(0.01, 1.0);
            if m > f {
                assert!(expected_improvement(m, s2, f) > expected_improvement(m, s1, f));
            }
            let c = rs.uniform_in(-5.0, 5.0);
            let a = expected_improvement(m, s1, f);
            let b = expected_improvement(m + c, s1, f + c);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ego_best_is_monotone_on_a_bowl() {
        let f = |x: &[f64]| Ok((x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2));
        let init: Vec<Vec<f64>> = lhs_unit(8, 2, &mut RandomStream::new(7))
            .into_iter()
            .map(|u| vec![2.0 * u[0] - 1.0, 2.0 * u[1] - 1.0])
            .collect();
        let config = EgoConfig::new(6, GpConfig::new(KernelFamily::Matern52, Trend::Const));
        let r = ego(
            f,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &init,
            &config,
            &mut RandomStream::new(8),
            &EvalContext::serial(),
        )
        .unwrap();
        assert_eq!(r.trace.len(), 6);
        for (k, w) in r.trace.iter().enumerate() {
            assert_eq!(w.n_train, 8 + k + 1);
            assert!(w.expected_improvement >= 0.0);
        }
        assert!(r.trace.windows(2).all(|w| w[1].f_best <= w[0].f_best));
        assert!(r.f_best < 0.01);
    }
}
