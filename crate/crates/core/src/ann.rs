//! One-hidden-layer perceptron surrogate.
//!
//! Inputs and output are mapped affinely onto `[-1, 1]` with the training
//! extremes, the hidden layer uses `tanh` and the output unit is linear. Each
//! training session draws its own learn/validation split and initial weights,
//! minimises the quadratic loss on the learn part with iRprop and stops once the
//! validation loss has not improved for `patience` epochs. The weights with the
//! lowest validation loss over all sessions are kept.

use thiserror::Error;

use crate::dataserver::{DataTable, TableError};
use crate::model::EvalContext;
use crate::random::RandomStream;
use crate::textfmt::{join_f64, KeyLines};

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("{found} training samples, at least {needed} needed")]
    TooFewSamples { needed: usize, found: usize },
    #[error("loss became non-finite during training")]
    NonFiniteLoss,
    #[error("expected {expected} inputs, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

pub const MIN_SAMPLES: usize = 10;

/// `c (e^{kx} - 1) / (e^{kx} + 1) + r`; `(1, 2, 0)` is `tanh`, `(1/2, 1, 1/2)` the logistic function.
pub fn sigmoid_family(c: f64, k: f64, r: f64, x: f64) -> f64 {
    // (e^u - 1)/(e^u + 1) = tanh(u/2), which avoids overflow for large |x|.
    c * (0.5 * k * x).tanh() + r
}

pub fn activation_tanh(x: f64) -> f64 {
    x.tanh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnSpec {
    pub n_hidden: usize,
    pub n_splits: usize,
    pub n_inits: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl AnnSpec {
    pub fn new(n_hidden: usize) -> Self {
        Self {
            n_hidden,
            n_splits: 5,
            n_inits: 10,
            max_epochs: 2000,
            patience: 100,
        }
    }

    pub fn validate(&self) -> Result<(), AnnError> {
        if self.n_hidden == 0 {
            return Err(AnnError::InvalidSpec("n_hidden must be at least 1".into()));
        }
        if self.n_splits == 0 || self.n_inits == 0 {
            return Err(AnnError::InvalidSpec("n_splits and n_inits must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(AnnError::InvalidSpec("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Affine map of `[min, max]` onto `[-1, 1]`. A degenerate range maps to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        if self.max > self.min {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }

    pub fn from_unit(&self, z: f64) -> f64 {
        self.min + 0.5 * (z + 1.0) * (self.max - self.min)
    }
}

/// Weights of the network acting on normalised values.
///
/// `hidden[j] = [b_j, w_j1, ..., w_jn]` and `output = [b, v_1, ..., v_H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Network {
    pub fn zeros(n_inputs: usize, n_hidden: usize) -> Self {
        Self {
            hidden: vec![vec![0.0; n_inputs + 1]; n_hidden],
            output: vec![0.0; n_hidden + 1],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.hidden[0].len() - 1
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_hidden() * (self.n_inputs() + 2) + 1
    }

    fn random(n_inputs: usize, n_hidden: usize, rs: &mut RandomStream) -> Self {
        let mut net = Self::zeros(n_inputs, n_hidden);
        let a = 1.0 / ((n_inputs + 1) as f64).sqrt();
        for row in &mut net.hidden {
            for w in row.iter_mut() {
                *w = rs.uniform_in(-a, a);
            }
        }
        let b = 1.0 / ((n_hidden + 1) as f64).sqrt();
        for w in &mut net.output {
            *w = rs.uniform_in(-b, b);
        }
        net
    }

    pub fn forward(&self, z: &[f64]) -> f64 {
        let mut s = self.output[0];
        for (row, v) in self.hidden.iter().zip(&self.output[1..]) {
            let a = row[0] + row[1..].iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
            s += v * a.tanh();
        }
        s
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.hidden.iter().flatten().copied().collect();
        p.extend_from_slice(&self.output);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let w = self.n_inputs() + 1;
        for (j, row) in self.hidden.iter_mut().enumerate() {
            row.copy_from_slice(&p[j * w..(j + 1) * w]);
        }
        let off = self.n_hidden() * w;
        self.output.copy_from_slice(&p[off..]);
    }

    /// Half the sum of squared errors, `1/2 sum (t - y)^2`.
    pub fn loss(&self, z: &[Vec<f64>], t: &[f64]) -> f64 {
        0.5 * z
            .iter()
            .zip(t)
            .map(|(x, ti)| (self.forward(x) - ti).powi(2))
            .sum::<f64>()
    }

    /// Loss and its gradient with respect to `params()`.
    pub fn loss_and_gradient(&self, z: &[Vec<f64>], t: &[f64]) -> (f64, Vec<f64>) {
        let n_in = self.n_inputs();
        let w = n_in + 1;
        let mut grad = vec![0.0; self.n_params()];
        let off = self.n_hidden() * w;
        let mut loss = 0.0;
        let mut h = vec![0.0; self.n_hidden()];
        for (x, ti) in z.iter().zip(t) {
            let mut y = self.output[0];
            for (j, row) in self.hidden.iter().enumerate() {
                let a = row[0] + row[1..].iter().zip(x).map(|(w, xk)| w * xk).sum::<f64>();
                h[j] = a.tanh();
                y += self.output[j + 1] * h[j];
            }
            let r = y - ti;
            loss += 0.5 * r * r;
            grad[off] += r;
            for j in 0..self.n_hidden() {
                grad[off + j + 1] += r * h[j];
                let d = r * self.output[j + 1] * (1.0 - h[j] * h[j]);
                grad[j * w] += d;
                for k in 0..n_in {
                    grad[j * w + 1 + k] += d * x[k];
                }
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    pub input_names: Vec<String>,
    pub output: String,
    pub input_scaling: Vec<Scaling>,
    pub output_scaling: Scaling,
    pub network: Network,
    /// Mean squared validation error of the kept weights, in normalised units.
    pub validation_loss: f64,
}

impl AnnModel {
    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, AnnError> {
        if x.len() != self.n_inputs() {
            return Err(AnnError::DimensionMismatch {
                expected: self.n_inputs(),
                found: x.len(),
            });
        }
        let z: Vec<f64> = x.iter().zip(&self.input_scaling).map(|(v, s)| s.to_unit(*v)).collect();
        Ok(self.output_scaling.from_unit(self.network.forward(&z)))
    }

    pub fn predict(&self, points: &DataTable) -> Result<Vec<f64>, AnnError> {
        let rows = points
            .rows_of(&self.input_names)
            .map_err(|e| AnnError::ColumnMismatch(e.to_string()))?;
        rows.iter().map(|r| self.forward(r)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("uqkit-ann 1\n");
        s += &format!("output {}\n", self.output);
        s += &format!("inputs {}\n", self.input_names.join(" "));
        let mins: Vec<f64> = self.input_scaling.iter().map(|c| c.min).collect();
        let maxs: Vec<f64> = self.input_scaling.iter().map(|c| c.max).collect();
        s += &format!("input_min {}\n", join_f64(&mins));
        s += &format!("input_max {}\n", join_f64(&maxs));
        s += &format!(
            "output_range {}\n",
            join_f64(&[self.output_scaling.min, self.output_scaling.max])
        );
        s += &format!("hidden {}\n", self.network.n_hidden());
        for row in &self.network.hidden {
            s += &format!("w {}\n", join_f64(row));
        }
        s += &format!("v {}\n", join_f64(&self.network.output));
        s += &format!("validation_loss {}\n", join_f64(&[self.validation_loss]));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, AnnError> {
        Self::parse_text(text).map_err(AnnError::Format)
    }

    fn parse_text(text: &str) -> Result<Self, String> {
        let mut k = KeyLines::new(text);
        if k.expect("uqkit-ann")? != "1" {
            return Err("unsupported version".into());
        }
        let output = k.expect("output")?.to_string();
        let input_names: Vec<String> = k.expect("inputs")?.split_whitespace().map(String::from).collect();
        let n = input_names.len();
        if n == 0 {
            return Err("no inputs".into());
        }
        let mins = k.expect_f64s("input_min", n)?;
        let maxs = k.expect_f64s("input_max", n)?;
        let out = k.expect_f64s("output_range", 2)?;
        let n_hidden = k.expect_usize("hidden")?;
        if n_hidden == 0 {
            return Err("no hidden units".into());
        }
        let mut network = Network::zeros(n, n_hidden);
        for row in &mut network.hidden {
            *row = k.expect_f64s("w", n + 1)?;
        }
        network.output = k.expect_f64s("v", n_hidden + 1)?;
        let validation_loss = k.expect_f64("validation_loss")?;
        k.finish()?;
        Ok(Self {
            input_names,
            output,
            input_scaling: mins
                .iter()
                .zip(&maxs)
                .map(|(&min, &max)| Scaling { min, max })
                .collect(),
            output_scaling: Scaling {
                min: out[0],
                max: out[1],
            },
            network,
            validation_loss,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AnnError> {
        std::fs::write(path, self.to_text()).map_err(|e| AnnError::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AnnError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnnError::Format(e.to_string()))?;
        Self::from_text(&text)
    }
}

const RPROP_GROW: f64 = 1.2;
const RPROP_SHRINK: f64 = 0.5;
const RPROP_STEP_MIN: f64 = 1e-8;
const RPROP_STEP_MAX: f64 = 1.0;
const RPROP_STEP_INIT: f64 = 0.05;

/// Outcome of one training session.
#[derive(Debug, Clone)]
pub struct Session {
    pub network: Network,
    pub best_validation: f64,
    /// Validation loss (mean squared error, normalised units) after every epoch.
    pub history: Vec<f64>,
}

fn mean_sq(net: &Network, z: &[Vec<f64>], t: &[f64]) -> f64 {
    2.0 * net.loss(z, t) / t.len() as f64
}

/// Trains one network from `init` with iRprop and early stopping.
pub fn train_session(
    init: Network,
    learn: (&[Vec<f64>], &[f64]),
    valid: (&[Vec<f64>], &[f64]),
    max_epochs: usize,
    patience: usize,
) -> Result<Session, AnnError> {
    let mut net = init;
    let mut params = net.params();
    let mut steps = vec![RPROP_STEP_INIT; params.len()];
    let mut prev = vec![0.0; params.len()];
    let mut best = (mean_sq(&net, valid.0, valid.1), net.clone());
    if !best.0.is_finite() {
        return Err(AnnError::NonFiniteLoss);
    }
    let mut history = Vec::with_capacity(max_epochs);
    let mut since_best = 0;
    for _ in 0..max_epochs {
        let (loss, grad) = net.loss_and_gradient(learn.0, learn.1);
        if !loss.is_finite() {
            return Err(AnnError::NonFiniteLoss);
        }
        for i in 0..params.len() {
            let s = grad[i] * prev[i];
            let g = if s > 0.0 {
                steps[i] = (steps[i] * RPROP_GROW).min(RPROP_STEP_MAX);
                grad[i]
            } else if s < 0.0 {
                steps[i] = (steps[i] * RPROP_SHRINK).max(RPROP_STEP_MIN);
                0.0
            } else {
                grad[i]
            };
            if g != 0.0 {
                params[i] -= g.signum() * steps[i];
            }
            prev[i] = g;
        }
        net.set_params(&params);
        let v = mean_sq(&net, valid.0, valid.1);
        if !v.is_finite() {
            return Err(AnnError::NonFiniteLoss);
        }
        history.push(v);
        if v < best.0 {
            best = (v, net.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    Ok(Session {
        network: best.1,
        best_validation: best.0,
        history,
    })
}

/// Result of `train_ann` with the validation history of the winning session.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: AnnModel,
    pub history: Vec<f64>,
    /// Index of the winning session, `split * n_inits + init`.
    pub session: usize,
}

/// Trains `spec.n_splits * spec.n_inits` sessions. Split `s` uses substream
/// `s` of a stream seeded from `rs`, and initialisation `i` of split `s` uses
/// substream `n_splits + s * n_inits + i`, so the result does not depend on
/// the thread count.
pub fn train_ann(
    train: &DataTable,
    inputs: &[&str],
    output: &str,
    spec: &AnnSpec,
    rs: &mut RandomStream,
    ctx: &EvalContext,
) -> Result<Training, AnnError> {
    spec.validate()?;
    let rows = train
        .rows_of(inputs)
        .map_err(|e| AnnError::ColumnMismatch(e.to_string()))?;
    let y = train
        .column(output)
        .map_err(|e| AnnError::ColumnMismatch(e.to_string()))?;
    let n = rows.len();
    if n < MIN_SAMPLES {
        return Err(AnnError::TooFewSamples {
            needed: MIN_SAMPLES,
            found: n,
        });
    }
    let n_in = inputs.len();
    let input_scaling: Vec<Scaling> = (0..n_in)
        .map(|k| Scaling::fit(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let output_scaling = Scaling::fit(y);
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&input_scaling).map(|(v, s)| s.to_unit(*v)).collect())
        .collect();
    let t: Vec<f64> = y.iter().map(|v| output_scaling.to_unit(*v)).collect();

    let base = RandomStream::new(rs.next_u64());
    let n_learn = ((2 * n) as f64 / 3.0).round() as usize;
    let splits: Vec<Vec<usize>> = (0..spec.n_splits)
        .map(|s| base.substream(s as u64).permutation(n))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..spec.n_splits)
        .flat_map(|s| (0..spec.n_inits).map(move |i| (s, i)))
        .collect();
    let sessions = ctx.map(&jobs, |&(s, i)| {
        let perm = &splits[s];
        let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
            (
                idx.iter().map(|&k| z[k].clone()).collect(),
                idx.iter().map(|&k| t[k]).collect(),
            )
        };
        let (lz, lt) = pick(&perm[..n_learn]);
        let (vz, vt) = pick(&perm[n_learn..]);
        let mut init_rs = base.substream((spec.n_splits + s * spec.n_inits + i) as u64);
        let init = Network::random(n_in, spec.n_hidden, &mut init_rs);
        train_session(init, (&lz, &lt), (&vz, &vt), spec.max_epochs, spec.patience)
    });
    let mut best: Option<(usize, Session)> = None;
    for (k, s) in sessions.into_iter().enumerate() {
        let s = s?;
        if best.as_ref().is_none_or(|(_, b)| s.best_validation < b.best_validation) {
            best = Some((k, s));
        }
    }
    let (session, winner) = best.expect("at least one session");
    Ok(Training {
        model: AnnModel {
            input_names: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
            input_scaling,
            output_scaling,
            network: winner.network,
            validation_loss: winner.best_validation,
        },
        history: winner.history,
        session,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_family_special_cases() {
        assert_eq!(activation_tanh(0.0), 0.0);
        let mut rs = RandomStream::new(1);
        for _ in 0..200 {
            let x = rs.uniform_in(-20.0, 20.0);
            let direct = ((2.0 * x).exp() - 1.0) / ((2.0 * x).exp() + 1.0);
            assert!((sigmoid_family(1.0, 2.0, 0.0, x) - x.tanh()).abs() < 1e-15);
            assert!((direct - x.tanh()).abs() < 1e-15);
            let logistic = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid_family(0.5, 1.0, 0.5, x) - logistic).abs() < 1e-15);
        }
    }

    fn model_with(network: Network, n_in: usize) -> AnnModel {
        AnnModel {
            input_names: (0..n_in).map(|k| format!("x{k}")).collect(),
            output: "y".into(),
            input_scaling: vec![Scaling { min: 0.0, max: 2.0 }; n_in],
            output_scaling: Scaling { min: 10.0, max: 20.0 },
            network,
            validation_loss: 0.0,
        }
    }

    #[test]
    fn zero_weights_give_output_midpoint() {
        let m = model_with(Network::zeros(2, 3), 2);
        assert_eq!(m.forward(&[0.3, 1.7]).unwrap(), 15.0);
        assert!(matches!(m.forward(&[1.0]), Err(AnnError::DimensionMismatch { .. })));
    }

    #[test]
    fn hand_computed_forward_pass() {
        let net = Network {
            hidden: vec![vec![0.1, 0.5, -0.25]],
            output: vec![0.2, 0.8],
        };
        let m = model_with(net, 2);
        // x = (1.5, 0.5) normalises to (0.5, -0.5).
        let a: f64 = 0.1 + 0.5 * 0.5 - 0.25 * -0.5;
        let z = 0.2 + 0.8 * a.tanh();
        let want = 10.0 + 0.5 * (z + 1.0) * 10.0;
        assert!((m.forward(&[1.5, 0.5]).unwrap() - want).abs() < 1e-12);
        let s = Scaling::fit(&[3.0, -1.0, 7.0]);
        assert_eq!((s.to_unit(-1.0), s.to_unit(7.0)), (-1.0, 1.0));
    }

    fn random_problem(n_in: usize, n_hidden: usize, seed: u64) -> (Network, Vec<Vec<f64>>, Vec<f64>) {
        let mut rs = RandomStream::new(seed);
        let net = Network::random(n_in, n_hidden, &mut rs);
        let z: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..n_in).map(|_| rs.uniform_in(-1.0, 1.0)).collect())
            .collect();
        let t: Vec<f64> = (0..7).map(|_| rs.uniform_in(-1.0, 1.0)).collect();
        (net, z, t)
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, (n_in, n_hidden)) in [(1, 1), (2, 3), (3, 4), (1, 4)].into_iter().enumerate() {
            let (net, z, t) = random_problem(n_in, n_hidden, seed as u64);
            let (_, g) = net.loss_and_gradient(&z, &t);
            let p = net.params();
            for i in 0..p.len() {
                let h = 1e-6;
                let mut a = net.clone();
                let mut q = p.clone();
                q[i] += h;
                a.set_params(&q);
                let lp = a.loss(&z, &t);
                q[i] -= 2.0 * h;
                a.set_params(&q);
                let lm = a.loss(&z, &t);
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3),
                    "param {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn hidden_permutation_invariance() {
        let (net, z, _) = random_problem(3, 4, 9);
        let order = [2, 0, 3, 1];
        let permuted = Network {
            hidden: order.iter().map(|&j| net.hidden[j].clone()).collect(),
            output: std::iter::once(net.output[0])
                .chain(order.iter().map(|&j| net.output[j + 1]))
                .collect(),
        };
        for x in &z {
            // Summation order changes, so compare to rounding.
            assert!((net.forward(x) - permuted.forward(x)).abs() < 1e-15);
        }
    }

    fn table(n: usize, f: impl Fn(f64) -> f64, seed: u64) -> DataTable {
        let mut rs = RandomStream::new(seed);
        let x: Vec<f64> = (0..n).map(|_| rs.uniform()).collect();
        let y = x.iter().map(|&v| f(v)).collect();
        DataTable::from_columns([("x", x), ("y", y)]).unwrap()
    }

    #[test]
    fn constant_target() {
        let t = table(20, |_| 4.0, 1);
        let spec = AnnSpec {
            max_epochs: 200,
            n_splits: 1,
            n_inits: 1,
            ..AnnSpec::new(2)
        };
        let tr = train_ann(
            &t,
            &["x"],
            "y",
            &spec,
            &mut RandomStream::new(3),
            &EvalContext::serial(),
        )
        .unwrap();
        assert!(tr.model.validation_loss < 1e-6);
        assert!((tr.model.forward(&[0.5]).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn affine_target_and_early_stopping_record() {
        let t = table(30, |x| 3.0 * x - 1.0, 2);
        let spec = AnnSpec {
            n_splits: 2,
            n_inits: 3,
            ..AnnSpec::new(2)
        };
        let tr = train_ann(
            &t,
            &["x"],
            "y",
            &spec,
            &mut RandomStream::new(4),
            &EvalContext::serial(),
        )
        .unwrap();
        let test = table(200, |x| 3.0 * x - 1.0, 5);
        let pred = tr.model.predict(&test).unwrap();
        let r2 = crate::dataserver::r_squared(test.column("y").unwrap(), &pred);
        assert!(r2 > 0.999, "{r2}");
        let min_hist = tr.history.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(tr.model.validation_loss <= min_hist);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let t = table(25, |x| (4.0 * x).sin(), 6);
        let spec = AnnSpec {
            n_splits: 2,
            n_inits: 2,
            max_epochs: 300,
            ..AnnSpec::new(3)
        };
        let a = train_ann(
            &t,
            &["x"],
            "y",
            &spec,
            &mut RandomStream::new(7),
            &EvalContext::serial(),
        )
        .unwrap();
        let b = train_ann(
            &t,
            &["x"],
            "y",
            &spec,
            &mut RandomStream::new(7),
            &EvalContext::with_threads(3),
        )
        .unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn too_few_samples_and_bad_spec() {
        let t = table(9, |x| x, 1);
        let r = train_ann(
            &t,
            &["x"],
            "y",
            &AnnSpec::new(2),
            &mut RandomStream::new(1),
            &EvalContext::serial(),
        );
        assert!(matches!(r, Err(AnnError::TooFewSamples { .. })));
        assert!(AnnSpec::new(0).validate().is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (net, z, _) = random_problem(2, 3, 11);
        let m = model_with(net, 2);
        let text = m.to_text();
        let back = AnnModel::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        for x in &z {
            let x: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
            assert_eq!(m.forward(&x).unwrap().to_bits(), back.forward(&x).unwrap().to_bits());
        }
        assert!(AnnModel::from_text(&text.replacen("w ", "w x", 1)).is_err());
        assert!(AnnModel::from_text(&text[..text.len() / 2]).is_err());
    }
}
