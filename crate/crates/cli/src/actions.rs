//! One runner per subcommand. Every runner writes its results as tables in the
//! output directory under fixed file names.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use uqkit::ann::train_ann;
use uqkit::dataserver::{mean, mse, r_squared, read_table, variance, write_table_with_comments, Expr, TableError};
use uqkit::design::{generate_with_dependence, srs_unit, to_physical, DesignSpec};
use uqkit::gp::fit_gp;
use uqkit::heatmodel::{gauge_physical, make_model, HeatModel, MaterialParams, ModelSettings, ModelVariant};
use uqkit::optimizer::{ego, evolve_moo, nelder_mead, EgoConfig, RmsObjective};
use uqkit::pc::{fit_pc, fit_pc_auto, n_coefficients, PcInput};
use uqkit::sensitivity::{fast_first_order, morris, sobol_pick_freeze};
use uqkit::{DataTable, Distribution, EvalContext, Model, ModelError, RandomStream};

use crate::config::{
    Action, Diagnostic, EgoObjective, ModelCfg, PcDegree, ReferenceCfg, SensitivityMethod, Study, SurrogateFamily,
    MATERIAL_NAMES,
};

#[derive(Debug)]
pub enum CliError {
    Config(Vec<Diagnostic>),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn config(section: &str, key: &str, message: impl Into<String>) -> Self {
        CliError::Config(vec![Diagnostic::new(section, key, message)])
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(d) => {
                let lines: Vec<String> = d.iter().map(|d| format!("config error: {d}")).collect();
                write!(f, "{}", lines.join("\n"))
            }
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn table_error(e: TableError) -> CliError {
    match e {
        TableError::IoFailure { .. } => CliError::Io(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

/// The only place where files are created. Names are fixed by the runners and
/// never contain a path separator, so nothing lands outside `dir`.
pub struct OutputDir {
    dir: PathBuf,
    rename: Option<(&'static str, String)>,
    written: Vec<PathBuf>,
}

impl OutputDir {
    fn create(dir: &Path, rename: Option<(&'static str, String)>) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            rename,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        let name = match &self.rename {
            Some((from, to)) if *from == name => to.as_str(),
            _ => name,
        };
        assert!(!name.contains(['/', '\\']) && name != "." && name != ".." && !name.is_empty());
        self.dir.join(name)
    }

    fn table(&mut self, name: &str, table: &DataTable, comment: &str) -> Result<()> {
        self.table_with(name, table, &[comment.to_string()])
    }

    fn table_with(&mut self, name: &str, table: &DataTable, comments: &[String]) -> Result<()> {
        let path = self.path(name);
        write_table_with_comments(table, &path, comments).map_err(table_error)?;
        self.written.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

fn read_input(path: &Path, section: &str, key: &str) -> Result<DataTable> {
    read_table(path).map_err(|e| match e {
        TableError::IoFailure { .. } => CliError::Io(e.to_string()),
        other => CliError::config(section, key, format!("{}: {other}", path.display())),
    })
}

fn table(columns: Vec<(String, Vec<f64>)>) -> Result<DataTable> {
    DataTable::from_columns(columns).map_err(runtime)
}

/// Runs `action` and returns the files it wrote. `primary` renames the main
/// result file of the action; it must be a bare file name.
pub fn run(action: Action, study: &Study, ctx: &EvalContext, primary: Option<&str>) -> Result<Vec<PathBuf>> {
    if let Some(p) = primary {
        if p.is_empty() || p == "." || p == ".." || p.contains(['/', '\\']) {
            return Err(CliError::Config(vec![Diagnostic::new(
                "output",
                "",
                format!("`{p}` is not a file name"),
            )]));
        }
    }
    let rename = primary.map(|p| (action.primary_output(), p.to_string()));
    let mut out = OutputDir::create(&study.output_dir, rename)?;
    match action {
        Action::Sample => sample(study, &mut out)?,
        Action::Model => model(study, ctx, &mut out)?,
        Action::Propagate => propagate(study, ctx, &mut out)?,
        Action::Surrogate => surrogate(study, ctx, &mut out)?,
        Action::Sensitivity => sensitivity(study, ctx, &mut out)?,
        Action::Calibrate => calibrate(study, &mut out)?,
        Action::Optimize => optimize(study, ctx, &mut out)?,
        Action::Ego => run_ego(study, ctx, &mut out)?,
    }
    Ok(out.written)
}

fn design(study: &Study) -> Result<DataTable> {
    let d = study.design.as_ref().expect("checked by requirements");
    let mut spec = DesignSpec::new(study.inputs.clone(), d.n, d.method, d.seed.unwrap_or(0));
    spec.maximin = Some(d.maximin);
    generate_with_dependence(&spec, &study.dependence).map_err(|e| CliError::config("design", "", e.to_string()))
}

fn model_cfg(study: &Study) -> (&ModelCfg, ModelVariant) {
    let m = study.model.as_ref().expect("checked by requirements");
    (m, m.variant.expect("checked by requirements"))
}

fn heat_model(variant: ModelVariant, settings: ModelSettings) -> Result<HeatModel> {
    make_model(variant, settings).map_err(|e| CliError::config("model", "", e.to_string()))
}

/// Inputs declared for the model, in the model's own order.
fn model_inputs(study: &Study, variant: ModelVariant) -> Vec<(String, Distribution)> {
    variant
        .input_names()
        .iter()
        .map(|n| {
            study
                .inputs
                .iter()
                .find(|(m, _)| m == n)
                .expect("checked by requirements")
                .clone()
        })
        .collect()
}

fn evaluate(model: &HeatModel, rows: &[Vec<f64>], ctx: &EvalContext) -> Result<Vec<f64>> {
    ctx.evaluate(model, rows).map_err(runtime)
}

fn sample(study: &Study, out: &mut OutputDir) -> Result<()> {
    let t = design(study)?;
    out.table("design.dat", &t, "uqkit sample: design of experiments")
}

/// Evaluates the model on `points`, once per time of the `times` key for the
/// physical variants (rows stacked, with a `time` column).
fn evaluate_table(study: &Study, points: &DataTable, ctx: &EvalContext, key: (&str, &str)) -> Result<DataTable> {
    let (m, variant) = model_cfg(study);
    let rows = points
        .rows_of(variant.input_names())
        .map_err(|e| CliError::config(key.0, key.1, e.to_string()))?;
    let times = match (&m.times, m.is_physical()) {
        (Some(t), true) => t.clone(),
        _ => {
            let y = evaluate(&heat_model(variant, m.settings)?, &rows, ctx)?;
            return points.clone().with_column(&m.output, y).map_err(runtime);
        }
    };
    let mut cols: Vec<(String, Vec<f64>)> = points
        .columns()
        .iter()
        .map(|c| (c.name().to_string(), Vec::new()))
        .collect();
    let mut time_col = Vec::new();
    let mut y_col = Vec::new();
    for &t in &times {
        let model = heat_model(variant, ModelSettings { time: t, ..m.settings })?;
        y_col.extend(evaluate(&model, &rows, ctx)?);
        for (c, src) in cols.iter_mut().zip(points.columns()) {
            c.1.extend_from_slice(src.values());
        }
        time_col.extend(std::iter::repeat_n(t, rows.len()));
    }
    cols.push(("time".into(), time_col));
    cols.push((m.output.clone(), y_col));
    table(cols)
}

fn model(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let (m, _) = model_cfg(study);
    let points = match &m.input {
        Some(p) => read_input(p, "model", "input")?,
        None => design(study)?,
    };
    let t = evaluate_table(study, &points, ctx, ("model", "input"))?;
    out.table("evaluations.dat", &t, "uqkit model: inputs and model output")
}

pub const PROPAGATE_TIMES: [f64; 11] = [
    0.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0,
];

fn propagate(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let (m, variant) = model_cfg(study);
    let points = design(study)?;
    let rows = points.rows_of(variant.input_names()).map_err(runtime)?;
    let times = m.times.clone().unwrap_or_else(|| PROPAGATE_TIMES.to_vec());
    let names: Vec<String> = points.names().iter().map(|s| s.to_string()).collect();
    let mut stacked: Vec<Vec<f64>> = vec![Vec::new(); names.len() + 3];
    let (mut sx, mut st, mut smean, mut sstd) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &x_ds in &m.depths {
        for &t in &times {
            let model = heat_model(
                variant,
                ModelSettings {
                    x_ds,
                    time: t,
                    ..m.settings
                },
            )?;
            let y = evaluate(&model, &rows, ctx)?;
            for (j, c) in points.columns().iter().enumerate() {
                stacked[j].extend_from_slice(c.values());
            }
            let k = names.len();
            stacked[k].extend(std::iter::repeat_n(x_ds, y.len()));
            stacked[k + 1].extend(std::iter::repeat_n(t, y.len()));
            sx.push(x_ds);
            st.push(t);
            smean.push(mean(&y));
            sstd.push(if y.len() > 1 { variance(&y).sqrt() } else { 0.0 });
            stacked[k + 2].extend(y);
        }
    }
    let mut cols_names = names.clone();
    cols_names.extend(["x_ds".to_string(), "time".to_string(), m.output.clone()]);
    let evaluations = table(cols_names.into_iter().zip(stacked).collect())?;
    let summary = table(vec![
        ("x_ds".into(), sx),
        ("time".into(), st),
        ("mean".into(), smean),
        ("std".into(), sstd),
    ])?;
    out.table("design.dat", &points, "uqkit propagate: design of experiments")?;
    out.table(
        "evaluations.dat",
        &evaluations,
        "uqkit propagate: every design point at every depth and time",
    )?;
    out.table(
        "summary.dat",
        &summary,
        "uqkit propagate: mean and standard deviation per depth and time",
    )
}

fn surrogate(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let sc = study.surrogate.as_ref().expect("checked by requirements");
    let output = sc
        .output
        .clone()
        .or_else(|| study.model.as_ref().map(|m| m.output.clone()))
        .ok_or_else(|| CliError::config("surrogate", "output", "missing"))?;
    let names: Vec<String> = sc
        .inputs
        .clone()
        .unwrap_or_else(|| study.inputs.iter().map(|(n, _)| n.clone()).collect());
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let train = match &sc.train {
        Some(p) => read_input(p, "surrogate", "train")?,
        None => {
            let t = evaluate_table(study, &design(study)?, ctx, ("surrogate", "train"))?;
            out.table("training.dat", &t, "uqkit surrogate: generated training set")?;
            t
        }
    };
    for n in name_refs.iter().copied().chain([output.as_str()]) {
        if train.column_index(n).is_none() {
            return Err(CliError::config(
                "surrogate",
                "inputs",
                format!("training table has no column `{n}`"),
            ));
        }
    }
    let test = match (&sc.test, sc.test_n) {
        (Some(p), _) => Some(read_input(p, "surrogate", "test")?),
        (None, 0) => None,
        (None, n) => {
            let mut rs = RandomStream::new(sc.seed.expect("checked by parser")).substream(1);
            let unit = srs_unit(n, study.inputs.len(), &mut rs);
            let pts = to_physical(&study.inputs, &unit).map_err(runtime)?;
            Some(evaluate_table(study, &pts, ctx, ("surrogate", "test_n"))?)
        }
    };
    let y_train = train.column(&output).map_err(runtime)?.to_vec();
    let mut metrics: Vec<(String, Vec<f64>)> = vec![("n_train".into(), vec![train.n_rows() as f64])];
    let predictions: Option<(Vec<f64>, Option<Vec<f64>>)> = match &sc.family {
        SurrogateFamily::Pc(degree) => {
            let pc_inputs: Vec<PcInput> = names
                .iter()
                .map(|n| {
                    study
                        .inputs
                        .iter()
                        .find(|(m, _)| m == n)
                        .map(|(_, d)| PcInput::from_distribution(n, d))
                        .ok_or_else(|| CliError::config("inputs", n, "pc needs the law of every surrogate input"))
                })
                .collect::<Result<_>>()?;
            let pc = match degree {
                PcDegree::Fixed(p) => fit_pc(&train, &pc_inputs, *p, &output),
                PcDegree::Auto(p) => fit_pc_auto(&train, &pc_inputs, *p, &output),
            }
            .map_err(runtime)?;
            metrics.push(("degree".into(), vec![pc.degree as f64]));
            metrics.push((
                "n_coefficients".into(),
                vec![n_coefficients(names.len(), pc.degree) as f64],
            ));
            metrics.push(("mean".into(), vec![pc.mean()]));
            metrics.push(("variance".into(), vec![pc.variance()]));
            if let (Some(m), Some(q)) = (pc.loo_mse, pc.loo_q2) {
                metrics.push(("loo_mse".into(), vec![m]));
                metrics.push(("loo_q2".into(), vec![q]));
                let (loo, _) = pc.loo_predictions(&train).map_err(runtime)?;
                let t = table(vec![(output.clone(), y_train.clone()), ("loo".into(), loo)])?;
                out.table("loo.dat", &t, "uqkit surrogate: leave-one-out predictions")?;
            }
            out.text("surrogate.txt", &pc.to_text())?;
            match &test {
                Some(t) => Some((pc.predict(t).map_err(runtime)?, None)),
                None => None,
            }
        }
        SurrogateFamily::Ann(spec) => {
            let mut rs = RandomStream::new(sc.seed.expect("checked by parser"));
            let tr = train_ann(&train, &name_refs, &output, spec, &mut rs, ctx).map_err(runtime)?;
            metrics.push(("validation_loss".into(), vec![tr.model.validation_loss]));
            metrics.push(("session".into(), vec![tr.session as f64]));
            let fit = tr.model.predict(&train).map_err(runtime)?;
            metrics.push(("train_r2".into(), vec![r_squared(&y_train, &fit)]));
            out.text("surrogate.txt", &tr.model.to_text())?;
            match &test {
                Some(t) => Some((tr.model.predict(t).map_err(runtime)?, None)),
                None => None,
            }
        }
        SurrogateFamily::Gp(config) => {
            let mut rs = RandomStream::new(sc.seed.expect("checked by parser"));
            let gp = fit_gp(&train, &name_refs, &output, config, &mut rs).map_err(runtime)?;
            let ll = gp.log_likelihood();
            metrics.push(("log_likelihood".into(), vec![ll.value]));
            metrics.push(("degenerate".into(), vec![ll.degenerate as u8 as f64]));
            metrics.push(("sigma2".into(), vec![gp.sigma2()]));
            for (k, l) in gp.kernel.lengths.iter().enumerate() {
                metrics.push((format!("length_{}", k + 1), vec![*l]));
            }
            for (k, v) in gp.kernel.extra.iter().enumerate() {
                metrics.push((format!("shape_{}", k + 1), vec![*v]));
            }
            let loo = gp.loo();
            metrics.push(("loo_mse".into(), vec![loo.mse]));
            metrics.push(("loo_q2".into(), vec![loo.q2]));
            let t = table(vec![
                (output.clone(), y_train.clone()),
                ("loo".into(), loo.predictions),
                ("loo_variance".into(), loo.variances),
                ("standardized_residual".into(), loo.standardized_residuals),
            ])?;
            out.table("loo.dat", &t, "uqkit surrogate: leave-one-out predictions")?;
            out.text("surrogate.txt", &gp.to_text())?;
            match &test {
                Some(t) => {
                    let p = gp.predict(t).map_err(runtime)?;
                    Some((p.iter().map(|v| v.0).collect(), Some(p.iter().map(|v| v.1).collect())))
                }
                None => None,
            }
        }
    };
    if let (Some(test), Some((pred, sd))) = (test, predictions) {
        let y = test
            .column(&output)
            .map_err(|e| CliError::config("surrogate", "test", e.to_string()))?
            .to_vec();
        metrics.push(("n_test".into(), vec![y.len() as f64]));
        metrics.push(("test_mse".into(), vec![mse(&y, &pred)]));
        metrics.push(("test_r2".into(), vec![r_squared(&y, &pred)]));
        let mut t = test.with_column("prediction", pred).map_err(runtime)?;
        if let Some(sd) = sd {
            t = t.with_column("sd", sd).map_err(runtime)?;
        }
        out.table("test.dat", &t, "uqkit surrogate: test set with predictions")?;
    }
    out.table(
        "metrics.dat",
        &table(metrics)?,
        "uqkit surrogate: fit and validation metrics",
    )
}

/// Column-wise builder: values are pushed by column name, in row order.
#[derive(Default)]
struct Columns(Vec<(String, Vec<f64>)>);

impl Columns {
    fn push(&mut self, name: &str, v: f64) {
        match self.0.iter_mut().find(|c| c.0 == name) {
            Some(c) => c.1.push(v),
            None => self.0.push((name.to_string(), vec![v])),
        }
    }

    fn into_table(self) -> Result<DataTable> {
        table(self.0)
    }
}

fn sensitivity(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let sc = study.sensitivity.as_ref().expect("checked by requirements");
    let (m, variant) = model_cfg(study);
    let inputs = model_inputs(study, variant);
    let times: Vec<Option<f64>> = match (m.is_physical(), &m.times) {
        (true, Some(t)) => t.iter().map(|v| Some(*v)).collect(),
        (true, None) => vec![Some(m.settings.time)],
        (false, _) => vec![None],
    };
    let legend: Vec<String> = inputs
        .iter()
        .enumerate()
        .map(|(k, (n, _))| format!("{} = {n}", k + 1))
        .collect();
    let mut comments = vec![
        format!("uqkit sensitivity: {} indices, one row per input", sc.method.name()),
        format!("input {}", legend.join(", ")),
    ];
    let mut cols = Columns::default();
    let mut points = Columns::default();
    for t in &times {
        let settings = ModelSettings {
            time: t.unwrap_or(m.settings.time),
            ..m.settings
        };
        let model = heat_model(variant, settings)?;
        let row_start = |cols: &mut Columns, k: usize| {
            if let Some(t) = t {
                cols.push("time", *t);
            }
            cols.push("input", (k + 1) as f64);
        };
        let mut rs = RandomStream::new(sc.seed.unwrap_or(0));
        match &sc.method {
            SensitivityMethod::Morris { r, levels, delta } => {
                let res = morris(&model, &inputs, *r, *levels, *delta, &mut rs, ctx).map_err(runtime)?;
                for (k, i) in res.indices.iter().enumerate() {
                    row_start(&mut cols, k);
                    cols.push("mu", i.mu);
                    cols.push("mu_star", i.mu_star);
                    cols.push("sigma", i.sigma);
                }
                let per = inputs.len() + 1;
                for (k, (p, y)) in res.points.iter().zip(&res.outputs).enumerate() {
                    if let Some(t) = t {
                        points.push("time", *t);
                    }
                    points.push("trajectory", (k / per) as f64);
                    for ((name, _), u) in inputs.iter().zip(p) {
                        points.push(&format!("u_{name}"), *u);
                    }
                    points.push(&m.output, *y);
                }
            }
            SensitivityMethod::Fast { n, m: harmonics } => {
                let res = fast_first_order(&model, &inputs, *n, *harmonics, ctx).map_err(runtime)?;
                for k in 0..res.names.len() {
                    row_start(&mut cols, k);
                    cols.push("s", res.first_order[k]);
                    cols.push("s_of_variance", res.first_order_of_variance[k]);
                    cols.push("frequency", res.frequencies[k] as f64);
                }
                comments.push(format!(
                    "{}variance {:e}, spectral power {:e}",
                    t.map(|t| format!("time {t}: ")).unwrap_or_default(),
                    res.variance,
                    res.spectral_power
                ));
            }
            SensitivityMethod::Sobol { n } => {
                let res = sobol_pick_freeze(&model, &inputs, *n, &mut rs, ctx).map_err(runtime)?;
                let (mut sum, mut lo, mut hi) = (0.0, 0.0, 0.0);
                for (k, i) in res.indices.iter().enumerate() {
                    row_start(&mut cols, k);
                    cols.push("s", i.first.value);
                    cols.push("s_low", i.first.ci_low);
                    cols.push("s_high", i.first.ci_high);
                    cols.push("st", i.total.value);
                    cols.push("st_low", i.total.ci_low);
                    cols.push("st_high", i.total.ci_high);
                    cols.push("s_classic", i.first_classic);
                    cols.push("st_classic", i.total_classic);
                    sum += i.first.value;
                    lo += i.first.ci_low;
                    hi += i.first.ci_high;
                }
                comments.push(format!(
                    "{}sum of first-order indices {sum} [{lo}, {hi}], {} evaluations",
                    t.map(|t| format!("time {t}: ")).unwrap_or_default(),
                    res.n_evals
                ));
            }
        }
    }
    out.table_with("indices.dat", &cols.into_table()?, &comments)?;
    if !points.0.is_empty() {
        out.table(
            "morris_points.dat",
            &points.into_table()?,
            "uqkit sensitivity: Morris trajectories in unit coordinates",
        )?;
    }
    Ok(())
}

/// Material parameters named by `names`, set from `values` on top of `base`.
fn material_with(base: MaterialParams, names: &[usize], values: &[f64]) -> MaterialParams {
    let mut m = base;
    for (&k, &v) in names.iter().zip(values) {
        match k {
            0 => m.e = v,
            1 => m.lambda = v,
            2 => m.c_rho = v,
            3 => m.rho = v,
            _ => m.h = v,
        }
    }
    m
}

struct Calibration {
    grid: Vec<(f64, f64)>,
    reference: Vec<f64>,
    weights: Option<Vec<f64>>,
    base: MaterialParams,
    params: Vec<usize>,
}

impl Calibration {
    fn new(study: &Study, section: &str, r: &ReferenceCfg, params: &[String]) -> Result<Self> {
        let t = read_input(&r.path, section, "reference")?;
        let col = |n: &str, key: &str| -> Result<Vec<f64>> {
            t.column(n)
                .map(<[f64]>::to_vec)
                .map_err(|_| CliError::config(section, key, format!("reference table has no column `{n}`")))
        };
        let x = col("x_ds", "reference")?;
        let time = col("time", "reference")?;
        let reference = col(&r.column, "column")?;
        let weights = r.weights.as_deref().map(|w| col(w, "weights")).transpose()?;
        let base = study.model.as_ref().map(|m| m.material).unwrap_or(MaterialParams::PTFE);
        let params = params
            .iter()
            .map(|p| MATERIAL_NAMES.iter().position(|m| m == p).expect("checked by parser"))
            .collect();
        Ok(Self {
            grid: x.into_iter().zip(time).collect(),
            reference,
            weights,
            base,
            params,
        })
    }

    fn simulate(&self, values: &[f64]) -> std::result::Result<Vec<f64>, ModelError> {
        let mat = material_with(self.base, &self.params, values);
        self.grid
            .iter()
            .map(|&(x, t)| gauge_physical(&mat, x, t).map_err(|e| ModelError::Domain(e.to_string())))
            .collect()
    }

    fn objective(&self) -> Result<RmsObjective<impl Fn(&[f64]) -> std::result::Result<Vec<f64>, ModelError> + '_>> {
        RmsObjective::new(
            self.reference.clone(),
            |p: &[f64]| self.simulate(p),
            self.weights.clone(),
        )
        .map_err(|e| CliError::Runtime(e.to_string()))
    }
}

fn calibrate(study: &Study, out: &mut OutputDir) -> Result<()> {
    let c = study.calibrate.as_ref().expect("checked by requirements");
    let cal = Calibration::new(study, "calibrate", &c.reference, &c.parameters)?;
    let obj = cal.objective()?;
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let f = |p: &[f64]| match obj.eval(p) {
        Ok(v) => v,
        Err(e) => {
            failure
                .lock()
                .unwrap()
                .get_or_insert_with(|| format!("objective failed at {p:?}: {e}"));
            f64::NAN
        }
    };
    let res = nelder_mead(f, &c.start, &c.step, c.tol, c.max_evals)
        .map_err(|e| CliError::Runtime(failure.lock().unwrap().take().unwrap_or_else(|| e.to_string())))?;
    let mut trace: Vec<(String, Vec<f64>)> =
        vec![("iteration".into(), (1..=res.trace.len()).map(|i| i as f64).collect())];
    for (k, p) in c.parameters.iter().enumerate() {
        trace.push((p.clone(), res.trace.iter().map(|(x, _)| x[k]).collect()));
    }
    trace.push(("objective".into(), res.trace.iter().map(|(_, f)| *f).collect()));
    let mut best: Vec<(String, Vec<f64>)> = c
        .parameters
        .iter()
        .cloned()
        .zip(res.x.iter().map(|v| vec![*v]))
        .collect();
    best.push(("objective".into(), vec![res.f]));
    best.push(("n_evals".into(), vec![res.n_evals as f64]));
    best.push(("converged".into(), vec![res.converged as u8 as f64]));
    out.table(
        "trace.dat",
        &table(trace)?,
        "uqkit calibrate: best point after each simplex iteration",
    )?;
    out.table("best.dat", &table(best)?, "uqkit calibrate: calibrated parameters")
}

fn bounds(study: &Study) -> Vec<(f64, f64)> {
    study.inputs.iter().map(|(_, d)| d.support()).collect()
}

fn optimize(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let oc = study.optimize.as_ref().expect("checked by requirements");
    let (m, variant) = model_cfg(study);
    let model = heat_model(variant, m.settings)?;
    let inputs = model_inputs(study, variant);
    let mut names: Vec<&str> = variant.input_names().to_vec();
    names.push("y");
    let exprs: Vec<Expr> = oc
        .objectives
        .iter()
        .map(|o| {
            Expr::parse(o)
                .and_then(|e| e.bind(&names))
                .map_err(|e| CliError::config("optimize", "objectives", format!("`{o}`: {e}")))
        })
        .collect::<Result<_>>()?;
    let b: Vec<(f64, f64)> = inputs.iter().map(|(_, d)| d.support()).collect();
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let objectives = |x: &[f64]| -> Vec<f64> {
        match model.call(x) {
            Ok(y) => {
                let mut row = x.to_vec();
                row.push(y);
                exprs.iter().map(|e| e.eval(&row)).collect()
            }
            Err(e) => {
                failure.lock().unwrap().get_or_insert_with(|| e.to_string());
                vec![f64::NAN; exprs.len()]
            }
        }
    };
    let mut rs = RandomStream::new(oc.seed);
    let res = evolve_moo(objectives, &b, &oc.options, &mut rs, ctx)
        .map_err(|e| CliError::Runtime(failure.lock().unwrap().take().unwrap_or_else(|| e.to_string())))?;
    let obj_names: Vec<String> = (1..=exprs.len()).map(|k| format!("objective_{k}")).collect();
    let mut pareto: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, (n, _)) in inputs.iter().enumerate() {
        pareto.push((n.clone(), res.pareto_set.iter().map(|x| x[k]).collect()));
    }
    for (k, n) in obj_names.iter().enumerate() {
        pareto.push((n.clone(), res.pareto_front.iter().map(|f| f[k]).collect()));
    }
    let mut history: Vec<(String, Vec<f64>)> =
        vec![("generation".into(), res.history.iter().map(|h| h.0 as f64).collect())];
    for (k, (n, _)) in inputs.iter().enumerate() {
        history.push((n.clone(), res.history.iter().map(|h| h.1.x[k]).collect()));
    }
    for (k, n) in obj_names.iter().enumerate() {
        history.push((n.clone(), res.history.iter().map(|h| h.1.objectives[k]).collect()));
    }
    history.push(("rank".into(), res.history.iter().map(|h| h.1.rank as f64).collect()));
    let comment = format!(
        "uqkit optimize: objectives {}; converged = {}; {} evaluations",
        oc.objectives.join("; "),
        res.converged,
        res.n_evals
    );
    out.table("pareto.dat", &table(pareto)?, &comment)?;
    out.table(
        "history.dat",
        &table(history)?,
        "uqkit optimize: every evaluated candidate with its rank",
    )
}

fn run_ego(study: &Study, ctx: &EvalContext, out: &mut OutputDir) -> Result<()> {
    let ec = study.ego.as_ref().expect("checked by requirements");
    let b = bounds(study);
    let initial = design(study)?.rows();
    let names: Vec<String> = study.inputs.iter().map(|(n, _)| n.clone()).collect();
    let config = EgoConfig {
        budget: ec.budget,
        gp: ec.gp.clone(),
        inner: ec.inner.clone(),
    };
    let mut rs = RandomStream::new(ec.seed);
    let res = match ec.objective {
        EgoObjective::Model => {
            let (m, variant) = model_cfg(study);
            let model = heat_model(variant, m.settings)?;
            // Design columns follow [inputs]; the model wants its own order.
            let perm: Vec<usize> = variant
                .input_names()
                .iter()
                .map(|n| names.iter().position(|m| m == n).expect("checked by requirements"))
                .collect();
            let f = |x: &[f64]| model.call(&perm.iter().map(|&k| x[k]).collect::<Vec<_>>());
            ego(f, &b, &initial, &config, &mut rs, ctx).map_err(runtime)?
        }
        EgoObjective::Rms | EgoObjective::Mse => {
            let r = ec.reference.as_ref().expect("checked by parser");
            let cal = Calibration::new(study, "ego", r, &names)?;
            let obj = cal.objective()?;
            let square = ec.objective == EgoObjective::Mse;
            let f = |p: &[f64]| {
                obj.eval(p)
                    .map(|v| if square { v * v } else { v })
                    .map_err(|e| ModelError::Domain(e.to_string()))
            };
            ego(f, &b, &initial, &config, &mut rs, ctx).map_err(runtime)?
        }
    };
    let n0 = initial.len();
    let mut iteration: Vec<f64> = vec![0.0; n0];
    let mut ei: Vec<f64> = vec![0.0; n0];
    for s in &res.trace {
        iteration.push(s.iteration as f64);
        ei.push(s.expected_improvement);
    }
    let mut running = f64::INFINITY;
    let f_best: Vec<f64> = res
        .y
        .iter()
        .map(|&y| {
            running = running.min(y);
            running
        })
        .collect();
    let mut trace: Vec<(String, Vec<f64>)> = vec![("iteration".into(), iteration)];
    for (k, n) in names.iter().enumerate() {
        trace.push((n.clone(), res.x.iter().map(|x| x[k]).collect()));
    }
    trace.push(("y".into(), res.y.clone()));
    trace.push(("expected_improvement".into(), ei));
    trace.push(("f_best".into(), f_best));
    let mut best: Vec<(String, Vec<f64>)> = names.iter().cloned().zip(res.x_best.iter().map(|v| vec![*v])).collect();
    best.push(("y".into(), vec![res.f_best]));
    out.table(
        "trace.dat",
        &table(trace)?,
        "uqkit ego: initial design (iteration 0) then one added point per iteration",
    )?;
    out.table("best.dat", &table(best)?, "uqkit ego: best point found")
}
