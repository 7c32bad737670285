//! Study configuration: INI parsing into typed sections, and diagnostics that
//! name the offending section and key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use uqkit::ann::AnnSpec;
use uqkit::design::{validate_spearman, Copula, CopulaFamily, DependenceSpec, DesignError, MaximinOptions, Method};
use uqkit::gp::{GpConfig, KernelFamily, Trend};
use uqkit::heatmodel::{HShapeParams, MaterialParams, ModelSettings, ModelVariant};
use uqkit::optimizer::MooOptions;
use uqkit::Distribution;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub section: String,
    pub key: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(section: &str, key: &str, message: impl Into<String>) -> Self {
        Self {
            section: section.to_string(),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}: {}", self.section, self.message)
        } else {
            write!(f, "{}.{}: {}", self.section, self.key, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Sample,
    Model,
    Propagate,
    Surrogate,
    Sensitivity,
    Calibrate,
    Optimize,
    Ego,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Sample,
        Action::Model,
        Action::Propagate,
        Action::Surrogate,
        Action::Sensitivity,
        Action::Calibrate,
        Action::Optimize,
        Action::Ego,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Action::Sample => "sample",
            Action::Model => "model",
            Action::Propagate => "propagate",
            Action::Surrogate => "surrogate",
            Action::Sensitivity => "sensitivity",
            Action::Calibrate => "calibrate",
            Action::Optimize => "optimize",
            Action::Ego => "ego",
        }
    }

    /// Sections read by the action, in the order they are documented.
    pub fn sections(&self) -> &'static [&'static str] {
        match self {
            Action::Sample => &["inputs", "design", "dependence", "output"],
            Action::Model => &["inputs", "model", "design", "dependence", "output"],
            Action::Propagate => &["inputs", "model", "design", "dependence", "output"],
            Action::Surrogate => &["inputs", "model", "design", "dependence", "surrogate", "output"],
            Action::Sensitivity => &["inputs", "model", "sensitivity", "output"],
            Action::Calibrate => &["model", "calibrate", "output"],
            Action::Optimize => &["inputs", "model", "optimize", "output"],
            Action::Ego => &["inputs", "model", "design", "ego", "output"],
        }
    }

    /// The file named by `--out`: the main result of the action.
    pub fn primary_output(&self) -> &'static str {
        match self {
            Action::Sample => "design.dat",
            Action::Model => "evaluations.dat",
            Action::Propagate => "summary.dat",
            Action::Surrogate => "metrics.dat",
            Action::Sensitivity => "indices.dat",
            Action::Calibrate | Action::Ego => "best.dat",
            Action::Optimize => "pareto.dat",
        }
    }

    /// The dedicated section of the action, if it has one.
    pub fn own_section(&self) -> Option<&'static str> {
        match self {
            Action::Surrogate => Some("surrogate"),
            Action::Sensitivity => Some("sensitivity"),
            Action::Calibrate => Some("calibrate"),
            Action::Optimize => Some("optimize"),
            Action::Ego => Some("ego"),
            _ => None,
        }
    }
}

pub const ACTION_SECTIONS: [&str; 5] = ["surrogate", "sensitivity", "calibrate", "optimize", "ego"];

pub struct KeyDoc {
    pub section: &'static str,
    pub key: &'static str,
    pub doc: &'static str,
}

const fn k(section: &'static str, key: &'static str, doc: &'static str) -> KeyDoc {
    KeyDoc { section, key, doc }
}

/// Every key the tool reads. `*` stands for a user-chosen name.
pub const KEYS: &[KeyDoc] = &[
    k("inputs", "*", "one line per input: name = Law(p1, p2, ...), e.g. e = Normal(10e-3, 5e-5)"),
    k("design", "method", "srs | lhs | maximin_lhs | halton | sobolseq"),
    k("design", "n", "number of points"),
    k("design", "seed", "integer seed (required except for halton and sobolseq)"),
    k("design", "p_exponent", "maximin criterion exponent (default 50)"),
    k("design", "sa_iterations", "maximin annealing moves (default 2000)"),
    k("design", "sa_initial_temp", "maximin initial temperature, relative (default 0.05)"),
    k("design", "sa_cooling", "maximin geometric cooling factor in (0, 1) (default 0.95)"),
    k("dependence", "row_*", "Spearman matrix, one row per input in [inputs] order: row_1 = 1 0.9"),
    k("dependence", "copula", "amh | clayton | frank | plackett (instead of a matrix)"),
    k("dependence", "theta", "copula parameter"),
    k("dependence", "pair", "the two inputs joined by the copula: pair = x1 x2"),
    k("model", "variant", "gauge_xt | gauge_physical | gauge_physical_plus_useless | neg_h_of_t"),
    k("model", "biot", "Biot number of gauge_xt (default 4)"),
    k("model", "x_ds", "dimensionless depth of the physical variants (default 0.5)"),
    k("model", "time", "physical time in s of the physical variants (default 572)"),
    k("model", "times", "list of times in s; physical variants are evaluated at each, rows stacked"),
    k("model", "depths", "list of depths for propagate (default 0 0.33 0.66 0.99)"),
    k("model", "h", "exchange coefficient (default 100)"),
    k("model", "e", "fixed thickness for calibration (default 10e-3)"),
    k("model", "lambda", "fixed conductivity for calibration (default 0.25)"),
    k("model", "c_rho", "fixed capacity for calibration (default 1300)"),
    k("model", "rho", "fixed volumic mass for calibration (default 2200)"),
    k("model", "h_min", "neg_h_of_t floor (default 10)"),
    k("model", "h_0", "neg_h_of_t value at t = 0 (default 20)"),
    k("model", "h_max", "neg_h_of_t peak (default 43)"),
    k("model", "t_max", "neg_h_of_t peak time (default 5)"),
    k("model", "output", "name of the output column (default theta, or neg_h for neg_h_of_t)"),
    k("model", "input", "table of points to evaluate (model action; default: the [design])"),
    k("surrogate", "family", "pc | ann | gp"),
    k("surrogate", "train", "training table (default: [design] evaluated by [model])"),
    k("surrogate", "inputs", "input columns (default: the [inputs] names)"),
    k("surrogate", "output", "output column (default: the model output name)"),
    k("surrogate", "test", "test table with the same columns"),
    k("surrogate", "test_n", "size of a random test set drawn from [inputs] and evaluated by [model]"),
    k("surrogate", "seed", "integer seed (required for ann, gp and test_n)"),
    k("surrogate", "degree", "pc: total degree, or auto (default auto)"),
    k("surrogate", "max_degree", "pc: largest degree tried by auto (default 8)"),
    k("surrogate", "hidden", "ann: hidden neurons (default 8)"),
    k("surrogate", "splits", "ann: learning/validation splits (default 5)"),
    k("surrogate", "inits", "ann: initialisations per split (default 10)"),
    k("surrogate", "max_epochs", "ann: epoch limit (default 2000)"),
    k("surrogate", "patience", "ann: epochs without improvement before stopping (default 100)"),
    k("surrogate", "kernel", "gp: gauss | isogauss | exponential | matern1 | matern2 | matern3 | matern3/2 | matern5/2 | matern7/2 (default matern5/2)"),
    k("surrogate", "trend", "gp: const | linear (default const)"),
    k("surrogate", "starts", "gp: likelihood starts (default 20)"),
    k("sensitivity", "method", "morris | fast | sobol"),
    k("sensitivity", "seed", "integer seed (required for morris and sobol)"),
    k("sensitivity", "r", "morris: trajectories (default 10)"),
    k("sensitivity", "levels", "morris: grid levels p (default 6)"),
    k("sensitivity", "delta", "morris: step (default p / (2 (p - 1)))"),
    k("sensitivity", "n", "fast and sobol: sample size (default 1001 and 10000)"),
    k("sensitivity", "m", "fast: interference factor (default 4)"),
    k("calibrate", "reference", "table with columns x_ds, time and the reference output"),
    k("calibrate", "column", "reference output column (default theta)"),
    k("calibrate", "weights", "optional weight column of the reference table"),
    k("calibrate", "parameters", "calibrated material parameters among e lambda c_rho rho h"),
    k("calibrate", "start", "starting values, one per parameter"),
    k("calibrate", "step", "initial simplex steps, one per parameter"),
    k("calibrate", "tol", "spread of the simplex values that stops the search (default 1e-8)"),
    k("calibrate", "max_evals", "objective evaluation budget (default 1000)"),
    k("optimize", "objectives", "objectives to minimise separated by ';', expressions of the inputs and y (default y)"),
    k("optimize", "seed", "integer seed"),
    k("optimize", "pop_size", "population size (default 50)"),
    k("optimize", "keep_fraction", "fraction kept each generation (default 0.5)"),
    k("optimize", "max_evals", "evaluation budget (default 5000)"),
    k("optimize", "eta_crossover", "crossover distribution index (default 10)"),
    k("optimize", "eta_mutation", "mutation distribution index (default 20)"),
    k("ego", "budget", "points added to the [design]"),
    k("ego", "seed", "integer seed"),
    k("ego", "objective", "model | rms | mse: the model output, or the (squared) distance to a reference"),
    k("ego", "reference", "rms and mse: table with columns x_ds, time and the reference output"),
    k("ego", "column", "rms and mse: reference output column (default theta)"),
    k("ego", "weights", "rms and mse: optional weight column"),
    k("ego", "kernel", "kriging kernel (default matern5/2)"),
    k("ego", "trend", "kriging trend (default const)"),
    k("ego", "starts", "likelihood starts (default 20)"),
    k("ego", "pop_size", "population of the expected-improvement search (default 40)"),
    k("ego", "max_evals", "budget of the expected-improvement search (default 2000)"),
    k("ego", "keep_fraction", "fraction kept each generation of the expected-improvement search (default 0.5)"),
    k("ego", "eta_crossover", "crossover distribution index of the expected-improvement search (default 10)"),
    k("ego", "eta_mutation", "mutation distribution index of the expected-improvement search (default 20)"),
    k("output", "directory", "where results are written, relative to the config file (default uqkit-out)"),
];

/// Help text listing the keys of `sections`.
pub fn key_help(sections: &[&str]) -> String {
    let mut s = String::from("Configuration keys:\n");
    for sec in sections {
        s.push_str(&format!("  [{sec}]\n"));
        for kd in KEYS.iter().filter(|kd| kd.section == *sec) {
            s.push_str(&format!("    {:<16} {}\n", kd.key, kd.doc));
        }
    }
    s
}

fn known_key(section: &str, key: &str) -> bool {
    KEYS.iter().any(|kd| {
        kd.section == section
            && (kd.key == key
                || kd
                    .key
                    .strip_suffix('*')
                    .is_some_and(|p| !p.is_empty() && key.starts_with(p)))
    })
}

#[derive(Debug, Clone)]
pub struct ModelCfg {
    pub variant: Option<ModelVariant>,
    pub settings: ModelSettings,
    pub material: MaterialParams,
    pub output: String,
    pub input: Option<PathBuf>,
    pub times: Option<Vec<f64>>,
    pub depths: Vec<f64>,
}

impl ModelCfg {
    pub fn is_physical(&self) -> bool {
        matches!(
            self.variant,
            Some(ModelVariant::GaugePhysical | ModelVariant::GaugePhysicalPlusUseless)
        )
    }
}

#[derive(Debug, Clone)]
pub struct DesignCfg {
    pub method: Method,
    pub n: usize,
    pub seed: Option<u64>,
    pub maximin: MaximinOptions,
}

#[derive(Debug, Clone)]
pub enum PcDegree {
    Fixed(usize),
    Auto(usize),
}

#[derive(Debug, Clone)]
pub enum SurrogateFamily {
    Pc(PcDegree),
    Ann(AnnSpec),
    Gp(GpConfig),
}

#[derive(Debug, Clone)]
pub struct SurrogateCfg {
    pub family: SurrogateFamily,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_n: usize,
    pub inputs: Option<Vec<String>>,
    pub output: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum SensitivityMethod {
    Morris {
        r: usize,
        levels: usize,
        delta: Option<f64>,
    },
    Fast {
        n: usize,
        m: usize,
    },
    Sobol {
        n: usize,
    },
}

impl SensitivityMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SensitivityMethod::Morris { .. } => "morris",
            SensitivityMethod::Fast { .. } => "fast",
            SensitivityMethod::Sobol { .. } => "sobol",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityCfg {
    pub method: SensitivityMethod,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceCfg {
    pub path: PathBuf,
    pub column: String,
    pub weights: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CalibrateCfg {
    pub reference: ReferenceCfg,
    pub parameters: Vec<String>,
    pub start: Vec<f64>,
    pub step: Vec<f64>,
    pub tol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizeCfg {
    pub objectives: Vec<String>,
    pub options: MooOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgoObjective {
    Model,
    Rms,
    Mse,
}

#[derive(Debug, Clone)]
pub struct EgoCfg {
    pub budget: usize,
    pub seed: u64,
    pub objective: EgoObjective,
    pub reference: Option<ReferenceCfg>,
    pub gp: GpConfig,
    pub inner: MooOptions,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub base_dir: PathBuf,
    pub inputs: Vec<(String, Distribution)>,
    /// Names of [inputs] lines that were rejected, already reported.
    pub rejected_inputs: Vec<String>,
    pub model: Option<ModelCfg>,
    pub design: Option<DesignCfg>,
    pub dependence: DependenceSpec,
    pub surrogate: Option<SurrogateCfg>,
    pub sensitivity: Option<SensitivityCfg>,
    pub calibrate: Option<CalibrateCfg>,
    pub optimize: Option<OptimizeCfg>,
    pub ego: Option<EgoCfg>,
    pub output_dir: PathBuf,
}

pub const MATERIAL_NAMES: [&str; 5] = ["e", "lambda", "c_rho", "rho", "h"];

struct Reader<'a> {
    ini: &'a Ini,
    base: &'a Path,
    diags: Vec<Diagnostic>,
}

impl<'a> Reader<'a> {
    fn raw(&self, sec: &str, key: &str) -> Option<&'a str> {
        debug_assert!(known_key(sec, key), "undocumented key {sec}.{key}");
        self.ini.section(Some(sec)).and_then(|p| p.get(key)).map(str::trim)
    }

    fn has(&self, sec: &str) -> bool {
        self.ini.section(Some(sec)).is_some()
    }

    fn diag(&mut self, sec: &str, key: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(sec, key, msg));
    }

    fn opt<T: FromStr>(&mut self, sec: &str, key: &str) -> Option<T> {
        let raw = self.raw(sec, key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.diag(sec, key, format!("cannot parse `{raw}`"));
                None
            }
        }
    }

    fn or<T: FromStr>(&mut self, sec: &str, key: &str, default: T) -> T {
        self.opt(sec, key).unwrap_or(default)
    }

    fn req<T: FromStr>(&mut self, sec: &str, key: &str) -> Option<T> {
        if self.raw(sec, key).is_none() {
            self.diag(sec, key, "missing");
            return None;
        }
        self.opt(sec, key)
    }

    fn list<T: FromStr>(&mut self, sec: &str, key: &str) -> Option<Vec<T>> {
        let raw = self.raw(sec, key)?;
        let parsed: Result<Vec<T>, _> = raw.split_whitespace().map(str::parse).collect();
        match parsed {
            Ok(v) if !v.is_empty() => Some(v),
            _ => {
                self.diag(sec, key, format!("expected a whitespace-separated list, got `{raw}`"));
                None
            }
        }
    }

    fn path(&self, sec: &str, key: &str) -> Option<PathBuf> {
        self.raw(sec, key).map(|p| self.base.join(p))
    }

    fn positive(&mut self, sec: &str, key: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.diag(sec, key, "must be positive");
        }
        v
    }

    fn at_least(&mut self, sec: &str, key: &str, v: usize, min: usize) -> usize {
        if v < min {
            self.diag(sec, key, format!("must be at least {min}"));
        }
        v
    }
}

/// Parses a configuration file. Reading failures are returned as `Err`;
/// everything else becomes a diagnostic.
pub fn load(path: &Path) -> Result<(Study, Vec<Diagnostic>), String> {
    load_with(Some(path), &[])
}

/// A `section.key = value` pair given on the command line. It replaces the
/// value of the file, or adds it.
pub type Override = (&'static str, &'static str, String);

/// Like [`load`], with command-line overrides applied on top of the file.
/// Without a file the study is made of the overrides alone and relative paths
/// resolve against the working directory.
pub fn load_with(path: Option<&Path>, overrides: &[Override]) -> Result<(Study, Vec<Diagnostic>), String> {
    let (text, base) = match path {
        Some(path) => (
            std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (String::new(), PathBuf::new()),
    };
    let mut ini = match Ini::load_from_str(&text) {
        Ok(ini) => ini,
        Err(e) => {
            let study = empty_study(&base);
            return Ok((study, vec![Diagnostic::new("file", "", format!("syntax error: {e}"))]));
        }
    };
    for (section, key, value) in overrides {
        ini.with_section(Some(*section)).set(*key, value.as_str());
    }
    Ok(parse_ini(&ini, &base))
}

pub fn parse(text: &str, base: &Path) -> (Study, Vec<Diagnostic>) {
    match Ini::load_from_str(text) {
        Ok(ini) => parse_ini(&ini, base),
        Err(e) => (
            empty_study(base),
            vec![Diagnostic::new("file", "", format!("syntax error: {e}"))],
        ),
    }
}

fn parse_ini(ini: &Ini, base: &Path) -> (Study, Vec<Diagnostic>) {
    let mut r = Reader {
        ini,
        base,
        diags: Vec::new(),
    };
    check_structure(&mut r);
    let (inputs, rejected_inputs) = parse_inputs(&mut r);
    let names: Vec<String> = inputs.iter().map(|(n, _)| n.clone()).collect();
    let study = Study {
        base_dir: base.to_path_buf(),
        model: r.has("model").then(|| parse_model(&mut r)),
        design: r.has("design").then(|| parse_design(&mut r)).flatten(),
        dependence: parse_dependence(&mut r, &names),
        surrogate: r.has("surrogate").then(|| parse_surrogate(&mut r)).flatten(),
        sensitivity: r.has("sensitivity").then(|| parse_sensitivity(&mut r)).flatten(),
        calibrate: r.has("calibrate").then(|| parse_calibrate(&mut r)).flatten(),
        optimize: r.has("optimize").then(|| parse_optimize(&mut r)).flatten(),
        ego: r.has("ego").then(|| parse_ego(&mut r)).flatten(),
        output_dir: base.join(r.raw("output", "directory").unwrap_or("uqkit-out")),
        inputs,
        rejected_inputs,
    };
    let diags = r.diags;
    (study, diags)
}

fn empty_study(base: &Path) -> Study {
    Study {
        base_dir: base.to_path_buf(),
        inputs: Vec::new(),
        rejected_inputs: Vec::new(),
        model: None,
        design: None,
        dependence: DependenceSpec::None,
        surrogate: None,
        sensitivity: None,
        calibrate: None,
        optimize: None,
        ego: None,
        output_dir: base.join("uqkit-out"),
    }
}

fn check_structure(r: &mut Reader) {
    let mut unknown = Vec::new();
    for (sec, props) in r.ini.iter() {
        let Some(sec) = sec else {
            if !props.is_empty() {
                unknown.push(Diagnostic::new("file", "", "keys outside any section"));
            }
            continue;
        };
        if !KEYS.iter().any(|kd| kd.section == sec) {
            unknown.push(Diagnostic::new(sec, "", "unknown section"));
            continue;
        }
        if sec == "inputs" {
            continue;
        }
        for (key, _) in props.iter() {
            if !known_key(sec, key) {
                unknown.push(Diagnostic::new(sec, key, "unknown key"));
            }
        }
    }
    r.diags.extend(unknown);
    let present: Vec<&str> = ACTION_SECTIONS.iter().copied().filter(|s| r.has(s)).collect();
    if present.len() > 1 {
        r.diag(
            present[1],
            "",
            format!("only one action section is allowed, found {}", present.join(", ")),
        );
    }
}

fn parse_inputs(r: &mut Reader) -> (Vec<(String, Distribution)>, Vec<String>) {
    let Some(props) = r.ini.section(Some("inputs")) else {
        return (Vec::new(), Vec::new());
    };
    let mut out: Vec<(String, Distribution)> = Vec::new();
    let mut rejected = Vec::new();
    let entries: Vec<(String, String)> = props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for (name, spec) in entries {
        if name.is_empty() || name.chars().any(|c| !(c.is_ascii_alphanumeric() || c == '_')) {
            r.diag("inputs", &name, "input names use letters, digits and underscores");
            rejected.push(name);
            continue;
        }
        if out.iter().any(|(n, _)| *n == name) {
            r.diag("inputs", &name, "defined twice");
            continue;
        }
        match Distribution::parse(&spec) {
            Ok(d) => out.push((name, d)),
            Err(e) => {
                r.diag("inputs", &name, e.to_string());
                rejected.push(name);
            }
        }
    }
    (out, rejected)
}

fn parse_model(r: &mut Reader) -> ModelCfg {
    let s = "model";
    let variant = r.raw(s, "variant").and_then(|v| {
        let parsed = ModelVariant::parse(v);
        if parsed.is_none() {
            r.diag(s, "variant", format!("unknown variant `{v}`"));
        }
        parsed
    });
    let d = ModelSettings::default();
    let shape = HShapeParams {
        h_min: r.or(s, "h_min", d.shape.h_min),
        h_0: r.or(s, "h_0", d.shape.h_0),
        h_max: r.or(s, "h_max", d.shape.h_max),
        t_max: r.or(s, "t_max", d.shape.t_max),
    };
    if variant == Some(ModelVariant::NegHOfT) && shape.validate().is_err() {
        r.diag(s, "h_max", "need h_min < h_0 < h_max and t_max > 0");
    }
    let settings = ModelSettings {
        biot: r.or(s, "biot", d.biot),
        x_ds: r.or(s, "x_ds", d.x_ds),
        time: r.or(s, "time", d.time),
        h: r.or(s, "h", d.h),
        shape,
    };
    r.positive(s, "biot", settings.biot);
    r.positive(s, "h", settings.h);
    if !(0.0..=1.0).contains(&settings.x_ds) {
        r.diag(s, "x_ds", "must lie in [0, 1]");
    }
    if !(settings.time >= 0.0) {
        r.diag(s, "time", "must be non-negative");
    }
    let p = MaterialParams::PTFE;
    let material = MaterialParams {
        e: r.or(s, "e", p.e),
        lambda: r.or(s, "lambda", p.lambda),
        c_rho: r.or(s, "c_rho", p.c_rho),
        rho: r.or(s, "rho", p.rho),
        h: settings.h,
    };
    if let Err(e) = material.validate() {
        r.diag(s, "", e.to_string());
    }
    let times = r.list::<f64>(s, "times");
    if let Some(t) = &times {
        if t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            r.diag(s, "times", "times must be non-negative");
        }
    }
    let depths = r
        .list::<f64>(s, "depths")
        .unwrap_or_else(|| vec![0.0, 0.33, 0.66, 0.99]);
    if depths.iter().any(|v| !(0.0..=1.0).contains(v)) {
        r.diag(s, "depths", "depths must lie in [0, 1]");
    }
    let default_output = if variant == Some(ModelVariant::NegHOfT) {
        "neg_h"
    } else {
        "theta"
    };
    ModelCfg {
        variant,
        settings,
        material,
        output: r.raw(s, "output").unwrap_or(default_output).to_string(),
        input: r.path(s, "input"),
        times,
        depths,
    }
}

fn parse_design(r: &mut Reader) -> Option<DesignCfg> {
    let s = "design";
    let method_raw: String = r.req(s, "method")?;
    let Some(method) = Method::parse(&method_raw) else {
        r.diag(s, "method", format!("unknown method `{method_raw}`"));
        return None;
    };
    let n: usize = r.req(s, "n")?;
    r.at_least(s, "n", n, 1);
    let seed = r.opt(s, "seed");
    if seed.is_none() && r.raw(s, "seed").is_none() && !matches!(method, Method::Halton | Method::SobolSeq) {
        r.diag(s, "seed", "missing (required by random designs)");
    }
    let d = MaximinOptions::default();
    let maximin = MaximinOptions {
        p_exponent: r.or(s, "p_exponent", d.p_exponent),
        sa_iterations: r.or(s, "sa_iterations", d.sa_iterations),
        sa_initial_temp: r.or(s, "sa_initial_temp", d.sa_initial_temp),
        sa_cooling: r.or(s, "sa_cooling", d.sa_cooling),
    };
    if !(maximin.p_exponent >= 1.0) {
        r.diag(s, "p_exponent", "must be at least 1");
    }
    if !(maximin.sa_cooling > 0.0 && maximin.sa_cooling < 1.0) {
        r.diag(s, "sa_cooling", "must lie in (0, 1)");
    }
    if !(maximin.sa_initial_temp >= 0.0) {
        r.diag(s, "sa_initial_temp", "must be non-negative");
    }
    Some(DesignCfg {
        method,
        n,
        seed,
        maximin,
    })
}

fn parse_dependence(r: &mut Reader, names: &[String]) -> DependenceSpec {
    let s = "dependence";
    if !r.has(s) {
        return DependenceSpec::None;
    }
    if r.raw(s, "copula").is_some() {
        let family_raw: String = r.req(s, "copula").unwrap_or_default();
        let family = CopulaFamily::parse(&family_raw);
        if family.is_none() {
            r.diag(s, "copula", format!("unknown copula `{family_raw}`"));
        }
        let theta: Option<f64> = r.req(s, "theta");
        let pair: Option<Vec<String>> = r
            .req::<String>(s, "pair")
            .map(|p| p.split_whitespace().map(String::from).collect());
        let (Some(family), Some(theta), Some(pair)) = (family, theta, pair) else {
            return DependenceSpec::None;
        };
        let idx: Vec<Option<usize>> = pair.iter().map(|p| names.iter().position(|n| n == p)).collect();
        let pair = match idx.as_slice() {
            [Some(i), Some(j)] if i != j => (*i, *j),
            _ => {
                r.diag(s, "pair", "expected two distinct names from [inputs]");
                return DependenceSpec::None;
            }
        };
        return match Copula::new(family, theta) {
            Ok(copula) => DependenceSpec::Copula { copula, pair },
            Err(e) => {
                r.diag(s, "theta", e.to_string());
                DependenceSpec::None
            }
        };
    }
    let dim = names.len();
    let mut rows = Vec::with_capacity(dim);
    for i in 1..=dim {
        let key = format!("row_{i}");
        match r.list::<f64>(s, &key) {
            Some(row) => rows.push(row),
            None => {
                if r.raw(s, &key).is_none() {
                    r.diag(s, &key, "missing");
                }
                return DependenceSpec::None;
            }
        }
    }
    if let Some(props) = r.ini.section(Some(s)) {
        let extra: Vec<String> = props
            .iter()
            .map(|(k, _)| k.to_string())
            .filter(|k| {
                k.strip_prefix("row_")
                    .and_then(|i| i.parse::<usize>().ok())
                    .is_some_and(|i| i == 0 || i > dim)
            })
            .collect();
        for k in extra {
            r.diag(s, &k, format!("the matrix has {dim} rows"));
        }
    }
    match validate_spearman(&rows, dim) {
        Ok(()) => DependenceSpec::SpearmanMatrix(rows),
        Err(DesignError::NotPositiveDefinite) => {
            r.diag(s, "", "matrix not positive definite");
            DependenceSpec::None
        }
        Err(e) => {
            r.diag(s, "", e.to_string());
            DependenceSpec::None
        }
    }
}

fn parse_kernel(r: &mut Reader, s: &str) -> GpConfig {
    let family = match r.raw(s, "kernel") {
        None => KernelFamily::Matern52,
        Some(k) => KernelFamily::parse(k).unwrap_or_else(|e| {
            r.diag(s, "kernel", e.to_string());
            KernelFamily::Matern52
        }),
    };
    let trend = match r.raw(s, "trend") {
        None => Trend::Const,
        Some(t) => Trend::parse(t).unwrap_or_else(|e| {
            r.diag(s, "trend", e.to_string());
            Trend::Const
        }),
    };
    let mut gp = GpConfig::new(family, trend);
    gp.n_starts = r.or(s, "starts", gp.n_starts);
    r.at_least(s, "starts", gp.n_starts, 1);
    gp
}

fn parse_surrogate(r: &mut Reader) -> Option<SurrogateCfg> {
    let s = "surrogate";
    let family_raw: String = r.req(s, "family")?;
    let family = match family_raw.to_ascii_lowercase().as_str() {
        "pc" => {
            let degree = match r.raw(s, "degree") {
                None | Some("auto") => PcDegree::Auto(r.or(s, "max_degree", 8)),
                Some(_) => PcDegree::Fixed(r.opt(s, "degree").unwrap_or(1)),
            };
            SurrogateFamily::Pc(degree)
        }
        "ann" => {
            let mut spec = AnnSpec::new(r.or(s, "hidden", 8));
            spec.n_splits = r.or(s, "splits", spec.n_splits);
            spec.n_inits = r.or(s, "inits", spec.n_inits);
            spec.max_epochs = r.or(s, "max_epochs", spec.max_epochs);
            spec.patience = r.or(s, "patience", spec.patience);
            if let Err(e) = spec.validate() {
                r.diag(s, "", e.to_string());
            }
            SurrogateFamily::Ann(spec)
        }
        "gp" => SurrogateFamily::Gp(parse_kernel(r, s)),
        other => {
            r.diag(s, "family", format!("unknown family `{other}`"));
            return None;
        }
    };
    let seed = r.opt(s, "seed");
    let test_n = r.or(s, "test_n", 0usize);
    let needs_seed = !matches!(family, SurrogateFamily::Pc(_)) || test_n > 0;
    if needs_seed && seed.is_none() && r.raw(s, "seed").is_none() {
        r.diag(s, "seed", "missing (required by this surrogate)");
    }
    Some(SurrogateCfg {
        family,
        train: r.path(s, "train"),
        test: r.path(s, "test"),
        test_n,
        inputs: r.list(s, "inputs"),
        output: r.raw(s, "output").map(String::from),
        seed,
    })
}

fn parse_sensitivity(r: &mut Reader) -> Option<SensitivityCfg> {
    let s = "sensitivity";
    let method_raw: String = r.req(s, "method")?;
    let method = match method_raw.to_ascii_lowercase().as_str() {
        "morris" => {
            let r_ = r.or(s, "r", 10usize);
            r.at_least(s, "r", r_, 2);
            let levels = r.or(s, "levels", 6usize);
            r.at_least(s, "levels", levels, 2);
            SensitivityMethod::Morris {
                r: r_,
                levels,
                delta: r.opt(s, "delta"),
            }
        }
        "fast" => {
            let m = r.or(s, "m", 4usize);
            r.at_least(s, "m", m, 1);
            SensitivityMethod::Fast {
                n: r.or(s, "n", 1001),
                m,
            }
        }
        "sobol" => {
            let n = r.or(s, "n", 10_000usize);
            r.at_least(s, "n", n, 4);
            SensitivityMethod::Sobol { n }
        }
        other => {
            r.diag(s, "method", format!("unknown method `{other}`"));
            return None;
        }
    };
    let seed = r.opt(s, "seed");
    if !matches!(method, SensitivityMethod::Fast { .. }) && seed.is_none() && r.raw(s, "seed").is_none() {
        r.diag(s, "seed", "missing (required by this method)");
    }
    Some(SensitivityCfg { method, seed })
}

fn parse_reference(r: &mut Reader, s: &str) -> Option<ReferenceCfg> {
    let path = r.path(s, "reference");
    if path.is_none() {
        r.diag(s, "reference", "missing");
    }
    Some(ReferenceCfg {
        path: path?,
        column: r.raw(s, "column").unwrap_or("theta").to_string(),
        weights: r.raw(s, "weights").map(String::from),
    })
}

fn parse_calibrate(r: &mut Reader) -> Option<CalibrateCfg> {
    let s = "calibrate";
    let reference = parse_reference(r, s);
    let parameters: Vec<String> = match r.list::<String>(s, "parameters") {
        Some(p) => p,
        None => {
            if r.raw(s, "parameters").is_none() {
                r.diag(s, "parameters", "missing");
            }
            return None;
        }
    };
    for p in &parameters {
        if !MATERIAL_NAMES.contains(&p.as_str()) {
            r.diag(
                s,
                "parameters",
                format!("`{p}` is not one of {}", MATERIAL_NAMES.join(" ")),
            );
        }
    }
    let start: Vec<f64> = r.list(s, "start").unwrap_or_default();
    let step: Vec<f64> = r.list(s, "step").unwrap_or_default();
    for (key, v) in [("start", &start), ("step", &step)] {
        if v.len() != parameters.len() {
            r.diag(s, key, format!("expected {} values", parameters.len()));
        }
    }
    if step.iter().any(|v| !(*v > 0.0)) {
        r.diag(s, "step", "steps must be positive");
    }
    let tol = r.or(s, "tol", 1e-8);
    r.positive(s, "tol", tol);
    let max_evals = r.or(s, "max_evals", 1000usize);
    r.at_least(s, "max_evals", max_evals, 1);
    Some(CalibrateCfg {
        reference: reference?,
        parameters,
        start,
        step,
        tol,
        max_evals,
    })
}

fn parse_moo(r: &mut Reader, s: &str, defaults: MooOptions) -> MooOptions {
    let o = MooOptions {
        pop_size: r.or(s, "pop_size", defaults.pop_size),
        keep_fraction: r.or(s, "keep_fraction", defaults.keep_fraction),
        max_evals: r.or(s, "max_evals", defaults.max_evals),
        eta_crossover: r.or(s, "eta_crossover", defaults.eta_crossover),
        eta_mutation: r.or(s, "eta_mutation", defaults.eta_mutation),
    };
    r.at_least(s, "pop_size", o.pop_size, 4);
    if !(o.keep_fraction > 0.0 && o.keep_fraction < 1.0) {
        r.diag(s, "keep_fraction", "must lie in (0, 1)");
    }
    r.at_least(s, "max_evals", o.max_evals, o.pop_size);
    o
}

fn parse_optimize(r: &mut Reader) -> Option<OptimizeCfg> {
    let s = "optimize";
    let objectives: Vec<String> = r
        .raw(s, "objectives")
        .unwrap_or("y")
        .split(';')
        .map(|o| o.trim().to_string())
        .filter(|o| !o.is_empty())
        .collect();
    if objectives.is_empty() {
        r.diag(s, "objectives", "no objective given");
    }
    for o in &objectives {
        if let Err(e) = uqkit::dataserver::Expr::parse(o) {
            r.diag(s, "objectives", format!("`{o}`: {e}"));
        }
    }
    let options = parse_moo(r, s, MooOptions::default());
    let seed = r.req(s, "seed")?;
    Some(OptimizeCfg {
        objectives,
        options,
        seed,
    })
}

fn parse_ego(r: &mut Reader) -> Option<EgoCfg> {
    let s = "ego";
    let objective = match r.raw(s, "objective").unwrap_or("model") {
        "model" => EgoObjective::Model,
        "rms" => EgoObjective::Rms,
        "mse" => EgoObjective::Mse,
        other => {
            r.diag(s, "objective", format!("unknown objective `{other}`"));
            EgoObjective::Model
        }
    };
    let reference = if objective == EgoObjective::Model {
        None
    } else {
        parse_reference(r, s)
    };
    let gp = parse_kernel(r, s);
    let defaults = uqkit::optimizer::EgoConfig::new(0, gp.clone()).inner;
    let inner = parse_moo(r, s, defaults);
    let budget = r.req(s, "budget");
    let seed = r.req(s, "seed");
    Some(EgoCfg {
        budget: budget?,
        seed: seed?,
        objective,
        reference,
        gp,
        inner,
    })
}

/// Checks that the study provides what `action` needs.
pub fn requirements(study: &Study, action: Action) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    let need_inputs = |d: &mut Vec<Diagnostic>| {
        if study.inputs.is_empty() && study.rejected_inputs.is_empty() {
            d.push(Diagnostic::new("inputs", "", "at least one input is required"));
        }
    };
    let need_design = |d: &mut Vec<Diagnostic>| {
        if study.design.is_none() {
            d.push(Diagnostic::new("design", "", "section required"));
        }
    };
    let need_variant = |d: &mut Vec<Diagnostic>| -> Option<ModelVariant> {
        match &study.model {
            None => {
                d.push(Diagnostic::new("model", "", "section required"));
                None
            }
            Some(m) => {
                if m.variant.is_none() {
                    d.push(Diagnostic::new("model", "variant", "missing"));
                }
                m.variant
            }
        }
    };
    let need_model_inputs = |d: &mut Vec<Diagnostic>, v: ModelVariant| {
        for name in v.input_names() {
            if !study.inputs.iter().any(|(n, _)| n == name) && !study.rejected_inputs.iter().any(|n| n == name) {
                d.push(Diagnostic::new(
                    "inputs",
                    name,
                    format!("required by the {} model", v.name()),
                ));
            }
        }
        for (n, _) in &study.inputs {
            if !v.input_names().contains(&n.as_str()) {
                d.push(Diagnostic::new(
                    "inputs",
                    n,
                    format!("not an input of the {} model", v.name()),
                ));
            }
        }
    };
    let need_bounded = |d: &mut Vec<Diagnostic>| {
        for (n, dist) in &study.inputs {
            let (lo, hi) = dist.support();
            if !(lo.is_finite() && hi.is_finite()) {
                d.push(Diagnostic::new(
                    "inputs",
                    n,
                    "needs a bounded law, which gives the search box",
                ));
            }
        }
    };
    if let Some(own) = action.own_section() {
        let present = match action {
            Action::Surrogate => study.surrogate.is_some(),
            Action::Sensitivity => study.sensitivity.is_some(),
            Action::Calibrate => study.calibrate.is_some(),
            Action::Optimize => study.optimize.is_some(),
            Action::Ego => study.ego.is_some(),
            _ => true,
        };
        if !present {
            d.push(Diagnostic::new(own, "", "section required"));
        }
    }
    match action {
        Action::Sample => {
            need_inputs(&mut d);
            need_design(&mut d);
        }
        Action::Model => {
            if let Some(v) = need_variant(&mut d) {
                if study.model.as_ref().and_then(|m| m.input.as_ref()).is_none() {
                    need_design(&mut d);
                    need_model_inputs(&mut d, v);
                }
            }
        }
        Action::Propagate => {
            if let Some(v) = need_variant(&mut d) {
                if !study.model.as_ref().is_some_and(ModelCfg::is_physical) {
                    d.push(Diagnostic::new(
                        "model",
                        "variant",
                        "propagate needs a physical variant",
                    ));
                }
                need_model_inputs(&mut d, v);
            }
            need_design(&mut d);
        }
        Action::Surrogate => {
            if let Some(sc) = &study.surrogate {
                if sc.train.is_none() {
                    need_design(&mut d);
                    if let Some(v) = need_variant(&mut d) {
                        need_model_inputs(&mut d, v);
                    }
                }
                if sc.test_n > 0 {
                    need_inputs(&mut d);
                    if let Some(v) = need_variant(&mut d) {
                        need_model_inputs(&mut d, v);
                    }
                }
                if sc.inputs.is_none() && study.inputs.is_empty() {
                    d.push(Diagnostic::new(
                        "surrogate",
                        "inputs",
                        "missing (no [inputs] to default to)",
                    ));
                }
                if matches!(sc.family, SurrogateFamily::Pc(_)) && study.inputs.is_empty() {
                    d.push(Diagnostic::new(
                        "inputs",
                        "",
                        "pc needs the input laws to pick its polynomials",
                    ));
                }
            }
        }
        Action::Sensitivity => {
            if let Some(v) = need_variant(&mut d) {
                need_model_inputs(&mut d, v);
            }
        }
        Action::Calibrate => {}
        Action::Optimize => {
            need_inputs(&mut d);
            need_bounded(&mut d);
            if let Some(v) = need_variant(&mut d) {
                need_model_inputs(&mut d, v);
            }
        }
        Action::Ego => {
            need_inputs(&mut d);
            need_bounded(&mut d);
            need_design(&mut d);
            match study.ego.as_ref().map(|e| e.objective) {
                Some(EgoObjective::Model) => {
                    if let Some(v) = need_variant(&mut d) {
                        need_model_inputs(&mut d, v);
                    }
                }
                Some(_) => {
                    for (n, _) in &study.inputs {
                        if !MATERIAL_NAMES.contains(&n.as_str()) {
                            d.push(Diagnostic::new(
                                "inputs",
                                n,
                                "calibrated inputs must be material parameters",
                            ));
                        }
                    }
                }
                None => {}
            }
        }
    }
    d
}

/// Diagnostics for a configuration file. The action is the one named by the
/// action section; a file without one is checked as a `sample` study. An
/// empty list means the study can run.
pub fn validate_config(path: &Path) -> Vec<Diagnostic> {
    match load(path) {
        Err(e) => vec![Diagnostic::new("file", "", e)],
        Ok((study, mut diags)) => {
            let action = implied_action(&study);
            diags.extend(requirements(&study, action));
            diags
        }
    }
}

pub fn implied_action(study: &Study) -> Action {
    if study.surrogate.is_some() {
        Action::Surrogate
    } else if study.sensitivity.is_some() {
        Action::Sensitivity
    } else if study.calibrate.is_some() {
        Action::Calibrate
    } else if study.optimize.is_some() {
        Action::Optimize
    } else if study.ego.is_some() {
        Action::Ego
    } else {
        Action::Sample
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diags(text: &str) -> Vec<Diagnostic> {
        let (study, mut d) = parse(text, Path::new("."));
        d.extend(requirements(&study, implied_action(&study)));
        d
    }

    #[test]
    fn minimal_config_is_clean() {
        assert_eq!(
            diags("[inputs]\nx = Uniform(0, 1)\n[design]\nmethod = lhs\nn = 10\nseed = 1\n"),
            vec![]
        );
    }

    #[test]
    fn missing_law_parameter_names_the_key() {
        let d = diags("[inputs]\nx = Normal(1)\n[design]\nmethod = lhs\nn = 10\nseed = 1\n");
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].section.as_str(), d[0].key.as_str()), ("inputs", "x"));
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        // Determinant 0.19 - 2 * 0.9 * 1.71 < 0 with a positive diagonal: indefinite.
        let text = "[inputs]\na = Uniform(0, 1)\nb = Uniform(0, 1)\nc = Uniform(0, 1)\n\
                    [design]\nmethod = lhs\nn = 10\nseed = 1\n\
                    [dependence]\nrow_1 = 1 0.9 -0.9\nrow_2 = 0.9 1 0.9\nrow_3 = -0.9 0.9 1\n";
        let d = diags(text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].to_string(), "dependence: matrix not positive definite");
    }

    #[test]
    fn structural_errors() {
        let d = diags("[inputs]\nx = Uniform(0, 1)\n[design]\nmethod = lhs\nn = 10\nsed = 1\n");
        assert!(d.iter().any(|d| d.key == "sed" && d.message == "unknown key"));
        assert!(d.iter().any(|d| d.key == "seed"));
        let d = diags("[inputs]\nx = Uniform(0, 1)\n[optimize]\nseed = 1\n[ego]\nbudget = 1\nseed = 1\n");
        assert!(d.iter().any(|d| d.message.starts_with("only one action section")));
        let d = diags("[inputs]\nx = Normal(0, 1)\n[model]\nvariant = neg_h_of_t\n[optimize]\nseed = 2\n");
        assert!(d.iter().any(|d| d.key == "x" && d.message.contains("bounded")));
        assert!(d.iter().any(|d| d.key == "t"));
    }

    #[test]
    fn every_consumed_key_is_documented() {
        for action in Action::ALL {
            let help = key_help(action.sections());
            for sec in action.sections() {
                assert!(help.contains(&format!("[{sec}]")));
            }
        }
    }
}
