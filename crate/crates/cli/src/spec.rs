//! Experiment spec files.
//!
//! A spec is a TOML document. `graph`, `combat` and `init` may each be a single table or
//! an array of tables, and sweepable parameters accept a number or a list of numbers.
//! The runner takes the cartesian product of the expanded entries.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A value given once or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(x) => vec![x.clone()],
            Self::Many(xs) => xs.clone(),
        }
    }

    /// Items paired with their field path below `base`.
    pub fn with_paths(&self, base: &str) -> Vec<(String, T)> {
        match self {
            Self::One(x) => vec![(base.to_string(), x.clone())],
            Self::Many(xs) => xs.iter().enumerate().map(|(i, x)| (format!("{base}[{i}]"), x.clone())).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Many(xs) if xs.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Markov ensemble and mean-field trajectory for every graph, combat and level.
    Dynamics,
    /// Threshold bracket over an occupation grid.
    SigmaMarkov,
    /// Node-averaged relative error between the two models.
    RelativeError,
    /// Analytic strategic thresholds over a range of exponents.
    StrategicThresholds,
    /// Binomial approximation curves and critical fractions.
    BinomCurve,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Dynamics => "dynamics",
            Self::SigmaMarkov => "sigma_markov",
            Self::RelativeError => "relative_error",
            Self::StrategicThresholds => "strategic_thresholds",
            Self::BinomCurve => "binom_curve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphRecipe {
    Er {
        n: usize,
        p: OneOrMany<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Chung–Lu graph over a truncated power-law expected-degree sequence.
    Powerlaw {
        n: usize,
        gamma: OneOrMany<f64>,
        d_min: f64,
        d_max: f64,
        #[serde(default = "yes")]
        cap: bool,
        #[serde(default)]
        giant: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Power law on `[d_min, r d_min]` with `d_min` fixed by the variance `dvar`.
    FixedVariance {
        n: usize,
        gamma: OneOrMany<f64>,
        r: f64,
        dvar: f64,
        #[serde(default = "yes")]
        cap: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Clustered {
        sizes: Vec<usize>,
        p_in: f64,
        p_out: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Edge list on disk, relative to the spec file.
    File { path: String },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CombatSpec {
    Type1 {
        sigma: OneOrMany<f64>,
    },
    Type2 {
        #[serde(default = "half")]
        tau: f64,
        #[serde(default = "two")]
        exponent: f64,
    },
    Type3 {
        #[serde(default = "half")]
        exponent: f64,
    },
    Type4 {
        #[serde(default = "two")]
        exponent: f64,
    },
    /// Two-column `x y` table on disk, relative to the spec file.
    Table {
        path: String,
    },
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `B_v(0) = level` everywhere.
    Uniform,
    /// Degree-proportional probabilities with mean `level`.
    Strategic,
    /// Degree-proportional probabilities with expected degree-weighted fraction `level`,
    /// each run redrawn until its realized fraction is within `tolerance`.
    StrategicPhi,
}

impl Rule {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Strategic => "strategic",
            Self::StrategicPhi => "strategic_phi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub rule: Rule,
    /// Initial levels; ignored by `sigma_markov`, which sweeps `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<OneOrMany<f64>>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_tolerance() -> f64 {
    0.005
}

fn default_attempts() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { start: 0.05, stop: 0.95, step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategicSpec {
    /// `d_max / d_min`.
    pub z: f64,
    pub sigma: f64,
    pub gamma: OneOrMany<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomSpec {
    pub mean_degree: OneOrMany<usize>,
    pub sigma: OneOrMany<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Initial fractions for which `nu(t)` is integrated; optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

fn default_points() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub kind: Kind,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Output subdirectory below the output root; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<OneOrMany<GraphRecipe>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combat: Option<OneOrMany<CombatSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<OneOrMany<InitSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategic: Option<StrategicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binom: Option<BinomSpec>,
    /// Declared runtime budget in minutes on an 8-core machine; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_minutes: Option<f64>,
}

fn default_dt() -> f64 {
    0.01
}

fn default_sample_every() -> usize {
    100
}

/// A schema or range violation at a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub msg: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.msg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecErrors(pub Vec<FieldError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

impl SpecErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

fn single(path: impl Into<String>, msg: impl Into<String>) -> SpecErrors {
    SpecErrors(vec![FieldError { path: path.into(), msg: msg.into() }])
}

impl ExperimentSpec {
    /// Parses and validates a spec.
    pub fn from_toml(text: &str) -> Result<Self, SpecErrors> {
        let de = toml::Deserializer::new(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_string() } else { path };
            single(path, e.into_inner().message().trim().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpecErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| single("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec types always serialize")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn output_dir(&self) -> &str {
        self.outputs.as_deref().unwrap_or(&self.name)
    }

    pub fn graphs(&self) -> Vec<(String, GraphRecipe)> {
        self.graph.as_ref().map(|g| g.with_paths("graph")).unwrap_or_default()
    }

    pub fn combats(&self) -> Vec<(String, CombatSpec)> {
        self.combat.as_ref().map(|c| c.with_paths("combat")).unwrap_or_default()
    }

    pub fn inits(&self) -> Vec<(String, InitSpec)> {
        self.init.as_ref().map(|i| i.with_paths("init")).unwrap_or_default()
    }

    /// Checks every range and per-kind requirement, collecting all violations.
    pub fn validate(&self) -> Result<(), SpecErrors> {
        let mut v = Validator::default();
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            v.err("name", "must be a non-empty name without path separators");
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            v.err("dt", format!("{} not in (0, 1]", self.dt));
        }
        if self.sample_every == 0 {
            v.err("sample_every", "must be at least 1");
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                v.err("horizon", "must be positive and finite");
            }
        }
        if self.runs == Some(0) {
            v.err("runs", "must be at least 1");
        }
        for (p, g) in self.graphs() {
            v.graph(&p, &g);
        }
        for (p, c) in self.combats() {
            v.combat(&p, &c);
        }
        for (p, i) in self.inits() {
            v.init(&p, &i, self.kind);
        }
        let simulates = matches!(self.kind, Kind::Dynamics | Kind::SigmaMarkov | Kind::RelativeError);
        if simulates {
            for (key, present) in [
                ("graph", self.graph.as_ref().is_some_and(|x| !x.is_empty())),
                ("combat", self.combat.as_ref().is_some_and(|x| !x.is_empty())),
                ("init", self.init.as_ref().is_some_and(|x| !x.is_empty())),
                ("horizon", self.horizon.is_some()),
                ("runs", self.runs.is_some()),
            ] {
                if !present {
                    v.err(key, format!("required for kind {}", self.kind.as_str()));
                }
            }
        }
        if self.kind == Kind::SigmaMarkov {
            if let Some(g) = &self.grid {
                if !(g.start >= 0.0 && g.stop <= 1.0 && g.start <= g.stop) {
                    v.err("grid", "need 0 <= start <= stop <= 1");
                }
                if !(g.step > 0.0) {
                    v.err("grid.step", "must be positive");
                }
            }
        }
        if self.kind == Kind::StrategicThresholds {
            match &self.strategic {
                None => v.err("strategic", "required for kind strategic_thresholds"),
                Some(s) => {
                    if !(s.z >= 1.0) {
                        v.err("strategic.z", "must be at least 1");
                    }
                    v.unit_open("strategic.sigma", s.sigma);
                    for (p, g) in s.gamma.with_paths("strategic.gamma") {
                        if !(g > 0.0) {
                            v.err(&p, "must be positive");
                        }
                    }
                }
            }
        }
        if self.kind == Kind::BinomCurve {
            match &self.binom {
                None => v.err("binom", "required for kind binom_curve"),
                Some(b) => {
                    for (p, d) in b.mean_degree.with_paths("binom.mean_degree") {
                        if d == 0 {
                            v.err(&p, "must be at least 1");
                        }
                    }
                    for (p, s) in b.sigma.with_paths("binom.sigma") {
                        v.unit_closed(&p, s);
                    }
                    if b.points < 2 {
                        v.err("binom.points", "need at least 2 points");
                    }
                    if let Some(nu0) = &b.nu0 {
                        for (p, x) in nu0.with_paths("binom.nu0") {
                            v.unit_closed(&p, x);
                        }
                        if !b.horizon.is_some_and(|h| h > 0.0) {
                            v.err("binom.horizon", "required and positive when nu0 is given");
                        }
                    }
                }
            }
        }
        v.finish()
    }
}

#[derive(Default)]
struct Validator(Vec<FieldError>);

impl Validator {
    fn err(&mut self, path: &str, msg: impl Into<String>) {
        self.0.push(FieldError { path: path.to_string(), msg: msg.into() });
    }

    fn unit_closed(&mut self, path: &str, x: f64) {
        if !(0.0..=1.0).contains(&x) {
            self.err(path, format!("{x} not in [0, 1]"));
        }
    }

    fn unit_open(&mut self, path: &str, x: f64) {
        if !(x > 0.0 && x < 1.0) {
            self.err(path, format!("{x} not in (0, 1)"));
        }
    }

    fn sweep(&mut self, path: &str, xs: &OneOrMany<f64>, check: impl Fn(f64) -> bool, msg: &str) {
        if xs.is_empty() {
            self.err(path, "empty list");
        }
        for (p, x) in xs.with_paths(path) {
            if !check(x) {
                self.err(&p, format!("{x}: {msg}"));
            }
        }
    }

    fn graph(&mut self, base: &str, g: &GraphRecipe) {
        let at = |k: &str| format!("{base}.{k}");
        match g {
            GraphRecipe::Er { n, p, .. } => {
                if *n < 2 {
                    self.err(&at("n"), "need at least 2 nodes");
                }
                self.sweep(&at("p"), p, |x| x > 0.0 && x <= 1.0, "not in (0, 1]");
            }
            GraphRecipe::Powerlaw { n, gamma, d_min, d_max, .. } => {
                if *n < 2 {
                    self.err(&at("n"), "need at least 2 nodes");
                }
                self.sweep(&at("gamma"), gamma, |x| x > 0.0, "must be positive");
                if !(*d_min > 0.0) {
                    self.err(&at("d_min"), "must be positive");
                }
                if !(d_max >= d_min && d_max.is_finite()) {
                    self.err(&at("d_max"), "must be finite and at least d_min");
                }
            }
            GraphRecipe::FixedVariance { n, gamma, r, dvar, .. } => {
                if *n < 2 {
                    self.err(&at("n"), "need at least 2 nodes");
                }
                self.sweep(&at("gamma"), gamma, |x| x > 0.0, "must be positive");
                if !(*r > 1.0 && r.is_finite()) {
                    self.err(&at("r"), "must exceed 1");
                }
                if !(*dvar > 0.0) {
                    self.err(&at("dvar"), "must be positive");
                }
            }
            GraphRecipe::Clustered { sizes, p_in, p_out, .. } => {
                if sizes.is_empty() || sizes.contains(&0) {
                    self.err(&at("sizes"), "need non-empty clusters");
                }
                if !(*p_in > 0.0 && *p_in <= 1.0) {
                    self.err(&at("p_in"), format!("{p_in} not in (0, 1]"));
                }
                if !(*p_out >= 0.0 && p_out < p_in) {
                    self.err(&at("p_out"), "need 0 <= p_out < p_in");
                }
            }
            GraphRecipe::File { path } => {
                if path.is_empty() {
                    self.err(&at("path"), "empty path");
                }
            }
        }
    }

    fn combat(&mut self, base: &str, c: &CombatSpec) {
        let at = |k: &str| format!("{base}.{k}");
        match c {
            CombatSpec::Type1 { sigma } => self.sweep(&at("sigma"), sigma, |x| x > 0.0 && x < 1.0, "not in (0, 1)"),
            CombatSpec::Type2 { tau, exponent } => {
                self.unit_open(&at("tau"), *tau);
                if !(*exponent > 1.0) {
                    self.err(&at("exponent"), "must exceed 1");
                }
            }
            CombatSpec::Type3 { exponent } => self.unit_open(&at("exponent"), *exponent),
            CombatSpec::Type4 { exponent } => {
                if !(*exponent > 1.0 && exponent.is_finite()) {
                    self.err(&at("exponent"), "must exceed 1");
                }
            }
            CombatSpec::Table { path } => {
                if path.is_empty() {
                    self.err(&at("path"), "empty path");
                }
            }
        }
    }

    fn init(&mut self, base: &str, i: &InitSpec, kind: Kind) {
        let at = |k: &str| format!("{base}.{k}");
        match (&i.levels, kind) {
            (Some(levels), _) => self.sweep(&at("levels"), levels, |x| (0.0..=1.0).contains(&x), "not in [0, 1]"),
            (None, Kind::Dynamics | Kind::RelativeError) => {
                self.err(&at("levels"), format!("required for kind {}", kind.as_str()))
            }
            _ => {}
        }
        if !(i.tolerance >= 0.0) {
            self.err(&at("tolerance"), "must be non-negative");
        }
        if i.max_attempts == 0 {
            self.err(&at("max_attempts"), "must be at least 1");
        }
        if kind == Kind::SigmaMarkov && i.rule == Rule::StrategicPhi {
            self.err(&at("rule"), "sigma_markov sweeps uniform or strategic levels");
        }
    }

    fn finish(self) -> Result<(), SpecErrors> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(SpecErrors(self.0))
        }
    }
}

/// Markdown-ish reference for every spec key, printed by `describe --keys`.
pub const KEY_DOCS: &str = "\
top level
  name            output name (no path separators)
  description     free text
  kind            dynamics | sigma_markov | relative_error | strategic_thresholds | binom_curve
  seed            master seed; graphs use it unless they set their own, run i uses run_seed(seed, i)
  dt              step size of both models, (0, 1], default 0.01
  horizon         simulated time
  runs            Markov runs per ensemble or grid level
  sample_every    steps between recorded samples, default 100
  outputs         subdirectory below the output root, default name
  budget_minutes  declared runtime budget on 8 cores (informational)

[graph] (table or array of tables; p and gamma accept lists)
  generator = er              n, p, seed?
  generator = powerlaw        n, gamma, d_min, d_max, cap = true, giant = false, seed?
  generator = fixed_variance  n, gamma, r, dvar, cap = true, seed?
  generator = clustered       sizes, p_in, p_out, seed?
  generator = file            path (edge list, relative to the spec)

[combat] (table or array of tables)
  family = type1   sigma (number or list)
  family = type2   tau = 0.5, exponent = 2
  family = type3   exponent = 0.5
  family = type4   exponent = 2
  family = table   path (two columns x y)

[init] (table or array of tables)
  rule            uniform | strategic | strategic_phi
  levels          initial levels (dynamics, relative_error)
  tolerance       strategic_phi acceptance band, default 0.005
  max_attempts    strategic_phi redraw limit, default 10000

[grid] (sigma_markov)       start = 0.05, stop = 0.95, step = 0.01
[strategic] (strategic_thresholds)  z, sigma, gamma (number or list)
[binom] (binom_curve)       mean_degree, sigma (numbers or lists), points = 1000, nu0?, horizon?
";
