//! Executes an [`ExperimentSpec`] and writes CSV outputs plus a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cyberdyn::binom::{critical_nu, integrate_nu, ApproxModel};
use cyberdyn::combat::Combat;
use cyberdyn::generate::{
    fixed_variance_sequence, gen_chung_lu, gen_clustered, gen_er, powerlaw_degree_sequence, ChungLuOptions,
};
use cyberdyn::graph::{load_graph, Graph};
use cyberdyn::markov::{run_seed, simulate_ensemble, EnsembleOptions, InitialCondition, RunOptions};
use cyberdyn::meanfield::{integrate, IntegrateOptions};
use cyberdyn::metrics::{relative_error_of_runs, ComparisonSeries};
use cyberdyn::thresholds::{
    alpha_threshold, beta_threshold, estimate_sigma_markov, level_grid, strategic_probabilities, strategic_thresholds,
    InitRule, SigmaMarkovOptions, StrategicTarget,
};

use crate::spec::{CombatSpec, ExperimentSpec, GraphRecipe, InitSpec, Kind, Rule};

#[derive(Debug, Clone, Serialize)]
pub struct GraphEntry {
    pub label: String,
    pub description: String,
    pub n: usize,
    pub edges: usize,
    pub hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedTable {
    pub master_seed: u64,
    /// Seed of run `i` of every ensemble; grid levels share the table.
    pub run_seeds: Vec<u64>,
    pub graph_seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub kind: String,
    pub spec_hash: String,
    pub tool_version: String,
    pub graphs: Vec<GraphEntry>,
    pub seeds: SeedTable,
    pub wall_clock_seconds: f64,
    /// SHA-256 of every output file, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct BuiltGraph {
    label: String,
    description: String,
    /// Exponent of the generating power law, when there is one.
    gamma: Option<f64>,
    seed: Option<u64>,
    graph: Graph,
}

struct BuiltCombat {
    label: String,
    f: Combat<f64>,
    sigma: Option<f64>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn create(dir: &Path, rel: &str) -> Result<BufWriter<File>> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// A generated or loaded graph with a one-line description.
pub struct RecipeGraph {
    pub description: String,
    /// Exponent of the generating power law, when there is one.
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub graph: Graph,
}

/// Expands one recipe (one graph per swept value). `base` resolves file paths.
pub fn build_recipe(recipe: &GraphRecipe, default_seed: u64, base: &Path) -> Result<Vec<RecipeGraph>> {
    let mut out = Vec::new();
    let mut push = |description: String, gamma: Option<f64>, seed: Option<u64>, graph: Graph| {
        out.push(RecipeGraph { description, gamma, seed, graph });
    };
    match recipe {
        GraphRecipe::Er { n, p, seed } => {
            let s = seed.unwrap_or(default_seed);
            for p in p.to_vec() {
                push(format!("er n={n} p={p}"), None, Some(s), gen_er(*n, p, s)?);
            }
        }
        GraphRecipe::Powerlaw { n, gamma, d_min, d_max, cap, giant, seed } => {
            let s = seed.unwrap_or(default_seed);
            for gm in gamma.to_vec() {
                let d = powerlaw_degree_sequence(*n, gm, *d_min, *d_max)?;
                let mut g = gen_chung_lu(&d, ChungLuOptions { cap_probabilities: *cap }, s)?;
                if *giant {
                    g = g.largest_component();
                }
                push(format!("powerlaw n={n} gamma={gm} d=[{d_min},{d_max}]"), Some(gm), Some(s), g);
            }
        }
        GraphRecipe::FixedVariance { n, gamma, r, dvar, cap, seed } => {
            let s = seed.unwrap_or(default_seed);
            for gm in gamma.to_vec() {
                let d = fixed_variance_sequence(*n, gm, *r, *dvar)?;
                let g = gen_chung_lu(&d, ChungLuOptions { cap_probabilities: *cap }, s)?;
                push(format!("fixed_variance n={n} gamma={gm} r={r} dvar={dvar}"), Some(gm), Some(s), g);
            }
        }
        GraphRecipe::Clustered { sizes, p_in, p_out, seed } => {
            let s = seed.unwrap_or(default_seed);
            let g = gen_clustered(sizes, *p_in, *p_out, s)?;
            push(format!("clustered sizes={sizes:?} p_in={p_in} p_out={p_out}"), None, Some(s), g);
        }
        GraphRecipe::File { path } => {
            let g = load_graph(base.join(path))?;
            push(format!("file {path}"), None, None, g);
        }
    }
    Ok(out)
}

fn build_graphs(spec: &ExperimentSpec, base: &Path) -> Result<Vec<BuiltGraph>> {
    let mut out = Vec::new();
    for (path, recipe) in spec.graphs() {
        for r in build_recipe(&recipe, spec.seed, base).with_context(|| format!("stage graph ({path})"))? {
            let label = format!("g{}", out.len());
            out.push(BuiltGraph { label, description: r.description, gamma: r.gamma, seed: r.seed, graph: r.graph });
        }
    }
    Ok(out)
}

fn build_combats(spec: &ExperimentSpec, base: &Path) -> Result<Vec<BuiltCombat>> {
    let mut out = Vec::new();
    for (path, c) in spec.combats() {
        let stage = |e: anyhow::Error| e.context(format!("stage combat ({path})"));
        match &c {
            CombatSpec::Type1 { sigma } => {
                for s in sigma.to_vec() {
                    let f = Combat::type_i(s).map_err(|e| stage(e.into()))?;
                    out.push(BuiltCombat { label: format!("type1_sigma{s}"), f, sigma: Some(s) });
                }
            }
            CombatSpec::Type2 { tau, exponent } => {
                let f = Combat::type_ii(*tau, *exponent).map_err(|e| stage(e.into()))?;
                out.push(BuiltCombat { label: format!("type2_tau{tau}_k{exponent}"), f, sigma: None });
            }
            CombatSpec::Type3 { exponent } => {
                let f = Combat::type_iii(*exponent).map_err(|e| stage(e.into()))?;
                out.push(BuiltCombat { label: format!("type3_a{exponent}"), f, sigma: None });
            }
            CombatSpec::Type4 { exponent } => {
                let f = Combat::type_iv(*exponent).map_err(|e| stage(e.into()))?;
                out.push(BuiltCombat { label: format!("type4_a{exponent}"), f, sigma: None });
            }
            CombatSpec::Table { path: file } => {
                let f = Combat::from_table_file(base.join(file)).map_err(|e| stage(e.into()))?;
                out.push(BuiltCombat { label: format!("table{}", out.len()), f, sigma: None });
            }
        }
    }
    Ok(out)
}

fn initial_condition(g: &Graph, init: &InitSpec, level: f64) -> Result<InitialCondition<f64>> {
    Ok(match init.rule {
        Rule::Uniform => InitialCondition::uniform(g.n(), level),
        Rule::Strategic => {
            let (_, b0, _) = strategic_probabilities(g, StrategicTarget::Fraction(level))?;
            InitialCondition::Bernoulli(b0)
        }
        Rule::StrategicPhi => {
            let (_, b0, _) = strategic_probabilities(g, StrategicTarget::Phi(level))?;
            InitialCondition::ConditionedPhi {
                b0,
                target: level,
                tolerance: init.tolerance,
                max_attempts: init.max_attempts,
            }
        }
    })
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    dir: &'a Path,
    graphs: Vec<BuiltGraph>,
    combats: Vec<BuiltCombat>,
}

impl Ctx<'_> {
    fn run_options(&self) -> RunOptions<f64> {
        RunOptions::new(self.spec.dt, self.spec.horizon.unwrap_or(0.0)).sample_every(self.spec.sample_every)
    }

    fn runs(&self) -> usize {
        self.spec.runs.unwrap_or(0)
    }

    fn write_graphs_csv(&self) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(self.dir, "graphs.csv")?);
        w.write_record(["graph", "description", "n", "edges", "mean_degree", "degree_std", "hash"])?;
        for g in &self.graphs {
            w.write_record([
                g.label.clone(),
                g.description.clone(),
                g.graph.n().to_string(),
                g.graph.edge_count().to_string(),
                fmt_num(g.graph.mean_degree()),
                fmt_num(g.graph.degree_std()),
                g.graph.content_hash(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn dynamics(&self) -> Result<()> {
        let mut summary = csv::Writer::from_writer(create(self.dir, "dynamics_summary.csv")?);
        summary.write_record([
            "graph",
            "combat",
            "rule",
            "level",
            "final_markov",
            "final_meanfield",
            "relative_gap",
            "n_all_blue",
            "n_all_red",
            "n_unabsorbed",
        ])?;
        for bg in &self.graphs {
            for bc in &self.combats {
                for (ipath, init) in self.spec.inits() {
                    for level in init.levels.as_ref().map(|l| l.to_vec()).unwrap_or_default() {
                        let stage = format!("stage dynamics ({}, {}, {ipath}, level {level})", bg.label, bc.label);
                        let ic = initial_condition(&bg.graph, &init, level).context(stage.clone())?;
                        let opts = EnsembleOptions::new(self.run_options(), self.runs(), self.spec.seed);
                        let e = simulate_ensemble(&bg.graph, &bc.f, &ic, opts).context(stage.clone())?;
                        let mopts = IntegrateOptions::new(self.spec.dt, self.spec.horizon.unwrap_or(0.0))
                            .sample_every(self.spec.sample_every);
                        let m = integrate(&bg.graph, &bc.f, &ic.probabilities(), mopts).context(stage.clone())?;
                        let stem = format!("dynamics/{}_{}_{}_{level}", bg.label, bc.label, init.rule.as_str());
                        e.write_csv(create(self.dir, &format!("{stem}_markov.csv"))?)?;
                        m.write_csv(create(self.dir, &format!("{stem}_meanfield.csv"))?)?;
                        let series = ComparisonSeries::from_runs(&e, &m).context(stage)?;
                        series.write_csv(create(self.dir, &format!("{stem}_comparison.csv"))?)?;
                        let fm = *e.mean_xi.last().unwrap_or(&f64::NAN);
                        let fb = *m.mean_blue.last().unwrap_or(&f64::NAN);
                        summary.write_record([
                            bg.label.clone(),
                            bc.label.clone(),
                            init.rule.as_str().to_string(),
                            fmt_num(level),
                            fmt_num(fm),
                            fmt_num(fb),
                            series.relative_error().map(fmt_num).unwrap_or_default(),
                            e.count_all_blue().to_string(),
                            e.count_all_red().to_string(),
                            e.count_unabsorbed().to_string(),
                        ])?;
                    }
                }
            }
        }
        summary.flush()?;
        Ok(())
    }

    fn sigma_markov(&self) -> Result<()> {
        let grid_spec = self.spec.grid.clone().unwrap_or_default();
        let grid = level_grid(grid_spec.start, grid_spec.stop, grid_spec.step);
        let mut summary = csv::Writer::from_writer(create(self.dir, "sigma_markov_summary.csv")?);
        summary.write_record([
            "graph",
            "gamma",
            "combat",
            "sigma",
            "rule",
            "mean_degree",
            "a1",
            "b1",
            "sigma_markov",
            "alpha_threshold",
            "beta_threshold",
            "critical_nu",
        ])?;
        for bg in &self.graphs {
            let degrees: Vec<f64> = bg.graph.degrees().into_iter().map(|d| d as f64).collect();
            for bc in &self.combats {
                for (ipath, init) in self.spec.inits() {
                    let stage = format!("stage sigma_markov ({}, {}, {ipath})", bg.label, bc.label);
                    let rule = match init.rule {
                        Rule::Uniform => InitRule::Uniform,
                        _ => InitRule::Strategic,
                    };
                    let opts =
                        SigmaMarkovOptions { run: self.run_options(), runs: self.runs(), master_seed: self.spec.seed };
                    let est = estimate_sigma_markov(&bg.graph, &bc.f, rule, &grid, opts).context(stage.clone())?;
                    let stem = format!("sigma_markov/{}_{}_{}.csv", bg.label, bc.label, init.rule.as_str());
                    est.write_csv(create(self.dir, &stem)?)?;
                    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
                    let (alpha, beta, nu) = match bc.sigma {
                        Some(s) => {
                            let model =
                                ApproxModel::from_mean_degree(bg.graph.mean_degree(), s).context(stage.clone())?;
                            (
                                Some(alpha_threshold(&degrees, s).context(stage.clone())?),
                                Some(beta_threshold(&degrees, s).context(stage.clone())?),
                                critical_nu(&model).root(),
                            )
                        }
                        None => (None, None, None),
                    };
                    summary.write_record([
                        bg.label.clone(),
                        opt(bg.gamma),
                        bc.label.clone(),
                        opt(bc.sigma),
                        init.rule.as_str().to_string(),
                        fmt_num(bg.graph.mean_degree()),
                        opt(est.a1),
                        opt(est.b1),
                        opt(est.sigma_markov),
                        opt(alpha),
                        opt(beta),
                        opt(nu),
                    ])?;
                }
            }
        }
        summary.flush()?;
        Ok(())
    }

    fn relative_error(&self) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(self.dir, "relative_error.csv")?);
        w.write_record([
            "graph",
            "gamma",
            "combat",
            "rule",
            "level",
            "avg_degree",
            "degree_std",
            "mean_re",
            "excluded_nodes",
        ])?;
        for bg in &self.graphs {
            for bc in &self.combats {
                for (ipath, init) in self.spec.inits() {
                    for level in init.levels.as_ref().map(|l| l.to_vec()).unwrap_or_default() {
                        let stage =
                            format!("stage relative_error ({}, {}, {ipath}, level {level})", bg.label, bc.label);
                        let ic = initial_condition(&bg.graph, &init, level).context(stage.clone())?;
                        let opts =
                            EnsembleOptions::new(self.run_options(), self.runs(), self.spec.seed).track_nodes(true);
                        let e = simulate_ensemble(&bg.graph, &bc.f, &ic, opts).context(stage.clone())?;
                        let mopts = IntegrateOptions::new(self.spec.dt, self.spec.horizon.unwrap_or(0.0))
                            .sample_every(self.spec.sample_every)
                            .keep_states(true);
                        let m = integrate(&bg.graph, &bc.f, &ic.probabilities(), mopts).context(stage.clone())?;
                        let re = relative_error_of_runs(&e, &m).context(stage)?;
                        w.write_record([
                            bg.label.clone(),
                            bg.gamma.map(fmt_num).unwrap_or_default(),
                            bc.label.clone(),
                            init.rule.as_str().to_string(),
                            fmt_num(level),
                            fmt_num(bg.graph.mean_degree()),
                            fmt_num(bg.graph.degree_std()),
                            re.mean.map(fmt_num).unwrap_or_default(),
                            re.excluded.to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    fn strategic_thresholds(&self) -> Result<()> {
        let s = self.spec.strategic.as_ref().ok_or_else(|| anyhow!("strategic: missing"))?;
        let mut w = csv::Writer::from_writer(create(self.dir, "strategic_thresholds.csv")?);
        w.write_record(["gamma", "z", "sigma", "h", "alpha", "beta", "gap", "ratio"])?;
        for gamma in s.gamma.to_vec() {
            let t = strategic_thresholds(s.z, gamma, s.sigma).context("stage strategic_thresholds")?;
            w.write_record([gamma, s.z, s.sigma, t.h, t.alpha, t.beta, t.gap, t.ratio].map(fmt_num))?;
        }
        w.flush()?;
        Ok(())
    }

    fn binom_curve(&self) -> Result<()> {
        let b = self.spec.binom.as_ref().ok_or_else(|| anyhow!("binom: missing"))?;
        let mut summary = csv::Writer::from_writer(create(self.dir, "critical_nu.csv")?);
        summary.write_record(["mean_degree", "sigma", "critical_nu"])?;
        for d in b.mean_degree.to_vec() {
            for sigma in b.sigma.to_vec() {
                let stage = format!("stage binom_curve (d {d}, sigma {sigma})");
                let model = ApproxModel::new(d, sigma).context(stage.clone())?;
                model
                    .write_curve_csv(create(self.dir, &format!("binom/theta_d{d}_s{sigma}.csv"))?, b.points)
                    .context(stage.clone())?;
                summary.write_record([
                    d.to_string(),
                    fmt_num(sigma),
                    critical_nu(&model).root().map(fmt_num).unwrap_or_default(),
                ])?;
                if let (Some(nu0), Some(h)) = (&b.nu0, b.horizon) {
                    let mut w = csv::Writer::from_writer(create(self.dir, &format!("binom/nu_d{d}_s{sigma}.csv"))?);
                    w.write_record(["nu0", "t", "nu"])?;
                    for x0 in nu0.to_vec() {
                        let path = integrate_nu(&model, x0, self.spec.dt, h).context(stage.clone())?;
                        for (k, nu) in path.iter().enumerate().step_by(self.spec.sample_every) {
                            w.write_record([fmt_num(x0), fmt_num(k as f64 * self.spec.dt), fmt_num(*nu)])?;
                        }
                    }
                    w.flush()?;
                }
            }
        }
        summary.flush()?;
        Ok(())
    }
}

fn collect_outputs(dir: &Path, rel: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir.join(rel))?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let r = rel.join(e.file_name());
        if e.file_type()?.is_dir() {
            collect_outputs(dir, &r, out)?;
        } else if r != Path::new(MANIFEST_FILE) {
            let key = r.to_string_lossy().replace('\\', "/");
            out.insert(key, sha256_file(&dir.join(&r))?);
        }
    }
    Ok(())
}

/// Runs the spec into `out_root/<outputs>` and returns the manifest, which is also
/// written there as `manifest.json`. `base` resolves relative file paths in the spec.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path, out_root: &Path) -> Result<(RunManifest, PathBuf)> {
    let start = Instant::now();
    let dir = out_root.join(spec.output_dir());
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let graphs = build_graphs(spec, base)?;
    let combats = build_combats(spec, base)?;
    let ctx = Ctx { spec, dir: &dir, graphs, combats };
    if !ctx.graphs.is_empty() {
        ctx.write_graphs_csv()?;
    }
    match spec.kind {
        Kind::Dynamics => ctx.dynamics()?,
        Kind::SigmaMarkov => ctx.sigma_markov()?,
        Kind::RelativeError => ctx.relative_error()?,
        Kind::StrategicThresholds => ctx.strategic_thresholds()?,
        Kind::BinomCurve => ctx.binom_curve()?,
    }
    fs::write(dir.join("spec.toml"), spec.to_toml())?;
    let mut outputs = BTreeMap::new();
    collect_outputs(&dir, Path::new(""), &mut outputs)?;
    let manifest = RunManifest {
        name: spec.name.clone(),
        kind: spec.kind.as_str().to_string(),
        spec_hash: spec.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        graphs: ctx
            .graphs
            .iter()
            .map(|g| GraphEntry {
                label: g.label.clone(),
                description: g.description.clone(),
                n: g.graph.n(),
                edges: g.graph.edge_count(),
                hash: g.graph.content_hash(),
            })
            .collect(),
        seeds: SeedTable {
            master_seed: spec.seed,
            run_seeds: (0..spec.runs.unwrap_or(0) as u64).map(|i| run_seed(spec.seed, i)).collect(),
            graph_seeds: ctx.graphs.iter().filter_map(|g| g.seed.map(|s| (g.label.clone(), s))).collect(),
        },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok((manifest, dir))
}
