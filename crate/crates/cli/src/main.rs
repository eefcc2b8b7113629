use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use cyberdyn::binom::{critical_nu, ApproxModel};
use cyberdyn::combat::Combat;
use cyberdyn::graph::{load_graph, save_graph};
use cyberdyn::markov::RunOptions;
use cyberdyn::thresholds::{
    estimate_sigma_markov, level_grid, strategic_thresholds, threshold_report, InitRule, SigmaMarkovOptions,
};
use cyberdyn_cli::runner::{build_recipe, run_experiment};
use cyberdyn_cli::spec::{GraphRecipe, OneOrMany, KEY_DOCS};
use cyberdyn_cli::{bundled, ExperimentSpec, SpecErrors, BUNDLED};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "cyberdyn", version, about = "Cyber defense dynamics experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root directory.
    #[arg(long, global = true, env = "CYBERDYN_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled spec (by name) or a spec file.
    Run { spec: String },
    /// List bundled specs.
    List,
    /// Summarize a spec, or print the key reference with --keys.
    Describe {
        spec: Option<String>,
        #[arg(long)]
        keys: bool,
    },
    /// Validate spec files or names without running (all bundled specs by default).
    Validate { specs: Vec<String> },
    /// Estimate the Markov threshold of a Type I process on a graph file.
    SigmaMarkov(SigmaArgs),
    /// Analytic thresholds of a graph file, or of a power law with --z and --gamma.
    Thresholds(ThresholdArgs),
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Write theta(nu) - nu for the binomial approximation and report its root.
    BinomCurve {
        #[arg(long)]
        mean_degree: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// CSV destination (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Uniform,
    Strategic,
}

#[derive(Args)]
struct SigmaArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    rule: RuleArg,
    /// `start:stop:step`.
    #[arg(long, default_value = "0.05:0.95:0.01")]
    grid: String,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    sigma: f64,
    #[arg(long, conflicts_with_all = ["z", "gamma"])]
    graph: Option<PathBuf>,
    #[arg(long, requires = "gamma")]
    z: Option<f64>,
    #[arg(long, requires = "z")]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Generate a graph and write it as an edge list.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Er,
    Powerlaw,
    FixedVariance,
    Clustered,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    generator: Generator,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    dvar: Option<f64>,
    /// Comma-separated cluster sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    /// Keep only the largest connected component.
    #[arg(long)]
    giant: bool,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Validation(String),
    Runtime(anyhow::Error),
}

impl From<SpecErrors> for Failure {
    fn from(e: SpecErrors) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

/// Loads a bundled spec by name or a spec file; returns the directory for relative paths.
fn load_spec(arg: &str) -> Result<(ExperimentSpec, PathBuf), Failure> {
    if let Some(text) = bundled(arg) {
        return Ok((ExperimentSpec::from_toml(text).map_err(|e| invalid(format!("{arg}: {e}")))?, PathBuf::from(".")));
    }
    let path = Path::new(arg);
    if !path.exists() {
        let names: Vec<&str> = BUNDLED.iter().map(|b| b.0).collect();
        return Err(invalid(format!("unknown spec {arg:?}: not a file and not one of {}", names.join(", "))));
    }
    let spec = ExperimentSpec::from_file(path).map_err(|e| invalid(format!("{arg}: {e}")))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((spec, base))
}

fn output_writer(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("grid: {e}")))?;
    match parts[..] {
        [a, b, st] if st > 0.0 && (0.0..=b).contains(&a) && b <= 1.0 => Ok(level_grid(a, b, st)),
        _ => Err(invalid("grid: expected start:stop:step with 0 <= start <= stop <= 1 and step > 0")),
    }
}

fn describe(spec: &ExperimentSpec) -> String {
    let mut s = format!("{} ({})\n", spec.name, spec.kind.as_str());
    if let Some(d) = &spec.description {
        s += &format!("  {d}\n");
    }
    s += &format!("  seed = {}, dt = {}, sample_every = {}\n", spec.seed, spec.dt, spec.sample_every);
    if let Some(h) = spec.horizon {
        s += &format!("  horizon = {h}\n");
    }
    if let Some(r) = spec.runs {
        s += &format!("  runs = {r}\n");
    }
    for (p, g) in spec.graphs() {
        s += &format!("  {p}: {}", toml::to_string(&g).unwrap_or_default().replace('\n', "; "));
        s += "\n";
    }
    for (p, c) in spec.combats() {
        s += &format!("  {p}: {}\n", toml::to_string(&c).unwrap_or_default().replace('\n', "; "));
    }
    for (p, i) in spec.inits() {
        let levels = i.levels.as_ref().map(|l| format!(" levels = {:?}", l.to_vec())).unwrap_or_default();
        s += &format!("  {p}: rule = {}{levels}\n", i.rule.as_str());
    }
    if spec.kind == cyberdyn_cli::spec::Kind::SigmaMarkov {
        let g = spec.grid.clone().unwrap_or_default();
        let n = level_grid(g.start, g.stop, g.step).len();
        s += &format!("  grid = {}:{}:{} ({n} levels)\n", g.start, g.stop, g.step);
    }
    if let Some(st) = &spec.strategic {
        s += &format!("  strategic: z = {}, sigma = {}, gamma = {:?}\n", st.z, st.sigma, st.gamma.to_vec());
    }
    if let Some(b) = &spec.binom {
        s += &format!(
            "  binom: mean_degree = {:?}, sigma = {:?}, points = {}\n",
            b.mean_degree.to_vec(),
            b.sigma.to_vec(),
            b.points
        );
    }
    if let Some(m) = spec.budget_minutes {
        s += &format!("  budget = {m} min on 8 cores\n");
    }
    s += &format!("  outputs -> <out>/{}\n", spec.output_dir());
    s
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(invalid("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| Failure::Runtime(e.into()))?;
    }
    let seed = g.seed.unwrap_or(1);
    match cli.command {
        Command::Run { spec } => {
            let (mut s, base) = load_spec(&spec)?;
            if let Some(seed) = g.seed {
                s.seed = seed;
            }
            let (manifest, dir) = run_experiment(&s, &base, &g.out)?;
            println!(
                "{}: {} outputs in {} ({:.1}s)",
                manifest.name,
                manifest.outputs.len(),
                dir.display(),
                manifest.wall_clock_seconds
            );
        }
        Command::List => {
            for (name, text) in BUNDLED {
                let s = ExperimentSpec::from_toml(text).map_err(|e| invalid(format!("{name}: {e}")))?;
                println!("{name:8} {:22} {}", s.kind.as_str(), s.description.unwrap_or_default());
            }
        }
        Command::Describe { spec, keys } => {
            if keys || spec.is_none() {
                print!("{KEY_DOCS}");
            }
            if let Some(spec) = spec {
                print!("{}", describe(&load_spec(&spec)?.0));
            }
        }
        Command::Validate { specs } => {
            let names: Vec<String> =
                if specs.is_empty() { BUNDLED.iter().map(|b| b.0.to_string()).collect() } else { specs };
            let mut bad = Vec::new();
            for name in &names {
                match load_spec(name) {
                    Ok(_) => println!("ok      {name}"),
                    Err(Failure::Validation(msg)) => {
                        println!("invalid {name}");
                        bad.push(msg);
                    }
                    Err(e) => return Err(e),
                }
            }
            if !bad.is_empty() {
                return Err(invalid(bad.join("\n")));
            }
        }
        Command::SigmaMarkov(a) => {
            let grid = parse_grid(&a.grid)?;
            let f = Combat::type_i(a.sigma).map_err(|e| invalid(format!("sigma: {e}")))?;
            let graph = load_graph(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
            let rule = match a.rule {
                RuleArg::Uniform => InitRule::Uniform,
                RuleArg::Strategic => InitRule::Strategic,
            };
            if a.runs == 0 || !(a.dt > 0.0 && a.dt <= 1.0) || a.horizon.is_nan() || a.horizon <= 0.0 {
                return Err(invalid("runs, dt and horizon must be positive (dt <= 1)"));
            }
            let opts = SigmaMarkovOptions {
                run: RunOptions::new(a.dt, a.horizon).sample_every(100),
                runs: a.runs,
                master_seed: seed,
            };
            let est = estimate_sigma_markov(&graph, &f, rule, &grid, opts).context("stage sigma_markov")?;
            est.write_csv(output_writer(&a.output)?).context("writing csv")?;
        }
        Command::Thresholds(a) => match (a.graph, a.z, a.gamma) {
            (Some(path), _, _) => {
                let graph = load_graph(&path).with_context(|| format!("loading {}", path.display()))?;
                let d: Vec<f64> = graph.degrees().into_iter().map(|x| x as f64).collect();
                let r = threshold_report(&d, a.sigma).map_err(|e| invalid(e.to_string()))?;
                let nu = ApproxModel::from_mean_degree(graph.mean_degree(), a.sigma)
                    .ok()
                    .and_then(|m| critical_nu(&m).root());
                println!("sigma,alpha_threshold,beta_threshold,h,mean_degree,critical_nu");
                println!(
                    "{},{},{},{},{},{}",
                    r.sigma,
                    r.alpha_threshold,
                    r.beta_threshold,
                    r.h_value,
                    graph.mean_degree(),
                    nu.map(|x| x.to_string()).unwrap_or_default()
                );
            }
            (None, Some(z), Some(gamma)) => {
                let t = strategic_thresholds(z, gamma, a.sigma).map_err(|e| invalid(e.to_string()))?;
                println!("z,gamma,sigma,h,alpha,beta,gap,ratio");
                println!("{z},{gamma},{},{},{},{},{},{}", a.sigma, t.h, t.alpha, t.beta, t.gap, t.ratio);
            }
            _ => return Err(invalid("thresholds needs --graph or both --z and --gamma")),
        },
        Command::Graph { command: GraphCommand::Gen(a) } => {
            let need = |name: &str, v: Option<f64>| {
                v.ok_or_else(|| invalid(format!("--{name} is required for this generator")))
            };
            let recipe = match a.generator {
                Generator::Er => GraphRecipe::Er { n: a.n, p: OneOrMany::One(need("p", a.p)?), seed: None },
                Generator::Powerlaw => GraphRecipe::Powerlaw {
                    n: a.n,
                    gamma: OneOrMany::One(need("gamma", a.gamma)?),
                    d_min: need("d-min", a.d_min)?,
                    d_max: need("d-max", a.d_max)?,
                    cap: true,
                    giant: a.giant,
                    seed: None,
                },
                Generator::FixedVariance => GraphRecipe::FixedVariance {
                    n: a.n,
                    gamma: OneOrMany::One(need("gamma", a.gamma)?),
                    r: need("r", a.r)?,
                    dvar: need("dvar", a.dvar)?,
                    cap: true,
                    seed: None,
                },
                Generator::Clustered => GraphRecipe::Clustered {
                    sizes: a.sizes.clone(),
                    p_in: need("p-in", a.p_in)?,
                    p_out: need("p-out", a.p_out)?,
                    seed: None,
                },
            };
            let probe = ExperimentSpec {
                name: "graph".into(),
                description: None,
                kind: cyberdyn_cli::spec::Kind::StrategicThresholds,
                seed,
                dt: 0.01,
                horizon: None,
                runs: None,
                sample_every: 1,
                outputs: None,
                graph: Some(OneOrMany::One(recipe.clone())),
                combat: None,
                init: None,
                grid: None,
                strategic: Some(cyberdyn_cli::spec::StrategicSpec { z: 1.0, sigma: 0.5, gamma: OneOrMany::One(1.0) }),
                binom: None,
                budget_minutes: None,
            };
            probe.validate()?;
            let mut built = build_recipe(&recipe, seed, Path::new(".")).context("stage graph")?;
            let graph = built.remove(0).graph;
            save_graph(&graph, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
            println!(
                "n={} edges={} mean_degree={} hash={}",
                graph.n(),
                graph.edge_count(),
                graph.mean_degree(),
                graph.content_hash()
            );
        }
        Command::BinomCurve { mean_degree, sigma, points, output } => {
            let model = ApproxModel::new(mean_degree, sigma).map_err(|e| invalid(e.to_string()))?;
            if points < 2 {
                return Err(invalid("points must be at least 2"));
            }
            model.write_curve_csv(output_writer(&output)?, points).context("writing csv")?;
            let root = critical_nu(&model).root().map(|x| x.to_string()).unwrap_or_else(|| "none".into());
            eprintln!("critical_nu = {root}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
