//! The native stochastic process: every node is blue (1) or red (0), and in each step of
//! length `dt` a red node turns blue with probability `dt f_RB(blue fraction of its
//! neighbors)` while a blue node turns red with probability `dt f_BR(red fraction)`.
//! All flips of a step are decided from the state at the start of the step.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::combat::{Combat, Family};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::thresholds::phi_of_states;

/// Default number of runs in an ensemble.
pub const DEFAULT_RUNS: usize = 50;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("node {0} has no neighbors")]
    Isolated(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn param(name: &'static str, msg: impl Into<String>) -> MarkovError {
    MarkovError::Param { name, msg: msg.into() }
}

/// Seed of run `index` in an ensemble: the `index + 1`-th output of a splitmix64
/// generator started at `master_seed`.
pub fn run_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Node colors at one time; `xi[v] == 1` is blue.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    pub xi: Vec<u8>,
    pub t: f64,
}

impl NodeStates {
    pub fn all_blue(n: usize) -> Self {
        Self { xi: vec![1; n], t: 0.0 }
    }

    pub fn all_red(n: usize) -> Self {
        Self { xi: vec![0; n], t: 0.0 }
    }

    pub fn from_bits(xi: Vec<u8>) -> Result<Self, MarkovError> {
        if let Some(v) = xi.iter().position(|&b| b > 1) {
            return Err(param("xi", format!("node {v} has state {}", xi[v])));
        }
        Ok(Self { xi, t: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    pub fn blue_count(&self) -> usize {
        self.xi.iter().map(|&b| b as usize).sum()
    }

    pub fn blue_fraction(&self) -> f64 {
        self.blue_count() as f64 / self.n() as f64
    }
}

fn check_probabilities<T: Scalar>(b0: &[T]) -> Result<(), MarkovError> {
    match b0.iter().position(|x| !(*x >= T::zero() && *x <= T::one())) {
        Some(v) => Err(param("b0", format!("entry {v} = {} outside [0, 1]", b0[v]))),
        None => Ok(()),
    }
}

fn draw_states<T: Scalar, R: Rng>(b0: &[T], rng: &mut R) -> Vec<u8> {
    b0.iter().map(|&p| u8::from(T::of(rng.random::<f64>()) < p)).collect()
}

/// Independent coin flips with per-node blue probabilities `b0`.
pub fn sample_initial<T: Scalar>(b0: &[T], seed: u64) -> Result<NodeStates, MarkovError> {
    check_probabilities(b0)?;
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    Ok(NodeStates { xi: draw_states(b0, &mut rng), t: 0.0 })
}

/// How each run of an ensemble obtains its initial configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition<T> {
    /// Independent Bernoulli draws with probabilities `B_v(0)`.
    Bernoulli(Vec<T>),
    /// Bernoulli draws redrawn until the degree-weighted blue fraction lies within
    /// `tolerance` of `target`. After `max_attempts` the closest draw is kept.
    ConditionedPhi { b0: Vec<T>, target: T, tolerance: T, max_attempts: usize },
    /// The same configuration in every run.
    Fixed(NodeStates),
}

impl<T: Scalar> InitialCondition<T> {
    pub fn uniform(n: usize, level: T) -> Self {
        Self::Bernoulli(vec![level; n])
    }

    /// Per-node blue probabilities the configuration is drawn from.
    pub fn probabilities(&self) -> Vec<T> {
        match self {
            Self::Bernoulli(b0) | Self::ConditionedPhi { b0, .. } => b0.clone(),
            Self::Fixed(s) => s.xi.iter().map(|&b| T::of_usize(b as usize)).collect(),
        }
    }

    fn validate(&self, n: usize) -> Result<(), MarkovError> {
        let len = match self {
            Self::Bernoulli(b0) | Self::ConditionedPhi { b0, .. } => {
                check_probabilities(b0)?;
                b0.len()
            }
            Self::Fixed(s) => s.n(),
        };
        if len != n {
            return Err(param("initial", format!("{len} entries for {n} nodes")));
        }
        if let Self::ConditionedPhi { target, tolerance, max_attempts, .. } = self {
            if !(*target >= T::zero() && *target <= T::one()) {
                return Err(param("target", "must lie in [0, 1]"));
            }
            if !(*tolerance >= T::zero()) || *max_attempts == 0 {
                return Err(param("tolerance", "needs a non-negative tolerance and at least one attempt"));
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, g: &Graph, rng: &mut R) -> Vec<u8> {
        match self {
            Self::Bernoulli(b0) => draw_states(b0, rng),
            Self::Fixed(s) => s.xi.clone(),
            Self::ConditionedPhi { b0, target, tolerance, max_attempts } => {
                let mut best = draw_states(b0, rng);
                let mut best_gap = (phi_of_states::<T>(g, &best) - *target).abs();
                for _ in 1..*max_attempts {
                    if best_gap <= *tolerance {
                        break;
                    }
                    let xi = draw_states(b0, rng);
                    let gap = (phi_of_states::<T>(g, &xi) - *target).abs();
                    if gap < best_gap {
                        best = xi;
                        best_gap = gap;
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Absorption<T> {
    AllBlue(T),
    AllRed(T),
    None,
}

impl<T: Copy> Absorption<T> {
    pub fn time(&self) -> Option<T> {
        match self {
            Self::AllBlue(t) | Self::AllRed(t) => Some(*t),
            Self::None => None,
        }
    }

    pub fn is_all_blue(&self) -> bool {
        matches!(self, Self::AllBlue(_))
    }

    pub fn is_all_red(&self) -> bool {
        matches!(self, Self::AllRed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions<T> {
    pub dt: T,
    pub horizon: T,
    /// Record the blue fraction every this many steps.
    pub sample_every: usize,
}

impl<T: Scalar> RunOptions<T> {
    pub fn new(dt: T, horizon: T) -> Self {
        Self { dt, horizon, sample_every: 1 }
    }

    pub fn sample_every(mut self, k: usize) -> Self {
        self.sample_every = k;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }

    pub fn n_samples(&self) -> usize {
        self.steps() / self.sample_every + 1
    }

    /// Sample times `0, s dt, 2 s dt, ...` up to the horizon.
    pub fn sample_times(&self) -> Vec<T> {
        (0..self.n_samples()).map(|i| T::of_usize(i * self.sample_every) * self.dt).collect()
    }

    fn validate(&self) -> Result<(), MarkovError> {
        // rates never exceed 1, so dt <= 1 keeps every step probability valid
        if !(self.dt > T::zero() && self.dt <= T::one()) {
            return Err(param("dt", format!("{} not in (0, 1]", self.dt)));
        }
        if !(self.horizon >= T::zero()) || !self.horizon.is_finite() {
            return Err(param("horizon", "must be finite and non-negative"));
        }
        if self.sample_every == 0 {
            return Err(param("sample_every", "must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T> {
    pub seed: u64,
    /// Blue fraction at each sample time; after absorption the absorbing value repeats.
    pub blue_fraction: Vec<T>,
    pub absorption: Absorption<T>,
    pub initial_blue: usize,
    /// Degree-weighted blue fraction of the initial configuration.
    pub initial_phi: T,
    pub final_states: NodeStates,
}

/// Per-degree lookup of step flip probabilities indexed by blue-neighbor count.
struct RateTable<T> {
    offset: Vec<usize>,
    to_blue: Vec<T>,
    to_red: Vec<T>,
}

impl<T: Scalar> RateTable<T> {
    fn new(g: &Graph, f: &Combat<T>, dt: T) -> Self {
        let max_deg = (0..g.n()).map(|v| g.degree(v)).max().unwrap_or(0);
        let mut present = vec![false; max_deg + 1];
        for v in 0..g.n() {
            present[g.degree(v)] = true;
        }
        let mut offset = vec![usize::MAX; max_deg + 1];
        let mut to_blue = Vec::new();
        let mut to_red = Vec::new();
        for (d, _) in present.iter().enumerate().filter(|(_, p)| **p) {
            offset[d] = to_blue.len();
            let dd = T::of_usize(d);
            for c in 0..=d {
                let blue = T::of_usize(c) / dd;
                let red = T::of_usize(d - c) / dd;
                to_blue.push(dt * f.rate_rb(blue));
                to_red.push(dt * f.rate_br(red));
            }
        }
        Self { offset, to_blue, to_red }
    }
}

struct Simulator<'a, T> {
    g: &'a Graph,
    table: RateTable<T>,
    options: RunOptions<T>,
}

impl<'a, T: Scalar> Simulator<'a, T> {
    fn new(g: &'a Graph, f: &Combat<T>, options: RunOptions<T>) -> Result<Self, MarkovError> {
        options.validate()?;
        if let Some(v) = g.isolated_nodes().first() {
            return Err(MarkovError::Isolated(*v));
        }
        Ok(Self { g, table: RateTable::new(g, f, options.dt), options })
    }

    /// Runs the chain from `xi`; `on_sample(k, states)` sees every sampled configuration.
    fn run<R: Rng>(
        &self,
        mut xi: Vec<u8>,
        rng: &mut R,
        mut on_sample: impl FnMut(usize, &[u8]),
    ) -> (Vec<T>, Absorption<T>, Vec<u8>, T) {
        let g = self.g;
        let n = g.n();
        let nt = T::of_usize(n);
        let steps = self.options.steps();
        let every = self.options.sample_every;
        let dt = self.options.dt;
        let mut blue_nbrs: Vec<u32> =
            (0..n).map(|v| g.neighbors(v).iter().map(|&u| xi[u as usize] as u32).sum()).collect();
        let mut blue = xi.iter().map(|&b| b as usize).sum::<usize>();
        let mut fractions = Vec::with_capacity(self.options.n_samples());
        let mut flips: Vec<u32> = Vec::new();
        fractions.push(T::of_usize(blue) / nt);
        on_sample(0, &xi);
        let mut absorption = Absorption::None;
        let mut last_step = 0;
        if blue == n {
            absorption = Absorption::AllBlue(T::zero());
        } else if blue == 0 {
            absorption = Absorption::AllRed(T::zero());
        }
        if absorption == Absorption::None {
            for step in 1..=steps {
                flips.clear();
                for v in 0..n {
                    let idx = self.table.offset[g.degree(v)] + blue_nbrs[v] as usize;
                    let p = if xi[v] == 1 { self.table.to_red[idx] } else { self.table.to_blue[idx] };
                    if p > T::zero() && T::of(rng.random::<f64>()) < p {
                        flips.push(v as u32);
                    }
                }
                for &v in &flips {
                    let v = v as usize;
                    if xi[v] == 1 {
                        xi[v] = 0;
                        blue -= 1;
                        for &u in g.neighbors(v) {
                            blue_nbrs[u as usize] -= 1;
                        }
                    } else {
                        xi[v] = 1;
                        blue += 1;
                        for &u in g.neighbors(v) {
                            blue_nbrs[u as usize] += 1;
                        }
                    }
                }
                last_step = step;
                if step % every == 0 {
                    fractions.push(T::of_usize(blue) / nt);
                    on_sample(step / every, &xi);
                }
                let t = T::of_usize(step) * dt;
                if blue == n {
                    absorption = Absorption::AllBlue(t);
                    break;
                }
                if blue == 0 {
                    absorption = Absorption::AllRed(t);
                    break;
                }
            }
        }
        // absorbing states are constant from here on
        let k_done = fractions.len();
        for k in k_done..self.options.n_samples() {
            fractions.push(T::of_usize(blue) / nt);
            on_sample(k, &xi);
        }
        (fractions, absorption, xi, T::of_usize(last_step) * dt)
    }
}

/// Simulates one run from a given initial configuration.
pub fn simulate_run<T: Scalar>(
    g: &Graph,
    f: &Combat<T>,
    init: &NodeStates,
    options: RunOptions<T>,
    seed: u64,
) -> Result<RunRecord<T>, MarkovError> {
    if init.n() != g.n() {
        return Err(param("init", format!("{} states for {} nodes", init.n(), g.n())));
    }
    let sim = Simulator::new(g, f, options)?;
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    Ok(record_run(&sim, init.xi.clone(), &mut rng, seed, |_, _| {}))
}

fn record_run<T: Scalar, R: Rng>(
    sim: &Simulator<'_, T>,
    xi: Vec<u8>,
    rng: &mut R,
    seed: u64,
    on_sample: impl FnMut(usize, &[u8]),
) -> RunRecord<T> {
    let initial_blue = xi.iter().map(|&b| b as usize).sum();
    let initial_phi = phi_of_states(sim.g, &xi);
    let (blue_fraction, absorption, xi, t) = sim.run(xi, rng, on_sample);
    RunRecord {
        seed,
        blue_fraction,
        absorption,
        initial_blue,
        initial_phi,
        final_states: NodeStates { xi, t: t.as_f64() },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions<T> {
    pub run: RunOptions<T>,
    pub runs: usize,
    pub master_seed: u64,
    /// Accumulate per-node blue counts at every sample time.
    pub track_nodes: bool,
}

impl<T: Scalar> EnsembleOptions<T> {
    pub fn new(run: RunOptions<T>, runs: usize, master_seed: u64) -> Self {
        Self { run, runs, master_seed, track_nodes: false }
    }

    pub fn track_nodes(mut self, track: bool) -> Self {
        self.track_nodes = track;
        self
    }
}

/// Aggregate of independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    pub times: Vec<T>,
    pub seeds: Vec<u64>,
    /// Across-run average of the blue fraction.
    pub mean_xi: Vec<T>,
    /// Standard error of `mean_xi` (zero for a single run).
    pub stderr: Vec<T>,
    /// Runs absorbed all blue / all red by each sample time.
    pub absorbed_blue: Vec<usize>,
    pub absorbed_red: Vec<usize>,
    pub runs: Vec<RunRecord<T>>,
    /// `node_blue_counts[k][v]`: runs with node `v` blue at sample `k`, when tracked.
    pub node_blue_counts: Option<Vec<Vec<u32>>>,
}

impl<T: Scalar> Ensemble<T> {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn count_all_blue(&self) -> usize {
        self.runs.iter().filter(|r| r.absorption.is_all_blue()).count()
    }

    pub fn count_all_red(&self) -> usize {
        self.runs.iter().filter(|r| r.absorption.is_all_red()).count()
    }

    pub fn count_unabsorbed(&self) -> usize {
        self.runs.iter().filter(|r| r.absorption == Absorption::None).count()
    }

    /// Across-run blue frequency of every node at sample `k`.
    pub fn node_frequencies(&self, k: usize) -> Option<Vec<T>> {
        let runs = T::of_usize(self.n_runs());
        self.node_blue_counts.as_ref().map(|c| c[k].iter().map(|&x| T::of_usize(x as usize) / runs).collect())
    }

    /// Writes `t, mean_xi, stderr, n_absorbed_blue, n_absorbed_red`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MarkovError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean_xi", "stderr", "n_absorbed_blue", "n_absorbed_red"])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                self.mean_xi[k].to_string(),
                self.stderr[k].to_string(),
                self.absorbed_blue[k].to_string(),
                self.absorbed_red[k].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn manifest(&self, g: &Graph, f: &Combat<T>, options: &EnsembleOptions<T>) -> EnsembleManifest<T> {
        EnsembleManifest {
            graph_hash: g.content_hash(),
            n: g.n(),
            family: f.family().clone(),
            dt: options.run.dt,
            horizon: options.run.horizon,
            runs: options.runs,
            master_seed: options.master_seed,
            seeds: self.seeds.clone(),
        }
    }
}

/// Provenance record of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleManifest<T> {
    pub graph_hash: String,
    pub n: usize,
    pub family: Family<T>,
    pub dt: T,
    pub horizon: T,
    pub runs: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
}

/// Runs `options.runs` independent chains in parallel. Run `i` draws its initial
/// configuration and its dynamics from one generator seeded with
/// [`run_seed`]`(master_seed, i)`, so results do not depend on scheduling.
pub fn simulate_ensemble<T: Scalar>(
    g: &Graph,
    f: &Combat<T>,
    init: &InitialCondition<T>,
    options: EnsembleOptions<T>,
) -> Result<Ensemble<T>, MarkovError> {
    if options.runs == 0 {
        return Err(param("runs", "must be at least 1"));
    }
    init.validate(g.n())?;
    let sim = Simulator::new(g, f, options.run)?;
    let n_samples = options.run.n_samples();
    let seeds: Vec<u64> = (0..options.runs as u64).map(|i| run_seed(options.master_seed, i)).collect();

    let one = |seed: u64, counts: Option<&mut Vec<Vec<u32>>>| {
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let xi = init.draw(g, &mut rng);
        match counts {
            Some(c) => record_run(&sim, xi, &mut rng, seed, |k, s| {
                for (acc, &b) in c[k].iter_mut().zip(s) {
                    *acc += b as u32;
                }
            }),
            None => record_run(&sim, xi, &mut rng, seed, |_, _| {}),
        }
    };

    let (runs, node_blue_counts) = if options.track_nodes {
        // integer sums, so the reduction order cannot change the result
        let zero = || vec![vec![0u32; g.n()]; n_samples];
        let (runs, counts) = seeds
            .par_iter()
            .map(|&s| {
                let mut c = zero();
                let r = one(s, Some(&mut c));
                (vec![r], c)
            })
            .reduce(
                || (Vec::new(), zero()),
                |(mut ra, mut ca), (rb, cb)| {
                    ra.extend(rb);
                    for (a, b) in ca.iter_mut().zip(&cb) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += *y;
                        }
                    }
                    (ra, ca)
                },
            );
        (runs, Some(counts))
    } else {
        (seeds.par_iter().map(|&s| one(s, None)).collect::<Vec<_>>(), None)
    };

    let times = options.run.sample_times();
    let r = T::of_usize(runs.len());
    let mut mean_xi = Vec::with_capacity(n_samples);
    let mut stderr = Vec::with_capacity(n_samples);
    let mut absorbed_blue = Vec::with_capacity(n_samples);
    let mut absorbed_red = Vec::with_capacity(n_samples);
    for (k, &t) in times.iter().enumerate() {
        let mean = runs.iter().map(|run| run.blue_fraction[k]).sum::<T>() / r;
        let se = if runs.len() > 1 {
            let ss: T = runs.iter().map(|run| (run.blue_fraction[k] - mean).powi(2)).sum();
            (ss / (r - T::one())).sqrt() / r.sqrt()
        } else {
            T::zero()
        };
        mean_xi.push(mean);
        stderr.push(se);
        let by = |pred: fn(&Absorption<T>) -> bool| {
            runs.iter().filter(|run| pred(&run.absorption) && run.absorption.time().is_some_and(|a| a <= t)).count()
        };
        absorbed_blue.push(by(Absorption::is_all_blue));
        absorbed_red.push(by(Absorption::is_all_red));
    }
    Ok(Ensemble { times, seeds, mean_xi, stderr, absorbed_blue, absorbed_red, runs, node_blue_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_er;

    fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn run_seeds_are_distinct_and_stable() {
        let s: Vec<u64> = (0..1000).map(|i| run_seed(7, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 1000);
        // first splitmix64 output for state 0
        assert_eq!(run_seed(0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn sample_initial_extremes_and_determinism() {
        assert_eq!(sample_initial(&[1.0f64; 10], 3).unwrap().blue_count(), 10);
        assert_eq!(sample_initial(&[0.0f64; 10], 3).unwrap().blue_count(), 0);
        let a = sample_initial(&[0.4f64; 100], 9).unwrap();
        assert_eq!(a, sample_initial(&[0.4f64; 100], 9).unwrap());
        assert!(sample_initial(&[1.2f64], 0).is_err());
    }

    #[test]
    fn absorbing_states_stay_put() {
        let g = cycle(10);
        for f in [Combat::type_i(0.5).unwrap(), Combat::type_iii_sqrt(), Combat::type_iv_square()] {
            let opts = RunOptions::new(0.01, 2.0);
            let r = simulate_run(&g, &f, &NodeStates::all_blue(10), opts, 1).unwrap();
            assert_eq!(r.absorption, Absorption::AllBlue(0.0));
            assert!(r.blue_fraction.iter().all(|&x| x == 1.0));
            assert_eq!(r.blue_fraction.len(), 201);
            let r = simulate_run(&g, &f, &NodeStates::all_red(10), opts, 1).unwrap();
            assert!(r.absorption.is_all_red());
            assert!(r.blue_fraction.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_run_ensemble_matches_its_run() {
        let g = cycle(20);
        let f = Combat::type_ii_default();
        let opts = EnsembleOptions::new(RunOptions::new(0.01, 3.0), 1, 5);
        let e = simulate_ensemble(&g, &f, &InitialCondition::uniform(20, 0.5), opts).unwrap();
        assert_eq!(e.mean_xi, e.runs[0].blue_fraction);
        assert!(e.stderr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn ensembles_are_reproducible() {
        let g = gen_er(200, 0.05, 1).unwrap();
        let f = Combat::type_iii_sqrt();
        let opts = EnsembleOptions::new(RunOptions::new(0.01, 2.0).sample_every(10), 6, 42).track_nodes(true);
        let init = InitialCondition::uniform(200, 0.3);
        let a = simulate_ensemble(&g, &f, &init, opts).unwrap();
        let b = simulate_ensemble(&g, &f, &init, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 21);
        let counts = a.node_blue_counts.as_ref().unwrap();
        for (k, row) in counts.iter().enumerate() {
            let total: u32 = row.iter().sum();
            let from_runs: f64 = a.runs.iter().map(|r| r.blue_fraction[k] * 200.0).sum();
            assert_eq!(total as f64, from_runs.round());
        }
    }

    #[test]
    fn conditioned_initials_hit_target() {
        let g = gen_er(500, 0.02, 3).unwrap();
        let init = InitialCondition::ConditionedPhi {
            b0: vec![0.5f64; 500],
            target: 0.52,
            tolerance: 0.002,
            max_attempts: 10_000,
        };
        let opts = EnsembleOptions::new(RunOptions::new(0.01, 0.0), 10, 1);
        let e = simulate_ensemble(&g, &Combat::type_iv_square(), &init, opts).unwrap();
        for r in &e.runs {
            assert!((r.initial_phi - 0.52).abs() <= 0.002, "{}", r.initial_phi);
        }
    }

    #[test]
    fn type_i_step_probabilities() {
        // with sigma = 0.4 one blue neighbor out of two already tips the node blue
        let g = cycle(3);
        let f = Combat::type_i(0.4).unwrap();
        let t: RateTable<f64> = RateTable::new(&g, &f, 0.01);
        let o = t.offset[2];
        assert_eq!(&t.to_blue[o..o + 3], &[0.0, 0.01, 0.01]);
        assert_eq!(&t.to_red[o..o + 3], &[0.01, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_options() {
        let g = cycle(5);
        let f = Combat::type_iv_square();
        let init = InitialCondition::uniform(5, 0.5);
        let bad = EnsembleOptions::new(RunOptions::new(0.01, 1.0), 0, 1);
        assert!(simulate_ensemble(&g, &f, &init, bad).is_err());
        let bad = EnsembleOptions::new(RunOptions::new(1.5, 1.0), 1, 1);
        assert!(simulate_ensemble(&g, &f, &init, bad).is_err());
        let wrong = InitialCondition::uniform(4, 0.5);
        assert!(simulate_ensemble(&g, &f, &wrong, EnsembleOptions::new(RunOptions::new(0.01, 1.0), 1, 1)).is_err());
    }
}
