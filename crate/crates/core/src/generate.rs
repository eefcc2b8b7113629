//! Random graph generators and expected-degree sequences.
//!
//! Every generator is driven by a `Pcg64Mcg` seeded from the caller's `u64`, so a
//! fixed seed reproduces the same graph bit for bit.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::scalar::Scalar;

/// Maximum number of re-draw passes for isolated nodes before giving up.
pub const ISOLATED_REPAIR_PASSES: usize = 64;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("expected-degree sequence violates d_max^2 <= sum(d): {dmax_sq} > {sum}")]
    LinkProbability { dmax_sq: f64, sum: f64 },
    #[error("no positive d_min attains the requested variance: {0}")]
    Domain(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn param(name: &'static str, msg: impl Into<String>) -> GenerateError {
    GenerateError::Param { name, msg: msg.into() }
}

/// Positive expected degrees `d_1..d_n` of the generalized random graph model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedDegreeSequence<T> {
    d: Vec<T>,
    sum: T,
    min: T,
    max: T,
}

impl<T: Scalar> ExpectedDegreeSequence<T> {
    pub fn new(d: Vec<T>) -> Result<Self, GenerateError> {
        if d.is_empty() {
            return Err(param("d", "empty sequence"));
        }
        if let Some(i) = d.iter().position(|x| !(x.is_finite() && *x > T::zero())) {
            return Err(param("d", format!("entry {i} is not a positive finite number")));
        }
        let sum = d.iter().copied().sum();
        let min = d.iter().copied().fold(T::infinity(), T::min);
        let max = d.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(Self { d, sum, min, max })
    }

    pub fn uniform(n: usize, value: T) -> Result<Self, GenerateError> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn sum(&self) -> T {
        self.sum
    }

    pub fn d_min(&self) -> T {
        self.min
    }

    pub fn d_max(&self) -> T {
        self.max
    }

    pub fn mean(&self) -> T {
        self.sum / T::of_usize(self.d.len())
    }

    /// Population variance of the expected degrees.
    pub fn variance(&self) -> T {
        let m = self.mean();
        self.d.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(self.d.len())
    }

    /// `d_max^2 <= sum(d)`, which keeps every pair probability in `[0, 1]`.
    pub fn link_probabilities_valid(&self) -> bool {
        self.max * self.max <= self.sum
    }

    /// Linking probability `d_u d_v / sum(d)`, capped at 1.
    #[inline]
    pub fn link_probability(&self, u: usize, v: usize) -> T {
        (self.d[u] * self.d[v] / self.sum).min(T::one())
    }
}

/// Expected degrees following the truncated density `∝ k^-gamma` on `[d_min, d_max]`.
///
/// Node `i` receives the inverse CDF at quantile `(i + 1/2) / n`, so the sequence is
/// deterministic and sorted ascending.
pub fn powerlaw_degree_sequence<T: Scalar>(
    n: usize,
    gamma: T,
    d_min: T,
    d_max: T,
) -> Result<ExpectedDegreeSequence<T>, GenerateError> {
    if n == 0 {
        return Err(param("n", "must be positive"));
    }
    if !(gamma > T::zero()) {
        return Err(param("gamma", "must be positive"));
    }
    if !(d_min > T::zero()) || !(d_max >= d_min) || !d_max.is_finite() {
        return Err(param("d_min", "need 0 < d_min <= d_max"));
    }
    let nn = T::of_usize(n);
    let d = (0..n)
        .map(|i| {
            let u = (T::of_usize(i) + T::half()) / nn;
            powerlaw_quantile(u, gamma, d_min, d_max)
        })
        .collect();
    ExpectedDegreeSequence::new(d)
}

/// Inverse CDF of the truncated power-law density on `[a, b]`.
pub fn powerlaw_quantile<T: Scalar>(u: T, gamma: T, a: T, b: T) -> T {
    if b == a {
        return a;
    }
    let e = T::one() - gamma;
    if e.abs() < T::of(1e-9) {
        a * (b / a).powf(u)
    } else {
        let lo = a.powf(e);
        (lo + u * (b.powf(e) - lo)).powf(T::one() / e)
    }
}

/// `∫_1^r x^(k - gamma) dx`, with the logarithmic branch at `k + 1 - gamma = 0`.
fn unit_moment<T: Scalar>(r: T, gamma: T, k: i32) -> T {
    let e = T::from_i32(k + 1).unwrap() - gamma;
    if e.abs() < T::of(1e-9) {
        r.ln()
    } else {
        (r.powf(e) - T::one()) / e
    }
}

/// Variance of the truncated power-law density on `[1, r]`.
///
/// The density on `[d, r d]` is the same shape scaled by `d`, so its variance is
/// `d^2` times this value.
pub fn powerlaw_unit_variance<T: Scalar>(r: T, gamma: T) -> T {
    let m0 = unit_moment(r, gamma, 0);
    let m1 = unit_moment(r, gamma, 1) / m0;
    let m2 = unit_moment(r, gamma, 2) / m0;
    m2 - m1 * m1
}

/// Mean of the truncated power-law density on `[1, r]`.
pub fn powerlaw_unit_mean<T: Scalar>(r: T, gamma: T) -> T {
    unit_moment(r, gamma, 1) / unit_moment(r, gamma, 0)
}

/// Smallest expected degree `d_min` such that the truncated power law on
/// `[d_min, r d_min]` has variance `dvar`.
pub fn dmin_for_fixed_variance<T: Scalar>(dvar: T, r: T, gamma: T) -> Result<T, GenerateError> {
    if !(dvar > T::zero()) {
        return Err(param("dvar", "must be positive"));
    }
    if !(gamma > T::zero()) {
        return Err(param("gamma", "must be positive"));
    }
    if !(r > T::one()) || !r.is_finite() {
        return Err(GenerateError::Domain(format!("ratio r = {r} must exceed 1")));
    }
    let v = powerlaw_unit_variance(r, gamma);
    let second = unit_moment(r, gamma, 2) / unit_moment(r, gamma, 0);
    // m2 - m1^2 is a difference of near-equal terms as r -> 1
    if !(v > second * T::of(1e-10)) || !v.is_finite() {
        return Err(GenerateError::Domain(format!("unit variance {v} is numerically zero for r = {r}")));
    }
    Ok((dvar / v).sqrt())
}

/// Erdős–Rényi `G(n, p)`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph, GenerateError> {
    if n < 2 {
        return Err(param("n", "need at least 2 nodes"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(param("p", format!("{p} not in (0, 1]")));
    }
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut adjacency = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                adjacency[u].push(v as u32);
                adjacency[v].push(u as u32);
            }
        }
    }
    repair_isolated(&mut adjacency, &mut rng, |_, _| p)?;
    finish(adjacency)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChungLuOptions {
    /// Cap `d_u d_v / sum(d)` at 1 instead of rejecting sequences with `d_max^2 > sum(d)`.
    pub cap_probabilities: bool,
}

/// Generalized random graph: pair `(u, v)`, `u != v`, is linked with probability
/// `d_u d_v / sum(d)`. Self pairs are never drawn, so `E[deg(v)] = d_v - d_v^2 / sum(d)`.
pub fn gen_chung_lu<T: Scalar>(
    d: &ExpectedDegreeSequence<T>,
    options: ChungLuOptions,
    seed: u64,
) -> Result<Graph, GenerateError> {
    if !options.cap_probabilities && !d.link_probabilities_valid() {
        return Err(GenerateError::LinkProbability {
            dmax_sq: (d.d_max() * d.d_max()).as_f64(),
            sum: d.sum().as_f64(),
        });
    }
    let n = d.len();
    let w: Vec<f64> = d.as_slice().iter().map(|x| x.as_f64()).collect();
    let total = d.sum().as_f64();
    let prob = |u: usize, v: usize| (w[u] * w[v] / total).min(1.0);
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut adjacency = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < prob(u, v) {
                adjacency[u].push(v as u32);
                adjacency[v].push(u as u32);
            }
        }
    }
    repair_isolated(&mut adjacency, &mut rng, prob)?;
    finish(adjacency)
}

/// Planted partition graph: intra-cluster pairs with `p_in`, inter-cluster with `p_out`.
pub fn gen_clustered(sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Graph, GenerateError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(param("sizes", "need at least one non-empty cluster"));
    }
    if !(p_in > 0.0 && p_in <= 1.0) {
        return Err(param("p_in", format!("{p_in} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&p_out) || p_out >= p_in {
        return Err(param("p_out", format!("{p_out} must satisfy 0 <= p_out < p_in")));
    }
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect();
    let n = labels.len();
    if n < 2 {
        return Err(param("sizes", "need at least 2 nodes"));
    }
    let prob = |u: usize, v: usize| if labels[u] == labels[v] { p_in } else { p_out };
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut adjacency = vec![Vec::new(); n];
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < prob(u, v) {
                adjacency[u].push(v as u32);
                adjacency[v].push(u as u32);
            }
        }
    }
    repair_isolated(&mut adjacency, &mut rng, prob)?;
    Ok(finish(adjacency)?.with_clusters(labels)?)
}

/// Recipe for the fixed-variance power-law family: expected degrees on
/// `[d_min, r d_min]` with `d_min` chosen so the density has variance `dvar`.
pub fn fixed_variance_sequence<T: Scalar>(
    n: usize,
    gamma: T,
    r: T,
    dvar: T,
) -> Result<ExpectedDegreeSequence<T>, GenerateError> {
    let d_min = dmin_for_fixed_variance(dvar, r, gamma)?;
    powerlaw_degree_sequence(n, gamma, d_min, r * d_min)
}

/// Re-draws every pair touching a currently isolated node until it gains an edge.
fn repair_isolated<R: Rng, F: Fn(usize, usize) -> f64>(
    adjacency: &mut [Vec<u32>],
    rng: &mut R,
    prob: F,
) -> Result<(), GenerateError> {
    let n = adjacency.len();
    for _ in 0..ISOLATED_REPAIR_PASSES {
        let isolated: Vec<usize> = (0..n).filter(|&v| adjacency[v].is_empty()).collect();
        if isolated.is_empty() {
            return Ok(());
        }
        for v in isolated {
            if !adjacency[v].is_empty() {
                // linked by an earlier node in this pass
                continue;
            }
            for u in (0..n).filter(|&u| u != v) {
                if rng.random::<f64>() < prob(u, v) {
                    adjacency[v].push(u as u32);
                    adjacency[u].push(v as u32);
                }
            }
        }
    }
    let remaining: Vec<usize> = (0..n).filter(|&v| adjacency[v].is_empty()).collect();
    match remaining.first() {
        None => Ok(()),
        Some(&first) => Err(GraphError::Isolated { count: remaining.len(), first }.into()),
    }
}

fn finish(adjacency: Vec<Vec<u32>>) -> Result<Graph, GenerateError> {
    Ok(Graph::from_adjacency(adjacency)?)
}
