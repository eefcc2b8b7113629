//! Agreement between Markov ensembles and mean-field trajectories.

use std::io::Write;

use thiserror::Error;

use crate::combat::{Combat, Family};
use crate::markov::Ensemble;
use crate::meanfield::Trajectory;
use crate::scalar::Scalar;

/// Relative tolerance for treating two sample times as equal.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("sample grids differ at index {index}: {left} vs {right}")]
    Grid { index: usize, left: f64, right: f64 },
    #[error("time {0} is not on the sample grid")]
    OffGrid(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn param(name: &'static str, msg: impl Into<String>) -> MetricsError {
    MetricsError::Param { name, msg: msg.into() }
}

fn same_time<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::of(GRID_TOLERANCE) * T::one().max(a.abs()).max(b.abs())
}

fn check_grids<T: Scalar>(a: &[T], b: &[T]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(param("times", format!("{} samples vs {}", a.len(), b.len())));
    }
    match a.iter().zip(b).position(|(&x, &y)| !same_time(x, y)) {
        Some(i) => Err(MetricsError::Grid { index: i, left: a[i].as_f64(), right: b[i].as_f64() }),
        None => Ok(()),
    }
}

fn index_of<T: Scalar>(times: &[T], t: T) -> Result<usize, MetricsError> {
    times.iter().position(|&s| same_time(s, t)).ok_or(MetricsError::OffGrid(t.as_f64()))
}

/// Trapezoidal integral of samples `ys` taken at `times`.
pub fn trapezoid<T: Scalar>(times: &[T], ys: &[T]) -> T {
    times.windows(2).zip(ys.windows(2)).map(|(t, y)| (t[1] - t[0]) * (y[0] + y[1]) * T::half()).sum()
}

/// Markov and mean-field averages on one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSeries<T> {
    pub times: Vec<T>,
    pub markov_mean: Vec<T>,
    pub meanfield: Vec<T>,
}

impl<T: Scalar> ComparisonSeries<T> {
    pub fn new(times: Vec<T>, markov_mean: Vec<T>, meanfield: Vec<T>) -> Result<Self, MetricsError> {
        if markov_mean.len() != times.len() || meanfield.len() != times.len() {
            return Err(param("series", "lengths differ from the time grid"));
        }
        let inside = |x: &T| *x >= T::zero() && *x <= T::one();
        if !markov_mean.iter().all(inside) || !meanfield.iter().all(inside) {
            return Err(param("series", "values outside [0, 1]"));
        }
        Ok(Self { times, markov_mean, meanfield })
    }

    /// Pairs an ensemble with a trajectory sampled on the same grid.
    pub fn from_runs(ensemble: &Ensemble<T>, trajectory: &Trajectory<T>) -> Result<Self, MetricsError> {
        check_grids(&ensemble.times, &trajectory.times)?;
        Self::new(ensemble.times.clone(), ensemble.mean_xi.clone(), trajectory.mean_blue.clone())
    }

    /// Relative error of the network-wide averages.
    pub fn relative_error(&self) -> Option<T> {
        re_series(&self.times, &self.markov_mean, &self.meanfield)
    }

    /// Writes `t, markov_mean, meanfield`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "markov_mean", "meanfield"])?;
        for i in 0..self.times.len() {
            w.write_record([
                self.times[i].to_string(),
                self.markov_mean[i].to_string(),
                self.meanfield[i].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn re_series<T: Scalar>(times: &[T], markov: &[T], meanfield: &[T]) -> Option<T> {
    let den = trapezoid(times, &markov.iter().map(|&x| x * x).collect::<Vec<_>>());
    if !(den > T::zero()) {
        return None;
    }
    let diff: Vec<T> = markov.iter().zip(meanfield).map(|(&a, &b)| (a - b) * (a - b)).collect();
    Some(trapezoid(times, &diff) / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorReport<T> {
    /// `None` where the node was never blue in any run.
    pub per_node: Vec<Option<T>>,
    /// Average over the defined entries.
    pub mean: Option<T>,
    pub excluded: usize,
}

/// Per-node `int (B~_v - B_v)^2 dt / int B~_v^2 dt` by the trapezoid rule.
///
/// Both inputs are time-major, `series[k][v]`, sampled at `times`; `markov` holds the
/// across-run blue frequencies of each node.
pub fn relative_error<T: Scalar>(
    times: &[T],
    markov: &[Vec<T>],
    meanfield: &[Vec<T>],
) -> Result<RelativeErrorReport<T>, MetricsError> {
    if markov.len() != times.len() || meanfield.len() != times.len() {
        return Err(param("series", "sample counts differ from the time grid"));
    }
    let n = markov.first().map_or(0, Vec::len);
    if markov.iter().chain(meanfield).any(|row| row.len() != n) {
        return Err(param("series", "node counts differ between samples"));
    }
    let per_node: Vec<Option<T>> = (0..n)
        .map(|v| {
            let a: Vec<T> = markov.iter().map(|row| row[v]).collect();
            let b: Vec<T> = meanfield.iter().map(|row| row[v]).collect();
            re_series(times, &a, &b)
        })
        .collect();
    let defined: Vec<T> = per_node.iter().flatten().copied().collect();
    let excluded = n - defined.len();
    let mean = (!defined.is_empty()).then(|| defined.iter().copied().sum::<T>() / T::of_usize(defined.len()));
    Ok(RelativeErrorReport { per_node, mean, excluded })
}

/// [`relative_error`] from an ensemble that tracked node counts and a trajectory that kept
/// its states.
pub fn relative_error_of_runs<T: Scalar>(
    ensemble: &Ensemble<T>,
    trajectory: &Trajectory<T>,
) -> Result<RelativeErrorReport<T>, MetricsError> {
    check_grids(&ensemble.times, &trajectory.times)?;
    let states = trajectory.states.as_ref().ok_or_else(|| param("trajectory", "states were not kept"))?;
    if ensemble.node_blue_counts.is_none() {
        return Err(param("ensemble", "node counts were not tracked"));
    }
    let markov: Vec<Vec<T>> =
        (0..ensemble.times.len()).map(|k| ensemble.node_frequencies(k).expect("tracked")).collect();
    relative_error(&ensemble.times, &markov, states)
}

/// One row of the relative-error sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorRow<T> {
    pub gamma: T,
    pub avg_degree: T,
    pub mean_re: Option<T>,
    pub excluded_nodes: usize,
}

/// Writes `gamma, avg_degree, mean_RE, excluded_nodes`.
pub fn write_relative_error_csv<T: Scalar, W: Write>(rows: &[RelativeErrorRow<T>], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma", "avg_degree", "mean_RE", "excluded_nodes"])?;
    for r in rows {
        w.write_record([
            r.gamma.to_string(),
            r.avg_degree.to_string(),
            r.mean_re.map(|x| x.to_string()).unwrap_or_default(),
            r.excluded_nodes.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Expected sign of `<xi> - <B>` from the curvature of `f_RB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPrediction {
    /// Mean field lies below the Markov average (convex region).
    MarkovAbove,
    /// Mean field lies above the Markov average (concave region).
    MarkovBelow,
    /// The family gives no prediction here.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapVerdict {
    Agrees,
    Inconclusive,
    Contradicts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapPoint<T> {
    pub t: T,
    /// `<xi>(t) - <B>(t)`.
    pub gap: T,
    pub stderr: T,
    pub prediction: GapPrediction,
    pub verdict: GapVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JensenReport<T> {
    pub points: Vec<GapPoint<T>>,
    /// Standard errors required for a one-sided decision.
    pub z: T,
}

impl<T> JensenReport<T> {
    pub fn all_agree(&self) -> bool {
        self.points.iter().all(|p| p.verdict == GapVerdict::Agrees)
    }

    pub fn any_contradicts(&self) -> bool {
        self.points.iter().any(|p| p.verdict == GapVerdict::Contradicts)
    }
}

/// Predicted sign of the gap when the network average is `level`.
///
/// Concave `f_RB` (Type III) makes the Markov average lag the mean field, convex (Type IV)
/// makes it lead. Threshold families are convex below and concave above their threshold.
pub fn predicted_gap<T: Scalar>(f: &Combat<T>, level: T) -> GapPrediction {
    let side = |th: T| {
        if level < th {
            GapPrediction::MarkovAbove
        } else if level > th {
            GapPrediction::MarkovBelow
        } else {
            GapPrediction::None
        }
    };
    match f.family() {
        Family::TypeIII { .. } => GapPrediction::MarkovBelow,
        Family::TypeIV { .. } => GapPrediction::MarkovAbove,
        Family::TypeI { sigma } => side(*sigma),
        Family::TypeII { tau, .. } => side(*tau),
        Family::Tabulated { .. } => GapPrediction::None,
    }
}

/// Signed gap `<xi> - <B>` at each checkpoint with a `z`-standard-error one-sided test
/// against [`predicted_gap`] evaluated at the mean-field average.
pub fn jensen_gap_probe<T: Scalar>(
    f: &Combat<T>,
    ensemble: &Ensemble<T>,
    trajectory: &Trajectory<T>,
    checkpoints: &[T],
    z: T,
) -> Result<JensenReport<T>, MetricsError> {
    check_grids(&ensemble.times, &trajectory.times)?;
    if (ensemble.runs.first().map(|r| r.final_states.n())) != Some(trajectory.initial.len()) {
        return Err(param("trajectory", "node count differs from the ensemble"));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let k = index_of(&ensemble.times, t)?;
        let gap = ensemble.mean_xi[k] - trajectory.mean_blue[k];
        let se = ensemble.stderr[k];
        let prediction = predicted_gap(f, trajectory.mean_blue[k]);
        let margin = z * se;
        let verdict = match prediction {
            GapPrediction::MarkovAbove if gap > margin && gap > T::zero() => GapVerdict::Agrees,
            GapPrediction::MarkovAbove if gap < -margin => GapVerdict::Contradicts,
            GapPrediction::MarkovBelow if gap < -margin && gap < T::zero() => GapVerdict::Agrees,
            GapPrediction::MarkovBelow if gap > margin => GapVerdict::Contradicts,
            _ => GapVerdict::Inconclusive,
        };
        points.push(GapPoint { t: ensemble.times[k], gap, stderr: se, prediction, verdict });
    }
    Ok(JensenReport { points, z })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_lines() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&t, &y) - 2.0).abs() < 1e-14);
        assert_eq!(trapezoid::<f64>(&[0.0], &[3.0]), 0.0);
    }

    #[test]
    fn re_examples() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let ones: Vec<Vec<f64>> = t.iter().map(|_| vec![1.0, 0.5, 0.0]).collect();
        let zeros: Vec<Vec<f64>> = t.iter().map(|_| vec![0.0, 0.5, 0.0]).collect();
        let r = relative_error(&t, &ones, &zeros).unwrap();
        assert_eq!(r.per_node[0], Some(1.0));
        assert_eq!(r.per_node[1], Some(0.0));
        assert_eq!(r.per_node[2], None);
        assert_eq!(r.excluded, 1);
        assert_eq!(r.mean, Some(0.5));
        let same = relative_error(&t, &ones, &ones).unwrap();
        assert_eq!(same.mean, Some(0.0));
    }

    #[test]
    fn re_rejects_misaligned_input() {
        let t = [0.0, 1.0];
        assert!(relative_error(&t, &[vec![1.0]], &[vec![1.0], vec![1.0]]).is_err());
        assert!(relative_error(&t, &[vec![1.0], vec![1.0, 2.0]], &[vec![1.0], vec![1.0]]).is_err());
        assert!(check_grids(&[0.0, 1.0], &[0.0, 1.1]).is_err());
        assert!(check_grids(&[0.0, 0.1 + 0.2], &[0.0, 0.3]).is_ok());
    }

    #[test]
    fn comparison_series_checks_range() {
        assert!(ComparisonSeries::new(vec![0.0, 1.0], vec![0.5, 1.2], vec![0.5, 0.5]).is_err());
        let s = ComparisonSeries::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(s.relative_error(), Some(1.0));
    }

    #[test]
    fn predictions_by_family() {
        assert_eq!(predicted_gap(&Combat::<f64>::type_iii_sqrt(), 0.3), GapPrediction::MarkovBelow);
        assert_eq!(predicted_gap(&Combat::<f64>::type_iv_square(), 0.3), GapPrediction::MarkovAbove);
        let t1 = Combat::type_i(0.4).unwrap();
        assert_eq!(predicted_gap(&t1, 0.3), GapPrediction::MarkovAbove);
        assert_eq!(predicted_gap(&t1, 0.5), GapPrediction::MarkovBelow);
        assert_eq!(predicted_gap(&Combat::<f64>::type_ii_default(), 0.5), GapPrediction::None);
    }
}
