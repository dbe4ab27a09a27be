//! Traces of likelihood-based statistics over a growing sample.
//!
//! Every trace simulates one path of length `max(grid)` per seed from the
//! true model and evaluates the statistic on its prefixes, so the points of
//! one seed are nested samples. Cells are independent and computed in
//! parallel; rows come out sorted by `(seed, n)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::matrix::{symmetric_eigen, Mat};
use crate::nested::{NestedModelFamily, OrderIndex};
use crate::seed::{derive_seed, stream};

pub const DEFAULT_GRID: [usize; 5] = [500, 1000, 2000, 4000, 8000];

/// Relative step of the finite-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("grid must be non-empty and strictly increasing")]
    Grid,
    #[error("no seeds given")]
    NoSeeds,
    #[error("order {k} is not admissible for this statistic with true order {r}: {reason}")]
    Order { k: String, r: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write trace: {0}")]
    Io(String),
}

/// Data-generating model of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub order: OrderIndex,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    FitFailed,
    NonFinite,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::FitFailed => "fit_failed",
            PointStatus::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub statistic: String,
    pub n: usize,
    pub seed: u64,
    /// `NaN` unless `status` is `Ok`.
    pub value: f64,
    pub status: PointStatus,
}

/// Min, median and max over seeds at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub statistic: String,
    pub n: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub statistic: String,
    pub grid: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        len if len % 2 == 1 => v[len / 2],
        len => 0.5 * (v[len / 2 - 1] + v[len / 2]),
    }
}

impl DiagnosticTrace {
    /// Names of the statistics present, in first-appearance order.
    pub fn statistics(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.statistic) {
                out.push(r.statistic.clone());
            }
        }
        out
    }

    /// Unflagged values of `statistic` at `n`, in seed order.
    pub fn values(&self, statistic: &str, n: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.statistic == statistic && r.n == n && r.status == PointStatus::Ok)
            .map(|r| r.value)
            .collect()
    }

    pub fn row(&self, statistic: &str, n: usize, seed: u64) -> Option<&TraceRow> {
        self.rows
            .iter()
            .find(|r| r.statistic == statistic && r.n == n && r.seed == seed)
    }

    pub fn summary(&self) -> Vec<Spread> {
        let mut out = Vec::new();
        for stat in self.statistics() {
            for &n in &self.grid {
                let all: Vec<&TraceRow> = self.rows.iter().filter(|r| r.statistic == stat && r.n == n).collect();
                if all.is_empty() {
                    continue;
                }
                let ok = self.values(&stat, n);
                let fold = |init: f64, f: fn(f64, f64) -> f64| ok.iter().copied().fold(init, f);
                out.push(Spread {
                    statistic: stat.clone(),
                    n,
                    min: if ok.is_empty() { f64::NAN } else { fold(f64::INFINITY, f64::min) },
                    median: median(&ok),
                    max: if ok.is_empty() { f64::NAN } else { fold(f64::NEG_INFINITY, f64::max) },
                    count: ok.len(),
                    flagged: all.len() - ok.len(),
                });
            }
        }
        out
    }

    /// Tidy CSV: `statistic,n,seed,value,status`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DiagnosticError> {
        let io = |e: csv::Error| DiagnosticError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["statistic", "n", "seed", "value", "status"]).map_err(io)?;
        for r in &self.rows {
            let value = if r.value.is_nan() { String::new() } else { format!("{:?}", r.value) };
            w.write_record([
                r.statistic.as_str(),
                &r.n.to_string(),
                &r.seed.to_string(),
                &value,
                r.status.as_str(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| DiagnosticError::Io(e.to_string()))
    }
}

fn check_grid(grid: &[usize], seeds: &[u64]) -> Result<(), DiagnosticError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(DiagnosticError::Grid);
    }
    if seeds.is_empty() {
        return Err(DiagnosticError::NoSeeds);
    }
    Ok(())
}

fn row(statistic: &str, n: usize, seed: u64, value: Option<f64>, failed: bool) -> TraceRow {
    let (value, status) = match value {
        _ if failed => (f64::NAN, PointStatus::FitFailed),
        Some(v) if v.is_finite() => (v, PointStatus::Ok),
        _ => (f64::NAN, PointStatus::NonFinite),
    };
    TraceRow {
        statistic: statistic.to_string(),
        n,
        seed,
        value,
        status,
    }
}

fn log_log(n: usize) -> f64 {
    (n.max(3) as f64).ln().ln()
}

/// Runs `cell(seed, data, n)` on every prefix of every seed's path;
/// results are ordered by `(seed, n)`.
fn over_cells<F, R, T>(
    family: &F,
    truth: &TrueModel,
    grid: &[usize],
    seeds: &[u64],
    cell: T,
) -> Result<Vec<(u64, usize, R)>, DiagnosticError>
where
    F: NestedModelFamily,
    R: Send,
    T: Fn(u64, &F::Data, usize) -> R + Sync,
{
    check_grid(grid, seeds)?;
    let n_max = *grid.last().expect("non-empty grid");
    let per_seed: Result<Vec<Vec<(u64, usize, R)>>, ModelError> = seeds
        .par_iter()
        .map(|&seed| {
            let path = family.simulate(&truth.order, &truth.theta, n_max, derive_seed(seed, &[stream::DATA]))?;
            Ok(grid
                .par_iter()
                .map(|&n| (seed, n, cell(seed, &family.prefix(&path, n), n)))
                .collect())
        })
        .collect();
    Ok(per_seed?.into_iter().flatten().collect())
}

fn scalar_rows(statistic: &str, cells: Vec<(u64, usize, Option<f64>)>, failed_when_missing: bool) -> Vec<TraceRow> {
    cells
        .into_iter()
        .map(|(seed, n, v)| row(statistic, n, seed, v, failed_when_missing && v.is_none()))
        .collect()
}

fn fit_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, &[stream::FIT, n as u64])
}

/// Central differences of the analytic score with relative step
/// [`HESSIAN_STEP`].
pub fn finite_difference_hessian<F: NestedModelFamily>(
    family: &F,
    data: &F::Data,
    k: &OrderIndex,
    theta: &[f64],
    bound: &OrderIndex,
) -> Result<Mat, ModelError> {
    let g = theta.len();
    let mut hess = Mat::zeros(g, g);
    let mut work = theta.to_vec();
    for j in 0..g {
        let h = HESSIAN_STEP * theta[j].abs().max(1e-2);
        work[j] = theta[j] + h;
        let up = family.score(data, k, &work, bound)?;
        work[j] = theta[j] - h;
        let dn = family.score(data, k, &work, bound)?;
        work[j] = theta[j];
        for i in 0..g {
            hess[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    Ok(hess.symmetrized())
}

/// `-(Hessian of log L at θ̂_k)/n`: rows `hessian_min_eig` (smallest
/// eigenvalue) at every `n` and `hessian_step` (Frobenius distance to the
/// previous grid point of the same seed) from the second grid point on.
pub fn hessian_trace<F: NestedModelFamily>(
    family: &F,
    truth: &TrueModel,
    k: &OrderIndex,
    grid: &[usize],
    seeds: &[u64],
) -> Result<DiagnosticTrace, DiagnosticError> {
    require_leq(&truth.order, k, "the fitted order must dominate the true order")?;
    let cells = over_cells(family, truth, grid, seeds, |seed, data, n| {
        let fit = family.fit(data, k, k, fit_seed(seed, n));
        if fit.usable_log_likelihood().is_none() {
            return Err(PointStatus::FitFailed);
        }
        finite_difference_hessian(family, data, k, &fit.theta, k)
            .map(|h| h.scale(-1.0 / n as f64))
            .map_err(|_| PointStatus::NonFinite)
    })?;
    let mut rows = Vec::with_capacity(cells.len() * 2);
    for (idx, (seed, n, cell)) in cells.iter().enumerate() {
        let min_eig = match cell {
            Ok(m) => symmetric_eigen(m).ok().map(|e| e.values[0]),
            Err(_) => None,
        };
        rows.push(row("hessian_min_eig", *n, *seed, min_eig, matches!(cell, Err(PointStatus::FitFailed))));
        if idx > 0 && cells[idx - 1].0 == *seed {
            let dist = match (&cells[idx - 1].2, cell) {
                (Ok(p), Ok(c)) => c.sub(p).ok().map(|d| d.frobenius_norm()),
                _ => None,
            };
            rows.push(row("hessian_step", *n, *seed, dist, dist.is_none()));
        }
    }
    Ok(DiagnosticTrace {
        statistic: "hessian".into(),
        grid: grid.to_vec(),
        rows,
    })
}

fn require_leq(r: &OrderIndex, k: &OrderIndex, reason: &str) -> Result<(), DiagnosticError> {
    if r.leq(k).unwrap_or(false) {
        Ok(())
    } else {
        Err(DiagnosticError::Order {
            k: k.to_string(),
            r: r.to_string(),
            reason: reason.into(),
        })
    }
}

/// `‖∇ log L(θ_true)‖₂ / √(2 n log log n)` with `θ_true` embedded in `Θ_k`.
pub fn score_lil_trace<F: NestedModelFamily>(
    family: &F,
    truth: &TrueModel,
    k: &OrderIndex,
    grid: &[usize],
    seeds: &[u64],
) -> Result<DiagnosticTrace, DiagnosticError> {
    require_leq(&truth.order, k, "the evaluated order must dominate the true order")?;
    let theta = family.embed(&truth.order, &truth.theta, k);
    let cells = over_cells(family, truth, grid, seeds, |_, data, n| {
        family.score(data, k, &theta, k).ok().map(|s| {
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm / (2.0 * n as f64 * log_log(n)).sqrt()
        })
    })?;
    let rows = scalar_rows("score_lil", cells, false);
    Ok(DiagnosticTrace {
        statistic: "score_lil".into(),
        grid: grid.to_vec(),
        rows,
    })
}

/// Maximized log-likelihoods of `a` and `b` on a common sample, fitted
/// through the same path `select_order` uses.
fn paired_fit<F: NestedModelFamily>(
    family: &F,
    data: &F::Data,
    a: &OrderIndex,
    b: &OrderIndex,
    seed: u64,
) -> Option<(f64, f64)> {
    let bound = a.join(b).ok()?;
    let fits = family.fit_candidates(data, &[a.clone(), b.clone()], &bound, seed);
    Some((fits[0].usable_log_likelihood()?, fits[1].usable_log_likelihood()?))
}

/// `(log L_r(θ̂_r) - log L_k(θ̂_k)) / n` for an order `k` that does not
/// dominate the truth. `k = r` is accepted and gives zero.
pub fn underfit_gap_trace<F: NestedModelFamily>(
    family: &F,
    truth: &TrueModel,
    k: &OrderIndex,
    grid: &[usize],
    seeds: &[u64],
) -> Result<DiagnosticTrace, DiagnosticError> {
    let r = &truth.order;
    if r.leq(k).unwrap_or(false) && r != k {
        return Err(DiagnosticError::Order {
            k: k.to_string(),
            r: r.to_string(),
            reason: "an underfitted order must not dominate the true order".into(),
        });
    }
    let cells = over_cells(family, truth, grid, seeds, |seed, data, n| {
        if k == r {
            Some(0.0)
        } else {
            paired_fit(family, data, r, k, fit_seed(seed, n)).map(|(lr, lk)| (lr - lk) / n as f64)
        }
    })?;
    let rows = scalar_rows("underfit_gap", cells, true);
    Ok(DiagnosticTrace {
        statistic: "underfit_gap".into(),
        grid: grid.to_vec(),
        rows,
    })
}

/// `(log L_k(θ̂_k) - log L_r(θ̂_r)) / log log n` for `k > r`.
pub fn overfit_gap_trace<F: NestedModelFamily>(
    family: &F,
    truth: &TrueModel,
    k: &OrderIndex,
    grid: &[usize],
    seeds: &[u64],
) -> Result<DiagnosticTrace, DiagnosticError> {
    let r = &truth.order;
    require_leq(r, k, "an overfitted order must dominate the true order")?;
    if r == k {
        return Err(DiagnosticError::Order {
            k: k.to_string(),
            r: r.to_string(),
            reason: "an overfitted order must differ from the true order".into(),
        });
    }
    let cells = over_cells(family, truth, grid, seeds, |seed, data, n| {
        paired_fit(family, data, k, r, fit_seed(seed, n)).map(|(lk, lr)| (lk - lr) / log_log(n))
    })?;
    let rows = scalar_rows("overfit_gap", cells, true);
    Ok(DiagnosticTrace {
        statistic: "overfit_gap".into(),
        grid: grid.to_vec(),
        rows,
    })
}
