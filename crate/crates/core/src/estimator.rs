//! Maximum-likelihood estimation of BEKK models.
//!
//! Quasi-Newton (BFGS) ascent on `log L / n_eff` with a logarithmic barrier
//! keeping the iterates inside
//! `{C ≻ 0, det C > floor, ρ < ρ_max, |θ_i| ≤ bound}`. The barrier weight
//! follows a decreasing schedule ending at zero, so the last stage works on
//! the plain likelihood and infeasible trial points are rejected by the line
//! search. Several starts run in parallel; the best log-likelihood wins,
//! earliest start on ties.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bekk::{self, stationarity_radius_theta, BekkOrder, BekkParams, LikelihoodOptions, PathSample};
use crate::error::{FitError, ModelError};
use crate::matrix::Mat;
use crate::nested::{CandidateFit, FitStatus, NestedModelFamily, OrderIndex};
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Iteration budget per start, shared by all barrier stages.
    pub max_iterations: usize,
    /// Tolerance on the sup-norm of the per-observation score.
    pub grad_tol: f64,
    /// Number of non-warm starts (one template plus random draws).
    pub starts: usize,
    /// Largest admitted stationarity radius.
    pub rho_max: f64,
    /// Lower bound on `det C`.
    pub det_floor: f64,
    /// Bound on every parameter's absolute value.
    pub entry_bound: f64,
    /// Barrier weights, one BFGS run each.
    pub barrier: Vec<f64>,
    pub seed: u64,
    pub likelihood: LikelihoodOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            grad_tol: 1e-6,
            starts: 5,
            rho_max: 0.999,
            det_floor: 1e-12,
            entry_bound: 1e3,
            barrier: vec![1e-4, 1e-6, 1e-8, 0.0],
            seed: 0,
            likelihood: LikelihoodOptions::default(),
        }
    }
}

impl FitOptions {
    /// Reports every invalid field at once.
    pub fn validate(&self) -> Result<(), FitError> {
        let mut bad = Vec::new();
        if self.max_iterations == 0 {
            bad.push("max_iterations must be at least 1".to_string());
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            bad.push(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if self.starts == 0 {
            bad.push("starts must be at least 1".to_string());
        }
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            bad.push(format!("rho_max must lie in (0, 1), got {}", self.rho_max));
        }
        if !(self.det_floor >= 0.0 && self.det_floor.is_finite()) {
            bad.push(format!("det_floor must be non-negative, got {}", self.det_floor));
        }
        if !(self.entry_bound > 0.0) {
            bad.push(format!("entry_bound must be positive, got {}", self.entry_bound));
        }
        if self.barrier.is_empty() || self.barrier.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            bad.push("barrier must be a non-empty list of non-negative weights".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(FitError::Options(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub order: BekkOrder,
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    /// Number of terms in the log-likelihood.
    pub n_eff: usize,
    pub status: FitStatus,
    pub iterations: usize,
    /// Sup-norm of `score / n_eff` at `theta`.
    pub grad_norm: f64,
    pub rho: f64,
    pub start_index: usize,
    pub warm_started: bool,
}

impl FitResult {
    pub fn params(&self) -> Result<BekkParams, ModelError> {
        BekkParams::unpack(&self.order, &self.theta)
    }

    pub fn to_candidate(&self) -> CandidateFit {
        CandidateFit {
            order: OrderIndex::new(vec![self.order.k1, self.order.k2]).expect("two coordinates"),
            gamma: self.order.gamma(),
            log_likelihood: Some(self.log_likelihood),
            theta: self.theta.clone(),
            status: self.status,
            iterations: self.iterations,
            grad_norm: Some(self.grad_norm),
            message: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Point {
    theta: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    log_likelihood: f64,
    score: Vec<f64>,
    rho: f64,
}

struct Objective<'a> {
    order: BekkOrder,
    data: &'a PathSample,
    opts: &'a FitOptions,
    n_eff: f64,
}

impl<'a> Objective<'a> {
    /// `det C` and `C⁻¹` (row-major) when `C` is positive definite.
    fn c_factor(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let m = self.order.m;
        let c = Mat::from_col_major(m, m, &theta[..m * m]).ok()?.symmetrized();
        let l = c.cholesky().ok()?;
        let det: f64 = (0..m).map(|i| l[(i, i)] * l[(i, i)]).product();
        let inv = c.inverse().ok()?;
        Some((det, inv.as_slice().to_vec()))
    }

    fn rho_gradient(&self, theta: &[f64], rho: f64) -> Vec<f64> {
        let m = self.order.m;
        let mm = m * m;
        let mut grad = vec![0.0; theta.len()];
        if m == 1 {
            for i in 1..theta.len() {
                grad[i] = 2.0 * theta[i];
            }
            return grad;
        }
        let mut work = theta.to_vec();
        for i in mm..theta.len() {
            let h = 1e-7 * theta[i].abs().max(1.0);
            work[i] = theta[i] + h;
            let up = stationarity_radius_theta(&self.order, &work).unwrap_or(rho);
            work[i] = theta[i] - h;
            let dn = stationarity_radius_theta(&self.order, &work).unwrap_or(rho);
            work[i] = theta[i];
            grad[i] = (up - dn) / (2.0 * h);
        }
        grad
    }

    /// Barrier objective to minimize; `None` outside the feasible set.
    fn eval(&self, theta: &[f64], mu: f64) -> Option<Point> {
        let opts = self.opts;
        if theta.iter().any(|v| !(v.abs() <= opts.entry_bound)) {
            return None;
        }
        let (det, cinv) = self.c_factor(theta)?;
        if !(det > opts.det_floor) {
            return None;
        }
        let rho = stationarity_radius_theta(&self.order, theta).ok()?;
        if !(rho < opts.rho_max) {
            return None;
        }
        let ev = bekk::evaluate(&self.order, theta, self.data, &opts.likelihood, true).ok()?;
        let score = ev.gradient.expect("gradient requested");
        let n = self.n_eff;
        let mut f = -ev.log_likelihood / n;
        let mut grad: Vec<f64> = score.iter().map(|s| -s / n).collect();
        if mu > 0.0 {
            let slack_rho = opts.rho_max - rho;
            let slack_det = det - opts.det_floor;
            f -= mu * (slack_rho.ln() + slack_det.ln());
            for (g, dr) in grad.iter_mut().zip(self.rho_gradient(theta, rho)) {
                *g += mu * dr / slack_rho;
            }
            let m = self.order.m;
            for col in 0..m {
                for row in 0..m {
                    grad[col * m + row] -= mu * det * cinv[row * m + col] / slack_det;
                }
            }
        }
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        Some(Point {
            theta: theta.to_vec(),
            f,
            grad,
            log_likelihood: ev.log_likelihood,
            score,
            rho,
        })
    }

    fn score_norm(&self, p: &Point) -> f64 {
        p.score.iter().fold(0.0, |a: f64, s| a.max((s / self.n_eff).abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// BFGS on one barrier stage. Returns the final point and iterations used.
fn minimize(
    obj: &Objective,
    mut cur: Point,
    mu: f64,
    tol: f64,
    max_iter: usize,
    hinv: &mut Option<Vec<f64>>,
) -> (Point, usize) {
    let g = cur.theta.len();
    let mut it = 0;
    let mut flat = 0;
    while it < max_iter && flat < 3 {
        if sup_norm(&cur.grad) <= tol {
            break;
        }
        let mut d: Vec<f64> = match hinv {
            Some(h) => (0..g).map(|i| -dot(&h[i * g..(i + 1) * g], &cur.grad)).collect(),
            None => cur.grad.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&cur.grad, &d);
        if !(slope < 0.0) {
            *hinv = None;
            d = cur.grad.iter().map(|v| -v).collect();
            slope = dot(&cur.grad, &d);
        }
        it += 1;
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; g];
        for _ in 0..60 {
            for i in 0..g {
                trial[i] = cur.theta[i] + alpha * d[i];
            }
            if let Some(p) = obj.eval(&trial, mu) {
                if p.f <= cur.f + 1e-4 * alpha * slope {
                    accepted = Some(p);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            if hinv.is_some() {
                *hinv = None;
                continue;
            }
            break;
        };
        let s: Vec<f64> = (0..g).map(|i| next.theta[i] - cur.theta[i]).collect();
        let y: Vec<f64> = (0..g).map(|i| next.grad[i] - cur.grad[i]).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() && sy > 0.0 {
            let h = hinv.get_or_insert_with(|| {
                let mut id = vec![0.0; g * g];
                for i in 0..g {
                    id[i * g + i] = sy / yy;
                }
                id
            });
            // H ← (I - ρ s y') H (I - ρ y s') + ρ s s'
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..g).map(|i| dot(&h[i * g..(i + 1) * g], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..g {
                for j in 0..g {
                    h[i * g + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if cur.f - next.f <= 1e-14 * cur.f.abs().max(1.0) {
            flat += 1;
        } else {
            flat = 0;
        }
        cur = next;
    }
    (cur, it)
}

/// Runs every barrier stage from `theta0`. Never returns a point worse than
/// the start.
fn run_start(obj: &Objective, theta0: &[f64]) -> Result<(Point, usize), String> {
    let opts = obj.opts;
    let start = obj
        .eval(theta0, 0.0)
        .ok_or_else(|| "start is infeasible or the likelihood is singular there".to_string())?;
    let mut cur = start.theta.clone();
    let mut used = 0;
    let mut hinv = None;
    let stages = opts.barrier.len();
    for (stage, &mu) in opts.barrier.iter().enumerate() {
        if used >= opts.max_iterations {
            break;
        }
        let tol = if stage + 1 == stages { opts.grad_tol * 1e-3 } else { opts.grad_tol };
        let Some(p) = obj.eval(&cur, mu) else { break };
        let (p, it) = minimize(obj, p, mu, tol, opts.max_iterations - used, &mut hinv);
        used += it;
        cur = p.theta;
    }
    let end = obj.eval(&cur, 0.0).unwrap_or_else(|| start.clone());
    if end.log_likelihood >= start.log_likelihood {
        Ok((end, used))
    } else {
        Ok((start, used))
    }
}

/// Packed start with diagonal `A_l`, `B_l` and `C` scaled from the sample
/// second moment so that the implied unconditional covariance matches it.
fn diagonal_start(order: &BekkOrder, moment: &[f64], rho: f64, arch_share: f64, jitter: &[f64]) -> Vec<f64> {
    let m = order.m;
    let (k1, k2) = (order.k1, order.k2);
    let share = match (k1, k2) {
        (0, _) => 1.0,
        (_, 0) => 0.0,
        _ => arch_share,
    };
    let a2 = if k2 > 0 { share * rho / k2 as f64 } else { 0.0 };
    let b2 = if k1 > 0 { (1.0 - share) * rho / k1 as f64 } else { 0.0 };
    let mut theta = Vec::with_capacity(order.gamma());
    let scale = (1.0 - rho).max(0.05);
    for col in 0..m {
        for row in 0..m {
            theta.push(moment[row * m + col] * scale);
        }
    }
    let mut j = 0;
    let mut block = |theta: &mut Vec<f64>, var: f64| {
        for col in 0..m {
            for row in 0..m {
                if row == col {
                    theta.push(var.sqrt() * jitter[j % jitter.len()]);
                    j += 1;
                } else {
                    theta.push(0.0);
                }
            }
        }
    };
    for l in 0..order.kbar() {
        if l < k2 {
            block(&mut theta, a2);
        }
        if l < k1 {
            block(&mut theta, b2);
        }
    }
    theta
}

fn start_points(order: &BekkOrder, moment: &[f64], options: &FitOptions) -> Vec<Vec<f64>> {
    if order.k1 + order.k2 == 0 {
        return vec![diagonal_start(order, moment, 0.0, 0.0, &[1.0])];
    }
    let mut out = vec![diagonal_start(order, moment, 0.9, 0.1, &[1.0])];
    for i in 1..options.starts {
        let mut rng = rng_from_seed(derive_seed(options.seed, &[stream::START, i as u64]));
        let rho = rng.gen_range(0.2..0.95);
        let share = rng.gen_range(0.05..0.6);
        let jitter: Vec<f64> = (0..order.m * (order.k1 + order.k2))
            .map(|_| rng.gen_range(0.8..1.0))
            .collect();
        out.push(diagonal_start(order, moment, rho, share, &jitter));
    }
    out
}

pub fn fit(data: &PathSample, order: &BekkOrder, options: &FitOptions) -> Result<FitResult, FitError> {
    fit_with_start(data, order, options, None)
}

/// Like [`fit`], with an extra start at `warm` (tried first).
pub fn fit_with_start(
    data: &PathSample,
    order: &BekkOrder,
    options: &FitOptions,
    warm: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    options.validate()?;
    order.validate()?;
    if data.dim() != order.m {
        return Err(ModelError::Data(format!(
            "data has dimension {}, order has {}",
            data.dim(),
            order.m
        ))
        .into());
    }
    let start = options.likelihood.effective_start(order);
    if data.len() <= start {
        return Err(ModelError::InsufficientData {
            needed: start,
            got: data.len(),
        }
        .into());
    }
    if let Some(w) = warm {
        if w.len() != order.gamma() {
            return Err(FitError::Options(format!(
                "warm start has {} entries, order needs {}",
                w.len(),
                order.gamma()
            )));
        }
    }
    let obj = Objective {
        order: *order,
        data,
        opts: options,
        n_eff: (data.len() - start) as f64,
    };
    let moment = data.second_moment(start);
    let mut starts: Vec<(Vec<f64>, bool)> = warm.map(|w| (w.to_vec(), true)).into_iter().collect();
    starts.extend(start_points(order, &moment, options).into_iter().map(|t| (t, false)));

    let outcomes: Vec<Result<(Point, usize), String>> =
        starts.par_iter().map(|(theta, _)| run_start(&obj, theta)).collect();

    let mut best: Option<(usize, &Point, usize)> = None;
    for (i, outcome) in outcomes.iter().enumerate() {
        if let Ok((p, it)) = outcome {
            if best.map_or(true, |(_, b, _)| p.log_likelihood > b.log_likelihood) {
                best = Some((i, p, *it));
            }
        }
    }
    let Some((index, point, iterations)) = best else {
        let first = outcomes
            .iter()
            .find_map(|o| o.as_ref().err().cloned())
            .unwrap_or_default();
        return Err(FitError::AllStartsFailed {
            k1: order.k1,
            k2: order.k2,
            count: outcomes.len(),
            first,
        });
    };
    let grad_norm = obj.score_norm(point);
    let status = if grad_norm <= 10.0 * options.grad_tol {
        FitStatus::Converged
    } else if iterations >= options.max_iterations {
        FitStatus::MaxIterations
    } else {
        FitStatus::Stalled
    };
    let mut params = BekkParams::unpack(order, &point.theta)?;
    params.normalize_signs();
    Ok(FitResult {
        order: *order,
        theta: params.pack(),
        log_likelihood: point.log_likelihood,
        n_eff: data.len() - start,
        status,
        iterations,
        grad_norm,
        rho: point.rho,
        start_index: index,
        warm_started: starts[index].1,
    })
}

/// Fits every order, warm-starting each from the embedded best fit among
/// the smaller orders in the list. Orders are processed by total lag count,
/// so the outcome does not depend on the order of `orders`; the seed of
/// each fit is derived from `(options.seed, k₁, k₂)`.
pub fn profile_fit_sequence(
    data: &PathSample,
    orders: &[BekkOrder],
    options: &FitOptions,
) -> Vec<Result<FitResult, FitError>> {
    let mut results: Vec<Option<Result<FitResult, FitError>>> = vec![None; orders.len()];
    let mut levels: Vec<usize> = orders.iter().map(|o| o.k1 + o.k2).collect();
    levels.sort_unstable();
    levels.dedup();
    for level in levels {
        let batch: Vec<usize> = (0..orders.len()).filter(|&i| orders[i].k1 + orders[i].k2 == level).collect();
        let fitted: Vec<(usize, Result<FitResult, FitError>)> = batch
            .par_iter()
            .map(|&i| {
                let o = orders[i];
                let warm = results
                    .iter()
                    .filter_map(|r| r.as_ref().and_then(|r| r.as_ref().ok()))
                    .filter(|f| f.order.leq(&o) && f.order != o)
                    .max_by(|a, b| {
                        a.log_likelihood
                            .total_cmp(&b.log_likelihood)
                            .then((b.order.k1, b.order.k2).cmp(&(a.order.k1, a.order.k2)))
                    })
                    .and_then(|f| f.params().ok())
                    .and_then(|p| p.embed(&o).ok())
                    .map(|p| p.pack());
                let mut opts = options.clone();
                opts.seed = derive_seed(options.seed, &[o.k1 as u64, o.k2 as u64]);
                (i, fit_with_start(data, &o, &opts, warm.as_deref()))
            })
            .collect();
        for (i, r) in fitted {
            results[i] = Some(r);
        }
    }
    results.into_iter().map(|r| r.expect("every order fitted")).collect()
}

/// BEKK models of a fixed dimension as a nested family over `(k₁, k₂)`.
///
/// Every candidate conditions on the first `max(K₁, K₂)` observations of
/// the search bound `K`.
#[derive(Debug, Clone)]
pub struct BekkFamily {
    pub m: usize,
    pub options: FitOptions,
    pub burn_in: usize,
}

impl BekkFamily {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            options: FitOptions::default(),
            burn_in: 500,
        }
    }

    pub fn order(&self, k: &OrderIndex) -> BekkOrder {
        let c = k.coords();
        BekkOrder::new(self.m, c[0], c.get(1).copied().unwrap_or(0))
    }

    fn options_for(&self, bound: &OrderIndex, seed: u64) -> FitOptions {
        let mut opts = self.options.clone();
        opts.seed = seed;
        opts.likelihood.start = Some(self.order(bound).kbar());
        opts
    }
}

impl NestedModelFamily for BekkFamily {
    type Data = PathSample;

    fn name(&self) -> &str {
        "bekk"
    }

    fn lattice_dim(&self) -> usize {
        2
    }

    fn gamma(&self, k: &OrderIndex) -> usize {
        self.order(k).gamma()
    }

    fn sample_len(&self, data: &PathSample) -> usize {
        data.len()
    }

    fn min_sample_len(&self, bound: &OrderIndex) -> usize {
        let o = self.order(bound);
        o.kbar() + o.gamma() + 1
    }

    fn fit(&self, data: &PathSample, k: &OrderIndex, bound: &OrderIndex, seed: u64) -> CandidateFit {
        let order = self.order(k);
        match fit(data, &order, &self.options_for(bound, seed)) {
            Ok(r) => r.to_candidate(),
            Err(e) => CandidateFit::failed(k.clone(), order.gamma(), e.to_string()),
        }
    }

    fn fit_candidates(
        &self,
        data: &PathSample,
        candidates: &[OrderIndex],
        bound: &OrderIndex,
        seed: u64,
    ) -> Vec<CandidateFit> {
        let orders: Vec<BekkOrder> = candidates.iter().map(|k| self.order(k)).collect();
        let opts = self.options_for(bound, seed);
        profile_fit_sequence(data, &orders, &opts)
            .into_iter()
            .zip(candidates)
            .map(|(r, k)| match r {
                Ok(r) => r.to_candidate(),
                Err(e) => CandidateFit::failed(k.clone(), self.gamma(k), e.to_string()),
            })
            .collect()
    }

    fn log_likelihood(
        &self,
        data: &PathSample,
        k: &OrderIndex,
        theta: &[f64],
        bound: &OrderIndex,
    ) -> Result<f64, ModelError> {
        let opts = LikelihoodOptions::with_start(self.order(bound).kbar());
        Ok(bekk::evaluate(&self.order(k), theta, data, &opts, false)?.log_likelihood)
    }

    fn score(
        &self,
        data: &PathSample,
        k: &OrderIndex,
        theta: &[f64],
        bound: &OrderIndex,
    ) -> Result<Vec<f64>, ModelError> {
        let opts = LikelihoodOptions::with_start(self.order(bound).kbar());
        Ok(bekk::evaluate(&self.order(k), theta, data, &opts, true)?
            .gradient
            .expect("gradient requested"))
    }

    fn simulate(&self, k: &OrderIndex, theta: &[f64], n: usize, seed: u64) -> Result<PathSample, ModelError> {
        let params = BekkParams::unpack(&self.order(k), theta)?;
        bekk::simulate(&params, n, seed, self.burn_in)
    }

    fn prefix(&self, data: &PathSample, n: usize) -> PathSample {
        data.prefix(n)
    }

    fn embed(&self, from: &OrderIndex, theta: &[f64], to: &OrderIndex) -> Vec<f64> {
        BekkParams::unpack(&self.order(from), theta)
            .and_then(|p| p.embed(&self.order(to)))
            .map(|p| p.pack())
            .expect("embedding between nested orders")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_fit_is_the_second_moment() {
        let p = BekkParams::new(Mat::from_rows(&[[1.0, 0.3], [0.3, 0.5]]), vec![], vec![]).unwrap();
        let data = bekk::simulate(&p, 500, 3, 0).unwrap();
        let r = fit(&data, &BekkOrder::new(2, 0, 0), &FitOptions::default()).unwrap();
        let s = data.second_moment(0);
        assert!(r.theta.iter().zip([s[0], s[2], s[1], s[3]]).all(|(a, b)| (a - b).abs() < 1e-10));
        assert_eq!(r.status, FitStatus::Converged);
    }

    #[test]
    fn scalar_garch_recovers_parameters() {
        let truth = BekkParams::scalar(0.1, 0.3, 0.9).unwrap();
        let data = bekk::simulate(&truth, 3000, 21, 500).unwrap();
        let r = fit(&data, &BekkOrder::new(1, 1, 1), &FitOptions::default()).unwrap();
        assert_eq!(r.status, FitStatus::Converged, "{r:?}");
        assert!((r.theta[1] - 0.3).abs() < 0.06 && (r.theta[2] - 0.9).abs() < 0.05, "{r:?}");
        let at_truth = bekk::log_likelihood(&truth, &data).unwrap();
        assert!(r.log_likelihood >= at_truth);
        assert!(r.theta[1] >= 0.0 && r.theta[2] >= 0.0);
    }

    #[test]
    fn fitting_is_deterministic() {
        let truth = BekkParams::scalar(0.2, 0.4, 0.7).unwrap();
        let data = bekk::simulate(&truth, 400, 1, 100).unwrap();
        let o = BekkOrder::new(1, 1, 1);
        let opts = FitOptions {
            seed: 9,
            ..FitOptions::default()
        };
        assert_eq!(fit(&data, &o, &opts).unwrap(), fit(&data, &o, &opts).unwrap());
    }

    #[test]
    fn profile_sequence_is_monotone_and_order_free() {
        let truth = BekkParams::scalar(0.1, 0.35, 0.8).unwrap();
        let data = bekk::simulate(&truth, 600, 4, 200).unwrap();
        let mut opts = FitOptions::default();
        opts.likelihood.start = Some(2);
        let orders: Vec<BekkOrder> = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(a, b)| BekkOrder::new(1, a, b))
            .collect();
        let fits: Vec<FitResult> = profile_fit_sequence(&data, &orders, &opts)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        for small in &fits {
            for big in &fits {
                if small.order.leq(&big.order) {
                    assert!(big.log_likelihood >= small.log_likelihood);
                }
            }
        }
        let mut reversed = orders.clone();
        reversed.reverse();
        let back: Vec<FitResult> = profile_fit_sequence(&data, &reversed, &opts)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        for (a, b) in fits.iter().zip(back.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn options_report_every_problem() {
        let opts = FitOptions {
            starts: 0,
            rho_max: 1.5,
            ..FitOptions::default()
        };
        let msg = opts.validate().unwrap_err().to_string();
        assert!(msg.contains("starts") && msg.contains("rho_max"));
    }
}
