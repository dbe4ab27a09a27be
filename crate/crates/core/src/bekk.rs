//! BEKK-GARCH(k₁, k₂) models.
//!
//! ```text
//! X_t = H_t^{1/2} ε_t,   ε_t ~ N(0, I_m)
//! H_t = C + Σ_{l=1}^{k₂} A_l X_{t-l} X'_{t-l} A'_l + Σ_{l=1}^{k₁} B_l H_{t-l} B'_l
//! ```
//!
//! `k₁` counts the lagged covariances (`B`), `k₂` the lagged observations
//! (`A`). Parameters are packed as
//! `θ = (vec C, vec A₁, vec B₁, vec A₂, vec B₂, ...)` where a block is
//! skipped once its lag exceeds the order, giving `γ(k) = m²(1 + k₁ + k₂)`.
//! The `C` block is read through its symmetric part `(M + M')/2`.
//!
//! The likelihood conditions on the first `s ≥ max(k₁, k₂)` observations:
//! `H_t` for `t < s` is the pre-sample value (by default `C`) and
//! `log L = Σ_{t=s}^{n-1} l_t` with
//! `l_t = -½ x'_t H_t⁻¹ x_t - ½ log det H_t`. The `-(m/2) log 2π` constant is
//! left out.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::matrix::{self, duplication_matrix, kronecker, pd_sqrt, spectral_radius, Mat};
use crate::seed::rng_from_seed;

/// `det H_t` below this is treated as singular.
pub const DET_FLOOR: f64 = 1e-300;
/// Largest accepted condition number of `H_t`.
pub const CONDITION_CAP: f64 = 1e12;

/// Order and dimension of a BEKK model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BekkOrder {
    /// Number of lagged covariance terms (`B` matrices).
    pub k1: usize,
    /// Number of lagged observation terms (`A` matrices).
    pub k2: usize,
    /// Series dimension.
    pub m: usize,
    /// Summands per lag; only `1` can be fitted.
    #[serde(default = "one")]
    pub inner_terms: usize,
}

fn one() -> usize {
    1
}

impl BekkOrder {
    pub fn new(m: usize, k1: usize, k2: usize) -> Self {
        Self {
            k1,
            k2,
            m,
            inner_terms: 1,
        }
    }

    /// `max(k₁, k₂)`.
    pub fn kbar(&self) -> usize {
        self.k1.max(self.k2)
    }

    pub fn gamma(&self) -> usize {
        self.m * self.m * (1 + self.inner_terms * (self.k1 + self.k2))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m == 0 {
            return Err(ModelError::InvalidOrder("dimension m must be at least 1".into()));
        }
        if self.inner_terms != 1 {
            return Err(ModelError::InvalidOrder(format!(
                "only one summand per lag is supported, got N={}",
                self.inner_terms
            )));
        }
        Ok(())
    }

    /// `self <= other` on the lattice (same dimension).
    pub fn leq(&self, other: &BekkOrder) -> bool {
        self.m == other.m && self.k1 <= other.k1 && self.k2 <= other.k2
    }
}

/// Offsets of the packed blocks inside `θ`.
#[derive(Debug, Clone)]
struct Layout {
    m: usize,
    a_off: Vec<usize>,
    b_off: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(order: &BekkOrder) -> Self {
        let mm = order.m * order.m;
        let mut a_off = Vec::with_capacity(order.k2);
        let mut b_off = Vec::with_capacity(order.k1);
        let mut off = mm;
        for l in 0..order.kbar() {
            if l < order.k2 {
                a_off.push(off);
                off += mm;
            }
            if l < order.k1 {
                b_off.push(off);
                off += mm;
            }
        }
        Self {
            m: order.m,
            a_off,
            b_off,
            len: off,
        }
    }

    /// Row-major copy of the block at `off` (stored column-major in θ).
    fn block(&self, theta: &[f64], off: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for c in 0..m {
            for r in 0..m {
                out[r * m + c] = theta[off + c * m + r];
            }
        }
        out
    }

    fn symmetric_c(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.m;
        let raw = self.block(theta, 0);
        let mut out = raw.clone();
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (raw[i * m + j] + raw[j * m + i]);
                out[i * m + j] = v;
                out[j * m + i] = v;
            }
        }
        out
    }
}

/// Structured BEKK parameters `(C, {A_l}, {B_l})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BekkParams {
    c: Mat,
    a: Vec<Mat>,
    b: Vec<Mat>,
}

impl BekkParams {
    /// `C` must be symmetric positive definite; every `A_l`, `B_l` is `m x m`.
    pub fn new(c: Mat, a: Vec<Mat>, b: Vec<Mat>) -> Result<Self, ModelError> {
        let m = c.rows();
        if !c.is_square() {
            return Err(ModelError::InvalidParameters("C must be square".into()));
        }
        for (name, mats) in [("A", &a), ("B", &b)] {
            if let Some(l) = mats.iter().position(|x| x.shape() != (m, m)) {
                return Err(ModelError::InvalidParameters(format!(
                    "{name}_{} must be {m}x{m}",
                    l + 1
                )));
            }
        }
        let all_finite = c
            .as_slice()
            .iter()
            .chain(a.iter().flat_map(|x| x.as_slice()))
            .chain(b.iter().flat_map(|x| x.as_slice()))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ModelError::InvalidParameters("non-finite entry".into()));
        }
        if !c.is_symmetric() {
            return Err(ModelError::InvalidParameters("C must be symmetric".into()));
        }
        let c = c.symmetrized();
        if !c.is_positive_definite() {
            return Err(ModelError::InvalidParameters("C must be positive definite".into()));
        }
        Ok(Self { c, a, b })
    }

    /// Scalar GARCH(1,1) written as BEKK: `h_t = c + a² x²_{t-1} + b² h_{t-1}`.
    pub fn scalar(c: f64, a: f64, b: f64) -> Result<Self, ModelError> {
        Self::new(
            Mat::from_rows(&[[c]]),
            vec![Mat::from_rows(&[[a]])],
            vec![Mat::from_rows(&[[b]])],
        )
    }

    pub fn dim(&self) -> usize {
        self.c.rows()
    }

    pub fn order(&self) -> BekkOrder {
        BekkOrder::new(self.dim(), self.b.len(), self.a.len())
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn a(&self) -> &[Mat] {
        &self.a
    }

    pub fn b(&self) -> &[Mat] {
        &self.b
    }

    /// `θ = (vec C, vec A₁, vec B₁, ...)`.
    pub fn pack(&self) -> Vec<f64> {
        let order = self.order();
        let mut theta = matrix::vec(&self.c);
        for l in 0..order.kbar() {
            if l < order.k2 {
                theta.extend(matrix::vec(&self.a[l]));
            }
            if l < order.k1 {
                theta.extend(matrix::vec(&self.b[l]));
            }
        }
        theta
    }

    /// Inverse of [`pack`](Self::pack). The `C` block is symmetrized, which
    /// is exact when it already is symmetric.
    pub fn unpack(order: &BekkOrder, theta: &[f64]) -> Result<Self, ModelError> {
        order.validate()?;
        let layout = Layout::new(order);
        if theta.len() != layout.len {
            return Err(ModelError::InvalidParameters(format!(
                "expected {} parameters for {:?}, got {}",
                layout.len,
                order,
                theta.len()
            )));
        }
        let m = order.m;
        let to_mat = |v: Vec<f64>| Mat::new(m, m, v).expect("block shape");
        let c = to_mat(layout.symmetric_c(theta));
        let a = layout.a_off.iter().map(|&o| to_mat(layout.block(theta, o))).collect();
        let b = layout.b_off.iter().map(|&o| to_mat(layout.block(theta, o))).collect();
        Self::new(c, a, b)
    }

    /// Flips the sign of every `A_l`, `B_l` whose first diagonal entry is
    /// negative. The model is invariant under these flips.
    pub fn normalize_signs(&mut self) {
        for mat in self.a.iter_mut().chain(self.b.iter_mut()) {
            if mat[(0, 0)] < 0.0 {
                *mat = mat.scale(-1.0);
            }
        }
    }

    /// The same model seen as a member of the larger order `to`
    /// (extra lags are zero matrices).
    pub fn embed(&self, to: &BekkOrder) -> Result<BekkParams, ModelError> {
        let from = self.order();
        if !from.leq(to) {
            return Err(ModelError::InvalidOrder(format!(
                "cannot embed {from:?} into {to:?}"
            )));
        }
        let m = self.dim();
        let mut a = self.a.clone();
        a.resize(to.k2, Mat::zeros(m, m));
        let mut b = self.b.clone();
        b.resize(to.k1, Mat::zeros(m, m));
        Ok(Self {
            c: self.c.clone(),
            a,
            b,
        })
    }

    /// `ρ(Σ Ã_l + Σ B̃_l)` with `Ã = D⁺(A⊗A)D`.
    pub fn stationarity_radius(&self) -> Result<f64, ModelError> {
        stationarity_radius_of(self.dim(), &self.a, &self.b)
    }

    pub fn stationarity(&self) -> Result<Stationarity, ModelError> {
        let rho = self.stationarity_radius()?;
        Ok(Stationarity {
            stationary: rho < 1.0,
            rho,
        })
    }
}

/// Result of the geometric-ergodicity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub stationary: bool,
    pub rho: f64,
}

pub(crate) fn stationarity_radius_of(m: usize, a: &[Mat], b: &[Mat]) -> Result<f64, ModelError> {
    if m == 1 {
        return Ok(a.iter().chain(b).map(|x| x[(0, 0)] * x[(0, 0)]).sum());
    }
    let (d, d_plus) = duplication_matrix(m)?;
    let half = m * (m + 1) / 2;
    let mut kron_sum = Mat::zeros(m * m, m * m);
    for x in a.iter().chain(b) {
        kron_sum = kron_sum.add(&kronecker(x, x))?;
    }
    let reduced = d_plus.matmul(&kron_sum)?.matmul(&d)?;
    debug_assert_eq!(reduced.shape(), (half, half));
    Ok(spectral_radius(&reduced)?)
}

/// Packed-θ stationarity radius; `C` is not looked at.
pub(crate) fn stationarity_radius_theta(order: &BekkOrder, theta: &[f64]) -> Result<f64, ModelError> {
    let layout = Layout::new(order);
    let m = order.m;
    if m == 1 {
        return Ok(layout
            .a_off
            .iter()
            .chain(&layout.b_off)
            .map(|&o| theta[o] * theta[o])
            .sum());
    }
    let to_mat = |o: usize| Mat::new(m, m, layout.block(theta, o)).expect("block shape");
    let a: Vec<Mat> = layout.a_off.iter().map(|&o| to_mat(o)).collect();
    let b: Vec<Mat> = layout.b_off.iter().map(|&o| to_mat(o)).collect();
    stationarity_radius_of(m, &a, &b)
}

/// Parameters of a model file: `{m, k1, k2, theta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub m: usize,
    pub k1: usize,
    pub k2: usize,
    pub theta: Vec<f64>,
}

impl ParamsFile {
    pub fn from_params(p: &BekkParams) -> Self {
        let o = p.order();
        Self {
            m: o.m,
            k1: o.k1,
            k2: o.k2,
            theta: p.pack(),
        }
    }

    pub fn order(&self) -> BekkOrder {
        BekkOrder::new(self.m, self.k1, self.k2)
    }

    pub fn to_params(&self) -> Result<BekkParams, ModelError> {
        BekkParams::unpack(&self.order(), &self.theta)
    }
}

/// Observations `x_1..x_n` in `ℝ^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    m: usize,
    data: Vec<f64>,
    pub seed: Option<u64>,
    pub burn_in: usize,
}

impl PathSample {
    /// `data` holds `n` rows of `m` values.
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if m == 0 || data.is_empty() || !data.len().is_multiple_of(m) {
            return Err(ModelError::Data(format!(
                "{} values do not form rows of width {m}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Data(format!(
                "non-finite observation at t={}",
                i / m
            )));
        }
        Ok(Self {
            m,
            data,
            seed: None,
            burn_in: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let m = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(ModelError::Data("ragged rows".into()));
        }
        Self::new(m, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn obs(&self, t: usize) -> &[f64] {
        &self.data[t * self.m..(t + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// First `n` observations.
    pub fn prefix(&self, n: usize) -> PathSample {
        let n = n.min(self.len()).max(1);
        PathSample {
            m: self.m,
            data: self.data[..n * self.m].to_vec(),
            seed: self.seed,
            burn_in: self.burn_in,
        }
    }

    /// `Σ_{t in range} x_t x'_t / |range|`, row-major.
    pub fn second_moment(&self, from: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        let n = self.len();
        for t in from..n {
            let x = self.obs(t);
            for i in 0..m {
                for j in 0..m {
                    out[i * m + j] += x[i] * x[j];
                }
            }
        }
        let count = (n - from.min(n)).max(1) as f64;
        out.iter_mut().for_each(|v| *v /= count);
        out
    }

    /// CSV with header `x1,...,xm`, one row per time step.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let io = |e: csv::Error| ModelError::Data(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.m).map(|j| format!("x{j}"))).map_err(io)?;
        for t in 0..self.len() {
            w.write_record(self.obs(t).iter().map(|v| format!("{v:?}"))).map_err(io)?;
        }
        w.flush().map_err(|e| ModelError::Data(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| ModelError::Data(e.to_string()))?.clone();
        let m = headers.len();
        for (j, h) in headers.iter().enumerate() {
            if h.trim() != format!("x{}", j + 1) {
                return Err(ModelError::Data(format!(
                    "expected header x{} in column {}, found '{h}'",
                    j + 1,
                    j + 1
                )));
            }
        }
        let mut data = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ModelError::Data(e.to_string()))?;
            for field in rec.iter() {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| ModelError::Data(format!("row {i}: '{field}' is not a number")))?,
                );
            }
        }
        Self::new(m, data)
    }
}

/// One step of the covariance recursion. `lagged_x[0]` is `x_{t-1}` and
/// `lagged_h[0]` is `H_{t-1}`.
pub fn h_next(params: &BekkParams, lagged_x: &[Vec<f64>], lagged_h: &[Mat]) -> Result<Mat, ModelError> {
    let m = params.dim();
    if lagged_x.len() < params.a.len() || lagged_h.len() < params.b.len() {
        return Err(ModelError::InvalidParameters(format!(
            "need {} lagged observations and {} lagged covariances",
            params.a.len(),
            params.b.len()
        )));
    }
    let mut h = params.c.clone();
    for (a, x) in params.a.iter().zip(lagged_x) {
        if x.len() != m {
            return Err(ModelError::Data(format!("lagged observation has length {}", x.len())));
        }
        let v = a.mul_vec(x)?;
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] += v[i] * v[j];
            }
        }
    }
    for (b, lag) in params.b.iter().zip(lagged_h) {
        h = h.add(&b.matmul(lag)?.matmul(&b.transpose())?)?;
    }
    Ok(h.symmetrized())
}

/// Simulates `n` observations after discarding `burn_in` draws.
///
/// The recursion starts from `x = 0`, `H = C`; innovations are standard
/// normal draws from a ChaCha generator seeded with `seed`.
pub fn simulate(params: &BekkParams, n: usize, seed: u64, burn_in: usize) -> Result<PathSample, ModelError> {
    let st = params.stationarity()?;
    if !st.stationary {
        return Err(ModelError::NonStationary { rho: st.rho });
    }
    if n == 0 {
        return Err(ModelError::Data("cannot simulate an empty path".into()));
    }
    let m = params.dim();
    let mut rng = rng_from_seed(seed);
    let mut lagged_x = vec![vec![0.0; m]; params.a.len()];
    let mut lagged_h = vec![params.c.clone(); params.b.len()];
    let mut data = Vec::with_capacity(n * m);
    let mut eps = vec![0.0; m];
    for step in 0..burn_in + n {
        let h = h_next(params, &lagged_x, &lagged_h)?;
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let x = if m == 1 {
            vec![h[(0, 0)].sqrt() * eps[0]]
        } else {
            pd_sqrt(&h)?.mul_vec(&eps)?
        };
        if step >= burn_in {
            data.extend_from_slice(&x);
        }
        if !lagged_x.is_empty() {
            lagged_x.pop();
            lagged_x.insert(0, x);
        }
        if !lagged_h.is_empty() {
            lagged_h.pop();
            lagged_h.insert(0, h);
        }
    }
    let mut path = PathSample::new(m, data)?;
    path.seed = Some(seed);
    path.burn_in = burn_in;
    Ok(path)
}

/// Value of `H_t` for `t` before the conditioning start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presample {
    /// `H_t = C`; moves with the parameters.
    #[default]
    Intercept,
    /// `H_t` = second-moment matrix of the whole sample; parameter free.
    SampleCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LikelihoodOptions {
    /// Number of leading observations conditioned on. `None` means
    /// `max(k₁, k₂)`; smaller values are raised to it.
    pub start: Option<usize>,
    pub presample: Presample,
}

impl LikelihoodOptions {
    pub fn with_start(start: usize) -> Self {
        Self {
            start: Some(start),
            presample: Presample::Intercept,
        }
    }

    pub fn effective_start(&self, order: &BekkOrder) -> usize {
        self.start.unwrap_or(0).max(order.kbar())
    }
}

/// Log-likelihood and (optionally) its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub gradient: Option<Vec<f64>>,
    /// Number of summed terms.
    pub n_eff: usize,
}

pub fn log_likelihood(params: &BekkParams, data: &PathSample) -> Result<f64, ModelError> {
    log_likelihood_with(params, data, &LikelihoodOptions::default())
}

pub fn log_likelihood_with(
    params: &BekkParams,
    data: &PathSample,
    opts: &LikelihoodOptions,
) -> Result<f64, ModelError> {
    Ok(evaluate(&params.order(), &params.pack(), data, opts, false)?.log_likelihood)
}

pub fn score(params: &BekkParams, data: &PathSample) -> Result<Vec<f64>, ModelError> {
    score_with(params, data, &LikelihoodOptions::default())
}

pub fn score_with(
    params: &BekkParams,
    data: &PathSample,
    opts: &LikelihoodOptions,
) -> Result<Vec<f64>, ModelError> {
    Ok(evaluate(&params.order(), &params.pack(), data, opts, true)?
        .gradient
        .expect("gradient requested"))
}

/// In-place `L L' = h` for a small row-major matrix; returns false when not PD.
fn cholesky_in_place(h: &[f64], l: &mut [f64], m: usize) -> bool {
    l.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..m {
        let mut d = h[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut s = h[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / d;
        }
    }
    true
}

/// Solves `L L' y = b` in place.
fn cholesky_solve(l: &[f64], b: &mut [f64], m: usize) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}

fn condition_number(h: &[f64], m: usize) -> f64 {
    match m {
        1 => 1.0,
        2 => {
            let (a, b, d) = (h[0], h[1], h[3]);
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            let (lo, hi) = (mid - rad, mid + rad);
            if lo > 0.0 {
                hi / lo
            } else {
                f64::INFINITY
            }
        }
        _ => {
            let mat = Mat::new(m, m, h.to_vec()).expect("square");
            match matrix::symmetric_eigen(&mat) {
                Ok(e) if e.values[0] > 0.0 => e.values[m - 1] / e.values[0],
                _ => f64::INFINITY,
            }
        }
    }
}

/// `out += B X B'` for row-major `m x m` matrices.
#[inline]
fn add_sandwich(b: &[f64], x: &[f64], out: &mut [f64], tmp: &mut [f64], m: usize) {
    // tmp = X B'
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += x[i * m + k] * b[j * m + k];
            }
            tmp[i * m + j] = s;
        }
    }
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += b[i * m + k] * tmp[k * m + j];
            }
            out[i * m + j] += s;
        }
    }
}

/// Log-likelihood of packed parameters and, when `want_grad`, the analytic
/// score obtained by differentiating the covariance recursion forward in
/// time.
pub fn evaluate(
    order: &BekkOrder,
    theta: &[f64],
    data: &PathSample,
    opts: &LikelihoodOptions,
    want_grad: bool,
) -> Result<Evaluation, ModelError> {
    order.validate()?;
    let layout = Layout::new(order);
    if theta.len() != layout.len {
        return Err(ModelError::InvalidParameters(format!(
            "expected {} parameters, got {}",
            layout.len,
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidParameters("non-finite parameter".into()));
    }
    let m = order.m;
    if data.dim() != m {
        return Err(ModelError::Data(format!(
            "data has dimension {}, model has {m}",
            data.dim()
        )));
    }
    let n = data.len();
    let start = opts.effective_start(order);
    if n <= start {
        return Err(ModelError::InsufficientData { needed: start, got: n });
    }
    let mm = m * m;
    let g = layout.len;
    let (k1, k2) = (order.k1, order.k2);
    let c = layout.symmetric_c(theta);
    let a: Vec<Vec<f64>> = layout.a_off.iter().map(|&o| layout.block(theta, o)).collect();
    let b: Vec<Vec<f64>> = layout.b_off.iter().map(|&o| layout.block(theta, o)).collect();

    let presample_h = match opts.presample {
        Presample::Intercept => c.clone(),
        Presample::SampleCovariance => data.second_moment(0),
    };
    // dC/dθ for the C block: (E_rc + E_cr)/2
    let mut d_presample = vec![0.0; if want_grad { g * mm } else { 0 }];
    let mut dc = vec![0.0; if want_grad { mm * mm } else { 0 }];
    if want_grad {
        for col in 0..m {
            for row in 0..m {
                let p = col * m + row;
                dc[p * mm + row * m + col] += 0.5;
                dc[p * mm + col * m + row] += 0.5;
            }
        }
        if opts.presample == Presample::Intercept {
            d_presample[..mm * mm].copy_from_slice(&dc);
        }
    }

    // Ring buffers: slot (head + l) % k1 holds lag l+1.
    let mut hist_h = vec![presample_h.clone(); k1];
    let mut hist_dh = vec![d_presample.clone(); if want_grad { k1 } else { 0 }];
    let mut head = 0usize;

    let mut h = vec![0.0; mm];
    let mut l = vec![0.0; mm];
    let mut hinv = vec![0.0; mm];
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut w = vec![0.0; mm];
    let mut tmp = vec![0.0; mm];
    let mut dh = vec![0.0; if want_grad { g * mm } else { 0 }];
    let mut grad = vec![0.0; if want_grad { g } else { 0 }];
    let mut ll = 0.0;
    let log_det_floor = DET_FLOOR.ln();

    for t in start..n {
        h.copy_from_slice(&c);
        if want_grad {
            dh.iter_mut().for_each(|x| *x = 0.0);
            dh[..mm * mm].copy_from_slice(&dc);
        }
        for lag in 0..k2 {
            let x = data.obs(t - 1 - lag);
            let al = &a[lag];
            for i in 0..m {
                v[i] = (0..m).map(|j| al[i * m + j] * x[j]).sum();
            }
            for i in 0..m {
                for j in 0..m {
                    h[i * m + j] += v[i] * v[j];
                }
            }
            if want_grad {
                let off = layout.a_off[lag];
                for col in 0..m {
                    let xc = x[col];
                    if xc == 0.0 {
                        continue;
                    }
                    for row in 0..m {
                        let d = &mut dh[(off + col * m + row) * mm..(off + col * m + row + 1) * mm];
                        for j in 0..m {
                            d[row * m + j] += xc * v[j];
                            d[j * m + row] += xc * v[j];
                        }
                    }
                }
            }
        }
        for lag in 0..k1 {
            let slot = (head + lag) % k1;
            let bl = &b[lag];
            let hl = &hist_h[slot];
            add_sandwich(bl, hl, &mut h, &mut tmp, m);
            if want_grad {
                // W = H_{t-l} B'
                for i in 0..m {
                    for j in 0..m {
                        w[i * m + j] = (0..m).map(|k| hl[i * m + k] * bl[j * m + k]).sum();
                    }
                }
                let off = layout.b_off[lag];
                for col in 0..m {
                    for row in 0..m {
                        let d = &mut dh[(off + col * m + row) * mm..(off + col * m + row + 1) * mm];
                        for j in 0..m {
                            d[row * m + j] += w[col * m + j];
                            d[j * m + row] += w[col * m + j];
                        }
                    }
                }
                let dprev = &hist_dh[slot];
                for p in 0..g {
                    let src = &dprev[p * mm..(p + 1) * mm];
                    if src.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    add_sandwich(bl, src, &mut dh[p * mm..(p + 1) * mm], &mut tmp, m);
                }
            }
        }
        // exact symmetry
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (h[i * m + j] + h[j * m + i]);
                h[i * m + j] = s;
                h[j * m + i] = s;
            }
        }
        if !cholesky_in_place(&h, &mut l, m) {
            return Err(ModelError::SingularCovariance {
                t,
                reason: "not positive definite".into(),
            });
        }
        let log_det: f64 = 2.0 * (0..m).map(|i| l[i * m + i].ln()).sum::<f64>();
        if !(log_det > log_det_floor) {
            return Err(ModelError::SingularCovariance {
                t,
                reason: format!("log det {log_det} below floor"),
            });
        }
        let cond = condition_number(&h, m);
        if !(cond <= CONDITION_CAP) {
            return Err(ModelError::SingularCovariance {
                t,
                reason: format!("condition number {cond:e}"),
            });
        }
        let x = data.obs(t);
        u.copy_from_slice(x);
        cholesky_solve(&l, &mut u, m);
        let quad: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
        ll += -0.5 * quad - 0.5 * log_det;

        if want_grad {
            for j in 0..m {
                let col = &mut v;
                col.iter_mut().for_each(|e| *e = 0.0);
                col[j] = 1.0;
                cholesky_solve(&l, col, m);
                for i in 0..m {
                    hinv[i * m + j] = col[i];
                }
            }
            for p in 0..g {
                let d = &dh[p * mm..(p + 1) * mm];
                let mut quad_d = 0.0;
                let mut trace = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        quad_d += u[i] * d[i * m + j] * u[j];
                        trace += hinv[i * m + j] * d[j * m + i];
                    }
                }
                grad[p] += 0.5 * quad_d - 0.5 * trace;
            }
        }

        if k1 > 0 {
            head = (head + k1 - 1) % k1;
            hist_h[head].copy_from_slice(&h);
            if want_grad {
                hist_dh[head].copy_from_slice(&dh);
            }
        }
    }
    if !ll.is_finite() {
        return Err(ModelError::SingularCovariance {
            t: n - 1,
            reason: "non-finite log-likelihood".into(),
        });
    }
    Ok(Evaluation {
        log_likelihood: ll,
        gradient: if want_grad { Some(grad) } else { None },
        n_eff: n - start,
    })
}
