//! Model-agnostic order selection.
//!
//! Candidate orders live on the lattice `ℕ^q` under the componentwise
//! partial order. A [`NestedModelFamily`] fits each candidate by maximum
//! likelihood; [`select_order`] scores every candidate with
//!
//! ```text
//! EDC(k) = -log L_{n,k}(θ̂_k) + c_n · γ(k)
//! ```
//!
//! and returns the minimizer. The penalty sequence `c_n` comes from a
//! [`PenaltyRule`]; BIC is the rule `c_n = (log n)/2`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, OrderError, PenaltyError, SelectionError};
use crate::seed::{derive_seed, stream};

/// A point of the order lattice `ℕ^q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderIndex(Vec<usize>);

/// Outcome of comparing two lattice points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeOrdering {
    /// Every coordinate `<=`, at least one strictly.
    Less,
    Equal,
    Greater,
    Incomparable,
}

impl OrderIndex {
    pub fn new(coords: Vec<usize>) -> Result<Self, OrderError> {
        if coords.is_empty() {
            return Err(OrderError::Empty);
        }
        Ok(Self(coords))
    }

    pub fn zero(q: usize) -> Self {
        assert!(q > 0, "lattice dimension must be positive");
        Self(vec![0; q])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn compare(&self, other: &OrderIndex) -> Result<LatticeOrdering, OrderError> {
        if self.dim() != other.dim() {
            return Err(OrderError::DimensionMismatch(self.dim(), other.dim()));
        }
        let le = self.0.iter().zip(&other.0).all(|(a, b)| a <= b);
        let ge = self.0.iter().zip(&other.0).all(|(a, b)| a >= b);
        Ok(match (le, ge) {
            (true, true) => LatticeOrdering::Equal,
            (true, false) => LatticeOrdering::Less,
            (false, true) => LatticeOrdering::Greater,
            (false, false) => LatticeOrdering::Incomparable,
        })
    }

    /// `self <= other` componentwise.
    pub fn leq(&self, other: &OrderIndex) -> Result<bool, OrderError> {
        Ok(matches!(
            self.compare(other)?,
            LatticeOrdering::Less | LatticeOrdering::Equal
        ))
    }

    /// Componentwise maximum.
    pub fn join(&self, other: &OrderIndex) -> Result<OrderIndex, OrderError> {
        if self.dim() != other.dim() {
            return Err(OrderError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(OrderIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect(),
        ))
    }

    pub fn max_coord(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl fmt::Display for OrderIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for OrderIndex {
    type Err = OrderError;

    /// Accepts `1,2`, `(1,2)` or a single integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let coords = trimmed
            .split(',')
            .map(|c| c.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| OrderError::Parse(s.to_string()))?;
        OrderIndex::new(coords)
    }
}

/// Every lattice point `k <= bound`, in lexicographic order.
pub fn candidates_up_to(bound: &OrderIndex) -> Vec<OrderIndex> {
    let mut out = vec![Vec::with_capacity(bound.dim())];
    for &limit in bound.coords() {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..=limit).map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(OrderIndex).collect()
}

/// Whether a penalty sequence meets the strong-consistency rate conditions
/// `liminf c_n / log log n = ∞` and `c_n / n → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Consistent,
    NotConsistent,
}

/// Penalty sequence `c_n`, always a member of the family
/// `c_n = α · n^β · (log n)^δ · (log log n)^ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyRule {
    /// `c_n = (log n)/2`.
    Bic,
    /// `c_n = value` for every `n`; `value = 1` is the AIC penalty.
    Constant { value: f64 },
    PowerLog {
        alpha: f64,
        beta: f64,
        delta: f64,
        epsilon: f64,
    },
}

impl PenaltyRule {
    pub const AIC: PenaltyRule = PenaltyRule::Constant { value: 1.0 };

    /// `(α, β, δ, ε)` of the power-log family.
    pub fn exponents(&self) -> (f64, f64, f64, f64) {
        match *self {
            PenaltyRule::Bic => (0.5, 0.0, 1.0, 0.0),
            PenaltyRule::Constant { value } => (value, 0.0, 0.0, 0.0),
            PenaltyRule::PowerLog {
                alpha,
                beta,
                delta,
                epsilon,
            } => (alpha, beta, delta, epsilon),
        }
    }

    pub fn validate(&self) -> Result<(), PenaltyError> {
        let (alpha, beta, delta, epsilon) = self.exponents();
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(PenaltyError::NonPositiveScale(alpha));
        }
        if ![beta, delta, epsilon].iter().all(|e| e.is_finite()) {
            return Err(PenaltyError::NonFiniteExponent);
        }
        Ok(())
    }

    /// Evaluates `c_n`. `log log n` is taken at `max(n, 3)` so the sequence
    /// stays positive at `n = 2`.
    pub fn value(&self, n: usize) -> f64 {
        let (alpha, beta, delta, epsilon) = self.exponents();
        let n = n.max(2) as f64;
        let mut c = alpha;
        if beta != 0.0 {
            c *= n.powf(beta);
        }
        if delta != 0.0 {
            c *= n.ln().powf(delta);
        }
        if epsilon != 0.0 {
            c *= n.max(3.0).ln().ln().powf(epsilon);
        }
        c
    }

    pub fn consistency(&self) -> Result<Consistency, PenaltyError> {
        let (alpha, beta, delta, epsilon) = self.exponents();
        classify_penalty(alpha, beta, delta, epsilon)
    }

    /// Short stable identifier used in reports and tables.
    pub fn id(&self) -> String {
        match *self {
            PenaltyRule::Bic => "bic".to_string(),
            PenaltyRule::Constant { value } => format!("constant:{value}"),
            PenaltyRule::PowerLog {
                alpha,
                beta,
                delta,
                epsilon,
            } => format!("powerlog:{alpha},{beta},{delta},{epsilon}"),
        }
    }
}

impl FromStr for PenaltyRule {
    type Err = PenaltyError;

    /// `bic`, `aic`, `constant:<c>` or `powerlog:<α>,<β>,<δ>,<ε>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PenaltyError::Parse(s.to_string());
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t)),
            None => (s, None),
        };
        let rule = match (head.to_ascii_lowercase().as_str(), tail) {
            ("bic", None) => PenaltyRule::Bic,
            ("aic", None) => PenaltyRule::AIC,
            ("constant" | "const", Some(v)) => PenaltyRule::Constant {
                value: v.trim().parse().map_err(|_| err())?,
            },
            ("powerlog", Some(v)) => {
                let p = v
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| err())?;
                if p.len() != 4 {
                    return Err(err());
                }
                PenaltyRule::PowerLog {
                    alpha: p[0],
                    beta: p[1],
                    delta: p[2],
                    epsilon: p[3],
                }
            }
            _ => return Err(err()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Decides the rate conditions for `c_n = α n^β (log n)^δ (log log n)^ε`
/// symbolically.
///
/// `c_n/n → 0` needs `β < 1`, or `β = 1` with a decaying log factor.
/// `c_n / log log n → ∞` needs `β > 0`, or `β = 0, δ > 0`, or
/// `β = δ = 0, ε > 1`. Sequences of exact `log log n` order are not
/// consistent.
pub fn classify_penalty(
    alpha: f64,
    beta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<Consistency, PenaltyError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(PenaltyError::NonPositiveScale(alpha));
    }
    if ![beta, delta, epsilon].iter().all(|e| e.is_finite()) {
        return Err(PenaltyError::NonFiniteExponent);
    }
    let sublinear = beta < 1.0 || (beta == 1.0 && (delta < 0.0 || (delta == 0.0 && epsilon < 0.0)));
    let beats_loglog =
        beta > 0.0 || (beta == 0.0 && (delta > 0.0 || (delta == 0.0 && epsilon > 1.0)));
    Ok(if sublinear && beats_loglog {
        Consistency::Consistent
    } else {
        Consistency::NotConsistent
    })
}

/// `-logL + c_n γ(k)`.
#[inline]
pub fn edc_score(log_likelihood: f64, penalty: f64, gamma: usize) -> f64 {
    -log_likelihood + penalty * gamma as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Exact maximizer available in closed form.
    ClosedForm,
    Converged,
    MaxIterations,
    /// Line search could not make progress before the gradient test passed.
    Stalled,
    Failed,
}

impl FitStatus {
    pub fn is_failure(self) -> bool {
        self == FitStatus::Failed
    }
}

/// One candidate's maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub order: OrderIndex,
    pub gamma: usize,
    /// Maximized log-likelihood; `None` when the fit failed.
    pub log_likelihood: Option<f64>,
    pub theta: Vec<f64>,
    pub status: FitStatus,
    pub iterations: usize,
    pub grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CandidateFit {
    pub fn failed(order: OrderIndex, gamma: usize, message: impl Into<String>) -> Self {
        Self {
            order,
            gamma,
            log_likelihood: None,
            theta: Vec::new(),
            status: FitStatus::Failed,
            iterations: 0,
            grad_norm: None,
            message: Some(message.into()),
        }
    }

    /// Usable for scoring: finite log-likelihood.
    pub fn usable_log_likelihood(&self) -> Option<f64> {
        self.log_likelihood.filter(|l| l.is_finite())
    }
}

/// A family `{M_k}` of partially nested models indexed by `ℕ^q`.
///
/// `bound` passed to the likelihood methods is the largest order of the
/// comparison at hand; families that condition on a number of initial
/// observations use it to put every candidate on a common sample.
pub trait NestedModelFamily: Sync {
    type Data: Sync;

    fn name(&self) -> &str;

    /// Lattice dimension `q`.
    fn lattice_dim(&self) -> usize;

    /// `γ(k) = dim Θ_k`.
    fn gamma(&self, k: &OrderIndex) -> usize;

    fn sample_len(&self, data: &Self::Data) -> usize;

    /// Smallest sample the family accepts when searching up to `bound`.
    fn min_sample_len(&self, bound: &OrderIndex) -> usize;

    fn fit(&self, data: &Self::Data, k: &OrderIndex, bound: &OrderIndex, seed: u64)
        -> CandidateFit;

    /// Fits every candidate. The default fits them independently and in
    /// parallel; candidate `i` gets the seed derived from `(seed, i)`.
    fn fit_candidates(
        &self,
        data: &Self::Data,
        candidates: &[OrderIndex],
        bound: &OrderIndex,
        seed: u64,
    ) -> Vec<CandidateFit> {
        candidates
            .par_iter()
            .enumerate()
            .map(|(i, k)| self.fit(data, k, bound, derive_seed(seed, &[stream::FIT, i as u64])))
            .collect()
    }

    fn log_likelihood(
        &self,
        data: &Self::Data,
        k: &OrderIndex,
        theta: &[f64],
        bound: &OrderIndex,
    ) -> Result<f64, ModelError>;

    /// Gradient of [`Self::log_likelihood`] with respect to `theta`.
    fn score(
        &self,
        data: &Self::Data,
        k: &OrderIndex,
        theta: &[f64],
        bound: &OrderIndex,
    ) -> Result<Vec<f64>, ModelError>;

    fn simulate(
        &self,
        k: &OrderIndex,
        theta: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Self::Data, ModelError>;

    /// First `n` observations of `data`.
    fn prefix(&self, data: &Self::Data, n: usize) -> Self::Data;

    /// Embeds `theta` of order `from` into `Θ_to` (`from <= to`).
    fn embed(&self, from: &OrderIndex, theta: &[f64], to: &OrderIndex) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub order: OrderIndex,
    pub gamma: usize,
    pub log_likelihood: Option<f64>,
    pub score: Option<f64>,
    pub status: FitStatus,
    pub iterations: usize,
    pub grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Result of one order selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub penalty: PenaltyRule,
    pub penalty_id: String,
    /// `c_n` at this sample size.
    pub penalty_value: f64,
    pub bound: OrderIndex,
    pub seed: u64,
    pub candidates: Vec<CandidateRecord>,
    pub chosen: OrderIndex,
    pub chosen_score: f64,
}

/// Scores already-fitted candidates and picks the EDC minimizer.
///
/// Ties are broken by smaller `γ(k)`, then lexicographically smaller `k`.
/// Failed fits stay in the report but cannot be chosen.
pub fn assemble_report(
    fits: &[CandidateFit],
    n: usize,
    rule: &PenaltyRule,
    bound: &OrderIndex,
    seed: u64,
) -> Result<SelectionReport, SelectionError> {
    rule.validate()?;
    let c_n = rule.value(n);
    let candidates: Vec<CandidateRecord> = fits
        .iter()
        .map(|f| CandidateRecord {
            order: f.order.clone(),
            gamma: f.gamma,
            log_likelihood: f.log_likelihood,
            score: f.usable_log_likelihood().map(|l| edc_score(l, c_n, f.gamma)),
            status: f.status,
            iterations: f.iterations,
            grad_norm: f.grad_norm,
            message: f.message.clone(),
        })
        .collect();
    let best = candidates
        .iter()
        .filter_map(|c| c.score.map(|s| (s, c)))
        .min_by(|(sa, a), (sb, b)| compare_candidates(*sa, a, *sb, b))
        .ok_or(SelectionError::AllFitsFailed {
            count: candidates.len(),
        })?;
    let (chosen_score, chosen) = (best.0, best.1.order.clone());
    Ok(SelectionReport {
        n,
        penalty: *rule,
        penalty_id: rule.id(),
        penalty_value: c_n,
        bound: bound.clone(),
        seed,
        candidates,
        chosen,
        chosen_score,
    })
}

fn compare_candidates(
    sa: f64,
    a: &CandidateRecord,
    sb: f64,
    b: &CandidateRecord,
) -> Ordering {
    sa.total_cmp(&sb)
        .then(a.gamma.cmp(&b.gamma))
        .then_with(|| a.order.cmp(&b.order))
}

/// EDC order estimate `r̂ = argmin_{k <= bound} EDC(k)`.
pub fn select_order<F: NestedModelFamily>(
    family: &F,
    data: &F::Data,
    bound: &OrderIndex,
    rule: &PenaltyRule,
    seed: u64,
) -> Result<SelectionReport, SelectionError> {
    rule.validate()?;
    if bound.dim() != family.lattice_dim() {
        return Err(SelectionError::DimensionMismatch {
            expected: family.lattice_dim(),
            got: bound.dim(),
        });
    }
    let n = family.sample_len(data);
    let needed = family.min_sample_len(bound);
    if n < needed {
        return Err(SelectionError::SampleTooShort { needed, got: n });
    }
    let candidates = candidates_up_to(bound);
    let fits = family.fit_candidates(data, &candidates, bound, seed);
    assemble_report(&fits, n, rule, bound, seed)
}
