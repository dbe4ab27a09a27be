//! Multiple Markov chains of order `k` on a finite alphabet.
//!
//! Contexts of length `k` are encoded as base-`s` integers with the oldest
//! symbol most significant, so integer order equals lexicographic order of
//! the context. The conditional likelihood conditions on the first `k`
//! symbols and has a closed-form maximizer (empirical transition
//! frequencies), which makes this family an exact oracle for the selection
//! machinery.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nested::{CandidateFit, FitStatus, NestedModelFamily, OrderIndex};
use crate::seed::rng_from_seed;

/// Largest supported alphabet; the count table is dense.
pub const MAX_ALPHABET: usize = 8;

/// A Markov chain of order `order` on `{0, .., alphabet-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub alphabet: usize,
    pub order: usize,
    /// `transitions[ctx][a] = P(a | ctx)`, one row per context.
    pub transitions: Vec<Vec<f64>>,
}

fn check_alphabet(alphabet: usize) -> Result<(), ModelError> {
    if !(2..=MAX_ALPHABET).contains(&alphabet) {
        return Err(ModelError::InvalidParameters(format!(
            "alphabet size must lie in 2..={MAX_ALPHABET}, got {alphabet}"
        )));
    }
    Ok(())
}

fn context_count(alphabet: usize, order: usize) -> Result<usize, ModelError> {
    u32::try_from(order)
        .ok()
        .and_then(|o| alphabet.checked_pow(o))
        .filter(|c| *c <= 1 << 24)
        .ok_or_else(|| ModelError::InvalidOrder(format!("order {order} too large for alphabet {alphabet}")))
}

/// `γ(k) = s^k (s - 1)`.
pub fn markov_gamma(alphabet: usize, order: usize) -> usize {
    alphabet.pow(order as u32) * (alphabet - 1)
}

impl MarkovSpec {
    pub fn new(alphabet: usize, order: usize, transitions: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let spec = Self {
            alphabet,
            order,
            transitions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Order-0 chain with the given marginal.
    pub fn iid(probs: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(probs.len(), 0, vec![probs])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_alphabet(self.alphabet)?;
        let rows = context_count(self.alphabet, self.order)?;
        if self.transitions.len() != rows {
            return Err(ModelError::InvalidParameters(format!(
                "expected {rows} transition rows, got {}",
                self.transitions.len()
            )));
        }
        for (ctx, row) in self.transitions.iter().enumerate() {
            if row.len() != self.alphabet {
                return Err(ModelError::InvalidParameters(format!(
                    "row {ctx} has {} entries, expected {}",
                    row.len(),
                    self.alphabet
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(ModelError::InvalidParameters(format!(
                    "row {ctx} has a negative or non-finite probability"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::InvalidParameters(format!(
                    "row {ctx} sums to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> usize {
        markov_gamma(self.alphabet, self.order)
    }

    /// Free parameters: the first `s-1` probabilities of every row.
    pub fn theta(&self) -> Vec<f64> {
        self.transitions
            .iter()
            .flat_map(|row| row[..self.alphabet - 1].iter().copied())
            .collect()
    }

    pub fn from_theta(alphabet: usize, order: usize, theta: &[f64]) -> Result<Self, ModelError> {
        check_alphabet(alphabet)?;
        let rows = context_count(alphabet, order)?;
        let free = alphabet - 1;
        if theta.len() != rows * free {
            return Err(ModelError::InvalidParameters(format!(
                "expected {} free probabilities, got {}",
                rows * free,
                theta.len()
            )));
        }
        let transitions = theta
            .chunks(free)
            .map(|c| {
                let mut row = c.to_vec();
                let last = 1.0 - c.iter().sum::<f64>();
                row.push(if last.abs() < 1e-12 { last.max(0.0) } else { last });
                row
            })
            .collect();
        Self::new(alphabet, order, transitions)
    }
}

fn check_symbols(data: &[u8], alphabet: usize) -> Result<(), ModelError> {
    match data.iter().position(|&x| x as usize >= alphabet) {
        Some(t) => Err(ModelError::Data(format!(
            "symbol {} at position {t} outside alphabet of size {alphabet}",
            data[t]
        ))),
        None => Ok(()),
    }
}

fn sample_symbol<R: Rng>(rng: &mut R, row: &[f64]) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return a as u8;
        }
    }
    // rounding left u above the cumulative sum: take the last positive entry
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1) as u8
}

/// Simulates `n` symbols. The first `min(order, n)` symbols are the initial
/// context, drawn uniformly.
pub fn markov_simulate(spec: &MarkovSpec, n: usize, seed: u64) -> Result<Vec<u8>, ModelError> {
    spec.validate()?;
    let s = spec.alphabet;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..spec.order.min(n) {
        out.push(rng.gen_range(0..s) as u8);
    }
    let modulus = context_count(s, spec.order)?;
    let mut ctx = out.iter().fold(0usize, |c, &x| c * s + x as usize);
    while out.len() < n {
        let x = sample_symbol(&mut rng, &spec.transitions[ctx]);
        out.push(x);
        if spec.order > 0 {
            ctx = (ctx * s + x as usize) % modulus;
        }
    }
    Ok(out)
}

/// Transition counts `N(ctx·a)` over positions `order..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub alphabet: usize,
    pub order: usize,
    /// Row-major `[ctx * alphabet + a]`.
    pub counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn tally(data: &[u8], alphabet: usize, order: usize) -> Result<Self, ModelError> {
        check_alphabet(alphabet)?;
        check_symbols(data, alphabet)?;
        let rows = context_count(alphabet, order)?;
        let mut counts = vec![0u64; rows * alphabet];
        if data.len() > order {
            let mut ctx = data[..order].iter().fold(0usize, |c, &x| c * alphabet + x as usize);
            for &x in &data[order..] {
                counts[ctx * alphabet + x as usize] += 1;
                if order > 0 {
                    ctx = (ctx * alphabet + x as usize) % rows;
                }
            }
        }
        Ok(Self {
            alphabet,
            order,
            counts,
        })
    }

    pub fn row(&self, ctx: usize) -> &[u64] {
        &self.counts[ctx * self.alphabet..(ctx + 1) * self.alphabet]
    }

    pub fn contexts(&self) -> usize {
        self.counts.len() / self.alphabet
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Closed-form conditional MLE of an order-`k` chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovFit {
    pub spec: MarkovSpec,
    pub log_likelihood: f64,
    pub counts: TransitionCounts,
}

/// `p̂(a|ctx) = N(ctx·a)/N(ctx·)`; contexts never observed get the uniform
/// row, which does not affect the likelihood.
pub fn markov_fit(data: &[u8], alphabet: usize, order: usize) -> Result<MarkovFit, ModelError> {
    if data.len() <= order {
        return Err(ModelError::InsufficientData {
            needed: order,
            got: data.len(),
        });
    }
    let counts = TransitionCounts::tally(data, alphabet, order)?;
    let mut transitions = Vec::with_capacity(counts.contexts());
    let mut ll = 0.0;
    for ctx in 0..counts.contexts() {
        let row = counts.row(ctx);
        let total: u64 = row.iter().sum();
        if total == 0 {
            transitions.push(vec![1.0 / alphabet as f64; alphabet]);
            continue;
        }
        let tot = total as f64;
        for &c in row {
            if c > 0 {
                let c = c as f64;
                ll += c * (c / tot).ln();
            }
        }
        transitions.push(row.iter().map(|&c| c as f64 / tot).collect());
    }
    Ok(MarkovFit {
        spec: MarkovSpec {
            alphabet,
            order,
            transitions,
        },
        log_likelihood: ll,
        counts,
    })
}

/// Conditional log-likelihood of `spec` on `data` (0·log 0 := 0).
pub fn markov_log_likelihood(spec: &MarkovSpec, data: &[u8]) -> Result<f64, ModelError> {
    if data.len() <= spec.order {
        return Err(ModelError::InsufficientData {
            needed: spec.order,
            got: data.len(),
        });
    }
    let counts = TransitionCounts::tally(data, spec.alphabet, spec.order)?;
    let mut ll = 0.0;
    for ctx in 0..counts.contexts() {
        for (a, &c) in counts.row(ctx).iter().enumerate() {
            if c > 0 {
                ll += c as f64 * spec.transitions[ctx][a].ln();
            }
        }
    }
    Ok(ll)
}

/// The Markov-chain family with lattice `ℕ` (q = 1).
#[derive(Debug, Clone, Copy)]
pub struct MarkovFamily {
    pub alphabet: usize,
}

impl MarkovFamily {
    pub fn new(alphabet: usize) -> Result<Self, ModelError> {
        check_alphabet(alphabet)?;
        Ok(Self { alphabet })
    }

    fn order_of(k: &OrderIndex) -> Result<usize, ModelError> {
        match k.coords() {
            [o] => Ok(*o),
            _ => Err(ModelError::InvalidOrder(format!(
                "Markov orders are one-dimensional, got {k}"
            ))),
        }
    }
}

impl NestedModelFamily for MarkovFamily {
    type Data = Vec<u8>;

    fn name(&self) -> &str {
        "markov"
    }

    fn lattice_dim(&self) -> usize {
        1
    }

    fn gamma(&self, k: &OrderIndex) -> usize {
        markov_gamma(self.alphabet, k.coords()[0])
    }

    fn sample_len(&self, data: &Vec<u8>) -> usize {
        data.len()
    }

    fn min_sample_len(&self, bound: &OrderIndex) -> usize {
        bound.coords()[0] + 1
    }

    fn fit(&self, data: &Vec<u8>, k: &OrderIndex, _bound: &OrderIndex, _seed: u64) -> CandidateFit {
        let gamma = self.gamma(k);
        let fitted = Self::order_of(k).and_then(|o| markov_fit(data, self.alphabet, o));
        match fitted {
            Ok(f) => CandidateFit {
                order: k.clone(),
                gamma,
                log_likelihood: Some(f.log_likelihood),
                theta: f.spec.theta(),
                status: FitStatus::ClosedForm,
                iterations: 0,
                grad_norm: None,
                message: None,
            },
            Err(e) => CandidateFit::failed(k.clone(), gamma, e.to_string()),
        }
    }

    fn log_likelihood(
        &self,
        data: &Vec<u8>,
        k: &OrderIndex,
        theta: &[f64],
        _bound: &OrderIndex,
    ) -> Result<f64, ModelError> {
        let spec = MarkovSpec::from_theta(self.alphabet, Self::order_of(k)?, theta)?;
        markov_log_likelihood(&spec, data)
    }

    fn score(
        &self,
        data: &Vec<u8>,
        k: &OrderIndex,
        theta: &[f64],
        _bound: &OrderIndex,
    ) -> Result<Vec<f64>, ModelError> {
        let order = Self::order_of(k)?;
        let spec = MarkovSpec::from_theta(self.alphabet, order, theta)?;
        let counts = TransitionCounts::tally(data, self.alphabet, order)?;
        let s = self.alphabet;
        let mut grad = Vec::with_capacity(theta.len());
        for ctx in 0..counts.contexts() {
            let row = counts.row(ctx);
            let probs = &spec.transitions[ctx];
            let tail = row[s - 1] as f64 / probs[s - 1];
            for a in 0..s - 1 {
                grad.push(row[a] as f64 / probs[a] - tail);
            }
        }
        Ok(grad)
    }

    fn simulate(&self, k: &OrderIndex, theta: &[f64], n: usize, seed: u64) -> Result<Vec<u8>, ModelError> {
        let spec = MarkovSpec::from_theta(self.alphabet, Self::order_of(k)?, theta)?;
        markov_simulate(&spec, n, seed)
    }

    fn prefix(&self, data: &Vec<u8>, n: usize) -> Vec<u8> {
        data[..n.min(data.len())].to_vec()
    }

    fn embed(&self, from: &OrderIndex, theta: &[f64], to: &OrderIndex) -> Vec<f64> {
        let (kf, kt) = (from.coords()[0], to.coords()[0]);
        assert!(kf <= kt, "embedding needs from <= to");
        let s = self.alphabet;
        let free = s - 1;
        let small_rows = s.pow(kf as u32);
        let rows = s.pow(kt as u32);
        let mut out = Vec::with_capacity(rows * free);
        for ctx in 0..rows {
            // the row of the most recent kf symbols
            let suffix = ctx % small_rows;
            out.extend_from_slice(&theta[suffix * free..(suffix + 1) * free]);
        }
        out
    }
}

/// Writes a single-column CSV with header `symbol`.
pub fn write_symbols_csv<W: Write>(symbols: &[u8], writer: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| ModelError::Data(e.to_string());
    w.write_record(["symbol"]).map_err(io)?;
    for s in symbols {
        w.write_record([s.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| ModelError::Data(e.to_string()))
}

pub fn read_symbols_csv<R: Read>(reader: R) -> Result<Vec<u8>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::Data(e.to_string()))?;
        let field = rec
            .get(0)
            .ok_or_else(|| ModelError::Data(format!("row {i} is empty")))?;
        let v: u8 = field
            .trim()
            .parse()
            .map_err(|_| ModelError::Data(format!("row {i}: '{field}' is not a symbol")))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_sequence_fits_perfectly() {
        let data: Vec<u8> = (0..100).map(|t| (t % 2) as u8).collect();
        let f = markov_fit(&data, 2, 1).unwrap();
        assert_eq!(f.log_likelihood, 0.0);
        assert_eq!(f.spec.transitions[0], vec![0.0, 1.0]);
        assert_eq!(f.spec.transitions[1], vec![1.0, 0.0]);
    }

    #[test]
    fn order_zero_matches_count_arithmetic() {
        let data = markov_simulate(&MarkovSpec::iid(vec![0.5, 0.5]).unwrap(), 1000, 4).unwrap();
        let ones = data.iter().filter(|&&x| x == 1).count() as f64;
        let n = data.len() as f64;
        let f = ones / n;
        let expected = n * (f * f.ln() + (1.0 - f) * (1.0 - f).ln());
        let fit = markov_fit(&data, 2, 0).unwrap();
        assert!((fit.log_likelihood - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn log_likelihood_nondecreasing_in_order() {
        let spec = MarkovSpec::new(3, 1, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2], vec![0.1, 0.1, 0.8]])
            .unwrap();
        for seed in 0..10 {
            let data = markov_simulate(&spec, 400, seed).unwrap();
            let lls: Vec<f64> = (0..4).map(|k| markov_fit(&data, 3, k).unwrap().log_likelihood).collect();
            for w in lls.windows(2) {
                assert!(w[1] >= w[0], "{lls:?}");
            }
        }
    }

    #[test]
    fn fit_is_an_exact_maximizer() {
        let spec = MarkovSpec::new(2, 2, vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.6, 0.4], vec![0.05, 0.95]])
            .unwrap();
        let data = markov_simulate(&spec, 3000, 11).unwrap();
        let fit = markov_fit(&data, 2, 2).unwrap();
        let best = markov_log_likelihood(&fit.spec, &data).unwrap();
        assert!((best - fit.log_likelihood).abs() < 1e-9);
        for ctx in 0..4 {
            for delta in [1e-3, -1e-3] {
                let mut perturbed = fit.spec.clone();
                let row = &mut perturbed.transitions[ctx];
                row[0] = (row[0] + delta).clamp(0.0, 1.0);
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= sum);
                let ll = markov_log_likelihood(&perturbed, &data).unwrap();
                assert!(ll <= fit.log_likelihood + 1e-9);
            }
        }
    }

    #[test]
    fn simulation_is_reproducible_and_deterministic_chains_cycle() {
        let spec = MarkovSpec::new(3, 1, vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]])
            .unwrap();
        let a = markov_simulate(&spec, 60, 5).unwrap();
        assert_eq!(a, markov_simulate(&spec, 60, 5).unwrap());
        for t in 1..a.len() {
            assert_eq!(a[t], (a[t - 1] + 1) % 3);
        }
    }

    #[test]
    fn fair_coin_frequency() {
        let data = markov_simulate(&MarkovSpec::iid(vec![0.5, 0.5]).unwrap(), 50_000, 99).unwrap();
        let f = data.iter().filter(|&&x| x == 1).count() as f64 / 50_000.0;
        assert!((f - 0.5).abs() < 0.02);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MarkovSpec::new(2, 0, vec![vec![0.5, 0.6]]).is_err());
        assert!(MarkovSpec::new(2, 1, vec![vec![0.5, 0.5]]).is_err());
        assert!(MarkovSpec::new(1, 0, vec![vec![1.0]]).is_err());
        assert!(MarkovSpec::new(2, 0, vec![vec![-0.1, 1.1]]).is_err());
        assert!(markov_fit(&[0, 1, 2], 2, 0).is_err());
        assert!(markov_fit(&[0, 1], 2, 2).is_err());
    }

    #[test]
    fn theta_round_trip_and_gamma() {
        let spec = MarkovSpec::new(3, 1, vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2], vec![0.1, 0.1, 0.8]])
            .unwrap();
        assert_eq!(spec.theta().len(), spec.gamma());
        assert_eq!(spec.gamma(), 6);
        let back = MarkovSpec::from_theta(3, 1, &spec.theta()).unwrap();
        for (a, b) in back.transitions.iter().flatten().zip(spec.transitions.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn embedding_preserves_likelihood() {
        let fam = MarkovFamily::new(2).unwrap();
        let spec = MarkovSpec::new(2, 1, vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let data = markov_simulate(&spec, 500, 3).unwrap();
        let k1 = OrderIndex::new(vec![1]).unwrap();
        let k3 = OrderIndex::new(vec![3]).unwrap();
        let big = fam.embed(&k1, &spec.theta(), &k3);
        assert_eq!(big.len(), fam.gamma(&k3));
        // same positions when both condition on the first three symbols
        let trimmed = data[2..].to_vec();
        let l1 = fam.log_likelihood(&trimmed, &k1, &spec.theta(), &k3).unwrap();
        let l3 = fam.log_likelihood(&data, &k3, &big, &k3).unwrap();
        assert!((l1 - l3).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let data = vec![0u8, 1, 1, 0, 2];
        let mut buf = Vec::new();
        write_symbols_csv(&data, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("symbol\n"));
        assert_eq!(read_symbols_csv(&buf[..]).unwrap(), data);
    }
}
