//! Seeded Monte Carlo replication of order selection over a grid of sample
//! sizes and penalty rules.
//!
//! Replication `i` simulates one path of length `max(n)` from seed
//! `derive_seed(master, [DATA, i])` and uses its prefixes for the smaller
//! sample sizes. Candidates are fitted once per `(i, n)` and scored under
//! every penalty. Replications run on a local thread pool; results are
//! ordered by replication index, so outputs do not depend on the worker
//! count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bekk::{BekkOrder, BekkParams};
use crate::error::ModelError;
use crate::estimator::{BekkFamily, FitOptions};
use crate::markov::{MarkovFamily, MarkovSpec};
use crate::nested::{assemble_report, candidates_up_to, NestedModelFamily, OrderIndex, PenaltyRule, SelectionReport};
use crate::seed::{derive_seed, stream};

pub const FREQUENCIES_FILE: &str = "frequencies.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Order label of the fit-failure bucket in frequency tables.
pub const FAILURE_BUCKET: &str = "fail";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("output directory {path} is not writable: {reason}")]
    Output { path: PathBuf, reason: String },
    #[error("replication {replication}: {source}")]
    Simulation {
        replication: usize,
        #[source]
        source: ModelError,
    },
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// True model of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Bekk {
        m: usize,
        k1: usize,
        k2: usize,
        theta: Vec<f64>,
    },
    Markov {
        alphabet: usize,
        order: usize,
        transitions: Vec<Vec<f64>>,
    },
}

fn default_burn_in() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Search bound `K`.
    pub bound: Vec<usize>,
    /// Penalty rules in the `bic` / `constant:c` / `powerlog:a,b,d,e` syntax.
    pub penalties: Vec<String>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// The BEKK data-generating process is taken to have bounded moments of
    /// order 16; this cannot be checked from a sample and must be
    /// acknowledged for BEKK experiments.
    #[serde(default)]
    pub assume_bounded_moments: bool,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(vec![e.to_string()]))
    }

    pub fn penalty_rules(&self) -> Result<Vec<PenaltyRule>, Vec<String>> {
        let mut rules = Vec::new();
        let mut bad = Vec::new();
        for (i, p) in self.penalties.iter().enumerate() {
            match p.parse::<PenaltyRule>().and_then(|r| r.validate().map(|_| r)) {
                Ok(r) => rules.push(r),
                Err(e) => bad.push(format!("penalties[{i}]: {e}")),
            }
        }
        if bad.is_empty() {
            Ok(rules)
        } else {
            Err(bad)
        }
    }

    /// Checks every field and lists all problems.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut bad = Vec::new();
        if self.replications == 0 {
            bad.push("replications must be at least 1".to_string());
        }
        if self.penalties.is_empty() {
            bad.push("penalties must not be empty".to_string());
        }
        if let Err(e) = self.penalty_rules() {
            bad.extend(e);
        }
        if self.sample_sizes.is_empty() {
            bad.push("sample_sizes must not be empty".to_string());
        }
        let mut sizes = self.sample_sizes.clone();
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.len() != self.sample_sizes.len() {
            bad.push("sample_sizes must not repeat".to_string());
        }
        if let Err(e) = self.fit.validate() {
            bad.push(format!("fit: {e}"));
        }
        match &self.model {
            ModelSpec::Bekk { m, k1, k2, theta } => {
                if self.bound.len() != 2 {
                    bad.push(format!("bound must have 2 entries for bekk, got {}", self.bound.len()));
                }
                if !self.assume_bounded_moments {
                    bad.push(
                        "assume_bounded_moments must be true for bekk: the moment condition cannot be checked from data"
                            .to_string(),
                    );
                }
                match BekkParams::unpack(&BekkOrder::new(*m, *k1, *k2), theta).and_then(|p| p.stationarity()) {
                    Ok(s) if !s.stationary => bad.push(format!("model.theta is not stationary (rho = {})", s.rho)),
                    Ok(_) => {}
                    Err(e) => bad.push(format!("model: {e}")),
                }
                if self.bound.len() == 2 {
                    let fam = BekkFamily::new((*m).max(1));
                    let needed = fam.min_sample_len(&OrderIndex::new(self.bound.clone()).expect("two entries"));
                    if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < needed) {
                        bad.push(format!("sample_sizes: {n} is below the {needed} observations the bound needs"));
                    }
                }
            }
            ModelSpec::Markov {
                alphabet,
                order,
                transitions,
            } => {
                if self.bound.len() != 1 {
                    bad.push(format!("bound must have 1 entry for markov, got {}", self.bound.len()));
                }
                if let Err(e) = MarkovSpec::new(*alphabet, *order, transitions.clone()) {
                    bad.push(format!("model: {e}"));
                }
                if let Some(&k) = self.bound.first() {
                    let contexts = (*alphabet as f64).powi(k as i32);
                    if contexts > (1u64 << 20) as f64 {
                        bad.push(format!("bound: {alphabet}^{k} contexts is too many"));
                    }
                    if let Some(&n) = self.sample_sizes.iter().find(|&&n| n <= k) {
                        bad.push(format!("sample_sizes: {n} does not exceed the bound {k}"));
                    }
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Config(bad))
        }
    }
}

/// Outcome of one `(replication, n, penalty)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub n: usize,
    pub penalty: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SelectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReplicationRecord {
    pub fn chosen(&self) -> Option<&OrderIndex> {
        self.report.as_ref().map(|r| &r.chosen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub penalty: String,
    pub n: usize,
    /// Order label such as `(1,1)`, or [`FAILURE_BUCKET`].
    pub order: String,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub frequencies: Vec<FrequencyRow>,
}

impl ExperimentResults {
    /// Frequency of `order` (label) for a penalty id and sample size.
    pub fn frequency(&self, penalty: &str, n: usize, order: &str) -> f64 {
        self.frequencies
            .iter()
            .find(|r| r.penalty == penalty && r.n == n && r.order == order)
            .map_or(0.0, |r| r.frequency)
    }
}

/// Run manifest: enough to reproduce the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.seed,
            config: config.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Runs the experiment on `workers` threads (all available when `None`).
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResults, ExperimentError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::Config(vec![format!("workers: {e}")]))?;
    let rules = config.penalty_rules().map_err(ExperimentError::Config)?;
    let bound = OrderIndex::new(config.bound.clone()).map_err(|e| ExperimentError::Config(vec![format!("bound: {e}")]))?;
    let records = pool.install(|| match &config.model {
        ModelSpec::Bekk { m, k1, k2, theta } => {
            let family = BekkFamily {
                m: *m,
                options: config.fit.clone(),
                burn_in: config.burn_in,
            };
            let truth = OrderIndex::new(vec![*k1, *k2]).expect("two entries");
            replicate(&family, &truth, theta, &bound, &rules, config)
        }
        ModelSpec::Markov {
            alphabet,
            order,
            transitions,
        } => {
            let family = MarkovFamily { alphabet: *alphabet };
            let spec = MarkovSpec::new(*alphabet, *order, transitions.clone()).expect("validated");
            let truth = OrderIndex::new(vec![*order]).expect("one entry");
            replicate(&family, &truth, &spec.theta(), &bound, &rules, config)
        }
    })?;
    let frequencies = frequency_table(&records, &bound, &rules, config);
    Ok(ExperimentResults {
        config: config.clone(),
        records,
        frequencies,
    })
}

fn replicate<F: NestedModelFamily>(
    family: &F,
    truth: &OrderIndex,
    theta: &[f64],
    bound: &OrderIndex,
    rules: &[PenaltyRule],
    config: &ExperimentConfig,
) -> Result<Vec<ReplicationRecord>, ExperimentError> {
    let candidates = candidates_up_to(bound);
    let n_max = *config.sample_sizes.iter().max().expect("validated");
    let per_rep: Result<Vec<Vec<ReplicationRecord>>, ExperimentError> = (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let data_seed = derive_seed(config.seed, &[stream::DATA, i as u64]);
            let path = family
                .simulate(truth, theta, n_max, data_seed)
                .map_err(|source| ExperimentError::Simulation { replication: i, source })?;
            let mut out = Vec::with_capacity(config.sample_sizes.len() * rules.len());
            for &n in &config.sample_sizes {
                let data = family.prefix(&path, n);
                let fit_seed = derive_seed(config.seed, &[stream::FIT, i as u64, n as u64]);
                let fits = family.fit_candidates(&data, &candidates, bound, fit_seed);
                for rule in rules {
                    let (report, error) = match assemble_report(&fits, n, rule, bound, fit_seed) {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    out.push(ReplicationRecord {
                        replication: i,
                        n,
                        penalty: rule.id(),
                        report,
                        error,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    Ok(per_rep?.into_iter().flatten().collect())
}

fn frequency_table(
    records: &[ReplicationRecord],
    bound: &OrderIndex,
    rules: &[PenaltyRule],
    config: &ExperimentConfig,
) -> Vec<FrequencyRow> {
    let reps = config.replications as f64;
    let mut rows = Vec::new();
    for rule in rules {
        let id = rule.id();
        for &n in &config.sample_sizes {
            let cell: Vec<&ReplicationRecord> = records.iter().filter(|r| r.penalty == id && r.n == n).collect();
            for k in candidates_up_to(bound) {
                let count = cell.iter().filter(|r| r.chosen() == Some(&k)).count();
                rows.push(FrequencyRow {
                    penalty: id.clone(),
                    n,
                    order: k.to_string(),
                    frequency: count as f64 / reps,
                });
            }
            let failed = cell.iter().filter(|r| r.report.is_none()).count();
            if failed > 0 {
                rows.push(FrequencyRow {
                    penalty: id.clone(),
                    n,
                    order: FAILURE_BUCKET.to_string(),
                    frequency: failed as f64 / reps,
                });
            }
        }
    }
    rows
}

/// Creates `dir` if needed and checks that files can be written there.
pub fn ensure_writable(dir: &Path) -> Result<(), ExperimentError> {
    let fail = |reason: String| ExperimentError::Output {
        path: dir.to_path_buf(),
        reason,
    };
    fs::create_dir_all(dir).map_err(|e| fail(e.to_string()))?;
    let probe = dir.join(".write-probe");
    File::create(&probe).map_err(|e| fail(e.to_string()))?;
    fs::remove_file(&probe).map_err(|e| fail(e.to_string()))?;
    Ok(())
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub frequencies: PathBuf,
    pub reports: PathBuf,
    pub manifest: PathBuf,
}

/// Writes the frequency table, the per-replication JSON lines and the
/// manifest into `dir`.
pub fn emit_report(results: &ExperimentResults, dir: &Path) -> Result<EmittedFiles, ExperimentError> {
    ensure_writable(dir)?;
    let files = EmittedFiles {
        frequencies: dir.join(FREQUENCIES_FILE),
        reports: dir.join(REPORTS_FILE),
        manifest: dir.join(MANIFEST_FILE),
    };

    let mut w = csv::Writer::from_path(&files.frequencies).map_err(csv_io)?;
    w.write_record(["penalty", "n", "order", "frequency"]).map_err(csv_io)?;
    for r in &results.frequencies {
        w.write_record([
            r.penalty.as_str(),
            &r.n.to_string(),
            r.order.as_str(),
            &format!("{:?}", r.frequency),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;

    let mut out = BufWriter::new(File::create(&files.reports)?);
    for rec in &results.records {
        serde_json::to_writer(&mut out, rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let mut manifest = results.config.clone();
    manifest.output_dir = None;
    let text = serde_json::to_string_pretty(&Manifest::new(&manifest)).map_err(std::io::Error::from)?;
    fs::write(&files.manifest, text + "\n")?;
    Ok(files)
}

fn csv_io(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markov_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::Markov {
                alphabet: 2,
                order: 1,
                transitions: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            },
            bound: vec![3],
            penalties: vec!["bic".into(), "constant:1".into()],
            sample_sizes: vec![100, 400, 1600],
            replications: 20,
            seed: 11,
            output_dir: None,
            assume_bounded_moments: false,
            fit: FitOptions::default(),
            burn_in: 500,
        }
    }

    #[test]
    fn config_errors_list_every_field() {
        let mut cfg = markov_config();
        cfg.replications = 0;
        cfg.penalties = vec!["bic".into(), "constant:-1".into()];
        cfg.bound = vec![1, 1];
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("replications"), "{msg}");
        assert!(msg.contains("penalties[1]"), "{msg}");
        assert!(msg.contains("bound"), "{msg}");
    }

    #[test]
    fn bekk_requires_moment_acknowledgment() {
        let cfg = ExperimentConfig {
            model: ModelSpec::Bekk {
                m: 1,
                k1: 1,
                k2: 1,
                theta: vec![0.1, 0.3, 0.6],
            },
            bound: vec![1, 1],
            sample_sizes: vec![200],
            ..markov_config()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("assume_bounded_moments"));
        let ok = ExperimentConfig {
            assume_bounded_moments: true,
            ..cfg
        };
        ok.validate().unwrap();
    }

    #[test]
    fn frequencies_sum_to_one_and_blocks_are_complete() {
        let res = run_experiment(&markov_config(), Some(1)).unwrap();
        assert_eq!(res.records.len(), 20 * 3 * 2);
        for p in ["bic", "constant:1"] {
            for n in [100, 400, 1600] {
                let rows: Vec<_> = res.frequencies.iter().filter(|r| r.penalty == p && r.n == n).collect();
                assert_eq!(rows.len(), 4);
                let total: f64 = rows.iter().map(|r| r.frequency).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outputs_do_not_depend_on_worker_count() {
        let cfg = markov_config();
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&markov_config(), None).unwrap();
        let files = emit_report(&res, dir.path()).unwrap();
        let manifest = Manifest::read(&files.manifest).unwrap();
        assert_eq!(manifest.master_seed, 11);
        let again = run_experiment(&manifest.config, None).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let files2 = emit_report(&again, dir2.path()).unwrap();
        for (x, y) in [
            (&files.frequencies, &files2.frequencies),
            (&files.reports, &files2.reports),
            (&files.manifest, &files2.manifest),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn unwritable_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, "x").unwrap();
        assert!(matches!(
            ensure_writable(&file.join("sub")),
            Err(ExperimentError::Output { .. })
        ));
    }
}
