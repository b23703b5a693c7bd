//! The iterative learning stage: decode the training corpus, align against
//! its annotation, prime the wrongly detected tokens and retrain, keeping
//! per-iteration metrics over the systematically well-detected tokens.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::align::{align, AlignmentCounts, Equivalence};
use crate::corpus::Corpus;
use crate::decoder::{decode_corpus, LoopGraph};
use crate::error::{Error, Result};
use crate::hmm::{train_model_set, variance_floor, ModelSet, TrainConfig};
use crate::label::Label;

/// Unvoiced stops and fricatives.
pub fn default_subset() -> BTreeSet<String> {
    ["p", "t", "k", "f", "s", "ʃ"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElitistConfig {
    pub max_iterations: usize,
    pub train: TrainConfig,
    /// Equivalence used when scoring accuracy.
    pub equivalence: Equivalence,
    /// Apply `equivalence` to relabeling verdicts too; exact matching
    /// otherwise.
    pub relabel_uses_class: bool,
    pub subset: BTreeSet<String>,
    pub insertion_penalty: f64,
    /// Stop once an iteration primes no token.
    pub early_stop: bool,
}

impl Default for ElitistConfig {
    fn default() -> Self {
        ElitistConfig {
            max_iterations: 5,
            train: TrainConfig::default(),
            equivalence: Equivalence::Class,
            relabel_uses_class: true,
            subset: default_subset(),
            insertion_penalty: 0.0,
            early_stop: true,
        }
    }
}

impl ElitistConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.train.mixtures == 0 {
            return Err(Error::Config("mixture size must be at least 1".into()));
        }
        if self.insertion_penalty.is_nan() || self.insertion_penalty > 0.0 {
            return Err(Error::Config("insertion penalty must be <= 0".into()));
        }
        Ok(())
    }

    /// Parses a TOML table; missing keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ElitistConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn relabel_equivalence(&self) -> Equivalence {
        if self.relabel_uses_class {
            self.equivalence
        } else {
            Equivalence::Exact
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub index: usize,
    /// Accuracy over unprimed reference tokens; NaN when there are none.
    pub accuracy_all: f64,
    pub accuracy_subset: f64,
    pub retained_all: f64,
    pub retained_subset: f64,
    pub counts_all: AlignmentCounts,
    pub counts_subset: AlignmentCounts,
    /// Tokens primed by this iteration.
    pub relabeled: usize,
    /// Models used for this iteration's decoding.
    pub models: Arc<ModelSet>,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub final_models: Arc<ModelSet>,
    pub final_corpus: Corpus,
}

/// Fraction of tokens (optionally of the given bases) that are unprimed.
pub fn retained_fraction(corpus: &Corpus, subset: Option<&BTreeSet<String>>) -> Result<f64> {
    let (mut kept, mut total) = (0usize, 0usize);
    for token in corpus.tokens() {
        if subset.is_none_or(|s| s.contains(token.label.base())) {
            total += 1;
            kept += usize::from(!token.label.is_primed());
        }
    }
    if total == 0 {
        return Err(Error::ZeroDenominator("retained fraction over no tokens"));
    }
    Ok(kept as f64 / total as f64)
}

fn accuracy_or_nan(c: &AlignmentCounts) -> f64 {
    c.accuracy().unwrap_or(f64::NAN)
}

/// Decode, align, relabel and retrain once. Metrics describe the decode with
/// `models` on the annotation as it stood before this iteration's
/// relabeling.
pub fn run_iteration(
    index: usize,
    corpus: &Corpus,
    models: Arc<ModelSet>,
    cfg: &ElitistConfig,
    floor: &[f64],
) -> Result<(Corpus, ModelSet, IterationRecord)> {
    if models.dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: models.dim(),
            found: corpus.dim(),
        });
    }
    let graph = LoopGraph::new(&models, cfg.insertion_penalty)?;
    let hyps = decode_corpus(&graph, corpus)?;

    let unprimed = |l: &Label| !l.is_primed();
    let in_subset = |l: &Label| !l.is_primed() && cfg.subset.contains(l.base());
    let relabel_eq = cfg.relabel_equivalence();
    let mut counts_all = AlignmentCounts::default();
    let mut counts_subset = AlignmentCounts::default();
    let mut verdicts = Vec::with_capacity(corpus.utterances().len());
    for (utt, hyp) in corpus.utterances().iter().zip(&hyps) {
        let reference = utt.labels();
        let hypothesis = hyp.labels();
        let scored = align(&reference, &hypothesis, cfg.equivalence);
        counts_all += scored.filtered_counts(&reference, &hypothesis, unprimed, unprimed);
        counts_subset += scored.filtered_counts(&reference, &hypothesis, in_subset, in_subset);
        let judged = if relabel_eq == cfg.equivalence {
            scored
        } else {
            align(&reference, &hypothesis, relabel_eq)
        };
        verdicts.push(
            reference
                .iter()
                .zip(&judged.verdicts)
                .map(|(l, v)| (!l.is_primed()).then_some(*v))
                .collect::<Vec<_>>(),
        );
    }

    let retained_all = retained_fraction(corpus, None)?;
    let retained_subset = retained_fraction(corpus, Some(&cfg.subset)).unwrap_or(f64::NAN);
    let (next_corpus, relabeled) = corpus.relabel_primed(&verdicts)?;
    let (next_models, _) = train_model_set(&next_corpus, &cfg.train, floor, Some(&models))?;

    let record = IterationRecord {
        index,
        accuracy_all: accuracy_or_nan(&counts_all),
        accuracy_subset: accuracy_or_nan(&counts_subset),
        retained_all,
        retained_subset,
        counts_all,
        counts_subset,
        relabeled,
        models,
    };
    info!(
        "iteration {index}: accuracy {:.4} (subset {:.4}), retained {:.4} (subset {:.4}), {relabeled} tokens primed",
        record.accuracy_all, record.accuracy_subset, record.retained_all, record.retained_subset
    );
    Ok((next_corpus, next_models, record))
}

/// Initial training on the original annotation followed by up to
/// `max_iterations` decode/relabel/retrain rounds.
pub fn run_loop(corpus: &Corpus, cfg: &ElitistConfig) -> Result<IterationTrace> {
    cfg.validate()?;
    let floor = variance_floor(corpus);
    let (initial, report) = train_model_set(corpus, &cfg.train, &floor, None)?;
    info!(
        "initial training: {} models, {} short tokens skipped",
        initial.len(),
        report.skipped_segments
    );
    let mut models = Arc::new(initial);
    let mut current = corpus.clone();
    let mut records = Vec::with_capacity(cfg.max_iterations);
    for index in 0..cfg.max_iterations {
        let (next_corpus, next_models, record) = run_iteration(index, &current, models, cfg, &floor)?;
        let done = cfg.early_stop && record.relabeled == 0;
        records.push(record);
        current = next_corpus;
        models = Arc::new(next_models);
        if done {
            info!("no tokens primed at iteration {index}; stopping");
            break;
        }
    }
    Ok(IterationTrace {
        records,
        final_models: models,
        final_corpus: current,
    })
}

impl IterationTrace {
    /// CSV with one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "iteration",
            "accuracy_all",
            "accuracy_subset",
            "retained_all",
            "retained_subset",
        ])
        .expect("in-memory csv");
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                r.accuracy_all.to_string(),
                r.accuracy_subset.to_string(),
                r.retained_all.to_string(),
                r.retained_subset.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub accuracy_all: f64,
    pub accuracy_subset: f64,
    pub retained_all: f64,
    pub retained_subset: f64,
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            message,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != 5 {
            return Err(parse_err(format!("expected 5 columns, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| parse_err(e.to_string()));
        rows.push(TraceRow {
            iteration: rec[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
            accuracy_all: num(1)?,
            accuracy_subset: num(2)?,
            retained_all: num(3)?,
            retained_subset: num(4)?,
        });
    }
    Ok(rows)
}
