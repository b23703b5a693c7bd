//! Phone-loop Viterbi decoding.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{ModelSet, PhoneHmm};
use crate::label::Label;

/// Any model may follow any other with uniform probability; each phone
/// entry also pays `insertion_penalty`.
#[derive(Debug, Clone)]
pub struct LoopGraph {
    models: Vec<PhoneHmm>,
    offsets: Vec<usize>,
    entry_log_prob: f64,
    insertion_penalty: f64,
    dim: usize,
}

impl LoopGraph {
    pub fn new(models: &ModelSet, insertion_penalty: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config(
                "cannot build a phone loop from an empty model set".into(),
            ));
        }
        if insertion_penalty.is_nan() || insertion_penalty > 0.0 {
            return Err(Error::Config(format!(
                "insertion penalty {insertion_penalty} must be <= 0"
            )));
        }
        let models: Vec<PhoneHmm> = models.models().values().cloned().collect();
        let mut offsets = Vec::with_capacity(models.len() + 1);
        let mut total = 0;
        for m in &models {
            offsets.push(total);
            total += m.num_states();
        }
        offsets.push(total);
        let entry_log_prob = -(models.len() as f64).ln();
        let dim = models[0].dim();
        Ok(LoopGraph {
            models,
            offsets,
            entry_log_prob,
            insertion_penalty,
            dim,
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> + '_ {
        self.models.iter().map(|m| &m.label)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// log(1 / number of models).
    pub fn entry_log_prob(&self) -> f64 {
        self.entry_log_prob
    }

    pub fn insertion_penalty(&self) -> f64 {
        self.insertion_penalty
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisItem {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub items: Vec<HypothesisItem>,
    pub score: f64,
}

impl Hypothesis {
    pub fn labels(&self) -> Vec<Label> {
        self.items.iter().map(|i| i.label.clone()).collect()
    }
}

const FROM_SELF: u8 = 0;
const FROM_PREV: u8 = 1;
const FROM_ENTRY: u8 = 2;

/// Exact Viterbi search through the loop. Ties go to the lowest label in
/// canonical order, then to the longer current segment.
pub fn viterbi_decode(graph: &LoopGraph, id: &str, features: &FeatureSequence) -> Result<Hypothesis> {
    if features.dim() != graph.dim {
        return Err(Error::DimensionMismatch {
            expected: graph.dim,
            found: features.dim(),
        });
    }
    let frames = features.len();
    let total = *graph.offsets.last().unwrap();
    let entry_cost = graph.entry_log_prob + graph.insertion_penalty;

    let log_self: Vec<f64> = graph
        .models
        .iter()
        .flat_map(|m| m.states().iter().map(|s| s.self_loop().ln()))
        .collect();
    let log_adv: Vec<f64> = graph
        .models
        .iter()
        .flat_map(|m| m.states().iter().map(|s| s.advance().ln()))
        .collect();
    let emit_frame = |t: usize, out: &mut Vec<f64>| {
        out.clear();
        let x = features.frame(t);
        for m in &graph.models {
            out.extend(m.states().iter().map(|s| s.gmm.log_pdf_unchecked(x)));
        }
    };

    let mut emit = Vec::with_capacity(total);
    let mut prev = vec![f64::NEG_INFINITY; total];
    let mut cur = vec![f64::NEG_INFINITY; total];
    let mut back = vec![FROM_SELF; frames * total];
    let mut entered_from = vec![usize::MAX; frames];

    emit_frame(0, &mut emit);
    for &first in &graph.offsets[..graph.models.len()] {
        cur[first] = entry_cost + emit[first];
        back[first] = FROM_ENTRY;
    }

    let best_exit = |scores: &[f64]| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for m in 0..graph.models.len() {
            let last = graph.offsets[m + 1] - 1;
            let s = scores[last] + log_adv[last];
            if s > best.0 {
                best = (s, m);
            }
        }
        best
    };

    for t in 1..frames {
        std::mem::swap(&mut prev, &mut cur);
        emit_frame(t, &mut emit);
        let (exit_score, exit_model) = best_exit(&prev);
        entered_from[t] = exit_model;
        let entry = exit_score + entry_cost;
        let row = &mut back[t * total..(t + 1) * total];
        for m in 0..graph.models.len() {
            let (first, end) = (graph.offsets[m], graph.offsets[m + 1]);
            for k in first..end {
                let stay = prev[k] + log_self[k];
                let (other, tag) = if k == first {
                    (entry, FROM_ENTRY)
                } else {
                    (prev[k - 1] + log_adv[k - 1], FROM_PREV)
                };
                let (best, from) = if stay >= other { (stay, FROM_SELF) } else { (other, tag) };
                cur[k] = best + emit[k];
                row[k] = from;
            }
        }
    }

    let (score, mut model) = best_exit(&cur);
    if score == f64::NEG_INFINITY {
        return Err(Error::NoAdmissiblePath(id.to_string()));
    }

    let mut items = Vec::new();
    let mut k = graph.offsets[model + 1] - 1;
    let mut seg_end = frames;
    let mut t = frames - 1;
    loop {
        match back[t * total + k] {
            FROM_SELF => t -= 1,
            FROM_PREV => {
                k -= 1;
                t -= 1;
            }
            _ => {
                items.push(HypothesisItem {
                    label: graph.models[model].label.clone(),
                    start: t,
                    end: seg_end,
                });
                if t == 0 {
                    break;
                }
                seg_end = t;
                model = entered_from[t];
                k = graph.offsets[model + 1] - 1;
                t -= 1;
            }
        }
    }
    items.reverse();
    Ok(Hypothesis {
        id: id.to_string(),
        items,
        score,
    })
}

/// Decodes every utterance in parallel; results keep corpus order.
pub fn decode_corpus(graph: &LoopGraph, corpus: &Corpus) -> Result<Vec<Hypothesis>> {
    corpus
        .utterances()
        .par_iter()
        .map(|u| viterbi_decode(graph, &u.id, &u.features))
        .collect()
}

/// One JSON object per line.
pub fn hypotheses_to_jsonl(hyps: &[Hypothesis]) -> String {
    let mut out = String::new();
    for h in hyps {
        out.push_str(&serde_json::to_string(h).expect("hypothesis serializes"));
        out.push('\n');
    }
    out
}

pub fn write_hypotheses(path: impl AsRef<Path>, hyps: &[Hypothesis]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, hypotheses_to_jsonl(hyps)).map_err(|e| Error::io(path, e))
}

pub fn read_hypotheses(path: impl AsRef<Path>) -> Result<Vec<Hypothesis>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hyps = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        hyps.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(hyps)
}
