//! Edit-distance alignment of reference and hypothesis label sequences.
//!
//! Unit costs for substitution, omission and insertion. Among minimum-cost
//! alignments the backtrace prefers match, then substitution, then omission,
//! then insertion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Wrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equivalence {
    /// Labels must be identical.
    #[default]
    Exact,
    /// Context classes may differ; base and primed flag must agree.
    Class,
}

impl Equivalence {
    pub fn matches(self, a: &Label, b: &Label) -> bool {
        match self {
            Equivalence::Exact => a == b,
            Equivalence::Class => a.base() == b.base() && a.is_primed() == b.is_primed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub ok: usize,
    pub ins: usize,
    pub sub: usize,
    pub omi: usize,
}

impl AlignmentCounts {
    pub fn reference_len(&self) -> usize {
        self.ok + self.sub + self.omi
    }

    pub fn hypothesis_len(&self) -> usize {
        self.ok + self.sub + self.ins
    }

    /// (Ok - Ins) / (Sub + Omi + Ok); negative when insertions outnumber
    /// matches.
    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }
}

impl Add for AlignmentCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        AlignmentCounts {
            ok: self.ok + o.ok,
            ins: self.ins + o.ins,
            sub: self.sub + o.sub,
            omi: self.omi + o.omi,
        }
    }
}

impl AddAssign for AlignmentCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for AlignmentCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(AlignmentCounts::default(), Add::add)
    }
}

pub fn accuracy(c: &AlignmentCounts) -> Result<f64> {
    let denom = c.sub + c.omi + c.ok;
    if denom == 0 {
        return Err(Error::ZeroDenominator("accuracy over an empty reference"));
    }
    Ok((c.ok as f64 - c.ins as f64) / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Match,
    Substitute,
    Omit,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: OpKind,
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none", default)]
    pub ref_index: Option<usize>,
    #[serde(rename = "hyp", skip_serializing_if = "Option::is_none", default)]
    pub hyp_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    pub counts: AlignmentCounts,
    /// One verdict per reference token.
    pub verdicts: Vec<Verdict>,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.counts.sub + self.counts.omi + self.counts.ins
    }

    /// Counts restricted to reference tokens accepted by `keep_ref` and
    /// insertions accepted by `keep_hyp`.
    pub fn filtered_counts(
        &self,
        reference: &[Label],
        hypothesis: &[Label],
        keep_ref: impl Fn(&Label) -> bool,
        keep_hyp: impl Fn(&Label) -> bool,
    ) -> AlignmentCounts {
        let mut c = AlignmentCounts::default();
        for op in &self.ops {
            match (op.kind, op.ref_index, op.hyp_index) {
                (OpKind::Insert, _, Some(j)) => {
                    if keep_hyp(&hypothesis[j]) {
                        c.ins += 1;
                    }
                }
                (kind, Some(i), _) if keep_ref(&reference[i]) => match kind {
                    OpKind::Match => c.ok += 1,
                    OpKind::Substitute => c.sub += 1,
                    OpKind::Omit => c.omi += 1,
                    OpKind::Insert => unreachable!(),
                },
                _ => {}
            }
        }
        c
    }
}

pub fn align(reference: &[Label], hypothesis: &[Label], eq: Equivalence) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut cost = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = i;
    }
    for (j, c) in cost[..width].iter_mut().enumerate() {
        *c = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + usize::from(!eq.matches(&reference[i - 1], &hypothesis[j - 1]));
            let up = cost[(i - 1) * width + j] + 1;
            let left = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = eq.matches(&reference[i - 1], &hypothesis[j - 1]);
            let diag = cost[(i - 1) * width + j - 1];
            if same && here == diag {
                ops.push(AlignOp {
                    kind: OpKind::Match,
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && here == diag + 1 {
                ops.push(AlignOp {
                    kind: OpKind::Substitute,
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == cost[(i - 1) * width + j] + 1 {
            ops.push(AlignOp {
                kind: OpKind::Omit,
                ref_index: Some(i - 1),
                hyp_index: None,
            });
            i -= 1;
        } else {
            ops.push(AlignOp {
                kind: OpKind::Insert,
                ref_index: None,
                hyp_index: Some(j - 1),
            });
            j -= 1;
        }
    }
    ops.reverse();

    let mut counts = AlignmentCounts::default();
    let mut verdicts = vec![Verdict::Wrong; n];
    for op in &ops {
        match op.kind {
            OpKind::Match => {
                counts.ok += 1;
                verdicts[op.ref_index.unwrap()] = Verdict::Correct;
            }
            OpKind::Substitute => counts.sub += 1,
            OpKind::Omit => counts.omi += 1,
            OpKind::Insert => counts.ins += 1,
        }
    }
    Alignment { ops, counts, verdicts }
}

/// An utterance id with a label sequence, read from either a corpus
/// manifest (`tokens`) or a hypothesis file (`items`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSequence {
    pub id: String,
    pub labels: Vec<Label>,
}

#[derive(Deserialize)]
struct LabeledSpan {
    label: Label,
}

#[derive(Deserialize)]
struct SequenceRecord {
    id: String,
    #[serde(default)]
    items: Option<Vec<LabeledSpan>>,
    #[serde(default)]
    tokens: Option<Vec<LabeledSpan>>,
}

pub fn read_label_sequences(path: impl AsRef<Path>) -> Result<Vec<LabelSequence>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: SequenceRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let spans = rec
            .items
            .or(rec.tokens)
            .ok_or_else(|| parse_err("record has neither items nor tokens".into()))?;
        out.push(LabelSequence {
            id: rec.id,
            labels: spans.into_iter().map(|s| s.label).collect(),
        });
    }
    Ok(out)
}

/// Pools per-utterance alignments. With a subset, only reference tokens
/// whose base is in it count toward ok/sub/omi, and only inserted hypothesis
/// labels whose base is in it count toward ins.
pub fn corpus_counts(
    references: &[LabelSequence],
    hypotheses: &[LabelSequence],
    eq: Equivalence,
    subset: Option<&BTreeSet<String>>,
) -> Result<AlignmentCounts> {
    let by_id: BTreeMap<&str, &LabelSequence> = hypotheses.iter().map(|h| (h.id.as_str(), h)).collect();
    let keep = |l: &Label| subset.is_none_or(|s| s.contains(l.base()));
    let mut total = AlignmentCounts::default();
    for r in references {
        let h = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::MissingHypothesis(r.id.clone()))?;
        let a = align(&r.labels, &h.labels, eq);
        total += a.filtered_counts(&r.labels, &h.labels, keep, keep);
    }
    Ok(total)
}

#[derive(Serialize)]
struct AlignmentRecord<'a> {
    id: &'a str,
    ops: &'a [AlignOp],
    counts: AlignmentCounts,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VerdictRecord {
    pub id: String,
    pub token: usize,
    pub verdict: Verdict,
}

pub fn write_alignment_report(path: impl AsRef<Path>, alignments: &[(String, Alignment)]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, a) in alignments {
        let rec = AlignmentRecord {
            id,
            ops: &a.ops,
            counts: a.counts,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("alignment serializes"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_verdicts(path: impl AsRef<Path>, alignments: &[(String, Alignment)]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, a) in alignments {
        for (token, verdict) in a.verdicts.iter().enumerate() {
            let rec = VerdictRecord {
                id: id.clone(),
                token,
                verdict: *verdict,
            };
            writeln!(out, "{}", serde_json::to_string(&rec).expect("verdict serializes"))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
