//! Held-out evaluation: trigger-rate matrices for well-realized (unprimed)
//! and not-so-well-realized (primed) models, global rates, false alarms and
//! a two-proportion z-test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::align::{align, Equivalence, OpKind};
use crate::corpus::Corpus;
use crate::decoder::{decode_corpus, Hypothesis, LoopGraph};
use crate::error::{Error, Result};
use crate::hmm::ModelSet;
use crate::label::Label;

pub const DEFAULT_DISPLAY_THRESHOLD: f64 = 0.01;

/// Percentage of each true phone's tokens aligned to each detected label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerMatrix {
    /// True phone bases.
    pub rows: Vec<String>,
    /// Detected labels, context collapsed.
    pub cols: Vec<Label>,
    pub counts: Vec<Vec<usize>>,
    /// Reference tokens per row.
    pub row_totals: Vec<usize>,
    pub cells: Vec<Vec<f64>>,
}

impl TriggerMatrix {
    fn diagonal(&self, row: usize) -> f64 {
        self.cols
            .iter()
            .zip(&self.cells[row])
            .filter(|(c, _)| c.base() == self.rows[row])
            .map(|(_, v)| v)
            .sum()
    }

    fn off_diagonal(&self, row: usize) -> f64 {
        self.cols
            .iter()
            .zip(&self.cells[row])
            .filter(|(c, _)| c.base() != self.rows[row])
            .map(|(_, v)| v)
            .sum()
    }

    fn off_diagonal_count(&self, row: usize) -> usize {
        self.cols
            .iter()
            .zip(&self.counts[row])
            .filter(|(c, _)| c.base() != self.rows[row])
            .map(|(_, v)| v)
            .sum()
    }

    fn diagonal_count(&self, row: usize) -> usize {
        self.cols
            .iter()
            .zip(&self.counts[row])
            .filter(|(c, _)| c.base() == self.rows[row])
            .map(|(_, v)| v)
            .sum()
    }

    /// Aligned text table; cells below `threshold` percent are left blank.
    pub fn render(&self, title: &str, threshold: f64) -> String {
        let width = 8;
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:>6}", "");
        for c in &self.cols {
            let _ = write!(out, "{:>width$}", c.to_string());
        }
        let _ = writeln!(out);
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{row:>6}");
            for v in &self.cells[r] {
                if *v > 0.0 && *v >= threshold {
                    let _ = write!(out, "{v:>width$.2}");
                } else {
                    let _ = write!(out, "{:>width$}", "");
                }
            }
            let _ = writeln!(out);
        }
        out
    }

    /// Wide CSV: one row per true phone, one column per detected label.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true".to_string(), "tokens".to_string()];
        header.extend(self.cols.iter().map(Label::to_string));
        w.write_record(&header).expect("in-memory csv");
        for (r, row) in self.rows.iter().enumerate() {
            let mut rec = vec![row.clone(), self.row_totals[r].to_string()];
            rec.extend(self.cells[r].iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// Mean over rows of the detections of a different base.
pub fn false_alarm_average(m: &TriggerMatrix) -> Result<f64> {
    if m.rows.is_empty() {
        return Err(Error::ZeroDenominator("false-alarm average of an empty matrix"));
    }
    Ok((0..m.rows.len()).map(|r| m.off_diagonal(r)).sum::<f64>() / m.rows.len() as f64)
}

/// Rates pooled over tokens instead of averaged over rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenWeightedRates {
    pub global_correct: f64,
    pub correct_as_wellrealized: f64,
    pub correct_as_notsowell: f64,
    pub false_alarm_wellrealized: f64,
    pub false_alarm_notsowell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix_wellrealized: TriggerMatrix,
    pub matrix_notsowell: TriggerMatrix,
    /// Per-row percentage of tokens left undetected (omitted).
    pub missed: Vec<f64>,
    pub global_correct: f64,
    pub correct_as_wellrealized: f64,
    pub correct_as_notsowell: f64,
    pub false_alarm_wellrealized_avg: f64,
    pub false_alarm_notsowell_avg: f64,
    pub token_weighted: TokenWeightedRates,
}

impl EvalReport {
    pub fn render(&self, threshold: f64) -> String {
        let mut out = self
            .matrix_wellrealized
            .render("Trigger rate (%) of the well-realized models", threshold);
        out.push('\n');
        out.push_str(
            &self
                .matrix_notsowell
                .render("Trigger rate (%) of the not-so-well-realized models", threshold),
        );
        let _ = writeln!(
            out,
            "\nglobal correct {:.2}% = well-realized {:.2}% + not-so-well {:.2}%",
            self.global_correct, self.correct_as_wellrealized, self.correct_as_notsowell
        );
        let _ = writeln!(
            out,
            "false alarms: well-realized {:.2}%, not-so-well {:.2}% (row mean)",
            self.false_alarm_wellrealized_avg, self.false_alarm_notsowell_avg
        );
        let t = &self.token_weighted;
        let _ = writeln!(
            out,
            "token-weighted: correct {:.2}% = {:.2}% + {:.2}%, false alarms {:.2}% / {:.2}%",
            t.global_correct,
            t.correct_as_wellrealized,
            t.correct_as_notsowell,
            t.false_alarm_wellrealized,
            t.false_alarm_notsowell
        );
        out
    }
}

/// Builds the report from reference annotation and hypotheses. Alignment is
/// on bases; the detected label's primed flag decides which matrix a
/// detection lands in.
pub fn report_from_hypotheses(
    corpus: &Corpus,
    hypotheses: &[Hypothesis],
    detectable: &BTreeSet<Label>,
    subset: &BTreeSet<String>,
) -> Result<EvalReport> {
    if let Some(t) = corpus.tokens().find(|t| t.label.is_primed()) {
        return Err(Error::InvalidCorpus(format!(
            "held-out corpus contains primed label {}",
            t.label
        )));
    }
    let by_id: BTreeMap<&str, &Hypothesis> = hypotheses.iter().map(|h| (h.id.as_str(), h)).collect();
    let rows: Vec<String> = corpus
        .inventory()
        .iter()
        .filter(|b| subset.contains(*b))
        .cloned()
        .collect();
    let row_index: BTreeMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();

    let mut cols_well: BTreeSet<Label> = detectable
        .iter()
        .filter(|l| !l.is_primed())
        .map(Label::without_context)
        .collect();
    let mut cols_not: BTreeSet<Label> = detectable
        .iter()
        .filter(|l| l.is_primed())
        .map(Label::without_context)
        .collect();
    // Detections outside the supplied label set still get a column.
    for h in hypotheses {
        for item in &h.items {
            let l = item.label.without_context();
            if l.is_primed() {
                cols_not.insert(l);
            } else {
                cols_well.insert(l);
            }
        }
    }
    let cols_well: Vec<Label> = cols_well.into_iter().collect();
    let cols_not: Vec<Label> = cols_not.into_iter().collect();
    let col_well: BTreeMap<&Label, usize> = cols_well.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let col_not: BTreeMap<&Label, usize> = cols_not.iter().enumerate().map(|(i, l)| (l, i)).collect();

    let mut counts_well = vec![vec![0usize; cols_well.len()]; rows.len()];
    let mut counts_not = vec![vec![0usize; cols_not.len()]; rows.len()];
    let mut missed = vec![0usize; rows.len()];
    let mut totals = vec![0usize; rows.len()];

    for utt in corpus.utterances() {
        let hyp = by_id
            .get(utt.id.as_str())
            .ok_or_else(|| Error::MissingHypothesis(utt.id.clone()))?;
        let reference: Vec<Label> = utt.tokens.iter().map(|t| t.label.base_label()).collect();
        let detected: Vec<Label> = hyp.items.iter().map(|i| i.label.without_context()).collect();
        let bases: Vec<Label> = detected.iter().map(Label::base_label).collect();
        let a = align(&reference, &bases, Equivalence::Exact);
        for op in &a.ops {
            let Some(i) = op.ref_index else { continue };
            let Some(&r) = row_index.get(reference[i].base()) else {
                continue;
            };
            totals[r] += 1;
            match (op.kind, op.hyp_index) {
                (OpKind::Match | OpKind::Substitute, Some(j)) => {
                    let d = &detected[j];
                    if d.is_primed() {
                        counts_not[r][col_not[d]] += 1;
                    } else {
                        counts_well[r][col_well[d]] += 1;
                    }
                }
                _ => missed[r] += 1,
            }
        }
    }

    let pct = |c: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let to_matrix = |cols: Vec<Label>, counts: Vec<Vec<usize>>| {
        let cells = counts
            .iter()
            .zip(&totals)
            .map(|(row, &n)| row.iter().map(|&c| pct(c, n)).collect())
            .collect();
        TriggerMatrix {
            rows: rows.clone(),
            cols,
            counts,
            row_totals: totals.clone(),
            cells,
        }
    };
    let well = to_matrix(cols_well, counts_well);
    let not = to_matrix(cols_not, counts_not);

    let row_mean = |f: &dyn Fn(usize) -> f64| {
        if rows.is_empty() {
            0.0
        } else {
            (0..rows.len()).map(f).sum::<f64>() / rows.len() as f64
        }
    };
    let correct_as_wellrealized = row_mean(&|r| well.diagonal(r));
    let correct_as_notsowell = row_mean(&|r| not.diagonal(r));
    let global_correct = row_mean(&|r| well.diagonal(r) + not.diagonal(r));

    let all_tokens: usize = totals.iter().sum();
    let pooled = |f: &dyn Fn(usize) -> usize| pct((0..rows.len()).map(f).sum(), all_tokens);
    let token_weighted = TokenWeightedRates {
        global_correct: pooled(&|r| well.diagonal_count(r) + not.diagonal_count(r)),
        correct_as_wellrealized: pooled(&|r| well.diagonal_count(r)),
        correct_as_notsowell: pooled(&|r| not.diagonal_count(r)),
        false_alarm_wellrealized: pooled(&|r| well.off_diagonal_count(r)),
        false_alarm_notsowell: pooled(&|r| not.off_diagonal_count(r)),
    };

    Ok(EvalReport {
        false_alarm_wellrealized_avg: false_alarm_average(&well).unwrap_or(0.0),
        false_alarm_notsowell_avg: false_alarm_average(&not).unwrap_or(0.0),
        missed: missed.iter().zip(&totals).map(|(&m, &n)| pct(m, n)).collect(),
        matrix_wellrealized: well,
        matrix_notsowell: not,
        global_correct,
        correct_as_wellrealized,
        correct_as_notsowell,
        token_weighted,
    })
}

/// Decodes the held-out corpus with every model (primed and unprimed) and
/// tabulates the trigger matrices.
pub fn evaluate(
    models: &ModelSet,
    corpus: &Corpus,
    subset: &BTreeSet<String>,
    insertion_penalty: f64,
) -> Result<(EvalReport, Vec<Hypothesis>)> {
    if let Some(t) = corpus.tokens().find(|t| t.label.is_primed()) {
        return Err(Error::InvalidCorpus(format!(
            "held-out corpus contains primed label {}",
            t.label
        )));
    }
    if models.dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: models.dim(),
            found: corpus.dim(),
        });
    }
    let graph = LoopGraph::new(models, insertion_penalty)?;
    let hyps = decode_corpus(&graph, corpus)?;
    let detectable: BTreeSet<Label> = models.labels().cloned().collect();
    let report = report_from_hypotheses(corpus, &hyps, &detectable, subset)?;
    Ok((report, hyps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z-test with a two-sided normal p-value.
pub fn two_proportion_test(ok1: u64, n1: u64, ok2: u64, n2: u64) -> Result<ProportionTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::ZeroDenominator("two-proportion test with an empty group"));
    }
    if ok1 > n1 || ok2 > n2 {
        return Err(Error::Config("successes exceed trials".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (ok1 + ok2) as f64 / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::Numerical(format!(
            "pooled proportion {pooled} has zero variance"
        )));
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (ok1 as f64 / n1f - ok2 as f64 / n2f) / se;
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(ProportionTest { z, p_value })
}
