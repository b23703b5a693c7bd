//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero when any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use elitist_core::align::{accuracy, align, AlignmentCounts, Equivalence, Verdict};
use elitist_core::corpus::{AnnotationMode, ContextMap, Corpus, Realization, Token, Utterance};
use elitist_core::decoder::{viterbi_decode, LoopGraph};
use elitist_core::elitist::{default_subset, retained_fraction, run_loop, ElitistConfig, IterationTrace};
use elitist_core::eval::{evaluate, two_proportion_test};
use elitist_core::frontend::FeatureSequence;
use elitist_core::gmm::Gmm;
use elitist_core::hmm::{baum_welch, flat_start, variance_floor, HmmState, ModelSet, PhoneHmm, NUM_STATES};
use elitist_core::label::Label;
use elitist_core::synth::{generate_corpus, generate_split, write_synthetic, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCORE_TOL: f64 = 1e-9;
const EM_REL_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 0.01;
const Z_TOL: f64 = 1e-9;
const MIN_ACCURACY_GAIN: f64 = 0.05;
const MIN_CLEAN_ENRICHMENT: f64 = 0.10;
const VITERBI_BUDGET: Duration = Duration::from_secs(10);
const BENCHMARK_BUDGET: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

// Independent oracles.

fn oracle_log_density(g: &Gmm, x: &[f32]) -> f64 {
    let mut total = 0.0;
    for k in 0..g.components() {
        let mut p = g.weights()[k];
        for ((xd, m), v) in x.iter().zip(&g.means()[k]).zip(&g.variances()[k]) {
            let diff = f64::from(*xd) - m;
            p *= (-diff * diff / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        total += p;
    }
    total.ln()
}

/// Every way to split `frames` into one positive duration per state.
fn durations(frames: usize, states: usize) -> Vec<Vec<usize>> {
    if states == 1 {
        return if frames >= 1 { vec![vec![frames]] } else { vec![] };
    }
    let mut out = Vec::new();
    for d in 1..frames {
        for mut rest in durations(frames - d, states - 1) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out
}

/// Log score of one explicit state path through `h` over `frames`.
fn path_score(h: &PhoneHmm, frames: &[&[f32]], dur: &[usize]) -> f64 {
    let mut t = 0;
    let mut s = 0.0;
    for (state, &d) in h.states().iter().zip(dur) {
        for _ in 0..d {
            s += oracle_log_density(&state.gmm, frames[t]);
            t += 1;
        }
        s += (d - 1) as f64 * state.self_loop().ln() + state.advance().ln();
    }
    s
}

fn oracle_path_sum(h: &PhoneHmm, frames: &[&[f32]]) -> f64 {
    let scores: Vec<f64> = durations(frames.len(), h.num_states())
        .iter()
        .map(|d| path_score(h, frames, d))
        .collect();
    if scores.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

fn oracle_best_path(h: &PhoneHmm, frames: &[&[f32]]) -> f64 {
    durations(frames.len(), h.num_states())
        .iter()
        .map(|d| path_score(h, frames, d))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best score over all segmentations and labelings of the whole sequence.
fn oracle_viterbi(models: &[PhoneHmm], frames: &[&[f32]], entry: f64) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for len in 1..=frames.len() {
        let rest = oracle_viterbi(models, &frames[len..], entry);
        if rest == f64::NEG_INFINITY {
            continue;
        }
        for m in models {
            let s = entry + oracle_best_path(m, &frames[..len]) + rest;
            best = best.max(s);
        }
    }
    best
}

fn random_model(label: &str, dim: usize, rng: &mut ChaCha8Rng) -> PhoneHmm {
    let states = (0..NUM_STATES)
        .map(|_| {
            let m = rng.gen_range(1..=2);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let gmm = Gmm::new(
                raw.iter().map(|w| w / total).collect(),
                (0..m)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect(),
                (0..m)
                    .map(|_| (0..dim).map(|_| rng.gen_range(0.3..2.0)).collect())
                    .collect(),
            )
            .unwrap();
            HmmState::new(gmm, rng.gen_range(0.1..0.9)).unwrap()
        })
        .collect();
    PhoneHmm::new(label.parse().unwrap(), states).unwrap()
}

fn random_frames(len: usize, dim: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
    let data = (0..len * dim).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
    FeatureSequence::new(data, dim, 0.01).unwrap()
}

// Criteria.

fn viterbi_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=3);
        let dim = rng.gen_range(1..=3);
        let models: Vec<PhoneHmm> = ["a", "b", "c"][..n]
            .iter()
            .map(|l| random_model(l, dim, &mut rng))
            .collect();
        let penalty = -rng.gen_range(0.0..3.0);
        let set = ModelSet::new(models.iter().map(|m| (m.label.clone(), m.clone())).collect(), dim).unwrap();
        let graph = LoopGraph::new(&set, penalty).unwrap();
        let feats = random_frames(rng.gen_range(NUM_STATES..=8), dim, &mut rng);
        let hyp = viterbi_decode(&graph, "x", &feats).map_err(|e| e.to_string())?;
        let frames: Vec<&[f32]> = feats.frames().collect();
        let expected = oracle_viterbi(&models, &frames, -(n as f64).ln() + penalty);
        // The returned segmentation must itself achieve the score.
        let mut replay = 0.0;
        for item in &hyp.items {
            let m = models.iter().find(|m| m.label == item.label).unwrap();
            replay += -(n as f64).ln() + penalty + oracle_best_path(m, &frames[item.start..item.end]);
        }
        let gap = (hyp.score - expected).abs().max((replay - expected).abs());
        worst = worst.max(gap);
        ensure!(
            gap <= SCORE_TOL,
            "decoded {} vs brute force {expected} (replay {replay})",
            hyp.score
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < VITERBI_BUDGET, "took {elapsed:?}");
    Ok(format!("200 instances, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

fn forward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let dim = rng.gen_range(1..=3);
        let h = random_model("a", dim, &mut rng);
        let feats = random_frames(rng.gen_range(1..=8), dim, &mut rng);
        let got = h.segment_log_likelihood(feats.as_slice()).map_err(|e| e.to_string())?;
        let frames: Vec<&[f32]> = feats.frames().collect();
        let expected = oracle_path_sum(&h, &frames);
        if expected == f64::NEG_INFINITY {
            ensure!(
                got == f64::NEG_INFINITY,
                "inadmissible length {} scored {got}",
                frames.len()
            );
            continue;
        }
        let gap = (got - expected).abs();
        worst = worst.max(gap);
        ensure!(gap <= SCORE_TOL, "forward {got} vs path sum {expected}");
    }
    Ok(format!("200 instances, max |diff| {worst:.1e}"))
}

fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn alignment_oracle() -> Outcome {
    let mut seqs: Vec<Vec<u8>> = vec![vec![]];
    let mut frontier = seqs.clone();
    for _ in 0..6 {
        frontier = frontier
            .iter()
            .flat_map(|s| (0..3u8).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        seqs.extend(frontier.iter().cloned());
    }
    let symbols = [Label::new("a"), Label::new("b"), Label::new("c")];
    let labels: Vec<Vec<Label>> = seqs
        .iter()
        .map(|s| s.iter().map(|&c| symbols[c as usize].clone()).collect())
        .collect();
    let mut pairs = 0usize;
    for (r, rl) in seqs.iter().zip(&labels) {
        for (h, hl) in seqs.iter().zip(&labels) {
            let a = align(rl, hl, Equivalence::Exact);
            let c = a.counts;
            ensure!(a.cost() == levenshtein(r, h), "cost mismatch for {r:?} / {h:?}");
            ensure!(
                c.ok + c.sub + c.omi == r.len(),
                "reference count identity for {r:?} / {h:?}"
            );
            ensure!(
                c.ok + c.sub + c.ins == h.len(),
                "hypothesis count identity for {r:?} / {h:?}"
            );
            let wrong = a.verdicts.iter().filter(|v| **v == Verdict::Wrong).count();
            ensure!(
                wrong == c.sub + c.omi,
                "verdicts disagree with counts for {r:?} / {h:?}"
            );
            pairs += 1;
        }
    }
    Ok(format!("{pairs} pairs up to length 6"))
}

fn em_monotonicity() -> Outcome {
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let spec = SynthSpec {
            utterance_count: 12,
            heldout_count: 0,
            seed: 1000 + seed,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
        let floor = variance_floor(&corpus);
        let mut segments: BTreeMap<Label, Vec<_>> = BTreeMap::new();
        for u in corpus.utterances() {
            for t in &u.tokens {
                segments
                    .entry(t.label.clone())
                    .or_default()
                    .push(u.features.slice(t.start, t.end));
            }
        }
        for (label, segs) in &segments {
            let init = flat_start(label, segs, 2, &floor, seed).map_err(|e| e.to_string())?;
            let (model, mut history) = baum_welch(&init, segs, 8, &floor).map_err(|e| e.to_string())?;
            let last: f64 = segs.iter().map(|s| model.segment_log_likelihood(*s).unwrap()).sum();
            history.push(last);
            for w in history.windows(2) {
                ensure!(
                    w[1] >= w[0] - EM_REL_TOL * w[0].abs(),
                    "seed {seed}, {label}: log-likelihood fell from {} to {}",
                    w[0],
                    w[1]
                );
            }
            checked += 1;
        }
    }
    Ok(format!("20 corpora, {checked} label trajectories"))
}

fn accuracy_rule() -> Outcome {
    let c = |ok, ins, sub, omi| AlignmentCounts { ok, ins, sub, omi };
    let a = accuracy(&c(90, 5, 3, 7)).map_err(|e| e.to_string())?;
    ensure!(a == 0.85, "accuracy(90,5,3,7) = {a}");
    for ok in 0..5 {
        for ins in 0..4 {
            for sub in 0..4 {
                for omi in 0..4 {
                    let counts = c(ok, ins, sub, omi);
                    let Ok(a) = accuracy(&counts) else {
                        ensure!(ok + sub + omi == 0, "{counts:?} rejected");
                        continue;
                    };
                    ensure!((a == 1.0) == (ins == 0 && sub == 0 && omi == 0), "{counts:?} gives {a}");
                }
            }
        }
    }
    let neg = accuracy(&c(1, 5, 0, 1)).map_err(|e| e.to_string())?;
    ensure!(neg == -2.0, "accuracy(1,5,0,1) = {neg}");
    Ok("0.85 exact, 1.0 iff no errors, -2.0 unclamped".into())
}

/// Checks the shrinkage invariant on one trace.
fn shrinkage(trace: &IterationTrace) -> Result<(), String> {
    let mut retained: Vec<f64> = trace.records.iter().map(|r| r.retained_all).collect();
    retained.push(retained_fraction(&trace.final_corpus, None).map_err(|e| e.to_string())?);
    for (i, r) in trace.records.iter().enumerate() {
        let (before, after) = (retained[i], retained[i + 1]);
        ensure!(
            after <= before,
            "retained rose from {before} to {after} at iteration {i}"
        );
        ensure!(
            r.relabeled == 0 || after < before,
            "{} tokens primed but retained stayed {before}",
            r.relabeled
        );
    }
    Ok(())
}

fn shrinkage_invariant(benchmark: &IterationTrace) -> Outcome {
    shrinkage(benchmark)?;
    let spec = SynthSpec {
        utterance_count: 40,
        heldout_count: 0,
        seed: 7,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
    let base = ElitistConfig {
        early_stop: false,
        ..Default::default()
    };
    let variants = [
        ("plain", corpus.clone(), base.clone()),
        (
            "contextual",
            corpus.contextualize().map_err(|e| e.to_string())?,
            base.clone(),
        ),
        (
            "exact",
            corpus.clone(),
            ElitistConfig {
                equivalence: Equivalence::Exact,
                ..base.clone()
            },
        ),
        ("warm start", corpus.clone(), {
            let mut c = base.clone();
            c.train.warm_start = true;
            c
        }),
    ];
    for (name, corpus, cfg) in variants {
        let trace = run_loop(&corpus, &cfg).map_err(|e| format!("{name}: {e}"))?;
        shrinkage(&trace).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok("benchmark + plain, contextual, exact and warm-start runs".into())
}

struct Benchmark {
    corpus: Corpus,
    heldout: Corpus,
    trace: IterationTrace,
    elapsed: Duration,
}

fn run_benchmark() -> Result<Benchmark, String> {
    let start = Instant::now();
    let spec = SynthSpec::default();
    let (corpus, heldout) = generate_split(&spec).map_err(|e| e.to_string())?;
    let trace = run_loop(&corpus, &ElitistConfig::default()).map_err(|e| e.to_string())?;
    Ok(Benchmark {
        corpus,
        heldout: heldout.ok_or("default spec has no held-out part")?,
        trace,
        elapsed: start.elapsed(),
    })
}

fn trend(b: &Benchmark) -> Outcome {
    let first = b.trace.records.first().ok_or("empty trace")?;
    let last = b.trace.records.last().unwrap();
    let gain = last.accuracy_subset - first.accuracy_subset;
    ensure!(
        gain >= MIN_ACCURACY_GAIN,
        "subset accuracy {:.4} -> {:.4}",
        first.accuracy_subset,
        last.accuracy_subset
    );
    let retained = retained_fraction(&b.trace.final_corpus, None).map_err(|e| e.to_string())?;
    ensure!(retained > 0.0 && retained < 1.0, "final retained fraction {retained}");
    ensure!(b.elapsed < BENCHMARK_BUDGET, "took {:?}", b.elapsed);
    Ok(format!(
        "subset accuracy {:.4} -> {:.4}, retained {retained:.4}, {:.1?}",
        first.accuracy_subset, last.accuracy_subset, b.elapsed
    ))
}

fn clean_share<'a>(tokens: impl Iterator<Item = &'a Token>) -> f64 {
    let (mut clean, mut n) = (0usize, 0usize);
    for t in tokens {
        n += 1;
        clean += usize::from(t.realization == Some(Realization::Clean));
    }
    clean as f64 / n as f64
}

fn enrichment(b: &Benchmark) -> Outcome {
    let corpus_wide = clean_share(b.corpus.tokens());
    let retained = clean_share(b.trace.final_corpus.tokens().filter(|t| !t.label.is_primed()));
    ensure!(
        retained - corpus_wide >= MIN_CLEAN_ENRICHMENT,
        "clean share {retained:.4} retained vs {corpus_wide:.4} overall"
    );
    Ok(format!(
        "clean share {retained:.4} retained vs {corpus_wide:.4} overall"
    ))
}

fn eval_identities(b: &Benchmark) -> Outcome {
    let (report, _) = evaluate(&b.trace.final_models, &b.heldout, &default_subset(), 0.0).map_err(|e| e.to_string())?;
    let sum = report.correct_as_wellrealized + report.correct_as_notsowell;
    ensure!(
        (report.global_correct - sum).abs() <= IDENTITY_TOL,
        "global {} vs {} + {}",
        report.global_correct,
        report.correct_as_wellrealized,
        report.correct_as_notsowell
    );
    let (well, not) = (&report.matrix_wellrealized, &report.matrix_notsowell);
    ensure!(!well.rows.is_empty(), "no subset rows in corpus B");
    for (r, row) in well.rows.iter().enumerate() {
        let mass = well.cells[r].iter().sum::<f64>() + not.cells[r].iter().sum::<f64>() + report.missed[r];
        ensure!((mass - 100.0).abs() <= IDENTITY_TOL, "row {row} sums to {mass}");
    }
    Ok(format!(
        "{:.2}% = {:.2}% + {:.2}% over {} rows",
        report.global_correct,
        report.correct_as_wellrealized,
        report.correct_as_notsowell,
        well.rows.len()
    ))
}

fn label_count() -> Outcome {
    let vowels = [
        "i", "e", "ɛ", "y", "ø", "œ", "ə", "a", "ɑ", "u", "o", "ɔ", "ɛ̃", "œ̃", "ɑ̃", "ɔ̃",
    ];
    let consonants = [
        "p", "t", "k", "f", "s", "ʃ", "b", "d", "g", "v", "z", "ʒ", "m", "n", "ɲ", "l", "ʁ", "j", "w", "ɥ",
    ];
    let map = ContextMap::default();
    // Each bearing consonant before one vowel of every class, then every
    // other symbol once.
    let class_rep: BTreeMap<u8, &str> = vowels.iter().rev().map(|v| (map.classes[*v], *v)).collect();
    let mut symbols: Vec<&str> = Vec::new();
    for b in &map.bearing {
        for v in class_rep.values() {
            symbols.push(b);
            symbols.push(v);
        }
    }
    symbols.extend(vowels.iter().chain(consonants.iter()));
    let tokens: Vec<Token> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| Token::new(Label::new(*s), i, i + 1))
        .collect();
    let feats = FeatureSequence::new(vec![0.0; symbols.len()], 1, 0.01).unwrap();
    let utt = Utterance {
        id: "u".into(),
        features: Arc::new(feats),
        tokens,
    };
    let plain = Corpus::new(vec![utt], AnnotationMode::Plain, map).map_err(|e| e.to_string())?;
    ensure!(
        plain.inventory().len() == 36,
        "inventory has {} bases",
        plain.inventory().len()
    );
    let contextual = plain.contextualize().map_err(|e| e.to_string())?;
    let distinct = contextual.label_inventory().len();
    ensure!(
        plain.effective_label_count() == 36,
        "plain count {}",
        plain.effective_label_count()
    );
    ensure!(distinct == 66, "contextualized corpus has {distinct} labels");
    ensure!(
        contextual.effective_label_count() == 66,
        "contextual count {}",
        contextual.effective_label_count()
    );
    Ok("36 bases -> 66 labels".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        utterance_count: 40,
        heldout_count: 0,
        seed: 11,
        ..Default::default()
    };
    write_synthetic(&spec, dir.path()).map_err(|e| e.to_string())?;
    let manifest = dir.path().join("train/manifest.jsonl");
    let run = |jobs: &str, out: &str| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_elitist"))
            .args([
                "--jobs",
                jobs,
                "elitist",
                "--mode",
                "contextual",
                "--seed",
                "5",
                "--corpus",
            ])
            .arg(&manifest)
            .arg("--out")
            .arg(dir.path().join(out))
            .env("RUST_LOG", "error")
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "elitist exited with {status}");
        Ok(())
    };
    run("1", "a")?;
    run("4", "b")?;
    run("4", "c")?;
    let mut compared = 0;
    for entry in std::fs::read_dir(dir.path().join("a")).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let a = std::fs::read(dir.path().join("a").join(&name)).map_err(|e| e.to_string())?;
        for other in ["b", "c"] {
            let b = std::fs::read(dir.path().join(other).join(&name)).map_err(|e| e.to_string())?;
            ensure!(a == b, "{name:?} differs between runs");
        }
        compared += 1;
    }
    ensure!(compared >= 3, "only {compared} output files");
    Ok(format!("{compared} files byte-identical across 1 and 4 workers"))
}

fn z_test_oracle() -> Outcome {
    let t = two_proportion_test(900, 1000, 850, 1000).map_err(|e| e.to_string())?;
    let (p1, p2) = (0.9f64, 0.85f64);
    let pooled: f64 = (900.0 + 850.0) / 2000.0;
    let z = (p1 - p2) / (pooled * (1.0 - pooled) * (1.0 / 1000.0 + 1.0 / 1000.0)).sqrt();
    ensure!((t.z - z).abs() <= Z_TOL, "z {} vs {z}", t.z);
    ensure!((t.z - 3.3806).abs() < 1e-4, "z {} is not about 3.3806", t.z);
    Ok(format!("z = {:.6}, p = {:.2e}", t.z, t.p_value))
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} {id:>2} {name}: {detail}");
    results.push(outcome.is_ok());
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    report(&mut results, 1, "viterbi oracle", viterbi_oracle);
    report(&mut results, 2, "forward oracle", forward_oracle);
    report(&mut results, 3, "alignment oracle", alignment_oracle);
    report(&mut results, 4, "EM monotonicity", em_monotonicity);
    report(&mut results, 5, "accuracy rule", accuracy_rule);

    let benchmark = catch_unwind(run_benchmark).unwrap_or_else(|_| Err("benchmark panicked".into()));
    let with_bench = |f: fn(&Benchmark) -> Outcome| {
        let b = &benchmark;
        move || b.as_ref().map_err(|e| format!("benchmark failed: {e}")).and_then(f)
    };
    report(
        &mut results,
        6,
        "shrinkage invariant",
        with_bench(|b| shrinkage_invariant(&b.trace)),
    );
    report(&mut results, 7, "trend reproduction", with_bench(trend));
    report(&mut results, 8, "clean enrichment", with_bench(enrichment));
    report(&mut results, 9, "evaluation identities", with_bench(eval_identities));
    report(&mut results, 10, "label count", label_count);
    report(&mut results, 11, "determinism", determinism);
    report(&mut results, 12, "z-test oracle", z_test_oracle);

    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
