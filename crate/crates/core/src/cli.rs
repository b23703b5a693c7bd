//! Command-line front end: argument parsing, config-file merging and the
//! subcommand drivers.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::align::{corpus_counts, read_label_sequences, Equivalence};
use crate::corpus::{load_corpus, AnnotationMode, ContextMap, Corpus};
use crate::decoder::write_hypotheses;
use crate::elitist::{default_subset, read_trace_csv, run_loop, ElitistConfig, IterationTrace};
use crate::error::{Error, Result};
use crate::eval::{evaluate, two_proportion_test, DEFAULT_DISPLAY_THRESHOLD};
use crate::frontend::{extract_features, FeatureConfig};
use crate::hmm::ModelSet;
use crate::synth::{write_synthetic, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "elitist", version, about = "Elitist GMM-HMM training with primed relabeling")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to the config value, then all cores).
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/held-out corpus pair.
    Synth(SynthArgs),
    /// Compute MFCC features from WAV files.
    Features(FeatureArgs),
    /// Run the iterative training loop on corpus A.
    Elitist(ElitistArgs),
    /// Evaluate a model snapshot on held-out corpus B.
    Eval(EvalArgs),
    /// Score hypotheses against references.
    Score(ScoreArgs),
    /// Convert trace CSVs into gnuplot-ready columns.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML); the `[synth]` table of --config otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// WAV files to process.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory; one `<stem>.feat` per input.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Contextual,
    /// Run both and compare them per iteration.
    Both,
}

#[derive(Debug, Args)]
pub struct ElitistArgs {
    /// Corpus A manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub mixtures: Option<usize>,
    #[arg(long)]
    pub em_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub insertion_penalty: Option<f64>,
    /// Comma-separated bases scored as the subset.
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<String>>,
    /// Retrain from the previous iteration's models.
    #[arg(long)]
    pub warm_start: bool,
    /// Run every iteration even when nothing is primed.
    #[arg(long)]
    pub no_early_stop: bool,
    /// Exact label matching instead of the base/primed class rule.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub models: PathBuf,
    /// Corpus B manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Cells below this percentage are blank in the rendered table.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<String>>,
    #[arg(long, allow_hyphen_values = true)]
    pub insertion_penalty: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Reference manifest or label-sequence file.
    #[arg(long)]
    pub refs: PathBuf,
    /// Hypothesis file.
    #[arg(long)]
    pub hyps: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<String>>,
    /// Treat labels with equal base and primed flag as matching.
    #[arg(long)]
    pub class_equivalence: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One or more trace CSVs; each becomes a gnuplot data block.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Output file; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Structured config file. Every table is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub jobs: Option<usize>,
    pub mode: Option<Mode>,
    pub elitist: ElitistConfig,
    pub features: FeatureConfig,
    pub synth: Option<SynthSpec>,
    pub context_map: Option<ContextMap>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub threshold: f64,
    pub subset: BTreeSet<String>,
    pub insertion_penalty: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: DEFAULT_DISPLAY_THRESHOLD,
            subset: default_subset(),
            insertion_penalty: 0.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn context_map(&self) -> Result<ContextMap> {
        let map = self.context_map.clone().unwrap_or_default();
        map.validate()?;
        Ok(map)
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    cli.config.as_deref().map_or(Ok(RunConfig::default()), RunConfig::load)
}

pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, cfg),
        Command::Features(a) => cmd_features(a, cfg),
        Command::Elitist(a) => cmd_elitist(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Score(a) => cmd_score(a).map(|line| println!("{line}")),
        Command::Report(a) => cmd_report(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn subset_of(list: &Option<Vec<String>>, fallback: &BTreeSet<String>) -> BTreeSet<String> {
    match list {
        Some(xs) => xs
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => fallback.clone(),
    }
}

pub fn cmd_synth(args: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => cfg.synth.clone().unwrap_or_default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    info!(
        "synth: seed {}, {} + {} utterances",
        spec.seed, spec.utterance_count, spec.heldout_count
    );
    create_dir(&args.out)?;
    write_synthetic(&spec, &args.out)?;
    let echoed = toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&args.out.join("spec.toml"), echoed)
}

fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let bad = |e: hound::Error| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(bad)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(bad)?
        }
    };
    let channels = usize::from(spec.channels.max(1));
    let mono = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

pub fn cmd_features(args: &FeatureArgs, cfg: &RunConfig) -> Result<()> {
    cfg.features.validate()?;
    create_dir(&args.out)?;
    for input in &args.inputs {
        let (samples, rate) = read_wav(input)?;
        let feats = extract_features(&samples, rate, &cfg.features)?;
        let stem = input
            .file_stem()
            .ok_or_else(|| Error::Config(format!("{} has no file name", input.display())))?;
        let out = args.out.join(stem).with_extension("feat");
        feats.save(&out)?;
        info!("{} -> {} ({} frames)", input.display(), out.display(), feats.len());
    }
    Ok(())
}

fn elitist_config(args: &ElitistArgs, cfg: &RunConfig) -> Result<ElitistConfig> {
    let mut ec = cfg.elitist.clone();
    if let Some(n) = args.iterations {
        ec.max_iterations = n;
    }
    if let Some(m) = args.mixtures {
        ec.train.mixtures = m;
    }
    if let Some(n) = args.em_iterations {
        ec.train.em_iterations = n;
    }
    if let Some(s) = args.seed {
        ec.train.seed = s;
    }
    if let Some(p) = args.insertion_penalty {
        ec.insertion_penalty = p;
    }
    ec.subset = subset_of(&args.subset, &ec.subset);
    ec.train.warm_start |= args.warm_start;
    if args.no_early_stop {
        ec.early_stop = false;
    }
    if args.exact {
        ec.equivalence = Equivalence::Exact;
    }
    ec.validate()?;
    Ok(ec)
}

fn write_trace(trace: &IterationTrace, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    trace.write_csv(dir.join("trace.csv"))?;
    for r in &trace.records {
        r.models.save(dir.join(format!("models_iter{}.json", r.index)))?;
    }
    trace
        .final_models
        .save(dir.join(format!("models_iter{}.json", trace.records.len())))
}

/// Per-iteration z-test of subset proportions correct, plain against
/// contextual.
fn comparison_csv(plain: &IterationTrace, contextual: &IterationTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "ok_plain",
        "n_plain",
        "ok_contextual",
        "n_contextual",
        "z",
        "p_value",
    ])
    .expect("in-memory csv");
    for (p, c) in plain.records.iter().zip(&contextual.records) {
        let (ok1, n1) = (p.counts_subset.ok, p.counts_subset.reference_len());
        let (ok2, n2) = (c.counts_subset.ok, c.counts_subset.reference_len());
        let (z, pv) = match two_proportion_test(ok2 as u64, n2 as u64, ok1 as u64, n1 as u64) {
            Ok(t) => (t.z, t.p_value),
            Err(_) => (f64::NAN, f64::NAN),
        };
        w.write_record([
            p.index.to_string(),
            ok1.to_string(),
            n1.to_string(),
            ok2.to_string(),
            n2.to_string(),
            z.to_string(),
            pv.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

fn contextual(corpus: &Corpus) -> Result<Corpus> {
    match corpus.mode() {
        AnnotationMode::Contextual => Ok(corpus.clone()),
        AnnotationMode::Plain => {
            let ctx = corpus.contextualize()?;
            info!(
                "contextualized plain corpus: {} labels become {}",
                corpus.effective_label_count(),
                ctx.effective_label_count()
            );
            Ok(ctx)
        }
    }
}

pub fn cmd_elitist(args: &ElitistArgs, cfg: &RunConfig) -> Result<()> {
    let ec = elitist_config(args, cfg)?;
    let mode = args.mode.or(cfg.mode).unwrap_or(Mode::Plain);
    let corpus = load_corpus(&args.corpus, cfg.context_map()?)?;
    info!(
        "elitist: seed {}, mode {mode:?}, {} utterances, {} tokens",
        ec.train.seed,
        corpus.utterances().len(),
        corpus.token_count()
    );
    create_dir(&args.out)?;
    let effective = RunConfig {
        mode: Some(mode),
        elitist: ec.clone(),
        ..cfg.clone()
    };
    write_file(
        &args.out.join("config.toml"),
        toml::to_string(&effective).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    match mode {
        Mode::Plain => {
            if corpus.mode() == AnnotationMode::Contextual {
                return Err(Error::Config("plain mode on a contextual corpus".into()));
            }
            write_trace(&run_loop(&corpus, &ec)?, &args.out)
        }
        Mode::Contextual => write_trace(&run_loop(&contextual(&corpus)?, &ec)?, &args.out),
        Mode::Both => {
            if corpus.mode() == AnnotationMode::Contextual {
                return Err(Error::Config("mode both needs a plain corpus".into()));
            }
            let plain = run_loop(&corpus, &ec)?;
            let ctx = run_loop(&contextual(&corpus)?, &ec)?;
            write_trace(&plain, &args.out.join("plain"))?;
            write_trace(&ctx, &args.out.join("contextual"))?;
            write_file(&args.out.join("comparison.csv"), comparison_csv(&plain, &ctx))
        }
    }
}

pub fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let threshold = args.threshold.unwrap_or(cfg.eval.threshold);
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Config(format!("threshold {threshold} must be nonnegative")));
    }
    let subset = subset_of(&args.subset, &cfg.eval.subset);
    let penalty = args.insertion_penalty.unwrap_or(cfg.eval.insertion_penalty);
    let models = ModelSet::load(&args.models)?;
    let corpus = load_corpus(&args.corpus, cfg.context_map()?)?;
    let (report, hyps) = evaluate(&models, &corpus, &subset, penalty)?;
    create_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out.join("report.json"), json)?;
    write_file(
        &args.out.join("matrix_wellrealized.csv"),
        report.matrix_wellrealized.to_csv(),
    )?;
    write_file(&args.out.join("matrix_notsowell.csv"), report.matrix_notsowell.to_csv())?;
    write_file(&args.out.join("report.txt"), report.render(threshold))?;
    write_hypotheses(args.out.join("hypotheses.jsonl"), &hyps)?;
    info!(
        "global correct {:.2}% = {:.2}% + {:.2}%",
        report.global_correct, report.correct_as_wellrealized, report.correct_as_notsowell
    );
    Ok(())
}

/// Returns the printed summary line.
pub fn cmd_score(args: &ScoreArgs) -> Result<String> {
    let refs = read_label_sequences(&args.refs)?;
    let hyps = read_label_sequences(&args.hyps)?;
    let eq = if args.class_equivalence {
        Equivalence::Class
    } else {
        Equivalence::Exact
    };
    let subset = args.subset.as_ref().map(|_| subset_of(&args.subset, &BTreeSet::new()));
    let c = corpus_counts(&refs, &hyps, eq, subset.as_ref())?;
    let acc = c.accuracy()?;
    Ok(format!(
        "Ok {} Ins {} Sub {} Omi {} Accuracy {acc}",
        c.ok, c.ins, c.sub, c.omi
    ))
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut out = String::new();
    for (i, path) in args.traces.iter().enumerate() {
        let rows = read_trace_csv(path)?;
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {}\n", path.display()));
        out.push_str("# iteration accuracy_all(%) accuracy_subset(%) retained_all(%) retained_subset(%)\n");
        for r in rows {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                r.iteration,
                100.0 * r.accuracy_all,
                100.0 * r.accuracy_subset,
                100.0 * r.retained_all,
                100.0 * r.retained_subset
            ));
        }
    }
    match &args.out {
        Some(path) => write_file(path, out),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}
