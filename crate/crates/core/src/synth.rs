//! Seeded synthetic corpora sampled from known GMM-HMMs, with each token
//! tagged clean or degraded.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationMode, ContextMap, Corpus, Realization, Token, Utterance};
use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::gmm::Gmm;
use crate::hmm::{HmmState, ModelSet, PhoneHmm, NUM_STATES};
use crate::label::Label;

const FRAME_PERIOD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPhone {
    pub symbol: String,
    #[serde(default)]
    pub vowel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Degradation {
    /// Fraction of the way each mean moves toward the centroid of all label
    /// centers; 0 leaves it in place, 1 collapses it onto the centroid.
    pub mean_shift: f64,
    /// Factor applied to every variance.
    pub variance_scale: f64,
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation {
            mean_shift: 0.8,
            variance_scale: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub inventory: Vec<SynthPhone>,
    pub dim: usize,
    pub mixtures: usize,
    /// Standard deviation of the label centers around the origin.
    pub separation: f64,
    /// Standard deviation of state and component means around their center.
    pub spread: f64,
    /// Component variances are drawn uniformly from this range.
    pub variance_range: (f64, f64),
    pub self_loop_range: (f64, f64),
    pub degraded_fraction: f64,
    pub degradation: Degradation,
    pub utterance_count: usize,
    /// Extra utterances generated as the held-out corpus.
    pub heldout_count: usize,
    pub tokens_per_utterance: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let phone = |symbol: &str, vowel| SynthPhone {
            symbol: symbol.into(),
            vowel,
        };
        SynthSpec {
            inventory: vec![
                phone("p", false),
                phone("t", false),
                phone("k", false),
                phone("f", false),
                phone("s", false),
                phone("a", true),
                phone("i", true),
                phone("u", true),
            ],
            dim: 6,
            mixtures: 2,
            separation: 2.0,
            spread: 0.5,
            variance_range: (0.5, 1.0),
            self_loop_range: (0.5, 0.7),
            degraded_fraction: 0.3,
            degradation: Degradation::default(),
            utterance_count: 200,
            heldout_count: 100,
            tokens_per_utterance: 12,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.inventory.is_empty() {
            return fail("synthetic inventory is empty".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.inventory {
            let label: Label = p.symbol.parse()?;
            if label.context().is_some() || label.is_primed() {
                return fail(format!("inventory symbol {} must be a bare base", p.symbol));
            }
            if !seen.insert(&p.symbol) {
                return fail(format!("duplicate inventory symbol {}", p.symbol));
            }
        }
        if self.dim == 0 || self.mixtures == 0 {
            return fail("dim and mixtures must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.degraded_fraction) {
            return fail(format!("degraded_fraction {} outside [0, 1]", self.degraded_fraction));
        }
        if !(0.0..=1.0).contains(&self.degradation.mean_shift) {
            return fail(format!("mean_shift {} outside [0, 1]", self.degradation.mean_shift));
        }
        if self.degradation.variance_scale.is_nan() || self.degradation.variance_scale <= 0.0 {
            return fail("variance_scale must be positive".into());
        }
        let (vlo, vhi) = self.variance_range;
        if !(vlo > 0.0 && vlo <= vhi && vhi.is_finite()) {
            return fail(format!("variance range ({vlo}, {vhi}) must be positive and ordered"));
        }
        let (slo, shi) = self.self_loop_range;
        if !(slo > 0.0 && slo <= shi && shi < 1.0) {
            return fail(format!("self-loop range ({slo}, {shi}) must lie in (0, 1)"));
        }
        if !(self.separation >= 0.0 && self.spread >= 0.0) {
            return fail("separation and spread must be nonnegative".into());
        }
        if self.utterance_count == 0 || self.tokens_per_utterance == 0 {
            return fail("utterance_count and tokens_per_utterance must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Context map whose vowel set is this inventory's vowels; classes come
    /// from the default map where known.
    pub fn context_map(&self) -> ContextMap {
        let mut map = ContextMap::default();
        for p in self.inventory.iter().filter(|p| p.vowel) {
            map.vowels.insert(p.symbol.clone());
            map.classes.entry(p.symbol.clone()).or_insert(map.fallback);
        }
        map
    }
}

/// Clean and degraded versions of one label's generating model.
#[derive(Debug, Clone)]
struct TruthPair {
    clean: PhoneHmm,
    degraded: PhoneHmm,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pairs: BTreeMap<String, TruthPair>,
}

impl GroundTruth {
    /// Draws the generating models from stream 0 of the spec's seed.
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let centers_dist = Normal::new(0.0, spec.separation).expect("finite deviation");
        let spread = Normal::new(0.0, spec.spread).expect("finite deviation");
        let centers: Vec<Vec<f64>> = spec
            .inventory
            .iter()
            .map(|_| (0..spec.dim).map(|_| centers_dist.sample(&mut rng)).collect())
            .collect();
        let centroid: Vec<f64> = (0..spec.dim)
            .map(|d| centers.iter().map(|c| c[d]).sum::<f64>() / centers.len() as f64)
            .collect();
        let shift = spec.degradation.mean_shift;
        let vscale = spec.degradation.variance_scale;

        let mut pairs = BTreeMap::new();
        for (phone, center) in spec.inventory.iter().zip(&centers) {
            let mut clean = Vec::with_capacity(NUM_STATES);
            let mut degraded = Vec::with_capacity(NUM_STATES);
            for _ in 0..NUM_STATES {
                let state_mean: Vec<f64> = center.iter().map(|c| c + spread.sample(&mut rng)).collect();
                let raw: Vec<f64> = (0..spec.mixtures).map(|_| rng.gen_range(0.5..=1.0)).collect();
                let total: f64 = raw.iter().sum();
                let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
                let means: Vec<Vec<f64>> = (0..spec.mixtures)
                    .map(|_| state_mean.iter().map(|m| m + spread.sample(&mut rng)).collect())
                    .collect();
                let variances: Vec<Vec<f64>> = (0..spec.mixtures)
                    .map(|_| {
                        (0..spec.dim)
                            .map(|_| rng.gen_range(spec.variance_range.0..=spec.variance_range.1))
                            .collect()
                    })
                    .collect();
                let self_loop = rng.gen_range(spec.self_loop_range.0..=spec.self_loop_range.1);
                let shifted: Vec<Vec<f64>> = means
                    .iter()
                    .map(|m| m.iter().zip(&centroid).map(|(x, c)| x + shift * (c - x)).collect())
                    .collect();
                let inflated: Vec<Vec<f64>> = variances
                    .iter()
                    .map(|v| v.iter().map(|x| x * vscale).collect())
                    .collect();
                clean.push(HmmState::new(Gmm::new(weights.clone(), means, variances)?, self_loop)?);
                degraded.push(HmmState::new(Gmm::new(weights, shifted, inflated)?, self_loop)?);
            }
            let label = Label::new(phone.symbol.clone());
            pairs.insert(
                phone.symbol.clone(),
                TruthPair {
                    clean: PhoneHmm::new(label.clone(), clean)?,
                    degraded: PhoneHmm::new(label, degraded)?,
                },
            );
        }
        Ok(GroundTruth { pairs })
    }

    /// The clean generating models as a model set.
    pub fn clean_models(&self, dim: usize) -> Result<ModelSet> {
        let models = self
            .pairs
            .values()
            .map(|p| (p.clean.label.clone(), p.clean.clone()))
            .collect();
        ModelSet::new(models, dim)
    }
}

/// Emits frames by walking the left-right chain; every state is visited at
/// least once, so spans are always admissible.
fn sample_token<R: Rng>(model: &PhoneHmm, rng: &mut R, out: &mut Vec<f32>) -> Result<usize> {
    let mut frames = 0;
    for state in model.states() {
        let gmm = &state.gmm;
        let pick = WeightedIndex::new(gmm.weights()).map_err(|e| Error::Numerical(e.to_string()))?;
        loop {
            let k = pick.sample(rng);
            for (m, v) in gmm.means()[k].iter().zip(&gmm.variances()[k]) {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                out.push((m + v.sqrt() * z) as f32);
            }
            frames += 1;
            if rng.gen::<f64>() >= state.self_loop() {
                break;
            }
        }
    }
    Ok(frames)
}

fn generate_utterance(spec: &SynthSpec, truth: &GroundTruth, id: String, stream: u64) -> Result<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let consonants: Vec<&str> = spec
        .inventory
        .iter()
        .filter(|p| !p.vowel)
        .map(|p| p.symbol.as_str())
        .collect();
    let vowels: Vec<&str> = spec
        .inventory
        .iter()
        .filter(|p| p.vowel)
        .map(|p| p.symbol.as_str())
        .collect();
    let all: Vec<&str> = spec.inventory.iter().map(|p| p.symbol.as_str()).collect();

    let mut data = Vec::new();
    let mut tokens = Vec::with_capacity(spec.tokens_per_utterance);
    let mut start = 0;
    for i in 0..spec.tokens_per_utterance {
        let pool = match (consonants.is_empty() || vowels.is_empty(), i % 2) {
            (true, _) => &all,
            (false, 0) => &consonants,
            (false, _) => &vowels,
        };
        let symbol = pool[rng.gen_range(0..pool.len())];
        let degraded = rng.gen::<f64>() < spec.degraded_fraction;
        let pair = &truth.pairs[symbol];
        let model = if degraded { &pair.degraded } else { &pair.clean };
        let len = sample_token(model, &mut rng, &mut data)?;
        tokens.push(Token {
            label: Label::new(symbol),
            start,
            end: start + len,
            realization: Some(if degraded {
                Realization::Degraded
            } else {
                Realization::Clean
            }),
        });
        start += len;
    }
    Ok(Utterance {
        id,
        features: Arc::new(FeatureSequence::new(data, spec.dim, FRAME_PERIOD)?),
        tokens,
    })
}

/// Training corpus (`utterance_count` utterances) and held-out corpus
/// (`heldout_count`, `None` when zero), each utterance drawn from its own
/// RNG stream.
pub fn generate_split(spec: &SynthSpec) -> Result<(Corpus, Option<Corpus>)> {
    let truth = GroundTruth::new(spec)?;
    let map = spec.context_map();
    let build = |prefix: &str, offset: usize, count: usize| -> Result<Corpus> {
        let utts = (0..count)
            .into_par_iter()
            .map(|i| generate_utterance(spec, &truth, format!("{prefix}{i:05}"), (offset + i + 1) as u64))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(utts, AnnotationMode::Plain, map.clone())
    };
    let train = build("A", 0, spec.utterance_count)?;
    let heldout = if spec.heldout_count > 0 {
        Some(build("B", spec.utterance_count, spec.heldout_count)?)
    } else {
        None
    };
    Ok((train, heldout))
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    Ok(generate_split(&SynthSpec {
        heldout_count: 0,
        ..spec.clone()
    })?
    .0)
}

/// Writes `train/`, `heldout/` (when requested) and the clean generating
/// models under `dir`.
pub fn write_synthetic(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let (train, heldout) = generate_split(spec)?;
    train.write(dir.join("train"))?;
    if let Some(b) = heldout {
        b.write(dir.join("heldout"))?;
    }
    GroundTruth::new(spec)?
        .clean_models(spec.dim)?
        .save(dir.join("truth.json"))
}
