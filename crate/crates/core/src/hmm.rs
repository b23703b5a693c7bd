//! Left-right phone HMMs with GMM emissions, segmental flat start and
//! Baum-Welch re-estimation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::frontend::FrameSlice;
use crate::gmm::{log_add, log_sum_exp, Gmm};
use crate::label::Label;

/// Emitting states per phone model.
pub const NUM_STATES: usize = 3;
/// Relative factor applied to the global feature variance.
pub const VARIANCE_FLOOR_SCALE: f64 = 1e-3;
/// Absolute lower bound on any variance floor.
pub const MIN_VARIANCE: f64 = 1e-8;
const SELF_LOOP_BOUNDS: (f64, f64) = (1e-3, 1.0 - 1e-3);
const MODEL_FORMAT: &str = "elitist-models";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmState {
    pub gmm: Gmm,
    self_loop: f64,
}

impl HmmState {
    pub fn new(gmm: Gmm, self_loop: f64) -> Result<Self> {
        if !(self_loop > 0.0 && self_loop < 1.0) {
            return Err(Error::ModelFormat(format!(
                "self-loop probability {self_loop} outside (0, 1)"
            )));
        }
        Ok(HmmState { gmm, self_loop })
    }

    pub fn self_loop(&self) -> f64 {
        self.self_loop
    }

    /// Probability of leaving the state; `self_loop + advance == 1`.
    pub fn advance(&self) -> f64 {
        1.0 - self.self_loop
    }
}

/// Strictly left-right HMM: each state loops or advances; the last state
/// exits the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneHmm {
    pub label: Label,
    states: Vec<HmmState>,
}

impl PhoneHmm {
    pub fn new(label: Label, states: Vec<HmmState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::ModelFormat(format!("{label}: no states")));
        }
        let dim = states[0].gmm.dim();
        if states.iter().any(|s| s.gmm.dim() != dim) {
            return Err(Error::ModelFormat(format!("{label}: state dimensions disagree")));
        }
        Ok(PhoneHmm { label, states })
    }

    pub fn states(&self) -> &[HmmState] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].gmm.dim()
    }

    /// Emission log-densities, `T x N` row-major.
    fn emissions(&self, seg: FrameSlice<'_>) -> Vec<f64> {
        let n = self.num_states();
        let mut out = Vec::with_capacity(seg.len() * n);
        for x in seg.frames() {
            out.extend(self.states.iter().map(|s| s.gmm.log_pdf_unchecked(x)));
        }
        out
    }

    fn forward(&self, emit: &[f64], frames: usize) -> Vec<f64> {
        let n = self.num_states();
        let mut alpha = vec![f64::NEG_INFINITY; frames * n];
        alpha[0] = emit[0];
        for t in 1..frames {
            for j in 0..n {
                let stay = alpha[(t - 1) * n + j] + self.states[j].self_loop.ln();
                let enter = if j > 0 {
                    alpha[(t - 1) * n + j - 1] + self.states[j - 1].advance().ln()
                } else {
                    f64::NEG_INFINITY
                };
                alpha[t * n + j] = log_add(stay, enter) + emit[t * n + j];
            }
        }
        alpha
    }

    fn backward(&self, emit: &[f64], frames: usize) -> Vec<f64> {
        let n = self.num_states();
        let mut beta = vec![f64::NEG_INFINITY; frames * n];
        beta[(frames - 1) * n + n - 1] = self.states[n - 1].advance().ln();
        for t in (0..frames - 1).rev() {
            for j in 0..n {
                let stay = self.states[j].self_loop.ln() + emit[(t + 1) * n + j] + beta[(t + 1) * n + j];
                let next = if j + 1 < n {
                    self.states[j].advance().ln() + emit[(t + 1) * n + j + 1] + beta[(t + 1) * n + j + 1]
                } else {
                    f64::NEG_INFINITY
                };
                beta[t * n + j] = log_add(stay, next);
            }
        }
        beta
    }

    /// Total log-likelihood of a segment over all left-right state paths,
    /// including the exit transition. `-inf` when the segment is shorter
    /// than the number of states.
    pub fn segment_log_likelihood(&self, seg: FrameSlice<'_>) -> Result<f64> {
        if seg.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: seg.dim(),
            });
        }
        let frames = seg.len();
        let n = self.num_states();
        if frames < n {
            return Ok(f64::NEG_INFINITY);
        }
        let emit = self.emissions(seg);
        let alpha = self.forward(&emit, frames);
        Ok(alpha[frames * n - 1] + self.states[n - 1].advance().ln())
    }
}

/// Per-dimension variance floor: a fraction of the global feature variance
/// over every frame of the corpus.
pub fn variance_floor(corpus: &Corpus) -> Vec<f64> {
    let dim = corpus.dim();
    let mut count = 0.0;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for utt in corpus.utterances() {
        for frame in utt.features.frames() {
            count += 1.0;
            for d in 0..dim {
                let x = f64::from(frame[d]);
                let delta = x - mean[d];
                mean[d] += delta / count;
                m2[d] += delta * (x - mean[d]);
            }
        }
    }
    m2.iter()
        .map(|s| (VARIANCE_FLOOR_SCALE * s / count).max(MIN_VARIANCE))
        .collect()
}

/// Mixture size after halving until the label has at least three frames per
/// component overall and enough frames in every state.
pub fn reduced_mixture_size(requested: usize, total_frames: usize, min_state_frames: usize) -> usize {
    let mut m = requested.max(1);
    while m > 1 && (total_frames < 3 * m || min_state_frames < m) {
        m /= 2;
    }
    m
}

fn split_bounds(len: usize, states: usize, j: usize) -> (usize, usize) {
    (j * len / states, (j + 1) * len / states)
}

fn clamp_self_loop(p: f64) -> f64 {
    p.clamp(SELF_LOOP_BOUNDS.0, SELF_LOOP_BOUNDS.1)
}

/// Uniform segmentation into states, seeded k-means per state, floored
/// variances and self-loops from the mean state occupancy.
pub fn flat_start(
    label: &Label,
    segments: &[FrameSlice<'_>],
    mixtures: usize,
    floor: &[f64],
    seed: u64,
) -> Result<PhoneHmm> {
    if segments.is_empty() {
        return Err(Error::NoTrainingData(label.to_string()));
    }
    if let Some(short) = segments.iter().find(|s| s.len() < NUM_STATES) {
        return Err(Error::InvalidCorpus(format!(
            "{label}: segment of {} frames is shorter than {NUM_STATES} states",
            short.len()
        )));
    }
    let mut pooled: Vec<Vec<&[f32]>> = vec![Vec::new(); NUM_STATES];
    for seg in segments {
        for (j, state) in pooled.iter_mut().enumerate() {
            let (a, b) = split_bounds(seg.len(), NUM_STATES, j);
            state.extend((a..b).map(|t| seg.frame(t)));
        }
    }
    let total: usize = segments.iter().map(FrameSlice::len).sum();
    let min_state = pooled.iter().map(Vec::len).min().unwrap_or(0);
    let m = reduced_mixture_size(mixtures, total, min_state);
    if m < mixtures {
        warn!("{label}: {total} frames, mixture size reduced from {mixtures} to {m}");
    }
    let mean_len = total as f64 / segments.len() as f64;
    let occupancy = mean_len / NUM_STATES as f64;
    let self_loop = clamp_self_loop((occupancy - 1.0) / occupancy);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = pooled
        .iter()
        .map(|frames| HmmState::new(Gmm::from_frames(frames, m, floor, &mut rng)?, self_loop))
        .collect::<Result<Vec<_>>>()?;
    PhoneHmm::new(label.clone(), states)
}

#[derive(Debug, Clone)]
struct StateStats {
    occupancy: f64,
    visits: f64,
    comp_occ: Vec<f64>,
    // First and second moments about the current mean.
    comp_sum: Vec<Vec<f64>>,
    comp_sq: Vec<Vec<f64>>,
}

impl StateStats {
    fn new(components: usize, dim: usize) -> Self {
        StateStats {
            occupancy: 0.0,
            visits: 0.0,
            comp_occ: vec![0.0; components],
            comp_sum: vec![vec![0.0; dim]; components],
            comp_sq: vec![vec![0.0; dim]; components],
        }
    }
}

/// One E-step over all segments; returns the total log-likelihood.
fn accumulate(hmm: &PhoneHmm, segments: &[FrameSlice<'_>], stats: &mut [StateStats]) -> Result<f64> {
    let n = hmm.num_states();
    let mut total = 0.0;
    let mut terms = Vec::new();
    for seg in segments {
        let frames = seg.len();
        let emit = hmm.emissions(*seg);
        let alpha = hmm.forward(&emit, frames);
        let beta = hmm.backward(&emit, frames);
        let ll = alpha[frames * n - 1] + hmm.states[n - 1].advance().ln();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "{}: segment log-likelihood is {ll} in forward-backward",
                hmm.label
            )));
        }
        total += ll;
        for (j, st) in stats.iter_mut().enumerate() {
            st.visits += 1.0;
            let gmm = &hmm.states[j].gmm;
            terms.resize(gmm.components(), 0.0);
            for t in 0..frames {
                let gamma = (alpha[t * n + j] + beta[t * n + j] - ll).exp();
                if gamma == 0.0 {
                    continue;
                }
                st.occupancy += gamma;
                let x = seg.frame(t);
                gmm.component_log_terms(x, &mut terms);
                let norm = log_sum_exp(&terms);
                for (m, term) in terms.iter().enumerate() {
                    let g = gamma * (term - norm).exp();
                    if g == 0.0 {
                        continue;
                    }
                    st.comp_occ[m] += g;
                    let mean = &gmm.means()[m];
                    for d in 0..x.len() {
                        let dx = f64::from(x[d]) - mean[d];
                        st.comp_sum[m][d] += g * dx;
                        st.comp_sq[m][d] += g * dx * dx;
                    }
                }
            }
        }
    }
    Ok(total)
}

fn maximize(hmm: &mut PhoneHmm, stats: &[StateStats], floor: &[f64]) {
    for (state, st) in hmm.states.iter_mut().zip(stats) {
        let gmm = &state.gmm;
        let mut weights = Vec::with_capacity(gmm.components());
        let mut means = Vec::with_capacity(gmm.components());
        let mut variances = Vec::with_capacity(gmm.components());
        for m in 0..gmm.components() {
            let occ = st.comp_occ[m];
            weights.push(occ / st.occupancy);
            if occ > 0.0 {
                let old = &gmm.means()[m];
                let shift: Vec<f64> = st.comp_sum[m].iter().map(|s| s / occ).collect();
                means.push(old.iter().zip(&shift).map(|(a, b)| a + b).collect());
                variances.push(
                    st.comp_sq[m]
                        .iter()
                        .zip(&shift)
                        .zip(floor)
                        .map(|((sq, s), f)| (sq / occ - s * s).max(*f))
                        .collect(),
                );
            } else {
                means.push(gmm.means()[m].clone());
                variances.push(gmm.variances()[m].clone());
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        state.gmm.set_parameters(weights, means, variances);
        // Every visit to a left-right state ends in exactly one advance.
        state.self_loop = clamp_self_loop((st.occupancy - st.visits) / st.occupancy);
    }
}

/// Baum-Welch re-estimation of all parameters. Returns the updated model
/// and the total training log-likelihood measured before each update.
pub fn baum_welch(
    hmm: &PhoneHmm,
    segments: &[FrameSlice<'_>],
    iterations: usize,
    floor: &[f64],
) -> Result<(PhoneHmm, Vec<f64>)> {
    let mut model = hmm.clone();
    if iterations == 0 {
        return Ok((model, Vec::new()));
    }
    if let Some(seg) = segments.iter().find(|s| s.dim() != hmm.dim()) {
        return Err(Error::DimensionMismatch {
            expected: hmm.dim(),
            found: seg.dim(),
        });
    }
    let usable: Vec<FrameSlice<'_>> = segments
        .iter()
        .copied()
        .filter(|s| s.len() >= model.num_states())
        .collect();
    if usable.is_empty() {
        return Err(Error::NoTrainingData(hmm.label.to_string()));
    }
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut stats: Vec<StateStats> = model
            .states
            .iter()
            .map(|s| StateStats::new(s.gmm.components(), s.gmm.dim()))
            .collect();
        history.push(accumulate(&model, &usable, &mut stats)?);
        maximize(&mut model, &stats, floor);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mixtures: usize,
    pub em_iterations: usize,
    /// Start each training from the previous model of the same label instead
    /// of a flat start.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mixtures: 4,
            em_iterations: 10,
            warm_start: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Tokens shorter than the state count, left out of training.
    pub skipped_segments: usize,
    /// Labels whose previous model was kept for lack of training data.
    pub retained: Vec<Label>,
    /// Final log-likelihood trajectory per trained label.
    pub log_likelihoods: BTreeMap<Label, Vec<f64>>,
}

/// FNV-1a; a stable per-label stream id independent of scheduling.
fn label_stream(label: &Label) -> u64 {
    label.to_string().bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Trains one model per label from the corpus token segments. Labels present
/// in `previous` but without training data keep their previous model.
pub fn train_model_set(
    corpus: &Corpus,
    cfg: &TrainConfig,
    floor: &[f64],
    previous: Option<&ModelSet>,
) -> Result<(ModelSet, TrainReport)> {
    let mut report = TrainReport::default();
    let mut segments: BTreeMap<Label, Vec<FrameSlice<'_>>> = BTreeMap::new();
    for utt in corpus.utterances() {
        for token in &utt.tokens {
            if token.len() < NUM_STATES {
                report.skipped_segments += 1;
                continue;
            }
            segments
                .entry(token.label.clone())
                .or_default()
                .push(utt.features.slice(token.start, token.end));
        }
    }
    if report.skipped_segments > 0 {
        warn!(
            "{} tokens shorter than {NUM_STATES} frames skipped",
            report.skipped_segments
        );
    }

    let jobs: Vec<(&Label, &Vec<FrameSlice<'_>>)> = segments.iter().collect();
    let trained = jobs
        .par_iter()
        .map(|(label, segs)| {
            let seed = cfg.seed ^ label_stream(label);
            let init = match previous.and_then(|p| p.get(label)).filter(|_| cfg.warm_start) {
                Some(model) => model.clone(),
                None => flat_start(label, segs, cfg.mixtures, floor, seed)?,
            };
            let (model, ll) = baum_welch(&init, segs, cfg.em_iterations, floor)?;
            Ok(((*label).clone(), model, ll))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models = BTreeMap::new();
    for (label, model, ll) in trained {
        report.log_likelihoods.insert(label.clone(), ll);
        models.insert(label, model);
    }
    if let Some(prev) = previous {
        for (label, model) in prev.models() {
            if !models.contains_key(label) {
                warn!("{label}: no training tokens, keeping previous model");
                report.retained.push(label.clone());
                models.insert(label.clone(), model.clone());
            }
        }
    }
    Ok((ModelSet::new(models, corpus.dim())?, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: BTreeMap<Label, PhoneHmm>,
    dim: usize,
}

impl ModelSet {
    pub fn new(models: BTreeMap<Label, PhoneHmm>, dim: usize) -> Result<Self> {
        for (label, model) in &models {
            if model.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: model.dim(),
                });
            }
            if &model.label != label {
                return Err(Error::ModelFormat(format!(
                    "model keyed {label} is labeled {}",
                    model.label
                )));
            }
        }
        Ok(ModelSet { models, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, label: &Label) -> Option<&PhoneHmm> {
        self.models.get(label)
    }

    pub fn models(&self) -> &BTreeMap<Label, PhoneHmm> {
        &self.models
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> + '_ {
        self.models.keys()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dim: self.dim,
            models: self
                .models
                .iter()
                .map(|(label, model)| (label.to_string(), ModelRecord::from(model)))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let models = file
            .models
            .into_iter()
            .map(|(key, record)| {
                let label: Label = key.parse()?;
                let model = record.into_model(label.clone())?;
                Ok((label, model))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        ModelSet::new(models, file.dim)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// IEEE-754 bit patterns as 16 hex digits, for exact round trips.
mod hex_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(x: f64) -> String {
        format!("{:016x}", x.to_bits())
    }

    pub fn decode(s: &str) -> Result<f64, String> {
        if s.len() != 16 {
            return Err(format!("bad float encoding {s:?}"));
        }
        u64::from_str_radix(s, 16)
            .map(f64::from_bits)
            .map_err(|_| format!("bad float encoding {s:?}"))
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        decode(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(xs.iter().map(|x| encode(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter().map(|s| decode(s).map_err(serde::de::Error::custom)).collect()
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(rows.iter().map(|r| r.iter().map(|x| encode(*x)).collect::<Vec<_>>()))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let rows = Vec::<Vec<String>>::deserialize(d)?;
            rows.iter()
                .map(|r| r.iter().map(|s| decode(s).map_err(serde::de::Error::custom)).collect())
                .collect()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dim: usize,
    models: BTreeMap<String, ModelRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    states: Vec<StateRecord>,
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    #[serde(with = "hex_f64")]
    self_loop: f64,
    #[serde(with = "hex_f64::vec")]
    weights: Vec<f64>,
    #[serde(with = "hex_f64::matrix")]
    means: Vec<Vec<f64>>,
    #[serde(with = "hex_f64::matrix")]
    variances: Vec<Vec<f64>>,
}

impl From<&PhoneHmm> for ModelRecord {
    fn from(model: &PhoneHmm) -> Self {
        ModelRecord {
            states: model
                .states
                .iter()
                .map(|s| StateRecord {
                    self_loop: s.self_loop,
                    weights: s.gmm.weights().to_vec(),
                    means: s.gmm.means().to_vec(),
                    variances: s.gmm.variances().to_vec(),
                })
                .collect(),
        }
    }
}

impl ModelRecord {
    fn into_model(self, label: Label) -> Result<PhoneHmm> {
        let states = self
            .states
            .into_iter()
            .map(|s| HmmState::new(Gmm::new(s.weights, s.means, s.variances)?, s.self_loop))
            .collect::<Result<Vec<_>>>()?;
        PhoneHmm::new(label, states)
    }
}
