//! Elitist GMM-HMM training: iterative primed relabeling of badly detected
//! tokens, with the supporting front end, recognizer, alignment scoring,
//! evaluation and synthetic corpora.

pub mod align;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod elitist;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod gmm;
pub mod hmm;
pub mod label;
pub mod synth;

pub use align::{accuracy, align, AlignmentCounts, Equivalence, Verdict};
pub use corpus::{load_corpus, AnnotationMode, ContextMap, Corpus, Realization, Token, Utterance};
pub use decoder::{decode_corpus, viterbi_decode, Hypothesis, LoopGraph};
pub use elitist::{run_loop, ElitistConfig, IterationTrace};
pub use error::{Error, Result};
pub use eval::{evaluate, two_proportion_test, EvalReport};
pub use frontend::{extract_features, FeatureConfig, FeatureSequence};
pub use hmm::{ModelSet, PhoneHmm, TrainConfig};
pub use label::Label;
pub use synth::{generate_corpus, generate_split, SynthSpec};
