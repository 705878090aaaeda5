//! Multilingual bottleneck features and cross-language transfer.
//!
//! A bottleneck network is trained on several languages at once, each with
//! its own softmax head. Its bottleneck activations become the input
//! features of a second network (or of a hybrid acoustic model). For a new
//! target language, the first stage is fine-tuned on the target, a language
//! identifier picks the closest source language, a model trained on that
//! language initialises the target model, and a final adaptation swaps in
//! target output layers.

mod adapt;
mod experiment;
mod lid;
mod net;
mod pipeline;
mod sbn;

pub use adapt::{adapt_network, AdaptMode, Adaptable};
pub use experiment::{run_transfer_trial, transfer_from_donor, transfer_trial, Family, FamilyConfig, FamilyMember, TransferConfig, TransferTrial};
pub use lid::{select_closest_language, train_lid, LidConfig, LidDecision, LidModel};
pub use net::{bn_corpus, extract_bn, HeadScorer, MultiHeadNet, MultiHeadSpec, TaggedSequence, MULTIHEAD_KIND};
pub use pipeline::{
    closest_language_pipeline, hybrid_features, sha256_hex, train_from_scratch, LanguageData, PipelineConfig,
    PipelineOutcome, Provenance, ProvenanceStep,
};
pub use sbn::{continue_multilingual, evaluate_multilingual, normalized_bn_corpus, train_multilingual, SbnPipeline};
