//! Economic fluctuation narrative indices.
//!
//! Causal pairs are extracted from topic-labelled survey explanations with
//! clue expressions, linked across topics into chains by embedding
//! similarity and temporal order, aggregated into decayed monthly indices
//! per ordered topic pair, and correlated against diffusion index series.

pub mod analytics;
pub mod chain;
pub mod corpus;
pub mod embedding;
pub mod extraction;
pub mod index;
pub mod month;
pub mod pipeline;
pub mod report;
pub mod sum;
pub mod synthetic;

pub use analytics::{CorrelationMatrix, DiKind, DiSeries};
pub use chain::{CausalChain, ChainParams};
pub use corpus::{SurveyRecord, TopicPair, TopicVocabulary};
pub use embedding::{BuiltinProvider, EmbeddingProvider, ProviderConfig, Vector};
pub use extraction::{CausalPair, ClueTable};
pub use index::{DecayParams, LagUnit, MonthlyIndexSeries};
pub use month::{Month, MonthRange};
pub use pipeline::{PipelineConfig, PipelineError, Stage};
