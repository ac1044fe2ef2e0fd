//! Stage-based conversational recommender for leisure events.
//!
//! The crate is organised around the per-turn pipeline:
//!
//! * [`catalog`] holds the sparse scraped event corpus, window filtering and
//!   token-bounded event summaries.
//! * [`gateway`] is the uniform LLM interface (scripted mock or remote
//!   chat-completion endpoint) with token counting, the context budget,
//!   schema-checked output parsing and cost metering.
//! * [`retrieval`] builds Search / Recommendation candidate sets, runs the
//!   batched LLM reduction and composes the answer slate.
//! * [`inquiry`] answers questions about one specific event from a dossier.
//! * [`dialog`] is the turn-based session state machine tying it together.
//! * [`telemetry`] records per-prompt and per-turn metrics, aggregates them
//!   and tags failed sessions.
//! * [`resque`] is the survey instrument and path-model estimator.
//!
//! Numeric code (vector similarity, least squares, medians, money) is generic
//! over the scalar type; the aliases below fix the concrete types used by the
//! service.

pub mod catalog;
pub mod clock;
pub mod dialog;
pub mod gateway;
pub mod inquiry;
pub mod prompts;
pub mod resque;
pub mod retrieval;
pub mod scalar;
pub mod telemetry;

pub use rust_decimal::Decimal;

/// Money amounts (USD costs, event prices) use exact decimal arithmetic.
pub type Money = Decimal;

/// Scalar used for embeddings and similarity scores.
pub type Sim = f32;

/// Scalar used for statistics (medians, regression).
pub type Stat = f64;

/// Embedding vectors stored in the search index.
pub type Embedding = Vec<Sim>;

/// Exhaustive cosine index over event embeddings.
pub type EventIndex = retrieval::vector::VectorIndex<Sim>;

/// Cost rate in USD per 1000 tokens.
pub type UsdRate = gateway::cost::CostRate<Money>;

/// Path-model estimates over `f64` data.
pub type PathFit = resque::PathEstimate<Stat>;

/// Maximum tokens (prompt plus completion) a single LLM call may use.
pub const CONTEXT_TOKEN_LIMIT: usize = 4096;
