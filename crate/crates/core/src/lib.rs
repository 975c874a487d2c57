//! Persona loading for aligning a choice oracle with observed travel choices.
//!
//! The crate is organised along the pipeline:
//!
//! * [`data`]: Swissmetro ingestion, filtering and the three experiment splits.
//! * [`oracle`]: the pluggable choice/expert oracle (HTTP, synthetic, cached).
//! * [`persona`]: expert prompts and six-factor persona inference.
//! * [`loading`]: embedding kernel, cosine similarity and the softmax loading distribution.
//! * [`em`]: Monte-Carlo stochastic EM estimation of the embedding parameters.
//! * [`predict`]: persona-conditioned simulation prompts and test-set prediction.
//! * [`baselines`]: MNL plus zero-shot, few-shot and same-group prompting.
//! * [`eval`]: share divergence, F1 scores and comparison reports.
//! * [`interpret`]: parameter export, k-means over profile embeddings, PCA projection.
//! * [`synth`]: a synthetic population with known latent preference groups.

pub mod baselines;
pub mod data;
pub mod digest;
pub mod em;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod jsonl;
pub mod loading;
pub mod oracle;
pub mod persona;
pub mod predict;
pub mod seeding;
pub mod synth;

pub use data::{
    AgeBand, AltAttributes, Alternative, ChoiceContext, ChoiceRecord, DatasetBundle, Gender, IncomeBand, Luggage,
    RecordKey, RespondentId, RespondentPanel, SocioDemographics, TripPurpose, UserGroup, WhoPays,
};
pub use error::{Error, ErrorClass, Result};
pub use loading::{EmbeddingParams, EmbeddingVector, LoadingDistribution};
pub use oracle::{Oracle, Prompt};
pub use persona::{Factor, Persona, PersonaBasis, Ratings};
