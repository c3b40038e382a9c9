//! Retrieval-based control over expert demonstrations.
//!
//! Demonstrations are encoded frame by frame into a latent space and
//! indexed for exact L1 nearest-neighbor search. At run time the policy
//! retrieves the most similar stored situation, copies its actions, and
//! re-searches when the live and reference embeddings diverge or a step
//! budget runs out. The workspace ships a deterministic gridworld task,
//! scripted experts, baseline policies, and a CLI for the full
//! generate / run / ablate / export pipeline.

pub mod dataset_io;
pub mod encoder;
pub mod env;
pub mod episode;
pub mod eval;
pub mod index;
pub mod latent;
pub mod policy;
pub mod rng;

pub use encoder::{EncoderConfig, EncoderHistory, GridEncoder, Observation};
pub use env::{GridConfig, GridWorld, SuccessCriterion};
pub use episode::{run_episode, EpisodeLog, StepRecord};
pub use index::{FrameRef, Index, SearchResult};
pub use latent::{l1_distance, validate_dataset, Action, Dataset, Embedding, Frame, Trajectory};
pub use policy::{PolicyConfig, SearchEvent, SearchEventKind, SituationCursor, ZipPolicy};
