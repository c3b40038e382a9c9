//! Episode execution and the per-step log.
//!
//! One runner drives any [`ActionSource`] (the retrieval policy or a
//! baseline) against an environment and encoder; every policy produces a
//! log in the identical format, so success detection and the trigger
//! replay checks work on all of them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderError, EncoderHistory, GridEncoder};
use crate::env::{EnvError, Environment};
use crate::index::{FrameRef, Index};
use crate::latent::{Action, Embedding};
use crate::policy::{PolicyConfig, PolicyError, SearchEvent, ZipPolicy};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("environment fault at step {step}: {source}")]
    Environment {
        step: u64,
        #[source]
        source: EnvError,
    },
    #[error("encoder fault at step {step}: {source}")]
    Encoder {
        step: u64,
        #[source]
        source: EncoderError,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("max_episode_steps must be >= 1")]
    ZeroSteps,
}

/// What a policy decided at one step.
#[derive(Debug, Clone)]
pub struct StepDecision {
    pub action: Action,
    pub cursor: Option<FrameRef>,
    pub dist: Option<f64>,
    pub reference_distance: Option<f64>,
    pub event: Option<SearchEvent>,
}

/// A policy that can drive an episode step by step.
pub trait ActionSource {
    /// First step of the episode (step index 0).
    fn begin(&mut self, first: &Embedding) -> Result<StepDecision, PolicyError>;
    /// Every subsequent step.
    fn next(&mut self, current: &Embedding) -> Result<StepDecision, PolicyError>;
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub action: u32,
    /// Cursor after any search this step (absent for policies without one).
    pub cursor: Option<FrameRef>,
    /// Distance between the live embedding and the cursor frame at action
    /// emission time.
    pub dist: Option<f64>,
    pub reference_distance: Option<f64>,
    pub in_goal: bool,
    pub event: Option<SearchEvent>,
}

/// Per-step record of one episode; input to success detection and stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn events(&self) -> impl Iterator<Item = &SearchEvent> {
        self.steps.iter().filter_map(|s| s.event.as_ref())
    }
}

/// The retrieval policy as an [`ActionSource`].
pub struct ZipSource<'a> {
    index: &'a Index,
    config: PolicyConfig,
    policy: Option<ZipPolicy>,
}

impl<'a> ZipSource<'a> {
    pub fn new(index: &'a Index, config: PolicyConfig) -> Self {
        Self { index, config, policy: None }
    }
}

impl ActionSource for ZipSource<'_> {
    fn begin(&mut self, first: &Embedding) -> Result<StepDecision, PolicyError> {
        let (policy, action, event) = ZipPolicy::init(self.index, self.config, first)?;
        let decision = StepDecision {
            action,
            cursor: Some(policy.cursor().frame),
            dist: Some(policy.last_distance()),
            reference_distance: Some(policy.cursor().reference_distance),
            event: Some(event),
        };
        self.policy = Some(policy);
        Ok(decision)
    }

    fn next(&mut self, current: &Embedding) -> Result<StepDecision, PolicyError> {
        let policy = self
            .policy
            .as_mut()
            .ok_or_else(|| PolicyError::InvalidConfig("policy not initialized".into()))?;
        let (action, event) = policy.step(self.index, current)?;
        Ok(StepDecision {
            action,
            cursor: Some(policy.cursor().frame),
            dist: Some(policy.last_distance()),
            reference_distance: Some(policy.cursor().reference_distance),
            event,
        })
    }
}

/// Runs one episode: resets the environment and encoder history, drives
/// the source for exactly `max_episode_steps` steps (there is no terminal
/// action), and records one [`StepRecord`] per step. Each record holds the
/// observation's in-goal flag at the moment the action was chosen.
pub fn run_episode_with(
    source: &mut dyn ActionSource,
    env: &mut dyn Environment,
    encoder: &GridEncoder,
    seed: u64,
    max_episode_steps: u64,
) -> Result<EpisodeLog, EpisodeError> {
    if max_episode_steps == 0 {
        return Err(EpisodeError::ZeroSteps);
    }
    let mut history = EncoderHistory::new();
    let mut obs = env.reset(seed);
    let mut steps = Vec::with_capacity(max_episode_steps as usize);

    for step in 0..max_episode_steps {
        let embedding = encoder
            .encode(&obs, &mut history)
            .map_err(|source| EpisodeError::Encoder { step, source })?;
        let in_goal = env.in_goal();
        let decision = if step == 0 {
            source.begin(&embedding)?
        } else {
            source.next(&embedding)?
        };
        steps.push(StepRecord {
            step,
            action: decision.action.id(),
            cursor: decision.cursor,
            dist: decision.dist,
            reference_distance: decision.reference_distance,
            in_goal,
            event: decision.event,
        });
        obs = env
            .step(decision.action)
            .map_err(|source| EpisodeError::Environment { step, source })?;
    }

    Ok(EpisodeLog { seed, steps })
}

/// Runs the retrieval policy for one episode.
pub fn run_episode(
    env: &mut dyn Environment,
    encoder: &GridEncoder,
    index: &Index,
    config: PolicyConfig,
    seed: u64,
    max_episode_steps: u64,
) -> Result<EpisodeLog, EpisodeError> {
    let mut source = ZipSource::new(index, config);
    run_episode_with(&mut source, env, encoder, seed, max_episode_steps)
}
