//! The retrieval control loop.
//!
//! The policy keeps a cursor into one reference trajectory and copies its
//! actions verbatim. Every step it advances the cursor, recomputes the L1
//! distance between the live embedding and the cursor frame, and re-searches
//! the index when one of three triggers fires, in precedence order:
//!
//! 1. the cursor reached the last frame of its trajectory,
//! 2. the distance exceeded `divergence_scaling_factor` times the distance
//!    recorded at the previous search (floored at `zero_distance_epsilon`),
//! 3. the same reference was followed for `max_steps` consecutive steps;
//!    this search excludes the current cursor frame so the policy cannot
//!    re-select the position it is trying to escape.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{FrameRef, Index, IndexError};
use crate::latent::{l1_distance, Action, Embedding, LatentError};

/// The two knobs of the policy plus the zero-distance floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Consecutive steps allowed on one reference before a forced search.
    pub max_steps: u64,
    /// Multiplier on the last-search distance that triggers a divergence
    /// search. Values >= 1 are typical; anything > 0 is accepted so sweeps
    /// can probe below 1.
    pub divergence_scaling_factor: f64,
    /// Floor applied to the last-search distance before scaling, so exact
    /// matches (distance 0) do not re-search on the first nonzero distance.
    pub zero_distance_epsilon: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            max_steps: 128,
            divergence_scaling_factor: 2.0,
            zero_distance_epsilon: 1e-6,
        }
    }
}

impl PolicyConfig {
    /// The alternate preset recommended by the hyperparameter sweep.
    pub fn ablation_pick() -> Self {
        Self {
            max_steps: 32,
            divergence_scaling_factor: 1.0,
            zero_distance_epsilon: 1e-6,
        }
    }

    /// Both triggers disabled: replay one reference until it runs out.
    pub fn replay_only() -> Self {
        Self {
            max_steps: u64::MAX,
            divergence_scaling_factor: f64::INFINITY,
            zero_distance_epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_steps == 0 {
            return Err(PolicyError::InvalidConfig("max_steps must be >= 1".into()));
        }
        if !(self.divergence_scaling_factor > 0.0) {
            return Err(PolicyError::InvalidConfig(
                "divergence_scaling_factor must be > 0".into(),
            ));
        }
        if !(self.zero_distance_epsilon > 0.0) {
            return Err(PolicyError::InvalidConfig(
                "zero_distance_epsilon must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Latent(#[from] LatentError),
}

/// Why a search happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchEventKind {
    Initial,
    Divergence,
    Time,
    TrajectoryEnd,
}

/// One search, as recorded in the episode log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub kind: SearchEventKind,
    /// Episode step index at which the search ran.
    pub step: u64,
    /// Cursor position when the trigger fired (None for the initial search).
    pub old_frame: Option<FrameRef>,
    /// Frame selected by the search.
    pub new_frame: FrameRef,
    /// The distance value that fired the trigger; for the initial search,
    /// the distance of the selected frame.
    pub distance_at_trigger: f64,
}

/// The policy's pointer into the reference demonstration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SituationCursor {
    pub frame: FrameRef,
    /// L1 distance recorded at the moment of the last search.
    pub reference_distance: f64,
    pub steps_since_search: u64,
}

/// Live policy state for one episode.
///
/// The index is passed to each call rather than stored, so one immutable
/// index can serve many concurrent episodes; the cursor only has meaning
/// for the index it was initialized with.
#[derive(Debug, Clone)]
pub struct ZipPolicy {
    config: PolicyConfig,
    cursor: SituationCursor,
    step: u64,
    last_distance: f64,
}

impl ZipPolicy {
    /// Runs the initial search and returns the first action to take.
    pub fn init(
        index: &Index,
        config: PolicyConfig,
        first_embedding: &Embedding,
    ) -> Result<(Self, Action, SearchEvent), PolicyError> {
        config.validate()?;
        let hit = index.nearest(first_embedding)?;
        let action = index.action_at(hit.frame)?;
        let event = SearchEvent {
            kind: SearchEventKind::Initial,
            step: 0,
            old_frame: None,
            new_frame: hit.frame,
            distance_at_trigger: hit.distance,
        };
        let policy = Self {
            config,
            cursor: SituationCursor {
                frame: hit.frame,
                reference_distance: hit.distance,
                steps_since_search: 0,
            },
            step: 0,
            last_distance: hit.distance,
        };
        Ok((policy, action, event))
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn cursor(&self) -> &SituationCursor {
        &self.cursor
    }

    /// Distance between the last query and the cursor frame at the moment
    /// the last action was emitted (after any search).
    pub fn last_distance(&self) -> f64 {
        self.last_distance
    }

    /// Advances one step: shift the cursor, re-measure, maybe re-search,
    /// and copy the action at the resulting cursor frame.
    pub fn step(
        &mut self,
        index: &Index,
        current_embedding: &Embedding,
    ) -> Result<(Action, Option<SearchEvent>), PolicyError> {
        self.step += 1;

        // (1) shift the reference situation in time.
        let advanced = FrameRef::new(self.cursor.frame.trajectory_id, self.cursor.frame.offset + 1);
        self.cursor.frame = advanced;
        self.cursor.steps_since_search += 1;

        // (2) recompute the distance at the shifted position.
        let dist = l1_distance(current_embedding, index.embedding_at(advanced)?)?;

        // (3) trigger checks, in precedence order.
        let traj_len = index
            .trajectory_len(advanced.trajectory_id)
            .ok_or(IndexError::UnknownFrame(advanced))? as u64;
        let at_end = u64::from(advanced.offset) == traj_len - 1;
        let threshold = self.config.divergence_scaling_factor
            * self.cursor.reference_distance.max(self.config.zero_distance_epsilon);
        let kind = if at_end {
            Some(SearchEventKind::TrajectoryEnd)
        } else if dist > threshold {
            Some(SearchEventKind::Divergence)
        } else if self.cursor.steps_since_search >= self.config.max_steps {
            Some(SearchEventKind::Time)
        } else {
            None
        };

        // (4)+(5) run the search and rebase the cursor on its answer.
        let event = match kind {
            None => {
                self.last_distance = dist;
                None
            }
            Some(kind) => {
                let hit = match kind {
                    SearchEventKind::Time => index.nearest_excluding(current_embedding, advanced)?,
                    _ => index.nearest(current_embedding)?,
                };
                self.cursor = SituationCursor {
                    frame: hit.frame,
                    reference_distance: hit.distance,
                    steps_since_search: 0,
                };
                self.last_distance = hit.distance;
                Some(SearchEvent {
                    kind,
                    step: self.step,
                    old_frame: Some(advanced),
                    new_frame: hit.frame,
                    distance_at_trigger: dist,
                })
            }
        };

        // (6) copy the action stored at the (possibly new) cursor frame.
        let action = index.action_at(self.cursor.frame)?;
        Ok((action, event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{Dataset, Frame, Trajectory};

    // A dataset with hand-placed embeddings so searches are predictable.
    fn line_dataset(points: &[(f32, u32)]) -> Dataset {
        Dataset {
            dimension: 1,
            action_alphabet_size: 64,
            trajectories: vec![Trajectory {
                id: 0,
                frames: points
                    .iter()
                    .map(|&(x, a)| Frame {
                        embedding: Embedding::new(vec![x]),
                        action: Action(a),
                    })
                    .collect(),
            }],
        }
    }

    fn emb(x: f32) -> Embedding {
        Embedding::new(vec![x])
    }

    #[test]
    fn init_selects_exact_match_with_zero_reference_distance() {
        let ds = line_dataset(&[(0.0, 1), (1.0, 2), (2.0, 3), (3.0, 4)]);
        let idx = Index::build(ds).unwrap();
        let (policy, action, event) =
            ZipPolicy::init(&idx, PolicyConfig::default(), &emb(1.0)).unwrap();
        assert_eq!(policy.cursor().frame, FrameRef::new(0, 1));
        assert_eq!(policy.cursor().reference_distance, 0.0);
        assert_eq!(action, Action(2));
        assert_eq!(event.kind, SearchEventKind::Initial);
        assert_eq!(event.step, 0);
        assert_eq!(event.old_frame, None);
        assert_eq!(event.new_frame, FrameRef::new(0, 1));
    }

    #[test]
    fn init_delegates_to_nearest() {
        let ds = line_dataset(&[(0.0, 1), (10.0, 2), (20.0, 3)]);
        let idx = Index::build(ds).unwrap();
        let (policy, _, _) = ZipPolicy::init(&idx, PolicyConfig::default(), &emb(9.2)).unwrap();
        let direct = idx.nearest(&emb(9.2)).unwrap();
        assert_eq!(policy.cursor().frame, direct.frame);
        assert_eq!(policy.cursor().reference_distance, direct.distance);
    }

    #[test]
    fn exact_replay_emits_stored_actions_without_events() {
        let points: Vec<(f32, u32)> = (0..10).map(|i| (i as f32, i as u32)).collect();
        let ds = line_dataset(&points);
        let idx = Index::build(ds).unwrap();
        let cfg = PolicyConfig {
            max_steps: 128,
            divergence_scaling_factor: 2.0,
            zero_distance_epsilon: 1e-9,
        };
        let (mut policy, a0, _) = ZipPolicy::init(&idx, cfg, &emb(0.0)).unwrap();
        assert_eq!(a0, Action(0));
        // Steps 1..=T-2 track the stored trajectory with distance 0.
        for t in 1..=8u32 {
            let (action, event) = policy.step(&idx, &emb(t as f32)).unwrap();
            assert_eq!(action, Action(t), "step {t}");
            assert!(event.is_none(), "unexpected event at step {t}");
            assert_eq!(policy.last_distance(), 0.0);
        }
        // Advancing onto the last frame (offset T-1) forces a search.
        let (_, event) = policy.step(&idx, &emb(9.0)).unwrap();
        let event = event.expect("trajectory end at final frame");
        assert_eq!(event.kind, SearchEventKind::TrajectoryEnd);
    }

    #[test]
    fn divergence_fires_on_threshold_arithmetic() {
        // Reference distance 1.0; a jump to 2.5 exceeds 2.0 * 1.0.
        let ds = line_dataset(&[(0.0, 0), (0.0, 1), (0.0, 2), (0.0, 3), (0.0, 4), (9.0, 5)]);
        let idx = Index::build(ds).unwrap();
        let cfg = PolicyConfig {
            max_steps: 128,
            divergence_scaling_factor: 2.0,
            zero_distance_epsilon: 1e-6,
        };
        // Initial query at 1.0: nearest indexed frame is 0.0 -> ref dist 1.0.
        let (mut policy, _, event) = ZipPolicy::init(&idx, cfg, &emb(1.0)).unwrap();
        assert_eq!(event.distance_at_trigger, 1.0);
        assert_eq!(policy.cursor().reference_distance, 1.0);

        // Step with 2.0: dist to cursor 2.0 <= 2.0 -> no event.
        let (_, event) = policy.step(&idx, &emb(2.0)).unwrap();
        assert!(event.is_none());

        // Step with 2.5: dist 2.5 > 2.0 -> divergence.
        let (_, event) = policy.step(&idx, &emb(2.5)).unwrap();
        let event = event.expect("divergence event");
        assert_eq!(event.kind, SearchEventKind::Divergence);
        assert_eq!(event.distance_at_trigger, 2.5);
        // Reference distance rebased to the new search result.
        assert_eq!(policy.cursor().reference_distance, 2.5);
    }

    #[test]
    fn time_trigger_fires_every_n_steps_and_excludes_cursor() {
        // Two trajectories pinned at the same embedding so the stream can sit
        // at distance 0 forever; time searches must hop to the other one.
        let traj = |id: u32| Trajectory {
            id,
            frames: (0..40)
                .map(|i| Frame {
                    embedding: Embedding::new(vec![0.0]),
                    action: Action(id * 10 + (i % 4)),
                })
                .collect(),
        };
        let ds = Dataset {
            dimension: 1,
            action_alphabet_size: 64,
            trajectories: vec![traj(0), traj(1)],
        };
        let idx = Index::build(ds).unwrap();
        let cfg = PolicyConfig {
            max_steps: 4,
            divergence_scaling_factor: 2.0,
            zero_distance_epsilon: 1e-6,
        };
        let (mut policy, _, _) = ZipPolicy::init(&idx, cfg, &emb(0.0)).unwrap();
        let mut time_steps = Vec::new();
        for step in 1..=20u64 {
            let before = policy.cursor().frame;
            let (_, event) = policy.step(&idx, &emb(0.0)).unwrap();
            if let Some(e) = event {
                assert_eq!(e.kind, SearchEventKind::Time);
                time_steps.push(step);
                assert_ne!(
                    e.new_frame,
                    FrameRef::new(before.trajectory_id, before.offset + 1),
                    "time search must not reselect the excluded frame"
                );
            }
            assert!(policy.cursor().steps_since_search <= cfg.max_steps);
        }
        assert_eq!(time_steps, vec![4, 8, 12, 16, 20]);
    }

    #[test]
    fn replay_only_config_reaches_trajectory_end_without_other_events() {
        let points: Vec<(f32, u32)> = (0..30).map(|i| (i as f32 * 0.25, i as u32)).collect();
        let ds = line_dataset(&points);
        let idx = Index::build(ds).unwrap();
        let (mut policy, _, _) =
            ZipPolicy::init(&idx, PolicyConfig::replay_only(), &emb(0.0)).unwrap();
        let mut kinds = Vec::new();
        // Feed garbage far from everything: divergence is disabled, so the
        // only events can be trajectory ends.
        for _ in 1..60u64 {
            let (_, event) = policy.step(&idx, &emb(1000.0)).unwrap();
            if let Some(e) = event {
                kinds.push(e.kind);
            }
        }
        assert!(!kinds.is_empty());
        assert!(kinds.iter().all(|k| *k == SearchEventKind::TrajectoryEnd));
    }

    #[test]
    fn action_provenance_holds_under_random_streams() {
        let mut rng = crate::rng::SplitMix64::new(77);
        let trajectories: Vec<Trajectory> = (0..5)
            .map(|id| Trajectory {
                id,
                frames: (0..20)
                    .map(|_| Frame {
                        embedding: Embedding::new(vec![
                            rng.next_signed_unit() as f32 * 3.0,
                            rng.next_signed_unit() as f32 * 3.0,
                        ]),
                        action: Action(rng.next_below(6) as u32),
                    })
                    .collect(),
            })
            .collect();
        let ds = Dataset {
            dimension: 2,
            action_alphabet_size: 6,
            trajectories,
        };
        let idx = Index::build(ds).unwrap();
        let cfg = PolicyConfig {
            max_steps: 7,
            divergence_scaling_factor: 1.5,
            zero_distance_epsilon: 1e-6,
        };
        let q0 = Embedding::new(vec![0.0, 0.0]);
        let (mut policy, a0, _) = ZipPolicy::init(&idx, cfg, &q0).unwrap();
        assert_eq!(a0, idx.action_at(policy.cursor().frame).unwrap());
        for _ in 0..200 {
            let q = Embedding::new(vec![
                rng.next_signed_unit() as f32 * 3.0,
                rng.next_signed_unit() as f32 * 3.0,
            ]);
            let (action, _) = policy.step(&idx, &q).unwrap();
            assert_eq!(action, idx.action_at(policy.cursor().frame).unwrap());
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let ds = line_dataset(&[(0.0, 0), (1.0, 1)]);
        let idx = Index::build(ds).unwrap();
        for bad in [
            PolicyConfig { max_steps: 0, ..Default::default() },
            PolicyConfig { divergence_scaling_factor: 0.0, ..Default::default() },
            PolicyConfig { divergence_scaling_factor: -1.0, ..Default::default() },
            PolicyConfig { zero_distance_epsilon: 0.0, ..Default::default() },
        ] {
            assert!(ZipPolicy::init(&idx, bad, &emb(0.0)).is_err());
        }
    }
}
