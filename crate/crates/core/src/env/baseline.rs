//! Baseline policies under the same episode contract as the retrieval
//! policy: uniform random actions, and per-step 1-NN retrieval without
//! situation persistence.

use crate::episode::{ActionSource, StepDecision};
use crate::index::Index;
use crate::latent::{Action, Embedding};
use crate::policy::PolicyError;
use crate::rng::SplitMix64;

/// Uniform random actions from a seeded stream.
pub struct RandomPolicy {
    rng: SplitMix64,
    alphabet: u32,
}

impl RandomPolicy {
    pub fn new(seed: u64, alphabet: u32) -> Self {
        Self {
            rng: SplitMix64::new(seed),
            alphabet,
        }
    }

    fn draw(&mut self) -> StepDecision {
        StepDecision {
            action: Action(self.rng.next_below(self.alphabet as u64) as u32),
            cursor: None,
            dist: None,
            reference_distance: None,
            event: None,
        }
    }
}

impl ActionSource for RandomPolicy {
    fn begin(&mut self, _first: &Embedding) -> Result<StepDecision, PolicyError> {
        Ok(self.draw())
    }

    fn next(&mut self, _current: &Embedding) -> Result<StepDecision, PolicyError> {
        Ok(self.draw())
    }
}

/// Fresh nearest search every step; copies only the matched frame's action.
pub struct KnnStepPolicy<'a> {
    index: &'a Index,
}

impl<'a> KnnStepPolicy<'a> {
    pub fn new(index: &'a Index) -> Self {
        Self { index }
    }

    fn retrieve(&self, query: &Embedding) -> Result<StepDecision, PolicyError> {
        let hit = self.index.nearest(query)?;
        Ok(StepDecision {
            action: self.index.action_at(hit.frame)?,
            cursor: Some(hit.frame),
            dist: Some(hit.distance),
            reference_distance: Some(hit.distance),
            event: None,
        })
    }
}

impl ActionSource for KnnStepPolicy<'_> {
    fn begin(&mut self, first: &Embedding) -> Result<StepDecision, PolicyError> {
        self.retrieve(first)
    }

    fn next(&mut self, current: &Embedding) -> Result<StepDecision, PolicyError> {
        self.retrieve(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{Dataset, Frame, Trajectory};

    fn tiny_index() -> Index {
        let trajectories = vec![Trajectory {
            id: 0,
            frames: (0..6)
                .map(|i| Frame {
                    embedding: Embedding::new(vec![i as f32, -(i as f32)]),
                    action: Action(i % 4),
                })
                .collect(),
        }];
        Index::build(Dataset {
            dimension: 2,
            action_alphabet_size: 4,
            trajectories,
        })
        .unwrap()
    }

    #[test]
    fn knn_step_action_equals_nearest_frame_action() {
        let index = tiny_index();
        let mut policy = KnnStepPolicy::new(&index);
        let mut rng = SplitMix64::new(5);
        for i in 0..50 {
            let q = Embedding::new(vec![
                rng.next_signed_unit() as f32 * 6.0,
                rng.next_signed_unit() as f32 * 6.0,
            ]);
            let decision = if i == 0 { policy.begin(&q) } else { policy.next(&q) }.unwrap();
            let want = index.nearest(&q).unwrap();
            assert_eq!(decision.action, index.action_at(want.frame).unwrap());
            assert_eq!(decision.cursor, Some(want.frame));
            assert_eq!(decision.dist, Some(want.distance));
        }
    }

    #[test]
    fn random_policy_is_reproducible_and_in_alphabet() {
        let draw = |seed: u64| -> Vec<u32> {
            let mut p = RandomPolicy::new(seed, 4);
            let q = Embedding::new(vec![0.0]);
            (0..30)
                .map(|i| {
                    let d = if i == 0 { p.begin(&q) } else { p.next(&q) }.unwrap();
                    d.action.id()
                })
                .collect()
        };
        let a = draw(99);
        let b = draw(99);
        assert_eq!(a, b);
        assert!(a.iter().all(|&id| id < 4));
        assert_ne!(a, draw(100));
    }
}
