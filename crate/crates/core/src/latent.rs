//! Core domain types shared by every module, plus the latent-space metric.
//!
//! A [`Dataset`] is the searchable subset of expert demonstrations: each
//! [`Trajectory`] is an ordered run of [`Frame`]s pairing the embedding of
//! one observation with the action the expert took there. Embedding values
//! are stored as `f32` (the on-disk width) and distances accumulate in
//! `f64`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatentError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// A point in the latent space: one observation as seen by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A discrete action token from the environment's alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub u32);

impl Action {
    pub fn id(self) -> u32 {
        self.0
    }
}

/// One observation-action pair of a demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub embedding: Embedding,
    pub action: Action,
}

/// An ordered run of frames from a single expert demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u32,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The demonstration subset searched by the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dimension: usize,
    pub action_alphabet_size: u32,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Total frame count across all trajectories.
    pub fn frame_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

/// L1 distance between two embeddings, accumulated in `f64`.
///
/// Symmetric, zero exactly when the vectors are elementwise equal.
pub fn l1_distance(a: &Embedding, b: &Embedding) -> Result<f64, LatentError> {
    if a.dim() != b.dim() {
        return Err(LatentError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(l1_dist_slices(a.values(), b.values()))
}

/// Hot-path variant over raw slices; lengths must match.
#[inline]
pub(crate) fn l1_dist_slices(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += (x as f64 - y as f64).abs();
    }
    acc
}

/// As [`l1_dist_slices`] but abandons once the running sum exceeds `bound`.
///
/// Returns `None` on abandonment. Terms are non-negative and accumulate in
/// the same coordinate order as the full sum, so `None` implies the full
/// distance is strictly greater than `bound`, and `Some(d)` is bit-equal
/// to the unbounded result.
#[inline]
pub(crate) fn l1_dist_bounded(a: &[f32], b: &[f32], bound: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += (x as f64 - y as f64).abs();
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

/// Why a dataset failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    ZeroDimension,
    EmptyTrajectory,
    TrajectoryIdNotDense { expected: u32, found: u32 },
    DimensionMismatch { expected: usize, found: usize },
    NonFiniteValue { coordinate: usize },
    ActionOutOfAlphabet { action: u32, alphabet: u32 },
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::ZeroDimension => write!(f, "dataset dimension must be >= 1"),
            ViolationKind::EmptyTrajectory => write!(f, "trajectory has no frames"),
            ViolationKind::TrajectoryIdNotDense { expected, found } => {
                write!(f, "trajectory id {found} at position {expected} (ids must be dense 0..N-1)")
            }
            ViolationKind::DimensionMismatch { expected, found } => {
                write!(f, "embedding dimension {found}, dataset declares {expected}")
            }
            ViolationKind::NonFiniteValue { coordinate } => {
                write!(f, "non-finite embedding value at coordinate {coordinate}")
            }
            ViolationKind::ActionOutOfAlphabet { action, alphabet } => {
                write!(f, "action out of alphabet: {action} >= {alphabet}")
            }
        }
    }
}

/// One invariant breach found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trajectory_id: Option<u32>,
    pub frame_offset: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.trajectory_id, self.frame_offset) {
            (Some(t), Some(o)) => write!(f, "trajectory {t} frame {o}: {}", self.kind),
            (Some(t), None) => write!(f, "trajectory {t}: {}", self.kind),
            _ => write!(f, "dataset: {}", self.kind),
        }
    }
}

/// Checks every dataset invariant; returns one record per breach.
///
/// Diagnostics are returned rather than raised so callers can report all
/// problems in a corrupt file at once.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if ds.dimension == 0 {
        out.push(Violation {
            trajectory_id: None,
            frame_offset: None,
            kind: ViolationKind::ZeroDimension,
        });
    }
    for (pos, traj) in ds.trajectories.iter().enumerate() {
        if traj.id != pos as u32 {
            out.push(Violation {
                trajectory_id: Some(traj.id),
                frame_offset: None,
                kind: ViolationKind::TrajectoryIdNotDense {
                    expected: pos as u32,
                    found: traj.id,
                },
            });
        }
        if traj.is_empty() {
            out.push(Violation {
                trajectory_id: Some(traj.id),
                frame_offset: None,
                kind: ViolationKind::EmptyTrajectory,
            });
        }
        for (offset, frame) in traj.frames.iter().enumerate() {
            if frame.embedding.dim() != ds.dimension {
                out.push(Violation {
                    trajectory_id: Some(traj.id),
                    frame_offset: Some(offset),
                    kind: ViolationKind::DimensionMismatch {
                        expected: ds.dimension,
                        found: frame.embedding.dim(),
                    },
                });
            }
            if let Some(coordinate) = frame.embedding.values().iter().position(|v| !v.is_finite())
            {
                out.push(Violation {
                    trajectory_id: Some(traj.id),
                    frame_offset: Some(offset),
                    kind: ViolationKind::NonFiniteValue { coordinate },
                });
            }
            if frame.action.id() >= ds.action_alphabet_size {
                out.push(Violation {
                    trajectory_id: Some(traj.id),
                    frame_offset: Some(offset),
                    kind: ViolationKind::ActionOutOfAlphabet {
                        action: frame.action.id(),
                        alphabet: ds.action_alphabet_size,
                    },
                });
            }
        }
    }
    out
}
