//! Exact nearest-neighbor search over every indexed frame of a dataset.
//!
//! Frames are partitioned into buckets by coarse quantization of the
//! highest-spread coordinates. Each bucket keeps a full bounding box, and
//! queries prune buckets whose L1 lower bound exceeds the best distance
//! found so far. Pruning is exact: lower-bound terms are dominated
//! coordinate-wise by the corresponding distance terms and both sums
//! accumulate in the same order, so a pruned bucket cannot contain the
//! argmin (nor a tie).
//!
//! The last frame of each trajectory is not indexed: a selected reference
//! must supply a successor frame for divergence tracking, so only offsets
//! `0..=T-2` are candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::{
    l1_dist_bounded, l1_dist_slices, validate_dataset, Action, Dataset, Embedding, Violation,
};

/// Number of quantization levels per selected coordinate.
const QUANT_LEVELS: usize = 8;
/// How many coordinates participate in bucketing.
const QUANT_COORDS: usize = 3;

/// Identifies the start of a reference situation inside the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub trajectory_id: u32,
    pub offset: u32,
}

impl FrameRef {
    pub fn new(trajectory_id: u32, offset: u32) -> Self {
        Self { trajectory_id, offset }
    }
}

/// A nearest-neighbor answer: the frame and its exact L1 distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub frame: FrameRef,
    pub distance: f64,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dataset failed validation with {} violation(s): {first}", .violations.len())]
    InvalidDataset {
        violations: Vec<Violation>,
        first: String,
    },
    #[error("index is empty")]
    EmptyIndex,
    #[error("query dimension {query} does not match dataset dimension {dataset}")]
    DimensionMismatch { query: usize, dataset: usize },
    #[error("all candidate frames are excluded")]
    AllCandidatesExcluded,
    #[error("frame reference {0:?} does not exist in the dataset")]
    UnknownFrame(FrameRef),
}

struct Bucket {
    /// Bounding box over all coordinates of the member embeddings.
    lo: Vec<f32>,
    hi: Vec<f32>,
    /// Members in dataset order; embeddings flattened row-major.
    refs: Vec<FrameRef>,
    embeddings: Vec<f32>,
}

impl Bucket {
    /// L1 distance from `query` to the bounding box, accumulated in the
    /// same coordinate order as the candidate distances it bounds.
    fn lower_bound(&self, query: &[f32]) -> f64 {
        let mut acc = 0.0f64;
        for i in 0..query.len() {
            let q = query[i] as f64;
            let lo = self.lo[i] as f64;
            let hi = self.hi[i] as f64;
            acc += if q < lo {
                lo - q
            } else if q > hi {
                q - hi
            } else {
                0.0
            };
        }
        acc
    }
}

/// Immutable search structure over the indexed frames of a dataset.
///
/// Owns the dataset so cursor lookups (actions, successor embeddings) go
/// through the same object the search answers refer to.
pub struct Index {
    dataset: Dataset,
    buckets: Vec<Bucket>,
    len: usize,
}

impl Index {
    /// Builds the index. Fails if the dataset does not validate.
    pub fn build(dataset: Dataset) -> Result<Self, IndexError> {
        let violations = validate_dataset(&dataset);
        if !violations.is_empty() {
            let first = violations[0].to_string();
            return Err(IndexError::InvalidDataset { violations, first });
        }
        let d = dataset.dimension;

        // Candidate frames: offsets 0..=T-2, in (trajectory, offset) order.
        let mut candidates: Vec<(FrameRef, &[f32])> = Vec::new();
        for traj in &dataset.trajectories {
            for offset in 0..traj.len().saturating_sub(1) {
                candidates.push((
                    FrameRef::new(traj.id, offset as u32),
                    traj.frames[offset].embedding.values(),
                ));
            }
        }
        let len = candidates.len();

        // Per-coordinate spread over the candidates.
        let mut lo = vec![f32::INFINITY; d];
        let mut hi = vec![f32::NEG_INFINITY; d];
        for (_, emb) in &candidates {
            for i in 0..d {
                lo[i] = lo[i].min(emb[i]);
                hi[i] = hi[i].max(emb[i]);
            }
        }

        // Bucket on the highest-spread coordinates, ties to lower index.
        let coords = QUANT_COORDS.min(d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            let sa = (hi[a] - lo[a]) as f64;
            let sb = (hi[b] - lo[b]) as f64;
            sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
        });
        let selected: Vec<usize> = order.into_iter().take(coords).collect();

        let quantize = |emb: &[f32]| -> [u8; QUANT_COORDS] {
            let mut key = [0u8; QUANT_COORDS];
            for (slot, &c) in selected.iter().enumerate() {
                let width = (hi[c] - lo[c]) as f64;
                if width > 0.0 {
                    let t = ((emb[c] - lo[c]) as f64 / width * QUANT_LEVELS as f64) as usize;
                    key[slot] = t.min(QUANT_LEVELS - 1) as u8;
                }
            }
            key
        };

        let mut map: BTreeMap<[u8; QUANT_COORDS], (Vec<FrameRef>, Vec<f32>)> = BTreeMap::new();
        for (frame, emb) in candidates {
            let entry = map.entry(quantize(emb)).or_default();
            entry.0.push(frame);
            entry.1.extend_from_slice(emb);
        }

        let buckets = map
            .into_values()
            .map(|(refs, embeddings)| {
                let mut blo = vec![f32::INFINITY; d];
                let mut bhi = vec![f32::NEG_INFINITY; d];
                for row in embeddings.chunks_exact(d) {
                    for i in 0..d {
                        blo[i] = blo[i].min(row[i]);
                        bhi[i] = bhi[i].max(row[i]);
                    }
                }
                Bucket { lo: blo, hi: bhi, refs, embeddings }
            })
            .collect();

        Ok(Self { dataset, buckets, len })
    }

    /// Number of indexed frames: sum of `T_i - 1` over trajectories.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn dimension(&self) -> usize {
        self.dataset.dimension
    }

    /// Length of the trajectory containing `id`, if it exists.
    pub fn trajectory_len(&self, id: u32) -> Option<usize> {
        self.dataset.trajectories.get(id as usize).map(|t| t.len())
    }

    /// Embedding stored at `frame` (any offset, including the last).
    pub fn embedding_at(&self, frame: FrameRef) -> Result<&Embedding, IndexError> {
        self.dataset
            .trajectories
            .get(frame.trajectory_id as usize)
            .and_then(|t| t.frames.get(frame.offset as usize))
            .map(|f| &f.embedding)
            .ok_or(IndexError::UnknownFrame(frame))
    }

    /// Action stored at `frame`.
    pub fn action_at(&self, frame: FrameRef) -> Result<Action, IndexError> {
        self.dataset
            .trajectories
            .get(frame.trajectory_id as usize)
            .and_then(|t| t.frames.get(frame.offset as usize))
            .map(|f| f.action)
            .ok_or(IndexError::UnknownFrame(frame))
    }

    fn check_query(&self, query: &Embedding) -> Result<(), IndexError> {
        if self.len == 0 {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dataset.dimension {
            return Err(IndexError::DimensionMismatch {
                query: query.dim(),
                dataset: self.dataset.dimension,
            });
        }
        Ok(())
    }

    /// The indexed frame minimizing L1 distance to `query`.
    ///
    /// Ties break to the lowest trajectory id, then lowest offset.
    pub fn nearest(&self, query: &Embedding) -> Result<SearchResult, IndexError> {
        self.check_query(query)?;
        Ok(self.scan(query.values(), None).expect("non-empty index"))
    }

    /// As [`Index::nearest`] over all indexed frames except `excluded`.
    pub fn nearest_excluding(
        &self,
        query: &Embedding,
        excluded: FrameRef,
    ) -> Result<SearchResult, IndexError> {
        self.check_query(query)?;
        self.scan(query.values(), Some(excluded))
            .ok_or(IndexError::AllCandidatesExcluded)
    }

    fn scan(&self, query: &[f32], excluded: Option<FrameRef>) -> Option<SearchResult> {
        // Visit buckets in ascending lower-bound order so the first best
        // found tightens the prune early.
        let mut ordered: Vec<(f64, usize)> = self
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| (b.lower_bound(query), i))
            .collect();
        ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        let d = query.len();
        let mut best: Option<SearchResult> = None;
        for (bound, bucket_idx) in ordered {
            if let Some(b) = &best {
                // Strict: a bucket at lower_bound == best may still hold a
                // tie that wins on (trajectory_id, offset).
                if bound > b.distance {
                    break;
                }
            }
            let bucket = &self.buckets[bucket_idx];
            for (row, &frame) in bucket.refs.iter().enumerate() {
                if excluded == Some(frame) {
                    continue;
                }
                let emb = &bucket.embeddings[row * d..(row + 1) * d];
                match &best {
                    None => {
                        best = Some(SearchResult {
                            frame,
                            distance: l1_dist_slices(query, emb),
                        });
                    }
                    Some(b) => {
                        if let Some(dist) = l1_dist_bounded(query, emb, b.distance) {
                            if dist < b.distance || (dist == b.distance && frame < b.frame) {
                                best = Some(SearchResult { frame, distance: dist });
                            }
                        }
                    }
                }
            }
        }
        best
    }
}
