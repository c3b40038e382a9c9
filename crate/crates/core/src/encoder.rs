//! Observation encoding into the latent space.
//!
//! The encoder contract is deliberately small: a fixed output dimension,
//! deterministic output for a given observation history, and a per-episode
//! history that smooths over the last `k` raw feature projections. The
//! concrete [`GridEncoder`] flattens the agent-centered cell window and
//! heading into one-hots, projects them through a frozen seeded random
//! matrix, and averages the last `k` projections.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::Embedding;
use crate::rng::SplitMix64;

/// Cell codes visible in an observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Wall,
    Goal,
    OutOfBounds,
}

impl Cell {
    pub const COUNT: usize = 4;

    fn index(self) -> usize {
        match self {
            Cell::Empty => 0,
            Cell::Wall => 1,
            Cell::Goal => 2,
            Cell::OutOfBounds => 3,
        }
    }
}

/// Compass heading of the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const COUNT: usize = 4;
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn turned_left(self) -> Heading {
        Self::from_index((self.index() + 3) % 4)
    }

    pub fn turned_right(self) -> Heading {
        Self::from_index((self.index() + 1) % 4)
    }

    /// Unit step in grid coordinates; x grows east, y grows south.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }
}

/// What the agent sees: a `w x w` window of cells centered on itself
/// (world-aligned, north up), its heading, and the environment tick.
///
/// The tick is carried for bookkeeping but excluded from the feature map,
/// so replaying a trajectory cannot match on absolute time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub window: Vec<Cell>,
    pub window_size: usize,
    pub heading: Heading,
    pub tick: u64,
}

impl Observation {
    /// The feature content of the observation: everything the encoder sees.
    pub fn feature_key(&self) -> (Vec<Cell>, Heading) {
        (self.window.clone(), self.heading)
    }
}

/// Default seed for the frozen projection matrix. Arbitrary, documented so
/// datasets are reproducible across machines; recorded in dataset files.
pub const DEFAULT_PROJECTION_SEED: u64 = 0x00C0_FFEE_D00D_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Output dimension d of the latent space.
    pub dimension: usize,
    /// Number of recent raw projections averaged into each embedding (k >= 1).
    pub smoothing_window: usize,
    /// Expected observation window side length (odd, >= 3).
    pub window_size: usize,
    /// Seed for the frozen random projection matrix.
    pub projection_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dimension: 32,
            smoothing_window: 4,
            window_size: 5,
            projection_seed: DEFAULT_PROJECTION_SEED,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("observation window {found}x{found} does not match configured {expected}x{expected}")]
    WindowMismatch { expected: usize, found: usize },
}

/// Per-episode encoder state: up to `k - 1` prior raw projections.
#[derive(Debug, Clone, Default)]
pub struct EncoderHistory {
    recent: VecDeque<Vec<f32>>,
}

impl EncoderHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears the history; subsequent encodes behave as at episode start.
    pub fn reset(&mut self) {
        self.recent.clear();
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }
}

/// Deterministic gridworld encoder with a frozen random projection.
///
/// The projection matrix is immutable and cheap to share; history is kept
/// separately so distinct episodes can encode in parallel.
#[derive(Debug, Clone)]
pub struct GridEncoder {
    config: EncoderConfig,
    /// Row-major `d x feature_len` matrix, entries uniform in [-1, 1).
    matrix: Arc<Vec<f32>>,
    feature_len: usize,
}

impl GridEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self, EncoderError> {
        if config.dimension == 0 {
            return Err(EncoderError::InvalidConfig("dimension must be >= 1".into()));
        }
        if config.smoothing_window == 0 {
            return Err(EncoderError::InvalidConfig(
                "smoothing_window must be >= 1".into(),
            ));
        }
        if config.window_size < 3 || config.window_size % 2 == 0 {
            return Err(EncoderError::InvalidConfig(
                "window_size must be odd and >= 3".into(),
            ));
        }
        let feature_len = config.window_size * config.window_size * Cell::COUNT + Heading::COUNT;
        let mut rng = SplitMix64::new(config.projection_seed);
        let mut matrix = Vec::with_capacity(config.dimension * feature_len);
        for _ in 0..config.dimension * feature_len {
            matrix.push(rng.next_signed_unit() as f32);
        }
        Ok(Self {
            config,
            matrix: Arc::new(matrix),
            feature_len,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    /// Projects one observation through the frozen matrix (no smoothing).
    ///
    /// The one-hot feature layout is: for window cell j (row-major), the
    /// four cell-code slots `j*4 + code`; then the heading one-hot at the end.
    fn project(&self, obs: &Observation) -> Result<Vec<f32>, EncoderError> {
        let w = self.config.window_size;
        if obs.window_size != w || obs.window.len() != w * w {
            return Err(EncoderError::WindowMismatch {
                expected: w,
                found: obs.window_size,
            });
        }
        // Active one-hot indices, in increasing order.
        let mut active = Vec::with_capacity(w * w + 1);
        for (j, cell) in obs.window.iter().enumerate() {
            active.push(j * Cell::COUNT + cell.index());
        }
        active.push(w * w * Cell::COUNT + obs.heading.index());

        let mut out = Vec::with_capacity(self.config.dimension);
        for row in 0..self.config.dimension {
            let base = row * self.feature_len;
            let mut acc = 0.0f64;
            for &j in &active {
                acc += self.matrix[base + j] as f64;
            }
            out.push(acc as f32);
        }
        Ok(out)
    }

    /// Encodes an observation given the episode history.
    ///
    /// Deterministic: identical observation histories yield bit-identical
    /// embeddings. The output is the mean of the last `k` raw projections
    /// (fewer at episode start), accumulated in f64 and rounded to f32.
    pub fn encode(
        &self,
        obs: &Observation,
        history: &mut EncoderHistory,
    ) -> Result<Embedding, EncoderError> {
        let raw = self.project(obs)?;
        let d = self.config.dimension;
        let count = history.recent.len() + 1;
        let mut mean = vec![0.0f32; d];
        for i in 0..d {
            let mut acc = raw[i] as f64;
            for prev in &history.recent {
                acc += prev[i] as f64;
            }
            mean[i] = (acc / count as f64) as f32;
        }
        history.recent.push_back(raw);
        while history.recent.len() > self.config.smoothing_window.saturating_sub(1) {
            history.recent.pop_front();
        }
        Ok(Embedding::new(mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::l1_distance;

    fn obs(window: Vec<Cell>, w: usize, heading: Heading) -> Observation {
        Observation {
            window,
            window_size: w,
            heading,
            tick: 0,
        }
    }

    fn all_empty(w: usize) -> Vec<Cell> {
        vec![Cell::Empty; w * w]
    }

    #[test]
    fn same_observation_fresh_history_is_identical() {
        let enc = GridEncoder::new(EncoderConfig::default()).unwrap();
        let o = obs(all_empty(5), 5, Heading::North);
        let mut h1 = EncoderHistory::new();
        let mut h2 = EncoderHistory::new();
        let a = enc.encode(&o, &mut h1).unwrap();
        let b = enc.encode(&o, &mut h2).unwrap();
        assert_eq!(a, b);
    }

    // Oracle: recompute both projections directly from the splitmix64
    // matrix definition, independent of GridEncoder::project.
    #[test]
    fn k1_single_cell_change_shifts_embedding() {
        let config = EncoderConfig {
            smoothing_window: 1,
            ..EncoderConfig::default()
        };
        let enc = GridEncoder::new(config).unwrap();
        let o1 = obs(all_empty(5), 5, Heading::North);
        let mut w2 = all_empty(5);
        w2[7] = Cell::Wall;
        let o2 = obs(w2.clone(), 5, Heading::North);

        let mut h = EncoderHistory::new();
        let e1 = enc.encode(&o1, &mut h).unwrap();
        h.reset();
        let e2 = enc.encode(&o2, &mut h).unwrap();

        let d = l1_distance(&e1, &e2).unwrap();
        assert!(d > 0.0, "single-cell change must move the embedding");

        // Explicit projection oracle.
        let feature_len = 5 * 5 * 4 + 4;
        let mut rng = SplitMix64::new(config.projection_seed);
        let matrix: Vec<f64> = (0..config.dimension * feature_len)
            .map(|_| SplitMix64::next_signed_unit(&mut rng))
            .collect();
        let project = |window: &[Cell], heading: Heading| -> Vec<f32> {
            (0..config.dimension)
                .map(|row| {
                    let base = row * feature_len;
                    let mut acc = 0.0f64;
                    for (j, c) in window.iter().enumerate() {
                        acc += (matrix[base + j * 4 + c.index()] as f32) as f64;
                    }
                    acc += (matrix[base + 100 + heading.index()] as f32) as f64;
                    acc as f32
                })
                .collect()
        };
        assert_eq!(e1.values(), project(&all_empty(5), Heading::North).as_slice());
        assert_eq!(e2.values(), project(&w2, Heading::North).as_slice());
    }

    #[test]
    fn constant_stream_smoothing_equals_single_projection() {
        let base = EncoderConfig::default();
        let enc_k3 = GridEncoder::new(EncoderConfig { smoothing_window: 3, ..base }).unwrap();
        let enc_k1 = GridEncoder::new(EncoderConfig { smoothing_window: 1, ..base }).unwrap();
        let o = obs(all_empty(5), 5, Heading::East);

        let mut h1 = EncoderHistory::new();
        let single = enc_k1.encode(&o, &mut h1).unwrap();

        let mut h3 = EncoderHistory::new();
        let mut last = enc_k3.encode(&o, &mut h3).unwrap();
        for _ in 0..5 {
            last = enc_k3.encode(&o, &mut h3).unwrap();
        }
        assert_eq!(last, single);
    }

    #[test]
    fn reset_restores_episode_start_behavior() {
        let enc = GridEncoder::new(EncoderConfig { smoothing_window: 3, ..Default::default() })
            .unwrap();
        let mut cells = all_empty(5);
        cells[0] = Cell::Wall;
        let o1 = obs(all_empty(5), 5, Heading::North);
        let o2 = obs(cells.clone(), 5, Heading::South);
        let o3 = obs(cells, 5, Heading::West);
        let o4 = obs(all_empty(5), 5, Heading::West);

        let mut h = EncoderHistory::new();
        enc.encode(&o1, &mut h).unwrap();
        enc.encode(&o2, &mut h).unwrap();
        enc.encode(&o3, &mut h).unwrap();
        h.reset();
        let after_reset = enc.encode(&o4, &mut h).unwrap();

        let mut fresh = EncoderHistory::new();
        let fresh_encode = enc.encode(&o4, &mut fresh).unwrap();
        assert_eq!(after_reset, fresh_encode);
    }

    #[test]
    fn history_is_bounded_by_k_minus_one() {
        let k = 4;
        let enc = GridEncoder::new(EncoderConfig { smoothing_window: k, ..Default::default() })
            .unwrap();
        let o = obs(all_empty(5), 5, Heading::North);
        let mut h = EncoderHistory::new();
        for _ in 0..20 {
            enc.encode(&o, &mut h).unwrap();
            assert!(h.len() <= k - 1);
        }
        assert_eq!(h.len(), k - 1);
    }

    #[test]
    fn window_mismatch_is_rejected() {
        let enc = GridEncoder::new(EncoderConfig::default()).unwrap();
        let o = obs(all_empty(3), 3, Heading::North);
        let err = enc.encode(&o, &mut EncoderHistory::new()).unwrap_err();
        assert_eq!(err, EncoderError::WindowMismatch { expected: 5, found: 3 });
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(GridEncoder::new(EncoderConfig { dimension: 0, ..Default::default() }).is_err());
        assert!(
            GridEncoder::new(EncoderConfig { smoothing_window: 0, ..Default::default() }).is_err()
        );
        assert!(GridEncoder::new(EncoderConfig { window_size: 4, ..Default::default() }).is_err());
    }
}
