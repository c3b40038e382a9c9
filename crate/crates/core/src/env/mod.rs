//! Environment contract and the deterministic "find the goal room" task.
//!
//! Maps are carved mazes with a goal room placed at the BFS-farthest cell
//! from the spawn; generation is a pure function of the seed. The action
//! alphabet is `{forward, turn-left, turn-right, noop}` and walking into a
//! wall is a no-op move.

mod baseline;
mod expert;

pub use baseline::{KnnStepPolicy, RandomPolicy};
pub use expert::{generate_expert_demo, ExpertDemo};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Cell, Heading, Observation};
use crate::episode::EpisodeLog;
use crate::latent::Action;
use crate::rng::{mix_seed, SplitMix64};

pub const ACTION_FORWARD: Action = Action(0);
pub const ACTION_TURN_LEFT: Action = Action(1);
pub const ACTION_TURN_RIGHT: Action = Action(2);
pub const ACTION_NOOP: Action = Action(3);
pub const ACTION_ALPHABET_SIZE: u32 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown action id {0} (alphabet size {ACTION_ALPHABET_SIZE})")]
    UnknownAction(u32),
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error("no episode active; call reset first")]
    NotActive,
    #[error("no goal reachable from the spawn cell")]
    UnreachableGoal,
}

/// Anything the episode runner can drive.
pub trait Environment {
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: Action) -> Result<Observation, EnvError>;
    /// True iff the agent currently stands on a goal cell.
    fn in_goal(&self) -> bool;
    fn action_alphabet_size(&self) -> u32;
}

/// Episode success: at least K consecutive in-goal steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessCriterion {
    pub required_consecutive: u64,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self { required_consecutive: 5 }
    }
}

/// True iff some run of >= K consecutive steps has the in-goal flag set.
pub fn success_detector(log: &EpisodeLog, criterion: &SuccessCriterion) -> bool {
    let mut run = 0u64;
    for step in &log.steps {
        if step.in_goal {
            run += 1;
            if run >= criterion.required_consecutive {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    /// Observation window side length (odd).
    pub window_size: usize,
    /// Side length of the carved goal room.
    pub goal_room: usize,
    /// Probability of opening an extra wall at each dead end, which braids
    /// the maze with loops instead of leaving it a spanning tree.
    pub braid: f64,
    /// Probability that carving keeps its direction when it can, which
    /// stretches corridors into long halls.
    pub straightness: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 15,
            height: 15,
            window_size: 5,
            goal_room: 3,
            braid: 0.0,
            straightness: 0.0,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<(), EnvError> {
        if self.width < 5 || self.height < 5 || self.width % 2 == 0 || self.height % 2 == 0 {
            return Err(EnvError::InvalidConfig(
                "width and height must be odd and >= 5".into(),
            ));
        }
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(EnvError::InvalidConfig("window_size must be odd and >= 3".into()));
        }
        if self.goal_room == 0 {
            return Err(EnvError::InvalidConfig("goal_room must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.braid) {
            return Err(EnvError::InvalidConfig("braid must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// The deterministic maze task.
#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    cells: Vec<Cell>,
    agent: (usize, usize),
    heading: Heading,
    tick: u64,
    active: bool,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self {
            cells: vec![Cell::Wall; config.width * config.height],
            config,
            agent: (1, 1),
            heading: Heading::North,
            tick: 0,
            active: false,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn agent_position(&self) -> (usize, usize) {
        self.agent
    }

    pub fn heading(&self) -> Heading {
        self.heading
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.config.width + x]
    }

    fn set_cell(&mut self, x: usize, y: usize, c: Cell) {
        self.cells[y * self.config.width + x] = c;
    }

    fn is_walkable(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.config.width
            && (y as usize) < self.config.height
            && self.cell(x as usize, y as usize) != Cell::Wall
    }

    /// Carves the maze for `seed`: iterative depth-first backtracker over
    /// the odd-coordinate lattice, then a goal room at the BFS-farthest
    /// cell from the seeded spawn.
    fn generate(&mut self, seed: u64) {
        let (w, h) = (self.config.width, self.config.height);
        self.cells = vec![Cell::Wall; w * h];
        let mut rng = SplitMix64::new(mix_seed(seed, 0x6E0));

        let lattice_w = (w - 1) / 2;
        let lattice_h = (h - 1) / 2;
        let cell_of = |lx: usize, ly: usize| (2 * lx + 1, 2 * ly + 1);

        let start = (
            rng.next_below(lattice_w as u64) as usize,
            rng.next_below(lattice_h as u64) as usize,
        );
        let mut visited = vec![false; lattice_w * lattice_h];
        let mut stack = vec![start];
        visited[start.1 * lattice_w + start.0] = true;
        let (sx, sy) = cell_of(start.0, start.1);
        self.set_cell(sx, sy, Cell::Empty);

        while let Some(&(cx, cy)) = stack.last() {
            let mut neighbors = [(0i64, 0i64); 4];
            let mut n = 0;
            for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
                let nx = cx as i64 + dx;
                let ny = cy as i64 + dy;
                if nx >= 0
                    && ny >= 0
                    && (nx as usize) < lattice_w
                    && (ny as usize) < lattice_h
                    && !visited[ny as usize * lattice_w + nx as usize]
                {
                    neighbors[n] = (nx, ny);
                    n += 1;
                }
            }
            if n == 0 {
                stack.pop();
                continue;
            }
            let (nx, ny) = neighbors[rng.next_below(n as u64) as usize];
            let (nx, ny) = (nx as usize, ny as usize);
            visited[ny * lattice_w + nx] = true;
            let (ax, ay) = cell_of(cx, cy);
            let (bx, by) = cell_of(nx, ny);
            self.set_cell((ax + bx) / 2, (ay + by) / 2, Cell::Empty);
            self.set_cell(bx, by, Cell::Empty);
            stack.push((nx, ny));
        }

        // Braid: open an extra wall at dead ends so the maze has loops.
        if self.config.braid > 0.0 {
            for ly in 0..lattice_h {
                for lx in 0..lattice_w {
                    let (cx, cy) = cell_of(lx, ly);
                    let mut open = 0;
                    let mut closed: Vec<(usize, usize)> = Vec::with_capacity(4);
                    for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
                        let wx = cx as i64 + dx;
                        let wy = cy as i64 + dy;
                        let nx = cx as i64 + 2 * dx;
                        let ny = cy as i64 + 2 * dy;
                        if nx < 1 || ny < 1 || nx as usize >= w - 1 || ny as usize >= h - 1 {
                            continue;
                        }
                        if self.cell(wx as usize, wy as usize) == Cell::Wall {
                            closed.push((wx as usize, wy as usize));
                        } else {
                            open += 1;
                        }
                    }
                    if open == 1 && !closed.is_empty() && rng.next_bool(self.config.braid) {
                        let (wx, wy) = closed[rng.next_below(closed.len() as u64) as usize];
                        self.set_cell(wx, wy, Cell::Empty);
                    }
                }
            }
        }

        // Seeded spawn on the lattice.
        let spawn_lattice = (
            rng.next_below(lattice_w as u64) as usize,
            rng.next_below(lattice_h as u64) as usize,
        );
        let spawn = cell_of(spawn_lattice.0, spawn_lattice.1);

        // Goal room around the BFS-farthest cell from the spawn.
        let far = self
            .bfs_distances(spawn)
            .into_iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (i, d)))
            .max_by_key(|&(i, d)| (d, std::cmp::Reverse(i)))
            .map(|(i, _)| (i % w, i / w))
            .unwrap_or(spawn);
        let half = (self.config.goal_room - 1) / 2;
        let room_even = usize::from(self.config.goal_room % 2 == 0);
        for dy in 0..self.config.goal_room {
            for dx in 0..self.config.goal_room {
                let x = far.0 as i64 + dx as i64 - half as i64 - room_even as i64;
                let y = far.1 as i64 + dy as i64 - half as i64 - room_even as i64;
                if x >= 1 && y >= 1 && (x as usize) < w - 1 && (y as usize) < h - 1 {
                    self.set_cell(x as usize, y as usize, Cell::Goal);
                }
            }
        }

        self.agent = spawn;
        self.heading = Heading::from_index(rng.next_below(4) as usize);
        self.tick = 0;
        self.active = true;
    }

    /// BFS distances over walkable cells from `from`; `None` = unreachable.
    pub fn bfs_distances(&self, from: (usize, usize)) -> Vec<Option<u64>> {
        let w = self.config.width;
        let mut dist: Vec<Option<u64>> = vec![None; self.cells.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[from.1 * w + from.0] = Some(0);
        queue.push_back(from);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[y * w + x].unwrap();
            for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if self.is_walkable(nx, ny) {
                    let ni = ny as usize * w + nx as usize;
                    if dist[ni].is_none() {
                        dist[ni] = Some(d + 1);
                        queue.push_back((nx as usize, ny as usize));
                    }
                }
            }
        }
        dist
    }

    /// All goal cell coordinates of the current map.
    pub fn goal_cells(&self) -> Vec<(usize, usize)> {
        let w = self.config.width;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Goal)
            .map(|(i, _)| (i % w, i / w))
            .collect()
    }

    /// The observation the agent would see standing at `(x, y)` facing
    /// `heading`; `None` if the cell is not walkable.
    ///
    /// The window is egocentric: it is rotated so the heading points to the
    /// top row. Situations then match across compass directions, which is
    /// what the copied actions (forward/turn) mean anyway.
    pub fn observation_at(&self, x: usize, y: usize, heading: Heading) -> Option<Observation> {
        if !self.is_walkable(x as i64, y as i64) {
            return None;
        }
        let w = self.config.window_size;
        let half = (w / 2) as i64;
        // Ego offset -> world offset: undo `heading.index()` quarter turns.
        let unrotate = |mut ex: i64, mut ey: i64| -> (i64, i64) {
            for _ in 0..(4 - heading.index()) % 4 {
                let (nx, ny) = (ey, -ex);
                ex = nx;
                ey = ny;
            }
            (ex, ey)
        };
        let mut window = Vec::with_capacity(w * w);
        for ey in -half..=half {
            for ex in -half..=half {
                let (dx, dy) = unrotate(ex, ey);
                let cx = x as i64 + dx;
                let cy = y as i64 + dy;
                let cell = if cx >= 0
                    && cy >= 0
                    && (cx as usize) < self.config.width
                    && (cy as usize) < self.config.height
                {
                    self.cell(cx as usize, cy as usize)
                } else {
                    Cell::OutOfBounds
                };
                window.push(cell);
            }
        }
        Some(Observation {
            window,
            window_size: w,
            heading,
            tick: self.tick,
        })
    }

    fn observe(&self) -> Observation {
        self.observation_at(self.agent.0, self.agent.1, self.heading)
            .expect("agent stands on a walkable cell")
    }
}

impl Environment for GridWorld {
    fn reset(&mut self, seed: u64) -> Observation {
        self.generate(seed);
        self.observe()
    }

    fn step(&mut self, action: Action) -> Result<Observation, EnvError> {
        if !self.active {
            return Err(EnvError::NotActive);
        }
        match action {
            ACTION_FORWARD => {
                let (dx, dy) = self.heading.delta();
                let nx = self.agent.0 as i64 + dx;
                let ny = self.agent.1 as i64 + dy;
                if self.is_walkable(nx, ny) {
                    self.agent = (nx as usize, ny as usize);
                }
            }
            ACTION_TURN_LEFT => self.heading = self.heading.turned_left(),
            ACTION_TURN_RIGHT => self.heading = self.heading.turned_right(),
            ACTION_NOOP => {}
            Action(other) => return Err(EnvError::UnknownAction(other)),
        }
        self.tick += 1;
        Ok(self.observe())
    }

    fn in_goal(&self) -> bool {
        self.cell(self.agent.0, self.agent.1) == Cell::Goal
    }

    fn action_alphabet_size(&self) -> u32 {
        ACTION_ALPHABET_SIZE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::StepRecord;
    use proptest::prelude::*;

    fn world() -> GridWorld {
        GridWorld::new(GridConfig::default()).unwrap()
    }

    #[test]
    fn same_seed_reproduces_map_spawn_and_observation() {
        let mut a = world();
        let mut b = world();
        let oa = a.reset(1234);
        let ob = b.reset(1234);
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.agent_position(), b.agent_position());
        assert_eq!(a.heading(), b.heading());
        assert_eq!(oa, ob);
    }

    #[test]
    fn different_seeds_differ_in_at_least_one_cell() {
        let mut a = world();
        let mut b = world();
        a.reset(1001);
        b.reset(1002);
        assert_ne!(a.cells, b.cells);
    }

    #[test]
    fn every_map_reaches_a_goal_from_spawn() {
        // BFS oracle over a spread of seeds, including the default eval list.
        for seed in (0..50).chain(1001..=1020) {
            let mut w = world();
            w.reset(seed);
            let dist = w.bfs_distances(w.agent_position());
            let reachable_goal = w
                .goal_cells()
                .iter()
                .any(|&(x, y)| dist[y * w.config().width + x].is_some());
            assert!(reachable_goal, "seed {seed}");
        }
    }

    #[test]
    fn four_left_turns_restore_heading() {
        let mut w = world();
        w.reset(5);
        let start = w.heading();
        for _ in 0..4 {
            w.step(ACTION_TURN_LEFT).unwrap();
        }
        assert_eq!(w.heading(), start);
    }

    #[test]
    fn forward_into_wall_does_not_move() {
        let mut w = world();
        w.reset(5);
        // Spin until facing a wall, then push into it.
        for _ in 0..4 {
            let (dx, dy) = w.heading().delta();
            let nx = w.agent_position().0 as i64 + dx;
            let ny = w.agent_position().1 as i64 + dy;
            if !w.is_walkable(nx, ny) {
                let before = w.agent_position();
                w.step(ACTION_FORWARD).unwrap();
                assert_eq!(w.agent_position(), before);
                return;
            }
            w.step(ACTION_TURN_RIGHT).unwrap();
        }
        panic!("spawn cell with no adjacent wall in a corridor maze");
    }

    #[test]
    fn unknown_action_rejected() {
        let mut w = world();
        w.reset(5);
        assert_eq!(w.step(Action(4)), Err(EnvError::UnknownAction(4)));
    }

    #[test]
    fn step_before_reset_rejected() {
        let mut w = world();
        assert_eq!(w.step(ACTION_NOOP), Err(EnvError::NotActive));
    }

    // Hand-simulated trace on seed 5 (map drawn once, moves replayed on
    // paper). Spawn (7, 1) facing East; row 1 is open east to x=13, column
    // 11 is open down to y=4, and (12, 4) is a wall.
    #[test]
    fn scripted_sequence_matches_hand_simulated_trace() {
        let mut w = world();
        w.reset(5);
        assert_eq!(w.agent_position(), (7, 1));
        assert_eq!(w.heading(), Heading::East);

        let script = [
            (ACTION_FORWARD, (8, 1), Heading::East),
            (ACTION_FORWARD, (9, 1), Heading::East),
            (ACTION_FORWARD, (10, 1), Heading::East),
            (ACTION_FORWARD, (11, 1), Heading::East),
            (ACTION_TURN_RIGHT, (11, 1), Heading::South),
            (ACTION_FORWARD, (11, 2), Heading::South),
            (ACTION_FORWARD, (11, 3), Heading::South),
            (ACTION_FORWARD, (11, 4), Heading::South),
            (ACTION_TURN_LEFT, (11, 4), Heading::East),
            (ACTION_FORWARD, (11, 4), Heading::East), // wall at (12, 4): no move
        ];
        for (i, (action, pos, heading)) in script.iter().enumerate() {
            w.step(*action).unwrap();
            assert_eq!(w.agent_position(), *pos, "step {i}");
            assert_eq!(w.heading(), *heading, "step {i}");
        }
    }

    fn log_from_flags(flags: &[bool]) -> EpisodeLog {
        EpisodeLog {
            seed: 0,
            steps: flags
                .iter()
                .enumerate()
                .map(|(i, &in_goal)| StepRecord {
                    step: i as u64,
                    action: 3,
                    cursor: None,
                    dist: None,
                    reference_distance: None,
                    in_goal,
                    event: None,
                })
                .collect(),
        }
    }

    #[test]
    fn detector_finds_run_inside() {
        let log = log_from_flags(&[false, true, true, true, false]);
        assert!(success_detector(&log, &SuccessCriterion { required_consecutive: 3 }));
    }

    #[test]
    fn detector_rejects_broken_run() {
        let log = log_from_flags(&[true, true, false, true, true]);
        assert!(!success_detector(&log, &SuccessCriterion { required_consecutive: 3 }));
    }

    proptest! {
        // Oracle: run-length scan via string split.
        #[test]
        fn detector_matches_run_length_oracle(
            flags in proptest::collection::vec(any::<bool>(), 0..64),
            k in 1u64..8,
        ) {
            let log = log_from_flags(&flags);
            let got = success_detector(&log, &SuccessCriterion { required_consecutive: k });
            let encoded: String =
                flags.iter().map(|&b| if b { 'T' } else { 'f' }).collect();
            let want = encoded
                .split('f')
                .map(|run| run.len() as u64)
                .max()
                .unwrap_or(0)
                >= k;
            prop_assert_eq!(got, want);
        }
    }
}
