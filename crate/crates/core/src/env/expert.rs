//! Scripted expert: BFS shortest path to the nearest goal cell, optional
//! random two-step detours for trajectory diversity, then an in-goal dwell
//! long enough to satisfy the success criterion.

use crate::encoder::{Heading, Observation};
use crate::env::{
    EnvError, Environment, GridWorld, ACTION_FORWARD, ACTION_NOOP, ACTION_TURN_LEFT,
    ACTION_TURN_RIGHT,
};
use crate::latent::Action;
use crate::rng::{mix_seed, SplitMix64};

/// Salt for the detour RNG stream, so detours are independent of the
/// map-generation stream for the same seed.
const DETOUR_SALT: u64 = 0xDE_70;

/// A raw demonstration: per step, the observation seen, the action taken
/// there, and whether the agent stood in the goal region.
#[derive(Debug, Clone)]
pub struct ExpertDemo {
    pub seed: u64,
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub in_goal: Vec<bool>,
}

impl ExpertDemo {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Rotation actions taking `from` to `to` (0, 1 or 2 turns; the 180-degree
/// case resolves as two right turns).
fn turns_toward(from: Heading, to: Heading) -> Vec<Action> {
    match (to.index() + 4 - from.index()) % 4 {
        0 => vec![],
        1 => vec![ACTION_TURN_RIGHT],
        2 => vec![ACTION_TURN_RIGHT, ACTION_TURN_RIGHT],
        3 => vec![ACTION_TURN_LEFT],
        _ => unreachable!(),
    }
}

fn heading_toward(from: (usize, usize), to: (usize, usize)) -> Heading {
    let dx = to.0 as i64 - from.0 as i64;
    let dy = to.1 as i64 - from.1 as i64;
    match (dx, dy) {
        (0, -1) => Heading::North,
        (1, 0) => Heading::East,
        (0, 1) => Heading::South,
        (-1, 0) => Heading::West,
        _ => panic!("cells are not adjacent: {from:?} -> {to:?}"),
    }
}

struct DemoRecorder {
    world: GridWorld,
    observations: Vec<Observation>,
    actions: Vec<Action>,
    in_goal: Vec<bool>,
}

impl DemoRecorder {
    /// Records the pre-action observation and flag, then applies `action`.
    fn take(&mut self, action: Action) -> Result<(), EnvError> {
        self.observations.push(
            self.world
                .observation_at(
                    self.world.agent_position().0,
                    self.world.agent_position().1,
                    self.world.heading(),
                )
                .expect("agent on walkable cell"),
        );
        self.in_goal.push(self.world.in_goal());
        self.actions.push(action);
        self.world.step(action)?;
        Ok(())
    }

    /// Turns to face `target` (an adjacent cell) and walks into it.
    fn walk_to(&mut self, target: (usize, usize)) -> Result<(), EnvError> {
        let want = heading_toward(self.world.agent_position(), target);
        for turn in turns_toward(self.world.heading(), want) {
            self.take(turn)?;
        }
        self.take(ACTION_FORWARD)?;
        debug_assert_eq!(self.world.agent_position(), target);
        Ok(())
    }
}

/// Shortest path (list of cells, spawn first) to the nearest goal cell.
fn path_to_nearest_goal(world: &GridWorld) -> Result<Vec<(usize, usize)>, EnvError> {
    let w = world.config().width;
    let spawn = world.agent_position();
    let dist = world.bfs_distances(spawn);
    let target = world
        .goal_cells()
        .into_iter()
        .filter_map(|(x, y)| dist[y * w + x].map(|d| (d, y * w + x)))
        .min()
        .map(|(_, i)| (i % w, i / w))
        .ok_or(EnvError::UnreachableGoal)?;

    // Walk the BFS gradient backwards from the target.
    let mut path = vec![target];
    let mut cur = target;
    while cur != spawn {
        let d = dist[cur.1 * w + cur.0].unwrap();
        let mut stepped = false;
        for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
            let nx = cur.0 as i64 + dx;
            let ny = cur.1 as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < world.config().height {
                let ni = ny as usize * w + nx as usize;
                if dist[ni] == Some(d - 1) {
                    cur = (nx as usize, ny as usize);
                    path.push(cur);
                    stepped = true;
                    break;
                }
            }
        }
        debug_assert!(stepped, "BFS gradient must descend to the spawn");
    }
    path.reverse();
    Ok(path)
}

/// Generates one demonstration on the map for `seed`.
///
/// The expert follows the BFS shortest path to the nearest goal cell; with
/// probability `detour_probability` before each planned move it inserts a
/// two-step detour (walk into a free neighbor off the path, walk back).
/// After arrival it dwells in place for `dwell_steps` noops, which makes
/// every demonstration satisfy the success criterion for K <= dwell_steps.
pub fn generate_expert_demo(
    world: &mut GridWorld,
    seed: u64,
    detour_probability: f64,
    dwell_steps: u64,
) -> Result<ExpertDemo, EnvError> {
    if !(0.0..1.0).contains(&detour_probability) {
        return Err(EnvError::InvalidConfig(
            "detour_probability must be in [0, 1)".into(),
        ));
    }
    world.reset(seed);
    let path = path_to_nearest_goal(world)?;
    let mut rng = SplitMix64::new(mix_seed(seed, DETOUR_SALT));
    let mut rec = DemoRecorder {
        world: world.clone(),
        observations: Vec::new(),
        actions: Vec::new(),
        in_goal: Vec::new(),
    };

    for step in 1..path.len() {
        let here = path[step - 1];
        debug_assert_eq!(rec.world.agent_position(), here);
        if rng.next_bool(detour_probability) {
            // Free neighbors other than the planned next cell, in N/E/S/W order.
            let mut options: Vec<(usize, usize)> = Vec::with_capacity(3);
            for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
                let nx = here.0 as i64 + dx;
                let ny = here.1 as i64 + dy;
                if rec.world.is_walkable(nx, ny) {
                    let cell = (nx as usize, ny as usize);
                    if cell != path[step] {
                        options.push(cell);
                    }
                }
            }
            if !options.is_empty() {
                let detour = options[rng.next_below(options.len() as u64) as usize];
                rec.walk_to(detour)?;
                rec.walk_to(here)?;
            }
        }
        rec.walk_to(path[step])?;
    }

    debug_assert!(rec.world.in_goal(), "path must end on a goal cell");
    for _ in 0..dwell_steps {
        rec.take(ACTION_NOOP)?;
    }

    Ok(ExpertDemo {
        seed,
        observations: rec.observations,
        actions: rec.actions,
        in_goal: rec.in_goal,
    })
}
