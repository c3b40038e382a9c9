// Scratch harness for tuning task/encoder defaults: scans parameter
// combinations and reports success rates plus reach diagnostics.

use retrace::encoder::{EncoderConfig, GridEncoder};
use retrace::env::{GridConfig, SuccessCriterion};
use retrace::eval::{run_suite, PolicyKind};
use retrace::index::Index;
use retrace::latent::Dataset;
use retrace::policy::PolicyConfig;
use retrace::rng::mix_seed;

fn build(
    grid: GridConfig,
    enc: EncoderConfig,
    demos: u32,
    base_seed: u64,
    p: f64,
    dwell: u64,
) -> (Index, GridEncoder) {
    let encoder = GridEncoder::new(enc).unwrap();
    let mut trajectories = Vec::new();
    for i in 0..demos {
        let mut world = retrace::env::GridWorld::new(grid).unwrap();
        let demo =
            retrace::env::generate_expert_demo(&mut world, mix_seed(base_seed, i as u64), p, dwell)
                .unwrap();
        let mut history = retrace::encoder::EncoderHistory::new();
        let frames = demo
            .observations
            .iter()
            .zip(&demo.actions)
            .map(|(obs, &action)| retrace::latent::Frame {
                embedding: encoder.encode(obs, &mut history).unwrap(),
                action,
            })
            .collect();
        trajectories.push(retrace::latent::Trajectory { id: i, frames });
    }
    let ds = Dataset {
        dimension: encoder.dimension(),
        action_alphabet_size: retrace::env::ACTION_ALPHABET_SIZE,
        trajectories,
    };
    (Index::build(ds).unwrap(), encoder)
}

struct Case {
    size: usize,
    win: usize,
    k: usize,
    braid: f64,
    room: usize,
    dim: usize,
    p: f64,
    steps: u64,
}

fn main() {
    let seeds: Vec<u64> = (1001..=1020).collect();
    let crit = SuccessCriterion { required_consecutive: 5 };
    let dwell: u64 = 5;

    let mut cases = Vec::new();
    for &(size, braid, room, p, steps) in &[
        (15usize, 0.4f64, 5usize, 0.2f64, 200u64),
        (15, 0.4, 5, 0.2, 300),
        (15, 0.4, 5, 0.2, 400),
        (15, 0.4, 5, 0.1, 300),
        (15, 0.2, 5, 0.2, 300),
        (15, 0.0, 5, 0.1, 300),
        (17, 0.0, 5, 0.1, 300),
        (17, 0.0, 5, 0.2, 300),
        (17, 0.4, 5, 0.2, 300),
        (17, 0.0, 7, 0.1, 300),
        (17, 0.0, 7, 0.2, 300),
        (17, 0.4, 7, 0.2, 300),
        (17, 0.4, 7, 0.2, 400),
    ] {
        cases.push(Case { size, win: 5, k: 4, braid, room, dim: 128, p, steps });
    }

    println!("size win k braid room dim  p  steps |   zip   knn  rand | reach newt");
    for c in &cases {
        let grid = GridConfig {
            width: c.size,
            height: c.size,
            window_size: c.win,
            goal_room: c.room,
            braid: c.braid,
        };
        let enc = EncoderConfig {
            dimension: c.dim,
            smoothing_window: c.k,
            window_size: c.win,
            ..Default::default()
        };
        let steps = c.steps;
        let (index, encoder) = build(grid, enc, 100, 424242, c.p, dwell);
        let mut means = Vec::new();
        let mut reach = 0.0;
        let mut new_tuple_frac = 0.0;
        for kind in [PolicyKind::Zip, PolicyKind::KnnStep, PolicyKind::Random] {
            let (report, logs) = run_suite(
                &index,
                &encoder,
                grid,
                kind,
                PolicyConfig::default(),
                &seeds,
                3,
                steps,
                crit,
            )
            .unwrap();
            if kind == PolicyKind::Zip {
                let touched = logs
                    .iter()
                    .filter(|(_, _, log)| log.steps.iter().any(|s| s.in_goal))
                    .count();
                reach = 100.0 * touched as f64 / logs.len() as f64;
                // Step index of the last novel (cursor, dist) tuple, as a
                // fraction of the episode: low values mean early cycling.
                let mut fracs = Vec::new();
                for (_, _, log) in &logs {
                    let mut seen = std::collections::HashSet::new();
                    let mut last_new = 0u64;
                    for s in &log.steps {
                        let key = (s.cursor, s.dist.map(f64::to_bits));
                        if seen.insert(key) {
                            last_new = s.step;
                        }
                    }
                    fracs.push(last_new as f64 / steps as f64);
                }
                fracs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                new_tuple_frac = fracs[fracs.len() / 2];
            }
            means.push(report.mean);
        }
        println!(
            "{:4} {:3} {:1} {:5.2} {:4} {:3} {:4.2} {:4} | {:5.1} {:5.1} {:5.1} | {reach:5.1} {new_tuple_frac:4.2}",
            c.size, c.win, c.k, c.braid, c.room, c.dim, c.p, c.steps, means[0], means[1], means[2]
        );
    }
}
