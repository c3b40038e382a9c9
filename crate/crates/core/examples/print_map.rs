// scratch: print seed-5 map for hand simulation
use retrace::env::{GridConfig, GridWorld};
use retrace::encoder::Cell;
use retrace::env::Environment;

fn main() {
    let mut w = GridWorld::new(GridConfig::default()).unwrap();
    w.reset(5);
    let (ax, ay) = w.agent_position();
    println!("spawn: ({}, {}) heading {:?}", ax, ay, w.heading());
    for y in 0..15 {
        let mut line = String::new();
        for x in 0..15 {
            let ch = if (x, y) == (ax, ay) {
                '@'
            } else {
                match w.cell(x, y) {
                    Cell::Wall => '#',
                    Cell::Empty => '.',
                    Cell::Goal => 'G',
                    Cell::OutOfBounds => '?',
                }
            };
            line.push(ch);
        }
        println!("{:2} {}", y, line);
    }
}
