//! World simulation on its own: robots wander the arena avoiding obstacles
//! while recording each other's trajectories at 1 Hz.
//!
//! ```bash
//! cargo run --release --example arena_walk
//! ```

use swarmfl::arena::{LocalDataset, Recorder, WorldConfig, WorldState};
use swarmfl::netsim::ConnectivityGraph;

fn main() {
    let cfg = WorldConfig {
        duration: 300.0,
        rng_seed: 42,
        ..WorldConfig::default()
    };
    let mut world = WorldState::new(cfg.clone()).expect("world placement");
    let ticks = cfg.duration_ticks().unwrap();
    let tps = cfg.ticks_per_second();
    // 750 s expiration, in ticks.
    let mut datasets: Vec<LocalDataset> =
        (0..cfg.n_robots).map(|_| LocalDataset::new(7500)).collect();
    let mut recorders: Vec<Recorder> = (0..cfg.n_robots).map(|_| Recorder::new(10)).collect();

    println!("{} obstacles placed:", world.obstacles.len());
    for ob in &world.obstacles {
        println!("  {ob:?}");
    }

    let mut edge_accum = 0usize;
    let mut graph_count = 0usize;
    for tick in 1..=ticks {
        world.step();
        if tick % tps != 0 {
            continue;
        }
        let graph = ConnectivityGraph::build(&world.positions(), cfg.comm_range);
        edge_accum += graph.edges.len();
        graph_count += 1;
        for robot in 0..cfg.n_robots {
            let sensed = world.sense_neighbors(robot as u16);
            let own = world.poses[robot];
            let samples = recorders[robot].record(own, &sensed, tick);
            datasets[robot].samples.extend(samples);
        }
        if tick % (50 * tps) == 0 {
            let total: usize = datasets.iter().map(|d| d.len()).sum();
            println!(
                "t = {:4.0} s | edges now {:3} | total trajectory samples {}",
                tick as f64 * cfg.tick,
                graph.edges.len(),
                total
            );
        }
    }

    println!(
        "\nmean connectivity: {:.1} edges (complete graph would be 105)",
        edge_accum as f64 / graph_count as f64
    );
    for (robot, dataset) in datasets.iter_mut().enumerate().take(5) {
        let before = dataset.len();
        dataset.expire(ticks);
        println!(
            "robot {robot}: {before} samples collected, {} within the 750 s window",
            dataset.len()
        );
    }
    let sample = &datasets[0].samples[0];
    println!(
        "\nfirst sample of robot 0: subject {}, {} points, finished at {:.0} s",
        sample.subject,
        sample.positions.len(),
        sample.collected_at as f64 * cfg.tick
    );
}
