//! One secured aggregation round, step by step: fee transfers, an outlier
//! rejection, a duplicate rejection, quorum, ranking, and payouts.
//!
//! ```bash
//! cargo run --release --example contract_round
//! ```

use swarmfl::contract::{ContractEvent, ContractParams, ContractState};
use swarmfl::learner::WeightVector;

fn main() {
    let n_robots = 15;
    let model_size = 16;
    let params = ContractParams::standard(n_robots, model_size, true);
    println!(
        "quorum {}, fee {}, threshold {}, reward weights {:?}",
        params.quorum, params.fee, params.threshold, params.reward_weights
    );
    let mut state = ContractState::genesis(params, WeightVector::zeros(model_size));

    let submit = |state: &mut ContractState, robot: u16, offset: f32, n_samples: u32| {
        let weights = vec![offset; model_size];
        for event in state.submit_model(robot, &weights, n_samples) {
            match event {
                ContractEvent::Accepted {
                    robot,
                    distance,
                    n_samples,
                    pending,
                } => println!(
                    "  robot {robot:2} accepted  d={distance:.4} n={n_samples:3} pending={pending}"
                ),
                ContractEvent::Rejected {
                    robot,
                    reason,
                    distance,
                } => println!(
                    "  robot {robot:2} rejected  {:?} d={:?}",
                    reason,
                    distance.map(|d| (d * 1e4).round() / 1e4)
                ),
                ContractEvent::Aggregated {
                    round,
                    ranking,
                    payouts,
                    pool_distributed,
                } => {
                    println!("\n== aggregation round {round}: pool {pool_distributed} ==");
                    println!("  rank  robot  samples  distance   payout");
                    for (rank, ((robot, n, d), (_, amount))) in
                        ranking.iter().zip(payouts.iter()).enumerate()
                    {
                        println!(
                            "  {:>4}  {robot:5}  {n:7}  {d:.6}  {amount:+.3}",
                            rank + 1
                        );
                    }
                }
            }
        }
    };

    println!("\nan outlier pays its fee and is excluded:");
    submit(&mut state, 14, 0.3, 12);

    println!("\na duplicate pays nothing (fee refunded):");
    submit(&mut state, 3, 0.004, 20);
    submit(&mut state, 3, 0.0041, 20);

    println!("\nsix more distinct submissions complete the quorum of 7:");
    let offsets = [0.010, 0.012, 0.013, 0.020, 0.001, 0.015];
    let samples = [40, 10, 10, 10, 25, 30];
    for (i, (&offset, &n)) in offsets.iter().zip(samples.iter()).enumerate() {
        submit(&mut state, i as u16 + 4, offset, n);
    }

    println!("\nbalances after the round (started at 21):");
    for (robot, balance) in state.balances.iter().enumerate() {
        if (balance - 21.0).abs() > 1e-12 {
            println!("  robot {robot:2}: {balance:.3} ({:+.3})", balance - 21.0);
        }
    }
    println!(
        "total tokens (balances + pool): {} — conserved",
        state.total_tokens()
    );
}
