//! A complete (shortened) experiment: 15 robots, blockchain, contract,
//! training, and two malicious Byzantine robots — printing every metrics
//! row the canonical chain produces.
//!
//! ```bash
//! cargo run --release --example full_experiment
//! ```

use swarmfl::byzantine::ByzantineKind;
use swarmfl::harness::{self, ExperimentConfig};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.world.duration = 1000.0;
    cfg.security = true;
    cfg.byzantine_kind = ByzantineKind::Malicious;
    cfg.byzantine_count = 2;

    println!(
        "running {} s, {} robots ({} malicious), security {}",
        cfg.world.duration, cfg.world.n_robots, cfg.byzantine_count, cfg.security
    );
    let started = std::time::Instant::now();
    let output = harness::run(&cfg, 11).expect("run");
    println!("finished in {:.1?}\n", started.elapsed());

    println!("   time  round     loss   tokens(honest)  tokens(byz)   chain KB");
    for row in &output.metrics {
        println!(
            "  {:5.0}  {:5}  {:.5}      {:+9.3}    {:+9.3}   {:8.1}",
            row.sim_time,
            row.round,
            row.average_loss,
            row.tokens_honest,
            row.tokens_byz,
            row.chain_bytes as f64 / 1000.0
        );
    }

    let summary = output.summary();
    println!("\nsummary:");
    println!("  aggregations:          {}", summary.aggregations);
    println!("  final average loss:    {:.6}", summary.final_loss);
    println!("  shared model loss:     {:.6}", summary.shared_model_loss);
    println!("  honest mean gain:      {:+.3} tokens", summary.tokens_honest);
    println!("  byzantine mean gain:   {:+.3} tokens", summary.tokens_byz);
    println!(
        "  chain storage:         {:.2} MB over {} submissions ({:.1} KB each)",
        summary.chain_bytes as f64 / 1e6,
        summary.submit_tx_count,
        summary.bytes_per_submission / 1000.0
    );
    println!("  final head:            {}", output.final_head);
    println!("  invariants:            all ok = {}", output.audit.all_ok());
}
