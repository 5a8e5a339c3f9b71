//! Local training in isolation: collect trajectories from a simulated
//! world, train the recurrent predictor, and watch the validation loss
//! drop below the zero-predictor baseline.
//!
//! ```bash
//! cargo run --release --example train_trajectories
//! ```

use swarmfl::harness::{validation_corpus, ExperimentConfig};
use swarmfl::learner::{self, ModelConfig, TrainConfig, WeightVector};

fn main() {
    let model = ModelConfig::default();
    let train = TrainConfig::default();
    println!(
        "model: {} trainable weights (hidden {}), horizons {}+{}",
        model.n_weights(),
        model.hidden_dim,
        model.input_horizon,
        model.target_horizon
    );

    // Two disjoint corpora from differently seeded worlds.
    let cfg = ExperimentConfig {
        validation_samples: 400,
        ..ExperimentConfig::default()
    };
    let train_data = validation_corpus(&cfg, 100).expect("training corpus");
    let validation = validation_corpus(&cfg, 200).expect("validation corpus");
    println!(
        "corpora: {} training samples, {} validation samples",
        train_data.len(),
        validation.len()
    );

    let zero = WeightVector::zeros(model.n_weights());
    println!(
        "\nzero-predictor validation MSE: {:.6} (mean square displacement)",
        learner::loss(&model, &zero, &validation)
    );

    let mut weights = learner::init_weights(&model, 7);
    println!(
        "initialized model validation MSE: {:.6}",
        learner::loss(&model, &weights, &validation)
    );

    for round in 1..=5 {
        let (next, n) = learner::train(&model, &train, &weights, &train_data, round);
        let drift = learner::distance(&next, &weights);
        weights = next;
        println!(
            "after training round {round} ({n} samples, {} epochs): \
             validation MSE {:.6}, weight drift {:.5}",
            train.epochs,
            learner::loss(&model, &weights, &validation),
            drift
        );
    }

    // Show one prediction next to its target.
    let sample = &validation[0];
    let predicted = learner::forward(&model, &weights, &sample.input);
    println!("\nsample prediction (displacements in meters):");
    for (step, (p, t)) in predicted
        .chunks(2)
        .zip(sample.target.chunks(2))
        .enumerate()
    {
        println!(
            "  step {step}: predicted ({:+.4}, {:+.4})  actual ({:+.4}, {:+.4})",
            p[0], p[1], t[0], t[1]
        );
    }
}
