//! The three Byzantine payloads next to an honest submission, measured by
//! the contract's outlier metric (mean absolute deviation from the shared
//! model, threshold 0.05).
//!
//! ```bash
//! cargo run --release --example byzantine_strategies
//! ```

use swarmfl::byzantine;
use swarmfl::contract::{ContractParams, ContractState};
use swarmfl::harness::{validation_corpus, ExperimentConfig};
use swarmfl::learner::{self, ModelConfig, TrainConfig};
use swarmfl::rng::{self, Domain};

fn main() {
    let model = ModelConfig::default();
    let train = TrainConfig::default();
    let cfg = ExperimentConfig {
        validation_samples: 300,
        ..ExperimentConfig::default()
    };
    let data = validation_corpus(&cfg, 31).expect("training data");

    // Bootstrap a contract state through two honest aggregation rounds so
    // the smart and malicious strategies have history to exploit.
    let params = ContractParams::standard(15, model.n_weights(), true);
    let threshold = params.threshold;
    let mut state = ContractState::genesis(params, learner::init_weights(&model, 3));
    for round in 0..2u64 {
        for robot in 0..7u16 {
            let (w, n) = learner::train(
                &model,
                &train,
                &state.shared_weights,
                &data,
                rng::mix2(3, Domain::Train, robot as u64, round),
            );
            state.submit_model(robot, &w.to_f32(), n as u32);
        }
    }
    println!("contract after {} aggregation rounds", state.round);
    println!(
        "shared-model drift between rounds: {:.5}\n",
        learner::distance(&state.shared_weights, &state.prev_shared_weights)
    );

    let d = |w: &learner::WeightVector| learner::distance(w, &state.shared_weights);
    let verdict = |dist: f64| if dist <= threshold { "passes" } else { "REJECTED" };

    let (honest, _) = learner::train(
        &model,
        &train,
        &state.shared_weights,
        &data,
        rng::mix2(3, Domain::Train, 9, 2),
    );
    let dist = d(&honest);
    println!("honest retrained model:   d = {dist:.5}  {}", verdict(dist));

    let faulty = byzantine::faulty_weights(
        model.n_weights(),
        &mut rng::stream(3, Domain::Faulty, 0),
    );
    let dist = d(&faulty);
    println!("faulty (uniform noise):   d = {dist:.5}  {}", verdict(dist));

    let malicious = byzantine::malicious_weights(&state);
    let dist = d(&malicious);
    println!("malicious (old model):    d = {dist:.5}  {}", verdict(dist));

    let smart = byzantine::smart_weights(
        &state.shared_weights,
        &state.prev_shared_weights,
        &mut rng::stream(3, Domain::Smart, 0),
    );
    let dist = d(&smart);
    println!("smart (trend forecast):   d = {dist:.5}  {}", verdict(dist));
    println!(
        "\nsmart robots claim the previous round's median sample count: {}",
        byzantine::smart_claimed_samples(&state)
    );
    println!("outlier threshold: {threshold}");
}
