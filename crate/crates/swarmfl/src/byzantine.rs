//! Adversarial submission strategies. Byzantine robots follow the full
//! protocol — fees, quorum, chain participation — and deviate only in the
//! payload they submit:
//!
//! - **faulty** — uniform random weights in [-0.5, 0.5], the interval used
//!   when model weights are randomly initialized; models a broken sensor.
//! - **malicious** — replays the shared model from the previous aggregation
//!   round, slipping under the outlier threshold to slow training down.
//! - **smart** — forecasts the next shared model: adds, per weight, a random
//!   multiple of the mean absolute change between the last two shared
//!   models, aiming at the top of the ranking without doing any work.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contract::ContractState;
use crate::learner::{mean_abs_diff, WeightVector};

/// Robot behavior, fixed per robot for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzantineKind {
    Honest,
    Faulty,
    Malicious,
    Smart,
}

impl ByzantineKind {
    pub fn is_byzantine(self) -> bool {
        self != ByzantineKind::Honest
    }
}

/// Random model weights, i.i.d. uniform on [-0.5, 0.5].
pub fn faulty_weights(n_weights: usize, rng: &mut ChaCha8Rng) -> WeightVector {
    WeightVector((0..n_weights).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

/// The shared model from the previous aggregation round, as replayed on the
/// robot's own chain view (the genesis model before any aggregation).
pub fn malicious_weights(view: &ContractState) -> WeightVector {
    view.prev_shared_weights.clone()
}

/// Forecast of the next shared model: `w_i(t) + 2 r_i * delta`, with
/// `delta` the mean absolute difference between the current and previous
/// shared models and `r_i ~ U(0, 1)` regenerated for every weight.
pub fn smart_weights(
    shared: &WeightVector,
    prev_shared: &WeightVector,
    rng: &mut ChaCha8Rng,
) -> WeightVector {
    let delta = mean_abs_diff(shared.as_slice(), prev_shared.as_slice());
    WeightVector(
        shared
            .as_slice()
            .iter()
            .map(|&w| w + 2.0 * rng.gen::<f64>() * delta)
            .collect(),
    )
}

/// Sample count a smart robot claims: the median sample count of the last
/// aggregation round observable on its chain view, or a mid-range constant
/// before any round has completed.
pub fn smart_claimed_samples(view: &ContractState) -> u32 {
    if view.last_round_samples.is_empty() {
        return 20;
    }
    let mut counts = view.last_round_samples.clone();
    counts.sort_unstable();
    counts[counts.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractParams;
    use crate::rng::{self, Domain};

    #[test]
    fn faulty_weights_stay_in_interval() {
        let mut r = rng::stream(1, Domain::Faulty, 0);
        let mut sum = 0.0;
        let mut count = 0u64;
        for _ in 0..100 {
            let w = faulty_weights(10_000, &mut r);
            for &v in w.as_slice() {
                assert!((-0.5..=0.5).contains(&v));
                sum += v;
                count += 1;
            }
        }
        // Law of large numbers: mean of 1e6 draws within +-0.002 of zero.
        assert!((sum / count as f64).abs() < 0.002);
    }

    #[test]
    fn faulty_weights_are_seed_deterministic() {
        let a = faulty_weights(64, &mut rng::stream(9, Domain::Faulty, 3));
        let b = faulty_weights(64, &mut rng::stream(9, Domain::Faulty, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn malicious_replays_previous_round() {
        let params = ContractParams::standard(15, 3, true);
        let mut state = crate::contract::ContractState::genesis(
            params,
            WeightVector(vec![0.5, 0.5, 0.5]),
        );
        // Before any aggregation: genesis weights.
        assert_eq!(malicious_weights(&state).0, vec![0.5, 0.5, 0.5]);
        // One full round moves shared but leaves prev at genesis values.
        for robot in 0..7u16 {
            let w = vec![0.5 + 0.001 * (robot as f32 + 1.0); 3];
            state.submit_model(robot, &w, 1);
        }
        assert_eq!(state.round, 1);
        assert_eq!(malicious_weights(&state).0, vec![0.5, 0.5, 0.5]);
        // The replayed payload's outlier distance equals the shared-model drift.
        let payload = malicious_weights(&state);
        let d = crate::learner::distance(&payload, &state.shared_weights);
        let drift =
            crate::learner::distance(&state.prev_shared_weights, &state.shared_weights);
        assert_eq!(d, drift);
    }

    #[test]
    fn smart_weights_match_direct_arithmetic() {
        let shared = WeightVector(vec![0.2, 0.4]);
        let prev = WeightVector(vec![0.1, 0.5]);
        // delta = mean(|0.1|, |-0.1|) = 0.1, so outputs land in
        // [0.2, 0.4] x [0.4, 0.6] elementwise.
        let mut r = rng::stream(4, Domain::Smart, 0);
        for _ in 0..200 {
            let w = smart_weights(&shared, &prev, &mut r);
            assert!(w.0[0] >= 0.2 && w.0[0] <= 0.4 + 1e-12);
            assert!(w.0[1] >= 0.4 && w.0[1] <= 0.6 + 1e-12);
        }
    }

    #[test]
    fn smart_with_zero_drift_replays_current_model() {
        let shared = WeightVector(vec![0.3, -0.2, 0.7]);
        let mut r = rng::stream(5, Domain::Smart, 0);
        let w = smart_weights(&shared, &shared, &mut r);
        assert_eq!(w, shared);
    }

    #[test]
    fn smart_offset_mean_approaches_delta() {
        // E[2r] = 1, so the mean offset per coordinate approaches delta.
        let shared = WeightVector(vec![0.0; 50_000]);
        let prev = WeightVector(vec![-0.08; 50_000]);
        let delta = 0.08;
        let mut r = rng::stream(6, Domain::Smart, 0);
        let w = smart_weights(&shared, &prev, &mut r);
        let mean_offset: f64 = w.0.iter().sum::<f64>() / w.0.len() as f64;
        assert!(
            (mean_offset - delta).abs() / delta < 0.02,
            "mean offset {mean_offset} vs delta {delta}"
        );
    }

    #[test]
    fn smart_claimed_samples_is_on_chain_median() {
        let params = ContractParams::standard(15, 1, true);
        let mut state =
            crate::contract::ContractState::genesis(params, WeightVector(vec![0.0]));
        assert_eq!(smart_claimed_samples(&state), 20); // pre-round constant
        let counts = [31u32, 7, 12, 44, 9, 18, 25];
        for (robot, &n) in counts.iter().enumerate() {
            state.submit_model(robot as u16, &[0.001 * (robot as f32 + 1.0)], n);
        }
        assert_eq!(state.round, 1);
        let mut sorted = counts;
        sorted.sort_unstable();
        assert_eq!(smart_claimed_samples(&state), sorted[3]);
    }
}
