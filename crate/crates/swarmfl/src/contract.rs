//! The smart-contract state machine.
//!
//! Every chain node derives the contract state by replaying transactions in
//! chain order, so all transitions here are pure: no clock, no randomness,
//! no I/O. A model submission runs through (with security enabled):
//!
//! 1. fee gate — the sender must hold at least the 5-token fee, which is
//!    transferred to the round's reward pool;
//! 2. outlier rejection — submissions whose mean absolute deviation from the
//!    current shared model exceeds the threshold are discarded and the fee
//!    stays in the pool;
//! 3. duplicate rejection — one submission per robot per round, fee refunded;
//! 4. quorum — once the configured number of submissions is pending, the
//!    contract aggregates them (sample-weighted FedAvg), ranks them around
//!    the median distance, and redistributes the pool.
//!
//! All rejection paths are defined-state no-ops recorded as events; the
//! chain never stalls on contract-level failures.

use serde::{Deserialize, Serialize};

use crate::learner::{mean_abs_diff, WeightVector};

pub type RobotId = u16;

/// Genesis parameters of the contract. Fixed for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractParams {
    pub n_robots: usize,
    /// Expected weight-vector length; submissions of any other length are
    /// rejected as malformed.
    pub model_size: usize,
    /// Submissions needed to trigger an aggregation round.
    pub quorum: usize,
    /// Tokens transferred per submission when security is on.
    pub fee: f64,
    /// Outlier threshold on the mean absolute deviation from the shared model.
    pub threshold: f64,
    /// Per-rank reward weights; positive entries form the rewarded group,
    /// negative entries the penalized group. Length must equal `quorum`.
    pub reward_weights: Vec<f64>,
    /// Starting balance per robot.
    pub initial_tokens: f64,
    pub security: bool,
}

impl ContractParams {
    /// Paper-default parameters for a swarm of `n_robots`.
    pub fn standard(n_robots: usize, model_size: usize, security: bool) -> Self {
        Self::with_quorum_fraction(n_robots, model_size, security, 0.5)
    }

    /// Quorum = max(floor(q * n_robots), 1); reward weights +1 for all but
    /// the two worst ranks (single +1 when the quorum is too small to
    /// penalize anyone).
    pub fn with_quorum_fraction(
        n_robots: usize,
        model_size: usize,
        security: bool,
        quorum_fraction: f64,
    ) -> Self {
        let quorum = ((quorum_fraction * n_robots as f64).floor() as usize).max(1);
        let penalized = if quorum >= 3 { 2 } else { 0 };
        let mut reward_weights = vec![1.0; quorum - penalized];
        reward_weights.extend(std::iter::repeat(-1.0).take(penalized));
        ContractParams {
            n_robots,
            model_size,
            quorum,
            fee: 5.0,
            threshold: 0.05,
            reward_weights,
            initial_tokens: 21.0,
            security,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.quorum == 0 || self.quorum > self.n_robots {
            return Err(crate::Error::Config(format!(
                "quorum {} out of range for {} robots",
                self.quorum, self.n_robots
            )));
        }
        if self.reward_weights.len() != self.quorum {
            return Err(crate::Error::Config(
                "reward weights length must equal the quorum".into(),
            ));
        }
        if !self.reward_weights.iter().any(|&k| k > 0.0) {
            return Err(crate::Error::Config(
                "reward weights need at least one positive entry".into(),
            ));
        }
        Ok(())
    }
}

/// A submission accepted into the current round.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedSubmission {
    pub robot: RobotId,
    pub weights: WeightVector,
    pub n_samples: u32,
    /// Mean absolute deviation from the shared model at submission time.
    pub distance: f64,
    /// Position in chain order within the round; ranking tie-breaker.
    pub arrival_index: usize,
}

/// Replayable contract state. A pure function of the chain prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractState {
    pub params: ContractParams,
    pub round: u64,
    pub shared_weights: WeightVector,
    pub prev_shared_weights: WeightVector,
    pub pending: Vec<AcceptedSubmission>,
    pub balances: Vec<f64>,
    pub pool: f64,
    /// Sample counts of the most recent aggregation round, in rank order.
    pub last_round_samples: Vec<u32>,
    /// Total SubmitModel transactions processed (accepted or rejected).
    pub submissions_seen: u64,
}

/// Why a submission was discarded. All rejections leave the state defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedWeights,
    ZeroSamples,
    InsufficientTokens,
    Outlier,
    DuplicateInRound,
}

/// Events emitted while applying transactions; derived data only, never fed
/// back into the state.
#[derive(Debug, Clone, PartialEq)]
pub enum ContractEvent {
    Accepted {
        robot: RobotId,
        distance: f64,
        n_samples: u32,
        pending: usize,
    },
    Rejected {
        robot: RobotId,
        reason: RejectReason,
        distance: Option<f64>,
    },
    Aggregated {
        round: u64,
        /// `(robot, n_samples, distance)` in rank order, best first.
        ranking: Vec<(RobotId, u32, f64)>,
        /// `(robot, amount)` in rank order; empty when security is off.
        payouts: Vec<(RobotId, f64)>,
        pool_distributed: f64,
    },
}

impl ContractState {
    pub fn genesis(params: ContractParams, initial_weights: WeightVector) -> Self {
        assert_eq!(initial_weights.len(), params.model_size);
        let balances = vec![params.initial_tokens; params.n_robots];
        ContractState {
            params,
            round: 0,
            prev_shared_weights: initial_weights.clone(),
            shared_weights: initial_weights,
            pending: Vec::new(),
            balances: balances.clone(),
            pool: 0.0,
            last_round_samples: Vec::new(),
            submissions_seen: 0,
        }
    }

    /// Read interface: current round and shared model.
    pub fn get_model(&self) -> (u64, &WeightVector) {
        (self.round, &self.shared_weights)
    }

    /// Sum of balances plus pool; constant under security when no tokens
    /// leave the system.
    pub fn total_tokens(&self) -> f64 {
        self.balances.iter().sum::<f64>() + self.pool
    }

    /// Applies a SubmitModel transaction. Weights arrive in wire precision
    /// (32-bit); all arithmetic runs in f64 on the dequantized values.
    pub fn submit_model(
        &mut self,
        sender: RobotId,
        weights_f32: &[f32],
        n_samples: u32,
    ) -> Vec<ContractEvent> {
        self.submissions_seen += 1;
        let mut events = Vec::new();
        let sender_idx = sender as usize;
        if sender_idx >= self.params.n_robots || weights_f32.len() != self.params.model_size {
            events.push(ContractEvent::Rejected {
                robot: sender,
                reason: RejectReason::MalformedWeights,
                distance: None,
            });
            return events;
        }
        if n_samples == 0 {
            events.push(ContractEvent::Rejected {
                robot: sender,
                reason: RejectReason::ZeroSamples,
                distance: None,
            });
            return events;
        }

        let weights = WeightVector::from_f32(weights_f32);
        let distance = mean_abs_diff(weights.as_slice(), self.shared_weights.as_slice());

        if self.params.security {
            if self.balances[sender_idx] < self.params.fee {
                events.push(ContractEvent::Rejected {
                    robot: sender,
                    reason: RejectReason::InsufficientTokens,
                    distance: Some(distance),
                });
                return events;
            }
            self.balances[sender_idx] -= self.params.fee;
            self.pool += self.params.fee;

            if distance > self.params.threshold {
                // Fee stays in the pool.
                events.push(ContractEvent::Rejected {
                    robot: sender,
                    reason: RejectReason::Outlier,
                    distance: Some(distance),
                });
                return events;
            }
            if self.pending.iter().any(|s| s.robot == sender) {
                // Protocol error, not an attack: refund the fee.
                self.balances[sender_idx] += self.params.fee;
                self.pool -= self.params.fee;
                events.push(ContractEvent::Rejected {
                    robot: sender,
                    reason: RejectReason::DuplicateInRound,
                    distance: Some(distance),
                });
                return events;
            }
        } else if self.pending.iter().any(|s| s.robot == sender) {
            events.push(ContractEvent::Rejected {
                robot: sender,
                reason: RejectReason::DuplicateInRound,
                distance: Some(distance),
            });
            return events;
        }

        let arrival_index = self.pending.len();
        self.pending.push(AcceptedSubmission {
            robot: sender,
            weights,
            n_samples,
            distance,
            arrival_index,
        });
        events.push(ContractEvent::Accepted {
            robot: sender,
            distance,
            n_samples,
            pending: self.pending.len(),
        });

        if self.pending.len() == self.params.quorum {
            events.push(self.run_aggregation());
        }
        events
    }

    /// Aggregation + ranking + payout, executed atomically at quorum.
    fn run_aggregation(&mut self) -> ContractEvent {
        let pending = std::mem::take(&mut self.pending);
        let new_shared = aggregate(&pending, self.params.model_size);
        let order = rank(&pending);

        let ranking: Vec<(RobotId, u32, f64)> = order
            .iter()
            .map(|&i| (pending[i].robot, pending[i].n_samples, pending[i].distance))
            .collect();
        self.last_round_samples = ranking.iter().map(|&(_, n, _)| n).collect();

        let mut payouts = Vec::new();
        let mut pool_distributed = 0.0;
        if self.params.security {
            pool_distributed = self.pool;
            let samples: Vec<f64> = ranking.iter().map(|&(_, n, _)| n as f64).collect();
            let amounts = payout(&self.params.reward_weights, &samples, self.pool, self.params.fee);
            for (&(robot, _, _), amount) in ranking.iter().zip(amounts.iter()) {
                self.balances[robot as usize] += amount;
                payouts.push((robot, *amount));
            }
            self.pool = 0.0;
        }

        self.prev_shared_weights =
            std::mem::replace(&mut self.shared_weights, new_shared);
        self.round += 1;
        ContractEvent::Aggregated {
            round: self.round,
            ranking,
            payouts,
            pool_distributed,
        }
    }
}

/// Sample-weighted elementwise average of the pending submissions.
pub fn aggregate(pending: &[AcceptedSubmission], model_size: usize) -> WeightVector {
    assert!(!pending.is_empty());
    let total: f64 = pending.iter().map(|s| s.n_samples as f64).sum();
    assert!(total > 0.0);
    let mut out = vec![0.0; model_size];
    for sub in pending {
        let w = sub.n_samples as f64;
        for (o, v) in out.iter_mut().zip(sub.weights.as_slice()) {
            *o += w * v;
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    WeightVector(out)
}

/// Rank order (indices into `pending`, best first): the submission whose
/// distance is the median ranks first; the rest sort by absolute difference
/// from the median distance, ties broken by earlier arrival.
pub fn rank(pending: &[AcceptedSubmission]) -> Vec<usize> {
    assert!(!pending.is_empty());
    let mut distances: Vec<f64> = pending.iter().map(|s| s.distance).collect();
    distances.sort_by(f64::total_cmp);
    let median = distances[distances.len() / 2];
    let mut order: Vec<usize> = (0..pending.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (pending[a].distance - median).abs();
        let db = (pending[b].distance - median).abs();
        da.total_cmp(&db)
            .then(pending[a].arrival_index.cmp(&pending[b].arrival_index))
    });
    order
}

/// Token payouts in rank order. `reward_weights[i]` applies to rank `i`;
/// `samples[i]` is that submission's sample count. Any pool beyond
/// `quorum * fee` (fees forfeited by rejected outliers this round) is split
/// among the rewarded group proportionally to `k_i * s_i`. The returned
/// amounts sum to `pool` exactly up to rounding.
///
/// The rewarded/penalized case formula conserves the pool only when a
/// penalized group exists; with positive-only reward weights (quorums too
/// small to penalize anyone) the pool is split purely proportionally.
pub fn payout(reward_weights: &[f64], samples: &[f64], pool: f64, fee: f64) -> Vec<f64> {
    assert_eq!(reward_weights.len(), samples.len());
    let base = fee * reward_weights.len() as f64;
    assert!(pool >= base - 1e-9, "pool {pool} below base payout {base}");
    let surplus = (pool - base).max(0.0);

    let rewarded_sum: f64 = reward_weights
        .iter()
        .zip(samples)
        .filter(|(k, _)| **k > 0.0)
        .map(|(k, s)| k * s)
        .sum();
    let penalized_sum: f64 = reward_weights
        .iter()
        .zip(samples)
        .filter(|(k, _)| **k < 0.0)
        .map(|(k, s)| k * s)
        .sum();

    if penalized_sum == 0.0 {
        return reward_weights
            .iter()
            .zip(samples)
            .map(|(&k, &s)| pool * (k * s / rewarded_sum))
            .collect();
    }

    reward_weights
        .iter()
        .zip(samples)
        .map(|(&k, &s)| {
            if k > 0.0 {
                let share = k * s / rewarded_sum;
                (1.0 + share) * fee + surplus * share
            } else {
                (1.0 - k * s / penalized_sum) * fee
            }
        })
        .collect()
}
