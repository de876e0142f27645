//! Feedback policies and the outcome-keyed basic controller.

use std::sync::Arc;

use crate::channels::{ControlFamily, QUTRIT};
use crate::dynamics::{ObservationMode, RngStream};
use crate::error::{Error, Result};
use crate::qcore::DensityOperator;
use crate::rl::{encode_observation, ActorCritic, RecurrentState};

#[derive(Clone, Debug)]
pub enum Observation {
    FullState(DensityOperator),
    OutcomePair { last_outcome: usize, last_beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    FullState,
    OutcomePair,
}

impl ObservationKind {
    pub fn name(self) -> &'static str {
        match self {
            ObservationKind::FullState => "full-state",
            ObservationKind::OutcomePair => "outcome-pair",
        }
    }
}

impl Observation {
    pub fn kind(&self) -> ObservationKind {
        match self {
            Observation::FullState(_) => ObservationKind::FullState,
            Observation::OutcomePair { .. } => ObservationKind::OutcomePair,
        }
    }
}

/// A control `β ∈ [-1, 1]` plus the stop flag used by measurement-only
/// agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlAction {
    beta: f64,
    stop: bool,
}

impl ControlAction {
    pub fn new(beta: f64, stop: bool) -> Result<Self> {
        ControlFamily::check_beta(beta)?;
        Ok(Self { beta, stop })
    }

    pub fn control(beta: f64) -> Result<Self> {
        Self::new(beta, false)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn stop(&self) -> bool {
        self.stop
    }
}

/// How stochastic policies pick actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    /// Squashed mean control; stop iff the stop logit is positive.
    Greedy,
}

#[derive(Clone, Debug)]
pub enum Policy {
    /// β chosen by the most recent outcome.
    BasicTable { beta_by_outcome: [f64; QUTRIT] },
    /// Fixed β schedule indexed by step, zero past its end.
    OpenLoop(Vec<f64>),
    Stochastic(Arc<ActorCritic>),
}

impl Policy {
    pub fn stochastic(net: ActorCritic) -> Self {
        Policy::Stochastic(Arc::new(net))
    }

    pub fn basic_table(beta_by_outcome: [f64; QUTRIT]) -> Result<Self> {
        for &b in &beta_by_outcome {
            ControlFamily::check_beta(b)?;
        }
        Ok(Policy::BasicTable { beta_by_outcome })
    }

    /// Observation kinds this policy accepts (`None` accepts any).
    pub fn observation_kind(&self) -> Option<ObservationKind> {
        match self {
            Policy::BasicTable { .. } => Some(ObservationKind::OutcomePair),
            Policy::OpenLoop(_) => None,
            Policy::Stochastic(net) => Some(net.architecture().observation),
        }
    }

    pub fn check_observation_kind(&self, got: ObservationKind) -> Result<()> {
        match self.observation_kind() {
            Some(expected) if expected != got => Err(Error::ObservationMismatch {
                expected: expected.name(),
                got: got.name(),
            }),
            _ => Ok(()),
        }
    }

    /// Validation-time observation mode: filtered state for state-based
    /// agents, raw outcomes otherwise.
    pub fn default_observation_mode(&self) -> ObservationMode {
        match self.observation_kind() {
            Some(ObservationKind::FullState) => ObservationMode::FilteredState,
            _ => ObservationMode::OutcomeHistory,
        }
    }

    /// Whether the policy begins with an uncontrolled measurement to obtain
    /// its first outcome (agents with a stop action do).
    pub fn measures_before_acting(&self) -> bool {
        matches!(self, Policy::Stochastic(net) if net.architecture().stop_head)
    }

    pub fn controller(&self, mode: ActMode) -> EpisodeController<'_> {
        let state = match self {
            Policy::Stochastic(net) => net.initial_state(),
            _ => None,
        };
        EpisodeController {
            policy: self,
            mode,
            step: 0,
            state,
        }
    }
}

/// Per-episode acting state (step counter, recurrent memory).
pub struct EpisodeController<'a> {
    policy: &'a Policy,
    mode: ActMode,
    step: usize,
    state: Option<RecurrentState>,
}

impl EpisodeController<'_> {
    pub fn act(&mut self, obs: &Observation, rng: &mut RngStream) -> Result<ControlAction> {
        self.policy.check_observation_kind(obs.kind())?;
        let action = match self.policy {
            Policy::BasicTable { beta_by_outcome } => match obs {
                Observation::OutcomePair { last_outcome, .. } => {
                    let beta = *beta_by_outcome.get(*last_outcome).ok_or_else(|| {
                        Error::param("last_outcome", *last_outcome as f64, "0..3")
                    })?;
                    ControlAction::control(beta)?
                }
                Observation::FullState(_) => unreachable!("kind checked above"),
            },
            Policy::OpenLoop(schedule) => {
                ControlAction::control(schedule.get(self.step).copied().unwrap_or(0.0))?
            }
            Policy::Stochastic(net) => {
                let x = encode_observation(obs);
                let (sampled, next) = net.act(&x, self.state.as_ref(), self.mode, rng);
                self.state = next;
                sampled
            }
        };
        self.step += 1;
        Ok(action)
    }
}

/// One-shot action for memoryless use; recurrent policies act from a fresh
/// memory.
pub fn policy_act(policy: &Policy, obs: &Observation, rng: &mut RngStream) -> Result<ControlAction> {
    policy.controller(ActMode::Sample).act(obs, rng)
}

/// Outcome 0 or 1 → β = 1, outcome 2 → β = 0.
pub fn basic_policy() -> Policy {
    Policy::BasicTable {
        beta_by_outcome: [1.0, 1.0, 0.0],
    }
}

/// Transfer probability `|⟨2|U_β|k⟩|²` from basis state `k` to the target.
pub fn transfer_probability(from: usize, beta: f64) -> Result<f64> {
    let u = ControlFamily::qutrit_ladder().unitary(beta)?;
    Ok(u.get(2, from).norm_sqr())
}

/// Grid-search gains `(β₀, β₁)` maximizing the one-step transfer from |0⟩
/// and |1⟩ to |2⟩. Ties within 1e-12 go to the larger β.
pub fn derive_basic_gains(grid_points: usize) -> Result<(f64, f64)> {
    if grid_points < 3 {
        return Err(Error::Config(format!(
            "gain grid needs at least 3 points, got {grid_points}"
        )));
    }
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            if i + 1 == grid_points {
                1.0
            } else {
                -1.0 + 2.0 * i as f64 / (grid_points - 1) as f64
            }
        })
        .collect();
    let argmax = |from: usize| -> Result<f64> {
        let mut best = (f64::NEG_INFINITY, grid[0]);
        for &beta in &grid {
            let v = transfer_probability(from, beta)?;
            if v >= best.0 - 1e-12 {
                best = (v.max(best.0), beta);
            }
        }
        Ok(best.1)
    };
    Ok((argmax(0)?, argmax(1)?))
}
