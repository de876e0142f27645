//! Training environments for the three agent types, observation encodings
//! and reward functions.

use crate::channels::QUTRIT;
use crate::controllers::{ControlAction, Observation};
use crate::dynamics::{Dynamics, EnvConfig, ObservationMode, RngStream};
use crate::error::{Error, Result};
use crate::qcore::{c, fidelity_pure_target, ComplexMatrix, DensityOperator};

pub const STATE_OBS_DIM: usize = 9;
pub const OUTCOME_OBS_DIM: usize = QUTRIT + 1;

/// `(ρ00, ρ11, ρ22, Re ρ01, Im ρ01, Re ρ02, Im ρ02, Re ρ12, Im ρ12)`.
pub fn encode_state_observation(rho: &DensityOperator) -> Vec<f64> {
    let m = rho.matrix();
    let mut out = Vec::with_capacity(STATE_OBS_DIM);
    for k in 0..QUTRIT {
        out.push(m.get(k, k).re);
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let z = m.get(i, j);
        out.push(z.re);
        out.push(z.im);
    }
    out
}

pub fn decode_state_observation(x: &[f64]) -> Result<DensityOperator> {
    if x.len() != STATE_OBS_DIM {
        return Err(Error::Dimension(format!(
            "state encoding has {} entries, expected {STATE_OBS_DIM}",
            x.len()
        )));
    }
    let mut m = ComplexMatrix::zeros(QUTRIT, QUTRIT);
    for (k, &p) in x[..QUTRIT].iter().enumerate() {
        m.set(k, k, c(p, 0.0));
    }
    for (n, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let z = c(x[3 + 2 * n], x[4 + 2 * n]);
        m.set(i, j, z);
        m.set(j, i, z.conj());
    }
    DensityOperator::with_tolerance(m, 1e-9)
}

/// One-hot outcome followed by the control that preceded it.
pub fn encode_outcome_observation(last_outcome: usize, last_beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; OUTCOME_OBS_DIM];
    if last_outcome < QUTRIT {
        out[last_outcome] = 1.0;
    }
    out[QUTRIT] = last_beta;
    out
}

pub fn encode_observation(obs: &Observation) -> Vec<f64> {
    match obs {
        Observation::FullState(rho) => encode_state_observation(rho),
        Observation::OutcomePair {
            last_outcome,
            last_beta,
        } => encode_outcome_observation(*last_outcome, *last_beta),
    }
}

/// Per-step reward of the state-observing agents: fidelity to the target.
pub fn mb_db_reward(rho_obs: &DensityOperator, cfg: &EnvConfig) -> Result<f64> {
    fidelity_pure_target(rho_obs, cfg.target_index)
}

/// Reward of the measurement-only agent: ±1 on stop by the readout, −1 when
/// the horizon runs out, 0 otherwise.
pub fn qomdp_reward(stop: bool, l_last: Option<usize>, done: bool, target: usize) -> Result<f64> {
    match (stop, l_last) {
        (true, Some(l)) => Ok(if l == target { 1.0 } else { -1.0 }),
        (true, None) => Err(Error::Config("stop reward needs the readout outcome".into())),
        (false, _) => Ok(if done { -1.0 } else { 0.0 }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode was cut by the time limit rather than reaching a
    /// terminal state; learners may bootstrap from `observation`.
    pub truncated: bool,
}

/// Episodic environment with vector observations.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut RngStream) -> Result<Vec<f64>>;
    fn step(&mut self, action: &ControlAction, rng: &mut RngStream) -> Result<EnvStep>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    /// Noiseless model with its own outcomes; observes the nominal state.
    MbsTrain,
    /// True dynamics; observes the filter driven by real outcomes.
    DbsTrain,
    /// Noiseless true dynamics; observes outcomes only and may stop.
    QomdpTrain,
    /// True noisy dynamics with the given observation; rewards true-state
    /// fidelity (or the stop reward when observing outcomes).
    Validation(ObservationMode),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardTiming {
    PerStep,
    TerminalOnly,
}

#[derive(Clone, Debug)]
pub struct ScenarioEnv {
    kind: EnvKind,
    dynamics: Dynamics,
    timing: RewardTiming,
    t: usize,
    done: bool,
    state: DensityOperator,
    aux: Option<DensityOperator>,
}

impl ScenarioEnv {
    pub fn new(kind: EnvKind, cfg: EnvConfig) -> Result<Self> {
        let cfg = match kind {
            EnvKind::MbsTrain | EnvKind::QomdpTrain => cfg.with_alpha(0.0),
            _ => cfg,
        };
        let dynamics = Dynamics::new(cfg)?;
        let state = DensityOperator::basis(QUTRIT, 0);
        Ok(Self {
            kind,
            dynamics,
            timing: RewardTiming::PerStep,
            t: 0,
            done: true,
            state,
            aux: None,
        })
    }

    pub fn with_reward_timing(mut self, timing: RewardTiming) -> Self {
        self.timing = timing;
        self
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn true_state(&self) -> &DensityOperator {
        &self.state
    }

    /// Nominal or filtered state, when the scenario tracks one.
    pub fn observed_state(&self) -> Option<&DensityOperator> {
        self.aux.as_ref()
    }

    fn observes_outcomes(&self) -> bool {
        matches!(
            self.kind,
            EnvKind::QomdpTrain | EnvKind::Validation(ObservationMode::OutcomeHistory)
        )
    }

    fn fidelity_reward(&self, rho: &DensityOperator, done: bool) -> Result<f64> {
        match self.timing {
            RewardTiming::TerminalOnly if !done => Ok(0.0),
            _ => mb_db_reward(rho, self.dynamics.config()),
        }
    }
}

impl Environment for ScenarioEnv {
    fn obs_dim(&self) -> usize {
        if self.observes_outcomes() {
            OUTCOME_OBS_DIM
        } else {
            STATE_OBS_DIM
        }
    }

    fn reset(&mut self, rng: &mut RngStream) -> Result<Vec<f64>> {
        self.state = self.dynamics.initial_state(rng);
        self.done = false;
        self.t = 0;
        if self.observes_outcomes() {
            // uncontrolled first measurement supplies the first outcome
            let (next, l) = self.dynamics.step_true(&self.state, 0.0, rng)?;
            self.state = next;
            self.aux = None;
            self.t = 1;
            return Ok(encode_outcome_observation(l, 0.0));
        }
        self.aux = Some(self.state.clone());
        Ok(encode_state_observation(&self.state))
    }

    fn step(&mut self, action: &ControlAction, rng: &mut RngStream) -> Result<EnvStep> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let beta = action.beta();
        let horizon = self.dynamics.config().horizon;
        let target = self.dynamics.config().target_index;

        if self.observes_outcomes() {
            if action.stop() {
                let l = self.dynamics.terminal_readout(&self.state, rng)?;
                self.done = true;
                return Ok(EnvStep {
                    observation: encode_outcome_observation(l, beta),
                    reward: qomdp_reward(true, Some(l), true, target)?,
                    done: true,
                    truncated: false,
                });
            }
            let (next, l) = self.dynamics.step_true(&self.state, beta, rng)?;
            self.state = next;
            self.t += 1;
            self.done = self.t >= horizon;
            return Ok(EnvStep {
                observation: encode_outcome_observation(l, beta),
                reward: qomdp_reward(false, None, self.done, target)?,
                done: self.done,
                truncated: false,
            });
        }

        let aux = self.aux.take().expect("state-observing episode has an auxiliary state");
        let (obs_state, reward_state) = match self.kind {
            EnvKind::MbsTrain => {
                let (bar, _) = self.dynamics.step_nominal(&aux, beta, rng)?;
                self.state = bar.clone();
                (bar.clone(), bar)
            }
            EnvKind::DbsTrain | EnvKind::Validation(ObservationMode::FilteredState) => {
                let (next, l) = self.dynamics.step_true(&self.state, beta, rng)?;
                let hat = self.dynamics.filter_update(&aux, beta, l).map_err(|e| match e {
                    Error::FilterDivergence {
                        outcome,
                        probability,
                        ..
                    } => Error::FilterDivergence {
                        step: self.t,
                        outcome,
                        probability,
                    },
                    other => other,
                })?;
                self.state = next;
                let reward_state = if self.kind == EnvKind::DbsTrain {
                    hat.clone()
                } else {
                    self.state.clone()
                };
                (hat, reward_state)
            }
            EnvKind::Validation(_) => {
                let (next, _) = self.dynamics.step_true(&self.state, beta, rng)?;
                let (bar, _) = self.dynamics.step_nominal(&aux, beta, rng)?;
                self.state = next;
                (bar, self.state.clone())
            }
            EnvKind::QomdpTrain => unreachable!("outcome-observing"),
        };
        self.t += 1;
        self.done = self.t >= horizon;
        let reward = self.fidelity_reward(&reward_state, self.done)?;
        let observation = encode_state_observation(&obs_state);
        self.aux = Some(obs_state);
        Ok(EnvStep {
            observation,
            reward,
            done: self.done,
            truncated: self.done && self.timing == RewardTiming::PerStep,
        })
    }
}
