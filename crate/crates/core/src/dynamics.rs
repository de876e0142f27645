//! True, nominal and filtered qutrit dynamics, episode rollout and
//! Monte-Carlo averaging.
//!
//! One step of the true dynamics is noise, then the control unitary, then an
//! imprecise measurement whose sampled outcome conditions the state:
//! `ρ(t+1) = 𝓜_l ∘ 𝒰_β ∘ 𝒩_α [ρ(t)]`. The nominal model drops the noise,
//! and the filter replays real outcomes through the nominal model, control
//! first and conditioning second.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channels::{
    imprecise_measurement, terminal_measurement, ControlFamily, MeasurementModel, NoiseKind,
    QuantumChannel, QUTRIT, ZERO_PROBABILITY,
};
use crate::controllers::{ActMode, Observation, ObservationKind, Policy};
use crate::error::{Error, Result};
use crate::qcore::{fidelity_pure_target, validate_density, ComplexMatrix, DensityOperator};
use crate::seed::mix;

/// Reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id in the cipher's stream slot, so
/// distinct ids never overlap and draws do not depend on thread scheduling.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream; depends only on this stream's identity and
    /// `child`, not on how many draws have been made.
    pub fn substream(&self, child: u64) -> Self {
        Self::new(self.seed, mix(self.stream_id, child))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    /// Draws an index from (possibly unnormalized) probabilities.
    pub fn categorical(&mut self, probs: &[f64]) -> Result<usize> {
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total <= ZERO_PROBABILITY {
            return Err(Error::InvalidState(format!(
                "degenerate outcome distribution {probs:?}"
            )));
        }
        let u = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = k;
            }
            acc += p;
            if u < acc {
                return Ok(k);
            }
        }
        Ok(last_positive)
    }
}

/// Initial-state choices for an episode.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Fixed(DensityOperator),
    /// Haar-random pure state drawn per episode.
    RandomPure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub noise: NoiseKind,
    pub alpha: f64,
    pub epsilon: f64,
    pub initial_state: InitialState,
    pub target_index: usize,
    pub horizon: usize,
}

impl EnvConfig {
    pub const DEFAULT_HORIZON: usize = 20;
    pub const DEFAULT_TARGET: usize = 2;

    /// Starts in |0⟩⟨0|, targets |2⟩⟨2|, horizon 20.
    pub fn new(noise: NoiseKind, alpha: f64, epsilon: f64) -> Self {
        Self {
            noise,
            alpha,
            epsilon,
            initial_state: InitialState::Fixed(DensityOperator::basis(QUTRIT, 0)),
            target_index: Self::DEFAULT_TARGET,
            horizon: Self::DEFAULT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_initial_state(mut self, rho: DensityOperator) -> Self {
        self.initial_state = InitialState::Fixed(rho);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.target_index >= QUTRIT {
            return Err(Error::param("target_index", self.target_index as f64, "0..3"));
        }
        if let InitialState::Fixed(rho) = &self.initial_state {
            if rho.dim() != QUTRIT {
                return Err(Error::Dimension("initial state must be a qutrit".into()));
            }
            let report = validate_density(rho.matrix(), crate::qcore::DEFAULT_TOL)?;
            if !report.ok {
                return Err(Error::InvalidState(format!("{:?}", report.violations)));
            }
        }
        Ok(())
    }
}

/// An [`EnvConfig`] with its channels built.
#[derive(Clone, Debug)]
pub struct Dynamics {
    cfg: EnvConfig,
    noise: QuantumChannel,
    measurement: MeasurementModel,
    readout: MeasurementModel,
    control: ControlFamily,
}

impl Dynamics {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = cfg.noise.channel(cfg.alpha)?;
        let measurement = imprecise_measurement(cfg.epsilon)?;
        Ok(Self {
            cfg,
            noise,
            measurement,
            readout: terminal_measurement(),
            control: ControlFamily::qutrit_ladder(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn measurement(&self) -> &MeasurementModel {
        &self.measurement
    }

    pub fn noise(&self) -> &QuantumChannel {
        &self.noise
    }

    pub fn control(&self) -> &ControlFamily {
        &self.control
    }

    pub fn initial_state(&self, rng: &mut RngStream) -> DensityOperator {
        match &self.cfg.initial_state {
            InitialState::Fixed(rho) => rho.clone(),
            InitialState::RandomPure => {
                let amps: Vec<_> = (0..QUTRIT)
                    .map(|_| crate::qcore::c(rng.standard_normal(), rng.standard_normal()))
                    .collect();
                DensityOperator::pure(&amps).expect("gaussian vector is nonzero")
            }
        }
    }

    pub fn fidelity(&self, rho: &DensityOperator) -> f64 {
        fidelity_pure_target(rho, self.cfg.target_index).expect("target index validated")
    }

    fn measure(&self, rho: &DensityOperator, rng: &mut RngStream) -> Result<(DensityOperator, usize)> {
        let probs = self.measurement.outcome_probabilities(rho)?;
        let l = rng.categorical(&probs)?;
        Ok((self.measurement.condition(rho, l)?, l))
    }

    /// Noise, control, then a sampled measurement.
    pub fn step_true(
        &self,
        rho: &DensityOperator,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<(DensityOperator, usize)> {
        ControlFamily::check_beta(beta)?;
        let noisy = self.noise.apply(rho)?;
        let controlled = self.control.apply(beta, &noisy)?;
        self.measure(&controlled, rng)
    }

    /// The noiseless model with outcomes drawn from its own statistics.
    pub fn step_nominal(
        &self,
        rho_bar: &DensityOperator,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<(DensityOperator, usize)> {
        let controlled = self.control.apply(beta, rho_bar)?;
        self.measure(&controlled, rng)
    }

    /// Deterministic filter step `M_l U ρ̂ U† M_l† / tr(·)` driven by a real
    /// outcome. An outcome the filter considers impossible is reported as
    /// divergence at step 0; episode drivers rewrite the step index.
    pub fn filter_update(
        &self,
        rho_hat: &DensityOperator,
        beta: f64,
        outcome: usize,
    ) -> Result<DensityOperator> {
        let controlled = self.control.apply(beta, rho_hat)?;
        self.measurement
            .condition(&controlled, outcome)
            .map_err(|e| match e {
                Error::ZeroProbability {
                    outcome,
                    probability,
                } => Error::FilterDivergence {
                    step: 0,
                    outcome,
                    probability,
                },
                other => other,
            })
    }

    /// Projective readout of the current state.
    pub fn terminal_readout(&self, rho: &DensityOperator, rng: &mut RngStream) -> Result<usize> {
        let probs = self.readout.outcome_probabilities(rho)?;
        rng.categorical(&probs)
    }
}

/// What the controller sees during an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationMode {
    /// The noiseless model evolved with its own sampled outcomes.
    NominalState,
    /// The nominal model driven by the real outcomes.
    FilteredState,
    /// Only the last outcome and the last control.
    OutcomeHistory,
}

impl ObservationMode {
    pub fn observation_kind(self) -> ObservationKind {
        match self {
            ObservationMode::NominalState | ObservationMode::FilteredState => ObservationKind::FullState,
            ObservationMode::OutcomeHistory => ObservationKind::OutcomePair,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: usize,
    pub beta: f64,
    pub outcome: usize,
    pub true_state: DensityOperator,
    pub auxiliary_state: Option<DensityOperator>,
    pub fidelity_true: f64,
}

/// Tolerance for the per-step state validity assertion.
const STEP_TOL: f64 = 1e-9;

impl StepRecord {
    pub fn new(
        t: usize,
        beta: f64,
        outcome: usize,
        true_state: DensityOperator,
        auxiliary_state: Option<DensityOperator>,
        target_index: usize,
    ) -> Result<Self> {
        for rho in std::iter::once(&true_state).chain(auxiliary_state.as_ref()) {
            let report = validate_density(rho.matrix(), STEP_TOL)?;
            if !report.ok {
                return Err(Error::InvalidState(format!(
                    "step {t}: {:?}",
                    report.violations
                )));
            }
        }
        let fidelity_true = fidelity_pure_target(&true_state, target_index)?;
        Ok(Self {
            t,
            beta,
            outcome,
            true_state,
            auxiliary_state,
            fidelity_true,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeTrace {
    pub config: EnvConfig,
    pub initial_fidelity: f64,
    pub records: Vec<StepRecord>,
    pub terminal_fidelity: f64,
    /// True state at the end of the episode (at the stop step if stopped).
    pub final_state: DensityOperator,
    /// Step at which a stop action ended the episode.
    pub stop_step: Option<usize>,
    /// Projective readout taken when the episode was stopped.
    pub readout: Option<usize>,
}

impl EpisodeTrace {
    /// True-state fidelity after each step, preceded by the initial fidelity
    /// and padded with the final value up to `horizon + 1` entries.
    pub fn fidelity_curve(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.horizon + 1);
        out.push(self.initial_fidelity);
        out.extend(self.records.iter().map(|r| r.fidelity_true));
        let last = *out.last().expect("non-empty");
        out.resize(self.config.horizon + 1, last);
        out
    }

    /// Number of steps until the true fidelity first reaches `f_star`
    /// (0 if the initial state already does).
    pub fn steps_to_threshold(&self, f_star: f64) -> Option<usize> {
        if self.initial_fidelity >= f_star {
            return Some(0);
        }
        self.records
            .iter()
            .position(|r| r.fidelity_true >= f_star)
            .map(|i| i + 1)
    }
}

fn pseudo_outcome(rho: &DensityOperator) -> usize {
    let pops = rho.populations();
    (0..pops.len())
        .max_by(|&a, &b| pops[a].total_cmp(&pops[b]).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Runs one validation episode on the true noisy dynamics.
///
/// The controller observes the auxiliary state demanded by `mode`. Policies
/// that emit stop actions end the episode early with a projective readout;
/// such policies also start with an uncontrolled (`β = 0`) measurement that
/// supplies their first observation. All other outcome-driven policies see
/// the most populated level of `ρ₀` as their step-zero outcome.
pub fn run_episode(
    policy: &Policy,
    dynamics: &Dynamics,
    rng: &mut RngStream,
    mode: ObservationMode,
    act_mode: ActMode,
) -> Result<EpisodeTrace> {
    policy.check_observation_kind(mode.observation_kind())?;
    let cfg = dynamics.config();
    let target = cfg.target_index;
    let rho0 = dynamics.initial_state(rng);
    let mut rho = rho0.clone();
    let mut aux = match mode {
        ObservationMode::NominalState | ObservationMode::FilteredState => Some(rho0.clone()),
        ObservationMode::OutcomeHistory => None,
    };
    let mut controller = policy.controller(act_mode);
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut last = (pseudo_outcome(&rho0), 0.0);
    let mut stop_step = None;
    let mut readout = None;

    let mut t = 0;
    if mode == ObservationMode::OutcomeHistory && policy.measures_before_acting() {
        let (next, l) = dynamics.step_true(&rho, 0.0, rng)?;
        rho = next;
        records.push(StepRecord::new(0, 0.0, l, rho.clone(), None, target)?);
        last = (l, 0.0);
        t = 1;
    }

    while t < cfg.horizon {
        let obs = match &aux {
            Some(state) => Observation::FullState(state.clone()),
            None => Observation::OutcomePair {
                last_outcome: last.0,
                last_beta: last.1,
            },
        };
        let action = controller.act(&obs, rng)?;
        ControlFamily::check_beta(action.beta())?;
        if action.stop() {
            readout = Some(dynamics.terminal_readout(&rho, rng)?);
            stop_step = Some(t);
            break;
        }
        let beta = action.beta();
        let (next, l) = dynamics.step_true(&rho, beta, rng)?;
        aux = match (mode, aux) {
            (ObservationMode::FilteredState, Some(hat)) => Some(
                dynamics
                    .filter_update(&hat, beta, l)
                    .map_err(|e| with_step(e, t))?,
            ),
            (ObservationMode::NominalState, Some(bar)) => Some(dynamics.step_nominal(&bar, beta, rng)?.0),
            (_, other) => other,
        };
        rho = next;
        records.push(StepRecord::new(t, beta, l, rho.clone(), aux.clone(), target)?);
        last = (l, beta);
        t += 1;
    }

    Ok(EpisodeTrace {
        config: cfg.clone(),
        initial_fidelity: dynamics.fidelity(&rho0),
        terminal_fidelity: dynamics.fidelity(&rho),
        final_state: rho,
        records,
        stop_step,
        readout,
    })
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::FilterDivergence {
            outcome,
            probability,
            ..
        } => Error::FilterDivergence {
            step,
            outcome,
            probability,
        },
        other => other,
    }
}

/// Monte-Carlo mean of `ρ(T)` over `n` independent episodes, episode `i`
/// drawing from `rng.substream(i)`.
pub fn estimate_average_state(
    policy: &Policy,
    dynamics: &Dynamics,
    n: usize,
    rng: &RngStream,
) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::Config("need at least one episode".into()));
    }
    let mode = policy.default_observation_mode();
    const CHUNK: usize = 256;
    let chunks: Vec<ComplexMatrix> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut sum = ComplexMatrix::zeros(QUTRIT, QUTRIT);
            for &i in idx {
                let mut ep_rng = rng.substream(i as u64);
                let trace = run_episode(policy, dynamics, &mut ep_rng, mode, ActMode::Sample)?;
                sum = &sum + trace.final_state.matrix();
            }
            Ok(sum)
        })
        .collect::<Result<_>>()?;
    let mut total = ComplexMatrix::zeros(QUTRIT, QUTRIT);
    for m in &chunks {
        total = &total + m;
    }
    DensityOperator::with_tolerance(total.scale(1.0 / n as f64), 1e-9)
}
