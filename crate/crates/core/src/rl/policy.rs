//! Actor-critic networks, the squashed-Gaussian (plus optional Bernoulli
//! stop) action distribution, and analytic loss gradients.

use rayon::prelude::*;

use super::net::{Linear, Lstm, LstmCache, LstmState, Mlp, ParamLayout};
use crate::controllers::{ActMode, ControlAction, ObservationKind};
use crate::dynamics::RngStream;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub observation: ObservationKind,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub lstm_hidden: Option<usize>,
    pub stop_head: bool,
}

impl Architecture {
    /// Feed-forward agent on the 9-entry state encoding.
    pub fn mlp_state() -> Self {
        Self {
            observation: ObservationKind::FullState,
            obs_dim: 9,
            hidden: vec![64, 64, 64],
            lstm_hidden: None,
            stop_head: false,
        }
    }

    /// Recurrent agent on (one-hot outcome, last β) with a stop head.
    pub fn recurrent_outcome() -> Self {
        Self {
            observation: ObservationKind::OutcomePair,
            obs_dim: 4,
            hidden: vec![64, 64, 64],
            lstm_hidden: Some(64),
            stop_head: true,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        self.lstm_hidden.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 {
            return Err(Error::Config("observation dimension must be positive".into()));
        }
        if self.hidden.contains(&0) || self.lstm_hidden == Some(0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 − tanh²u)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// An action in the network's native coordinates: the control is
/// `tanh(pre_squash)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawAction {
    pub pre_squash: f64,
    pub stop: bool,
}

impl RawAction {
    pub fn beta(&self) -> f64 {
        self.pre_squash.tanh()
    }

    pub fn to_control(&self) -> Result<ControlAction> {
        ControlAction::new(self.beta(), self.stop)
    }
}

/// Gaussian over the pre-squash control plus an optional Bernoulli stop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistParams {
    pub mean: f64,
    pub log_std: f64,
    pub stop_logit: Option<f64>,
}

impl DistParams {
    pub fn sample(&self, rng: &mut RngStream) -> RawAction {
        let u = self.mean + self.log_std.exp() * rng.standard_normal();
        let stop = match self.stop_logit {
            Some(z) => rng.bernoulli(sigmoid(z)),
            None => false,
        };
        RawAction { pre_squash: u, stop }
    }

    pub fn greedy(&self) -> RawAction {
        RawAction {
            pre_squash: self.mean,
            stop: self.stop_logit.is_some_and(|z| z > 0.0),
        }
    }

    /// Log-density of the squashed control (and stop) in `β` coordinates.
    pub fn log_prob(&self, a: &RawAction) -> f64 {
        let u = a.pre_squash;
        let z = (u - self.mean) * (-self.log_std).exp();
        let mut lp = -0.5 * z * z - self.log_std - 0.5 * LN_2PI - log_one_minus_tanh_sq(u);
        if let Some(logit) = self.stop_logit {
            lp += if a.stop { logit } else { 0.0 } - softplus(logit);
        }
        lp
    }

    /// Entropy of the pre-squash Gaussian plus that of the stop Bernoulli.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.5 + 0.5 * LN_2PI + self.log_std;
        if let Some(z) = self.stop_logit {
            h += softplus(z) - z * sigmoid(z);
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub pi: LstmState,
    pub vf: LstmState,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub dist: DistParams,
    pub value: f64,
    pub next_state: Option<RecurrentState>,
}

/// One stored step as seen by the loss.
#[derive(Clone, Debug)]
pub struct SampleStep {
    pub obs: Vec<f64>,
    pub action: RawAction,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Consecutive steps sharing one recurrent state chain. Feed-forward
/// networks use length-1 sequences without state.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub initial_state: Option<RecurrentState>,
    pub steps: Vec<SampleStep>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossCoefficients {
    pub clip_range: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

/// Scalar objectives with analytic gradients, all averaged over steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Clipped surrogate loss plus weighted value loss minus weighted entropy.
    Ppo(LossCoefficients),
    /// `−mean(Â · log π(a|s))`, the vanilla policy-gradient loss.
    PolicyGradient,
    LogProb,
    ValueLoss,
    Entropy,
}

impl Objective {
    fn needs_policy(self) -> bool {
        !matches!(self, Objective::ValueLoss)
    }

    fn needs_value(self) -> bool {
        matches!(self, Objective::Ppo(_) | Objective::ValueLoss)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.loss += o.loss;
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clip_fraction += o.clip_fraction;
    }
}

/// Forward tape of one trunk over a sequence.
struct Tape {
    lstm: Vec<LstmCache>,
    mlp: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
struct Trunk {
    lstm: Option<Lstm>,
    mlp: Mlp,
}

impl Trunk {
    fn forward(&self, p: &[f64], xs: &[&[f64]], h0: Option<&LstmState>) -> Tape {
        let mut lstm_caches = Vec::new();
        let mlp = match &self.lstm {
            Some(lstm) => {
                let mut s = h0.cloned().unwrap_or_else(|| LstmState::zeros(lstm.n_hidden));
                xs.iter()
                    .map(|x| {
                        let (next, cache) = lstm.step(p, x, &s);
                        lstm_caches.push(cache);
                        let acts = self.mlp.forward(p, &next.h);
                        s = next;
                        acts
                    })
                    .collect()
            }
            None => xs.iter().map(|x| self.mlp.forward(p, x)).collect(),
        };
        Tape {
            lstm: lstm_caches,
            mlp,
        }
    }

    fn step(&self, p: &[f64], x: &[f64], state: Option<&LstmState>) -> (Vec<f64>, Option<LstmState>) {
        match &self.lstm {
            Some(lstm) => {
                let zero;
                let s = match state {
                    Some(s) => s,
                    None => {
                        zero = LstmState::zeros(lstm.n_hidden);
                        &zero
                    }
                };
                let (next, _) = lstm.step(p, x, s);
                let mut acts = self.mlp.forward(p, &next.h);
                (acts.pop().expect("non-empty"), Some(next))
            }
            None => {
                let mut acts = self.mlp.forward(p, x);
                (acts.pop().expect("non-empty"), None)
            }
        }
    }

    fn backward(&self, p: &[f64], tape: &Tape, d_out: &[Vec<f64>], g: &mut [f64]) {
        let want_dx = self.lstm.is_some();
        let dh: Vec<Vec<f64>> = tape
            .mlp
            .iter()
            .zip(d_out)
            .map(|(acts, d)| self.mlp.backward(p, acts, d, g, want_dx))
            .collect();
        if let Some(lstm) = &self.lstm {
            lstm.backward(p, &tape.lstm, &dh, g);
        }
    }
}

/// Separate policy and value trunks with linear heads and a
/// state-independent log standard deviation.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    arch: Architecture,
    layout: ParamLayout,
    params: Vec<f64>,
    pi: Trunk,
    vf: Trunk,
    action_head: Linear,
    value_head: Linear,
    log_std: usize,
}

const SEQUENCES_PER_CHUNK_MLP: usize = 64;
const SEQUENCES_PER_CHUNK_RNN: usize = 4;

impl ActorCritic {
    fn build(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut layout = ParamLayout::new();
        let trunk = |name: &str, layout: &mut ParamLayout| {
            let lstm = arch
                .lstm_hidden
                .map(|h| Lstm::new(layout, &format!("{name}.lstm"), arch.obs_dim, h));
            let n_in = arch.lstm_hidden.unwrap_or(arch.obs_dim);
            Trunk {
                lstm,
                mlp: Mlp::new(layout, &format!("{name}.mlp"), n_in, &arch.hidden),
            }
        };
        let pi = trunk("pi", &mut layout);
        let vf = trunk("vf", &mut layout);
        let heads = if arch.stop_head { 2 } else { 1 };
        let action_head = Linear::new(&mut layout, "action", pi.mlp.out_dim(), heads);
        let value_head = Linear::new(&mut layout, "value", vf.mlp.out_dim(), 1);
        let log_std = layout.push("log_std", &[1]);
        let params = vec![0.0; layout.len()];
        Ok(Self {
            arch,
            layout,
            params,
            pi,
            vf,
            action_head,
            value_head,
            log_std,
        })
    }

    /// Orthogonal initialization: gain √2 in the trunks, 0.01 on the action
    /// head, 1 on the value head; zero biases and zero log-std.
    pub fn new(arch: Architecture, rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::build(arch)?;
        let mut p = std::mem::take(&mut net.params);
        let s2 = std::f64::consts::SQRT_2;
        for trunk in [&net.pi, &net.vf] {
            if let Some(l) = &trunk.lstm {
                l.init(&mut p, 1.0, rng);
            }
            trunk.mlp.init(&mut p, s2, rng);
        }
        net.action_head.init(&mut p, 0.01, rng);
        net.value_head.init(&mut p, 1.0, rng);
        p[net.log_std] = 0.0;
        net.params = p;
        Ok(net)
    }

    /// All parameters zero: mean 0, unit pre-squash std, value 0.
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        Self::build(arch)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::build(arch)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.layout.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.layout.len(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        self.params = params;
        Ok(())
    }

    pub fn log_std_index(&self) -> usize {
        self.log_std
    }

    pub fn clamp_log_std(&mut self) {
        let v = &mut self.params[self.log_std];
        *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    pub fn initial_state(&self) -> Option<RecurrentState> {
        self.arch.lstm_hidden.map(|h| RecurrentState {
            pi: LstmState::zeros(h),
            vf: LstmState::zeros(h),
        })
    }

    fn dist_from_head(&self, p: &[f64], head: &[f64]) -> DistParams {
        DistParams {
            mean: head[0],
            log_std: p[self.log_std],
            stop_logit: self.arch.stop_head.then(|| head[1]),
        }
    }

    /// Distribution, value and successor memory for one observation.
    pub fn evaluate_with(&self, p: &[f64], obs: &[f64], state: Option<&RecurrentState>) -> Evaluation {
        let (pi_feat, pi_next) = self.pi.step(p, obs, state.map(|s| &s.pi));
        let (vf_feat, vf_next) = self.vf.step(p, obs, state.map(|s| &s.vf));
        let head = self.action_head.forward(p, &pi_feat);
        let value = self.value_head.forward(p, &vf_feat)[0];
        let next_state = match (pi_next, vf_next) {
            (Some(pi), Some(vf)) => Some(RecurrentState { pi, vf }),
            _ => None,
        };
        Evaluation {
            dist: self.dist_from_head(p, &head),
            value,
            next_state,
        }
    }

    pub fn evaluate(&self, obs: &[f64], state: Option<&RecurrentState>) -> Evaluation {
        self.evaluate_with(&self.params, obs, state)
    }

    /// Control action for an encoded observation; returns the next memory.
    pub fn act(
        &self,
        obs: &[f64],
        state: Option<&RecurrentState>,
        mode: ActMode,
        rng: &mut RngStream,
    ) -> (ControlAction, Option<RecurrentState>) {
        let ev = self.evaluate(obs, state);
        let raw = match mode {
            ActMode::Sample => ev.dist.sample(rng),
            ActMode::Greedy => ev.dist.greedy(),
        };
        let beta = raw.beta().clamp(-1.0, 1.0);
        let action = ControlAction::new(beta, raw.stop).expect("clamped into range");
        (action, ev.next_state)
    }

    /// Average objective over all steps of `batch` and its gradient with
    /// respect to `params`.
    pub fn loss_and_grad(&self, params: &[f64], batch: &[Sequence], objective: Objective) -> Result<(LossStats, Vec<f64>)> {
        let n_steps: usize = batch.iter().map(|s| s.steps.len()).sum();
        if n_steps == 0 {
            return Err(Error::Config("empty minibatch".into()));
        }
        let scale = 1.0 / n_steps as f64;
        let chunk = if self.arch.is_recurrent() {
            SEQUENCES_PER_CHUNK_RNN
        } else {
            SEQUENCES_PER_CHUNK_MLP
        };
        let parts: Vec<(LossStats, Vec<f64>)> = batch
            .par_chunks(chunk)
            .map(|seqs| {
                let mut g = vec![0.0; params.len()];
                let mut stats = LossStats::default();
                for s in seqs {
                    self.sequence_grad(params, s, objective, scale, &mut g, &mut stats);
                }
                (stats, g)
            })
            .collect();
        let mut grad = vec![0.0; params.len()];
        let mut stats = LossStats::default();
        for (s, g) in &parts {
            stats.add(s);
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        if !stats.loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss {}", stats.loss)));
        }
        Ok((stats, grad))
    }

    /// Objective value only (for finite-difference checks).
    pub fn loss(&self, params: &[f64], batch: &[Sequence], objective: Objective) -> Result<f64> {
        Ok(self.loss_and_grad(params, batch, objective)?.0.loss)
    }

    fn sequence_grad(
        &self,
        p: &[f64],
        seq: &Sequence,
        objective: Objective,
        scale: f64,
        g: &mut [f64],
        stats: &mut LossStats,
    ) {
        let xs: Vec<&[f64]> = seq.steps.iter().map(|s| s.obs.as_slice()).collect();
        let log_std = p[self.log_std];
        let inv_var = (-2.0 * log_std).exp();

        if objective.needs_policy() {
            let tape = self.pi.forward(p, &xs, seq.initial_state.as_ref().map(|s| &s.pi));
            let mut d_feat = Vec::with_capacity(xs.len());
            for (step, acts) in seq.steps.iter().zip(&tape.mlp) {
                let feat = acts.last().expect("non-empty");
                let head = self.action_head.forward(p, feat);
                let dist = self.dist_from_head(p, &head);
                let lp = dist.log_prob(&step.action);
                let ent = dist.entropy();
                // dL/dlogp, dL/dlogstd (entropy part), dL/dz (entropy part)
                let (d_lp, d_ls_extra, d_z_extra) = match objective {
                    Objective::Ppo(c) => {
                        let ratio = (lp - step.old_log_prob).exp();
                        let a = step.advantage;
                        let unclipped = ratio * a;
                        let clipped = ratio.clamp(1.0 - c.clip_range, 1.0 + c.clip_range) * a;
                        let pl = -unclipped.min(clipped);
                        stats.policy_loss += pl * scale;
                        stats.entropy += ent * scale;
                        stats.loss += (pl - c.ent_coef * ent) * scale;
                        let log_ratio = lp - step.old_log_prob;
                        stats.approx_kl += ((ratio - 1.0) - log_ratio) * scale;
                        if (ratio - 1.0).abs() > c.clip_range {
                            stats.clip_fraction += scale;
                        }
                        let d_lp = if unclipped <= clipped { -unclipped } else { 0.0 };
                        let dz_ent = dist.stop_logit.map_or(0.0, |z| {
                            let s = sigmoid(z);
                            c.ent_coef * z * s * (1.0 - s)
                        });
                        (d_lp, -c.ent_coef, dz_ent)
                    }
                    Objective::PolicyGradient => {
                        stats.loss -= step.advantage * lp * scale;
                        stats.policy_loss -= step.advantage * lp * scale;
                        (-step.advantage, 0.0, 0.0)
                    }
                    Objective::LogProb => {
                        stats.loss += lp * scale;
                        (1.0, 0.0, 0.0)
                    }
                    Objective::Entropy => {
                        stats.loss += ent * scale;
                        stats.entropy += ent * scale;
                        let dz = dist.stop_logit.map_or(0.0, |z| {
                            let s = sigmoid(z);
                            -z * s * (1.0 - s)
                        });
                        (0.0, 1.0, dz)
                    }
                    Objective::ValueLoss => unreachable!(),
                };
                let diff = step.action.pre_squash - dist.mean;
                let d_mean = d_lp * diff * inv_var;
                let d_ls = d_lp * (diff * diff * inv_var - 1.0) + d_ls_extra;
                g[self.log_std] += d_ls * scale;
                let mut d_head = vec![d_mean * scale];
                if let Some(z) = dist.stop_logit {
                    let s = if step.action.stop { 1.0 } else { 0.0 };
                    d_head.push((d_lp * (s - sigmoid(z)) + d_z_extra) * scale);
                }
                d_feat.push(self.action_head.backward(p, feat, &d_head, g, true));
            }
            self.pi.backward(p, &tape, &d_feat, g);
        }

        if objective.needs_value() {
            let vf_coef = match objective {
                Objective::Ppo(c) => c.vf_coef,
                _ => 1.0,
            };
            let tape = self.vf.forward(p, &xs, seq.initial_state.as_ref().map(|s| &s.vf));
            let mut d_feat = Vec::with_capacity(xs.len());
            for (step, acts) in seq.steps.iter().zip(&tape.mlp) {
                let feat = acts.last().expect("non-empty");
                let v = self.value_head.forward(p, feat)[0];
                let err = v - step.ret;
                stats.value_loss += err * err * scale;
                stats.loss += vf_coef * err * err * scale;
                let dv = vf_coef * 2.0 * err * scale;
                d_feat.push(self.value_head.backward(p, feat, &[dv], g, true));
            }
            self.vf.backward(p, &tape, &d_feat, g);
        }
    }
}
