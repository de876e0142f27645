//! Proximal policy optimization: rollout collection, minibatch updates with
//! Adam, and the per-scenario training entry point.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::buffer::{RolloutBuffer, Transition};
use super::env::{EnvKind, Environment, ScenarioEnv};
use super::policy::{ActorCritic, Architecture, LossCoefficients, LossStats, Objective, SampleStep, Sequence};
use crate::dynamics::{EnvConfig, RngStream};
use crate::error::{Error, Result};
use crate::seed::fnv1a64;

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub n_epochs: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub total_timesteps: usize,
    pub n_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_steps: 512,
            batch_size: 512,
            learning_rate: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            n_epochs: 10,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            total_timesteps: 200_000,
            n_envs: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.batch_size == 0 || self.n_epochs == 0 || self.n_envs == 0 {
            return Err(Error::Config("n_steps, batch_size, n_epochs and n_envs must be positive".into()));
        }
        if self.batch_size > self.n_steps * self.n_envs {
            return Err(Error::Config(format!(
                "batch_size {} exceeds rollout size {}",
                self.batch_size,
                self.n_steps * self.n_envs
            )));
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_range", self.clip_range),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, v, "> 0"));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, v, "[0, 1]"));
            }
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            return Err(Error::Config("loss coefficients must be non-negative".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_range: self.clip_range,
            vf_coef: self.vf_coef,
            ent_coef: self.ent_coef,
        }
    }
}

/// The three learned controllers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Mbs,
    Dbs,
    Qomdp,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Mbs => "mbs",
            AgentKind::Dbs => "dbs",
            AgentKind::Qomdp => "qomdp",
        }
    }

    pub fn env_kind(self) -> EnvKind {
        match self {
            AgentKind::Mbs => EnvKind::MbsTrain,
            AgentKind::Dbs => EnvKind::DbsTrain,
            AgentKind::Qomdp => EnvKind::QomdpTrain,
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            AgentKind::Mbs | AgentKind::Dbs => Architecture::mlp_state(),
            AgentKind::Qomdp => Architecture::recurrent_outcome(),
        }
    }

    pub fn default_ppo(self) -> PpoConfig {
        match self {
            AgentKind::Mbs | AgentKind::Dbs => PpoConfig::default(),
            AgentKind::Qomdp => PpoConfig {
                learning_rate: 3e-4,
                ..PpoConfig::default()
            },
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mbs" => Ok(AgentKind::Mbs),
            "dbs" => Ok(AgentKind::Dbs),
            "qomdp" => Ok(AgentKind::Qomdp),
            other => Err(Error::Config(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let denom = (self.v[i] / bc2).sqrt() + self.eps;
            params[i] -= lr * (self.m[i] / bc1) / denom;
        }
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        grad.iter_mut().for_each(|g| *g *= coef);
    }
    norm
}

/// `(A − mean) / (std + 1e-8)` with the unbiased standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

/// A finished per-environment rollout with its advantages.
#[derive(Clone, Debug)]
pub struct RolloutData {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutData {
    pub fn from_buffer(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Result<Self> {
        let (advantages, returns) = buffer.compute_gae(gamma, lambda)?;
        Ok(Self {
            transitions: buffer.transitions().to_vec(),
            advantages,
            returns,
        })
    }

    fn sample(&self, i: usize) -> SampleStep {
        let t = &self.transitions[i];
        SampleStep {
            obs: t.obs.clone(),
            action: t.action,
            old_log_prob: t.log_prob,
            advantage: self.advantages[i],
            ret: self.returns[i],
        }
    }

    /// Episode segments as `(start, end)` index ranges.
    fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.transitions.len() {
            if self.transitions[i].episode_start {
                out.push((start, i));
                start = i;
            }
        }
        if !self.transitions.is_empty() {
            out.push((start, self.transitions.len()));
        }
        out
    }
}

fn minibatches(net: &ActorCritic, data: &[RolloutData], batch_size: usize, rng: &mut RngStream) -> Vec<Vec<Sequence>> {
    if net.architecture().is_recurrent() {
        let mut segs: Vec<(usize, usize, usize)> = data
            .iter()
            .enumerate()
            .flat_map(|(e, d)| d.segments().into_iter().map(move |(a, b)| (e, a, b)))
            .collect();
        rng.shuffle(&mut segs);
        let mut batches = Vec::new();
        let mut current = Vec::new();
        let mut steps = 0;
        for (e, a, b) in segs {
            let d = &data[e];
            current.push(Sequence {
                initial_state: d.transitions[a].hidden.clone(),
                steps: (a..b).map(|i| d.sample(i)).collect(),
            });
            steps += b - a;
            if steps >= batch_size {
                batches.push(std::mem::take(&mut current));
                steps = 0;
            }
        }
        if !current.is_empty() {
            batches.push(current);
        }
        batches
    } else {
        let mut idx: Vec<(usize, usize)> = data
            .iter()
            .enumerate()
            .flat_map(|(e, d)| (0..d.transitions.len()).map(move |i| (e, i)))
            .collect();
        rng.shuffle(&mut idx);
        idx.chunks(batch_size)
            .map(|c| {
                c.iter()
                    .map(|&(e, i)| Sequence {
                        initial_state: None,
                        steps: vec![data[e].sample(i)],
                    })
                    .collect()
            })
            .collect()
    }
}

/// Runs the configured epochs of clipped-surrogate minibatch updates and
/// returns losses averaged over all minibatch steps.
pub fn ppo_update(
    net: &mut ActorCritic,
    adam: &mut Adam,
    data: &[RolloutData],
    cfg: &PpoConfig,
    rng: &mut RngStream,
) -> Result<LossStats> {
    let objective = Objective::Ppo(cfg.coefficients());
    let mut total = LossStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.n_epochs {
        for mut batch in minibatches(net, data, cfg.batch_size, rng) {
            let mut adv: Vec<f64> = batch.iter().flat_map(|s| s.steps.iter().map(|x| x.advantage)).collect();
            normalize_advantages(&mut adv);
            let mut k = 0;
            for s in &mut batch {
                for step in &mut s.steps {
                    step.advantage = adv[k];
                    k += 1;
                }
            }
            let (stats, mut grad) = net.loss_and_grad(net.params(), &batch, objective)?;
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            let mut params = net.params().to_vec();
            adam.step(&mut params, &grad, cfg.learning_rate);
            net.set_params(params)?;
            net.clamp_log_std();
            total.loss += stats.loss;
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.approx_kl += stats.approx_kl;
            total.clip_fraction += stats.clip_fraction;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(LossStats {
        loss: total.loss / c,
        policy_loss: total.policy_loss / c,
        value_loss: total.value_loss / c,
        entropy: total.entropy / c,
        approx_kl: total.approx_kl / c,
        clip_fraction: total.clip_fraction / c,
    })
}

/// One row of the training curve.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRecord {
    pub update: usize,
    pub timesteps: usize,
    /// Mean return of episodes finished during this rollout.
    pub mean_episode_reward: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub net: ActorCritic,
    pub curve: Vec<UpdateRecord>,
    /// Episodes cut short because the filter assigned zero probability to a
    /// real outcome.
    pub filter_aborts: usize,
}

struct Slot<E> {
    env: E,
    rng: RngStream,
    obs: Vec<f64>,
    state: Option<super::policy::RecurrentState>,
    episode_start: bool,
    episode_return: f64,
}

struct Collected {
    buffer: RolloutBuffer,
    returns: Vec<f64>,
    aborts: usize,
}

fn collect<E: Environment>(net: &ActorCritic, slot: &mut Slot<E>, n_steps: usize, gamma: f64) -> Result<Collected> {
    let mut buffer = RolloutBuffer::new(n_steps);
    let mut returns = Vec::new();
    let mut aborts = 0;
    for _ in 0..n_steps {
        let ev = net.evaluate(&slot.obs, slot.state.as_ref());
        if !(ev.dist.mean.is_finite() && ev.value.is_finite()) {
            return Err(Error::NonFinite("policy output".into()));
        }
        let raw = ev.dist.sample(&mut slot.rng);
        let log_prob = ev.dist.log_prob(&raw);
        let action = raw.to_control()?;
        let (next_obs, env_reward, reward, done) = match slot.env.step(&action, &mut slot.rng) {
            Ok(s) if s.truncated => {
                // time-limit cut: fold the bootstrap value into the reward
                let tail = net.evaluate(&s.observation, ev.next_state.as_ref()).value;
                (Some(s.observation), s.reward, s.reward + gamma * tail, true)
            }
            Ok(s) => (Some(s.observation), s.reward, s.reward, s.done),
            Err(Error::FilterDivergence { .. }) => {
                aborts += 1;
                (None, 0.0, 0.0, true)
            }
            Err(e) => return Err(e),
        };
        buffer.push(Transition {
            obs: std::mem::take(&mut slot.obs),
            action: raw,
            log_prob,
            reward,
            value: ev.value,
            done,
            episode_start: slot.episode_start,
            hidden: slot.state.take(),
        })?;
        slot.episode_return += env_reward;
        if done {
            returns.push(slot.episode_return);
            slot.episode_return = 0.0;
            slot.obs = slot.env.reset(&mut slot.rng)?;
            slot.state = net.initial_state();
            slot.episode_start = true;
        } else {
            slot.obs = next_obs.expect("non-terminal step has an observation");
            slot.state = ev.next_state;
            slot.episode_start = false;
        }
    }
    let last = net.evaluate(&slot.obs, slot.state.as_ref());
    buffer.finish(last.value);
    Ok(Collected {
        buffer,
        returns,
        aborts,
    })
}

/// PPO on arbitrary environments; `make_env(i)` builds the `i`-th parallel
/// copy. Deterministic for a fixed seed and environment count.
pub fn train_env<E, F>(make_env: F, arch: Architecture, cfg: &PpoConfig, seed: u64) -> Result<TrainingOutcome>
where
    E: Environment,
    F: Fn(usize) -> Result<E>,
{
    cfg.validate()?;
    let root = RngStream::new(seed, 0);
    let mut net = ActorCritic::new(arch, &mut root.substream(1))?;
    let mut shuffle_rng = root.substream(2);
    let mut slots = Vec::with_capacity(cfg.n_envs);
    for i in 0..cfg.n_envs {
        let mut env = make_env(i)?;
        let mut rng = root.substream(100 + i as u64);
        let obs = env.reset(&mut rng)?;
        if obs.len() != net.architecture().obs_dim {
            return Err(Error::Dimension(format!(
                "environment observes {} values, network expects {}",
                obs.len(),
                net.architecture().obs_dim
            )));
        }
        slots.push(Slot {
            env,
            rng,
            obs,
            state: net.initial_state(),
            episode_start: true,
            episode_return: 0.0,
        });
    }
    let mut adam = Adam::new(net.params().len());
    let mut curve = Vec::new();
    let mut timesteps = 0;
    let mut filter_aborts = 0;
    while timesteps < cfg.total_timesteps {
        let collected: Vec<Collected> = slots
            .par_iter_mut()
            .map(|slot| collect(&net, slot, cfg.n_steps, cfg.gamma))
            .collect::<Result<_>>()?;
        timesteps += cfg.n_steps * cfg.n_envs;
        let mut data = Vec::with_capacity(collected.len());
        let mut finished = Vec::new();
        for c in &collected {
            data.push(RolloutData::from_buffer(&c.buffer, cfg.gamma, cfg.gae_lambda)?);
            finished.extend_from_slice(&c.returns);
            filter_aborts += c.aborts;
        }
        let stats = ppo_update(&mut net, &mut adam, &data, cfg, &mut shuffle_rng)?;
        curve.push(UpdateRecord {
            update: curve.len(),
            timesteps,
            mean_episode_reward: (!finished.is_empty())
                .then(|| finished.iter().sum::<f64>() / finished.len() as f64),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
        });
    }
    Ok(TrainingOutcome {
        net,
        curve,
        filter_aborts,
    })
}

/// Trains one agent in its scenario's training environment.
pub fn train(kind: AgentKind, env_cfg: &EnvConfig, cfg: &PpoConfig, seed: u64) -> Result<TrainingOutcome> {
    env_cfg.validate()?;
    let make = |_| ScenarioEnv::new(kind.env_kind(), env_cfg.clone());
    train_env(make, kind.architecture(), cfg, seed)
}

/// FNV-1a over the little-endian parameter bytes.
pub fn params_checksum(params: &[f64]) -> u64 {
    let bytes: Vec<u8> = params.iter().flat_map(|v| v.to_le_bytes()).collect();
    fnv1a64(&bytes)
}

pub fn write_training_curve(path: &Path, curve: &[UpdateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "update_index",
        "timesteps",
        "mean_episode_reward",
        "policy_loss",
        "value_loss",
        "entropy",
    ])?;
    for r in curve {
        w.write_record([
            r.update.to_string(),
            r.timesteps.to_string(),
            r.mean_episode_reward.map(|v| v.to_string()).unwrap_or_default(),
            r.policy_loss.to_string(),
            r.value_loss.to_string(),
            r.entropy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text progress line for a curve row.
pub fn log_update(out: &mut impl Write, r: &UpdateRecord) -> std::io::Result<()> {
    let reward = r
        .mean_episode_reward
        .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    writeln!(
        out,
        "update {:>4}  steps {:>7}  reward {}  pi {:+.4}  vf {:.4}  ent {:.4}",
        r.update, r.timesteps, reward, r.policy_loss, r.value_loss, r.entropy
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = AgentKind::Mbs.default_ppo();
        assert_eq!((c.n_steps, c.batch_size, c.n_epochs), (512, 512, 10));
        assert_eq!((c.learning_rate, c.gamma, c.gae_lambda, c.clip_range), (1e-4, 0.99, 0.95, 0.2));
        assert_eq!((c.ent_coef, c.vf_coef), (0.0, 0.5));
        assert_eq!(AgentKind::Qomdp.default_ppo().learning_rate, 3e-4);
        assert!(c.validate().is_ok());
        assert!(PpoConfig { batch_size: 1024, ..c.clone() }.validate().is_err());
        assert!(PpoConfig { learning_rate: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn grad_clip_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((n - 0.5).abs() < 1e-6);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn advantage_normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut adam = Adam::new(2);
        adam.step(&mut p, &[10.0, -0.1], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 0.99).abs() < 1e-3);
    }
}
