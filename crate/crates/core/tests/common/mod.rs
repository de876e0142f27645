//! Oracles and toy problems shared by the integration tests.
#![allow(dead_code)]

use qfc_core::controllers::{ControlAction, ObservationKind};
use qfc_core::dynamics::RngStream;
use qfc_core::qcore::{c, ComplexMatrix, DensityOperator};
use qfc_core::rl::{
    ActorCritic, Architecture, DistParams, EnvStep, Environment, LossCoefficients, Objective, PpoConfig, RawAction,
    RolloutBuffer, SampleStep, Sequence, Transition,
};
use qfc_core::Result;

pub fn toy(recurrent: bool, stop: bool) -> Architecture {
    Architecture {
        observation: ObservationKind::FullState,
        obs_dim: 3,
        hidden: vec![2, 2],
        lstm_hidden: recurrent.then_some(2),
        stop_head: stop,
    }
}

/// Network moved off its near-zero action-head init so every path carries
/// signal, with a sampled batch whose old log-probs are jittered so some
/// ratios leave the clip range.
pub fn perturbed(arch: Architecture, seed: u64, seqs: usize, len: usize) -> (ActorCritic, Vec<Sequence>) {
    let mut rng = RngStream::new(seed, 0);
    let mut net = ActorCritic::new(arch, &mut rng).unwrap();
    let mut p = net.params().to_vec();
    for v in p.iter_mut() {
        *v += 0.3 * rng.standard_normal();
    }
    p[net.log_std_index()] = -0.4;
    net.set_params(p).unwrap();
    let batch = (0..seqs)
        .map(|_| {
            let mut state = net.initial_state();
            if let Some(s) = state.as_mut() {
                for v in s.pi.h.iter_mut().chain(s.vf.c.iter_mut()) {
                    *v = 0.3 * rng.standard_normal();
                }
            }
            let mut run = state.clone();
            let steps = (0..len)
                .map(|_| {
                    let obs: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
                    let ev = net.evaluate(&obs, run.as_ref());
                    run = ev.next_state.clone();
                    let action = RawAction {
                        pre_squash: ev.dist.mean + 0.8 * rng.standard_normal(),
                        stop: rng.bernoulli(0.5),
                    };
                    let old = ev.dist.log_prob(&action) + 0.3 * rng.standard_normal();
                    SampleStep {
                        obs,
                        action,
                        old_log_prob: old,
                        advantage: rng.standard_normal(),
                        ret: rng.standard_normal(),
                    }
                })
                .collect();
            Sequence {
                initial_state: state,
                steps,
            }
        })
        .collect();
    (net, batch)
}

pub fn worst_fd_error(net: &ActorCritic, batch: &[Sequence], objective: Objective) -> f64 {
    let p = net.params().to_vec();
    let (_, g) = net.loss_and_grad(&p, batch, objective).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += h;
        b[i] -= h;
        let fd = (net.loss(&a, batch, objective).unwrap() - net.loss(&b, batch, objective).unwrap()) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

pub fn on_policy(net: &ActorCritic, batch: &[Sequence]) -> Vec<Sequence> {
    batch
        .iter()
        .map(|s| {
            let mut state = s.initial_state.clone();
            let steps = s
                .steps
                .iter()
                .map(|st| {
                    let ev = net.evaluate(&st.obs, state.as_ref());
                    state = ev.next_state;
                    SampleStep {
                        old_log_prob: ev.dist.log_prob(&st.action),
                        ..st.clone()
                    }
                })
                .collect();
            Sequence {
                initial_state: s.initial_state.clone(),
                steps,
            }
        })
        .collect()
}

pub fn surrogate_only() -> Objective {
    Objective::Ppo(LossCoefficients {
        clip_range: 0.2,
        vf_coef: 0.0,
        ent_coef: 0.0,
    })
}

pub fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v = |t: usize| if t == n { last } else { values[t] };
    let delta: Vec<f64> = (0..n)
        .map(|t| rewards[t] + gamma * (1.0 - dones[t] as u8 as f64) * v(t + 1) - values[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                sum += weight * delta[k];
                if dones[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}


/// GAE of a synthetic buffer through the library implementation.
pub fn library_gae(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let mut buf = RolloutBuffer::new(rewards.len());
    for i in 0..rewards.len() {
        buf.push(Transition {
            obs: vec![],
            action: RawAction {
                pre_squash: 0.0,
                stop: false,
            },
            log_prob: 0.0,
            reward: rewards[i],
            value: values[i],
            done: dones[i],
            episode_start: false,
            hidden: None,
        })
        .unwrap();
    }
    buf.finish(last);
    buf.compute_gae(gamma, lambda).unwrap().0
}

/// Total probability mass of the squashed distribution: midpoint rule in β
/// over (−1, 1), summed over the stop decision.
pub fn squashed_mass(d: &DistParams, n: usize) -> f64 {
    let h = 2.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let beta: f64 = -1.0 + (i as f64 + 0.5) * h;
        let u = beta.atanh();
        for stop in [false, true] {
            if !stop || d.stop_logit.is_some() {
                total += d.log_prob(&RawAction { pre_squash: u, stop }).exp() * h;
            }
        }
    }
    total
}

/// `G G† / tr(G G†)` from 18 real entries.
pub fn random_density(v: &[f64]) -> DensityOperator {
    let g = ComplexMatrix::from_fn(3, 3, |i, j| c(v[2 * (3 * i + j)], v[2 * (3 * i + j) + 1]));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityOperator::with_tolerance(m.scale(1.0 / tr), 1e-9).unwrap()
}

/// One-step episodes; the stop flag picks arm 1, which always pays.
pub struct Bandit {
    pub done: bool,
}

impl Environment for Bandit {
    fn obs_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _rng: &mut RngStream) -> Result<Vec<f64>> {
        self.done = false;
        Ok(vec![1.0])
    }

    fn step(&mut self, action: &ControlAction, _rng: &mut RngStream) -> Result<EnvStep> {
        assert!(!self.done);
        self.done = true;
        Ok(EnvStep {
            observation: vec![1.0],
            reward: if action.stop() { 1.0 } else { 0.0 },
            done: true,
            truncated: false,
        })
    }
}

pub fn bandit_arch() -> Architecture {
    Architecture {
        observation: ObservationKind::OutcomePair,
        obs_dim: 1,
        hidden: vec![8],
        lstm_hidden: None,
        stop_head: true,
    }
}

pub fn small_ppo(total: usize) -> PpoConfig {
    PpoConfig {
        n_steps: 64,
        batch_size: 64,
        learning_rate: 3e-3,
        total_timesteps: total,
        ..PpoConfig::default()
    }
}

/// Probability of the paying arm after training on the bandit.
pub fn bandit_success(seed: u64, steps: usize) -> f64 {
    let out = qfc_core::rl::train_env(|_| Ok(Bandit { done: true }), bandit_arch(), &small_ppo(steps), seed).unwrap();
    let logit = out.net.evaluate(&[1.0], None).dist.stop_logit.unwrap();
    1.0 / (1.0 + (-logit).exp())
}
