//! Evaluation cells, the (scenario, noise, α, ε) sweep, threshold summaries
//! and report emission.

pub mod config;
pub mod report;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channels::NoiseKind;
use crate::controllers::{ActMode, Policy};
use crate::dynamics::{run_episode, Dynamics, EnvConfig, EpisodeTrace, ObservationMode, RngStream};
use crate::error::{Error, Result};
use crate::rl::AgentKind;

pub use config::SweepConfig;
pub use report::{emit_report, read_results, write_results_csv, write_thresholds_csv};
pub use sweep::{cell_seed, cells, checkpoint_path, policy_for, sweep, Cell, SweepOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Basic,
    Mbs,
    Dbs,
    Qomdp,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Basic, Scenario::Mbs, Scenario::Dbs, Scenario::Qomdp];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Basic => "basic",
            Scenario::Mbs => "mbs",
            Scenario::Dbs => "dbs",
            Scenario::Qomdp => "qomdp",
        }
    }

    pub fn agent(self) -> Option<AgentKind> {
        match self {
            Scenario::Basic => None,
            Scenario::Mbs => Some(AgentKind::Mbs),
            Scenario::Dbs => Some(AgentKind::Dbs),
            Scenario::Qomdp => Some(AgentKind::Qomdp),
        }
    }

    /// What the controller observes during validation.
    pub fn observation_mode(self) -> ObservationMode {
        match self {
            Scenario::Basic | Scenario::Qomdp => ObservationMode::OutcomeHistory,
            Scenario::Mbs | Scenario::Dbs => ObservationMode::FilteredState,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}' (expected basic, mbs, dbs or qomdp)")))
    }
}

/// Mean and population standard deviation of first-passage steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsStats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub reached: usize,
    pub unreached: usize,
}

impl StepsStats {
    pub fn from_steps(steps: impl IntoIterator<Item = Option<usize>>) -> Self {
        let mut reached = Vec::new();
        let mut unreached = 0;
        for s in steps {
            match s {
                Some(k) => reached.push(k as f64),
                None => unreached += 1,
            }
        }
        let (mean, std) = mean_std(&reached).map_or((None, None), |(m, s)| (Some(m), Some(s)));
        Self {
            mean,
            std,
            reached: reached.len(),
            unreached,
        }
    }
}

/// First step at which each trace's true fidelity reaches `f_star`;
/// episodes that never do are counted separately.
pub fn steps_to_threshold(traces: &[EpisodeTrace], f_star: f64) -> StepsStats {
    StepsStats::from_steps(traces.iter().map(|t| t.steps_to_threshold(f_star)))
}

/// Mean and population standard deviation; `None` when empty.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub scenario: Scenario,
    pub noise: NoiseKind,
    pub alpha: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub episodes: usize,
    pub aborted: usize,
    /// NaN when every episode aborted.
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    /// Per-step mean true fidelity, `horizon + 1` entries starting at t = 0.
    pub curve_mean: Vec<f64>,
    pub curve_std: Vec<f64>,
    pub mean_steps_to_threshold: Option<f64>,
    pub std_steps_to_threshold: Option<f64>,
    pub unreached_count: usize,
}

impl CellResult {
    pub fn id(&self) -> String {
        cell_id(self.scenario, self.noise, self.alpha, self.epsilon)
    }
}

pub fn cell_id(scenario: Scenario, noise: NoiseKind, alpha: f64, epsilon: f64) -> String {
    format!("{scenario}_{noise}_a{alpha}_e{epsilon}")
}

struct EpisodeSummary {
    terminal: f64,
    curve: Vec<f64>,
    steps: Option<usize>,
}

/// Runs `episodes` validation episodes on the true noisy dynamics with greedy
/// actions; episode `i` draws from stream `i` of `seed`. Filter divergences
/// are counted as aborted episodes.
pub fn evaluate(
    scenario: Scenario,
    policy: &Policy,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    f_star: f64,
) -> Result<CellResult> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let mode = scenario.observation_mode();
    policy.check_observation_kind(mode.observation_kind())?;
    let dynamics = Dynamics::new(env_cfg.clone())?;
    let root = RngStream::new(seed, 0);
    let outcomes: Vec<Option<EpisodeSummary>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.substream(i as u64);
            match run_episode(policy, &dynamics, &mut rng, mode, ActMode::Greedy) {
                Ok(trace) => Ok(Some(EpisodeSummary {
                    terminal: trace.terminal_fidelity,
                    curve: trace.fidelity_curve(),
                    steps: trace.steps_to_threshold(f_star),
                })),
                Err(Error::FilterDivergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let done: Vec<&EpisodeSummary> = outcomes.iter().flatten().collect();
    let aborted = episodes - done.len();
    let terminals: Vec<f64> = done.iter().map(|s| s.terminal).collect();
    let (mean_fidelity, std_fidelity) = mean_std(&terminals).unwrap_or((f64::NAN, f64::NAN));
    let len = env_cfg.horizon + 1;
    let mut curve_mean = Vec::with_capacity(len);
    let mut curve_std = Vec::with_capacity(len);
    for t in 0..len {
        let col: Vec<f64> = done.iter().map(|s| s.curve[t]).collect();
        let (m, s) = mean_std(&col).unwrap_or((f64::NAN, f64::NAN));
        curve_mean.push(m);
        curve_std.push(s);
    }
    let steps = StepsStats::from_steps(done.iter().map(|s| s.steps));
    Ok(CellResult {
        scenario,
        noise: env_cfg.noise,
        alpha: env_cfg.alpha,
        epsilon: env_cfg.epsilon,
        seed,
        episodes,
        aborted,
        mean_fidelity,
        std_fidelity,
        curve_mean,
        curve_std,
        mean_steps_to_threshold: steps.mean,
        std_steps_to_threshold: steps.std,
        unreached_count: steps.unreached,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdRow {
    pub scenario: Scenario,
    pub noise: NoiseKind,
    pub epsilon: f64,
    pub alpha: Option<f64>,
}

/// Per (scenario, noise, ε) curve: scanning α upward from the smallest grid
/// value, the last α before the mean terminal fidelity first drops below
/// `f_star`. Absent when the smallest α already fails.
pub fn threshold_alpha(results: &[CellResult], f_star: f64) -> Vec<ThresholdRow> {
    let mut keys: Vec<(Scenario, NoiseKind, f64)> = results.iter().map(|r| (r.scenario, r.noise, r.epsilon)).collect();
    keys.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    keys.dedup();
    keys.into_iter()
        .map(|(scenario, noise, epsilon)| {
            let mut curve: Vec<&CellResult> = results
                .iter()
                .filter(|r| r.scenario == scenario && r.noise == noise && r.epsilon == epsilon)
                .collect();
            curve.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            let alpha = curve
                .iter()
                .take_while(|r| r.mean_fidelity >= f_star)
                .last()
                .map(|r| r.alpha);
            ThresholdRow {
                scenario,
                noise,
                epsilon,
                alpha,
            }
        })
        .collect()
}
