//! Sweep configuration and its line-oriented file format.
//!
//! ```text
//! # comment
//! [sweep]
//! preset    = desk            # or full; fills grids before other keys
//! noises    = depolarizing, amplitude_damping, random_permutation
//! alphas    = 0.0, 0.2, 0.4, 0.6
//! epsilons  = 0.1, 0.2
//! scenarios = basic, mbs, dbs, qomdp
//! episodes  = 200
//! horizon   = 20
//! seed      = 42
//! f_star    = 0.9
//!
//! [training]
//! timesteps       = 200000
//! train_on_demand = true
//! checkpoints     = checkpoints   # relative to the config file
//!
//! [output]
//! dir = results                   # relative to the config file
//! ```
//!
//! Keys are unique within a section; lists are comma-separated.

use std::path::{Path, PathBuf};

use super::Scenario;
use crate::channels::{NoiseKind, EPSILON_MAX};
use crate::dynamics::EnvConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub timesteps: usize,
    pub train_on_demand: bool,
    pub checkpoint_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub noises: Vec<NoiseKind>,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    pub episodes: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub f_star: f64,
    pub training: TrainingConfig,
    pub out_dir: PathBuf,
}

impl SweepConfig {
    /// Full grid: α = 0, 0.1, …, 1 and six ε values, 1000 episodes.
    pub fn full_grid() -> Self {
        Self {
            noises: NoiseKind::ALL.to_vec(),
            alphas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            epsilons: vec![0.1, 0.15, 0.175, 0.2, 0.25, 0.3],
            scenarios: Scenario::ALL.to_vec(),
            episodes: 1000,
            horizon: EnvConfig::DEFAULT_HORIZON,
            master_seed: 0,
            f_star: 0.9,
            training: TrainingConfig {
                timesteps: 200_000,
                train_on_demand: true,
                checkpoint_dir: PathBuf::from("checkpoints"),
            },
            out_dir: PathBuf::from("results"),
        }
    }

    /// Reduced grid: α ∈ {0, 0.2, 0.4, 0.6}, ε ∈ {0.1, 0.2}, 200 episodes.
    pub fn desk_scale() -> Self {
        Self::full_grid().with_desk_grid()
    }

    pub fn with_desk_grid(mut self) -> Self {
        self.alphas = vec![0.0, 0.2, 0.4, 0.6];
        self.epsilons = vec![0.1, 0.2];
        self.episodes = 200;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.scenarios.len() * self.noises.len() * self.alphas.len() * self.epsilons.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("scenario list is empty".into()));
        }
        if self.noises.is_empty() || self.alphas.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Config("noise, alpha and epsilon grids must be non-empty".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.f_star > 0.0 && self.f_star <= 1.0) {
            return Err(Error::param("f_star", self.f_star, "(0, 1]"));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::param("alpha", a, "[0, 1]"));
            }
        }
        for &e in &self.epsilons {
            if !(0.0..=EPSILON_MAX).contains(&e) {
                return Err(Error::param("epsilon", e, format!("[0, {EPSILON_MAX}]")));
            }
        }
        fn unique<T: PartialEq>(xs: &[T]) -> bool {
            xs.iter().enumerate().all(|(i, x)| !xs[..i].contains(x))
        }
        if !unique(&self.alphas) || !unique(&self.epsilons) || !unique(&self.noises) || !unique(&self.scenarios) {
            return Err(Error::Config("grids must not contain duplicates".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses the config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String, String, usize)> = Vec::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !matches!(name, "sweep" | "training" | "output") {
                    return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected key = value")))?;
            if section.is_empty() {
                return Err(Error::Config(format!("line {lineno}: key outside a section")));
            }
            let key = k.trim().to_string();
            if entries.iter().any(|(s, k2, _, _)| *s == section && *k2 == key) {
                return Err(Error::Config(format!("line {lineno}: duplicate key {section}.{key}")));
            }
            entries.push((section.clone(), key, v.trim().to_string(), lineno));
        }

        let mut cfg = SweepConfig::full_grid();
        if let Some((_, _, v, lineno)) = entries.iter().find(|(s, k, _, _)| s == "sweep" && k == "preset") {
            cfg = match v.as_str() {
                "desk" => SweepConfig::desk_scale(),
                "full" => SweepConfig::full_grid(),
                other => return Err(Error::Config(format!("line {lineno}: unknown preset '{other}'"))),
            };
        }
        for (section, key, value, lineno) in &entries {
            let err = |msg: String| Error::Config(format!("line {lineno}: {section}.{key}: {msg}"));
            match (section.as_str(), key.as_str()) {
                ("sweep", "preset") => {}
                ("sweep", "noises") => cfg.noises = list(value, |s| s.parse()).map_err(|e| err(e.to_string()))?,
                ("sweep", "alphas") => cfg.alphas = list(value, parse_f64).map_err(|e| err(e.to_string()))?,
                ("sweep", "epsilons") => cfg.epsilons = list(value, parse_f64).map_err(|e| err(e.to_string()))?,
                ("sweep", "scenarios") => cfg.scenarios = list(value, |s| s.parse()).map_err(|e| err(e.to_string()))?,
                ("sweep", "episodes") => cfg.episodes = value.parse().map_err(|_| err("expected an integer".into()))?,
                ("sweep", "horizon") => cfg.horizon = value.parse().map_err(|_| err("expected an integer".into()))?,
                ("sweep", "seed") => cfg.master_seed = value.parse().map_err(|_| err("expected an integer".into()))?,
                ("sweep", "f_star") => cfg.f_star = parse_f64(value).map_err(|e| err(e.to_string()))?,
                ("training", "timesteps") => {
                    cfg.training.timesteps = value.parse().map_err(|_| err("expected an integer".into()))?
                }
                ("training", "train_on_demand") => {
                    cfg.training.train_on_demand = match value.as_str() {
                        "true" => true,
                        "false" => false,
                        _ => return Err(err("expected true or false".into())),
                    }
                }
                ("training", "checkpoints") => cfg.training.checkpoint_dir = base_dir.join(value),
                ("output", "dir") => cfg.out_dir = base_dir.join(value),
                _ => return Err(err("unknown key".into())),
            }
        }
        if !entries.iter().any(|(s, k, _, _)| s == "training" && k == "checkpoints") {
            cfg.training.checkpoint_dir = base_dir.join(&cfg.training.checkpoint_dir);
        }
        if !entries.iter().any(|(s, k, _, _)| s == "output" && k == "dir") {
            cfg.out_dir = base_dir.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("'{s}' is not a number")))
}

fn list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(f)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let t = SweepConfig::full_grid();
        assert_eq!(t.alphas.len(), 11);
        assert_eq!(t.alphas[3], 0.3);
        assert_eq!(t.epsilons, vec![0.1, 0.15, 0.175, 0.2, 0.25, 0.3]);
        assert_eq!(t.episodes, 1000);
        let basic_only = SweepConfig {
            scenarios: vec![Scenario::Basic],
            ..t
        };
        assert_eq!(basic_only.n_cells(), 198);
        let d = SweepConfig::desk_scale();
        assert_eq!((d.alphas.len(), d.epsilons.len(), d.episodes), (4, 2, 200));
    }

    #[test]
    fn parse_full_file() {
        let text = "
            # desk run
            [sweep]
            preset = desk
            noises = random_permutation
            alphas = 0.0, 0.3
            scenarios = basic, mbs
            seed = 7
            [training]
            train_on_demand = false
            checkpoints = ck
            [output]
            dir = out
        ";
        let c = SweepConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.noises, vec![NoiseKind::RandomPermutation]);
        assert_eq!(c.alphas, vec![0.0, 0.3]);
        assert_eq!(c.epsilons, vec![0.1, 0.2]);
        assert_eq!(c.episodes, 200);
        assert_eq!(c.scenarios, vec![Scenario::Basic, Scenario::Mbs]);
        assert_eq!(c.master_seed, 7);
        assert!(!c.training.train_on_demand);
        assert_eq!(c.training.checkpoint_dir, PathBuf::from("/base/ck"));
        assert_eq!(c.out_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn parse_errors() {
        let base = Path::new(".");
        assert!(SweepConfig::parse("[sweep]\nscenarios =\n", base).is_err());
        assert!(SweepConfig::parse("[sweep]\nalphas = 0.1, 1.5\n", base).is_err());
        assert!(SweepConfig::parse("[sweep]\nfoo = 1\n", base).is_err());
        assert!(SweepConfig::parse("seed = 1\n", base).is_err());
        assert!(SweepConfig::parse("[nope]\n", base).is_err());
        assert!(SweepConfig::parse("[sweep]\nseed = 1\nseed = 2\n", base).is_err());
        assert!(SweepConfig::parse("[sweep]\nepsilons = 0.4\n", base).is_err());
    }
}
