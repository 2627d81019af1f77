//! Resolved settings: built-in defaults, then the config file, then flags.
//! The merged result renders back to a config file, which is the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gradrop::bench::{SweepConfig, TrainConfig};
use gradrop::config::{parse_list, parse_value, Ini};
use gradrop::optim::OptimizerKind;
use gradrop::pgg::{BenefitMode, GameConfig, GameMode};
use gradrop::stochastics::TargetNoiseSpec;

/// Every config key: (section, key, default, description).
pub const KEYS: &[(&str, &str, &str, &str)] = &[
    ("general", "root_seed", "0", "root of every random stream"),
    ("general", "out_dir", "out", "output directory (GRADROP_OUT_DIR overrides)"),
    ("general", "registry", "datasets.ini", "dataset registry file"),
    ("training", "epochs", "50", "training epochs"),
    ("training", "batch_size", "64", "minibatch size"),
    ("training", "hidden_layers", "5", "hidden layers"),
    ("training", "hidden_width", "150", "neurons per hidden layer"),
    ("training", "optimizer", "adam", "adam or sgd"),
    ("training", "learning_rate", "0.001", "step size"),
    ("training", "beta1", "0.9", "Adam first-moment decay"),
    ("training", "beta2", "0.999", "Adam second-moment decay"),
    ("training", "epsilon", "1e-8", "Adam denominator guard"),
    ("training", "train_fraction", "0.8", "stratified train share of each dataset"),
    ("train", "dataset", "", "registered dataset name"),
    ("train", "seed", "0", "split/initialization seed"),
    ("train", "p", "1", "gradient keep probability in [0, 1]"),
    ("train", "target_noise", "NoNoise", "NoNoise, TDS<x> or StableA<a>B<b>[F<f>]"),
    ("sweep", "dataset", "", "registered dataset name"),
    ("sweep", "seeds", "0", "comma-separated seeds"),
    ("sweep", "p_grid", "0,0.01,0.05,0.5,0.9,0.95,0.99", "comma-separated keep probabilities"),
    ("sweep", "target_noises", "NoNoise", "comma-separated target-noise specs"),
    ("sweep", "amplitudes", "0,0.2,0.4,0.6,0.8,1,1.2,1.4,1.6,1.8,2", "input-noise amplitudes, increasing"),
    ("sweep", "repetitions", "8", "noisy evaluations per amplitude"),
    ("sweep", "jobs", "1", "cells trained in parallel"),
    ("game", "mode", "baseline", "comma-separated: baseline, classical-dropout, gradient-dropout"),
    ("game", "p", "1", "comma-separated learning probabilities (gradient-dropout)"),
    ("game", "pd", "1", "comma-separated activity probabilities (classical-dropout)"),
    ("game", "tau", "0.1", "comma-separated softmax temperatures"),
    ("game", "benefit_mode", "shared", "shared or contingent"),
    ("game", "init", "0.5", "initial fraction of composers"),
    ("game", "players", "200", "number of agents"),
    ("game", "kappa", "2", "benefit factor"),
    ("game", "cost", "0.5", "cost of composing"),
    ("game", "lambda", "0.1", "Q-value learning rate"),
    ("game", "rounds", "1000", "rounds per simulation"),
    ("game", "seed", "0", "simulation seed"),
];

pub fn keys_help() -> String {
    let mut out = String::from("Config file keys (`[section]` then `key = value`; flags win over the file):\n");
    let mut current = "";
    for (section, key, default, doc) in KEYS {
        if *section != current {
            let _ = writeln!(out, "\n  [{section}]");
            current = section;
        }
        let shown = if default.is_empty() { "(none)" } else { default };
        let _ = writeln!(out, "    {key:<15} {doc} [default: {shown}]");
    }
    out
}

#[derive(Debug, Clone)]
pub struct Settings {
    ini: Ini,
}

impl Settings {
    /// Defaults overlaid with `file`, which may only use documented keys.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut ini = Ini::default();
        for (section, key, default, _) in KEYS {
            ini.set(section, key, *default);
        }
        if let Some(path) = file {
            let user = Ini::load(path).with_context(|| format!("reading config {}", path.display()))?;
            let mut allowed: Vec<(&str, Vec<&str>)> = Vec::new();
            for (section, key, _, _) in KEYS {
                match allowed.iter_mut().find(|(s, _)| s == section) {
                    Some((_, keys)) => keys.push(key),
                    None => allowed.push((section, vec![key])),
                }
            }
            let allowed: Vec<(&str, &[&str])> = allowed.iter().map(|(s, k)| (*s, k.as_slice())).collect();
            user.check_keys(&allowed)?;
            for s in &user.sections {
                for e in &s.entries {
                    ini.set(&s.name, &e.key, e.value.clone());
                }
            }
        }
        Ok(Self { ini })
    }

    /// Applies a flag when it was given.
    pub fn set<T: ToString>(&mut self, section: &str, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.ini.set(section, key, v.to_string());
        }
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        self.ini.get(section, key).unwrap_or_default()
    }

    fn value<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        Ok(parse_value(&format!("{section}.{key}"), self.raw(section, key))?)
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>> {
        Ok(parse_list(&format!("{section}.{key}"), self.raw(section, key))?)
    }

    pub fn manifest(&self) -> String {
        self.ini.render()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("general", "out_dir"))
    }

    pub fn registry(&self) -> PathBuf {
        PathBuf::from(self.raw("general", "registry"))
    }

    fn dataset(&self, section: &str) -> Result<String> {
        let name = self.raw(section, "dataset").trim();
        if name.is_empty() {
            bail!("no dataset given (use --dataset or {section}.dataset)");
        }
        Ok(name.to_string())
    }

    fn optimizer(&self) -> Result<OptimizerKind> {
        let lr = self.value("training", "learning_rate")?;
        let kind = match self.value::<OptimizerKind>("training", "optimizer")? {
            OptimizerKind::Sgd { .. } => OptimizerKind::Sgd { lr },
            OptimizerKind::Adam { .. } => OptimizerKind::Adam {
                lr,
                beta1: self.value("training", "beta1")?,
                beta2: self.value("training", "beta2")?,
                eps: self.value("training", "epsilon")?,
            },
        };
        kind.validate()?;
        Ok(kind)
    }

    /// The sweep-level settings shared by `train` and `sweep`.
    fn base_sweep(&self, section: &str) -> Result<SweepConfig> {
        Ok(SweepConfig {
            root_seed: self.value("general", "root_seed")?,
            epochs: self.value("training", "epochs")?,
            batch_size: self.value("training", "batch_size")?,
            hidden_layers: self.value("training", "hidden_layers")?,
            hidden_width: self.value("training", "hidden_width")?,
            optimizer: self.optimizer()?,
            train_fraction: self.value("training", "train_fraction")?,
            ..SweepConfig::new(self.dataset(section)?)
        })
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        let cfg = SweepConfig {
            seeds: self.list("sweep", "seeds")?,
            p_grid: self.list("sweep", "p_grid")?,
            target_noises: self.list("sweep", "target_noises")?,
            amplitudes: self.list("sweep", "amplitudes")?,
            repetitions: self.value("sweep", "repetitions")?,
            ..self.base_sweep("sweep")?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn jobs(&self) -> Result<usize> {
        self.value("sweep", "jobs")
    }

    /// A single-cell sweep describing one `train` run, plus its cell seed.
    pub fn train(&self) -> Result<(SweepConfig, u64, TrainConfig)> {
        let sweep = self.base_sweep("train")?;
        let tc = TrainConfig {
            p: Some(self.value("train", "p")?),
            target_noise: self.value::<TargetNoiseSpec>("train", "target_noise")?,
            optimizer: sweep.optimizer,
            epochs: sweep.epochs,
            batch_size: sweep.batch_size,
        };
        tc.validate()?;
        if !(sweep.train_fraction > 0.0 && sweep.train_fraction < 1.0) {
            bail!("train fraction {} must lie in (0, 1)", sweep.train_fraction);
        }
        Ok((sweep, self.value("train", "seed")?, tc))
    }

    /// One game per (mode, probability, temperature) combination.
    pub fn games(&self) -> Result<Vec<GameConfig>> {
        let base = GameConfig {
            num_players: self.value("game", "players")?,
            benefit_factor: self.value("game", "kappa")?,
            compose_cost: self.value("game", "cost")?,
            benefit_mode: self.value::<BenefitMode>("game", "benefit_mode")?,
            q_learning_rate: self.value("game", "lambda")?,
            rounds: self.value("game", "rounds")?,
            initial_compose_fraction: self.value("game", "init")?,
            seed: self.value("game", "seed")?,
            ..GameConfig::default()
        };
        let modes: Vec<GameMode> = self.list("game", "mode")?;
        let taus: Vec<f64> = self.list("game", "tau")?;
        let ps: Vec<f64> = self.list("game", "p")?;
        let pds: Vec<f64> = self.list("game", "pd")?;
        if modes.is_empty() || taus.is_empty() || ps.is_empty() || pds.is_empty() {
            bail!("game.mode, game.tau, game.p and game.pd must not be empty");
        }
        let mut games = Vec::new();
        for mode in modes {
            let variants: Vec<GameMode> = match mode {
                GameMode::Baseline => vec![GameMode::Baseline],
                GameMode::ClassicalDropout { .. } => pds.iter().map(|&pd| GameMode::ClassicalDropout { pd }).collect(),
                GameMode::GradientDropout { .. } => ps.iter().map(|&p| GameMode::GradientDropout { p }).collect(),
            };
            for mode in variants {
                for &tau in &taus {
                    let g = GameConfig { mode, exploration_temp: tau, ..base.clone() };
                    g.validate()?;
                    games.push(g);
                }
            }
        }
        Ok(games)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let mut s = Settings::load(None).unwrap();
        s.set("sweep", "dataset", Some("d"));
        let sweep = s.sweep().unwrap();
        let lib = SweepConfig::new("d");
        assert_eq!(sweep, lib);
        let game = &s.games().unwrap()[0];
        assert_eq!(*game, GameConfig::default());
    }

    #[test]
    fn file_keys_are_checked_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ini");
        std::fs::write(&path, "[training]\nepochs = 3\n").unwrap();
        let mut s = Settings::load(Some(&path)).unwrap();
        assert_eq!(s.raw("training", "epochs"), "3");
        s.set("training", "epochs", Some(7));
        assert_eq!(s.raw("training", "epochs"), "7");

        std::fs::write(&path, "[training]\nepoch = 3\n").unwrap();
        let err = Settings::load(Some(&path)).unwrap_err().to_string();
        assert!(err.contains("epoch"), "{err}");
    }

    #[test]
    fn game_lists_expand() {
        let mut s = Settings::load(None).unwrap();
        s.set("game", "mode", Some("baseline,gradient-dropout"));
        s.set("game", "p", Some("0.5,0.9"));
        s.set("game", "tau", Some("0.1,0.2"));
        assert_eq!(s.games().unwrap().len(), 2 + 4);
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for (_, key, _, _) in KEYS {
            assert!(help.contains(key));
        }
    }
}
