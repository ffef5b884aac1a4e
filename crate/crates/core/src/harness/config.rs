//! Line-oriented `key = value` configuration files.
//!
//! MeVa settings use bare keys (`lr = 3e-4`); every other spec uses a dotted
//! section prefix (`tournament.pairs = 256`). Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::baselines::{ColaConfig, MmamlConfig};
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::meva::{Exploration, MevaConfig, PolicyInit};
use crate::valuenet::{Activation, Formulation, ScaleShift};

use super::{AblationSpec, BasinSpec, ExtortionSpec, Statistic, TournamentSpec, TrajectorySpec};

/// Parsed entries in file order, with their line numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: Vec<(usize, String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key or value")));
            }
            if let Some(prev) = seen.insert(k.to_string(), line_no) {
                return Err(Error::Config(format!("line {line_no}: key '{k}' already set on line {prev}")));
            }
            entries.push((line_no, k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Every configurable spec, filled with per-game defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub meva: MevaConfig,
    pub cola: ColaConfig,
    pub mmaml: MmamlConfig,
    pub tournament: TournamentSpec,
    pub basin: BasinSpec,
    pub trajectories: TrajectorySpec,
    pub extortion: ExtortionSpec,
    pub ablation: AblationSpec,
}

impl Settings {
    pub fn for_game(game: &GameSpec) -> Self {
        Self {
            meva: MevaConfig::for_game(game),
            cola: ColaConfig::default(),
            mmaml: MmamlConfig::for_game(game),
            tournament: TournamentSpec::new(game),
            basin: BasinSpec::default(),
            trajectories: TrajectorySpec::default(),
            extortion: ExtortionSpec::default(),
            ablation: AblationSpec::default(),
        }
    }

    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        for (line, key, value) in &file.entries {
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        self.meva.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.split_once('.') {
            None => set_meva(&mut self.meva, key, value),
            Some(("cola", k)) => set_cola(&mut self.cola, k, value),
            Some(("mmaml", k)) => set_mmaml(&mut self.mmaml, k, value),
            Some(("tournament", k)) => set_tournament(&mut self.tournament, k, value),
            Some(("basin", k)) => set_basin(&mut self.basin, k, value),
            Some(("trajectories", k)) => set_trajectories(&mut self.trajectories, k, value),
            Some(("extort", k)) => set_extortion(&mut self.extortion, k, value),
            Some(("ablate", k)) => set_ablation(&mut self.ablation, k, value),
            Some(_) => Err(unknown(key)),
        }
    }
}

fn unknown(key: &str) -> Error {
    Error::Config(format!("unknown key '{key}'"))
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a finite number")))
}

fn uint(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' is not on/off"))),
    }
}

fn choice<T>(key: &str, v: &str, parsed: Option<T>) -> Result<T> {
    parsed.ok_or_else(|| Error::Config(format!("{key}: unrecognized value '{v}'")))
}

fn seed_list(key: &str, v: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = v
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| Error::Config(format!("{key}: bad seed '{s}'"))))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config(format!("{key}: no seeds")));
    }
    Ok(seeds)
}

fn set_meva(c: &mut MevaConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "alpha" => c.alpha = num(key, v)?,
        "lr" => c.lr = num(key, v)?,
        "weight_decay" => c.weight_decay = num(key, v)?,
        "episode_len" => c.episode_len = uint(key, v)?,
        "stride" => c.stride = uint(key, v)?,
        "lambda" => c.lambda = num(key, v)?,
        "inertia" => c.inertia = num(key, v)?,
        "quantiles" => c.quantiles = uint(key, v)?,
        "gamma_eval" => c.gamma_eval = num(key, v)?,
        "formulation" => c.formulation = choice(key, v, Formulation::parse(v))?,
        "exploration" => c.exploration = choice(key, v, Exploration::parse(v))?,
        "flip_prob" => c.flip_prob = num(key, v)?,
        "variable_gamma" => c.variable_gamma = flag(key, v)?,
        "target_net" => c.target_net = flag(key, v)?,
        "distributional" => c.distributional = flag(key, v)?,
        "batch" => c.batch = uint(key, v)?,
        "outer_loops" => c.outer_loops = uint(key, v)?,
        "init_uniform" => c.init = PolicyInit::Uniform(num(key, v)?),
        "init_normal" => c.init = PolicyInit::Normal(num(key, v)?),
        "scale_shift" => c.scale_shift = choice(key, v, ScaleShift::parse(v))?,
        "final_activation" => c.final_activation = choice(key, v, Activation::parse(v))?,
        "long_td_batch" => c.long_td_batch = uint(key, v)?,
        "long_td_horizon" => c.long_td_horizon = uint(key, v)?,
        "long_td_every" => c.long_td_every = uint(key, v)?.max(1),
        "monitor_batch" => c.monitor_batch = uint(key, v)?,
        "monitor_steps" => c.monitor_steps = uint(key, v)?,
        "monitor_reset" => c.monitor_reset = uint(key, v)?.max(1),
        "exploit_monitor" => c.exploit_monitor = flag(key, v)?,
        _ => return Err(unknown(key)),
    }
    Ok(())
}

fn set_cola(c: &mut ColaConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "iterations" => c.iterations = uint(key, v)?,
        "batch" => c.batch = uint(key, v)?,
        "lr" => c.lr = num(key, v)?,
        "alpha_max" => c.alpha_max = num(key, v)?,
        "init_box" => c.init_box = num(key, v)?,
        "walker_len" => c.walker_len = uint(key, v)?,
        "patience" => c.patience = uint(key, v)?,
        _ => return Err(unknown(&format!("cola.{key}"))),
    }
    Ok(())
}

fn set_mmaml(c: &mut MmamlConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "iterations" => c.iterations = uint(key, v)?,
        "batch" => c.batch = uint(key, v)?,
        "lr" => c.lr = num(key, v)?,
        "unroll" => c.unroll = uint(key, v)?,
        "gamma_meta" => c.gamma_meta = num(key, v)?,
        "alpha_self" => c.alpha_self = num(key, v)?,
        "alpha_opponent" => c.alpha_opponent = num(key, v)?,
        _ => return Err(unknown(&format!("mmaml.{key}"))),
    }
    Ok(())
}

fn set_tournament(t: &mut TournamentSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "row" => t.row = v.to_string(),
        "col" => t.col = v.to_string(),
        "pairs" => t.pairs = uint(key, v)?,
        "steps" => t.steps = uint(key, v)?,
        "seeds" => t.seeds = seed_list(key, v)?,
        "gamma_eval" => t.gamma_eval = num(key, v)?,
        "alpha" => t.alpha = Some(num(key, v)?),
        "statistic" => t.statistic = choice(key, v, Statistic::parse(v))?,
        "model_dir" => t.model_dir = PathBuf::from(v),
        _ => return Err(unknown(&format!("tournament.{key}"))),
    }
    Ok(())
}

fn set_basin(b: &mut BasinSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "resolution" => b.resolution = uint(key, v)?,
        "half_width" => b.half_width = num(key, v)?,
        "algorithm" => b.algorithm = v.to_string(),
        "alpha" => b.alpha = Some(num(key, v)?),
        "gamma" => b.gamma = Some(num(key, v)?),
        "steps" => b.steps = uint(key, v)?,
        "checkpoint" => b.checkpoint = Some(PathBuf::from(v)),
        _ => return Err(unknown(&format!("basin.{key}"))),
    }
    Ok(())
}

fn set_trajectories(t: &mut TrajectorySpec, key: &str, v: &str) -> Result<()> {
    match key {
        "batch" => t.batch = uint(key, v)?,
        "steps" => t.steps = uint(key, v)?,
        "half_width" => t.half_width = num(key, v)?,
        _ => return Err(unknown(&format!("trajectories.{key}"))),
    }
    Ok(())
}

fn set_extortion(e: &mut ExtortionSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "pairs" => e.pairs = uint(key, v)?,
        "steps" => e.steps = uint(key, v)?,
        "every" => e.every = uint(key, v)?.max(1),
        "opponents" => e.opponents = uint(key, v)?,
        "checkpoint" => e.checkpoint = Some(PathBuf::from(v)),
        _ => return Err(unknown(&format!("extort.{key}"))),
    }
    Ok(())
}

fn set_ablation(a: &mut AblationSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "variants" => a.variants = v.split(',').map(|s| s.trim().to_string()).collect(),
        "seeds" => a.seeds = seed_list(key, v)?,
        "outer_loops" => a.outer_loops = uint(key, v)?,
        _ => return Err(unknown(&format!("ablate.{key}"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let f = ConfigFile::parse("# header\n lr = 3e-4 # inline\n\ntournament.pairs=16\n").unwrap();
        assert_eq!(f.entries.len(), 2);
        let mut s = Settings::for_game(&GameSpec::ipd());
        s.apply(&f).unwrap();
        assert_eq!(s.meva.lr, 3e-4);
        assert_eq!(s.tournament.pairs, 16);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut s = Settings::for_game(&GameSpec::ipd());
        for bad in ["learning_rate = 1", "tournament.pair = 3", "nosection.x = 1", "lr", "lr = abc", "target_net = maybe"] {
            let f = ConfigFile::parse(bad);
            let r = f.and_then(|f| s.apply(&f));
            assert!(matches!(r, Err(Error::Config(_))), "{bad}");
        }
        assert!(ConfigFile::parse("lr = 1\nlr = 2").is_err());
        let f = ConfigFile::parse("lambda = 1.5").unwrap();
        assert!(matches!(s.apply(&f), Err(Error::Config(_))));
    }

    #[test]
    fn every_section_accepts_its_keys() {
        let text = "formulation = V\nexploration = param_noise\nvariable_gamma = off\ninit_normal = 0.5\n\
                    cola.iterations = 5\nmmaml.unroll = 7\ntournament.seeds = 1, 2,3\ntournament.statistic = mean\n\
                    basin.algorithm = lola\nbasin.alpha = 0.5\ntrajectories.batch = 4\nextort.every = 3\n\
                    ablate.variants = full,fixed_gamma\n";
        let mut s = Settings::for_game(&GameSpec::ipd());
        s.apply(&ConfigFile::parse(text).unwrap()).unwrap();
        assert_eq!(s.meva.formulation, Formulation::V);
        assert_eq!(s.meva.init, PolicyInit::Normal(0.5));
        assert_eq!(s.cola.iterations, 5);
        assert_eq!(s.mmaml.unroll, 7);
        assert_eq!(s.tournament.seeds, [1, 2, 3]);
        assert_eq!(s.tournament.statistic, Statistic::Mean);
        assert_eq!(s.basin.alpha, Some(0.5));
        assert_eq!(s.trajectories.batch, 4);
        assert_eq!(s.extortion.every, 3);
        assert_eq!(s.ablation.variants, ["full", "fixed_gamma"]);
    }
}
