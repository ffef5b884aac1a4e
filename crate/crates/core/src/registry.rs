//! Name-keyed registry of meta-policy builders.
//!
//! Every learning rule is constructed behind `Box<dyn MetaPolicy>` so that
//! experiment drivers and the CLI select algorithms by name at runtime.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::baselines::{Cola, ColaModel, Hola, MetaPolicy, MmamlInit, Naive};
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::meva::{load_meva, tournament_alpha};

/// Arguments shared by all builders; unset fields take per-game defaults.
#[derive(Clone, Debug)]
pub struct PolicyArgs {
    pub game: GameSpec,
    pub alpha: Option<f64>,
    /// Imagined step size of LOLA-type rules.
    pub alpha_im: Option<f64>,
    /// Meta-discount used when deploying MeVa.
    pub gamma: Option<f64>,
    pub checkpoint: Option<PathBuf>,
}

impl PolicyArgs {
    pub fn new(game: &GameSpec) -> Self {
        Self { game: game.clone(), alpha: None, alpha_im: None, gamma: None, checkpoint: None }
    }

    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint = Some(path.into());
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| tournament_alpha(&self.game))
    }

    fn checkpoint(&self, name: &str) -> Result<&PathBuf> {
        self.checkpoint.as_ref().ok_or_else(|| Error::Config(format!("meta-policy '{name}' needs a checkpoint")))
    }
}

pub type Builder = fn(&PolicyArgs) -> Result<Box<dyn MetaPolicy>>;

struct Entry {
    summary: &'static str,
    build: Builder,
}

pub struct Registry {
    entries: BTreeMap<String, Entry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    /// All built-in meta-policies.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register("naive", "simultaneous gradient ascent", |a| Ok(Box::new(Naive { alpha: a.alpha() })));
        r.register("lola", "look-ahead through one imagined naive opponent step", |a| {
            let alpha = a.alpha();
            Ok(Box::new(Hola::lola(alpha, a.alpha_im.unwrap_or(alpha))))
        });
        r.register("hola2", "second-order look-ahead", |a| Ok(Box::new(hola(a, 2))));
        r.register("hola3", "third-order look-ahead", |a| Ok(Box::new(hola(a, 3))));
        r.register("cola", "learned consistent look-ahead field", |a| {
            let model = ColaModel::load(a.checkpoint("cola")?)?;
            Ok(Box::new(Cola { model, alpha: a.alpha() }))
        });
        r.register("mmaml", "meta-learned initialization with naive updates", |a| {
            let init = MmamlInit::load(a.checkpoint("mmaml")?)?;
            if init.side > 1 {
                return Err(Error::Checkpoint(format!("bad M-MAML side {}", init.side)));
            }
            Ok(Box::new(init))
        });
        r.register("meva", "ascent on a learned meta-value", |a| {
            let (m, meta) = load_meva(a.checkpoint("meva")?, a.alpha, a.gamma)?;
            if meta.game != a.game.name() {
                return Err(Error::Config(format!(
                    "checkpoint was trained on {} but the game is {}",
                    meta.game,
                    a.game.name()
                )));
            }
            Ok(Box::new(m))
        });
        r
    }

    pub fn register(&mut self, name: &str, summary: &'static str, build: Builder) {
        self.entries.insert(name.to_string(), Entry { summary, build });
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn summary(&self, name: &str) -> Option<&'static str> {
        self.entries.get(name).map(|e| e.summary)
    }

    pub fn build(&self, name: &str, args: &PolicyArgs) -> Result<Box<dyn MetaPolicy>> {
        let e = self.entries.get(name).ok_or_else(|| {
            Error::Config(format!("unknown meta-policy '{name}' (known: {})", self.names().join(", ")))
        })?;
        (e.build)(args)
    }
}

fn hola(a: &PolicyArgs, order: usize) -> Hola {
    let mut h = Hola::new(order, a.alpha());
    if let Some(im) = a.alpha_im {
        h.alpha_im = im;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{lola_step, naive_step};
    use crate::deriv::JointPolicy;

    #[test]
    fn standard_names() {
        let r = Registry::standard();
        assert_eq!(r.names(), ["cola", "hola2", "hola3", "lola", "meva", "mmaml", "naive"]);
        assert!(r.summary("lola").is_some());
    }

    #[test]
    fn built_rules_match_functional_forms() {
        let game = GameSpec::ipd();
        let x = JointPolicy::new(2, 5, (0..10).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let r = Registry::standard();
        let args = PolicyArgs::new(&game);
        let naive = r.build("naive", &args).unwrap();
        assert_eq!(naive.step(&game, &x, 1).unwrap(), naive_step(&game, &x, 25.0).unwrap().row(1));
        let lola = r.build("lola", &args.clone().with_alpha(2.0)).unwrap();
        assert_eq!(lola.step(&game, &x, 0).unwrap(), lola_step(&game, &x, 2.0, 2.0).unwrap().row(0));
        assert_eq!(r.build("hola3", &args).unwrap().name(), "hola3");
    }

    #[test]
    fn unknown_and_missing_checkpoint_errors() {
        let r = Registry::standard();
        let args = PolicyArgs::new(&GameSpec::imp());
        assert!(matches!(r.build("mfos", &args), Err(Error::Config(_))));
        assert!(matches!(r.build("meva", &args), Err(Error::Config(_))));
        let missing = args.with_checkpoint("/nonexistent/meva.json");
        assert!(matches!(r.build("meva", &missing), Err(Error::MissingCheckpoint(_))));
        assert!(matches!(r.build("cola", &missing), Err(Error::MissingCheckpoint(_))));
    }
}
