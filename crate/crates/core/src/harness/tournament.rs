use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::MetaPolicy;
use crate::deriv::JointPolicy;
use crate::error::{Error, Result};
use crate::games::{GameSpec, Symmetry};
use crate::meva::{play_pairs, PolicyInit};
use crate::registry::{PolicyArgs, Registry};

/// Which point of a match is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    /// Returns after the last update.
    Final,
    /// Average return over every step of the match, including the start.
    Mean,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Final => "final",
            Statistic::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "final" => Some(Statistic::Final),
            "mean" => Some(Statistic::Mean),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TournamentSpec {
    pub game: GameSpec,
    pub row: String,
    pub col: String,
    pub pairs: usize,
    pub steps: usize,
    /// Model seeds; pairs are spread evenly over them.
    pub seeds: Vec<u64>,
    pub gamma_eval: f64,
    /// Step size override for the nonparametric rules.
    pub alpha: Option<f64>,
    pub statistic: Statistic,
    pub model_dir: PathBuf,
}

impl TournamentSpec {
    pub fn new(game: &GameSpec) -> Self {
        Self {
            game: game.clone(),
            row: "meva".into(),
            col: "naive".into(),
            pairs: 1024,
            steps: 300,
            seeds: (0..10).collect(),
            gamma_eval: 0.95,
            alpha: None,
            statistic: Statistic::Final,
            model_dir: PathBuf::from("models"),
        }
    }
}

fn is_parametric(algo: &str) -> bool {
    matches!(algo, "meva" | "mmaml" | "cola")
}

/// Opponent class a MeVa model must have been trained against; M-MAML counts as naive.
pub fn opponent_class(opponent: &str) -> &str {
    match opponent {
        "mmaml" => "naive",
        other => other,
    }
}

/// Which side(s) a stored model learned to play.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSide {
    Player(usize),
    SelfPlay,
}

impl ModelSide {
    fn tag(self) -> String {
        match self {
            ModelSide::Player(p) => format!("p{}", p + 1),
            ModelSide::SelfPlay => "self".into(),
        }
    }
}

/// Checkpoint file naming shared by the training commands and the tournament.
pub fn model_path(dir: &Path, algo: &str, game: &str, opponent: &str, side: ModelSide, seed: u64) -> PathBuf {
    let name = match algo {
        "meva" => format!("meva-{game}-vs-{opponent}-{}-s{seed}.json", side.tag()),
        "mmaml" => format!("mmaml-{game}-{}-s{seed}.json", side.tag()),
        _ => format!("{algo}-{game}-s{seed}.json"),
    };
    dir.join(name)
}

/// Locate the checkpoint for a parametric rule playing `player`.
///
/// Symmetric games may fall back on the other side's model; antisymmetric
/// games refuse such a transfer.
fn resolve_checkpoint(spec: &TournamentSpec, algo: &str, opponent: &str, player: usize, seed: u64) -> Result<PathBuf> {
    let game = spec.game.name();
    if algo == "cola" {
        return Ok(model_path(&spec.model_dir, algo, game, "", ModelSide::SelfPlay, seed));
    }
    if algo == "meva" && opponent == "meva" {
        return Ok(model_path(&spec.model_dir, algo, game, "self", ModelSide::SelfPlay, seed));
    }
    let class = opponent_class(opponent);
    let own = model_path(&spec.model_dir, algo, game, class, ModelSide::Player(player), seed);
    if own.exists() {
        return Ok(own);
    }
    let other = model_path(&spec.model_dir, algo, game, class, ModelSide::Player(1 - player), seed);
    if other.exists() {
        return if spec.game.symmetry() == Symmetry::Symmetric {
            Ok(other)
        } else {
            Err(Error::SideMismatch(format!(
                "{} was trained for side {} and cannot play side {} of {}",
                other.display(),
                2 - player,
                player + 1,
                game
            )))
        };
    }
    Err(Error::MissingCheckpoint(own.display().to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub seed: u64,
    pub pair: usize,
    pub final_returns: [f64; 2],
    pub mean_returns: [f64; 2],
}

impl MatchResult {
    pub fn returns(&self, s: Statistic) -> [f64; 2] {
        match s {
            Statistic::Final => self.final_returns,
            Statistic::Mean => self.mean_returns,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Clone, Debug)]
pub struct TournamentResult {
    pub game: String,
    pub row: String,
    pub col: String,
    pub statistic: Statistic,
    pub matches: Vec<MatchResult>,
}

impl TournamentResult {
    pub fn summary(&self, s: Statistic, player: usize) -> MeanStderr {
        MeanStderr::of(&self.matches.iter().map(|m| m.returns(s)[player]).collect::<Vec<_>>())
    }

    /// Row player's return under the configured statistic.
    pub fn row_summary(&self) -> MeanStderr {
        self.summary(self.statistic, 0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "game,row_algo,col_algo,seed,pair,return_row,return_col")?;
        }
        for m in &self.matches {
            let r = m.returns(self.statistic);
            writeln!(w, "{},{},{},{},{},{},{}", self.game, self.row, self.col, m.seed, m.pair, r[0], r[1])?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "game,row_algo,col_algo,statistic,mean_row,stderr_row,mean_col,stderr_col,pairs")?;
        }
        for s in [Statistic::Final, Statistic::Mean] {
            let (r, c) = (self.summary(s, 0), self.summary(s, 1));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.game,
                self.row,
                self.col,
                s.name(),
                r.mean,
                r.stderr,
                c.mean,
                c.stderr,
                self.matches.len()
            )?;
        }
        Ok(())
    }
}

/// Normal(0, 1) initial logits for pair `pair` of model seed `seed`.
pub fn pair_inits(game: &GameSpec, seed: u64, first_pair: usize, count: usize) -> Vec<JointPolicy> {
    (first_pair..first_pair + count)
        .map(|pair| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_0000_0000_0000);
            rng.set_stream(pair as u64);
            PolicyInit::Normal(1.0).sample(2, game.dim(), &mut rng)
        })
        .collect()
}

fn build(
    spec: &TournamentSpec,
    registry: &Registry,
    algo: &str,
    opponent: &str,
    player: usize,
    seed: u64,
) -> Result<Box<dyn MetaPolicy>> {
    let mut args = PolicyArgs::new(&spec.game);
    if is_parametric(algo) {
        args.checkpoint = Some(resolve_checkpoint(spec, algo, opponent, player, seed)?);
        args.gamma = Some(spec.gamma_eval);
        if algo == "cola" {
            args.alpha = spec.alpha;
        }
    } else {
        args.alpha = spec.alpha;
    }
    registry.build(algo, &args)
}

/// Head-to-head matches from Normal(0, 1) initial policies.
pub fn run_tournament(spec: &TournamentSpec, registry: &Registry) -> Result<TournamentResult> {
    if spec.seeds.is_empty() || spec.pairs == 0 {
        return Err(Error::Config("a tournament needs at least one seed and one pair".into()));
    }
    let per_seed = spec.pairs / spec.seeds.len();
    let extra = spec.pairs % spec.seeds.len();
    let zero_sum = spec.game.symmetry() == Symmetry::Antisymmetric;
    let mut matches = Vec::with_capacity(spec.pairs);
    let mut first = 0;
    for (i, &seed) in spec.seeds.iter().enumerate() {
        let count = per_seed + usize::from(i < extra);
        if count == 0 {
            continue;
        }
        let row = build(spec, registry, &spec.row, &spec.col, 0, seed)?;
        let shared_self = spec.row == "meva" && spec.col == "meva";
        let col = if shared_self { build(spec, registry, "meva", "meva", 1, seed)? } else { build(spec, registry, &spec.col, &spec.row, 1, seed)? };
        let inits = pair_inits(&spec.game, seed, first, count);
        let series = play_pairs(&spec.game, row.as_ref(), col.as_ref(), &inits, spec.steps)?;
        for b in 0..count {
            let last = series[spec.steps][b];
            let mut mean = [0.0; 2];
            for s in &series {
                mean[0] += s[b][0] / series.len() as f64;
                mean[1] += s[b][1] / series.len() as f64;
            }
            if zero_sum && (last[0] + last[1]).abs() > 1e-9 {
                return Err(Error::Numeric(format!(
                    "zero-sum violated in pair {}: {} + {}",
                    first + b,
                    last[0],
                    last[1]
                )));
            }
            matches.push(MatchResult { seed, pair: first + b, final_returns: last, mean_returns: mean });
        }
        first += count;
    }
    Ok(TournamentResult {
        game: spec.game.name().into(),
        row: spec.row.clone(),
        col: spec.col.clone(),
        statistic: spec.statistic,
        matches,
    })
}
