//! Command-line driver for training, tournaments and analyses.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meva::baselines::{cola_train, mmaml_train, MetaPolicy};
use meva::games::GameSpec;
use meva::harness::{
    model_path, pair_inits, run_ablation, run_basin, run_extortion, run_tournament, run_trajectories, selftest,
    write_extortion_csv, write_selftest_csv, write_trajectories_csv, BasinLabel, ConfigFile, ModelSide, Settings,
};
use meva::meva::{load_meva, save_model, train_with, write_log_csv, LogRow, Opponents};
use meva::registry::{PolicyArgs, Registry};
use meva::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "meva", version, about = "Meta-value learning and opponent shaping on differentiable games")]
struct Cli {
    #[arg(long, global = true, default_value = "ipd", value_parser = ["logistic", "ipd", "imp", "chicken"])]
    game: String,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite and write selftest.csv.
    Selftest,
    /// Train a meta-value model.
    TrainMeva {
        /// `self` for self-play, otherwise a nonparametric rule.
        #[arg(long, default_value = "naive")]
        opponent: String,
        /// Side the learner plays (1 or 2) against a rule.
        #[arg(long, default_value_t = 1)]
        side: usize,
    },
    /// Train a COLA look-ahead field.
    TrainCola,
    /// Train an M-MAML initialization for one side.
    TrainMmaml {
        #[arg(long, default_value_t = 1)]
        side: usize,
    },
    /// Play row against column rules over many policy pairs.
    Tournament {
        #[arg(long)]
        row: Option<String>,
        #[arg(long)]
        col: Option<String>,
        /// Directory of trained models; defaults to the output directory.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Map the basins of attraction on the Logistic Game.
    Basin {
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Dump optimization trajectories from random initial policies.
    Trajectories {
        #[arg(long, default_value = "naive")]
        algorithm: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Record return regions while MeVa shapes a naive learner.
    Extort {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the ablation grid in self-play.
    Ablate,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_side(side: usize) -> Result<usize> {
    match side {
        1 | 2 => Ok(side - 1),
        _ => Err(Error::Config(format!("side must be 1 or 2, got {side}"))),
    }
}

fn progress(row: &LogRow) {
    if row.outer_loop % 25 == 0 {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "loop {:>5}  short_td {:.5}  long_td {}  self_return {}",
            row.outer_loop,
            row.short_td,
            opt(row.long_td),
            opt(row.mean_self_return)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let game = GameSpec::by_name(&cli.game)?;
    let mut settings = Settings::for_game(&game);
    if let Some(path) = &cli.config {
        settings.apply(&ConfigFile::read(path)?)?;
    }
    let registry = Registry::standard();
    let out = &cli.out;
    fs::create_dir_all(out)?;
    let seed = cli.seed;

    match cli.command {
        Command::Selftest => {
            let games = [GameSpec::logistic(), GameSpec::ipd(), GameSpec::imp(), GameSpec::chicken()];
            let rows = selftest(&games);
            write_selftest_csv(&rows, create(&out.join("selftest.csv"))?)?;
            write_selftest_csv(&rows, std::io::stdout().lock())?;
            let failed = rows.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} self-test properties failed")));
            }
        }
        Command::TrainMeva { opponent, side } => {
            let side = parse_side(side)?;
            let rule: Option<Box<dyn MetaPolicy>> = match opponent.as_str() {
                "self" => None,
                "meva" | "cola" | "mmaml" => {
                    return Err(Error::Config(format!("train against '{opponent}' is not supported; use self or a rule")))
                }
                name => Some(registry.build(name, &PolicyArgs::new(&game).with_alpha(settings.meva.alpha))?),
            };
            let opponents = match &rule {
                None => Opponents::SelfPlay,
                Some(r) => Opponents::Rule { rule: r.as_ref(), side },
            };
            let model_side = match &rule {
                None => ModelSide::SelfPlay,
                Some(_) => ModelSide::Player(side),
            };
            let result = train_with(&game, &opponents, &settings.meva, seed, |_, row| progress(row))?;
            let path = model_path(out, "meva", game.name(), &opponent, model_side, seed);
            save_model(&result.params, &game, &settings.meva, opponents.side(), seed, &path)?;
            let log = path.with_extension("csv");
            write_log_csv(&result.log, create(&log)?)?;
            println!("{}", path.display());
        }
        Command::TrainCola => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (model, history) = cola_train(&game, &settings.cola, &mut rng)?;
            let path = model_path(out, "cola", game.name(), "", ModelSide::SelfPlay, seed);
            model.save(&game, seed, settings.cola.iterations as u64, &path)?;
            eprintln!("final residual loss {:.3e}", history.last().copied().unwrap_or(f64::NAN));
            println!("{}", path.display());
        }
        Command::TrainMmaml { side } => {
            let side = parse_side(side)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (init, history) = mmaml_train(&game, side, &settings.mmaml, &mut rng)?;
            let path = model_path(out, "mmaml", game.name(), "naive", ModelSide::Player(side), seed);
            init.save(&game, seed, &path)?;
            eprintln!("final meta-objective {:.4}", history.last().copied().unwrap_or(f64::NAN));
            println!("{}", path.display());
        }
        Command::Tournament { row, col, models } => {
            let mut spec = settings.tournament.clone();
            if let Some(r) = row {
                spec.row = r;
            }
            if let Some(c) = col {
                spec.col = c;
            }
            let configured = spec.model_dir != Settings::for_game(&game).tournament.model_dir;
            spec.model_dir = match models {
                Some(m) => m,
                None if configured => spec.model_dir,
                None => out.clone(),
            };
            let res = run_tournament(&spec, &registry)?;
            res.write_csv(create(&out.join("tournament.csv"))?, true)?;
            res.write_summary(create(&out.join("tournament_summary.csv"))?, true)?;
            res.write_summary(std::io::stdout().lock(), true)?;
        }
        Command::Basin { algorithm, checkpoint } => {
            let mut spec = settings.basin.clone();
            if let Some(a) = algorithm {
                spec.algorithm = a;
            }
            if checkpoint.is_some() {
                spec.checkpoint = checkpoint;
            }
            let map = run_basin(&game, &spec, &registry)?;
            map.write_csv(create(&out.join("basin.csv"))?)?;
            map.write_pgm(create(&out.join("basin.pgm"))?)?;
            println!(
                "{}: B {:.4}  A {:.4}  other {:.4}  diverged {:.4}",
                spec.algorithm,
                map.fraction(BasinLabel::B),
                map.fraction(BasinLabel::A),
                map.fraction(BasinLabel::Other),
                map.fraction(BasinLabel::Diverged)
            );
        }
        Command::Trajectories { algorithm, checkpoint } => {
            let args = PolicyArgs { checkpoint, alpha: settings.basin.alpha, gamma: settings.basin.gamma, ..PolicyArgs::new(&game) };
            let policy = registry.build(&algorithm, &args)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = run_trajectories(&game, policy.as_ref(), &settings.trajectories, &mut rng)?;
            write_trajectories_csv(&rows, create(&out.join("trajectories.csv"))?)?;
            println!("{} rows", rows.len());
        }
        Command::Extort { checkpoint } => {
            let spec = &settings.extortion;
            let path = checkpoint
                .or_else(|| spec.checkpoint.clone())
                .unwrap_or_else(|| model_path(out, "meva", game.name(), "naive", ModelSide::Player(0), seed));
            let (shaper, _) = load_meva(&path, None, Some(settings.tournament.gamma_eval))?;
            let naive = registry.build("naive", &PolicyArgs::new(&game))?;
            let inits = pair_inits(&game, seed, 0, spec.pairs);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snaps = run_extortion(&game, &shaper, naive.as_ref(), &inits, spec, &mut rng)?;
            write_extortion_csv(&snaps, create(&out.join("extortion.csv"))?)?;
            let mut clouds = create(&out.join("extortion_regions.csv"))?;
            writeln!(clouds, "t,kind,return_1,return_2")?;
            for s in snaps.iter().filter(|s| s.pair == 0) {
                for (a, b) in &s.cloud.samples {
                    writeln!(clouds, "{},sample,{a},{b}", s.t)?;
                }
                writeln!(clouds, "{},actual,{},{}", s.t, s.actual.0, s.actual.1)?;
            }
            clouds.flush()?;
            let max_slope = snaps.iter().map(|s| s.slope).filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            println!("largest front slope {max_slope:.3}");
        }
        Command::Ablate => {
            let report = run_ablation(&game, &settings.meva, &settings.ablation)?;
            report.write_csv(create(&out.join("ablation.csv"))?)?;
            for (variant, seed, err) in &report.failures {
                eprintln!("variant {variant} seed {seed} failed: {err}");
            }
            for v in &settings.ablation.variants {
                let r = report.final_self_return(v, 10).map_or("-".into(), |x| format!("{x:.3}"));
                println!("{v}: final self-play return {r}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
