//! End-to-end acceptance run.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.
//! Trained models are cached under the cargo target directory, keyed by game,
//! variant and budget, so reruns only replay the evaluations.
//!
//! `MEVA_ACCEPT=1,2,9` restricts the run to the listed criteria.
//! `MEVA_ACCEPT_SCALE=paper` trains with the full published budgets instead
//! of the desk-scale ones.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use meva::deriv::{finite_diff_gradient, rel_error, JointPolicy, FD_STEP};
use meva::games::{matrix_game_value, monte_carlo_value, GameSpec};
use meva::harness::{
    basin_map, median, model_path, pair_inits, run_extortion, run_tournament, selftest, variant_config, BasinLabel,
    BasinSpec, ExtortionSpec, ModelSide, Statistic, TournamentResult, TournamentSpec,
};
use meva::meva::{
    load_meva, meva_step, quantile_loss, quantile_loss_grad, save_model, train, train_with, write_log_csv, MevaConfig,
    Opponents, PolicyInit,
};
use meva::registry::{PolicyArgs, Registry};
use meva::valuenet::{init_params, Batch, Formulation, ScaleShift};
use meva::{Error, Result};

const MODEL_SEEDS: [u64; 3] = [0, 1, 2];
const PAIRS: usize = 1024;

struct Check {
    passed: bool,
    detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Conjunction of named sub-checks, reported together.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn add(&mut self, label: impl Into<String>, ok: bool) {
        self.0.push((label.into(), ok));
    }

    fn finish(self) -> Check {
        let passed = self.0.iter().all(|(_, ok)| *ok);
        let detail = self.0.iter().map(|(l, ok)| format!("{l}{}", if *ok { "" } else { " [x]" })).collect::<Vec<_>>();
        Check::new(passed, detail.join("; "))
    }
}

#[derive(Clone, Copy)]
struct Budget {
    batch: usize,
    outer_loops: usize,
}

fn paper_scale() -> bool {
    std::env::var("MEVA_ACCEPT_SCALE").is_ok_and(|v| v == "paper")
}

fn budget(game: &GameSpec) -> Budget {
    let paper = MevaConfig::for_game(game);
    if paper_scale() {
        return Budget { batch: paper.batch, outer_loops: paper.outer_loops };
    }
    match game.name() {
        "logistic" => Budget { batch: 32, outer_loops: 5000 },
        "imp" => Budget { batch: 64, outer_loops: 300 },
        _ => Budget { batch: 32, outer_loops: 300 },
    }
}

fn model_dir(game: &GameSpec, variant: &str) -> PathBuf {
    let b = budget(game);
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(format!("{}-{variant}-b{}-l{}", game.name(), b.batch, b.outer_loops))
}

fn config(game: &GameSpec, variant: &str) -> Result<MevaConfig> {
    let b = budget(game);
    let mut c = variant_config(&MevaConfig::for_game(game), variant)?;
    c.batch = b.batch;
    c.outer_loops = b.outer_loops;
    Ok(c)
}

/// Train (or reuse) one MeVa model; `opponent` is `self` or a rule name.
fn ensure_model(game: &GameSpec, opponent: &str, side: usize, variant: &str, seed: u64) -> Result<PathBuf> {
    let dir = model_dir(game, variant);
    let model_side = if opponent == "self" { ModelSide::SelfPlay } else { ModelSide::Player(side) };
    let path = model_path(&dir, "meva", game.name(), opponent, model_side, seed);
    if path.exists() {
        return Ok(path);
    }
    fs::create_dir_all(&dir)?;
    let c = config(game, variant)?;
    let registry = Registry::standard();
    let rule = if opponent == "self" { None } else { Some(registry.build(opponent, &PolicyArgs::new(game).with_alpha(c.alpha))?) };
    let opponents = match &rule {
        None => Opponents::SelfPlay,
        Some(r) => Opponents::Rule { rule: r.as_ref(), side },
    };
    let start = Instant::now();
    let tag = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let out = train_with(game, &opponents, &c, seed, |_, row| {
        if row.outer_loop % 100 == 0 {
            eprintln!("  [{tag}] loop {} short_td {:.4} ({:.0}s)", row.outer_loop, row.short_td, start.elapsed().as_secs_f64());
        }
    })?;
    write_log_csv(&out.log, BufWriter::new(File::create(path.with_extension("csv"))?))?;
    save_model(&out.params, game, &c, opponents.side(), seed, &path)?;
    Ok(path)
}

/// `(outer_loop, long_td, mean_self_return)` rows of a stored training log.
fn training_log(model: &Path) -> Result<Vec<(usize, Option<f64>, Option<f64>)>> {
    let text = fs::read_to_string(model.with_extension("csv"))?;
    let bad = |line: &str| Error::Checkpoint(format!("bad log line '{line}'"));
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(line));
        }
        let opt = |c: &str| if c.is_empty() { Ok(None) } else { c.parse().map(Some).map_err(|_| bad(line)) };
        out.push((cols[0].parse().map_err(|_| bad(line))?, opt(cols[2])?, opt(cols[3])?));
    }
    Ok(out)
}

fn tournament(game: &GameSpec, row: &str, col: &str, dir: &Path, stat: Statistic) -> Result<TournamentResult> {
    let spec = TournamentSpec {
        row: row.into(),
        col: col.into(),
        pairs: PAIRS,
        seeds: MODEL_SEEDS.to_vec(),
        statistic: stat,
        model_dir: dir.to_path_buf(),
        ..TournamentSpec::new(game)
    };
    let start = Instant::now();
    let res = run_tournament(&spec, &Registry::standard())?;
    eprintln!("  [{} {row}/{col}] {:.0}s", game.name(), start.elapsed().as_secs_f64());
    Ok(res)
}

/// Median over model seeds of each player's per-seed mean return.
fn seed_median(res: &TournamentResult, stat: Statistic) -> [f64; 2] {
    let mut per_seed: BTreeMap<u64, Vec<[f64; 2]>> = BTreeMap::new();
    for m in &res.matches {
        per_seed.entry(m.seed).or_default().push(m.returns(stat));
    }
    let mut out = [0.0; 2];
    for (p, o) in out.iter_mut().enumerate() {
        let mut means: Vec<f64> =
            per_seed.values().map(|v| v.iter().map(|r| r[p]).sum::<f64>() / v.len() as f64).collect();
        *o = median(&mut means).unwrap_or(f64::NAN);
    }
    out
}

fn pair_stats(game: &GameSpec, row: &str, col: &str, dir: &Path) -> Result<[f64; 2]> {
    Ok(seed_median(&tournament(game, row, col, dir, Statistic::Final)?, Statistic::Final))
}

fn random_policy(game: &GameSpec, seed: u64) -> JointPolicy {
    PolicyInit::Normal(1.0).sample(2, game.dim(), &mut ChaCha8Rng::seed_from_u64(seed))
}

fn matrix_games() -> [GameSpec; 3] {
    [GameSpec::ipd(), GameSpec::imp(), GameSpec::chicken()]
}

fn all_games() -> [GameSpec; 4] {
    [GameSpec::logistic(), GameSpec::ipd(), GameSpec::imp(), GameSpec::chicken()]
}

fn gradient_exactness() -> Result<Check> {
    let mut checks = Checks::default();
    let rows = selftest(&all_games());
    for r in rows.iter().filter(|r| {
        r.property.ends_with("/gradient") || r.property.ends_with("/hessian_vector") || r.property.ends_with("/unroll_gradient")
    }) {
        checks.add(format!("{} {:.1e}", r.property, r.measured), r.passed);
    }
    // value network gradients for both formulations
    for (formulation, game) in [(Formulation::U, GameSpec::ipd()), (Formulation::V, GameSpec::logistic())] {
        let c = MevaConfig { formulation, ..MevaConfig::for_game(&game) };
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut params = init_params(&c.layout(&game, ScaleShift::PerPlayer), &mut rng);
        let noise = Normal::new(0.0, 0.1).expect("std");
        params.data.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let x = random_policy(&game, 42);
        let cond = [0.9, 0.6];
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            let g = params.input_grad(&x, &cond, i)?;
            let n = game.dim();
            let fd = finite_diff_gradient(
                |xi| {
                    let mut z = x.clone();
                    z.row_mut(i).copy_from_slice(xi);
                    params.forward(&z, &cond).map(|q| q[i].mean()).unwrap_or(f64::NAN)
                },
                &x.as_slice()[i * n..(i + 1) * n],
                FD_STEP,
            );
            worst = worst.max(rel_error(&g, &fd));
        }
        checks.add(format!("{}-form input gradient {worst:.1e}", formulation.name()), worst <= 1e-5);

        let batch = Batch::single(&x, &cond);
        let outputs = params.forward_batch(&batch);
        let weights = Array2::from_shape_fn(outputs.q.dim(), |(r, m)| ((r * 7 + m * 3) % 11) as f64 / 11.0 - 0.5);
        let loss = |q: &Array2<f64>| (q * &weights).sum();
        let (_, grad) = params.param_grad(&batch, |o| (loss(&o.q), weights.clone()));
        let mut probe = params.clone();
        let stride = (params.data.len() / 200).max(1);
        let idx: Vec<usize> = (0..params.data.len()).step_by(stride).collect();
        let mut fd = Vec::with_capacity(idx.len());
        for &k in &idx {
            let base = params.data[k];
            probe.data[k] = base + FD_STEP;
            let up = loss(&probe.forward_batch(&batch).q);
            probe.data[k] = base - FD_STEP;
            let down = loss(&probe.forward_batch(&batch).q);
            probe.data[k] = base;
            fd.push((up - down) / (2.0 * FD_STEP));
        }
        let picked: Vec<f64> = idx.iter().map(|&k| grad[k]).collect();
        let err = rel_error(&picked, &fd);
        checks.add(format!("{}-form parameter gradient {err:.1e}", formulation.name()), err <= 1e-4);
    }
    Ok(checks.finish())
}

fn value_oracle() -> Result<Check> {
    let mut checks = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for game in matrix_games() {
        let mut worst: f64 = 0.0;
        for k in 0..10 {
            let x = random_policy(&game, 500 + k);
            let exact = matrix_game_value(&x, &game)?;
            let mc = monte_carlo_value(&x, &game, 10_000, 500, &mut rng)?;
            for i in 0..2 {
                worst = worst.max((exact.0[i] - mc.mean.0[i]).abs() / mc.stderr[i].max(1e-12));
            }
        }
        checks.add(format!("{} worst gap {worst:.2} stderr", game.name()), worst <= 3.0);
    }
    let ipd = GameSpec::ipd();
    let defect = JointPolicy::new(2, 5, vec![-30.0; 10])?;
    let d = matrix_game_value(&defect, &ipd)?;
    checks.add(format!("always-defect {:.6}", d.0[0]), (d.0[0] + 2.0).abs() <= 1e-3 && (d.0[1] + 2.0).abs() <= 1e-3);
    let uniform = JointPolicy::zeros(2, 5);
    let u = matrix_game_value(&uniform, &ipd)?;
    let mc = monte_carlo_value(&uniform, &ipd, 10_000, 500, &mut rng)?;
    let ok = (0..2).all(|i| (u.0[i] + 1.5).abs() <= 3.0 * mc.stderr[i] && (mc.mean.0[i] + 1.5).abs() <= 3.0 * mc.stderr[i]);
    checks.add(format!("uniform {:.6} (sampled {:.4} +- {:.4})", u.0[0], mc.mean.0[0], mc.stderr[0]), ok);
    Ok(checks.finish())
}

fn logistic_basins() -> Result<Check> {
    let game = GameSpec::logistic();
    let registry = Registry::standard();
    let mut checks = Checks::default();
    let frac = |algo: &str, args: PolicyArgs| -> Result<f64> {
        let policy = registry.build(algo, &args)?;
        Ok(basin_map(&game, policy.as_ref(), &BasinSpec::default())?.fraction(BasinLabel::B))
    };
    let naive = frac("naive", PolicyArgs::new(&game))?;
    checks.add(format!("naive B {naive:.3}"), (naive - 0.5).abs() <= 0.05);
    let lola = frac("lola", PolicyArgs::new(&game).with_alpha(1.0))?;
    checks.add(format!("LOLA B {lola:.3}"), lola > naive);
    let mut fracs = Vec::new();
    for seed in MODEL_SEEDS {
        let path = ensure_model(&game, "self", 0, "full", seed)?;
        let f = frac("meva", PolicyArgs { gamma: Some(0.95), ..PolicyArgs::new(&game).with_checkpoint(path) })?;
        fracs.push(f);
    }
    let shown = fracs.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(",");
    let med = median(&mut fracs).unwrap_or(f64::NAN);
    checks.add(format!("MeVa B median {med:.3} [{shown}]"), med >= 0.95);
    Ok(checks.finish())
}

fn train_matrix_models(game: &GameSpec, opponents: &[&str]) -> Result<PathBuf> {
    for seed in MODEL_SEEDS {
        for opp in opponents {
            ensure_model(game, opp, 0, "full", seed)?;
        }
    }
    Ok(model_dir(game, "full"))
}

fn ipd_tournament() -> Result<Check> {
    let game = GameSpec::ipd();
    let dir = train_matrix_models(&game, &["naive", "self"])?;
    let mut checks = Checks::default();
    let nn = pair_stats(&game, "naive", "naive", &dir)?;
    checks.add(format!("Naive/Naive {:.3}", nn[0]), (nn[0] + 1.99).abs() <= 0.02);
    let ll = pair_stats(&game, "lola", "lola", &dir)?;
    checks.add(format!("LOLA/LOLA {:.3}", ll[0]), (ll[0] + 1.04).abs() <= 0.1);
    let mn = pair_stats(&game, "meva", "naive", &dir)?;
    checks.add(format!("MeVa/Naive {:.3}", mn[0]), mn[0] >= -0.7);
    let nm = pair_stats(&game, "naive", "meva", &dir)?;
    checks.add(format!("Naive/MeVa {:.3}", nm[0]), nm[0] <= -1.9);
    let mm = pair_stats(&game, "meva", "meva", &dir)?;
    checks.add(format!("MeVa/MeVa {:.3}", mm[0]), (mm[0] + 1.05).abs() <= 0.15);
    Ok(checks.finish())
}

fn imp_tournament() -> Result<Check> {
    let game = GameSpec::imp();
    let dir = train_matrix_models(&game, &["naive", "lola"])?;
    let mut checks = Checks::default();
    let mut zero_sum: f64 = 0.0;
    let mut stat = |row: &str, col: &str| -> Result<[f64; 2]> {
        let res = tournament(&game, row, col, &dir, Statistic::Final)?;
        for m in &res.matches {
            zero_sum = zero_sum.max((m.final_returns[0] + m.final_returns[1]).abs());
        }
        Ok(seed_median(&res, Statistic::Final))
    };
    let nn = stat("naive", "naive")?;
    let mn = stat("meva", "naive")?;
    let ml = stat("meva", "lola")?;
    checks.add(format!("Naive/Naive {:.3}", nn[0]), nn[0].abs() <= 0.05);
    checks.add(format!("MeVa/Naive {:.3}", mn[0]), mn[0] >= 0.15);
    checks.add(format!("MeVa/LOLA {:.3}", ml[0]), ml[0] >= 0.15);
    checks.add(format!("zero-sum {zero_sum:.1e}"), zero_sum <= 1e-12);
    Ok(checks.finish())
}

fn chicken_tournament() -> Result<Check> {
    let game = GameSpec::chicken();
    let dir = train_matrix_models(&game, &["naive", "self"])?;
    let mut checks = Checks::default();
    let mn = pair_stats(&game, "meva", "naive", &dir)?;
    checks.add(format!("MeVa/Naive {:.3}", mn[0]), mn[0] >= 0.9);
    let mm = pair_stats(&game, "meva", "meva", &dir)?;
    checks.add(format!("MeVa/MeVa {:.3}", mm[0]), mm[0] >= -0.3);
    let ll = pair_stats(&game, "lola", "lola", &dir)?;
    checks.add(format!("LOLA/LOLA {:.3}", ll[0]), ll[0] < -1.0);
    Ok(checks.finish())
}

fn extortion() -> Result<Check> {
    let game = GameSpec::ipd();
    let naive = Registry::standard().build("naive", &PolicyArgs::new(&game))?;
    let spec = ExtortionSpec::default();
    let mut max_slope = f64::NEG_INFINITY;
    let mut early_slope = f64::NEG_INFINITY;
    let mut inside = true;
    let (mut own, mut other) = (Vec::new(), Vec::new());
    for seed in MODEL_SEEDS {
        let path = ensure_model(&game, "naive", 0, "full", seed)?;
        let (shaper, _) = load_meva(&path, None, Some(0.95))?;
        let inits = pair_inits(&game, seed, 0, spec.pairs);
        let snaps = run_extortion(&game, &shaper, naive.as_ref(), &inits, &spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
        for s in &snaps {
            if s.slope.is_finite() {
                max_slope = max_slope.max(s.slope);
                if s.t > 0 && s.t <= 30 {
                    early_slope = early_slope.max(s.slope);
                }
            }
            inside &= s.inside_hull;
        }
        let last: Vec<_> = snaps.iter().filter(|s| s.t == spec.steps).collect();
        own.push(last.iter().map(|s| s.actual.0).sum::<f64>() / last.len() as f64);
        other.push(last.iter().map(|s| s.actual.1).sum::<f64>() / last.len() as f64);
    }
    let (own, other) = (median(&mut own).unwrap_or(f64::NAN), median(&mut other).unwrap_or(f64::NAN));
    let mut checks = Checks::default();
    checks.add(format!("largest front slope {max_slope:.3} (first 30 steps {early_slope:.3})"), max_slope > 1.0);
    checks.add(format!("final MeVa {own:.3}"), own >= -0.7);
    checks.add(format!("final naive {other:.3}"), other <= -1.9);
    checks.add("actual returns inside the feasible hull", inside);
    Ok(checks.finish())
}

fn ablation() -> Result<Check> {
    let game = GameSpec::ipd();
    let mut checks = Checks::default();
    let logs = |variant: &str| -> Result<Vec<Vec<(usize, Option<f64>, Option<f64>)>>> {
        MODEL_SEEDS.iter().map(|&seed| training_log(&ensure_model(&game, "self", 0, variant, seed)?)).collect()
    };
    // monitored self-play return over the last ten outer loops, median over seeds
    let self_return = |variant: &str| -> Result<f64> {
        let mut per_seed = Vec::new();
        for log in logs(variant)? {
            let r: Vec<f64> = log.iter().filter_map(|row| row.2).collect();
            let tail = &r[r.len().saturating_sub(10)..];
            per_seed.push(tail.iter().sum::<f64>() / tail.len().max(1) as f64);
        }
        Ok(median(&mut per_seed).unwrap_or(f64::NAN))
    };
    let full = self_return("full")?;
    let fixed = self_return("fixed_gamma")?;
    let lambda1 = self_return("lambda1")?;
    checks.add(format!("fixed discount {fixed:.3}"), fixed <= -1.7);
    checks.add(format!("lambda 1 {lambda1:.3} vs full {full:.3}"), (lambda1 - full).abs() <= 0.3);
    let td_at = |variant: &str| -> Result<f64> {
        let mut vals = Vec::new();
        for log in logs(variant)? {
            let v = log
                .iter()
                .find_map(|row| if row.0 >= 100 { row.1 } else { None })
                .ok_or_else(|| Error::Checkpoint("log has no long TD error after loop 100".into()))?;
            vals.push(v);
        }
        Ok(median(&mut vals).unwrap_or(f64::NAN))
    };
    let u = td_at("full")?;
    let v = td_at("v_formulation")?;
    checks.add(format!("long TD at loop 100: V {v:.3} vs U {u:.3}"), v > u);
    Ok(checks.finish())
}

fn unit_suite() -> Result<Check> {
    let mut checks = Checks::default();
    for r in selftest(&[]) {
        checks.add(format!("{} {:.1e}", r.property, r.measured), r.passed);
    }
    // closed-form quantile losses: the linear branch below τ = 1/2, the quadratic one at τ = 1/4 and 3/4
    let below = quantile_loss(&[1.0], &[-1.0])?;
    let (pair, g) = quantile_loss_grad(&[0.0, 0.0], &[1.0, 1.0])?;
    let ok = (below - 0.75).abs() < 1e-15 && (pair - 0.5).abs() < 1e-15 && g == [-0.25, -0.75];
    checks.add(format!("quantile cases {below} {pair} {g:?}"), ok);

    // the update maximizes the step-penalized linearized objective
    let game = GameSpec::ipd();
    let c = MevaConfig::matrix(&game);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = init_params(&c.layout(&game, ScaleShift::PerPlayer), &mut rng);
    let noise = Normal::new(0.0, 0.2).expect("std");
    params.data.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    let x = random_policy(&game, 77);
    let alpha = 2.0;
    let next = meva_step(&params, &game, &x, &[0.9, 0.9], alpha, &[0])?;
    let delta: Vec<f64> = next.row(0).iter().zip(x.row(0)).map(|(a, b)| a - b).collect();
    let objective = |xi: &[f64]| {
        let mut z = x.clone();
        z.row_mut(0).copy_from_slice(xi);
        let f = game.value(&z).map(|v| v.0[0]).unwrap_or(f64::NAN);
        0.1 * f + 0.9 * params.forward(&z, &[0.9, 0.9]).map(|q| q[0].mean()).unwrap_or(f64::NAN)
    };
    let grad = finite_diff_gradient(objective, x.row(0), FD_STEP);
    let score = |d: &[f64]| {
        d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() - d.iter().map(|a| a * a).sum::<f64>() / (2.0 * alpha)
    };
    let best = score(&delta);
    let probe = Normal::new(0.0, 0.5).expect("std");
    let beaten = (0..1000).any(|_| {
        let d: Vec<f64> = delta.iter().map(|v| v + probe.sample(&mut rng)).collect();
        score(&d) > best + 1e-9
    });
    checks.add("penalized linearization argmax", !beaten);

    // seed determinism
    let mut tiny = MevaConfig::matrix(&game);
    tiny.batch = 3;
    tiny.outer_loops = 3;
    tiny.episode_len = 8;
    tiny.stride = 4;
    tiny.long_td_batch = 2;
    tiny.long_td_every = 1;
    tiny.long_td_horizon = 6;
    tiny.monitor_batch = 2;
    tiny.monitor_steps = 3;
    let a = train(&game, &Opponents::SelfPlay, &tiny, 5)?;
    let b = train(&game, &Opponents::SelfPlay, &tiny, 5)?;
    let other = train(&game, &Opponents::SelfPlay, &tiny, 6)?;
    checks.add(
        "seed determinism",
        a.params.data == b.params.data && a.log == b.log && a.params.data != other.params.data,
    );
    Ok(checks.finish())
}

type Criterion = (u32, &'static str, fn() -> Result<Check>);

const CRITERIA: [Criterion; 9] = [
    (1, "gradient exactness", gradient_exactness),
    (2, "value oracle", value_oracle),
    (3, "logistic basins", logistic_basins),
    (4, "IPD tournament", ipd_tournament),
    (5, "IMP tournament", imp_tournament),
    (6, "Chicken tournament", chicken_tournament),
    (7, "extortion analysis", extortion),
    (8, "ablation directionality", ablation),
    (9, "unit and property suite", unit_suite),
];

fn selected() -> Vec<u32> {
    match std::env::var("MEVA_ACCEPT") {
        Ok(list) if !list.trim().is_empty() => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        _ => CRITERIA.iter().map(|c| c.0).collect(),
    }
}

fn main() -> ExitCode {
    let wanted = selected();
    let mut failed = 0;
    for (id, name, run) in CRITERIA.iter().filter(|c| wanted.contains(&c.0)) {
        let start = Instant::now();
        let check = run().unwrap_or_else(|e| Check::new(false, format!("error: {e}")));
        println!(
            "criterion {id} {name}: {} ({:.0}s) {}",
            if check.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            check.detail
        );
        failed += usize::from(!check.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
