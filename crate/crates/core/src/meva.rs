//! Meta-value learning: the MeVa meta-policy, λ-return targets, the
//! quantile regression loss and the training loop.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde_json::json;

use crate::baselines::{best_response_train, stack, MetaPolicy};
use crate::deriv::{aligned_grad, JointPolicy};
use crate::error::{Error, Result};
use crate::games::{GameSpec, Symmetry};
use crate::valuenet::{
    head_noise, init_params, load_checkpoint, save_checkpoint, sign_flip, AdamW, Activation, Batch,
    CheckpointMeta, Formulation, Layout, ModelParams, Perturbation, ScaleShift, DEFAULT_FLIP_PROB,
    PARAM_NOISE_STD,
};

/// Meta-policy exploration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exploration {
    SignFlip,
    ParamNoise,
    Off,
}

impl Exploration {
    pub fn name(self) -> &'static str {
        match self {
            Exploration::SignFlip => "sign_flip",
            Exploration::ParamNoise => "param_noise",
            Exploration::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sign_flip" => Some(Exploration::SignFlip),
            "param_noise" => Some(Exploration::ParamNoise),
            "off" => Some(Exploration::Off),
            _ => None,
        }
    }
}

/// Distribution of initial policy logits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyInit {
    Uniform(f64),
    Normal(f64),
}

impl PolicyInit {
    pub fn sample<R: Rng + ?Sized>(self, players: usize, dim: usize, rng: &mut R) -> JointPolicy {
        let data: Vec<f64> = match self {
            PolicyInit::Uniform(h) => {
                let d = Uniform::new_inclusive(-h, h).expect("valid box");
                (0..players * dim).map(|_| d.sample(rng)).collect()
            }
            PolicyInit::Normal(s) => {
                let d = Normal::new(0.0, s).expect("valid std");
                (0..players * dim).map(|_| d.sample(rng)).collect()
            }
        };
        JointPolicy::new(players, dim, data).expect("finite init")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MevaConfig {
    /// Inner step size α.
    pub alpha: f64,
    /// Model learning rate η.
    pub lr: f64,
    pub weight_decay: f64,
    /// Episode length T.
    pub episode_len: usize,
    /// Stride k.
    pub stride: usize,
    pub lambda: f64,
    /// Target network inertia ρ.
    pub inertia: f64,
    pub quantiles: usize,
    pub gamma_eval: f64,
    pub formulation: Formulation,
    pub exploration: Exploration,
    pub flip_prob: f64,
    pub variable_gamma: bool,
    pub target_net: bool,
    pub distributional: bool,
    pub batch: usize,
    pub outer_loops: usize,
    pub init: PolicyInit,
    pub scale_shift: ScaleShift,
    pub final_activation: Activation,
    /// Validation pairs for the long-horizon TD error; 0 disables it.
    pub long_td_batch: usize,
    pub long_td_horizon: usize,
    pub long_td_every: usize,
    /// Continually trained monitor pairs; 0 disables monitoring.
    pub monitor_batch: usize,
    pub monitor_steps: usize,
    pub monitor_reset: usize,
    pub exploit_monitor: bool,
}

impl MevaConfig {
    /// Logistic Game settings: V formulation, no target network, no exploration.
    pub fn logistic() -> Self {
        Self {
            alpha: 1.0,
            lr: 1e-3,
            weight_decay: 0.0,
            episode_len: 50,
            stride: 50,
            lambda: 0.9,
            inertia: 0.0,
            quantiles: 16,
            gamma_eval: 0.95,
            formulation: Formulation::V,
            exploration: Exploration::Off,
            flip_prob: DEFAULT_FLIP_PROB,
            variable_gamma: true,
            target_net: false,
            distributional: true,
            batch: 128,
            outer_loops: 5000,
            init: PolicyInit::Uniform(8.0),
            scale_shift: ScaleShift::None,
            final_activation: Activation::Gelu,
            long_td_batch: 0,
            long_td_horizon: 100,
            long_td_every: 10,
            monitor_batch: 0,
            monitor_steps: 30,
            monitor_reset: 10,
            exploit_monitor: false,
        }
    }

    /// Repeated matrix game settings: U formulation, target network, sign-flip exploration.
    pub fn matrix(game: &GameSpec) -> Self {
        Self {
            alpha: tournament_alpha(game),
            lr: 1e-3,
            weight_decay: 1e-2,
            episode_len: 100,
            stride: 10,
            lambda: 0.9,
            inertia: 0.99,
            quantiles: 64,
            gamma_eval: 0.95,
            formulation: Formulation::U,
            exploration: Exploration::SignFlip,
            flip_prob: DEFAULT_FLIP_PROB,
            variable_gamma: true,
            target_net: true,
            distributional: true,
            batch: 128,
            outer_loops: 1000,
            init: PolicyInit::Normal(1.0),
            scale_shift: ScaleShift::PerPlayer,
            final_activation: Activation::Tanh,
            long_td_batch: 8,
            long_td_horizon: 100,
            long_td_every: 10,
            monitor_batch: 8,
            monitor_steps: 30,
            monitor_reset: 10,
            exploit_monitor: false,
        }
    }

    pub fn for_game(game: &GameSpec) -> Self {
        match game {
            GameSpec::Logistic => Self::logistic(),
            GameSpec::Matrix(_) => Self::matrix(game),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if !(0.0..1.0).contains(&self.gamma_eval) {
            return bad(format!("gamma_eval = {} outside [0, 1)", self.gamma_eval));
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return bad(format!("inertia = {} outside [0, 1]", self.inertia));
        }
        if self.stride == 0 || self.stride > self.episode_len {
            return bad(format!("stride {} must be in 1..={}", self.stride, self.episode_len));
        }
        if self.batch == 0 || self.quantiles == 0 {
            return bad("batch and quantiles must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        Ok(())
    }

    /// Head width: `M` quantiles, or a single point estimate.
    pub fn outputs(&self) -> usize {
        if self.distributional {
            self.quantiles
        } else {
            1
        }
    }

    pub fn layout(&self, game: &GameSpec, scale_shift: ScaleShift) -> Layout {
        Layout {
            scale_shift,
            final_activation: self.final_activation,
            formulation: self.formulation,
            ..Layout::new(game.dim(), self.outputs())
        }
    }

    /// Branch points of one exploration trajectory.
    pub fn branch_points(&self) -> Vec<usize> {
        (0..self.episode_len).step_by(self.stride).collect()
    }
}

/// Default inner step size of the tournaments.
pub fn tournament_alpha(game: &GameSpec) -> f64 {
    match game.name() {
        "logistic" => 1.0,
        "chicken" => 1.0,
        _ => 25.0,
    }
}

/// Arcsine draws `γ = sin²(πu/2)` in the open unit interval.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, players: usize) -> Vec<f64> {
    (0..players)
        .map(|_| loop {
            let u: f64 = rng.random();
            let g = (std::f64::consts::FRAC_PI_2 * u).sin().powi(2);
            if g > 0.0 && g < 1.0 {
                break g;
            }
        })
        .collect()
}

/// Huber loss and derivative with threshold `κ`.
fn huber(u: f64, kappa: f64) -> (f64, f64) {
    if u.abs() <= kappa {
        (0.5 * u * u, u)
    } else {
        (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
    }
}

pub const QUANTILE_KAPPA: f64 = 1.0;

/// Quantile regression loss `(1/M) Σ_m Σ_m' ρ^κ_{τ_m}(y_m' − ŷ_m)` and its gradient in `ŷ`.
pub fn quantile_loss_grad(predicted: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(Error::Shape(format!(
            "quantile loss needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            target.len()
        )));
    }
    let m = predicted.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; m];
    for (k, (&yhat, g)) in predicted.iter().zip(grad.iter_mut()).enumerate() {
        let tau = (2 * k + 1) as f64 / (2 * m) as f64;
        for &y in target {
            let u = y - yhat;
            let w = if u < 0.0 { 1.0 - tau } else { tau };
            let (l, dl) = huber(u, QUANTILE_KAPPA);
            loss += w * l / QUANTILE_KAPPA;
            *g -= w * dl / QUANTILE_KAPPA;
        }
    }
    let scale = 1.0 / m as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

pub fn quantile_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    Ok(quantile_loss_grad(predicted, target)?.0)
}

/// Huber loss on a point estimate, used when distributional training is off.
pub fn point_loss_grad(predicted: f64, target: f64) -> (f64, f64) {
    let (l, dl) = huber(target - predicted, QUANTILE_KAPPA);
    (l, -dl)
}

/// Backward λ-return recursion for one player over a segment of length `k`.
///
/// `rewards[τ]` is the meta-reward of transition `τ` (`f(x⁽ᵗ⁺¹⁾)` in the U
/// formulation, `f(x⁽ᵗ⁾)` in the V formulation). `bootstrap[τ]` holds the
/// target model's quantiles at `x⁽ᵗ⁺¹⁾`. Returns `Y⁽⁰⁾..Y⁽ᵏ⁻¹⁾`.
pub fn lambda_returns(rewards: &[f64], bootstrap: &[Vec<f64>], gamma: f64, lambda: f64) -> Result<Vec<Vec<f64>>> {
    let k = rewards.len();
    if k == 0 || bootstrap.len() != k {
        return Err(Error::Shape(format!("segment has {} rewards and {} bootstrap values", k, bootstrap.len())));
    }
    let mut out = vec![Vec::new(); k];
    let mut next = bootstrap[k - 1].clone();
    for tau in (0..k).rev() {
        let boot = &bootstrap[tau];
        if boot.len() != next.len() {
            return Err(Error::Shape("bootstrap quantile counts differ".into()));
        }
        let y: Vec<f64> = boot
            .iter()
            .zip(&next)
            .map(|(&u, &ynext)| (1.0 - gamma) * rewards[tau] + gamma * ((1.0 - lambda) * u + lambda * ynext))
            .collect();
        next = y.clone();
        out[tau] = y;
    }
    Ok(out)
}

/// TD targets for one segment and player, plus the one-step errors of the target model.
#[derive(Clone, Debug, PartialEq)]
pub struct TdTargetSet {
    pub targets: Vec<Vec<f64>>,
    pub td_errors: Vec<f64>,
}

/// λ-return targets over a trajectory segment `x⁽⁰⁾..x⁽ᵏ⁾`.
pub fn lambda_quantile_returns(
    segment: &[JointPolicy],
    target: &ModelParams,
    game: &GameSpec,
    gamma: &[f64],
    lambda: f64,
    player: usize,
) -> Result<TdTargetSet> {
    if segment.len() < 2 {
        return Err(Error::Shape("segment needs at least two states".into()));
    }
    let k = segment.len() - 1;
    let formulation = target.layout.formulation;
    let mut boot = Vec::with_capacity(k);
    let mut rewards = Vec::with_capacity(k);
    let mut td_errors = Vec::with_capacity(k);
    for tau in 0..k {
        let next = target.forward(&segment[tau + 1], gamma)?;
        let reward_state = match formulation {
            Formulation::U => &segment[tau + 1],
            Formulation::V => &segment[tau],
        };
        let r = game.value(reward_state)?.0[player];
        let here = target.forward(&segment[tau], gamma)?[player].mean();
        td_errors.push((1.0 - gamma[player]) * r + gamma[player] * next[player].mean() - here);
        rewards.push(r);
        boot.push(next[player].0.clone());
    }
    Ok(TdTargetSet { targets: lambda_returns(&rewards, &boot, gamma[player], lambda)?, td_errors })
}

/// Per-row gradient directions `∇_{x_i}[(1-γ_i) f_i + γ_i Û_i]` (U) or `∇_{x_i} V̂_i` (V),
/// for the listed players; other blocks are zero.
pub fn meva_directions(
    params: &ModelParams,
    game: &GameSpec,
    xs: &[JointPolicy],
    gammas: &Array2<f64>,
    players: &[usize],
    head_means: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    let batch = Batch::new(stack(xs), gammas.clone());
    let mut dirs = params.input_grads(&batch, players, head_means.map(|h| h.view()));
    if params.layout.formulation == Formulation::U {
        let n = game.dim();
        for (b, x) in xs.iter().enumerate() {
            let g = aligned_grad(game, x)?;
            for &i in players {
                let gi = gammas[[b, i]];
                for k in 0..n {
                    let c = i * n + k;
                    dirs[[b, c]] = (1.0 - gi) * g.data[c] + gi * dirs[[b, c]];
                }
            }
        }
    }
    Ok(dirs)
}

/// One MeVa update of the listed players of `x`.
pub fn meva_step(
    params: &ModelParams,
    game: &GameSpec,
    x: &JointPolicy,
    gamma: &[f64],
    alpha: f64,
    players: &[usize],
) -> Result<JointPolicy> {
    params.forward(x, gamma)?;
    let g = Array2::from_shape_vec((1, gamma.len()), gamma.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
    let d = meva_directions(params, game, std::slice::from_ref(x), &g, players, None)?;
    let data = x.as_slice().iter().zip(d.iter()).map(|(v, dv)| v + alpha * dv).collect();
    JointPolicy::new(x.players(), x.dim(), data)
}

/// Deployed MeVa meta-policy with a fixed discount rate.
#[derive(Clone, Debug)]
pub struct Meva {
    pub params: ModelParams,
    pub alpha: f64,
    pub gamma: f64,
    /// Side the model learned to play; `None` for a self-play model.
    pub side: Option<usize>,
}

impl Meva {
    fn resolve_side(&self, game: &GameSpec, player: usize) -> Result<(usize, bool)> {
        match self.side {
            None => Ok((player, false)),
            Some(s) if s == player => Ok((player, false)),
            Some(s) => {
                if game.symmetry() == Symmetry::Symmetric {
                    Ok((s, true))
                } else {
                    Err(Error::SideMismatch(format!(
                        "MeVa model trained for side {} cannot play side {} of the {} game",
                        s + 1,
                        player + 1,
                        game.name()
                    )))
                }
            }
        }
    }
}

impl MetaPolicy for Meva {
    fn name(&self) -> &str {
        "meva"
    }

    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>> {
        Ok(self.step_batch(game, std::slice::from_ref(x), player)?.remove(0))
    }

    fn step_batch(&self, game: &GameSpec, xs: &[JointPolicy], player: usize) -> Result<Vec<Vec<f64>>> {
        let (acting, swap) = self.resolve_side(game, player)?;
        let view: Vec<JointPolicy> = if swap { xs.iter().map(|x| x.swapped()).collect() } else { xs.to_vec() };
        let gammas = Array2::from_elem((xs.len(), 2), self.gamma);
        let d = meva_directions(&self.params, game, &view, &gammas, &[acting], None)?;
        let n = game.dim();
        Ok(view
            .iter()
            .enumerate()
            .map(|(b, x)| (0..n).map(|k| x.row(acting)[k] + self.alpha * d[[b, acting * n + k]]).collect())
            .collect())
    }
}

/// Who the MeVa learner is trained against.
pub enum Opponents<'a> {
    /// Both players follow the shared model.
    SelfPlay,
    /// The learner plays `side`; the other player follows `rule`.
    Rule { rule: &'a dyn MetaPolicy, side: usize },
}

impl Opponents<'_> {
    fn learners(&self) -> Vec<usize> {
        match self {
            Opponents::SelfPlay => vec![0, 1],
            Opponents::Rule { side, .. } => vec![*side],
        }
    }

    pub fn side(&self) -> Option<usize> {
        match self {
            Opponents::SelfPlay => None,
            Opponents::Rule { side, .. } => Some(*side),
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub outer_loop: usize,
    pub short_td: f64,
    pub long_td: Option<f64>,
    pub mean_self_return: Option<f64>,
    pub exploit_return: Option<f64>,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "outer_loop,short_td,long_td,mean_self_return,exploit_return")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.outer_loop,
            r.short_td,
            opt(r.long_td),
            opt(r.mean_self_return),
            opt(r.exploit_return)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<LogRow>,
}

/// RNG substream for `(seed, outer loop, index)`.
pub fn substream(seed: u64, outer: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(outer.wrapping_mul(1 << 20).wrapping_add(index));
    rng
}

const INIT_STREAM: u64 = u64::MAX;

struct Roller<'a, 'b> {
    game: &'a GameSpec,
    config: &'a MevaConfig,
    opponents: &'a Opponents<'b>,
}

impl Roller<'_, '_> {
    /// Advance every pair one step: learners via the model, others via their rule.
    fn step(
        &self,
        params: &ModelParams,
        xs: &[JointPolicy],
        gammas: &Array2<f64>,
        head_means: Option<&Array2<f64>>,
    ) -> Result<Vec<JointPolicy>> {
        let learners = self.opponents.learners();
        let dirs = meva_directions(params, self.game, xs, gammas, &learners, head_means)?;
        let n = self.game.dim();
        let rule_moves = match self.opponents {
            Opponents::Rule { rule, side } => Some((1 - side, rule.step_batch(self.game, xs, 1 - side)?)),
            Opponents::SelfPlay => None,
        };
        let mut out = Vec::with_capacity(xs.len());
        for (b, x) in xs.iter().enumerate() {
            let mut next = x.clone();
            for &i in &learners {
                for k in 0..n {
                    next.row_mut(i)[k] += self.config.alpha * dirs[[b, i * n + k]];
                }
            }
            if let Some((other, moves)) = &rule_moves {
                next.row_mut(*other).copy_from_slice(&moves[b]);
            }
            out.push(next);
        }
        Ok(out)
    }

    fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<JointPolicy> {
        let mut x = self.config.init.sample(2, self.game.dim(), rng);
        if let Opponents::Rule { rule, side } = self.opponents {
            let other = 1 - side;
            let init = rule.initial(self.game, other, x.row(other))?;
            x.row_mut(other).copy_from_slice(&init);
        }
        Ok(x)
    }
}

fn gamma_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), 2), |(b, i)| rows[b][i])
}

fn returns_of(game: &GameSpec, xs: &[JointPolicy]) -> Result<Vec<[f64; 2]>> {
    xs.iter().map(|x| game.value(x).map(|r| [r.0[0], r.0[1]])).collect()
}

fn check_finite(xs: &[JointPolicy], outer: usize, seed: u64) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite policy at outer loop {outer} (seed {seed})")))
    }
}

/// Train a meta-value model.
pub fn train(game: &GameSpec, opponents: &Opponents<'_>, config: &MevaConfig, seed: u64) -> Result<TrainOutput> {
    train_with(game, opponents, config, seed, |_, _| {})
}

/// [`train`] with a callback after every outer loop.
pub fn train_with<F>(
    game: &GameSpec,
    opponents: &Opponents<'_>,
    config: &MevaConfig,
    seed: u64,
    mut on_loop: F,
) -> Result<TrainOutput>
where
    F: FnMut(&ModelParams, &LogRow),
{
    config.validate()?;
    let scale_shift = match (opponents, game.symmetry(), config.scale_shift) {
        (Opponents::SelfPlay, Symmetry::Symmetric, ScaleShift::PerPlayer) => ScaleShift::Shared,
        (_, _, ss) => ss,
    };
    let layout = config.layout(game, scale_shift);
    let mut params = init_params(&layout, &mut substream(seed, INIT_STREAM, 0));
    let mut target = params.clone();
    let mut opt = AdamW::new(params.len(), config.lr, config.weight_decay);
    let roller = Roller { game, config, opponents };
    let learners = opponents.learners();
    let branches = config.branch_points();
    let last_branch = *branches.last().expect("at least one branch");
    let (b_n, k) = (config.batch, config.stride);
    let mut log = Vec::with_capacity(config.outer_loops);
    let mut monitors: Vec<JointPolicy> = Vec::new();
    let eval_gammas = |len: usize| Array2::from_elem((len, 2), config.gamma_eval);

    for outer in 0..config.outer_loops {
        let mut rngs: Vec<ChaCha8Rng> = (0..b_n as u64).map(|b| substream(seed, outer as u64, b)).collect();
        let mut xs = Vec::with_capacity(b_n);
        let mut explore_gamma = Vec::with_capacity(b_n);
        let mut perts = Vec::with_capacity(b_n);
        for rng in rngs.iter_mut() {
            xs.push(roller.initial(rng)?);
            explore_gamma.push(if config.variable_gamma { sample_gamma(rng, 2) } else { vec![config.gamma_eval; 2] });
            perts.push(match config.exploration {
                Exploration::Off => Perturbation::None,
                Exploration::SignFlip => Perturbation::Signs(sign_flip(layout.hidden, config.flip_prob, rng)),
                Exploration::ParamNoise => Perturbation::Noise(head_noise(&params, PARAM_NOISE_STD, rng)),
            });
        }
        let explore_gamma = gamma_rows(&explore_gamma);
        let mut short_td = 0.0;
        let mut segments = 0usize;
        for t in 0..=last_branch {
            if t % k == 0 {
                let (td, _) = branch_update(
                    game, config, &roller, &mut params, &mut target, &mut opt, &xs, &mut rngs, outer, seed,
                )?;
                short_td += td;
                segments += 1;
            }
            if t == last_branch {
                break;
            }
            let head_means = match config.exploration {
                Exploration::Off => None,
                _ => {
                    let mut rows = Array2::zeros((b_n, layout.hidden));
                    for (mut row, p) in rows.rows_mut().into_iter().zip(&perts) {
                        row.assign(&p.head_mean(&params, 0));
                    }
                    Some(rows)
                }
            };
            xs = roller.step(&params, &xs, &explore_gamma, head_means.as_ref())?;
            check_finite(&xs, outer, seed)?;
        }

        let long_td = if config.long_td_batch > 0 && (outer % config.long_td_every == 0 || outer + 1 == config.outer_loops) {
            Some(long_td_error(game, config, &roller, &params, &target, outer, seed)?)
        } else {
            None
        };

        let mut mean_self_return = None;
        let mut exploit_return = None;
        if config.monitor_batch > 0 {
            if outer % config.monitor_reset == 0 {
                if config.exploit_monitor && !monitors.is_empty() {
                    exploit_return = Some(exploitability(game, config, &monitors, learners[0], outer, seed)?);
                }
                let mut rng = substream(seed, outer as u64, 2 * b_n as u64 + 1);
                monitors = (0..config.monitor_batch).map(|_| roller.initial(&mut rng)).collect::<Result<_>>()?;
            }
            let g = eval_gammas(monitors.len());
            for _ in 0..config.monitor_steps {
                monitors = roller.step(&params, &monitors, &g, None)?;
            }
            check_finite(&monitors, outer, seed)?;
            let r = returns_of(game, &monitors)?;
            mean_self_return = Some(r.iter().map(|v| v[learners[0]]).sum::<f64>() / r.len() as f64);
        }

        let row = LogRow { outer_loop: outer, short_td: short_td / segments as f64, long_td, mean_self_return, exploit_return };
        on_loop(&params, &row);
        log.push(row);
    }
    Ok(TrainOutput { params, log })
}

/// Roll an on-policy segment from every branch state and take one model step.
#[allow(clippy::too_many_arguments)]
fn branch_update(
    game: &GameSpec,
    config: &MevaConfig,
    roller: &Roller<'_, '_>,
    params: &mut ModelParams,
    target: &mut ModelParams,
    opt: &mut AdamW,
    start: &[JointPolicy],
    rngs: &mut [ChaCha8Rng],
    outer: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (b_n, k) = (start.len(), config.stride);
    let gammas = gamma_rows(
        &rngs
            .iter_mut()
            .map(|rng| if config.variable_gamma { sample_gamma(rng, 2) } else { vec![config.gamma_eval; 2] })
            .collect::<Vec<_>>(),
    );
    let mut states = vec![start.to_vec()];
    for _ in 0..k {
        let next = roller.step(params, states.last().expect("non-empty"), &gammas, None)?;
        check_finite(&next, outer, seed)?;
        states.push(next);
    }
    // Rows are ordered τ-major: row τ·B + b.
    let flat: Vec<JointPolicy> = states.iter().flatten().cloned().collect();
    let cond_all = Array2::from_shape_fn(((k + 1) * b_n, 2), |(r, i)| gammas[[r % b_n, i]]);
    let bootstrap_model: &ModelParams = if config.target_net { target } else { params };
    let boot = bootstrap_model.forward_batch(&Batch::new(stack(&flat[b_n..]), cond_all.slice(s![b_n.., ..]).to_owned()));
    let rewards = returns_of(game, &flat)?;
    let m = params.layout.outputs;
    let mut targets = vec![vec![vec![0.0; m]; k * b_n]; 2];
    for (j, tj) in targets.iter_mut().enumerate() {
        for b in 0..b_n {
            let gamma = gammas[[b, j]];
            let r: Vec<f64> = (0..k)
                .map(|tau| {
                    let idx = match config.formulation {
                        Formulation::U => (tau + 1) * b_n + b,
                        Formulation::V => tau * b_n + b,
                    };
                    rewards[idx][j]
                })
                .collect();
            let bq: Vec<Vec<f64>> = (0..k).map(|tau| boot.row(j, tau * b_n + b).to_vec()).collect();
            for (tau, y) in lambda_returns(&r, &bq, gamma, config.lambda)?.into_iter().enumerate() {
                tj[tau * b_n + b] = y;
            }
        }
    }
    let train_batch = Batch::new(stack(&flat[..k * b_n]), cond_all.slice(s![..k * b_n, ..]).to_owned());
    let rows = k * b_n;
    let mut short_td = 0.0;
    let (loss, grad) = params.param_grad(&train_batch, |out| {
        let mut dq = Array2::zeros(out.q.raw_dim());
        let mut total = 0.0;
        let norm = 1.0 / (k * b_n) as f64;
        for (j, tj) in targets.iter().enumerate() {
            for (r, y) in tj.iter().enumerate() {
                let pred = out.row(j, r);
                let pred = pred.as_slice().expect("contiguous row");
                let mean_y = y.iter().sum::<f64>() / m as f64;
                let mean_p = pred.iter().sum::<f64>() / m as f64;
                short_td += (mean_y - mean_p).powi(2);
                let (l, g) = if config.distributional {
                    quantile_loss_grad(pred, y).expect("matching lengths")
                } else {
                    let (l, g) = point_loss_grad(pred[0], y[0]);
                    (l, vec![g])
                };
                total += l * norm;
                for (c, gv) in g.into_iter().enumerate() {
                    dq[[j * rows + r, c]] = gv * norm;
                }
            }
        }
        (total, dq)
    });
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss at outer loop {outer} (seed {seed})")));
    }
    opt.step(&mut params.data, &grad);
    if config.target_net {
        crate::valuenet::ema_update(&mut target.data, &params.data, config.inertia);
    } else {
        target.data.copy_from_slice(&params.data);
    }
    Ok((short_td / (2 * rows) as f64, loss))
}

/// Squared error between predicted meta-values and long λ=1 returns with terminal bootstrap.
fn long_td_error(
    game: &GameSpec,
    config: &MevaConfig,
    roller: &Roller<'_, '_>,
    params: &ModelParams,
    target: &ModelParams,
    outer: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = substream(seed, outer as u64, 2 * config.batch as u64);
    let v = config.long_td_batch;
    let h = config.long_td_horizon;
    let mut xs: Vec<JointPolicy> = (0..v).map(|_| roller.initial(&mut rng)).collect::<Result<_>>()?;
    let gammas = Array2::from_elem((v, 2), config.gamma_eval);
    let pred = params.forward_batch(&Batch::new(stack(&xs), gammas.clone()));
    let mut rewards = vec![vec![[0.0; 2]; h]; v];
    let mut prev = returns_of(game, &xs)?;
    for step in 0..h {
        xs = roller.step(params, &xs, &gammas, None)?;
        check_finite(&xs, outer, seed)?;
        let now = returns_of(game, &xs)?;
        for b in 0..v {
            rewards[b][step] = match config.formulation {
                Formulation::U => now[b],
                Formulation::V => prev[b],
            };
        }
        prev = now;
    }
    let boot = target.forward_batch(&Batch::new(stack(&xs), gammas));
    let g = config.gamma_eval;
    let mut err = 0.0;
    for b in 0..v {
        for j in 0..2 {
            let mut y = boot.mean(j, b);
            for step in (0..h).rev() {
                y = (1.0 - g) * rewards[b][step][j] + g * y;
            }
            err += (y - pred.mean(j, b)).powi(2);
        }
    }
    Ok(err / (2 * v) as f64)
}

/// Mean return of frozen learner policies against naive exploiters.
fn exploitability(game: &GameSpec, config: &MevaConfig, frozen: &[JointPolicy], side: usize, outer: usize, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, outer as u64, 2 * config.batch as u64 + 2);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut total = 0.0;
    for x in frozen {
        let init: Vec<f64> = (0..game.dim()).map(|_| normal.sample(&mut rng)).collect();
        let br = best_response_train(game, x.row(side), side, &init, 300, tournament_alpha(game))?;
        total += br.returns.0;
    }
    Ok(total / frozen.len() as f64)
}

/// Final returns of fresh pairs after `steps` updates under `row` and `col`.
pub fn play_pairs(
    game: &GameSpec,
    row: &dyn MetaPolicy,
    col: &dyn MetaPolicy,
    inits: &[JointPolicy],
    steps: usize,
) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut xs = Vec::with_capacity(inits.len());
    for x in inits {
        let mut x = x.clone();
        let r0 = row.initial(game, 0, x.row(0))?;
        let c0 = col.initial(game, 1, x.row(1))?;
        x.row_mut(0).copy_from_slice(&r0);
        x.row_mut(1).copy_from_slice(&c0);
        xs.push(x);
    }
    let mut series = vec![returns_of(game, &xs)?];
    for t in 0..steps {
        let r = row.step_batch(game, &xs, 0)?;
        let c = col.step_batch(game, &xs, 1)?;
        for (b, x) in xs.iter_mut().enumerate() {
            x.row_mut(0).copy_from_slice(&r[b]);
            x.row_mut(1).copy_from_slice(&c[b]);
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("{} vs {} diverged at step {}", row.name(), col.name(), t + 1)));
        }
        series.push(returns_of(game, &xs)?);
    }
    Ok(series)
}

/// Save a trained model with its training metadata.
pub fn save_model(
    params: &ModelParams,
    game: &GameSpec,
    config: &MevaConfig,
    side: Option<usize>,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut meta = CheckpointMeta {
        game: game.name().into(),
        formulation: params.layout.formulation.name().into(),
        seed,
        outer_loops: config.outer_loops as u64,
        ..Default::default()
    };
    let h = &mut meta.hyperparameters;
    h.insert("alpha".into(), json!(config.alpha));
    h.insert("lr".into(), json!(config.lr));
    h.insert("episode_len".into(), json!(config.episode_len));
    h.insert("stride".into(), json!(config.stride));
    h.insert("lambda".into(), json!(config.lambda));
    h.insert("inertia".into(), json!(config.inertia));
    h.insert("gamma_eval".into(), json!(config.gamma_eval));
    h.insert("batch".into(), json!(config.batch));
    h.insert("exploration".into(), json!(config.exploration.name()));
    h.insert("side".into(), side.map_or(json!(null), |s| json!(s)));
    save_checkpoint(params, &meta, path)
}

/// Load a MeVa checkpoint as a deployable meta-policy.
pub fn load_meva(path: &Path, alpha: Option<f64>, gamma: Option<f64>) -> Result<(Meva, CheckpointMeta)> {
    let (params, meta) = load_checkpoint(path)?;
    let h = &meta.hyperparameters;
    let side = h.get("side").and_then(|v| v.as_u64()).map(|s| s as usize);
    let alpha = alpha
        .or_else(|| h.get("alpha").and_then(|v| v.as_f64()))
        .ok_or_else(|| Error::Checkpoint("checkpoint has no alpha".into()))?;
    let gamma = gamma.or_else(|| h.get("gamma_eval").and_then(|v| v.as_f64())).unwrap_or(0.95);
    Ok((Meva { params, alpha, gamma, side }, meta))
}
