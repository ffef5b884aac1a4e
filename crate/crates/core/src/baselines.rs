//! Meta-policies other than MeVa: naive learning, LOLA and HOLA-k, COLA,
//! M-MAML, and a naive best-response exploiter.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde_json::json;

use crate::deriv::{
    aligned_grad, aligned_jacobian_transpose, lift, own_gradient, Component, DifferentiableScalar,
    Dual, JointPolicy, Scalar,
};
use crate::error::{Error, Result};
use crate::games::{GameSpec, Symmetry};
use crate::valuenet::{
    init_params, load_checkpoint, save_checkpoint, AdamW, Batch, Checkpoint, CheckpointMeta, Layout,
    ModelParams, NamedArray,
};

/// A rule producing one player's next policy from the current joint policy.
pub trait MetaPolicy {
    fn name(&self) -> &str;

    /// Policy used at `t = 0` in place of the sampled initialization.
    fn initial(&self, _game: &GameSpec, _player: usize, sampled: &[f64]) -> Result<Vec<f64>> {
        Ok(sampled.to_vec())
    }

    /// `x_player` at the next step.
    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>>;

    /// [`step`](Self::step) over a batch of independent joint policies.
    fn step_batch(&self, game: &GameSpec, xs: &[JointPolicy], player: usize) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.step(game, x, player)).collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("step size {alpha} must be positive")))
    }
}

fn with_block(x: &JointPolicy, player: usize, alpha: f64, g: &[f64]) -> Vec<f64> {
    x.row(player).iter().zip(g).map(|(v, d)| v + alpha * d).collect()
}

/// Simultaneous gradient ascent of every player on its own return.
pub fn naive_step(game: &GameSpec, x: &JointPolicy, alpha: f64) -> Result<JointPolicy> {
    check_alpha(alpha)?;
    game.check(x)?;
    let g = aligned_grad(game, x)?;
    let data = x.as_slice().iter().zip(&g.data).map(|(v, d)| v + alpha * d).collect();
    JointPolicy::new(x.players(), x.dim(), data)
}

// Level k of the look-ahead recursion for `player`, generic so level k + 1
// can differentiate through it.
fn u0<T: Scalar>(game: &GameSpec, x: &[T], player: usize, n: usize, _alpha: f64) -> Vec<T> {
    own_gradient(game, x, player, n)
}

macro_rules! look_ahead_level {
    ($name:ident, $inner:ident) => {
        fn $name<T: Scalar>(game: &GameSpec, x: &[T], player: usize, n: usize, alpha: f64) -> Vec<T> {
            let other = 1 - player;
            let mut lifted = lift(x);
            (0..n)
                .map(|c| {
                    let idx = player * n + c;
                    lifted[idx].d = T::cst(1.0);
                    let inner = $inner::<Dual<T>>(game, &lifted, other, n, alpha);
                    let mut y = lifted.clone();
                    for (k, v) in inner.into_iter().enumerate() {
                        y[other * n + k] += v.scale(alpha);
                    }
                    let out = game.returns(&y)[player].d;
                    lifted[idx].d = T::cst(0.0);
                    out
                })
                .collect()
        }
    };
}

look_ahead_level!(u1, u0);
look_ahead_level!(u2, u1);
look_ahead_level!(u3, u2);

/// Highest supported look-ahead order.
pub const MAX_HOLA_ORDER: usize = 3;

/// HOLA-k update direction for one player: `u⁰ = ∇_{x_i} f_i`, and
/// `uᵏ_i = ∇_{x_i} f_i(x_i, x_{-i} + α uᵏ⁻¹_{-i}(x))`.
pub fn hola_direction(game: &GameSpec, x: &JointPolicy, player: usize, order: usize, alpha_im: f64) -> Result<Vec<f64>> {
    game.check(x)?;
    let n = x.dim();
    let xs = x.as_slice();
    Ok(match order {
        0 => u0(game, xs, player, n, alpha_im),
        1 => u1(game, xs, player, n, alpha_im),
        2 => u2(game, xs, player, n, alpha_im),
        3 => u3(game, xs, player, n, alpha_im),
        _ => return Err(Error::Argument(format!("HOLA order {order} exceeds {MAX_HOLA_ORDER}"))),
    })
}

/// LOLA: ascend own return against an opponent imagined to take one naive step of size `alpha_im`.
pub fn lola_step(game: &GameSpec, x: &JointPolicy, alpha: f64, alpha_im: f64) -> Result<JointPolicy> {
    check_alpha(alpha)?;
    if !(alpha_im >= 0.0) {
        return Err(Error::Argument(format!("imagined step {alpha_im} must be non-negative")));
    }
    let mut data = Vec::with_capacity(x.as_slice().len());
    for i in 0..x.players() {
        data.extend(with_block(x, i, alpha, &hola_direction(game, x, i, 1, alpha_im)?));
    }
    JointPolicy::new(x.players(), x.dim(), data)
}

pub fn hola_step(game: &GameSpec, x: &JointPolicy, alpha: f64, order: usize) -> Result<JointPolicy> {
    check_alpha(alpha)?;
    let mut data = Vec::with_capacity(x.as_slice().len());
    for i in 0..x.players() {
        data.extend(with_block(x, i, alpha, &hola_direction(game, x, i, order, alpha)?));
    }
    JointPolicy::new(x.players(), x.dim(), data)
}

#[derive(Clone, Debug)]
pub struct Naive {
    pub alpha: f64,
}

impl MetaPolicy for Naive {
    fn name(&self) -> &str {
        "naive"
    }

    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>> {
        Ok(with_block(x, player, self.alpha, &hola_direction(game, x, player, 0, 0.0)?))
    }
}

/// HOLA-k with separate update and imagined step sizes; order 1 is LOLA.
#[derive(Clone, Debug)]
pub struct Hola {
    pub name: String,
    pub alpha: f64,
    pub alpha_im: f64,
    pub order: usize,
}

impl Hola {
    pub fn lola(alpha: f64, alpha_im: f64) -> Self {
        Self { name: "lola".into(), alpha, alpha_im, order: 1 }
    }

    pub fn new(order: usize, alpha: f64) -> Self {
        Self { name: format!("hola{order}"), alpha, alpha_im: alpha, order }
    }
}

impl MetaPolicy for Hola {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>> {
        let d = hola_direction(game, x, player, self.order, self.alpha_im)?;
        Ok(with_block(x, player, self.alpha, &d))
    }
}

/// Stack joint policies into a `B × (P·N)` array.
pub fn stack(xs: &[JointPolicy]) -> Array2<f64> {
    let width = xs.first().map_or(0, |x| x.as_slice().len());
    let mut out = Array2::zeros((xs.len(), width));
    for (mut row, x) in out.rows_mut().into_iter().zip(xs) {
        row.assign(&ndarray::ArrayView1::from(x.as_slice()));
    }
    out
}

// ---------------------------------------------------------------------------
// COLA

/// Learned look-ahead field `ĝ(x; α, θ)`, conditioned on `α / ALPHA_SCALE`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColaModel {
    pub params: ModelParams,
}

pub const COLA_ALPHA_SCALE: f64 = 10.0;

impl ColaModel {
    pub fn new<R: Rng + ?Sized>(game: &GameSpec, rng: &mut R) -> Self {
        let layout = Layout::new(game.dim(), game.dim());
        Self { params: init_params(&layout, rng) }
    }

    fn batch(xs: &Array2<f64>, alphas: &[f64]) -> Batch {
        let cond = Array2::from_shape_fn((alphas.len(), 2), |(b, _)| alphas[b] / COLA_ALPHA_SCALE);
        Batch::new(xs.clone(), cond)
    }

    /// `ĝ` for every batch row, laid out like the policies.
    pub fn field(&self, xs: &Array2<f64>, alphas: &[f64]) -> Array2<f64> {
        let out = self.params.forward_batch(&Self::batch(xs, alphas));
        let (b, n) = (xs.nrows(), self.params.layout.policy_dim);
        Array2::from_shape_fn((b, 2 * n), |(r, c)| out.q[[(c / n) * b + r, c % n]])
    }

    pub fn save(&self, game: &GameSpec, seed: u64, iterations: u64, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            game: game.name().into(),
            formulation: "cola".into(),
            seed,
            outer_loops: iterations,
            ..Default::default()
        };
        save_checkpoint(&self.params, &meta, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self { params: load_checkpoint(path)?.0 })
    }
}

#[derive(Clone, Debug)]
pub struct ColaConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub alpha_max: f64,
    /// Half-width of the uniform initialization box.
    pub init_box: f64,
    /// Steps after which a rollout walker restarts.
    pub walker_len: usize,
    pub patience: usize,
}

impl Default for ColaConfig {
    fn default() -> Self {
        Self { iterations: 2000, batch: 64, lr: 1e-3, alpha_max: 10.0, init_box: 8.0, walker_len: 50, patience: 200 }
    }
}

/// Per-sample consistency residual `ĝ - ∇̄f(x + αĝ)`.
pub fn cola_residual(game: &GameSpec, x: &[f64], alpha: f64, g: &[f64]) -> Result<Vec<f64>> {
    let n = game.dim();
    let y: Vec<f64> = x.iter().zip(g).map(|(v, d)| v + alpha * d).collect();
    let yj = JointPolicy::new(2, n, y)?;
    let target = aligned_grad(game, &yj)?;
    Ok(g.iter().zip(&target.data).map(|(a, b)| a - b).collect())
}

/// Mean squared consistency residual and its gradient with respect to `ĝ`.
fn cola_loss(game: &GameSpec, xs: &Array2<f64>, alphas: &[f64], g: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let b = xs.nrows();
    let mut loss = 0.0;
    let mut dg = Array2::zeros(g.raw_dim());
    for r in 0..b {
        let x = xs.row(r).to_vec();
        let gr = g.row(r).to_vec();
        let res = cola_residual(game, &x, alphas[r], &gr)?;
        loss += res.iter().map(|v| v * v).sum::<f64>();
        let y: Vec<f64> = x.iter().zip(&gr).map(|(v, d)| v + alphas[r] * d).collect();
        let jt = aligned_jacobian_transpose(game, &y, 2, &res);
        for c in 0..res.len() {
            dg[[r, c]] = 2.0 * (res[c] - alphas[r] * jt[c]) / b as f64;
        }
    }
    Ok((loss / b as f64, dg))
}

/// Mean squared residual of `model` over fixed states.
pub fn cola_eval_residual(model: &ColaModel, game: &GameSpec, xs: &Array2<f64>, alphas: &[f64]) -> Result<f64> {
    let g = model.field(xs, alphas);
    Ok(cola_loss(game, xs, alphas, &g)?.0)
}

/// Train a COLA field on states drawn half uniformly from the box and half
/// from rollouts following the current field.
pub fn cola_train<R: Rng + ?Sized>(game: &GameSpec, config: &ColaConfig, rng: &mut R) -> Result<(ColaModel, Vec<f64>)> {
    let n = game.dim();
    let mut model = ColaModel::new(game, rng);
    let mut opt = AdamW::new(model.params.len(), config.lr, 0.0);
    let box_dist = Uniform::new_inclusive(-config.init_box, config.init_box).expect("valid box");
    let alpha_dist = Uniform::new_inclusive(0.0, config.alpha_max).expect("valid range");
    let walkers_n = config.batch / 2;
    let mut walkers = Array2::from_shape_fn((walkers_n, 2 * n), |_| box_dist.sample(rng));
    let mut walker_alpha: Vec<f64> = (0..walkers_n).map(|_| alpha_dist.sample(rng)).collect();
    let mut walker_age = vec![0usize; walkers_n];
    let mut history = Vec::with_capacity(config.iterations);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut smoothed = None::<f64>;
    for it in 0..config.iterations {
        let mut xs = Array2::zeros((config.batch, 2 * n));
        let mut alphas = Vec::with_capacity(config.batch);
        for r in 0..config.batch {
            if r < walkers_n {
                xs.row_mut(r).assign(&walkers.row(r));
                alphas.push(walker_alpha[r]);
            } else {
                xs.row_mut(r).iter_mut().for_each(|v| *v = box_dist.sample(rng));
                alphas.push(alpha_dist.sample(rng));
            }
        }
        let mut failure = None;
        let (loss, grad) = model.params.param_grad(&ColaModel::batch(&xs, &alphas), |out| {
            let g = Array2::from_shape_fn((config.batch, 2 * n), |(r, c)| out.q[[(c / n) * config.batch + r, c % n]]);
            match cola_loss(game, &xs, &alphas, &g) {
                Ok((l, dg)) => {
                    let mut dq = Array2::zeros(out.q.raw_dim());
                    for r in 0..config.batch {
                        for c in 0..2 * n {
                            dq[[(c / n) * config.batch + r, c % n]] = dg[[r, c]];
                        }
                    }
                    (l, dq)
                }
                Err(e) => {
                    failure = Some(e);
                    (f64::NAN, Array2::zeros(out.q.raw_dim()))
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!("COLA loss became non-finite at iteration {it}")));
        }
        // linear anneal to a tenth of the base rate
        opt.lr = config.lr * (1.0 - 0.9 * it as f64 / config.iterations as f64);
        opt.step(&mut model.params.data, &grad);
        history.push(loss);
        let s = match smoothed {
            None => loss,
            Some(s) => 0.95 * s + 0.05 * loss,
        };
        smoothed = Some(s);
        if s < best {
            best = s;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best > config.patience && s > 10.0 * best {
            return Err(Error::Training(format!(
                "COLA loss diverged: smoothed {s:.3e} against best {best:.3e} at iteration {it}"
            )));
        }
        // advance walkers along the current field
        let g = model.field(&walkers, &walker_alpha);
        for r in 0..walkers_n {
            let mut restart = walker_age[r] >= config.walker_len;
            for c in 0..2 * n {
                walkers[[r, c]] += walker_alpha[r] * g[[r, c]];
                restart |= !walkers[[r, c]].is_finite() || walkers[[r, c]].abs() > 2.0 * config.init_box;
            }
            walker_age[r] += 1;
            if restart {
                walkers.row_mut(r).iter_mut().for_each(|v| *v = box_dist.sample(rng));
                walker_alpha[r] = alpha_dist.sample(rng);
                walker_age[r] = 0;
            }
        }
    }
    Ok((model, history))
}

/// `x + α ĝ(x; α)`.
pub fn cola_step(model: &ColaModel, x: &JointPolicy, alpha: f64) -> Result<JointPolicy> {
    check_alpha(alpha)?;
    let xs = stack(std::slice::from_ref(x));
    let g = model.field(&xs, &[alpha]);
    let data = x.as_slice().iter().zip(g.iter()).map(|(v, d)| v + alpha * d).collect();
    JointPolicy::new(x.players(), x.dim(), data)
}

#[derive(Clone, Debug)]
pub struct Cola {
    pub model: ColaModel,
    pub alpha: f64,
}

impl MetaPolicy for Cola {
    fn name(&self) -> &str {
        "cola"
    }

    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>> {
        Ok(self.step_batch(game, std::slice::from_ref(x), player)?.remove(0))
    }

    fn step_batch(&self, _game: &GameSpec, xs: &[JointPolicy], player: usize) -> Result<Vec<Vec<f64>>> {
        let arr = stack(xs);
        let g = self.model.field(&arr, &vec![self.alpha; xs.len()]);
        let n = self.model.params.layout.policy_dim;
        Ok(xs
            .iter()
            .enumerate()
            .map(|(b, x)| (0..n).map(|k| x.row(player)[k] + self.alpha * g[[b, player * n + k]]).collect())
            .collect())
    }
}

// ---------------------------------------------------------------------------
// M-MAML

/// A learned initialization for one side of the game, deployed with naive updates.
#[derive(Clone, Debug, PartialEq)]
pub struct MmamlInit {
    pub side: usize,
    pub init: Vec<f64>,
    /// Step size of the M-MAML player's own naive updates.
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct MmamlConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub unroll: usize,
    pub gamma_meta: f64,
    /// Step size of the learner's own naive updates.
    pub alpha_self: f64,
    /// Step size of the naive opponent inside the unroll.
    pub alpha_opponent: f64,
}

impl MmamlConfig {
    pub fn for_game(game: &GameSpec) -> Self {
        let (alpha_self, alpha_opponent) = match game.name() {
            "imp" => (2.5, 25.0),
            "chicken" => (25.0, 1.0),
            _ => (25.0, 25.0),
        };
        Self { iterations: 100, batch: 64, lr: 0.1, unroll: 300, gamma_meta: 0.95, alpha_self, alpha_opponent }
    }
}

/// `J = Σ_{t=0..L} γ^t f_side(x⁽ᵗ⁾)` along a naive unroll, and `∂J/∂x⁽⁰⁾` (all coordinates).
pub fn unroll_objective(
    game: &GameSpec,
    x0: &JointPolicy,
    side: usize,
    steps: usize,
    gamma: f64,
    alphas: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    game.check(x0)?;
    let n = x0.dim();
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0.as_slice().to_vec());
    for t in 0..steps {
        let x = JointPolicy::new(2, n, traj[t].clone())?;
        let g = aligned_grad(game, &x)?;
        let next: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(&g.data)
            .enumerate()
            .map(|(c, (v, d))| v + alphas[c / n] * d)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("unroll became non-finite at step {t}; step size too large")));
        }
        traj.push(next);
    }
    let f = Component { func: game, index: side };
    let mut objective = 0.0;
    let mut adj = vec![0.0; 2 * n];
    for t in (0..=steps).rev() {
        let x = &traj[t];
        let w = gamma.powi(t as i32);
        objective += w * f.value(x);
        if t < steps {
            // adj ← (I + diag(α) J_G)ᵀ adj
            let scaled: Vec<f64> = adj.iter().enumerate().map(|(c, a)| alphas[c / n] * a).collect();
            let jt = aligned_jacobian_transpose(game, x, 2, &scaled);
            for (a, j) in adj.iter_mut().zip(jt) {
                *a += j;
            }
        }
        for (a, g) in adj.iter_mut().zip(f.gradient(x)) {
            *a += w * g;
        }
    }
    Ok((objective, adj))
}

/// Optimize the M-MAML player's initialization through exact naive unrolls.
pub fn mmaml_train<R: Rng + ?Sized>(
    game: &GameSpec,
    side: usize,
    config: &MmamlConfig,
    rng: &mut R,
) -> Result<(MmamlInit, Vec<f64>)> {
    if side > 1 {
        return Err(Error::Argument(format!("side {side} is not 0 or 1")));
    }
    let n = game.dim();
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut init: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let mut opt = AdamW::new(n, config.lr, 0.0);
    let mut alphas = [config.alpha_opponent; 2];
    alphas[side] = config.alpha_self;
    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut grad = vec![0.0; n];
        let mut total = 0.0;
        for _ in 0..config.batch {
            let mut x = JointPolicy::zeros(2, n);
            x.row_mut(side).copy_from_slice(&init);
            for v in x.row_mut(1 - side) {
                *v = normal.sample(rng);
            }
            let (j, g) = unroll_objective(game, &x, side, config.unroll, config.gamma_meta, alphas)
                .map_err(|e| Error::Numeric(format!("M-MAML iteration {it}: {e}")))?;
            total += j;
            for (a, b) in grad.iter_mut().zip(&g[side * n..(side + 1) * n]) {
                *a -= b / config.batch as f64;
            }
        }
        opt.step(&mut init, &grad);
        history.push(total / config.batch as f64);
    }
    Ok((MmamlInit { side, init, alpha: config.alpha_self }, history))
}

impl MmamlInit {
    pub fn save(&self, game: &GameSpec, seed: u64, path: &Path) -> Result<()> {
        let mut meta = CheckpointMeta {
            game: game.name().into(),
            formulation: "mmaml".into(),
            seed,
            ..Default::default()
        };
        meta.hyperparameters.insert("side".into(), json!(self.side));
        meta.hyperparameters.insert("alpha".into(), json!(self.alpha));
        let arrays = vec![NamedArray { name: "init".into(), shape: vec![self.init.len()], values: self.init.clone() }];
        Checkpoint::new(meta, arrays).write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::read(path)?;
        let side = ck.hyperparameters.get("side").and_then(|v| v.as_u64()).ok_or_else(|| {
            Error::Checkpoint("M-MAML checkpoint has no side".into())
        })? as usize;
        let alpha = ck
            .hyperparameters
            .get("alpha")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Checkpoint("M-MAML checkpoint has no alpha".into()))?;
        Ok(Self { side, init: ck.array("init")?.values.clone(), alpha })
    }

    fn check_side(&self, game: &GameSpec, player: usize) -> Result<()> {
        if player != self.side && game.symmetry() != Symmetry::Symmetric {
            return Err(Error::SideMismatch(format!(
                "M-MAML model for side {} cannot play side {player} of the {} game",
                self.side + 1,
                game.name()
            )));
        }
        Ok(())
    }
}

/// Deployment: the learned init at `t = 0`, naive updates afterwards.
pub fn mmaml_step(init: &MmamlInit, game: &GameSpec, x: &JointPolicy, t: usize) -> Result<Vec<f64>> {
    init.check_side(game, init.side)?;
    if t == 0 {
        Ok(init.init.clone())
    } else {
        Naive { alpha: init.alpha }.step(game, x, init.side)
    }
}

impl MetaPolicy for MmamlInit {
    fn name(&self) -> &str {
        "mmaml"
    }

    fn initial(&self, game: &GameSpec, player: usize, _sampled: &[f64]) -> Result<Vec<f64>> {
        self.check_side(game, player)?;
        Ok(self.init.clone())
    }

    fn step(&self, game: &GameSpec, x: &JointPolicy, player: usize) -> Result<Vec<f64>> {
        self.check_side(game, player)?;
        Naive { alpha: self.alpha }.step(game, x, player)
    }
}

// ---------------------------------------------------------------------------
// Exploitability

#[derive(Clone, Debug)]
pub struct BestResponse {
    pub policy: Vec<f64>,
    /// `(frozen, exploiter)` returns before and after training.
    pub initial: (f64, f64),
    pub returns: (f64, f64),
}

/// Train a naive exploiter against a frozen policy for `frozen_player`.
pub fn best_response_train(
    game: &GameSpec,
    x_frozen: &[f64],
    frozen_player: usize,
    exploiter_init: &[f64],
    steps: usize,
    alpha: f64,
) -> Result<BestResponse> {
    check_alpha(alpha)?;
    let n = game.dim();
    let other = 1 - frozen_player;
    let mut x = JointPolicy::zeros(2, n);
    x.row_mut(frozen_player).copy_from_slice(x_frozen);
    x.row_mut(other).copy_from_slice(exploiter_init);
    let pair = |x: &JointPolicy| -> Result<(f64, f64)> {
        let r = game.value(x)?;
        Ok((r.0[frozen_player], r.0[other]))
    };
    let initial = pair(&x)?;
    let naive = Naive { alpha };
    for t in 0..steps {
        let next = naive.step(game, &x, other)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("exploiter diverged at step {t}")));
        }
        x.row_mut(other).copy_from_slice(&next);
    }
    Ok(BestResponse { policy: x.row(other).to_vec(), initial, returns: pair(&x)? })
}
