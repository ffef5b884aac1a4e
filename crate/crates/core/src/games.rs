//! Differentiable two-player games.
//!
//! The Logistic Game is a two-dimensional toy with two stable solutions, and
//! the repeated matrix games (IPD, IMP, Chicken) use memory-one policies of
//! five logits with the exact normalized discounted value
//! `(1-δ) p₀ᵀ (I - δP)⁻¹ r`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::deriv::{sigmoid, Differentiable, JointPolicy, ReturnVector, Scalar};
use crate::error::{Error, Result};

/// How the two payoff tables relate under a player swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    None,
}

/// Observation states of a memory-one policy and player 2's view of them.
///
/// Joint actions are written player 1 first. Player 2 sees every state as if
/// it were player 1, which swaps `AB` and `BA`.
pub struct StateIndexing;

impl StateIndexing {
    pub const NAMES: [&'static str; 5] = ["start", "AA", "AB", "BA", "BB"];
    pub const PLAYER2_VIEW: [usize; 5] = [0, 1, 3, 2, 4];

    /// Index into a player's own logits for joint state `state`.
    pub fn view(player: usize, state: usize) -> usize {
        if player == 0 {
            state
        } else {
            Self::PLAYER2_VIEW[state]
        }
    }
}

/// Probability of playing `A` in each of the five joint states.
pub fn matrix_policy_probs(logits: &[f64], player: usize) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (s, o) in out.iter_mut().enumerate() {
        *o = sigmoid(logits[StateIndexing::view(player, s)]);
    }
    out
}

/// Repeated 2×2 game with memory-one policies.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGame {
    pub name: String,
    /// `payoff[joint][player]`, joints ordered AA, AB, BA, BB.
    pub payoff: [[f64; 2]; 4],
    pub discount: f64,
    pub symmetry: Symmetry,
}

pub const DEFAULT_DISCOUNT: f64 = 0.96;

impl MatrixGame {
    pub fn ipd() -> Self {
        Self {
            name: "ipd".into(),
            payoff: [[-1.0, -1.0], [-3.0, 0.0], [0.0, -3.0], [-2.0, -2.0]],
            discount: DEFAULT_DISCOUNT,
            symmetry: Symmetry::Symmetric,
        }
    }

    pub fn imp() -> Self {
        Self {
            name: "imp".into(),
            payoff: [[1.0, -1.0], [-1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]],
            discount: DEFAULT_DISCOUNT,
            symmetry: Symmetry::Antisymmetric,
        }
    }

    pub fn chicken() -> Self {
        Self {
            name: "chicken".into(),
            payoff: [[0.0, 0.0], [-1.0, 1.0], [1.0, -1.0], [-100.0, -100.0]],
            discount: DEFAULT_DISCOUNT,
            symmetry: Symmetry::Symmetric,
        }
    }

    pub fn payoff_range(&self) -> (f64, f64) {
        self.payoff.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// First-round distribution and transition matrix over joint actions.
    fn chain<T: Scalar>(&self, x: &[T]) -> ([T; 4], [[T; 4]; 4]) {
        let one = T::cst(1.0);
        let joint = |a: T, b: T| [a * b, a * (one - b), (one - a) * b, (one - a) * (one - b)];
        let p1: Vec<T> = x[..5].iter().map(|v| v.sigmoid()).collect();
        let p2: Vec<T> = x[5..10].iter().map(|v| v.sigmoid()).collect();
        let pick = |s: usize| (p1[s], p2[StateIndexing::PLAYER2_VIEW[s]]);
        let (a0, b0) = pick(0);
        let start = joint(a0, b0);
        let mut trans = [[T::cst(0.0); 4]; 4];
        for (j, row) in trans.iter_mut().enumerate() {
            let (a, b) = pick(j + 1);
            *row = joint(a, b);
        }
        (start, trans)
    }

    /// Discounted state occupancy `u = (1-δ)(I - δPᵀ)⁻¹ p₀`.
    fn occupancy<T: Scalar>(&self, x: &[T]) -> [T; 4] {
        let (start, trans) = self.chain(x);
        let d = self.discount;
        // Solve (I - δP)ᵀ u = p₀.
        let mut a = [[T::cst(0.0); 4]; 4];
        for (r, row) in a.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let id = if r == c { 1.0 } else { 0.0 };
                *v = T::cst(id) - trans[c][r].scale(d);
            }
        }
        let mut u = solve4(a, start);
        for v in u.iter_mut() {
            *v = v.scale(1.0 - d);
        }
        u
    }

    fn eval_generic<T: Scalar>(&self, x: &[T]) -> [T; 2] {
        let u = self.occupancy(x);
        let mut out = [T::cst(0.0); 2];
        for (j, w) in u.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += w.scale(self.payoff[j][i]);
            }
        }
        out
    }

    /// Residual of the linear solve behind the value, in the max norm.
    fn solve_residual(&self, x: &[f64]) -> f64 {
        let (start, trans) = self.chain(x);
        let u = self.occupancy(x);
        let d = self.discount;
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            let mut acc = u[r] / (1.0 - d);
            for c in 0..4 {
                acc -= d * trans[c][r] * u[c] / (1.0 - d);
            }
            worst = worst.max((acc - start[r]).abs());
        }
        worst
    }
}

/// Gaussian elimination with partial pivoting on the primal values.
fn solve4<T: Scalar>(mut a: [[T; 4]; 4], mut b: [T; 4]) -> [T; 4] {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].re().abs().total_cmp(&a[j][col].re().abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = T::cst(1.0) / a[col][col];
        for row in col + 1..4 {
            let factor = a[row][col] * inv;
            for k in col..4 {
                let t = a[col][k];
                a[row][k] -= factor * t;
            }
            let t = b[col];
            b[row] -= factor * t;
        }
    }
    let mut x = [T::cst(0.0); 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// A differentiable game definition.
#[derive(Clone, Debug, PartialEq)]
pub enum GameSpec {
    Logistic,
    Matrix(MatrixGame),
}

impl GameSpec {
    pub fn logistic() -> Self {
        Self::Logistic
    }

    pub fn ipd() -> Self {
        Self::Matrix(MatrixGame::ipd())
    }

    pub fn imp() -> Self {
        Self::Matrix(MatrixGame::imp())
    }

    pub fn chicken() -> Self {
        Self::Matrix(MatrixGame::chicken())
    }

    /// Look a game up by its CLI name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "logistic" => Ok(Self::logistic()),
            "ipd" => Ok(Self::ipd()),
            "imp" => Ok(Self::imp()),
            "chicken" => Ok(Self::chicken()),
            other => Err(Error::Config(format!(
                "unknown game '{other}' (expected logistic, ipd, imp or chicken)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Logistic => "logistic",
            Self::Matrix(m) => &m.name,
        }
    }

    pub fn players(&self) -> usize {
        2
    }

    /// Per-player parameter count.
    pub fn dim(&self) -> usize {
        match self {
            Self::Logistic => 1,
            Self::Matrix(_) => 5,
        }
    }

    pub fn symmetry(&self) -> Symmetry {
        match self {
            Self::Logistic => Symmetry::Symmetric,
            Self::Matrix(m) => m.symmetry,
        }
    }

    pub fn matrix(&self) -> Option<&MatrixGame> {
        match self {
            Self::Matrix(m) => Some(m),
            Self::Logistic => None,
        }
    }

    /// Generic two-player evaluation on flattened `[x_1, x_2]`.
    pub fn returns<T: Scalar>(&self, x: &[T]) -> [T; 2] {
        match self {
            Self::Logistic => logistic_generic(x),
            Self::Matrix(m) => m.eval_generic(x),
        }
    }

    /// Exact expected returns.
    pub fn value(&self, x: &JointPolicy) -> Result<ReturnVector> {
        self.check(x)?;
        Ok(ReturnVector(self.returns(x.as_slice()).to_vec()))
    }

    pub fn check(&self, x: &JointPolicy) -> Result<()> {
        if x.players() != 2 || x.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "{} expects a 2x{} policy, got {}x{}",
                self.name(),
                self.dim(),
                x.players(),
                x.dim()
            )));
        }
        Ok(())
    }
}

impl Differentiable for GameSpec {
    fn input_dim(&self) -> usize {
        2 * self.dim()
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        self.returns(x).to_vec()
    }
}

fn logistic_generic<T: Scalar>(x: &[T]) -> [T; 2] {
    let (a, b) = (x[0], x[1]);
    let one = T::cst(1.0);
    let poly = ((a * a * b * b) + (a - b) * (a - b) * (a + b) * (a + b)).scale(1.0 / 10000.0);
    let f1 = -(a.sigmoid() * (one - b.sigmoid().scale(2.0))).scale(4.0) - poly;
    let f2 = -(b.sigmoid() * (one - a.sigmoid().scale(2.0))).scale(4.0) - poly;
    [f1, f2]
}

/// Logistic Game returns for a `2×1` policy.
pub fn logistic_eval(x: &JointPolicy) -> Result<ReturnVector> {
    GameSpec::Logistic.value(x)
}

/// Exact normalized discounted value of a memory-one policy pair.
pub fn matrix_game_value(x: &JointPolicy, game: &GameSpec) -> Result<ReturnVector> {
    let m = game
        .matrix()
        .ok_or_else(|| Error::Argument(format!("{} is not a repeated matrix game", game.name())))?;
    game.check(x)?;
    let residual = m.solve_residual(x.as_slice());
    if !(residual <= 1e-9) {
        return Err(Error::Numeric(format!("linear solve residual {residual:e} exceeds 1e-9")));
    }
    Ok(ReturnVector(m.eval_generic(x.as_slice()).to_vec()))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub mean: ReturnVector,
    pub stderr: Vec<f64>,
}

/// Sampled normalized discounted return `(1-δ) Σ_t δ^t r_t`, truncated at `horizon`.
pub fn monte_carlo_value<R: Rng + ?Sized>(
    x: &JointPolicy,
    game: &GameSpec,
    episodes: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let m = game
        .matrix()
        .ok_or_else(|| Error::Argument(format!("{} is not a repeated matrix game", game.name())))?;
    game.check(x)?;
    let p1 = matrix_policy_probs(x.row(0), 0);
    let p2 = matrix_policy_probs(x.row(1), 1);
    let d = m.discount;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = 0usize;
        let mut weight = 1.0 - d;
        let mut ret = [0.0; 2];
        for _ in 0..horizon {
            let a_is_a = rng.random::<f64>() < p1[state];
            let b_is_a = rng.random::<f64>() < p2[state];
            let joint = match (a_is_a, b_is_a) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            for i in 0..2 {
                ret[i] += weight * m.payoff[joint][i];
            }
            weight *= d;
            state = joint + 1;
        }
        returns.push(ret);
    }
    let n = episodes as f64;
    let mean: Vec<f64> = (0..2).map(|i| returns.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let stderr = (0..2)
        .map(|i| {
            let ss: f64 = returns.iter().map(|r| (r[i] - mean[i]).powi(2)).sum();
            (ss / (n - 1.0).max(1.0) / n).sqrt()
        })
        .collect();
    Ok(Estimate { mean: ReturnVector(mean), stderr })
}

/// Return pairs `(return_1, return_2)` achievable against a frozen player-1 policy.
#[derive(Clone, Debug, Default)]
pub struct ReturnPairCloud {
    pub samples: Vec<(f64, f64)>,
    pub corners: Vec<(f64, f64)>,
    /// Convex hull of the corner pairs, counter-clockwise.
    pub hull: Vec<(f64, f64)>,
}

/// Spread of the random opponents pitted against the frozen policy.
pub const OPPONENT_LOGIT_STD: f64 = 3.0;
/// Logit magnitude of a "deterministic" policy.
pub const CORNER_LOGIT: f64 = 20.0;

pub fn return_region<R: Rng + ?Sized>(
    x_frozen: &[f64],
    game: &GameSpec,
    n_opponents: usize,
    rng: &mut R,
) -> Result<ReturnPairCloud> {
    let m = game
        .matrix()
        .ok_or_else(|| Error::Argument(format!("{} is not a repeated matrix game", game.name())))?;
    if x_frozen.len() != 5 {
        return Err(Error::Shape(format!("frozen policy has {} logits, expected 5", x_frozen.len())));
    }
    let normal = Normal::new(0.0, OPPONENT_LOGIT_STD).expect("valid normal");
    let mut x = [0.0; 10];
    x[..5].copy_from_slice(x_frozen);
    let samples = (0..n_opponents)
        .map(|_| {
            for v in &mut x[5..] {
                *v = normal.sample(rng);
            }
            let r = m.eval_generic(&x);
            (r[0], r[1])
        })
        .collect();
    let corners = corner_pairs(m);
    let hull = convex_hull(&corners);
    Ok(ReturnPairCloud { samples, corners, hull })
}

/// Returns for every pair of deterministic memory-one policies.
pub fn corner_pairs(m: &MatrixGame) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(1024);
    let mut x = [0.0; 10];
    for bits1 in 0..32u32 {
        for bits2 in 0..32u32 {
            for s in 0..5 {
                x[s] = if bits1 >> s & 1 == 1 { CORNER_LOGIT } else { -CORNER_LOGIT };
                x[5 + s] = if bits2 >> s & 1 == 1 { CORNER_LOGIT } else { -CORNER_LOGIT };
            }
            let r = m.eval_generic(&x);
            out.push((r[0], r[1]));
        }
    }
    out
}

/// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-12 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-12 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies inside a counter-clockwise hull, allowing `slack` outside each edge.
pub fn hull_contains(hull: &[(f64, f64)], p: (f64, f64), slack: f64) -> bool {
    let n = hull.len();
    (0..n).all(|k| {
        let a = hull[k];
        let b = hull[(k + 1) % n];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            return true;
        }
        let signed = ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)) / len;
        signed >= -slack
    })
}

impl ReturnPairCloud {
    /// Slope of the rightmost front, with the opponent's return on the horizontal axis.
    ///
    /// Measured as the chord from the lowest-`return_1` hull vertex of the samples
    /// up to the vertex with the largest opponent return. A fair policy gives
    /// about 1, an extortionate one more than 1, and an exploitable one whose
    /// worst case is the opponent's best gets a negative slope.
    pub fn front_slope(&self) -> f64 {
        front_slope(&self.samples)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,return_1,return_2")?;
        for (kind, pts) in [("sample", &self.samples), ("corner", &self.corners), ("hull", &self.hull)] {
            for (a, b) in pts.iter() {
                writeln!(w, "{kind},{a},{b}")?;
            }
        }
        Ok(())
    }
}

pub fn front_slope(pairs: &[(f64, f64)]) -> f64 {
    // (opponent, frozen) coordinates
    let flipped: Vec<(f64, f64)> = pairs.iter().map(|&(r1, r2)| (r2, r1)).collect();
    let hull = convex_hull(&flipped);
    if hull.is_empty() {
        return f64::NAN;
    }
    let right = hull
        .iter()
        .copied()
        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .unwrap();
    let bottom = hull
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)))
        .unwrap();
    let run = right.0 - bottom.0;
    if run > 1e-9 {
        return (right.1 - bottom.1) / run;
    }
    // The opponent's best point is also the frozen player's worst: the front
    // runs from there up to the frozen player's best point instead.
    let top = hull
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .unwrap();
    let run = top.0 - right.0;
    if run.abs() <= 1e-9 {
        return f64::NAN;
    }
    (top.1 - right.1) / run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::{
        aligned_grad, finite_diff_gradient, full_jacobian, rel_error, Component,
        DifferentiableScalar, FD_STEP,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pol(p1: &[f64], p2: &[f64]) -> JointPolicy {
        JointPolicy::from_rows(&[p1, p2]).unwrap()
    }

    fn tft() -> [f64; 5] {
        [10.0, 10.0, -10.0, 10.0, -10.0]
    }

    #[test]
    fn logistic_origin_is_zero() {
        let v = logistic_eval(&pol(&[0.0], &[0.0])).unwrap();
        assert_eq!(v.0, vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_diagonal_is_symmetric_and_prefers_b() {
        for t in [-3.0, -0.5, 1.0, 6.0] {
            let v = logistic_eval(&pol(&[t], &[t])).unwrap();
            assert!((v.0[0] - v.0[1]).abs() < 1e-15);
        }
        let b = logistic_eval(&pol(&[4.0], &[4.0])).unwrap();
        let a = logistic_eval(&pol(&[-4.0], &[-4.0])).unwrap();
        assert!(b.0[0] > a.0[0] && b.0[1] > a.0[1]);
    }

    #[test]
    fn logistic_cross_derivative_at_origin_is_one() {
        let jac = full_jacobian(&GameSpec::Logistic, &pol(&[0.0], &[0.0])).unwrap();
        assert!((jac.at(0, 1) - 1.0).abs() < 1e-14);
        let fd = finite_diff_gradient(|z| GameSpec::Logistic.returns(z)[0], &[0.0, 0.0], FD_STEP);
        assert!((fd[1] - 1.0).abs() < 1e-8);
        let g = aligned_grad(&GameSpec::Logistic, &pol(&[0.0], &[0.0])).unwrap();
        assert!(g.data.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn policy_probs() {
        assert!(matrix_policy_probs(&[0.0; 5], 0).iter().all(|&p| p == 0.5));
        assert!(matrix_policy_probs(&[20.0; 5], 1).iter().all(|&p| p >= 1.0 - 1e-8));
        let logits = [0.0, 1.0, 2.0, 3.0, 4.0];
        let p = matrix_policy_probs(&logits, 1);
        assert_eq!(p[2], sigmoid(3.0));
        assert_eq!(p[3], sigmoid(2.0));
        for s in 0..5 {
            assert_eq!(StateIndexing::view(1, StateIndexing::view(1, s)), s);
        }
    }

    #[test]
    fn ipd_reference_values() {
        let g = GameSpec::ipd();
        let defect = matrix_game_value(&pol(&[-20.0; 5], &[-20.0; 5]), &g).unwrap();
        assert!(defect.0.iter().all(|v| (v + 2.0).abs() < 1e-3));
        let uniform = matrix_game_value(&pol(&[0.0; 5], &[0.0; 5]), &g).unwrap();
        assert!(uniform.0.iter().all(|v| (v + 1.5).abs() < 1e-12));
        let t = tft();
        let both = matrix_game_value(&pol(&t, &t), &g).unwrap();
        assert!(both.0.iter().all(|v| (v + 1.0).abs() < 1e-2), "{both:?}");
    }

    #[test]
    fn imp_uniform_is_zero_and_zero_sum() {
        let g = GameSpec::imp();
        let v = matrix_game_value(&pol(&[0.0; 5], &[0.0; 5]), &g).unwrap();
        assert!(v.0.iter().all(|r| r.abs() < 1e-12));
        let x = pol(&[0.3, -1.0, 2.0, 0.5, -0.2], &[1.5, 0.1, -0.7, 0.9, 0.0]);
        let v = matrix_game_value(&x, &g).unwrap();
        assert!((v.0[0] + v.0[1]).abs() < 1e-12);
    }

    #[test]
    fn symmetric_games_swap_returns() {
        let x = pol(&[0.3, -1.0, 2.0, 0.5, -0.2], &[1.5, 0.1, -0.7, 0.9, 0.0]);
        for g in [GameSpec::ipd(), GameSpec::chicken()] {
            let v = g.value(&x).unwrap();
            let s = g.value(&x.swapped()).unwrap();
            assert!((v.0[0] - s.0[1]).abs() < 1e-12);
            assert!((v.0[1] - s.0[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_gradient_matches_fd_at_uniform() {
        let g = GameSpec::ipd();
        let x = vec![0.0; 10];
        for i in 0..2 {
            let c = Component { func: &g, index: i };
            let exact = c.gradient(&x);
            let fd = finite_diff_gradient(|z| c.value(z), &x, FD_STEP);
            assert!(rel_error(&exact, &fd) < 1e-5);
        }
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let x = JointPolicy::zeros(2, 3);
        assert!(matches!(GameSpec::ipd().value(&x), Err(Error::Shape(_))));
        assert!(matches!(matrix_game_value(&x, &GameSpec::Logistic), Err(Error::Argument(_))));
    }

    #[test]
    fn monte_carlo_deterministic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let defect = pol(&[-40.0; 5], &[-40.0; 5]);
        let est = monte_carlo_value(&defect, &GameSpec::ipd(), 200, 400, &mut rng).unwrap();
        for i in 0..2 {
            assert!((est.mean.0[i] + 2.0 * (1.0 - 0.96f64.powi(400))).abs() < 1e-9);
            assert!(est.stderr[i] < 1e-9);
        }
        let est = monte_carlo_value(&pol(&[0.0; 5], &[0.0; 5]), &GameSpec::imp(), 2000, 400, &mut rng)
            .unwrap();
        assert!(est.mean.0[0].abs() < 4.0 * est.stderr[0] + 1e-12);
    }

    #[test]
    fn corner_hull_contains_stage_payoffs() {
        let m = MatrixGame::ipd();
        let hull = convex_hull(&corner_pairs(&m));
        for p in [(-1.0, -1.0), (-2.0, -2.0), (0.0, -3.0), (-3.0, 0.0)] {
            assert!(hull_contains(&hull, p, 1e-6), "{p:?} outside {hull:?}");
        }
        assert!(!hull_contains(&hull, (0.0, 0.0), 1e-6));
    }

    #[test]
    fn tit_for_tat_front_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = return_region(&tft(), &GameSpec::ipd(), 2000, &mut rng).unwrap();
        for &p in &cloud.samples {
            assert!(hull_contains(&cloud.hull, p, 1e-6));
        }
        // Against tit-for-tat the front joins all-defect to all-cooperate;
        // slope (2 - δ) / (2δ - 1), which tends to 1 as δ → 1.
        let d = 0.96;
        let slope = cloud.front_slope();
        assert!((slope - (2.0 - d) / (2.0 * d - 1.0)).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn unconditional_cooperator_front_slopes_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = return_region(&[10.0; 5], &GameSpec::ipd(), 2000, &mut rng).unwrap();
        // From (opponent 0, own -3) up to mutual cooperation at (-1, -1).
        let slope = cloud.front_slope();
        assert!((slope + 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn cloud_csv_has_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = return_region(&[0.0; 5], &GameSpec::ipd(), 5, &mut rng).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,return_1,return_2\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("sample,")).count(), 5);
        assert_eq!(text.lines().filter(|l| l.starts_with("corner,")).count(), 1024);
        assert!(text.lines().any(|l| l.starts_with("hull,")));
    }
}
