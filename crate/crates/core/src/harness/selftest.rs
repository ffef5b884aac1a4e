use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{hola_step, lola_step, naive_step, unroll_objective};
use crate::deriv::{aligned_grad, finite_diff_gradient, full_jacobian, hessian_vector, rel_error, JointPolicy, FD_STEP};
use crate::error::Result;
use crate::games::{monte_carlo_value, GameSpec, Symmetry};
use crate::meva::{lambda_returns, quantile_loss, PolicyInit};
use crate::valuenet::{ema_update, init_params, load_checkpoint, save_checkpoint, Batch, CheckpointMeta, Layout};

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTestRow {
    pub property: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
}

impl SelfTestRow {
    fn at_most(property: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { property: property.into(), passed: measured <= bound, measured, bound }
    }
}

pub fn write_selftest_csv<W: Write>(rows: &[SelfTestRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "property,status,measured,bound")?;
    for r in rows {
        writeln!(w, "{},{},{:e},{:e}", r.property, if r.passed { "pass" } else { "fail" }, r.measured, r.bound)?;
    }
    Ok(())
}

fn random_policy(game: &GameSpec, seed: u64) -> JointPolicy {
    PolicyInit::Normal(1.0).sample(2, game.dim(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Invariant checks over the given games, compared against the canonical payoff tables.
///
/// A property that errors is reported as a failure with a NaN measurement.
pub fn selftest(games: &[GameSpec]) -> Vec<SelfTestRow> {
    let mut rows = Vec::new();
    let mut push = |name: String, r: Result<SelfTestRow>| {
        rows.push(r.unwrap_or(SelfTestRow { property: name, passed: false, measured: f64::NAN, bound: f64::NAN }))
    };
    for game in games {
        let g = game.name().to_string();
        push(format!("{g}/gradient"), gradient_check(game));
        push(format!("{g}/hessian_vector"), hessian_check(game));
        push(format!("{g}/unroll_gradient"), unroll_check(game));
        push(format!("{g}/hola_base_cases"), hola_base_check(game));
        push(format!("{g}/swap_symmetry"), symmetry_check(game));
        if game.matrix().is_some() {
            push(format!("{g}/value_oracle"), value_oracle(game));
        }
    }
    push("lambda_return_oracle".into(), lambda_check());
    push("normalized_bellman_fixed_point".into(), bellman_check());
    push("quantile_loss_example".into(), quantile_check());
    push("ema_arithmetic".into(), ema_check());
    push("checkpoint_round_trip".into(), checkpoint_check());
    rows
}

fn gradient_check(game: &GameSpec) -> Result<SelfTestRow> {
    let x = random_policy(game, 11);
    let g = aligned_grad(game, &x)?;
    let n = game.dim();
    let mut fd = Vec::with_capacity(2 * n);
    for i in 0..2 {
        let full = finite_diff_gradient(|v| game.returns(v)[i], x.as_slice(), FD_STEP);
        fd.extend_from_slice(&full[i * n..(i + 1) * n]);
    }
    Ok(SelfTestRow::at_most(format!("{}/gradient", game.name()), rel_error(&g.data, &fd), 1e-5))
}

/// Hessian-vector products (which contain the cross-Jacobians) against differenced full gradients.
fn hessian_check(game: &GameSpec) -> Result<SelfTestRow> {
    let x = random_policy(game, 12);
    let v: Vec<f64> = random_policy(game, 19).as_slice().to_vec();
    let cols = x.as_slice().len();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let hv = hessian_vector(game, &x, i, &v)?;
        let grad_at = |sign: f64| -> Result<Vec<f64>> {
            let data = x.as_slice().iter().zip(&v).map(|(a, d)| a + sign * FD_STEP * d).collect();
            let jac = full_jacobian(game, &JointPolicy::new(2, game.dim(), data)?)?;
            Ok(jac.row(i).to_vec())
        };
        let (up, down) = (grad_at(1.0)?, grad_at(-1.0)?);
        let fd: Vec<f64> = (0..cols).map(|c| (up[c] - down[c]) / (2.0 * FD_STEP)).collect();
        worst = worst.max(rel_error(&hv, &fd));
    }
    Ok(SelfTestRow::at_most(format!("{}/hessian_vector", game.name()), worst, 1e-4))
}

fn unroll_check(game: &GameSpec) -> Result<SelfTestRow> {
    let x = random_policy(game, 13);
    let alphas = if game.name() == "logistic" { [0.3, 0.3] } else { [1.0, 1.0] };
    let (_, g) = unroll_objective(game, &x, 0, 5, 0.95, alphas)?;
    let fd = finite_diff_gradient(
        |v| {
            let y = JointPolicy::new(2, game.dim(), v.to_vec()).expect("shape");
            unroll_objective(game, &y, 0, 5, 0.95, alphas).map(|r| r.0).unwrap_or(f64::NAN)
        },
        x.as_slice(),
        FD_STEP,
    );
    Ok(SelfTestRow::at_most(format!("{}/unroll_gradient", game.name()), rel_error(&g, &fd), 1e-4))
}

fn hola_base_check(game: &GameSpec) -> Result<SelfTestRow> {
    let x = random_policy(game, 14);
    let a = naive_step(game, &x, 0.7)?;
    let b = hola_step(game, &x, 0.7, 0)?;
    let c = lola_step(game, &x, 0.7, 0.7)?;
    let d = hola_step(game, &x, 0.7, 1)?;
    let diff = rel_error(a.as_slice(), b.as_slice()).max(rel_error(c.as_slice(), d.as_slice()));
    Ok(SelfTestRow::at_most(format!("{}/hola_base_cases", game.name()), diff, 0.0))
}

fn symmetry_check(game: &GameSpec) -> Result<SelfTestRow> {
    let x = random_policy(game, 15);
    let f = game.returns(x.as_slice());
    let s = game.returns(x.swapped().as_slice());
    let err = match game.symmetry() {
        Symmetry::Symmetric => (f[0] - s[1]).abs().max((f[1] - s[0]).abs()),
        Symmetry::Antisymmetric => (f[0] + f[1]).abs(),
        Symmetry::None => 0.0,
    };
    Ok(SelfTestRow::at_most(format!("{}/swap_symmetry", game.name()), err, 1e-12))
}

/// Worst exact-versus-sampled gap in standard errors, sampling the canonical table.
fn value_oracle(game: &GameSpec) -> Result<SelfTestRow> {
    let reference = GameSpec::by_name(game.name())?;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let x = random_policy(game, 100 + k);
        let exact = game.value(&x)?;
        let mc = monte_carlo_value(&x, &reference, 4000, 400, &mut rng)?;
        for i in 0..2 {
            worst = worst.max((exact.0[i] - mc.mean.0[i]).abs() / mc.stderr[i].max(1e-9));
        }
    }
    Ok(SelfTestRow::at_most(format!("{}/value_oracle", game.name()), worst, 4.0))
}

fn lambda_check() -> Result<SelfTestRow> {
    let r = [0.3, -1.0, 2.0, 0.5];
    let boot = vec![vec![0.0]; 4];
    let g = 0.8;
    let y = lambda_returns(&r, &boot, g, 1.0)?;
    let direct: f64 = r.iter().enumerate().map(|(t, v)| (1.0 - g) * g.powi(t as i32) * v).sum();
    let one_step = lambda_returns(&r, &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], g, 0.0)?;
    let err = (y[0][0] - direct).abs().max((one_step[1][0] - ((1.0 - g) * r[1] + g * 2.0)).abs());
    Ok(SelfTestRow::at_most("lambda_return_oracle", err, 1e-12))
}

fn bellman_check() -> Result<SelfTestRow> {
    let c = -1.3;
    let mut worst: f64 = 0.0;
    for (g, l) in [(0.1, 0.0), (0.95, 0.9), (0.99, 1.0)] {
        let y = lambda_returns(&[c; 6], &vec![vec![c; 3]; 6], g, l)?;
        for v in y.iter().flatten() {
            worst = worst.max((v - c).abs());
        }
    }
    Ok(SelfTestRow::at_most("normalized_bellman_fixed_point", worst, 1e-12))
}

fn quantile_check() -> Result<SelfTestRow> {
    Ok(SelfTestRow::at_most("quantile_loss_example", (quantile_loss(&[0.0], &[2.0])? - 0.75).abs(), 1e-15))
}

fn ema_check() -> Result<SelfTestRow> {
    let mut t = vec![1.0, -2.0];
    ema_update(&mut t, &[3.0, 2.0], 0.75);
    Ok(SelfTestRow::at_most("ema_arithmetic", (t[0] - 1.5).abs().max((t[1] + 1.0).abs()), 1e-15))
}

fn checkpoint_check() -> Result<SelfTestRow> {
    let layout = Layout::new(5, 4);
    let params = init_params(&layout, &mut ChaCha8Rng::seed_from_u64(17));
    let path = std::env::temp_dir().join(format!("meva-selftest-{}.json", std::process::id()));
    save_checkpoint(&params, &CheckpointMeta::default(), &path)?;
    let loaded = load_checkpoint(&path);
    let _ = std::fs::remove_file(&path);
    let (loaded, _) = loaded?;
    let x = random_policy(&GameSpec::ipd(), 18);
    let a = params.forward_batch(&Batch::single(&x, &[0.9, 0.9]));
    let b = loaded.forward_batch(&Batch::single(&x, &[0.9, 0.9]));
    let same = loaded.data == params.data && a.q == b.q;
    Ok(SelfTestRow::at_most("checkpoint_round_trip", if same { 0.0 } else { 1.0 }, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::MatrixGame;

    #[test]
    fn canonical_games_pass() {
        let games = [GameSpec::logistic(), GameSpec::ipd(), GameSpec::imp(), GameSpec::chicken()];
        let rows = selftest(&games);
        for r in &rows {
            assert!(r.passed, "{r:?}");
        }
        let mut csv = Vec::new();
        write_selftest_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("property,status,measured,bound\n"));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }

    #[test]
    fn corrupted_payoff_fails_value_oracle() {
        let mut m = MatrixGame::ipd();
        m.payoff[3] = [-2.5, -2.0];
        let rows = selftest(&[GameSpec::Matrix(m)]);
        let oracle = rows.iter().find(|r| r.property == "ipd/value_oracle").unwrap();
        assert!(!oracle.passed, "{oracle:?}");
    }
}
