//! Property tests of game, derivative, baseline and value-network invariants
//! through the public API.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meva::baselines::{hola_step, lola_step, naive_step};
use meva::deriv::{finite_diff_gradient, full_jacobian, hessian_vector, rel_error, JointPolicy, FD_STEP};
use meva::games::{GameSpec, Symmetry};
use meva::meva::{meva_step, MevaConfig};
use meva::valuenet::{ema_update, init_params, sign_flip, Formulation, QuantileValue, ScaleShift};

fn games() -> [GameSpec; 4] {
    [GameSpec::logistic(), GameSpec::ipd(), GameSpec::imp(), GameSpec::chicken()]
}

fn game_index() -> impl Strategy<Value = usize> {
    0..4usize
}

fn point(game: &GameSpec, raw: &[f64]) -> JointPolicy {
    let n = game.players() * game.dim();
    JointPolicy::new(game.players(), game.dim(), raw[..n].to_vec()).unwrap()
}

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 10)
}

fn close(a: &JointPolicy, b: &JointPolicy, tol: f64) -> bool {
    a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn player_swap_exchanges_values_on_symmetric_games(g in game_index(), raw in logits()) {
        let game = &games()[g];
        prop_assume!(game.symmetry() == Symmetry::Symmetric);
        let x = point(game, &raw);
        let v = game.value(&x).unwrap();
        let s = game.value(&x.swapped()).unwrap();
        prop_assert!((v.get(0) - s.get(1)).abs() <= 1e-12);
        prop_assert!((v.get(1) - s.get(0)).abs() <= 1e-12);
    }

    #[test]
    fn matching_pennies_is_zero_sum(raw in logits()) {
        let game = GameSpec::imp();
        let v = game.value(&point(&game, &raw)).unwrap();
        prop_assert!((v.get(0) + v.get(1)).abs() <= 1e-12);
    }

    #[test]
    fn normalized_values_lie_within_the_stage_payoffs(g in 1..4usize, raw in prop::collection::vec(-8.0f64..8.0, 10)) {
        let game = &games()[g];
        let (lo, hi) = game.matrix().unwrap().payoff_range();
        let v = game.value(&point(game, &raw)).unwrap();
        for i in 0..2 {
            prop_assert!(v.get(i) >= lo - 1e-9 && v.get(i) <= hi + 1e-9, "{} outside [{lo}, {hi}]", v.get(i));
        }
    }

    #[test]
    fn jacobian_matches_central_differences(g in game_index(), raw in logits()) {
        let game = &games()[g];
        let x = point(game, &raw);
        let jac = full_jacobian(game, &x).unwrap();
        for i in 0..2 {
            let fd = finite_diff_gradient(|p| game.value(&point(game, p)).unwrap().get(i), x.as_slice(), FD_STEP);
            prop_assert!(rel_error(jac.row(i), &fd) <= 1e-5);
        }
    }

    #[test]
    fn hessian_vector_products_are_symmetric_and_bilinear(
        g in game_index(),
        raw in logits(),
        v in prop::collection::vec(-1.0f64..1.0, 10),
        w in prop::collection::vec(-1.0f64..1.0, 10),
        a in -2.0f64..2.0,
    ) {
        let game = &games()[g];
        let x = point(game, &raw);
        let n = x.as_slice().len();
        let (v, w) = (&v[..n], &w[..n]);
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| s * t).sum::<f64>();
        for i in 0..2 {
            let hv = hessian_vector(game, &x, i, v).unwrap();
            let hw = hessian_vector(game, &x, i, w).unwrap();
            prop_assert!((dot(w, &hv) - dot(v, &hw)).abs() <= 1e-8);
            let mix: Vec<f64> = v.iter().zip(w).map(|(s, t)| a * s + t).collect();
            let hm = hessian_vector(game, &x, i, &mix).unwrap();
            for c in 0..n {
                prop_assert!((hm[c] - (a * hv[c] + hw[c])).abs() <= 1e-8 * (1.0 + hm[c].abs()));
            }
        }
    }

    #[test]
    fn low_order_hola_is_naive_and_lola(g in game_index(), raw in logits(), alpha in 0.1f64..5.0) {
        let game = &games()[g];
        let x = point(game, &raw);
        let naive = naive_step(game, &x, alpha).unwrap();
        prop_assert_eq!(&hola_step(game, &x, alpha, 0).unwrap(), &naive);
        prop_assert_eq!(hola_step(game, &x, alpha, 1).unwrap(), lola_step(game, &x, alpha, alpha).unwrap());
        prop_assert_eq!(lola_step(game, &x, alpha, 0.0).unwrap(), naive);
    }

    #[test]
    fn baseline_steps_commute_with_player_swap(g in game_index(), raw in logits(), alpha in 0.1f64..5.0) {
        let game = &games()[g];
        prop_assume!(game.symmetry() == Symmetry::Symmetric);
        let x = point(game, &raw);
        let s = x.swapped();
        prop_assert!(close(&naive_step(game, &s, alpha).unwrap(), &naive_step(game, &x, alpha).unwrap().swapped(), 1e-12));
        prop_assert!(close(&lola_step(game, &s, alpha, alpha).unwrap(), &lola_step(game, &x, alpha, alpha).unwrap().swapped(), 1e-10));
        for order in 2..=3 {
            let a = hola_step(game, &s, alpha, order).unwrap();
            let b = hola_step(game, &x, alpha, order).unwrap().swapped();
            prop_assert!(close(&a, &b, 1e-10));
        }
    }

    #[test]
    fn quantile_mean_ignores_order(q in prop::collection::vec(-5.0f64..5.0, 1..16), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = q.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((QuantileValue(q).mean() - QuantileValue(shuffled).mean()).abs() <= 1e-12);
    }

    #[test]
    fn fresh_models_have_no_input_gradient(g in game_index(), raw in logits(), seed in any::<u64>(), gamma in 0.0f64..0.99) {
        let game = &games()[g];
        let config = MevaConfig::for_game(game);
        let params = init_params(&config.layout(game, ScaleShift::None), &mut ChaCha8Rng::seed_from_u64(seed));
        let x = point(game, &raw);
        for i in 0..2 {
            prop_assert!(params.input_grad(&x, &[gamma, gamma], i).unwrap().iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn zero_discount_u_form_is_naive(g in 1..4usize, raw in logits(), seed in any::<u64>()) {
        let game = &games()[g];
        let config = MevaConfig::for_game(game);
        prop_assume!(config.formulation == Formulation::U);
        let mut params = init_params(&config.layout(game, ScaleShift::None), &mut ChaCha8Rng::seed_from_u64(seed));
        // move off the zero-initialized head so the network actually contributes
        params.data.iter_mut().enumerate().for_each(|(k, v)| *v += 0.01 * ((k % 7) as f64 - 3.0));
        let x = point(game, &raw);
        prop_assert_eq!(
            meva_step(&params, game, &x, &[0.0, 0.0], config.alpha, &[0, 1]).unwrap(),
            naive_step(game, &x, config.alpha).unwrap()
        );
    }

    #[test]
    fn sign_masks_are_plus_or_minus_one(hidden in 1..256usize, prob in 0.0f64..1.0, seed in any::<u64>()) {
        let m = sign_flip(hidden, prob, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(m.signs.len(), hidden);
        prop_assert!(m.signs.iter().all(|&s| s == 1.0 || s == -1.0));
    }

    #[test]
    fn target_update_moves_by_one_minus_inertia(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..32),
        inertia in 0.0f64..1.0,
    ) {
        let (mut target, online): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let before = target.clone();
        ema_update(&mut target, &online, inertia);
        for c in 0..target.len() {
            let expect = before[c] + (1.0 - inertia) * (online[c] - before[c]);
            prop_assert!((target[c] - expect).abs() <= 1e-12);
        }
    }
}
