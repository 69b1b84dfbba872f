mod common;

use arena_core::equilibrium::{self, PlayerClass, VERIFY_GRID};
use arena_core::games::{Budget, Game, Player, Valuation};
use arena_core::mechanisms::{self, builtin, E2Sr, Kelly, MaheswaranBasar, Mechanism};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn linear_game(n: usize) -> Game {
    Game::new(vec![Player::linear_unbounded(); n]).unwrap()
}

#[test]
fn kelly_symmetric_equilibria() {
    for n in [2usize, 3, 5, 10] {
        let eq = equilibrium::find_equilibrium(&linear_game(n), &Kelly, &vec![1.0; n]).unwrap();
        assert!(eq.converged, "n={n}: {eq:?}");
        let target = (n - 1) as f64 / (n * n) as f64;
        for (&s, &d) in eq.signals.iter().zip(&eq.allocation) {
            assert!((s - target).abs() <= 1e-7, "n={n}: {s} vs {target}");
            assert!((d - 1.0 / n as f64).abs() <= 1e-6);
        }
        assert!(eq.classes.iter().all(|&c| c == PlayerClass::A));
    }
}

#[test]
fn kelly_from_asymmetric_start() {
    let eq = equilibrium::find_equilibrium(&linear_game(3), &Kelly, &[2.0, 0.1, 0.7]).unwrap();
    assert!(eq.converged);
    assert!(eq.signals.iter().all(|&s| (s - 2.0 / 9.0).abs() <= 1e-7), "{:?}", eq.signals);
}

#[test]
fn worthless_player_signals_zero_for_every_mechanism() {
    for name in ["kelly", "sh", "mb", "e2pys", "shr"] {
        let mech = builtin(name).unwrap();
        let g = Game::new(vec![Player::linear_unbounded(), Player::new(Valuation::zero(), Budget::Unbounded)]).unwrap();
        let eq = equilibrium::find_equilibrium(&g, mech.as_ref(), &[1.0, 1.0]).unwrap();
        assert!(eq.converged, "{name}: {eq:?}");
        assert_eq!(eq.signals[1], 0.0, "{name}");
        assert_eq!(eq.allocation, vec![1.0, 0.0]);
        assert_eq!(mechanisms::payments(mech.as_ref(), &eq.signals).unwrap(), vec![0.0, 0.0]);
    }
}

#[test]
fn feasible_bounds() {
    let capped = |c: f64| Game::new(vec![Player::new(Valuation::linear(1.0), Budget::Finite(c)), Player::linear_unbounded()]).unwrap();
    assert_eq!(equilibrium::feasible_signal_bound(&capped(0.7), &Kelly, 0, &[5.0, 0.3]).unwrap(), 0.7);
    let y = equilibrium::feasible_signal_bound(&capped(2.0), &E2Sr::default(), 0, &[1.0, 3.0]).unwrap();
    assert!((y - 6.0).abs() < 1e-9, "{y}");
    let y = equilibrium::feasible_signal_bound(&capped(2f64.ln()), &MaheswaranBasar, 0, &[0.2, 1.0]).unwrap();
    assert!((y - 1.0).abs() < 1e-9, "{y}");
    assert!(equilibrium::feasible_signal_bound(&linear_game(2), &Kelly, 0, &[1.0, 1.0]).unwrap().is_infinite());
}

#[test]
fn verification_examples() {
    let g = linear_game(2);
    assert!(equilibrium::verify_equilibrium(&g, &Kelly, &[0.25, 0.25], VERIFY_GRID).unwrap().is_equilibrium);
    let off = equilibrium::verify_equilibrium(&g, &Kelly, &[1.0, 1.0], VERIFY_GRID).unwrap();
    assert!(!off.is_equilibrium && off.max_gain > 0.0);
}

#[test]
fn zero_valuation_classification() {
    // v ≡ 0 with a positive budget at s_i = 0: the payment slope is 1, so the
    // utility derivative is strictly negative.
    let g = Game::new(vec![Player::linear_unbounded(), Player::new(Valuation::zero(), Budget::Finite(1.0))]).unwrap();
    let classes = equilibrium::classify_players(&g, &Kelly, &[0.5, 0.0]).unwrap();
    assert_eq!(classes[1], PlayerClass::B);
}

fn small_game() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 2usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converged_means_verified((seed, n) in small_game()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_game(&mut rng, n);
        for mech in [&Kelly as &dyn Mechanism, &mechanisms::SanghaviHajek] {
            let eq = equilibrium::find_equilibrium(&g, mech, &vec![1.0; n]).unwrap();
            prop_assert!(eq.signals.iter().any(|&s| s > 0.0));
            if eq.converged {
                let check = equilibrium::verify_equilibrium(&g, mech, &eq.signals, VERIFY_GRID).unwrap();
                prop_assert!(check.is_equilibrium, "{:?}", check);
            }
        }
    }

    #[test]
    fn best_response_is_affordable((seed, n) in small_game(), k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_game(&mut rng, n);
        let s = common::random_profile(&mut rng, n);
        let i = k % n;
        for name in ["kelly", "sh", "mb"] {
            let mech = builtin(name).unwrap();
            let br = equilibrium::best_response(&g, mech.as_ref(), i, &s).unwrap();
            let mut t = s.clone();
            t[i] = br.signal;
            let pay = mechanisms::payments(mech.as_ref(), &t).unwrap()[i];
            prop_assert!(pay <= g.players[i].budget.amount() + 1e-12, "{name}: pays {pay}");
        }
    }
}
