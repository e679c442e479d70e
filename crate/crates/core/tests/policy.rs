mod common;

use common::{distance_by_enumeration, hand_of};
use mahjong_lab::game::{Action, ActionKind, GameState, Phase, Seat, Suit};
use mahjong_lab::policy::{
    action_distribution, choose_missing_suit, decide, featurize, log_probability, Policy, PolicyError, PolicyParams,
    StateView, TeacherPolicy, FEATURES,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Views of every seat owing an action along uniformly random playouts.
fn reachable_views(n: usize, seed: u64) -> Vec<StateView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Vec::with_capacity(n);
    let mut game = 0;
    while views.len() < n {
        let mut g = GameState::new_game(seed.wrapping_add(game), None).unwrap();
        game += 1;
        while !g.is_terminal() && views.len() < n {
            let seat = g.seats_to_act()[0];
            views.push(StateView::from_truth(&g, seat));
            let legal = g.legal_actions(seat);
            let a = legal[rng.random_range(0..legal.len())];
            g.apply_mut(a).unwrap();
        }
    }
    views
}

/// A view of seat 0 about to discard from `tiles`, Characters missing.
fn discard_view(tiles: &str) -> StateView {
    let g = GameState::new_game(1, None).unwrap();
    let mut v = StateView::from_truth(&g, Seat::ALL[0]);
    v.hand = hand_of(tiles, Suit::Characters);
    v.phase = Phase::AwaitingDiscard;
    v.current_seat = v.seat;
    v.missing_suits = [Some(Suit::Characters); 4];
    v.wall_remaining = 50;
    v
}

fn policies() -> Vec<Policy> {
    vec![Policy::teacher(), Policy::Toy(PolicyParams::initial()), Policy::Toy(PolicyParams::zeros()), Policy::Uniform]
}

#[test]
fn support_equals_legal_actions_on_reachable_states() {
    for view in reachable_views(10_000, 11) {
        let legal = view.legal_actions();
        for policy in policies() {
            let dist = action_distribution(&policy, &view).unwrap();
            let support: Vec<Action> = dist.entries.iter().map(|(a, _)| *a).collect();
            assert_eq!(support, legal, "{}", view.summary());
            let total: f64 = dist.entries.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(dist.entries.iter().all(|(_, p)| *p >= 0.0));
        }
    }
}

#[test]
fn a_single_legal_action_gets_all_the_mass() {
    let g = GameState::new_game(3, None).unwrap();
    let mut g = g;
    for s in Seat::ALL {
        g.apply_mut(Action::new(s, ActionKind::DeclareMissing { suit: Suit::Dots })).unwrap();
    }
    // The dealer can only draw.
    let view = StateView::from_truth(&g, Seat::ALL[0]);
    assert_eq!(view.legal_actions(), vec![Action::new(Seat::ALL[0], ActionKind::Draw)]);
    for policy in policies() {
        let dist = action_distribution(&policy, &view).unwrap();
        assert_eq!(dist.entries, vec![(Action::new(Seat::ALL[0], ActionKind::Draw), 1.0)]);
    }
}

#[test]
fn uniform_policy_spreads_mass_evenly() {
    let view = discard_view("11m 234s 567s 2p 5p 8p 99p 46s");
    let dist = action_distribution(&Policy::Uniform, &view).unwrap();
    let k = dist.entries.len() as f64;
    assert!(dist.entries.iter().all(|(_, p)| (p - 1.0 / k).abs() < 1e-12));
}

#[test]
fn no_legal_actions_is_an_error() {
    let g = GameState::new_game(5, None).unwrap();
    // Seat 2 has nothing to do while the dealer declares.
    let view = StateView::from_truth(&g, Seat::ALL[2]);
    assert!(matches!(action_distribution(&Policy::teacher(), &view), Err(PolicyError::NoLegalActions(_))));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(decide(&Policy::Uniform, &view, false, &mut rng).is_err());
}

#[test]
fn teacher_takes_a_win_when_offered() {
    let view = discard_view("123s 456s 789s 234p 55p");
    let dist = action_distribution(&Policy::teacher(), &view).unwrap();
    assert_eq!(dist.argmax().kind, ActionKind::Win);
}

#[test]
fn teacher_discards_towards_a_ready_hand() {
    for tiles in ["123s 456s 789s 234p 5p 9p", "123s 456s 78s 234p 55p 1m", "111s 345s 67s 9s 246p 88p", "12s 345s 678s 99s 1p 357p"] {
        let view = discard_view(tiles);
        let feats = featurize(&view).unwrap();
        let dist = action_distribution(&Policy::teacher(), &view).unwrap();
        let best = dist.argmax();
        let after = |a: &Action| {
            let mut h = view.hand.clone();
            let ActionKind::Discard { tile } = a.kind else { return u32::MAX };
            h.concealed.remove(tile, 1);
            distance_by_enumeration(&h)
        };
        let oracle_best = feats.actions.iter().map(after).min().unwrap();
        assert_eq!(after(&best), oracle_best, "{tiles}: teacher chose {best}");
        assert!(after(&best) <= distance_by_enumeration(&view.hand), "{tiles}");
    }
}

#[test]
fn teacher_sheds_the_missing_suit_first() {
    let view = discard_view("1m 1m 7m 234s 567s 22p 345p");
    let best = action_distribution(&Policy::teacher(), &view).unwrap().argmax();
    assert_eq!(best.kind, ActionKind::Discard { tile: "1m".parse().unwrap() });
}

#[test]
fn distributions_and_decisions_are_deterministic() {
    for view in reachable_views(300, 21) {
        for policy in policies() {
            assert_eq!(action_distribution(&policy, &view).unwrap(), action_distribution(&policy, &view).unwrap());
            let a = decide(&policy, &view, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = decide(&policy, &view, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn traces_record_the_chosen_action_among_the_scored_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for view in reachable_views(500, 31) {
        for policy in policies() {
            for greedy in [false, true] {
                let (action, trace) = decide(&policy, &view, greedy, &mut rng).unwrap();
                assert_eq!(trace.chosen, action);
                assert!(trace.scored.iter().any(|s| s.action == action));
                assert_eq!(trace.scored.len(), view.legal_actions().len());
                assert_eq!(trace.policy_id, policy.id());
                assert_eq!(trace.summary, view.summary());
            }
        }
    }
}

#[test]
fn greedy_mode_takes_the_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for view in reachable_views(500, 41) {
        let policy = Policy::Toy(PolicyParams::initial());
        let (action, _) = decide(&policy, &view, true, &mut rng).unwrap();
        assert_eq!(action, action_distribution(&policy, &view).unwrap().argmax());
    }
}

#[test]
fn greedy_choice_is_invariant_to_joint_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for view in reachable_views(500, 51) {
        let base = PolicyParams { theta: (0..FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect(), temperature: 0.7 };
        let c = rng.random_range(0.1..20.0);
        let scaled = PolicyParams { theta: base.theta.iter().map(|w| w * c).collect(), temperature: base.temperature * c };
        let a = action_distribution(&Policy::Toy(base), &view).unwrap().argmax();
        let b = action_distribution(&Policy::Toy(scaled), &view).unwrap().argmax();
        assert_eq!(a, b);
        let t = TeacherPolicy { temperature: c };
        let a = action_distribution(&Policy::teacher(), &view).unwrap().argmax();
        let b = action_distribution(&Policy::Teacher(t), &view).unwrap().argmax();
        assert_eq!(a, b);
    }
}

#[test]
fn log_probability_matches_the_distribution() {
    let params = PolicyParams::initial();
    for view in reachable_views(1_000, 61) {
        let dist = action_distribution(&Policy::Toy(params.clone()), &view).unwrap();
        for (a, p) in &dist.entries {
            let lp = log_probability(&params, &view, a).unwrap();
            assert!((lp.exp() - p).abs() < 1e-12);
            if dist.entries.len() == 1 {
                assert_eq!(lp, 0.0);
            }
        }
    }
}

#[test]
fn zero_weights_give_uniform_log_probability() {
    let view = reachable_views(2_000, 71).into_iter().find(|v| v.legal_actions().len() == 10).expect("a 10-action view");
    let lp = log_probability(&PolicyParams::zeros(), &view, &view.legal_actions()[3]).unwrap();
    assert!((lp + 10f64.ln()).abs() < 1e-12);
}

#[test]
fn log_probability_rejects_illegal_actions() {
    let view = discard_view("123s 456s 789s 234p 5p 9p");
    let illegal = Action::new(view.seat, ActionKind::Pass);
    assert_eq!(
        log_probability(&PolicyParams::initial(), &view, &illegal),
        Err(PolicyError::IllegalAction(illegal))
    );
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(PolicyParams { theta: vec![0.0; FEATURES], temperature: 0.0 }.validate().is_err());
    assert!(PolicyParams { theta: vec![0.0; 3], temperature: 1.0 }.validate().is_err());
    let mut p = PolicyParams::zeros();
    p.theta[2] = f64::NAN;
    assert!(p.validate().is_err());
    assert!(PolicyParams::initial().validate().is_ok());
}

#[test]
fn missing_suit_choice_prefers_fewest_tiles_then_order() {
    assert_eq!(choose_missing_suit(&hand_of("1m 123456s 123456p", Suit::Dots)), Suit::Characters);
    assert_eq!(choose_missing_suit(&hand_of("1234m 1234s 12345p", Suit::Dots)), Suit::Characters);
    assert_eq!(choose_missing_suit(&hand_of("12345m 1234s 1234p", Suit::Dots)), Suit::Bamboo);
    assert_eq!(choose_missing_suit(&hand_of("1234567m 123456s", Suit::Dots)), Suit::Dots);
}

#[test]
fn views_never_expose_opponent_concealed_tiles() {
    for view in reachable_views(200, 81) {
        let json = serde_json::to_value(&view).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert!(!keys.iter().any(|k| k.contains("hands") || k.contains("wall") && *k != "wall_remaining"), "{keys:?}");
    }
}

proptest! {
    #[test]
    fn decisions_stay_legal_for_random_parameters(seed in any::<u64>(), theta in proptest::collection::vec(-5.0..5.0f64, FEATURES), temp in 0.05..5.0f64) {
        let params = PolicyParams { theta, temperature: temp };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for view in reachable_views(40, seed) {
            let (a, _) = decide(&Policy::Toy(params.clone()), &view, false, &mut rng).unwrap();
            prop_assert!(view.legal_actions().contains(&a));
        }
    }
}
