mod common;

use common::three_sigma;
use mahjong_lab::fault::{
    closed_form_success, hazard, provenance, sample_execution_failure, sample_interaction_event, sample_misdetection,
    FaultConfig, FaultConfigError, FaultDetail, FaultKind, HazardCurve, InteractionRates,
};
use mahjong_lab::game::{GameState, Seat, Tile};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn curve() -> impl Strategy<Value = HazardCurve> {
    (0.0..0.5f64, 0.0..0.5f64, 1.0..50_000.0f64, 1.0..10_000.0f64)
        .prop_map(|(base, excess, onset_t0, width_tau)| HazardCurve { base, excess, onset_t0, width_tau })
}

proptest! {
    #[test]
    fn hazard_is_monotone_and_bounded(c in curve(), a in -1e5..1e5f64, b in -1e5..1e5f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(hazard(lo, &c) <= hazard(hi, &c));
        prop_assert!(hazard(lo, &c) >= c.base);
        prop_assert!(hazard(hi, &c) <= c.base + c.excess);
    }

    #[test]
    fn hazard_tails_at_ten_widths_are_bounded_by_the_logistic(c in curve()) {
        let tail = c.excess / (1.0 + 10f64.exp());
        let below = hazard(c.onset_t0 - 10.0 * c.width_tau, &c);
        let above = hazard(c.onset_t0 + 10.0 * c.width_tau, &c);
        prop_assert!((below - c.base).abs() <= tail + 1e-15);
        prop_assert!((c.base + c.excess - above).abs() <= tail + 1e-15);
    }

    /// The 1e-6 limit tolerance holds whenever excess ≤ 0.022, which covers
    /// the deployment profile.
    #[test]
    fn hazard_limits_within_1e6_for_small_excess(c in curve(), excess in 0.0..0.022f64) {
        let c = HazardCurve { excess, ..c };
        prop_assert!((hazard(c.onset_t0 - 10.0 * c.width_tau, &c) - c.base).abs() < 1e-6);
        prop_assert!((hazard(c.onset_t0 + 10.0 * c.width_tau, &c) - c.base - c.excess).abs() < 1e-6);
    }

    #[test]
    fn closed_form_is_monotone_in_retries(p in 0.0..1.0f64, r in 0.0..1.0f64, k in 0u32..8) {
        prop_assert!(closed_form_success(p, r, k + 1) >= closed_form_success(p, r, k) - 1e-15);
        prop_assert!(closed_form_success(p, r, k) <= 1.0 + 1e-15);
    }
}

#[test]
fn hazard_near_base_at_start_of_session() {
    let c = HazardCurve { base: 0.003, excess: 0.04, onset_t0: 20_000.0, width_tau: 2000.0 };
    assert!(hazard(0.0, &c) - c.base < 5e-5 * c.excess);
}

#[test]
fn deployment_profile_rates() {
    let cfg = FaultConfig::deployment();
    cfg.validate().unwrap();
    assert!((cfg.execution_base_failure - 0.008).abs() < 1e-12);
    assert!(closed_form_success(cfg.execution_base_failure, cfg.relocalize_success, 3) >= provenance::RECOVERED_SUCCESS);
    let expected = provenance::MISDETECTIONS / (provenance::GAMES * provenance::RECOGNITIONS_PER_GAME);
    assert!((cfg.misdetection_rate - expected).abs() < 1e-15);
    assert_eq!(cfg.hazard.onset_t0, provenance::HAZARD_ONSET_SECS);
    // Degradation dominates the floor late in a session.
    assert!(cfg.failure_probability(30_000.0) > cfg.execution_base_failure);
    assert_eq!(cfg.failure_probability(0.0), cfg.execution_base_failure);
}

#[test]
fn invalid_configs_name_the_field() {
    let mut cfg = FaultConfig::none();
    cfg.misdetection_rate = -0.1;
    assert!(matches!(cfg.validate(), Err(FaultConfigError::NotProbability { field: "misdetection_rate", .. })));
    let mut cfg = FaultConfig::none();
    cfg.hazard = HazardCurve { base: 0.7, excess: 0.5, onset_t0: 1.0, width_tau: 1.0 };
    assert!(matches!(cfg.validate(), Err(FaultConfigError::HazardOverflow(_))));
    let mut cfg = FaultConfig::none();
    cfg.hazard.width_tau = 0.0;
    assert!(matches!(cfg.validate(), Err(FaultConfigError::HazardWidth(_))));
}

#[test]
fn execution_failures_follow_the_configured_rate() {
    let mut cfg = FaultConfig::none();
    cfg.execution_base_failure = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000u64;
    let failures = (0..n).filter(|_| sample_execution_failure(0.0, &cfg, &mut rng)).count() as f64;
    assert!((failures / n as f64 - 0.05).abs() < three_sigma(0.05, n));
    let none = FaultConfig::none();
    assert!((0..10_000).all(|_| !sample_execution_failure(1e6, &none, &mut rng)));
}

#[test]
fn late_session_failures_follow_the_hazard() {
    let cfg = FaultConfig::deployment();
    let t = 26_000.0;
    let p = cfg.failure_probability(t);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200_000u64;
    let failures = (0..n).filter(|_| sample_execution_failure(t, &cfg, &mut rng)).count() as f64;
    assert!((failures / n as f64 - p).abs() < three_sigma(p, n));
}

#[test]
fn misdetections_follow_the_rate_and_never_return_the_truth() {
    let mut cfg = FaultConfig::none();
    cfg.misdetection_rate = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000u64;
    let mut wrong = 0u64;
    let mut seen_kinds = std::collections::BTreeSet::new();
    let truth = Tile::all().nth(4).unwrap();
    for _ in 0..n {
        let t = sample_misdetection(truth, &cfg, &mut rng);
        if t != truth {
            wrong += 1;
            seen_kinds.insert(t.index());
        }
    }
    assert!((wrong as f64 / n as f64 - 0.1).abs() < three_sigma(0.1, n));
    assert_eq!(seen_kinds.len(), 26, "errors spread over every other kind");
}

#[test]
fn interaction_events_follow_rates_and_spare_the_robot() {
    let state = GameState::new_game(9, None).unwrap();
    let mut cfg = FaultConfig::none();
    cfg.interaction_violation_rates = InteractionRates { out_of_turn: 0.02, inspection: 0.01 };
    let humans = [Seat::ALL[1], Seat::ALL[2], Seat::ALL[3]];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 200_000u64;
    let (mut oot, mut insp) = (0u64, 0u64);
    for i in 0..n {
        if let Some(e) = sample_interaction_event(&state, &humans, i as u32, 0.0, &cfg, &mut rng) {
            assert_eq!(e.turn_index, i as u32);
            match e.detail {
                FaultDetail::OutOfTurn { actor, current } => {
                    assert_eq!(e.kind, FaultKind::OutOfTurn);
                    assert_ne!(actor, current);
                    assert_ne!(actor, Seat::ALL[0]);
                    oot += 1;
                }
                FaultDetail::Inspection { actor, victim } => {
                    assert_ne!(actor, victim);
                    assert_ne!(actor, Seat::ALL[0]);
                    insp += 1;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
    assert!((oot as f64 / n as f64 - 0.02).abs() < three_sigma(0.02, n));
    assert!((insp as f64 / n as f64 - 0.01).abs() < three_sigma(0.01, n));
}

#[test]
fn identical_seeds_give_identical_fault_streams() {
    let cfg = FaultConfig::deployment();
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..1000).map(|i| sample_execution_failure(i as f64 * 30.0, &cfg, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(11), draw(11));
}
