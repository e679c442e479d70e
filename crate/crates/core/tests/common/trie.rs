//! Hand-built self-play groups and an independent prefix enumeration of
//! their trajectory tries and preference pairs.

use std::collections::{BTreeMap, BTreeSet};

use mahjong_lab::game::{Action, ActionKind, GameState, Tile, Wall};
use mahjong_lab::policy::{DecisionTrace, ScoredAction, StateView};
use mahjong_lab::selfplay::{build_trie, extract_preference_pairs, GameGroup, PreferencePair, Step, Trajectory, FOCAL_SEAT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MinedPair = (Vec<Action>, Action, Action);

pub fn template_view() -> StateView {
    StateView::from_truth(&GameState::new_game(1, None).unwrap(), FOCAL_SEAT)
}

/// A focal action labelled by a tile name; only identity matters to the trie.
pub fn act(tile: &str) -> Action {
    Action::new(FOCAL_SEAT, ActionKind::Discard { tile: tile.parse::<Tile>().unwrap() })
}

pub fn trace(action: Action, label: &str) -> DecisionTrace {
    DecisionTrace {
        summary: label.to_string(),
        scored: vec![ScoredAction { action, score: 0.0, probability: 1.0 }],
        chosen: action,
        rationale: Vec::new(),
        timestamp: 0.0,
        policy_id: "hand-built".into(),
    }
}

/// A group whose games follow the given focal action paths and outcomes.
pub fn hand_built(games: &[(&[&str], bool)]) -> GameGroup {
    let view = template_view();
    let trajectories = games
        .iter()
        .enumerate()
        .map(|(g, (path, won))| {
            let steps: Vec<Step> = path
                .iter()
                .map(|t| Step { view: view.clone(), trace: trace(act(t), &format!("game{g}")), action: act(t) })
                .collect();
            Trajectory {
                record: steps.iter().map(|s| s.action).collect(),
                steps,
                winners: if *won { vec![FOCAL_SEAT] } else { Vec::new() },
                focal_won: *won,
            }
        })
        .collect();
    GameGroup { group_size: games.len(), seed: 0, wall: Wall::ordered(), focal: FOCAL_SEAT, trajectories }
}

/// Independent enumeration: (visits, wins) for every prefix of every game.
pub fn prefix_stats(group: &GameGroup) -> BTreeMap<Vec<Action>, (u32, u32)> {
    let mut stats = BTreeMap::new();
    for t in &group.trajectories {
        let path: Vec<Action> = t.steps.iter().map(|s| s.action).collect();
        for len in 0..=path.len() {
            let e = stats.entry(path[..len].to_vec()).or_insert((0, 0));
            e.0 += 1;
            e.1 += t.focal_won as u32;
        }
    }
    stats
}

/// Independent enumeration of (prefix, preferred action, dispreferred action).
pub fn oracle_pairs(group: &GameGroup) -> BTreeSet<MinedPair> {
    let stats = prefix_stats(group);
    let mut out = BTreeSet::new();
    for prefix in stats.keys() {
        let children: Vec<(Action, f64)> = stats
            .iter()
            .filter(|(k, _)| k.len() == prefix.len() + 1 && k.starts_with(prefix))
            .map(|(k, (v, w))| (k[prefix.len()], *w as f64 / *v as f64))
            .collect();
        for (a, ra) in &children {
            for (b, rb) in &children {
                if ra > rb {
                    out.insert((prefix.clone(), *a, *b));
                }
            }
        }
    }
    out
}

pub fn mined(group: &GameGroup, seed: u64) -> (Vec<PreferencePair>, BTreeSet<MinedPair>) {
    let trie = build_trie(group);
    let pairs = extract_preference_pairs(&trie, group, &mut ChaCha8Rng::seed_from_u64(seed));
    let set = pairs.iter().map(|p| (trie.path(p.node), p.preferred.action, p.dispreferred.action)).collect();
    (pairs, set)
}

