//! Player decision-making: a rule-based teacher with a softened action
//! distribution, a trainable softmax policy over hand features, and a
//! uniform baseline. Decisions come with structured traces.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::{
    distance_to_win, Action, ActionKind, GameState, Hand, KongVariant, Meld, MeldKind, Phase, SeatContext, Seat,
    Suit, Tile, KINDS,
};
use crate::state_machine::InternalState;

/// Number of action features scored by the toy policy.
pub const FEATURES: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURES] = [
    "is_discard",
    "is_pung",
    "is_kong",
    "is_win",
    "is_pass",
    "distance_gain",
    "discard_missing_suit",
    "discard_copies",
    "discard_isolated",
    "discard_terminal",
    "discard_visible",
    "discard_opponents_missing",
    "declare_suit_scarcity",
    "declare_heuristic_choice",
    "claim_reduces_distance",
    "discard_connectivity",
];

/// Teacher softening temperature.
pub const TEACHER_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("no legal actions for {0}")]
    NoLegalActions(Seat),
    #[error("{0} is not legal in this view")]
    IllegalAction(Action),
    #[error("reference policy assigns zero probability to {0}")]
    ZeroReferenceProbability(Action),
    #[error("invalid policy parameters: {0}")]
    InvalidParams(String),
}

/// What a player knows when deciding: own hand, public table information,
/// and the claim context. Opponents' concealed tiles are never included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub seat: Seat,
    pub phase: Phase,
    pub current_seat: Seat,
    pub hand: Hand,
    pub discards: [Vec<Tile>; 4],
    pub melds: [Vec<Meld>; 4],
    pub missing_suits: [Option<Suit>; 4],
    pub wall_remaining: usize,
    pub claim_tile: Option<Tile>,
    pub claim_submitted: bool,
}

impl StateView {
    /// The view of a seat that perceives the table perfectly.
    pub fn from_truth(state: &GameState, seat: Seat) -> StateView {
        StateView {
            seat,
            phase: state.phase,
            current_seat: state.current_seat,
            hand: state.hands[seat.index()].clone(),
            discards: state.discards.clone(),
            melds: state.hands.clone().map(|h| h.melds),
            missing_suits: state.hands.clone().map(|h| h.missing_suit),
            wall_remaining: state.wall.remaining(),
            claim_tile: state.claim_tile,
            claim_submitted: state.pending_claims[seat.index()].is_some(),
        }
    }

    /// The robot's view, assembled from its internal state. `phase` is the
    /// kind of decision the table is asking for; the claim tile is the last
    /// discard the robot believes the current seat made.
    pub fn from_internal(internal: &InternalState, phase: Phase) -> StateView {
        let p = &internal.perceptual;
        let current = internal.interaction.current_turn;
        let claim_tile = (phase == Phase::AwaitingClaims)
            .then(|| p.believed_discards[current.index()].last().copied())
            .flatten();
        StateView {
            seat: internal.seat,
            phase,
            current_seat: current,
            hand: internal.believed_own_hand(),
            discards: p.believed_discards.clone(),
            melds: p.believed_melds.clone(),
            missing_suits: p.believed_missing_suits,
            wall_remaining: p.believed_wall_count,
            claim_tile,
            claim_submitted: false,
        }
    }

    pub fn context(&self) -> SeatContext<'_> {
        SeatContext {
            seat: self.seat,
            phase: self.phase,
            current_seat: self.current_seat,
            hand: &self.hand,
            claim_tile: self.claim_tile,
            claim_submitted: self.claim_submitted,
            wall_remaining: self.wall_remaining,
        }
    }

    pub fn legal_actions(&self) -> Vec<Action> {
        self.context().legal().into_iter().map(|k| Action::new(self.seat, k)).collect()
    }

    pub fn summary(&self) -> String {
        let hand: Vec<String> = self.hand.concealed.iter().map(|t| t.to_string()).collect();
        format!(
            "seat={} phase={:?} hand=[{}] melds={} missing={} wall={} claim={}",
            self.seat,
            self.phase,
            hand.join(" "),
            self.hand.melds.len(),
            self.hand.missing_suit.map_or("-".into(), |s| s.to_string()),
            self.wall_remaining,
            self.claim_tile.map_or("-".into(), |t| t.to_string()),
        )
    }
}

/// Fewest held tiles; ties broken Characters < Bamboo < Dots.
pub fn choose_missing_suit(hand: &Hand) -> Suit {
    let counts = hand.all_tiles();
    Suit::ALL.into_iter().min_by_key(|&s| (counts.suit_total(s), s.index())).expect("three suits")
}

/// Legal actions of a view with their feature vectors and the distance to
/// win after each action.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub actions: Vec<Action>,
    pub features: Vec<[f64; FEATURES]>,
    pub distance_now: u32,
    pub distance_after: Vec<u32>,
}

impl Featurized {
    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }
}

fn hand_after(hand: &Hand, kind: ActionKind, seat_from: Seat) -> Option<Hand> {
    let mut h = hand.clone();
    match kind {
        ActionKind::Discard { tile } => {
            h.concealed.remove(tile, 1).then_some(h)
        }
        ActionKind::Pung { tile } => {
            h.concealed.remove(tile, 2).then(|| {
                h.melds.push(Meld::pung(tile, seat_from));
                h
            })
        }
        ActionKind::Kong { tile, variant } => {
            let ok = match variant {
                KongVariant::FromDiscard => h.concealed.remove(tile, 3),
                KongVariant::Concealed => h.concealed.remove(tile, 4),
                KongVariant::Added => match h.pung_index(tile) {
                    Some(i) if h.concealed.remove(tile, 1) => {
                        h.melds.remove(i);
                        true
                    }
                    _ => false,
                },
            };
            ok.then(|| {
                let kind = MeldKind::from_kong(variant);
                let source = (variant == KongVariant::FromDiscard).then_some(seat_from);
                h.melds.push(Meld { kind, tile, source_seat: source });
                h
            })
        }
        _ => None,
    }
}

/// Scores every legal action of `view` on the shared feature set.
pub fn featurize(view: &StateView) -> Result<Featurized, PolicyError> {
    let actions = view.legal_actions();
    if actions.is_empty() {
        return Err(PolicyError::NoLegalActions(view.seat));
    }
    let hand = &view.hand;
    let distance_now = distance_to_win(hand);
    let mut visible = [0u8; KINDS];
    for s in 0..4 {
        for t in &view.discards[s] {
            visible[t.index()] += 1;
        }
        for m in &view.melds[s] {
            visible[m.tile.index()] += m.kind.copies();
        }
    }
    let heuristic_suit = choose_missing_suit(hand);
    let own_missing = hand.missing_suit;
    let mut features = Vec::with_capacity(actions.len());
    let mut distance_after = Vec::with_capacity(actions.len());

    for a in &actions {
        let mut f = [0.0; FEATURES];
        let after = hand_after(hand, a.kind, view.current_seat).map(|h| distance_to_win(&h));
        let gain = after.map_or(0.0, |d| (distance_now as f64 - d as f64).clamp(-3.0, 3.0));
        distance_after.push(after.unwrap_or(distance_now));
        match a.kind {
            ActionKind::Discard { tile } => {
                f[0] = 1.0;
                f[5] = gain;
                f[6] = (own_missing == Some(tile.suit())) as u8 as f64;
                let held = hand.concealed.get(tile);
                f[7] = held as f64 / 4.0;
                let neighbours = |span: i32| {
                    (-span..=span)
                        .filter(|&d| d != 0)
                        .filter_map(|d| Tile::new(tile.suit(), (tile.rank() as i32 + d).clamp(0, 10) as u8))
                        .filter(|n| n.rank() as i32 - tile.rank() as i32 != 0)
                        .map(|n| hand.concealed.get(n) as u32)
                        .sum::<u32>()
                };
                f[8] = (held == 1 && neighbours(2) == 0) as u8 as f64;
                f[9] = tile.is_terminal() as u8 as f64;
                f[10] = visible[tile.index()] as f64 / 4.0;
                let opp = view
                    .seat
                    .others()
                    .filter(|s| view.missing_suits[s.index()] == Some(tile.suit()))
                    .count();
                f[11] = opp as f64 / 3.0;
                f[15] = neighbours(1) as f64 / 4.0;
            }
            ActionKind::Pung { .. } => {
                f[1] = 1.0;
                f[5] = gain;
                f[14] = (gain > 0.0) as u8 as f64;
            }
            ActionKind::Kong { .. } => {
                f[2] = 1.0;
                f[5] = gain;
                f[14] = (gain > 0.0) as u8 as f64;
            }
            ActionKind::Win => f[3] = 1.0,
            ActionKind::Pass => f[4] = 1.0,
            ActionKind::DeclareMissing { suit } => {
                f[12] = -(hand.all_tiles().suit_total(suit) as f64) / 13.0;
                f[13] = (suit == heuristic_suit) as u8 as f64;
            }
            ActionKind::Draw => {}
        }
        features.push(f);
    }
    Ok(Featurized { actions, features, distance_now, distance_after })
}

/// Trainable softmax policy: logits `θ·φ(a) / temperature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
    pub temperature: f64,
}

impl PolicyParams {
    pub fn zeros() -> PolicyParams {
        PolicyParams { theta: vec![0.0; FEATURES], temperature: 1.0 }
    }

    /// Untrained starting point for self-play: a reasonable but noisy
    /// player that only weakly prefers distance-reducing discards.
    pub fn initial() -> PolicyParams {
        PolicyParams {
            theta: vec![0.0, -1.0, -1.0, 8.0, 0.0, 1.0, 1.5, 0.0, 0.5, 0.3, 0.2, 0.2, 3.0, 2.0, 0.5, -0.3],
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.theta.len() != FEATURES {
            return Err(PolicyError::InvalidParams(format!("expected {FEATURES} weights, got {}", self.theta.len())));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(PolicyError::InvalidParams(format!("temperature {}", self.temperature)));
        }
        if self.theta.iter().any(|w| !w.is_finite()) {
            return Err(PolicyError::InvalidParams("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn logits(&self, feats: &Featurized) -> Vec<f64> {
        feats
            .features
            .iter()
            .map(|f| f.iter().zip(&self.theta).map(|(x, w)| x * w).sum::<f64>() / self.temperature)
            .collect()
    }

    /// Log-probabilities of every action in `feats`.
    pub fn log_probs(&self, feats: &Featurized) -> Vec<f64> {
        log_softmax(&self.logits(feats))
    }

    /// ∇θ log π(a_idx) = (φ_a − Σ_b π_b φ_b) / temperature.
    pub fn grad_log_prob(&self, feats: &Featurized, idx: usize) -> Vec<f64> {
        let probs: Vec<f64> = self.log_probs(feats).iter().map(|l| l.exp()).collect();
        let mean = mean_features(feats, &probs);
        (0..FEATURES).map(|k| (feats.features[idx][k] - mean[k]) / self.temperature).collect()
    }
}

pub(crate) fn mean_features(feats: &Featurized, probs: &[f64]) -> [f64; FEATURES] {
    let mut mean = [0.0; FEATURES];
    for (f, p) in feats.features.iter().zip(probs) {
        for k in 0..FEATURES {
            mean[k] += p * f[k];
        }
    }
    mean
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Rule-based teacher: win; claim only when it strictly lowers the distance
/// to win; discard missing-suit tiles first (most copies first), then the
/// tile whose removal keeps the distance lowest, breaking ties towards
/// isolated, terminal, and already-visible tiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherPolicy {
    pub temperature: f64,
}

impl Default for TeacherPolicy {
    fn default() -> Self {
        TeacherPolicy { temperature: TEACHER_TEMPERATURE }
    }
}

impl TeacherPolicy {
    pub fn scores(&self, view: &StateView, feats: &Featurized) -> Vec<f64> {
        let holds_missing = view.hand.missing_suit.is_some_and(|s| view.hand.concealed.suit_total(s) > 0);
        feats
            .actions
            .iter()
            .zip(&feats.features)
            .zip(&feats.distance_after)
            .map(|((a, f), &d_after)| match a.kind {
                ActionKind::Win => 1000.0,
                ActionKind::Pung { .. } | ActionKind::Kong { .. } => {
                    let gain = f[5];
                    match (gain > 0.0, view.phase) {
                        (true, Phase::AwaitingClaims) => 100.0 + 10.0 * gain,
                        (true, _) => 400.0 + 10.0 * gain,
                        (false, _) => -100.0,
                    }
                }
                ActionKind::Pass => 0.0,
                ActionKind::Draw => 0.0,
                ActionKind::DeclareMissing { .. } => 10.0 * 13.0 * f[12] + 5.0 * f[13],
                ActionKind::Discard { .. } => {
                    if holds_missing && f[6] > 0.0 {
                        500.0 + 4.0 * f[7]
                    } else {
                        let d = d_after.min(20) as f64;
                        200.0 - 10.0 * d + 0.5 * f[8] + 0.3 * f[9] + 0.2 * f[10] + 0.2 * f[11]
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    Teacher(TeacherPolicy),
    Toy(PolicyParams),
    Uniform,
}

impl Policy {
    pub fn teacher() -> Policy {
        Policy::Teacher(TeacherPolicy::default())
    }

    pub fn id(&self) -> &'static str {
        match self {
            Policy::Teacher(_) => "teacher",
            Policy::Toy(_) => "toy",
            Policy::Uniform => "uniform",
        }
    }

    /// Pre-softmax scores divided by the policy's temperature.
    pub fn logits(&self, view: &StateView, feats: &Featurized) -> Vec<f64> {
        match self {
            Policy::Teacher(t) => t.scores(view, feats).into_iter().map(|s| s / t.temperature).collect(),
            Policy::Toy(p) => p.logits(feats),
            Policy::Uniform => vec![0.0; feats.actions.len()],
        }
    }
}

/// Probabilities over exactly the legal actions, in legal-action order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub entries: Vec<(Action, f64)>,
}

impl ActionDistribution {
    pub fn probability(&self, action: &Action) -> Option<f64> {
        self.entries.iter().find(|(a, _)| a == action).map(|(_, p)| *p)
    }

    /// Highest-probability action; the first one on ties.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for (i, (_, p)) in self.entries.iter().enumerate() {
            if *p > self.entries[best].1 {
                best = i;
            }
        }
        self.entries[best].0
    }
}

pub fn action_distribution(policy: &Policy, view: &StateView) -> Result<ActionDistribution, PolicyError> {
    let feats = featurize(view)?;
    Ok(distribution_from(policy, view, &feats))
}

fn distribution_from(policy: &Policy, view: &StateView, feats: &Featurized) -> ActionDistribution {
    let lp = log_softmax(&policy.logits(view, feats));
    ActionDistribution { entries: feats.actions.iter().copied().zip(lp.into_iter().map(f64::exp)).collect() }
}

pub fn log_probability(params: &PolicyParams, view: &StateView, action: &Action) -> Result<f64, PolicyError> {
    let feats = featurize(view)?;
    let idx = feats.index_of(action).ok_or(PolicyError::IllegalAction(*action))?;
    Ok(params.log_probs(&feats)[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAction {
    pub action: Action,
    pub score: f64,
    pub probability: f64,
}

/// Structured record of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub summary: String,
    pub scored: Vec<ScoredAction>,
    pub chosen: Action,
    /// Feature contributions `θ_k·φ_k(chosen)` for the toy policy, raw
    /// feature values otherwise.
    pub rationale: Vec<(String, f64)>,
    pub timestamp: f64,
    pub policy_id: String,
}

/// Samples (or, with `greedy`, takes the argmax of) the action distribution
/// and records the full scored set.
pub fn decide<R: Rng + ?Sized>(
    policy: &Policy,
    view: &StateView,
    greedy: bool,
    rng: &mut R,
) -> Result<(Action, DecisionTrace), PolicyError> {
    let feats = featurize(view)?;
    let logits = policy.logits(view, &feats);
    let dist = distribution_from(policy, view, &feats);
    let idx = if greedy || dist.entries.len() == 1 {
        let chosen = dist.argmax();
        feats.index_of(&chosen).expect("argmax is legal")
    } else {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = dist.entries.len() - 1;
        for (i, (_, p)) in dist.entries.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        pick
    };
    let chosen = feats.actions[idx];
    let rationale = FEATURE_NAMES
        .iter()
        .enumerate()
        .filter(|&(k, _)| feats.features[idx][k] != 0.0)
        .map(|(k, name)| {
            let v = feats.features[idx][k];
            let c = match policy {
                Policy::Toy(p) => p.theta[k] * v,
                _ => v,
            };
            (name.to_string(), c)
        })
        .collect();
    let scored = dist
        .entries
        .iter()
        .zip(&logits)
        .map(|(&(action, probability), &score)| ScoredAction { action, score, probability })
        .collect();
    Ok((
        chosen,
        DecisionTrace {
            summary: view.summary(),
            scored,
            chosen,
            rationale,
            timestamp: 0.0,
            policy_id: policy.id().to_string(),
        },
    ))
}
