use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hand::{Hand, Meld, MeldKind, Seat};
use super::rules::{Action, ActionKind, KongVariant, Phase, RuleViolation, SeatContext};
use super::tile::{Suit, Tile, TileCounts, WALL_SIZE};

const HAND_SIZE: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Wall {
    pub tiles: Vec<Tile>,
    pub draw_index: usize,
}

impl Wall {
    /// Unshuffled wall in index order.
    pub fn ordered() -> Wall {
        Wall { tiles: TileCounts::full_set().to_vec(), draw_index: 0 }
    }

    pub fn shuffled(seed: u64) -> Wall {
        let mut wall = Wall::ordered();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        wall.tiles.shuffle(&mut rng);
        wall
    }

    pub fn remaining(&self) -> usize {
        self.tiles.len() - self.draw_index
    }

    pub fn peek(&self) -> Option<Tile> {
        self.tiles.get(self.draw_index).copied()
    }

    fn draw(&mut self) -> Option<Tile> {
        let t = self.peek()?;
        self.draw_index += 1;
        Some(t)
    }

    pub fn remainder(&self) -> TileCounts {
        self.tiles[self.draw_index..].iter().copied().collect()
    }

    /// A forced wall must be an undrawn permutation of the full tile set.
    pub fn validate(&self) -> Result<(), GameError> {
        if self.tiles.len() != WALL_SIZE || self.draw_index != 0 {
            return Err(GameError::InvalidWall(format!(
                "{} tiles with draw index {}",
                self.tiles.len(),
                self.draw_index
            )));
        }
        let counts: TileCounts = self.tiles.iter().copied().collect();
        if counts != TileCounts::full_set() {
            return Err(GameError::InvalidWall("tile multiset differs from the 108-tile set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("invalid forced wall: {0}")]
    InvalidWall(String),
    #[error(transparent)]
    Rule(#[from] RuleViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    WinByDiscard,
    WinBySelfDraw,
    WallExhausted,
    /// Play stopped by a fatal execution fault (e.g. an illegal meld request).
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameOutcome {
    pub winners: Vec<Seat>,
    pub terminal_cause: TerminalCause,
}

/// State deltas emitted by a transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    MissingSuitDeclared { seat: Seat, suit: Suit },
    TileDrawn { seat: Seat, tile: Tile, replacement: bool },
    TileDiscarded { seat: Seat, tile: Tile },
    ClaimSubmitted { seat: Seat, claim: ActionKind },
    MeldFormed { seat: Seat, meld: Meld },
    TurnAdvanced { seat: Seat, phase: Phase },
    GameEnded { winners: Vec<Seat>, cause: TerminalCause },
}

/// Full ground truth of one game.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub wall: Wall,
    pub hands: [Hand; 4],
    pub discards: [Vec<Tile>; 4],
    pub current_seat: Seat,
    pub phase: Phase,
    pub winners: Vec<Seat>,
    pub rng_seed: u64,
    /// Discard open for claims during `AwaitingClaims`.
    pub claim_tile: Option<Tile>,
    pub pending_claims: [Option<ActionKind>; 4],
    /// Tile most recently drawn by the current seat (including kong replacements).
    pub last_drawn: Option<Tile>,
    pub terminal_cause: Option<TerminalCause>,
    pub action_count: u32,
}

impl GameState {
    /// Deals a new game. The wall is shuffled from `seed` unless `forced_wall`
    /// is given, in which case the deal depends on the wall alone.
    pub fn new_game(seed: u64, forced_wall: Option<Wall>) -> Result<GameState, GameError> {
        let mut wall = match forced_wall {
            Some(w) => {
                w.validate()?;
                w
            }
            None => Wall::shuffled(seed),
        };
        let mut hands: [Hand; 4] = Default::default();
        for hand in hands.iter_mut() {
            let tiles: TileCounts = (0..HAND_SIZE).filter_map(|_| wall.draw()).collect();
            *hand = Hand::new(tiles);
        }
        Ok(GameState {
            wall,
            hands,
            discards: Default::default(),
            current_seat: Seat::ALL[0],
            phase: Phase::Declaring,
            winners: Vec::new(),
            rng_seed: seed,
            claim_tile: None,
            pending_claims: [None; 4],
            last_drawn: None,
            terminal_cause: None,
            action_count: 0,
        })
    }

    pub fn is_terminal(&self) -> bool {
        self.phase == Phase::Terminal
    }

    pub fn outcome(&self) -> Option<GameOutcome> {
        self.terminal_cause.map(|cause| GameOutcome { winners: self.winners.clone(), terminal_cause: cause })
    }

    pub fn seat_context(&self, seat: Seat) -> SeatContext<'_> {
        SeatContext {
            seat,
            phase: self.phase,
            current_seat: self.current_seat,
            hand: &self.hands[seat.index()],
            claim_tile: self.claim_tile,
            claim_submitted: self.pending_claims[seat.index()].is_some(),
            wall_remaining: self.wall.remaining(),
        }
    }

    pub fn legal_actions(&self, seat: Seat) -> Vec<Action> {
        self.seat_context(seat).legal().into_iter().map(|k| Action::new(seat, k)).collect()
    }

    /// Seats that still owe an action before the game can advance.
    pub fn seats_to_act(&self) -> Vec<Seat> {
        match self.phase {
            Phase::Terminal => Vec::new(),
            Phase::AwaitingClaims => self
                .current_seat
                .others()
                .filter(|s| self.pending_claims[s.index()].is_none())
                .collect(),
            _ => vec![self.current_seat],
        }
    }

    /// Multiset union of every zone: wall remainder, hands, melds, discards.
    pub fn tile_census(&self) -> TileCounts {
        let mut c = self.wall.remainder();
        for h in &self.hands {
            c.merge(&h.all_tiles());
        }
        for d in &self.discards {
            for &t in d {
                c.add(t, 1);
            }
        }
        c
    }

    /// Pure transition: returns the successor and its events, leaving `self`
    /// untouched. Illegal actions are rejected with the violated rule.
    pub fn apply_action(&self, action: Action) -> Result<(GameState, Vec<EngineEvent>), RuleViolation> {
        let mut next = self.clone();
        let events = next.apply_mut(action)?;
        Ok((next, events))
    }

    /// In-place form of [`GameState::apply_action`]. On error the state is unchanged.
    pub fn apply_mut(&mut self, action: Action) -> Result<Vec<EngineEvent>, RuleViolation> {
        self.seat_context(action.actor).check(action.kind)?;
        let seat = action.actor;
        let mut events = Vec::new();
        self.action_count += 1;
        match action.kind {
            ActionKind::DeclareMissing { suit } => {
                self.hands[seat.index()].missing_suit = Some(suit);
                events.push(EngineEvent::MissingSuitDeclared { seat, suit });
                if seat == Seat::ALL[3] {
                    self.advance_to(Seat::ALL[0], Phase::AwaitingDraw, &mut events);
                } else {
                    self.advance_to(seat.next(), Phase::Declaring, &mut events);
                }
            }
            ActionKind::Draw => match self.wall.draw() {
                Some(tile) => {
                    self.hands[seat.index()].concealed.add(tile, 1);
                    self.last_drawn = Some(tile);
                    self.phase = Phase::AwaitingDiscard;
                    events.push(EngineEvent::TileDrawn { seat, tile, replacement: false });
                }
                None => self.finish(Vec::new(), TerminalCause::WallExhausted, &mut events),
            },
            ActionKind::Discard { tile } => {
                self.hands[seat.index()].concealed.remove(tile, 1);
                self.discards[seat.index()].push(tile);
                self.claim_tile = Some(tile);
                self.pending_claims = [None; 4];
                self.last_drawn = None;
                events.push(EngineEvent::TileDiscarded { seat, tile });
                self.advance_to(seat, Phase::AwaitingClaims, &mut events);
            }
            ActionKind::Kong { tile, variant: KongVariant::Concealed } => {
                let hand = &mut self.hands[seat.index()];
                hand.concealed.remove(tile, 4);
                let meld = Meld::concealed_kong(tile);
                hand.melds.push(meld);
                events.push(EngineEvent::MeldFormed { seat, meld });
                self.replacement_draw(seat, &mut events);
            }
            ActionKind::Kong { tile, variant: KongVariant::Added } => {
                let hand = &mut self.hands[seat.index()];
                hand.concealed.remove(tile, 1);
                let idx = hand.pung_index(tile).expect("checked by rules");
                hand.melds[idx] = Meld::exposed_kong(tile, None);
                events.push(EngineEvent::MeldFormed { seat, meld: hand.melds[idx] });
                self.replacement_draw(seat, &mut events);
            }
            ActionKind::Win if self.phase == Phase::AwaitingDiscard => {
                self.finish(vec![seat], TerminalCause::WinBySelfDraw, &mut events);
            }
            claim => {
                self.pending_claims[seat.index()] = Some(claim);
                events.push(EngineEvent::ClaimSubmitted { seat, claim });
                if self.seats_to_act().is_empty() {
                    self.settle_claims(&mut events);
                }
            }
        }
        Ok(events)
    }

    /// Submits a batch of claims on the open discard. Seats absent from
    /// `claims` (and not yet submitted) pass. All wins are honored together;
    /// otherwise kong beats pung beats pass, nearest downstream seat first.
    pub fn resolve_claims(
        &self,
        claims: &BTreeMap<Seat, ActionKind>,
    ) -> Result<(GameState, Vec<EngineEvent>), RuleViolation> {
        if self.phase != Phase::AwaitingClaims {
            let action = claims.values().next().copied().unwrap_or(ActionKind::Pass);
            return Err(RuleViolation::WrongPhase { phase: self.phase, action });
        }
        if claims.contains_key(&self.current_seat) {
            return Err(RuleViolation::DiscarderClaim { seat: self.current_seat });
        }
        let mut next = self.clone();
        let mut events = Vec::new();
        for seat in self.current_seat.others() {
            if next.phase != Phase::AwaitingClaims {
                break;
            }
            let kind = match claims.get(&seat) {
                Some(&k) => k,
                None if next.pending_claims[seat.index()].is_some() => continue,
                None => ActionKind::Pass,
            };
            events.extend(next.apply_mut(Action::new(seat, kind))?);
        }
        Ok((next, events))
    }

    /// Ends the game without a winner after a fatal execution fault.
    pub fn abort(&mut self) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        if !self.is_terminal() {
            self.finish(Vec::new(), TerminalCause::Aborted, &mut events);
        }
        events
    }

    fn settle_claims(&mut self, events: &mut Vec<EngineEvent>) {
        let discarder = self.current_seat;
        let tile = self.claim_tile.take().expect("claims require an open discard");
        let claims = std::mem::replace(&mut self.pending_claims, [None; 4]);

        let winners: Vec<Seat> =
            Seat::ALL.into_iter().filter(|s| claims[s.index()] == Some(ActionKind::Win)).collect();
        if !winners.is_empty() {
            self.finish(winners, TerminalCause::WinByDiscard, events);
            return;
        }

        let best = discarder
            .others()
            .filter_map(|s| claims[s.index()].map(|k| (s, k)))
            .filter(|(_, k)| k.claim_priority() > 0)
            .max_by_key(|(s, k)| (k.claim_priority(), std::cmp::Reverse(discarder.distance_to(*s))));

        match best {
            Some((claimer, ActionKind::Kong { .. })) => {
                self.take_discard(discarder, claimer, tile, MeldKind::ExposedKong, events);
                self.current_seat = claimer;
                self.replacement_draw(claimer, events);
            }
            Some((claimer, _)) => {
                self.take_discard(discarder, claimer, tile, MeldKind::Pung, events);
                self.last_drawn = None;
                self.advance_to(claimer, Phase::AwaitingDiscard, events);
            }
            None => self.advance_to(discarder.next(), Phase::AwaitingDraw, events),
        }
    }

    fn take_discard(&mut self, from: Seat, to: Seat, tile: Tile, kind: MeldKind, events: &mut Vec<EngineEvent>) {
        let popped = self.discards[from.index()].pop();
        debug_assert_eq!(popped, Some(tile));
        let hand = &mut self.hands[to.index()];
        hand.concealed.remove(tile, kind.copies() - 1);
        let meld = Meld { kind, tile, source_seat: Some(from) };
        hand.melds.push(meld);
        events.push(EngineEvent::MeldFormed { seat: to, meld });
    }

    fn replacement_draw(&mut self, seat: Seat, events: &mut Vec<EngineEvent>) {
        match self.wall.draw() {
            Some(tile) => {
                self.hands[seat.index()].concealed.add(tile, 1);
                self.last_drawn = Some(tile);
                events.push(EngineEvent::TileDrawn { seat, tile, replacement: true });
                self.advance_to(seat, Phase::AwaitingDiscard, events);
            }
            None => self.finish(Vec::new(), TerminalCause::WallExhausted, events),
        }
    }

    fn advance_to(&mut self, seat: Seat, phase: Phase, events: &mut Vec<EngineEvent>) {
        self.current_seat = seat;
        self.phase = phase;
        events.push(EngineEvent::TurnAdvanced { seat, phase });
    }

    fn finish(&mut self, winners: Vec<Seat>, cause: TerminalCause, events: &mut Vec<EngineEvent>) {
        self.phase = Phase::Terminal;
        self.winners = winners.clone();
        self.terminal_cause = Some(cause);
        self.claim_tile = None;
        self.pending_claims = [None; 4];
        events.push(EngineEvent::GameEnded { winners, cause });
    }
}
