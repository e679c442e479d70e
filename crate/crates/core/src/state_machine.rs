//! Guarded execution layer: the robot's maintained internal state and the
//! validate → ground → execute → verify → commit transition that keeps it
//! aligned with the table.
//!
//! Under [`CommitMode::VerifyThenCommit`] an attempt touches the internal
//! state only after its post-condition has been verified, so a failed attempt
//! (and any number of retries) leaves tile counts and turn bookkeeping as they
//! were. [`CommitMode::CommitBeforeVerify`] is the ablation that commits each
//! attempt eagerly and therefore double-applies retried primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{
    sample_execution_failure, sample_misdetection, FaultConfig, FaultDetail, FaultEvent, FaultKind, SensorModel,
};
use crate::game::{EngineEvent, GameState, Meld, MeldKind, Phase, Seat, Suit, Tile, TileCounts};

/// Simulated seconds consumed by one physical attempt.
pub const ATTEMPT_SECONDS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Draw,
    Place,
    Discard,
    Meld,
}

/// One atomic physical action. For `Draw`, `target` is the physical tile that
/// will be picked up; the robot learns its identity through grounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub target: Option<Tile>,
    pub meld_detail: Option<Meld>,
}

impl PrimitiveSpec {
    pub fn draw(tile: Tile) -> PrimitiveSpec {
        PrimitiveSpec { kind: PrimitiveKind::Draw, target: Some(tile), meld_detail: None }
    }

    pub fn discard(tile: Tile) -> PrimitiveSpec {
        PrimitiveSpec { kind: PrimitiveKind::Discard, target: Some(tile), meld_detail: None }
    }

    pub fn meld(meld: Meld) -> PrimitiveSpec {
        PrimitiveSpec { kind: PrimitiveKind::Meld, target: Some(meld.tile), meld_detail: Some(meld) }
    }

    pub fn place() -> PrimitiveSpec {
        PrimitiveSpec { kind: PrimitiveKind::Place, target: None, meld_detail: None }
    }

    /// Whether the primitive involves grasping a tile.
    pub fn needs_grasp(&self) -> bool {
        self.kind != PrimitiveKind::Place
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitMode {
    VerifyThenCommit,
    /// Ablation only: commits every attempt before checking it.
    CommitBeforeVerify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryPolicy {
    pub max_retries: u32,
    pub relocalize: bool,
    pub commit_mode: CommitMode,
}

impl Default for RecoveryPolicy {
    fn default() -> Self {
        RecoveryPolicy { max_retries: 3, relocalize: true, commit_mode: CommitMode::VerifyThenCommit }
    }
}

impl RecoveryPolicy {
    pub fn disabled() -> RecoveryPolicy {
        RecoveryPolicy { max_retries: 0, ..RecoveryPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedEvent {
    OpponentDiscard,
    OwnDraw,
    ClaimWindow,
    Declaration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PerceivedEvent {
    Declared { seat: Seat, suit: Suit },
    Drew { seat: Seat },
    Discarded { seat: Seat, tile: Tile },
    Melded { seat: Seat, meld: Meld },
    TurnChanged { seat: Seat },
    Committed { id: u64, spec: PrimitiveSpec },
    Resynced { field: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptualState {
    pub believed_hand: TileCounts,
    pub believed_melds: [Vec<Meld>; 4],
    pub believed_discards: [Vec<Tile>; 4],
    pub believed_missing_suits: [Option<Suit>; 4],
    pub believed_wall_count: usize,
    pub history: Vec<PerceivedEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPrimitive {
    pub id: u64,
    pub spec: PrimitiveSpec,
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedPrimitive {
    pub id: u64,
    pub spec: PrimitiveSpec,
    pub outcome: PrimitiveOutcome,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionState {
    pub pending: Option<PendingPrimitive>,
    pub completed_log: Vec<CompletedPrimitive>,
    pub next_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionState {
    pub current_turn: Seat,
    pub expected_event: ExpectedEvent,
}

/// The robot's maintained picture of the game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalState {
    pub seat: Seat,
    pub perceptual: PerceptualState,
    pub execution: ExecutionState,
    pub interaction: InteractionState,
    /// Number of committed primitives.
    pub version: u64,
    /// When set, every declared missing suit is recorded as this suit.
    pub missing_suit_override: Option<Suit>,
}

fn expected_for(seat: Seat, me: Seat, phase: Phase) -> ExpectedEvent {
    match phase {
        Phase::Declaring => ExpectedEvent::Declaration,
        Phase::AwaitingClaims if seat != me => ExpectedEvent::ClaimWindow,
        Phase::AwaitingDraw | Phase::AwaitingDiscard if seat == me => ExpectedEvent::OwnDraw,
        _ => ExpectedEvent::OpponentDiscard,
    }
}

impl InternalState {
    /// An internal state that agrees with `truth` on every audited field.
    pub fn synchronized(truth: &GameState, seat: Seat) -> InternalState {
        let hand = &truth.hands[seat.index()];
        InternalState {
            seat,
            perceptual: PerceptualState {
                believed_hand: hand.concealed,
                believed_melds: truth.hands.clone().map(|h| h.melds),
                believed_discards: truth.discards.clone(),
                believed_missing_suits: truth.hands.clone().map(|h| h.missing_suit),
                believed_wall_count: truth.wall.remaining(),
                history: Vec::new(),
            },
            execution: ExecutionState::default(),
            interaction: InteractionState {
                current_turn: truth.current_seat,
                expected_event: expected_for(truth.current_seat, seat, truth.phase),
            },
            version: 0,
            missing_suit_override: None,
        }
    }

    pub fn with_missing_suit_override(mut self, suit: Option<Suit>) -> InternalState {
        self.missing_suit_override = suit;
        if let Some(s) = suit {
            for m in self.perceptual.believed_missing_suits.iter_mut().filter(|m| m.is_some()) {
                *m = Some(s);
            }
        }
        self
    }

    /// The robot's own hand as it believes it to be.
    pub fn believed_own_hand(&self) -> crate::game::Hand {
        crate::game::Hand {
            concealed: self.perceptual.believed_hand,
            melds: self.perceptual.believed_melds[self.seat.index()].clone(),
            missing_suit: self.perceptual.believed_missing_suits[self.seat.index()],
        }
    }

    /// Updates beliefs from events the robot watches happen at the table.
    /// The robot's own draws, discards, and melds are not observed here;
    /// they enter the internal state only through [`commit`]. Opponent
    /// discards are recognised through the misdetection model. Returns the
    /// number of recognition events performed.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        events: &[EngineEvent],
        faults: &FaultConfig,
        sim_time: f64,
        turn_index: u32,
        fault_log: &mut Vec<FaultEvent>,
        rng: &mut R,
    ) -> u32 {
        let me = self.seat;
        let mut recognitions = 0;
        for ev in events {
            match *ev {
                EngineEvent::MissingSuitDeclared { seat, suit } => {
                    let recorded = self.missing_suit_override.unwrap_or(suit);
                    self.perceptual.believed_missing_suits[seat.index()] = Some(recorded);
                    self.perceptual.history.push(PerceivedEvent::Declared { seat, suit: recorded });
                }
                EngineEvent::TileDrawn { seat, .. } if seat != me => {
                    self.perceptual.believed_wall_count = self.perceptual.believed_wall_count.saturating_sub(1);
                    self.perceptual.history.push(PerceivedEvent::Drew { seat });
                }
                EngineEvent::TileDiscarded { seat, tile } if seat != me => {
                    recognitions += 1;
                    let seen = sample_misdetection(tile, faults, rng);
                    if seen != tile {
                        fault_log.push(FaultEvent {
                            kind: FaultKind::Misdetection,
                            sim_time,
                            turn_index,
                            detail: FaultDetail::Misdetection { truth: tile, perceived: seen },
                        });
                    }
                    self.perceptual.believed_discards[seat.index()].push(seen);
                    self.perceptual.history.push(PerceivedEvent::Discarded { seat, tile: seen });
                }
                EngineEvent::MeldFormed { seat, meld } => {
                    if let Some(src) = meld.source_seat {
                        self.perceptual.believed_discards[src.index()].pop();
                    }
                    if seat != me {
                        apply_meld(&mut self.perceptual.believed_melds[seat.index()], meld);
                        self.perceptual.history.push(PerceivedEvent::Melded { seat, meld });
                    }
                }
                EngineEvent::TurnAdvanced { seat, phase } => {
                    self.interaction.current_turn = seat;
                    self.interaction.expected_event = expected_for(seat, me, phase);
                    self.perceptual.history.push(PerceivedEvent::TurnChanged { seat });
                }
                _ => {}
            }
        }
        recognitions
    }

    /// Re-reads turn structure from the table (the recovery for a turn-order
    /// precondition violation).
    pub fn resync_interaction(&mut self, truth: &GameState) {
        self.interaction.current_turn = truth.current_seat;
        self.interaction.expected_event = expected_for(truth.current_seat, self.seat, truth.phase);
        self.perceptual.history.push(PerceivedEvent::Resynced { field: "current_turn".into() });
    }

    /// Human intervention: every perceptual field is re-read from the table.
    /// Does not count as a committed primitive.
    pub fn resync_all(&mut self, truth: &GameState) {
        let fresh = InternalState::synchronized(truth, self.seat).with_missing_suit_override(self.missing_suit_override);
        self.perceptual.believed_hand = fresh.perceptual.believed_hand;
        self.perceptual.believed_melds = fresh.perceptual.believed_melds;
        self.perceptual.believed_discards = fresh.perceptual.believed_discards;
        self.perceptual.believed_missing_suits = fresh.perceptual.believed_missing_suits;
        self.perceptual.believed_wall_count = fresh.perceptual.believed_wall_count;
        self.interaction = fresh.interaction;
        self.execution.pending = None;
        self.perceptual.history.push(PerceivedEvent::Resynced { field: "all".into() });
    }
}

fn apply_meld(melds: &mut Vec<Meld>, meld: Meld) {
    if meld.kind == MeldKind::ExposedKong && meld.source_seat.is_none() {
        if let Some(m) = melds.iter_mut().find(|m| m.kind == MeldKind::Pung && m.tile == meld.tile) {
            *m = meld;
            return;
        }
    }
    melds.push(meld);
}

/// Concealed tiles a meld consumes from the hand that forms it.
fn meld_cost(meld: &Meld, melds: &[Meld]) -> u8 {
    match meld.kind {
        MeldKind::Pung => 2,
        MeldKind::ConcealedKong => 4,
        MeldKind::ExposedKong if meld.source_seat.is_some() => 3,
        MeldKind::ExposedKong => {
            if melds.iter().any(|m| m.kind == MeldKind::Pung && m.tile == meld.tile) {
                1
            } else {
                4
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconsistencyClass {
    Perceptual,
    Execution,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub class: InconsistencyClass,
    pub field: String,
    pub believed: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub entries: Vec<Divergence>,
}

impl ConsistencyReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: InconsistencyClass) -> usize {
        self.entries.iter().filter(|e| e.class == class).count()
    }

    pub fn touches(&self, field: &str) -> bool {
        self.entries.iter().any(|e| e.field == field)
    }

    /// Divergence in the robot's hand multiset or the wall count.
    pub fn hand_or_wall(&self) -> bool {
        self.touches("hand") || self.touches("wall_count")
    }
}

fn tiles_str(c: &TileCounts) -> String {
    c.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

fn list_str<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

fn opt_str<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |s| s.to_string())
}

fn melds_str(v: &[Meld]) -> String {
    v.iter().map(|m| format!("{:?}({})", m.kind, m.tile)).collect::<Vec<_>>().join(" ")
}

/// Audits the internal state against ground truth, classifying every
/// divergence as perceptual, execution, or interaction.
pub fn check_consistency(internal: &InternalState, truth: &GameState) -> ConsistencyReport {
    use InconsistencyClass::*;
    let mut entries = Vec::new();
    let mut push = |class, field: String, believed: String, actual: String| {
        entries.push(Divergence { class, field, believed, actual });
    };
    let me = internal.seat.index();
    let p = &internal.perceptual;

    if p.believed_hand != truth.hands[me].concealed {
        push(Perceptual, "hand".into(), tiles_str(&p.believed_hand), tiles_str(&truth.hands[me].concealed));
    }
    for s in 0..4 {
        if p.believed_discards[s] != truth.discards[s] {
            push(Perceptual, format!("discards[{s}]"), list_str(&p.believed_discards[s]), list_str(&truth.discards[s]));
        }
        if p.believed_missing_suits[s] != truth.hands[s].missing_suit {
            push(
                Perceptual,
                format!("missing_suit[{s}]"),
                opt_str(p.believed_missing_suits[s]),
                opt_str(truth.hands[s].missing_suit),
            );
        }
        if p.believed_melds[s] != truth.hands[s].melds {
            let class = if s == me { Execution } else { Perceptual };
            push(class, format!("melds[{s}]"), melds_str(&p.believed_melds[s]), melds_str(&truth.hands[s].melds));
        }
    }
    if p.believed_wall_count != truth.wall.remaining() {
        push(Perceptual, "wall_count".into(), p.believed_wall_count.to_string(), truth.wall.remaining().to_string());
    }
    if let Some(pending) = &internal.execution.pending {
        push(Execution, "pending".into(), format!("{:?}#{}", pending.spec.kind, pending.id), "none".into());
    }
    if !truth.is_terminal() && internal.interaction.current_turn != truth.current_seat {
        push(
            Interaction,
            "current_turn".into(),
            internal.interaction.current_turn.to_string(),
            truth.current_seat.to_string(),
        );
    }
    ConsistencyReport { entries }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum PreconditionViolation {
    #[error("a primitive is already pending")]
    PendingPrimitive,
    #[error("turn-order: believed turn is {believed}, not {seat}")]
    TurnOrder { seat: Seat, believed: Seat },
    #[error("tile-not-believed: {tile} is not in the believed hand")]
    TileNotBelieved { tile: Tile },
    #[error("wall-believed-empty: no tile believed left to draw")]
    WallBelievedEmpty,
    #[error("meld-copies: believed hand lacks the tiles for {meld:?}")]
    MeldCopies { meld: Meld },
    #[error("missing-target: {kind:?} needs a target")]
    MissingTarget { kind: PrimitiveKind },
}

impl PreconditionViolation {
    pub fn is_turn_order(&self) -> bool {
        matches!(self, PreconditionViolation::TurnOrder { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommitError {
    #[error("double commit of pending primitive #{0}")]
    DoubleCommit(u64),
    #[error("commit does not match the pending primitive #{0}")]
    PendingMismatch(u64),
}

fn validate_preconditions(internal: &InternalState, spec: &PrimitiveSpec) -> Result<(), PreconditionViolation> {
    if internal.execution.pending.is_some() {
        return Err(PreconditionViolation::PendingPrimitive);
    }
    if internal.interaction.current_turn != internal.seat {
        return Err(PreconditionViolation::TurnOrder { seat: internal.seat, believed: internal.interaction.current_turn });
    }
    let p = &internal.perceptual;
    match spec.kind {
        PrimitiveKind::Draw => {
            spec.target.ok_or(PreconditionViolation::MissingTarget { kind: spec.kind })?;
            if p.believed_wall_count == 0 {
                return Err(PreconditionViolation::WallBelievedEmpty);
            }
        }
        PrimitiveKind::Discard => {
            let tile = spec.target.ok_or(PreconditionViolation::MissingTarget { kind: spec.kind })?;
            if p.believed_hand.get(tile) == 0 {
                return Err(PreconditionViolation::TileNotBelieved { tile });
            }
        }
        PrimitiveKind::Meld => {
            let meld = spec.meld_detail.ok_or(PreconditionViolation::MissingTarget { kind: spec.kind })?;
            let own = &p.believed_melds[internal.seat.index()];
            if p.believed_hand.get(meld.tile) < meld_cost(&meld, own) {
                return Err(PreconditionViolation::MeldCopies { meld });
            }
        }
        PrimitiveKind::Place => {}
    }
    Ok(())
}

/// Applies a verified primitive to the internal state and bumps the version.
///
/// With no pending primitive the commit is self-contained; otherwise it must
/// match the pending primitive, and committing the same pending primitive a
/// second time is rejected.
pub fn commit(internal: &InternalState, spec: &PrimitiveSpec) -> Result<InternalState, CommitError> {
    let mut next = internal.clone();
    let id = match &next.execution.pending {
        Some(p) if p.committed => return Err(CommitError::DoubleCommit(p.id)),
        Some(p) if p.spec != *spec => return Err(CommitError::PendingMismatch(p.id)),
        Some(p) => p.id,
        None => {
            let id = next.execution.next_id;
            next.execution.next_id += 1;
            id
        }
    };
    next.execution.pending = Some(PendingPrimitive { id, spec: *spec, committed: true });
    let me = next.seat.index();
    let p = &mut next.perceptual;
    match spec.kind {
        PrimitiveKind::Draw => {
            if let Some(t) = spec.target {
                p.believed_hand.add(t, 1);
            }
            p.believed_wall_count = p.believed_wall_count.saturating_sub(1);
        }
        PrimitiveKind::Discard => {
            if let Some(t) = spec.target {
                p.believed_hand.remove(t, 1);
                p.believed_discards[me].push(t);
            }
        }
        PrimitiveKind::Meld => {
            if let Some(meld) = spec.meld_detail {
                let cost = meld_cost(&meld, &p.believed_melds[me]).min(p.believed_hand.get(meld.tile));
                p.believed_hand.remove(meld.tile, cost);
                apply_meld(&mut p.believed_melds[me], meld);
            }
        }
        PrimitiveKind::Place => {}
    }
    p.history.push(PerceivedEvent::Committed { id, spec: *spec });
    next.version += 1;
    Ok(next)
}

fn finish_pending(internal: &mut InternalState, outcome: PrimitiveOutcome, attempts: u32) {
    if let Some(p) = internal.execution.pending.take() {
        internal.execution.completed_log.push(CompletedPrimitive { id: p.id, spec: p.spec, outcome, attempts });
    }
}

fn begin_pending(internal: &mut InternalState, spec: &PrimitiveSpec) {
    let id = internal.execution.next_id;
    internal.execution.next_id += 1;
    internal.execution.pending = Some(PendingPrimitive { id, spec: *spec, committed: false });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Verified,
    FailedDetected,
    /// A failed attempt sensed as successful.
    FalseNegative,
    /// A successful attempt sensed as failed.
    FalsePositive,
}

impl Verification {
    /// Whether the sensor reports success.
    pub fn sensed_success(self) -> bool {
        matches!(self, Verification::Verified | Verification::FalseNegative)
    }
}

/// Post-condition check of the attempt that was just simulated.
pub fn verify_postcondition<R: Rng + ?Sized>(attempt_succeeded: bool, sensor: &SensorModel, rng: &mut R) -> Verification {
    if attempt_succeeded {
        if sensor.false_positive > 0.0 && rng.random::<f64>() < sensor.false_positive {
            Verification::FalsePositive
        } else {
            Verification::Verified
        }
    } else if sensor.false_negative > 0.0 && rng.random::<f64>() < sensor.false_negative {
        Verification::FalseNegative
    } else {
        Verification::FailedDetected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryDecision {
    /// Try again; `relocalized` tells whether a re-localization draw was made.
    Retry { relocalized: bool },
    Unrecovered,
}

/// Decides whether a detected failure after `attempts_made` attempts gets
/// another attempt. Never touches the internal state.
pub fn recover<R: Rng + ?Sized>(
    attempts_made: u32,
    policy: &RecoveryPolicy,
    faults: &FaultConfig,
    rng: &mut R,
) -> RecoveryDecision {
    if attempts_made > policy.max_retries {
        return RecoveryDecision::Unrecovered;
    }
    if !policy.relocalize {
        return RecoveryDecision::Retry { relocalized: false };
    }
    if rng.random::<f64>() < faults.relocalize_success {
        RecoveryDecision::Retry { relocalized: true }
    } else {
        RecoveryDecision::Unrecovered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "attempts", rename_all = "snake_case")]
pub enum PrimitiveOutcome {
    Committed,
    RecoveredThenCommitted(u32),
    Unrecovered,
}

impl PrimitiveOutcome {
    pub fn is_committed(self) -> bool {
        self != PrimitiveOutcome::Unrecovered
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub sim_time: f64,
    pub failure_probability: f64,
    pub executed_ok: bool,
    pub verification: Verification,
    pub recovery: Option<RecoveryDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveResult {
    pub outcome: PrimitiveOutcome,
    pub internal: InternalState,
    pub attempts: Vec<AttemptRecord>,
    /// Tile physically moved (for a discard this may differ from the target
    /// after a grounding error).
    pub physical_tile: Option<Tile>,
    /// Tile identity the robot committed.
    pub perceived_tile: Option<Tile>,
    pub fault_events: Vec<FaultEvent>,
    pub recognitions: u32,
    pub elapsed: f64,
}

/// Runs one guarded primitive: (i) precondition validation against the
/// internal state, (ii) grounding with a misdetection draw, (iii) execution
/// with a hazard-dependent failure draw, (iv) post-condition verification,
/// (v) commit. Detected failures go through [`recover`]; an unrecovered
/// primitive returns the internal state unchanged.
///
/// The table itself is advanced by the caller: `truth` is consulted only to
/// decide which physical tile a mis-grounded discard grabs.
#[allow(clippy::too_many_arguments)]
pub fn execute_primitive<R: Rng + ?Sized>(
    internal: &InternalState,
    truth: &GameState,
    spec: &PrimitiveSpec,
    faults: &FaultConfig,
    policy: &RecoveryPolicy,
    clock: f64,
    turn_index: u32,
    rng: &mut R,
) -> Result<PrimitiveResult, PreconditionViolation> {
    validate_preconditions(internal, spec)?;
    let held = &truth.hands[internal.seat.index()].concealed;
    let mut work = internal.clone();
    let mut attempts = Vec::new();
    let mut fault_events = Vec::new();
    let mut recognitions = 0;
    let mut elapsed = 0.0;
    let mut physical_tile = spec.target;
    let mut perceived_tile = spec.target;
    let mut grounded = *spec;
    let mut relocalize_next = true;
    if policy.commit_mode == CommitMode::VerifyThenCommit {
        begin_pending(&mut work, spec);
    }

    let outcome = loop {
        let attempt = attempts.len() as u32 + 1;
        let now = clock + elapsed;

        // (ii) grounding
        if relocalize_next {
            grounded = *spec;
            match (spec.kind, spec.target) {
                (PrimitiveKind::Draw, Some(t)) => {
                    recognitions += 1;
                    let seen = sample_misdetection(t, faults, rng);
                    if seen != t {
                        fault_events.push(FaultEvent {
                            kind: FaultKind::Misdetection,
                            sim_time: now,
                            turn_index,
                            detail: FaultDetail::Misdetection { truth: t, perceived: seen },
                        });
                    }
                    grounded.target = Some(seen);
                    physical_tile = Some(t);
                    perceived_tile = Some(seen);
                }
                (PrimitiveKind::Discard, Some(t)) => {
                    recognitions += 1;
                    let grabbed = sample_misdetection(t, faults, rng);
                    let physical = if held.get(grabbed) > 0 {
                        grabbed
                    } else if held.get(t) > 0 {
                        t
                    } else {
                        held.iter().next().unwrap_or(t)
                    };
                    if physical != t {
                        fault_events.push(FaultEvent {
                            kind: FaultKind::Misdetection,
                            sim_time: now,
                            turn_index,
                            detail: FaultDetail::Misdetection { truth: physical, perceived: t },
                        });
                    }
                    physical_tile = Some(physical);
                    perceived_tile = Some(t);
                }
                _ => {}
            }
        }

        // (iii) execution
        let failure_probability = if spec.needs_grasp() { faults.failure_probability(now) } else { 0.0 };
        let failed = spec.needs_grasp() && sample_execution_failure(now, faults, rng);
        if failed {
            let kind = if crate::fault::hazard(now, &faults.hazard) > faults.execution_base_failure {
                FaultKind::HardwareDegradation
            } else {
                FaultKind::ExecutionFailure
            };
            fault_events.push(FaultEvent {
                kind,
                sim_time: now,
                turn_index,
                detail: FaultDetail::ExecutionFailure { attempt, probability: failure_probability },
            });
        }
        elapsed += ATTEMPT_SECONDS;

        // Ablation: the attempt is committed before anyone checks it, and the
        // attempt is not linked to an earlier one, so retries apply again.
        if policy.commit_mode == CommitMode::CommitBeforeVerify {
            begin_pending(&mut work, &grounded);
            work = commit(&work, &grounded).expect("fresh pending primitive");
        }

        // (iv) verification
        let verification = verify_postcondition(!failed, &faults.sensor_confusion, rng);
        let mut record = AttemptRecord {
            attempt,
            sim_time: now,
            failure_probability,
            executed_ok: !failed,
            verification,
            recovery: None,
        };

        if verification.sensed_success() {
            attempts.push(record);
            // (v) commit
            if policy.commit_mode == CommitMode::VerifyThenCommit {
                if let Some(p) = work.execution.pending.as_mut() {
                    p.spec = grounded;
                }
                work = commit(&work, &grounded).expect("single commit of the pending primitive");
            }
            let outcome = if attempt == 1 {
                PrimitiveOutcome::Committed
            } else {
                PrimitiveOutcome::RecoveredThenCommitted(attempt)
            };
            finish_pending(&mut work, outcome, attempt);
            break outcome;
        }

        let decision = recover(attempt, policy, faults, rng);
        record.recovery = Some(decision);
        attempts.push(record);
        match decision {
            RecoveryDecision::Retry { relocalized } => relocalize_next = relocalized,
            RecoveryDecision::Unrecovered => {
                if policy.commit_mode == CommitMode::CommitBeforeVerify {
                    finish_pending(&mut work, PrimitiveOutcome::Unrecovered, attempt);
                } else {
                    work = internal.clone();
                }
                break PrimitiveOutcome::Unrecovered;
            }
        }
    };

    Ok(PrimitiveResult {
        outcome,
        internal: work,
        attempts,
        physical_tile,
        perceived_tile,
        fault_events,
        recognitions,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Action, ActionKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn robot_turn() -> GameState {
        let mut g = GameState::new_game(11, None).unwrap();
        for s in Seat::ALL {
            g.apply_mut(Action::new(s, ActionKind::DeclareMissing { suit: Suit::Characters })).unwrap();
        }
        g
    }

    #[test]
    fn commit_draw_and_discard() {
        let g = robot_turn();
        let s0 = InternalState::synchronized(&g, Seat::ALL[0]);
        let t = g.wall.peek().unwrap();
        let s1 = commit(&s0, &PrimitiveSpec::draw(t)).unwrap();
        assert_eq!(s1.perceptual.believed_hand.get(t), s0.perceptual.believed_hand.get(t) + 1);
        assert_eq!(s1.perceptual.believed_wall_count, s0.perceptual.believed_wall_count - 1);
        assert_eq!(s1.version, s0.version + 1);
        assert_eq!(commit(&s1, &PrimitiveSpec::draw(t)), Err(CommitError::DoubleCommit(0)));
    }

    #[test]
    fn fault_free_primitive_commits_first_time() {
        let g = robot_turn();
        let internal = InternalState::synchronized(&g, Seat::ALL[0]);
        let t = g.wall.peek().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = execute_primitive(
            &internal,
            &g,
            &PrimitiveSpec::draw(t),
            &FaultConfig::none(),
            &RecoveryPolicy::default(),
            0.0,
            0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(r.outcome, PrimitiveOutcome::Committed);
        assert_eq!(r.internal.version, 1);
        assert!(r.internal.execution.pending.is_none());
        let (next, _) = g.apply_action(Action::new(Seat::ALL[0], ActionKind::Draw)).unwrap();
        assert!(check_consistency(&r.internal, &next).is_empty());
    }

    #[test]
    fn no_retries_means_immediate_unrecovered() {
        let mut faults = FaultConfig::none();
        faults.execution_base_failure = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(recover(1, &RecoveryPolicy::disabled(), &faults, &mut rng), RecoveryDecision::Unrecovered);
    }
}
