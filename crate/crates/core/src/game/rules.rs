//! Seat-level legality rules, shared by the ground-truth engine and by
//! decision views built from a player's (possibly wrong) beliefs.

use serde::{Deserialize, Serialize};

use super::hand::{Hand, MeldKind, Seat};
use super::tile::{Suit, Tile};
use super::win::is_winning_hand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Seats declare their missing suit in order, dealer first.
    Declaring,
    /// The current seat holds a 13-equivalent hand and must draw.
    AwaitingDraw,
    /// The current seat holds a 14-equivalent hand and must discard, kong, or win.
    AwaitingDiscard,
    /// Non-discarders submit claims on the last discard.
    AwaitingClaims,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KongVariant {
    /// Three held copies plus the claimed discard.
    FromDiscard,
    /// Four held copies.
    Concealed,
    /// Self-drawn fourth copy added to an existing pung.
    Added,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    DeclareMissing { suit: Suit },
    Draw,
    Discard { tile: Tile },
    Pung { tile: Tile },
    Kong { tile: Tile, variant: KongVariant },
    Win,
    Pass,
}

impl ActionKind {
    pub fn is_claim(self) -> bool {
        matches!(
            self,
            ActionKind::Pass
                | ActionKind::Pung { .. }
                | ActionKind::Win
                | ActionKind::Kong { variant: KongVariant::FromDiscard, .. }
        )
    }

    /// Claim precedence: win > kong > pung > pass.
    pub fn claim_priority(self) -> u8 {
        match self {
            ActionKind::Win => 3,
            ActionKind::Kong { .. } => 2,
            ActionKind::Pung { .. } => 1,
            _ => 0,
        }
    }

    pub fn tile(self) -> Option<Tile> {
        match self {
            ActionKind::Discard { tile } | ActionKind::Pung { tile } | ActionKind::Kong { tile, .. } => Some(tile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub actor: Seat,
    #[serde(flatten)]
    pub kind: ActionKind,
}

impl Action {
    pub fn new(actor: Seat, kind: ActionKind) -> Action {
        Action { actor, kind }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ActionKind::DeclareMissing { suit } => write!(f, "{} declare {}", self.actor, suit),
            ActionKind::Draw => write!(f, "{} draw", self.actor),
            ActionKind::Discard { tile } => write!(f, "{} discard {}", self.actor, tile),
            ActionKind::Pung { tile } => write!(f, "{} pung {}", self.actor, tile),
            ActionKind::Kong { tile, variant } => write!(f, "{} kong {} ({:?})", self.actor, tile, variant),
            ActionKind::Win => write!(f, "{} win", self.actor),
            ActionKind::Pass => write!(f, "{} pass", self.actor),
        }
    }
}

/// A rejected action, naming the rule that failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleViolation {
    #[error("game-over: the game has ended")]
    GameOver,
    #[error("wrong-phase: {action:?} is not allowed during {phase:?}")]
    WrongPhase { phase: Phase, action: ActionKind },
    #[error("turn-order: {seat} cannot act now")]
    TurnOrder { seat: Seat },
    #[error("already-declared: {seat} declared a missing suit already")]
    AlreadyDeclared { seat: Seat },
    #[error("missing-suit-undeclared: {seat} has not declared a missing suit")]
    MissingSuitUndeclared { seat: Seat },
    #[error("tile-not-held: {seat} does not hold {tile}")]
    TileNotHeld { seat: Seat, tile: Tile },
    #[error("pung-copies: {seat} holds {held} copies of {tile}, pung needs 2")]
    PungCopies { seat: Seat, tile: Tile, held: u8 },
    #[error("kong-copies: {seat} holds {held} copies of {tile}, {variant:?} kong needs {needed}")]
    KongCopies { seat: Seat, tile: Tile, held: u8, needed: u8, variant: KongVariant },
    #[error("added-kong: {seat} has no pung of {tile}")]
    NoPungToExtend { seat: Seat, tile: Tile },
    #[error("kong-replacement: the wall is empty")]
    NoReplacementTile,
    #[error("claim-tile: claim names {claimed} but the discard is {discard}")]
    ClaimTileMismatch { claimed: Tile, discard: Tile },
    #[error("discarder-claim: {seat} cannot claim its own discard")]
    DiscarderClaim { seat: Seat },
    #[error("claim-submitted: {seat} already submitted a claim")]
    ClaimAlreadySubmitted { seat: Seat },
    #[error("not-winning: {seat} does not hold a winning hand")]
    NotWinning { seat: Seat },
}

impl RuleViolation {
    /// Stable rule code, e.g. `"pung-copies"`.
    pub fn rule(&self) -> &'static str {
        match self {
            RuleViolation::GameOver => "game-over",
            RuleViolation::WrongPhase { .. } => "wrong-phase",
            RuleViolation::TurnOrder { .. } => "turn-order",
            RuleViolation::AlreadyDeclared { .. } => "already-declared",
            RuleViolation::MissingSuitUndeclared { .. } => "missing-suit-undeclared",
            RuleViolation::TileNotHeld { .. } => "tile-not-held",
            RuleViolation::PungCopies { .. } => "pung-copies",
            RuleViolation::KongCopies { .. } => "kong-copies",
            RuleViolation::NoPungToExtend { .. } => "added-kong",
            RuleViolation::NoReplacementTile => "kong-replacement",
            RuleViolation::ClaimTileMismatch { .. } => "claim-tile",
            RuleViolation::DiscarderClaim { .. } => "discarder-claim",
            RuleViolation::ClaimAlreadySubmitted { .. } => "claim-submitted",
            RuleViolation::NotWinning { .. } => "not-winning",
        }
    }
}

/// Everything the rules need to judge one seat's options.
#[derive(Debug, Clone, Copy)]
pub struct SeatContext<'a> {
    pub seat: Seat,
    pub phase: Phase,
    pub current_seat: Seat,
    pub hand: &'a Hand,
    /// The discard open for claims, if any.
    pub claim_tile: Option<Tile>,
    /// Whether this seat already submitted its claim on `claim_tile`.
    pub claim_submitted: bool,
    pub wall_remaining: usize,
}

impl SeatContext<'_> {
    pub fn check(&self, kind: ActionKind) -> Result<(), RuleViolation> {
        let seat = self.seat;
        let wrong_phase = || RuleViolation::WrongPhase { phase: self.phase, action: kind };
        match self.phase {
            Phase::Terminal => Err(RuleViolation::GameOver),
            Phase::Declaring => match kind {
                ActionKind::DeclareMissing { .. } => {
                    if seat != self.current_seat {
                        Err(RuleViolation::TurnOrder { seat })
                    } else if self.hand.missing_suit.is_some() {
                        Err(RuleViolation::AlreadyDeclared { seat })
                    } else {
                        Ok(())
                    }
                }
                _ => Err(wrong_phase()),
            },
            Phase::AwaitingDraw => match kind {
                ActionKind::Draw if seat == self.current_seat => Ok(()),
                ActionKind::Draw => Err(RuleViolation::TurnOrder { seat }),
                _ => Err(wrong_phase()),
            },
            Phase::AwaitingDiscard => {
                if !matches!(
                    kind,
                    ActionKind::Discard { .. }
                        | ActionKind::Win
                        | ActionKind::Kong { variant: KongVariant::Concealed | KongVariant::Added, .. }
                ) {
                    return Err(wrong_phase());
                }
                if seat != self.current_seat {
                    return Err(RuleViolation::TurnOrder { seat });
                }
                let held = |t: Tile| self.hand.concealed.get(t);
                match kind {
                    ActionKind::Discard { tile } => {
                        if held(tile) == 0 {
                            return Err(RuleViolation::TileNotHeld { seat, tile });
                        }
                        Ok(())
                    }
                    ActionKind::Kong { tile, variant: KongVariant::Concealed } => {
                        if held(tile) < 4 {
                            return Err(RuleViolation::KongCopies {
                                seat,
                                tile,
                                held: held(tile),
                                needed: 4,
                                variant: KongVariant::Concealed,
                            });
                        }
                        self.replacement_available()
                    }
                    ActionKind::Kong { tile, .. } => {
                        if self.hand.pung_index(tile).is_none() {
                            return Err(RuleViolation::NoPungToExtend { seat, tile });
                        }
                        if held(tile) == 0 {
                            return Err(RuleViolation::TileNotHeld { seat, tile });
                        }
                        self.replacement_available()
                    }
                    ActionKind::Win => self.check_win(self.hand.concealed),
                    _ => unreachable!("filtered above"),
                }
            }
            Phase::AwaitingClaims => {
                if !kind.is_claim() {
                    return Err(wrong_phase());
                }
                if seat == self.current_seat {
                    return Err(RuleViolation::DiscarderClaim { seat });
                }
                if self.claim_submitted {
                    return Err(RuleViolation::ClaimAlreadySubmitted { seat });
                }
                let Some(discard) = self.claim_tile else {
                    // Without a known discard the only claim is to pass.
                    return if kind == ActionKind::Pass { Ok(()) } else { Err(wrong_phase()) };
                };
                let held = self.hand.concealed.get(discard);
                match kind {
                    ActionKind::Pass => Ok(()),
                    ActionKind::Pung { tile } => {
                        if tile != discard {
                            return Err(RuleViolation::ClaimTileMismatch { claimed: tile, discard });
                        }
                        if held < 2 {
                            return Err(RuleViolation::PungCopies { seat, tile, held });
                        }
                        Ok(())
                    }
                    ActionKind::Kong { tile, .. } => {
                        if tile != discard {
                            return Err(RuleViolation::ClaimTileMismatch { claimed: tile, discard });
                        }
                        if held < 3 {
                            return Err(RuleViolation::KongCopies {
                                seat,
                                tile,
                                held,
                                needed: 3,
                                variant: KongVariant::FromDiscard,
                            });
                        }
                        self.replacement_available()
                    }
                    ActionKind::Win => {
                        let mut with_discard = self.hand.concealed;
                        with_discard.add(discard, 1);
                        self.check_win(with_discard)
                    }
                    _ => unreachable!("filtered above"),
                }
            }
        }
    }

    fn replacement_available(&self) -> Result<(), RuleViolation> {
        if self.wall_remaining == 0 {
            Err(RuleViolation::NoReplacementTile)
        } else {
            Ok(())
        }
    }

    fn check_win(&self, concealed: super::tile::TileCounts) -> Result<(), RuleViolation> {
        let seat = self.seat;
        let Some(missing) = self.hand.missing_suit else {
            return Err(RuleViolation::MissingSuitUndeclared { seat });
        };
        match is_winning_hand(&concealed, &self.hand.melds, missing) {
            Ok(true) => Ok(()),
            _ => Err(RuleViolation::NotWinning { seat }),
        }
    }

    /// Candidate action kinds worth checking; a superset of the legal set.
    fn candidates(&self) -> Vec<ActionKind> {
        let mut out = Vec::new();
        match self.phase {
            Phase::Terminal => {}
            Phase::Declaring => out.extend(Suit::ALL.iter().map(|&suit| ActionKind::DeclareMissing { suit })),
            Phase::AwaitingDraw => out.push(ActionKind::Draw),
            Phase::AwaitingDiscard => {
                out.push(ActionKind::Win);
                for t in self.hand.concealed.distinct() {
                    out.push(ActionKind::Kong { tile: t, variant: KongVariant::Concealed });
                    out.push(ActionKind::Kong { tile: t, variant: KongVariant::Added });
                }
                out.extend(self.hand.concealed.distinct().map(|tile| ActionKind::Discard { tile }));
            }
            Phase::AwaitingClaims => {
                if let Some(tile) = self.claim_tile {
                    out.push(ActionKind::Win);
                    out.push(ActionKind::Kong { tile, variant: KongVariant::FromDiscard });
                    out.push(ActionKind::Pung { tile });
                }
                out.push(ActionKind::Pass);
            }
        }
        out
    }

    /// Every legal action kind for this seat, in a fixed order.
    pub fn legal(&self) -> Vec<ActionKind> {
        self.candidates().into_iter().filter(|&k| self.check(k).is_ok()).collect()
    }
}

impl MeldKind {
    pub fn from_kong(variant: KongVariant) -> MeldKind {
        match variant {
            KongVariant::Concealed => MeldKind::ConcealedKong,
            KongVariant::FromDiscard | KongVariant::Added => MeldKind::ExposedKong,
        }
    }
}
