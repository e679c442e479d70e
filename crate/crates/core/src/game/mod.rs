//! Rules engine for the 108-tile missing-suit Mahjong variant: no honors, no
//! chow, mandatory missing-suit declaration, and a win of four sets plus a
//! pair holding no tile of the declared suit.

mod hand;
mod rules;
mod state;
mod tile;
mod win;

pub use hand::{Hand, Meld, MeldKind, Seat};
pub use rules::{Action, ActionKind, KongVariant, Phase, RuleViolation, SeatContext};
pub use state::{EngineEvent, GameError, GameOutcome, GameState, TerminalCause, Wall};
pub use tile::{parse_tiles, Suit, Tile, TileCounts, TileParseError, COPIES, KINDS, WALL_SIZE};
pub use win::{decomposes_with_pair, distance_to_win, is_winning_hand, HandShapeError, UNREACHABLE};
