use std::fmt;

use serde::{Deserialize, Serialize};

use super::tile::{Suit, Tile, TileCounts, COPIES};

/// Seat index 0-3. Seat 0 is the dealer and, in the harness, the robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seat(u8);

impl Seat {
    pub const COUNT: usize = 4;
    pub const ALL: [Seat; 4] = [Seat(0), Seat(1), Seat(2), Seat(3)];

    pub fn new(i: u8) -> Option<Seat> {
        (i < 4).then_some(Seat(i))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The next seat in play order (downstream).
    pub fn next(self) -> Seat {
        Seat((self.0 + 1) % 4)
    }

    /// Steps downstream from `self` to reach `other` (0 if equal).
    pub fn distance_to(self, other: Seat) -> u8 {
        (other.0 + 4 - self.0) % 4
    }

    pub fn others(self) -> impl Iterator<Item = Seat> {
        (1..4).map(move |k| Seat((self.0 + k) % 4))
    }
}

impl fmt::Display for Seat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seat{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeldKind {
    Pung,
    ExposedKong,
    ConcealedKong,
}

impl MeldKind {
    pub fn copies(self) -> u8 {
        match self {
            MeldKind::Pung => 3,
            MeldKind::ExposedKong | MeldKind::ConcealedKong => 4,
        }
    }
}

/// An exposed or concealed set owned by a hand.
///
/// `source_seat` names the discarder for claimed melds and is absent for
/// concealed kongs and kongs completed from a self-drawn tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Meld {
    pub kind: MeldKind,
    pub tile: Tile,
    pub source_seat: Option<Seat>,
}

impl Meld {
    pub fn pung(tile: Tile, from: Seat) -> Meld {
        Meld { kind: MeldKind::Pung, tile, source_seat: Some(from) }
    }

    pub fn concealed_kong(tile: Tile) -> Meld {
        Meld { kind: MeldKind::ConcealedKong, tile, source_seat: None }
    }

    pub fn exposed_kong(tile: Tile, from: Option<Seat>) -> Meld {
        Meld { kind: MeldKind::ExposedKong, tile, source_seat: from }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Hand {
    pub concealed: TileCounts,
    pub melds: Vec<Meld>,
    pub missing_suit: Option<Suit>,
}

impl Hand {
    pub fn new(concealed: TileCounts) -> Hand {
        Hand { concealed, melds: Vec::new(), missing_suit: None }
    }

    /// Concealed count plus three per meld (kongs count as one set).
    pub fn set_equivalent_size(&self) -> usize {
        self.concealed.total() + 3 * self.melds.len()
    }

    /// Copies of each kind held across concealed tiles and melds.
    pub fn all_tiles(&self) -> TileCounts {
        let mut c = self.concealed;
        for m in &self.melds {
            c.add(m.tile, m.kind.copies());
        }
        c
    }

    /// Copies of each kind locked in melds.
    pub fn meld_counts(&self) -> TileCounts {
        let mut c = TileCounts::new();
        for m in &self.melds {
            c.add(m.tile, m.kind.copies());
        }
        c
    }

    pub fn holds_missing_suit(&self) -> bool {
        match self.missing_suit {
            Some(s) => self.all_tiles().suit_total(s) > 0,
            None => false,
        }
    }

    /// Checks the size invariant (13 or 14 set-equivalent tiles) and the
    /// four-copy limit.
    pub fn is_well_formed(&self) -> bool {
        let size = self.set_equivalent_size();
        (size == 13 || size == 14) && self.all_tiles().as_array().iter().all(|&c| c <= COPIES)
    }

    pub fn suit_counts(&self) -> [usize; 3] {
        let all = self.all_tiles();
        [
            all.suit_total(Suit::Characters),
            all.suit_total(Suit::Bamboo),
            all.suit_total(Suit::Dots),
        ]
    }

    pub fn pung_index(&self, tile: Tile) -> Option<usize> {
        self.melds.iter().position(|m| m.kind == MeldKind::Pung && m.tile == tile)
    }
}
