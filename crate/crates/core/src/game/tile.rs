use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of distinct tile kinds in the 108-tile set (three suits, ranks 1-9).
pub const KINDS: usize = 27;
/// Copies of each kind in a full wall.
pub const COPIES: u8 = 4;
/// Size of a full wall.
pub const WALL_SIZE: usize = KINDS * COPIES as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Suit {
    Characters,
    Bamboo,
    Dots,
}

impl Suit {
    pub const ALL: [Suit; 3] = [Suit::Characters, Suit::Bamboo, Suit::Dots];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Suit> {
        Suit::ALL.get(i).copied()
    }

    fn letter(self) -> char {
        match self {
            Suit::Characters => 'm',
            Suit::Bamboo => 's',
            Suit::Dots => 'p',
        }
    }
}

impl fmt::Display for Suit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suit::Characters => "characters",
            Suit::Bamboo => "bamboo",
            Suit::Dots => "dots",
        };
        f.write_str(name)
    }
}

impl FromStr for Suit {
    type Err = TileParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "characters" | "m" => Ok(Suit::Characters),
            "bamboo" | "s" => Ok(Suit::Bamboo),
            "dots" | "p" => Ok(Suit::Dots),
            _ => Err(TileParseError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse tile or suit from {0:?}")]
pub struct TileParseError(pub String);

/// A tile kind. Rank is always in `1..=9`.
///
/// Tiles render in the compact `<rank><suit letter>` form (`5p`, `9m`), which
/// is also the serialized representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tile {
    suit: Suit,
    rank: u8,
}

impl Tile {
    pub fn new(suit: Suit, rank: u8) -> Option<Tile> {
        (1..=9).contains(&rank).then_some(Tile { suit, rank })
    }

    pub fn suit(self) -> Suit {
        self.suit
    }

    pub fn rank(self) -> u8 {
        self.rank
    }

    /// Dense index in `0..KINDS`, suit-major.
    pub fn index(self) -> usize {
        self.suit.index() * 9 + (self.rank as usize - 1)
    }

    pub fn from_index(i: usize) -> Option<Tile> {
        let suit = Suit::from_index(i / 9)?;
        Some(Tile { suit, rank: (i % 9) as u8 + 1 })
    }

    pub fn all() -> impl Iterator<Item = Tile> {
        (0..KINDS).filter_map(Tile::from_index)
    }

    pub fn is_terminal(self) -> bool {
        self.rank == 1 || self.rank == 9
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.rank, self.suit.letter())
    }
}

impl FromStr for Tile {
    type Err = TileParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TileParseError(s.to_string());
        let mut chars = s.chars();
        let rank = chars.next().and_then(|c| c.to_digit(10)).ok_or_else(err)? as u8;
        let suit: Suit = chars.as_str().parse().map_err(|_| err())?;
        Tile::new(suit, rank).ok_or_else(err)
    }
}

impl Serialize for Tile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Multiset of tiles stored as per-kind counts.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TileCounts([u8; KINDS]);

impl TileCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn full_set() -> Self {
        TileCounts([COPIES; KINDS])
    }

    pub fn from_array(counts: [u8; KINDS]) -> Self {
        TileCounts(counts)
    }

    pub fn as_array(&self) -> &[u8; KINDS] {
        &self.0
    }

    pub fn get(&self, t: Tile) -> u8 {
        self.0[t.index()]
    }

    pub fn add(&mut self, t: Tile, n: u8) {
        self.0[t.index()] += n;
    }

    /// Removes `n` copies, returning false (and leaving the multiset untouched)
    /// if fewer than `n` are held.
    pub fn remove(&mut self, t: Tile, n: u8) -> bool {
        let c = &mut self.0[t.index()];
        if *c < n {
            return false;
        }
        *c -= n;
        true
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn suit_total(&self, suit: Suit) -> usize {
        let base = suit.index() * 9;
        self.0[base..base + 9].iter().map(|&c| c as usize).sum()
    }

    pub fn suit_slice(&self, suit: Suit) -> [u8; 9] {
        let base = suit.index() * 9;
        let mut out = [0u8; 9];
        out.copy_from_slice(&self.0[base..base + 9]);
        out
    }

    /// Distinct tiles held, in index order.
    pub fn distinct(&self) -> impl Iterator<Item = Tile> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .filter_map(|(i, _)| Tile::from_index(i))
    }

    /// Every tile with multiplicity, in index order.
    pub fn iter(&self) -> impl Iterator<Item = Tile> + '_ {
        self.0.iter().enumerate().flat_map(|(i, &c)| {
            std::iter::repeat_n(Tile::from_index(i).expect("index in range"), c as usize)
        })
    }

    pub fn to_vec(&self) -> Vec<Tile> {
        self.iter().collect()
    }

    pub fn merge(&mut self, other: &TileCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
    }
}

impl FromIterator<Tile> for TileCounts {
    fn from_iter<I: IntoIterator<Item = Tile>>(iter: I) -> Self {
        let mut c = TileCounts::new();
        for t in iter {
            c.add(t, 1);
        }
        c
    }
}

impl fmt::Debug for TileCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for TileCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tiles: Vec<String> = self.iter().map(|t| t.to_string()).collect();
        write!(f, "[{}]", tiles.join(" "))
    }
}

impl Serialize for TileCounts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TileCounts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tiles = Vec::<Tile>::deserialize(d)?;
        let counts: TileCounts = tiles.into_iter().collect();
        if counts.0.iter().any(|&c| c > COPIES) {
            return Err(serde::de::Error::custom("more than four copies of a tile"));
        }
        Ok(counts)
    }
}

/// Parses a compact hand string such as `"111222333p55p 7s"` where digits run
/// until a suit letter applies to all of them.
pub fn parse_tiles(s: &str) -> Result<Vec<Tile>, TileParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<u8> = Vec::new();
    for c in s.chars() {
        if c.is_whitespace() {
            continue;
        }
        if let Some(d) = c.to_digit(10) {
            pending.push(d as u8);
            continue;
        }
        let suit: Suit = c.to_string().parse()?;
        if pending.is_empty() {
            return Err(TileParseError(s.to_string()));
        }
        for r in pending.drain(..) {
            out.push(Tile::new(suit, r).ok_or_else(|| TileParseError(s.to_string()))?);
        }
    }
    if !pending.is_empty() {
        return Err(TileParseError(s.to_string()));
    }
    Ok(out)
}
