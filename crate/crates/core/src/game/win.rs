//! Win detection and distance-to-win for the missing-suit variant.
//!
//! A winning hand holds no tile of its declared missing suit and its
//! concealed tiles split into `4 - melds` sets (identical triples or
//! same-suit rank runs) plus one pair. There is no chow, so runs only ever
//! appear inside the concealed part.

use std::cell::RefCell;
use std::collections::HashMap;

use super::hand::{Hand, Meld};
use super::tile::{Suit, TileCounts, COPIES, KINDS};

/// Returned by [`distance_to_win`] when a meld already holds the missing suit.
pub const UNREACHABLE: u32 = 99;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HandShapeError {
    #[error("hand has {size} set-equivalent tiles, expected 14")]
    WrongSize { size: usize },
    #[error("hand has {0} melds, at most 4 allowed")]
    TooManyMelds(usize),
    #[error("more than four copies of a tile across concealed tiles and melds")]
    TooManyCopies,
}

/// True iff the 14-tile-equivalent configuration is a complete hand that holds
/// no tile of `missing_suit`.
pub fn is_winning_hand(
    concealed: &TileCounts,
    melds: &[Meld],
    missing_suit: Suit,
) -> Result<bool, HandShapeError> {
    if melds.len() > 4 {
        return Err(HandShapeError::TooManyMelds(melds.len()));
    }
    let size = concealed.total() + 3 * melds.len();
    if size != 14 {
        return Err(HandShapeError::WrongSize { size });
    }
    let mut all = *concealed;
    for m in melds {
        all.add(m.tile, m.kind.copies());
    }
    if all.as_array().iter().any(|&c| c > COPIES) {
        return Err(HandShapeError::TooManyCopies);
    }
    if all.suit_total(missing_suit) > 0 {
        return Ok(false);
    }
    Ok(decomposes_with_pair(concealed.as_array()))
}

/// Complete-hand shape test on raw counts: sets plus exactly one pair.
pub fn decomposes_with_pair(counts: &[u8; KINDS]) -> bool {
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total % 3 != 2 {
        return false;
    }
    let mut c = *counts;
    for i in 0..KINDS {
        if c[i] >= 2 {
            c[i] -= 2;
            let ok = only_sets(&mut c);
            c[i] += 2;
            if ok {
                return true;
            }
        }
    }
    false
}

fn only_sets(c: &mut [u8; KINDS]) -> bool {
    let Some(i) = c.iter().position(|&n| n > 0) else {
        return true;
    };
    if c[i] >= 3 {
        c[i] -= 3;
        let ok = only_sets(c);
        c[i] += 3;
        if ok {
            return true;
        }
    }
    if i % 9 <= 6 && c[i + 1] > 0 && c[i + 2] > 0 {
        c[i] -= 1;
        c[i + 1] -= 1;
        c[i + 2] -= 1;
        let ok = only_sets(c);
        c[i] += 1;
        c[i + 1] += 1;
        c[i + 2] += 1;
        if ok {
            return true;
        }
    }
    false
}

/// Minimum number of tiles the hand still has to acquire to become a winning
/// configuration.
///
/// For a 14-equivalent hand this is the minimum number of single-tile
/// replacements; a winning hand scores 0. For a 13-equivalent hand it counts
/// the one tile that a draw or claim supplies, so a ready hand scores 1.
/// Tiles of the missing suit never count toward a target and therefore have
/// to be replaced. A hand without a declared missing suit is scored against
/// its best choice.
pub fn distance_to_win(hand: &Hand) -> u32 {
    match hand.missing_suit {
        Some(s) => distance_with_missing(&hand.concealed, &hand.melds, s),
        None => Suit::ALL
            .iter()
            .map(|&s| distance_with_missing(&hand.concealed, &hand.melds, s))
            .min()
            .unwrap_or(UNREACHABLE),
    }
}

pub(crate) fn distance_with_missing(concealed: &TileCounts, melds: &[Meld], missing: Suit) -> u32 {
    if melds.len() > 4 || melds.iter().any(|m| m.tile.suit() == missing) {
        return UNREACHABLE;
    }
    let sets_needed = 4 - melds.len();
    let target_size = (3 * sets_needed + 2) as i32;
    let mut meld_copies = TileCounts::new();
    for m in melds {
        meld_copies.add(m.tile, m.kind.copies());
    }

    // best[s][p]: most held tiles reusable with s sets and p pairs across the
    // suits folded so far; -1 marks an unreachable slot combination.
    let mut best = [[-1i32; 2]; 5];
    best[0][0] = 0;
    for suit in Suit::ALL.into_iter().filter(|&s| s != missing) {
        let counts = concealed.suit_slice(suit);
        let melded = meld_copies.suit_slice(suit);
        let mut caps = [0u8; 9];
        for k in 0..9 {
            caps[k] = COPIES.saturating_sub(melded[k]);
        }
        let table = suit_table(counts, caps);
        let mut next = [[-1i32; 2]; 5];
        for s0 in 0..=sets_needed {
            for p0 in 0..2 {
                if best[s0][p0] < 0 {
                    continue;
                }
                for s1 in 0..=(sets_needed - s0) {
                    for p1 in 0..(2 - p0) {
                        let v = table[s1][p1];
                        if v < 0 {
                            continue;
                        }
                        let cand = best[s0][p0] + v as i32;
                        if cand > next[s0 + s1][p0 + p1] {
                            next[s0 + s1][p0 + p1] = cand;
                        }
                    }
                }
            }
        }
        best = next;
    }
    let reused = best.iter().flatten().copied().max().unwrap_or(0).max(0);
    (target_size - reused).max(0) as u32
}

type SuitTable = [[i8; 2]; 5];

thread_local! {
    static SUIT_MEMO: RefCell<HashMap<u64, SuitTable>> = RefCell::new(HashMap::new());
}

const MEMO_LIMIT: usize = 1 << 18;

fn suit_table(counts: [u8; 9], caps: [u8; 9]) -> SuitTable {
    let mut key = 0u64;
    for k in 0..9 {
        key |= (counts[k] as u64) << (3 * k);
        key |= (caps[k] as u64) << (27 + 3 * k);
    }
    if let Some(t) = SUIT_MEMO.with(|m| m.borrow().get(&key).copied()) {
        return t;
    }
    let mut table = [[-1i8; 2]; 5];
    let mut search = SuitSearch { rem: counts, demand: [0; 9], caps, table: &mut table };
    search.run(0, 0, 0, 0);
    SUIT_MEMO.with(|m| {
        let mut m = m.borrow_mut();
        if m.len() >= MEMO_LIMIT {
            m.clear();
        }
        m.insert(key, table);
    });
    table
}

/// Exhaustive search over target shapes (triplet, run, pair) that reuse held
/// tiles of one suit. `demand` tracks copies the target would need so the
/// four-copy limit (minus melded copies) is respected.
struct SuitSearch<'a> {
    rem: [u8; 9],
    demand: [u8; 9],
    caps: [u8; 9],
    table: &'a mut SuitTable,
}

impl SuitSearch<'_> {
    fn run(&mut self, mut pos: usize, sets: usize, pairs: usize, reused: i8) {
        let slot = &mut self.table[sets][pairs];
        if reused > *slot {
            *slot = reused;
        }
        while pos < 9 && self.rem[pos] == 0 {
            pos += 1;
        }
        if pos == 9 {
            return;
        }

        // Leave one copy of `pos` out of the target.
        self.rem[pos] -= 1;
        self.run(pos, sets, pairs, reused);
        self.rem[pos] += 1;

        if sets < 4 {
            self.try_shape(pos, &[(pos, 3)], sets + 1, pairs, reused);
            for start in pos.saturating_sub(2)..=pos {
                if start + 2 <= 8 {
                    self.try_shape(pos, &[(start, 1), (start + 1, 1), (start + 2, 1)], sets + 1, pairs, reused);
                }
            }
        }
        if pairs == 0 {
            self.try_shape(pos, &[(pos, 2)], sets, 1, reused);
        }
    }

    fn try_shape(&mut self, pos: usize, shape: &[(usize, u8)], sets: usize, pairs: usize, reused: i8) {
        if shape.iter().any(|&(k, n)| self.demand[k] + n > self.caps[k]) {
            return;
        }
        let mut taken = [(0usize, 0u8); 3];
        let mut gained = 0i8;
        for (slot, &(k, n)) in shape.iter().enumerate() {
            self.demand[k] += n;
            let take = if k >= pos { n.min(self.rem[k]) } else { 0 };
            self.rem[k] -= take;
            taken[slot] = (k, take);
            gained += take as i8;
        }
        self.run(pos, sets, pairs, reused + gained);
        for (slot, &(k, n)) in shape.iter().enumerate() {
            self.demand[k] -= n;
            self.rem[k] += taken[slot].1;
        }
    }
}
