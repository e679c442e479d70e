//! Independent oracles shared by the integration suites. Nothing here calls
//! into the decomposition or distance code it is used to check.
#![allow(dead_code)]

pub mod trie;

use std::collections::{HashSet, VecDeque};

use mahjong_lab::game::{Hand, Suit, Tile, TileCounts, KINDS};

/// Every set shape (identical triple or same-suit run) over the given kinds.
pub fn set_shapes(kinds: &[usize]) -> Vec<[u8; KINDS]> {
    let allowed: HashSet<usize> = kinds.iter().copied().collect();
    let mut shapes = Vec::new();
    for &k in kinds {
        let mut trip = [0u8; KINDS];
        trip[k] = 3;
        shapes.push(trip);
        if k % 9 <= 6 && allowed.contains(&(k + 1)) && allowed.contains(&(k + 2)) {
            let mut run = [0u8; KINDS];
            run[k] = 1;
            run[k + 1] = 1;
            run[k + 2] = 1;
            shapes.push(run);
        }
    }
    shapes
}

/// Brute-force decomposition: does `counts` equal the sum of `sets` shapes
/// (chosen with repetition) plus one pair?
pub fn oracle_decomposes(counts: &[u8; KINDS], sets: usize) -> bool {
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total != 3 * sets + 2 {
        return false;
    }
    let kinds: Vec<usize> = (0..KINDS).filter(|&k| counts[k] > 0).collect();
    let shapes = set_shapes(&(0..KINDS).collect::<Vec<_>>());
    fn rec(rem: &mut [u8; KINDS], shapes: &[[u8; KINDS]], from: usize, left: usize) -> bool {
        if left == 0 {
            let nz: Vec<u8> = rem.iter().copied().filter(|&c| c > 0).collect();
            return nz == vec![2];
        }
        for (i, s) in shapes.iter().enumerate().skip(from) {
            if (0..KINDS).all(|k| rem[k] >= s[k]) {
                for k in 0..KINDS {
                    rem[k] -= s[k];
                }
                let ok = rec(rem, shapes, i, left - 1);
                for k in 0..KINDS {
                    rem[k] += s[k];
                }
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let _ = kinds;
    let mut rem = *counts;
    rec(&mut rem, &shapes, 0, sets)
}

/// All complete concealed multisets (`sets` shapes plus a pair) over `kinds`,
/// respecting per-kind caps.
pub fn enumerate_complete(kinds: &[usize], sets: usize, caps: &[u8; KINDS]) -> Vec<[u8; KINDS]> {
    let shapes = set_shapes(kinds);
    let mut out = Vec::new();
    let mut acc = [0u8; KINDS];
    fn rec(
        shapes: &[[u8; KINDS]],
        kinds: &[usize],
        caps: &[u8; KINDS],
        from: usize,
        left: usize,
        acc: &mut [u8; KINDS],
        out: &mut Vec<[u8; KINDS]>,
    ) {
        if left == 0 {
            for &p in kinds {
                if acc[p] + 2 <= caps[p] {
                    let mut full = *acc;
                    full[p] += 2;
                    out.push(full);
                }
            }
            return;
        }
        for i in from..shapes.len() {
            let s = &shapes[i];
            if (0..KINDS).all(|k| acc[k] + s[k] <= caps[k]) {
                for k in 0..KINDS {
                    acc[k] += s[k];
                }
                rec(shapes, kinds, caps, i, left - 1, acc, out);
                for k in 0..KINDS {
                    acc[k] -= s[k];
                }
            }
        }
    }
    rec(&shapes, kinds, caps, 0, sets, &mut acc, &mut out);
    out
}

/// Distance by enumeration of every winning target: N minus the largest
/// overlap between the held concealed tiles and a complete target.
pub fn distance_by_enumeration(hand: &Hand) -> u32 {
    let missing = hand.missing_suit.expect("oracle needs a declared suit");
    let sets = 4 - hand.melds.len();
    let target = 3 * sets + 2;
    let kinds: Vec<usize> = (0..KINDS)
        .filter(|&k| Tile::from_index(k).unwrap().suit() != missing)
        .collect();
    let mut caps = [4u8; KINDS];
    for m in &hand.melds {
        caps[m.tile.index()] -= m.kind.copies();
    }
    let held = hand.concealed.as_array();
    enumerate_complete(&kinds, sets, &caps)
        .iter()
        .map(|t| target - (0..KINDS).map(|k| t[k].min(held[k]) as usize).sum::<usize>())
        .min()
        .unwrap() as u32
}

/// Breadth-first search over single-tile replacements (14-equivalent hands)
/// until a winning configuration appears. Only feasible for small distances.
pub fn distance_by_bfs(hand: &Hand, max_depth: u32) -> Option<u32> {
    let missing = hand.missing_suit.expect("oracle needs a declared suit");
    let sets = 4 - hand.melds.len();
    let mut meld_copies = [0u8; KINDS];
    for m in &hand.melds {
        meld_copies[m.tile.index()] += m.kind.copies();
    }
    let is_win = |c: &[u8; KINDS]| {
        (0..KINDS).all(|k| c[k] == 0 || Tile::from_index(k).unwrap().suit() != missing)
            && oracle_decomposes(c, sets)
    };
    let start = *hand.concealed.as_array();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start);
    queue.push_back((start, 0u32));
    while let Some((c, d)) = queue.pop_front() {
        if is_win(&c) {
            return Some(d);
        }
        if d == max_depth {
            continue;
        }
        for out in 0..KINDS {
            if c[out] == 0 {
                continue;
            }
            for inn in 0..KINDS {
                if inn == out || c[inn] + meld_copies[inn] >= 4 {
                    continue;
                }
                let mut n = c;
                n[out] -= 1;
                n[inn] += 1;
                if seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    None
}

pub fn hand_of(s: &str, missing: Suit) -> Hand {
    let counts: TileCounts = mahjong_lab::game::parse_tiles(s).unwrap().into_iter().collect();
    Hand { concealed: counts, melds: Vec::new(), missing_suit: Some(missing) }
}

/// One-sided two-proportion z-test p-value for H1: p_a > p_b.
pub fn one_sided_p(successes_a: u64, n_a: u64, successes_b: u64, n_b: u64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let pa = successes_a as f64 / n_a as f64;
    let pb = successes_b as f64 / n_b as f64;
    let pooled = (successes_a + successes_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        return if pa > pb { 0.0 } else { 1.0 };
    }
    Normal::standard().sf((pa - pb) / se)
}

/// Half-width of a 3-sigma binomial band around `p` for `n` trials.
pub fn three_sigma(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
