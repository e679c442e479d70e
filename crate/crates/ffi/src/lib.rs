//! C ABI over the mahjong-lab engine and harness.
//!
//! Conventions:
//! * every fallible function returns an [`MjStatus`]; results come back
//!   through out-pointers, which are written only on `MJ_OK`;
//! * on failure, [`mj_last_error`] returns a message for the calling thread,
//!   valid until that thread's next call into the library;
//! * strings returned through out-pointers are owned by the caller and must
//!   be released with [`mj_string_free`];
//! * games are opaque [`MjGame`] handles released with [`mj_game_free`];
//! * panics never cross the boundary; they surface as `MJ_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mahjong_lab::game::{
    distance_to_win, is_winning_hand, parse_tiles, Action, GameState, Hand, Seat, Suit, TileCounts,
};
use mahjong_lab::harness::{run_campaign, ExperimentConfig};
use mahjong_lab::policy::{decide, Policy, StateView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MjStatus {
    MjOk = 0,
    MjNullPointer = 1,
    MjInvalidUtf8 = 2,
    MjInvalidArgument = 3,
    /// The engine rejected an action; the message names the rule.
    MjIllegalAction = 4,
    MjGameOver = 5,
    MjConfigError = 6,
    MjPanic = 7,
}

/// Opaque handle to one game in progress.
pub struct MjGame {
    state: GameState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MjStatus, msg: impl Into<String>) -> MjStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting panics into `MjPanic` and clearing the error slot
/// on success.
fn guard(f: impl FnOnce() -> MjStatus) -> MjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(MjStatus::MjOk) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MjStatus::MjOk
        }
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MjStatus::MjPanic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MjStatus> {
    if ptr.is_null() {
        return Err(fail(MjStatus::MjNullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| fail(MjStatus::MjInvalidUtf8, e.to_string()))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> MjStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            MjStatus::MjOk
        }
        Err(e) => fail(MjStatus::MjInvalidArgument, e.to_string()),
    }
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(MjStatus::MjNullPointer, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Library version, a static string that must not be freed.
#[no_mangle]
pub extern "C" fn mj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the calling thread's last failure, or null. Valid until the
/// thread's next call into the library; do not free.
#[no_mangle]
pub extern "C" fn mj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Deals a new game with the wall shuffled from `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mj_game_new(seed: u64, out: *mut *mut MjGame) -> MjStatus {
    guard(|| {
        non_null!(out);
        match GameState::new_game(seed, None) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(MjGame { state }));
                MjStatus::MjOk
            }
            Err(e) => fail(MjStatus::MjInvalidArgument, e.to_string()),
        }
    })
}

/// Releases a game. Null is ignored.
///
/// # Safety
/// `game` must come from [`mj_game_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mj_game_free(game: *mut MjGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Full game state as JSON.
///
/// # Safety
/// `game` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_game_state_json(game: *const MjGame, out: *mut *mut c_char) -> MjStatus {
    guard(|| {
        non_null!(game, out);
        match serde_json::to_string(&(*game).state) {
            Ok(s) => write_string(out, s),
            Err(e) => fail(MjStatus::MjPanic, e.to_string()),
        }
    })
}

/// Whether the game has ended.
///
/// # Safety
/// `game` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_game_is_terminal(game: *const MjGame, out: *mut bool) -> MjStatus {
    guard(|| {
        non_null!(game, out);
        *out = (*game).state.is_terminal();
        MjStatus::MjOk
    })
}

/// Seat (0-3) that acts next; `MJ_GAME_OVER` once the game has ended.
///
/// # Safety
/// `game` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_game_next_seat(game: *const MjGame, out: *mut u8) -> MjStatus {
    guard(|| {
        non_null!(game, out);
        match (*game).state.seats_to_act().first() {
            Some(seat) => {
                *out = seat.index() as u8;
                MjStatus::MjOk
            }
            None => fail(MjStatus::MjGameOver, "the game has ended"),
        }
    })
}

/// Legal actions of `seat` as a JSON array.
///
/// # Safety
/// `game` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_game_legal_actions_json(game: *const MjGame, seat: u8, out: *mut *mut c_char) -> MjStatus {
    guard(|| {
        non_null!(game, out);
        let Some(seat) = Seat::new(seat) else {
            return fail(MjStatus::MjInvalidArgument, format!("seat {seat} out of range"));
        };
        match serde_json::to_string(&(*game).state.legal_actions(seat)) {
            Ok(s) => write_string(out, s),
            Err(e) => fail(MjStatus::MjPanic, e.to_string()),
        }
    })
}

/// Applies one action given as JSON (as returned by
/// [`mj_game_legal_actions_json`]). Illegal actions leave the game unchanged.
///
/// # Safety
/// `game` and `action_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_game_apply_json(game: *mut MjGame, action_json: *const c_char) -> MjStatus {
    guard(|| {
        non_null!(game);
        let text = match read_str(action_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let action: Action = match serde_json::from_str(text) {
            Ok(a) => a,
            Err(e) => return fail(MjStatus::MjInvalidArgument, format!("bad action: {e}")),
        };
        let game = &mut *game;
        if game.state.is_terminal() {
            return fail(MjStatus::MjGameOver, "the game has ended");
        }
        match game.state.apply_mut(action) {
            Ok(_) => MjStatus::MjOk,
            Err(v) => fail(MjStatus::MjIllegalAction, v.to_string()),
        }
    })
}

/// Plays the game to the end with the teacher policy at every seat,
/// sampling from `seed`.
///
/// # Safety
/// `game` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mj_game_play_out(game: *mut MjGame, seed: u64) -> MjStatus {
    guard(|| {
        non_null!(game);
        let state = &mut (*game).state;
        let teacher = Policy::teacher();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while !state.is_terminal() {
            let seat = state.seats_to_act()[0];
            let view = StateView::from_truth(state, seat);
            let action = match decide(&teacher, &view, false, &mut rng) {
                Ok((a, _)) => a,
                Err(e) => return fail(MjStatus::MjInvalidArgument, e.to_string()),
            };
            if let Err(v) = state.apply_mut(action) {
                return fail(MjStatus::MjIllegalAction, v.to_string());
            }
        }
        MjStatus::MjOk
    })
}

unsafe fn parse_counts(tiles: *const c_char) -> Result<TileCounts, MjStatus> {
    let text = read_str(tiles)?;
    let parsed = parse_tiles(text).map_err(|e| fail(MjStatus::MjInvalidArgument, e.to_string()))?;
    let mut counts = TileCounts::new();
    for t in parsed {
        counts.add(t, 1);
    }
    Ok(counts)
}

/// Whether a concealed 14-tile hand (e.g. `"111222333p 44p 555m"`) wins
/// with missing suit `missing_suit` (0 characters, 1 bamboo, 2 dots).
///
/// # Safety
/// `tiles` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_is_winning_hand(tiles: *const c_char, missing_suit: u8, out: *mut bool) -> MjStatus {
    guard(|| {
        non_null!(out);
        let counts = match parse_counts(tiles) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let Some(suit) = Suit::from_index(missing_suit as usize) else {
            return fail(MjStatus::MjInvalidArgument, format!("suit {missing_suit} out of range"));
        };
        match is_winning_hand(&counts, &[], suit) {
            Ok(w) => {
                *out = w;
                MjStatus::MjOk
            }
            Err(e) => fail(MjStatus::MjInvalidArgument, e.to_string()),
        }
    })
}

/// Distance-to-win of a concealed hand (13 tiles: 1 when ready; 14 tiles:
/// 0 when complete).
///
/// # Safety
/// `tiles` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_distance_to_win(tiles: *const c_char, out: *mut u32) -> MjStatus {
    guard(|| {
        non_null!(out);
        let counts = match parse_counts(tiles) {
            Ok(c) => c,
            Err(s) => return s,
        };
        *out = distance_to_win(&Hand::new(counts));
        MjStatus::MjOk
    })
}

/// Runs a campaign from a TOML config (keys override the named profile;
/// an empty string selects the deployment profile) and returns the report
/// as JSON.
///
/// # Safety
/// `config_toml` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mj_run_campaign_json(config_toml: *const c_char, out: *mut *mut c_char) -> MjStatus {
    guard(|| {
        non_null!(out);
        let text = match read_str(config_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match ExperimentConfig::from_toml_str(text) {
            Ok(c) => c,
            Err(e) => return fail(MjStatus::MjConfigError, e.to_string()),
        };
        match run_campaign(&cfg) {
            Ok(result) => match serde_json::to_string(&result.report) {
                Ok(s) => write_string(out, s),
                Err(e) => fail(MjStatus::MjPanic, e.to_string()),
            },
            Err(e) => fail(MjStatus::MjConfigError, e.to_string()),
        }
    })
}
