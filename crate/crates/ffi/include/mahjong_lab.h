#ifndef MAHJONG_LAB_H
#define MAHJONG_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MjStatus {
  MJ_OK = 0,
  MJ_NULL_POINTER = 1,
  MJ_INVALID_UTF8 = 2,
  MJ_INVALID_ARGUMENT = 3,
  // The engine rejected an action; the message names the rule.
  MJ_ILLEGAL_ACTION = 4,
  MJ_GAME_OVER = 5,
  MJ_CONFIG_ERROR = 6,
  MJ_PANIC = 7,
} MjStatus;

// Opaque handle to one game in progress.
typedef struct MjGame MjGame;

// Library version, a static string that must not be freed.
const char *mj_version(void);

// Message of the calling thread's last failure, or null. Valid until the
// thread's next call into the library; do not free.
const char *mj_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void mj_string_free(char *s);

// Deals a new game with the wall shuffled from `seed`.
//
// # Safety
// `out` must be a valid pointer.
enum MjStatus mj_game_new(uint64_t seed, struct MjGame **out);

// Releases a game. Null is ignored.
//
// # Safety
// `game` must come from [`mj_game_new`] and not have been freed.
void mj_game_free(struct MjGame *game);

// Full game state as JSON.
//
// # Safety
// `game` and `out` must be valid pointers.
enum MjStatus mj_game_state_json(const struct MjGame *game, char **out);

// Whether the game has ended.
//
// # Safety
// `game` and `out` must be valid pointers.
enum MjStatus mj_game_is_terminal(const struct MjGame *game, bool *out);

// Seat (0-3) that acts next; `MJ_GAME_OVER` once the game has ended.
//
// # Safety
// `game` and `out` must be valid pointers.
enum MjStatus mj_game_next_seat(const struct MjGame *game, uint8_t *out);

// Legal actions of `seat` as a JSON array.
//
// # Safety
// `game` and `out` must be valid pointers.
enum MjStatus mj_game_legal_actions_json(const struct MjGame *game, uint8_t seat, char **out);

// Applies one action given as JSON (as returned by
// [`mj_game_legal_actions_json`]). Illegal actions leave the game unchanged.
//
// # Safety
// `game` and `action_json` must be valid pointers.
enum MjStatus mj_game_apply_json(struct MjGame *game, const char *action_json);

// Plays the game to the end with the teacher policy at every seat,
// sampling from `seed`.
//
// # Safety
// `game` must be a valid pointer.
enum MjStatus mj_game_play_out(struct MjGame *game, uint64_t seed);

// Whether a concealed 14-tile hand (e.g. `"111222333p 44p 555m"`) wins
// with missing suit `missing_suit` (0 characters, 1 bamboo, 2 dots).
//
// # Safety
// `tiles` and `out` must be valid pointers.
enum MjStatus mj_is_winning_hand(const char *tiles, uint8_t missing_suit, bool *out);

// Distance-to-win of a concealed hand (13 tiles: 1 when ready; 14 tiles:
// 0 when complete).
//
// # Safety
// `tiles` and `out` must be valid pointers.
enum MjStatus mj_distance_to_win(const char *tiles, uint32_t *out);

// Runs a campaign from a TOML config (keys override the named profile;
// an empty string selects the deployment profile) and returns the report
// as JSON.
//
// # Safety
// `config_toml` and `out` must be valid pointers.
enum MjStatus mj_run_campaign_json(const char *config_toml, char **out);

#endif  /* MAHJONG_LAB_H */
