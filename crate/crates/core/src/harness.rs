//! Experiment orchestration: configuration, the closed per-turn loop
//! (decision → guarded primitives → fault and monitor sampling → engine
//! transition), seeded campaigns, paired matches, ablations, the self-play
//! improvement loop, and report export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fault::{sample_interaction_event, FaultConfig, FaultEvent, FaultKind};
use crate::game::{
    Action, ActionKind, EngineEvent, GameOutcome, GameState, Phase, RuleViolation, Seat, Suit, Wall,
};
use crate::monitor::{self, DetectorScores, DetectorSpec, LogEntry, MonitorTask, TurnContext};
use crate::policy::{decide, DecisionTrace, Policy, PolicyError, PolicyParams, StateView, TeacherPolicy};
use crate::selfplay::{
    build_trie, dpo_batch, extract_preference_pairs, play_game, play_group_with, prepare_pair, LossConfig, PreparedPair,
};
use crate::state_machine::{
    check_consistency, execute_primitive, AttemptRecord, CommitMode, ConsistencyReport, InternalState,
    PreconditionViolation, PrimitiveOutcome, PrimitiveSpec, RecoveryPolicy,
};

/// Version of the transcript, log, and report record layouts.
pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "MJLAB_OUTPUT_DIR";
pub const DEPLOYMENT_PROFILE: &str = "paper-2025-deployment";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingSuitMode {
    Normal,
    /// The robot records every seat's missing suit, its own included, as
    /// Characters.
    ForcedCharacters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatAssignment {
    pub policy: Policy,
    #[serde(default)]
    pub greedy: bool,
}

impl SeatAssignment {
    pub fn teacher() -> SeatAssignment {
        SeatAssignment { policy: Policy::teacher(), greedy: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Seconds per action that involves no robot grasp.
    pub action_seconds: f64,
    /// Games per continuous operating session; the clock restarts afterwards.
    pub session_games: u32,
    /// Seconds between the starts of consecutive games in a session.
    pub game_spacing_seconds: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { action_seconds: 6.0, session_games: 16, game_spacing_seconds: 1800.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: String,
    pub games: usize,
    pub base_seed: u64,
    /// Explicit per-game seeds; when absent game `i` uses `base_seed + i`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Seats relative to the robot: robot, right, opposite, left.
    pub seats: [SeatAssignment; 4],
    /// Rotate the robot (and hence the dealer) across games.
    pub rotate_robot_seat: bool,
    pub faults: FaultConfig,
    pub recovery: RecoveryPolicy,
    pub detectors: Vec<DetectorSpec>,
    pub missing_suit_mode: MissingSuitMode,
    /// Probability that a human re-synchronizes the robot after an
    /// unrecovered primitive (a minor intervention).
    pub intervention_resync: f64,
    pub timing: TimingConfig,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    /// Keep full transcripts in memory (and write them when an output
    /// directory is set).
    pub keep_transcripts: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// No faults, perfect detectors, teacher at every seat.
    pub fn fault_free() -> ExperimentConfig {
        ExperimentConfig {
            profile: "fault-free".into(),
            games: 100,
            base_seed: 1,
            seeds: None,
            seats: [SeatAssignment::teacher(), SeatAssignment::teacher(), SeatAssignment::teacher(), SeatAssignment::teacher()],
            rotate_robot_seat: true,
            faults: FaultConfig::none(),
            recovery: RecoveryPolicy::default(),
            detectors: vec![DetectorSpec::perfect(MonitorTask::TurnViolation), DetectorSpec::perfect(MonitorTask::Inspection)],
            missing_suit_mode: MissingSuitMode::Normal,
            intervention_resync: 0.0,
            timing: TimingConfig::default(),
            parallelism: 0,
            keep_transcripts: false,
            output_dir: None,
        }
    }

    /// The calibrated deployment profile (see [`FaultConfig::deployment`]).
    pub fn deployment() -> ExperimentConfig {
        ExperimentConfig {
            profile: DEPLOYMENT_PROFILE.into(),
            faults: FaultConfig::deployment(),
            detectors: vec![DetectorSpec::turn_violation_default(), DetectorSpec::inspection_default()],
            ..ExperimentConfig::fault_free()
        }
    }

    pub fn profile_named(name: &str) -> Result<ExperimentConfig, HarnessError> {
        match name {
            DEPLOYMENT_PROFILE => Ok(ExperimentConfig::deployment()),
            "fault-free" => Ok(ExperimentConfig::fault_free()),
            other => Err(HarnessError::UnknownProfile(other.to_string())),
        }
    }

    /// Parses a TOML config. When it names a `profile`, the file's keys
    /// override that profile's values; otherwise they override the
    /// deployment profile.
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig, HarnessError> {
        let user: toml::Value = toml::from_str(text)?;
        let profile = user.get("profile").and_then(|v| v.as_str()).unwrap_or(DEPLOYMENT_PROFILE).to_string();
        let base = ExperimentConfig::profile_named(&profile)?;
        let mut merged = toml::Value::try_from(&base).map_err(|e| HarnessError::Config(e.to_string()))?;
        merge_toml(&mut merged, user);
        let cfg: ExperimentConfig = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn game_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.games as u64).map(|i| self.base_seed.wrapping_add(i)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.faults.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.games {
                return Err(HarnessError::Config(format!("{} seeds for {} games", seeds.len(), self.games)));
            }
            let unique: std::collections::BTreeSet<_> = seeds.iter().collect();
            if unique.len() != seeds.len() {
                return Err(HarnessError::Config("seeds must be unique per game".into()));
            }
        }
        for s in &self.seats {
            if let Policy::Toy(p) = &s.policy {
                p.validate()?;
            }
        }
        if !(0.0..=1.0).contains(&self.intervention_resync) {
            return Err(HarnessError::Config(format!("intervention_resync = {}", self.intervention_resync)));
        }
        if self.timing.session_games == 0 {
            return Err(HarnessError::Config("timing.session_games must be positive".into()));
        }
        Ok(())
    }

    /// Configured output directory, overridden by the environment.
    pub fn resolved_output_dir(&self) -> Option<PathBuf> {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).or_else(|| self.output_dir.clone())
    }

    pub fn robot_seat(&self, game_index: usize) -> Seat {
        if self.rotate_robot_seat {
            Seat::ALL[game_index % 4]
        } else {
            Seat::ALL[0]
        }
    }

    pub fn start_clock(&self, game_index: usize) -> f64 {
        (game_index as u64 % self.timing.session_games as u64) as f64 * self.timing.game_spacing_seconds
    }
}

fn merge_toml(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge_toml(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

// ---------------------------------------------------------------------------
// Transcripts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Header { schema_version: u32, profile: String, seed: u64, game_index: usize, robot_seat: Seat, start_time: f64 },
    Decision { seat: Seat, sim_time: f64, trace: DecisionTrace },
    Action { action: Action, sim_time: f64 },
    Primitive {
        spec: PrimitiveSpec,
        outcome: PrimitiveOutcome,
        attempts: Vec<AttemptRecord>,
        physical_tile: Option<crate::game::Tile>,
        perceived_tile: Option<crate::game::Tile>,
        sim_time: f64,
        version: u64,
    },
    Precondition { violation: PreconditionViolation, sim_time: f64, resolved: bool },
    Fault { event: FaultEvent },
    Detection { entry: LogEntry },
    Consistency { sim_time: f64, consistent_before: bool, report: ConsistencyReport },
    Intervention { sim_time: f64 },
    Abort { sim_time: f64, rule: String, detail: String },
    Outcome { outcome: GameOutcome, summary: GameSummary },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<Record>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

/// Per-game accounting carried in the transcript's final record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GameSummary {
    pub seed: u64,
    pub game_index: usize,
    pub robot_seat: Seat,
    /// Winners relative to the robot: 0 robot, 1 right, 2 opposite, 3 left.
    pub relative_winners: Vec<usize>,
    pub robot_won: bool,
    pub aborted: bool,
    pub autonomous: bool,
    pub primitives: u64,
    pub grasp_primitives: u64,
    pub grasp_attempts: u64,
    pub successful_attempts: u64,
    pub first_attempt_commits: u64,
    pub recovered_primitives: u64,
    pub unrecovered_primitives: u64,
    /// Committed primitive batches that turned a consistent hand/wall belief
    /// into an inconsistent one.
    pub divergent_commits: u64,
    pub precondition_violations: u64,
    pub interventions: u64,
    pub recognitions: u64,
    pub turns: u64,
    pub fault_counts: BTreeMap<String, u64>,
    /// (time, failed) for every grasp attempt.
    pub attempt_times: Vec<(f64, bool)>,
    pub monitor: Vec<(MonitorTask, DetectorScores)>,
    pub start_time: f64,
    pub end_time: f64,
}

fn fault_key(kind: FaultKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct GameRun {
    pub transcript: Transcript,
    pub outcome: GameOutcome,
    pub summary: GameSummary,
}

struct GameLoop<'a> {
    cfg: &'a ExperimentConfig,
    robot: Seat,
    truth: GameState,
    internal: InternalState,
    clock: f64,
    turn_index: u32,
    decide_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    monitor_rng: ChaCha8Rng,
    records: Vec<Record>,
    summary: GameSummary,
    truth_faults: Vec<FaultEvent>,
    turns: Vec<TurnContext>,
    /// Hand/wall belief consistent after the last robot primitive batch.
    consistent: bool,
    flagged: bool,
    pending_resync: bool,
}

impl<'a> GameLoop<'a> {
    fn player(&self, seat: Seat) -> &'a SeatAssignment {
        let rel = self.robot.distance_to(seat) as usize;
        &self.cfg.seats[rel]
    }

    fn push_faults(&mut self, events: Vec<FaultEvent>) {
        for e in events {
            *self.summary.fault_counts.entry(fault_key(e.kind)).or_default() += 1;
            self.records.push(Record::Fault { event: e });
        }
    }

    fn begin_turn(&mut self) {
        self.turn_index += 1;
        self.summary.turns += 1;
        let ctx = TurnContext { turn_index: self.turn_index, sim_time: self.clock, current_seat: self.truth.current_seat };
        self.turns.push(ctx);
        let humans: Vec<Seat> = self.robot.others().collect();
        let event = sample_interaction_event(&self.truth, &humans, self.turn_index, self.clock, &self.cfg.faults, &mut self.fault_rng);
        let events: Vec<FaultEvent> = event.into_iter().collect();
        let mut turn_violation_detected = false;
        for spec in &self.cfg.detectors {
            let log = monitor::observe(&events, &[ctx], spec, &mut self.monitor_rng);
            if spec.task == MonitorTask::TurnViolation && log.detections().any(|d| d.linked) {
                turn_violation_detected = true;
            }
            for entry in log.entries {
                self.records.push(Record::Detection { entry });
            }
        }
        for e in &events {
            if let crate::fault::FaultDetail::OutOfTurn { actor, .. } = e.detail {
                // An unnoticed out-of-turn play misleads the robot's turn
                // tracking until the next turn change it observes.
                if !turn_violation_detected {
                    self.internal.interaction.current_turn = actor;
                }
            }
        }
        self.truth_faults.extend(events.iter().cloned());
        self.push_faults(events);
    }

    fn abort(&mut self, rule: &str, detail: String) {
        self.records.push(Record::Abort { sim_time: self.clock, rule: rule.into(), detail });
        self.truth.abort();
        self.summary.aborted = true;
        self.flagged = true;
    }

    fn check_batch(&mut self, committed_all: bool) {
        let report = check_consistency(&self.internal, &self.truth);
        let now_ok = !report.hand_or_wall();
        if committed_all && self.consistent && !now_ok {
            self.summary.divergent_commits += 1;
        }
        self.records.push(Record::Consistency { sim_time: self.clock, consistent_before: self.consistent, report });
        self.consistent = now_ok;
    }

    /// Runs one robot primitive, resynchronizing turn tracking once on a
    /// turn-order violation. Returns whether it committed.
    fn run_primitive(&mut self, spec: PrimitiveSpec) -> (bool, Option<crate::game::Tile>) {
        let mut resynced = false;
        loop {
            let result = execute_primitive(
                &self.internal,
                &self.truth,
                &spec,
                &self.cfg.faults,
                &self.cfg.recovery,
                self.clock,
                self.turn_index,
                &mut self.fault_rng,
            );
            match result {
                Err(v) => {
                    self.summary.precondition_violations += 1;
                    let retry = v.is_turn_order() && !resynced;
                    self.records.push(Record::Precondition { violation: v, sim_time: self.clock, resolved: retry });
                    if retry {
                        self.internal.resync_interaction(&self.truth);
                        resynced = true;
                        continue;
                    }
                    self.flagged = true;
                    return (false, spec.target);
                }
                Ok(r) => {
                    self.summary.primitives += 1;
                    if spec.needs_grasp() {
                        self.summary.grasp_primitives += 1;
                        self.summary.grasp_attempts += r.attempts.len() as u64;
                        self.summary.successful_attempts += r.attempts.iter().filter(|a| a.executed_ok).count() as u64;
                        for a in &r.attempts {
                            self.summary.attempt_times.push((a.sim_time, !a.executed_ok));
                        }
                    }
                    self.summary.recognitions += r.recognitions as u64;
                    match r.outcome {
                        PrimitiveOutcome::Committed => self.summary.first_attempt_commits += 1,
                        PrimitiveOutcome::RecoveredThenCommitted(_) => self.summary.recovered_primitives += 1,
                        PrimitiveOutcome::Unrecovered => self.summary.unrecovered_primitives += 1,
                    }
                    self.push_faults(r.fault_events.clone());
                    self.records.push(Record::Primitive {
                        spec,
                        outcome: r.outcome,
                        attempts: r.attempts.clone(),
                        physical_tile: r.physical_tile,
                        perceived_tile: r.perceived_tile,
                        sim_time: self.clock,
                        version: r.internal.version,
                    });
                    self.clock += r.elapsed;
                    self.internal = r.internal;
                    let committed = r.outcome.is_committed();
                    if !committed {
                        self.flagged = true;
                        if self.cfg.intervention_resync > 0.0 && self.fault_rng.random::<f64>() < self.cfg.intervention_resync {
                            self.summary.interventions += 1;
                            self.records.push(Record::Intervention { sim_time: self.clock });
                            // The resync happens once the table has settled.
                            self.pending_resync = true;
                        }
                    }
                    return (committed, r.physical_tile);
                }
            }
        }
    }

    /// Applies a transition and lets the robot observe it; the robot's own
    /// draws and melds become guarded primitives.
    fn after_events(&mut self, events: &[EngineEvent]) {
        let mut log = Vec::new();
        let rec = self.internal.observe(events, &self.cfg.faults, self.clock, self.turn_index, &mut log, &mut self.fault_rng);
        self.summary.recognitions += rec as u64;
        self.push_faults(log);
        let mut ran = false;
        let mut committed_all = true;
        for ev in events {
            match *ev {
                EngineEvent::TileDrawn { seat, tile, .. } if seat == self.robot => {
                    ran = true;
                    committed_all &= self.run_primitive(PrimitiveSpec::draw(tile)).0;
                }
                EngineEvent::MeldFormed { seat, meld } if seat == self.robot => {
                    ran = true;
                    committed_all &= self.run_primitive(PrimitiveSpec::meld(meld)).0;
                }
                _ => {}
            }
        }
        if ran {
            self.settle(committed_all);
        }
    }

    fn settle(&mut self, committed_all: bool) {
        if self.pending_resync {
            self.pending_resync = false;
            self.internal.resync_all(&self.truth);
        }
        self.check_batch(committed_all);
    }

    fn human_step(&mut self, seat: Seat) -> Result<(), HarnessError> {
        let view = StateView::from_truth(&self.truth, seat);
        let player = self.player(seat);
        let (action, _) = decide(&player.policy, &view, player.greedy, &mut self.decide_rng)?;
        let events = self.truth.apply_mut(action).expect("decisions are drawn from legal actions");
        self.clock += self.cfg.timing.action_seconds;
        self.records.push(Record::Action { action, sim_time: self.clock });
        self.after_events(&events);
        Ok(())
    }

    fn robot_step(&mut self) -> Result<(), HarnessError> {
        let phase = self.truth.phase;
        if matches!(phase, Phase::AwaitingDraw | Phase::AwaitingDiscard) && self.internal.interaction.current_turn != self.robot {
            let violation = PreconditionViolation::TurnOrder {
                seat: self.robot,
                believed: self.internal.interaction.current_turn,
            };
            self.summary.precondition_violations += 1;
            self.records.push(Record::Precondition { violation, sim_time: self.clock, resolved: true });
            self.internal.resync_interaction(&self.truth);
        }
        let view = StateView::from_internal(&self.internal, phase);
        let player = self.player(self.robot);
        let (action, mut trace) = match decide(&player.policy, &view, player.greedy, &mut self.decide_rng) {
            Ok(d) => d,
            Err(PolicyError::NoLegalActions(_)) => {
                self.abort("no-believed-action", view.summary());
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        trace.timestamp = self.clock;
        self.records.push(Record::Decision { seat: self.robot, sim_time: self.clock, trace });

        if let ActionKind::Discard { tile } = action.kind {
            let (committed, physical) = self.run_primitive(PrimitiveSpec::discard(tile));
            let physical = physical.filter(|&t| self.truth.hands[self.robot.index()].concealed.get(t) > 0).unwrap_or(tile);
            let events = match self.truth.apply_mut(Action::new(self.robot, ActionKind::Discard { tile: physical })) {
                Ok(ev) => ev,
                Err(v) => {
                    self.abort(v.rule(), v.to_string());
                    return Ok(());
                }
            };
            self.records.push(Record::Action { action: Action::new(self.robot, ActionKind::Discard { tile: physical }), sim_time: self.clock });
            self.settle(committed);
            self.after_events(&events);
            return Ok(());
        }

        match self.truth.apply_mut(action) {
            Ok(events) => {
                self.clock += self.cfg.timing.action_seconds;
                self.records.push(Record::Action { action, sim_time: self.clock });
                self.after_events(&events);
            }
            Err(v) => self.fatal_rule(v),
        }
        Ok(())
    }

    fn fatal_rule(&mut self, v: RuleViolation) {
        self.abort(v.rule(), v.to_string());
    }
}

/// Plays one game as the first game of a session.
pub fn run_game(cfg: &ExperimentConfig, seed: u64) -> Result<(Transcript, GameOutcome), HarnessError> {
    cfg.validate()?;
    let run = run_game_at(cfg, seed, 0)?;
    Ok((run.transcript, run.outcome))
}

/// Plays game `game_index` of a campaign: the index fixes the robot's seat
/// and the game's start time within its session.
pub fn run_game_at(cfg: &ExperimentConfig, seed: u64, game_index: usize) -> Result<GameRun, HarnessError> {
    let robot = cfg.robot_seat(game_index);
    let truth = GameState::new_game(seed, None).expect("shuffled walls are valid");
    let override_suit = (cfg.missing_suit_mode == MissingSuitMode::ForcedCharacters).then_some(Suit::Characters);
    let internal = InternalState::synchronized(&truth, robot).with_missing_suit_override(override_suit);
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s);
        r
    };
    let start = cfg.start_clock(game_index);
    let mut g = GameLoop {
        cfg,
        robot,
        truth,
        internal,
        clock: start,
        turn_index: 0,
        decide_rng: stream(1),
        fault_rng: stream(2),
        monitor_rng: stream(3),
        records: vec![Record::Header {
            schema_version: SCHEMA_VERSION,
            profile: cfg.profile.clone(),
            seed,
            game_index,
            robot_seat: robot,
            start_time: start,
        }],
        summary: GameSummary { seed, game_index, robot_seat: robot, start_time: start, ..GameSummary::default() },
        truth_faults: Vec::new(),
        turns: Vec::new(),
        consistent: true,
        flagged: false,
        pending_resync: false,
    };

    let mut turn_opened_at = None;
    while !g.truth.is_terminal() {
        if g.truth.phase == Phase::AwaitingDraw && turn_opened_at != Some(g.truth.action_count) {
            turn_opened_at = Some(g.truth.action_count);
            g.begin_turn();
        }
        let seat = g.truth.seats_to_act()[0];
        if seat == robot {
            g.robot_step()?;
        } else {
            g.human_step(seat)?;
        }
    }

    let final_report = check_consistency(&g.internal, &g.truth);
    g.records.push(Record::Consistency { sim_time: g.clock, consistent_before: g.consistent, report: final_report });
    let outcome = g.truth.outcome().expect("terminal games have an outcome");
    let mut summary = g.summary;
    summary.relative_winners = outcome.winners.iter().map(|&w| robot.distance_to(w) as usize).collect();
    summary.robot_won = outcome.winners.contains(&robot);
    summary.autonomous = !g.flagged && summary.interventions == 0;
    summary.end_time = g.clock;
    let total_turns = g.turns.len() as u64;
    let detections: Vec<LogEntry> = g
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Detection { entry } => Some(entry.clone()),
            _ => None,
        })
        .collect();
    let log = monitor::MonitorLog { entries: detections };
    summary.monitor = cfg
        .detectors
        .iter()
        .map(|d| {
            let s = monitor::score_detections(&log, &g.truth_faults, total_turns, d.task)
                .expect("at most one violation per turn");
            (d.task, s)
        })
        .collect();
    g.records.push(Record::Outcome { outcome: outcome.clone(), summary: summary.clone() });
    Ok(GameRun { transcript: Transcript { records: g.records }, outcome, summary })
}

// ---------------------------------------------------------------------------
// Campaigns

/// Per-seat win counts relative to the robot, shaped like the deployment's
/// win table. A game with several winners counts for each of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeatWinTable {
    pub robot: u64,
    pub right: u64,
    pub opposite: u64,
    pub left: u64,
    pub draw: u64,
}

pub const SEAT_WINS_HEADER: [&str; 5] = ["Robot", "Right", "Opp.", "Left", "Draw"];

impl SeatWinTable {
    pub fn counts(&self) -> [u64; 5] {
        [self.robot, self.right, self.opposite, self.left, self.draw]
    }

    pub fn from_counts(c: [u64; 5]) -> SeatWinTable {
        SeatWinTable { robot: c[0], right: c[1], opposite: c[2], left: c[3], draw: c[4] }
    }

    fn record(&mut self, relative_winners: &[usize]) {
        if relative_winners.is_empty() {
            self.draw += 1;
        }
        for &w in relative_winners {
            match w {
                0 => self.robot += 1,
                1 => self.right += 1,
                2 => self.opposite += 1,
                _ => self.left += 1,
            }
        }
    }
}

/// Grasp attempts and failures in one span of operating time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttemptBin {
    pub start: f64,
    pub end: f64,
    pub attempts: u64,
    pub failures: u64,
}

impl AttemptBin {
    pub fn failure_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.failures as f64 / self.attempts as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSummary {
    pub bin_seconds: f64,
    pub bins: Vec<AttemptBin>,
    pub onset: f64,
    pub before_onset: AttemptBin,
    pub after_onset: AttemptBin,
}

pub const HAZARD_BIN_SECONDS: f64 = 2500.0;

impl HazardSummary {
    fn from_times(times: impl Iterator<Item = (f64, bool)>, onset: f64) -> HazardSummary {
        let mut bins: Vec<AttemptBin> = Vec::new();
        let mut before = AttemptBin { start: 0.0, end: onset, ..AttemptBin::default() };
        // The open-ended span closes at the last attempt it holds.
        let mut after = AttemptBin { start: onset, end: onset, ..AttemptBin::default() };
        for (t, failed) in times {
            let b = (t / HAZARD_BIN_SECONDS).floor().max(0.0) as usize;
            while bins.len() <= b {
                let start = bins.len() as f64 * HAZARD_BIN_SECONDS;
                bins.push(AttemptBin { start, end: start + HAZARD_BIN_SECONDS, ..AttemptBin::default() });
            }
            if t >= onset {
                after.end = after.end.max(t);
            }
            for bin in [&mut bins[b], if t < onset { &mut before } else { &mut after }] {
                bin.attempts += 1;
                bin.failures += failed as u64;
            }
        }
        HazardSummary { bin_seconds: HAZARD_BIN_SECONDS, bins, onset, before_onset: before, after_onset: after }
    }
}

/// Compact per-game row of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub game_index: usize,
    pub seed: u64,
    pub robot_seat: u8,
    pub robot_won: bool,
    pub aborted: bool,
    pub autonomous: bool,
    pub primitives: u64,
    pub grasp_attempts: u64,
    pub unrecovered_primitives: u64,
    pub divergent_commits: u64,
    pub recognitions: u64,
    pub turns: u64,
}

impl From<&GameSummary> for GameRow {
    fn from(s: &GameSummary) -> GameRow {
        GameRow {
            game_index: s.game_index,
            seed: s.seed,
            robot_seat: s.robot_seat.index() as u8,
            robot_won: s.robot_won,
            aborted: s.aborted,
            autonomous: s.autonomous,
            primitives: s.primitives,
            grasp_attempts: s.grasp_attempts,
            unrecovered_primitives: s.unrecovered_primitives,
            divergent_commits: s.divergent_commits,
            recognitions: s.recognitions,
            turns: s.turns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFailure {
    pub game_index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub profile: String,
    pub games: u64,
    pub seat_wins: SeatWinTable,
    pub robot_win_rate: Option<f64>,
    pub autonomous_games: u64,
    pub autonomous_rate: Option<f64>,
    pub aborted_games: u64,
    pub primitives: u64,
    pub grasp_primitives: u64,
    pub grasp_attempts: u64,
    pub retries: u64,
    pub successful_attempts: u64,
    pub raw_success_rate: Option<f64>,
    pub committed_primitives: u64,
    pub post_recovery_success_rate: Option<f64>,
    pub unrecovered_primitives: u64,
    /// Games with at least one unrecovered primitive, and the robot's win
    /// rate in them.
    pub unrecovered_games: u64,
    pub unrecovered_game_win_rate: Option<f64>,
    pub divergent_commits: u64,
    pub precondition_violations: u64,
    pub interventions: u64,
    pub recognitions: u64,
    pub recognitions_per_game: Option<f64>,
    pub turns: u64,
    pub fault_counts: BTreeMap<String, u64>,
    pub monitor: Vec<(MonitorTask, DetectorScores)>,
    pub hazard: HazardSummary,
    pub per_game: Vec<GameRow>,
    pub failures: Vec<GameFailure>,
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl CampaignReport {
    /// Aggregates per-game summaries in the order given.
    pub fn from_summaries(profile: &str, onset: f64, summaries: &[GameSummary], failures: Vec<GameFailure>) -> CampaignReport {
        let mut seat_wins = SeatWinTable::default();
        let mut fault_counts = BTreeMap::new();
        let mut monitor: Vec<(MonitorTask, DetectorScores)> = Vec::new();
        let sum = |f: fn(&GameSummary) -> u64| summaries.iter().map(f).sum::<u64>();
        for s in summaries {
            seat_wins.record(&s.relative_winners);
            for (k, v) in &s.fault_counts {
                *fault_counts.entry(k.clone()).or_insert(0) += v;
            }
            for (task, scores) in &s.monitor {
                match monitor.iter_mut().find(|(t, _)| t == task) {
                    Some((_, acc)) => *acc = acc.combine(scores),
                    None => monitor.push((*task, *scores)),
                }
            }
        }
        let games = summaries.len() as u64;
        let robot_wins = summaries.iter().filter(|s| s.robot_won).count() as u64;
        let autonomous_games = summaries.iter().filter(|s| s.autonomous).count() as u64;
        let unrecovered: Vec<&GameSummary> = summaries.iter().filter(|s| s.unrecovered_primitives > 0).collect();
        let unrecovered_wins = unrecovered.iter().filter(|s| s.robot_won).count() as u64;
        let primitives = sum(|s| s.primitives);
        let grasp_primitives = sum(|s| s.grasp_primitives);
        let grasp_attempts = sum(|s| s.grasp_attempts);
        let successful_attempts = sum(|s| s.successful_attempts);
        let committed = sum(|s| s.first_attempt_commits + s.recovered_primitives);
        let recognitions = sum(|s| s.recognitions);
        CampaignReport {
            schema_version: SCHEMA_VERSION,
            profile: profile.to_string(),
            games,
            seat_wins,
            robot_win_rate: rate(robot_wins, games),
            autonomous_games,
            autonomous_rate: rate(autonomous_games, games),
            aborted_games: summaries.iter().filter(|s| s.aborted).count() as u64,
            primitives,
            grasp_primitives,
            grasp_attempts,
            retries: grasp_attempts - grasp_primitives,
            successful_attempts,
            raw_success_rate: rate(successful_attempts, grasp_attempts),
            committed_primitives: committed,
            post_recovery_success_rate: rate(committed, primitives),
            unrecovered_primitives: sum(|s| s.unrecovered_primitives),
            unrecovered_games: unrecovered.len() as u64,
            unrecovered_game_win_rate: rate(unrecovered_wins, unrecovered.len() as u64),
            divergent_commits: sum(|s| s.divergent_commits),
            precondition_violations: sum(|s| s.precondition_violations),
            interventions: sum(|s| s.interventions),
            recognitions,
            recognitions_per_game: rate(recognitions, games),
            turns: sum(|s| s.turns),
            fault_counts,
            monitor,
            hazard: HazardSummary::from_times(summaries.iter().flat_map(|s| s.attempt_times.iter().copied()), onset),
            per_game: summaries.iter().map(GameRow::from).collect(),
            failures,
        }
    }

    pub fn robot_wins(&self) -> u64 {
        self.per_game.iter().filter(|g| g.robot_won).count() as u64
    }
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub report: CampaignReport,
    pub summaries: Vec<GameSummary>,
    /// Present when the config keeps transcripts, in seed order.
    pub transcripts: Option<Vec<Transcript>>,
}

/// Runs every game of the config on a worker pool and aggregates the
/// results in seed order, so any parallelism yields the same report.
/// Config errors are reported before any game starts; per-game errors are
/// recorded in the report.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignResult, HarnessError> {
    cfg.validate()?;
    let seeds = cfg.game_seeds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let runs: Vec<(usize, u64, Result<GameRun, HarnessError>)> = pool.install(|| {
        seeds.par_iter().enumerate().map(|(i, &seed)| (i, seed, run_game_at(cfg, seed, i))).collect()
    });
    let mut summaries = Vec::with_capacity(runs.len());
    let mut failures = Vec::new();
    let mut transcripts = cfg.keep_transcripts.then(Vec::new);
    for (i, seed, run) in runs {
        match run {
            Ok(run) => {
                summaries.push(run.summary);
                if let Some(t) = transcripts.as_mut() {
                    t.push(run.transcript);
                }
            }
            Err(e) => failures.push(GameFailure { game_index: i, seed, error: e.to_string() }),
        }
    }
    let report = CampaignReport::from_summaries(&cfg.profile, cfg.faults.hazard.onset_t0, &summaries, failures);
    Ok(CampaignResult { report, summaries, transcripts })
}

/// Writes a campaign's report, tables, and (when kept) transcripts.
pub fn write_campaign(result: &CampaignResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = export_report(&result.report, ReportFormat::StructuredRecords, dir)?;
    written.extend(export_report(&result.report, ReportFormat::CommaSeparatedTable, dir)?);
    if let Some(ts) = &result.transcripts {
        let tdir = dir.join("transcripts");
        std::fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for (t, s) in ts.iter().zip(&result.summaries) {
            let path = tdir.join(format!("game-{:05}-seed-{}.jsonl", s.game_index, s.seed));
            std::fs::write(&path, t.to_jsonl()).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Report export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    StructuredRecords,
    CommaSeparatedTable,
}

pub const REPORT_JSON: &str = "report.json";
pub const GAMES_JSONL: &str = "games.jsonl";
pub const SEAT_WINS_CSV: &str = "seat_wins.csv";
pub const GAMES_CSV: &str = "games.csv";

pub fn render_seat_wins(report: &CampaignReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SEAT_WINS_HEADER).expect("in-memory write");
    if report.games > 0 {
        w.write_record(report.seat_wins.counts().map(|c| c.to_string())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Parses a rendered win table; `None` counts for a header-only table.
pub fn parse_seat_wins(text: &str) -> Result<Option<SeatWinTable>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SEAT_WINS_HEADER {
        return Err(HarnessError::Config(format!("unexpected win-table header {header:?}")));
    }
    match r.records().next() {
        None => Ok(None),
        Some(rec) => {
            let rec = rec?;
            let mut c = [0u64; 5];
            for (slot, field) in c.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|e| HarnessError::Config(format!("bad count {field:?}: {e}")))?;
            }
            Ok(Some(SeatWinTable::from_counts(c)))
        }
    }
}

pub fn render_games_csv(report: &CampaignReport) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "game_index",
        "seed",
        "robot_seat",
        "robot_won",
        "aborted",
        "autonomous",
        "primitives",
        "grasp_attempts",
        "unrecovered_primitives",
        "divergent_commits",
        "recognitions",
        "turns",
    ])
    .expect("in-memory write");
    for row in &report.per_game {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn parse_games_csv(text: &str) -> Result<Vec<GameRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<GameRow>, _>>()?)
}

/// Writes the report in `format` under `dir` and returns the files written.
pub fn export_report(report: &CampaignReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files: Vec<(&str, String)> = match format {
        ReportFormat::StructuredRecords => {
            let mut lines = String::new();
            for row in &report.per_game {
                lines.push_str(&serde_json::to_string(row)?);
                lines.push('\n');
            }
            vec![(REPORT_JSON, serde_json::to_string_pretty(report)? + "\n"), (GAMES_JSONL, lines)]
        }
        ReportFormat::CommaSeparatedTable => {
            vec![(SEAT_WINS_CSV, render_seat_wins(report)), (GAMES_CSV, render_games_csv(report))]
        }
    };
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<CampaignReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuilds a report from saved transcripts (their final records).
pub fn report_from_transcripts(profile: &str, onset: f64, texts: &[String]) -> Result<CampaignReport, HarnessError> {
    let mut summaries = Vec::new();
    for text in texts {
        let records = Transcript::from_jsonl(text)?;
        let summary = records.into_iter().rev().find_map(|r| match r {
            Record::Outcome { summary, .. } => Some(summary),
            _ => None,
        });
        summaries.push(summary.ok_or_else(|| HarnessError::Config("transcript has no outcome record".into()))?);
    }
    summaries.sort_by_key(|s| s.game_index);
    Ok(CampaignReport::from_summaries(profile, onset, &summaries, Vec::new()))
}

// ---------------------------------------------------------------------------
// Paired matches

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    WinA,
    WinB,
    Draw,
}

/// Outcome of two games from one deal with A and B swapping seats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMatchResult {
    pub deal_seed: u64,
    pub game_a: GameOutcome,
    pub game_b: GameOutcome,
    /// Seats of A in the two games.
    pub seats_a: [Seat; 2],
    pub seats_b: [Seat; 2],
    /// The wall each game started from.
    pub walls: [Wall; 2],
    pub a_wins: [bool; 2],
    pub b_wins: [bool; 2],
    pub verdict: Verdict,
}

pub fn verdict(a_wins: [bool; 2], b_wins: [bool; 2]) -> Verdict {
    let a = a_wins[0] && a_wins[1];
    let b = b_wins[0] && b_wins[1];
    match (a, b) {
        (true, false) => Verdict::WinA,
        (false, true) => Verdict::WinB,
        _ => Verdict::Draw,
    }
}

/// Seats of the paired-match table. A sits at the dealer seat in the first
/// game and B across; they swap for the second game. The other seats play
/// `filler`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedConfig {
    pub filler: Policy,
    pub seat_a: Seat,
    pub seat_b: Seat,
}

impl Default for PairedConfig {
    fn default() -> Self {
        PairedConfig { filler: Policy::teacher(), seat_a: Seat::ALL[0], seat_b: Seat::ALL[2] }
    }
}

/// Plays both games of a pair on the wall shuffled from `deal_seed`.
pub fn run_paired_match(a: &Policy, b: &Policy, deal_seed: u64, cfg: &PairedConfig) -> Result<PairedMatchResult, HarnessError> {
    if cfg.seat_a == cfg.seat_b {
        return Err(HarnessError::Config("paired agents need distinct seats".into()));
    }
    let wall = Wall::shuffled(deal_seed);
    let mut outcomes = Vec::with_capacity(2);
    for (g, (sa, sb)) in [(cfg.seat_a, cfg.seat_b), (cfg.seat_b, cfg.seat_a)].into_iter().enumerate() {
        let mut players: [(&Policy, bool); 4] = [(&cfg.filler, false); 4];
        players[sa.index()] = (a, false);
        players[sb.index()] = (b, false);
        let mut rng = ChaCha8Rng::seed_from_u64(deal_seed);
        rng.set_stream(g as u64 + 1);
        let played = play_game(&wall, &players, sa, &mut rng)?;
        outcomes.push(played.state.outcome().expect("played games are terminal"));
    }
    let seats_a = [cfg.seat_a, cfg.seat_b];
    let seats_b = [cfg.seat_b, cfg.seat_a];
    let a_wins = [outcomes[0].winners.contains(&seats_a[0]), outcomes[1].winners.contains(&seats_a[1])];
    let b_wins = [outcomes[0].winners.contains(&seats_b[0]), outcomes[1].winners.contains(&seats_b[1])];
    let game_b = outcomes.pop().expect("two games");
    let game_a = outcomes.pop().expect("two games");
    Ok(PairedMatchResult {
        deal_seed,
        game_a,
        game_b,
        seats_a,
        seats_b,
        walls: [wall.clone(), wall],
        a_wins,
        b_wins,
        verdict: verdict(a_wins, b_wins),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub matches: u64,
    pub win_a: u64,
    pub win_b: u64,
    pub draws: u64,
    /// Games (two per match) won by A, and A's per-game win rate.
    pub games_won_a: u64,
    pub game_win_rate_a: Option<f64>,
    pub match_win_rate_a: Option<f64>,
}

impl PairedSummary {
    pub fn from_results(results: &[PairedMatchResult]) -> PairedSummary {
        let count = |v: Verdict| results.iter().filter(|r| r.verdict == v).count() as u64;
        let matches = results.len() as u64;
        let games_won_a = results.iter().map(|r| r.a_wins.iter().filter(|&&w| w).count() as u64).sum();
        PairedSummary {
            matches,
            win_a: count(Verdict::WinA),
            win_b: count(Verdict::WinB),
            draws: count(Verdict::Draw),
            games_won_a,
            game_win_rate_a: rate(games_won_a, 2 * matches),
            match_win_rate_a: rate(count(Verdict::WinA), matches),
        }
    }
}

/// Paired matches over `deal_seeds`, in parallel, results in seed order.
pub fn run_paired_matches(a: &Policy, b: &Policy, deal_seeds: &[u64], cfg: &PairedConfig) -> Result<Vec<PairedMatchResult>, HarnessError> {
    deal_seeds.par_iter().map(|&s| run_paired_match(a, b, s, cfg)).collect()
}

// ---------------------------------------------------------------------------
// Significance

/// One-sided two-proportion z-test of `H1: p1 > p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub successes_1: u64,
    pub trials_1: u64,
    pub successes_2: u64,
    pub trials_2: u64,
    pub z: f64,
    pub p_value: f64,
}

pub fn one_sided_two_proportion(successes_1: u64, trials_1: u64, successes_2: u64, trials_2: u64) -> ProportionTest {
    use statrs::distribution::{ContinuousCDF, Normal};
    let (n1, n2) = (trials_1 as f64, trials_2 as f64);
    let (p1, p2) = (successes_1 as f64 / n1, successes_2 as f64 / n2);
    let pooled = (successes_1 + successes_2) as f64 / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let (z, p_value) = if se > 0.0 && se.is_finite() {
        let z = (p1 - p2) / se;
        (z, Normal::standard().sf(z))
    } else {
        (0.0, 1.0)
    };
    ProportionTest { successes_1, trials_1, successes_2, trials_2, z, p_value }
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

// ---------------------------------------------------------------------------
// Ablations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    RecoveryOff,
    CommitBeforeVerify,
    ForcedCharacters,
}

impl AblationKind {
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            AblationKind::RecoveryOff => c.recovery = RecoveryPolicy::disabled(),
            AblationKind::CommitBeforeVerify => c.recovery.commit_mode = CommitMode::CommitBeforeVerify,
            AblationKind::ForcedCharacters => c.missing_suit_mode = MissingSuitMode::ForcedCharacters,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub kind: AblationKind,
    pub games: u64,
    pub baseline: CampaignReport,
    pub ablated: CampaignReport,
    pub baseline_win_rate: f64,
    pub ablated_win_rate: f64,
    pub delta: f64,
    /// Baseline win rate greater than ablated.
    pub test: ProportionTest,
    pub significant: bool,
}

/// Baseline and ablated campaigns over the same `games` seeds.
pub fn run_ablation(kind: AblationKind, base: &ExperimentConfig, games: usize) -> Result<AblationReport, HarnessError> {
    if games < 2 {
        return Err(HarnessError::Config(format!("an ablation needs at least 2 games, got {games}")));
    }
    let mut baseline_cfg = base.clone();
    baseline_cfg.games = games;
    baseline_cfg.seeds = base.seeds.as_ref().map(|s| s.iter().copied().take(games).collect());
    if baseline_cfg.seeds.as_ref().is_some_and(|s| s.len() != games) {
        return Err(HarnessError::Config("fewer explicit seeds than ablation games".into()));
    }
    baseline_cfg.keep_transcripts = false;
    let ablated_cfg = kind.apply(&baseline_cfg);
    let baseline = run_campaign(&baseline_cfg)?.report;
    let ablated = run_campaign(&ablated_cfg)?.report;
    let (bw, aw) = (baseline.robot_wins(), ablated.robot_wins());
    let test = one_sided_two_proportion(bw, baseline.games, aw, ablated.games);
    let baseline_win_rate = bw as f64 / baseline.games as f64;
    let ablated_win_rate = aw as f64 / ablated.games as f64;
    Ok(AblationReport {
        kind,
        games: games as u64,
        baseline,
        ablated,
        baseline_win_rate,
        ablated_win_rate,
        delta: ablated_win_rate - baseline_win_rate,
        significant: test.p_value < SIGNIFICANCE_LEVEL,
        test,
    })
}

// ---------------------------------------------------------------------------
// Self-play improvement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayConfig {
    /// Deals (groups) collected per round.
    pub groups_per_round: usize,
    pub group_size: usize,
    /// Full-batch gradient steps per round.
    pub steps_per_round: usize,
    pub learning_rate: f64,
    /// Paired matches per evaluation.
    pub eval_matches: usize,
    /// Focal seat plays argmax actions, so groups never diverge.
    #[serde(default)]
    pub focal_greedy: bool,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig {
            groups_per_round: 64,
            group_size: 8,
            steps_per_round: 50,
            learning_rate: 0.5,
            eval_matches: 1000,
            focal_greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub groups: usize,
    pub pairs: usize,
    pub skipped: bool,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub rounds: Vec<RoundReport>,
    pub pre: PairedSummary,
    pub post: PairedSummary,
    /// Post-training per-game win rate greater than pre-training, on the
    /// same deals.
    pub test: ProportionTest,
    pub final_params: PolicyParams,
}

/// Deal seeds reserved for evaluation; disjoint from training deals.
pub fn evaluation_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed.wrapping_mul(0x9E37_79B9).wrapping_add(1 << 40).wrapping_add(i)).collect()
}

fn training_seed(seed: u64, round: usize, group: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9).wrapping_add(((round as u64) << 20) | group as u64)
}

/// Rounds of self-play preference optimization: each round plays groups of
/// games from shared deals with the current policy, mines preference pairs
/// from the trajectory tries, and takes gradient steps on the DPO loss with
/// the round's starting parameters as reference. The policy is evaluated
/// against the frozen teacher in paired matches before and after.
pub fn selfplay_round(
    policy: &PolicyParams,
    teacher: &TeacherPolicy,
    rounds: usize,
    loss: &LossConfig,
    sp: &SelfPlayConfig,
    seed: u64,
) -> Result<ImprovementReport, HarnessError> {
    if rounds < 1 {
        return Err(HarnessError::Config("selfplay needs at least one round".into()));
    }
    if sp.group_size < 2 {
        return Err(HarnessError::Config("groups need at least two games".into()));
    }
    policy.validate()?;
    let teacher_policy = Policy::Teacher(teacher.clone());
    let paired = PairedConfig { filler: teacher_policy.clone(), ..PairedConfig::default() };
    let eval = evaluation_seeds(seed, sp.eval_matches);
    let pre_results = run_paired_matches(&Policy::Toy(policy.clone()), &teacher_policy, &eval, &paired)?;

    let mut params = policy.clone();
    let mut reports = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let current = Policy::Toy(params.clone());
        let groups = (0..sp.groups_per_round)
            .into_par_iter()
            .map(|g| {
                let s = training_seed(seed, round, g);
                let group = play_group_with(&current, sp.group_size, s, sp.focal_greedy)?;
                let trie = build_trie(&group);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                rng.set_stream(u64::MAX);
                extract_preference_pairs(&trie, &group, &mut rng).iter().map(prepare_pair).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<Vec<PreparedPair>>, PolicyError>>()?;
        let pairs: Vec<PreparedPair> = groups.into_iter().flatten().collect();
        if pairs.is_empty() || sp.steps_per_round == 0 {
            reports.push(RoundReport {
                round,
                groups: sp.groups_per_round,
                pairs: pairs.len(),
                skipped: true,
                loss_before: None,
                loss_after: None,
                theta: params.theta.clone(),
            });
            continue;
        }
        let reference = params.clone();
        let mut loss_before = None;
        for _ in 0..sp.steps_per_round {
            let (l, g) = dpo_batch(&params, &reference, &pairs, loss.dpo_beta)?;
            loss_before.get_or_insert(l);
            for (t, gk) in params.theta.iter_mut().zip(&g) {
                *t -= sp.learning_rate * gk;
            }
        }
        let loss_after = dpo_batch(&params, &reference, &pairs, loss.dpo_beta)?.0;
        reports.push(RoundReport {
            round,
            groups: sp.groups_per_round,
            pairs: pairs.len(),
            skipped: false,
            loss_before,
            loss_after: Some(loss_after),
            theta: params.theta.clone(),
        });
    }

    let post_results = run_paired_matches(&Policy::Toy(params.clone()), &teacher_policy, &eval, &paired)?;
    let pre = PairedSummary::from_results(&pre_results);
    let post = PairedSummary::from_results(&post_results);
    let games = 2 * pre.matches;
    let test = one_sided_two_proportion(post.games_won_a, games, pre.games_won_a, games);
    Ok(ImprovementReport { rounds: reports, pre, post, test, final_params: params })
}
