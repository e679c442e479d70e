//! Interaction-level violation detectors. Detections are logged and surfaced
//! as alerts; they never block or alter play.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{FaultEvent, FaultKind};
use crate::game::Seat;

/// Deployment detector figures the default specs are calibrated to.
pub mod provenance {
    pub const TURN_PRECISION: f64 = 0.872;
    pub const TURN_RECALL: f64 = 0.867;
    pub const INSPECTION_PRECISION: f64 = 0.724;
    pub const INSPECTION_RECALL: f64 = 0.945;
    /// Calibration base rate of violating turns.
    pub const TURN_BASE_RATE: f64 = 0.01;
    pub const INSPECTION_BASE_RATE: f64 = 0.005;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorTask {
    TurnViolation,
    Inspection,
}

impl MonitorTask {
    pub fn fault_kind(self) -> FaultKind {
        match self {
            MonitorTask::TurnViolation => FaultKind::OutOfTurn,
            MonitorTask::Inspection => FaultKind::Inspection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub task: MonitorTask,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    /// Chance a detection names the wrong actor.
    pub identity_error_rate: f64,
}

impl DetectorSpec {
    pub fn perfect(task: MonitorTask) -> DetectorSpec {
        DetectorSpec { task, true_positive_rate: 1.0, false_positive_rate: 0.0, identity_error_rate: 0.0 }
    }

    /// Rates that reproduce `precision` and `recall` when a fraction
    /// `base_rate` of turns are violations:
    /// `TPR = R`, `FPR = R·π·(1 − P) / (P·(1 − π))`.
    pub fn calibrated(task: MonitorTask, precision: f64, recall: f64, base_rate: f64) -> DetectorSpec {
        let fpr = recall * base_rate * (1.0 - precision) / (precision * (1.0 - base_rate));
        DetectorSpec { task, true_positive_rate: recall, false_positive_rate: fpr, identity_error_rate: 0.0 }
    }

    pub fn turn_violation_default() -> DetectorSpec {
        DetectorSpec::calibrated(
            MonitorTask::TurnViolation,
            provenance::TURN_PRECISION,
            provenance::TURN_RECALL,
            provenance::TURN_BASE_RATE,
        )
    }

    pub fn inspection_default() -> DetectorSpec {
        DetectorSpec::calibrated(
            MonitorTask::Inspection,
            provenance::INSPECTION_PRECISION,
            provenance::INSPECTION_RECALL,
            provenance::INSPECTION_BASE_RATE,
        )
    }

    /// Precision and recall implied at a given base rate.
    pub fn implied_precision_recall(&self, base_rate: f64) -> (f64, f64) {
        let tp = self.true_positive_rate * base_rate;
        let fp = self.false_positive_rate * (1.0 - base_rate);
        (tp / (tp + fp), self.true_positive_rate)
    }
}

/// What the monitor sees of one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnContext {
    pub turn_index: u32,
    pub sim_time: f64,
    pub current_seat: Seat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Detection,
    /// Surfaced to the players; play continues.
    Alert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub task: MonitorTask,
    pub predicted_actor: Seat,
    pub sim_time: f64,
    pub turn_index: u32,
    pub linked: bool,
    pub linked_truth: Option<FaultEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub record: RecordKind,
    #[serde(flatten)]
    pub event: DetectionEvent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorLog {
    pub entries: Vec<LogEntry>,
}

impl MonitorLog {
    pub fn detections(&self) -> impl Iterator<Item = &DetectionEvent> {
        self.entries.iter().filter(|e| e.record == RecordKind::Detection).map(|e| &e.event)
    }

    /// Appends another log, keeping entries ordered by time.
    pub fn extend(&mut self, other: MonitorLog) {
        self.entries.extend(other.entries);
        self.entries.sort_by(|a, b| a.event.sim_time.total_cmp(&b.event.sim_time));
    }

    fn push_detection(&mut self, event: DetectionEvent) {
        self.entries.push(LogEntry { record: RecordKind::Detection, event: event.clone() });
        self.entries.push(LogEntry { record: RecordKind::Alert, event: DetectionEvent { linked_truth: None, ..event } });
    }
}

fn other_seat<R: Rng + ?Sized>(not: Seat, rng: &mut R) -> Seat {
    let others: Vec<Seat> = not.others().collect();
    others[rng.random_range(0..others.len())]
}

/// Runs one detector over a turn stream. Each violation of the detector's
/// task is caught with probability TPR (naming the wrong actor with
/// probability `identity_error_rate`); each clean turn raises a false alarm
/// with probability FPR.
pub fn observe<R: Rng + ?Sized>(
    truth_events: &[FaultEvent],
    turns: &[TurnContext],
    spec: &DetectorSpec,
    rng: &mut R,
) -> MonitorLog {
    let kind = spec.task.fault_kind();
    let mut relevant = truth_events.iter().filter(|e| e.kind == kind).peekable();
    let mut log = MonitorLog::default();
    for turn in turns {
        while relevant.peek().is_some_and(|e| e.turn_index < turn.turn_index) {
            relevant.next();
        }
        let event = relevant.next_if(|e| e.turn_index == turn.turn_index);
        match event {
            Some(ev) => {
                if rng.random::<f64>() < spec.true_positive_rate {
                    let actor = ev.actor().unwrap_or(turn.current_seat);
                    let predicted_actor = if spec.identity_error_rate > 0.0 && rng.random::<f64>() < spec.identity_error_rate {
                        other_seat(actor, rng)
                    } else {
                        actor
                    };
                    log.push_detection(DetectionEvent {
                        task: spec.task,
                        predicted_actor,
                        sim_time: ev.sim_time,
                        turn_index: turn.turn_index,
                        linked: true,
                        linked_truth: Some(ev.clone()),
                    });
                }
                // Further events of the same turn (not produced by the
                // samplers) count towards the same turn-level positive.
                while relevant.next_if(|e| e.turn_index == turn.turn_index).is_some() {}
            }
            None => {
                if rng.random::<f64>() < spec.false_positive_rate {
                    log.push_detection(DetectionEvent {
                        task: spec.task,
                        predicted_actor: other_seat(turn.current_seat, rng),
                        sim_time: turn.sim_time,
                        turn_index: turn.turn_index,
                        linked: false,
                        linked_truth: None,
                    });
                }
            }
        }
    }
    log
}

/// Turn-level confusion counts and derived ratios. A ratio whose denominator
/// is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorScores {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub negative_predictive_value: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl DetectorScores {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> DetectorScores {
        DetectorScores {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            negative_predictive_value: ratio(tn, tn + fn_),
        }
    }

    /// Pools the confusion counts of two streams.
    pub fn combine(&self, other: &DetectorScores) -> DetectorScores {
        DetectorScores::from_counts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.true_negatives + other.true_negatives,
            self.false_negatives + other.false_negatives,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("{events} violating turns exceed the {total} turns scored")]
    TooFewTurns { events: u64, total: u64 },
}

/// Confusion-matrix statistics for `task` over `total_turns` turns.
pub fn score_detections(
    log: &MonitorLog,
    truth_events: &[FaultEvent],
    total_turns: u64,
    task: MonitorTask,
) -> Result<DetectorScores, ScoreError> {
    use std::collections::BTreeSet;
    let actual: BTreeSet<u32> =
        truth_events.iter().filter(|e| e.kind == task.fault_kind()).map(|e| e.turn_index).collect();
    let predicted: BTreeSet<u32> = log.detections().filter(|d| d.task == task).map(|d| d.turn_index).collect();
    let tp = actual.intersection(&predicted).count() as u64;
    let fp = predicted.difference(&actual).count() as u64;
    let fn_ = actual.difference(&predicted).count() as u64;
    let flagged = tp + fp + fn_;
    if flagged > total_turns {
        return Err(ScoreError::TooFewTurns { events: flagged, total: total_turns });
    }
    Ok(DetectorScores::from_counts(tp, fp, total_turns - flagged, fn_))
}

/// One JSON record per line, in log order.
pub fn export_log(log: &MonitorLog) -> String {
    let mut out = String::new();
    for e in &log.entries {
        out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<MonitorLog, serde_json::Error> {
    let entries = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<LogEntry>, _>>()?;
    Ok(MonitorLog { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_reproduces_precision() {
        let spec = DetectorSpec::turn_violation_default();
        let (p, r) = spec.implied_precision_recall(provenance::TURN_BASE_RATE);
        assert!((p - 0.872).abs() < 1e-12);
        assert!((r - 0.867).abs() < 1e-12);
    }

    #[test]
    fn empty_log_exports_nothing() {
        assert_eq!(export_log(&MonitorLog::default()), "");
        assert_eq!(parse_log("").unwrap(), MonitorLog::default());
    }

    #[test]
    fn undefined_ratios_are_none() {
        let s = score_detections(&MonitorLog::default(), &[], 10, MonitorTask::Inspection).unwrap();
        assert_eq!(s.precision, None);
        assert_eq!(s.recall, None);
        assert_eq!(s.specificity, Some(1.0));
    }
}
