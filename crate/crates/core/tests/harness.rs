use std::process::Command;

use mahjong_lab::fault::FaultConfig;
use mahjong_lab::game::{Seat, TerminalCause, Wall};
use mahjong_lab::harness::{
    export_report, load_report, one_sided_two_proportion, parse_games_csv, parse_seat_wins, render_seat_wins,
    report_from_transcripts, run_ablation, run_campaign, run_game, run_paired_match, run_paired_matches,
    selfplay_round, verdict, write_campaign, AblationKind, CampaignReport, ExperimentConfig, HarnessError,
    PairedConfig, PairedSummary, Record, ReportFormat, SeatAssignment, SelfPlayConfig, Transcript, Verdict,
    DEPLOYMENT_PROFILE, GAMES_CSV, OUTPUT_DIR_ENV, REPORT_JSON, SEAT_WINS_CSV, SEAT_WINS_HEADER,
};
use mahjong_lab::policy::{Policy, PolicyParams, TeacherPolicy};
use mahjong_lab::selfplay::LossConfig;
use mahjong_lab::state_machine::{CommitMode, PrimitiveOutcome};

fn deployment(games: usize) -> ExperimentConfig {
    ExperimentConfig { games, parallelism: 1, ..ExperimentConfig::deployment() }
}

fn uniform_seats() -> [SeatAssignment; 4] {
    std::array::from_fn(|_| SeatAssignment { policy: Policy::Uniform, greedy: false })
}

fn small_selfplay() -> SelfPlayConfig {
    SelfPlayConfig { groups_per_round: 4, group_size: 4, steps_per_round: 5, learning_rate: 0.5, eval_matches: 10, focal_greedy: false }
}

#[test]
fn fault_free_random_games_all_complete_autonomously() {
    let cfg = ExperimentConfig { games: 100, seats: uniform_seats(), parallelism: 1, ..ExperimentConfig::fault_free() };
    let r = run_campaign(&cfg).unwrap().report;
    assert_eq!(r.games, 100);
    assert!(r.failures.is_empty());
    assert_eq!(r.autonomous_games, 100);
    assert_eq!(r.autonomous_rate, Some(1.0));
    assert_eq!(r.aborted_games, 0);
    assert_eq!(r.unrecovered_primitives, 0);
    assert_eq!(r.divergent_commits, 0);
    assert_eq!(r.raw_success_rate, Some(1.0));
}

#[test]
fn same_config_and_seed_give_byte_identical_transcripts() {
    let cfg = deployment(1);
    let (a, oa) = run_game(&cfg, 42).unwrap();
    let (b, ob) = run_game(&cfg, 42).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_eq!(oa, ob);
    assert!(matches!(a.records.first(), Some(Record::Header { seed: 42, .. })));
    assert!(matches!(a.records.last(), Some(Record::Outcome { .. })));
    let (c, _) = run_game(&cfg, 43).unwrap();
    assert_ne!(a.to_jsonl(), c.to_jsonl());
}

#[test]
fn transcripts_round_trip_through_their_text_form() {
    let (t, _) = run_game(&deployment(1), 7).unwrap();
    let text = t.to_jsonl();
    assert_eq!(text.lines().count(), t.records.len());
    assert_eq!(Transcript::from_jsonl(&text).unwrap(), t.records);
}

#[test]
fn campaigns_are_identical_at_any_parallelism() {
    let mut cfg = deployment(24);
    cfg.keep_transcripts = true;
    let serial = run_campaign(&cfg).unwrap();
    cfg.parallelism = 4;
    let parallel = run_campaign(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&serial.report).unwrap(), serde_json::to_string(&parallel.report).unwrap());
    let texts = |r: &mahjong_lab::harness::CampaignResult| {
        r.transcripts.as_ref().unwrap().iter().map(Transcript::to_jsonl).collect::<Vec<_>>()
    };
    assert_eq!(texts(&serial), texts(&parallel));
}

#[test]
fn accounting_closes_against_transcripts() {
    let mut cfg = deployment(30);
    cfg.faults.execution_base_failure = 0.1;
    cfg.keep_transcripts = true;
    let result = run_campaign(&cfg).unwrap();
    let r = &result.report;
    assert_eq!(r.grasp_attempts, r.grasp_primitives + r.retries);
    assert_eq!(r.primitives, r.per_game.iter().map(|g| g.primitives).sum::<u64>());
    assert_eq!(r.committed_primitives + r.unrecovered_primitives, r.primitives);
    assert!(r.retries > 0);

    let (mut prims, mut grasps, mut attempts, mut ok_attempts, mut unrecovered) = (0, 0, 0, 0, 0);
    for t in result.transcripts.as_ref().unwrap() {
        for rec in &t.records {
            if let Record::Primitive { spec, outcome, attempts: a, .. } = rec {
                prims += 1;
                unrecovered += (*outcome == PrimitiveOutcome::Unrecovered) as u64;
                if spec.needs_grasp() {
                    grasps += 1;
                    attempts += a.len() as u64;
                    ok_attempts += a.iter().filter(|x| x.executed_ok).count() as u64;
                }
            }
        }
    }
    assert_eq!(prims, r.primitives);
    assert_eq!(grasps, r.grasp_primitives);
    assert_eq!(attempts, r.grasp_attempts);
    assert_eq!(ok_attempts, r.successful_attempts);
    assert_eq!(unrecovered, r.unrecovered_primitives);
    assert_eq!(r.hazard.before_onset.attempts + r.hazard.after_onset.attempts, r.grasp_attempts);
}

#[test]
fn guarded_commits_never_diverge_under_a_perfect_sensor() {
    let mut cfg = ExperimentConfig { games: 60, parallelism: 1, ..ExperimentConfig::fault_free() };
    cfg.faults = FaultConfig { execution_base_failure: 0.05, relocalize_success: 0.9, ..FaultConfig::none() };
    let r = run_campaign(&cfg).unwrap().report;
    assert!(r.retries > 0);
    assert_eq!(r.divergent_commits, 0);
    let cbv = run_campaign(&AblationKind::CommitBeforeVerify.apply(&cfg)).unwrap().report;
    assert!(cbv.divergent_commits > 0);
    assert_eq!(AblationKind::CommitBeforeVerify.apply(&cfg).recovery.commit_mode, CommitMode::CommitBeforeVerify);
}

#[test]
fn robot_seat_rotates_and_the_win_table_covers_every_game() {
    let r = run_campaign(&deployment(12)).unwrap().report;
    for (i, g) in r.per_game.iter().enumerate() {
        assert_eq!(g.robot_seat as usize, i % 4);
        assert_eq!(g.game_index, i);
    }
    let t = r.seat_wins;
    assert!(t.robot + t.right + t.opposite + t.left + t.draw >= r.games);
    assert_eq!(t.robot, r.robot_wins());
}

#[test]
fn paired_games_share_the_wall_and_swap_seats() {
    let a = Policy::Toy(PolicyParams::initial());
    let b = Policy::teacher();
    for seed in 0..20 {
        let m = run_paired_match(&a, &b, seed, &PairedConfig::default()).unwrap();
        assert_eq!(m.walls[0], m.walls[1]);
        assert_eq!(m.walls[0], Wall::shuffled(seed));
        assert_eq!(m.seats_a, [m.seats_b[1], m.seats_b[0]]);
        assert_eq!(m.verdict, verdict(m.a_wins, m.b_wins));
        for (g, o) in [&m.game_a, &m.game_b].into_iter().enumerate() {
            assert_eq!(m.a_wins[g], o.winners.contains(&m.seats_a[g]));
            assert_ne!(o.terminal_cause, TerminalCause::Aborted);
        }
    }
    assert!(run_paired_match(&a, &b, 1, &PairedConfig { seat_b: Seat::ALL[0], ..PairedConfig::default() }).is_err());
}

#[test]
fn verdicts_need_both_games() {
    assert_eq!(verdict([true, true], [false, false]), Verdict::WinA);
    assert_eq!(verdict([true, false], [false, false]), Verdict::Draw);
    assert_eq!(verdict([false, false], [true, true]), Verdict::WinB);
    assert_eq!(verdict([true, false], [false, true]), Verdict::Draw);
    assert_eq!(verdict([false, false], [false, false]), Verdict::Draw);
}

#[test]
fn paired_summaries_count_games_and_verdicts() {
    let results = run_paired_matches(&Policy::Uniform, &Policy::teacher(), &[1, 2, 3, 4, 5, 6], &PairedConfig::default()).unwrap();
    let s = PairedSummary::from_results(&results);
    assert_eq!(s.matches, 6);
    assert_eq!(s.win_a + s.win_b + s.draws, 6);
    assert_eq!(s.games_won_a, results.iter().map(|r| r.a_wins.iter().filter(|w| **w).count() as u64).sum::<u64>());
    let again = run_paired_matches(&Policy::Uniform, &Policy::teacher(), &[1, 2, 3, 4, 5, 6], &PairedConfig::default()).unwrap();
    assert_eq!(results, again);
}

#[test]
fn exports_round_trip_and_are_byte_identical() {
    let report = run_campaign(&deployment(10)).unwrap().report;
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("one"), dir.path().join("two"));
    for d in [&d1, &d2] {
        export_report(&report, ReportFormat::StructuredRecords, d).unwrap();
        export_report(&report, ReportFormat::CommaSeparatedTable, d).unwrap();
    }
    for name in [REPORT_JSON, SEAT_WINS_CSV, GAMES_CSV] {
        assert_eq!(std::fs::read(d1.join(name)).unwrap(), std::fs::read(d2.join(name)).unwrap(), "{name}");
    }
    let table = std::fs::read_to_string(d1.join(SEAT_WINS_CSV)).unwrap();
    assert!(table.starts_with(&SEAT_WINS_HEADER.join(",")));
    assert_eq!(parse_seat_wins(&table).unwrap(), Some(report.seat_wins));
    assert_eq!(parse_games_csv(&std::fs::read_to_string(d1.join(GAMES_CSV)).unwrap()).unwrap(), report.per_game);
    assert_eq!(load_report(&d1.join(REPORT_JSON)).unwrap(), report);
}

#[test]
fn an_empty_campaign_exports_headers_only() {
    let report = run_campaign(&ExperimentConfig { games: 0, ..deployment(0) }).unwrap().report;
    assert_eq!(report.games, 0);
    assert_eq!(report.robot_win_rate, None);
    let table = render_seat_wins(&report);
    assert_eq!(table.lines().count(), 1);
    assert_eq!(parse_seat_wins(&table).unwrap(), None);
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, ReportFormat::CommaSeparatedTable, dir.path()).unwrap();
    let games = std::fs::read_to_string(dir.path().join(GAMES_CSV)).unwrap();
    assert_eq!(games.lines().count(), 1);
    assert!(parse_games_csv(&games).unwrap().is_empty());
}

#[test]
fn unwritable_export_paths_are_reported() {
    let report = run_campaign(&deployment(0)).unwrap().report;
    let file = tempfile::NamedTempFile::new().unwrap();
    let err = export_report(&report, ReportFormat::StructuredRecords, &file.path().join("sub")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }));
}

#[test]
fn reports_rebuild_from_written_transcripts() {
    let mut cfg = deployment(8);
    cfg.keep_transcripts = true;
    let result = run_campaign(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_campaign(&result, dir.path()).unwrap();
    let mut texts: Vec<String> = written
        .iter()
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && p.parent().unwrap().ends_with("transcripts"))
        .map(|p| std::fs::read_to_string(p).unwrap())
        .collect();
    assert_eq!(texts.len(), 8);
    texts.reverse();
    let rebuilt = report_from_transcripts(&cfg.profile, cfg.faults.hazard.onset_t0, &texts).unwrap();
    assert_eq!(rebuilt, result.report);
}

#[test]
fn toml_configs_override_their_profile() {
    let cfg = ExperimentConfig::from_toml_str("games = 7\nbase_seed = 100\n[faults]\nexecution_base_failure = 0.02\n").unwrap();
    assert_eq!(cfg.profile, DEPLOYMENT_PROFILE);
    assert_eq!(cfg.games, 7);
    assert_eq!(cfg.game_seeds(), (100..107).collect::<Vec<_>>());
    assert_eq!(cfg.faults.execution_base_failure, 0.02);
    assert_eq!(cfg.faults.hazard, ExperimentConfig::deployment().faults.hazard);

    let ff = ExperimentConfig::from_toml_str("profile = \"fault-free\"\ngames = 3\n").unwrap();
    assert_eq!(ff.faults, FaultConfig::none());
    assert_eq!(ff.games, 3);

    let printed = ExperimentConfig::deployment().to_toml_string();
    assert_eq!(ExperimentConfig::from_toml_str(&printed).unwrap(), ExperimentConfig::deployment());
}

#[test]
fn invalid_configs_fail_before_any_game() {
    let dup = "games = 3\nseeds = [1, 2, 2]\n";
    assert!(matches!(ExperimentConfig::from_toml_str(dup), Err(HarnessError::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml_str("games = 2\nseeds = [1]\n"), Err(HarnessError::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml_str("profile = \"nope\"\n"), Err(HarnessError::UnknownProfile(_))));
    assert!(matches!(ExperimentConfig::from_toml_str("games = \"many\"\n"), Err(HarnessError::Toml(_))));
    let mut cfg = deployment(3);
    cfg.faults.execution_base_failure = 1.5;
    assert!(matches!(run_campaign(&cfg), Err(HarnessError::Config(_))));
    assert!(run_game(&cfg, 1).is_err());
    let mut cfg = deployment(3);
    cfg.seats[1] = SeatAssignment { policy: Policy::Toy(PolicyParams { theta: vec![0.0; 2], temperature: 1.0 }), greedy: false };
    assert!(run_campaign(&cfg).is_err());
}

#[test]
fn recovery_off_without_faults_changes_nothing() {
    let cfg = ExperimentConfig { parallelism: 1, ..ExperimentConfig::fault_free() };
    let r = run_ablation(AblationKind::RecoveryOff, &cfg, 200).unwrap();
    assert_eq!(r.baseline.robot_wins(), r.ablated.robot_wins());
    assert_eq!(r.delta, 0.0);
    assert!(!r.significant);
    assert!(run_ablation(AblationKind::RecoveryOff, &cfg, 1).is_err());
}

#[test]
fn proportion_test_direction_and_degenerate_cases() {
    let t = one_sided_two_proportion(60, 100, 40, 100);
    assert!(t.z > 0.0 && t.p_value < 0.01);
    let t = one_sided_two_proportion(40, 100, 60, 100);
    assert!(t.p_value > 0.99);
    let t = one_sided_two_proportion(0, 50, 0, 50);
    assert_eq!((t.z, t.p_value), (0.0, 1.0));
}

#[test]
fn selfplay_without_steps_leaves_parameters_unchanged() {
    let sp = SelfPlayConfig { steps_per_round: 0, ..small_selfplay() };
    let start = PolicyParams::initial();
    let r = selfplay_round(&start, &TeacherPolicy::default(), 2, &LossConfig::default(), &sp, 3).unwrap();
    assert_eq!(r.final_params, start);
    assert!(r.rounds.iter().all(|x| x.skipped));
    assert_eq!(r.pre, r.post);
}

#[test]
fn selfplay_with_a_greedy_focal_seat_mines_nothing() {
    let sp = SelfPlayConfig { focal_greedy: true, ..small_selfplay() };
    let start = PolicyParams::initial();
    let r = selfplay_round(&start, &TeacherPolicy::default(), 2, &LossConfig::default(), &sp, 4).unwrap();
    assert!(r.rounds.iter().all(|x| x.pairs == 0 && x.skipped));
    assert_eq!(r.final_params, start);
}

#[test]
fn selfplay_rounds_reduce_their_own_loss() {
    let sp = SelfPlayConfig { groups_per_round: 8, ..small_selfplay() };
    let r = selfplay_round(&PolicyParams::initial(), &TeacherPolicy::default(), 2, &LossConfig::default(), &sp, 5).unwrap();
    assert_eq!(r.rounds.len(), 2);
    for round in r.rounds.iter().filter(|x| !x.skipped) {
        assert!((round.loss_before.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(round.loss_after.unwrap() < round.loss_before.unwrap());
    }
    assert!(selfplay_round(&PolicyParams::initial(), &TeacherPolicy::default(), 0, &LossConfig::default(), &sp, 5).is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mahjong-lab"))
}

#[test]
fn cli_prints_a_config_it_can_read_back() {
    let out = cli().arg("--print-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), ExperimentConfig::deployment());
}

#[test]
fn cli_output_directory_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["simulate", "--games", "3", "--parallelism", "1", "--transcripts"])
        .env(OUTPUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: CampaignReport = load_report(&dir.path().join(REPORT_JSON)).unwrap();
    assert_eq!(report.games, 3);
    assert_eq!(std::fs::read_dir(dir.path().join("transcripts")).unwrap().count(), 3);

    let rendered = cli().args(["report"]).arg(dir.path().join("transcripts")).env_remove(OUTPUT_DIR_ENV).output().unwrap();
    assert!(rendered.status.success());
    assert_eq!(String::from_utf8(rendered.stdout).unwrap(), render_seat_wins(&report));
}

#[test]
fn cli_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "games = 2\nseeds = [5, 5]\n").unwrap();
    let out = cli().arg("--config").arg(&path).args(["simulate"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unique"));
}
