use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mahjong_lab::harness::{
    self, evaluation_seeds, run_ablation, run_campaign, run_paired_matches, selfplay_round, write_campaign,
    AblationKind, ExperimentConfig, PairedConfig, PairedSummary, ReportFormat, SelfPlayConfig,
};
use mahjong_lab::policy::{Policy, PolicyParams, TeacherPolicy};
use mahjong_lab::selfplay::LossConfig;

#[derive(Parser)]
#[command(name = "mahjong-lab", version, about = "Seeded missing-suit Mahjong robot-play simulations")]
struct Cli {
    /// Experiment config (TOML). Keys override the named `profile`.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Output directory (overrides the config; MJLAB_OUTPUT_DIR overrides both).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and print its report.
    Simulate {
        #[arg(long)]
        games: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Write per-game transcripts to the output directory.
        #[arg(long)]
        transcripts: bool,
    },
    /// Paired matches with role reversal between two policies.
    Paired {
        /// Policy A: teacher, uniform, or a JSON file of toy parameters.
        #[arg(long, default_value = "toy")]
        a: String,
        #[arg(long, default_value = "teacher")]
        b: String,
        #[arg(long, default_value_t = 200)]
        matches: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Baseline-versus-ablation campaigns on shared seeds.
    Ablate {
        #[arg(long, value_enum)]
        kind: AblationKind,
        #[arg(long, default_value_t = 2000)]
        games: usize,
    },
    /// Self-play preference optimization of the toy policy.
    Selfplay {
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        eval_matches: Option<usize>,
        #[arg(long)]
        groups_per_round: Option<usize>,
    },
    /// Finite-difference verification of the SFT, GRPO, and DPO gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Re-render a report from saved transcripts or a saved report.json.
    Report {
        /// A transcripts directory or a report.json file.
        input: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::deployment(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn parse_policy(spec: &str) -> Result<Policy> {
    Ok(match spec {
        "teacher" => Policy::teacher(),
        "uniform" => Policy::Uniform,
        "toy" => Policy::Toy(PolicyParams::initial()),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading policy {path}"))?;
            let params: PolicyParams = serde_json::from_str(&text).with_context(|| format!("parsing policy {path}"))?;
            params.validate()?;
            Policy::Toy(params)
        }
    })
}

fn write_json(dir: Option<&Path>, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let out = cfg.resolved_output_dir();
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    match command {
        Command::Simulate { games, seed, parallelism, transcripts } => {
            if let Some(g) = games {
                cfg.games = g;
                cfg.seeds = None;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            cfg.keep_transcripts = transcripts && out.is_some();
            let result = run_campaign(&cfg)?;
            match &out {
                Some(dir) => {
                    for p in write_campaign(&result, dir)? {
                        eprintln!("wrote {}", p.display());
                    }
                }
                None => print!("{}", serde_json::to_string_pretty(&result.report)? + "\n"),
            }
            let r = &result.report;
            eprintln!("{}", harness::render_seat_wins(r).trim_end());
            eprintln!(
                "games {}  autonomous {:.3}  primitives {}  raw success {:.4}  post-recovery {:.4}",
                r.games,
                r.autonomous_rate.unwrap_or(f64::NAN),
                r.primitives,
                r.raw_success_rate.unwrap_or(f64::NAN),
                r.post_recovery_success_rate.unwrap_or(f64::NAN),
            );
        }
        Command::Paired { a, b, matches, seed } => {
            let (pa, pb) = (parse_policy(&a)?, parse_policy(&b)?);
            let results = run_paired_matches(&pa, &pb, &evaluation_seeds(seed, matches), &PairedConfig::default())?;
            let summary = PairedSummary::from_results(&results);
            write_json(out.as_deref(), "paired.json", &summary)?;
        }
        Command::Ablate { kind, games } => {
            let report = run_ablation(kind, &cfg, games)?;
            eprintln!(
                "{:?}: baseline {:.4} vs ablated {:.4}  z = {:.3}  p = {:.3e}",
                kind, report.baseline_win_rate, report.ablated_win_rate, report.test.z, report.test.p_value
            );
            write_json(out.as_deref(), "ablation.json", &report)?;
        }
        Command::Selfplay { rounds, seed, eval_matches, groups_per_round } => {
            let mut sp = SelfPlayConfig::default();
            if let Some(n) = eval_matches {
                sp.eval_matches = n;
            }
            if let Some(n) = groups_per_round {
                sp.groups_per_round = n;
            }
            let report =
                selfplay_round(&PolicyParams::initial(), &TeacherPolicy::default(), rounds, &LossConfig::default(), &sp, seed)?;
            eprintln!(
                "game win rate vs teacher: {:.4} -> {:.4}  p = {:.3e}",
                report.pre.game_win_rate_a.unwrap_or(f64::NAN),
                report.post.game_win_rate_a.unwrap_or(f64::NAN),
                report.test.p_value
            );
            write_json(out.as_deref(), "selfplay.json", &report)?;
        }
        Command::Gradcheck { instances, seed } => {
            let results = mahjong_lab::selfplay::gradcheck_suite(instances, seed)?;
            let mut failed = false;
            for r in &results {
                println!("{:<5} instances {:>4}  max relative error {:.3e}  {}", r.loss, r.instances, r.max_relative_error, if r.passed { "ok" } else { "FAIL" });
                failed |= !r.passed;
            }
            if failed {
                bail!("gradient check failed");
            }
        }
        Command::Report { input } => {
            let report = if input.is_dir() {
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&input)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                paths.sort();
                let texts = paths.iter().map(std::fs::read_to_string).collect::<std::io::Result<Vec<_>>>()?;
                harness::report_from_transcripts(&cfg.profile, cfg.faults.hazard.onset_t0, &texts)?
            } else {
                harness::load_report(&input)?
            };
            match &out {
                Some(dir) => {
                    harness::export_report(&report, ReportFormat::StructuredRecords, dir)?;
                    harness::export_report(&report, ReportFormat::CommaSeparatedTable, dir)?;
                    eprintln!("wrote report to {}", dir.display());
                }
                None => print!("{}", harness::render_seat_wins(&report)),
            }
        }
    }
    Ok(())
}
