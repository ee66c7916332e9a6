//! `ludus` command line: generate dynamic test suites for `.game` programs,
//! run random baselines, replay suites, generate and judge mutants, and
//! emit statistics and reports.
//!
//! Exit codes: 0 success, 2 validation failure, 3 budget exhausted with a
//! partial result.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ludus_core::episode::GameContext;
use ludus_core::harness::{
    cmd_generate, cmd_mutation_analysis, cmd_random_baseline, cmd_run_suite, compare_coverage,
    comparisons_to_csv, coverage_rows_to_csv, mutation_report_to_csv, CoverageRow,
    DynamicTestSuite, RunConfig, SuiteKind,
};
use ludus_core::oracle::collect_ground_truth;
use ludus_core::rng::Pcg32;
use ludus_core::spec::{parse_game_unchecked, serialize_game, validate_spec, GameSpec};

#[derive(Parser)]
#[command(name = "ludus", version, about = "Evolves networks that play and test mini games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Population size.
    #[arg(long)]
    population: Option<usize>,
    /// Generation cap.
    #[arg(long)]
    generations: Option<u32>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    wall_seconds: Option<f64>,
    /// Desired robustness count r_d.
    #[arg(long)]
    robustness: Option<u32>,
    /// Steps per episode (30 steps = 1 second).
    #[arg(long)]
    max_steps: Option<u64>,
    /// Generations without improvement before the target switches.
    #[arg(long)]
    stagnation: Option<u32>,
    /// Species count the threshold adapts toward.
    #[arg(long)]
    target_species: Option<usize>,
    /// Surprise threshold for mutant verdicts.
    #[arg(long)]
    threshold: Option<f64>,
    /// Ground-truth recording repetitions.
    #[arg(long)]
    repetitions: Option<u32>,
    /// Mutant cap per operator.
    #[arg(long)]
    cap: Option<usize>,
}

#[derive(serde::Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    population: Option<usize>,
    generations: Option<u32>,
    wall_seconds: Option<f64>,
    robustness: Option<u32>,
    max_steps: Option<u64>,
    stagnation: Option<u32>,
    target_species: Option<usize>,
    threshold: Option<f64>,
    repetitions: Option<u32>,
    cap: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, String> {
        let file: FileConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| format!("bad config: {e}"))?
            }
            None => FileConfig::default(),
        };
        let seed = self.seed.or(file.seed).unwrap_or(0);
        let mut config = RunConfig::desk(seed);
        if let Some(p) = self.population.or(file.population) {
            config.population_size = p;
            config.neat.population_size = p;
        }
        if let Some(g) = self.generations.or(file.generations) {
            config.generations = Some(g);
        }
        if let Some(w) = self.wall_seconds.or(file.wall_seconds) {
            config.wall_seconds = Some(w);
        }
        if let Some(r) = self.robustness.or(file.robustness) {
            config.robustness = r;
        }
        if let Some(m) = self.max_steps.or(file.max_steps) {
            config.max_steps = m;
        }
        if let Some(s) = self.stagnation.or(file.stagnation) {
            config.stagnation_limit = s;
        }
        if let Some(t) = self.target_species.or(file.target_species) {
            config.neat.target_species = t;
        }
        if let Some(t) = self.threshold.or(file.threshold) {
            config.lsa_threshold = t;
        }
        if let Some(r) = self.repetitions.or(file.repetitions) {
            config.ground_truth_repetitions = r;
        }
        if let Some(c) = self.cap.or(file.cap) {
            config.mutant_cap = c;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a game document; prints one JSON issue per line.
    Validate { game: PathBuf },
    /// Export the control dependence graph as Graphviz DOT.
    Cdg {
        game: PathBuf,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve a dynamic test suite for a game.
    Generate {
        game: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Where to write the suite JSON.
        #[arg(long, default_value = "suite.json")]
        out: PathBuf,
        /// Optional per-generation JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Random test generation baseline under the same budget.
    Random {
        game: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for the recorded static tests.
        #[arg(long, default_value = "random-tests")]
        out_dir: PathBuf,
    },
    /// Execute a suite on fresh seeds and report per-seed coverage.
    RunSuite {
        game: PathBuf,
        /// Dynamic suite JSON (from `generate`).
        #[arg(long, conflicts_with = "static_dir")]
        suite: Option<PathBuf>,
        /// Directory of static test JSON files.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Comma-separated explicit seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Derive this many fresh seeds from --seed instead.
        #[arg(long, default_value_t = 10)]
        fresh_seeds: u32,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the rows as a JSON array (the `report` input format).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate first-order mutants; with --suite, run full mutation
    /// analysis against the suite's networks.
    Mutate {
        game: PathBuf,
        /// Dynamic suite JSON; enables kill/false-positive analysis.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the mutants as .game files into this directory.
        #[arg(long)]
        emit_mutants: Option<PathBuf>,
        /// Analysis output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge a suspect program against a suite's ground-truth profiles.
    Judge {
        game: PathBuf,
        /// Suspect program (defaults to the clean game itself).
        #[arg(long)]
        suspect: Option<PathBuf>,
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Effect size and Mann-Whitney U test for two samples.
    Stats {
        /// First sample, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        /// Second sample, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<f64>,
    },
    /// Combine run-suite outputs into comparison tables (CSV + JSON).
    Report {
        /// Labelled coverage row files: label=path.json, repeatable.
        #[arg(long = "rows", value_parser = parse_labelled)]
        rows: Vec<(String, PathBuf)>,
        /// Optional mutation report JSON.
        #[arg(long)]
        mutation: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        /// Game name for the table rows.
        #[arg(long, default_value = "game")]
        game: String,
    },
}

fn parse_labelled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) => Ok((label.to_string(), PathBuf::from(path))),
        None => Err("expected label=path".to_string()),
    }
}

fn load_game(path: &Path) -> Result<GameSpec, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return Err(ExitCode::from(2));
        }
    };
    let (spec, _) = match parse_game_unchecked(&text) {
        Ok(x) => x,
        Err(e) => {
            println!(
                "{}",
                serde_json::json!({"block_id": "", "rule": "syntax", "message": e.to_string()})
            );
            return Err(ExitCode::from(2));
        }
    };
    let issues = validate_spec(&spec);
    if !issues.is_empty() {
        for issue in &issues {
            println!("{}", serde_json::to_string(issue).unwrap());
        }
        return Err(ExitCode::from(2));
    }
    Ok(spec)
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Validate { game } => {
            let text = std::fs::read_to_string(&game).map_err(|e| e.to_string())?;
            match parse_game_unchecked(&text) {
                Err(e) => {
                    println!(
                        "{}",
                        serde_json::json!({"block_id": "", "rule": "syntax", "message": e.to_string()})
                    );
                    Ok(ExitCode::from(2))
                }
                Ok((spec, _)) => {
                    let issues = validate_spec(&spec);
                    for issue in &issues {
                        println!("{}", serde_json::to_string(issue).unwrap());
                    }
                    Ok(if issues.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
                }
            }
        }
        Command::Cdg { game, out } => {
            let spec = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let ctx = GameContext::new(spec);
            let dot = ctx.cdg.to_dot(&ctx.spec.name);
            write_or_print(&out, &dot).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate { game, config, out, log } => {
            let spec = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let run_config = config.build()?;
            let ctx = GameContext::new(spec);
            let outcome = cmd_generate(&ctx, &run_config);
            std::fs::write(&out, outcome.suite.to_json()).map_err(|e| e.to_string())?;
            if let Some(log_path) = log {
                let mut lines = String::new();
                for entry in &outcome.log {
                    lines.push_str(&serde_json::to_string(entry).unwrap());
                    lines.push('\n');
                }
                std::fs::write(&log_path, lines).map_err(|e| e.to_string())?;
            }
            eprintln!(
                "reliable coverage {:.2}% across {} generations; {} suite entries -> {}",
                100.0 * outcome.reliable_coverage,
                outcome.generations_used,
                outcome.suite.entries.len(),
                out.display()
            );
            Ok(if outcome.budget_exhausted { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Random { game, config, out_dir } => {
            let spec = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let run_config = config.build()?;
            let ctx = GameContext::new(spec);
            let outcome = cmd_random_baseline(&ctx, &run_config);
            std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
            for (i, test) in outcome.tests.iter().enumerate() {
                let path = out_dir.join(format!("random_{i:04}.json"));
                std::fs::write(path, ludus_core::episode::static_test_to_json(test))
                    .map_err(|e| e.to_string())?;
            }
            eprintln!(
                "reliable coverage {:.2}% from {} episodes; {} static tests -> {}",
                100.0 * outcome.reliable_coverage,
                outcome.episodes_run,
                outcome.tests.len(),
                out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::RunSuite { game, suite, static_dir, seeds, fresh_seeds, config, out, json } => {
            let spec = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let run_config = config.build()?;
            let ctx = GameContext::new(spec);
            let seeds = if seeds.is_empty() {
                let mut rng = Pcg32::derive(run_config.master_seed, "run-suite-seeds");
                (0..fresh_seeds).map(|_| rng.next_u64()).collect()
            } else {
                seeds
            };
            let rows = match (&suite, &static_dir) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                    let suite = DynamicTestSuite::from_json(&text).map_err(|e| e.to_string())?;
                    cmd_run_suite(
                        &SuiteKind::Dynamic(&suite),
                        &ctx,
                        &seeds,
                        run_config.max_steps,
                        "dynamic",
                    )
                }
                (None, Some(dir)) => {
                    let mut tests = Vec::new();
                    let mut entries: Vec<_> = std::fs::read_dir(dir)
                        .map_err(|e| e.to_string())?
                        .filter_map(|e| e.ok())
                        .map(|e| e.path())
                        .filter(|p| p.extension().is_some_and(|x| x == "json"))
                        .collect();
                    entries.sort();
                    for path in entries {
                        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
                        tests.push(
                            ludus_core::episode::static_test_from_json(&text)
                                .map_err(|e| e.to_string())?,
                        );
                    }
                    cmd_run_suite(
                        &SuiteKind::Static(&tests),
                        &ctx,
                        &seeds,
                        run_config.max_steps,
                        "static",
                    )
                }
                _ => return Err("pass exactly one of --suite or --static-dir".to_string()),
            };
            write_or_print(&out, &coverage_rows_to_csv(&rows)).map_err(|e| e.to_string())?;
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&rows).unwrap())
                    .map_err(|e| e.to_string())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Mutate { game, suite, config, emit_mutants, out } => {
            let spec = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let run_config = config.build()?;
            let mut rng = Pcg32::derive(run_config.master_seed, "mutants");
            let mutants =
                ludus_core::mutation::generate_mutant_set(&spec, &mut rng, run_config.mutant_cap);
            if let Some(dir) = &emit_mutants {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                for mutant in &mutants {
                    let name = format!(
                        "{}.{}.{}.game",
                        spec.name,
                        mutant.origin.operator.name(),
                        mutant.index
                    );
                    std::fs::write(dir.join(name), serialize_game(&mutant.spec))
                        .map_err(|e| e.to_string())?;
                }
                eprintln!("{} mutants -> {}", mutants.len(), dir.display());
            }
            if let Some(suite_path) = suite {
                let suite_text =
                    std::fs::read_to_string(&suite_path).map_err(|e| e.to_string())?;
                let suite =
                    DynamicTestSuite::from_json(&suite_text).map_err(|e| e.to_string())?;
                let ctx = GameContext::new(spec);
                let report = cmd_mutation_analysis(&suite, &ctx, &run_config);
                write_or_print(&out, &mutation_report_to_csv(&report))
                    .map_err(|e| e.to_string())?;
            } else if emit_mutants.is_none() {
                eprintln!("{} mutants generated (pass --emit-mutants or --suite)", mutants.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Judge { game, suspect, suite, config } => {
            let clean = match load_game(&game) {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let suspect_spec = match &suspect {
                Some(path) => match load_game(path) {
                    Ok(s) => s,
                    Err(code) => return Ok(code),
                },
                None => clean.clone(),
            };
            let run_config = config.build()?;
            let suite_text = std::fs::read_to_string(&suite).map_err(|e| e.to_string())?;
            let suite = DynamicTestSuite::from_json(&suite_text).map_err(|e| e.to_string())?;
            let clean_ctx = GameContext::new(clean);
            let suspect_ctx = GameContext::new(suspect_spec);
            let mut rng = Pcg32::derive(run_config.master_seed, "judge");
            let mut verdicts = Vec::new();
            for entry in &suite.entries {
                let profile = collect_ground_truth(
                    &entry.genome,
                    &clean_ctx,
                    run_config.ground_truth_repetitions,
                    run_config.max_steps,
                    &mut rng,
                )
                .map_err(|e| e.to_string())?;
                let seeds = [rng.next_u64()];
                let verdict = ludus_core::oracle::judge(
                    &entry.genome,
                    &suspect_ctx,
                    &profile,
                    run_config.lsa_threshold,
                    &seeds,
                    run_config.max_steps,
                )
                .map_err(|e| e.to_string())?;
                verdicts.push(serde_json::json!({
                    "target": entry.target,
                    "verdict": verdict,
                }));
            }
            println!("{}", serde_json::to_string_pretty(&verdicts).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { x, y } => {
            let a12 = ludus_core::stats::a12(&x, &y).map_err(|e| e.to_string())?;
            let mwu = ludus_core::stats::mann_whitney_u(&x, &y).map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::json!({
                    "a12": a12,
                    "u": mwu.u,
                    "p_two_sided": mwu.p,
                    "exact": mwu.exact,
                })
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { rows, mutation, out_dir, game } => {
            std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
            let mut labelled: Vec<(String, Vec<CoverageRow>)> = Vec::new();
            for (label, path) in &rows {
                let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                let parsed: Vec<serde_json::Value> =
                    serde_json::from_str(&text).map_err(|e| e.to_string())?;
                let rows = parsed
                    .into_iter()
                    .map(|v| CoverageRow {
                        suite: label.clone(),
                        seed: v["seed"].as_u64().unwrap_or(0),
                        covered: v["covered"].as_u64().unwrap_or(0) as usize,
                        total: v["total"].as_u64().unwrap_or(0) as usize,
                        coverage_pct: v["coverage_pct"].as_f64().unwrap_or(0.0),
                        win_covered: v["win_covered"].as_bool().unwrap_or(false),
                    })
                    .collect();
                labelled.push((label.clone(), rows));
            }
            let mut comparisons = Vec::new();
            for pair in labelled.windows(2) {
                comparisons.push(compare_coverage(
                    &game,
                    &pair[0].0,
                    &pair[0].1,
                    &pair[1].0,
                    &pair[1].1,
                ));
            }
            if !comparisons.is_empty() {
                std::fs::write(out_dir.join("coverage_table.csv"), comparisons_to_csv(&comparisons))
                    .map_err(|e| e.to_string())?;
                std::fs::write(
                    out_dir.join("coverage_table.json"),
                    serde_json::to_string_pretty(&comparisons).unwrap(),
                )
                .map_err(|e| e.to_string())?;
            }
            if let Some(path) = mutation {
                let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
                std::fs::write(out_dir.join("mutation_table.json"), &text)
                    .map_err(|e| e.to_string())?;
            }
            eprintln!("reports -> {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
