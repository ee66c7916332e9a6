//! End-to-end dry run of the evaluation pipeline on one game: generate a
//! suite, replay static vs dynamic variants on fresh seeds, then run
//! mutation analysis. Prints the summary numbers.
use ludus_core::episode::{extract_static_test, replay_static_test, run_episode, EpisodeOptions};
use ludus_core::episode::{GameContext, StaticTest};
use ludus_core::harness::*;
use ludus_core::neat::{IdSource, ScratchIds};
use ludus_core::rng::Pcg32;
use ludus_core::spec::parse_game;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let game = args.get(1).map(|s| s.as_str()).unwrap_or("fruit");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let text = match game {
        "paddle" => ludus_core::games::PADDLE_BOUNCE,
        _ => ludus_core::games::FRUIT_CATCHING,
    };
    let ctx = GameContext::new(parse_game(text).unwrap());
    let config = RunConfig::desk(seed);

    let t0 = std::time::Instant::now();
    let outcome = cmd_generate(&ctx, &config);
    println!(
        "generate: coverage {:.1}% entries {} gens {} in {:.2?}",
        100.0 * outcome.reliable_coverage,
        outcome.suite.entries.len(),
        outcome.generations_used,
        t0.elapsed()
    );

    // static extraction: one recorded episode per suite entry
    let options = EpisodeOptions { max_steps: config.max_steps, record_trace: false };
    let statics: Vec<StaticTest> = outcome
        .suite
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let mut ids = IdSource::Scratch(ScratchIds::for_genome(&entry.genome));
            let ep = run_episode(
                &entry.genome,
                &ctx,
                entry.seeds[0],
                None,
                &options,
                &mut ids,
            );
            let test = extract_static_test(&ep);
            let identical = replay_static_test(&test, &ctx, test.seed, config.max_steps).coverage
                == ep.coverage;
            assert!(identical, "static replay on recording seed is identity (entry {i})");
            test
        })
        .collect();

    let mut seed_rng = Pcg32::derive(seed, "replay-fresh-seeds");
    let fresh: Vec<u64> = (0..10).map(|_| seed_rng.next_u64()).collect();
    let t1 = std::time::Instant::now();
    let dynamic_rows =
        cmd_run_suite(&SuiteKind::Dynamic(&outcome.suite), &ctx, &fresh, config.max_steps, "dynamic");
    let static_rows =
        cmd_run_suite(&SuiteKind::Static(&statics), &ctx, &fresh, config.max_steps, "static");
    let mean = |rows: &[CoverageRow]| {
        rows.iter().map(|r| r.coverage_pct).sum::<f64>() / rows.len() as f64
    };
    let gen_cov = 100.0 * outcome.reliable_coverage;
    println!(
        "replay: generation {:.1}% dynamic {:.1}% (drop {:+.2}) static {:.1}% (drop {:+.2}) in {:.2?}",
        gen_cov,
        mean(&dynamic_rows),
        mean(&dynamic_rows) - gen_cov,
        mean(&static_rows),
        mean(&static_rows) - gen_cov,
        t1.elapsed()
    );
    let cmp = compare_coverage(&ctx.spec.name, "dynamic", &dynamic_rows, "static", &static_rows);
    println!("replay: A12 {:.3} p {:.5}", cmp.a12, cmp.p_value);

    let t2 = std::time::Instant::now();
    let report = cmd_mutation_analysis(&outcome.suite, &ctx, &config);
    println!(
        "mutation: generated {} killed {} ({:.1}%) fp {:.1}% in {:.2?}",
        report.generated_total,
        report.killed_total,
        report.kill_pct,
        report.false_positive_pct,
        t2.elapsed()
    );
    for op in &report.operators {
        if op.generated > 0 {
            println!(
                "  {:<4} generated {:>3} killed {:>3} ({:>5.1}%) structural {}",
                op.operator, op.generated, op.killed, op.kill_pct, op.structural_kills
            );
        }
    }
}
