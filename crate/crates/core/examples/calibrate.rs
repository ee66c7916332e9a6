//! Desk-scale calibration driver: runs the generator on a bundled game and
//! prints per-generation progress.
use ludus_core::episode::GameContext;
use ludus_core::harness::{cmd_generate, cmd_random_baseline, RunConfig};
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
        "generate: seed {seed} coverage {:.1}% gens {} entries {} exhausted {} in {:.2?}",
        100.0 * outcome.reliable_coverage,
        outcome.generations_used,
        outcome.suite.entries.len(),
        outcome.budget_exhausted,
        t0.elapsed()
    );
    for l in &outcome.log {
        println!(
            "  gen {:>3} target {:<14} best {:>8.3} robust {:>3} admitted {}",
            l.generation, l.target, l.best_fitness, l.robust_statements, l.admitted
        );
    }
    let win = ludus_core::spec::BlockId::new(if game == "paddle" { "k14" } else { "a7" });
    let win_node = ludus_core::cdg::CdgNode::Stmt(win);
    println!("win robust: {}", outcome.search.robust.contains(&win_node));

    let t1 = std::time::Instant::now();
    let random = cmd_random_baseline(&ctx, &config);
    println!(
        "random: coverage {:.1}% episodes {} tests {} win robust {} in {:.2?}",
        100.0 * random.reliable_coverage,
        random.episodes_run,
        random.tests.len(),
        random.robust.contains(&win_node),
        t1.elapsed()
    );
}
