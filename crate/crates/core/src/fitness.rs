//! Objective computation (approach level, branch distance, control flow
//! distance), the fitness function, robustness checking over reseeded
//! runs, explorative target selection and stagnation switching.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::cdg::{Cdg, CdgNode, Outcome};
use crate::episode::{run_episode, EpisodeOptions, EpisodeResult, GameContext};
use crate::neat::{Genome, IdSource};
use crate::rng::Pcg32;
use crate::spec::{BinOp, Block, BlockId, Expr, GameSpec, Opcode};
use crate::vm::{eval_num_peek, VmState};

/// Korel constant for boolean atoms and non-equalities.
pub const K: f64 = 1.0;

/// Distance reported when a predicate faults at runtime; effectively
/// unsatisfiable this step.
const FAULT_DISTANCE: f64 = 1e9;

/// Normalization x / (1 + x) onto [0, 1).
pub fn alpha_norm(x: f64) -> f64 {
    assert!(x >= 0.0, "alpha_norm domain is x >= 0");
    x / (1.0 + x)
}

/// The search objective 2*AL + alpha(BD) + alpha(CFD); zero exactly when
/// the target was covered.
pub fn objective_fst(approach_level: u32, branch_distance: f64, control_flow_distance: u32) -> f64 {
    2.0 * approach_level as f64
        + alpha_norm(branch_distance)
        + alpha_norm(control_flow_distance as f64)
}

/// Maps the objective to the maximization fitness: 1/(1+f_st) below
/// coverage, exactly 1 on coverage, 1 + r_c after the robustness check.
pub fn network_fitness(f_st: f64, robustness: Option<&RobustnessOutcome>) -> f64 {
    if f_st > 0.0 {
        debug_assert!(robustness.is_none(), "robustness only applies to covering networks");
        1.0 / (1.0 + f_st)
    } else {
        match robustness {
            None => 1.0,
            Some(r) => 1.0 + r.successes as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    pub approach_level: u32,
    pub branch_distance: f64,
    pub control_flow_distance: u32,
    pub f_st: f64,
    pub f: f64,
}

/// A conditional block whose branch distance is sampled during episodes.
#[derive(Debug, Clone)]
pub struct PredicateInfo {
    pub id: BlockId,
    pub sprite_index: usize,
    pub kind: PredicateKind,
}

#[derive(Debug, Clone)]
pub enum PredicateKind {
    /// if / ifElse / repeatUntil condition.
    Bool(Expr),
    /// repeat(n): the body is taken while round(n) >= 1.
    Times(Expr),
}

/// Collects every conditional block of a spec in document order.
pub fn predicate_catalog(spec: &GameSpec) -> Vec<PredicateInfo> {
    let mut out = Vec::new();
    for (si, sprite) in spec.sprites.iter().enumerate() {
        for script in &sprite.scripts {
            collect_predicates(&script.body, si, &mut out);
        }
    }
    out
}

fn collect_predicates(blocks: &[Block], sprite_index: usize, out: &mut Vec<PredicateInfo>) {
    for b in blocks {
        match &b.op {
            Opcode::If { cond, .. }
            | Opcode::IfElse { cond, .. }
            | Opcode::RepeatUntil { cond, .. } => out.push(PredicateInfo {
                id: b.id.clone(),
                sprite_index,
                kind: PredicateKind::Bool(cond.clone()),
            }),
            Opcode::Repeat { times, .. } => out.push(PredicateInfo {
                id: b.id.clone(),
                sprite_index,
                kind: PredicateKind::Times(times.clone()),
            }),
            _ => {}
        }
        for body in b.op.bodies() {
            collect_predicates(body, sprite_index, out);
        }
    }
}

/// Branch distance of one predicate in the current state, toward both
/// outcomes: (distance to true, distance to false). Evaluation never
/// consumes VM randomness. When the owning sprite has several live
/// instances the minimum distance counts.
pub fn branch_distances(vm: &VmState, info: &PredicateInfo) -> (f64, f64) {
    let instances: Vec<u64> = vm
        .sprites
        .iter()
        .filter(|i| i.sprite_index == info.sprite_index)
        .map(|i| i.instance_id)
        .collect();
    let mut best = (f64::INFINITY, f64::INFINITY);
    for id in instances {
        let pair = match &info.kind {
            PredicateKind::Bool(cond) => {
                let mut rng = vm.rng_snapshot();
                (
                    dist_true(vm, &mut rng, id, cond),
                    dist_false(vm, &mut rng, id, cond),
                )
            }
            PredicateKind::Times(times) => {
                let mut rng = vm.rng_snapshot();
                match eval_num_peek(vm, &mut rng, id, times) {
                    Ok(n) => {
                        let n = n.round();
                        let taken = if n >= 1.0 { 0.0 } else { 1.0 - n };
                        let exit = if n < 1.0 { 0.0 } else { n };
                        (taken, exit)
                    }
                    Err(_) => (FAULT_DISTANCE, FAULT_DISTANCE),
                }
            }
        };
        best.0 = best.0.min(pair.0);
        best.1 = best.1.min(pair.1);
    }
    if best.0.is_infinite() {
        (FAULT_DISTANCE, FAULT_DISTANCE)
    } else {
        best
    }
}

/// Public single-outcome branch distance: how far the predicate is from
/// evaluating to true in this state (0 when it holds).
pub fn branch_distance(vm: &VmState, info: &PredicateInfo) -> f64 {
    branch_distances(vm, info).0
}

fn numeric_pair(
    vm: &VmState,
    rng: &mut Pcg32,
    id: u64,
    a: &Expr,
    b: &Expr,
) -> Result<(f64, f64), ()> {
    let x = eval_num_peek(vm, rng, id, a).map_err(|_| ())?;
    let y = eval_num_peek(vm, rng, id, b).map_err(|_| ())?;
    Ok((x, y))
}

fn dist_true(vm: &VmState, rng: &mut Pcg32, id: u64, e: &Expr) -> f64 {
    match e {
        Expr::Bin(BinOp::Eq, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => (x - y).abs(),
            Err(()) => FAULT_DISTANCE,
        },
        Expr::Bin(BinOp::Lt, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => {
                if x < y {
                    0.0
                } else {
                    (x - y) + K
                }
            }
            Err(()) => FAULT_DISTANCE,
        },
        Expr::Bin(BinOp::Gt, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => {
                if x > y {
                    0.0
                } else {
                    (y - x) + K
                }
            }
            Err(()) => FAULT_DISTANCE,
        },
        Expr::And(a, b) => dist_true(vm, rng, id, a) + dist_true(vm, rng, id, b),
        Expr::Or(a, b) => dist_true(vm, rng, id, a).min(dist_true(vm, rng, id, b)),
        Expr::Not(a) => dist_false(vm, rng, id, a),
        Expr::Touching(name) => {
            let me = vm.instance(id);
            match me {
                Some(me) if me.visible => {
                    let mut best = f64::INFINITY;
                    for other in vm.instances_of(name) {
                        if other.visible && other.instance_id != id {
                            best = best.min(crate::vm::pair_gap(vm, me, other));
                        }
                    }
                    if best.is_finite() {
                        best.max(0.0)
                    } else {
                        FAULT_DISTANCE
                    }
                }
                _ => FAULT_DISTANCE,
            }
        }
        Expr::TouchingEdge => match vm.instance(id) {
            Some(me) if me.visible => {
                let r = vm.effective_radius(me);
                let dx = (crate::spec::STAGE_HALF_WIDTH - me.x.abs()) - r;
                let dy = (crate::spec::STAGE_HALF_HEIGHT - me.y.abs()) - r;
                dx.min(dy).max(0.0)
            }
            _ => FAULT_DISTANCE,
        },
        Expr::TouchingColor(color) => match vm.instance(id) {
            Some(me) if me.visible => {
                let r = vm.effective_radius(me);
                let mut best = f64::INFINITY;
                for reg in vm.spec().stage.color_regions.iter().filter(|c| &c.color == color) {
                    let cx = me.x.clamp(reg.x1, reg.x2);
                    let cy = me.y.clamp(reg.y1, reg.y2);
                    let d = ((me.x - cx).powi(2) + (me.y - cy).powi(2)).sqrt() - r;
                    best = best.min(d);
                }
                if best.is_finite() {
                    best.max(0.0)
                } else {
                    FAULT_DISTANCE
                }
            }
            _ => FAULT_DISTANCE,
        },
        Expr::TouchingMouse => match vm.instance(id) {
            Some(me) if me.visible => {
                let r = vm.effective_radius(me);
                let d = ((me.x - vm.mouse_x).powi(2) + (me.y - vm.mouse_y).powi(2)).sqrt() - r;
                d.max(0.0)
            }
            _ => FAULT_DISTANCE,
        },
        Expr::KeyDown(key) => {
            if vm.key_down(key) {
                0.0
            } else {
                K
            }
        }
        Expr::MouseDown => {
            if vm.mouse_button_down() {
                0.0
            } else {
                K
            }
        }
        // numeric / text truthiness: use the k convention
        other => {
            let mut local = rng.clone();
            match crate::vm::eval_bool_peek(vm, &mut local, id, other) {
                Ok(true) => 0.0,
                Ok(false) => K,
                Err(_) => FAULT_DISTANCE,
            }
        }
    }
}

fn dist_false(vm: &VmState, rng: &mut Pcg32, id: u64, e: &Expr) -> f64 {
    match e {
        Expr::Bin(BinOp::Eq, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => {
                if x != y {
                    0.0
                } else {
                    K
                }
            }
            Err(()) => FAULT_DISTANCE,
        },
        Expr::Bin(BinOp::Lt, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => {
                if x < y {
                    (y - x) + K
                } else {
                    0.0
                }
            }
            Err(()) => FAULT_DISTANCE,
        },
        Expr::Bin(BinOp::Gt, a, b) => match numeric_pair(vm, rng, id, a, b) {
            Ok((x, y)) => {
                if x > y {
                    (x - y) + K
                } else {
                    0.0
                }
            }
            Err(()) => FAULT_DISTANCE,
        },
        Expr::And(a, b) => dist_false(vm, rng, id, a).min(dist_false(vm, rng, id, b)),
        Expr::Or(a, b) => dist_false(vm, rng, id, a) + dist_false(vm, rng, id, b),
        Expr::Not(a) => dist_true(vm, rng, id, a),
        other => {
            let mut local = rng.clone();
            match crate::vm::eval_bool_peek(vm, &mut local, id, other) {
                Ok(false) => 0.0,
                Ok(true) => K,
                Err(_) => FAULT_DISTANCE,
            }
        }
    }
}

/// Straight-line block count between the target and the nearest covered
/// statement within the target's script (0 when covered). Positions count
/// the hat as 0 and body blocks in document order from 1.
pub fn control_flow_distance(
    target: &BlockId,
    coverage: &BTreeSet<BlockId>,
    spec: &GameSpec,
) -> u32 {
    for sprite in &spec.sprites {
        for script in &sprite.scripts {
            let mut positions: Vec<BlockId> = vec![script.id.clone()];
            fn walk(blocks: &[Block], out: &mut Vec<BlockId>) {
                for b in blocks {
                    out.push(b.id.clone());
                    for body in b.op.bodies() {
                        walk(body, out);
                    }
                }
            }
            walk(&script.body, &mut positions);
            let Some(target_pos) = positions.iter().position(|p| p == target) else {
                continue;
            };
            if coverage.contains(target) {
                return 0;
            }
            let covered_positions: Vec<usize> = positions
                .iter()
                .enumerate()
                .filter(|(i, p)| {
                    coverage.contains(p)
                        // the hat counts as covered once the body started
                        || (*i == 0 && positions.len() > 1 && coverage.contains(&positions[1]))
                })
                .map(|(i, _)| i)
                .collect();
            if covered_positions.is_empty() {
                return target_pos as u32;
            }
            return covered_positions
                .iter()
                .map(|&p| target_pos.abs_diff(p))
                .min()
                .unwrap() as u32;
        }
    }
    0
}

/// Per-episode minimum branch distances keyed by (predicate id, desired
/// truth value).
pub type PredicateMins = BTreeMap<(BlockId, bool), f64>;

/// Required predicate truth for a control-dependence edge outcome.
fn desired_truth(parent: &CdgNode, outcome: Outcome, spec: &GameSpec) -> Option<(BlockId, bool)> {
    let id = parent.as_stmt()?;
    let exiting = matches!(outcome, Outcome::LoopExit);
    let mut kind = None;
    spec.visit_blocks(|b| {
        if &b.id == id {
            kind = Some(match &b.op {
                Opcode::If { .. } | Opcode::IfElse { .. } => !matches!(outcome, Outcome::Else),
                // the body runs while the condition is false; exiting needs true
                Opcode::RepeatUntil { .. } => exiting,
                // the body runs while iterations remain; exiting needs none left
                Opcode::Repeat { .. } => !exiting,
                _ => return,
            });
        }
    });
    kind.map(|truth| (id.clone(), truth))
}

/// Full objective for one episode against one target.
pub fn compute_report(
    ctx: &GameContext,
    target: &CdgNode,
    episode: &EpisodeResult,
) -> FitnessReport {
    let cdg = &ctx.cdg;
    if cdg.node_covered(target, &episode.coverage) {
        return FitnessReport {
            approach_level: 0,
            branch_distance: 0.0,
            control_flow_distance: 0,
            f_st: 0.0,
            f: 1.0,
        };
    }
    let covered = cdg.covered_nodes(&episode.coverage);

    let (al, critical): (u32, Option<(CdgNode, CdgNode)>) =
        match cdg.dependency_chain(&covered, target) {
            Some(chain) => {
                let al = (chain.len() - 1) as u32;
                (al, Some((chain[0].clone(), chain[1].clone())))
            }
            None => {
                // an immediate dependency is covered: the critical edge is
                // dependency -> target itself
                let parents = cdg.control_dependencies(target);
                let covered_parent = parents
                    .iter()
                    .find(|(p, _)| covered.contains(p) || matches!(p, CdgNode::Entry))
                    .map(|(p, _)| p.clone());
                (0, covered_parent.map(|p| (p, target.clone())))
            }
        };

    let bd = critical
        .and_then(|(parent, child)| {
            let outcome = cdg
                .control_dependencies(&child)
                .iter()
                .find(|(p, _)| *p == parent)
                .map(|(_, o)| *o)?;
            if outcome == Outcome::Event {
                return Some(0.0);
            }
            let (id, truth) = desired_truth(&parent, outcome, &ctx.spec)?;
            // Forever loops carry no predicate: distance 0.
            episode.predicate_mins.get(&(id, truth)).copied().or(Some(0.0))
        })
        .unwrap_or(0.0);

    let target_block = ctx
        .cdg
        .coverage_target_block(target)
        .expect("non-Entry targets map to a block");
    let cfd = control_flow_distance(&target_block, &episode.coverage, &ctx.spec);

    let f_st = objective_fst(al, bd, cfd);
    FitnessReport {
        approach_level: al,
        branch_distance: bd,
        control_flow_distance: cfd,
        f_st,
        f: network_fitness(f_st, None),
    }
}

/// Outcome of re-running a covering network on fresh seeds.
#[derive(Debug, Clone)]
pub struct RobustnessOutcome {
    /// r_c: how many of the reseeded executions covered the target again.
    pub successes: u32,
    pub seeds: Vec<u64>,
    /// Coverage of every robustness episode (for collateral analysis);
    /// includes the original covering episode's coverage first.
    pub coverages: Vec<BTreeSet<BlockId>>,
}

/// Runs up to r_d - 1 reseeded episodes and counts how many cover the
/// target again. With `early_abort` the loop stops at the first failure
/// (admission is already impossible); r_c stays exact for the runs made.
#[allow(clippy::too_many_arguments)]
pub fn robustness_check(
    genome: &Genome,
    ctx: &GameContext,
    target: &CdgNode,
    r_d: u32,
    rng: &mut Pcg32,
    ids: &mut IdSource,
    max_steps: u64,
    early_abort: bool,
    first_coverage: BTreeSet<BlockId>,
) -> RobustnessOutcome {
    let mut outcome = RobustnessOutcome {
        successes: 0,
        seeds: Vec::new(),
        coverages: vec![first_coverage],
    };
    for _ in 0..r_d.saturating_sub(1) {
        let seed = rng.next_u64();
        outcome.seeds.push(seed);
        let episode = run_episode(
            genome,
            ctx,
            seed,
            Some(target),
            &EpisodeOptions { max_steps, record_trace: false },
            ids,
        );
        let covered = ctx.cdg.node_covered(target, &episode.coverage);
        outcome.coverages.push(episode.coverage);
        if covered {
            outcome.successes += 1;
        } else if early_abort {
            break;
        }
    }
    outcome
}

/// Statements covered in every robustness episode of an admitted network
/// are robustly covered too.
pub fn collateral_robustness(
    outcome: &RobustnessOutcome,
    uncovered: &BTreeSet<CdgNode>,
    cdg: &Cdg,
) -> BTreeSet<CdgNode> {
    uncovered
        .iter()
        .filter(|node| outcome.coverages.iter().all(|c| cdg.node_covered(node, c)))
        .cloned()
        .collect()
}

/// Search bookkeeping across targets.
#[derive(Debug, Clone, Default)]
pub struct SearchState {
    /// Robustly covered nodes.
    pub robust: BTreeSet<CdgNode>,
    /// Reached at least once but not robustly.
    pub accidental: BTreeSet<CdgNode>,
    pub current_target: Option<CdgNode>,
    pub stagnation: u32,
    pub best_f: f64,
    /// Targets parked after stagnating; tried again last.
    pub deferred: VecDeque<CdgNode>,
}

impl SearchState {
    pub fn note_coverage(&mut self, cdg: &Cdg, coverage: &BTreeSet<BlockId>) {
        for node in cdg.covered_nodes(coverage) {
            if !self.robust.contains(&node) {
                self.accidental.insert(node);
            }
        }
    }

    pub fn mark_robust(&mut self, node: CdgNode) {
        self.accidental.remove(&node);
        self.deferred.retain(|n| n != &node);
        self.robust.insert(node);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSelection {
    Target(CdgNode),
    AllCovered,
    /// Statements remain but none is reachable from the covered frontier.
    UnreachableRemainder(BTreeSet<CdgNode>),
}

/// Selects the next target from the children of robustly covered nodes,
/// preferring accidentally reached statements; Entry bootstraps the search.
pub fn select_target(cdg: &Cdg, state: &SearchState, rng: &mut Pcg32) -> TargetSelection {
    if state.robust.is_empty() {
        return TargetSelection::Target(CdgNode::Entry);
    }
    let uncovered: BTreeSet<CdgNode> =
        cdg.nodes().filter(|n| !state.robust.contains(n)).cloned().collect();
    if uncovered.is_empty() {
        return TargetSelection::AllCovered;
    }
    let mut frontier: Vec<CdgNode> = state
        .robust
        .iter()
        .flat_map(|n| cdg.control_dependents(n))
        .filter(|n| !state.robust.contains(n))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if frontier.is_empty() {
        return TargetSelection::UnreachableRemainder(uncovered);
    }
    // deferred targets are only retried once nothing else is open
    let fresh: Vec<CdgNode> =
        frontier.iter().filter(|n| !state.deferred.contains(n)).cloned().collect();
    if !fresh.is_empty() {
        frontier = fresh;
    } else {
        let first_deferred = state
            .deferred
            .iter()
            .find(|n| frontier.contains(n))
            .cloned()
            .expect("deferred targets are on the frontier");
        return TargetSelection::Target(first_deferred);
    }
    let accidental: Vec<CdgNode> =
        frontier.iter().filter(|n| state.accidental.contains(n)).cloned().collect();
    let pool = if accidental.is_empty() { &frontier } else { &accidental };
    TargetSelection::Target(pool[rng.index(pool.len())].clone())
}

/// Updates the stagnation counter with a generation's best fitness.
/// Returns true when the target should be switched (counter hit the limit).
pub fn register_stagnation(state: &mut SearchState, generation_best: f64, limit: u32) -> bool {
    if generation_best > state.best_f {
        state.best_f = generation_best;
        state.stagnation = 0;
        return false;
    }
    state.stagnation += 1;
    if state.stagnation >= limit {
        if let Some(target) = state.current_target.clone() {
            state.deferred.retain(|n| n != &target);
            state.deferred.push_back(target);
        }
        state.stagnation = 0;
        state.best_f = f64::NEG_INFINITY;
        return true;
    }
    false
}
