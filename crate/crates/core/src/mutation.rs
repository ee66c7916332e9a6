//! First-order mutant generation with eight operators: key replacement,
//! single block deletion, script deletion, arithmetic / logical /
//! relational operator replacement, conditional negation, and variable
//! replacement. Enumeration is in document order and mutant selection is
//! deterministic under a seed.

use std::collections::BTreeSet;

use crate::rng::Pcg32;
use crate::spec::{BinOp, Block, BlockId, Expr, GameSpec, HatEvent, Opcode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum MutationOperator {
    /// Key Replacement Mutation: replaces a block's key listener.
    Krm,
    /// Single Block Deletion.
    Sbd,
    /// Script Deletion Mutation: deletes all blocks of a script.
    Sdm,
    /// Arithmetic Operator Replacement.
    Aor,
    /// Logical Operator Replacement.
    Lor,
    /// Relational Operator Replacement.
    Ror,
    /// Negate Conditional Mutation.
    Ncm,
    /// Variable Replacement Mutation.
    Vrm,
}

pub const ALL_OPERATORS: [MutationOperator; 8] = [
    MutationOperator::Krm,
    MutationOperator::Sbd,
    MutationOperator::Sdm,
    MutationOperator::Aor,
    MutationOperator::Lor,
    MutationOperator::Ror,
    MutationOperator::Ncm,
    MutationOperator::Vrm,
];

impl MutationOperator {
    pub fn name(&self) -> &'static str {
        match self {
            MutationOperator::Krm => "KRM",
            MutationOperator::Sbd => "SBD",
            MutationOperator::Sdm => "SDM",
            MutationOperator::Aor => "AOR",
            MutationOperator::Lor => "LOR",
            MutationOperator::Ror => "ROR",
            MutationOperator::Ncm => "NCM",
            MutationOperator::Vrm => "VRM",
        }
    }
}

/// An applicable location for one operator. `site` addresses the specific
/// key/operator/variable occurrence within the block, in expression
/// visit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationPoint {
    pub operator: MutationOperator,
    /// Block (or hat) id the point lives in.
    pub block_id: BlockId,
    /// Occurrence index within the block, for expression-level operators.
    pub site: usize,
}

#[derive(Debug, Clone)]
pub struct Mutant {
    pub spec: GameSpec,
    pub origin: MutationPoint,
    pub index: usize,
}

/// Keys a KRM replacement may pick from: every key mentioned in the spec
/// plus the arrow keys and space (so a replacement can always pick a key
/// nothing listens for).
pub fn key_alphabet(spec: &GameSpec) -> Vec<String> {
    let mut keys: BTreeSet<String> =
        ["left", "right", "up", "down", "space"].iter().map(|s| s.to_string()).collect();
    for sprite in &spec.sprites {
        for script in &sprite.scripts {
            if let HatEvent::KeyPressed(k) = &script.hat {
                keys.insert(k.clone());
            }
        }
    }
    visit_exprs(spec, &mut |e| {
        if let Expr::KeyDown(k) = e {
            keys.insert(k.clone());
        }
    });
    keys.into_iter().collect()
}

fn visit_exprs(spec: &GameSpec, f: &mut impl FnMut(&Expr)) {
    spec.visit_blocks(|b| {
        for e in b.op.exprs() {
            let mut stack = vec![e];
            while let Some(e) = stack.pop() {
                f(e);
                stack.extend(e.children());
            }
        }
    });
}

/// Expression-occurrence counters within one block, used to address sites.
fn count_sites_in_expr(e: &Expr, pred: &impl Fn(&Expr) -> bool) -> usize {
    let mut count = if pred(e) { 1 } else { 0 };
    for c in e.children() {
        count += count_sites_in_expr(c, pred);
    }
    count
}

fn count_sites_in_block(b: &Block, pred: &impl Fn(&Expr) -> bool) -> usize {
    b.op.exprs().iter().map(|e| count_sites_in_expr(e, pred)).sum()
}

/// Enumerates every applicable point of one operator, in document order.
pub fn enumerate_points(spec: &GameSpec, operator: MutationOperator) -> Vec<MutationPoint> {
    let mut points = Vec::new();
    let point = |id: &BlockId, site: usize| MutationPoint {
        operator,
        block_id: id.clone(),
        site,
    };
    match operator {
        MutationOperator::Krm => {
            for sprite in &spec.sprites {
                for script in &sprite.scripts {
                    if matches!(script.hat, HatEvent::KeyPressed(_)) {
                        points.push(point(&script.id, 0));
                    }
                }
            }
            spec.visit_blocks(|b| {
                let n = count_sites_in_block(b, &|e| matches!(e, Expr::KeyDown(_)));
                for site in 0..n {
                    points.push(point(&b.id, site));
                }
            });
        }
        MutationOperator::Sbd => {
            // every block; hats are SDM territory
            spec.visit_blocks(|b| points.push(point(&b.id, 0)));
        }
        MutationOperator::Sdm => {
            for sprite in &spec.sprites {
                for script in &sprite.scripts {
                    points.push(point(&script.id, 0));
                }
            }
        }
        MutationOperator::Aor => {
            spec.visit_blocks(|b| {
                let n = count_sites_in_block(b, &|e| {
                    matches!(e, Expr::Bin(op, ..) if op.is_arithmetic())
                });
                for site in 0..n {
                    points.push(point(&b.id, site));
                }
            });
        }
        MutationOperator::Lor => {
            spec.visit_blocks(|b| {
                let n = count_sites_in_block(b, &|e| matches!(e, Expr::And(..) | Expr::Or(..)));
                for site in 0..n {
                    points.push(point(&b.id, site));
                }
            });
        }
        MutationOperator::Ror => {
            spec.visit_blocks(|b| {
                let n = count_sites_in_block(b, &|e| {
                    matches!(e, Expr::Bin(op, ..) if op.is_relational())
                });
                for site in 0..n {
                    points.push(point(&b.id, site));
                }
            });
        }
        MutationOperator::Ncm => {
            spec.visit_blocks(|b| {
                if matches!(
                    b.op,
                    Opcode::If { .. } | Opcode::IfElse { .. } | Opcode::RepeatUntil { .. }
                ) {
                    points.push(point(&b.id, 0));
                }
            });
        }
        MutationOperator::Vrm => {
            if spec.variables.len() < 2 {
                return points;
            }
            spec.visit_blocks(|b| {
                let mut n = count_sites_in_block(b, &|e| matches!(e, Expr::Var(_)));
                // setVar / changeVar targets are variable references too
                if matches!(b.op, Opcode::SetVar(..) | Opcode::ChangeVar(..)) {
                    n += 1;
                }
                for site in 0..n {
                    points.push(point(&b.id, site));
                }
            });
        }
    }
    points
}

/// Applies one enumerated point. The replacement is drawn uniformly from
/// the legal non-identity choice set.
pub fn apply_point(spec: &GameSpec, point: &MutationPoint, rng: &mut Pcg32) -> Mutant {
    let mut mutated = spec.clone();
    match point.operator {
        MutationOperator::Krm => apply_krm(&mut mutated, point, rng),
        MutationOperator::Sbd => apply_sbd(&mut mutated, point),
        MutationOperator::Sdm => apply_sdm(&mut mutated, point),
        MutationOperator::Aor => apply_binop(&mut mutated, point, rng, BinOpClass::Arithmetic),
        MutationOperator::Lor => apply_lor(&mut mutated, point),
        MutationOperator::Ror => apply_binop(&mut mutated, point, rng, BinOpClass::Relational),
        MutationOperator::Ncm => apply_ncm(&mut mutated, point),
        MutationOperator::Vrm => apply_vrm(&mut mutated, point, rng),
    }
    Mutant { spec: mutated, origin: point.clone(), index: 0 }
}

fn pick_other<'a>(options: &'a [String], current: &str, rng: &mut Pcg32) -> Option<&'a String> {
    let others: Vec<&String> = options.iter().filter(|o| o.as_str() != current).collect();
    if others.is_empty() {
        None
    } else {
        Some(others[rng.index(others.len())])
    }
}

fn apply_krm(spec: &mut GameSpec, point: &MutationPoint, rng: &mut Pcg32) {
    let alphabet = key_alphabet(spec);
    // hat listener?
    for sprite in &mut spec.sprites {
        for script in &mut sprite.scripts {
            if script.id == point.block_id {
                if let HatEvent::KeyPressed(key) = &mut script.hat {
                    if let Some(pick) = pick_other(&alphabet, key, rng) {
                        *key = pick.clone();
                    }
                }
                return;
            }
        }
    }
    // keyDown sensing site
    mutate_expr_site(spec, &point.block_id, point.site, &|e| matches!(e, Expr::KeyDown(_)), &mut |e| {
        if let Expr::KeyDown(key) = e {
            if let Some(pick) = pick_other(&alphabet, key, rng) {
                *key = pick.clone();
            }
        }
    });
}

fn apply_sbd(spec: &mut GameSpec, point: &MutationPoint) {
    fn delete_in(blocks: &mut Vec<Block>, id: &BlockId) -> bool {
        if let Some(pos) = blocks.iter().position(|b| &b.id == id) {
            let removed = blocks.remove(pos);
            // a control block's body is spliced into the parent sequence
            let mut bodies = Vec::new();
            match removed.op {
                Opcode::If { then_body, .. } => bodies.push(then_body),
                Opcode::IfElse { then_body, else_body, .. } => {
                    bodies.push(then_body);
                    bodies.push(else_body);
                }
                Opcode::Repeat { body, .. }
                | Opcode::RepeatUntil { body, .. }
                | Opcode::Forever { body } => bodies.push(body),
                _ => {}
            }
            let mut insert_at = pos;
            for body in bodies {
                for b in body {
                    blocks.insert(insert_at, b);
                    insert_at += 1;
                }
            }
            return true;
        }
        for b in blocks.iter_mut() {
            for body in b.op.bodies_mut() {
                if delete_in(body, id) {
                    return true;
                }
            }
        }
        false
    }
    for sprite in &mut spec.sprites {
        for script in &mut sprite.scripts {
            if delete_in(&mut script.body, &point.block_id) {
                break;
            }
        }
        // deleting a script's only block drops the script entirely
        sprite.scripts.retain(|s| !s.body.is_empty());
    }
}

fn apply_sdm(spec: &mut GameSpec, point: &MutationPoint) {
    for sprite in &mut spec.sprites {
        sprite.scripts.retain(|s| s.id != point.block_id);
    }
}

enum BinOpClass {
    Arithmetic,
    Relational,
}

fn apply_binop(spec: &mut GameSpec, point: &MutationPoint, rng: &mut Pcg32, class: BinOpClass) {
    let (pred, choices): (fn(&Expr) -> bool, &[BinOp]) = match class {
        BinOpClass::Arithmetic => (
            |e: &Expr| matches!(e, Expr::Bin(op, ..) if op.is_arithmetic()),
            &[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod],
        ),
        BinOpClass::Relational => (
            |e: &Expr| matches!(e, Expr::Bin(op, ..) if op.is_relational()),
            &[BinOp::Lt, BinOp::Gt, BinOp::Eq],
        ),
    };
    let pick = {
        let mut options = choices.to_vec();
        move |current: BinOp, rng: &mut Pcg32| {
            options.retain(|o| *o != current);
            options[rng.index(options.len())]
        }
    };
    let mut pick = Some(pick);
    mutate_expr_site(spec, &point.block_id, point.site, &pred, &mut |e| {
        if let Expr::Bin(op, ..) = e {
            if let Some(p) = pick.take() {
                let mut p = p;
                *op = p(*op, rng);
            }
        }
    });
}

fn apply_lor(spec: &mut GameSpec, point: &MutationPoint) {
    mutate_expr_site(
        spec,
        &point.block_id,
        point.site,
        &|e| matches!(e, Expr::And(..) | Expr::Or(..)),
        &mut |e| {
            let replacement = match e {
                Expr::And(a, b) => Expr::Or(a.clone(), b.clone()),
                Expr::Or(a, b) => Expr::And(a.clone(), b.clone()),
                _ => return,
            };
            *e = replacement;
        },
    );
}

fn apply_ncm(spec: &mut GameSpec, point: &MutationPoint) {
    fn negate(cond: &mut Expr) {
        // double application restores the original
        let new = match &*cond {
            Expr::Not(inner) => (**inner).clone(),
            other => Expr::Not(Box::new(other.clone())),
        };
        *cond = new;
    }
    fn walk(blocks: &mut [Block], id: &BlockId) -> bool {
        for b in blocks {
            if &b.id == id {
                match &mut b.op {
                    Opcode::If { cond, .. }
                    | Opcode::IfElse { cond, .. }
                    | Opcode::RepeatUntil { cond, .. } => negate(cond),
                    _ => {}
                }
                return true;
            }
            for body in b.op.bodies_mut() {
                if walk(body, id) {
                    return true;
                }
            }
        }
        false
    }
    for sprite in &mut spec.sprites {
        for script in &mut sprite.scripts {
            if walk(&mut script.body, &point.block_id) {
                return;
            }
        }
    }
}

fn apply_vrm(spec: &mut GameSpec, point: &MutationPoint, rng: &mut Pcg32) {
    let names: Vec<String> = spec.variables.iter().map(|v| v.name.clone()).collect();
    // site numbering: expression references first, then the setVar /
    // changeVar target slot
    let expr_sites = {
        let mut found = 0usize;
        let mut counting = |b: &Block| {
            found += count_sites_in_block(b, &|e| matches!(e, Expr::Var(_)));
        };
        let mut hit = false;
        spec.visit_blocks(|b| {
            if b.id == point.block_id && !hit {
                counting(b);
                hit = true;
            }
        });
        found
    };
    if point.site < expr_sites {
        mutate_expr_site(spec, &point.block_id, point.site, &|e| matches!(e, Expr::Var(_)), &mut |e| {
            if let Expr::Var(name) = e {
                if let Some(pick) = pick_other(&names, name, rng) {
                    *name = pick.clone();
                }
            }
        });
        return;
    }
    // the assignment target
    fn walk(blocks: &mut [Block], id: &BlockId, f: &mut impl FnMut(&mut String)) -> bool {
        for b in blocks {
            if &b.id == id {
                match &mut b.op {
                    Opcode::SetVar(name, _) | Opcode::ChangeVar(name, _) => f(name),
                    _ => {}
                }
                return true;
            }
            for body in b.op.bodies_mut() {
                if walk(body, id, f) {
                    return true;
                }
            }
        }
        false
    }
    for sprite in &mut spec.sprites {
        for script in &mut sprite.scripts {
            let done = walk(&mut script.body, &point.block_id, &mut |name| {
                if let Some(pick) = pick_other(&names, name, rng) {
                    *name = pick.clone();
                }
            });
            if done {
                return;
            }
        }
    }
}

/// Applies `edit` to the `site`-th expression node matching `pred` within
/// the given block, counting in visit order.
fn mutate_expr_site(
    spec: &mut GameSpec,
    block_id: &BlockId,
    site: usize,
    pred: &impl Fn(&Expr) -> bool,
    edit: &mut impl FnMut(&mut Expr),
) {
    fn walk_expr(
        e: &mut Expr,
        pred: &impl Fn(&Expr) -> bool,
        seen: &mut usize,
        site: usize,
        edit: &mut impl FnMut(&mut Expr),
    ) -> bool {
        if pred(e) {
            if *seen == site {
                edit(e);
                return true;
            }
            *seen += 1;
        }
        // match children() order: Bin/And/Or/RandomInRange push (a, b) and
        // pop b first, so visit b then a
        match e {
            Expr::Bin(_, a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::RandomInRange(a, b) => {
                if walk_expr(b, pred, seen, site, edit) {
                    return true;
                }
                walk_expr(a, pred, seen, site, edit)
            }
            Expr::Not(a) => walk_expr(a, pred, seen, site, edit),
            _ => false,
        }
    }
    fn walk_blocks(
        blocks: &mut [Block],
        block_id: &BlockId,
        pred: &impl Fn(&Expr) -> bool,
        site: usize,
        edit: &mut impl FnMut(&mut Expr),
    ) -> bool {
        for b in blocks {
            if &b.id == block_id {
                let mut seen = 0usize;
                let exprs: Vec<&mut Expr> = match &mut b.op {
                    Opcode::Move(e)
                    | Opcode::ChangeX(e)
                    | Opcode::ChangeY(e)
                    | Opcode::PointDirection(e)
                    | Opcode::Wait(e)
                    | Opcode::SetSize(e)
                    | Opcode::SetVar(_, e)
                    | Opcode::ChangeVar(_, e) => vec![e],
                    Opcode::SetXY(a, b) => vec![a, b],
                    Opcode::If { cond, .. }
                    | Opcode::IfElse { cond, .. }
                    | Opcode::RepeatUntil { cond, .. } => vec![cond],
                    Opcode::Repeat { times, .. } => vec![times],
                    _ => Vec::new(),
                };
                for e in exprs {
                    if walk_expr(e, pred, &mut seen, site, edit) {
                        return true;
                    }
                }
                return true;
            }
            for body in b.op.bodies_mut() {
                if walk_blocks(body, block_id, pred, site, edit) {
                    return true;
                }
            }
        }
        false
    }
    for sprite in &mut spec.sprites {
        for script in &mut sprite.scripts {
            if walk_blocks(&mut script.body, block_id, pred, site, edit) {
                return;
            }
        }
    }
}

/// Generates the mutant set: all points per operator, or a uniform sample
/// without replacement of `cap` points when there are more. Deterministic
/// under the rng seed. Mutants that fail validation are skipped (the
/// operators are designed not to produce any).
pub fn generate_mutant_set(spec: &GameSpec, rng: &mut Pcg32, cap: usize) -> Vec<Mutant> {
    let mut out = Vec::new();
    for operator in ALL_OPERATORS {
        let points = enumerate_points(spec, operator);
        let chosen: Vec<&MutationPoint> = if points.len() <= cap {
            points.iter().collect()
        } else {
            rng.sample_indices(points.len(), cap).into_iter().map(|i| &points[i]).collect()
        };
        for point in chosen {
            let mut mutant = apply_point(spec, point, rng);
            if !crate::spec::validate_spec(&mutant.spec).is_empty() {
                continue;
            }
            if crate::spec::serialize_game(&mutant.spec) == crate::spec::serialize_game(spec) {
                // identity mutations cannot happen by construction; guard anyway
                continue;
            }
            mutant.index = out.len();
            out.push(mutant);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{parse_game, serialize_game, validate_spec};

    const GAME: &str = "game M\n\nvar score 0 range 0 5\nvar speed 4\n\nsprite player\n  costume c 10\n  script hp keyPressed right\n    p1 changeX (var speed)\n  script hq greenFlag\n    q1 forever\n      q2 if (and (keyDown left) (< (var score) 3))\n        q3 changeVar score (+ 1 1)\n        q4 say \"hello\"\n";

    fn spec() -> GameSpec {
        parse_game(GAME).unwrap()
    }

    #[test]
    fn krm_counts_hats_and_keydown() {
        let points = enumerate_points(&spec(), MutationOperator::Krm);
        // one keyPressed hat + one keyDown sensing site
        assert_eq!(points.len(), 2);
    }

    #[test]
    fn sbd_counts_every_block() {
        let points = enumerate_points(&spec(), MutationOperator::Sbd);
        assert_eq!(points.len(), 5, "p1, q1, q2, q3, q4");
    }

    #[test]
    fn vrm_needs_two_variables() {
        let points = enumerate_points(&spec(), MutationOperator::Vrm);
        // (var speed) in p1, (var score) in q2, target of q3
        assert_eq!(points.len(), 3);

        let single = parse_game("game S\n\nvar only 0\n\nsprite s\n  costume c 5\n  script h greenFlag\n    b1 setVar only (var only)\n").unwrap();
        assert!(enumerate_points(&single, MutationOperator::Vrm).is_empty());
    }

    #[test]
    fn krm_picks_non_identity_key() {
        let base = spec();
        let hat_point = MutationPoint {
            operator: MutationOperator::Krm,
            block_id: BlockId::new("hp"),
            site: 0,
        };
        let mut rng = Pcg32::new(5);
        for _ in 0..20 {
            let mutant = apply_point(&base, &hat_point, &mut rng);
            let hat = &mutant.spec.sprites[0].scripts[0].hat;
            match hat {
                HatEvent::KeyPressed(k) => {
                    assert_ne!(k, "right");
                    assert!(["left", "up", "down", "space"].contains(&k.as_str()));
                }
                other => panic!("unexpected hat {other:?}"),
            }
        }
    }

    #[test]
    fn sbd_splices_control_bodies() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Sbd,
            block_id: BlockId::new("q2"),
            site: 0,
        };
        let mut rng = Pcg32::new(1);
        let mutant = apply_point(&base, &point, &mut rng);
        let mut count = 0;
        mutant.spec.visit_blocks(|_| count += 1);
        assert_eq!(count, 4, "exactly one block vanished");
        // q3, q4 now live directly inside the forever loop
        let forever = &mutant.spec.sprites[0].scripts[1].body[0];
        match &forever.op {
            Opcode::Forever { body } => {
                let ids: Vec<&str> = body.iter().map(|b| b.id.as_str()).collect();
                assert_eq!(ids, vec!["q3", "q4"]);
            }
            other => panic!("expected forever, got {other:?}"),
        }
    }

    #[test]
    fn sbd_on_sole_block_drops_script() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Sbd,
            block_id: BlockId::new("p1"),
            site: 0,
        };
        let mut rng = Pcg32::new(1);
        let mutant = apply_point(&base, &point, &mut rng);
        assert_eq!(mutant.spec.sprites[0].scripts.len(), 1, "empty script dropped");
    }

    #[test]
    fn sdm_removes_whole_script_including_hat() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Sdm,
            block_id: BlockId::new("hq"),
            site: 0,
        };
        let mut rng = Pcg32::new(1);
        let mutant = apply_point(&base, &point, &mut rng);
        assert_eq!(mutant.spec.sprites[0].scripts.len(), 1);
        assert_eq!(mutant.spec.sprites[0].scripts[0].id.as_str(), "hp");
    }

    #[test]
    fn aor_replaces_with_other_arithmetic() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Aor,
            block_id: BlockId::new("q3"),
            site: 0,
        };
        let mut rng = Pcg32::new(7);
        for _ in 0..10 {
            let mutant = apply_point(&base, &point, &mut rng);
            let text = serialize_game(&mutant.spec);
            assert!(!text.contains("(+ 1 1)"));
            assert!(
                text.contains("(- 1 1)")
                    || text.contains("(* 1 1)")
                    || text.contains("(/ 1 1)")
                    || text.contains("(mod 1 1)")
            );
        }
    }

    #[test]
    fn lor_swaps_and_or() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Lor,
            block_id: BlockId::new("q2"),
            site: 0,
        };
        let mut rng = Pcg32::new(1);
        let mutant = apply_point(&base, &point, &mut rng);
        assert!(serialize_game(&mutant.spec).contains("(or (keyDown left)"));
    }

    #[test]
    fn ncm_wraps_and_unwraps() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Ncm,
            block_id: BlockId::new("q2"),
            site: 0,
        };
        let mut rng = Pcg32::new(1);
        let once = apply_point(&base, &point, &mut rng);
        assert!(serialize_game(&once.spec).contains("(not (and"));
        let twice = apply_point(&once.spec, &point, &mut rng);
        assert_eq!(
            serialize_game(&twice.spec),
            serialize_game(&base),
            "double negation restores the original"
        );
    }

    #[test]
    fn mutants_validate_and_differ() {
        let base = spec();
        let mut rng = Pcg32::new(11);
        let mutants = generate_mutant_set(&base, &mut rng, 50);
        assert!(!mutants.is_empty());
        let base_text = serialize_game(&base);
        for m in &mutants {
            assert!(validate_spec(&m.spec).is_empty(), "mutant must stay valid");
            assert_ne!(serialize_game(&m.spec), base_text);
            // mutants still initialize
            let _ = crate::vm::init_vm(std::sync::Arc::new(m.spec.clone()), 0);
        }
    }

    #[test]
    fn caps_apply_per_operator() {
        let base = spec();
        let mut rng = Pcg32::new(2);
        let all = generate_mutant_set(&base, &mut rng, 50);
        let sbd_count = all.iter().filter(|m| m.origin.operator == MutationOperator::Sbd).count();
        assert_eq!(sbd_count, 5, "below the cap everything is generated");

        let mut rng = Pcg32::new(2);
        let capped = generate_mutant_set(&base, &mut rng, 2);
        let sbd_capped =
            capped.iter().filter(|m| m.origin.operator == MutationOperator::Sbd).count();
        assert_eq!(sbd_capped, 2);
    }

    #[test]
    fn same_seed_same_mutants() {
        let base = spec();
        let a = generate_mutant_set(&base, &mut Pcg32::new(3), 50);
        let b = generate_mutant_set(&base, &mut Pcg32::new(3), 50);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(serialize_game(&x.spec), serialize_game(&y.spec));
            assert_eq!(x.origin, y.origin);
        }
    }

    #[test]
    fn single_opcode_change_diffs_in_one_token_region() {
        let base = spec();
        let point = MutationPoint {
            operator: MutationOperator::Ror,
            block_id: BlockId::new("q2"),
            site: 0,
        };
        let mut rng = Pcg32::new(5);
        let mutant = apply_point(&base, &point, &mut rng);
        let before = serialize_game(&base);
        let after = serialize_game(&mutant.spec);
        let diff: Vec<(usize, (&str, &str))> = before
            .lines()
            .zip(after.lines())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, pair)| (i, pair))
            .collect();
        assert_eq!(diff.len(), 1, "exactly one line differs");
        assert!(diff[0].1 .0.contains("(<") && diff[0].1 .1.contains("q2"));
    }
}
