//! Semantic validation of a parsed [`GameSpec`].
//!
//! Violations are collected into a report instead of failing fast so that
//! callers (and the mutation engine's self-checks) see every problem at once.

use std::collections::BTreeSet;

use super::ast::*;

/// One rule violation. `block_id` is the offending statement where one
/// exists, otherwise the nearest named entity (sprite or variable name).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ValidationIssue {
    pub block_id: String,
    pub rule: String,
    pub message: String,
}

impl ValidationIssue {
    fn new(block_id: impl Into<String>, rule: &str, message: impl Into<String>) -> Self {
        ValidationIssue { block_id: block_id.into(), rule: rule.to_string(), message: message.into() }
    }
}

/// Keys a program may legally listen for.
pub fn known_keys() -> BTreeSet<&'static str> {
    let mut keys: BTreeSet<&'static str> = ["left", "right", "up", "down", "space"].into();
    for k in [
        "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r",
        "s", "t", "u", "v", "w", "x", "y", "z", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    ] {
        keys.insert(k);
    }
    keys
}

/// Checks every spec invariant and returns the full list of violations.
/// An empty report means the spec is valid.
pub fn validate_spec(spec: &GameSpec) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let keys = known_keys();

    // identifier uniqueness
    let mut sprite_names = BTreeSet::new();
    for s in &spec.sprites {
        if !sprite_names.insert(s.name.as_str()) {
            issues.push(ValidationIssue::new(
                format!("sprite:{}", s.name),
                "duplicate-identifier",
                format!("duplicate sprite name `{}`", s.name),
            ));
        }
    }
    let mut var_names = BTreeSet::new();
    for v in &spec.variables {
        if !var_names.insert(v.name.as_str()) {
            issues.push(ValidationIssue::new(
                format!("var:{}", v.name),
                "duplicate-identifier",
                format!("duplicate variable name `{}`", v.name),
            ));
        }
        if v.range.0 >= v.range.1 {
            issues.push(ValidationIssue::new(
                format!("var:{}", v.name),
                "bad-range",
                format!("variable `{}` range is empty", v.name),
            ));
        }
    }
    let mut ids = BTreeSet::new();
    for id in spec.all_statement_ids() {
        if !ids.insert(id.clone()) {
            issues.push(ValidationIssue::new(
                id.as_str(),
                "duplicate-identifier",
                format!("duplicate block id `{id}`"),
            ));
        }
    }

    // stage geometry
    for r in &spec.stage.color_regions {
        let inside = r.x1 >= -STAGE_HALF_WIDTH
            && r.x2 <= STAGE_HALF_WIDTH
            && r.y1 >= -STAGE_HALF_HEIGHT
            && r.y2 <= STAGE_HALF_HEIGHT;
        if !inside {
            issues.push(ValidationIssue::new(
                format!("region:{}", r.color),
                "region-out-of-bounds",
                format!("region `{}` exceeds the stage rectangle", r.color),
            ));
        }
    }
    let colors: BTreeSet<&str> =
        spec.stage.color_regions.iter().map(|r| r.color.as_str()).collect();

    // win statement references
    for id in &spec.win_statements {
        if !ids.contains(id) {
            issues.push(ValidationIssue::new(
                id.as_str(),
                "unresolved-reference",
                format!("win statement `{id}` does not exist"),
            ));
        }
    }

    for sprite in &spec.sprites {
        let sid = format!("sprite:{}", sprite.name);
        if sprite.costumes.is_empty() {
            issues.push(ValidationIssue::new(&sid, "missing-costume", "sprite has no costumes"));
        }
        let mut costume_ids = BTreeSet::new();
        for c in &sprite.costumes {
            if !costume_ids.insert(c.id.as_str()) {
                issues.push(ValidationIssue::new(
                    &sid,
                    "duplicate-identifier",
                    format!("duplicate costume id `{}`", c.id),
                ));
            }
            if c.radius <= 0.0 {
                issues.push(ValidationIssue::new(
                    &sid,
                    "bad-costume",
                    format!("costume `{}` radius must be positive", c.id),
                ));
            }
        }
        if sprite.init_x.abs() > STAGE_HALF_WIDTH || sprite.init_y.abs() > STAGE_HALF_HEIGHT {
            issues.push(ValidationIssue::new(
                &sid,
                "position-out-of-bounds",
                "initial position lies outside the stage",
            ));
        }
        if sprite.init_direction < -180.0 || sprite.init_direction > 180.0 {
            issues.push(ValidationIssue::new(
                &sid,
                "bad-direction",
                "initial direction must lie in [-180, 180]",
            ));
        }
        if sprite.init_size <= 0.0 {
            issues.push(ValidationIssue::new(&sid, "bad-size", "initial size must be positive"));
        }

        for script in &sprite.scripts {
            if script.body.is_empty() {
                issues.push(ValidationIssue::new(
                    script.id.as_str(),
                    "empty-script",
                    "script body must not be empty",
                ));
            }
            if matches!(script.hat, HatEvent::WhenIStartAsClone) && !sprite.clonable {
                issues.push(ValidationIssue::new(
                    script.id.as_str(),
                    "clone-hat-on-non-clonable",
                    format!("sprite `{}` is not clonable", sprite.name),
                ));
            }
            if let HatEvent::KeyPressed(key) = &script.hat {
                if !keys.contains(key.as_str()) {
                    issues.push(ValidationIssue::new(
                        script.id.as_str(),
                        "unknown-key",
                        format!("unknown key `{key}`"),
                    ));
                }
            }
            check_sequence(spec, sprite, &script.body, &keys, &colors, &mut issues);
        }
    }

    issues
}

fn check_sequence(
    spec: &GameSpec,
    sprite: &SpriteSpec,
    blocks: &[Block],
    keys: &BTreeSet<&'static str>,
    colors: &BTreeSet<&str>,
    issues: &mut Vec<ValidationIssue>,
) {
    for (i, block) in blocks.iter().enumerate() {
        if block.op.is_terminal() && i + 1 != blocks.len() {
            issues.push(ValidationIssue::new(
                block.id.as_str(),
                "unreachable-after",
                format!("blocks after `{}` can never run", block.op.mnemonic()),
            ));
        }
        check_block(spec, sprite, block, keys, colors, issues);
        for body in block.op.bodies() {
            check_sequence(spec, sprite, body, keys, colors, issues);
        }
    }
}

fn check_block(
    spec: &GameSpec,
    sprite: &SpriteSpec,
    block: &Block,
    keys: &BTreeSet<&'static str>,
    colors: &BTreeSet<&str>,
    issues: &mut Vec<ValidationIssue>,
) {
    let id = block.id.as_str();
    match &block.op {
        Opcode::SetVar(name, _) | Opcode::ChangeVar(name, _) => {
            if spec.find_variable(name).is_none() {
                issues.push(ValidationIssue::new(
                    id,
                    "unresolved-reference",
                    format!("unknown variable `{name}`"),
                ));
            }
        }
        Opcode::SwitchCostume(costume) => {
            if !sprite.costumes.iter().any(|c| &c.id == costume) {
                issues.push(ValidationIssue::new(
                    id,
                    "unresolved-reference",
                    format!("sprite `{}` has no costume `{costume}`", sprite.name),
                ));
            }
        }
        Opcode::CreateClone(target) => match spec.find_sprite(target) {
            None => issues.push(ValidationIssue::new(
                id,
                "unresolved-reference",
                format!("unknown sprite `{target}`"),
            )),
            Some(s) if !s.clonable => issues.push(ValidationIssue::new(
                id,
                "clone-of-non-clonable",
                format!("sprite `{target}` is not clonable"),
            )),
            _ => {}
        },
        _ => {}
    }

    // expression contexts: conditions must be Bool, other slots numeric
    let expected: Vec<(&Expr, ExprType)> = match &block.op {
        Opcode::If { cond, .. }
        | Opcode::IfElse { cond, .. }
        | Opcode::RepeatUntil { cond, .. } => vec![(cond, ExprType::Bool)],
        other => other.exprs().into_iter().map(|e| (e, ExprType::Num)).collect(),
    };
    for (expr, want) in expected {
        check_expr(spec, expr, want, id, keys, colors, issues);
    }
}

fn check_expr(
    spec: &GameSpec,
    expr: &Expr,
    want: ExprType,
    block_id: &str,
    keys: &BTreeSet<&'static str>,
    colors: &BTreeSet<&str>,
    issues: &mut Vec<ValidationIssue>,
) {
    let got = expr.static_type();
    // Text coerces to Num at runtime (with a runtime fault if unparseable),
    // mirroring the evaluator; Bool never coerces.
    let compatible = matches!(
        (want, got),
        (ExprType::Num, ExprType::Num)
            | (ExprType::Num, ExprType::Text)
            | (ExprType::Bool, ExprType::Bool)
            | (ExprType::Text, _)
    );
    if !compatible {
        issues.push(ValidationIssue::new(
            block_id,
            "type-mismatch",
            format!("expected {want:?} expression, found {got:?}"),
        ));
    }

    match expr {
        Expr::Bin(op, a, b) => {
            if op.is_arithmetic() || matches!(op, BinOp::Lt | BinOp::Gt) {
                check_expr(spec, a, ExprType::Num, block_id, keys, colors, issues);
                check_expr(spec, b, ExprType::Num, block_id, keys, colors, issues);
            } else {
                // `=` compares numbers or text
                check_expr(spec, a, ExprType::Text, block_id, keys, colors, issues);
                check_expr(spec, b, ExprType::Text, block_id, keys, colors, issues);
                for side in [a, b] {
                    if side.static_type() == ExprType::Bool {
                        issues.push(ValidationIssue::new(
                            block_id,
                            "type-mismatch",
                            "`=` cannot compare boolean expressions",
                        ));
                    }
                }
            }
        }
        Expr::And(a, b) | Expr::Or(a, b) => {
            check_expr(spec, a, ExprType::Bool, block_id, keys, colors, issues);
            check_expr(spec, b, ExprType::Bool, block_id, keys, colors, issues);
        }
        Expr::Not(a) => check_expr(spec, a, ExprType::Bool, block_id, keys, colors, issues),
        Expr::RandomInRange(a, b) => {
            check_expr(spec, a, ExprType::Num, block_id, keys, colors, issues);
            check_expr(spec, b, ExprType::Num, block_id, keys, colors, issues);
        }
        Expr::Touching(name) | Expr::DistanceTo(name) | Expr::Attr(name, _) => {
            if spec.find_sprite(name).is_none() {
                issues.push(ValidationIssue::new(
                    block_id,
                    "unresolved-reference",
                    format!("unknown sprite `{name}`"),
                ));
            }
        }
        Expr::TouchingColor(color) => {
            if !colors.contains(color.as_str()) {
                issues.push(ValidationIssue::new(
                    block_id,
                    "unresolved-reference",
                    format!("no stage region with color `{color}`"),
                ));
            }
        }
        Expr::KeyDown(key) => {
            if !keys.contains(key.as_str()) {
                issues.push(ValidationIssue::new(
                    block_id,
                    "unknown-key",
                    format!("unknown key `{key}`"),
                ));
            }
        }
        Expr::Var(name) if spec.find_variable(name).is_none() => {
            issues.push(ValidationIssue::new(
                block_id,
                "unresolved-reference",
                format!("unknown variable `{name}`"),
            ));
        }
        _ => {}
    }
}
