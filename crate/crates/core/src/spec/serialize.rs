//! Canonical serializer for the `.game` DSL.
//!
//! Output is deterministic: fixed attribute order, two-space indentation,
//! numeric literals in shortest round-trip decimal form, win ids sorted.
//! `serialize(parse(serialize(x))) == serialize(x)` byte for byte.

use std::fmt::Write;

use super::ast::*;

fn num(n: f64) -> String {
    // f64 Display already yields the shortest decimal that round-trips.
    let n = if n == 0.0 { 0.0 } else { n };
    format!("{n}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

pub fn serialize_expr(e: &Expr) -> String {
    match e {
        Expr::Num(n) => num(*n),
        Expr::Str(s) => format!("\"{}\"", escape(s)),
        Expr::Bin(op, a, b) => {
            format!("({} {} {})", op.mnemonic(), serialize_expr(a), serialize_expr(b))
        }
        Expr::And(a, b) => format!("(and {} {})", serialize_expr(a), serialize_expr(b)),
        Expr::Or(a, b) => format!("(or {} {})", serialize_expr(a), serialize_expr(b)),
        Expr::Not(a) => format!("(not {})", serialize_expr(a)),
        Expr::RandomInRange(a, b) => {
            format!("(randomInRange {} {})", serialize_expr(a), serialize_expr(b))
        }
        Expr::Touching(s) => format!("(touching {s})"),
        Expr::TouchingEdge => "(touchingEdge)".to_string(),
        Expr::TouchingColor(c) => format!("(touchingColor {c})"),
        Expr::TouchingMouse => "(touchingMouse)".to_string(),
        Expr::MouseDown => "(mouseDown)".to_string(),
        Expr::DistanceTo(s) => format!("(distanceTo {s})"),
        Expr::KeyDown(k) => format!("(keyDown {k})"),
        Expr::Answer => "(answer)".to_string(),
        Expr::Var(v) => format!("(var {v})"),
        Expr::Attr(s, a) => format!("(attr {s} {})", a.mnemonic()),
    }
}

fn hat_text(hat: &HatEvent) -> String {
    match hat {
        HatEvent::GreenFlag => "greenFlag".to_string(),
        HatEvent::KeyPressed(k) => format!("keyPressed {k}"),
        HatEvent::ClickSprite => "clickSprite".to_string(),
        HatEvent::ClickStage => "clickStage".to_string(),
        HatEvent::WhenIStartAsClone => "whenIStartAsClone".to_string(),
        HatEvent::WhenBroadcastReceived(m) => format!("whenBroadcastReceived {m}"),
        HatEvent::WhenAnswerReceived => "whenAnswerReceived".to_string(),
    }
}

fn write_block(out: &mut String, block: &Block, depth: usize) {
    let pad = "  ".repeat(depth);
    let id = &block.id;
    match &block.op {
        Opcode::If { cond, then_body } => {
            let _ = writeln!(out, "{pad}{id} if {}", serialize_expr(cond));
            write_body(out, then_body, depth + 1);
        }
        Opcode::IfElse { cond, then_body, else_body } => {
            let _ = writeln!(out, "{pad}{id} ifElse {}", serialize_expr(cond));
            write_body(out, then_body, depth + 1);
            let _ = writeln!(out, "{pad}else");
            write_body(out, else_body, depth + 1);
        }
        Opcode::Repeat { times, body } => {
            let _ = writeln!(out, "{pad}{id} repeat {}", serialize_expr(times));
            write_body(out, body, depth + 1);
        }
        Opcode::RepeatUntil { cond, body } => {
            let _ = writeln!(out, "{pad}{id} repeatUntil {}", serialize_expr(cond));
            write_body(out, body, depth + 1);
        }
        Opcode::Forever { body } => {
            let _ = writeln!(out, "{pad}{id} forever");
            write_body(out, body, depth + 1);
        }
        Opcode::Move(e) => {
            let _ = writeln!(out, "{pad}{id} move {}", serialize_expr(e));
        }
        Opcode::SetXY(a, b) => {
            let _ = writeln!(out, "{pad}{id} setXY {} {}", serialize_expr(a), serialize_expr(b));
        }
        Opcode::ChangeX(e) => {
            let _ = writeln!(out, "{pad}{id} changeX {}", serialize_expr(e));
        }
        Opcode::ChangeY(e) => {
            let _ = writeln!(out, "{pad}{id} changeY {}", serialize_expr(e));
        }
        Opcode::PointDirection(e) => {
            let _ = writeln!(out, "{pad}{id} pointDirection {}", serialize_expr(e));
        }
        Opcode::GotoRandom => {
            let _ = writeln!(out, "{pad}{id} gotoRandom");
        }
        Opcode::Wait(e) => {
            let _ = writeln!(out, "{pad}{id} wait {}", serialize_expr(e));
        }
        Opcode::StopAll => {
            let _ = writeln!(out, "{pad}{id} stopAll");
        }
        Opcode::StopScript => {
            let _ = writeln!(out, "{pad}{id} stopScript");
        }
        Opcode::SetVar(v, e) => {
            let _ = writeln!(out, "{pad}{id} setVar {v} {}", serialize_expr(e));
        }
        Opcode::ChangeVar(v, e) => {
            let _ = writeln!(out, "{pad}{id} changeVar {v} {}", serialize_expr(e));
        }
        Opcode::SwitchCostume(c) => {
            let _ = writeln!(out, "{pad}{id} switchCostume {c}");
        }
        Opcode::Hide => {
            let _ = writeln!(out, "{pad}{id} hide");
        }
        Opcode::Show => {
            let _ = writeln!(out, "{pad}{id} show");
        }
        Opcode::SetSize(e) => {
            let _ = writeln!(out, "{pad}{id} setSize {}", serialize_expr(e));
        }
        Opcode::Say(s) => {
            let _ = writeln!(out, "{pad}{id} say \"{}\"", escape(s));
        }
        Opcode::Broadcast(m) => {
            let _ = writeln!(out, "{pad}{id} broadcast {m}");
        }
        Opcode::Ask(s) => {
            let _ = writeln!(out, "{pad}{id} ask \"{}\"", escape(s));
        }
        Opcode::CreateClone(s) => {
            let _ = writeln!(out, "{pad}{id} createClone {s}");
        }
        Opcode::DeleteClone => {
            let _ = writeln!(out, "{pad}{id} deleteClone");
        }
    }
}

fn write_body(out: &mut String, blocks: &[Block], depth: usize) {
    for b in blocks {
        write_block(out, b, depth);
    }
}

/// Renders the spec in canonical form.
pub fn serialize_game(spec: &GameSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "game {}", spec.name);

    if !spec.stage.color_regions.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "stage");
        for r in &spec.stage.color_regions {
            let _ = writeln!(
                out,
                "  region {} {} {} {} {}",
                r.color,
                num(r.x1),
                num(r.y1),
                num(r.x2),
                num(r.y2)
            );
        }
    }

    if !spec.variables.is_empty() {
        let _ = writeln!(out);
        for v in &spec.variables {
            if v.range == DEFAULT_VAR_RANGE {
                let _ = writeln!(out, "var {} {}", v.name, num(v.init));
            } else {
                let _ = writeln!(
                    out,
                    "var {} {} range {} {}",
                    v.name,
                    num(v.init),
                    num(v.range.0),
                    num(v.range.1)
                );
            }
        }
    }

    for sprite in &spec.sprites {
        let _ = writeln!(out);
        let _ = writeln!(out, "sprite {}", sprite.name);
        for c in &sprite.costumes {
            let _ = writeln!(out, "  costume {} {}", c.id, num(c.radius));
        }
        let _ = writeln!(out, "  pos {} {}", num(sprite.init_x), num(sprite.init_y));
        let _ = writeln!(out, "  size {}", num(sprite.init_size));
        let _ = writeln!(out, "  direction {}", num(sprite.init_direction));
        let style = match sprite.rotation_style {
            RotationStyle::AllAround => "all_around",
            RotationStyle::Fixed => "fixed",
        };
        let _ = writeln!(out, "  rotation {style}");
        let _ = writeln!(out, "  clonable {}", sprite.clonable);
        for script in &sprite.scripts {
            let _ = writeln!(out, "  script {} {}", script.id, hat_text(&script.hat));
            write_body(&mut out, &script.body, 2);
        }
    }

    if !spec.win_statements.is_empty() {
        let mut ids: Vec<&BlockId> = spec.win_statements.iter().collect();
        ids.sort();
        let _ = writeln!(out);
        let _ = write!(out, "win");
        for id in ids {
            let _ = write!(out, " {id}");
        }
        let _ = writeln!(out);
    }

    out
}
