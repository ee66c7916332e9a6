//! Line-oriented parser for the `.game` DSL.
//!
//! The format is strict: one block per line, nested bodies indented by two
//! spaces, expressions written in parenthesized prefix form. `#` starts a
//! comment that runs to the end of the line.
//!
//! ```text
//! game FruitCatching
//!
//! var score 0 range 0 5
//!
//! sprite bowl
//!   costume dish 40
//!   pos 0 -150
//!   size 100
//!   direction 90
//!   rotation fixed
//!   clonable false
//!   script s1 greenFlag
//!     b1 forever
//!       b2 if (keyDown left)
//!         b3 changeX 12
//!
//! win b3
//! ```

use std::collections::BTreeMap;

use super::ast::*;
use super::validate::validate_spec;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError { line, col, message: message.into() }
    }
}

/// Source lines of declarations, used to attach positions to validation
/// failures reported by [`parse_game`].
pub type LineMap = BTreeMap<String, usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Num(f64),
    Str(&'a str),
    LParen,
    RParen,
}

#[derive(Clone)]
struct Line<'a> {
    number: usize,
    indent: usize,
    toks: Vec<(Tok<'a>, usize)>,
}

fn lex_line(number: usize, raw: &str) -> Result<Option<Line<'_>>, ParseError> {
    // A '#' inside a string literal is content, not a comment.
    let mut in_string = false;
    let mut escaped = false;
    let mut comment_start = None;
    for (i, b) in raw.bytes().enumerate() {
        match b {
            _ if escaped => escaped = false,
            b'\\' if in_string => escaped = true,
            b'"' => in_string = !in_string,
            b'#' if !in_string => {
                comment_start = Some(i);
                break;
            }
            _ => {}
        }
    }
    let without_comment = match comment_start {
        Some(pos) => &raw[..pos],
        None => raw,
    };
    let trimmed_end = without_comment.trim_end();
    if trimmed_end.trim().is_empty() {
        return Ok(None);
    }
    let indent_chars = trimmed_end.len() - trimmed_end.trim_start().len();
    if trimmed_end[..indent_chars].contains('\t') {
        return Err(ParseError::new(number, 1, "tabs are not allowed in indentation"));
    }
    if indent_chars % 2 != 0 {
        return Err(ParseError::new(number, 1, "indentation must be a multiple of two spaces"));
    }

    let mut toks = Vec::new();
    let bytes = trimmed_end.as_bytes();
    let mut i = indent_chars;
    while i < bytes.len() {
        let col = i + 1;
        match bytes[i] {
            b' ' => i += 1,
            b'(' => {
                toks.push((Tok::LParen, col));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, col));
                i += 1;
            }
            b'"' => {
                let start = i + 1;
                let mut j = start;
                let mut ok = false;
                while j < bytes.len() {
                    match bytes[j] {
                        b'\\' => j += 2,
                        b'"' => {
                            ok = true;
                            break;
                        }
                        _ => j += 1,
                    }
                }
                if !ok {
                    return Err(ParseError::new(number, col, "unterminated string literal"));
                }
                toks.push((Tok::Str(&trimmed_end[start..j]), col));
                i = j + 1;
            }
            c if c.is_ascii_digit() || c == b'-' || c == b'.' || c == b'+' => {
                let start = i;
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'-' || bytes[i] == b'+')
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
                {
                    i += 1;
                }
                let text = &trimmed_end[start..i];
                // Bare operator mnemonics (+, -, *, /) appear in prefix position.
                if text == "-" || text == "+" {
                    toks.push((Tok::Ident(text), col));
                    continue;
                }
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::new(number, col, format!("bad number `{text}`")))?;
                if !value.is_finite() {
                    return Err(ParseError::new(number, col, "numbers must be finite"));
                }
                // Normalize -0 so canonical serialization is stable.
                let value = if value == 0.0 { 0.0 } else { value };
                toks.push((Tok::Num(value), col));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !b" ()\"".contains(&bytes[i]) {
                    i += 1;
                }
                toks.push((Tok::Ident(&trimmed_end[start..i]), col));
            }
        }
    }
    Ok(Some(Line { number, indent: indent_chars / 2, toks }))
}

struct Cursor<'l, 'a> {
    line: &'l Line<'a>,
    pos: usize,
}

impl<'l, 'a> Cursor<'l, 'a> {
    fn new(line: &'l Line<'a>) -> Self {
        Cursor { line, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let col = self
            .line
            .toks
            .get(self.pos)
            .map(|t| t.1)
            .unwrap_or_else(|| self.line.toks.last().map(|t| t.1 + 1).unwrap_or(1));
        ParseError::new(self.line.number, col, message)
    }

    fn peek(&self) -> Option<&Tok<'a>> {
        self.line.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok<'a>> {
        let t = self.line.toks.get(self.pos).map(|t| t.0);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s.to_string()),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(n),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Str(s)) => Ok(unescape(s)),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) if s == kw => Ok(()),
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos == self.line.toks.len() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Str(s)) => Ok(Expr::Str(unescape(s))),
            Some(Tok::LParen) => {
                let op = match self.next() {
                    Some(Tok::Ident(s)) => s.to_string(),
                    _ => return Err(self.err("expected operator")),
                };
                let e = self.compound(&op)?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(self.err("expected `)`")),
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn compound(&mut self, op: &str) -> Result<Expr, ParseError> {
        let bin = |o: BinOp, c: &mut Self| -> Result<Expr, ParseError> {
            let a = c.expr()?;
            let b = c.expr()?;
            Ok(Expr::Bin(o, Box::new(a), Box::new(b)))
        };
        match op {
            "+" => bin(BinOp::Add, self),
            "-" => bin(BinOp::Sub, self),
            "*" => bin(BinOp::Mul, self),
            "/" => bin(BinOp::Div, self),
            "mod" => bin(BinOp::Mod, self),
            "<" => bin(BinOp::Lt, self),
            ">" => bin(BinOp::Gt, self),
            "=" => bin(BinOp::Eq, self),
            "and" => Ok(Expr::And(Box::new(self.expr()?), Box::new(self.expr()?))),
            "or" => Ok(Expr::Or(Box::new(self.expr()?), Box::new(self.expr()?))),
            "not" => Ok(Expr::Not(Box::new(self.expr()?))),
            "randomInRange" => {
                Ok(Expr::RandomInRange(Box::new(self.expr()?), Box::new(self.expr()?)))
            }
            "touching" => Ok(Expr::Touching(self.ident("sprite name")?)),
            "touchingEdge" => Ok(Expr::TouchingEdge),
            "touchingColor" => Ok(Expr::TouchingColor(self.ident("color id")?)),
            "touchingMouse" => Ok(Expr::TouchingMouse),
            "mouseDown" => Ok(Expr::MouseDown),
            "distanceTo" => Ok(Expr::DistanceTo(self.ident("sprite name")?)),
            "keyDown" => Ok(Expr::KeyDown(self.ident("key name")?)),
            "answer" => Ok(Expr::Answer),
            "var" => Ok(Expr::Var(self.ident("variable name")?)),
            "attr" => {
                let sprite = self.ident("sprite name")?;
                let attr = self.ident("attribute")?;
                let attr = match attr.as_str() {
                    "x" => SpriteAttr::X,
                    "y" => SpriteAttr::Y,
                    "size" => SpriteAttr::Size,
                    "direction" => SpriteAttr::Direction,
                    "costume" => SpriteAttr::Costume,
                    other => return Err(self.err(format!("unknown attribute `{other}`"))),
                };
                Ok(Expr::Attr(sprite, attr))
            }
            other => Err(self.err(format!("unknown operator `{other}`"))),
        }
    }
}

pub(crate) fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    idx: usize,
    line_map: LineMap,
}

impl<'a> Parser<'a> {
    fn peek_line(&self) -> Option<&Line<'a>> {
        self.lines.get(self.idx)
    }

    fn take_line(&mut self) -> Option<Line<'a>> {
        let l = self.lines.get(self.idx).cloned();
        if l.is_some() {
            self.idx += 1;
        }
        l
    }

    fn parse_document(&mut self) -> Result<GameSpec, ParseError> {
        let first = self
            .take_line()
            .ok_or_else(|| ParseError::new(1, 1, "empty document; expected `game <name>`"))?;
        let mut c = Cursor::new(&first);
        c.keyword("game")?;
        let name = c.ident("game name")?;
        c.finish()?;

        let mut stage = StageSpec::default();
        let mut variables = Vec::new();
        let mut sprites: Vec<SpriteSpec> = Vec::new();
        let mut win = Vec::new();

        while let Some(line) = self.peek_line() {
            if line.indent != 0 {
                return Err(ParseError::new(line.number, 1, "unexpected indentation"));
            }
            let head = match line.toks.first() {
                Some((Tok::Ident(s), _)) => *s,
                _ => return Err(ParseError::new(line.number, 1, "expected a section keyword")),
            };
            match head {
                "stage" => {
                    let line_no = line.number;
                    self.idx += 1;
                    self.parse_stage(line_no, &mut stage)?;
                }
                "var" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("var")?;
                    let name = c.ident("variable name")?;
                    let init = c.number("initial value")?;
                    let range = if c.peek().is_some() {
                        c.keyword("range")?;
                        let lo = c.number("range low")?;
                        let hi = c.number("range high")?;
                        if lo >= hi {
                            return Err(c.err("range low must be below range high"));
                        }
                        (lo, hi)
                    } else {
                        DEFAULT_VAR_RANGE
                    };
                    c.finish()?;
                    self.line_map.insert(format!("var:{name}"), line.number);
                    variables.push(VarDecl { name, init, range });
                }
                "sprite" => {
                    let sprite = self.parse_sprite()?;
                    sprites.push(sprite);
                }
                "win" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("win")?;
                    while c.peek().is_some() {
                        win.push(BlockId::new(c.ident("block id")?));
                    }
                    c.finish()?;
                }
                other => {
                    return Err(ParseError::new(
                        line.number,
                        1,
                        format!("unknown section `{other}`"),
                    ))
                }
            }
        }

        win.sort();
        win.dedup();
        Ok(GameSpec { name, stage, variables, sprites, win_statements: win })
    }

    fn parse_stage(&mut self, _line_no: usize, stage: &mut StageSpec) -> Result<(), ParseError> {
        while let Some(line) = self.peek_line() {
            if line.indent == 0 {
                break;
            }
            if line.indent != 1 {
                return Err(ParseError::new(line.number, 1, "stage entries must be indented once"));
            }
            let line = self.take_line().unwrap();
            let mut c = Cursor::new(&line);
            c.keyword("region")?;
            let color = c.ident("color id")?;
            let x1 = c.number("x1")?;
            let y1 = c.number("y1")?;
            let x2 = c.number("x2")?;
            let y2 = c.number("y2")?;
            c.finish()?;
            stage.color_regions.push(ColorRegion {
                color,
                x1: x1.min(x2),
                y1: y1.min(y2),
                x2: x1.max(x2),
                y2: y1.max(y2),
            });
        }
        Ok(())
    }

    fn parse_sprite(&mut self) -> Result<SpriteSpec, ParseError> {
        let line = self.take_line().unwrap();
        let mut c = Cursor::new(&line);
        c.keyword("sprite")?;
        let name = c.ident("sprite name")?;
        c.finish()?;
        self.line_map.insert(format!("sprite:{name}"), line.number);

        let mut sprite = SpriteSpec {
            name,
            costumes: Vec::new(),
            init_x: 0.0,
            init_y: 0.0,
            init_size: 100.0,
            init_direction: 90.0,
            rotation_style: RotationStyle::AllAround,
            clonable: false,
            scripts: Vec::new(),
        };

        while let Some(line) = self.peek_line() {
            if line.indent == 0 {
                break;
            }
            if line.indent != 1 {
                return Err(ParseError::new(
                    line.number,
                    1,
                    "sprite attributes must be indented once",
                ));
            }
            let head = match line.toks.first() {
                Some((Tok::Ident(s), _)) => *s,
                _ => return Err(ParseError::new(line.number, 1, "expected a sprite attribute")),
            };
            match head {
                "costume" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("costume")?;
                    let id = c.ident("costume id")?;
                    let radius = c.number("radius")?;
                    c.finish()?;
                    sprite.costumes.push(Costume { id, radius });
                }
                "pos" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("pos")?;
                    sprite.init_x = c.number("x")?;
                    sprite.init_y = c.number("y")?;
                    c.finish()?;
                }
                "size" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("size")?;
                    sprite.init_size = c.number("size percent")?;
                    c.finish()?;
                }
                "direction" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("direction")?;
                    sprite.init_direction = c.number("direction")?;
                    c.finish()?;
                }
                "rotation" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("rotation")?;
                    let style = c.ident("rotation style")?;
                    sprite.rotation_style = match style.as_str() {
                        "all_around" => RotationStyle::AllAround,
                        "fixed" => RotationStyle::Fixed,
                        other => return Err(c.err(format!("unknown rotation style `{other}`"))),
                    };
                    c.finish()?;
                }
                "clonable" => {
                    let line = self.take_line().unwrap();
                    let mut c = Cursor::new(&line);
                    c.keyword("clonable")?;
                    let v = c.ident("true or false")?;
                    sprite.clonable = match v.as_str() {
                        "true" => true,
                        "false" => false,
                        other => return Err(c.err(format!("expected true/false, got `{other}`"))),
                    };
                    c.finish()?;
                }
                "script" => {
                    let script = self.parse_script()?;
                    sprite.scripts.push(script);
                }
                other => {
                    return Err(ParseError::new(
                        line.number,
                        1,
                        format!("unknown sprite attribute `{other}`"),
                    ))
                }
            }
        }
        Ok(sprite)
    }

    fn parse_script(&mut self) -> Result<Script, ParseError> {
        let line = self.take_line().unwrap();
        let line_no = line.number;
        let mut c = Cursor::new(&line);
        c.keyword("script")?;
        let id = c.ident("script id")?;
        let hat_kind = c.ident("hat event")?;
        let hat = match hat_kind.as_str() {
            "greenFlag" => HatEvent::GreenFlag,
            "keyPressed" => HatEvent::KeyPressed(c.ident("key name")?),
            "clickSprite" => HatEvent::ClickSprite,
            "clickStage" => HatEvent::ClickStage,
            "whenIStartAsClone" => HatEvent::WhenIStartAsClone,
            "whenBroadcastReceived" => HatEvent::WhenBroadcastReceived(c.ident("message")?),
            "whenAnswerReceived" => HatEvent::WhenAnswerReceived,
            other => return Err(c.err(format!("unknown hat event `{other}`"))),
        };
        c.finish()?;
        self.line_map.insert(id.clone(), line_no);

        let body = self.parse_body(2)?;
        if body.is_empty() {
            return Err(ParseError::new(line_no, 1, format!("script `{id}` has an empty body")));
        }
        Ok(Script { id: BlockId::new(id), hat, body })
    }

    /// Parses the block sequence at exactly `indent` levels, consuming any
    /// deeper lines as nested bodies.
    fn parse_body(&mut self, indent: usize) -> Result<Vec<Block>, ParseError> {
        let mut blocks = Vec::new();
        while let Some(line) = self.peek_line() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(ParseError::new(line.number, 1, "over-indented line"));
            }
            if matches!(line.toks.first(), Some((Tok::Ident("else"), _))) {
                break;
            }
            let block = self.parse_block(indent)?;
            blocks.push(block);
        }
        Ok(blocks)
    }

    fn parse_block(&mut self, indent: usize) -> Result<Block, ParseError> {
        let line = self.take_line().unwrap();
        let line_no = line.number;
        let mut c = Cursor::new(&line);
        let id = c.ident("block id")?;
        let opcode = c.ident("opcode")?;
        self.line_map.insert(id.clone(), line_no);

        let op = match opcode.as_str() {
            "move" => Opcode::Move(c.expr()?),
            "setXY" => Opcode::SetXY(c.expr()?, c.expr()?),
            "changeX" => Opcode::ChangeX(c.expr()?),
            "changeY" => Opcode::ChangeY(c.expr()?),
            "pointDirection" => Opcode::PointDirection(c.expr()?),
            "gotoRandom" => Opcode::GotoRandom,
            "if" => {
                let cond = c.expr()?;
                c.finish()?;
                let then_body = self.parse_body(indent + 1)?;
                return Ok(Block { id: BlockId::new(id), op: Opcode::If { cond, then_body } });
            }
            "ifElse" => {
                let cond = c.expr()?;
                c.finish()?;
                let then_body = self.parse_body(indent + 1)?;
                match self.peek_line() {
                    Some(l)
                        if l.indent == indent
                            && matches!(l.toks.first(), Some((Tok::Ident("else"), _))) =>
                    {
                        let else_line = self.take_line().unwrap();
                        if else_line.toks.len() != 1 {
                            return Err(ParseError::new(
                                else_line.number,
                                1,
                                "`else` takes no arguments",
                            ));
                        }
                    }
                    _ => {
                        return Err(ParseError::new(line_no, 1, "ifElse requires an `else` branch"))
                    }
                }
                let else_body = self.parse_body(indent + 1)?;
                return Ok(Block {
                    id: BlockId::new(id),
                    op: Opcode::IfElse { cond, then_body, else_body },
                });
            }
            "repeat" => {
                let times = c.expr()?;
                c.finish()?;
                let body = self.parse_body(indent + 1)?;
                return Ok(Block { id: BlockId::new(id), op: Opcode::Repeat { times, body } });
            }
            "repeatUntil" => {
                let cond = c.expr()?;
                c.finish()?;
                let body = self.parse_body(indent + 1)?;
                return Ok(Block { id: BlockId::new(id), op: Opcode::RepeatUntil { cond, body } });
            }
            "forever" => {
                c.finish()?;
                let body = self.parse_body(indent + 1)?;
                return Ok(Block { id: BlockId::new(id), op: Opcode::Forever { body } });
            }
            "wait" => Opcode::Wait(c.expr()?),
            "stopAll" => Opcode::StopAll,
            "stopScript" => Opcode::StopScript,
            "setVar" => Opcode::SetVar(c.ident("variable name")?, c.expr()?),
            "changeVar" => Opcode::ChangeVar(c.ident("variable name")?, c.expr()?),
            "switchCostume" => Opcode::SwitchCostume(c.ident("costume id")?),
            "hide" => Opcode::Hide,
            "show" => Opcode::Show,
            "setSize" => Opcode::SetSize(c.expr()?),
            "say" => Opcode::Say(c.string("say text")?),
            "broadcast" => Opcode::Broadcast(c.ident("message")?),
            "ask" => Opcode::Ask(c.string("ask prompt")?),
            "createClone" => Opcode::CreateClone(c.ident("sprite name")?),
            "deleteClone" => Opcode::DeleteClone,
            other => return Err(c.err(format!("unknown opcode `{other}`"))),
        };
        c.finish()?;
        Ok(Block { id: BlockId::new(id), op })
    }
}

/// Parses the document without running semantic validation. Used by tests
/// that need to construct deliberately invalid specs.
pub fn parse_game_unchecked(text: &str) -> Result<(GameSpec, LineMap), ParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(line) = lex_line(i + 1, raw)? {
            lines.push(line);
        }
    }
    let mut parser = Parser { lines, idx: 0, line_map: LineMap::new() };
    let spec = parser.parse_document()?;
    Ok((spec, parser.line_map))
}

/// Parses and validates a `.game` document, reporting the first problem as a
/// positioned diagnostic.
pub fn parse_game(text: &str) -> Result<GameSpec, ParseError> {
    let (spec, line_map) = parse_game_unchecked(text)?;
    let issues = validate_spec(&spec);
    if let Some(first) = issues.first() {
        let line = line_map.get(first.block_id.as_str()).copied().unwrap_or(1);
        return Err(ParseError::new(line, 1, format!("{}: {}", first.rule, first.message)));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "game Mini\n\nsprite dot\n  costume c0 10\n  script s1 greenFlag\n    b1 say \"hi\"\n";

    #[test]
    fn minimal_document_parses() {
        let spec = parse_game(MINIMAL).unwrap();
        assert_eq!(spec.name, "Mini");
        assert_eq!(spec.sprites.len(), 1);
        assert_eq!(spec.sprites[0].scripts.len(), 1);
        assert_eq!(spec.sprites[0].scripts[0].body.len(), 1);
    }

    #[test]
    fn duplicate_sprite_names_rejected() {
        let doc = "game G\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 say \"x\"\n\nsprite A\n  costume c 5\n  script s2 greenFlag\n    b2 say \"y\"\n";
        let err = parse_game(doc).unwrap_err();
        assert!(err.message.contains("duplicate"), "unexpected error: {err}");
    }

    #[test]
    fn nested_bodies_follow_indentation() {
        let doc = "game G\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 forever\n      b2 if (keyDown left)\n        b3 changeX -5\n      b4 changeY 1\n";
        let spec = parse_game(doc).unwrap();
        let body = &spec.sprites[0].scripts[0].body;
        assert_eq!(body.len(), 1);
        match &body[0].op {
            Opcode::Forever { body } => {
                assert_eq!(body.len(), 2);
                match &body[0].op {
                    Opcode::If { then_body, .. } => assert_eq!(then_body.len(), 1),
                    other => panic!("expected if, got {other:?}"),
                }
            }
            other => panic!("expected forever, got {other:?}"),
        }
    }

    #[test]
    fn if_else_requires_separator() {
        let doc = "game G\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 ifElse (> 1 0)\n      b2 say \"t\"\n    else\n      b3 say \"f\"\n";
        let spec = parse_game(doc).unwrap();
        match &spec.sprites[0].scripts[0].body[0].op {
            Opcode::IfElse { then_body, else_body, .. } => {
                assert_eq!(then_body.len(), 1);
                assert_eq!(else_body.len(), 1);
            }
            other => panic!("expected ifElse, got {other:?}"),
        }

        let missing = "game G\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 ifElse (> 1 0)\n      b2 say \"t\"\n";
        assert!(parse_game(missing).is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let doc = "# header\ngame G\n\n# vars\nvar score 0 range 0 5\n\nsprite A\n  costume c 5   # radius five\n  script s1 greenFlag\n    b1 setVar score 1\n";
        let spec = parse_game(doc).unwrap();
        assert_eq!(spec.variables.len(), 1);
        assert_eq!(spec.variables[0].range, (0.0, 5.0));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_game("game G\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 warp 3\n").unwrap_err();
        assert_eq!(err.line, 6);
        assert!(err.message.contains("unknown opcode"));
    }

    #[test]
    fn prefix_expressions_parse() {
        let doc = "game G\n\nvar v 0\n\nsprite A\n  costume c 5\n  script s1 greenFlag\n    b1 setVar v (+ (* 2 3) (randomInRange 0 9))\n    b2 if (and (< (var v) 10) (not (touching A)))\n      b3 say \"ok\"\n";
        let spec = parse_game(doc).unwrap();
        match &spec.sprites[0].scripts[0].body[0].op {
            Opcode::SetVar(name, Expr::Bin(BinOp::Add, lhs, _)) => {
                assert_eq!(name, "v");
                assert!(matches!(**lhs, Expr::Bin(BinOp::Mul, ..)));
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }
}
