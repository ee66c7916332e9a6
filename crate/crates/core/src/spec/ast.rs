//! Data model for the block-structured game DSL.
//!
//! A [`GameSpec`] is the program under test: a stage, an ordered list of
//! sprites with event-driven scripts, global numeric variables and an
//! optional set of `win` statement annotations. Specs are immutable after
//! parsing and can be shared freely across threads.

use std::fmt;

/// Globally unique identifier of a block (or script hat) within one spec.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub String);

impl BlockId {
    pub fn new(id: impl Into<String>) -> Self {
        BlockId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Stage bounds are fixed: x in [-240, 240], y in [-180, 180].
pub const STAGE_HALF_WIDTH: f64 = 240.0;
pub const STAGE_HALF_HEIGHT: f64 = 180.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub name: String,
    pub stage: StageSpec,
    pub variables: Vec<VarDecl>,
    pub sprites: Vec<SpriteSpec>,
    /// Harness annotation: statements whose robust coverage means the game was won.
    pub win_statements: Vec<BlockId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub init: f64,
    /// Normalization range used when the variable is fed to a network.
    pub range: (f64, f64),
}

pub const DEFAULT_VAR_RANGE: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub width: f64,
    pub height: f64,
    pub color_regions: Vec<ColorRegion>,
}

impl Default for StageSpec {
    fn default() -> Self {
        StageSpec { width: 480.0, height: 360.0, color_regions: Vec::new() }
    }
}

/// Axis-aligned colored rectangle in stage coordinates; the substrate for
/// color sensing and the rangefinder features.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorRegion {
    pub color: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationStyle {
    AllAround,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costume {
    pub id: String,
    /// Costume geometry is a circle; touching is circle intersection.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteSpec {
    pub name: String,
    pub costumes: Vec<Costume>,
    pub init_x: f64,
    pub init_y: f64,
    pub init_size: f64,
    pub init_direction: f64,
    pub rotation_style: RotationStyle,
    pub clonable: bool,
    pub scripts: Vec<Script>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    /// Hats are statements too: they appear in the CDG and in coverage.
    pub id: BlockId,
    pub hat: HatEvent,
    pub body: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HatEvent {
    GreenFlag,
    KeyPressed(String),
    ClickSprite,
    ClickStage,
    WhenIStartAsClone,
    WhenBroadcastReceived(String),
    WhenAnswerReceived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub op: Opcode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Opcode {
    // motion
    Move(Expr),
    SetXY(Expr, Expr),
    ChangeX(Expr),
    ChangeY(Expr),
    PointDirection(Expr),
    GotoRandom,
    // control
    If { cond: Expr, then_body: Vec<Block> },
    IfElse { cond: Expr, then_body: Vec<Block>, else_body: Vec<Block> },
    Repeat { times: Expr, body: Vec<Block> },
    RepeatUntil { cond: Expr, body: Vec<Block> },
    Forever { body: Vec<Block> },
    Wait(Expr),
    StopAll,
    StopScript,
    // data
    SetVar(String, Expr),
    ChangeVar(String, Expr),
    // looks
    SwitchCostume(String),
    Hide,
    Show,
    SetSize(Expr),
    Say(String),
    // events
    Broadcast(String),
    Ask(String),
    // clones
    CreateClone(String),
    DeleteClone,
}

impl Opcode {
    /// Stable lowercase mnemonic, used by the serializer and diagnostics.
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Opcode::Move(_) => "move",
            Opcode::SetXY(..) => "setXY",
            Opcode::ChangeX(_) => "changeX",
            Opcode::ChangeY(_) => "changeY",
            Opcode::PointDirection(_) => "pointDirection",
            Opcode::GotoRandom => "gotoRandom",
            Opcode::If { .. } => "if",
            Opcode::IfElse { .. } => "ifElse",
            Opcode::Repeat { .. } => "repeat",
            Opcode::RepeatUntil { .. } => "repeatUntil",
            Opcode::Forever { .. } => "forever",
            Opcode::Wait(_) => "wait",
            Opcode::StopAll => "stopAll",
            Opcode::StopScript => "stopScript",
            Opcode::SetVar(..) => "setVar",
            Opcode::ChangeVar(..) => "changeVar",
            Opcode::SwitchCostume(_) => "switchCostume",
            Opcode::Hide => "hide",
            Opcode::Show => "show",
            Opcode::SetSize(_) => "setSize",
            Opcode::Say(_) => "say",
            Opcode::Broadcast(_) => "broadcast",
            Opcode::Ask(_) => "ask",
            Opcode::CreateClone(_) => "createClone",
            Opcode::DeleteClone => "deleteClone",
        }
    }

    /// Nested block lists, in (then, else) order for `ifElse`.
    pub fn bodies(&self) -> Vec<&[Block]> {
        match self {
            Opcode::If { then_body, .. } => vec![then_body],
            Opcode::IfElse { then_body, else_body, .. } => vec![then_body, else_body],
            Opcode::Repeat { body, .. }
            | Opcode::RepeatUntil { body, .. }
            | Opcode::Forever { body } => vec![body],
            _ => Vec::new(),
        }
    }

    pub fn bodies_mut(&mut self) -> Vec<&mut Vec<Block>> {
        match self {
            Opcode::If { then_body, .. } => vec![then_body],
            Opcode::IfElse { then_body, else_body, .. } => vec![then_body, else_body],
            Opcode::Repeat { body, .. }
            | Opcode::RepeatUntil { body, .. }
            | Opcode::Forever { body } => vec![body],
            _ => Vec::new(),
        }
    }

    /// Immediate argument expressions (not recursing into bodies).
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
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
        }
    }

    /// True for blocks that terminate their sequence (nothing may follow).
    pub fn is_terminal(&self) -> bool {
        matches!(self, Opcode::Forever { .. } | Opcode::StopAll | Opcode::StopScript)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Eq,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Eq => "=",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod)
    }

    pub fn is_relational(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Gt | BinOp::Eq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpriteAttr {
    X,
    Y,
    Size,
    Direction,
    Costume,
}

impl SpriteAttr {
    pub fn mnemonic(self) -> &'static str {
        match self {
            SpriteAttr::X => "x",
            SpriteAttr::Y => "y",
            SpriteAttr::Size => "size",
            SpriteAttr::Direction => "direction",
            SpriteAttr::Costume => "costume",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    RandomInRange(Box<Expr>, Box<Expr>),
    Touching(String),
    TouchingEdge,
    TouchingColor(String),
    TouchingMouse,
    MouseDown,
    DistanceTo(String),
    KeyDown(String),
    Answer,
    Var(String),
    Attr(String, SpriteAttr),
}

/// Coarse expression types used by the static well-typedness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Num,
    Bool,
    Text,
}

impl Expr {
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Bin(_, a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::RandomInRange(a, b) => vec![a, b],
            Expr::Not(a) => vec![a],
            _ => Vec::new(),
        }
    }

    /// Static type of the expression, assuming children are well-typed.
    pub fn static_type(&self) -> ExprType {
        match self {
            Expr::Num(_) => ExprType::Num,
            Expr::Str(_) => ExprType::Text,
            Expr::Bin(op, ..) => {
                if op.is_relational() {
                    ExprType::Bool
                } else {
                    ExprType::Num
                }
            }
            Expr::And(..) | Expr::Or(..) | Expr::Not(_) => ExprType::Bool,
            Expr::RandomInRange(..) => ExprType::Num,
            Expr::Touching(_)
            | Expr::TouchingEdge
            | Expr::TouchingColor(_)
            | Expr::TouchingMouse
            | Expr::MouseDown
            | Expr::KeyDown(_) => ExprType::Bool,
            Expr::DistanceTo(_) | Expr::Var(_) | Expr::Attr(..) => ExprType::Num,
            Expr::Answer => ExprType::Text,
        }
    }
}

impl GameSpec {
    /// All scripts paired with their hosting sprite, in sprite/script order.
    pub fn scripts(&self) -> impl Iterator<Item = (&SpriteSpec, &Script)> {
        self.sprites
            .iter()
            .flat_map(|s| s.scripts.iter().map(move |sc| (s, sc)))
    }

    /// Depth-first walk over every block of every script, in document order.
    pub fn visit_blocks<'a>(&'a self, mut f: impl FnMut(&'a Block)) {
        fn walk<'a>(blocks: &'a [Block], f: &mut impl FnMut(&'a Block)) {
            for b in blocks {
                f(b);
                for body in b.op.bodies() {
                    walk(body, f);
                }
            }
        }
        for sprite in &self.sprites {
            for script in &sprite.scripts {
                walk(&script.body, &mut f);
            }
        }
    }

    /// Every statement id: hats first per script, then blocks in document order.
    pub fn all_statement_ids(&self) -> Vec<BlockId> {
        let mut ids = Vec::new();
        for sprite in &self.sprites {
            for script in &sprite.scripts {
                ids.push(script.id.clone());
                fn walk(blocks: &[Block], ids: &mut Vec<BlockId>) {
                    for b in blocks {
                        ids.push(b.id.clone());
                        for body in b.op.bodies() {
                            walk(body, ids);
                        }
                    }
                }
                walk(&script.body, &mut ids);
            }
        }
        ids
    }

    pub fn find_sprite(&self, name: &str) -> Option<&SpriteSpec> {
        self.sprites.iter().find(|s| s.name == name)
    }

    pub fn find_variable(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }
}
