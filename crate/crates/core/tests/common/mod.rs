//! Shared fixtures for the integration suites: an independent
//! control-dependence oracle, a random game generator, and a hand-built
//! tracker network for FruitCatching.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use ludus_core::cdg::CdgNode;
use ludus_core::episode::GameContext;
use ludus_core::neat::{seed_genome, Genome, IdSource, InnovationRegistry};
use ludus_core::rng::Pcg32;
use ludus_core::spec::*;
use ludus_core::vm::InputEvent;

// ---------------------------------------------------------------------
// Independent control-dependence oracle.
//
// Construction route: flatten each script into an explicit CFG, then use
// the *definition* of post-dominance directly (N post-dominates B iff no
// path from B reaches Exit while avoiding N, checked by DFS reachability)
// instead of the dataflow fixpoint the library uses. Event edges reuse
// the spec structure.
// ---------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Node {
    Hat,
    Block(usize),
    Exit,
}

struct Cfg {
    ids: Vec<BlockId>,
    succ: BTreeMap<Node, Vec<Node>>,
}

impl Cfg {
    fn add(&mut self, from: Node, to: Node) {
        let list = self.succ.entry(from).or_default();
        if !list.contains(&to) {
            list.push(to);
        }
    }

    fn successors(&self, n: Node) -> &[Node] {
        self.succ.get(&n).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Is Exit reachable from `from` without passing through `banned`?
    fn reaches_exit_avoiding(&self, from: Node, banned: Node) -> bool {
        if from == banned {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == Node::Exit {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            for &s in self.successors(n) {
                if s != banned {
                    stack.push(s);
                }
            }
        }
        false
    }

    /// N post-dominates B iff every path from B to Exit passes N.
    fn post_dominates(&self, n: Node, b: Node) -> bool {
        n == b || !self.reaches_exit_avoiding(b, n)
    }
}

fn build_cfg(script: &Script) -> Cfg {
    let mut ids = Vec::new();
    fn collect(blocks: &[Block], ids: &mut Vec<BlockId>) {
        for b in blocks {
            ids.push(b.id.clone());
            for body in b.op.bodies() {
                collect(body, ids);
            }
        }
    }
    collect(&script.body, &mut ids);
    let index: BTreeMap<BlockId, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let mut cfg = Cfg { ids, succ: BTreeMap::new() };

    fn entry_of(blocks: &[Block], index: &BTreeMap<BlockId, usize>, cont: Node) -> Node {
        match blocks.first() {
            Some(b) => Node::Block(index[&b.id]),
            None => cont,
        }
    }

    fn wire(blocks: &[Block], cont: Node, index: &BTreeMap<BlockId, usize>, cfg: &mut Cfg) {
        for (i, block) in blocks.iter().enumerate() {
            let me = Node::Block(index[&block.id]);
            let next = match blocks.get(i + 1) {
                Some(b) => Node::Block(index[&b.id]),
                None => cont,
            };
            match &block.op {
                Opcode::If { then_body, .. } => {
                    cfg.add(me, entry_of(then_body, index, next));
                    cfg.add(me, next);
                    wire(then_body, next, index, cfg);
                }
                Opcode::IfElse { then_body, else_body, .. } => {
                    cfg.add(me, entry_of(then_body, index, next));
                    cfg.add(me, entry_of(else_body, index, next));
                    wire(then_body, next, index, cfg);
                    wire(else_body, next, index, cfg);
                }
                Opcode::Forever { body } => {
                    cfg.add(me, entry_of(body, index, me));
                    cfg.add(me, Node::Exit);
                    wire(body, me, index, cfg);
                }
                Opcode::Repeat { body, .. } | Opcode::RepeatUntil { body, .. } => {
                    cfg.add(me, entry_of(body, index, me));
                    cfg.add(me, next);
                    wire(body, me, index, cfg);
                }
                Opcode::StopAll | Opcode::StopScript => {
                    cfg.add(me, Node::Exit);
                }
                _ => {
                    cfg.add(me, next);
                }
            }
        }
    }

    let first = entry_of(&script.body, &index, Node::Exit);
    cfg.add(Node::Hat, first);
    cfg.add(Node::Hat, Node::Exit);
    wire(&script.body, Node::Exit, &index, &mut cfg);
    cfg
}

/// Unlabeled control-dependence edge set per the classic definition, over
/// the whole spec including event stitching.
pub fn oracle_edge_set(spec: &GameSpec) -> BTreeSet<(CdgNode, CdgNode)> {
    let mut edges = BTreeSet::new();

    let mut broadcasters: BTreeMap<String, Vec<BlockId>> = BTreeMap::new();
    let mut cloners: BTreeMap<String, Vec<BlockId>> = BTreeMap::new();
    spec.visit_blocks(|b| match &b.op {
        Opcode::Broadcast(msg) => broadcasters.entry(msg.clone()).or_default().push(b.id.clone()),
        Opcode::CreateClone(t) => cloners.entry(t.clone()).or_default().push(b.id.clone()),
        _ => {}
    });

    for sprite in &spec.sprites {
        for script in &sprite.scripts {
            let hat = CdgNode::Stmt(script.id.clone());
            let sources: Vec<BlockId> = match &script.hat {
                HatEvent::WhenBroadcastReceived(msg) => {
                    broadcasters.get(msg).cloned().unwrap_or_default()
                }
                HatEvent::WhenIStartAsClone => {
                    cloners.get(&sprite.name).cloned().unwrap_or_default()
                }
                _ => Vec::new(),
            };
            if sources.is_empty() {
                edges.insert((CdgNode::Entry, hat.clone()));
            } else {
                for src in sources {
                    edges.insert((CdgNode::Stmt(src), hat.clone()));
                }
            }

            let cfg = build_cfg(script);
            let all_nodes: Vec<Node> = std::iter::once(Node::Hat)
                .chain((0..cfg.ids.len()).map(Node::Block))
                .collect();
            let as_cdg = |n: Node| -> CdgNode {
                match n {
                    Node::Hat => hat.clone(),
                    Node::Block(i) => CdgNode::Stmt(cfg.ids[i].clone()),
                    Node::Exit => unreachable!(),
                }
            };
            for &a in &all_nodes {
                if cfg.successors(a).len() < 2 {
                    continue;
                }
                for &n in &all_nodes {
                    if n == a {
                        continue;
                    }
                    if cfg.post_dominates(n, a) {
                        continue;
                    }
                    let controlled = cfg
                        .successors(a)
                        .iter()
                        .any(|&b| cfg.post_dominates(n, b));
                    if controlled {
                        edges.insert((as_cdg(a), as_cdg(n)));
                    }
                }
            }
        }
    }
    edges
}

// ---------------------------------------------------------------------
// Random well-formed game generator.
// ---------------------------------------------------------------------

pub struct SpecGen {
    rng: Pcg32,
    next_id: usize,
}

impl SpecGen {
    pub fn new(seed: u64) -> Self {
        SpecGen { rng: Pcg32::derive(seed, "spec-gen"), next_id: 0 }
    }

    fn id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    fn num_expr(&mut self, vars: &[String]) -> Expr {
        match self.rng.below(4) {
            0 if !vars.is_empty() => Expr::Var(vars[self.rng.index(vars.len())].clone()),
            1 => Expr::RandomInRange(
                Box::new(Expr::Num(0.0)),
                Box::new(Expr::Num(self.rng.below(9) as f64 + 1.0)),
            ),
            _ => Expr::Num(self.rng.below(20) as f64 - 10.0),
        }
    }

    fn cond_expr(&mut self, vars: &[String], sprites: &[String], depth: usize) -> Expr {
        let choice = self.rng.below(if depth == 0 { 5 } else { 7 });
        match choice {
            0 => Expr::KeyDown("space".to_string()),
            1 if !sprites.is_empty() => {
                Expr::Touching(sprites[self.rng.index(sprites.len())].clone())
            }
            2 => Expr::Bin(
                BinOp::Lt,
                Box::new(self.num_expr(vars)),
                Box::new(self.num_expr(vars)),
            ),
            3 => Expr::Bin(
                BinOp::Gt,
                Box::new(self.num_expr(vars)),
                Box::new(self.num_expr(vars)),
            ),
            4 => Expr::Bin(
                BinOp::Eq,
                Box::new(self.num_expr(vars)),
                Box::new(self.num_expr(vars)),
            ),
            5 => Expr::Not(Box::new(self.cond_expr(vars, sprites, depth - 1))),
            _ => Expr::And(
                Box::new(self.cond_expr(vars, sprites, depth - 1)),
                Box::new(self.cond_expr(vars, sprites, depth - 1)),
            ),
        }
    }

    fn body(
        &mut self,
        len: usize,
        depth: usize,
        vars: &[String],
        sprites: &[String],
        allow_stop: bool,
    ) -> Vec<Block> {
        let mut blocks = Vec::new();
        for i in 0..len {
            let last = i + 1 == len;
            let choice = self.rng.below(if depth > 0 { 10 } else { 6 });
            let inner = depth.saturating_sub(1);
            let op = match choice {
                0 => Opcode::ChangeX(self.num_expr(vars)),
                1 => Opcode::ChangeY(self.num_expr(vars)),
                2 if !vars.is_empty() => Opcode::SetVar(
                    vars[self.rng.index(vars.len())].clone(),
                    self.num_expr(vars),
                ),
                3 if !vars.is_empty() => Opcode::ChangeVar(
                    vars[self.rng.index(vars.len())].clone(),
                    Expr::Num(1.0),
                ),
                4 => Opcode::Say("note".to_string()),
                5 if last && allow_stop && self.rng.chance(0.3) => {
                    if self.rng.chance(0.5) {
                        Opcode::StopAll
                    } else {
                        Opcode::StopScript
                    }
                }
                5 => Opcode::Move(Expr::Num(self.rng.below(10) as f64)),
                6 if depth > 0 => {
                    let n = 1 + self.rng.index(2);
                    Opcode::If {
                        cond: self.cond_expr(vars, sprites, 1),
                        then_body: self.body(n, inner, vars, sprites, true),
                    }
                }
                7 if depth > 0 => {
                    let n = 1 + self.rng.index(2);
                    Opcode::IfElse {
                        cond: self.cond_expr(vars, sprites, 1),
                        then_body: self.body(1, inner, vars, sprites, true),
                        else_body: self.body(n, inner, vars, sprites, true),
                    }
                }
                8 if depth > 0 => {
                    let times = 2.0 + self.rng.below(3) as f64;
                    let n = 1 + self.rng.index(2);
                    Opcode::Repeat {
                        times: Expr::Num(times),
                        body: self.body(n, inner, vars, sprites, true),
                    }
                }
                9 if depth > 0 && last => {
                    let n = 1 + self.rng.index(2);
                    Opcode::Forever { body: self.body(n, inner, vars, sprites, true) }
                }
                9 if depth > 0 => {
                    let n = 1 + self.rng.index(2);
                    Opcode::RepeatUntil {
                        cond: self.cond_expr(vars, sprites, 1),
                        body: self.body(n, inner, vars, sprites, true),
                    }
                }
                _ => Opcode::ChangeY(self.num_expr(vars)),
            };
            let terminal = op.is_terminal();
            blocks.push(Block { id: BlockId::new(self.id("b")), op });
            if terminal {
                break;
            }
        }
        blocks
    }

    /// One random, valid game.
    pub fn game(&mut self) -> GameSpec {
        loop {
            let sprite_count = 1 + self.rng.index(3);
            let sprite_names: Vec<String> =
                (0..sprite_count).map(|i| format!("s{i}")).collect();
            let var_count = self.rng.index(3);
            let vars: Vec<String> = (0..var_count).map(|i| format!("v{i}")).collect();

            let variables = vars
                .iter()
                .map(|name| VarDecl {
                    name: name.clone(),
                    init: self.rng.below(5) as f64,
                    range: DEFAULT_VAR_RANGE,
                })
                .collect();

            let mut sprites = Vec::new();
            let has_broadcast = self.rng.chance(0.4);
            for (si, name) in sprite_names.iter().enumerate() {
                let clonable = self.rng.chance(0.3);
                let mut scripts = Vec::new();
                let script_count = 1 + self.rng.index(2);
                for sc in 0..script_count {
                    let hat = match self.rng.below(6) {
                        0 => HatEvent::KeyPressed("space".to_string()),
                        1 if has_broadcast => {
                            HatEvent::WhenBroadcastReceived("msg".to_string())
                        }
                        2 if clonable => HatEvent::WhenIStartAsClone,
                        3 => HatEvent::ClickSprite,
                        _ => HatEvent::GreenFlag,
                    };
                    let len = 1 + self.rng.index(3);
                    let mut body = self.body(len, 2, &vars, &sprite_names, true);
                    if has_broadcast && si == 0 && sc == 0 {
                        let op = Opcode::Broadcast("msg".to_string());
                        let block = Block { id: BlockId::new(self.id("b")), op };
                        if body.last().is_some_and(|b| b.op.is_terminal()) {
                            body.insert(0, block);
                        } else {
                            body.push(block);
                        }
                    }
                    scripts.push(Script {
                        id: BlockId::new(self.id("h")),
                        hat,
                        body,
                    });
                }
                sprites.push(SpriteSpec {
                    name: name.clone(),
                    costumes: vec![Costume { id: "c".to_string(), radius: 8.0 }],
                    init_x: self.rng.below(100) as f64 - 50.0,
                    init_y: self.rng.below(100) as f64 - 50.0,
                    init_size: 100.0,
                    init_direction: 90.0,
                    rotation_style: if self.rng.chance(0.5) {
                        RotationStyle::AllAround
                    } else {
                        RotationStyle::Fixed
                    },
                    clonable,
                    scripts,
                });
            }
            // createClone for some clonable sprite, appended to a greenFlag script
            let clonable_names: Vec<String> =
                sprites.iter().filter(|s| s.clonable).map(|s| s.name.clone()).collect();
            if !clonable_names.is_empty() && self.rng.chance(0.5) {
                let target = clonable_names[self.rng.index(clonable_names.len())].clone();
                let id = self.id("b");
                if let Some(script) = sprites[0].scripts.first_mut() {
                    let block =
                        Block { id: BlockId::new(id), op: Opcode::CreateClone(target) };
                    if script.body.last().is_some_and(|b| b.op.is_terminal()) {
                        script.body.insert(0, block);
                    } else {
                        script.body.push(block);
                    }
                }
            }

            let spec = GameSpec {
                name: format!("Rnd{}", self.next_id),
                stage: StageSpec::default(),
                variables,
                sprites,
                win_statements: Vec::new(),
            };
            if validate_spec(&spec).is_empty() {
                return spec;
            }
        }
    }

    /// A random event schedule against the given spec.
    pub fn schedule(&mut self, spec: &GameSpec, steps: u64) -> Vec<(u64, InputEvent)> {
        let sprite_names: Vec<String> = spec.sprites.iter().map(|s| s.name.clone()).collect();
        let count = 1 + self.rng.index(8);
        let mut events = Vec::new();
        for _ in 0..count {
            let step = self.rng.below(steps);
            let event = match self.rng.below(5) {
                0 => InputEvent::KeyPress {
                    key: "space".to_string(),
                    duration_steps: 1 + self.rng.below(5) as u32,
                },
                1 => InputEvent::ClickSprite {
                    sprite: sprite_names[self.rng.index(sprite_names.len())].clone(),
                },
                2 => InputEvent::ClickStage,
                3 => InputEvent::MouseMove {
                    x: self.rng.range_f64(-240.0, 240.0),
                    y: self.rng.range_f64(-180.0, 180.0),
                },
                _ => InputEvent::Wait { duration_steps: 1 },
            };
            events.push((step, event));
        }
        events.sort_by_key(|(s, _)| *s);
        events
    }
}

// ---------------------------------------------------------------------
// A hand-built FruitCatching tracker network.
// ---------------------------------------------------------------------

/// Builds a seeded genome for the game and wires it by hand into an
/// apple-tracking policy: steer toward the apple's x position with
/// one-step key presses, wait when aligned.
pub fn handmade_tracker(ctx: &GameContext) -> Genome {
    let registry = Mutex::new(InnovationRegistry::new());
    let (groups, events) = ctx.initial_catalog();
    let mut rng = Pcg32::new(0);
    let mut genome = {
        let mut ids = IdSource::Registry(&registry);
        seed_genome(&groups, &events, &mut ids, &mut rng)
    };
    for c in &mut genome.connections {
        c.weight = 0.0;
    }
    let node = |g: &Genome, label: &str| -> u32 {
        g.node_by_label(label)
            .unwrap_or_else(|| panic!("label {label} missing"))
            .id
    };
    let dx = node(&genome, "apple/dx:bowl");
    let hidden = node(&genome, "hidden/apple");
    let left = node(&genome, "key:left");
    let right = node(&genome, "key:right");
    let wait = node(&genome, "wait");
    let left_dur = node(&genome, "key:left#duration");
    let right_dur = node(&genome, "key:right#duration");
    let wait_dur = node(&genome, "wait#duration");
    let bias = ludus_core::neat::BIAS_NODE;

    let mut set = |from: u32, to: u32, w: f64| {
        let conn = genome
            .connections
            .iter_mut()
            .find(|c| c.in_node == from && c.out_node == to)
            .expect("seeded connection exists");
        conn.weight = w;
        conn.enabled = true;
    };
    // dx = (bowl.x - apple.x) / 600: negative when the bowl is left of the
    // apple, so push the hidden node positive and press right
    set(dx, hidden, -30.0);
    set(hidden, right, 2.0);
    set(hidden, left, -2.0);
    set(bias, wait, 0.4);
    // crisp one-step presses
    set(bias, left_dur, -5.0);
    set(bias, right_dur, -5.0);
    set(bias, wait_dur, -5.0);
    genome
}

/// Removes a sprite from a parsed game, returning the modified spec.
pub fn without_sprite(spec: &GameSpec, name: &str) -> GameSpec {
    let mut out = spec.clone();
    out.sprites.retain(|s| s.name != name);
    assert!(
        validate_spec(&out).is_empty(),
        "removing {name} must keep the spec valid"
    );
    out
}
