//! Deterministic, seedable, headless interpreter for [`GameSpec`].
//!
//! Execution follows step semantics: one `step` call gives every active
//! thread a slice in which it runs until it yields (end of a loop iteration,
//! `wait`, `ask`) or its script ends. One logical step is 1/30 s. All
//! randomness comes from a single PCG32 stream consumed in scheduling order,
//! so equal (spec, seed, event schedule) triples replay bit-identically.

mod eval;

pub use eval::EvalError;

/// Evaluates a numeric expression against a state without consuming the
/// VM's randomness (callers pass a snapshot RNG for any draws).
pub fn eval_num_peek(
    vm: &VmState,
    rng: &mut crate::rng::Pcg32,
    instance_id: u64,
    e: &crate::spec::Expr,
) -> Result<f64, EvalError> {
    eval::eval_num_with(vm, rng, instance_id, e)
}

/// Boolean variant of [`eval_num_peek`].
pub fn eval_bool_peek(
    vm: &VmState,
    rng: &mut crate::rng::Pcg32,
    instance_id: u64,
    e: &crate::spec::Expr,
) -> Result<bool, EvalError> {
    eval::eval_bool_with(vm, rng, instance_id, e)
}

/// Signed gap between two instances: center distance minus radii.
pub fn pair_gap(vm: &VmState, a: &SpriteInstance, b: &SpriteInstance) -> f64 {
    eval::pair_distance(vm, a, b)
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::rng::{Pcg32, StateHasher};
use crate::spec::*;

/// Steps per logical second.
pub const STEPS_PER_SECOND: f64 = 30.0;

/// Rangefinder and sensing distances are capped here.
pub const SENSE_CAP: f64 = 600.0;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum VmError {
    #[error("unknown sprite `{0}`")]
    UnknownSprite(String),
    #[error("unknown color `{0}`")]
    UnknownColor(String),
    #[error("vm is halted")]
    Halted,
    #[error("invalid range: lo {0} > hi {1}")]
    InvalidRange(f64, f64),
}

/// A runtime fault confined to one thread (the VM itself keeps running).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RuntimeDiagnostic {
    pub step: u64,
    pub block_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputEvent {
    KeyPress { key: String, duration_steps: u32 },
    ClickSprite { sprite: String },
    ClickStage,
    TypeText { text: String },
    MouseMove { x: f64, y: f64 },
    MouseMoveTo { sprite: String },
    MouseDown { duration_steps: u32 },
    Wait { duration_steps: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteInstance {
    pub instance_id: u64,
    pub sprite_index: usize,
    /// 0 for the original, then 1, 2, ... per sprite in clone creation order.
    pub ordinal: u32,
    pub is_clone: bool,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub direction: f64,
    pub costume_index: usize,
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CtlKind {
    /// Top-level script body; completion ends the thread.
    Script,
    /// if / ifElse body; runs once, then the parent continues.
    Once,
    Repeat { remaining: u64 },
    Until { check_pending: bool },
    Forever,
}

#[derive(Debug, Clone, PartialEq)]
struct Frame {
    body: u32,
    pc: usize,
    ctl: CtlKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThreadStatus {
    Ready,
    WaitUntil(u64),
    WaitingAnswer,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
struct Thread {
    id: u64,
    instance_id: u64,
    sprite_index: usize,
    script_index: usize,
    frames: Vec<Frame>,
    status: ThreadStatus,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub thread: u64,
    pub block_id: String,
    pub state_hash: u64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub newly_covered: Vec<BlockId>,
    pub halted: bool,
}

/// Body addressing: every block sequence in the spec gets a stable id so
/// thread frames can reference code without borrowing the spec.
#[derive(Debug)]
struct ProgramIndex {
    bodies: Vec<BodyPath>,
    script_body: Vec<Vec<u32>>,
    /// Control block id -> child body ids, in (then, else) order.
    block_bodies: BTreeMap<BlockId, Vec<u32>>,
}

#[derive(Debug)]
struct BodyPath {
    sprite: usize,
    script: usize,
    /// (block index, body slot) pairs from the script body downwards.
    nest: Vec<(usize, usize)>,
}

impl ProgramIndex {
    fn build(spec: &GameSpec) -> Self {
        let mut index = ProgramIndex {
            bodies: Vec::new(),
            script_body: Vec::new(),
            block_bodies: BTreeMap::new(),
        };
        for (si, sprite) in spec.sprites.iter().enumerate() {
            let mut script_ids = Vec::new();
            for (ci, script) in sprite.scripts.iter().enumerate() {
                let top = index.add_body(BodyPath { sprite: si, script: ci, nest: Vec::new() });
                script_ids.push(top);
                index.walk(&script.body, si, ci, &mut Vec::new());
            }
            index.script_body.push(script_ids);
        }
        index
    }

    fn add_body(&mut self, path: BodyPath) -> u32 {
        let id = self.bodies.len() as u32;
        self.bodies.push(path);
        id
    }

    fn walk(&mut self, blocks: &[Block], sprite: usize, script: usize, nest: &mut Vec<(usize, usize)>) {
        for (bi, block) in blocks.iter().enumerate() {
            let bodies = block.op.bodies();
            if bodies.is_empty() {
                continue;
            }
            let mut ids = Vec::new();
            for (slot, body) in bodies.iter().enumerate() {
                nest.push((bi, slot));
                let id = self.add_body(BodyPath { sprite, script, nest: nest.clone() });
                ids.push(id);
                self.walk(body, sprite, script, nest);
                nest.pop();
            }
            self.block_bodies.insert(block.id.clone(), ids);
        }
    }

    fn resolve<'s>(&self, spec: &'s GameSpec, body: u32) -> &'s [Block] {
        let path = &self.bodies[body as usize];
        let mut blocks: &[Block] = &spec.sprites[path.sprite].scripts[path.script].body;
        for &(bi, slot) in &path.nest {
            blocks = blocks[bi].op.bodies()[slot];
        }
        blocks
    }
}

enum SliceEnd {
    Yielded,
    Done,
    Halted,
}

#[derive(Debug, Clone)]
pub struct VmState {
    spec: Arc<GameSpec>,
    index: Arc<ProgramIndexHandle>,
    pub sprites: Vec<SpriteInstance>,
    pub variables: BTreeMap<String, f64>,
    rng: Pcg32,
    pub step_index: u64,
    covered: BTreeSet<BlockId>,
    threads: Vec<Thread>,
    pub halted: bool,
    pub mouse_x: f64,
    pub mouse_y: f64,
    mouse_down_until: u64,
    keys_down: BTreeMap<String, u64>,
    pub answer: Option<String>,
    diagnostics: Vec<RuntimeDiagnostic>,
    clone_counters: BTreeMap<usize, u32>,
    next_instance_id: u64,
    next_thread_id: u64,
    newly_covered: Vec<BlockId>,
    trace: Option<Vec<TraceRecord>>,
}

/// Wrapper so `VmState` can derive `Clone`/`Debug` while sharing the index.
#[derive(Debug)]
pub struct ProgramIndexHandle(ProgramIndex);

/// Initializes a run: sprites at their declared attributes, one thread per
/// greenFlag script, empty coverage, RNG seeded.
pub fn init_vm(spec: Arc<GameSpec>, seed: u64) -> VmState {
    let index = Arc::new(ProgramIndexHandle(ProgramIndex::build(&spec)));
    let mut vm = VmState {
        sprites: Vec::new(),
        variables: spec.variables.iter().map(|v| (v.name.clone(), v.init)).collect(),
        rng: Pcg32::new(seed),
        step_index: 0,
        covered: BTreeSet::new(),
        threads: Vec::new(),
        halted: false,
        mouse_x: 0.0,
        mouse_y: 0.0,
        mouse_down_until: 0,
        keys_down: BTreeMap::new(),
        answer: None,
        diagnostics: Vec::new(),
        clone_counters: BTreeMap::new(),
        next_instance_id: 0,
        next_thread_id: 0,
        newly_covered: Vec::new(),
        trace: None,
        index,
        spec,
    };
    for (si, sprite) in vm.spec.clone().sprites.iter().enumerate() {
        let id = vm.alloc_instance_id();
        vm.sprites.push(SpriteInstance {
            instance_id: id,
            sprite_index: si,
            ordinal: 0,
            is_clone: false,
            x: sprite.init_x,
            y: sprite.init_y,
            size: sprite.init_size,
            direction: sprite.init_direction,
            costume_index: 0,
            visible: true,
        });
    }
    let spec = vm.spec.clone();
    for (si, sprite) in spec.sprites.iter().enumerate() {
        for (ci, script) in sprite.scripts.iter().enumerate() {
            if matches!(script.hat, HatEvent::GreenFlag) {
                let instance_id = vm.sprites[si].instance_id;
                vm.spawn_thread(instance_id, si, ci);
            }
        }
    }
    vm
}

impl VmState {
    pub fn spec(&self) -> &Arc<GameSpec> {
        &self.spec
    }

    pub fn covered_blocks(&self) -> &BTreeSet<BlockId> {
        &self.covered
    }

    pub fn diagnostics(&self) -> &[RuntimeDiagnostic] {
        &self.diagnostics
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    fn alloc_instance_id(&mut self) -> u64 {
        let id = self.next_instance_id;
        self.next_instance_id += 1;
        id
    }

    pub fn instance(&self, instance_id: u64) -> Option<&SpriteInstance> {
        self.sprites.iter().find(|s| s.instance_id == instance_id)
    }

    fn instance_mut(&mut self, instance_id: u64) -> Option<&mut SpriteInstance> {
        self.sprites.iter_mut().find(|s| s.instance_id == instance_id)
    }

    pub fn sprite_name(&self, instance: &SpriteInstance) -> &str {
        &self.spec.sprites[instance.sprite_index].name
    }

    /// Feature-group tag of an instance: the sprite name for originals,
    /// `name[ordinal]` for clones.
    pub fn group_tag(&self, instance: &SpriteInstance) -> String {
        let name = self.sprite_name(instance);
        if instance.ordinal == 0 {
            name.to_string()
        } else {
            format!("{name}[{}]", instance.ordinal)
        }
    }

    pub fn instances_of(&self, name: &str) -> impl Iterator<Item = &SpriteInstance> {
        let idx = self.spec.sprites.iter().position(|s| s.name == name);
        self.sprites.iter().filter(move |i| Some(i.sprite_index) == idx)
    }

    pub fn effective_radius(&self, instance: &SpriteInstance) -> f64 {
        let costume = &self.spec.sprites[instance.sprite_index].costumes[instance.costume_index];
        costume.radius * instance.size / 100.0
    }

    pub fn key_down(&self, key: &str) -> bool {
        self.keys_down.get(key).is_some_and(|&until| until > self.step_index)
    }

    pub fn mouse_button_down(&self) -> bool {
        self.mouse_down_until > self.step_index
    }

    /// True while some thread is blocked on an `ask` block.
    pub fn ask_pending(&self) -> bool {
        self.threads.iter().any(|t| t.status == ThreadStatus::WaitingAnswer)
    }

    pub fn active_thread_count(&self) -> usize {
        self.threads.iter().filter(|t| t.status != ThreadStatus::Done).count()
    }

    fn spawn_thread(&mut self, instance_id: u64, sprite_index: usize, script_index: usize) {
        let body = self.index.0.script_body[sprite_index][script_index];
        let id = self.next_thread_id;
        self.next_thread_id += 1;
        self.threads.push(Thread {
            id,
            instance_id,
            sprite_index,
            script_index,
            frames: vec![Frame { body, pc: 0, ctl: CtlKind::Script }],
            status: ThreadStatus::Ready,
        });
    }

    fn live_thread_exists(&self, instance_id: u64, sprite_index: usize, script_index: usize) -> bool {
        self.threads.iter().any(|t| {
            t.instance_id == instance_id
                && t.sprite_index == sprite_index
                && t.script_index == script_index
                && t.status != ThreadStatus::Done
        })
    }

    /// Spawns a fresh thread, or restarts the existing one from the top.
    fn restart_script(&mut self, instance_id: u64, sprite_index: usize, script_index: usize) {
        let body = self.index.0.script_body[sprite_index][script_index];
        if let Some(t) = self.threads.iter_mut().find(|t| {
            t.instance_id == instance_id
                && t.sprite_index == sprite_index
                && t.script_index == script_index
                && t.status != ThreadStatus::Done
        }) {
            t.frames = vec![Frame { body, pc: 0, ctl: CtlKind::Script }];
            t.status = ThreadStatus::Ready;
        } else {
            self.spawn_thread(instance_id, sprite_index, script_index);
        }
    }

    /// Injects one input event. Matching hat scripts get threads; key and
    /// mouse state is updated for the event's duration.
    pub fn apply_event(&mut self, event: &InputEvent) -> Result<(), VmError> {
        if self.halted {
            return Err(VmError::Halted);
        }
        match event {
            InputEvent::KeyPress { key, duration_steps } => {
                let until = self.step_index + (*duration_steps).max(1) as u64;
                let entry = self.keys_down.entry(key.clone()).or_insert(0);
                *entry = (*entry).max(until);
                self.spawn_key_handlers(key);
            }
            InputEvent::ClickSprite { sprite } => {
                let sprite_index = self
                    .spec
                    .sprites
                    .iter()
                    .position(|s| &s.name == sprite)
                    .ok_or_else(|| VmError::UnknownSprite(sprite.clone()))?;
                // Clicking a hidden sprite is a no-op.
                let targets: Vec<u64> = self
                    .sprites
                    .iter()
                    .filter(|i| i.sprite_index == sprite_index && i.visible)
                    .map(|i| i.instance_id)
                    .collect();
                let scripts = self.scripts_with(sprite_index, |h| matches!(h, HatEvent::ClickSprite));
                for instance_id in targets {
                    for &script_index in &scripts {
                        self.restart_script(instance_id, sprite_index, script_index);
                    }
                }
            }
            InputEvent::ClickStage => {
                for (sprite_index, instance_id, script_index) in
                    self.all_hat_scripts(|h| matches!(h, HatEvent::ClickStage))
                {
                    self.restart_script(instance_id, sprite_index, script_index);
                }
            }
            InputEvent::TypeText { text } => {
                self.answer = Some(text.clone());
                for t in &mut self.threads {
                    if t.status == ThreadStatus::WaitingAnswer {
                        t.status = ThreadStatus::Ready;
                    }
                }
                for (sprite_index, instance_id, script_index) in
                    self.all_hat_scripts(|h| matches!(h, HatEvent::WhenAnswerReceived))
                {
                    self.restart_script(instance_id, sprite_index, script_index);
                }
            }
            InputEvent::MouseMove { x, y } => {
                self.mouse_x = x.clamp(-STAGE_HALF_WIDTH, STAGE_HALF_WIDTH);
                self.mouse_y = y.clamp(-STAGE_HALF_HEIGHT, STAGE_HALF_HEIGHT);
            }
            InputEvent::MouseMoveTo { sprite } => {
                if self.spec.find_sprite(sprite).is_none() {
                    return Err(VmError::UnknownSprite(sprite.clone()));
                }
                let target = self.instances_of(sprite).find(|i| i.visible).map(|t| (t.x, t.y));
                if let Some((x, y)) = target {
                    self.mouse_x = x;
                    self.mouse_y = y;
                }
            }
            InputEvent::MouseDown { duration_steps } => {
                let until = self.step_index + (*duration_steps).max(1) as u64;
                self.mouse_down_until = self.mouse_down_until.max(until);
            }
            InputEvent::Wait { .. } => {}
        }
        Ok(())
    }

    fn scripts_with(&self, sprite_index: usize, pred: impl Fn(&HatEvent) -> bool) -> Vec<usize> {
        self.spec.sprites[sprite_index]
            .scripts
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(&s.hat))
            .map(|(i, _)| i)
            .collect()
    }

    fn all_hat_scripts(&self, pred: impl Fn(&HatEvent) -> bool + Copy) -> Vec<(usize, u64, usize)> {
        let mut out = Vec::new();
        for inst in &self.sprites {
            for (ci, script) in self.spec.sprites[inst.sprite_index].scripts.iter().enumerate() {
                if pred(&script.hat) {
                    out.push((inst.sprite_index, inst.instance_id, ci));
                }
            }
        }
        out
    }

    fn spawn_key_handlers(&mut self, key: &str) {
        let matches: Vec<(usize, u64, usize)> = self
            .all_hat_scripts(|h| matches!(h, HatEvent::KeyPressed(_)))
            .into_iter()
            .filter(|&(si, _, ci)| {
                matches!(&self.spec.sprites[si].scripts[ci].hat, HatEvent::KeyPressed(k) if k == key)
            })
            .collect();
        for (sprite_index, instance_id, script_index) in matches {
            if !self.live_thread_exists(instance_id, sprite_index, script_index) {
                self.spawn_thread(instance_id, sprite_index, script_index);
            }
        }
    }

    /// Consumes exactly one PRNG draw and returns a uniform value in
    /// [lo, hi]; integer-valued when both bounds are integral.
    pub fn rand_in_range(&mut self, lo: f64, hi: f64) -> Result<f64, VmError> {
        eval::draw_in_range(&mut self.rng, lo, hi).map_err(|_| VmError::InvalidRange(lo, hi))
    }

    pub(crate) fn rng_take(&mut self) -> Pcg32 {
        std::mem::replace(&mut self.rng, Pcg32::new(0))
    }

    pub(crate) fn rng_put(&mut self, rng: Pcg32) {
        self.rng = rng;
    }

    /// Copy of the RNG for side-effect-free evaluation.
    pub fn rng_snapshot(&self) -> Pcg32 {
        self.rng.clone()
    }

    fn mark_covered(&mut self, id: &BlockId) {
        if !self.covered.contains(id) {
            self.covered.insert(id.clone());
            self.newly_covered.push(id.clone());
        }
    }

    fn clamp_instance(inst: &mut SpriteInstance) {
        inst.x = inst.x.clamp(-STAGE_HALF_WIDTH, STAGE_HALF_WIDTH);
        inst.y = inst.y.clamp(-STAGE_HALF_HEIGHT, STAGE_HALF_HEIGHT);
    }

    /// Runs one step: every runnable thread executes until it yields.
    pub fn step(&mut self) -> StepResult {
        if self.halted {
            return StepResult { newly_covered: Vec::new(), halted: true };
        }
        self.newly_covered.clear();

        // Held keys retrigger their hats once the previous run finished.
        let held: Vec<String> = self
            .keys_down
            .iter()
            .filter(|(_, &until)| until > self.step_index)
            .map(|(k, _)| k.clone())
            .collect();
        for key in held {
            self.spawn_key_handlers(&key);
        }

        // Deterministic schedule: instance position, script order, creation order.
        let mut order: Vec<(usize, usize, u64, usize)> = Vec::new();
        for (ti, t) in self.threads.iter().enumerate() {
            if t.status == ThreadStatus::Done {
                continue;
            }
            let Some(pos) = self.sprites.iter().position(|s| s.instance_id == t.instance_id)
            else {
                continue;
            };
            order.push((pos, t.script_index, t.id, ti));
        }
        order.sort_unstable();

        for (_, _, _, ti) in order {
            let runnable = match self.threads[ti].status {
                ThreadStatus::Ready => true,
                ThreadStatus::WaitUntil(t) if self.step_index >= t => {
                    self.threads[ti].status = ThreadStatus::Ready;
                    true
                }
                _ => false,
            };
            if !runnable {
                continue;
            }
            // The instance may have been deleted by an earlier slice.
            if self.instance(self.threads[ti].instance_id).is_none() {
                self.threads[ti].status = ThreadStatus::Done;
                continue;
            }
            match self.run_slice(ti) {
                SliceEnd::Halted => break,
                SliceEnd::Yielded | SliceEnd::Done => {}
            }
        }

        self.threads.retain(|t| t.status != ThreadStatus::Done);
        for inst in &mut self.sprites {
            Self::clamp_instance(inst);
        }
        self.step_index += 1;
        StepResult { newly_covered: std::mem::take(&mut self.newly_covered), halted: self.halted }
    }

    fn trace_block(&mut self, thread: u64, block: &BlockId) {
        if self.trace.is_some() {
            let hash = self.state_hash();
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    step: self.step_index,
                    thread,
                    block_id: block.0.clone(),
                    state_hash: hash,
                });
            }
        }
    }

    fn fault(&mut self, thread_index: usize, block: &BlockId, message: String) -> SliceEnd {
        self.diagnostics.push(RuntimeDiagnostic {
            step: self.step_index,
            block_id: block.0.clone(),
            message,
        });
        self.threads[thread_index].status = ThreadStatus::Done;
        SliceEnd::Done
    }

    fn run_slice(&mut self, ti: usize) -> SliceEnd {
        loop {
            let thread = &self.threads[ti];
            if thread.frames.is_empty() {
                self.threads[ti].status = ThreadStatus::Done;
                return SliceEnd::Done;
            }
            let frame = thread.frames.last().unwrap().clone();
            let spec = self.spec.clone();
            let body = self.index.0.resolve(&spec, frame.body);

            // repeatUntil re-checks its condition at the start of each
            // iteration after the first.
            if let CtlKind::Until { check_pending: true } = frame.ctl {
                let (owner_id, cond) = {
                    let t = &self.threads[ti];
                    let parent = &t.frames[t.frames.len() - 2];
                    let parent_body = self.index.0.resolve(&spec, parent.body);
                    let owner = &parent_body[parent.pc];
                    match &owner.op {
                        Opcode::RepeatUntil { cond, .. } => (owner.id.clone(), cond),
                        _ => unreachable!("until frame without repeatUntil owner"),
                    }
                };
                let instance_id = self.threads[ti].instance_id;
              match eval::eval_bool(self, instance_id, cond) {
                    Err(e) => return self.fault(ti, &owner_id, e.to_string()),
                    Ok(true) => {
                        let t = &mut self.threads[ti];
                        t.frames.pop();
                        if let Some(parent) = t.frames.last_mut() {
                            parent.pc += 1;
                        }
                        continue;
                    }
                    Ok(false) => {
                        let t = &mut self.threads[ti];
                        if let Some(f) = t.frames.last_mut() {
                            f.ctl = CtlKind::Until { check_pending: false };
                        }
                        continue;
                    }
                }
            }

            if frame.pc >= body.len() {
                let t = &mut self.threads[ti];
                match frame.ctl {
                    CtlKind::Script => {
                        t.frames.clear();
                        t.status = ThreadStatus::Done;
                        return SliceEnd::Done;
                    }
                    CtlKind::Once => {
                        t.frames.pop();
                        if let Some(parent) = t.frames.last_mut() {
                            parent.pc += 1;
                        }
                        continue;
                    }
                    CtlKind::Repeat { remaining } => {
                        if remaining <= 1 {
                            t.frames.pop();
                            if let Some(parent) = t.frames.last_mut() {
                                parent.pc += 1;
                            }
                            continue;
                        }
                        let f = t.frames.last_mut().unwrap();
                        f.ctl = CtlKind::Repeat { remaining: remaining - 1 };
                        f.pc = 0;
                        return SliceEnd::Yielded;
                    }
                    CtlKind::Until { .. } => {
                        let f = t.frames.last_mut().unwrap();
                        f.ctl = CtlKind::Until { check_pending: true };
                        f.pc = 0;
                        return SliceEnd::Yielded;
                    }
                    CtlKind::Forever => {
                        let f = t.frames.last_mut().unwrap();
                        f.pc = 0;
                        return SliceEnd::Yielded;
                    }
                }
            }

            let block = &body[frame.pc];
            let thread_id = self.threads[ti].id;
            let instance_id = self.threads[ti].instance_id;
            self.mark_covered(&block.id);
            self.trace_block(thread_id, &block.id);

            match self.exec_block(ti, instance_id, block) {
                Ok(ExecOutcome::Continue) => {
                    self.threads[ti].frames.last_mut().unwrap().pc += 1;
                }
                Ok(ExecOutcome::EnterBody { body, ctl }) => {
                    self.threads[ti].frames.push(Frame { body, pc: 0, ctl });
                }
                Ok(ExecOutcome::Skip) => {
                    self.threads[ti].frames.last_mut().unwrap().pc += 1;
                }
                Ok(ExecOutcome::YieldAfter) => {
                    self.threads[ti].frames.last_mut().unwrap().pc += 1;
                    return SliceEnd::Yielded;
                }
                Ok(ExecOutcome::EndThread) => {
                    self.threads[ti].frames.clear();
                    self.threads[ti].status = ThreadStatus::Done;
                    return SliceEnd::Done;
                }
                Ok(ExecOutcome::HaltAll) => {
                    self.halted = true;
                    for t in &mut self.threads {
                        t.status = ThreadStatus::Done;
                    }
                    return SliceEnd::Halted;
                }
                Err(e) => return self.fault(ti, &block.id, e.to_string()),
            }
        }
    }

    fn exec_block(
        &mut self,
        ti: usize,
        instance_id: u64,
        block: &Block,
    ) -> Result<ExecOutcome, EvalError> {
        use ExecOutcome::*;
        match &block.op {
            Opcode::Move(dist) => {
                let d = eval::eval_num(self, instance_id, dist)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    let rad = inst.direction.to_radians();
                    inst.x += d * rad.sin();
                    inst.y += d * rad.cos();
                    Self::clamp_instance(inst);
                }
                Ok(Continue)
            }
            Opcode::SetXY(xe, ye) => {
                let x = eval::eval_num(self, instance_id, xe)?;
                let y = eval::eval_num(self, instance_id, ye)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.x = x;
                    inst.y = y;
                    Self::clamp_instance(inst);
                }
                Ok(Continue)
            }
            Opcode::ChangeX(e) => {
                let d = eval::eval_num(self, instance_id, e)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.x += d;
                    Self::clamp_instance(inst);
                }
                Ok(Continue)
            }
            Opcode::ChangeY(e) => {
                let d = eval::eval_num(self, instance_id, e)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.y += d;
                    Self::clamp_instance(inst);
                }
                Ok(Continue)
            }
            Opcode::PointDirection(e) => {
                let d = eval::eval_num(self, instance_id, e)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    // normalize into (-180, 180]
                    let mut dir = (d + 180.0).rem_euclid(360.0) - 180.0;
                    if dir == -180.0 {
                        dir = 180.0;
                    }
                    inst.direction = dir;
                }
                Ok(Continue)
            }
            Opcode::GotoRandom => {
                let x = self.rand_in_range(-STAGE_HALF_WIDTH, STAGE_HALF_WIDTH).unwrap();
                let y = self.rand_in_range(-STAGE_HALF_HEIGHT, STAGE_HALF_HEIGHT).unwrap();
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.x = x;
                    inst.y = y;
                }
                Ok(Continue)
            }
            Opcode::If { cond, .. } => {
                let c = eval::eval_bool(self, instance_id, cond)?;
                if c {
                    let body = self.index.0.block_bodies[&block.id][0];
                    Ok(EnterBody { body, ctl: CtlKind::Once })
                } else {
                    Ok(Skip)
                }
            }
            Opcode::IfElse { cond, .. } => {
                let c = eval::eval_bool(self, instance_id, cond)?;
                let bodies = &self.index.0.block_bodies[&block.id];
                let body = if c { bodies[0] } else { bodies[1] };
                Ok(EnterBody { body, ctl: CtlKind::Once })
            }
            Opcode::Repeat { times, .. } => {
                let n = eval::eval_num(self, instance_id, times)?.round();
                if n < 1.0 {
                    return Ok(Skip);
                }
                let body = self.index.0.block_bodies[&block.id][0];
                Ok(EnterBody { body, ctl: CtlKind::Repeat { remaining: n as u64 } })
            }
            Opcode::RepeatUntil { cond, .. } => {
                let c = eval::eval_bool(self, instance_id, cond)?;
                if c {
                    return Ok(Skip);
                }
                let body = self.index.0.block_bodies[&block.id][0];
                Ok(EnterBody { body, ctl: CtlKind::Until { check_pending: false } })
            }
            Opcode::Forever { .. } => {
                let body = self.index.0.block_bodies[&block.id][0];
                Ok(EnterBody { body, ctl: CtlKind::Forever })
            }
            Opcode::Wait(secs) => {
                let s = eval::eval_num(self, instance_id, secs)?;
                let steps = (s * STEPS_PER_SECOND).ceil().max(0.0) as u64;
                self.threads[ti].status = ThreadStatus::WaitUntil(self.step_index + steps.max(1));
                Ok(YieldAfter)
            }
            Opcode::StopAll => Ok(HaltAll),
            Opcode::StopScript => Ok(EndThread),
            Opcode::SetVar(name, e) => {
                let v = eval::eval_num(self, instance_id, e)?;
                self.variables.insert(name.clone(), v);
                Ok(Continue)
            }
            Opcode::ChangeVar(name, e) => {
                let v = eval::eval_num(self, instance_id, e)?;
                *self.variables.entry(name.clone()).or_insert(0.0) += v;
                Ok(Continue)
            }
            Opcode::SwitchCostume(costume) => {
                if let Some(inst) = self.instance_mut(instance_id) {
                    let sprite_index = inst.sprite_index;
                    let idx = self.spec.sprites[sprite_index]
                        .costumes
                        .iter()
                        .position(|c| &c.id == costume)
                        .unwrap_or(0);
                    self.instance_mut(instance_id).unwrap().costume_index = idx;
                }
                Ok(Continue)
            }
            Opcode::Hide => {
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.visible = false;
                }
                Ok(Continue)
            }
            Opcode::Show => {
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.visible = true;
                }
                Ok(Continue)
            }
            Opcode::SetSize(e) => {
                let v = eval::eval_num(self, instance_id, e)?;
                if let Some(inst) = self.instance_mut(instance_id) {
                    inst.size = v.clamp(1.0, 1000.0);
                }
                Ok(Continue)
            }
            // say has no runtime effect beyond coverage.
            Opcode::Say(_) => Ok(Continue),
            Opcode::Broadcast(msg) => {
                let receivers: Vec<(usize, u64, usize)> = self
                    .all_hat_scripts(|h| matches!(h, HatEvent::WhenBroadcastReceived(_)))
                    .into_iter()
                    .filter(|&(si, _, ci)| {
                        matches!(
                            &self.spec.sprites[si].scripts[ci].hat,
                            HatEvent::WhenBroadcastReceived(m) if m == msg
                        )
                    })
                    .collect();
                for (sprite_index, inst, script_index) in receivers {
                    self.restart_script(inst, sprite_index, script_index);
                }
                Ok(Continue)
            }
            Opcode::Ask(_) => {
                self.threads[ti].status = ThreadStatus::WaitingAnswer;
                Ok(YieldAfter)
            }
            Opcode::CreateClone(name) => {
                let sprite_index = self
                    .spec
                    .sprites
                    .iter()
                    .position(|s| &s.name == name)
                    .expect("validated clone target");
                let source = self
                    .sprites
                    .iter()
                    .find(|i| i.sprite_index == sprite_index)
                    .cloned();
                if let Some(source) = source {
                    let ordinal = {
                        let c = self.clone_counters.entry(sprite_index).or_insert(0);
                        *c += 1;
                        *c
                    };
                    let id = self.alloc_instance_id();
                    self.sprites.push(SpriteInstance {
                        instance_id: id,
                        ordinal,
                        is_clone: true,
                        ..source
                    });
                    let scripts =
                        self.scripts_with(sprite_index, |h| matches!(h, HatEvent::WhenIStartAsClone));
                    for script_index in scripts {
                        self.spawn_thread(id, sprite_index, script_index);
                    }
                }
                Ok(Continue)
            }
            Opcode::DeleteClone => {
                let is_clone = self.instance(instance_id).is_some_and(|i| i.is_clone);
                if !is_clone {
                    return Ok(Continue);
                }
                self.sprites.retain(|i| i.instance_id != instance_id);
                for t in &mut self.threads {
                    if t.instance_id == instance_id {
                        t.status = ThreadStatus::Done;
                        t.frames.clear();
                    }
                }
                Ok(EndThread)
            }
        }
    }

    /// Canonical digest of the full execution state.
    pub fn state_hash(&self) -> u64 {
        let mut h = StateHasher::new();
        h.write_u64(self.step_index);
        h.write_bool(self.halted);
        for s in &self.sprites {
            h.write_u64(s.instance_id);
            h.write_u64(s.sprite_index as u64);
            h.write_u64(s.ordinal as u64);
            h.write_bool(s.is_clone);
            h.write_f64(s.x);
            h.write_f64(s.y);
            h.write_f64(s.size);
            h.write_f64(s.direction);
            h.write_u64(s.costume_index as u64);
            h.write_bool(s.visible);
        }
        for (k, v) in &self.variables {
            h.write_str(k);
            h.write_f64(*v);
        }
        let (state, inc) = self.rng.state_bits();
        h.write_u64(state);
        h.write_u64(inc);
        for id in &self.covered {
            h.write_str(&id.0);
        }
        for t in &self.threads {
            h.write_u64(t.id);
            h.write_u64(t.instance_id);
            h.write_u64(t.sprite_index as u64);
            h.write_u64(t.script_index as u64);
            match t.status {
                ThreadStatus::Ready => h.write_u64(0),
                ThreadStatus::WaitUntil(s) => {
                    h.write_u64(1);
                    h.write_u64(s);
                }
                ThreadStatus::WaitingAnswer => h.write_u64(2),
                ThreadStatus::Done => h.write_u64(3),
            }
            for f in &t.frames {
                h.write_u64(f.body as u64);
                h.write_u64(f.pc as u64);
                match f.ctl {
                    CtlKind::Script => h.write_u64(0),
                    CtlKind::Once => h.write_u64(1),
                    CtlKind::Repeat { remaining } => {
                        h.write_u64(2);
                        h.write_u64(remaining);
                    }
                    CtlKind::Until { check_pending } => {
                        h.write_u64(3);
                        h.write_bool(check_pending);
                    }
                    CtlKind::Forever => h.write_u64(4),
                }
            }
        }
        for (k, until) in &self.keys_down {
            if *until > self.step_index {
                h.write_str(k);
                h.write_u64(*until);
            }
        }
        h.write_f64(self.mouse_x);
        h.write_f64(self.mouse_y);
        h.write_u64(self.mouse_down_until.max(self.step_index));
        if let Some(a) = &self.answer {
            h.write_str(a);
        }
        h.finish()
    }
}

enum ExecOutcome {
    Continue,
    Skip,
    EnterBody { body: u32, ctl: CtlKind },
    YieldAfter,
    EndThread,
    HaltAll,
}
