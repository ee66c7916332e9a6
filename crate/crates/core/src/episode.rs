//! One seeded playthrough: extract features, enumerate available events,
//! query the network, inject the chosen event, step the VM, and record
//! coverage, the timed event log and hidden activation traces. Also the
//! static-test extraction/replay path, which reruns a recorded event log
//! without any network.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::cdg::{build_cdg, Cdg, CdgNode};
use crate::fitness::{branch_distances, predicate_catalog, PredicateInfo, PredicateMins};
use crate::neat::{Genome, IdSource};
use crate::phenotype::{adapt_io, build_phenotype, FeatureVector, StructuralChange};
use crate::rng::Pcg32;
use crate::spec::{
    Expr, GameSpec, HatEvent, Opcode, RotationStyle, SpriteSpec, STAGE_HALF_HEIGHT,
    STAGE_HALF_WIDTH,
};
use crate::vm::{init_vm, InputEvent, RuntimeDiagnostic, VmState, SENSE_CAP};

/// Named feature groups or events with their member names.
pub type GroupCatalog = Vec<(String, Vec<String>)>;

/// Everything derived from a parsed game that episodes need, built once
/// and shared read-only across episodes and threads.
#[derive(Debug, Clone)]
pub struct GameContext {
    pub spec: Arc<GameSpec>,
    pub cdg: Cdg,
    pub predicates: Vec<PredicateInfo>,
    feature_templates: Vec<SpriteFeatures>,
    static_events: StaticEventInfo,
}

/// Which features a sprite exposes, derived from its code.
#[derive(Debug, Clone)]
struct SpriteFeatures {
    has_direction: bool,
    has_costume: bool,
    sensed_sprites: Vec<String>,
    sensed_colors: Vec<String>,
}

#[derive(Debug, Clone)]
struct StaticEventInfo {
    keys: Vec<String>,
    clickable_sprites: Vec<String>,
    has_stage_click: bool,
    mouse_sensing_sprites: Vec<String>,
}

impl GameContext {
    pub fn new(spec: GameSpec) -> Self {
        let cdg = build_cdg(&spec);
        let predicates = predicate_catalog(&spec);
        let feature_templates = spec.sprites.iter().map(sprite_features).collect();
        let static_events = scan_static_events(&spec);
        GameContext { spec: Arc::new(spec), cdg, predicates, feature_templates, static_events }
    }

    /// Input groups and event inventory of the freshly initialized game,
    /// used to seed initial genomes.
    pub fn initial_catalog(&self) -> (GroupCatalog, GroupCatalog) {
        let vm = init_vm(self.spec.clone(), 0);
        let features = extract_features(&vm, self);
        let events = event_inventory(&vm, self);
        (
            features.groups(),
            events.iter().map(|e| (e.tag.clone(), e.param_names())).collect(),
        )
    }
}

fn sprite_features(sprite: &SpriteSpec) -> SpriteFeatures {
    let mut has_costume = false;
    let mut sensed: BTreeSet<String> = BTreeSet::new();
    let mut colors: BTreeSet<String> = BTreeSet::new();

    let mut scan_expr = |e: &Expr| {
        let mut stack = vec![e];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Touching(name) | Expr::DistanceTo(name) => {
                    if name != &sprite.name {
                        sensed.insert(name.clone());
                    }
                }
                Expr::TouchingColor(c) => {
                    colors.insert(c.clone());
                }
                _ => {}
            }
            stack.extend(e.children());
        }
    };
    fn walk(blocks: &[crate::spec::Block], f: &mut impl FnMut(&Expr), costume: &mut bool) {
        for b in blocks {
            if matches!(b.op, Opcode::SwitchCostume(_)) {
                *costume = true;
            }
            for e in b.op.exprs() {
                f(e);
            }
            for body in b.op.bodies() {
                walk(body, f, costume);
            }
        }
    }
    for script in &sprite.scripts {
        walk(&script.body, &mut scan_expr, &mut has_costume);
    }

    SpriteFeatures {
        has_direction: sprite.rotation_style == RotationStyle::AllAround,
        has_costume,
        sensed_sprites: sensed.into_iter().collect(),
        sensed_colors: colors.into_iter().collect(),
    }
}

fn scan_static_events(spec: &GameSpec) -> StaticEventInfo {
    let mut keys: BTreeSet<String> = BTreeSet::new();
    let mut clickable: BTreeSet<String> = BTreeSet::new();
    let mut stage_click = false;
    let mut mouse_sprites: BTreeSet<String> = BTreeSet::new();

    for sprite in &spec.sprites {
        let mut uses_mouse = false;
        for script in &sprite.scripts {
            match &script.hat {
                HatEvent::KeyPressed(k) => {
                    keys.insert(k.clone());
                }
                HatEvent::ClickSprite => {
                    clickable.insert(sprite.name.clone());
                }
                HatEvent::ClickStage => stage_click = true,
                _ => {}
            }
        }
        spec_sprite_exprs(sprite, |e| match e {
            Expr::KeyDown(k) => {
                keys.insert(k.clone());
            }
            Expr::TouchingMouse | Expr::MouseDown => uses_mouse = true,
            _ => {}
        });
        if uses_mouse {
            mouse_sprites.insert(sprite.name.clone());
        }
    }
    StaticEventInfo {
        keys: keys.into_iter().collect(),
        clickable_sprites: clickable.into_iter().collect(),
        has_stage_click: stage_click,
        mouse_sensing_sprites: mouse_sprites.into_iter().collect(),
    }
}

fn spec_sprite_exprs(sprite: &SpriteSpec, mut f: impl FnMut(&Expr)) {
    fn walk(blocks: &[crate::spec::Block], f: &mut impl FnMut(&Expr)) {
        for b in blocks {
            for e in b.op.exprs() {
                let mut stack = vec![e];
                while let Some(e) = stack.pop() {
                    f(e);
                    stack.extend(e.children());
                }
            }
            for body in b.op.bodies() {
                walk(body, f);
            }
        }
    }
    for script in &sprite.scripts {
        walk(&script.body, &mut f);
    }
}

/// Extracts the normalized feature vector of the current state: per
/// visible sprite instance its position, size, and the attributes its code
/// makes relevant, plus all program variables in a "variables" group.
pub fn extract_features(vm: &VmState, ctx: &GameContext) -> FeatureVector {
    let mut values: Vec<(String, String, f64)> = Vec::new();
    for inst in &vm.sprites {
        if !inst.visible {
            continue;
        }
        let group = vm.group_tag(inst);
        let template = &ctx.feature_templates[inst.sprite_index];
        values.push((group.clone(), "x".into(), inst.x / STAGE_HALF_WIDTH));
        values.push((group.clone(), "y".into(), inst.y / STAGE_HALF_HEIGHT));
        values.push((group.clone(), "size".into(), (inst.size / 200.0).clamp(-1.0, 1.0)));
        if template.has_direction {
            values.push((group.clone(), "direction".into(), inst.direction / 180.0));
        }
        if template.has_costume {
            let count = ctx.spec.sprites[inst.sprite_index].costumes.len();
            let v = if count > 1 { inst.costume_index as f64 / (count - 1) as f64 } else { 0.0 };
            values.push((group.clone(), "costume".into(), v));
        }
        for sensed in &template.sensed_sprites {
            let nearest = vm
                .instances_of(sensed)
                .filter(|o| o.visible)
                .min_by(|a, b| {
                    let da = (a.x - inst.x).powi(2) + (a.y - inst.y).powi(2);
                    let db = (b.x - inst.x).powi(2) + (b.y - inst.y).powi(2);
                    da.partial_cmp(&db).unwrap()
                });
            let (dx, dy) = match nearest {
                Some(o) => ((o.x - inst.x) / SENSE_CAP, (o.y - inst.y) / SENSE_CAP),
                None => (0.0, 0.0),
            };
            values.push((group.clone(), format!("dx:{sensed}"), dx.clamp(-1.0, 1.0)));
            values.push((group.clone(), format!("dy:{sensed}"), dy.clamp(-1.0, 1.0)));
        }
        for color in &template.sensed_colors {
            for dir in [0.0, 90.0, 180.0, -90.0] {
                let d = vm
                    .color_rangefinder(vm.sprite_name(inst), color, dir)
                    .unwrap_or(SENSE_CAP);
                values.push((group.clone(), format!("rf:{color}:{dir}"), d / SENSE_CAP));
            }
        }
    }
    for decl in &ctx.spec.variables {
        let v = vm.variables.get(&decl.name).copied().unwrap_or(decl.init);
        let mid = (decl.range.0 + decl.range.1) / 2.0;
        let half = (decl.range.1 - decl.range.0) / 2.0;
        values.push((
            "variables".into(),
            decl.name.clone(),
            ((v - mid) / half).clamp(-1.0, 1.0),
        ));
    }
    FeatureVector::new(values)
}

/// Limits for event parameters.
pub const MAX_EVENT_DURATION: f64 = 10.0;
pub const TYPE_TEXT_RANGE: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

/// An available event with its parameter ranges. The tag doubles as the
/// network's output node label.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub tag: String,
    pub params: Vec<ParamSpec>,
}

impl EventSpec {
    fn duration(tag: String) -> Self {
        EventSpec {
            tag,
            params: vec![ParamSpec {
                name: "duration".into(),
                lo: 1.0,
                hi: MAX_EVENT_DURATION,
                integer: true,
            }],
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Builds the concrete input event from parameter values (same order
    /// as `params`).
    pub fn materialize(&self, values: &[f64]) -> InputEvent {
        let get = |i: usize| -> f64 {
            let p = &self.params[i];
            let v = values[i].clamp(p.lo, p.hi);
            if p.integer {
                v.round().clamp(p.lo, p.hi)
            } else {
                v
            }
        };
        if let Some(key) = self.tag.strip_prefix("key:") {
            return InputEvent::KeyPress { key: key.to_string(), duration_steps: get(0) as u32 };
        }
        if let Some(sprite) = self.tag.strip_prefix("click:") {
            return InputEvent::ClickSprite { sprite: sprite.to_string() };
        }
        if let Some(sprite) = self.tag.strip_prefix("mouseto:") {
            return InputEvent::MouseMoveTo { sprite: sprite.to_string() };
        }
        match self.tag.as_str() {
            "clickstage" => InputEvent::ClickStage,
            "typetext" => InputEvent::TypeText { text: format!("{}", get(0)) },
            "mousemove" => InputEvent::MouseMove { x: get(0), y: get(1) },
            "mousedown" => InputEvent::MouseDown { duration_steps: get(0) as u32 },
            "wait" => InputEvent::Wait { duration_steps: get(0) as u32 },
            other => unreachable!("unknown event tag {other}"),
        }
    }

    /// Uniformly random parameters, for the random baseline.
    pub fn random(&self, rng: &mut Pcg32) -> InputEvent {
        let values: Vec<f64> = self
            .params
            .iter()
            .map(|p| {
                if p.integer {
                    p.lo + rng.below((p.hi - p.lo) as u64 + 1) as f64
                } else {
                    rng.range_f64(p.lo, p.hi)
                }
            })
            .collect();
        self.materialize(&values)
    }
}

/// The events a player could send right now: keys referenced anywhere in
/// the program, clicks on currently visible clickable sprites, text entry
/// while a question is pending, mouse events when the program senses the
/// mouse, and always Wait.
pub fn event_inventory(vm: &VmState, ctx: &GameContext) -> Vec<EventSpec> {
    let info = &ctx.static_events;
    let mut out: Vec<EventSpec> = Vec::new();
    for sprite in &info.clickable_sprites {
        if vm.instances_of(sprite).any(|i| i.visible) {
            out.push(EventSpec { tag: format!("click:{sprite}"), params: Vec::new() });
        }
    }
    if info.has_stage_click {
        out.push(EventSpec { tag: "clickstage".into(), params: Vec::new() });
    }
    for key in &info.keys {
        out.push(EventSpec::duration(format!("key:{key}")));
    }
    if !info.mouse_sensing_sprites.is_empty() {
        out.push(EventSpec::duration("mousedown".into()));
        out.push(EventSpec {
            tag: "mousemove".into(),
            params: vec![
                ParamSpec {
                    name: "x".into(),
                    lo: -STAGE_HALF_WIDTH,
                    hi: STAGE_HALF_WIDTH,
                    integer: false,
                },
                ParamSpec {
                    name: "y".into(),
                    lo: -STAGE_HALF_HEIGHT,
                    hi: STAGE_HALF_HEIGHT,
                    integer: false,
                },
            ],
        });
        for sprite in &info.mouse_sensing_sprites {
            out.push(EventSpec { tag: format!("mouseto:{sprite}"), params: Vec::new() });
        }
    }
    if vm.ask_pending() {
        out.push(EventSpec {
            tag: "typetext".into(),
            params: vec![ParamSpec {
                name: "value".into(),
                lo: TYPE_TEXT_RANGE.0,
                hi: TYPE_TEXT_RANGE.1,
                integer: true,
            }],
        });
    }
    out.push(EventSpec::duration("wait".into()));
    out.sort_by(|a, b| a.tag.cmp(&b.tag));
    out
}

/// Per-step hidden-node activations of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationTrace {
    /// (hidden node id, step index) -> activation.
    pub values: BTreeMap<(u32, u64), f64>,
}

impl ActivationTrace {
    pub fn steps(&self) -> u64 {
        self.values.keys().map(|&(_, s)| s + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimedEvent {
    pub step: u64,
    #[serde(flatten)]
    pub event: InputEvent,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub seed: u64,
    pub coverage: BTreeSet<crate::spec::BlockId>,
    pub event_log: Vec<TimedEvent>,
    pub activation_trace: ActivationTrace,
    pub steps_executed: u64,
    pub target_covered: bool,
    pub structural_changes: Vec<StructuralChange>,
    /// Present when the genome grew during the episode.
    pub adapted_genome: Option<Genome>,
    pub predicate_mins: PredicateMins,
    pub halted: bool,
    pub diagnostics: Vec<RuntimeDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub max_steps: u64,
    pub record_trace: bool,
}

fn sample_distances(vm: &VmState, predicates: &[PredicateInfo], mins: &mut PredicateMins) {
    for p in predicates {
        let (t, f) = branch_distances(vm, p);
        let kt = (p.id.clone(), true);
        let kf = (p.id.clone(), false);
        let et = mins.entry(kt).or_insert(f64::INFINITY);
        *et = et.min(t);
        let ef = mins.entry(kf).or_insert(f64::INFINITY);
        *ef = ef.min(f);
    }
}

/// Runs one seeded episode: the network is queried every step, one event
/// per step, until the VM halts, the step budget runs out, or the target
/// statement is covered.
pub fn run_episode(
    genome: &Genome,
    ctx: &GameContext,
    seed: u64,
    target: Option<&CdgNode>,
    options: &EpisodeOptions,
    ids: &mut IdSource,
) -> EpisodeResult {
    let mut vm = init_vm(ctx.spec.clone(), seed);
    let mut genome_now = genome.clone();
    let mut phenotype = build_phenotype(&genome_now).expect("evolved genomes are acyclic");
    let mut adapt_rng = Pcg32::derive(seed, "episode-adapt");

    let target_block = target.and_then(|t| ctx.cdg.coverage_target_block(t));
    let is_covered = |vm: &VmState| -> bool {
        match (&target, &target_block) {
            (None, _) => false,
            (Some(_), None) => true, // Entry: trivially covered
            (Some(_), Some(block)) => vm.covered_blocks().contains(block),
        }
    };

    let mut result = EpisodeResult {
        seed,
        coverage: BTreeSet::new(),
        event_log: Vec::new(),
        activation_trace: ActivationTrace::default(),
        steps_executed: 0,
        target_covered: is_covered(&vm),
        structural_changes: Vec::new(),
        adapted_genome: None,
        predicate_mins: PredicateMins::new(),
        halted: false,
        diagnostics: Vec::new(),
    };

    sample_distances(&vm, &ctx.predicates, &mut result.predicate_mins);

    while !vm.halted && result.steps_executed < options.max_steps && !result.target_covered {
        let features = extract_features(&vm, ctx);
        let inventory = event_inventory(&vm, ctx);

        let groups = features.groups();
        let events: Vec<(String, Vec<String>)> =
            inventory.iter().map(|e| (e.tag.clone(), e.param_names())).collect();
        let (adapted, changes) = adapt_io(&genome_now, &groups, &events, ids, &mut adapt_rng);
        if adapted.nodes.len() != genome_now.nodes.len()
            || adapted.connections.len() != genome_now.connections.len()
        {
            genome_now = adapted;
            phenotype = build_phenotype(&genome_now).expect("adaptation keeps genomes acyclic");
            result.structural_changes.extend(changes);
        }

        phenotype.activate(&features);
        if options.record_trace {
            let step = vm.step_index;
            for (node, value) in phenotype.hidden_activations() {
                result.activation_trace.values.insert((node, step), value);
            }
        }

        let tags: Vec<String> = inventory.iter().map(|e| e.tag.clone()).collect();
        let (choice, _probs) =
            phenotype.select_event(&tags).expect("genome adapted to full inventory");
        let chosen = &inventory[choice];
        let values: Vec<f64> = chosen
            .params
            .iter()
            .map(|p| {
                phenotype
                    .regress_param(&chosen.tag, &p.name, p.lo, p.hi)
                    .expect("regression head exists after adaptation")
            })
            .collect();
        let event = chosen.materialize(&values);
        result.event_log.push(TimedEvent { step: vm.step_index, event: event.clone() });
        vm.apply_event(&event).expect("inventory events are valid");

        vm.step();
        result.steps_executed += 1;
        sample_distances(&vm, &ctx.predicates, &mut result.predicate_mins);
        result.target_covered = is_covered(&vm);
    }

    result.coverage = vm.covered_blocks().clone();
    result.halted = vm.halted;
    result.diagnostics = vm.diagnostics().to_vec();
    if !result.structural_changes.is_empty() {
        result.adapted_genome = Some(genome_now);
    }
    result
}

/// A fixed timed input sequence, replayable without a network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StaticTest {
    pub seed: u64,
    pub events: Vec<TimedEvent>,
}

/// Captures the input sequence a network produced in one episode.
pub fn extract_static_test(result: &EpisodeResult) -> StaticTest {
    StaticTest { seed: result.seed, events: result.event_log.clone() }
}

/// Replays a recorded event log verbatim on the given seed. Events whose
/// sprite no longer exists (mutated specs) are skipped with a diagnostic.
/// The replay horizon is the recorded one, capped by `max_steps`.
pub fn replay_static_test(
    test: &StaticTest,
    ctx: &GameContext,
    seed: u64,
    max_steps: u64,
) -> EpisodeResult {
    let mut vm = init_vm(ctx.spec.clone(), seed);
    let horizon = test.events.last().map(|e| e.step + 1).unwrap_or(0).min(max_steps);
    let mut diagnostics = Vec::new();
    let mut by_step: BTreeMap<u64, Vec<&TimedEvent>> = BTreeMap::new();
    for ev in &test.events {
        by_step.entry(ev.step).or_default().push(ev);
    }
    let mut steps = 0;
    while !vm.halted && steps < horizon {
        if let Some(events) = by_step.get(&vm.step_index) {
            for te in events {
                if let Err(e) = vm.apply_event(&te.event) {
                    diagnostics.push(RuntimeDiagnostic {
                        step: vm.step_index,
                        block_id: String::new(),
                        message: format!("replay event skipped: {e}"),
                    });
                }
            }
        }
        vm.step();
        steps += 1;
    }
    diagnostics.extend(vm.diagnostics().iter().cloned());
    EpisodeResult {
        seed,
        coverage: vm.covered_blocks().clone(),
        event_log: test.events.clone(),
        activation_trace: ActivationTrace::default(),
        steps_executed: steps,
        target_covered: false,
        structural_changes: Vec::new(),
        adapted_genome: None,
        predicate_mins: PredicateMins::new(),
        halted: vm.halted,
        diagnostics,
    }
}

pub fn static_test_to_json(test: &StaticTest) -> String {
    serde_json::to_string_pretty(test).expect("static test serializes")
}

pub fn static_test_from_json(text: &str) -> Result<StaticTest, serde_json::Error> {
    serde_json::from_str(text)
}
