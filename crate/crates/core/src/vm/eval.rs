//! Expression evaluation and sensing.
//!
//! Evaluation is relative to a sprite instance (for `touching`, `attr` and
//! friends). Arithmetic faults (division by zero, unparseable text) abort
//! the evaluating thread but leave the VM running.

use super::{SpriteInstance, VmState, SENSE_CAP};
use crate::rng::Pcg32;
use crate::spec::{BinOp, Expr, SpriteAttr, STAGE_HALF_HEIGHT, STAGE_HALF_WIDTH};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("`{0}` is not a number")]
    NotANumber(String),
    #[error("randomInRange: lo {0} > hi {1}")]
    BadRange(f64, f64),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("no instance of sprite `{0}`")]
    NoInstance(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Value {
    Num(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    fn as_num(&self) -> Result<f64, EvalError> {
        match self {
            Value::Num(n) => Ok(*n),
            Value::Text(s) => {
                s.trim().parse::<f64>().map_err(|_| EvalError::NotANumber(s.clone()))
            }
            Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
        }
    }
}

pub(crate) fn eval_num(vm: &mut VmState, instance_id: u64, e: &Expr) -> Result<f64, EvalError> {
    let mut rng = vm.rng_take();
    let r = eval(vm, &mut rng, instance_id, e).and_then(|v| v.as_num());
    vm.rng_put(rng);
    r
}

pub(crate) fn eval_bool(vm: &mut VmState, instance_id: u64, e: &Expr) -> Result<bool, EvalError> {
    let mut rng = vm.rng_take();
    let r = eval(vm, &mut rng, instance_id, e);
    vm.rng_put(rng);
    match r? {
        Value::Bool(b) => Ok(b),
        Value::Num(n) => Ok(n != 0.0),
        Value::Text(s) => Ok(!s.is_empty()),
    }
}

/// Evaluates against an immutable state with an explicit RNG; used with a
/// cloned RNG when evaluation must not perturb the VM's stream.
pub(crate) fn eval_num_with(
    vm: &VmState,
    rng: &mut Pcg32,
    instance_id: u64,
    e: &Expr,
) -> Result<f64, EvalError> {
    eval(vm, rng, instance_id, e)?.as_num()
}

pub(crate) fn eval_bool_with(
    vm: &VmState,
    rng: &mut Pcg32,
    instance_id: u64,
    e: &Expr,
) -> Result<bool, EvalError> {
    match eval(vm, rng, instance_id, e)? {
        Value::Bool(b) => Ok(b),
        Value::Num(n) => Ok(n != 0.0),
        Value::Text(s) => Ok(!s.is_empty()),
    }
}

fn eval(vm: &VmState, rng: &mut Pcg32, instance_id: u64, e: &Expr) -> Result<Value, EvalError> {
    Ok(match e {
        Expr::Num(n) => Value::Num(*n),
        Expr::Str(s) => Value::Text(s.clone()),
        Expr::Bin(op, a, b) => {
            if *op == BinOp::Eq {
                let va = eval(vm, rng, instance_id, a)?;
                let vb = eval(vm, rng, instance_id, b)?;
                return Ok(Value::Bool(loose_eq(&va, &vb)));
            }
            let x = eval(vm, rng, instance_id, a)?.as_num()?;
            let y = eval(vm, rng, instance_id, b)?.as_num()?;
            match op {
                BinOp::Add => Value::Num(x + y),
                BinOp::Sub => Value::Num(x - y),
                BinOp::Mul => Value::Num(x * y),
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Num(x / y)
                }
                BinOp::Mod => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Num(x.rem_euclid(y))
                }
                BinOp::Lt => Value::Bool(x < y),
                BinOp::Gt => Value::Bool(x > y),
                BinOp::Eq => unreachable!(),
            }
        }
        Expr::And(a, b) => {
            Value::Bool(ebool(vm, rng, instance_id, a)? && ebool(vm, rng, instance_id, b)?)
        }
        Expr::Or(a, b) => {
            Value::Bool(ebool(vm, rng, instance_id, a)? || ebool(vm, rng, instance_id, b)?)
        }
        Expr::Not(a) => Value::Bool(!ebool(vm, rng, instance_id, a)?),
        Expr::RandomInRange(a, b) => {
            let lo = eval(vm, rng, instance_id, a)?.as_num()?;
            let hi = eval(vm, rng, instance_id, b)?.as_num()?;
            let v = draw_in_range(rng, lo, hi).map_err(|_| EvalError::BadRange(lo, hi))?;
            Value::Num(v)
        }
        Expr::Touching(name) => {
            Value::Bool(touching_sprite(vm, instance_id, name))
        }
        Expr::TouchingEdge => {
            let touching = vm.instance(instance_id).is_some_and(|inst| {
                let r = vm.effective_radius(inst);
                inst.x.abs() + r >= STAGE_HALF_WIDTH || inst.y.abs() + r >= STAGE_HALF_HEIGHT
            });
            Value::Bool(touching)
        }
        Expr::TouchingColor(color) => Value::Bool(touching_color(vm, instance_id, color)),
        Expr::TouchingMouse => {
            let touching = vm.instance(instance_id).is_some_and(|inst| {
                if !inst.visible {
                    return false;
                }
                let r = vm.effective_radius(inst);
                let dx = inst.x - vm.mouse_x;
                let dy = inst.y - vm.mouse_y;
                (dx * dx + dy * dy).sqrt() <= r
            });
            Value::Bool(touching)
        }
        Expr::MouseDown => Value::Bool(vm.mouse_button_down()),
        Expr::DistanceTo(name) => {
            let inst = vm
                .instance(instance_id)
                .ok_or_else(|| EvalError::NoInstance("self".to_string()))?;
            let (sx, sy) = (inst.x, inst.y);
            let d = vm
                .instances_of(name)
                .map(|o| ((o.x - sx).powi(2) + (o.y - sy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d.is_finite() {
                Value::Num(d.min(SENSE_CAP))
            } else {
                return Err(EvalError::NoInstance(name.clone()));
            }
        }
        Expr::KeyDown(key) => Value::Bool(vm.key_down(key)),
        Expr::Answer => match &vm.answer {
            Some(a) => Value::Text(a.clone()),
            None => Value::Text(String::new()),
        },
        Expr::Var(name) => Value::Num(
            *vm.variables.get(name).ok_or_else(|| EvalError::UnknownVariable(name.clone()))?,
        ),
        Expr::Attr(name, attr) => {
            let inst = vm
                .instances_of(name)
                .next()
                .ok_or_else(|| EvalError::NoInstance(name.clone()))?;
            Value::Num(match attr {
                SpriteAttr::X => inst.x,
                SpriteAttr::Y => inst.y,
                SpriteAttr::Size => inst.size,
                SpriteAttr::Direction => inst.direction,
                SpriteAttr::Costume => inst.costume_index as f64,
            })
        }
    })
}

fn ebool(vm: &VmState, rng: &mut Pcg32, instance_id: u64, e: &Expr) -> Result<bool, EvalError> {
    match eval(vm, rng, instance_id, e)? {
        Value::Bool(b) => Ok(b),
        Value::Num(n) => Ok(n != 0.0),
        Value::Text(s) => Ok(!s.is_empty()),
    }
}

/// One draw, uniform over [lo, hi]; integer-valued for integral bounds.
pub(crate) fn draw_in_range(rng: &mut Pcg32, lo: f64, hi: f64) -> Result<f64, ()> {
    // negated form so NaN bounds fail the precondition too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lo <= hi) {
        return Err(());
    }
    let draw = rng.next_u32();
    if lo == hi {
        return Ok(lo);
    }
    if lo.fract() == 0.0 && hi.fract() == 0.0 {
        let span = (hi - lo) as u64 + 1;
        Ok(lo + ((draw as u64 * span) >> 32).min(span - 1) as f64)
    } else {
        Ok(lo + draw as f64 / 4294967296.0 * (hi - lo))
    }
}

fn loose_eq(a: &Value, b: &Value) -> bool {
    match (a.as_num(), b.as_num()) {
        (Ok(x), Ok(y)) => x == y,
        _ => match (a, b) {
            (Value::Text(x), Value::Text(y)) => x == y,
            _ => false,
        },
    }
}

/// Signed gap between the closest pair of instances of two sprites:
/// center distance minus the sum of effective radii. <= 0 means touching.
/// Only visible instances participate.
pub(crate) fn pair_distance(vm: &VmState, a: &SpriteInstance, b: &SpriteInstance) -> f64 {
    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    d - vm.effective_radius(a) - vm.effective_radius(b)
}

fn touching_sprite(vm: &VmState, instance_id: u64, name: &str) -> bool {
    let Some(me) = vm.instance(instance_id) else { return false };
    if !me.visible {
        return false;
    }
    vm.instances_of(name)
        .filter(|o| o.visible && o.instance_id != instance_id)
        .any(|o| pair_distance(vm, me, o) <= 0.0)
}

fn touching_color(vm: &VmState, instance_id: u64, color: &str) -> bool {
    let Some(me) = vm.instance(instance_id) else { return false };
    if !me.visible {
        return false;
    }
    let r = vm.effective_radius(me);
    vm.spec().stage.color_regions.iter().filter(|reg| reg.color == color).any(|reg| {
        let cx = me.x.clamp(reg.x1, reg.x2);
        let cy = me.y.clamp(reg.y1, reg.y2);
        let dx = me.x - cx;
        let dy = me.y - cy;
        (dx * dx + dy * dy).sqrt() <= r
    })
}

impl VmState {
    /// Signed touching gap between the closest visible instances of two
    /// sprites (center distance minus radii). Errors on unknown names.
    pub fn touching_distance(&self, a: &str, b: &str) -> Result<f64, super::VmError> {
        for name in [a, b] {
            if self.spec().find_sprite(name).is_none() {
                return Err(super::VmError::UnknownSprite(name.to_string()));
            }
        }
        let mut best = f64::INFINITY;
        for ia in self.instances_of(a).filter(|i| i.visible) {
            for ib in self.instances_of(b).filter(|i| i.visible) {
                if ia.instance_id == ib.instance_id {
                    continue;
                }
                best = best.min(pair_distance(self, ia, ib));
            }
        }
        Ok(best)
    }

    /// Distance from a sprite along a ray to the nearest boundary of a
    /// region of the given color, capped at 600. Relative direction is in
    /// degrees from the sprite's heading (0 = straight ahead).
    pub fn color_rangefinder(
        &self,
        sprite: &str,
        color: &str,
        relative_direction: f64,
    ) -> Result<f64, super::VmError> {
        if self.spec().find_sprite(sprite).is_none() {
            return Err(super::VmError::UnknownSprite(sprite.to_string()));
        }
        if !self.spec().stage.color_regions.iter().any(|r| r.color == color) {
            return Err(super::VmError::UnknownColor(color.to_string()));
        }
        let Some(inst) = self.instances_of(sprite).next() else {
            return Ok(SENSE_CAP);
        };
        let heading = inst.direction + relative_direction;
        let rad = heading.to_radians();
        let (dx, dy) = (rad.sin(), rad.cos());
        let mut best = SENSE_CAP;
        for reg in self.spec().stage.color_regions.iter().filter(|r| r.color == color) {
            if let Some(t) = ray_rect_entry(inst.x, inst.y, dx, dy, reg.x1, reg.y1, reg.x2, reg.y2)
            {
                best = best.min(t);
            }
        }
        Ok(best.clamp(0.0, SENSE_CAP))
    }
}

/// Slab-method ray/AABB intersection; returns the entry distance (0 when the
/// origin lies inside the rectangle), or None when the ray misses.
#[allow(clippy::too_many_arguments)]
fn ray_rect_entry(
    ox: f64,
    oy: f64,
    dx: f64,
    dy: f64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
) -> Option<f64> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for (o, d, lo, hi) in [(ox, dx, x1, x2), (oy, dy, y1, y2)] {
        if d.abs() < 1e-12 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let t1 = (lo - o) / d;
            let t2 = (hi - o) / d;
            tmin = tmin.max(t1.min(t2));
            tmax = tmax.min(t1.max(t2));
        }
    }
    if tmax < tmin.max(0.0) {
        return None;
    }
    Some(tmin.max(0.0))
}
