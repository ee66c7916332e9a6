//! Bundled mini games used by the test suites, examples and benchmarks.

/// Catch three falling apples with a key-steered bowl. A decorative hidden
/// cloud consumes random draws every step, so removing it shifts the
/// random stream without changing gameplay.
pub const FRUIT_CATCHING: &str = include_str!("../games/fruit_catching.game");

/// Keep a bouncing ball in play with a paddle; three paddle hits win.
/// Variable- and operator-heavy, which gives the mutation engine more
/// surface than FruitCatching.
pub const PADDLE_BOUNCE: &str = include_str!("../games/paddle_bounce.game");

pub fn all() -> Vec<(&'static str, &'static str)> {
    vec![("fruit_catching", FRUIT_CATCHING), ("paddle_bounce", PADDLE_BOUNCE)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{parse_game, serialize_game, validate_spec};

    #[test]
    fn bundled_games_are_valid_and_canonical() {
        for (name, text) in all() {
            let spec = parse_game(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(validate_spec(&spec).is_empty(), "{name} must validate");
            assert_eq!(serialize_game(&spec), text, "{name} is stored in canonical form");
        }
    }

    #[test]
    fn fruit_catching_is_winnable_by_a_perfect_player() {
        use crate::vm::{init_vm, InputEvent};
        use std::sync::Arc;

        let spec = Arc::new(parse_game(FRUIT_CATCHING).unwrap());
        for seed in 0..20 {
            let mut vm = init_vm(spec.clone(), seed);
            let mut won = false;
            for _ in 0..300 {
                if vm.halted {
                    break;
                }
                // scripted pilot: steer the bowl under the apple
                let bowl = vm.instances_of("bowl").next().unwrap();
                let apple = vm.instances_of("apple").next().unwrap();
                let dx = apple.x - bowl.x;
                if dx > 7.0 {
                    vm.apply_event(&InputEvent::KeyPress {
                        key: "right".into(),
                        duration_steps: 1,
                    })
                    .unwrap();
                } else if dx < -7.0 {
                    vm.apply_event(&InputEvent::KeyPress {
                        key: "left".into(),
                        duration_steps: 1,
                    })
                    .unwrap();
                }
                vm.step();
                if vm.covered_blocks().contains(&crate::spec::BlockId::new("a7")) {
                    won = true;
                    break;
                }
            }
            assert!(won, "perfect play must win FruitCatching on seed {seed}");
        }
    }

    #[test]
    fn paddle_bounce_is_winnable_by_a_perfect_player() {
        use crate::vm::{init_vm, InputEvent};
        use std::sync::Arc;

        let spec = Arc::new(parse_game(PADDLE_BOUNCE).unwrap());
        for seed in 0..20 {
            let mut vm = init_vm(spec.clone(), seed);
            let mut won = false;
            for _ in 0..300 {
                if vm.halted {
                    break;
                }
                let paddle = vm.instances_of("paddle").next().unwrap();
                let ball = vm.instances_of("ball").next().unwrap();
                let dx = ball.x - paddle.x;
                if dx > 8.0 {
                    vm.apply_event(&InputEvent::KeyPress {
                        key: "right".into(),
                        duration_steps: 1,
                    })
                    .unwrap();
                } else if dx < -8.0 {
                    vm.apply_event(&InputEvent::KeyPress {
                        key: "left".into(),
                        duration_steps: 1,
                    })
                    .unwrap();
                }
                vm.step();
                if vm.covered_blocks().contains(&crate::spec::BlockId::new("k14")) {
                    won = true;
                    break;
                }
            }
            assert!(won, "perfect play must win PaddleBounce on seed {seed}");
        }
    }
}
