//! Grounding functions: read an action description out of the semantic
//! network and turn it into a timed actuator command.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Actuator, KernelConfig};
use crate::semnet::{Memory, NodeId, Target};

/// What a grounding function sees of the calling sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActionArgs {
    /// Tags of the action node, including halo aliases.
    pub verb: Vec<String>,
    pub dir: Vec<String>,
    pub man: Vec<String>,
    /// Named entity the action is applied to.
    pub obj: Option<String>,
    pub text: Option<String>,
}

impl ActionArgs {
    /// Reads `fcn -arg-> act` and the modifiers hanging off `act`.
    pub fn read(mem: &Memory, fcn: NodeId) -> ActionArgs {
        let mut args = ActionArgs::default();
        let act = mem
            .outgoing(fcn, "arg", true)
            .into_iter()
            .find_map(|t| match t {
                Target::Node(n) => Some(n),
                Target::Str(_) => None,
            });
        let Some(act) = act else { return args };
        let tags = |id: NodeId| -> Vec<String> {
            mem.node(id)
                .map(|n| n.tags(true).into_iter().map(str::to_lowercase).collect())
                .unwrap_or_default()
        };
        args.verb = tags(act);
        for m in mem.incoming(act, "dir", true) {
            args.dir.extend(tags(m));
        }
        for m in mem.incoming(act, "man", true) {
            args.man.extend(tags(m));
        }
        for t in mem.outgoing(act, "obj", true) {
            let Target::Node(o) = t else { continue };
            let Some(node) = mem.node(o) else { continue };
            if let Some(Target::Str(s)) = mem.outgoing(o, "str", true).into_iter().next() {
                args.text = Some(s);
            } else if node.entity {
                args.obj = node.lex.first().cloned();
            }
        }
        args
    }

    fn has_dir(&self, words: &[&str]) -> bool {
        self.dir.iter().any(|d| words.contains(&d.as_str()))
    }

    /// Speed factor from manner adverbs.
    pub fn manner_factor(&self) -> f64 {
        if self.man.iter().any(|m| m == "slowly" || m == "slow") {
            0.5
        } else if self.man.iter().any(|m| m == "quickly" || m == "fast") {
            1.5
        } else {
            1.0
        }
    }

    /// +1 forward, -1 backward.
    pub fn drive_sign(&self) -> Option<f64> {
        if self.has_dir(&["forward", "forwards", "ahead"]) {
            Some(1.0)
        } else if self.has_dir(&["backward", "backwards", "back", "reverse"]) {
            Some(-1.0)
        } else {
            None
        }
    }

    /// +1 counterclockwise, -1 clockwise.
    pub fn turn_sign(&self) -> Option<f64> {
        if self.has_dir(&["left", "counterclockwise", "anticlockwise"]) {
            Some(1.0)
        } else if self.has_dir(&["right", "clockwise"]) {
            Some(-1.0)
        } else {
            None
        }
    }

    /// Compact argument list for the event log.
    pub fn summary(&self) -> Vec<String> {
        let mut out: Vec<String> = self.dir.iter().chain(&self.man).cloned().collect();
        out.extend(self.obj.iter().cloned());
        out.extend(self.text.iter().cloned());
        out
    }
}

/// A timed command for one actuator.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Drive { speed: f64 },
    Turn { spin: f64 },
    Grab { target: Option<String> },
    Release,
    Lift { delta: f64 },
    Say { text: String },
}

impl Action {
    pub fn actuator(&self) -> Actuator {
        match self {
            Action::Drive { .. } | Action::Turn { .. } => Actuator::Wheels,
            Action::Grab { .. } | Action::Release => Actuator::Gripper,
            Action::Lift { .. } => Actuator::Lift,
            Action::Say { .. } => Actuator::Voice,
        }
    }
}

/// Returns the action and its duration in ticks, or why it cannot start.
pub type GroundFn = fn(&ActionArgs, &KernelConfig) -> Result<(Action, u64), String>;

fn base_drive(a: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    let sign = a.drive_sign().ok_or("no recognizable direction")?;
    let speed = (sign * c.v_nom * a.manner_factor()).clamp(-c.v_max, c.v_max);
    Ok((Action::Drive { speed }, c.drive_ticks))
}

fn base_turn(a: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    let sign = a.turn_sign().ok_or("no recognizable direction")?;
    let spin = sign * c.turn_angle * c.tick_hz / c.turn_ticks as f64;
    Ok((Action::Turn { spin }, c.turn_ticks))
}

fn base_grab(a: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    Ok((Action::Grab { target: a.obj.clone() }, c.grip_ticks))
}

fn base_release(_: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    Ok((Action::Release, c.grip_ticks))
}

fn base_lift(_: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    Ok((Action::Lift { delta: c.lift_step }, c.lift_ticks))
}

fn base_lower(_: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    Ok((Action::Lift { delta: -c.lift_step }, c.lift_ticks))
}

fn base_say(a: &ActionArgs, c: &KernelConfig) -> Result<(Action, u64), String> {
    let text = a.text.clone().unwrap_or_default();
    let ticks = text.chars().count() as u64 * c.say_ticks_per_char;
    Ok((Action::Say { text }, ticks))
}

pub fn builtin() -> BTreeMap<String, GroundFn> {
    let table: [(&str, GroundFn); 7] = [
        ("base_drive", base_drive),
        ("base_turn", base_turn),
        ("base_grab", base_grab),
        ("base_release", base_release),
        ("base_lift", base_lift),
        ("base_lower", base_lower),
        ("base_say", base_say),
    ];
    table.into_iter().map(|(n, f)| (n.to_string(), f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semnet::Level;

    fn act(mem: &mut Memory, verb: &str, dir: &str) -> NodeId {
        let a = mem.add_node(Some(verb), 1.0, Level::Attention).unwrap();
        let d = mem.add_node(Some(dir), 1.0, Level::Attention).unwrap();
        mem.add_edge(d, "dir", Target::Node(a)).unwrap();
        let f = mem.add_node(Some("base_drive"), 1.0, Level::Attention).unwrap();
        mem.add_edge(f, "arg", Target::Node(a)).unwrap();
        f
    }

    #[test]
    fn variant_spellings_of_direction() {
        let mut m = Memory::default();
        for (w, s) in [("forward", 1.0), ("backwards", -1.0), ("backward", -1.0), ("ahead", 1.0)] {
            let f = act(&mut m, "drive", w);
            assert_eq!(ActionArgs::read(&m, f).drive_sign(), Some(s), "{w}");
        }
        let f = act(&mut m, "turn", "widdershins");
        assert_eq!(ActionArgs::read(&m, f).turn_sign(), None);
    }

    #[test]
    fn speeds_and_durations() {
        let c = KernelConfig::default();
        let mut a = ActionArgs {
            dir: vec!["forward".into()],
            ..Default::default()
        };
        assert_eq!(base_drive(&a, &c).unwrap(), (Action::Drive { speed: 0.10 }, 30));
        a.man = vec!["slowly".into()];
        assert_eq!(base_drive(&a, &c).unwrap().0, Action::Drive { speed: 0.05 });
        a.man = vec!["quickly".into()];
        let (Action::Drive { speed }, _) = base_drive(&a, &c).unwrap() else { panic!() };
        assert!((speed - 0.15).abs() < 1e-12);
        let say = ActionArgs {
            text: Some("hello".into()),
            ..Default::default()
        };
        assert_eq!(base_say(&say, &c).unwrap().1, 5);
    }
}
