//! Grounding kernel: a simulated forklift robot.
//!
//! The robot is a disc driven by a unicycle model and integrated exactly
//! once per tick. Grounding calls claim one actuator each. When calls from
//! different foci want the same actuator, the younger focus wins and the
//! loser fails. Calls from one focus share it, which is how "drive and
//! turn" becomes an arc.

pub mod grounding;
pub mod world;

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grounding::{Action, ActionArgs, GroundFn};
pub use world::{World, WorldError};

use crate::semnet::{Memory, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub v_nom: f64,
    pub v_max: f64,
    pub drive_ticks: u64,
    pub turn_angle: f64,
    pub turn_ticks: u64,
    pub lift_step: f64,
    pub lift_max: f64,
    pub lift_ticks: u64,
    pub grasp_range: f64,
    pub grip_ticks: u64,
    pub say_ticks_per_char: u64,
    pub refractory_ticks: u64,
    pub stall_eps: f64,
    pub stall_window: u64,
    pub tick_hz: f64,
    pub robot_radius: f64,
    pub sensor_max: f64,
    pub close_range: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            v_nom: 0.10,
            v_max: 0.25,
            drive_ticks: 30,
            turn_angle: FRAC_PI_2,
            turn_ticks: 30,
            lift_step: 0.03,
            lift_max: 0.06,
            lift_ticks: 15,
            grasp_range: 0.05,
            grip_ticks: 15,
            say_ticks_per_char: 1,
            refractory_ticks: 60,
            stall_eps: 0.005,
            stall_window: 10,
            tick_hz: 30.0,
            robot_radius: 0.05,
            sensor_max: 0.40,
            close_range: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actuator {
    Wheels,
    Gripper,
    Lift,
    Voice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grip {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CallStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("no grounding function named `{0}`")]
    Unregistered(String),
    #[error("{0}: {1}")]
    BadArgs(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub wheel_speed: f64,
    pub spin: f64,
    pub grip: Grip,
    pub holding: Option<String>,
    pub lift: f64,
}

/// Something the kernel did that belongs in the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelEvent {
    Speech { call: CallId, text: String },
    Truncated { call: CallId, text: String },
    Actuate { call: CallId, actuator: Actuator, action: String },
}

#[derive(Debug, Clone)]
struct Call {
    name: String,
    action: Action,
    priority: u64,
    remaining: u64,
    status: CallStatus,
    trail: VecDeque<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectPose {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Per-tick state record sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub tick: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub spin: f64,
    pub grip: Grip,
    pub holding: Option<String>,
    pub lift: f64,
    pub range: Option<f64>,
    pub objects: Vec<ObjectPose>,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    cfg: KernelConfig,
    world: World,
    robot: RobotState,
    registry: BTreeMap<String, GroundFn>,
    calls: BTreeMap<CallId, Call>,
    next_call: u32,
    last_proximity: Option<u64>,
    range: Option<f64>,
    contact: bool,
    events: Vec<KernelEvent>,
}

impl Kernel {
    pub fn new(world: World, cfg: KernelConfig) -> Self {
        let robot = RobotState {
            x: world.robot.x,
            y: world.robot.y,
            heading: world.robot.heading,
            wheel_speed: 0.0,
            spin: 0.0,
            grip: Grip::Open,
            holding: None,
            lift: 0.0,
        };
        Kernel {
            cfg,
            world,
            robot,
            registry: grounding::builtin(),
            calls: BTreeMap::new(),
            next_call: 0,
            last_proximity: None,
            range: None,
            contact: false,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn register(&mut self, name: &str, f: GroundFn) {
        self.registry.insert(name.to_string(), f);
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.registry.contains_key(name)
    }

    pub fn place(&mut self, name: &str, x: f64, y: f64) {
        if self.robot.holding.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(name)) {
            self.robot.holding = None;
            self.robot.grip = Grip::Open;
        }
        self.world.place(name, x, y);
    }

    pub fn set_pose(&mut self, x: f64, y: f64, heading: f64) {
        self.robot.x = x;
        self.robot.y = y;
        self.robot.heading = heading;
    }

    pub fn drain_events(&mut self) -> Vec<KernelEvent> {
        std::mem::take(&mut self.events)
    }

    fn front(&self) -> [f64; 2] {
        let r = self.cfg.robot_radius;
        [
            self.robot.x + r * self.robot.heading.cos(),
            self.robot.y + r * self.robot.heading.sin(),
        ]
    }

    /// Starts a grounding function. `priority` is the calling focus's age
    /// rank (larger is younger). The returned call may already be finished.
    pub fn dispatch(
        &mut self,
        name: &str,
        mem: &Memory,
        fcn: NodeId,
        priority: u64,
    ) -> Result<(CallId, ActionArgs), KernelError> {
        let f = *self
            .registry
            .get(name)
            .ok_or_else(|| KernelError::Unregistered(name.to_string()))?;
        let args = ActionArgs::read(mem, fcn);
        let (action, ticks) = f(&args, &self.cfg).map_err(|e| KernelError::BadArgs(name.to_string(), e))?;
        self.next_call += 1;
        let id = CallId(self.next_call);
        let actuator = action.actuator();

        let holders: Vec<(CallId, u64)> = self
            .calls
            .iter()
            .filter(|(_, c)| c.status == CallStatus::Running && c.action.actuator() == actuator)
            .map(|(id, c)| (*id, c.priority))
            .collect();
        let refused = holders.iter().any(|(_, p)| *p > priority);
        let mut call = Call {
            name: name.to_string(),
            action,
            priority,
            remaining: ticks,
            status: CallStatus::Running,
            trail: VecDeque::new(),
        };
        if refused {
            call.status = CallStatus::Failed;
            self.events.push(KernelEvent::Actuate {
                call: id,
                actuator,
                action: "refused".into(),
            });
            self.calls.insert(id, call);
            return Ok((id, args));
        }
        for (other, p) in holders {
            if p < priority {
                self.stop(other, "preempted");
            }
        }
        self.events.push(KernelEvent::Actuate {
            call: id,
            actuator,
            action: format!("start {name}"),
        });
        if let Action::Say { text } = &call.action {
            self.events.push(KernelEvent::Speech {
                call: id,
                text: text.clone(),
            });
        }
        if let Action::Release = call.action {
            if self.robot.holding.is_none() {
                call.remaining = 0;
            }
        }
        call.trail.push_back([self.robot.x, self.robot.y]);
        let done_now = call.remaining == 0;
        self.calls.insert(id, call);
        if done_now {
            self.finish(id);
        }
        Ok((id, args))
    }

    pub fn status(&self, id: CallId) -> Option<CallStatus> {
        self.calls.get(&id).map(|c| c.status)
    }

    pub fn call_name(&self, id: CallId) -> Option<&str> {
        self.calls.get(&id).map(|c| c.name.as_str())
    }

    /// Terminates a running call from outside (its play or focus ended).
    pub fn cancel(&mut self, id: CallId) {
        if self.status(id) == Some(CallStatus::Running) {
            self.stop(id, "cancelled");
        }
    }

    /// Forgets finished calls.
    pub fn forget(&mut self, id: CallId) {
        if self.status(id) != Some(CallStatus::Running) {
            self.calls.remove(&id);
        }
    }

    fn stop(&mut self, id: CallId, why: &str) {
        let Some(c) = self.calls.get_mut(&id) else { return };
        c.status = CallStatus::Failed;
        let actuator = c.action.actuator();
        if let Action::Say { text } = &c.action {
            if c.remaining > 0 {
                self.events.push(KernelEvent::Truncated {
                    call: id,
                    text: text.clone(),
                });
            }
        }
        self.events.push(KernelEvent::Actuate {
            call: id,
            actuator,
            action: why.to_string(),
        });
    }

    /// Applies a call's effect at its natural end.
    fn finish(&mut self, id: CallId) {
        let Some(c) = self.calls.get(&id) else { return };
        let action = c.action.clone();
        let mut ok = true;
        match action {
            Action::Grab { target } => {
                let front = self.front();
                let hit = self
                    .world
                    .raycast(front, self.robot.heading, self.robot.holding.as_deref())
                    .and_then(|(t, o)| o.map(|o| (t, o.clone())));
                match hit {
                    Some((t, o))
                        if t <= self.cfg.grasp_range
                            && o.graspable
                            && target.as_deref().is_none_or(|n| o.name.eq_ignore_ascii_case(n))
                            && self.robot.holding.is_none() =>
                    {
                        self.robot.holding = Some(o.name.clone());
                        self.robot.grip = Grip::Closed;
                        self.carry();
                    }
                    _ => ok = false,
                }
            }
            Action::Release => {
                self.robot.holding = None;
                self.robot.grip = Grip::Open;
            }
            Action::Lift { delta } => {
                self.robot.lift = (self.robot.lift + delta).clamp(0.0, self.cfg.lift_max);
            }
            Action::Drive { .. } | Action::Turn { .. } | Action::Say { .. } => {}
        }
        let c = self.calls.get_mut(&id).expect("present");
        c.status = if ok { CallStatus::Done } else { CallStatus::Failed };
        let actuator = c.action.actuator();
        self.events.push(KernelEvent::Actuate {
            call: id,
            actuator,
            action: if ok { "done".into() } else { "failed".into() },
        });
    }

    /// Keeps a held object at a fixed offset in front of the robot.
    fn carry(&mut self) {
        let Some(name) = self.robot.holding.clone() else { return };
        let (x, y, h, r) = (self.robot.x, self.robot.y, self.robot.heading, self.cfg.robot_radius);
        if let Some(o) = self.world.object_mut(&name) {
            let d = r + o.radius;
            o.x = x + d * h.cos();
            o.y = y + d * h.sin();
        }
    }

    /// Rangefinder reading; `Some(true)` in the second slot means a
    /// proximity NOTE should be posted now.
    pub fn sense(&mut self, now: u64) -> (Option<f64>, bool) {
        let reading = self
            .world
            .raycast(self.front(), self.robot.heading, self.robot.holding.as_deref())
            .map(|(t, _)| t)
            .filter(|t| *t <= self.cfg.sensor_max);
        self.range = reading;
        let close = reading.is_some_and(|r| r < self.cfg.close_range);
        let ready = self
            .last_proximity
            .is_none_or(|t| now.saturating_sub(t) >= self.cfg.refractory_ticks);
        let post = close && ready;
        if post {
            self.last_proximity = Some(now);
        }
        (reading, post)
    }

    /// Wheel command from the running wheel calls (they all belong to one focus).
    fn wheel_command(&self) -> (f64, f64) {
        let mut v = 0.0;
        let mut w = 0.0;
        for c in self.calls.values().filter(|c| c.status == CallStatus::Running) {
            match c.action {
                Action::Drive { speed } => v = speed,
                Action::Turn { spin } => w = spin,
                _ => {}
            }
        }
        (v.clamp(-self.cfg.v_max, self.cfg.v_max), w)
    }

    fn pose_after(&self, v: f64, w: f64, dt: f64) -> (f64, f64, f64) {
        let (x, y, th) = (self.robot.x, self.robot.y, self.robot.heading);
        if w.abs() < 1e-12 {
            (x + v * th.cos() * dt, y + v * th.sin() * dt, th)
        } else {
            let th2 = th + w * dt;
            (
                x + v / w * (th2.sin() - th.sin()),
                y - v / w * (th2.cos() - th.cos()),
                th2,
            )
        }
    }

    /// Advances physics and timers by one tick.
    pub fn integrate(&mut self) {
        let dt = 1.0 / self.cfg.tick_hz;
        let (v, w) = self.wheel_command();
        self.robot.wheel_speed = v;
        self.robot.spin = w;
        let r = self.cfg.robot_radius;
        let held = self.robot.holding.clone();
        let blocked = |k: &Kernel, p: (f64, f64, f64)| k.world.collides([p.0, p.1], r, held.as_deref());
        let full = self.pose_after(v, w, dt);
        self.contact = false;
        if v != 0.0 && blocked(self, full) {
            self.contact = true;
            // largest collision-free fraction of the step
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if blocked(self, self.pose_after(v, w, dt * mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let p = self.pose_after(v, w, dt * lo);
            // finish the rotation even when translation is blocked
            let th = self.robot.heading + w * dt;
            self.robot.x = p.0;
            self.robot.y = p.1;
            self.robot.heading = th;
        } else {
            self.robot.x = full.0;
            self.robot.y = full.1;
            self.robot.heading = full.2;
        }
        self.carry();

        let pos = [self.robot.x, self.robot.y];
        let window = self.cfg.stall_window as usize;
        let running: Vec<CallId> = self
            .calls
            .iter()
            .filter(|(_, c)| c.status == CallStatus::Running)
            .map(|(id, _)| *id)
            .collect();
        for id in running {
            let c = self.calls.get_mut(&id).expect("present");
            c.remaining = c.remaining.saturating_sub(1);
            c.trail.push_back(pos);
            if c.trail.len() > window + 1 {
                c.trail.pop_front();
            }
            let stalled = matches!(c.action, Action::Drive { .. })
                && self.contact
                && c.trail.len() > window
                && world::dist(c.trail[0], pos) < self.cfg.stall_eps;
            if stalled {
                self.stop(id, "stalled");
            } else if c.remaining == 0 {
                self.finish(id);
            }
        }
    }

    pub fn in_contact(&self) -> bool {
        self.contact
    }

    pub fn snapshot(&self, tick: u64) -> Snapshot {
        Snapshot {
            tick,
            x: self.robot.x,
            y: self.robot.y,
            heading: self.robot.heading,
            speed: self.robot.wheel_speed,
            spin: self.robot.spin,
            grip: self.robot.grip,
            holding: self.robot.holding.clone(),
            lift: self.robot.lift,
            range: self.range,
            objects: self
                .world
                .objects
                .iter()
                .map(|o| ObjectPose {
                    name: o.name.clone(),
                    x: o.x,
                    y: o.y,
                    radius: o.radius,
                })
                .collect(),
        }
    }
}
