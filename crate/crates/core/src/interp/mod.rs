//! Directive interpreter.
//!
//! Work enters the attention buffer as a focus: a chain of plays, each play
//! a set of directives run concurrently. Directives expand into operator
//! bodies (more chains) until they bottom out in grounding calls. Failure
//! propagates upward, and a directive with untried operators backtracks.

mod event;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use event::{to_jsonl, DirId, Event, EventBody, FocusId, Status};

use crate::kernel::{CallId, CallStatus, Kernel, KernelConfig, KernelEvent, World};
use crate::policy::{
    desperation_threshold, select, Candidate, Chain, DirectiveTemplate, Kind, OpId, Operator, Play, Policy,
    SelectionConfig, ThresholdConfig, TriggerContext,
};
use crate::rules::{refresh_halo, Rule};
use crate::semnet::{
    Binding, Level, LevelMask, MatchOptions, Memory, MemoryConfig, NodeId, NodeSource, Pattern, PatternEdge,
    PatternNode, PatternTarget, RoleSet, SemnetError, Target, Template, TemplateNode,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Halo passes per refresh (the deduction depth limit).
    pub halo_passes: usize,
    pub selection: SelectionConfig,
    /// Belief thresholds; `base` applies everywhere, DO selection may decay it.
    pub threshold: ThresholdConfig,
    pub memory: MemoryConfig,
    pub kernel: KernelConfig,
    /// Bound on scheduling rounds inside one tick.
    pub max_rounds: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            halo_passes: 2,
            selection: SelectionConfig::default(),
            threshold: ThresholdConfig::default(),
            memory: MemoryConfig::default(),
            kernel: KernelConfig::default(),
            max_rounds: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ChainId(u32);

#[derive(Debug, Clone)]
struct ChainRun {
    focus: FocusId,
    plays: Vec<Play>,
    nodes: Vec<NodeId>,
    play: usize,
    started: bool,
    required: Vec<DirId>,
    aux: Vec<DirId>,
    status: Status,
    punted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ante,
    Main,
    Post,
}

/// ANTE-DO-POST bookkeeping for one DO (also used by ACH and KEEP).
#[derive(Debug, Clone)]
struct DoRun {
    phase: Phase,
    queue: Option<VecDeque<Candidate>>,
    child: Option<ChainId>,
    outcome: bool,
    stalled: u64,
    last_stall: Option<u64>,
}

impl DoRun {
    fn new() -> Self {
        DoRun {
            phase: Phase::Ante,
            queue: None,
            child: None,
            outcome: false,
            stalled: 0,
            last_stall: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Exec {
    Idle,
    /// NOTE: try operators until one completes.
    Note { child: Option<ChainId> },
    /// CHK and FIND: query memory, fall back to operators.
    Query { child: Option<ChainId> },
    /// Standalone ANTE or POST: run every candidate once.
    Sweep {
        queue: Option<VecDeque<Candidate>>,
        child: Option<ChainId>,
        punted: bool,
    },
    Do(DoRun),
    Ach(DoRun),
    Keep { run: DoRun, restarted: u64 },
    Fcn { call: Option<CallId> },
}

#[derive(Debug, Clone)]
struct Directive {
    kind: Kind,
    focus: FocusId,
    chain: ChainId,
    nodes: Vec<NodeId>,
    status: Status,
    tried: BTreeSet<OpId>,
    exec: Exec,
}

#[derive(Debug, Clone)]
struct FocusRun {
    root: ChainId,
    status: Status,
}

/// Outcome of one advance attempt on a directive.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Wait,
    Progress,
    Finish(Status),
}

/// The single-writer engine: memory, knowledge, robot and the attention buffer.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    mem: Memory,
    rules: Vec<Rule>,
    policy: Policy,
    kernel: Kernel,
    rng: ChaCha8Rng,
    now: u64,
    foci: BTreeMap<FocusId, FocusRun>,
    chains: BTreeMap<ChainId, ChainRun>,
    dirs: BTreeMap<DirId, Directive>,
    calls: BTreeMap<CallId, DirId>,
    next_focus: u32,
    next_chain: u32,
    next_dir: u32,
    log: Vec<Event>,
}

impl Engine {
    pub fn new(roles: RoleSet, cfg: EngineConfig, world: World, seed: u64) -> Self {
        Engine {
            mem: Memory::new(roles, cfg.memory),
            rules: Vec::new(),
            policy: Policy::new(),
            kernel: Kernel::new(world, cfg.kernel),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            foci: BTreeMap::new(),
            chains: BTreeMap::new(),
            dirs: BTreeMap::new(),
            calls: BTreeMap::new(),
            next_focus: 0,
            next_chain: 0,
            next_dir: 0,
            log: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.mem
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel {
        &mut self.kernel
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn log_jsonl(&self) -> String {
        to_jsonl(&self.log)
    }

    pub fn add_rule(&mut self, rule: Rule) -> Result<(), SemnetError> {
        rule.validate(self.mem.roles())?;
        self.rules.push(rule);
        self.mem.clear_halo();
        self.force_halo();
        Ok(())
    }

    pub fn add_operator(&mut self, op: Operator) -> Result<OpId, String> {
        op.validate(self.mem.roles())?;
        Ok(self.policy.add(op))
    }

    /// Appends a record that did not come from the engine itself.
    pub fn record(&mut self, focus: Option<FocusId>, body: EventBody) {
        self.emit(focus, None, None, body);
    }

    /// Status of a focus; `None` if unknown.
    pub fn focus_status(&self, f: FocusId) -> Option<Status> {
        self.foci.get(&f).map(|x| x.status)
    }

    /// Foci still running.
    pub fn active_foci(&self) -> Vec<FocusId> {
        self.foci
            .iter()
            .filter(|(_, x)| x.status == Status::Running)
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn is_idle(&self) -> bool {
        self.active_foci().is_empty()
    }

    /// Directives not yet finished, for inspection.
    pub fn live_directives(&self) -> Vec<(DirId, Kind, FocusId, Status)> {
        self.dirs
            .iter()
            .filter(|(_, d)| !d.status.is_final())
            .map(|(id, d)| (*id, d.kind, d.focus, d.status))
            .collect()
    }

    /// Puts a chain into the attention buffer as a new focus.
    pub fn post(&mut self, chain: &Chain, origin: &str) -> FocusId {
        self.next_focus += 1;
        let f = FocusId(self.next_focus);
        let root = self.start_chain(f, chain, &Binding { map: Vec::new() });
        self.foci.insert(
            f,
            FocusRun {
                root,
                status: Status::Running,
            },
        );
        self.emit(Some(f), None, None, EventBody::Posted { origin: origin.to_string() });
        self.settle_chain_failure(root);
        f
    }

    /// Advances the whole system by one tick.
    pub fn step(&mut self) {
        self.now += 1;
        self.mem.tick_memory(self.now);
        self.ensure_halo();
        let (range, post) = self.kernel.sense(self.now);
        if post {
            let f = self.post(&proximity_chain(), "sensor");
            self.emit(
                Some(f),
                None,
                None,
                EventBody::Proximity {
                    range: range.unwrap_or(0.0),
                },
            );
        }
        self.service();
        self.kernel.integrate();
        self.drain_kernel();
    }

    /// Steps until `f` finishes or `budget` ticks pass.
    pub fn run_until(&mut self, f: FocusId, budget: u64) -> Option<Status> {
        for _ in 0..budget {
            if let Some(s) = self.focus_status(f).filter(|s| s.is_final()) {
                return Some(s);
            }
            self.step();
        }
        self.focus_status(f).filter(|s| s.is_final())
    }

    /// Steps until nothing is running or `budget` ticks pass.
    pub fn run_idle(&mut self, budget: u64) -> bool {
        for _ in 0..budget {
            if self.is_idle() {
                return true;
            }
            self.step();
        }
        self.is_idle()
    }

    // ---- halo ------------------------------------------------------------

    fn ensure_halo(&mut self) {
        if self.mem.is_dirty() {
            refresh_halo(&mut self.mem, &self.rules, self.cfg.threshold.base, self.cfg.halo_passes);
        }
    }

    fn force_halo(&mut self) {
        refresh_halo(&mut self.mem, &self.rules, self.cfg.threshold.base, self.cfg.halo_passes);
    }

    // ---- logging ---------------------------------------------------------

    fn emit(&mut self, focus: Option<FocusId>, directive: Option<DirId>, kind: Option<Kind>, body: EventBody) {
        self.log.push(Event {
            tick: self.now,
            focus,
            directive,
            kind,
            body,
        });
    }

    fn emit_dir(&mut self, d: DirId, body: EventBody) {
        let (focus, kind) = match self.dirs.get(&d) {
            Some(x) => (Some(x.focus), Some(x.kind)),
            None => (None, None),
        };
        self.emit(focus, Some(d), kind, body);
    }

    fn drain_kernel(&mut self) {
        for ev in self.kernel.drain_events() {
            let (call, body) = match ev {
                KernelEvent::Speech { call, text } => (call, EventBody::Speech { text }),
                KernelEvent::Truncated { call, text } => (call, EventBody::Truncated { text }),
                KernelEvent::Actuate { call, actuator, action } => (call, EventBody::Actuate { actuator, action }),
            };
            match self.calls.get(&call).copied() {
                Some(d) => self.emit_dir(d, body),
                None => self.emit(None, None, None, body),
            }
        }
    }

    // ---- chains ----------------------------------------------------------

    fn start_chain(&mut self, focus: FocusId, chain: &Chain, binding: &Binding) -> ChainId {
        self.next_chain += 1;
        let id = ChainId(self.next_chain);
        let template = Template {
            nodes: chain.nodes.clone(),
            edges: chain.edges.clone(),
        };
        let (nodes, status) = match self.mem.instantiate(&template, binding, Level::Working, 1.0) {
            Ok(nodes) => (nodes, Status::Running),
            Err(_) => (Vec::new(), Status::Failed),
        };
        for &n in &nodes {
            self.mem.hold(n);
        }
        // query payloads are questions, not facts
        for play in &chain.plays {
            for t in play.required.iter().chain(&play.auxiliary) {
                if !t.kind.is_query() {
                    continue;
                }
                for &m in &t.members {
                    if chain.nodes[m].source == NodeSource::New {
                        if let Some(n) = self.mem.node_mut(nodes[m]) {
                            n.hypothetical = true;
                        }
                    }
                }
            }
        }
        self.chains.insert(
            id,
            ChainRun {
                focus,
                plays: chain.plays.clone(),
                nodes,
                play: 0,
                started: false,
                required: Vec::new(),
                aux: Vec::new(),
                status,
                punted: false,
            },
        );
        id
    }

    /// A chain that failed to instantiate ends its focus at once if it is a root.
    fn settle_chain_failure(&mut self, c: ChainId) {
        if self.chains.get(&c).is_some_and(|x| x.status == Status::Failed) {
            self.chain_ended(c);
        }
    }

    fn new_directive(&mut self, c: ChainId, t: &DirectiveTemplate) -> DirId {
        self.next_dir += 1;
        let id = DirId(self.next_dir);
        let ch = &self.chains[&c];
        let nodes = t.members.iter().map(|&m| ch.nodes[m]).collect();
        let focus = ch.focus;
        self.dirs.insert(
            id,
            Directive {
                kind: t.kind,
                focus,
                chain: c,
                nodes,
                status: Status::Pending,
                tried: BTreeSet::new(),
                exec: Exec::Idle,
            },
        );
        id
    }

    fn advance_chain(&mut self, c: ChainId) -> bool {
        let Some(ch) = self.chains.get(&c) else { return false };
        if ch.status != Status::Running {
            return false;
        }
        if !ch.started {
            if ch.play >= ch.plays.len() {
                self.finish_chain(c, Status::Done);
                return true;
            }
            let play = ch.plays[ch.play].clone();
            let required: Vec<DirId> = play.required.iter().map(|t| self.new_directive(c, t)).collect();
            let aux: Vec<DirId> = play.auxiliary.iter().map(|t| self.new_directive(c, t)).collect();
            let ch = self.chains.get_mut(&c).expect("chain exists");
            ch.required = required;
            ch.aux = aux;
            ch.started = true;
            return true;
        }
        let statuses: Vec<Status> = ch.required.iter().map(|d| self.dirs[d].status).collect();
        if statuses.contains(&Status::Failed) {
            self.finish_chain(c, Status::Failed);
            return true;
        }
        if statuses.iter().all(|s| *s == Status::Done) {
            let aux = ch.aux.clone();
            for d in aux {
                self.terminate(d);
            }
            let ch = self.chains.get_mut(&c).expect("chain exists");
            ch.play += 1;
            ch.started = false;
            ch.required.clear();
            ch.aux.clear();
            return true;
        }
        false
    }

    fn finish_chain(&mut self, c: ChainId, status: Status) {
        let Some(ch) = self.chains.get_mut(&c) else { return };
        if ch.status.is_final() {
            return;
        }
        ch.status = status;
        let live: Vec<DirId> = ch.required.iter().chain(&ch.aux).copied().collect();
        for d in live {
            self.terminate(d);
        }
        self.chain_ended(c);
    }

    fn chain_ended(&mut self, c: ChainId) {
        let Some(ch) = self.chains.get(&c) else { return };
        let (focus, status) = (ch.focus, ch.status);
        for n in ch.nodes.clone() {
            self.mem.release(n);
        }
        let is_root = self.foci.get(&focus).is_some_and(|f| f.root == c && f.status == Status::Running);
        if is_root {
            self.foci.get_mut(&focus).expect("focus exists").status = status;
            self.emit(Some(focus), None, None, EventBody::FocusEnd { status });
            let left: Vec<DirId> = self
                .dirs
                .iter()
                .filter(|(_, d)| d.focus == focus && !d.status.is_final())
                .map(|(id, _)| *id)
                .collect();
            for d in left {
                self.terminate(d);
            }
            self.dirs.retain(|_, d| d.focus != focus);
            self.chains.retain(|_, ch| ch.focus != focus);
            self.calls.retain(|call, _| self.kernel.status(*call) == Some(CallStatus::Running));
        }
    }

    fn chain_status(&self, c: ChainId) -> Status {
        self.chains.get(&c).map_or(Status::Failed, |ch| ch.status)
    }

    fn chain_punted(&self, c: ChainId) -> bool {
        self.chains.get(&c).is_some_and(|ch| ch.punted)
    }

    // ---- scheduling ------------------------------------------------------

    fn service(&mut self) {
        for _ in 0..self.cfg.max_rounds {
            let mut progress = false;
            // youngest focus first
            for f in self.active_foci().into_iter().rev() {
                progress |= self.advance_focus(f);
            }
            if !progress {
                break;
            }
        }
    }

    fn advance_focus(&mut self, f: FocusId) -> bool {
        let mut progress = false;
        let chains: Vec<ChainId> = self
            .chains
            .iter()
            .filter(|(_, c)| c.focus == f && c.status == Status::Running)
            .map(|(id, _)| *id)
            .collect();
        for c in chains {
            progress |= self.advance_chain(c);
        }
        let dirs: Vec<DirId> = self
            .dirs
            .iter()
            .filter(|(_, d)| d.focus == f && !d.status.is_final())
            .map(|(id, _)| *id)
            .collect();
        for d in dirs {
            progress |= self.advance_dir(d);
        }
        progress
    }

    // ---- directives ------------------------------------------------------

    fn set_status(&mut self, d: DirId, to: Status) {
        let Some(x) = self.dirs.get_mut(&d) else { return };
        let from = x.status;
        if from == to {
            return;
        }
        x.status = to;
        self.emit_dir(d, EventBody::Transition { from, to });
    }

    fn finish_dir(&mut self, d: DirId, status: Status) {
        if self.dirs.get(&d).is_none_or(|x| x.status.is_final()) {
            return;
        }
        self.set_status(d, status);
        let nodes = self.dirs.get(&d).map(|x| x.nodes.clone()).unwrap_or_default();
        for n in nodes {
            self.mem.deactivate(n);
        }
    }

    /// Forced termination: end of play, failed sibling or finished focus.
    fn terminate(&mut self, d: DirId) {
        let Some(x) = self.dirs.get(&d) else { return };
        if x.status.is_final() {
            return;
        }
        if x.status == Status::Pending {
            self.set_status(d, Status::Running);
        }
        let x = self.dirs.get_mut(&d).expect("directive exists");
        let kind = x.kind;
        let exec = std::mem::replace(&mut x.exec, Exec::Idle);
        let mut children = Vec::new();
        match exec {
            Exec::Note { child } | Exec::Query { child } | Exec::Sweep { child, .. } => children.extend(child),
            Exec::Do(run) | Exec::Ach(run) | Exec::Keep { run, .. } => children.extend(run.child),
            Exec::Fcn { call: Some(call) } => {
                self.kernel.cancel(call);
                self.drain_kernel();
            }
            Exec::Fcn { call: None } | Exec::Idle => {}
        }
        for c in children {
            self.finish_chain(c, Status::Failed);
        }
        let status = if kind == Kind::Keep { Status::Done } else { Status::Failed };
        self.finish_dir(d, status);
    }

    fn advance_dir(&mut self, d: DirId) -> bool {
        let Some(x) = self.dirs.get(&d) else { return false };
        match x.status {
            Status::Pending => {
                self.start_dir(d);
                true
            }
            Status::Running => {
                let x = self.dirs.get_mut(&d).expect("directive exists");
                let mut exec = std::mem::replace(&mut x.exec, Exec::Idle);
                let step = self.run_exec(d, &mut exec);
                if let Some(x) = self.dirs.get_mut(&d) {
                    if !x.status.is_final() {
                        x.exec = exec;
                    }
                }
                match step {
                    Step::Wait => false,
                    Step::Progress => true,
                    Step::Finish(s) => {
                        self.finish_dir(d, s);
                        true
                    }
                }
            }
            Status::Done | Status::Failed => false,
        }
    }

    fn start_dir(&mut self, d: DirId) {
        self.set_status(d, Status::Running);
        let x = &self.dirs[&d];
        let (kind, chain) = (x.kind, x.chain);
        for n in x.nodes.clone() {
            if self.mem.node(n).is_some_and(|n| !n.hypothetical) {
                self.mem.activate(n);
            }
        }
        let exec = match kind {
            Kind::Note => Exec::Note { child: None },
            Kind::Chk | Kind::Find => Exec::Query { child: None },
            Kind::Ante | Kind::Post => Exec::Sweep {
                queue: None,
                child: None,
                punted: false,
            },
            Kind::Do => Exec::Do(DoRun::new()),
            Kind::Ach => {
                if self.query(d).is_some() {
                    self.finish_dir(d, Status::Done);
                    return;
                }
                Exec::Ach(DoRun::new())
            }
            Kind::Keep => Exec::Keep {
                run: DoRun::new(),
                restarted: self.now,
            },
            Kind::Fcn => Exec::Fcn { call: None },
            Kind::Punt => {
                if let Some(ch) = self.chains.get_mut(&chain) {
                    ch.punted = true;
                }
                self.finish_dir(d, Status::Failed);
                return;
            }
        };
        self.dirs.get_mut(&d).expect("directive exists").exec = exec;
    }

    fn run_exec(&mut self, d: DirId, exec: &mut Exec) -> Step {
        match exec {
            Exec::Idle => Step::Wait,
            Exec::Note { child } => self.run_note(d, child),
            Exec::Query { child } => self.run_query(d, child),
            Exec::Sweep { queue, child, punted } => self.run_sweep(d, queue, child, punted),
            Exec::Do(run) => self.run_do(d, run),
            Exec::Ach(run) => match self.run_do(d, run) {
                Step::Finish(_) => {
                    if self.query(d).is_some() {
                        Step::Finish(Status::Done)
                    } else {
                        Step::Finish(Status::Failed)
                    }
                }
                s => s,
            },
            Exec::Keep { run, restarted } => match self.run_do(d, run) {
                Step::Finish(_) => {
                    if *restarted == self.now {
                        // at most one restart per tick
                        return Step::Wait;
                    }
                    *run = DoRun::new();
                    *restarted = self.now;
                    if let Some(x) = self.dirs.get_mut(&d) {
                        x.tried.clear();
                    }
                    Step::Progress
                }
                s => s,
            },
            Exec::Fcn { call } => self.run_fcn(d, call),
        }
    }

    fn candidates(&mut self, d: DirId, kind: Kind, belief_min: f64, use_tried: bool) -> Vec<Candidate> {
        self.ensure_halo();
        let x = &self.dirs[&d];
        let allow: BTreeSet<NodeId> = x
            .nodes
            .iter()
            .copied()
            .filter(|n| self.mem.node(*n).is_some_and(|n| n.hypothetical))
            .collect();
        let ctx = TriggerContext {
            kind,
            focus: x.nodes.first().copied(),
            belief_min,
            allow: (!allow.is_empty()).then_some(&allow),
        };
        let empty = BTreeSet::new();
        let tried = if use_tried { &x.tried } else { &empty };
        self.policy.find_candidates(&self.mem, &ctx, tried, &self.cfg.selection)
    }

    fn expand(&mut self, d: DirId, cand: &Candidate, phase: Kind) -> ChainId {
        self.emit_dir(d, EventBody::Invoke { op: cand.op, phase });
        let body = self.policy.get(cand.op).expect("candidate op exists").body.clone();
        let focus = self.dirs[&d].focus;
        self.start_chain(focus, &body, &cand.binding)
    }

    /// Picks one candidate at random by weight and expands it.
    fn try_one(&mut self, d: DirId, cands: &[Candidate], phase: Kind) -> Option<ChainId> {
        let i = select(cands, &mut self.rng)?;
        let cand = cands[i].clone();
        self.dirs.get_mut(&d).expect("directive exists").tried.insert(cand.op);
        Some(self.expand(d, &cand, phase))
    }

    fn run_note(&mut self, d: DirId, child: &mut Option<ChainId>) -> Step {
        if let Some(c) = *child {
            match self.chain_status(c) {
                Status::Done => return Step::Finish(Status::Done),
                Status::Failed => *child = None,
                _ => return Step::Wait,
            }
        }
        let cands = self.candidates(d, Kind::Note, self.cfg.threshold.base, true);
        match self.try_one(d, &cands, Kind::Note) {
            Some(c) => {
                *child = Some(c);
                Step::Progress
            }
            None => Step::Finish(Status::Done),
        }
    }

    fn run_query(&mut self, d: DirId, child: &mut Option<ChainId>) -> Step {
        if let Some(c) = *child {
            if !self.chain_status(c).is_final() {
                return Step::Wait;
            }
            *child = None;
        }
        if let Some(b) = self.query(d) {
            if self.dirs[&d].kind == Kind::Find {
                for &n in &b.map {
                    self.mem.promote(n);
                }
            }
            self.emit_dir(
                d,
                EventBody::Found {
                    nodes: b.map.iter().map(|n| n.0).collect(),
                },
            );
            return Step::Finish(Status::Done);
        }
        let kind = self.dirs[&d].kind;
        let cands = self.candidates(d, kind, self.cfg.threshold.base, true);
        match self.try_one(d, &cands, kind) {
            Some(c) => {
                *child = Some(c);
                Step::Progress
            }
            None => Step::Finish(Status::Failed),
        }
    }

    fn run_sweep(
        &mut self,
        d: DirId,
        queue: &mut Option<VecDeque<Candidate>>,
        child: &mut Option<ChainId>,
        punted: &mut bool,
    ) -> Step {
        let kind = self.dirs[&d].kind;
        if queue.is_none() {
            let cands = self.candidates(d, kind, self.cfg.threshold.base, false);
            self.emit_dir(
                d,
                EventBody::Phase {
                    phase: kind,
                    candidates: cands.iter().map(|c| c.op).collect(),
                },
            );
            *queue = Some(cands.into());
            return Step::Progress;
        }
        if let Some(c) = *child {
            if !self.chain_status(c).is_final() {
                return Step::Wait;
            }
            *punted |= self.chain_punted(c);
            *child = None;
        }
        match queue.as_mut().and_then(|q| q.pop_front()) {
            Some(cand) => {
                *child = Some(self.expand(d, &cand, kind));
                Step::Progress
            }
            None if *punted => Step::Finish(Status::Failed),
            None => Step::Finish(Status::Done),
        }
    }

    fn run_do(&mut self, d: DirId, run: &mut DoRun) -> Step {
        match run.phase {
            Phase::Ante | Phase::Post => {
                let kind = if run.phase == Phase::Ante { Kind::Ante } else { Kind::Post };
                if run.queue.is_none() {
                    let cands = self.candidates(d, kind, self.cfg.threshold.base, false);
                    self.emit_dir(
                        d,
                        EventBody::Phase {
                            phase: kind,
                            candidates: cands.iter().map(|c| c.op).collect(),
                        },
                    );
                    run.queue = Some(cands.into());
                    return Step::Progress;
                }
                if let Some(c) = run.child {
                    if !self.chain_status(c).is_final() {
                        return Step::Wait;
                    }
                    run.child = None;
                    if run.phase == Phase::Ante && self.chain_punted(c) {
                        // a punt skips the DO phase; POST still runs
                        run.outcome = false;
                        run.phase = Phase::Post;
                        run.queue = None;
                        return Step::Progress;
                    }
                }
                match run.queue.as_mut().and_then(|q| q.pop_front()) {
                    Some(cand) => {
                        run.child = Some(self.expand(d, &cand, kind));
                        Step::Progress
                    }
                    None if run.phase == Phase::Ante => {
                        run.phase = Phase::Main;
                        run.queue = None;
                        Step::Progress
                    }
                    None => Step::Finish(if run.outcome { Status::Done } else { Status::Failed }),
                }
            }
            Phase::Main => {
                if let Some(c) = run.child {
                    match self.chain_status(c) {
                        Status::Done => {
                            run.child = None;
                            run.outcome = true;
                            run.phase = Phase::Post;
                            run.queue = None;
                            return Step::Progress;
                        }
                        Status::Failed => run.child = None,
                        _ => return Step::Wait,
                    }
                }
                let th = &self.cfg.threshold;
                let belief_min = desperation_threshold(th.base, run.stalled, th);
                let cands = self.candidates(d, Kind::Do, belief_min, true);
                if run.queue.is_none() {
                    self.emit_dir(
                        d,
                        EventBody::Phase {
                            phase: Kind::Do,
                            candidates: cands.iter().map(|c| c.op).collect(),
                        },
                    );
                    run.queue = Some(VecDeque::new());
                }
                if let Some(c) = self.try_one(d, &cands, Kind::Do) {
                    run.child = Some(c);
                    return Step::Progress;
                }
                let never_tried = self.dirs[&d].tried.is_empty();
                if never_tried && belief_min > self.cfg.threshold.min {
                    // nothing applies yet: lower the bar a little each tick
                    if run.last_stall == Some(self.now) {
                        return Step::Wait;
                    }
                    run.stalled += 1;
                    run.last_stall = Some(self.now);
                    return Step::Progress;
                }
                run.outcome = false;
                run.phase = Phase::Post;
                run.queue = None;
                Step::Progress
            }
        }
    }

    fn run_fcn(&mut self, d: DirId, call: &mut Option<CallId>) -> Step {
        if let Some(id) = *call {
            return match self.kernel.status(id) {
                Some(CallStatus::Running) => Step::Wait,
                Some(CallStatus::Done) => Step::Finish(Status::Done),
                _ => Step::Finish(Status::Failed),
            };
        }
        let x = &self.dirs[&d];
        let Some(&node) = x.nodes.first() else {
            return Step::Finish(Status::Failed);
        };
        let name = self
            .mem
            .node(node)
            .and_then(|n| n.lex.first().cloned())
            .unwrap_or_default();
        let priority = x.focus.0 as u64;
        match self.kernel.dispatch(&name, &self.mem, node, priority) {
            Ok((id, args)) => {
                self.calls.insert(id, d);
                self.emit_dir(
                    d,
                    EventBody::Fcn {
                        name,
                        args: args.summary(),
                        call: Some(id),
                        error: None,
                    },
                );
                self.drain_kernel();
                *call = Some(id);
                match self.kernel.status(id) {
                    Some(CallStatus::Running) => Step::Progress,
                    Some(CallStatus::Done) => Step::Finish(Status::Done),
                    _ => Step::Finish(Status::Failed),
                }
            }
            Err(e) => {
                self.emit_dir(
                    d,
                    EventBody::Fcn {
                        name,
                        args: Vec::new(),
                        call: None,
                        error: Some(e.to_string()),
                    },
                );
                Step::Finish(Status::Failed)
            }
        }
    }

    /// Matches a query directive's payload against non-hypothetical memory.
    fn query(&mut self, d: DirId) -> Option<Binding> {
        self.ensure_halo();
        let pattern = query_pattern(&self.mem, &self.dirs[&d].nodes)?;
        let opts = MatchOptions::new(LevelMask::ALL, self.cfg.threshold.base);
        self.mem.match_pattern(&pattern, &opts).into_iter().next()
    }
}

/// Turns payload nodes into a pattern: hypothetical nodes become variables
/// with their tags as constraints, everything else is pinned.
fn query_pattern(mem: &Memory, members: &[NodeId]) -> Option<Pattern> {
    let mut ids: Vec<NodeId> = Vec::new();
    for &m in members {
        if !ids.contains(&m) {
            ids.push(m);
        }
    }
    // pull in the real nodes hypothetical ones point at
    for &m in members {
        let n = mem.node(m)?;
        if !n.hypothetical {
            continue;
        }
        for e in &n.edges {
            if let Target::Node(t) = e.to {
                if !ids.contains(&t) {
                    ids.push(t);
                }
            }
        }
    }
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let n = mem.node(id)?;
        let mut pn = PatternNode::named(&format!("q{i}"));
        if n.hypothetical {
            pn.lex = n.lex.clone();
        } else {
            pn.pin = Some(id);
        }
        nodes.push(pn);
        for e in &n.edges {
            let to = match &e.to {
                Target::Node(t) => match ids.iter().position(|x| x == t) {
                    Some(j) => PatternTarget::Node(j),
                    None => continue,
                },
                Target::Str(s) => PatternTarget::Str(s.clone()),
            };
            edges.push(PatternEdge {
                from: i,
                role: e.role.clone(),
                to,
            });
        }
    }
    Some(Pattern::new(nodes, edges))
}

/// The situation a close rangefinder reading posts: `very close something`.
pub fn proximity_chain() -> Chain {
    let node = |name: &str, lex: &[&str]| TemplateNode {
        name: name.to_string(),
        lex: lex.iter().map(|s| s.to_string()).collect(),
        source: NodeSource::New,
    };
    Chain {
        nodes: vec![node("hq-1", &["close"]), node("obj-2", &[]), node("deg-3", &["very"])],
        edges: vec![
            PatternEdge {
                from: 0,
                role: "hq".into(),
                to: PatternTarget::Node(1),
            },
            PatternEdge {
                from: 2,
                role: "deg".into(),
                to: PatternTarget::Node(0),
            },
        ],
        plays: vec![Play {
            required: vec![DirectiveTemplate {
                kind: Kind::Note,
                members: vec![0, 1, 2],
            }],
            auxiliary: vec![],
        }],
    }
}
