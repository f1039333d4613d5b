//! Semantic-network memory.
//!
//! Nodes stand for both objects and predicates. Predicate nodes carry
//! directed, role-labelled edges to their arguments. Every node lives at one
//! of three memory levels: the attention buffer, working memory, or the halo
//! of speculative deductions.
//!
//! Halo conclusions can also decorate non-halo nodes (an alias rule adds a
//! lexical tag to an action node). Those decorations are kept apart in
//! `halo_lex` / `halo_edges` so clearing the halo never touches the facts
//! they were derived from.

mod dump;
mod pattern;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dump::NodeRecord;
pub use pattern::{
    Binding, LevelMask, MatchOptions, NodeSource, Pattern, PatternEdge, PatternNode, PatternTarget,
    Template, TemplateEdge, TemplateNode,
};

/// Roles every memory understands. Grammars may declare more.
pub const BASE_ROLES: &[&str] = &[
    "hq", "ako", "agt", "dest", "cmd", "obj", "dir", "deg", "arg", "str",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemnetError {
    #[error("belief {0} outside [0, 1]")]
    BeliefOutOfRange(f64),
    #[error("undeclared role `{0}`")]
    UnknownRole(String),
    #[error("no node with id {0}")]
    DanglingNode(NodeId),
    #[error("pattern is not connected")]
    Disconnected,
    #[error("template node `{0}` refers to binding slot {1} which is absent")]
    UnboundTemplateNode(String, usize),
    #[error("pattern edge refers to node index {0} out of range")]
    BadIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Attention,
    Working,
    Halo,
}

/// Closed set of edge roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleSet(BTreeSet<String>);

impl Default for RoleSet {
    fn default() -> Self {
        RoleSet(BASE_ROLES.iter().map(|r| r.to_string()).collect())
    }
}

impl RoleSet {
    pub fn declare(&mut self, role: &str) {
        self.0.insert(role.to_string());
    }

    pub fn contains(&self, role: &str) -> bool {
        self.0.contains(role)
    }

    pub fn check(&self, role: &str) -> Result<(), SemnetError> {
        if self.contains(role) {
            Ok(())
        } else {
            Err(SemnetError::UnknownRole(role.to_string()))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Node(NodeId),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub role: String,
    pub to: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub lex: Vec<String>,
    pub belief: f64,
    pub level: Level,
    pub active: bool,
    pub created_tick: u64,
    pub handled_tick: Option<u64>,
    /// Named entity (a person or world object) shared across utterances.
    pub entity: bool,
    /// Query placeholder; invisible to ordinary matching.
    pub hypothetical: bool,
    pub edges: Vec<Edge>,
    pub halo_lex: Vec<(String, f64)>,
    pub halo_edges: Vec<Edge>,
}

impl Node {
    pub fn has_tag(&self, tag: &str, with_halo: bool) -> bool {
        self.lex.iter().any(|t| t.eq_ignore_ascii_case(tag))
            || (with_halo && self.halo_lex.iter().any(|(t, _)| t.eq_ignore_ascii_case(tag)))
    }

    /// All lexical tags, halo-derived ones last.
    pub fn tags(&self, with_halo: bool) -> Vec<&str> {
        let mut out: Vec<&str> = self.lex.iter().map(String::as_str).collect();
        if with_halo {
            out.extend(self.halo_lex.iter().map(|(t, _)| t.as_str()));
        }
        out
    }

    pub fn edges(&self, with_halo: bool) -> impl Iterator<Item = &Edge> {
        let halo: &[Edge] = if with_halo { &self.halo_edges } else { &[] };
        self.edges.iter().chain(halo.iter())
    }

    pub fn is_predicate(&self) -> bool {
        !self.edges.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryConfig {
    pub retain_ticks: u64,
    pub gc_ticks: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            retain_ticks: 50,
            gc_ticks: 200,
        }
    }
}

/// The three-level store. Single writer; clone for snapshots.
#[derive(Debug, Clone)]
pub struct Memory {
    nodes: BTreeMap<NodeId, Node>,
    next_id: u32,
    roles: RoleSet,
    config: MemoryConfig,
    now: u64,
    dirty: bool,
    /// Nodes referenced by live directives; garbage collection keeps them.
    held: BTreeMap<NodeId, u32>,
}

impl Default for Memory {
    fn default() -> Self {
        Memory::new(RoleSet::default(), MemoryConfig::default())
    }
}

impl Memory {
    pub fn new(roles: RoleSet, config: MemoryConfig) -> Self {
        Memory {
            nodes: BTreeMap::new(),
            next_id: 1,
            roles,
            config,
            now: 0,
            dirty: false,
            held: BTreeMap::new(),
        }
    }

    pub fn roles(&self) -> &RoleSet {
        &self.roles
    }

    pub fn roles_mut(&mut self) -> &mut RoleSet {
        &mut self.roles
    }

    pub fn config(&self) -> MemoryConfig {
        self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn set_now(&mut self, now: u64) {
        self.now = now;
    }

    /// True when attention or working memory changed since the last halo refresh.
    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub(crate) fn mark_clean(&mut self) {
        self.dirty = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn add_node(
        &mut self,
        lex: Option<&str>,
        belief: f64,
        level: Level,
    ) -> Result<NodeId, SemnetError> {
        if !(0.0..=1.0).contains(&belief) || belief.is_nan() {
            return Err(SemnetError::BeliefOutOfRange(belief));
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                lex: lex.map(|l| vec![l.to_string()]).unwrap_or_default(),
                belief,
                level,
                active: level == Level::Attention,
                created_tick: self.now,
                handled_tick: None,
                entity: false,
                hypothetical: false,
                edges: Vec::new(),
                halo_lex: Vec::new(),
                halo_edges: Vec::new(),
            },
        );
        if level != Level::Halo {
            self.dirty = true;
        }
        Ok(id)
    }

    /// Adds `from -role-> to`. Returns false when the edge already existed.
    pub fn add_edge(&mut self, from: NodeId, role: &str, to: Target) -> Result<bool, SemnetError> {
        self.insert_edge(from, role, to, false)
    }

    fn insert_edge(
        &mut self,
        from: NodeId,
        role: &str,
        to: Target,
        halo: bool,
    ) -> Result<bool, SemnetError> {
        self.roles.check(role)?;
        if let Target::Node(t) = to {
            if !self.nodes.contains_key(&t) {
                return Err(SemnetError::DanglingNode(t));
            }
        }
        let from_level = self.nodes.get(&from).ok_or(SemnetError::DanglingNode(from))?.level;
        let edge = Edge {
            role: role.to_string(),
            to,
        };
        let node = self.nodes.get_mut(&from).expect("checked above");
        let halo = halo && from_level != Level::Halo;
        let list = if halo { &mut node.halo_edges } else { &mut node.edges };
        if list.contains(&edge) {
            return Ok(false);
        }
        list.push(edge);
        if !halo && from_level != Level::Halo {
            self.dirty = true;
        }
        Ok(true)
    }

    /// Adds a permanent lexical tag to a node.
    pub fn add_tag(&mut self, id: NodeId, tag: &str) -> Result<bool, SemnetError> {
        let node = self.nodes.get_mut(&id).ok_or(SemnetError::DanglingNode(id))?;
        if node.lex.iter().any(|t| t.eq_ignore_ascii_case(tag)) {
            return Ok(false);
        }
        node.lex.push(tag.to_string());
        if node.level != Level::Halo {
            self.dirty = true;
        }
        Ok(true)
    }

    fn add_halo_tag(&mut self, id: NodeId, tag: &str, belief: f64) -> Result<bool, SemnetError> {
        let node = self.nodes.get_mut(&id).ok_or(SemnetError::DanglingNode(id))?;
        if node.level == Level::Halo {
            return self.add_tag(id, tag);
        }
        if node.lex.iter().any(|t| t.eq_ignore_ascii_case(tag)) {
            return Ok(false);
        }
        if let Some(existing) = node
            .halo_lex
            .iter_mut()
            .find(|(t, _)| t.eq_ignore_ascii_case(tag))
        {
            existing.1 = existing.1.max(belief);
            return Ok(false);
        }
        node.halo_lex.push((tag.to_string(), belief));
        Ok(true)
    }

    pub fn set_belief(&mut self, id: NodeId, belief: f64) -> Result<(), SemnetError> {
        if !(0.0..=1.0).contains(&belief) {
            return Err(SemnetError::BeliefOutOfRange(belief));
        }
        let node = self.nodes.get_mut(&id).ok_or(SemnetError::DanglingNode(id))?;
        node.belief = belief;
        Ok(())
    }

    /// Marks an attention item as handled.
    pub fn deactivate(&mut self, id: NodeId) {
        let now = self.now;
        if let Some(n) = self.nodes.get_mut(&id) {
            if n.active {
                n.active = false;
                n.handled_tick = Some(now);
            }
        }
    }

    /// Brings a node (back) into the attention buffer as an active item.
    pub fn activate(&mut self, id: NodeId) {
        if let Some(n) = self.nodes.get_mut(&id) {
            if n.level == Level::Halo {
                return;
            }
            if n.level != Level::Attention || !n.active {
                n.level = Level::Attention;
                n.active = true;
                n.handled_tick = None;
                self.dirty = true;
            }
        }
    }

    /// Protects a node from garbage collection until released. Holds nest.
    pub fn hold(&mut self, id: NodeId) {
        *self.held.entry(id).or_default() += 1;
    }

    pub fn release(&mut self, id: NodeId) {
        if let Some(n) = self.held.get_mut(&id) {
            *n -= 1;
            if *n == 0 {
                self.held.remove(&id);
            }
        }
    }

    /// Moves a halo node into working memory so it survives halo clearing.
    pub fn promote(&mut self, id: NodeId) {
        if let Some(n) = self.nodes.get_mut(&id) {
            if n.level == Level::Halo {
                n.level = Level::Working;
                n.handled_tick = Some(self.now);
                self.dirty = true;
            }
        }
    }

    /// Finds a non-halo entity node by name.
    pub fn find_entity(&self, lex: &str) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.entity && n.level != Level::Halo && n.has_tag(lex, false))
            .map(|n| n.id)
    }

    /// Nodes with an edge `node -role-> target`, i.e. modifiers of `target`.
    pub fn incoming(&self, target: NodeId, role: &str, with_halo: bool) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| with_halo || n.level != Level::Halo)
            .filter(|n| {
                n.edges(with_halo)
                    .any(|e| e.role == role && e.to == Target::Node(target))
            })
            .map(|n| n.id)
            .collect()
    }

    /// Targets of `source -role-> *`.
    pub fn outgoing(&self, source: NodeId, role: &str, with_halo: bool) -> Vec<Target> {
        self.nodes
            .get(&source)
            .map(|n| {
                n.edges(with_halo)
                    .filter(|e| e.role == role)
                    .map(|e| e.to.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Deletes a node and every edge that points at it.
    pub fn remove_node(&mut self, id: NodeId) {
        self.held.remove(&id);
        if let Some(n) = self.nodes.remove(&id) {
            if n.level != Level::Halo {
                self.dirty = true;
            }
        }
        let t = Target::Node(id);
        for n in self.nodes.values_mut() {
            n.edges.retain(|e| e.to != t);
            n.halo_edges.retain(|e| e.to != t);
        }
    }

    /// Drops every halo node and halo decoration. Returns true if anything changed.
    pub fn clear_halo(&mut self) -> bool {
        let halo: BTreeSet<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.level == Level::Halo)
            .map(|n| n.id)
            .collect();
        let mut changed = !halo.is_empty();
        self.nodes.retain(|id, _| !halo.contains(id));
        for n in self.nodes.values_mut() {
            if !n.halo_lex.is_empty() || !n.halo_edges.is_empty() {
                changed = true;
                n.halo_lex.clear();
                n.halo_edges.clear();
            }
            n.edges
                .retain(|e| !matches!(e.to, Target::Node(t) if halo.contains(&t)));
        }
        changed
    }

    /// Per-tick housekeeping: demotion, garbage collection and halo clearing.
    pub fn tick_memory(&mut self, now: u64) {
        self.now = now;
        let retain = self.config.retain_ticks;
        let mut demoted = false;
        for n in self.nodes.values_mut() {
            if n.level == Level::Attention && !n.active {
                if let Some(h) = n.handled_tick {
                    if now.saturating_sub(h) > retain {
                        n.level = Level::Working;
                        demoted = true;
                    }
                }
            }
        }
        if demoted {
            self.dirty = true;
        }
        self.collect_garbage(now);
        if self.dirty {
            self.clear_halo();
        }
    }

    fn is_recent(&self, n: &Node, now: u64) -> bool {
        let horizon = now.saturating_sub(self.config.gc_ticks);
        n.active
            || n.handled_tick.is_some_and(|h| h >= horizon)
            || (n.handled_tick.is_none() && n.created_tick >= horizon)
    }

    fn collect_garbage(&mut self, now: u64) {
        // undirected adjacency over attention + working memory
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in self.nodes.values().filter(|n| n.level != Level::Halo) {
            adj.entry(n.id).or_default();
            for e in &n.edges {
                if let Target::Node(t) = e.to {
                    if self.nodes.get(&t).is_some_and(|m| m.level != Level::Halo) {
                        adj.entry(n.id).or_default().push(t);
                        adj.entry(t).or_default().push(n.id);
                    }
                }
            }
        }
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut doomed = Vec::new();
        for &start in adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut component = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(id) = queue.pop_front() {
                component.push(id);
                for &next in &adj[&id] {
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
            let keep = component.iter().any(|id| {
                let n = &self.nodes[id];
                n.level == Level::Attention || self.held.contains_key(id) || self.is_recent(n, now)
            });
            if !keep {
                doomed.extend(component);
            }
        }
        for id in doomed {
            self.remove_node(id);
        }
    }

    /// Instantiates a template under a binding. Unbound template nodes are
    /// created at `level`; bound nodes are reused and may gain tags.
    pub fn assert_instance(
        &mut self,
        template: &Template,
        binding: &Binding,
        level: Level,
        belief: f64,
    ) -> Result<Vec<NodeId>, SemnetError> {
        self.instantiate_inner(template, binding, level, belief)
            .map(|(_, created)| created)
    }

    /// Like [`Memory::assert_instance`] but returns the node for every
    /// template position, reused or created.
    pub fn instantiate(
        &mut self,
        template: &Template,
        binding: &Binding,
        level: Level,
        belief: f64,
    ) -> Result<Vec<NodeId>, SemnetError> {
        self.instantiate_inner(template, binding, level, belief)
            .map(|(all, _)| all)
    }

    fn instantiate_inner(
        &mut self,
        template: &Template,
        binding: &Binding,
        level: Level,
        belief: f64,
    ) -> Result<(Vec<NodeId>, Vec<NodeId>), SemnetError> {
        if !(0.0..=1.0).contains(&belief) {
            return Err(SemnetError::BeliefOutOfRange(belief));
        }
        let mut ids = Vec::with_capacity(template.nodes.len());
        for tn in &template.nodes {
            match tn.source {
                NodeSource::Bound(slot) => {
                    let id = binding
                        .get(slot)
                        .ok_or_else(|| SemnetError::UnboundTemplateNode(tn.name.clone(), slot))?;
                    if !self.contains(id) {
                        return Err(SemnetError::DanglingNode(id));
                    }
                    ids.push(Some(id));
                }
                _ => ids.push(None),
            }
        }
        for e in &template.edges {
            self.roles.check(&e.role)?;
        }
        let mut created = Vec::new();
        for (i, tn) in template.nodes.iter().enumerate() {
            match ids[i] {
                Some(id) => {
                    for tag in &tn.lex {
                        if level == Level::Halo {
                            self.add_halo_tag(id, tag, belief)?;
                        } else {
                            self.add_tag(id, tag)?;
                        }
                    }
                }
                None => {
                    let reuse = if tn.source == NodeSource::Entity {
                        tn.lex.first().and_then(|l| self.find_entity(l))
                    } else {
                        None
                    };
                    let id = match reuse {
                        Some(id) => id,
                        None => {
                            let id = self.add_node(None, belief, level)?;
                            let node = self.nodes.get_mut(&id).expect("just added");
                            node.lex = tn.lex.clone();
                            node.entity = tn.source == NodeSource::Entity;
                            created.push(id);
                            id
                        }
                    };
                    ids[i] = Some(id);
                }
            }
        }
        for e in &template.edges {
            let from = ids[e.from].expect("all template nodes resolved");
            let to = match &e.to {
                PatternTarget::Node(j) => Target::Node(ids[*j].expect("resolved")),
                PatternTarget::Str(s) => Target::Str(s.clone()),
            };
            self.insert_edge(from, &e.role, to, level == Level::Halo)?;
        }
        let all = ids.into_iter().map(|i| i.expect("resolved")).collect();
        Ok((all, created))
    }

    /// Every edge in memory points at an existing node.
    pub fn is_consistent(&self) -> bool {
        self.nodes.values().all(|n| {
            n.edges.iter().chain(n.halo_edges.iter()).all(|e| match e.to {
                Target::Node(t) => self.nodes.contains_key(&t),
                Target::Str(_) => true,
            })
        })
    }

    pub fn match_pattern(&self, pattern: &Pattern, opts: &MatchOptions<'_>) -> Vec<Binding> {
        pattern::match_pattern(self, pattern, opts)
    }

    pub fn dump(&self) -> Vec<NodeRecord> {
        dump::dump(self)
    }

    pub fn dump_lines(&self) -> String {
        dump::dump_lines(self)
    }
}
