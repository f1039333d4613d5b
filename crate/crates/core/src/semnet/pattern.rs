//! Patterns, templates and the subgraph matcher.

use std::collections::BTreeSet;

use super::{Level, Memory, Node, NodeId, RoleSet, SemnetError, Target};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatternNode {
    /// Display name only (`act-1`); matching ignores it.
    pub name: String,
    /// Every listed tag must be among the node's tags.
    pub lex: Vec<String>,
    pub min_belief: Option<f64>,
    /// Restricts the node to one specific memory node.
    pub pin: Option<NodeId>,
}

impl PatternNode {
    pub fn named(name: &str) -> Self {
        PatternNode {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with_lex(name: &str, lex: &str) -> Self {
        PatternNode {
            name: name.to_string(),
            lex: vec![lex.to_string()],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PatternTarget {
    Node(usize),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternEdge {
    pub from: usize,
    pub role: String,
    pub to: PatternTarget,
}

/// A connected semantic-network fragment with lexical constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pattern {
    pub nodes: Vec<PatternNode>,
    pub edges: Vec<PatternEdge>,
}

impl Pattern {
    pub fn new(nodes: Vec<PatternNode>, edges: Vec<PatternEdge>) -> Self {
        Pattern { nodes, edges }
    }

    pub fn edge(mut self, from: usize, role: &str, to: usize) -> Self {
        self.edges.push(PatternEdge {
            from,
            role: role.to_string(),
            to: PatternTarget::Node(to),
        });
        self
    }

    /// Rejects dangling indices, undeclared roles and disconnected graphs.
    pub fn validate(&self, roles: &RoleSet) -> Result<(), SemnetError> {
        for e in &self.edges {
            roles.check(&e.role)?;
            if e.from >= self.nodes.len() {
                return Err(SemnetError::BadIndex(e.from));
            }
            if let PatternTarget::Node(t) = e.to {
                if t >= self.nodes.len() {
                    return Err(SemnetError::BadIndex(t));
                }
            }
        }
        if self.nodes.is_empty() || connected(self.nodes.len(), &self.edges) {
            Ok(())
        } else {
            Err(SemnetError::Disconnected)
        }
    }

    /// Pattern nodes with outgoing edges; these bind injectively.
    pub fn predicate_nodes(&self) -> Vec<bool> {
        let mut out = vec![false; self.nodes.len()];
        for e in &self.edges {
            out[e.from] = true;
        }
        out
    }
}

fn connected(n: usize, edges: &[PatternEdge]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for e in edges {
        if let PatternTarget::Node(t) = e.to {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, t));
            parent[a] = b;
        }
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSource {
    /// Created fresh on instantiation.
    New,
    /// Reuses the node bound to this pattern slot.
    Bound(usize),
    /// Reuses (or creates) the named entity with the node's first tag.
    Entity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateNode {
    pub name: String,
    pub lex: Vec<String>,
    pub source: NodeSource,
}

pub type TemplateEdge = PatternEdge;

/// A graph to be asserted. Bound nodes refer into a [`Binding`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Template {
    pub nodes: Vec<TemplateNode>,
    pub edges: Vec<TemplateEdge>,
}

/// Assignment of pattern nodes (by index) to memory nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding {
    pub map: Vec<NodeId>,
}

impl Binding {
    pub fn get(&self, slot: usize) -> Option<NodeId> {
        self.map.get(slot).copied()
    }

    pub fn specificity(&self) -> usize {
        self.map.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelMask {
    pub attention: bool,
    pub working: bool,
    pub halo: bool,
}

impl LevelMask {
    pub const ALL: LevelMask = LevelMask {
        attention: true,
        working: true,
        halo: true,
    };
    pub const CONSCIOUS: LevelMask = LevelMask {
        attention: true,
        working: true,
        halo: false,
    };

    pub fn admits(&self, level: Level) -> bool {
        match level {
            Level::Attention => self.attention,
            Level::Working => self.working,
            Level::Halo => self.halo,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatchOptions<'a> {
    pub levels: LevelMask,
    pub belief_min: f64,
    /// Pre-binds one pattern node to a memory node.
    pub anchor: Option<(usize, NodeId)>,
    /// Hypothetical nodes that may nevertheless be matched.
    pub allow: Option<&'a BTreeSet<NodeId>>,
}

impl MatchOptions<'_> {
    pub fn new(levels: LevelMask, belief_min: f64) -> Self {
        MatchOptions {
            levels,
            belief_min,
            anchor: None,
            allow: None,
        }
    }
}

struct Matcher<'m, 'p, 'o> {
    mem: &'m Memory,
    pattern: &'p Pattern,
    opts: &'o MatchOptions<'o>,
    candidates: Vec<Vec<&'m Node>>,
    predicate: Vec<bool>,
    order: Vec<usize>,
    assignment: Vec<Option<NodeId>>,
    out: Vec<Binding>,
}

fn node_admissible(node: &Node, pn: &PatternNode, opts: &MatchOptions<'_>) -> bool {
    if !opts.levels.admits(node.level) {
        return false;
    }
    if node.hypothetical && !opts.allow.is_some_and(|a| a.contains(&node.id)) {
        return false;
    }
    if let Some(pin) = pn.pin {
        if pin != node.id {
            return false;
        }
    }
    let threshold = pn.min_belief.unwrap_or(0.0).max(opts.belief_min);
    if node.belief < threshold {
        return false;
    }
    pn.lex.iter().all(|want| {
        node.lex.iter().any(|t| t.eq_ignore_ascii_case(want))
            || (opts.levels.halo
                && node
                    .halo_lex
                    .iter()
                    .any(|(t, b)| t.eq_ignore_ascii_case(want) && *b >= threshold))
    })
}

pub(crate) fn has_edge(mem: &Memory, from: NodeId, role: &str, to: &Target, halo: bool) -> bool {
    mem.node(from).is_some_and(|n| {
        n.edges(halo).any(|e| {
            e.role == role
                && match (&e.to, to) {
                    (Target::Str(a), Target::Str(b)) => a.eq_ignore_ascii_case(b),
                    (a, b) => a == b,
                }
        })
    })
}

impl Matcher<'_, '_, '_> {
    fn consistent(&self, slot: usize, id: NodeId) -> bool {
        if self.predicate[slot] {
            for (other, a) in self.assignment.iter().enumerate() {
                if other != slot && self.predicate[other] && *a == Some(id) {
                    return false;
                }
            }
        }
        for e in &self.pattern.edges {
            let from = if e.from == slot { Some(id) } else { self.assignment[e.from] };
            let Some(from) = from else { continue };
            let to = match &e.to {
                PatternTarget::Str(s) => Target::Str(s.clone()),
                PatternTarget::Node(t) => {
                    let t = if *t == slot { Some(id) } else { self.assignment[*t] };
                    match t {
                        Some(t) => Target::Node(t),
                        None => continue,
                    }
                }
            };
            if e.from != slot && !matches!(e.to, PatternTarget::Node(t) if t == slot) {
                continue;
            }
            if !has_edge(self.mem, from, &e.role, &to, self.opts.levels.halo) {
                return false;
            }
        }
        true
    }

    fn search(&mut self, depth: usize) {
        if depth == self.order.len() {
            let map = self.assignment.iter().map(|a| a.expect("complete")).collect();
            self.out.push(Binding { map });
            return;
        }
        let slot = self.order[depth];
        for i in 0..self.candidates[slot].len() {
            let id = self.candidates[slot][i].id;
            if self.consistent(slot, id) {
                self.assignment[slot] = Some(id);
                self.search(depth + 1);
                self.assignment[slot] = None;
            }
        }
    }
}

/// Enumerates every binding of `pattern` into `mem`, sorted by matched ids.
pub(crate) fn match_pattern(mem: &Memory, pattern: &Pattern, opts: &MatchOptions<'_>) -> Vec<Binding> {
    let n = pattern.nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<Vec<&Node>> = pattern
        .nodes
        .iter()
        .map(|pn| mem.nodes().filter(|m| node_admissible(m, pn, opts)).collect())
        .collect();
    if let Some((slot, id)) = opts.anchor {
        if slot >= n {
            return Vec::new();
        }
        candidates[slot].retain(|m| m.id == id);
    }
    if candidates.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    // most constrained first, then grow along edges
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let first = opts
        .anchor
        .map(|(s, _)| s)
        .unwrap_or_else(|| (0..n).min_by_key(|&i| (candidates[i].len(), i)).expect("non-empty"));
    order.push(first);
    placed[first] = true;
    while order.len() < n {
        let adjacent = |i: usize| {
            pattern.edges.iter().any(|e| match e.to {
                PatternTarget::Node(t) => {
                    (e.from == i && placed[t]) || (t == i && placed[e.from])
                }
                PatternTarget::Str(_) => false,
            })
        };
        let next = (0..n)
            .filter(|&i| !placed[i])
            .min_by_key(|&i| (!adjacent(i), candidates[i].len(), i))
            .expect("unplaced node remains");
        order.push(next);
        placed[next] = true;
    }
    let mut m = Matcher {
        mem,
        pattern,
        opts,
        candidates,
        predicate: pattern.predicate_nodes(),
        order,
        assignment: vec![None; n],
        out: Vec::new(),
    };
    m.search(0);
    let mut out = m.out;
    out.sort();
    out
}
