//! Operators and conflict resolution.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::semnet::{
    Binding, LevelMask, MatchOptions, Memory, NodeId, NodeSource, Pattern, RoleSet, SemnetError,
    TemplateEdge, TemplateNode,
};

/// Directive kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Note,
    Do,
    Ante,
    Post,
    Chk,
    Find,
    Ach,
    Keep,
    Punt,
    Fcn,
}

impl Kind {
    pub const ALL: [Kind; 10] = [
        Kind::Note,
        Kind::Do,
        Kind::Ante,
        Kind::Post,
        Kind::Chk,
        Kind::Find,
        Kind::Ach,
        Kind::Keep,
        Kind::Punt,
        Kind::Fcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Note => "NOTE",
            Kind::Do => "DO",
            Kind::Ante => "ANTE",
            Kind::Post => "POST",
            Kind::Chk => "CHK",
            Kind::Find => "FIND",
            Kind::Ach => "ACH",
            Kind::Keep => "KEEP",
            Kind::Punt => "PUNT",
            Kind::Fcn => "FCN",
        }
    }

    /// Payloads of these kinds are queries rather than assertions.
    pub fn is_query(self) -> bool {
        matches!(self, Kind::Chk | Kind::Find | Kind::Ach)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown directive kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub u32);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

/// One directive of a play; `members` index into the chain's node table and
/// the first member is the directive's focus node.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveTemplate {
    pub kind: Kind,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Play {
    pub required: Vec<DirectiveTemplate>,
    pub auxiliary: Vec<DirectiveTemplate>,
}

/// A sequential chain of plays sharing one node table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chain {
    pub nodes: Vec<TemplateNode>,
    pub edges: Vec<TemplateEdge>,
    pub plays: Vec<Play>,
}

impl Chain {
    pub fn validate(&self, roles: &RoleSet, trigger_len: usize) -> Result<(), String> {
        if self.plays.is_empty() {
            return Err("chain has no plays".into());
        }
        for p in &self.plays {
            if p.required.is_empty() {
                return Err("play has no required directives".into());
            }
            for d in p.required.iter().chain(&p.auxiliary) {
                if d.members.iter().any(|&m| m >= self.nodes.len()) {
                    return Err("directive member out of range".into());
                }
                if d.kind != Kind::Punt && d.members.is_empty() {
                    return Err(format!("{} directive has no nodes", d.kind));
                }
            }
        }
        for n in &self.nodes {
            if let NodeSource::Bound(s) = n.source {
                if s >= trigger_len {
                    return Err(format!("node `{}` bound to missing trigger slot", n.name));
                }
            }
        }
        for e in &self.edges {
            roles.check(&e.role).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Index of the directive template that owns node `idx`, if any.
    pub fn owner_of(&self, idx: usize) -> Option<&DirectiveTemplate> {
        self.plays
            .iter()
            .flat_map(|p| p.required.iter().chain(&p.auxiliary))
            .find(|d| d.members.contains(&idx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub id: OpId,
    pub trigger_kind: Kind,
    /// Node 0 binds to the triggering directive's focus node.
    pub trigger: Pattern,
    pub pref: f64,
    pub body: Chain,
}

impl Operator {
    pub fn validate(&self, roles: &RoleSet) -> Result<(), String> {
        if !self.pref.is_finite() || self.pref <= 0.0 {
            return Err(format!("preference {} must be positive and finite", self.pref));
        }
        if self.trigger.nodes.is_empty() {
            return Err("trigger pattern is empty".into());
        }
        self.trigger
            .validate(roles)
            .map_err(|e: SemnetError| e.to_string())?;
        self.body.validate(roles, self.trigger.nodes.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub op: OpId,
    pub binding: Binding,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// Explore/exploit exponent applied to preferences.
    pub gamma: f64,
    /// Count matched edges as well as nodes toward specificity (off by default).
    pub count_edges: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            gamma: 1.0,
            count_edges: false,
        }
    }
}

/// What an operator trigger is matched against.
#[derive(Debug, Clone, Copy)]
pub struct TriggerContext<'a> {
    pub kind: Kind,
    pub focus: Option<NodeId>,
    pub belief_min: f64,
    pub allow: Option<&'a BTreeSet<NodeId>>,
}

/// The operator store.
#[derive(Debug, Clone, Default)]
pub struct Policy {
    ops: Vec<Operator>,
    next_id: u32,
}

impl Policy {
    pub fn new() -> Self {
        Policy::default()
    }

    /// Adds an operator, assigning it a fresh id.
    pub fn add(&mut self, mut op: Operator) -> OpId {
        self.next_id += 1;
        op.id = OpId(self.next_id);
        let id = op.id;
        self.ops.push(op);
        id
    }

    pub fn get(&self, id: OpId) -> Option<&Operator> {
        self.ops.iter().find(|o| o.id == id)
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Applicable operators for a directive, one candidate per operator
    /// (its first binding in id order), excluding already-tried ones.
    pub fn find_candidates(
        &self,
        mem: &Memory,
        ctx: &TriggerContext<'_>,
        tried: &BTreeSet<OpId>,
        cfg: &SelectionConfig,
    ) -> Vec<Candidate> {
        let mut out = Vec::new();
        for op in &self.ops {
            if op.trigger_kind != ctx.kind || tried.contains(&op.id) {
                continue;
            }
            let opts = MatchOptions {
                levels: LevelMask::ALL,
                belief_min: ctx.belief_min,
                anchor: ctx.focus.map(|f| (0, f)),
                allow: ctx.allow,
            };
            let bindings = mem.match_pattern(&op.trigger, &opts);
            let Some(binding) = bindings.into_iter().next() else {
                continue;
            };
            let mut spec = binding.specificity() as f64;
            if cfg.count_edges {
                spec += op.trigger.edges.len() as f64;
            }
            let weight = op.pref.powf(cfg.gamma) * spec;
            out.push(Candidate {
                op: op.id,
                binding,
                weight,
            });
        }
        out
    }
}

/// Normalized selection probabilities.
pub fn selection_probabilities(cands: &[Candidate]) -> Vec<f64> {
    let total: f64 = cands.iter().map(|c| c.weight).sum();
    cands.iter().map(|c| c.weight / total).collect()
}

/// Samples one candidate index proportionally to weight.
pub fn select<R: Rng + ?Sized>(cands: &[Candidate], rng: &mut R) -> Option<usize> {
    match cands.len() {
        0 => None,
        1 => Some(0),
        _ => {
            let total: f64 = cands.iter().map(|c| c.weight).sum();
            let mut x = rng.gen::<f64>() * total;
            for (i, c) in cands.iter().enumerate() {
                if x < c.weight {
                    return Some(i);
                }
                x -= c.weight;
            }
            Some(cands.len() - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub base: f64,
    pub decay_step: f64,
    pub min: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            base: 0.5,
            decay_step: 0.02,
            min: 0.1,
        }
    }
}

/// Belief threshold after `stalled_ticks` ticks without an applicable operator.
pub fn desperation_threshold(base: f64, stalled_ticks: u64, cfg: &ThresholdConfig) -> f64 {
    (base - stalled_ticks as f64 * cfg.decay_step).max(cfg.min)
}
