//! Knowledge-base text format for rules and operators.
//!
//! ```text
//! rule
//! if: ako-2 obj-1
//!   ako-2 -lex- girl
//!   ako-2 -ako-> obj-1
//! then: ako-3 obj-1
//!   ako-3 -lex- person
//!   ako-3 -ako-> obj-1
//! conf: 1
//! end
//!
//! op
//! trig: DO act-1 dir-2
//!   act-1 -lex- drive
//!   dir-2 -dir-> act-1
//! pref: 1
//! body: act-1 fcn-3
//!   fcn-3 -lex- base_drive
//!   fcn-3 -arg-> act-1
//! play: FCN fcn-3
//! end
//! ```
//!
//! The header lines list node names in table order. A body or consequent
//! node whose name also appears in the trigger is bound to it. `-ent-`
//! marks a named entity, `-min-` a per-node belief threshold. Any other
//! `-role-` line carries a literal string to the end of the line. Plays
//! list directives as `KIND member ...` separated by `|`; `aux:` lines add
//! auxiliaries to the play above them.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::policy::{Chain, DirectiveTemplate, Kind, OpId, Operator, Play};
use crate::rules::Rule;
use crate::semnet::{NodeSource, Pattern, PatternEdge, PatternNode, PatternTarget, TemplateNode};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("kb line {line}: {msg}")]
pub struct KbError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Kb {
    pub rules: Vec<Rule>,
    pub ops: Vec<Operator>,
}

fn write_facts(
    out: &mut String,
    names: &[&str],
    lex: &[(Vec<String>, bool)],
    mins: &[Option<f64>],
    edges: &[PatternEdge],
) {
    for (i, name) in names.iter().enumerate() {
        let (tags, entity) = &lex[i];
        for (j, t) in tags.iter().enumerate() {
            let rel = if *entity && j == 0 { "ent" } else { "lex" };
            let _ = writeln!(out, "  {name} -{rel}- {t}");
        }
        if let Some(m) = mins[i] {
            let _ = writeln!(out, "  {name} -min- {m}");
        }
    }
    for e in edges {
        match &e.to {
            PatternTarget::Node(t) => {
                let _ = writeln!(out, "  {} -{}-> {}", names[e.from], e.role, names[*t]);
            }
            PatternTarget::Str(s) => {
                let _ = writeln!(out, "  {} -{}- {}", names[e.from], e.role, s);
            }
        }
    }
}

fn write_pattern(out: &mut String, p: &Pattern) {
    let names: Vec<&str> = p.nodes.iter().map(|n| n.name.as_str()).collect();
    let lex: Vec<_> = p.nodes.iter().map(|n| (n.lex.clone(), false)).collect();
    let mins: Vec<_> = p.nodes.iter().map(|n| n.min_belief).collect();
    write_facts(out, &names, &lex, &mins, &p.edges);
}

fn write_template(out: &mut String, nodes: &[TemplateNode], edges: &[PatternEdge]) {
    let names: Vec<&str> = nodes.iter().map(|n| n.name.as_str()).collect();
    let lex: Vec<_> = nodes
        .iter()
        .map(|n| (n.lex.clone(), n.source == NodeSource::Entity))
        .collect();
    write_facts(out, &names, &lex, &vec![None; nodes.len()], edges);
}

fn header(names: impl Iterator<Item = String>) -> String {
    names.collect::<Vec<_>>().join(" ")
}

fn write_directive(out: &mut String, d: &DirectiveTemplate, names: &[&str]) {
    out.push_str(d.kind.as_str());
    for &m in &d.members {
        out.push(' ');
        out.push_str(names[m]);
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::from("rule\n");
        let _ = writeln!(s, "if: {}", header(self.if_pattern.nodes.iter().map(|n| n.name.clone())));
        write_pattern(&mut s, &self.if_pattern);
        let _ = writeln!(s, "then: {}", header(self.then.nodes.iter().map(|n| n.name.clone())));
        write_template(&mut s, &self.then.nodes, &self.then.edges);
        let _ = writeln!(s, "conf: {}", self.conf);
        s.push_str("end\n");
        f.write_str(&s)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::from("op\n");
        let _ = writeln!(
            s,
            "trig: {} {}",
            self.trigger_kind,
            header(self.trigger.nodes.iter().map(|n| n.name.clone()))
        );
        write_pattern(&mut s, &self.trigger);
        let _ = writeln!(s, "pref: {}", self.pref);
        let body = &self.body;
        let _ = writeln!(s, "body: {}", header(body.nodes.iter().map(|n| n.name.clone())));
        write_template(&mut s, &body.nodes, &body.edges);
        let names: Vec<&str> = body.nodes.iter().map(|n| n.name.as_str()).collect();
        for p in &body.plays {
            s.push_str("play: ");
            for (i, d) in p.required.iter().enumerate() {
                if i > 0 {
                    s.push_str(" | ");
                }
                write_directive(&mut s, d, &names);
            }
            s.push('\n');
            if !p.auxiliary.is_empty() {
                s.push_str("aux: ");
                for (i, d) in p.auxiliary.iter().enumerate() {
                    if i > 0 {
                        s.push_str(" | ");
                    }
                    write_directive(&mut s, d, &names);
                }
                s.push('\n');
            }
        }
        s.push_str("end\n");
        f.write_str(&s)
    }
}

impl fmt::Display for Kb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for r in &self.rules {
            if !first {
                f.write_str("\n")?;
            }
            first = false;
            write!(f, "{r}")?;
        }
        for o in &self.ops {
            if !first {
                f.write_str("\n")?;
            }
            first = false;
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

/// One `name -rel- ...` line.
enum Fact<'a> {
    Lex(&'a str, &'a str),
    Ent(&'a str, &'a str),
    Min(&'a str, f64),
    Edge(&'a str, &'a str, &'a str),
    Str(&'a str, &'a str, &'a str),
}

fn parse_fact(line: &str) -> Result<Fact<'_>, String> {
    let line = line.trim_start();
    let (name, rest) = line.split_once(' ').ok_or("expected `name -rel- ...`")?;
    let (rel, value) = rest.split_once(' ').ok_or("missing value")?;
    if !rel.starts_with('-') || rel.len() < 3 {
        return Err(format!("bad relation `{rel}`"));
    }
    if let Some(role) = rel.strip_prefix('-').and_then(|r| r.strip_suffix("->")) {
        return Ok(Fact::Edge(name, role, value.trim()));
    }
    let role = rel
        .strip_prefix('-')
        .and_then(|r| r.strip_suffix('-'))
        .ok_or_else(|| format!("bad relation `{rel}`"))?;
    Ok(match role {
        "lex" => Fact::Lex(name, value),
        "ent" => Fact::Ent(name, value),
        "min" => Fact::Min(name, value.trim().parse().map_err(|_| "bad threshold")?),
        _ => Fact::Str(name, role, value),
    })
}

struct Table {
    names: Vec<String>,
    lex: Vec<Vec<String>>,
    entity: Vec<bool>,
    min: Vec<Option<f64>>,
    edges: Vec<PatternEdge>,
}

impl Table {
    fn new(names: &[&str]) -> Self {
        let n = names.len();
        Table {
            names: names.iter().map(|s| s.to_string()).collect(),
            lex: vec![Vec::new(); n],
            entity: vec![false; n],
            min: vec![None; n],
            edges: Vec::new(),
        }
    }

    fn index(&self, name: &str) -> Result<usize, String> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| format!("node `{name}` is not listed in the header"))
    }

    fn add(&mut self, fact: Fact<'_>) -> Result<(), String> {
        match fact {
            Fact::Lex(n, v) => {
                let i = self.index(n)?;
                self.lex[i].push(v.to_string());
            }
            Fact::Ent(n, v) => {
                let i = self.index(n)?;
                self.entity[i] = true;
                self.lex[i].insert(0, v.to_string());
            }
            Fact::Min(n, m) => {
                let i = self.index(n)?;
                self.min[i] = Some(m);
            }
            Fact::Edge(n, role, to) => {
                let from = self.index(n)?;
                let to = self.index(to)?;
                self.edges.push(PatternEdge {
                    from,
                    role: role.to_string(),
                    to: PatternTarget::Node(to),
                });
            }
            Fact::Str(n, role, s) => {
                let from = self.index(n)?;
                self.edges.push(PatternEdge {
                    from,
                    role: role.to_string(),
                    to: PatternTarget::Str(s.to_string()),
                });
            }
        }
        Ok(())
    }

    fn pattern(self) -> Pattern {
        let nodes = self
            .names
            .into_iter()
            .zip(self.lex)
            .zip(self.min)
            .map(|((name, lex), min_belief)| PatternNode {
                name,
                lex,
                min_belief,
                pin: None,
            })
            .collect();
        Pattern {
            nodes,
            edges: self.edges,
        }
    }

    fn template(self, bound_in: &[String]) -> (Vec<TemplateNode>, Vec<PatternEdge>) {
        let nodes = self
            .names
            .into_iter()
            .zip(self.lex)
            .zip(self.entity)
            .map(|((name, lex), entity)| {
                let source = match bound_in.iter().position(|b| *b == name) {
                    Some(slot) => NodeSource::Bound(slot),
                    None if entity => NodeSource::Entity,
                    None => NodeSource::New,
                };
                TemplateNode { name, lex, source }
            })
            .collect();
        (nodes, self.edges)
    }
}

fn parse_directive(s: &str, names: &[String]) -> Result<DirectiveTemplate, String> {
    let mut words = s.split_whitespace();
    let kind: Kind = words.next().ok_or("empty directive")?.parse()?;
    let members = words
        .map(|w| {
            names
                .iter()
                .position(|n| n == w)
                .ok_or_else(|| format!("directive member `{w}` is not a body node"))
        })
        .collect::<Result<_, _>>()?;
    Ok(DirectiveTemplate { kind, members })
}

#[derive(PartialEq)]
enum Section {
    Trigger,
    If,
    Then,
    Body,
    Other,
}

#[derive(Default)]
struct Block {
    is_rule: bool,
    trig_kind: Option<Kind>,
    head: Option<Table>,
    tail: Option<Table>,
    conf: Option<f64>,
    pref: Option<f64>,
    plays: Vec<Play>,
}

impl Block {
    fn finish(self) -> Result<Item, String> {
        let head = self.head.ok_or("missing trigger or `if:` section")?;
        let tail = self.tail.ok_or("missing body or `then:` section")?;
        let bound = head.names.clone();
        if self.is_rule {
            let (nodes, edges) = tail.template(&bound);
            Ok(Item::Rule(Rule {
                if_pattern: head.pattern(),
                then: crate::semnet::Template { nodes, edges },
                conf: self.conf.ok_or("missing `conf:`")?,
            }))
        } else {
            let (nodes, edges) = tail.template(&bound);
            Ok(Item::Op(Operator {
                id: OpId(0),
                trigger_kind: self.trig_kind.ok_or("missing `trig:`")?,
                trigger: head.pattern(),
                pref: self.pref.ok_or("missing `pref:`")?,
                body: Chain {
                    nodes,
                    edges,
                    plays: self.plays,
                },
            }))
        }
    }
}

enum Item {
    Rule(Rule),
    Op(Operator),
}

impl FromStr for Kb {
    type Err = KbError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut kb = Kb::default();
        let mut block: Option<Block> = None;
        let mut section = Section::Other;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| KbError { line: line_no, msg };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some(b) = block.as_mut() else {
                match trimmed {
                    "rule" => {
                        block = Some(Block {
                            is_rule: true,
                            ..Block::default()
                        })
                    }
                    "op" => block = Some(Block::default()),
                    other => return Err(err(format!("expected `rule` or `op`, found `{other}`"))),
                }
                continue;
            };
            if raw.starts_with(' ') {
                let fact = parse_fact(raw).map_err(err)?;
                let table = match section {
                    Section::Trigger | Section::If => b.head.as_mut(),
                    Section::Then | Section::Body => b.tail.as_mut(),
                    Section::Other => None,
                };
                table
                    .ok_or_else(|| err("fact line outside a node section".into()))?
                    .add(fact)
                    .map_err(err)?;
                continue;
            }
            if trimmed == "end" {
                let item = block.take().expect("in block").finish().map_err(err)?;
                match item {
                    Item::Rule(r) => kb.rules.push(r),
                    Item::Op(o) => kb.ops.push(o),
                }
                section = Section::Other;
                continue;
            }
            let (key, value) = trimmed
                .split_once(':')
                .ok_or_else(|| err(format!("unexpected line `{trimmed}`")))?;
            let value = value.trim();
            let names: Vec<&str> = value.split_whitespace().collect();
            match (key, b.is_rule) {
                ("if", true) => {
                    b.head = Some(Table::new(&names));
                    section = Section::If;
                }
                ("then", true) => {
                    b.tail = Some(Table::new(&names));
                    section = Section::Then;
                }
                ("conf", true) => {
                    b.conf = Some(value.parse().map_err(|_| err("bad confidence".into()))?);
                    section = Section::Other;
                }
                ("trig", false) => {
                    let (kind, rest) = names.split_first().ok_or_else(|| err("missing kind".into()))?;
                    b.trig_kind = Some(kind.parse().map_err(err)?);
                    b.head = Some(Table::new(rest));
                    section = Section::Trigger;
                }
                ("pref", false) => {
                    b.pref = Some(value.parse().map_err(|_| err("bad preference".into()))?);
                    section = Section::Other;
                }
                ("body", false) => {
                    b.tail = Some(Table::new(&names));
                    section = Section::Body;
                }
                ("play", false) | ("aux", false) => {
                    section = Section::Other;
                    let body_names = b
                        .tail
                        .as_ref()
                        .map(|t| t.names.clone())
                        .ok_or_else(|| err("`play:` before `body:`".into()))?;
                    let ds = value
                        .split('|')
                        .map(|d| parse_directive(d, &body_names))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(err)?;
                    if key == "play" {
                        b.plays.push(Play {
                            required: ds,
                            auxiliary: Vec::new(),
                        });
                    } else {
                        b.plays
                            .last_mut()
                            .ok_or_else(|| err("`aux:` before any `play:`".into()))?
                            .auxiliary
                            .extend(ds);
                    }
                }
                _ => return Err(err(format!("unexpected `{key}:` here"))),
            }
        }
        if block.is_some() {
            return Err(KbError {
                line: text.lines().count(),
                msg: "unterminated block".into(),
            });
        }
        Ok(kb)
    }
}
