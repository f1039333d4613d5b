//! A-list to rules, operators and directive chains.

use thiserror::Error;

use super::digest::{AList, Segment};
use super::grammar::{Grammar, UtteranceClass};
use crate::policy::{Chain, DirectiveTemplate, Kind, OpId, Operator, Play};
use crate::rules::Rule;
use crate::semnet::{NodeSource, Pattern, PatternEdge, PatternNode, PatternTarget, Template, TemplateNode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompileError {
    #[error("cannot read `{0}` as a {1}")]
    Unclassifiable(String, &'static str),
    #[error("`{0}` slot is missing")]
    MissingSlot(&'static str),
    #[error("unexpected `{0}` slot in a {1}")]
    UnexpectedSlot(String, &'static str),
}

/// Output of compiling one utterance.
#[derive(Debug, Clone, PartialEq)]
pub enum Compiled {
    /// A chain to post: speech act plus commanded actions.
    Command(Chain),
    /// A chain holding one NOTE for a told fact.
    Fact(Chain),
    Rule(Rule),
    Operator(Operator),
}

pub const PREF_WEAK: f64 = 0.8;
pub const PREF_DEFAULT: f64 = 1.0;
pub const PREF_STRONG: f64 = 1.2;

/// "you could/can/might" 0.8, "you must (always)" 1.2, anything else 1.0.
pub fn preference(phrase: Option<&str>) -> f64 {
    match phrase {
        Some(p) if p.contains("must") => PREF_STRONG,
        Some(p) if p.contains("could") || p.contains("can") || p.contains("might") => PREF_WEAK,
        _ => PREF_DEFAULT,
    }
}

/// "usually" 0.8, "sometimes" 0.5, otherwise 1.0.
pub fn confidence(hedge: Option<&str>) -> f64 {
    match hedge {
        Some("usually") => 0.8,
        Some("sometimes") => 0.5,
        _ => 1.0,
    }
}

#[derive(Debug, Clone)]
struct SketchNode {
    name: String,
    lex: Vec<String>,
    entity: bool,
}

/// Scratch graph; trigger and body share one table so names stay unique.
#[derive(Debug, Default)]
struct Sketch {
    nodes: Vec<SketchNode>,
    edges: Vec<PatternEdge>,
}

impl Sketch {
    fn node(&mut self, prefix: &str, lex: Option<&str>) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(SketchNode {
            name: format!("{prefix}-{}", idx + 1),
            lex: lex.map(|l| vec![l.to_string()]).unwrap_or_default(),
            entity: false,
        });
        idx
    }

    fn entity(&mut self, prefix: &str, name: &str) -> usize {
        let idx = self.node(prefix, Some(name));
        self.nodes[idx].entity = true;
        idx
    }

    fn edge(&mut self, from: usize, role: &str, to: usize) {
        self.edges.push(PatternEdge {
            from,
            role: role.to_string(),
            to: PatternTarget::Node(to),
        });
    }

    fn str_edge(&mut self, from: usize, role: &str, text: &str) {
        self.edges.push(PatternEdge {
            from,
            role: role.to_string(),
            to: PatternTarget::Str(text.to_string()),
        });
    }

    /// One imperative clause. Returns its nodes, action node first.
    fn action(&mut self, group: &[(&str, &str)], g: &Grammar) -> Result<Vec<usize>, CompileError> {
        let verb = group.iter().find(|(s, _)| *s == "act").map(|(_, v)| *v);
        let act = self.node("act", verb);
        let mut members = vec![act];
        for &(slot, value) in group {
            match slot {
                "act" => {}
                "dir" | "man" => {
                    let m = self.node(slot, Some(value));
                    self.edge(m, slot, act);
                    members.push(m);
                }
                "obj" => {
                    let o = self.entity("obj", value);
                    self.edge(act, "obj", o);
                    members.push(o);
                }
                "kind" => {
                    let o = self.node("obj", None);
                    let k = self.node("ako", Some(g.lemma(value)));
                    self.edge(act, "obj", o);
                    self.edge(k, "ako", o);
                    members.extend([o, k]);
                }
                "text" => {
                    let t = self.node("txt", None);
                    self.str_edge(t, "str", value);
                    self.edge(act, "obj", t);
                    members.push(t);
                }
                other => return Err(CompileError::UnexpectedSlot(other.to_string(), "command")),
            }
        }
        Ok(members)
    }

    /// A state such as "something is very close". Returns nodes, quality first.
    fn situation(&mut self, slots: &[(&str, &str)]) -> Result<Vec<usize>, CompileError> {
        let qual = slots
            .iter()
            .find(|(s, _)| *s == "qual")
            .map(|(_, v)| *v)
            .ok_or(CompileError::MissingSlot("qual"))?;
        let hq = self.node("hq", Some(qual));
        let subject = match slots.iter().find(|(s, _)| *s == "subj" || *s == "obj") {
            Some(("obj", name)) => self.entity("obj", name),
            _ => self.node("obj", None),
        };
        self.edge(hq, "hq", subject);
        let mut members = vec![hq, subject];
        for &(slot, value) in slots {
            if slot == "deg" {
                let d = self.node("deg", Some(value));
                self.edge(d, "deg", hq);
                members.push(d);
            }
        }
        Ok(members)
    }

    /// A kind or quality predicate about `subject`.
    fn predicate(&mut self, slots: &[(&str, &str)], subject: usize, g: &Grammar) -> Result<usize, CompileError> {
        for &(slot, value) in slots {
            match slot {
                "kind" => {
                    let k = self.node("ako", Some(g.lemma(value)));
                    self.edge(k, "ako", subject);
                    return Ok(k);
                }
                "qual" => {
                    let q = self.node("hq", Some(value));
                    self.edge(q, "hq", subject);
                    return Ok(q);
                }
                _ => {}
            }
        }
        Err(CompileError::MissingSlot("kind"))
    }

    /// Pattern over nodes `[0, end)`. Edges leaving that range are dropped.
    fn pattern(&self, end: usize) -> Pattern {
        let nodes = self.nodes[..end]
            .iter()
            .map(|n| PatternNode {
                name: n.name.clone(),
                lex: n.lex.clone(),
                min_belief: None,
                pin: None,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| in_range(e, 0, end))
            .cloned()
            .collect();
        Pattern { nodes, edges }
    }

    /// Chain node table over nodes `[start, len)`, reindexed from zero.
    fn chain_nodes(&self, start: usize) -> (Vec<TemplateNode>, Vec<PatternEdge>) {
        let nodes = self.nodes[start..]
            .iter()
            .map(|n| TemplateNode {
                name: n.name.clone(),
                lex: n.lex.clone(),
                source: if n.entity { NodeSource::Entity } else { NodeSource::New },
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.from >= start)
            .map(|e| PatternEdge {
                from: e.from - start,
                role: e.role.clone(),
                to: match &e.to {
                    PatternTarget::Node(t) => PatternTarget::Node(t - start),
                    s => s.clone(),
                },
            })
            .collect();
        (nodes, edges)
    }
}

fn in_range(e: &PatternEdge, start: usize, end: usize) -> bool {
    (start..end).contains(&e.from)
        && match e.to {
            PatternTarget::Node(t) => (start..end).contains(&t),
            PatternTarget::Str(_) => true,
        }
}

fn shift(members: Vec<usize>, by: usize) -> Vec<usize> {
    members.into_iter().map(|m| m - by).collect()
}

/// Builds plays from clause groups joined by `conj` slots.
fn body_plays(
    sk: &mut Sketch,
    segs: &[Segment<'_>],
    g: &Grammar,
    offset: usize,
) -> Result<Vec<Play>, CompileError> {
    let mut plays = vec![Play::default()];
    for seg in segs {
        match seg {
            Segment::Group(group) => {
                let members = sk.action(group, g)?;
                plays.last_mut().expect("non-empty").required.push(DirectiveTemplate {
                    kind: Kind::Do,
                    members: shift(members, offset),
                });
            }
            Segment::Slot("conj", "then") => {
                if !plays.last().expect("non-empty").required.is_empty() {
                    plays.push(Play::default());
                }
            }
            Segment::Slot(..) => {}
        }
    }
    plays.retain(|p| !p.required.is_empty());
    if plays.is_empty() {
        return Err(CompileError::MissingSlot("act"));
    }
    Ok(plays)
}

fn punt_play() -> Play {
    Play {
        required: vec![DirectiveTemplate {
            kind: Kind::Punt,
            members: Vec::new(),
        }],
        auxiliary: Vec::new(),
    }
}

/// Operator definitions: "to X ...", "if/whenever <state> ...",
/// "never X but instead ...", "if S tells you to X don't but instead ...".
pub fn compile_operator(a: &AList, g: &Grammar) -> Result<Operator, CompileError> {
    let segs = a.segments();
    let mut sk = Sketch::default();
    let trigger_kind;
    let body_from;
    let mut punt = false;
    let mut pref = PREF_DEFAULT;

    if let Some(new_act) = a.first("new-act") {
        trigger_kind = Kind::Do;
        let act = sk.node("act", Some(new_act));
        let first_group = segs
            .iter()
            .position(|s| matches!(s, Segment::Group(_)))
            .unwrap_or(segs.len());
        for seg in &segs[..first_group] {
            match seg {
                Segment::Slot(slot @ ("dir" | "man"), value) => {
                    let m = sk.node(slot, Some(value));
                    sk.edge(m, slot, act);
                }
                Segment::Slot("pref", value) => pref = preference(Some(value)),
                _ => {}
            }
        }
        body_from = first_group;
    } else if a.first("neg").is_some() {
        trigger_kind = Kind::Ante;
        punt = true;
        let instead = segs
            .iter()
            .position(|s| matches!(s, Segment::Slot("instead", _)))
            .ok_or(CompileError::MissingSlot("instead"))?;
        let told = segs[..instead].iter().find_map(|s| match s {
            Segment::Group(g) => Some(g.clone()),
            _ => None,
        });
        let told = told.ok_or(CompileError::MissingSlot("act"))?;
        let members = sk.action(&told, g)?;
        if let Some(speaker) = a.first("speaker") {
            let act = members[0];
            let tell = sk.node("tell", Some("tell"));
            let who = sk.entity("obj", speaker);
            let you = sk.entity("obj", "you");
            sk.edge(tell, "agt", who);
            sk.edge(tell, "dest", you);
            sk.edge(tell, "cmd", act);
        }
        body_from = instead + 1;
    } else {
        trigger_kind = Kind::Note;
        let Some((idx, Segment::Group(state))) = segs
            .iter()
            .enumerate()
            .find(|(_, s)| matches!(s, Segment::Group(_)))
        else {
            return Err(CompileError::Unclassifiable(a.to_string(), "operator"));
        };
        sk.situation(state)?;
        body_from = idx + 1;
    }

    let t = sk.nodes.len();
    let trigger = sk.pattern(t);
    let mut plays = body_plays(&mut sk, &segs[body_from..], g, t)?;
    if punt {
        plays.push(punt_play());
    }
    let (nodes, edges) = sk.chain_nodes(t);
    Ok(Operator {
        id: OpId(0),
        trigger_kind,
        trigger,
        pref,
        body: Chain { nodes, edges, plays },
    })
}

/// Inference rules ("girls are usually female") and aliases ("turn means rotate").
pub fn compile_rule(a: &AList, g: &Grammar) -> Result<Rule, CompileError> {
    let words: Vec<&str> = a.slots().filter(|(s, _)| *s == "word").map(|(_, v)| v).collect();
    if let [from, to] = words.as_slice() {
        let if_pattern = Pattern::new(vec![PatternNode::with_lex("x-1", from)], vec![]);
        let then = Template {
            nodes: vec![TemplateNode {
                name: "x-1".into(),
                lex: vec![to.to_string()],
                source: NodeSource::Bound(0),
            }],
            edges: vec![],
        };
        return Ok(Rule { if_pattern, then, conf: 1.0 });
    }
    let groups: Vec<Vec<(&str, &str)>> = a
        .segments()
        .into_iter()
        .filter_map(|s| match s {
            Segment::Group(g) => Some(g),
            Segment::Slot(..) => None,
        })
        .collect();
    let [cond, conseq] = groups.as_slice() else {
        return Err(CompileError::Unclassifiable(a.to_string(), "rule"));
    };
    let mut sk = Sketch::default();
    let subject = sk.node("obj", None);
    let p = sk.predicate(cond, subject, g)?;
    // node 0 is the predicate, as in `ako-2 -ako-> obj-1`
    let if_pattern = reorder(sk.pattern(sk.nodes.len()), &[p, subject]);
    let c = sk.predicate(conseq, subject, g)?;
    let cn = &sk.nodes[c];
    let then = Template {
        nodes: vec![
            TemplateNode {
                name: cn.name.clone(),
                lex: cn.lex.clone(),
                source: NodeSource::New,
            },
            TemplateNode {
                name: sk.nodes[subject].name.clone(),
                lex: vec![],
                source: NodeSource::Bound(1),
            },
        ],
        edges: vec![PatternEdge {
            from: 0,
            role: sk.edges.last().expect("predicate edge").role.clone(),
            to: PatternTarget::Node(1),
        }],
    };
    Ok(Rule {
        if_pattern,
        then,
        conf: confidence(a.first("hedge")),
    })
}

fn reorder(p: Pattern, order: &[usize]) -> Pattern {
    let pos = |i: usize| order.iter().position(|&o| o == i).expect("listed");
    Pattern {
        nodes: order.iter().map(|&i| p.nodes[i].clone()).collect(),
        edges: p
            .edges
            .into_iter()
            .map(|e| PatternEdge {
                from: pos(e.from),
                role: e.role,
                to: match e.to {
                    PatternTarget::Node(t) => PatternTarget::Node(pos(t)),
                    s => s,
                },
            })
            .collect(),
    }
}

/// Declarative facts ("Mary is a girl") become a single NOTE.
pub fn compile_fact(a: &AList, g: &Grammar) -> Result<Chain, CompileError> {
    let slots: Vec<(&str, &str)> = a.slots().collect();
    let mut sk = Sketch::default();
    let members = if slots.iter().any(|(s, _)| *s == "kind") {
        let name = a.first("obj").ok_or(CompileError::MissingSlot("obj"))?;
        let who = sk.entity("obj", name);
        let k = sk.predicate(&slots, who, g)?;
        vec![k, who]
    } else {
        sk.situation(&slots)?
    };
    let (nodes, edges) = sk.chain_nodes(0);
    Ok(Chain {
        nodes,
        edges,
        plays: vec![Play {
            required: vec![DirectiveTemplate {
                kind: Kind::Note,
                members,
            }],
            auxiliary: vec![],
        }],
    })
}

/// Commands: a speech-act NOTE recording who said it, then the actions.
pub fn compile_command(a: &AList, g: &Grammar, speaker: &str) -> Result<Chain, CompileError> {
    let segs = a.segments();
    let mut sk = Sketch::default();
    let tell = sk.node("tell", Some("tell"));
    let who = sk.entity("obj", &speaker.to_lowercase());
    let you = sk.entity("obj", "you");
    sk.edge(tell, "agt", who);
    sk.edge(tell, "dest", you);
    let mut plays = vec![Play {
        required: vec![DirectiveTemplate {
            kind: Kind::Note,
            members: vec![tell, who, you],
        }],
        auxiliary: vec![],
    }];
    let actions = body_plays(&mut sk, &segs, g, 0)?;
    for p in &actions {
        for d in &p.required {
            sk.edge(tell, "cmd", d.members[0]);
        }
    }
    plays.extend(actions);
    let (nodes, edges) = sk.chain_nodes(0);
    Ok(Chain { nodes, edges, plays })
}

/// Compiles an a-list of the given utterance class.
pub fn compile(a: &AList, class: UtteranceClass, g: &Grammar, speaker: &str) -> Result<Compiled, CompileError> {
    Ok(match class {
        UtteranceClass::Command => Compiled::Command(compile_command(a, g, speaker)?),
        UtteranceClass::Fact => Compiled::Fact(compile_fact(a, g)?),
        UtteranceClass::Rule | UtteranceClass::Alias => Compiled::Rule(compile_rule(a, g)?),
        UtteranceClass::Operator => Compiled::Operator(compile_operator(a, g)?),
    })
}
