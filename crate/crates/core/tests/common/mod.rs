//! Shared test helpers: a brute-force matcher, random instances and
//! scenario plumbing.
#![allow(dead_code)]

use std::collections::BTreeSet;

use alia::interp::{Event, EventBody};
use alia::rules::{refresh_halo, Rule};
use alia::semnet::{
    Binding, Level, LevelMask, Memory, Node, NodeId, NodeSource, Pattern, PatternEdge, PatternNode, PatternTarget,
    Target, Template, TemplateNode,
};
use alia::service::Session;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- matcher oracle -----------------------------------------------------

#[derive(Debug, Clone)]
pub struct Instance {
    pub mem: Memory,
    pub pattern: Pattern,
    pub levels: LevelMask,
    pub belief_min: f64,
    pub anchor: Option<(usize, NodeId)>,
    pub allow: BTreeSet<NodeId>,
}

fn level_ok(levels: LevelMask, l: Level) -> bool {
    match l {
        Level::Attention => levels.attention,
        Level::Working => levels.working,
        Level::Halo => levels.halo,
    }
}

fn tag_ok(n: &Node, want: &str, halo: bool, threshold: f64) -> bool {
    let plain = n.lex.iter().any(|t| t.to_lowercase() == want.to_lowercase());
    let derived = halo
        && n
            .halo_lex
            .iter()
            .any(|(t, b)| t.to_lowercase() == want.to_lowercase() && *b >= threshold);
    plain || derived
}

fn edge_ok(n: &Node, role: &str, to: &Target, halo: bool) -> bool {
    let hit = |e: &alia::semnet::Edge| {
        e.role == role
            && match (&e.to, to) {
                (Target::Str(a), Target::Str(b)) => a.to_lowercase() == b.to_lowercase(),
                (a, b) => a == b,
            }
    };
    n.edges.iter().any(hit) || (halo && n.halo_edges.iter().any(hit))
}

/// Every total assignment, filtered by the matching rules. Exponential on
/// purpose: it shares nothing with the real search.
pub fn brute_force(inst: &Instance) -> Vec<Binding> {
    let nodes: Vec<&Node> = inst.mem.nodes().collect();
    let k = inst.pattern.nodes.len();
    if k == 0 || nodes.is_empty() {
        return Vec::new();
    }
    let predicate: Vec<bool> = (0..k).map(|i| inst.pattern.edges.iter().any(|e| e.from == i)).collect();
    let mut out = Vec::new();
    let total = nodes.len().pow(k as u32);
    'outer: for code in 0..total {
        let mut c = code;
        let mut pick = Vec::with_capacity(k);
        for _ in 0..k {
            pick.push(nodes[c % nodes.len()]);
            c /= nodes.len();
        }
        for (slot, (pn, n)) in inst.pattern.nodes.iter().zip(&pick).enumerate() {
            let threshold = pn.min_belief.unwrap_or(0.0).max(inst.belief_min);
            let ok = level_ok(inst.levels, n.level)
                && (!n.hypothetical || inst.allow.contains(&n.id))
                && pn.pin.is_none_or(|p| p == n.id)
                && n.belief >= threshold
                && pn.lex.iter().all(|w| tag_ok(n, w, inst.levels.halo, threshold))
                && inst.anchor.is_none_or(|(s, id)| s != slot || id == n.id);
            if !ok {
                continue 'outer;
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if predicate[i] && predicate[j] && pick[i].id == pick[j].id {
                    continue 'outer;
                }
            }
        }
        for e in &inst.pattern.edges {
            let to = match &e.to {
                PatternTarget::Node(t) => Target::Node(pick[*t].id),
                PatternTarget::Str(s) => Target::Str(s.clone()),
            };
            if !edge_ok(pick[e.from], &e.role, &to, inst.levels.halo) {
                continue 'outer;
            }
        }
        out.push(Binding {
            map: pick.iter().map(|n| n.id).collect(),
        });
    }
    out.sort();
    out.dedup();
    out
}

const WORDS: [&str; 4] = ["a", "b", "c", "D"];
const ROLES: [&str; 3] = ["ako", "hq", "obj"];

/// Random memory of up to 12 nodes and a connected pattern of up to 4.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mem = Memory::default();
    let n_mem = rng.gen_range(1..=9);
    let mut ids = Vec::new();
    for _ in 0..n_mem {
        let lex = if rng.gen_bool(0.85) { Some(*WORDS.choose(&mut rng).unwrap()) } else { None };
        let level = if rng.gen_bool(0.5) { Level::Attention } else { Level::Working };
        let belief = *[0.3, 0.6, 1.0].choose(&mut rng).unwrap();
        let id = mem.add_node(lex, belief, level).unwrap();
        if rng.gen_bool(0.2) {
            mem.add_tag(id, WORDS.choose(&mut rng).unwrap()).unwrap();
        }
        if rng.gen_bool(0.1) {
            mem.node_mut(id).unwrap().hypothetical = true;
        }
        ids.push(id);
    }
    for _ in 0..rng.gen_range(0..=2 * n_mem) {
        let a = *ids.choose(&mut rng).unwrap();
        let role = *ROLES.choose(&mut rng).unwrap();
        let to = if rng.gen_bool(0.1) {
            Target::Str("X".into())
        } else {
            Target::Node(*ids.choose(&mut rng).unwrap())
        };
        mem.add_edge(a, role, to).unwrap();
    }
    // a couple of rules populate the halo with nodes, tags and edges
    let mut rules = Vec::new();
    if rng.gen_bool(0.6) {
        rules.push(alias_rule(WORDS.choose(&mut rng).unwrap(), WORDS.choose(&mut rng).unwrap()));
    }
    if rng.gen_bool(0.6) {
        rules.push(ako_rule(WORDS.choose(&mut rng).unwrap(), WORDS.choose(&mut rng).unwrap(), 0.8));
    }
    refresh_halo(&mut mem, &rules, 0.0, 2);

    let all: Vec<NodeId> = mem.nodes().map(|n| n.id).collect();
    let k = rng.gen_range(1..=4);
    let mut nodes = Vec::new();
    for i in 0..k {
        let mut pn = PatternNode::named(&format!("p{i}"));
        if rng.gen_bool(0.6) {
            pn.lex.push(WORDS.choose(&mut rng).unwrap().to_uppercase());
        }
        if rng.gen_bool(0.1) {
            pn.lex.push(WORDS.choose(&mut rng).unwrap().to_string());
        }
        if rng.gen_bool(0.1) {
            pn.min_belief = Some(0.5);
        }
        if rng.gen_bool(0.05) {
            pn.pin = all.choose(&mut rng).copied();
        }
        nodes.push(pn);
    }
    let mut edges = Vec::new();
    for i in 1..k {
        // spanning tree with random orientation keeps the pattern connected
        let j = rng.gen_range(0..i);
        let (from, to) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
        edges.push(PatternEdge {
            from,
            role: ROLES.choose(&mut rng).unwrap().to_string(),
            to: PatternTarget::Node(to),
        });
    }
    if k > 1 && rng.gen_bool(0.3) {
        edges.push(PatternEdge {
            from: rng.gen_range(0..k),
            role: ROLES.choose(&mut rng).unwrap().to_string(),
            to: PatternTarget::Node(rng.gen_range(0..k)),
        });
    }
    if rng.gen_bool(0.1) {
        edges.push(PatternEdge {
            from: rng.gen_range(0..k),
            role: ROLES.choose(&mut rng).unwrap().to_string(),
            to: PatternTarget::Str("x".into()),
        });
    }
    let levels = *[
        LevelMask::ALL,
        LevelMask::CONSCIOUS,
        LevelMask {
            attention: true,
            working: false,
            halo: false,
        },
    ]
    .choose(&mut rng)
    .unwrap();
    let belief_min = *[0.0, 0.5].choose(&mut rng).unwrap();
    let anchor = rng.gen_bool(0.3).then(|| (0, *all.choose(&mut rng).unwrap()));
    let allow = all
        .iter()
        .copied()
        .filter(|id| mem.node(*id).unwrap().hypothetical && rng.gen_bool(0.5))
        .collect();
    Instance {
        mem,
        pattern: Pattern::new(nodes, edges),
        levels,
        belief_min,
        anchor,
        allow,
    }
}

/// `X means Y`: a node tagged X also carries Y.
pub fn alias_rule(x: &str, y: &str) -> Rule {
    Rule {
        if_pattern: Pattern::new(vec![PatternNode::with_lex("w", x)], vec![]),
        then: Template {
            nodes: vec![TemplateNode {
                name: "w".into(),
                lex: vec![y.to_string()],
                source: NodeSource::Bound(0),
            }],
            edges: vec![],
        },
        conf: 1.0,
    }
}

/// `if something is an X it is a Y`.
pub fn ako_rule(x: &str, y: &str, conf: f64) -> Rule {
    Rule {
        if_pattern: Pattern::new(vec![PatternNode::with_lex("k", x), PatternNode::named("o")], vec![]).edge(0, "ako", 1),
        then: Template {
            nodes: vec![
                TemplateNode {
                    name: "k2".into(),
                    lex: vec![y.to_string()],
                    source: NodeSource::New,
                },
                TemplateNode {
                    name: "o".into(),
                    lex: vec![],
                    source: NodeSource::Bound(1),
                },
            ],
            edges: vec![PatternEdge {
                from: 0,
                role: "ako".into(),
                to: PatternTarget::Node(1),
            }],
        },
        conf,
    }
}

// ---- scenarios ----------------------------------------------------------

pub fn teach(s: &mut Session, lines: &[&str]) {
    for l in lines {
        let t = s.repl_turn(l);
        assert_eq!(t.reply, alia::service::Reply::Okay, "teaching `{l}`");
    }
}

pub fn say_as(s: &mut Session, who: &str, line: &str) -> alia::service::Turn {
    let before = s.speaker().to_string();
    s.set_speaker(who);
    let t = s.repl_turn(line);
    s.set_speaker(&before);
    t
}

/// (name, args) of every grounding call.
pub fn fcn_calls(events: &[Event]) -> Vec<(String, Vec<String>)> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Fcn { name, args, .. } => Some((name.clone(), args.clone())),
            _ => None,
        })
        .collect()
}

pub fn speech(events: &[Event]) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Speech { text } => Some(text.clone()),
            _ => None,
        })
        .collect()
}

/// Actuation records for one actuator, by its serialized name.
pub fn actuations(events: &[Event], actuator: &str) -> usize {
    events
        .iter()
        .filter(|e| match &e.body {
            EventBody::Actuate { actuator: a, .. } => serde_json::to_value(a).unwrap() == actuator,
            _ => false,
        })
        .count()
}

pub const DANCE: [&str; 3] = [
    "to cha-cha drive forward then drive backwards",
    "to shimmy turn left then turn right",
    "to dance cha-cha then shimmy",
];

pub const PROHIBITION: [&str; 2] = [
    "you should never grab a person but instead say I'm not allowed to",
    "if something is a girl it is a person",
];

pub const PERMISSION: [&str; 2] = [
    "if Rick tells you to do something don't but instead complain",
    "to complain say I don't take orders from you",
];

// ---- hand-built chains --------------------------------------------------

/// Small builder for posting chains directly into an engine.
#[derive(Debug, Default)]
pub struct ChainBuilder {
    pub chain: alia::policy::Chain,
}

impl ChainBuilder {
    fn push(&mut self, lex: Option<&str>, source: NodeSource) -> usize {
        let i = self.chain.nodes.len();
        self.chain.nodes.push(TemplateNode {
            name: format!("n{i}"),
            lex: lex.map(|l| vec![l.to_string()]).unwrap_or_default(),
            source,
        });
        i
    }

    pub fn node(&mut self, lex: Option<&str>) -> usize {
        self.push(lex, NodeSource::New)
    }

    pub fn entity(&mut self, name: &str) -> usize {
        self.push(Some(name), NodeSource::Entity)
    }

    pub fn edge(&mut self, from: usize, role: &str, to: usize) {
        self.chain.edges.push(PatternEdge {
            from,
            role: role.into(),
            to: PatternTarget::Node(to),
        });
    }

    pub fn text(&mut self, from: usize, s: &str) {
        self.chain.edges.push(PatternEdge {
            from,
            role: "str".into(),
            to: PatternTarget::Str(s.into()),
        });
    }

    /// `say <text>` as a DO payload; returns its members.
    pub fn say(&mut self, s: &str) -> Vec<usize> {
        let act = self.node(Some("say"));
        let txt = self.node(None);
        self.edge(act, "obj", txt);
        self.text(txt, s);
        vec![act, txt]
    }

    /// `drive <dir>` as a DO payload.
    pub fn drive(&mut self, dir: &str) -> Vec<usize> {
        let act = self.node(Some("drive"));
        let d = self.node(Some(dir));
        self.edge(d, "dir", act);
        vec![act, d]
    }

    pub fn play(&mut self, required: Vec<(Kind, Vec<usize>)>, auxiliary: Vec<(Kind, Vec<usize>)>) {
        let t = |v: Vec<(Kind, Vec<usize>)>| {
            v.into_iter()
                .map(|(kind, members)| alia::policy::DirectiveTemplate { kind, members })
                .collect()
        };
        self.chain.plays.push(alia::policy::Play {
            required: t(required),
            auxiliary: t(auxiliary),
        });
    }
}

pub use alia::policy::Kind;

// ---- random knowledge bases ---------------------------------------------

pub const VERBS: [&str; 3] = ["alpha", "beta", "gamma"];

fn say_op(kind: &str, verb: &str, pref: f64, text: &str, punt: bool) -> String {
    let mut s = format!(
        "op\ntrig: {kind} act-1\n  act-1 -lex- {verb}\npref: {pref}\nbody: act-1 act-2 txt-3\n  act-2 -lex- say\n  act-2 -obj-> txt-3\n  txt-3 -str- {text}\nplay: DO act-2 txt-3\n"
    );
    if punt {
        s.push_str("play: PUNT\n");
    }
    s.push_str("end\n\n");
    s
}

fn failing_op(verb: &str) -> String {
    // no direction: base_drive refuses to start
    format!(
        "op\ntrig: DO act-1\n  act-1 -lex- {verb}\npref: 1\nbody: act-1 fcn-2\n  fcn-2 -lex- base_drive\n  fcn-2 -arg-> act-1\nplay: FCN fcn-2\nend\n\n"
    )
}

fn nested_op(verb: &str, inner: &str) -> String {
    format!("op\ntrig: DO act-1\n  act-1 -lex- {verb}\npref: 1\nbody: act-1 act-2\n  act-2 -lex- {inner}\nplay: DO act-2\nend\n\n")
}

/// Random operators over three made-up verbs: DO expansions that speak,
/// fail or nest, plus ANTE and POST operators that speak or punt.
pub fn random_kb(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut n = 0;
    let mut text = || {
        n += 1;
        format!("t{n}")
    };
    for (i, verb) in VERBS.iter().enumerate() {
        for _ in 0..rng.gen_range(0..=2) {
            match rng.gen_range(0..3) {
                0 => out.push_str(&say_op("DO", verb, *[0.5, 1.0].choose(&mut rng).unwrap(), &text(), false)),
                1 => out.push_str(&failing_op(verb)),
                _ if i + 1 < VERBS.len() => out.push_str(&nested_op(verb, VERBS[rng.gen_range(i + 1..VERBS.len())])),
                _ => out.push_str(&failing_op(verb)),
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            out.push_str(&say_op("ANTE", verb, 1.0, &text(), rng.gen_bool(0.25)));
        }
        for _ in 0..rng.gen_range(0..=2) {
            out.push_str(&say_op("POST", verb, 1.0, &text(), false));
        }
    }
    out
}

/// A session whose KB is the default one plus `extra`.
pub fn session_with(extra: &str, seed: u64) -> Session {
    let mut cfg = alia::service::SessionConfig::standard(seed);
    let text = format!("{}\n{}", alia::service::DEFAULT_KB, extra);
    cfg.kb = text.parse().expect("generated kb parses");
    Session::new(cfg).expect("session builds")
}

/// Posts `DO <verb>` as a root focus.
pub fn command(verb: &str) -> alia::policy::Chain {
    let mut b = ChainBuilder::default();
    let act = b.node(Some(verb));
    b.play(vec![(Kind::Do, vec![act])], vec![]);
    b.chain
}

/// Checks that every DO which finished ran each POST candidate exactly
/// once. Returns the number of DO directives checked.
pub fn post_totality(events: &[Event]) -> Result<usize, String> {
    use std::collections::BTreeMap;
    let mut finished = BTreeSet::new();
    let mut posts: BTreeMap<_, Vec<alia::policy::OpId>> = BTreeMap::new();
    let mut phases: BTreeMap<_, usize> = BTreeMap::new();
    let mut ran: BTreeMap<_, Vec<alia::policy::OpId>> = BTreeMap::new();
    for e in events {
        let Some(d) = e.directive else { continue };
        match &e.body {
            EventBody::Transition { to, .. } if e.kind == Some(Kind::Do) && to.is_final() => {
                finished.insert(d);
            }
            EventBody::Phase { phase: Kind::Post, candidates } => {
                posts.insert(d, candidates.clone());
                *phases.entry(d).or_default() += 1;
            }
            EventBody::Invoke { op, phase: Kind::Post } => ran.entry(d).or_default().push(*op),
            _ => {}
        }
    }
    for d in &finished {
        if phases.get(d) != Some(&1) {
            return Err(format!("DO {d:?} entered POST {:?} times", phases.get(d)));
        }
        let mut want = posts[d].clone();
        let mut got = ran.get(d).cloned().unwrap_or_default();
        want.sort();
        got.sort();
        if want != got {
            return Err(format!("DO {d:?}: POST candidates {want:?}, ran {got:?}"));
        }
    }
    Ok(finished.len())
}
