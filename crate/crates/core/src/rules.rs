//! Forward-chaining halo inference.
//!
//! Rules read attention and working memory and write the halo. Deduction is
//! cut off after a fixed number of passes (two by default): the second pass
//! may also read what the first pass concluded, nothing later may.

use std::collections::BTreeMap;

use crate::semnet::{
    Binding, Level, LevelMask, MatchOptions, Memory, NodeId, NodeSource, Pattern, PatternTarget,
    SemnetError, Template,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub if_pattern: Pattern,
    pub then: Template,
    pub conf: f64,
}

impl Rule {
    pub fn validate(&self, roles: &crate::semnet::RoleSet) -> Result<(), SemnetError> {
        if !(self.conf > 0.0 && self.conf <= 1.0) {
            return Err(SemnetError::BeliefOutOfRange(self.conf));
        }
        self.if_pattern.validate(roles)?;
        for n in &self.then.nodes {
            if let NodeSource::Bound(slot) = n.source {
                if slot >= self.if_pattern.nodes.len() {
                    return Err(SemnetError::UnboundTemplateNode(n.name.clone(), slot));
                }
            }
        }
        for e in &self.then.edges {
            roles.check(&e.role)?;
        }
        Ok(())
    }
}

/// Identity of a conclusion, used to merge isomorphic re-derivations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum KeyPart {
    New(usize, Vec<String>),
    Tag(NodeId, String),
    Edge(String, String, String),
}

fn conclusion_key(rule: &Rule, b: &Binding) -> Vec<KeyPart> {
    let resolve = |i: usize| match rule.then.nodes[i].source {
        NodeSource::Bound(slot) => format!("b{}", b.map[slot].0),
        _ => format!("t{i}"),
    };
    let mut key = Vec::new();
    for (i, n) in rule.then.nodes.iter().enumerate() {
        let mut lex: Vec<String> = n.lex.iter().map(|l| l.to_ascii_lowercase()).collect();
        lex.sort();
        match n.source {
            NodeSource::Bound(slot) => {
                key.extend(lex.into_iter().map(|l| KeyPart::Tag(b.map[slot], l)));
            }
            _ => key.push(KeyPart::New(i, lex)),
        }
    }
    for e in &rule.then.edges {
        let to = match &e.to {
            PatternTarget::Node(j) => resolve(*j),
            PatternTarget::Str(s) => format!("s{s}"),
        };
        key.push(KeyPart::Edge(resolve(e.from), e.role.clone(), to));
    }
    key.sort();
    key
}

fn premise_belief(mem: &Memory, rule: &Rule, b: &Binding) -> f64 {
    let mut min = 1.0_f64;
    for (slot, id) in b.map.iter().enumerate() {
        let Some(node) = mem.node(*id) else { continue };
        min = min.min(node.belief);
        for want in &rule.if_pattern.nodes[slot].lex {
            if !node.lex.iter().any(|t| t.eq_ignore_ascii_case(want)) {
                if let Some((_, hb)) = node
                    .halo_lex
                    .iter()
                    .find(|(t, _)| t.eq_ignore_ascii_case(want))
                {
                    min = min.min(*hb);
                }
            }
        }
    }
    min
}

/// Stored belief of a node; the value matching compares against thresholds.
pub fn effective_belief(mem: &Memory, node: NodeId) -> Option<f64> {
    mem.node(node).map(|n| n.belief)
}

/// Clears and re-derives the halo. Returns the number of distinct conclusions.
pub fn refresh_halo(mem: &mut Memory, rules: &[Rule], belief_min: f64, passes: usize) -> usize {
    mem.clear_halo();
    let mut seen: BTreeMap<Vec<KeyPart>, Vec<NodeId>> = BTreeMap::new();
    for pass in 0..passes {
        let levels = if pass == 0 {
            LevelMask::CONSCIOUS
        } else {
            LevelMask::ALL
        };
        let opts = MatchOptions::new(levels, belief_min);
        // match everything against the state at the start of the pass
        let mut firings = Vec::new();
        for rule in rules {
            for b in mem.match_pattern(&rule.if_pattern, &opts) {
                let belief = (rule.conf * premise_belief(mem, rule, &b)).clamp(0.0, 1.0);
                firings.push((rule, b, belief));
            }
        }
        for (rule, b, belief) in firings {
            let key = conclusion_key(rule, &b);
            if let Some(existing) = seen.get(&key) {
                for id in existing.clone() {
                    if let Some(n) = mem.node(id) {
                        let merged = n.belief.max(belief);
                        let _ = mem.set_belief(id, merged);
                    }
                }
                continue;
            }
            match mem.assert_instance(&rule.then, &b, Level::Halo, belief) {
                Ok(created) => {
                    seen.insert(key, created);
                }
                Err(_) => continue,
            }
        }
    }
    mem.mark_clean();
    seen.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semnet::{PatternEdge, PatternNode, Target, TemplateNode};

    pub(crate) fn girl_rule(conf: f64) -> Rule {
        Rule {
            if_pattern: Pattern::new(
                vec![PatternNode::with_lex("ako-2", "girl"), PatternNode::named("obj-1")],
                vec![],
            )
            .edge(0, "ako", 1),
            then: Template {
                nodes: vec![
                    TemplateNode {
                        name: "ako-4".into(),
                        lex: vec!["person".into()],
                        source: NodeSource::New,
                    },
                    TemplateNode {
                        name: "obj-1".into(),
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

    fn person_rule(conf: f64) -> Rule {
        let mut r = girl_rule(conf);
        r.if_pattern.nodes[0].lex = vec!["person".into()];
        r.then.nodes[0].lex = vec!["human".into()];
        r
    }

    fn successor_rule() -> Rule {
        Rule {
            if_pattern: Pattern::new(vec![PatternNode::with_lex("num-1", "number")], vec![]),
            then: Template {
                nodes: vec![
                    TemplateNode {
                        name: "num-2".into(),
                        lex: vec!["number".into()],
                        source: NodeSource::New,
                    },
                    TemplateNode {
                        name: "num-1".into(),
                        lex: vec![],
                        source: NodeSource::Bound(0),
                    },
                ],
                edges: vec![PatternEdge {
                    from: 0,
                    role: "arg".into(),
                    to: PatternTarget::Node(1),
                }],
            },
            conf: 1.0,
        }
    }

    fn mary_is_a_girl(m: &mut Memory) -> NodeId {
        let mary = m.add_node(Some("mary"), 1.0, Level::Working).unwrap();
        let ako = m.add_node(Some("girl"), 1.0, Level::Working).unwrap();
        m.add_edge(ako, "ako", Target::Node(mary)).unwrap();
        mary
    }

    fn halo_nodes(m: &Memory) -> Vec<NodeId> {
        m.nodes().filter(|n| n.level == Level::Halo).map(|n| n.id).collect()
    }

    #[test]
    fn mary_is_a_person() {
        let mut m = Memory::default();
        let mary = mary_is_a_girl(&mut m);
        assert_eq!(refresh_halo(&mut m, &[girl_rule(1.0)], 0.5, 2), 1);
        let halo = halo_nodes(&m);
        assert_eq!(halo.len(), 1);
        let p = m.node(halo[0]).unwrap();
        assert_eq!(p.lex, vec!["person"]);
        assert_eq!(p.edges[0].to, Target::Node(mary));
        assert_eq!(effective_belief(&m, halo[0]), Some(1.0));
    }

    #[test]
    fn successor_rule_stops_after_two_passes() {
        let mut m = Memory::default();
        m.add_node(Some("number"), 1.0, Level::Working).unwrap();
        assert_eq!(refresh_halo(&mut m, &[successor_rule()], 0.5, 2), 2);
        assert_eq!(halo_nodes(&m).len(), 2);
        // fixed point
        assert_eq!(refresh_halo(&mut m, &[successor_rule()], 0.5, 2), 2);
        assert_eq!(halo_nodes(&m).len(), 2);
    }

    #[test]
    fn empty_rule_set_derives_nothing() {
        let mut m = Memory::default();
        mary_is_a_girl(&mut m);
        assert_eq!(refresh_halo(&mut m, &[], 0.5, 2), 0);
    }

    #[test]
    fn beliefs_multiply_through_chains() {
        let mut m = Memory::default();
        mary_is_a_girl(&mut m);
        refresh_halo(&mut m, &[girl_rule(0.8), person_rule(0.8)], 0.5, 2);
        let mut beliefs: Vec<(String, f64)> = m
            .nodes()
            .filter(|n| n.level == Level::Halo)
            .map(|n| (n.lex[0].clone(), n.belief))
            .collect();
        beliefs.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(beliefs.len(), 2);
        assert_eq!(beliefs[0].0, "human");
        assert!((beliefs[0].1 - 0.64).abs() < 1e-12);
        assert!((beliefs[1].1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn single_pass_does_not_chain() {
        let mut m = Memory::default();
        mary_is_a_girl(&mut m);
        refresh_halo(&mut m, &[girl_rule(1.0), person_rule(1.0)], 0.5, 1);
        assert_eq!(halo_nodes(&m).len(), 1);
    }

    #[test]
    fn raising_the_threshold_never_adds_conclusions() {
        let mut m = Memory::default();
        mary_is_a_girl(&mut m);
        let rules = [girl_rule(0.8), person_rule(0.8)];
        let mut last = usize::MAX;
        for th in [0.0, 0.5, 0.7, 0.9, 1.0] {
            let n = refresh_halo(&mut m, &rules, th, 2);
            assert!(n <= last);
            last = n;
        }
    }
}
