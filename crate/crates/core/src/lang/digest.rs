//! Parse tree to association list.

use std::fmt;

use super::grammar::Grammar;
use super::parse::ParseTree;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AItem {
    Slot { slot: String, value: String },
    Open,
    Close,
}

/// Slots and values in utterance order, with clause bracketing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AList {
    pub items: Vec<AItem>,
}

impl AList {
    pub fn slots(&self) -> impl Iterator<Item = (&str, &str)> {
        self.items.iter().filter_map(|i| match i {
            AItem::Slot { slot, value } => Some((slot.as_str(), value.as_str())),
            _ => None,
        })
    }

    pub fn first(&self, slot: &str) -> Option<&str> {
        self.slots().find(|(s, _)| *s == slot).map(|(_, v)| v)
    }

    pub fn is_balanced(&self) -> bool {
        let mut depth = 0i64;
        for i in &self.items {
            match i {
                AItem::Open => depth += 1,
                AItem::Close => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                }
                AItem::Slot { .. } => {}
            }
        }
        depth == 0
    }

    /// Top-level segments: bracketed groups become `Group`, bare slots `Slot`.
    pub fn segments(&self) -> Vec<Segment<'_>> {
        let mut out = Vec::new();
        let mut depth = 0;
        let mut group: Vec<(&str, &str)> = Vec::new();
        for i in &self.items {
            match i {
                AItem::Open => {
                    if depth == 0 {
                        group.clear();
                    }
                    depth += 1;
                }
                AItem::Close => {
                    depth -= 1;
                    if depth == 0 {
                        out.push(Segment::Group(std::mem::take(&mut group)));
                    }
                }
                AItem::Slot { slot, value } => {
                    if depth == 0 {
                        out.push(Segment::Slot(slot, value));
                    } else {
                        group.push((slot, value));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Slot(&'a str, &'a str),
    Group(Vec<(&'a str, &'a str)>),
}

impl fmt::Display for AList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        let mut pending_open = false;
        for i in &self.items {
            match i {
                AItem::Open => pending_open = true,
                AItem::Close => match parts.last_mut() {
                    Some(last) if !pending_open => last.push(']'),
                    _ => {
                        parts.push("[]".into());
                        pending_open = false;
                    }
                },
                AItem::Slot { slot, value } => {
                    let open = if pending_open { "[" } else { "" };
                    pending_open = false;
                    parts.push(format!("{open}{slot}={value}"));
                }
            }
        }
        f.write_str(&parts.join(" "))
    }
}

/// Walks the tree keeping slot-bearing constituents and clause brackets.
pub fn digest(tree: &ParseTree, g: &Grammar) -> AList {
    let mut out = AList::default();
    walk(tree, g, &mut out);
    out
}

fn walk(t: &ParseTree, g: &Grammar, out: &mut AList) {
    let ParseTree::Node {
        symbol, children, ..
    } = t
    else {
        return;
    };
    if let Some(slot) = g.slots.get(symbol) {
        let verbatim = g.verbatim.contains(slot);
        let value: Vec<&str> = t
            .tokens()
            .into_iter()
            .map(|tok| if verbatim { tok.text.as_str() } else { tok.norm.as_str() })
            .collect();
        out.items.push(AItem::Slot {
            slot: slot.clone(),
            value: value.join(" "),
        });
        return;
    }
    let clause = g.clauses.contains(symbol);
    if clause {
        out.items.push(AItem::Open);
    }
    for c in children {
        walk(c, g, out);
    }
    if clause {
        out.items.push(AItem::Close);
    }
}
