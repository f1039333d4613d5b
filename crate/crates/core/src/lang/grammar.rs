//! Grammar file loading.
//!
//! One production per line: `NT -> sym sym | sym`. Upper-case identifiers
//! are nonterminals, `<any>` is a wildcard token (anything except the
//! `%stop` words), everything else is a literal terminal. Lines starting
//! with `%` are annotations:
//!
//! ```text
//! %start <class> NT      start symbol for an utterance class
//! %slot NT name          NT's yield becomes slot `name` in the a-list
//! %clause NT             NT is bracketed in the a-list
//! %verbatim name         slot keeps the original capitalization
//! %stop w1 w2 ...        words `<any>` refuses to match
//! %role name             extra semantic role
//! %lemma form base       normalizes a word when compiling
//! %version v             informational
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("nonterminal `{0}` is used but never defined")]
    Undefined(String),
    #[error("start symbol `{0}` is not defined")]
    BadStart(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UtteranceClass {
    Command,
    Fact,
    Rule,
    Operator,
    Alias,
}

impl UtteranceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            UtteranceClass::Command => "command",
            UtteranceClass::Fact => "fact",
            UtteranceClass::Rule => "rule",
            UtteranceClass::Operator => "operator",
            UtteranceClass::Alias => "alias",
        }
    }
}

impl fmt::Display for UtteranceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UtteranceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "command" => UtteranceClass::Command,
            "fact" => UtteranceClass::Fact,
            "rule" => UtteranceClass::Rule,
            "operator" => UtteranceClass::Operator,
            "alias" => UtteranceClass::Alias,
            other => return Err(format!("unknown utterance class `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Terminal(String),
    NonTerminal(String),
    Any,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grammar {
    pub productions: Vec<Production>,
    pub starts: Vec<(UtteranceClass, String)>,
    pub slots: BTreeMap<String, String>,
    pub clauses: BTreeSet<String>,
    pub verbatim: BTreeSet<String>,
    pub stop: BTreeSet<String>,
    pub roles: Vec<String>,
    pub lemmas: BTreeMap<String, String>,
    pub version: Option<String>,
    terminals: BTreeSet<String>,
}

/// The grammar shipped with the crate.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../assets/alia.grammar");

fn is_nonterminal(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
        && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl Grammar {
    pub fn default_grammar() -> Self {
        DEFAULT_GRAMMAR.parse().expect("shipped grammar is valid")
    }

    pub fn productions_of<'a>(&'a self, nt: &'a str) -> impl Iterator<Item = (usize, &'a Production)> {
        self.productions
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.lhs == nt)
    }

    pub fn start_symbol(&self, class: UtteranceClass) -> Option<&str> {
        self.starts
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, s)| s.as_str())
    }

    pub fn is_terminal_word(&self, w: &str) -> bool {
        self.terminals.contains(w)
    }

    pub fn lemma<'a>(&'a self, w: &'a str) -> &'a str {
        self.lemmas.get(w).map(String::as_str).unwrap_or(w)
    }

    pub fn accepts_any(&self, w: &str) -> bool {
        !self.stop.contains(w)
    }
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut g = Grammar::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| GrammarError::Syntax {
                line: line_no,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix('%') {
                let words: Vec<&str> = rest.split_whitespace().collect();
                match words.as_slice() {
                    ["start", class, nt] => {
                        let class = class.parse().map_err(|e: String| err(&e))?;
                        g.starts.push((class, nt.to_string()));
                    }
                    ["slot", nt, name] => {
                        g.slots.insert(nt.to_string(), name.to_string());
                    }
                    ["clause", nts @ ..] if !nts.is_empty() => {
                        g.clauses.extend(nts.iter().map(|s| s.to_string()));
                    }
                    ["verbatim", names @ ..] => {
                        g.verbatim.extend(names.iter().map(|s| s.to_string()));
                    }
                    ["stop", ws @ ..] => g.stop.extend(ws.iter().map(|s| s.to_string())),
                    ["role", rs @ ..] => g.roles.extend(rs.iter().map(|s| s.to_string())),
                    ["lemma", form, base] => {
                        g.lemmas.insert(form.to_string(), base.to_string());
                    }
                    ["version", v] => g.version = Some(v.to_string()),
                    _ => return Err(err("unrecognized annotation")),
                }
                continue;
            }
            let (lhs, rhs) = line.split_once("->").ok_or_else(|| err("expected `->`"))?;
            let lhs = lhs.trim();
            if !is_nonterminal(lhs) {
                return Err(err("left-hand side must be an upper-case nonterminal"));
            }
            for alt in rhs.split('|') {
                let syms: Vec<Symbol> = alt
                    .split_whitespace()
                    .map(|s| {
                        if s == "<any>" {
                            Symbol::Any
                        } else if is_nonterminal(s) {
                            Symbol::NonTerminal(s.to_string())
                        } else {
                            Symbol::Terminal(s.to_ascii_lowercase())
                        }
                    })
                    .collect();
                if syms.is_empty() {
                    return Err(err("empty alternative"));
                }
                g.productions.push(Production {
                    lhs: lhs.to_string(),
                    rhs: syms,
                });
            }
        }
        let defined: BTreeSet<&str> = g.productions.iter().map(|p| p.lhs.as_str()).collect();
        for p in &g.productions {
            for s in &p.rhs {
                match s {
                    Symbol::NonTerminal(n) if !defined.contains(n.as_str()) => {
                        return Err(GrammarError::Undefined(n.clone()));
                    }
                    Symbol::Terminal(t) => {
                        g.terminals.insert(t.clone());
                    }
                    _ => {}
                }
            }
        }
        for (_, s) in &g.starts {
            if !defined.contains(s.as_str()) {
                return Err(GrammarError::BadStart(s.clone()));
            }
        }
        Ok(g)
    }
}
