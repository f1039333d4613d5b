//! Tokenizer and Earley parser.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::grammar::{Grammar, Symbol, UtteranceClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// As typed, minus surrounding punctuation.
    pub text: String,
    /// Lower-cased form the grammar sees.
    pub norm: String,
}

/// Whitespace split, lower-cased, punctuation stripped except inner `'` and `-`.
pub fn tokenize(input: &str) -> Vec<Token> {
    input
        .split_whitespace()
        .filter_map(|w| {
            let kept: String = w
                .chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
                .collect();
            let trimmed = kept.trim_matches(|c| c == '\'' || c == '-');
            (!trimmed.is_empty()).then(|| Token {
                text: trimmed.to_string(),
                norm: trimmed.to_lowercase(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no parse; stuck at token {position}{}", .token.as_ref().map(|t| format!(" (`{t}`)")).unwrap_or_default())]
pub struct ParseError {
    /// Length of the longest prefix the grammar could account for.
    pub position: usize,
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseTree {
    Node {
        symbol: String,
        children: Vec<ParseTree>,
        span: (usize, usize),
    },
    Leaf {
        index: usize,
        token: Token,
    },
}

impl ParseTree {
    pub fn span(&self) -> (usize, usize) {
        match self {
            ParseTree::Node { span, .. } => *span,
            ParseTree::Leaf { index, .. } => (*index, index + 1),
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            ParseTree::Node { symbol, .. } => Some(symbol),
            ParseTree::Leaf { .. } => None,
        }
    }

    /// Leaf tokens in order.
    pub fn tokens(&self) -> Vec<&Token> {
        match self {
            ParseTree::Leaf { token, .. } => vec![token],
            ParseTree::Node { children, .. } => children.iter().flat_map(|c| c.tokens()).collect(),
        }
    }

    /// Bracketed rendering, e.g. `(OPDEF to (HEAD ...) ...)`.
    pub fn render(&self) -> String {
        match self {
            ParseTree::Leaf { token, .. } => token.norm.clone(),
            ParseTree::Node {
                symbol, children, ..
            } => {
                let inner: Vec<String> = children.iter().map(|c| c.render()).collect();
                format!("({} {})", symbol, inner.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Item {
    prod: usize,
    dot: usize,
    origin: usize,
}

fn scans(g: &Grammar, sym: &Symbol, tok: &Token) -> bool {
    match sym {
        Symbol::Terminal(t) => *t == tok.norm,
        Symbol::Any => g.accepts_any(&tok.norm),
        Symbol::NonTerminal(_) => false,
    }
}

struct Chart {
    /// Completed constituents (lhs, start, end).
    complete: BTreeSet<(String, usize, usize)>,
    furthest: usize,
}

fn recognize(tokens: &[Token], g: &Grammar, start: &str) -> Chart {
    let n = tokens.len();
    let mut sets: Vec<Vec<Item>> = vec![Vec::new(); n + 1];
    let mut seen: Vec<HashSet<Item>> = vec![HashSet::new(); n + 1];
    let push = |sets: &mut Vec<Vec<Item>>, seen: &mut Vec<HashSet<Item>>, k: usize, it: Item| {
        if seen[k].insert(it) {
            sets[k].push(it);
        }
    };
    for (i, _) in g.productions_of(start) {
        push(&mut sets, &mut seen, 0, Item { prod: i, dot: 0, origin: 0 });
    }
    let mut complete = BTreeSet::new();
    let mut furthest = 0;
    for k in 0..=n {
        if !sets[k].is_empty() {
            furthest = k;
        }
        let mut idx = 0;
        while idx < sets[k].len() {
            let it = sets[k][idx];
            idx += 1;
            let prod = &g.productions[it.prod];
            match prod.rhs.get(it.dot) {
                None => {
                    complete.insert((prod.lhs.clone(), it.origin, k));
                    let waiting: Vec<Item> = sets[it.origin]
                        .iter()
                        .filter(|w| {
                            matches!(g.productions[w.prod].rhs.get(w.dot),
                                Some(Symbol::NonTerminal(nt)) if *nt == prod.lhs)
                        })
                        .copied()
                        .collect();
                    for w in waiting {
                        push(&mut sets, &mut seen, k, Item { dot: w.dot + 1, ..w });
                    }
                }
                Some(Symbol::NonTerminal(nt)) => {
                    for (i, _) in g.productions_of(nt) {
                        push(&mut sets, &mut seen, k, Item { prod: i, dot: 0, origin: k });
                    }
                }
                Some(sym) => {
                    if k < n && scans(g, sym, &tokens[k]) {
                        push(&mut sets, &mut seen, k + 1, Item { dot: it.dot + 1, ..it });
                    }
                }
            }
        }
    }
    Chart { complete, furthest }
}

struct Builder<'a> {
    g: &'a Grammar,
    tokens: &'a [Token],
    chart: &'a Chart,
    visiting: HashSet<(String, usize, usize)>,
}

impl Builder<'_> {
    fn derivable(&self, nt: &str, i: usize, j: usize) -> bool {
        self.chart.complete.contains(&(nt.to_string(), i, j))
    }

    fn build(&mut self, nt: &str, i: usize, j: usize) -> Option<ParseTree> {
        let key = (nt.to_string(), i, j);
        if !self.visiting.insert(key.clone()) {
            return None;
        }
        let prods: Vec<usize> = self.g.productions_of(nt).map(|(k, _)| k).collect();
        let mut result = None;
        for p in prods {
            let rhs = self.g.productions[p].rhs.clone();
            if rhs.len() > j - i {
                continue;
            }
            if let Some(children) = self.sequence(&rhs, i, j) {
                result = Some(ParseTree::Node {
                    symbol: nt.to_string(),
                    children,
                    span: (i, j),
                });
                break;
            }
        }
        self.visiting.remove(&key);
        result
    }

    fn sequence(&mut self, rhs: &[Symbol], i: usize, j: usize) -> Option<Vec<ParseTree>> {
        let Some((first, rest)) = rhs.split_first() else {
            return (i == j).then(Vec::new);
        };
        if i >= j || j - i < rhs.len() {
            return None;
        }
        match first {
            Symbol::NonTerminal(nt) => {
                let max_end = j - rest.len();
                for e in (i + 1)..=max_end {
                    if !self.derivable(nt, i, e) {
                        continue;
                    }
                    let Some(tail) = self.sequence(rest, e, j) else { continue };
                    if let Some(head) = self.build(nt, i, e) {
                        let mut out = vec![head];
                        out.extend(tail);
                        return Some(out);
                    }
                }
                None
            }
            sym => {
                if !scans(self.g, sym, &self.tokens[i]) {
                    return None;
                }
                let tail = self.sequence(rest, i + 1, j)?;
                let mut out = vec![ParseTree::Leaf {
                    index: i,
                    token: self.tokens[i].clone(),
                }];
                out.extend(tail);
                Some(out)
            }
        }
    }
}

/// Parses `tokens` from the start symbol of `class`. Ambiguities resolve to
/// the earliest-declared production, then to the shortest leading split.
pub fn parse(tokens: &[Token], g: &Grammar, class: UtteranceClass) -> Result<ParseTree, ParseError> {
    let fail = |pos: usize| ParseError {
        position: pos,
        token: tokens.get(pos).map(|t| t.norm.clone()),
    };
    if tokens.is_empty() {
        return Err(fail(0));
    }
    let start = g.start_symbol(class).ok_or_else(|| fail(0))?;
    let chart = recognize(tokens, g, start);
    let n = tokens.len();
    if !chart.complete.contains(&(start.to_string(), 0, n)) {
        return Err(fail(chart.furthest));
    }
    let mut b = Builder {
        g,
        tokens,
        chart: &chart,
        visiting: HashSet::new(),
    };
    b.build(start, 0, n).ok_or_else(|| fail(n))
}

/// Tries every utterance class in grammar order; the error reports the
/// furthest position any class reached.
pub fn parse_any(tokens: &[Token], g: &Grammar) -> Result<(UtteranceClass, ParseTree), ParseError> {
    let mut best: Option<ParseError> = None;
    for (class, _) in &g.starts {
        match parse(tokens, g, *class) {
            Ok(t) => return Ok((*class, t)),
            Err(e) => {
                if best.as_ref().is_none_or(|b| e.position > b.position) {
                    best = Some(e);
                }
            }
        }
    }
    Err(best.unwrap_or(ParseError {
        position: 0,
        token: tokens.first().map(|t| t.norm.clone()),
    }))
}
