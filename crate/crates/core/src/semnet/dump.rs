use serde::{Deserialize, Serialize};

use super::{Level, Memory, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub role: String,
    pub to: String,
}

/// One line of the memory dump stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    pub lex: Vec<String>,
    pub belief: f64,
    pub level: Level,
    pub active: bool,
    pub edges: Vec<EdgeRecord>,
}

pub(super) fn dump(mem: &Memory) -> Vec<NodeRecord> {
    mem.nodes()
        .map(|n| NodeRecord {
            id: n.id.0,
            lex: n.tags(true).into_iter().map(str::to_string).collect(),
            belief: n.belief,
            level: n.level,
            active: n.active,
            edges: n
                .edges(true)
                .map(|e| EdgeRecord {
                    role: e.role.clone(),
                    to: match &e.to {
                        Target::Node(id) => id.to_string(),
                        Target::Str(s) => format!("\"{s}\""),
                    },
                })
                .collect(),
        })
        .collect()
}

pub(super) fn dump_lines(mem: &Memory) -> String {
    let mut out = String::new();
    for rec in dump(mem) {
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}
