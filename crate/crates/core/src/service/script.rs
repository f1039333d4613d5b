//! Scenario scripts: utterances interleaved with control and expectation lines.
//!
//! ```text
//! # comment
//! to cha-cha drive forward then drive backwards
//! rick: turn right
//! @wait 30
//! @place box 0.09 0
//! @expect-speech "I don't take orders from you"
//! @expect-fail
//! @expect-pose 0 0 0 1e-6
//! @expect-fcn base_turn
//! @expect-no-fcn base_grab
//! ```
//!
//! Expectations look at the events logged since the most recent utterance.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::{Reply, Session};
use crate::interp::{EventBody, Status};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("script line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Speech(String),
    Fail,
    Pose { x: f64, y: f64, heading: f64, tol: f64 },
    Fcn(String),
    NoFcn(String),
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Speech(s) => write!(f, "@expect-speech {s:?}"),
            Expectation::Fail => write!(f, "@expect-fail"),
            Expectation::Pose { x, y, heading, tol } => write!(f, "@expect-pose {x} {y} {heading} {tol}"),
            Expectation::Fcn(n) => write!(f, "@expect-fcn {n}"),
            Expectation::NoFcn(n) => write!(f, "@expect-no-fcn {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Say { speaker: Option<String>, text: String },
    Wait(u64),
    Place { name: String, x: f64, y: f64 },
    Expect(Expectation),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    /// Entries with their 1-based source line.
    pub entries: Vec<(usize, Entry)>,
}

impl FromStr for Script {
    type Err = ScriptError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |msg: &str| ScriptError {
                line,
                msg: msg.to_string(),
            };
            let entry = if let Some(ctl) = t.strip_prefix('@') {
                let (word, rest) = ctl.split_once(char::is_whitespace).unwrap_or((ctl, ""));
                let rest = rest.trim();
                let nums = |n: usize| -> Result<Vec<f64>, ScriptError> {
                    let v: Vec<f64> = rest
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| err("expected numbers"))?;
                    if v.len() != n {
                        return Err(err(&format!("expected {n} numbers")));
                    }
                    Ok(v)
                };
                match word {
                    "wait" => Entry::Wait(rest.parse().map_err(|_| err("expected a tick count"))?),
                    "place" => {
                        let (name, coords) = rest.split_once(char::is_whitespace).ok_or_else(|| err("expected name x y"))?;
                        let v = {
                            let v: Vec<f64> = coords
                                .split_whitespace()
                                .map(str::parse)
                                .collect::<Result<_, _>>()
                                .map_err(|_| err("expected numbers"))?;
                            if v.len() != 2 {
                                return Err(err("expected name x y"));
                            }
                            v
                        };
                        Entry::Place {
                            name: name.to_string(),
                            x: v[0],
                            y: v[1],
                        }
                    }
                    "expect-speech" => {
                        let s = rest
                            .strip_prefix('"')
                            .and_then(|r| r.strip_suffix('"'))
                            .ok_or_else(|| err("expected a quoted string"))?;
                        Entry::Expect(Expectation::Speech(s.to_string()))
                    }
                    "expect-fail" => Entry::Expect(Expectation::Fail),
                    "expect-pose" => {
                        let v = nums(4)?;
                        Entry::Expect(Expectation::Pose {
                            x: v[0],
                            y: v[1],
                            heading: v[2],
                            tol: v[3],
                        })
                    }
                    "expect-fcn" if !rest.is_empty() => Entry::Expect(Expectation::Fcn(rest.to_string())),
                    "expect-no-fcn" if !rest.is_empty() => Entry::Expect(Expectation::NoFcn(rest.to_string())),
                    _ => return Err(err(&format!("unknown control line `@{word}`"))),
                }
            } else {
                match t.split_once(':') {
                    Some((who, what)) if !who.trim().is_empty() && !who.trim().contains(' ') => Entry::Say {
                        speaker: Some(who.trim().to_string()),
                        text: what.trim().to_string(),
                    },
                    _ => Entry::Say {
                        speaker: None,
                        text: t.to_string(),
                    },
                }
            };
            entries.push((line, entry));
        }
        Ok(Script { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub line: usize,
    pub expectation: Expectation,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScriptReport {
    pub outcomes: Vec<Outcome>,
    pub replies: Vec<String>,
}

impl ScriptReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

impl fmt::Display for ScriptReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let mark = if o.passed { "pass" } else { "FAIL" };
            writeln!(f, "{mark} line {}: {} ({})", o.line, o.expectation, o.detail)?;
        }
        let n = self.outcomes.iter().filter(|o| o.passed).count();
        write!(f, "{n}/{} expectations passed", self.outcomes.len())
    }
}

/// Runs a script in order against a session.
pub fn run_script(session: &mut Session, script: &Script) -> ScriptReport {
    let mut report = ScriptReport::default();
    let mut window = session.engine().events().len();
    let mut last_reply: Option<Reply> = None;
    let default_speaker = session.speaker().to_string();
    for (line, entry) in &script.entries {
        match entry {
            Entry::Say { speaker, text } => {
                window = session.engine().events().len();
                session.set_speaker(speaker.as_deref().unwrap_or(&default_speaker));
                let turn = session.repl_turn(text);
                report.replies.push(turn.reply.text());
                last_reply = Some(turn.reply);
                session.set_speaker(&default_speaker);
            }
            Entry::Wait(n) => session.wait(*n),
            Entry::Place { name, x, y } => session.place(name, *x, *y),
            Entry::Expect(e) => {
                let (passed, detail) = check(session, window, last_reply.as_ref(), e);
                report.outcomes.push(Outcome {
                    line: *line,
                    expectation: e.clone(),
                    passed,
                    detail,
                });
            }
        }
    }
    report
}

fn check(session: &Session, window: usize, reply: Option<&Reply>, e: &Expectation) -> (bool, String) {
    let events = &session.engine().events()[window..];
    match e {
        Expectation::Speech(want) => {
            let said: Vec<&str> = events
                .iter()
                .filter_map(|ev| match &ev.body {
                    EventBody::Speech { text } => Some(text.as_str()),
                    _ => None,
                })
                .collect();
            (said.contains(&want.as_str()), format!("heard {said:?}"))
        }
        Expectation::Fail => {
            let failed = matches!(reply, Some(Reply::Finished(Status::Failed)));
            (failed, format!("reply {:?}", reply.map(Reply::text)))
        }
        Expectation::Pose { x, y, heading, tol } => {
            let r = session.engine().kernel().robot();
            let ok = (r.x - x).abs() <= *tol && (r.y - y).abs() <= *tol && (r.heading - heading).abs() <= *tol;
            (ok, format!("pose ({:.9}, {:.9}, {:.9})", r.x, r.y, r.heading))
        }
        Expectation::Fcn(name) | Expectation::NoFcn(name) => {
            let n = events
                .iter()
                .filter(|ev| matches!(&ev.body, EventBody::Fcn { name: got, .. } if got == name))
                .count();
            let want_some = matches!(e, Expectation::Fcn(_));
            (want_some == (n > 0), format!("{n} calls"))
        }
    }
}
