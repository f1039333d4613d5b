//! User-facing surface: sessions, scripts and the wire-protocol server.

pub mod protocol;
pub mod script;
pub mod server;

use thiserror::Error;

use crate::interp::{Engine, EngineConfig, Event, EventBody, FocusId, Status};
use crate::kernel::{Snapshot, World, WorldError};
use crate::lang::{understand, Compiled, Grammar, GrammarError, Kb, KbError, UnderstandError};
use crate::semnet::RoleSet;

pub use script::{run_script, Expectation, Outcome, Script, ScriptError, ScriptReport};

pub const DEFAULT_KB: &str = include_str!("../../assets/default.kb");
pub const DEFAULT_WORLD: &str = include_str!("../../assets/arena.toml");

/// Ticks a REPL turn may run before control returns.
pub const TURN_BUDGET: u64 = 600;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("kb line {}: {}", .0.line, .0.msg)]
    Kb(#[from] KbError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("rejected knowledge: {0}")]
    Teach(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a turn ended, from the user's point of view.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    /// Knowledge was taught or a fact accepted.
    Okay,
    NotUnderstood(String),
    Finished(Status),
    StillWorking,
}

impl Reply {
    pub fn text(&self) -> String {
        match self {
            Reply::Okay => "okay".into(),
            Reply::NotUnderstood(why) => format!("I don't understand: {why}"),
            Reply::Finished(Status::Done) => "done".into(),
            Reply::Finished(_) => "I couldn't do that".into(),
            Reply::StillWorking => "still working".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub reply: Reply,
    pub focus: Option<FocusId>,
    /// Events logged during the turn, reply included.
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub grammar: Grammar,
    pub kb: Kb,
    pub world: World,
    pub engine: EngineConfig,
    pub seed: u64,
    pub speaker: String,
    pub turn_budget: u64,
}

impl SessionConfig {
    /// Default grammar, default KB and the stock arena.
    pub fn standard(seed: u64) -> SessionConfig {
        SessionConfig {
            grammar: Grammar::default_grammar(),
            kb: DEFAULT_KB.parse().expect("default kb parses"),
            world: World::from_toml(DEFAULT_WORLD).expect("default world loads"),
            engine: EngineConfig::default(),
            seed,
            speaker: "user".into(),
            turn_budget: TURN_BUDGET,
        }
    }
}

/// One engine plus the conversation around it.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    engine: Engine,
    speaker: String,
    transcript: Vec<(String, String)>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Session, ServiceError> {
        let engine = build_engine(&cfg)?;
        Ok(Session {
            speaker: cfg.speaker.clone(),
            engine,
            transcript: Vec::new(),
            cfg,
        })
    }

    pub fn standard(seed: u64) -> Session {
        Session::new(SessionConfig::standard(seed)).expect("stock session builds")
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn grammar(&self) -> &Grammar {
        &self.cfg.grammar
    }

    pub fn speaker(&self) -> &str {
        &self.speaker
    }

    pub fn set_speaker(&mut self, name: &str) {
        self.speaker = name.to_string();
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    /// (speaker, utterance) pairs in order.
    pub fn transcript(&self) -> &[(String, String)] {
        &self.transcript
    }

    /// Fresh engine with the same configuration; taught knowledge is lost.
    pub fn reset(&mut self) -> Result<(), ServiceError> {
        self.engine = build_engine(&self.cfg)?;
        self.transcript.clear();
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) -> Result<(), ServiceError> {
        self.cfg.seed = seed;
        self.reset()
    }

    pub fn snapshot(&self) -> Snapshot {
        self.engine.kernel().snapshot(self.engine.now())
    }

    /// Everything taught so far, in KB text order.
    pub fn kb(&self) -> Kb {
        Kb {
            rules: self.engine.rules().to_vec(),
            ops: self.engine.policy().ops().to_vec(),
        }
    }

    pub fn load_kb(&mut self, kb: &Kb) -> Result<(), ServiceError> {
        install(&mut self.engine, kb)
    }

    /// Understands a line and hands it to the engine without running it.
    pub fn submit(&mut self, line: &str) -> (Option<Reply>, Option<FocusId>) {
        let speaker = self.speaker.clone();
        self.transcript.push((speaker.clone(), line.to_string()));
        self.engine.record(
            None,
            EventBody::Utterance {
                speaker: speaker.clone(),
                text: line.to_string(),
            },
        );
        let understood = match understand(line, &self.cfg.grammar, &speaker) {
            Ok(u) => u,
            Err(UnderstandError::Parse(e)) => {
                let why = match e.token {
                    Some(t) => format!("word {} (`{t}`)", e.position + 1),
                    None => "the sentence ended too early".into(),
                };
                return (Some(Reply::NotUnderstood(why)), None);
            }
            Err(UnderstandError::Compile(e)) => return (Some(Reply::NotUnderstood(e.to_string())), None),
        };
        match understood.compiled {
            Compiled::Rule(r) => match self.engine.add_rule(r) {
                Ok(()) => (Some(Reply::Okay), None),
                Err(e) => (Some(Reply::NotUnderstood(e.to_string())), None),
            },
            Compiled::Operator(o) => match self.engine.add_operator(o) {
                Ok(_) => (Some(Reply::Okay), None),
                Err(e) => (Some(Reply::NotUnderstood(e)), None),
            },
            Compiled::Fact(c) => {
                let f = self.engine.post(&c, &speaker);
                (Some(Reply::Okay), Some(f))
            }
            Compiled::Command(c) => (None, Some(self.engine.post(&c, &speaker))),
        }
    }

    /// One REPL exchange: understand, post, then tick until the focus
    /// settles or the budget runs out.
    pub fn repl_turn(&mut self, line: &str) -> Turn {
        let start = self.engine.events().len();
        let (reply, focus) = self.submit(line);
        let reply = match (reply, focus) {
            (Some(r), Some(f)) => {
                // facts settle quickly; their reply does not wait on them
                self.engine.run_until(f, self.cfg.turn_budget);
                r
            }
            (Some(r), None) => r,
            (None, Some(f)) => match self.engine.run_until(f, self.cfg.turn_budget) {
                Some(s) => Reply::Finished(s),
                None => Reply::StillWorking,
            },
            (None, None) => Reply::StillWorking,
        };
        self.engine.record(focus, EventBody::Reply { text: reply.text() });
        Turn {
            reply,
            focus,
            events: self.engine.events()[start..].to_vec(),
        }
    }

    /// Lets simulated time pass.
    pub fn wait(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.engine.step();
        }
    }

    pub fn place(&mut self, name: &str, x: f64, y: f64) {
        self.engine.kernel_mut().place(name, x, y);
    }
}

fn build_engine(cfg: &SessionConfig) -> Result<Engine, ServiceError> {
    let mut roles = RoleSet::default();
    for r in &cfg.grammar.roles {
        roles.declare(r);
    }
    let mut engine = Engine::new(roles, cfg.engine, cfg.world.clone(), cfg.seed);
    install(&mut engine, &cfg.kb)?;
    Ok(engine)
}

fn install(engine: &mut Engine, kb: &Kb) -> Result<(), ServiceError> {
    for r in &kb.rules {
        engine.add_rule(r.clone()).map_err(|e| ServiceError::Teach(e.to_string()))?;
    }
    for o in &kb.ops {
        engine.add_operator(o.clone()).map_err(ServiceError::Teach)?;
    }
    Ok(())
}
