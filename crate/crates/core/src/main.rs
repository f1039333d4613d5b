use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use alia::interp::EventBody;
use alia::kernel::World;
use alia::lang::{Grammar, Kb};
use alia::service::server::{self, ServerConfig};
use alia::service::{run_script, Script, Session, SessionConfig};

/// Teach and steer a simulated forklift in constrained English.
#[derive(Debug, Parser)]
#[command(name = "alia", version)]
struct Cli {
    /// Grammar file (defaults to the built-in grammar).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Knowledge base to start from (defaults to the built-in grounding KB).
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Arena description in TOML (defaults to the stock arena).
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Speaker name for typed utterances.
    #[arg(long, default_value = "user")]
    user: String,
    /// Run a scenario script and exit with its verdict.
    #[arg(long, conflicts_with = "serve")]
    script: Option<PathBuf>,
    /// Serve the UI wire protocol on this port.
    #[arg(long)]
    serve: Option<u16>,
    /// Simulated ticks per second.
    #[arg(long, default_value_t = 30.0)]
    tick_hz: f64,
    /// Write the event log (JSON lines) here on exit.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn session(cli: &Cli) -> Result<Session> {
    let mut cfg = SessionConfig::standard(cli.seed);
    if let Some(p) = &cli.grammar {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.grammar = text.parse::<Grammar>().with_context(|| format!("grammar {}", p.display()))?;
    }
    if let Some(p) = &cli.kb {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.kb = text.parse::<Kb>().map_err(|e| anyhow::anyhow!("{}:{}: {}", p.display(), e.line, e.msg))?;
    }
    if let Some(p) = &cli.world {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.world = World::from_toml(&text).with_context(|| format!("world {}", p.display()))?;
    }
    if !cli.tick_hz.is_finite() || cli.tick_hz <= 0.0 {
        bail!("--tick-hz must be positive and finite");
    }
    cfg.engine.kernel.tick_hz = cli.tick_hz;
    cfg.speaker = cli.user.clone();
    Ok(Session::new(cfg)?)
}

fn write_log(cli: &Cli, s: &Session) -> Result<()> {
    if let Some(p) = &cli.log {
        fs::write(p, s.engine().log_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn repl(cli: &Cli, mut s: Session) -> Result<()> {
    let stdin = io::stdin();
    let mut out = io::stdout();
    writeln!(out, "alia: type an utterance, or :help")?;
    for line in stdin.lock().lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(cmd) = t.strip_prefix(':') {
            let mut words = cmd.split_whitespace();
            match (words.next(), words.next()) {
                (Some("quit" | "q"), _) => break,
                (Some("help"), _) => writeln!(
                    out,
                    ":wait N   let N ticks pass\n:pose     robot state\n:kb       taught knowledge\n:mem      memory dump\n:save F   write the KB to F\n:as NAME  change speaker\n:quit"
                )?,
                (Some("wait"), Some(n)) => s.wait(n.parse().context("tick count")?),
                (Some("pose"), _) => writeln!(out, "{}", serde_json::to_string(&s.snapshot())?)?,
                (Some("kb"), _) => write!(out, "{}", s.kb())?,
                (Some("mem"), _) => write!(out, "{}", s.engine().memory().dump_lines())?,
                (Some("save"), Some(p)) => fs::write(p, s.kb().to_string())?,
                (Some("as"), Some(name)) => s.set_speaker(name),
                _ => writeln!(out, "unknown command; try :help")?,
            }
            continue;
        }
        let turn = s.repl_turn(t);
        for e in &turn.events {
            match &e.body {
                EventBody::Speech { text } => writeln!(out, "robot says: {text}")?,
                EventBody::Fcn { name, args, .. } => writeln!(out, "  [{}] {name} {}", e.tick, args.join(" "))?,
                _ => {}
            }
        }
        writeln!(out, "{}", turn.reply.text())?;
    }
    write_log(cli, &s)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let mut s = session(&cli)?;
    if let Some(p) = &cli.script {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let script: Script = text.parse()?;
        let report = run_script(&mut s, &script);
        println!("{report}");
        write_log(&cli, &s)?;
        return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }
    if let Some(port) = cli.serve {
        let handle = server::spawn(s, ("127.0.0.1", port), ServerConfig { tick_hz: cli.tick_hz })?;
        eprintln!("alia: serving on {}", handle.addr);
        handle.wait();
        return Ok(ExitCode::SUCCESS);
    }
    repl(&cli, s)?;
    Ok(ExitCode::SUCCESS)
}
