//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the verdict lines always print.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use alia::batch;
use alia::interp::{Event, EventBody, Status};
use alia::kernel::KernelConfig;
use alia::rules::Rule;
use alia::semnet::{Level, NodeSource, Pattern, PatternEdge, PatternNode, PatternTarget, Template, TemplateNode};
use alia::service::{run_script, Reply, Session, SessionConfig, DEFAULT_KB};
use common::*;

type Verdict = Result<String, String>;

fn ensure(ok: bool, why: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why.into())
    }
}

/// Independent unicycle integrator (RK4, fine substeps) used as the
/// kinematics oracle for straight segments and arcs.
fn integrate(mut s: [f64; 3], segments: &[(f64, f64, f64)]) -> [f64; 3] {
    for &(v, w, t) in segments {
        let steps = 20_000;
        let h = t / steps as f64;
        let f = |s: [f64; 3]| [v * s[2].cos(), v * s[2].sin(), w];
        for _ in 0..steps {
            let at = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
            let k1 = f(s);
            let k2 = f(at(s, k1, h / 2.0));
            let k3 = f(at(s, k2, h / 2.0));
            let k4 = f(at(s, k3, h));
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    s
}

fn pose(s: &Session) -> [f64; 3] {
    let r = s.engine().kernel().robot();
    [r.x, r.y, r.heading]
}

fn as_speaker(s: &mut Session, who: &str, line: &str) -> alia::service::Turn {
    say_as(s, who, line)
}

fn motion_calls(events: &[Event]) -> Vec<(String, Vec<String>)> {
    fcn_calls(events)
        .into_iter()
        .filter(|(n, _)| n == "base_drive" || n == "base_turn")
        .collect()
}

// 1 ----------------------------------------------------------------------

fn dance() -> Verdict {
    let mut s = Session::standard(1);
    teach(&mut s, &DANCE);
    let start = pose(&s);
    let t = s.repl_turn("please dance");
    ensure(t.reply == Reply::Finished(Status::Done), format!("reply {:?}", t.reply))?;
    let calls = motion_calls(&t.events);
    let want: Vec<(String, Vec<String>)> = [
        ("base_drive", "forward"),
        ("base_drive", "backwards"),
        ("base_turn", "left"),
        ("base_turn", "right"),
    ]
    .iter()
    .map(|(n, a)| (n.to_string(), vec![a.to_string()]))
    .collect();
    ensure(calls == want, format!("grounding calls {calls:?}"))?;
    let c = KernelConfig::default();
    let (t_drive, t_turn) = (c.drive_ticks as f64 / c.tick_hz, c.turn_ticks as f64 / c.tick_hz);
    let w = c.turn_angle / t_turn;
    let oracle = integrate(
        start,
        &[(c.v_nom, 0.0, t_drive), (-c.v_nom, 0.0, t_drive), (0.0, w, t_turn), (0.0, -w, t_turn)],
    );
    let end = pose(&s);
    let dx = (end[0] - oracle[0]).abs();
    let dh = (end[2] - start[2]).abs();
    ensure(dh <= 1e-6, format!("heading drift {dh:e}"))?;
    ensure(dx <= 1e-6, format!("x off oracle by {dx:e}"))?;
    Ok(format!("4 calls in order, |dx| {dx:.1e} m, |dheading| {dh:.1e} rad"))
}

// 2 ----------------------------------------------------------------------

/// Places the box so the rangefinder reads `range` and runs two ticks.
fn react_at(range: f64) -> Vec<Event> {
    let mut s = Session::standard(1);
    teach(&mut s, &["if something is very close then drive backwards"]);
    let c = s.engine().kernel().config().robot_radius;
    s.place("box", c + range + 0.03, 0.0);
    let n = s.engine().events().len();
    s.wait(2);
    s.engine().events()[n..].to_vec()
}

fn reaction() -> Verdict {
    let near = react_at(0.04);
    let noted = near
        .iter()
        .any(|e| matches!(&e.body, EventBody::Posted { origin } if origin == "sensor"));
    ensure(noted, "no sensor NOTE within 2 ticks")?;
    let backed = fcn_calls(&near)
        .iter()
        .any(|(n, a)| n == "base_drive" && a.iter().any(|x| x.starts_with("back")));
    ensure(backed, format!("no backward drive within 2 ticks: {:?}", fcn_calls(&near)))?;
    let utterances = near.iter().filter(|e| matches!(e.body, EventBody::Utterance { .. })).count();
    ensure(utterances == 0, "a user command was involved")?;
    let far = react_at(0.30);
    let posted = far.iter().filter(|e| matches!(e.body, EventBody::Posted { .. })).count();
    ensure(posted == 0, "NOTE posted at 0.30 m")?;
    ensure(fcn_calls(&far).is_empty(), "motion at 0.30 m")?;
    Ok("NOTE and backward drive within 2 ticks at 0.04 m; nothing at 0.30 m".into())
}

// 3 ----------------------------------------------------------------------

fn prohibition() -> Verdict {
    let mut s = Session::standard(1);
    teach(&mut s, &PROHIBITION);
    teach(&mut s, &["Mary is a girl"]);
    let t = s.repl_turn("grab Mary");
    // the stock acknowledgement "okay" is not part of the refusal
    let said: Vec<String> = speech(&t.events).into_iter().filter(|x| x != "okay").collect();
    ensure(said == ["I'm not allowed to"], format!("speech {said:?}"))?;
    ensure(t.reply == Reply::Finished(Status::Failed), format!("reply {:?}", t.reply))?;
    let gripper = actuations(&t.events, "gripper");
    ensure(gripper == 0, format!("{gripper} gripper events"))?;

    let mut c = Session::standard(1);
    teach(&mut c, &PROHIBITION);
    let t = c.repl_turn("grab Mary");
    let grabbed = fcn_calls(&t.events).iter().any(|(n, _)| n == "base_grab");
    ensure(grabbed && actuations(&t.events, "gripper") > 0, "control: grab did not proceed")?;
    Ok(format!(
        "refused with speech, FAILED, 0 gripper events; control grab ran ({})",
        t.reply.text()
    ))
}

// 4 ----------------------------------------------------------------------

fn permission() -> Verdict {
    let mut s = Session::standard(1);
    teach(&mut s, &PERMISSION);
    let t = as_speaker(&mut s, "Rick", "turn right");
    let said = speech(&t.events);
    ensure(said.iter().any(|x| x == "I don't take orders from you"), format!("speech {said:?}"))?;
    let wheels = actuations(&t.events, "wheels");
    ensure(wheels == 0, format!("{wheels} wheel events for Rick"))?;
    let before = pose(&s)[2];
    let t = as_speaker(&mut s, "Ann", "turn right");
    ensure(t.reply == Reply::Finished(Status::Done), format!("Ann: {:?}", t.reply))?;
    let dh = pose(&s)[2] - before;
    ensure((dh + FRAC_PI_2).abs() <= 1e-6, format!("Ann heading change {dh}"))?;

    let seeds: Vec<u64> = (0..1000).collect();
    let picks = batch::run_seeds(&seeds, |seed| {
        let mut s = Session::standard(seed);
        teach(
            &mut s,
            &[PERMISSION[0], "to complain say I don't take orders from you", "to complain say ask someone else"],
        );
        let said = speech(&say_as(&mut s, "Rick", "turn right").events);
        (
            said.iter().any(|x| x == "I don't take orders from you"),
            said.iter().any(|x| x == "ask someone else"),
        )
    });
    let a = picks.iter().filter(|p| p.0 && !p.1).count();
    let b = picks.iter().filter(|p| p.1 && !p.0).count();
    ensure(a + b == 1000, format!("{} runs chose neither or both", 1000 - a - b))?;
    ensure(a.abs_diff(500) <= 60 && b.abs_diff(500) <= 60, format!("split {a}/{b}"))?;
    Ok(format!("Rick refused, Ann turned {dh:.9} rad; 1000 seeds split {a}/{b}"))
}

// 5 ----------------------------------------------------------------------

fn alias_session() -> Session {
    // the turn grounding operator answers only to "rotate" here, so the
    // command can reach it only through the taught alias
    let mut cfg = SessionConfig::standard(1);
    cfg.kb = DEFAULT_KB
        .replace("act-1 -lex- turn", "act-1 -lex- rotate")
        .parse()
        .expect("variant kb parses");
    Session::new(cfg).expect("session")
}

fn alias() -> Verdict {
    let mut control = alias_session();
    teach(&mut control, &["widdershins means counterclockwise"]);
    let t = control.repl_turn("turn widdershins");
    ensure(motion_calls(&t.events).is_empty(), "turn grounded without the alias")?;

    let mut s = alias_session();
    teach(&mut s, &["turn means rotate", "widdershins means counterclockwise"]);
    let before = pose(&s)[2];
    let t = s.repl_turn("turn widdershins");
    ensure(t.reply == Reply::Finished(Status::Done), format!("reply {:?}", t.reply))?;
    let dh = pose(&s)[2] - before;
    ensure(dh > 0.0, format!("heading change {dh}"))?;
    Ok(format!("heading change {dh:.9} rad; without the alias nothing moves"))
}

// 6 ----------------------------------------------------------------------

fn arc() -> Verdict {
    let mut s = Session::standard(1);
    let start = pose(&s);
    let t = s.repl_turn("drive forward and turn right");
    ensure(t.reply == Reply::Finished(Status::Done), format!("reply {:?}", t.reply))?;
    // active interval of each grounding call: dispatch tick to its "done"
    let span = |name: &str| -> Option<(u64, u64)> {
        let start = t
            .events
            .iter()
            .find(|e| matches!(&e.body, EventBody::Fcn { name: n, .. } if n == name))?;
        let end = t.events.iter().find(|e| {
            e.directive == start.directive && matches!(&e.body, EventBody::Actuate { action, .. } if action == "done")
        })?;
        Some((start.tick, end.tick))
    };
    let (d, w) = (span("base_drive"), span("base_turn"));
    let (Some(d), Some(w)) = (d, w) else {
        return Err(format!("missing call spans {d:?} {w:?}"));
    };
    ensure(d.0 <= w.1 && w.0 <= d.1, format!("no overlap: drive {d:?}, turn {w:?}"))?;
    let c = KernelConfig::default();
    let omega = c.turn_angle * c.tick_hz / c.turn_ticks as f64;
    let r = c.v_nom / omega;
    let th = omega * c.turn_ticks as f64 / c.tick_hz;
    let (x, y) = (start[0] + r * th.sin(), start[1] - r * (1.0 - th.cos()));
    let end = pose(&s);
    let err = (end[0] - x).hypot(end[1] - y);
    ensure(err <= 1e-6, format!("endpoint off closed form by {err:e} m"))?;
    Ok(format!("drive {d:?} and turn {w:?} overlap; endpoint error {err:.1e} m"))
}

// 7 ----------------------------------------------------------------------

fn totality() -> Verdict {
    let seeds: Vec<u64> = (0..300).collect();
    let results = batch::run_seeds(&seeds, |seed| {
        let mut s = session_with(&random_kb(seed), seed);
        let f = s.engine_mut().post(&command(VERBS[(seed % 3) as usize]), "test");
        match s.engine_mut().run_until(f, 3000) {
            None => Err(format!("seed {seed}: focus did not settle")),
            Some(_) => post_totality(s.engine().events()).map_err(|e| format!("seed {seed}: {e}")),
        }
    });
    let mut dos = 0;
    for r in results {
        dos += r?;
    }
    Ok(format!("300 random KBs, {dos} finished DOs, every POST candidate ran once"))
}

// 8 ----------------------------------------------------------------------

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
                role: "ako".into(),
                to: PatternTarget::Node(1),
            }],
        },
        conf: 1.0,
    }
}

fn halo_bound() -> Verdict {
    let mut s = Session::standard(1);
    let passes = s.engine().config().halo_passes;
    s.engine_mut().add_rule(successor_rule()).map_err(|e| e.to_string())?;
    s.engine_mut()
        .memory_mut()
        .add_node(Some("number"), 1.0, Level::Working)
        .map_err(|e| e.to_string())?;
    s.wait(3);
    let derived = s
        .engine()
        .memory()
        .nodes()
        .filter(|n| n.level == Level::Halo && n.lex == ["number"])
        .count();
    ensure(derived == passes, format!("{derived} derived facts, expected {passes}"))?;
    ensure(s.engine_mut().run_idle(10), "engine did not go idle")?;
    Ok(format!("{derived} derived facts with {passes} passes; engine idle"))
}

// 9 ----------------------------------------------------------------------

fn matcher() -> Verdict {
    let seeds: Vec<u64> = (0..500).collect();
    let results = batch::run_seeds(&seeds, |seed| {
        let inst = random_instance(seed);
        let opts = alia::semnet::MatchOptions {
            levels: inst.levels,
            belief_min: inst.belief_min,
            anchor: inst.anchor,
            allow: Some(&inst.allow),
        };
        let mut got = inst.mem.match_pattern(&inst.pattern, &opts);
        got.sort();
        let want = brute_force(&inst);
        (got == want, !want.is_empty())
    });
    let agree = results.iter().filter(|r| r.0).count();
    let nonempty = results.iter().filter(|r| r.1).count();
    ensure(agree == 500, format!("{agree}/500 agree"))?;
    Ok(format!("500/500 agree ({nonempty} with at least one match)"))
}

// 10 ---------------------------------------------------------------------

fn suite_logs(parallel: bool) -> Result<(Vec<String>, usize), String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "script"))
        .collect();
    paths.sort();
    let run = |p: &std::path::PathBuf| {
        let text = fs::read_to_string(p).expect("script readable");
        let script = text.parse().expect("script parses");
        let mut s = Session::standard(1);
        let report = run_script(&mut s, &script);
        (s.engine().log_jsonl(), report.passed())
    };
    let out = if parallel {
        batch::map(&paths, run)
    } else {
        batch::map_sequential(&paths, run)
    };
    let passed = out.iter().filter(|o| o.1).count();
    Ok((out.into_iter().map(|o| o.0).collect(), passed))
}

fn determinism() -> Verdict {
    let (a, passed) = suite_logs(true)?;
    let (b, _) = suite_logs(false)?;
    ensure(!a.is_empty(), "no scenarios found")?;
    ensure(a == b, "event logs differ between runs")?;
    let bytes: usize = a.iter().map(String::len).sum();
    Ok(format!(
        "{} scenarios, {bytes} log bytes identical across two runs ({passed} scripts pass)",
        a.len()
    ))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("dance", dance),
        ("reaction", reaction),
        ("prohibition", prohibition),
        ("permission", permission),
        ("alias", alias),
        ("arc", arc),
        ("ante-do-post totality", totality),
        ("halo boundedness", halo_bound),
        ("matcher oracle", matcher),
        ("determinism", determinism),
    ];
    let t0 = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_millis();
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{ms} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{ms} ms]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.2} s (batch {})",
        criteria.len() - failed,
        criteria.len(),
        t0.elapsed().as_secs_f64(),
        if batch::is_parallel() { "parallel" } else { "sequential" }
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
