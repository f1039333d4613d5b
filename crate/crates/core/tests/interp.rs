//! Interpreter behaviour on hand-built chains and small knowledge bases.

mod common;

use alia::interp::{EventBody, Status};
use alia::service::Session;
use common::*;
use proptest::prelude::*;

fn person_chk(s: &mut Session, kind: Kind) -> Status {
    let mut b = ChainBuilder::default();
    let k = b.node(Some("person"));
    let mary = b.entity("Mary");
    b.edge(k, "ako", mary);
    b.play(vec![(kind, vec![k, mary])], vec![]);
    let f = s.engine_mut().post(&b.chain, "test");
    s.engine_mut().run_until(f, 200).expect("query settles")
}

#[test]
fn chk_sees_derived_facts() {
    let mut s = Session::standard(1);
    assert_eq!(person_chk(&mut s, Kind::Chk), Status::Failed);
    teach(&mut s, &["if something is a girl it is a person", "Mary is a girl"]);
    assert_eq!(person_chk(&mut s, Kind::Chk), Status::Done);
    assert_eq!(person_chk(&mut s, Kind::Find), Status::Done);
    assert!(s
        .engine()
        .events()
        .iter()
        .any(|e| matches!(e.body, EventBody::Found { .. })));
}

#[test]
fn find_in_empty_memory_fails() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    let k = b.node(Some("unicorn"));
    b.play(vec![(Kind::Find, vec![k])], vec![]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 200), Some(Status::Failed));
}

#[test]
fn ach_that_already_holds_does_nothing() {
    let mut s = Session::standard(1);
    teach(&mut s, &["if something is a girl it is a person", "Mary is a girl"]);
    let before = s.engine().events().len();
    assert_eq!(person_chk(&mut s, Kind::Ach), Status::Done);
    let new = &s.engine().events()[before..];
    assert!(!new.iter().any(|e| matches!(e.body, EventBody::Phase { .. })));
}

#[test]
fn ach_without_means_fails() {
    let mut s = Session::standard(1);
    assert_eq!(person_chk(&mut s, Kind::Ach), Status::Failed);
}

#[test]
fn note_without_operators_is_done() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    let k = b.node(Some("weather"));
    b.play(vec![(Kind::Note, vec![k])], vec![]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 50), Some(Status::Done));
}

#[test]
fn failed_expansion_backtracks_to_the_next() {
    let kb = "op\ntrig: DO act-1\n  act-1 -lex- wiggle\npref: 1\nbody: act-1 fcn-2\n  fcn-2 -lex- base_drive\n  fcn-2 -arg-> act-1\nplay: FCN fcn-2\nend\n\nop\ntrig: DO act-1\n  act-1 -lex- wiggle\npref: 1\nbody: act-1 act-2 txt-3\n  act-2 -lex- say\n  act-2 -obj-> txt-3\n  txt-3 -str- wiggled\nplay: DO act-2 txt-3\nend\n";
    let mut saw_backtrack = false;
    for seed in 0..12 {
        let mut s = session_with(kb, seed);
        let f = s.engine_mut().post(&command("wiggle"), "test");
        assert_eq!(s.engine_mut().run_until(f, 300), Some(Status::Done), "seed {seed}");
        let ev = s.engine().events();
        let tried: Vec<_> = ev
            .iter()
            .filter_map(|e| match e.body {
                EventBody::Invoke { op, phase: Kind::Do } if e.kind == Some(Kind::Do) => Some(op),
                _ => None,
            })
            .collect();
        saw_backtrack |= tried.len() > 2;
        assert_eq!(speech(ev), ["wiggled"]);
    }
    assert!(saw_backtrack, "some seed should pick the failing expansion first");
}

#[test]
fn auxiliary_is_cut_short_when_the_play_ends() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    let quick = b.drive("forward");
    let chatter = b.say("a rather long sentence that takes many ticks to say out loud");
    b.play(vec![(Kind::Do, quick)], vec![(Kind::Do, chatter)]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 200), Some(Status::Done));
    let ev = s.engine().events();
    assert!(ev.iter().any(|e| matches!(e.body, EventBody::Truncated { .. })));
    assert!(s.engine().live_directives().is_empty());
}

#[test]
fn failed_auxiliary_does_not_fail_the_play() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    let talk = b.say("hi");
    let bad = b.drive("sideways");
    b.play(vec![(Kind::Do, talk)], vec![(Kind::Do, bad)]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 200), Some(Status::Done));
}

#[test]
fn punt_fails_its_chain() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    b.play(vec![(Kind::Punt, vec![])], vec![]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 20), Some(Status::Failed));
}

#[test]
fn keep_restarts_until_stopped() {
    let mut s = Session::standard(1);
    let mut b = ChainBuilder::default();
    let talk = b.say("hum");
    b.play(vec![(Kind::Keep, talk)], vec![]);
    let f = s.engine_mut().post(&b.chain, "test");
    assert_eq!(s.engine_mut().run_until(f, 60), None);
    let hums = speech(s.engine().events()).iter().filter(|t| *t == "hum").count();
    assert!(hums >= 5, "{hums}");
}

#[test]
fn younger_focus_wins_the_wheels() {
    let mut s = Session::standard(1);
    let f1 = s.engine_mut().post(&command_drive("forward"), "test");
    s.engine_mut().step();
    s.engine_mut().step();
    let f2 = s.engine_mut().post(&command_drive("backwards"), "test");
    assert_eq!(s.engine_mut().run_until(f2, 200), Some(Status::Done));
    assert_eq!(s.engine_mut().run_until(f1, 200), Some(Status::Failed));
}

fn command_drive(dir: &str) -> alia::policy::Chain {
    let mut b = ChainBuilder::default();
    let d = b.drive(dir);
    b.play(vec![(Kind::Do, d)], vec![]);
    b.chain
}

#[test]
fn nothing_runs_after_a_focus_ends() {
    let mut s = Session::standard(3);
    teach(&mut s, &DANCE);
    let t = s.repl_turn("please dance");
    assert_eq!(t.reply, alia::service::Reply::Finished(Status::Done));
    let f = t.focus.unwrap();
    assert!(s.engine().live_directives().iter().all(|d| d.2 != f));
    let n = s.engine().events().len();
    s.wait(40);
    assert!(s.engine().events()[n..].iter().all(|e| e.focus != Some(f)));
}

#[test]
fn idle_step_logs_nothing() {
    let mut s = Session::standard(1);
    let n = s.engine().events().len();
    for _ in 0..5 {
        s.engine_mut().step();
    }
    assert_eq!(s.engine().events().len(), n);
}

#[test]
fn same_seed_same_log() {
    let run = |seed| {
        let mut s = session_with(&random_kb(seed), seed);
        let f = s.engine_mut().post(&command("alpha"), "test");
        s.engine_mut().run_until(f, 2000);
        s.engine().log_jsonl()
    };
    for seed in 0..8 {
        assert_eq!(run(seed), run(seed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn post_candidates_run_exactly_once(seed in any::<u64>(), verb in 0usize..3) {
        let mut s = session_with(&random_kb(seed), seed);
        let f = s.engine_mut().post(&command(VERBS[verb]), "test");
        let status = s.engine_mut().run_until(f, 3000);
        prop_assert!(status.is_some(), "focus did not settle");
        let checked = post_totality(s.engine().events()).map_err(TestCaseError::fail)?;
        prop_assert!(checked >= 1);
    }
}
