use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use proxyhand_core::config::EngineConfig;
use proxyhand_core::controller::{AuditKind, FeedbackEvent, Label, Status};
use proxyhand_core::engine::Engine;
use proxyhand_core::gesture::{GestureLibrary, SynthConfig};
use proxyhand_core::interpreter::Backend;
use proxyhand_core::scene::{Affordance, Scene};
use proxyhand_core::skeleton::JointId;

const DT: f64 = 1.0 / 60.0;

fn scene(name: &str) -> Scene {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("fixtures/scenes/{name}.json"));
    Scene::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn engine_with(name: &str, cfg: EngineConfig) -> Engine {
    let lib = Arc::new(GestureLibrary::builtin(&SynthConfig::default()));
    Engine::new(cfg, lib, scene(name), Backend::Grammar)
}

fn engine(name: &str) -> Engine {
    engine_with(name, EngineConfig::default())
}

/// Ticks until nothing is left to play; returns the tick count.
fn settle(e: &mut Engine) -> usize {
    let mut n = 0;
    while !e.controller().is_settled() || e.controller().is_busy() && e.controller().playback().status == Status::Playing
    {
        e.tick(DT);
        n += 1;
        assert!(n < 20_000, "did not settle");
    }
    n
}

fn completed(e: &Engine) -> Vec<u64> {
    e.controller()
        .audit()
        .iter()
        .filter(|a| a.kind == AuditKind::Completed)
        .map(|a| a.seq)
        .collect()
}

fn knob_angle(e: &Engine) -> f64 {
    match e.controller().scene().get("brightness_knob").unwrap().affordance {
        Affordance::Knob { angle, .. } => angle,
        _ => unreachable!(),
    }
}

fn slider_value(e: &Engine) -> f64 {
    match e.controller().scene().get("volume_slider").unwrap().affordance {
        Affordance::Slider { value, .. } => value,
        _ => unreachable!(),
    }
}

fn errors(fb: &[FeedbackEvent]) -> usize {
    fb.iter().filter(|f| f.kind() == "error_retry").count()
}

#[test]
fn commands_run_first_in_first_out() {
    let mut e = engine("testbed");
    e.say("press the like button");
    e.say("press the confirm button");
    e.say("make a fist");
    settle(&mut e);
    assert_eq!(completed(&e), vec![1, 2, 3]);
    let started: Vec<_> = e
        .controller()
        .audit()
        .iter()
        .filter(|a| matches!(a.kind, AuditKind::Started | AuditKind::Completed))
        .map(|a| (a.seq, a.kind))
        .collect();
    // Each job finishes before the next one starts.
    for pair in started.chunks(2) {
        assert_eq!(pair[0].0, pair[1].0);
        assert_eq!((pair[0].1, pair[1].1), (AuditKind::Started, AuditKind::Completed));
    }
}

#[test]
fn stop_freezes_on_the_same_tick_and_continue_resumes() {
    let mut e = engine("testbed");
    e.say("move right");
    for _ in 0..30 {
        e.tick(DT);
    }
    let before = *e.controller().pose();
    let cursor = e.controller().playback().cursor;
    e.say("stop");
    for _ in 0..50 {
        let out = e.tick(DT);
        assert_eq!(out.frame().pose, before);
    }
    assert_eq!(e.controller().playback().status, Status::Paused);
    assert_eq!(e.controller().playback().cursor, cursor);
    e.say("continue");
    let out = e.tick(DT);
    assert_eq!(e.controller().playback().cursor, cursor + 1.0);
    assert!(out.frame().pose.wrist().x > before.wrist().x);
}

#[test]
fn a_120_frame_plan_takes_two_seconds() {
    let cfg = EngineConfig {
        continuous_limit_s: 2.0,
        ..EngineConfig::default()
    };
    let mut e = engine_with("testbed", cfg);
    e.say("move up");
    settle(&mut e);
    let done = e.controller().audit().iter().find(|a| a.kind == AuditKind::Completed).unwrap();
    let elapsed = done.at_ms as f64 / 1000.0;
    assert!((elapsed - 2.0).abs() <= DT, "{elapsed}");
}

#[test]
fn speed_factor_scales_the_cursor() {
    let mut e = engine("testbed");
    e.say("move left");
    e.tick(DT);
    e.say("faster");
    let c0 = e.controller().playback().cursor;
    e.tick(DT);
    assert!((e.controller().playback().cursor - c0 - 1.5).abs() < 1e-12);
    for _ in 0..2 {
        e.say("faster");
    }
    assert!((e.controller().playback().speed_factor - 3.375).abs() < 1e-12);
}

#[test]
fn press_and_hold_parks_at_the_interacting_frame() {
    let mut e = engine("testbed");
    e.say("press and hold the like button");
    for _ in 0..400 {
        e.tick(DT);
    }
    let c = e.controller();
    assert_eq!(c.playback().status, Status::Holding);
    let tip = c.pose().joint(JointId::IndexTip);
    let button = c.scene().get("like_button").unwrap().position;
    assert!((tip - button).norm() < 1e-6);
    let pose = *c.pose();

    // Other commands wait behind the hold.
    e.say("press the confirm button");
    for _ in 0..200 {
        assert_eq!(e.tick(DT).frame().pose, pose);
    }
    assert_eq!(e.controller().queue_len(), 1);

    // A release lets the queue through.
    e.say("open your hand");
    settle(&mut e);
    assert_eq!(completed(&e), vec![1, 2, 3]);
}

#[test]
fn continue_releases_a_hold() {
    let mut e = engine("testbed");
    e.say("press and hold the power button");
    for _ in 0..200 {
        e.tick(DT);
    }
    assert_eq!(e.controller().playback().status, Status::Holding);
    e.say("continue");
    settle(&mut e);
    assert_eq!(completed(&e), vec![1]);
}

#[test]
fn disambiguation_labels_then_numbered_reply() {
    let mut e = engine("two_cubes");
    e.say("pinch the cube");
    let fb = e.controller_mut().drain_feedback();
    let labels = fb
        .iter()
        .find_map(|f| match f {
            FeedbackEvent::DisambiguationLabels { labels, .. } => Some(labels.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(
        labels,
        vec![
            Label {
                object: "cube_left".into(),
                label: 1
            },
            Label {
                object: "cube_right".into(),
                label: 2
            }
        ]
    );
    // Out of range: still waiting.
    e.say("7");
    assert_eq!(errors(&e.controller_mut().drain_feedback()), 1);
    assert!(e.controller().parked().is_some());
    e.say("the second one");
    settle(&mut e);
    assert_eq!(e.controller().held_object(), Some("cube_right"));
}

#[test]
fn a_new_command_cancels_a_pending_prompt() {
    let mut e = engine("two_cubes");
    e.say("pinch the cube");
    e.say("grab the basket");
    assert!(e.controller().parked().is_none());
    assert!(e.controller().audit().iter().any(|a| a.kind == AuditKind::Cancelled && a.seq == 1));
    settle(&mut e);
    assert_eq!(completed(&e), vec![2]);
}

#[test]
fn uninterpretable_commands_leave_the_queue_alone() {
    let mut e = engine("testbed");
    e.say("grab the unicorn");
    assert_eq!(e.controller().queue_len(), 0);
    assert!(!e.controller().is_busy());
    assert_eq!(errors(&e.controller_mut().drain_feedback()), 1);
    e.say("what a lovely day");
    assert_eq!(errors(&e.controller_mut().drain_feedback()), 0);
    assert!(e.controller().audit().iter().any(|a| a.kind == AuditKind::Ignored));
}

#[test]
fn knob_follows_roll_and_stops_at_its_limit() {
    let mut e = engine("testbed");
    e.say("twist the knob to the right");
    settle(&mut e);
    let right = knob_angle(&e);
    assert!(right > 0.0);
    e.say("twist the knob to the left");
    settle(&mut e);
    assert!(knob_angle(&e) < right);
    e.say("increase the brightness");
    settle(&mut e);
    assert_eq!(knob_angle(&e), 2.6);
    // Controls are let go once the command finishes.
    assert_eq!(e.controller().held(), None);
}

#[test]
fn slider_saturates_both_ways() {
    let mut e = engine("testbed");
    e.say("maximize the volume");
    settle(&mut e);
    assert_eq!(slider_value(&e), 1.0);
    e.say("minimize the volume");
    settle(&mut e);
    assert_eq!(slider_value(&e), 0.0);
}

#[test]
fn put_into_basket_lands_inside() {
    let mut e = engine("testbed");
    e.say("put the apple into the basket");
    settle(&mut e);
    let c = e.controller();
    let apple = c.scene().get("apple").unwrap().position;
    assert!(c.scene().get("basket").unwrap().contains(apple));
    assert_eq!(c.held(), None);
}

#[test]
fn carried_objects_follow_later_commands() {
    let mut e = engine("testbed");
    e.say("grab the peach");
    settle(&mut e);
    let y0 = e.controller().scene().get("peach").unwrap().position.y;
    e.say("move up");
    settle(&mut e);
    assert_eq!(e.controller().held_object(), Some("peach"));
    assert!(e.controller().scene().get("peach").unwrap().position.y > y0 + 0.2);
}

#[test]
fn undo_mid_plan_reverts_to_the_last_checkpoint() {
    let mut e = engine("testbed");
    e.say("grab the apple");
    settle(&mut e);
    let checkpoint = e.controller().state();
    e.say("put it into the basket");
    for _ in 0..60 {
        e.tick(DT);
    }
    assert_ne!(e.controller().state(), checkpoint);
    e.say("undo");
    assert_eq!(e.controller().state(), checkpoint);
    assert!(e.controller().audit().iter().any(|a| a.kind == AuditKind::Aborted && a.seq == 2));
    // Idle again; the frame holds still.
    let p = *e.controller().pose();
    assert_eq!(e.tick(DT).frame().pose, p);
}

#[test]
fn undo_prefers_queued_work_and_redo_needs_quiet() {
    let mut e = engine("testbed");
    e.say("press the power button");
    e.say("press the like button");
    e.tick(DT);
    e.say("undo");
    assert_eq!(e.controller().queue_len(), 0);
    assert!(e.controller().audit().iter().any(|a| a.kind == AuditKind::Dropped && a.seq == 2));
    e.say("redo");
    assert_eq!(errors(&e.controller_mut().drain_feedback()), 1);
    settle(&mut e);
    assert_eq!(completed(&e), vec![1]);
    e.say("undo");
    e.say("undo");
    assert_eq!(errors(&e.controller_mut().drain_feedback()), 1);
}

#[test]
fn repeat_replays_the_last_command() {
    let mut e = engine("testbed");
    e.say("press the confirm button");
    settle(&mut e);
    e.say("repeat that twice");
    settle(&mut e);
    match e.controller().scene().get("confirm_button").unwrap().affordance {
        Affordance::Button { press_count, .. } => assert_eq!(press_count, 3),
        _ => unreachable!(),
    }
}

#[test]
fn frames_are_monotone_and_feedback_is_ordered() {
    let mut e = engine("testbed");
    e.say("grab the blue cube and move it up");
    let mut last = None;
    let mut kinds = Vec::new();
    for _ in 0..600 {
        let out = e.tick(DT);
        let f = out.frame();
        if let Some((seq, ts)) = last {
            assert!(f.seq > seq && f.ts_ms >= ts);
        }
        last = Some((f.seq, f.ts_ms));
        kinds.extend(out.feedback.iter().map(|f| f.kind()));
    }
    assert_eq!(kinds[..3], ["recognized_text", "active_command", "path_preview"]);
}

const SAFE: &[&str] = &[
    "pinch",
    "grab the apple",
    "grab the peach",
    "move left",
    "move up",
    "pan right",
    "roll left",
    "press the like button",
    "put the blue cube into the basket",
    "open your hand",
    "move to the basket",
    "twist the knob to the right",
    "slide the volume up",
    "make a fist",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn undo_then_redo_is_bit_exact(picks in proptest::collection::vec(0..SAFE.len(), 6)) {
        let mut e = engine("testbed");
        let mut states = vec![e.controller().state()];
        for &i in &picks {
            e.say(SAFE[i]);
            settle(&mut e);
            let n = e.controller().history().undo_len();
            states.truncate(n);
            states.push(e.controller().state());
        }
        let n = states.len() - 1;
        for k in 1..=n {
            for _ in 0..k {
                e.say("undo");
            }
            prop_assert_eq!(&e.controller().state(), &states[n - k]);
            for _ in 0..k {
                e.say("redo");
            }
            prop_assert_eq!(&e.controller().state(), &states[n]);
        }
    }
}
