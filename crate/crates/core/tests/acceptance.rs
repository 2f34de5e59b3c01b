//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Each check has a fixed case count, tolerance and time budget; none of them
//! adapt to the result.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proxyhand_core::config::EngineConfig;
use proxyhand_core::controller::{rest_pose, FeedbackEvent, Label, Status};
use proxyhand_core::engine::Engine;
use proxyhand_core::gesture::{GestureId, GestureLibrary, SynthConfig};
use proxyhand_core::interpreter::{match_priority, Backend, Command, Interpreter};
use proxyhand_core::kinematics::plan_reach;
use proxyhand_core::protocol::{decode, encode, encode_line, Body, LineDecoder, WireMessage};
use proxyhand_core::scene::{Affordance, Scene, SceneObject};
use proxyhand_core::script::{run_script, ScriptScenario};
use proxyhand_core::skeleton::{rotate_pose, translate_pose, HandPose, RotationKind, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const DT: f64 = 1.0 / 60.0;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn scene(name: &str) -> Scene {
    let path = fixtures().join(format!("scenes/{name}.json"));
    Scene::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn library() -> Arc<GestureLibrary> {
    Arc::new(GestureLibrary::builtin(&SynthConfig::default()))
}

fn engine(name: &str) -> Engine {
    Engine::new(EngineConfig::default(), library(), scene(name), Backend::Grammar)
}

fn settle(e: &mut Engine) -> Result<(), String> {
    for _ in 0..20_000 {
        let c = e.controller();
        if c.is_settled() && !(c.is_busy() && c.playback().status == Status::Playing) {
            return Ok(());
        }
        e.tick(DT);
    }
    Err("engine did not settle".into())
}

fn interpret(text: &str, scene: &Scene) -> Value {
    let lib = library();
    let list = Interpreter::default().interpret(&Command::new(text, 1, 0), scene, &lib, None);
    serde_json::from_str(&list.to_json()).unwrap()
}

fn expect_structures(scene: &Scene, cases: &[(&str, Value)]) -> Outcome {
    for (text, want) in cases {
        let got = interpret(text, scene);
        if &got != want {
            return Err(format!("{text:?}: got {got}, expected {want}"));
        }
    }
    Ok(format!("{} commands structurally equal", cases.len()))
}

fn schema_golden() -> Outcome {
    let s = scene("golden");
    expect_structures(
        &s,
        &[
            (
                "pinch the cube",
                json!([{"component_type": "gesture",
                        "value": {"gesture_type": "pinch", "object": "cube", "is_ambiguous": false}}]),
            ),
            (
                "peach into the basket",
                json!([
                    {"component_type": "gesture",
                     "value": {"gesture_type": "grab", "object": "peach", "is_ambiguous": false}},
                    {"component_type": "movement",
                     "value": {"movement_type": "translational", "object": "basket",
                               "is_ambiguous": false, "position": "on top of"}},
                    {"component_type": "gesture", "value": "release"}
                ]),
            ),
        ],
    )
}

fn decomposition() -> Outcome {
    let s = scene("testbed");
    expect_structures(
        &s,
        &[
            (
                "pinch",
                json!([{"component_type": "gesture", "value": {"gesture_type": "pinch", "is_ambiguous": false}}]),
            ),
            (
                "pull up",
                json!([
                    {"component_type": "gesture", "value": {"gesture_type": "grab", "hold": true, "is_ambiguous": false}},
                    {"component_type": "movement",
                     "value": {"movement_type": "translational", "direction": "up", "is_ambiguous": false}}
                ]),
            ),
            (
                "punch the bag twice",
                json!([
                    {"component_type": "gesture",
                     "value": {"gesture_type": "punch", "object": "punching bag", "is_ambiguous": false}},
                    {"component_type": "temporal", "value": {"repeat": 2}}
                ]),
            ),
            (
                "twist the knob to the right",
                json!([
                    {"component_type": "gesture",
                     "value": {"gesture_type": "grab", "object": "brightness knob", "is_ambiguous": false}},
                    {"component_type": "movement",
                     "value": {"movement_type": "rotational", "rotation": "roll_right", "is_ambiguous": false}}
                ]),
            ),
            (
                "put the apple into the basket",
                json!([
                    {"component_type": "gesture",
                     "value": {"gesture_type": "grab", "object": "apple", "is_ambiguous": false}},
                    {"component_type": "movement",
                     "value": {"movement_type": "translational", "object": "basket",
                               "is_ambiguous": false, "position": "on top of"}},
                    {"component_type": "gesture", "value": "release"}
                ]),
            ),
        ],
    )
}

fn keyword_latency() -> Outcome {
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("corpus/relevance.json")).unwrap()).unwrap();
    let words: Vec<String> =
        doc["keyword"].as_array().unwrap().iter().map(|p| p[0].as_str().unwrap().to_owned()).collect();
    let commands: Vec<&str> = words.iter().map(String::as_str).cycle().take(100).collect();

    let mut e = engine("testbed");
    // Warm-up pass on a throwaway engine.
    let mut warm = engine("testbed");
    for w in &commands {
        if let Some(t) = match_priority(w) {
            warm.controller_mut().preempt(&t);
        }
    }
    e.say("move right");
    e.tick(DT);
    let mut worst = Duration::ZERO;
    for (i, w) in commands.iter().enumerate() {
        let t = Instant::now();
        let Some(instr) = match_priority(w) else {
            return Err(format!("{w:?} is not handled by the keyword tier"));
        };
        e.controller_mut().preempt(&instr);
        let took = t.elapsed();
        worst = worst.max(took);
        if took >= Duration::from_millis(1) {
            return Err(format!("command {i} {w:?} took {took:?}"));
        }
        // Keep a motion around so pause/resume/speed have something to act on.
        if i % 10 == 9 {
            e.say("move left");
        }
        e.tick(DT);
    }
    Ok(format!("100 dispatches, worst {worst:?} < 1 ms"))
}

fn preemption() -> Outcome {
    // Reference: the same motion, never interrupted.
    let mut reference = engine("testbed");
    reference.say("move right");
    let mut trace = Vec::new();
    for _ in 0..90 {
        trace.push(reference.tick(DT).frame().pose);
    }

    let mut e = engine("testbed");
    e.say("move right");
    let mut last = e.tick(DT).frame().pose;
    while e.controller().now_ms() < 500 {
        last = e.tick(DT).frame().pose;
    }
    e.say("stop");
    let frozen = e.tick(DT).frame().pose;
    let stop_cursor = e.controller().playback().cursor;
    let frozen_index = trace.iter().position(|p| *p == frozen).ok_or("frozen pose is not on the planned path")?;
    if frozen != last || frozen_index + 1 >= trace.len() {
        return Err("stop did not freeze the motion mid-plan on the first tick".into());
    }
    for k in 0..60 {
        let p = e.tick(DT).frame().pose;
        let d = (p.wrist() - frozen.wrist()).norm();
        if d != 0.0 || p != frozen {
            return Err(format!("hand moved {d} m on tick {k} after stop"));
        }
    }
    if e.controller().playback().cursor != stop_cursor {
        return Err("cursor moved while stopped".into());
    }
    e.say("continue");
    let resumed = e.tick(DT).frame().pose;
    if resumed != trace[frozen_index + 1] {
        return Err("continue did not resume from the frozen cursor".into());
    }
    Ok(format!("frozen at plan frame {frozen_index} for 60 ticks (displacement 0), resumed at frame {}", frozen_index + 1))
}

const UNDO_POOL: &[&str] = &[
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
    "press the power button",
    "tilt up",
    "move forward",
];

fn undo_redo() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    let depth = EngineConfig::default().history_depth;
    let mut checked = 0usize;
    for case in 0..200 {
        let mut e = engine("testbed");
        let mut states = vec![e.controller().state()];
        for _ in 0..20 {
            e.say(UNDO_POOL[rng.random_range(0..UNDO_POOL.len())]);
            settle(&mut e)?;
            states.truncate(e.controller().history().undo_len());
            states.push(e.controller().state());
        }
        let n = (states.len() - 1).min(depth);
        let top = states.len() - 1;
        for k in 1..=n {
            for _ in 0..k {
                e.say("undo");
            }
            if e.controller().state() != states[top - k] {
                return Err(format!("case {case}: undo^{k} does not restore the recorded state"));
            }
            for _ in 0..k {
                e.say("redo");
            }
            if e.controller().state() != states[top] {
                return Err(format!("case {case}: undo^{k} redo^{k} is not bit-exact"));
            }
            checked += 1;
        }
    }
    Ok(format!("200 cases x 20 commands, {checked} (k, case) round trips bit-exact"))
}

fn reach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0006);
    let cfg = EngineConfig::default();
    let libs: Vec<GestureLibrary> = (0..4)
        .map(|seed| {
            GestureLibrary::builtin(&SynthConfig {
                seed,
                jitter: if seed == 0 { 0.0 } else { 0.0005 },
                ..SynthConfig::default()
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let lib = &libs[rng.random_range(0..libs.len())];
        let id = GestureId::BUILTIN[rng.random_range(0..GestureId::BUILTIN.len())].clone();
        let clip = lib.get(&id).unwrap();
        // Workspace: a 1 m cube in front of the viewer.
        let cube = |rng: &mut ChaCha8Rng| {
            Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5))
        };
        let start = cube(&mut rng);
        let target = cube(&mut rng);
        let home = rest_pose(lib, cfg.home());
        let current = translate_pose(&home, start - home.wrist());
        let plan = plan_reach(clip, &current, target, cfg.step_length()).map_err(|e| format!("case {case}: {e}"))?;
        let hit = plan.frames[plan.interacting_frame].joint(clip.interacting_joint());
        let err = (hit - target).norm();
        worst = worst.max(err);
        if !(err <= 1e-6) {
            return Err(format!("case {case} ({}): miss by {err:e} m", id.as_str()));
        }
    }
    Ok(format!("1000 pairs, worst miss {worst:.3e} m <= 1e-6"))
}

fn rigidity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0007);
    let lib = GestureLibrary::builtin(&SynthConfig::default());
    let (mut worst_rel, mut worst_inv) = (0.0f64, 0.0f64);
    for case in 0..1000 {
        let id = GestureId::BUILTIN[rng.random_range(0..GestureId::BUILTIN.len())].clone();
        let clip = lib.get(&id).unwrap();
        let mut pose = clip.frames[rng.random_range(0..clip.len())];
        // Random position and a random prior orientation.
        pose = translate_pose(
            &pose,
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0)),
        );
        for _ in 0..3 {
            let r = RotationKind::ALL[rng.random_range(0..6)];
            pose = rotate_pose(&pose, r, rng.random_range(-3.0..3.0)).unwrap();
        }
        let r = RotationKind::ALL[rng.random_range(0..6)];
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let turned = rotate_pose(&pose, r, angle).unwrap();
        let (a, b) = (pose.joints(), turned.joints());
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                let before = (a[i] - a[j]).norm();
                let after = (b[i] - b[j]).norm();
                let rel = (after - before).abs() / before.max(f64::MIN_POSITIVE);
                worst_rel = worst_rel.max(rel);
                if !(rel <= 1e-9) {
                    return Err(format!("case {case}: joints {i}-{j} distance changed by {rel:e} relative"));
                }
            }
        }
        let back = rotate_pose(&turned, r.inverse(), angle).unwrap();
        for (p, q) in back.joints().iter().zip(a) {
            let d = (p - q).norm();
            worst_inv = worst_inv.max(d);
            if !(d <= 1e-9) {
                return Err(format!("case {case}: {} then {} is off identity by {d:e}", r, r.inverse()));
            }
        }
    }
    Ok(format!("1000 rotations, worst distance drift {worst_rel:.1e}, worst inverse residual {worst_inv:.1e}"))
}

fn task_fixtures() -> Outcome {
    let tasks = [
        "grab_apple",
        "grab_peach",
        "grab_blue_cube",
        "press_confirm",
        "press_minimize",
        "press_power",
        "grab_left_watermelon",
        "grab_middle_watermelon",
        "grab_right_watermelon",
        "put_apple_in_basket",
        "maximize_volume",
        "increase_brightness",
    ];
    let lib = library();
    let cfg = EngineConfig::default();
    let mut failed = Vec::new();
    for name in tasks {
        let scenario = ScriptScenario::load(&fixtures().join(format!("scenarios/{name}.json")))
            .map_err(|e| format!("{name}: {e}"))?;
        let report = run_script(&scenario, &cfg, lib.clone()).map_err(|e| format!("{name}: {e}"))?;
        let asked = report.feedback.iter().any(|f| matches!(f, FeedbackEvent::DisambiguationLabels { .. }));
        if !report.passed || asked || report.assertions.is_empty() {
            failed.push(name);
        }
    }
    // The outcome checks themselves, independent of the fixture files.
    let mut e = engine("testbed");
    e.say("put the apple into the basket");
    settle(&mut e)?;
    let s = e.controller().scene();
    if !s.get("basket").unwrap().contains(s.get("apple").unwrap().position) {
        failed.push("apple centre outside basket");
    }
    let mut e = engine("testbed");
    e.say("maximize the volume");
    settle(&mut e)?;
    match e.controller().scene().get("volume_slider").unwrap().affordance {
        Affordance::Slider { value, .. } if value == 1.0 => {}
        _ => failed.push("slider not at 1.0"),
    }
    let knob = |s: &Scene| match s.get("brightness_knob").unwrap().affordance {
        Affordance::Knob { angle, .. } => angle,
        _ => f64::NAN,
    };
    let mut e = engine("testbed");
    let before = knob(e.controller().scene());
    e.say("increase the brightness");
    settle(&mut e)?;
    if !(knob(e.controller().scene()) > before) {
        failed.push("knob angle did not increase");
    }
    if failed.is_empty() {
        Ok(format!("{}/{} task fixtures pass (100%)", tasks.len(), tasks.len()))
    } else {
        Err(format!("failed: {}", failed.join(", ")))
    }
}

fn disambiguation() -> Outcome {
    let mut e = engine("two_cubes");
    e.say("pinch the cube");
    let fb = e.tick(DT).feedback;
    let labels: Vec<Label> = fb
        .into_iter()
        .find_map(|f| match f {
            FeedbackEvent::DisambiguationLabels { labels, .. } => Some(labels),
            _ => None,
        })
        .ok_or("no disambiguation_labels event")?;
    let numbers: Vec<usize> = labels.iter().map(|l| l.label).collect();
    if numbers != (1..=labels.len()).collect::<Vec<_>>() || numbers.len() != 2 {
        return Err(format!("labels not dense from 1: {numbers:?}"));
    }
    let second = labels[1].object.clone();
    e.say("2");
    settle(&mut e)?;
    match e.controller().held_object() {
        Some(id) if id == second => Ok(format!("labels {numbers:?}; reply \"2\" pinched {second}")),
        other => Err(format!("reply 2 should bind {second}, holding {other:?}")),
    }
}

// ---- wire protocol ----

fn text(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[&str] = &["a", "Q", " ", "\"", "\\", "\n", "\r", "é", "指", "👋", "[", "}", "\u{1}", "\u{2029}", "knob"];
    (0..rng.random_range(0..10)).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn float(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        rng.random_range(-3.0..3.0)
    } else {
        loop {
            let x = f64::from_bits(rng.random());
            if x.is_finite() {
                break x;
            }
        }
    }
}

fn vec3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(float(rng), float(rng), float(rng))
}

fn object(rng: &mut ChaCha8Rng) -> SceneObject {
    let affordance = match rng.random_range(0..6) {
        0 => Affordance::Grabbable,
        1 => Affordance::Button {
            press_count: rng.random(),
            in_contact: rng.random(),
        },
        2 => Affordance::Slider {
            value: float(rng),
            axis: vec3(rng),
        },
        3 => Affordance::Knob {
            angle: float(rng),
            range: [float(rng), float(rng)],
        },
        4 => Affordance::Container,
        _ => Affordance::Static,
    };
    SceneObject {
        id: text(rng),
        name: text(rng),
        tags: (0..rng.random_range(0..3)).map(|_| text(rng)).collect(),
        position: vec3(rng),
        half_extents: vec3(rng),
        affordance,
    }
}

fn message(rng: &mut ChaCha8Rng) -> WireMessage {
    let body = match rng.random_range(0..13) {
        0 => Body::CommandText {
            text: text(rng),
            is_final: rng.random(),
        },
        1 => Body::DisambiguationReply { label: rng.random() },
        2 => Body::Ping,
        3 => Body::Pong,
        4 => Body::Frame(HandPose::from_flat(&(0..63).map(|_| float(rng)).collect::<Vec<_>>()).unwrap()),
        5 => Body::SceneInit {
            objects: (0..rng.random_range(0..3)).map(|_| object(rng)).collect(),
        },
        6 => Body::SceneDelta {
            objects: (0..rng.random_range(0..3)).map(|_| object(rng)).collect(),
        },
        7 => Body::Feedback(FeedbackEvent::RecognizedText { text: text(rng) }),
        8 => Body::Feedback(FeedbackEvent::ActiveCommand { text: text(rng) }),
        9 => Body::Feedback(FeedbackEvent::ErrorRetry { message: text(rng) }),
        10 => Body::Feedback(FeedbackEvent::DisambiguationLabels {
            query: text(rng),
            labels: (0..rng.random_range(0..4))
                .map(|i| Label {
                    object: text(rng),
                    label: i + 1,
                })
                .collect(),
        }),
        11 => Body::Feedback(FeedbackEvent::PathPreview {
            points: (0..rng.random_range(0..5)).map(|_| vec3(rng)).collect(),
        }),
        _ => Body::ProtocolError { message: text(rng) },
    };
    WireMessage::new(rng.random(), rng.random(), body)
}

fn wire() -> Outcome {
    const TYPES: [&str; 9] = [
        "command_text",
        "disambiguation_reply",
        "ping",
        "frame",
        "scene_init",
        "scene_delta",
        "feedback",
        "pong",
        "protocol_error",
    ];
    // Golden bytes: every fixture decodes and re-encodes to exactly its bytes.
    let mut seen = BTreeSet::new();
    let mut goldens = 0;
    for entry in std::fs::read_dir(fixtures().join("wire")).unwrap() {
        let path = entry.unwrap().path();
        let bytes = std::fs::read(&path).unwrap();
        let msg = decode(bytes.trim_ascii_end()).map_err(|e| format!("{}: {e}", path.display()))?;
        if encode_line(&msg) != bytes {
            return Err(format!("{} does not re-encode byte for byte", path.display()));
        }
        seen.insert(msg.body.type_name());
        goldens += 1;
    }
    if seen != TYPES.into_iter().collect() {
        return Err(format!("golden fixtures cover {seen:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0010);
    for i in 0..10_000 {
        let m = message(&mut rng);
        let line = encode(&m);
        if line.contains('\n') || decode(line.as_bytes()).as_ref() != Ok(&m) {
            return Err(format!("fuzz case {i} does not round-trip: {line}"));
        }
    }

    // A damaged line followed by a good one, in random chunks: the good one survives.
    let mut decoder = LineDecoder::new();
    let mut resynced = 0;
    for i in 0..1000 {
        let m = message(&mut rng);
        let line = encode_line(&m);
        let mut stream = b"{\"type\":\"frame\",\"payload\":[1,".to_vec();
        stream.extend_from_slice(&line[..rng.random_range(0..line.len() - 1)]);
        stream.push(b'\n');
        stream.extend_from_slice(&line);
        let mut out = Vec::new();
        let mut rest = &stream[..];
        while !rest.is_empty() {
            let n = rng.random_range(1..=rest.len());
            out.extend(decoder.push(&rest[..n]));
            rest = &rest[n..];
        }
        match out.as_slice() {
            [Err(_), Ok(got)] if *got == m => resynced += 1,
            _ => return Err(format!("resync case {i} yielded {out:?}")),
        }
    }
    Ok(format!("{goldens} golden files over all 9 types, 10000 fuzz round trips, {resynced} resyncs"))
}

fn main() {
    let checks: [(&str, Duration, fn() -> Outcome); 10] = [
        ("instruction schema golden", Duration::from_secs(1), schema_golden),
        ("decomposition fixtures", Duration::from_secs(1), decomposition),
        ("keyword tier latency", Duration::from_secs(10), keyword_latency),
        ("preemption semantics", Duration::from_secs(5), preemption),
        ("undo/redo round trip", Duration::from_secs(60), undo_redo),
        ("reach accuracy", Duration::from_secs(30), reach),
        ("rotation rigidity", Duration::from_secs(30), rigidity),
        ("end-to-end task fixtures", Duration::from_secs(60), task_fixtures),
        ("disambiguation flow", Duration::from_secs(5), disambiguation),
        ("wire protocol conformance", Duration::from_secs(60), wire),
    ];
    let mut failures = 0;
    for (name, budget, check) in checks {
        let t = Instant::now();
        let outcome = check();
        let took = t.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => Err(format!("{detail}; but took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{took:.2?} / {budget:?}]"),
            Err(why) => {
                failures += 1;
                println!("FAIL {name}: {why} [{took:.2?} / {budget:?}]");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
