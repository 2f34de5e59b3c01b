use std::collections::HashMap;
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::time::Instant;

use proxyhand_core::engine::{route, Routed, SceneView};
use proxyhand_core::gesture::GestureLibrary;
use proxyhand_core::interpreter::{Interpreter, SegmentEvent, Segmenter, TemporalInstr};
use tokio::sync::mpsc::UnboundedSender;

use crate::hub::{now_ms, Inbound, SharedView};

pub(crate) enum ParserMsg {
    Text { client: u64, text: String, is_final: bool },
    Gone(u64),
}

pub(crate) struct Parser {
    pub rx: Receiver<ParserMsg>,
    pub interpreter: Interpreter,
    pub library: Arc<GestureLibrary>,
    pub view: SharedView,
    pub priority: UnboundedSender<TemporalInstr>,
    pub inbound: UnboundedSender<Inbound>,
    pub started: Instant,
}

/// Runs until every sender is gone.
pub(crate) fn spawn(mut p: Parser) -> std::thread::JoinHandle<()> {
    std::thread::Builder::new()
        .name("proxyhand-parser".into())
        .spawn(move || {
            // One segmenter per client so interleaved streams don't mix.
            let mut streams: HashMap<u64, Segmenter> = HashMap::new();
            let mut next_seq = 1;
            while let Ok(msg) = p.rx.recv() {
                let (client, text, is_final) = match msg {
                    ParserMsg::Text {
                        client,
                        text,
                        is_final,
                    } => (client, text, is_final),
                    ParserMsg::Gone(client) => {
                        streams.remove(&client);
                        continue;
                    }
                };
                let now = now_ms(p.started);
                let seg = streams.entry(client).or_default();
                let mut events = seg.push(&text, now);
                if is_final {
                    events.extend(seg.flush(now));
                }
                for ev in events {
                    match ev {
                        SegmentEvent::Eager(t) => {
                            let _ = p.priority.send(t);
                        }
                        SegmentEvent::Command(mut cmd) => {
                            cmd.seq = next_seq;
                            next_seq += 1;
                            let _ = p.inbound.send(Inbound::Recognized(cmd.raw_text.clone()));
                            let view = p.view.read().expect("view lock").clone();
                            let sv = SceneView {
                                scene: &view.scene,
                                library: &p.library,
                                held: view.held.as_deref(),
                                awaiting_reply: view.awaiting_reply,
                            };
                            match route(&cmd, &sv, &mut p.interpreter) {
                                Routed::Preempt(t) => {
                                    let _ = p.priority.send(t);
                                }
                                other => {
                                    let _ = p.inbound.send(Inbound::Routed(other));
                                }
                            }
                        }
                    }
                }
            }
        })
        .expect("spawn parser thread")
}
