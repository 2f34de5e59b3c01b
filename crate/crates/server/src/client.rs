use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use futures_util::{SinkExt, StreamExt};
use proxyhand_core::protocol::{decode_line, encode, Body, LineDecoder, WireMessage};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::{broadcast, mpsc, watch, Semaphore};
use tokio_tungstenite::tungstenite::Message;

use crate::hub::{now_ms, Inbound, SharedView};
use crate::parser::ParserMsg;
use crate::record::{Direction, RecordHandle};
use crate::Transport;

pub(crate) struct Shared {
    pub parser: std::sync::mpsc::Sender<ParserMsg>,
    pub inbound: mpsc::UnboundedSender<Inbound>,
    pub view: SharedView,
    pub frames: watch::Receiver<Option<Arc<str>>>,
    pub reliable: broadcast::Sender<Arc<str>>,
    pub reliable_seq: Arc<AtomicU64>,
    pub started: Instant,
    pub recorder: Option<RecordHandle>,
    pub slots: Arc<Semaphore>,
}

impl Shared {
    fn line(&self, seq: u64, body: Body) -> Arc<str> {
        encode(&WireMessage::new(seq, now_ms(self.started), body)).into()
    }

    fn error_line(&self, seq: u64, message: impl Into<String>) -> Arc<str> {
        self.line(
            seq,
            Body::ProtocolError {
                message: message.into(),
            },
        )
    }

    fn record(&self, dir: Direction, client: u64, line: &str) {
        if let Some(r) = &self.recorder {
            r.log(dir, Some(client), now_ms(self.started), line);
        }
    }

    /// Acts on one inbound document; returns a reply for this client only.
    fn handle(&self, client: u64, doc: &[u8]) -> Option<Arc<str>> {
        let msg = match decode_line(doc)? {
            Ok(m) => m,
            Err(e) => return Some(self.error_line(0, e.to_string())),
        };
        self.record(Direction::In, client, &encode(&msg));
        match msg.body {
            Body::CommandText { text, is_final } => {
                let _ = self.parser.send(ParserMsg::Text {
                    client,
                    text,
                    is_final,
                });
                None
            }
            Body::DisambiguationReply { label } => {
                let _ = self.inbound.send(Inbound::Reply(label as usize));
                None
            }
            Body::Ping => Some(self.line(msg.seq, Body::Pong)),
            other => Some(self.error_line(
                msg.seq,
                format!("`{}` is a server message", other.type_name()),
            )),
        }
    }

    fn scene_init(&self) -> Arc<str> {
        let objects = self.view.read().expect("view lock").scene.objects().to_vec();
        self.line(self.reliable_seq.load(Ordering::SeqCst), Body::SceneInit { objects })
    }
}

/// Merges a client's three outbound sources in priority order.
struct Outgoing {
    direct: mpsc::Receiver<Arc<str>>,
    reliable: broadcast::Receiver<Arc<str>>,
    frames: watch::Receiver<Option<Arc<str>>>,
}

impl Outgoing {
    /// `None` means the client should be dropped.
    async fn next(&mut self) -> Option<Arc<str>> {
        loop {
            tokio::select! {
                biased;
                d = self.direct.recv() => return d,
                r = self.reliable.recv() => match r {
                    Ok(line) => return Some(line),
                    Err(RecvError::Lagged(n)) => {
                        log::warn!("client fell {n} reliable messages behind; disconnecting");
                        return None;
                    }
                    Err(RecvError::Closed) => return None,
                },
                f = self.frames.changed() => {
                    if f.is_err() {
                        return None;
                    }
                    if let Some(line) = self.frames.borrow_and_update().clone() {
                        return Some(line);
                    }
                }
            }
        }
    }
}

static NEXT_CLIENT: AtomicU64 = AtomicU64::new(1);

pub(crate) async fn accept_loop(
    listener: TcpListener,
    transport: Transport,
    shared: Arc<Shared>,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        let (stream, peer) = tokio::select! {
            r = listener.accept() => match r {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            },
            _ = shutdown.changed() => break,
        };
        let _ = stream.set_nodelay(true);
        let shared = shared.clone();
        let stop = shutdown.clone();
        let id = NEXT_CLIENT.fetch_add(1, Ordering::Relaxed);
        tokio::spawn(async move {
            log::info!("client {id} connected from {peer}");
            let result = match transport {
                Transport::TcpJsonl => serve_tcp(stream, id, &shared, stop).await.map_err(|e| e.to_string()),
                Transport::WebSocket => serve_ws(stream, id, &shared, stop).await.map_err(|e| e.to_string()),
            };
            if let Err(e) = result {
                log::info!("client {id}: {e}");
            }
            let _ = shared.parser.send(ParserMsg::Gone(id));
            log::info!("client {id} disconnected");
        });
    }
}

fn outgoing(shared: &Shared) -> (mpsc::Sender<Arc<str>>, Outgoing) {
    let (tx, rx) = mpsc::channel(64);
    let out = Outgoing {
        direct: rx,
        reliable: shared.reliable.subscribe(),
        frames: shared.frames.clone(),
    };
    (tx, out)
}

async fn serve_tcp(
    stream: TcpStream,
    id: u64,
    shared: &Shared,
    mut stop: watch::Receiver<bool>,
) -> std::io::Result<()> {
    let (mut reader, mut writer) = stream.into_split();
    let Ok(_slot) = shared.slots.clone().try_acquire_owned() else {
        let line = shared.error_line(0, "server is full");
        writer.write_all(format!("{line}\n").as_bytes()).await?;
        return Ok(());
    };
    // Subscribe before the snapshot so no delta falls between the two.
    let (direct, mut out) = outgoing(shared);
    let init = shared.scene_init();
    let write = async move {
        writer.write_all(format!("{init}\n").as_bytes()).await?;
        while let Some(line) = out.next().await {
            writer.write_all(line.as_bytes()).await?;
            writer.write_all(b"\n").await?;
        }
        writer.shutdown().await
    };
    let read = async {
        let mut decoder = LineDecoder::new();
        let mut buf = vec![0u8; 8192];
        loop {
            let n = reader.read(&mut buf).await?;
            if n == 0 {
                return Ok(());
            }
            for chunk in split_docs(&mut decoder, &buf[..n]) {
                let reply = match chunk {
                    Ok(doc) => shared.handle(id, doc.as_bytes()),
                    Err(e) => Some(shared.error_line(0, e)),
                };
                if let Some(r) = reply {
                    shared.record(Direction::Out, id, &r);
                    // A client that stops reading its replies just loses them.
                    let _ = direct.try_send(r);
                }
            }
        }
    };
    tokio::select! {
        r = write => r,
        r = read => r,
        _ = stop.changed() => Ok(()),
    }
}

/// Decoded lines re-encoded for `Shared::handle`, or decode errors as text.
fn split_docs(decoder: &mut LineDecoder, bytes: &[u8]) -> Vec<Result<String, String>> {
    decoder
        .push(bytes)
        .into_iter()
        .map(|r| r.map(|m| encode(&m)).map_err(|e| e.to_string()))
        .collect()
}

async fn serve_ws(
    stream: TcpStream,
    id: u64,
    shared: &Shared,
    mut stop: watch::Receiver<bool>,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let Ok(_slot) = shared.slots.clone().try_acquire_owned() else {
        sink.send(Message::text(shared.error_line(0, "server is full").to_string())).await?;
        return sink.close().await;
    };
    let (direct, mut out) = outgoing(shared);
    let init = shared.scene_init();
    let write = async move {
        sink.send(Message::text(init.to_string())).await?;
        while let Some(line) = out.next().await {
            sink.send(Message::text(line.to_string())).await?;
        }
        sink.close().await
    };
    let read = async {
        while let Some(msg) = source.next().await {
            let doc = match msg? {
                Message::Text(t) => t.as_bytes().to_vec(),
                Message::Binary(b) => b.to_vec(),
                Message::Close(_) => break,
                _ => continue,
            };
            if let Some(r) = shared.handle(id, &doc) {
                shared.record(Direction::Out, id, &r);
                let _ = direct.try_send(r);
            }
        }
        Ok(())
    };
    tokio::select! {
        r = write => r,
        r = read => r,
        _ = stop.changed() => Ok(()),
    }
}
