//! Wire framing and a threaded transport with one OS thread per actor.
//!
//! A frame is `version (1) | kind (1) | length (4, big endian) | payload`,
//! where the payload is the JSON envelope. Every frame, including coordinator
//! traffic, passes through the optional [`Tap`].

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use pso_core::roles::Role;
use pso_core::runtime::{Actor, Envelope, RuntimeError, Transport, SCHEMA_VERSION};
use sha2::{Digest, Sha256};

use crate::HarnessError;

pub const HEADER_LEN: usize = 6;

pub fn encode_frame(env: &Envelope) -> Vec<u8> {
    let payload = serde_json::to_vec(env).expect("envelopes always serialize");
    let len = u32::try_from(payload.len()).expect("frame payload fits in u32");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(SCHEMA_VERSION);
    out.push(env.body.kind());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn decode_frame(frame: &[u8]) -> Result<Envelope, HarnessError> {
    if frame.len() < HEADER_LEN {
        return Err(HarnessError::Frame(format!("truncated header ({} bytes)", frame.len())));
    }
    if frame[0] != SCHEMA_VERSION {
        return Err(HarnessError::Frame(format!("unsupported schema version {}", frame[0])));
    }
    let len = u32::from_be_bytes(frame[2..6].try_into().expect("4 bytes")) as usize;
    let payload = &frame[HEADER_LEN..];
    if payload.len() != len {
        return Err(HarnessError::Frame(format!(
            "length field says {len} bytes, payload has {}",
            payload.len()
        )));
    }
    let env: Envelope = serde_json::from_slice(payload).map_err(|e| HarnessError::Frame(e.to_string()))?;
    if env.body.kind() != frame[1] {
        return Err(HarnessError::Frame(format!(
            "kind byte {} does not match a {} body",
            frame[1],
            env.body.kind_name()
        )));
    }
    Ok(env)
}

/// One frame as seen on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TappedFrame {
    pub from: Role,
    pub to: Role,
    pub kind: u8,
    pub bytes: Vec<u8>,
}

impl TappedFrame {
    pub fn envelope(&self) -> Result<Envelope, HarnessError> {
        decode_frame(&self.bytes)
    }
}

/// Shared, append-only record of frames in delivery order.
#[derive(Clone, Debug, Default)]
pub struct Tap(Arc<Mutex<Vec<TappedFrame>>>);

impl Tap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, env: &Envelope, bytes: Vec<u8>) {
        self.0.lock().expect("tap poisoned").push(TappedFrame {
            from: env.from,
            to: env.to,
            kind: env.body.kind(),
            bytes,
        });
    }

    pub fn frames(&self) -> Vec<TappedFrame> {
        self.0.lock().expect("tap poisoned").clone()
    }

    pub fn addressed_to(&self, role: Role) -> Vec<TappedFrame> {
        self.frames().into_iter().filter(|f| f.to == role).collect()
    }

    /// SHA-256 over length-prefixed frames; equal iff the transcripts are
    /// byte-identical.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for f in self.0.lock().expect("tap poisoned").iter() {
            h.update((f.bytes.len() as u64).to_be_bytes());
            h.update(&f.bytes);
        }
        hex::encode(h.finalize())
    }
}

type Reply = (usize, Result<Vec<Vec<u8>>, RuntimeError>);

struct Worker {
    inbox: Sender<(usize, Vec<u8>)>,
    handle: JoinHandle<()>,
}

/// Runs each actor on its own thread behind an mpsc inbox.
///
/// Delivery proceeds in waves: every frame of a wave is dispatched before
/// any reply is read, so actors of one wave run concurrently. Replies are
/// reassembled in dispatch order, which keeps the transcript independent of
/// thread scheduling.
pub struct ActorTransport {
    workers: BTreeMap<Role, Worker>,
    replies: Receiver<Reply>,
    tap: Option<Tap>,
}

fn run_actor(mut actor: Box<dyn Actor>, inbox: Receiver<(usize, Vec<u8>)>, out: Sender<Reply>) {
    let role = actor.role();
    for (slot, frame) in inbox {
        let result = decode_frame(&frame)
            .map_err(|e| RuntimeError::Transport(e.to_string()))
            .and_then(|env| actor.handle(env))
            .map(|replies| {
                replies
                    .into_iter()
                    .map(|mut r| {
                        r.from = role;
                        encode_frame(&r)
                    })
                    .collect()
            });
        if out.send((slot, result)).is_err() {
            break;
        }
    }
}

impl ActorTransport {
    pub fn spawn(actors: Vec<Box<dyn Actor>>) -> Self {
        let (reply_tx, replies) = mpsc::channel();
        let workers = actors
            .into_iter()
            .map(|actor| {
                let role = actor.role();
                let (inbox, rx) = mpsc::channel();
                let out = reply_tx.clone();
                let handle = std::thread::Builder::new()
                    .name(role.to_string())
                    .spawn(move || run_actor(actor, rx, out))
                    .expect("spawn actor thread");
                (role, Worker { inbox, handle })
            })
            .collect();
        ActorTransport {
            workers,
            replies,
            tap: None,
        }
    }

    pub fn with_tap(mut self, tap: Tap) -> Self {
        self.tap = Some(tap);
        self
    }
}

impl Transport for ActorTransport {
    fn exchange(&mut self, envelope: Envelope) -> Result<Vec<Envelope>, RuntimeError> {
        let mut wave = vec![encode_frame(&envelope)];
        let mut out = Vec::new();
        while !wave.is_empty() {
            let mut pending = 0;
            for (slot, frame) in wave.drain(..).enumerate() {
                let env = decode_frame(&frame).map_err(|e| RuntimeError::Transport(e.to_string()))?;
                if let Some(tap) = &self.tap {
                    tap.record(&env, frame.clone());
                }
                if env.to == Role::Coordinator {
                    out.push(env);
                    continue;
                }
                let worker = self.workers.get(&env.to).ok_or(RuntimeError::NoRoute(env.to))?;
                worker
                    .inbox
                    .send((slot, frame))
                    .map_err(|_| RuntimeError::Transport(format!("{} has stopped", env.to)))?;
                pending += 1;
            }

            let mut gathered: BTreeMap<usize, Vec<Vec<u8>>> = BTreeMap::new();
            let mut failure = None;
            for _ in 0..pending {
                let (slot, result) = self
                    .replies
                    .recv()
                    .map_err(|_| RuntimeError::Transport("all actors stopped".into()))?;
                match result {
                    Ok(frames) => {
                        gathered.insert(slot, frames);
                    }
                    // Keep draining so no stale reply leaks into the next wave.
                    Err(e) => failure = failure.or(Some(e)),
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
            wave = gathered.into_values().flatten().collect();
        }
        Ok(out)
    }
}

impl Drop for ActorTransport {
    fn drop(&mut self) {
        for (_, w) in std::mem::take(&mut self.workers) {
            drop(w.inbox);
            let _ = w.handle.join();
        }
    }
}
