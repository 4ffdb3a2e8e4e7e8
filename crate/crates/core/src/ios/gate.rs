//! Host call-gates: the in-process `vmsys` gate and the framed message gate.
//!
//! Both apply one request at a time between slices and return exactly one
//! response per request. The message gate speaks [`wire`](super::wire)
//! frames; request texts travel as raw ASCII.
//!
//! Request types: 0x01 compile, 0x02 run, 0x03 spawn, 0x04 step,
//! 0x05 read-dios, 0x06 write-dios, 0x07 install, 0x08 checkpoint,
//! 0x09 restore, 0x0A status, 0x0B output. Response types: 0x80 ok,
//! 0x81 compile error, 0x82 vm error, 0x83 suspended, 0x84 error,
//! 0x15 NAK.

use thiserror::Error;

use super::wire::{self, Decoder, Reader, WireError};
use crate::host::checkpoint;
use crate::host::node::{Node, NodeStep};
use crate::vm::{Exception, OutItem, SliceEnd};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Compile(String),
    /// Spawn the frame's program and drive the node for at most `steps`
    /// scheduling decisions or until that task ends.
    Run { frame: u16, steps: u32 },
    Spawn(u16),
    Step(u32),
    ReadDios(String),
    WriteDios { name: String, index: u16, value: i32 },
    /// Register a host callback from the built-in catalogue.
    Install(String),
    Checkpoint,
    Restore(Vec<u8>),
    Status,
    /// Drain the output stream.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub now_us: u64,
    pub live_tasks: u16,
    pub mask: u32,
    pub cs_free: u32,
    pub words: u16,
    pub powered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Empty,
    Frame { frame: u16, code_len: u16 },
    Task(u16),
    Cells(Vec<i32>),
    Index(u16),
    Blob(Vec<u8>),
    Status(Status),
    Output(Vec<OutItem>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Ok(Payload),
    CompileError { frame: u16, pos: u16, msg: String },
    VmError(i16),
    Suspended { pc: u16 },
    Error(String),
    Nak,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GateError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("unknown message type {0:#04x}")]
    Kind(u8),
    #[error("malformed payload")]
    Malformed,
}

/// Callbacks a remote master may install by name.
pub const CATALOGUE: &[&str] = &["milli", "micros", "dsp"];

fn install(node: &mut Node, name: &str) -> Result<u16, String> {
    let ios = &mut node.vm.ios;
    let r = match name {
        "milli" => ios.fios_add("milli", Box::new(|c, _| Ok((c.now_us / 1000) as i32)), 0, 0, 4),
        "micros" => ios.fios_add("micros", Box::new(|c, _| Ok(c.now_us as i32)), 0, 0, 4),
        "dsp" => {
            let first = ios.fios().len();
            crate::dsp::library::register(ios).map(|_| first)
        }
        _ => return Err(format!("no callback `{name}` in the catalogue")),
    };
    r.map(|i| i as u16).map_err(|e| e.to_string())
}

/// The shared-state gate: requests act directly on a node.
pub struct SharedGate<'a> {
    pub node: &'a mut Node,
}

impl<'a> SharedGate<'a> {
    pub fn new(node: &'a mut Node) -> Self {
        SharedGate { node }
    }

    pub fn vmsys(&mut self, req: &Request) -> Response {
        vmsys(self.node, req)
    }
}

/// Execute one request against `node`.
pub fn vmsys(node: &mut Node, req: &Request) -> Response {
    if !node.is_powered() && !matches!(req, Request::Status | Request::Step(_)) {
        return Response::Error("node is powered down".into());
    }
    match req {
        Request::Compile(text) => match node.vm.compile(text) {
            Ok(i) => Response::Ok(Payload::Frame { frame: i.frame, code_len: i.code_len as u16 }),
            Err(e) => Response::CompileError { frame: e.frame, pos: e.offset as u16, msg: e.kind.to_string() },
        },
        Request::Run { frame, steps } => {
            let idx = match node.vm.spawn_frame(*frame) {
                Ok(i) => i,
                Err(e) => return Response::Error(e.to_string()),
            };
            for _ in 0..*steps {
                match node.step() {
                    NodeStep::Ran(d) if d.task == idx => match d.outcome.end {
                        SliceEnd::Finished => return Response::Ok(Payload::Output(node.vm.output.take())),
                        SliceEnd::Error(e) => return Response::VmError(e.code()),
                        _ => {}
                    },
                    NodeStep::Done | NodeStep::Blocked | NodeStep::Dead => break,
                    _ => {}
                }
            }
            match node.vm.task(idx) {
                Some(t) => Response::Suspended { pc: t.resume_pc() },
                None => Response::Error("task lost".into()),
            }
        }
        Request::Spawn(frame) => match node.vm.spawn_frame(*frame) {
            Ok(i) => Response::Ok(Payload::Task(i as u16)),
            Err(e) => Response::Error(e.to_string()),
        },
        Request::Step(n) => {
            for _ in 0..*n {
                if matches!(node.step(), NodeStep::Done | NodeStep::Blocked | NodeStep::Dead) {
                    break;
                }
            }
            Response::Ok(Payload::Output(node.vm.output.take()))
        }
        Request::ReadDios(name) => match node.vm.ios.dios_by_name(name) {
            Some(d) => Response::Ok(Payload::Cells(d.data.clone())),
            None => Response::VmError(Exception::Io.code()),
        },
        Request::WriteDios { name, index, value } => {
            match node.vm.ios.dios_by_name_mut(name).and_then(|d| d.set(*index as usize, *value)) {
                Some(()) => Response::Ok(Payload::Empty),
                None => Response::VmError(Exception::Io.code()),
            }
        }
        Request::Install(name) => match install(node, name) {
            Ok(i) => Response::Ok(Payload::Index(i)),
            Err(e) => Response::Error(e),
        },
        Request::Checkpoint => Response::Ok(Payload::Blob(checkpoint::save(&node.vm))),
        Request::Restore(blob) => match checkpoint::restore_into(&mut node.vm, blob) {
            Ok(()) => Response::Ok(Payload::Empty),
            Err(e) => Response::Error(e.to_string()),
        },
        Request::Status => Response::Ok(Payload::Status(Status {
            now_us: node.now_us(),
            live_tasks: node.vm.live_tasks().count() as u16,
            mask: node.vm.mask.0,
            cs_free: node.vm.cs.free_bytes() as u32,
            words: node.vm.dict.len() as u16,
            powered: node.is_powered(),
        })),
        Request::Output => Response::Ok(Payload::Output(node.vm.output.take())),
    }
}

fn ascii(b: &[u8]) -> Result<String, GateError> {
    if b.is_ascii() {
        Ok(String::from_utf8_lossy(b).into_owned())
    } else {
        Err(GateError::Malformed)
    }
}

pub fn encode_request(req: &Request) -> (u8, Vec<u8>) {
    let mut p = Vec::new();
    let kind = match req {
        Request::Compile(t) => {
            p.extend_from_slice(t.as_bytes());
            0x01
        }
        Request::Run { frame, steps } => {
            p.extend(frame.to_le_bytes());
            p.extend(steps.to_le_bytes());
            0x02
        }
        Request::Spawn(f) => {
            p.extend(f.to_le_bytes());
            0x03
        }
        Request::Step(n) => {
            p.extend(n.to_le_bytes());
            0x04
        }
        Request::ReadDios(n) => {
            p.extend_from_slice(n.as_bytes());
            0x05
        }
        Request::WriteDios { name, index, value } => {
            p.extend(index.to_le_bytes());
            p.extend(value.to_le_bytes());
            p.extend_from_slice(name.as_bytes());
            0x06
        }
        Request::Install(n) => {
            p.extend_from_slice(n.as_bytes());
            0x07
        }
        Request::Checkpoint => 0x08,
        Request::Restore(b) => {
            p.extend_from_slice(b);
            0x09
        }
        Request::Status => 0x0A,
        Request::Output => 0x0B,
    };
    (kind, p)
}

pub fn decode_request(kind: u8, p: &[u8]) -> Result<Request, GateError> {
    let mut r = Reader::new(p);
    let req = match kind {
        0x01 => return Ok(Request::Compile(ascii(p)?)),
        0x02 => Request::Run { frame: r.u16()?, steps: r.u32()? },
        0x03 => Request::Spawn(r.u16()?),
        0x04 => Request::Step(r.u32()?),
        0x05 => return Ok(Request::ReadDios(ascii(p)?)),
        0x06 => Request::WriteDios { index: r.u16()?, value: r.i32()?, name: ascii(r.rest())? },
        0x07 => return Ok(Request::Install(ascii(p)?)),
        0x08 => Request::Checkpoint,
        0x09 => return Ok(Request::Restore(p.to_vec())),
        0x0A => Request::Status,
        0x0B => Request::Output,
        k => return Err(GateError::Kind(k)),
    };
    if r.is_empty() {
        Ok(req)
    } else {
        Err(GateError::Malformed)
    }
}

/// Output items as `(channel, len u16, bytes)` records: channel 0 carries
/// console text, channel 1 one little-endian value.
fn encode_output(items: &[OutItem], p: &mut Vec<u8>) {
    for it in items {
        p.push(it.channel());
        let body: Vec<u8> = match it {
            OutItem::Text(s) => s.as_bytes().to_vec(),
            OutItem::Value(v) => v.to_le_bytes().to_vec(),
        };
        p.extend((body.len() as u16).to_le_bytes());
        p.extend(body);
    }
}

fn decode_output(r: &mut Reader) -> Result<Vec<OutItem>, GateError> {
    let mut out = Vec::new();
    while !r.is_empty() {
        let ch = r.u8()?;
        let n = r.u16()? as usize;
        let b = r.take(n)?;
        out.push(match (ch, n) {
            (0, _) => OutItem::Text(String::from_utf8_lossy(b).into_owned()),
            (1, 2) => OutItem::Value(i16::from_le_bytes([b[0], b[1]])),
            _ => return Err(GateError::Malformed),
        });
    }
    Ok(out)
}

pub fn encode_response(resp: &Response) -> (u8, Vec<u8>) {
    let mut p = Vec::new();
    let kind = match resp {
        Response::Ok(pl) => {
            match pl {
                Payload::Empty => p.push(0),
                Payload::Frame { frame, code_len } => {
                    p.push(1);
                    p.extend(frame.to_le_bytes());
                    p.extend(code_len.to_le_bytes());
                }
                Payload::Task(t) => {
                    p.push(2);
                    p.extend(t.to_le_bytes());
                }
                Payload::Cells(c) => {
                    p.push(3);
                    c.iter().for_each(|v| p.extend(v.to_le_bytes()));
                }
                Payload::Index(i) => {
                    p.push(4);
                    p.extend(i.to_le_bytes());
                }
                Payload::Blob(b) => {
                    p.push(5);
                    p.extend_from_slice(b);
                }
                Payload::Status(s) => {
                    p.push(6);
                    p.extend(s.now_us.to_le_bytes());
                    p.extend(s.live_tasks.to_le_bytes());
                    p.extend(s.mask.to_le_bytes());
                    p.extend(s.cs_free.to_le_bytes());
                    p.extend(s.words.to_le_bytes());
                    p.push(s.powered as u8);
                }
                Payload::Output(items) => {
                    p.push(7);
                    encode_output(items, &mut p);
                }
            }
            0x80
        }
        Response::CompileError { frame, pos, msg } => {
            p.extend(frame.to_le_bytes());
            p.extend(pos.to_le_bytes());
            p.extend_from_slice(msg.as_bytes());
            0x81
        }
        Response::VmError(c) => {
            p.extend(c.to_le_bytes());
            0x82
        }
        Response::Suspended { pc } => {
            p.extend(pc.to_le_bytes());
            0x83
        }
        Response::Error(m) => {
            p.extend_from_slice(m.as_bytes());
            0x84
        }
        Response::Nak => wire::NAK,
    };
    (kind, p)
}

pub fn decode_response(kind: u8, p: &[u8]) -> Result<Response, GateError> {
    let mut r = Reader::new(p);
    let resp = match kind {
        0x80 => Response::Ok(match r.u8()? {
            0 => Payload::Empty,
            1 => Payload::Frame { frame: r.u16()?, code_len: r.u16()? },
            2 => Payload::Task(r.u16()?),
            3 => {
                let rest = r.rest();
                if !rest.len().is_multiple_of(4) {
                    return Err(GateError::Malformed);
                }
                Payload::Cells(rest.chunks(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            }
            4 => Payload::Index(r.u16()?),
            5 => Payload::Blob(r.rest().to_vec()),
            6 => Payload::Status(Status {
                now_us: r.u64()?,
                live_tasks: r.u16()?,
                mask: r.u32()?,
                cs_free: r.u32()?,
                words: r.u16()?,
                powered: r.u8()? != 0,
            }),
            7 => Payload::Output(decode_output(&mut r)?),
            _ => return Err(GateError::Malformed),
        }),
        0x81 => Response::CompileError {
            frame: r.u16()?,
            pos: r.u16()?,
            msg: String::from_utf8_lossy(r.rest()).into_owned(),
        },
        0x82 => Response::VmError(r.i16()?),
        0x83 => Response::Suspended { pc: r.u16()? },
        0x84 => Response::Error(String::from_utf8_lossy(r.rest()).into_owned()),
        wire::NAK => Response::Nak,
        k => return Err(GateError::Kind(k)),
    };
    if r.is_empty() {
        Ok(resp)
    } else {
        Err(GateError::Malformed)
    }
}

fn frame(resp: &Response) -> Vec<u8> {
    let (k, p) = encode_response(resp);
    wire::encode(k, &p).unwrap_or_else(|e| {
        let (k, p) = encode_response(&Response::Error(e.to_string()));
        wire::encode(k, &p).expect("short error frame")
    })
}

/// The message gate: a byte-stream front end for a node.
pub struct MessageGate {
    pub node: Node,
    rx: Decoder,
}

impl MessageGate {
    pub fn new(node: Node) -> Self {
        MessageGate { node, rx: Decoder::default() }
    }

    /// Feed received bytes; returns the response bytes for every complete
    /// frame among them. Corrupted frames are answered with NAK.
    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Vec<u8> {
        self.rx.push(bytes);
        let mut out = Vec::new();
        while let Some(f) = self.rx.next_frame() {
            let resp = match f {
                Err(WireError::Checksum) => Response::Nak,
                Err(e) => Response::Error(e.to_string()),
                Ok(f) => match decode_request(f.kind, &f.payload) {
                    Ok(req) => vmsys(&mut self.node, &req),
                    Err(e) => Response::Error(e.to_string()),
                },
            };
            out.extend(frame(&resp));
        }
        out
    }
}

/// Client side of a message gate held in-process.
pub struct MessageClient {
    pub gate: MessageGate,
    rx: Decoder,
}

impl MessageClient {
    pub fn new(node: Node) -> Self {
        MessageClient { gate: MessageGate::new(node), rx: Decoder::default() }
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, GateError> {
        let (k, p) = encode_request(req);
        let bytes = wire::encode(k, &p)?;
        let reply = self.gate.handle_bytes(&bytes);
        self.rx.push(&reply);
        let f = self.rx.next_frame().ok_or(WireError::Truncated)??;
        decode_response(f.kind, &f.payload)
    }
}
