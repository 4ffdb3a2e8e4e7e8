//! In-place text-to-bytecode compiler.
//!
//! Source text is copied into a fresh code frame and translated token by token
//! into bytecode written over the text already read. The write cursor never
//! passes the read cursor. When an encoding is longer than the text it replaces
//! (a 3-byte call for a one-letter word, say), the unread remainder of the frame
//! is shifted right first, growing the frame in place.

pub mod bytecode;

use std::collections::HashMap;

use thiserror::Error;

use crate::isa::{IsaTables, LookupMode, Opcodes};
use crate::ios::{dios_handle, Ios};
use crate::memory::{CodeSegment, Dictionary, FrameId, FrameState, MemError};
use crate::vm::Exception;
use bytecode::{encode_double, encode_short, fits_short};

/// Maximum nesting of control constructs within one frame.
pub const CONTROL_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileErrorKind {
    #[error("unknown word `{0}`")]
    UnknownWord(String),
    #[error("malformed literal `{0}`")]
    BadLiteral(String),
    #[error("literal `{0}` out of range")]
    LiteralRange(String),
    #[error("unterminated string")]
    UnterminatedString,
    #[error("unterminated comment")]
    UnterminatedComment,
    #[error("code segment exhausted")]
    CsExhausted,
    #[error("control nesting deeper than {CONTROL_DEPTH}")]
    ControlOverflow,
    #[error("`{0}` without matching opener")]
    ControlMismatch(String),
    #[error("unterminated `{0}`")]
    Unterminated(&'static str),
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("import of missing word `{0}`")]
    ImportMissing(String),
    #[error("export of undefined word `{0}`")]
    ExportUndefined(String),
    #[error("`{0}` is not usable in source")]
    HiddenWord(String),
    #[error("nested definition")]
    NestedDefinition,
    #[error("dictionary full")]
    DictionaryFull,
    #[error("source is not ASCII")]
    NotAscii,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("frame {frame} offset {offset}: {kind}")]
pub struct CompileError {
    pub frame: FrameId,
    /// Byte offset of the offending token in the original source text.
    pub offset: usize,
    pub kind: CompileErrorKind,
}

pub struct CompileEnv<'a> {
    pub cs: &'a mut CodeSegment,
    pub dict: &'a mut Dictionary,
    pub ios: &'a Ios,
    pub tables: &'a IsaTables,
    pub ops: &'a Opcodes,
    pub mode: LookupMode,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CompileOptions {
    /// Record every token as the compiler read it (for in-place safety checks).
    pub trace_tokens: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompileInfo {
    pub frame: FrameId,
    pub code_len: usize,
    /// Bytes of uninitialised arrays appended after the code.
    pub data_len: usize,
    /// Tokens translated (comments excluded).
    pub words: usize,
    /// Times the unread source had to be moved right.
    pub shifts: usize,
    /// Write-cursor <= read-cursor checks performed.
    pub cursor_checks: usize,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
enum ArrayLoc {
    Placed(u16),
    Pending(usize),
}

#[derive(Debug, Clone, Copy)]
enum Local {
    Var(u16),
    Array(ArrayLoc),
    Const(i32),
    Word { addr: u16, own: bool },
}

#[derive(Debug, Clone, Copy)]
enum Ctl {
    Colon(usize),
    If(usize),
    Else(usize),
    Begin(usize),
    While(usize),
    Do(usize),
}

/// Exception names usable after `exception` and as plain words.
pub const EXCEPTION_NAMES: [(&str, Exception); 6] = [
    ("trap", Exception::Trap),
    ("stack", Exception::Stack),
    ("interrupt", Exception::Interrupt),
    ("io", Exception::Io),
    ("timeout", Exception::Timeout),
    ("divbyzero", Exception::DivByZero),
];

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\n' | b'\r' | b'\t' | 0)
}

enum Number {
    Single(i32),
    Double(i32),
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x") {
        if hex.is_empty() || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        i64::from_str_radix(hex, 16).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// `None` if `tok` is not numeric at all.
fn parse_number(tok: &str) -> Option<Result<Number, CompileErrorKind>> {
    if let Some(body) = tok.strip_suffix('l') {
        let v = parse_int(body)?;
        if body.len() < 2 {
            return Some(Err(CompileErrorKind::BadLiteral(tok.into())));
        }
        return Some(match i32::try_from(v).ok().filter(|v| encode_double(*v).is_ok()) {
            Some(v) => Ok(Number::Double(v)),
            None => Err(CompileErrorKind::LiteralRange(tok.into())),
        });
    }
    let v = parse_int(tok)?;
    Some(if (i16::MIN as i64..=i16::MAX as i64).contains(&v) {
        Ok(Number::Single(v as i32))
    } else {
        Err(CompileErrorKind::LiteralRange(tok.into()))
    })
}

/// Copy `text` into a new frame (plus one trailing delimiter byte).
pub fn load_source(cs: &mut CodeSegment, text: &str) -> Result<FrameId, CompileError> {
    let err = |kind| CompileError { frame: 0, offset: 0, kind };
    if !text.is_ascii() {
        return Err(err(CompileErrorKind::NotAscii));
    }
    let id = cs.alloc_frame(text.len() + 1).map_err(|_| err(CompileErrorKind::CsExhausted))?;
    let start = cs.frame(id).unwrap().start;
    let bytes = cs.bytes_mut();
    bytes[start..start + text.len()].copy_from_slice(text.as_bytes());
    bytes[start + text.len()] = b'\n';
    Ok(id)
}

/// Load and compile `text`; on failure the frame is released again.
pub fn compile_text(
    env: &mut CompileEnv,
    text: &str,
    opts: CompileOptions,
) -> Result<CompileInfo, CompileError> {
    let id = load_source(env.cs, text)?;
    compile_frame(env, id, opts).inspect_err(|_| discard(env, id))
}

fn discard(env: &mut CompileEnv, id: FrameId) {
    env.dict.remove_frame(id);
    if let Some(f) = env.cs.frame_mut(id) {
        f.locked = false;
        f.persistent = false;
        f.task = None;
    }
    let _ = env.cs.free_frame(id);
}

/// Compile the source held in frame `id` in place.
pub fn compile_frame(
    env: &mut CompileEnv,
    id: FrameId,
    opts: CompileOptions,
) -> Result<CompileInfo, CompileError> {
    let f = env.cs.frame(id).ok_or(CompileError {
        frame: id,
        offset: 0,
        kind: CompileErrorKind::Expected("an existing frame"),
    })?;
    let (start, len) = (f.start, f.len);
    let mut cx = Cx {
        env,
        id,
        start,
        src_end: start + len,
        r: start,
        w: start,
        shifted: 0,
        tok_start: start,
        locals: HashMap::new(),
        control: Vec::new(),
        pending: Vec::new(),
        fixups: Vec::new(),
        info: CompileInfo { frame: id, ..Default::default() },
        trace: opts.trace_tokens,
    };
    cx.run()?;
    Ok(cx.info)
}

struct Cx<'e, 'a> {
    env: &'e mut CompileEnv<'a>,
    id: FrameId,
    start: usize,
    src_end: usize,
    r: usize,
    w: usize,
    shifted: usize,
    tok_start: usize,
    locals: HashMap<String, Local>,
    control: Vec<Ctl>,
    pending: Vec<usize>,
    fixups: Vec<(usize, usize, bool)>,
    info: CompileInfo,
    trace: bool,
}

type CResult<T> = Result<T, CompileError>;

impl Cx<'_, '_> {
    fn err(&self, kind: CompileErrorKind) -> CompileError {
        let offset = (self.tok_start - self.start).saturating_sub(self.shifted);
        CompileError { frame: self.id, offset, kind }
    }

    fn next_token(&mut self) -> Option<String> {
        let bytes = self.env.cs.bytes();
        while self.r < self.src_end && is_ws(bytes[self.r]) {
            self.r += 1;
        }
        if self.r == self.src_end {
            return None;
        }
        let s = self.r;
        while self.r < self.src_end && !is_ws(bytes[self.r]) {
            self.r += 1;
        }
        let tok = String::from_utf8_lossy(&bytes[s..self.r]).into_owned();
        if self.r < self.src_end {
            self.r += 1;
        }
        self.tok_start = s;
        if self.trace {
            self.info.tokens.push(tok.clone());
        }
        Some(tok)
    }

    fn expect_token(&mut self, what: &'static str) -> CResult<String> {
        self.next_token().ok_or_else(|| self.err(CompileErrorKind::Expected(what)))
    }

    /// Make room for the unread source to start at least `d` bytes later.
    fn shift(&mut self, d: usize) -> CResult<()> {
        let frame_end = self.env.cs.frame(self.id).unwrap().end();
        if self.src_end + d > frame_end {
            self.env
                .cs
                .extend_frame(self.id, self.src_end + d - frame_end)
                .map_err(|_| self.err(CompileErrorKind::CsExhausted))?;
        }
        self.env.cs.bytes_mut().copy_within(self.r..self.src_end, self.r + d);
        self.src_end += d;
        self.r += d;
        self.shifted += d;
        self.info.shifts += 1;
        Ok(())
    }

    /// Write `bytes` at the write cursor; returns their address.
    fn emit(&mut self, bytes: &[u8]) -> CResult<usize> {
        let need = self.w + bytes.len();
        if need > self.r {
            self.shift(need - self.r)?;
        }
        assert!(self.w + bytes.len() <= self.r, "write cursor passed read cursor");
        self.info.cursor_checks += 1;
        let at = self.w;
        self.env.cs.bytes_mut()[at..at + bytes.len()].copy_from_slice(bytes);
        self.w += bytes.len();
        Ok(at)
    }

    fn emit_op_addr(&mut self, op: u8, addr: u16) -> CResult<usize> {
        let [lo, hi] = addr.to_le_bytes();
        self.emit(&[op, lo, hi])
    }

    fn patch(&mut self, at: usize, target: usize) {
        let b = (target as u16).to_le_bytes();
        self.env.cs.bytes_mut()[at + 1..at + 3].copy_from_slice(&b);
    }

    /// Push a single-cell value: short literal or 3-byte `$` literal.
    fn emit_value(&mut self, v: i32) -> CResult<()> {
        match encode_short(v) {
            Some(b) => self.emit(&b)?,
            None => self.emit_op_addr(self.env.ops.addr, v as i16 as u16)?,
        };
        Ok(())
    }

    fn emit_pending_ref(&mut self, k: usize, force_wide: bool) -> CResult<()> {
        let wide = force_wide || self.env.cs.size() > bytecode::SHORT_MAX as usize;
        let at = if wide { self.emit_op_addr(self.env.ops.addr, 0)? } else { self.emit(&[0x80, 0])? };
        self.fixups.push((at, k, wide));
        Ok(())
    }

    fn push_ctl(&mut self, c: Ctl) -> CResult<()> {
        if self.control.len() >= CONTROL_DEPTH {
            return Err(self.err(CompileErrorKind::ControlOverflow));
        }
        self.control.push(c);
        Ok(())
    }

    fn mismatch(&self, tok: &str) -> CompileError {
        self.err(CompileErrorKind::ControlMismatch(tok.into()))
    }

    fn run(&mut self) -> CResult<()> {
        while let Some(tok) = self.next_token() {
            if tok.starts_with('(') {
                self.skip_comment()?;
                if self.trace {
                    self.info.tokens.pop();
                }
                continue;
            }
            self.info.words += 1;
            self.token(&tok)?;
        }
        if let Some(c) = self.control.last() {
            self.tok_start = self.src_end.saturating_sub(1).max(self.start);
            let what = match c {
                Ctl::Colon(_) => ":",
                Ctl::If(_) | Ctl::Else(_) => "if",
                Ctl::Begin(_) | Ctl::While(_) => "begin",
                Ctl::Do(_) => "do",
            };
            return Err(self.err(CompileErrorKind::Unterminated(what)));
        }
        self.emit(&[self.env.ops.end])?;
        self.finish()
    }

    fn skip_comment(&mut self) -> CResult<()> {
        let bytes = self.env.cs.bytes();
        let close = (self.tok_start..self.src_end).find(|&i| bytes[i] == b')');
        let Some(close) = close else {
            return Err(self.err(CompileErrorKind::UnterminatedComment));
        };
        self.r = close + 1;
        if self.r < self.src_end && is_ws(bytes[self.r]) {
            self.r += 1;
        }
        Ok(())
    }

    fn finish(&mut self) -> CResult<()> {
        let code_end = self.w;
        let data: usize = self.pending.iter().map(|n| 2 + 2 * n).sum();
        let frame_end = self.env.cs.frame(self.id).unwrap().end();
        if code_end + data > frame_end {
            self.env
                .cs
                .extend_frame(self.id, code_end + data - frame_end)
                .map_err(|_| self.err(CompileErrorKind::CsExhausted))?;
        }
        let mut headers = Vec::with_capacity(self.pending.len());
        let mut at = code_end;
        for &n in &self.pending {
            headers.push(at);
            let bytes = self.env.cs.bytes_mut();
            bytes[at..at + 2 + 2 * n].fill(0);
            bytes[at..at + 2].copy_from_slice(&(n as u16).to_le_bytes());
            at += 2 + 2 * n;
        }
        for &(pos, k, wide) in &self.fixups {
            let addr = headers[k];
            let bytes = self.env.cs.bytes_mut();
            if wide {
                bytes[pos + 1..pos + 3].copy_from_slice(&(addr as u16).to_le_bytes());
            } else {
                let b = encode_short(addr as i32).expect("short address checked at emission");
                bytes[pos..pos + 2].copy_from_slice(&b);
            }
        }
        let total = code_end + data - self.start;
        let _ = self.env.cs.shrink_frame(self.id, total);
        let f = self.env.cs.frame_mut(self.id).unwrap();
        f.state = FrameState::Compiled;
        self.info.code_len = code_end - self.start;
        self.info.data_len = data;
        Ok(())
    }

    fn token(&mut self, tok: &str) -> CResult<()> {
        if let Some(op) = self.env.tables.lookup(tok, self.env.mode) {
            if self.keyword(op, tok)? {
                return Ok(());
            }
        }
        if let Some(&l) = self.locals.get(tok) {
            return self.local(l);
        }
        if let Some(n) = parse_number(tok) {
            return match n.map_err(|k| self.err(k))? {
                Number::Single(v) => self.emit_value(v),
                Number::Double(v) => self.emit(&encode_double(v).unwrap()).map(drop),
            };
        }
        if let Some(op) = self.env.tables.lookup(tok, self.env.mode) {
            let ops = self.env.ops;
            if [ops.call, ops.ios_call, ops.dios_ref].contains(&op) {
                return Err(self.err(CompileErrorKind::HiddenWord(tok.into())));
            }
            return self.emit(&[op]).map(drop);
        }
        if let Some(e) = self.env.dict.lookup(tok) {
            let addr = e.addr;
            return self.emit_op_addr(self.env.ops.call, addr).map(drop);
        }
        if let Some(i) = self.env.ios.fios_index(tok) {
            return self.emit_op_addr(self.env.ops.ios_call, i as u16).map(drop);
        }
        if let Some(i) = self.env.ios.dios_index(tok) {
            return self.emit_op_addr(self.env.ops.dios_ref, i as u16).map(drop);
        }
        if let Some((_, e)) = EXCEPTION_NAMES.iter().find(|(n, _)| *n == tok) {
            return self.emit_value(e.code() as i32);
        }
        Err(self.err(CompileErrorKind::UnknownWord(tok.into())))
    }

    fn local(&mut self, l: Local) -> CResult<()> {
        match l {
            Local::Var(a) | Local::Array(ArrayLoc::Placed(a)) => self.emit_value(a as i32),
            Local::Array(ArrayLoc::Pending(k)) => self.emit_pending_ref(k, false),
            Local::Const(v) => self.emit_value(v),
            Local::Word { addr, .. } => self.emit_op_addr(self.env.ops.call, addr).map(drop),
        }
    }

    fn bind(&mut self, name: String, l: Local) {
        self.locals.insert(name, l);
    }

    /// Handle compile-time syntax words; `false` if `op` is an ordinary word.
    fn keyword(&mut self, op: u8, tok: &str) -> CResult<bool> {
        let ops = *self.env.ops;
        match op {
            _ if op == ops.colon => {
                if self.control.iter().any(|c| matches!(c, Ctl::Colon(_))) {
                    return Err(self.err(CompileErrorKind::NestedDefinition));
                }
                let name = self.expect_token("a word name")?;
                let at = self.emit_op_addr(op, 0)?;
                self.push_ctl(Ctl::Colon(at))?;
                self.bind(name, Local::Word { addr: self.w as u16, own: true });
            }
            _ if op == ops.semicolon => {
                let Some(Ctl::Colon(at)) = self.control.pop() else {
                    return Err(self.mismatch(tok));
                };
                self.emit(&[op])?;
                self.patch(at, self.w);
            }
            _ if op == ops.if_ => {
                let at = self.emit_op_addr(op, 0)?;
                self.push_ctl(Ctl::If(at))?;
            }
            _ if op == ops.else_ => {
                let Some(Ctl::If(at)) = self.control.pop() else {
                    return Err(self.mismatch(tok));
                };
                let here = self.emit_op_addr(op, 0)?;
                self.patch(at, self.w);
                self.push_ctl(Ctl::Else(here))?;
            }
            _ if op == ops.endif => match self.control.pop() {
                Some(Ctl::If(at)) | Some(Ctl::Else(at)) => self.patch(at, self.w),
                _ => return Err(self.mismatch(tok)),
            },
            _ if op == ops.begin => self.push_ctl(Ctl::Begin(self.w))?,
            _ if op == ops.until || op == ops.again => {
                let Some(Ctl::Begin(target)) = self.control.pop() else {
                    return Err(self.mismatch(tok));
                };
                self.emit_op_addr(op, target as u16)?;
            }
            _ if op == ops.while_ => {
                if !matches!(self.control.last(), Some(Ctl::Begin(_))) {
                    return Err(self.mismatch(tok));
                }
                let at = self.emit_op_addr(op, 0)?;
                self.push_ctl(Ctl::While(at))?;
            }
            _ if op == ops.repeat => {
                let (Some(Ctl::While(at)), Some(Ctl::Begin(target))) =
                    (self.control.pop(), self.control.pop())
                else {
                    return Err(self.mismatch(tok));
                };
                self.emit_op_addr(op, target as u16)?;
                self.patch(at, self.w);
            }
            _ if op == ops.do_ => {
                let at = self.emit_op_addr(op, 0)?;
                self.push_ctl(Ctl::Do(at))?;
            }
            _ if op == ops.loop_ => {
                let Some(Ctl::Do(at)) = self.control.pop() else {
                    return Err(self.mismatch(tok));
                };
                self.emit_op_addr(op, at as u16 + 3)?;
                self.patch(at, self.w);
            }
            _ if op == ops.var => {
                let name = self.expect_token("a variable name")?;
                let at = self.emit(&[op, 0, 0])?;
                self.bind(name, Local::Var(at as u16 + 1));
            }
            _ if op == ops.array => self.array(op)?,
            _ if op == ops.const_ => {
                let name = self.expect_token("a constant name")?;
                let v = self.expect_token("a constant value")?;
                let v = match parse_number(&v) {
                    Some(Ok(Number::Single(v))) => v,
                    Some(Err(k)) => return Err(self.err(k)),
                    _ => return Err(self.err(CompileErrorKind::BadLiteral(v))),
                };
                self.bind(name, Local::Const(v));
            }
            _ if op == ops.import => {
                let name = self.expect_token("a word name")?;
                let Some(e) = self.env.dict.lookup(&name) else {
                    return Err(self.err(CompileErrorKind::ImportMissing(name)));
                };
                let addr = e.addr;
                self.bind(name, Local::Word { addr, own: false });
            }
            _ if op == ops.export => {
                let name = self.expect_token("a word name")?;
                let Some(Local::Word { addr, own: true }) = self.locals.get(&name).copied() else {
                    return Err(self.err(CompileErrorKind::ExportUndefined(name)));
                };
                self.env
                    .dict
                    .define(&name, self.id, addr)
                    .map_err(|_| self.err(CompileErrorKind::DictionaryFull))?;
                self.env.cs.frame_mut(self.id).unwrap().locked = true;
            }
            _ if op == ops.addr => {
                let name = self.expect_token("a word name")?;
                self.address_of(&name)?;
            }
            _ if op == ops.print_str => self.string(op)?,
            _ if op == ops.exception => {
                let name = self.expect_token("an exception name")?;
                let code = self.exception_code(&name)?;
                self.emit(&encode_short(code).unwrap())?;
                self.emit(&[op])?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn exception_code(&self, name: &str) -> CResult<i32> {
        if let Some((_, e)) = EXCEPTION_NAMES.iter().find(|(n, _)| *n == name) {
            return Ok(e.code() as i32);
        }
        let v = match (self.locals.get(name), parse_number(name)) {
            (Some(Local::Const(v)), _) => *v,
            (_, Some(Ok(Number::Single(v)))) => v,
            _ => return Err(self.err(CompileErrorKind::Expected("an exception name"))),
        };
        if v < Exception::USER_MIN as i32 || !fits_short(v) {
            return Err(self.err(CompileErrorKind::LiteralRange(name.into())));
        }
        Ok(v)
    }

    fn address_of(&mut self, name: &str) -> CResult<()> {
        let op = self.env.ops.addr;
        let v: i32 = match self.locals.get(name).copied() {
            Some(Local::Word { addr, .. }) | Some(Local::Var(addr)) => addr as i32,
            Some(Local::Array(ArrayLoc::Placed(a))) => a as i32,
            Some(Local::Array(ArrayLoc::Pending(k))) => return self.emit_pending_ref(k, true),
            Some(Local::Const(_)) => return Err(self.err(CompileErrorKind::Expected("a word name"))),
            None => {
                if let Some(e) = self.env.dict.lookup(name) {
                    e.addr as i32
                } else if let Some(i) = self.env.ios.fios_index(name) {
                    dios_handle(i) as i32
                } else if let Some(i) = self.env.ios.dios_index(name) {
                    dios_handle(i) as i32
                } else {
                    return Err(self.err(CompileErrorKind::UnknownWord(name.into())));
                }
            }
        };
        self.emit_op_addr(op, v as i16 as u16).map(drop)
    }

    fn array(&mut self, op: u8) -> CResult<()> {
        let name = self.expect_token("an array name")?;
        let spec = self.expect_token("an array size or `{`")?;
        if spec == "{" {
            let mut cells = Vec::new();
            loop {
                let t = self.next_token().ok_or_else(|| self.err(CompileErrorKind::Unterminated("{")))?;
                if t == "}" {
                    break;
                }
                if t.starts_with('(') {
                    self.skip_comment()?;
                    continue;
                }
                let v = match parse_number(&t) {
                    Some(Ok(Number::Single(v))) => v,
                    Some(Err(k)) => return Err(self.err(k)),
                    _ => match self.locals.get(&t) {
                        Some(Local::Const(v)) => *v,
                        _ => return Err(self.err(CompileErrorKind::BadLiteral(t))),
                    },
                };
                cells.push(v as i16);
            }
            let mut bytes = Vec::with_capacity(3 + 2 * cells.len());
            bytes.push(op);
            bytes.extend_from_slice(&(cells.len() as u16).to_le_bytes());
            for c in cells {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            let at = self.emit(&bytes)?;
            self.bind(name, Local::Array(ArrayLoc::Placed(at as u16 + 1)));
        } else {
            let n = match parse_number(&spec) {
                Some(Ok(Number::Single(n))) if n >= 0 => n as usize,
                _ => match self.locals.get(&spec) {
                    Some(Local::Const(n)) if *n >= 0 => *n as usize,
                    _ => return Err(self.err(CompileErrorKind::BadLiteral(spec))),
                },
            };
            self.pending.push(n);
            self.bind(name, Local::Array(ArrayLoc::Pending(self.pending.len() - 1)));
        }
        Ok(())
    }

    fn string(&mut self, op: u8) -> CResult<()> {
        let bytes = self.env.cs.bytes();
        let s = self.r;
        let Some(close) = (s..self.src_end).find(|&i| bytes[i] == b'"') else {
            return Err(self.err(CompileErrorKind::UnterminatedString));
        };
        let text = bytes[s..close].to_vec();
        if text.len() > u8::MAX as usize {
            return Err(self.err(CompileErrorKind::LiteralRange("string".into())));
        }
        self.r = close + 1;
        if self.r < self.src_end && is_ws(bytes[self.r]) {
            self.r += 1;
        }
        let mut out = Vec::with_capacity(2 + text.len());
        out.push(op);
        out.push(text.len() as u8);
        out.extend_from_slice(&text);
        self.emit(&out).map(drop)
    }
}

impl From<MemError> for CompileErrorKind {
    fn from(_: MemError) -> Self {
        CompileErrorKind::CsExhausted
    }
}
