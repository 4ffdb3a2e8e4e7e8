//! Input-output system: host functions (FIOS) and host data arrays (DIOS)
//! reachable from VM programs, plus the host call-gates.
//!
//! Handles seen by programs are cells. A positive handle is the CS address of an
//! embedded array header, a negative handle `-(i+1)` names DIOS entry `i` (or FIOS
//! entry `i` where a function is expected), and 0 is the null handle.

pub mod gate;
pub mod wire;

use thiserror::Error;

use crate::memory::{Cell, CodeSegment};
use crate::vm::Exception;

pub const MAX_ARGS: u8 = 8;

pub type FiosFn = Box<dyn FnMut(&mut FiosCtx, &[i32]) -> Result<i32, Exception> + Send>;

pub struct FiosEntry {
    pub name: String,
    pub args: u8,
    pub argsize: u8,
    pub retsize: u8,
    callback: FiosFn,
}

impl std::fmt::Debug for FiosEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiosEntry")
            .field("name", &self.name)
            .field("args", &self.args)
            .field("argsize", &self.argsize)
            .field("retsize", &self.retsize)
            .finish()
    }
}

impl FiosEntry {
    /// Stack cells consumed by one invocation.
    pub fn arg_cells(&self) -> usize {
        self.args as usize * if self.argsize == 4 { 2 } else { 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiosEntry {
    pub name: String,
    /// Bytes per cell, 1..=4.
    pub size: u8,
    pub data: Vec<i32>,
}

impl DiosEntry {
    pub fn cells(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Store `v` truncated to the entry's cell width.
    pub fn set(&mut self, i: usize, v: i32) -> Option<()> {
        let v = match self.size {
            1 => v as i8 as i32,
            2 => v as i16 as i32,
            _ => v,
        };
        *self.data.get_mut(i)? = v;
        Some(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IosError {
    #[error("IOS table full")]
    TableFull,
    #[error("duplicate IOS name `{0}`")]
    Duplicate(String),
    #[error("bad IOS signature for `{0}`")]
    BadSignature(String),
    #[error("invalid IOS name `{0}`")]
    InvalidName(String),
}

/// What a FIOS callback can reach: embedded arrays, DIOS data and the clock.
pub struct FiosCtx<'a> {
    pub cs: &'a mut CodeSegment,
    pub dios: &'a mut [DiosEntry],
    pub now_us: u64,
}

impl FiosCtx<'_> {
    pub fn array(&self, handle: i32) -> Result<ArrayRef, Exception> {
        resolve_array(self.cs, self.dios, handle)
    }

    pub fn get(&self, a: ArrayRef, i: usize) -> Result<Cell, Exception> {
        array_get(self.cs, self.dios, a, i)
    }

    pub fn set(&mut self, a: ArrayRef, i: usize, v: Cell) -> Result<(), Exception> {
        array_set(self.cs, self.dios, a, i, v)
    }
}

#[derive(Default)]
pub struct Ios {
    fios: Vec<FiosEntry>,
    dios: Vec<DiosEntry>,
    max_fios: usize,
    max_dios: usize,
}

impl std::fmt::Debug for Ios {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ios").field("fios", &self.fios).field("dios", &self.dios).finish()
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 31 && name.bytes().all(|b| b.is_ascii_graphic() && b != b'(')
}

impl Ios {
    pub fn new(max_fios: usize, max_dios: usize) -> Self {
        Ios { fios: Vec::new(), dios: Vec::new(), max_fios, max_dios }
    }

    fn check_name(&self, name: &str) -> Result<(), IosError> {
        if !valid_name(name) {
            return Err(IosError::InvalidName(name.into()));
        }
        if self.fios_index(name).is_some() || self.dios_index(name).is_some() {
            return Err(IosError::Duplicate(name.into()));
        }
        Ok(())
    }

    /// Register a host function. `args` values are popped (last argument on top);
    /// a 4-byte value occupies two cells, msw below lsw.
    pub fn fios_add(
        &mut self,
        name: &str,
        callback: FiosFn,
        args: u8,
        argsize: u8,
        retsize: u8,
    ) -> Result<usize, IosError> {
        self.check_name(name)?;
        let sized = |s: u8| (1..=4).contains(&s) && s != 3;
        if args > MAX_ARGS || (args > 0 && !sized(argsize)) || (retsize != 0 && !sized(retsize)) {
            return Err(IosError::BadSignature(name.into()));
        }
        if self.fios.len() >= self.max_fios {
            return Err(IosError::TableFull);
        }
        self.fios.push(FiosEntry { name: name.into(), args, argsize, retsize, callback });
        Ok(self.fios.len() - 1)
    }

    /// Register a zero-initialised host data array of `cells` cells of `size` bytes.
    pub fn dios_add(&mut self, name: &str, cells: usize, size: u8) -> Result<usize, IosError> {
        self.dios_add_data(name, vec![0; cells], size)
    }

    pub fn dios_add_data(&mut self, name: &str, data: Vec<i32>, size: u8) -> Result<usize, IosError> {
        self.check_name(name)?;
        if !(1..=4).contains(&size) || data.is_empty() || data.len() > 0x7fff {
            return Err(IosError::BadSignature(name.into()));
        }
        if self.dios.len() >= self.max_dios {
            return Err(IosError::TableFull);
        }
        let mut e = DiosEntry { name: name.into(), size, data: vec![0; data.len()] };
        for (i, v) in data.into_iter().enumerate() {
            e.set(i, v);
        }
        self.dios.push(e);
        Ok(self.dios.len() - 1)
    }

    pub fn fios_index(&self, name: &str) -> Option<usize> {
        self.fios.iter().position(|e| e.name == name)
    }

    pub fn dios_index(&self, name: &str) -> Option<usize> {
        self.dios.iter().position(|e| e.name == name)
    }

    pub fn fios(&self) -> &[FiosEntry] {
        &self.fios
    }

    pub fn dios(&self) -> &[DiosEntry] {
        &self.dios
    }

    pub fn dios_mut(&mut self) -> &mut [DiosEntry] {
        &mut self.dios
    }

    pub fn dios_by_name(&self, name: &str) -> Option<&DiosEntry> {
        self.dios.iter().find(|e| e.name == name)
    }

    pub fn dios_by_name_mut(&mut self, name: &str) -> Option<&mut DiosEntry> {
        self.dios.iter_mut().find(|e| e.name == name)
    }

    /// Invoke FIOS entry `idx` with already-popped arguments.
    pub fn call(
        &mut self,
        idx: usize,
        cs: &mut CodeSegment,
        now_us: u64,
        args: &[i32],
    ) -> Result<i32, Exception> {
        let Ios { fios, dios, .. } = self;
        let entry = fios.get_mut(idx).ok_or(Exception::Trap)?;
        let mut ctx = FiosCtx { cs, dios, now_us };
        (entry.callback)(&mut ctx, args)
    }
}

/// Handle of a DIOS entry.
pub fn dios_handle(idx: usize) -> Cell {
    -(idx as i32 + 1) as Cell
}

/// DIOS index named by a negative handle.
pub fn handle_index(h: i32) -> Option<usize> {
    (h < 0).then(|| (-(h + 1)) as usize)
}

/// A resolved, bounds-known cell array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayRef {
    /// Embedded array; `base` is the address of its first cell.
    Cs { base: usize, len: usize },
    Dios { idx: usize, len: usize },
}

impl ArrayRef {
    pub fn len(&self) -> usize {
        match *self {
            ArrayRef::Cs { len, .. } | ArrayRef::Dios { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Resolve a handle; CS arrays must lie inside one allocated frame.
pub fn resolve_array(cs: &CodeSegment, dios: &[DiosEntry], handle: i32) -> Result<ArrayRef, Exception> {
    if let Some(idx) = handle_index(handle) {
        let e = dios.get(idx).ok_or(Exception::Io)?;
        return Ok(ArrayRef::Dios { idx, len: e.cells() });
    }
    if handle <= 0 {
        return Err(Exception::Io);
    }
    let h = handle as usize;
    let len = cs.read_u16(h).ok_or(Exception::Io)? as usize;
    let f = cs.frame_at(h).ok_or(Exception::Io)?;
    if h + 2 + 2 * len > f.end() {
        return Err(Exception::Io);
    }
    Ok(ArrayRef::Cs { base: h + 2, len })
}

pub fn array_get(cs: &CodeSegment, dios: &[DiosEntry], a: ArrayRef, i: usize) -> Result<Cell, Exception> {
    if i >= a.len() {
        return Err(Exception::Io);
    }
    match a {
        ArrayRef::Cs { base, .. } => cs.read_cell(base + 2 * i).ok_or(Exception::Io),
        ArrayRef::Dios { idx, .. } => {
            Ok(dios[idx].data[i].clamp(Cell::MIN as i32, Cell::MAX as i32) as Cell)
        }
    }
}

pub fn array_set(
    cs: &mut CodeSegment,
    dios: &mut [DiosEntry],
    a: ArrayRef,
    i: usize,
    v: Cell,
) -> Result<(), Exception> {
    if i >= a.len() {
        return Err(Exception::Io);
    }
    match a {
        ArrayRef::Cs { base, .. } => cs.write_cell(base + 2 * i, v).ok_or(Exception::Io),
        ArrayRef::Dios { idx, .. } => dios[idx].set(i, v as i32).ok_or(Exception::Io),
    }
}
