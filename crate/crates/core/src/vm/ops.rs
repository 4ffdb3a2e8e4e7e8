//! Core word semantics and the opcode dispatch table.

use super::{CatchPoint, Event, Exception, Handler, Stop, Task, Vm, RS_HANDLER, RS_NESTED, RS_TASK_END};
use crate::dsp::vector;
use crate::ios::{array_get, array_set, handle_index, resolve_array, ArrayRef};
use crate::isa::WordList;
use crate::memory::Cell;

type R = Result<(), Stop>;

const NESTED_STEP_LIMIT: u64 = 100_000;

pub(super) fn build_dispatch(wl: &WordList) -> [Handler; 128] {
    let mut table: [Handler; 128] = [illegal; 128];
    for w in wl.words() {
        if let Some(h) = handler_for(&w.tag) {
            table[w.opcode as usize] = h;
        }
    }
    table
}

fn handler_for(tag: &str) -> Option<Handler> {
    Some(match tag {
        "colon" | "else" | "again" | "repeat" => jump,
        "semicolon" | "exit" => ret,
        "if" | "while" | "until" => branch_zero,
        "do" => do_,
        "loop" => loop_,
        "loop_i" => loop_i,
        "loop_j" => loop_j,
        "end" => end,
        "var" => skip_var,
        "array" => skip_array,
        "addr" => lit16,
        "print_str" => print_str,
        "exception" => exception,
        "catch" => catch,
        "throw" => throw,
        "call" => call,
        "ios_call" => ios_call,
        "dios_ref" => dios_ref,
        "dup" => dup,
        "drop" => drop,
        "swap" => swap,
        "over" => over,
        "rot" => rot,
        "nip" => nip,
        "tuck" => tuck,
        "pick" => pick,
        "depth" => depth,
        "dup2" => dup2,
        "drop2" => drop2,
        "add" => add,
        "sub" => sub,
        "mul" => mul,
        "div" => div,
        "mod" => modulo,
        "muldiv" => muldiv,
        "negate" => negate,
        "abs" => abs,
        "min" => min,
        "max" => max,
        "inc" => inc,
        "dec" => dec,
        "and" => and,
        "or" => or,
        "xor" => xor,
        "invert" => invert,
        "not" | "zero_eq" => zero_eq,
        "lshift" => lshift,
        "rshift" => rshift,
        "eq" => eq,
        "ne" => ne,
        "lt" => lt,
        "gt" => gt,
        "le" => le,
        "ge" => ge,
        "zero_lt" => zero_lt,
        "dadd" => dadd,
        "dsub" => dsub,
        "dprint" => dprint,
        "s_to_d" => s_to_d,
        "d_to_s" => d_to_s,
        "dlt" => dlt,
        "fetch" => fetch,
        "store" => store,
        "plus_store" => plus_store,
        "read" => read,
        "write" => write,
        "push" => push,
        "pop" => pop,
        "get" => get,
        "print" => print,
        "cr" => cr,
        "emit" => emit,
        "vecprint" => vecprint,
        "out" => out,
        "in" => input,
        "send" => send,
        "sendn" => sendn,
        "receive" => receive,
        "yield" => yield_,
        "sleep" => sleep,
        "await" => await_,
        "task" => task,
        "vecload" => vecload,
        "vecscale" => vecscale,
        "vecadd" => vecadd,
        "vecmul" => vecmul,
        "vecfold" => vecfold,
        "vecmap" => vecmap,
        "dotprod" => dotprod,
        _ => return None,
    })
}

fn flag(b: bool) -> Cell {
    if b { -1 } else { 0 }
}

#[inline]
fn operand(vm: &Vm, t: &mut Task) -> Result<u16, Stop> {
    let v = vm.cs.read_u16(t.ip).ok_or(Exception::Trap)?;
    t.ip += 2;
    Ok(v)
}

fn illegal(_: &mut Vm, _: &mut Task) -> R {
    Err(Exception::Trap.into())
}

// control flow

fn jump(vm: &mut Vm, t: &mut Task) -> R {
    t.ip = operand(vm, t)? as usize;
    Ok(())
}

fn branch_zero(vm: &mut Vm, t: &mut Task) -> R {
    let target = operand(vm, t)?;
    if t.ds.pop()? == 0 {
        t.ip = target as usize;
    }
    Ok(())
}

fn ret(vm: &mut Vm, t: &mut Task) -> R {
    let a = t.rs.pop()? as u16;
    match a {
        RS_TASK_END => Err(Stop::End),
        RS_NESTED => Err(Stop::NestedReturn),
        RS_HANDLER => {
            let cp = t.catch.ok_or(Exception::Trap)?;
            t.in_handler = false;
            t.rs.truncate(cp.rs as usize);
            t.fs.truncate(cp.fs as usize);
            t.calls.retain(|c| c.2 <= cp.rs);
            t.ip = cp.pc as usize;
            Ok(())
        }
        _ => {
            if vm.cfg.profile {
                if let Some((w, s0, _)) = t.calls.pop() {
                    vm.profile.record_word(w, t.stats.steps - s0);
                }
            }
            t.ip = a as usize;
            Ok(())
        }
    }
}

fn call(vm: &mut Vm, t: &mut Task) -> R {
    let target = operand(vm, t)?;
    t.rs.push(t.ip as Cell)?;
    if vm.cfg.profile {
        t.calls.push((target, t.stats.steps, t.rs.depth() as u16));
    }
    t.ip = target as usize;
    Ok(())
}

/// `do` carries the exit address; the body is skipped when start >= limit.
fn do_(vm: &mut Vm, t: &mut Task) -> R {
    let exit = operand(vm, t)?;
    let start = t.ds.pop()?;
    let limit = t.ds.pop()?;
    if start >= limit {
        t.ip = exit as usize;
        return Ok(());
    }
    t.fs.push(limit)?;
    t.fs.push(start)?;
    Ok(())
}

fn loop_(vm: &mut Vm, t: &mut Task) -> R {
    let body = operand(vm, t)?;
    let i = t.fs.peek(0)?.wrapping_add(1);
    let limit = t.fs.peek(1)?;
    if i < limit {
        *t.fs.peek_mut(0)? = i;
        t.ip = body as usize;
    } else {
        t.fs.truncate(t.fs.depth() - 2);
    }
    Ok(())
}

fn loop_i(_: &mut Vm, t: &mut Task) -> R {
    t.ds.push(t.fs.peek(0)?)?;
    Ok(())
}

fn loop_j(_: &mut Vm, t: &mut Task) -> R {
    t.ds.push(t.fs.peek(2)?)?;
    Ok(())
}

fn end(_: &mut Vm, _: &mut Task) -> R {
    Err(Stop::End)
}

fn skip_var(_: &mut Vm, t: &mut Task) -> R {
    t.ip += 2;
    Ok(())
}

fn skip_array(vm: &mut Vm, t: &mut Task) -> R {
    let n = operand(vm, t)?;
    t.ip += 2 * n as usize;
    Ok(())
}

fn lit16(vm: &mut Vm, t: &mut Task) -> R {
    let v = operand(vm, t)?;
    t.ds.push(v as Cell)?;
    Ok(())
}

fn print_str(vm: &mut Vm, t: &mut Task) -> R {
    let n = vm.cs.read_u8(t.ip).ok_or(Exception::Trap)? as usize;
    let s = vm.cs.bytes().get(t.ip + 1..t.ip + 1 + n).ok_or(Exception::Trap)?;
    let s = String::from_utf8_lossy(s).into_owned();
    vm.output.text(&s);
    t.ip += 1 + n;
    Ok(())
}

// exceptions

/// ( handler code -- ) bind a handler word to an exception.
fn exception(vm: &mut Vm, t: &mut Task) -> R {
    let code = t.ds.pop()?;
    let h = t.ds.pop()?;
    if Exception::from_code(code as i32).is_none() {
        return Err(Exception::Trap.into());
    }
    if h == 0 {
        vm.handlers.remove(&code);
    } else {
        vm.checked_addr(h).map_err(|_| Exception::Trap)?;
        vm.handlers.insert(code, h as u16);
    }
    Ok(())
}

/// Install a catch point here and push the pending exception code (or 0).
fn catch(_: &mut Vm, t: &mut Task) -> R {
    t.catch = Some(CatchPoint { pc: t.op_pc as u16, rs: t.rs.depth() as u16, fs: t.fs.depth() as u16 });
    let code = t.pending.take().unwrap_or(0);
    t.ds.push(code)?;
    Ok(())
}

fn throw(_: &mut Vm, t: &mut Task) -> R {
    let code = t.ds.pop()?;
    if code == 0 {
        return Ok(());
    }
    Err(Exception::from_code(code as i32).unwrap_or(Exception::Trap).into())
}

// IOS

fn ios_call(vm: &mut Vm, t: &mut Task) -> R {
    let idx = operand(vm, t)? as usize;
    let e = vm.ios.fios().get(idx).ok_or(Exception::Trap)?;
    let (args, wide, retsize) = (e.args as usize, e.argsize == 4, e.retsize);
    t.ds.need(e.arg_cells())?;
    let mut a = [0i32; crate::ios::MAX_ARGS as usize];
    for k in (0..args).rev() {
        a[k] = if wide { t.ds.pop2()? } else { t.ds.pop()? as i32 };
    }
    let now = vm.now_us();
    let r = vm.ios.call(idx, &mut vm.cs, now, &a[..args])?;
    match retsize {
        0 => {}
        4 => t.ds.push2(r)?,
        _ => t.ds.push(r as Cell)?,
    }
    Ok(())
}

fn dios_ref(vm: &mut Vm, t: &mut Task) -> R {
    let idx = operand(vm, t)? as usize;
    t.ds.push(crate::ios::dios_handle(idx))?;
    Ok(())
}

// stack words

fn dup(_: &mut Vm, t: &mut Task) -> R {
    t.ds.push(t.ds.peek(0)?)?;
    Ok(())
}

fn drop(_: &mut Vm, t: &mut Task) -> R {
    t.ds.pop()?;
    Ok(())
}

fn swap(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    t.ds.push(b)?;
    t.ds.push(a)?;
    Ok(())
}

fn over(_: &mut Vm, t: &mut Task) -> R {
    t.ds.push(t.ds.peek(1)?)?;
    Ok(())
}

fn rot(_: &mut Vm, t: &mut Task) -> R {
    let c = t.ds.pop()?;
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    t.ds.push(b)?;
    t.ds.push(c)?;
    t.ds.push(a)?;
    Ok(())
}

fn nip(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    t.ds.pop()?;
    t.ds.push(b)?;
    Ok(())
}

fn tuck(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    t.ds.push(b)?;
    t.ds.push(a)?;
    t.ds.push(b)?;
    Ok(())
}

fn pick(_: &mut Vm, t: &mut Task) -> R {
    let n = t.ds.pop()?;
    if n < 0 {
        return Err(Exception::Stack.into());
    }
    t.ds.push(t.ds.peek(n as usize)?)?;
    Ok(())
}

fn depth(_: &mut Vm, t: &mut Task) -> R {
    t.ds.push(t.ds.depth() as Cell)?;
    Ok(())
}

fn dup2(_: &mut Vm, t: &mut Task) -> R {
    let (a, b) = (t.ds.peek(1)?, t.ds.peek(0)?);
    t.ds.push(a)?;
    t.ds.push(b)?;
    Ok(())
}

fn drop2(_: &mut Vm, t: &mut Task) -> R {
    t.ds.need(2)?;
    t.ds.truncate(t.ds.depth() - 2);
    Ok(())
}

// arithmetic and logic

macro_rules! binop {
    ($($name:ident = |$a:ident, $b:ident| $e:expr;)*) => {
        $(fn $name(_: &mut Vm, t: &mut Task) -> R {
            let $b = t.ds.pop()?;
            let $a = t.ds.pop()?;
            t.ds.push($e)?;
            Ok(())
        })*
    };
}

macro_rules! unop {
    ($($name:ident = |$a:ident| $e:expr;)*) => {
        $(fn $name(_: &mut Vm, t: &mut Task) -> R {
            let top = t.ds.peek_mut(0)?;
            let $a = *top;
            *top = $e;
            Ok(())
        })*
    };
}

binop! {
    add = |a, b| a.wrapping_add(b);
    sub = |a, b| a.wrapping_sub(b);
    mul = |a, b| a.wrapping_mul(b);
    min = |a, b| a.min(b);
    max = |a, b| a.max(b);
    and = |a, b| a & b;
    or = |a, b| a | b;
    xor = |a, b| a ^ b;
    lshift = |a, b| ((a as u16) << (b as u16 & 15)) as Cell;
    rshift = |a, b| ((a as u16) >> (b as u16 & 15)) as Cell;
    eq = |a, b| flag(a == b);
    ne = |a, b| flag(a != b);
    lt = |a, b| flag(a < b);
    gt = |a, b| flag(a > b);
    le = |a, b| flag(a <= b);
    ge = |a, b| flag(a >= b);
}

unop! {
    negate = |a| a.wrapping_neg();
    abs = |a| a.wrapping_abs();
    inc = |a| a.wrapping_add(1);
    dec = |a| a.wrapping_sub(1);
    invert = |a| !a;
    zero_eq = |a| flag(a == 0);
    zero_lt = |a| flag(a < 0);
}

fn div(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    if b == 0 {
        return Err(Exception::DivByZero.into());
    }
    t.ds.push(a.wrapping_div(b))?;
    Ok(())
}

fn modulo(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    if b == 0 {
        return Err(Exception::DivByZero.into());
    }
    t.ds.push(a.wrapping_rem(b))?;
    Ok(())
}

/// ( a b c -- a*b/c ) with a 32-bit intermediate product.
fn muldiv(_: &mut Vm, t: &mut Task) -> R {
    let c = t.ds.pop()? as i32;
    let b = t.ds.pop()? as i32;
    let a = t.ds.pop()? as i32;
    if c == 0 {
        return Err(Exception::DivByZero.into());
    }
    t.ds.push(((a * b) / c) as Cell)?;
    Ok(())
}

fn dadd(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop2()?;
    let a = t.ds.pop2()?;
    t.ds.push2(a.wrapping_add(b))?;
    Ok(())
}

fn dsub(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop2()?;
    let a = t.ds.pop2()?;
    t.ds.push2(a.wrapping_sub(b))?;
    Ok(())
}

fn dlt(_: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop2()?;
    let a = t.ds.pop2()?;
    t.ds.push(flag(a < b))?;
    Ok(())
}

fn dprint(vm: &mut Vm, t: &mut Task) -> R {
    let v = t.ds.pop2()?;
    vm.output.text(&format!("{v} "));
    Ok(())
}

fn s_to_d(_: &mut Vm, t: &mut Task) -> R {
    let v = t.ds.pop()?;
    t.ds.push2(v as i32)?;
    Ok(())
}

fn d_to_s(_: &mut Vm, t: &mut Task) -> R {
    let v = t.ds.pop2()?;
    t.ds.push(v as Cell)?;
    Ok(())
}

// memory

/// Cell behind an address: a frame variable or a scalar DIOS entry.
fn fetch(vm: &mut Vm, t: &mut Task) -> R {
    let a = t.ds.pop()?;
    t.ds.push(vm.guard_value(a)?)?;
    Ok(())
}

fn write_cell(vm: &mut Vm, a: Cell, v: Cell) -> Result<(), Exception> {
    if let Some(i) = handle_index(a as i32) {
        let e = vm.ios.dios_mut().get_mut(i).ok_or(Exception::Io)?;
        return e.set(0, v as i32).ok_or(Exception::Io);
    }
    let addr = vm.checked_addr(a)?;
    vm.cs.write_cell(addr, v).ok_or(Exception::Io)
}

fn store(vm: &mut Vm, t: &mut Task) -> R {
    let a = t.ds.pop()?;
    let v = t.ds.pop()?;
    write_cell(vm, a, v)?;
    Ok(())
}

fn plus_store(vm: &mut Vm, t: &mut Task) -> R {
    let a = t.ds.pop()?;
    let n = t.ds.pop()?;
    let v = vm.guard_value(a)?;
    write_cell(vm, a, v.wrapping_add(n))?;
    Ok(())
}

fn array(vm: &Vm, h: Cell) -> Result<ArrayRef, Exception> {
    resolve_array(&vm.cs, vm.ios.dios(), h as i32)
}

fn is_scalar_dios(vm: &Vm, h: Cell) -> bool {
    handle_index(h as i32).and_then(|i| vm.ios.dios().get(i)).is_some_and(|e| e.is_scalar())
}

fn aget(vm: &Vm, a: ArrayRef, i: Cell) -> Result<Cell, Exception> {
    if i < 0 {
        return Err(Exception::Io);
    }
    array_get(&vm.cs, vm.ios.dios(), a, i as usize)
}

fn aset(vm: &mut Vm, a: ArrayRef, i: Cell, v: Cell) -> Result<(), Exception> {
    if i < 0 {
        return Err(Exception::Io);
    }
    array_set(&mut vm.cs, vm.ios.dios_mut(), a, i as usize, v)
}

/// Scalar DIOS: ( addr -- v ); arrays: ( index addr -- v ).
fn read(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    if is_scalar_dios(vm, h) {
        t.ds.push(vm.guard_value(h)?)?;
        return Ok(());
    }
    let i = t.ds.pop()?;
    let a = array(vm, h)?;
    t.ds.push(aget(vm, a, i)?)?;
    Ok(())
}

/// Scalar DIOS: ( v addr -- ); arrays: ( v index addr -- ).
fn write(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    if is_scalar_dios(vm, h) {
        let v = t.ds.pop()?;
        write_cell(vm, h, v)?;
        return Ok(());
    }
    let i = t.ds.pop()?;
    let v = t.ds.pop()?;
    let a = array(vm, h)?;
    aset(vm, a, i, v)?;
    Ok(())
}

/// Softcore stack in an array: cell 0 counts the live values.
fn push(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    let v = t.ds.pop()?;
    let a = array(vm, h)?;
    let n = aget(vm, a, 0)?;
    if n < 0 || n as usize + 1 >= a.len() {
        return Err(Exception::Io.into());
    }
    aset(vm, a, n + 1, v)?;
    aset(vm, a, 0, n + 1)?;
    Ok(())
}

fn pop(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    let a = array(vm, h)?;
    let n = aget(vm, a, 0)?;
    if n <= 0 {
        return Err(Exception::Io.into());
    }
    let v = aget(vm, a, n)?;
    aset(vm, a, 0, n - 1)?;
    t.ds.push(v)?;
    Ok(())
}

/// ( n addr -- v ) copy of the n-th value from the top (0 = top).
fn get(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    let k = t.ds.pop()?;
    let a = array(vm, h)?;
    let n = aget(vm, a, 0)?;
    if k < 0 || k >= n {
        return Err(Exception::Io.into());
    }
    t.ds.push(aget(vm, a, n - k)?)?;
    Ok(())
}

// output

fn print(vm: &mut Vm, t: &mut Task) -> R {
    let v = t.ds.pop()?;
    vm.output.text(&format!("{v} "));
    Ok(())
}

fn cr(vm: &mut Vm, _: &mut Task) -> R {
    vm.output.text("\n");
    Ok(())
}

fn emit(vm: &mut Vm, t: &mut Task) -> R {
    let c = t.ds.pop()?;
    vm.output.text(&char::from(c as u8).to_string());
    Ok(())
}

fn vecprint(vm: &mut Vm, t: &mut Task) -> R {
    let h = t.ds.pop()?;
    let v = load(vm, h)?;
    let s: String = v.iter().map(|x| format!("{x} ")).collect();
    vm.output.text(&s);
    Ok(())
}

fn out(vm: &mut Vm, t: &mut Task) -> R {
    let v = t.ds.pop()?;
    vm.output.value(v);
    Ok(())
}

// synchronisation and communication.
// Blocking words leave their operands in place and suspend on their own
// address; when resumed they execute again and find `wake` set.

fn input(vm: &mut Vm, t: &mut Task) -> R {
    t.wake = None;
    match vm.links.input.pop_front() {
        Some(v) => {
            t.ds.push(v)?;
            Ok(())
        }
        None => Err(Stop::Suspend(Event::Input)),
    }
}

fn send(vm: &mut Vm, t: &mut Task) -> R {
    t.wake = None;
    let dst = t.ds.peek(0)?;
    t.ds.need(2)?;
    if !vm.links.is_peer(dst) {
        return Err(Exception::Io.into());
    }
    if !vm.links.has_room(dst, 1) {
        return Err(Stop::Suspend(Event::Send { dst, cells: 1 }));
    }
    t.ds.pop()?;
    let v = t.ds.pop()?;
    vm.links.enqueue(dst, v);
    Ok(())
}

/// ( length offset dataaddr dstaddr -- )
fn sendn(vm: &mut Vm, t: &mut Task) -> R {
    t.wake = None;
    t.ds.need(4)?;
    let dst = t.ds.peek(0)?;
    let h = t.ds.peek(1)?;
    let off = t.ds.peek(2)?;
    let len = t.ds.peek(3)?;
    if !vm.links.is_peer(dst) || len < 0 || off < 0 || len as usize > vm.links.capacity {
        return Err(Exception::Io.into());
    }
    let a = array(vm, h)?;
    if off as usize + len as usize > a.len() {
        return Err(Exception::Io.into());
    }
    if !vm.links.has_room(dst, len as usize) {
        return Err(Stop::Suspend(Event::Send { dst, cells: len as u16 }));
    }
    t.ds.truncate(t.ds.depth() - 4);
    for i in 0..len {
        let v = aget(vm, a, off + i)?;
        vm.links.enqueue(dst, v);
    }
    Ok(())
}

fn receive(vm: &mut Vm, t: &mut Task) -> R {
    t.wake = None;
    let src = t.ds.peek(0)?;
    if !vm.links.is_peer(src) {
        return Err(Exception::Io.into());
    }
    match vm.links.dequeue(src) {
        Some(v) => {
            *t.ds.peek_mut(0)? = v;
            Ok(())
        }
        None => Err(Stop::Suspend(Event::Receive { src })),
    }
}

fn yield_(_: &mut Vm, t: &mut Task) -> R {
    match t.wake.take() {
        Some(_) => Ok(()),
        None => Err(Stop::Suspend(Event::Yield)),
    }
}

fn ms_to_us(ms: Cell) -> u64 {
    ms.max(0) as u64 * 1000
}

/// ( millisec -- )
fn sleep(vm: &mut Vm, t: &mut Task) -> R {
    let ms = t.ds.peek(0)?;
    if t.wake.take().is_some() {
        t.ds.pop()?;
        return Ok(());
    }
    Err(Stop::Suspend(Event::Timeout { at_us: vm.now_us() + ms_to_us(ms) }))
}

/// ( millisec value varaddr -- status ), status 0 = event, 1 = timeout.
/// A non-positive timeout waits for the event only.
fn await_(vm: &mut Vm, t: &mut Task) -> R {
    t.ds.need(3)?;
    let var = t.ds.peek(0)?;
    let value = t.ds.peek(1)?;
    let ms = t.ds.peek(2)?;
    let status = match t.wake.take() {
        Some(super::Wake::Timeout) => 1,
        Some(super::Wake::Event) => 0,
        None => {
            if vm.guard_value(var)? != value {
                let timeout_at_us = if ms > 0 { vm.now_us() + ms_to_us(ms) } else { u64::MAX };
                return Err(Stop::Suspend(Event::Guard { var, value, timeout_at_us }));
            }
            0
        }
    };
    t.ds.truncate(t.ds.depth() - 3);
    t.ds.push(status)?;
    Ok(())
}

/// ( priority deadline-ms addr -- taskid ); deadline 0 means none.
fn task(vm: &mut Vm, t: &mut Task) -> R {
    let addr = t.ds.pop()?;
    let deadline = t.ds.pop()?;
    let prio = t.ds.pop()?;
    if addr <= 0 {
        return Err(Exception::Trap.into());
    }
    let frame = vm.cs.frame_at(addr as usize).ok_or(Exception::Trap)?.id;
    let dl = if deadline > 0 { vm.now_us() + ms_to_us(deadline) } else { u64::MAX };
    let id = vm.spawn(frame, addr as u16, prio, dl, true).map_err(|_| Exception::Trap)?;
    t.ds.push(id as Cell)?;
    Ok(())
}

// vectors

fn load(vm: &Vm, h: Cell) -> Result<Vec<Cell>, Exception> {
    let a = array(vm, h)?;
    (0..a.len()).map(|i| array_get(&vm.cs, vm.ios.dios(), a, i)).collect()
}

fn load_scale(vm: &Vm, h: Cell) -> Result<Option<Vec<Cell>>, Exception> {
    if h == 0 { Ok(None) } else { load(vm, h).map(Some) }
}

fn store_vec(vm: &mut Vm, h: Cell, v: &[Cell]) -> Result<(), Exception> {
    let a = array(vm, h)?;
    if a.len() != v.len() {
        return Err(Exception::Io);
    }
    for (i, &x) in v.iter().enumerate() {
        array_set(&mut vm.cs, vm.ios.dios_mut(), a, i, x)?;
    }
    Ok(())
}

fn dst_len(vm: &Vm, h: Cell) -> Result<usize, Exception> {
    Ok(array(vm, h)?.len())
}

fn vec_err(_: vector::VecError) -> Stop {
    Stop::Exc(Exception::Io)
}

/// ( srcvec srcoff dstvec -- )
fn vecload(vm: &mut Vm, t: &mut Task) -> R {
    let dst = t.ds.pop()?;
    let off = t.ds.pop()?;
    let src = t.ds.pop()?;
    if off < 0 {
        return Err(Exception::Io.into());
    }
    let n = dst_len(vm, dst)?;
    let a = array(vm, src)?;
    if off as usize + n > a.len() {
        return Err(Exception::Io.into());
    }
    let v: Vec<Cell> =
        (0..n).map(|i| array_get(&vm.cs, vm.ios.dios(), a, off as usize + i)).collect::<Result<_, _>>()?;
    store_vec(vm, dst, &v)?;
    Ok(())
}

fn vecscale(vm: &mut Vm, t: &mut Task) -> R {
    let s = t.ds.pop()?;
    let dst = t.ds.pop()?;
    let src = t.ds.pop()?;
    let scale = load_scale(vm, s)?;
    let r = vector::vecscale(&load(vm, src)?, scale.as_deref()).map_err(vec_err)?;
    store_vec(vm, dst, &r)?;
    Ok(())
}

fn zip_op(
    vm: &mut Vm,
    t: &mut Task,
    f: fn(&[Cell], &[Cell], Option<&[Cell]>) -> Result<Vec<Cell>, vector::VecError>,
) -> R {
    let s = t.ds.pop()?;
    let dst = t.ds.pop()?;
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    let scale = load_scale(vm, s)?;
    let r = f(&load(vm, a)?, &load(vm, b)?, scale.as_deref()).map_err(vec_err)?;
    store_vec(vm, dst, &r)?;
    Ok(())
}

fn vecadd(vm: &mut Vm, t: &mut Task) -> R {
    zip_op(vm, t, vector::vecadd)
}

fn vecmul(vm: &mut Vm, t: &mut Task) -> R {
    zip_op(vm, t, vector::vecmul)
}

/// ( invec wgtvec outvec scalevec -- )
fn vecfold(vm: &mut Vm, t: &mut Task) -> R {
    let s = t.ds.pop()?;
    let out = t.ds.pop()?;
    let w = t.ds.pop()?;
    let input = t.ds.pop()?;
    let m = dst_len(vm, out)?;
    let scale = load_scale(vm, s)?;
    let r = vector::vecfold(&load(vm, input)?, &load(vm, w)?, m, scale.as_deref()).map_err(vec_err)?;
    store_vec(vm, out, &r)?;
    Ok(())
}

/// ( srcvec dstvec func scalevec -- ); `func` is an IOS handle or a word address.
fn vecmap(vm: &mut Vm, t: &mut Task) -> R {
    let s = t.ds.pop()?;
    let func = t.ds.pop()?;
    let dst = t.ds.pop()?;
    let src = t.ds.pop()?;
    let scale = load_scale(vm, s)?;
    let input = load(vm, src)?;
    if input.len() != dst_len(vm, dst)? {
        return Err(Exception::Io.into());
    }
    let r = if let Some(idx) = handle_index(func as i32) {
        let e = vm.ios.fios().get(idx).ok_or(Exception::Trap)?;
        if e.args != 1 {
            return Err(Exception::Trap.into());
        }
        let now = vm.now_us();
        vector::vecmap(&input, scale.as_deref(), |x| vm.ios.call(idx, &mut vm.cs, now, &[x as i32]))?
    } else {
        vm.checked_addr(func).map_err(|_| Exception::Trap)?;
        vector::vecmap(&input, scale.as_deref(), |x| -> Result<i32, Stop> {
            t.ds.push(x)?;
            vm.call_nested(t, func as u16, NESTED_STEP_LIMIT)?;
            Ok(t.ds.pop()? as i32)
        })?
    };
    let r = r.map_err(vec_err)?;
    store_vec(vm, dst, &r)?;
    Ok(())
}

/// ( avec bvec -- msw lsw )
fn dotprod(vm: &mut Vm, t: &mut Task) -> R {
    let b = t.ds.pop()?;
    let a = t.ds.pop()?;
    let r = vector::dotprod(&load(vm, a)?, &load(vm, b)?).map_err(vec_err)?;
    t.ds.push2(r)?;
    Ok(())
}
