//! LUT-based fixed-point functions.
//!
//! Scales: sigmoid and sine take and return values at 1:1000; `fplog10`
//! takes x at 1:10 and returns at 1:100.

use std::sync::OnceLock;

use crate::memory::Cell;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmoidLuts {
    /// `log10lut[i] = int(100 * log10((i + 10) / 10))`.
    pub log10lut: [u8; 100],
    pub sglut13: [u8; 24],
    pub sglut310: [u8; 6],
}

fn sigmoid_f64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log10_with(lut: &[u8; 100], x: i32) -> i32 {
    let mut x = x;
    let mut shift = 0;
    while x >= 100 {
        shift += 1;
        x /= 10;
    }
    shift * 100 + lut[(x - 10) as usize] as i32
}

/// Build the three tables; floating point is used only here.
pub fn build_sigmoid_luts() -> SigmoidLuts {
    let mut log10lut = [0u8; 100];
    for (i, v) in log10lut.iter_mut().enumerate() {
        *v = (((i + 10) as f64 / 10.0).log10() * 100.0) as u8;
    }
    let mut a: [Option<u8>; 24] = [None; 24];
    for k in 0..40 {
        let x = 1.0 + 0.05 * k as f64;
        let i = (log10_with(&log10lut, (x * 1000.0 / 5.0) as i32) / 2 - 65) as usize;
        if a[i].is_none() {
            a[i] = Some(((sigmoid_f64(x) * 1000.0) as i32 - 731) as u8);
        }
    }
    let mut b: [Option<u8>; 6] = [None; 6];
    for k in 0..70 {
        let x = 3.0 + 0.1 * k as f64;
        let i = (log10_with(&log10lut, (x * 1000.0 / 10.0) as i32) / 10 - 14) as usize;
        if b[i].is_none() {
            b[i] = Some(((sigmoid_f64(x) * 1000.0) as i32 - 952) as u8);
        }
    }
    SigmoidLuts {
        log10lut,
        sglut13: a.map(|v| v.expect("every sglut13 slot is written")),
        sglut310: b.map(|v| v.expect("every sglut310 slot is written")),
    }
}

pub fn luts() -> &'static SigmoidLuts {
    static L: OnceLock<SigmoidLuts> = OnceLock::new();
    L.get_or_init(build_sigmoid_luts)
}

/// `x` at 1:10 (x >= 10), result at 1:100. `None` below the domain.
pub fn fplog10(x: Cell) -> Option<Cell> {
    (x >= 10).then(|| log10_with(&luts().log10lut, x as i32) as Cell)
}

/// Segment lookup as listed: one LUT value per bin, no interpolation.
/// Worst-case error is about 2.2%.
pub fn fpsigmoid_literal(x: Cell) -> Cell {
    sigmoid_impl(x, false)
}

/// Segmented sigmoid with sub-bin interpolation from the log remainder.
pub fn fpsigmoid(x: Cell) -> Cell {
    sigmoid_impl(x, true)
}

fn sigmoid_impl(x: Cell, interp: bool) -> Cell {
    let l = luts();
    let mirror = x < 0;
    let x = (x as i32).abs();
    let y = if x >= 10000 {
        1000
    } else if x <= 1000 {
        500 + x * 231 / 1000
    } else if x < 3000 {
        let lg = log10_with(&l.log10lut, x / 5);
        let i = (lg / 2 - 65) as usize;
        let lo = l.sglut13[i] as i32 + 731;
        let hi = match l.sglut13.get(i + 1) {
            Some(&v) => v as i32 + 731,
            None => l.sglut310[0] as i32 + 952,
        };
        if interp {
            lo + (hi - lo) * (2 * (lg % 2) + 1) / 4
        } else {
            lo
        }
    } else {
        let lg = log10_with(&l.log10lut, x / 10);
        let i = (lg / 10 - 14) as usize;
        let lo = l.sglut310[i] as i32 + 952;
        let hi = l.sglut310.get(i + 1).map_or(1000, |&v| v as i32 + 952);
        if interp {
            lo + (hi - lo) * (2 * (lg % 10) + 1) / 20
        } else {
            lo
        }
    };
    (if mirror { 1000 - y } else { y }) as Cell
}

/// Base-10 log, x at 1:10 and y at 1:1000 (the 1:100 log scaled by 10).
pub fn fplog(x: Cell) -> Option<Cell> {
    fplog10(x).map(|v| v.saturating_mul(10))
}

pub fn fprelu(x: Cell) -> Cell {
    x.max(0)
}

const SIN_STEPS: i32 = 64;
const QUARTER: i32 = 1571;
const HALF: i32 = 3142;
const PERIOD: i32 = 6283;

fn sin_lut() -> &'static [i32; 65] {
    static L: OnceLock<[i32; 65]> = OnceLock::new();
    L.get_or_init(|| {
        let mut t = [0; 65];
        for (k, v) in t.iter_mut().enumerate() {
            let u = k as f64 * QUARTER as f64 / SIN_STEPS as f64;
            *v = ((u / 1000.0).sin() * 1000.0).round() as i32;
        }
        t
    })
}

fn quarter_sin(u: i32) -> i32 {
    let t = sin_lut();
    let p = u.clamp(0, QUARTER) * SIN_STEPS;
    let i = (p / QUARTER) as usize;
    let r = p % QUARTER;
    match t.get(i + 1) {
        Some(&next) => t[i] + ((next - t[i]) * r + QUARTER / 2) / QUARTER,
        None => t[i],
    }
}

/// Sine of `x` milliradians, result at 1:1000.
pub fn fpsin(x: Cell) -> Cell {
    let u = (x as i32).rem_euclid(PERIOD);
    let (u, neg) = if u >= HALF { (u - HALF, true) } else { (u, false) };
    let u = if u > QUARTER { HALF - u } else { u };
    let y = quarter_sin(u);
    (if neg { -y } else { y }) as Cell
}
