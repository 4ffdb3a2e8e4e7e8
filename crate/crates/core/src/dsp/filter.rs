//! In-place first-order IIR filters over a cell slice.
//!
//! `y[n] = y[n-1] + ((x[n] - y[n-1]) >> k)`, seeded with the first sample so
//! a constant signal is a fixed point.

use thiserror::Error;

use crate::memory::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("filter shift k={0} outside 1..=8")]
    BadK(i32),
}

fn check_k(k: i32) -> Result<u32, FilterError> {
    if (1..=8).contains(&k) {
        Ok(k as u32)
    } else {
        Err(FilterError::BadK(k))
    }
}

fn clamp(v: i32) -> Cell {
    v.clamp(Cell::MIN as i32, Cell::MAX as i32) as Cell
}

pub fn lowp(x: &mut [Cell], k: i32) -> Result<(), FilterError> {
    let k = check_k(k)?;
    let Some(&first) = x.first() else { return Ok(()) };
    let mut y = first as i32;
    for v in x.iter_mut() {
        y += (*v as i32 - y) >> k;
        *v = clamp(y);
    }
    Ok(())
}

pub fn highp(x: &mut [Cell], k: i32) -> Result<(), FilterError> {
    let orig = x.to_vec();
    lowp(x, k)?;
    for (v, o) in x.iter_mut().zip(orig) {
        *v = clamp(o as i32 - *v as i32);
    }
    Ok(())
}

/// Rectify, then low-pass.
pub fn hull(x: &mut [Cell], k: i32) -> Result<(), FilterError> {
    check_k(k)?;
    for v in x.iter_mut() {
        *v = v.saturating_abs();
    }
    lowp(x, k)
}
