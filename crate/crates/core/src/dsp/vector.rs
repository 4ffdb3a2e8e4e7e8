//! Integer vector kernels for ANN forward passes.
//!
//! Element results are computed wide, then scaled (s > 0 multiplies, s < 0
//! divides by |s| truncating toward zero, s = 0 leaves the value) and finally
//! saturated to the cell range.

use thiserror::Error;

use crate::memory::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VecError {
    #[error("vector length mismatch")]
    Length,
    #[error("vector offset out of range")]
    Range,
}

pub fn saturate(v: i64) -> Cell {
    v.clamp(Cell::MIN as i64, Cell::MAX as i64) as Cell
}

pub fn apply_scale(v: i64, s: Cell) -> i64 {
    match s {
        0 => v,
        s if s > 0 => v * s as i64,
        s => v / -(s as i64),
    }
}

fn scale_of(scale: Option<&[Cell]>, i: usize) -> Cell {
    scale.map_or(0, |s| s[i])
}

fn check_scale(scale: Option<&[Cell]>, n: usize) -> Result<(), VecError> {
    match scale {
        Some(s) if s.len() != n => Err(VecError::Length),
        _ => Ok(()),
    }
}

/// `n` cells of `src` starting at `off`.
pub fn vecload(src: &[Cell], off: usize, n: usize) -> Result<Vec<Cell>, VecError> {
    src.get(off..off + n).map(<[Cell]>::to_vec).ok_or(VecError::Range)
}

pub fn vecscale(src: &[Cell], scale: Option<&[Cell]>) -> Result<Vec<Cell>, VecError> {
    check_scale(scale, src.len())?;
    Ok(src.iter().enumerate().map(|(i, &x)| saturate(apply_scale(x as i64, scale_of(scale, i)))).collect())
}

fn zip_with(
    a: &[Cell],
    b: &[Cell],
    scale: Option<&[Cell]>,
    f: impl Fn(i64, i64) -> i64,
) -> Result<Vec<Cell>, VecError> {
    if a.len() != b.len() {
        return Err(VecError::Length);
    }
    check_scale(scale, a.len())?;
    Ok((0..a.len())
        .map(|i| saturate(apply_scale(f(a[i] as i64, b[i] as i64), scale_of(scale, i))))
        .collect())
}

pub fn vecadd(a: &[Cell], b: &[Cell], scale: Option<&[Cell]>) -> Result<Vec<Cell>, VecError> {
    zip_with(a, b, scale, |x, y| x + y)
}

pub fn vecmul(a: &[Cell], b: &[Cell], scale: Option<&[Cell]>) -> Result<Vec<Cell>, VecError> {
    zip_with(a, b, scale, |x, y| x * y)
}

/// `out_j = sum_i input_i * wgt[j*n + i]` for `m` outputs; weights are stored
/// one row per output neuron.
pub fn vecfold(input: &[Cell], wgt: &[Cell], m: usize, scale: Option<&[Cell]>) -> Result<Vec<Cell>, VecError> {
    let n = input.len();
    if wgt.len() != n * m {
        return Err(VecError::Length);
    }
    check_scale(scale, m)?;
    Ok((0..m)
        .map(|j| {
            let row = &wgt[j * n..(j + 1) * n];
            let s: i64 = input.iter().zip(row).map(|(&x, &w)| x as i64 * w as i64).sum();
            saturate(apply_scale(s, scale_of(scale, j)))
        })
        .collect())
}

/// Sum of products, saturated to 32 bits.
pub fn dotprod(a: &[Cell], b: &[Cell]) -> Result<i32, VecError> {
    if a.len() != b.len() {
        return Err(VecError::Length);
    }
    let s: i64 = a.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum();
    Ok(s.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

pub fn vecmap<E>(
    src: &[Cell],
    scale: Option<&[Cell]>,
    mut f: impl FnMut(Cell) -> Result<i32, E>,
) -> Result<Result<Vec<Cell>, VecError>, E> {
    if check_scale(scale, src.len()).is_err() {
        return Ok(Err(VecError::Length));
    }
    let mut out = Vec::with_capacity(src.len());
    for (i, &x) in src.iter().enumerate() {
        out.push(saturate(apply_scale(f(x)? as i64, scale_of(scale, i))));
    }
    Ok(Ok(out))
}
