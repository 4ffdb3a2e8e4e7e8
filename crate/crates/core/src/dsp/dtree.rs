//! Decision trees stored as linear search tables.
//!
//! A tree is a flat cell array of slices. Each slice is
//! `[var, op, n, value_1, branch_1, ..., value_n, branch_n]`.
//! For test slices `var` indexes the inputs and each branch is the cell offset
//! of a later slice. An output slice (`op = OUT`) assigns `value_1` to output
//! `var`; its branch is 0 to stop or the offset of a further slice.
//!
//! Test ops pick the first pair whose value satisfies the relation
//! (`x < v`, `x > v`, `x == v`), falling back to the last pair; `NEAR` picks
//! the pair minimising `|x - v|`, the first on ties.

use thiserror::Error;

use crate::memory::Cell;

pub const LT: Cell = 0;
pub const GT: Cell = 1;
pub const EQ: Cell = 2;
pub const NEAR: Cell = 3;
pub const OUT: Cell = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DtreeError {
    #[error("slice at {0} runs past the table")]
    Truncated(usize),
    #[error("bad op {1} at {0}")]
    BadOp(usize, Cell),
    #[error("slice at {0} has no choices")]
    Empty(usize),
    #[error("branch at {0} does not point forward")]
    Backward(usize),
    #[error("variable {1} at {0} out of range")]
    Var(usize, Cell),
}

/// Evaluate `tree` on `inputs`, writing assignments into `outputs`.
/// Returns the number of outputs assigned.
pub fn eval(tree: &[Cell], inputs: &[Cell], outputs: &mut [Cell]) -> Result<usize, DtreeError> {
    let mut at = 0usize;
    let mut assigned = 0;
    loop {
        let hdr = tree.get(at..at + 3).ok_or(DtreeError::Truncated(at))?;
        let (var, op, n) = (hdr[0], hdr[1], hdr[2]);
        if n <= 0 {
            return Err(DtreeError::Empty(at));
        }
        let pairs = tree.get(at + 3..at + 3 + 2 * n as usize).ok_or(DtreeError::Truncated(at))?;
        let pair = |i: usize| (pairs[2 * i], pairs[2 * i + 1]);
        let n = n as usize;
        let next = if op == OUT {
            let slot = outputs.get_mut(var as usize).filter(|_| var >= 0).ok_or(DtreeError::Var(at, var))?;
            *slot = pair(0).0;
            assigned += 1;
            match pair(0).1 {
                0 => return Ok(assigned),
                b => b,
            }
        } else {
            let x = *inputs.get(var as usize).filter(|_| var >= 0).ok_or(DtreeError::Var(at, var))? as i32;
            let pick = match op {
                LT => (0..n).find(|&i| x < pair(i).0 as i32).unwrap_or(n - 1),
                GT => (0..n).find(|&i| x > pair(i).0 as i32).unwrap_or(n - 1),
                EQ => (0..n).find(|&i| x == pair(i).0 as i32).unwrap_or(n - 1),
                NEAR => (0..n).min_by_key(|&i| ((x - pair(i).0 as i32).abs(), i)).unwrap_or(0),
                _ => return Err(DtreeError::BadOp(at, op)),
            };
            pair(pick).1
        };
        if next <= 0 || (next as usize) <= at {
            return Err(DtreeError::Backward(at));
        }
        at = next as usize;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Test { var: Cell, op: Cell, choices: Vec<(Cell, Node)> },
    Out { var: Cell, value: Cell },
}

/// Lay out `node` depth-first as a slice table.
pub fn encode(node: &Node) -> Vec<Cell> {
    let mut out = Vec::new();
    emit(node, &mut out);
    out
}

fn emit(node: &Node, out: &mut Vec<Cell>) {
    match node {
        Node::Out { var, value } => out.extend([*var, OUT, 1, *value, 0]),
        Node::Test { var, op, choices } => {
            let at = out.len();
            out.extend([*var, *op, choices.len() as Cell]);
            for (v, _) in choices {
                out.extend([*v, 0]);
            }
            for (i, (_, child)) in choices.iter().enumerate() {
                out[at + 4 + 2 * i] = out.len() as Cell;
                emit(child, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(v: Cell) -> Node {
        Node::Out { var: 0, value: v }
    }

    #[test]
    fn depth_one() {
        let t = encode(&Node::Test { var: 0, op: LT, choices: vec![(5, out(10)), (0, out(20))] });
        let mut o = [0];
        assert_eq!(eval(&t, &[3], &mut o), Ok(1));
        assert_eq!(o[0], 10);
        eval(&t, &[7], &mut o).unwrap();
        assert_eq!(o[0], 20);
    }

    #[test]
    fn nearest() {
        let t = encode(&Node::Test { var: 0, op: NEAR, choices: vec![(10, out(1)), (20, out(2))] });
        let mut o = [0];
        eval(&t, &[14], &mut o).unwrap();
        assert_eq!(o[0], 1);
        eval(&t, &[15], &mut o).unwrap();
        assert_eq!(o[0], 1);
        eval(&t, &[16], &mut o).unwrap();
        assert_eq!(o[0], 2);
    }

    #[test]
    fn chained_outputs() {
        let t = vec![0, OUT, 1, 7, 5, 1, OUT, 1, 8, 0];
        let mut o = [0, 0];
        assert_eq!(eval(&t, &[], &mut o), Ok(2));
        assert_eq!(o, [7, 8]);
    }

    #[test]
    fn malformed() {
        assert_eq!(eval(&[0, LT, 1, 5], &[1], &mut []), Err(DtreeError::Truncated(0)));
        assert_eq!(eval(&[0, LT, 1, 5, 0], &[1], &mut []), Err(DtreeError::Backward(0)));
        assert_eq!(eval(&[0, 9, 1, 5, 5], &[1], &mut []), Err(DtreeError::BadOp(0, 9)));
        assert_eq!(eval(&[3, LT, 1, 5, 5], &[1], &mut []), Err(DtreeError::Var(0, 3)));
        assert_eq!(eval(&[0, LT, 0], &[1], &mut []), Err(DtreeError::Empty(0)));
    }
}
