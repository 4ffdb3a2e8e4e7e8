use super::{Cell, DoubleCell, MemError};

/// Fixed-capacity LIFO of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stack {
    cells: Vec<Cell>,
    top: usize,
}

impl Stack {
    pub fn new(capacity: usize) -> Self {
        Stack { cells: vec![0; capacity], top: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn depth(&self) -> usize {
        self.top
    }

    pub fn is_empty(&self) -> bool {
        self.top == 0
    }

    #[inline]
    pub fn push(&mut self, v: Cell) -> Result<(), MemError> {
        if self.top == self.cells.len() {
            return Err(MemError::Overflow);
        }
        self.cells[self.top] = v;
        self.top += 1;
        Ok(())
    }

    #[inline]
    pub fn pop(&mut self) -> Result<Cell, MemError> {
        if self.top == 0 {
            return Err(MemError::Underflow);
        }
        self.top -= 1;
        Ok(self.cells[self.top])
    }

    pub fn push2(&mut self, v: i32) -> Result<(), MemError> {
        if self.top + 2 > self.cells.len() {
            return Err(MemError::Overflow);
        }
        let d = DoubleCell::from_i32(v);
        self.cells[self.top] = d.msw;
        self.cells[self.top + 1] = d.lsw;
        self.top += 2;
        Ok(())
    }

    pub fn pop2(&mut self) -> Result<i32, MemError> {
        if self.top < 2 {
            return Err(MemError::Underflow);
        }
        self.top -= 2;
        Ok(DoubleCell { msw: self.cells[self.top], lsw: self.cells[self.top + 1] }.to_i32())
    }

    /// Cell `n` below the top (0 = top).
    #[inline]
    pub fn peek(&self, n: usize) -> Result<Cell, MemError> {
        if n >= self.top {
            return Err(MemError::Underflow);
        }
        Ok(self.cells[self.top - 1 - n])
    }

    pub fn peek_mut(&mut self, n: usize) -> Result<&mut Cell, MemError> {
        if n >= self.top {
            return Err(MemError::Underflow);
        }
        Ok(&mut self.cells[self.top - 1 - n])
    }

    /// Require at least `n` cells, without touching them.
    #[inline]
    pub fn need(&self, n: usize) -> Result<(), MemError> {
        if self.top < n {
            Err(MemError::Underflow)
        } else {
            Ok(())
        }
    }

    /// Drop cells down to `depth` (no-op if already shallower).
    pub fn truncate(&mut self, depth: usize) {
        self.top = self.top.min(depth);
    }

    pub fn clear(&mut self) {
        self.top = 0;
    }

    /// Live cells, bottom first.
    pub fn as_slice(&self) -> &[Cell] {
        &self.cells[..self.top]
    }

    /// Replace contents; fails if `cells` exceeds the capacity.
    pub fn restore(&mut self, cells: &[Cell]) -> Result<(), MemError> {
        if cells.len() > self.cells.len() {
            return Err(MemError::Overflow);
        }
        self.cells[..cells.len()].copy_from_slice(cells);
        self.top = cells.len();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lifo() {
        let mut s = Stack::new(4);
        s.push(5).unwrap();
        assert_eq!(s.pop(), Ok(5));
        assert_eq!(s.pop(), Err(MemError::Underflow));
        for i in 0..4 {
            s.push(i).unwrap();
        }
        assert_eq!(s.push(9), Err(MemError::Overflow));
        assert_eq!(s.peek(0), Ok(3));
        assert_eq!(s.peek(3), Ok(0));
        assert!(s.peek(4).is_err());
    }

    #[test]
    fn double_on_stack() {
        let mut s = Stack::new(4);
        s.push2(70000).unwrap();
        assert_eq!(s.as_slice(), &[1, 4464]);
        assert_eq!(s.pop2(), Ok(70000));
        s.push(1).unwrap();
        assert_eq!(s.pop2(), Err(MemError::Underflow));
    }

    proptest! {
        #[test]
        fn double_round_trip(v in any::<i32>()) {
            let mut s = Stack::new(2);
            s.push2(v).unwrap();
            prop_assert_eq!(s.pop2().unwrap(), v);
        }
    }
}
