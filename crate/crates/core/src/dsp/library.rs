//! DSP words exposed to programs through FIOS.
//!
//! | word | stack effect |
//! |------|--------------|
//! | `sin` `log` `sigmoid` `relu` | `( x -- y )` |
//! | `softmax2` | `( a b -- y )` share of `a` in a two-class softmax |
//! | `lowp` `highp` `hull` | `( vec off len k -- )` |
//! | `dtree` | `( tree inputs outputs -- n )` |

use super::{dtree, filter, fixed};
use crate::ios::{FiosCtx, FiosFn, Ios, IosError};
use crate::memory::Cell;
use crate::vm::Exception;

fn unary(f: fn(Cell) -> Option<Cell>) -> FiosFn {
    Box::new(move |_, a| f(a[0] as Cell).map(i32::from).ok_or(Exception::Trap))
}

fn load(ctx: &FiosCtx, h: i32, off: i32, len: i32) -> Result<(crate::ios::ArrayRef, Vec<Cell>), Exception> {
    let a = ctx.array(h)?;
    if off < 0 || len < 0 || (off + len) as usize > a.len() {
        return Err(Exception::Io);
    }
    let v = (off..off + len).map(|i| ctx.get(a, i as usize)).collect::<Result<_, _>>()?;
    Ok((a, v))
}

fn filter_word(f: fn(&mut [Cell], i32) -> Result<(), filter::FilterError>) -> FiosFn {
    Box::new(move |ctx, a| {
        let (arr, mut v) = load(ctx, a[0], a[1], a[2])?;
        f(&mut v, a[3]).map_err(|_| Exception::Trap)?;
        for (i, x) in v.into_iter().enumerate() {
            ctx.set(arr, a[1] as usize + i, x)?;
        }
        Ok(0)
    })
}

fn dtree_word() -> FiosFn {
    Box::new(|ctx, a| {
        let t = ctx.array(a[0])?;
        let (_, tree) = load(ctx, a[0], 0, t.len() as i32)?;
        let i = ctx.array(a[1])?;
        let (_, inputs) = load(ctx, a[1], 0, i.len() as i32)?;
        let o = ctx.array(a[2])?;
        let (_, mut outputs) = load(ctx, a[2], 0, o.len() as i32)?;
        let n = dtree::eval(&tree, &inputs, &mut outputs).map_err(|_| Exception::Trap)?;
        for (k, v) in outputs.into_iter().enumerate() {
            ctx.set(o, k, v)?;
        }
        Ok(n as i32)
    })
}

/// Register the DSP words.
pub fn register(ios: &mut Ios) -> Result<(), IosError> {
    ios.fios_add("sin", unary(|x| Some(fixed::fpsin(x))), 1, 2, 2)?;
    ios.fios_add("log", unary(fixed::fplog), 1, 2, 2)?;
    ios.fios_add("sigmoid", unary(|x| Some(fixed::fpsigmoid(x))), 1, 2, 2)?;
    ios.fios_add("relu", unary(|x| Some(fixed::fprelu(x))), 1, 2, 2)?;
    ios.fios_add(
        "softmax2",
        Box::new(|_, a| Ok(fixed::fpsigmoid((a[0] - a[1]).clamp(Cell::MIN as i32, Cell::MAX as i32) as Cell) as i32)),
        2,
        2,
        2,
    )?;
    ios.fios_add("lowp", filter_word(filter::lowp), 4, 2, 0)?;
    ios.fios_add("highp", filter_word(filter::highp), 4, 2, 0)?;
    ios.fios_add("hull", filter_word(filter::hull), 4, 2, 0)?;
    ios.fios_add("dtree", dtree_word(), 3, 2, 2)?;
    Ok(())
}
