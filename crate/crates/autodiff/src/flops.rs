//! Thread-local floating-point operation counter for forward passes.
//!
//! Costs charged per op: a matmul of `(a x b) * (b x c)` counts `2abc`;
//! elementwise ops count one per output element; softmax counts
//! [`SOFTMAX_PER_ELEMENT`]; layer norm [`LAYER_NORM_PER_ELEMENT`]; pure data
//! movement (reshape, permute, slice, concat) counts nothing.

use std::cell::Cell;

pub const SOFTMAX_PER_ELEMENT: u64 = 4;
pub const LAYER_NORM_PER_ELEMENT: u64 = 7;
pub const GELU_PER_ELEMENT: u64 = 8;

thread_local! {
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

pub fn reset() {
    COUNT.with(|c| c.set(0));
}

pub fn count() -> u64 {
    COUNT.with(|c| c.get())
}

pub(crate) fn charge(n: u64) {
    COUNT.with(|c| c.set(c.get() + n));
}

/// Runs `f` and returns its result together with the flops it charged.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = count();
    let r = f();
    (r, count() - before)
}
