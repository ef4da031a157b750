//! Thread-local multiply-accumulate counter.
//!
//! Dense products and sparse convolutions add their MAC counts here so that
//! work scaling can be measured by counting instead of timing.

use std::cell::Cell;

thread_local! {
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

pub fn reset() {
    COUNT.with(|c| c.set(0));
}

pub fn count() -> u64 {
    COUNT.with(Cell::get)
}

pub(crate) fn add(n: u64) {
    COUNT.with(|c| c.set(c.get() + n));
}

/// Runs `f` and returns its result with the number of MACs it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = count();
    let out = f();
    (out, count() - before)
}
