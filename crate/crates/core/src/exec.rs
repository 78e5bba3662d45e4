//! Data-parallel helpers: rayon when the `parallel` feature is on, plain
//! iteration otherwise (or inside [`with_sequential`]).
//!
//! Results always come back in input order, so reductions done by the caller
//! over the returned vector are deterministic regardless of thread count.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the parallel paths disabled on this thread.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

fn sequential() -> bool {
    !cfg!(feature = "parallel") || FORCE_SEQUENTIAL.with(Cell::get)
}

/// Sizes the global pool. Only the first call has an effect; later calls
/// (or a pool already built by rayon itself) are ignored.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::debug!("thread pool already initialized; --threads {n} ignored");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if sequential() {
        return items.iter().map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    unreachable!()
}

/// Like [`par_map`], with per-worker state built by `init` (e.g. a reusable
/// LP session). `f` must not let that state influence its result.
pub fn par_map_init<T, S, R, I, F>(items: &[T], init: I, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &T) -> R + Sync + Send,
{
    if sequential() {
        let mut state = init();
        return items.iter().map(|t| f(&mut state, t)).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map_init(init, f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_on_both_paths() {
        let xs: Vec<u64> = (0..1000).collect();
        let par = par_map(&xs, |x| x * x);
        let seq = with_sequential(|| par_map(&xs, |x| x * x));
        assert_eq!(par, seq);
        assert_eq!(par[999], 998_001);
        let counted = par_map_init(
            &xs,
            || 0u64,
            |n, x| {
                *n += 1;
                x + 1
            },
        );
        assert_eq!(counted, (1..=1000).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_flag_is_scoped() {
        with_sequential(|| assert!(sequential()));
        assert_eq!(sequential(), !cfg!(feature = "parallel"));
    }
}
