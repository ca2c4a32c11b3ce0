//! File formats, the training driver, checkpoints and the `thoraxdiff`
//! command-line tool, built on [`thoraxdiff_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod fit;
pub mod io;
pub mod mds_plot;
pub mod montage;
pub mod sample;

pub use error::{Error, Result};
pub use thoraxdiff_core as core;

/// Maps `f` over `items` on up to `threads` scoped threads. Results come back
/// in input order, so the output does not depend on the thread count.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u32> = (0..37).collect();
        for t in [1, 2, 5, 64] {
            assert_eq!(super::par_map(&items, t, |x| x * 3), items.iter().map(|x| x * 3).collect::<Vec<_>>());
        }
    }
}
