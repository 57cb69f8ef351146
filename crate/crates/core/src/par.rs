//! Deterministic parallel map over path indices.

use rayon::prelude::*;

/// Runs `f(scratch, i)` for every `i in 0..n` and returns the results in
/// index order. Each worker owns one scratch value built by `init`.
pub fn map_paths<T, S, I, F>(workers: Option<usize>, n: u64, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> T + Sync + Send,
{
    let run = || (0..n).into_par_iter().map_init(&init, &f).collect();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_independent_of_workers() {
        let f = |_: &mut (), i: u64| i * i;
        let a = map_paths(Some(1), 1000, || (), f);
        let b = map_paths(Some(4), 1000, || (), f);
        assert_eq!(a, b);
        assert_eq!(a[31], 961);
    }
}
