//! Data-parallel helpers. With the `parallel` feature the work runs on a
//! rayon pool; without it everything runs on the calling thread in index
//! order. Results are always returned in index order, so callers see the
//! same output either way.

/// Maps `f` over `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Runs `task(worker, index)` for every index in `0..n` on `workers`
/// threads. Worker `w` owns indices `w, w + workers, ...`, so every worker
/// gets `floor(n / workers)` or `ceil(n / workers)` tasks regardless of OS
/// scheduling. Returns results in index order and per-worker task counts.
pub fn run_pool<T, F>(workers: usize, n: usize, task: F) -> (Vec<T>, Vec<usize>)
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let workers = workers.max(1);
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Mutex;
        let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let counts: Vec<AtomicUsize> = (0..workers).map(|_| AtomicUsize::new(0)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.scope(|s| {
            for w in 0..workers {
                let (slots, counts, task) = (&slots, &counts, &task);
                s.spawn(move |_| {
                    for i in (w..n).step_by(workers) {
                        let out = task(w, i);
                        *slots[i].lock().unwrap() = Some(out);
                        counts[w].fetch_add(1, Ordering::Relaxed);
                    }
                });
            }
        });
        let results = slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every task ran"))
            .collect();
        return (results, counts.into_iter().map(|c| c.into_inner()).collect());
    }
    let results = (0..n).map(|i| task(i % workers, i)).collect();
    let counts = (0..workers).map(|w| (w..n).step_by(workers).count()).collect();
    (results, counts)
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
