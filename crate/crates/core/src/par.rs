//! Deterministic seeding and the data-parallel task runner.
//!
//! Every Monte Carlo experiment is split into tasks with indices `0..n`.
//! Task `i` draws from `seed_stream(master, i)`, which is ChaCha8 keyed by the
//! master seed and positioned on stream `i`. Results are merged in task order,
//! so the parallel and sequential runners give bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for task `index` under `master`.
pub fn seed_stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Run `task(i)` for `i in 0..n` on the calling thread.
pub fn map_tasks_seq<T, F>(n: usize, task: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(task).collect()
}

/// Run `task(i)` for `i in 0..n` on the rayon pool, results in index order.
#[cfg(feature = "parallel")]
pub fn map_tasks_par<T, F>(n: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(task).collect()
}

/// The default runner: parallel when the `parallel` feature is on.
pub fn map_tasks<T, F>(n: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_tasks_par(n, task)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_tasks_seq(n, task)
    }
}

/// Split `total` trials into `tasks` chunks as evenly as possible.
pub fn chunk_sizes(total: u64, tasks: usize) -> Vec<u64> {
    let tasks = tasks.max(1) as u64;
    (0..tasks).map(|i| total / tasks + u64::from(i < total % tasks)).collect()
}

/// Default number of tasks for `total` trials: fixed, so that results do not
/// depend on the thread count.
pub fn default_tasks(total: u64) -> usize {
    total.clamp(1, 256) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..64).map({
            let mut r = seed_stream(7, 3);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..64).map({
            let mut r = seed_stream(7, 3);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..64).map({
            let mut r = seed_stream(7, 4);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().zip(&c).all(|(x, y)| x != y));
    }

    #[test]
    fn stream_bytes_are_equidistributed() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut counts = [0u64; 256];
        for i in 0..16 {
            let mut r = seed_stream(1, i);
            for _ in 0..4096 {
                for b in r.next_u64().to_le_bytes() {
                    counts[b as usize] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        let exp = total as f64 / 256.0;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - exp).powi(2) / exp).sum();
        let p = 1.0 - ChiSquared::new(255.0).unwrap().cdf(chi);
        assert!(p > 1e-3, "p = {p}");
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let work = |i: usize| {
            let mut r = seed_stream(11, i as u64);
            (0..100).map(|_| r.next_u32() as u64).sum::<u64>()
        };
        assert_eq!(map_tasks(40, work), map_tasks_seq(40, work));
        assert_eq!(chunk_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(chunk_sizes(10, 3).iter().sum::<u64>(), 10);
    }
}
