//! Order-preserving bounded-parallel map.
//!
//! With the `parallel` feature the work runs on a dedicated rayon pool of at
//! most `max_in_flight` threads; without it, or when `max_in_flight == 1`,
//! items are processed sequentially on the calling thread. Output position
//! always equals input position.

pub fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let max_in_flight = max_in_flight.max(1);
    #[cfg(feature = "parallel")]
    if max_in_flight > 1 && items.len() > 1 {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new()
            .num_threads(max_in_flight.min(items.len()))
            .build()
        {
            Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => log::warn!("falling back to sequential execution: {e}"),
        }
    }
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[test]
    fn preserves_order_and_bound() {
        let items: Vec<u64> = (0..64).collect();
        let current = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let out = bounded_map(&items, 4, |&x| {
            let now = current.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_micros((x * 37) % 500));
            current.fetch_sub(1, Ordering::SeqCst);
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 4);
    }

    #[test]
    fn zero_is_sequential() {
        assert_eq!(bounded_map(&[1, 2, 3], 0, |x| x + 1), vec![2, 3, 4]);
    }
}
