use rayon::prelude::*;

/// Maps `f` over `items`, keeping order. Runs inline for `threads <= 1`,
/// otherwise on a dedicated pool of `threads` workers.
pub(crate) fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()),
        Err(e) => {
            log::warn!("could not start {threads} worker threads ({e}); running single-threaded");
            items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = parallel_map(&xs, 1, |i, x| (i as u64) * x);
        let b = parallel_map(&xs, 4, |i, x| (i as u64) * x);
        assert_eq!(a, b);
    }
}
