//! Data-parallel map helpers.
//!
//! With the default `parallel` feature the maps fan out on rayon; without it
//! they degrade to plain sequential iteration with identical results. Output
//! order always matches input order, so callers stay deterministic either
//! way. The explicitly-sequential variants exist for benchmark comparison.

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Indexed variant: the closure also receives the item's position.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Sequential map regardless of features; benchmark baseline.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential indexed map regardless of features; benchmark baseline.
pub fn map_indexed_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Derives an independent per-stream seed from a base seed (splitmix64 over
/// the combined value), so fan-out work can seed its own RNG without any
/// dependence on execution order.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Caps the worker pool at `n` threads (no-op when `n` is 0 or the crate is
/// built without the `parallel` feature). Call once, before any parallel
/// work; later calls are ignored.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_input_order() {
        let items: Vec<u64> = (0..1000).collect();
        let doubled = map(&items, |x| x * 2);
        let doubled_seq = map_seq(&items, |x| x * 2);
        assert_eq!(doubled, doubled_seq);
    }

    #[test]
    fn map_indexed_sees_positions_in_order() {
        let items = vec!["a", "b", "c"];
        let tagged = map_indexed(&items, |i, s| format!("{i}:{s}"));
        assert_eq!(tagged, ["0:a", "1:b", "2:c"]);
    }

    #[test]
    fn derived_seeds_are_stable_and_spread() {
        assert_eq!(derive_seed(0, 0), derive_seed(0, 0));
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 0), derive_seed(1, 0));
    }
}
