use crate::error::{invalid, Result};

/// Runs `f` inside a dedicated rayon pool with `threads` workers
/// (`0` means rayon's default). Every parallel loop in the crate writes to
/// disjoint, index-addressed slots, so results do not depend on `threads`.
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
