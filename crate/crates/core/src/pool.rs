//! Bounded worker pool that returns results in job order.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

/// Runs `job(i)` for `i in 0..count` on up to `workers` threads.
///
/// Results come back indexed by job regardless of completion order. The first
/// error stops further jobs from being picked up and is returned.
pub fn map_ordered<T, E, F>(count: usize, workers: usize, job: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(&job).collect();
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    let first_err: Mutex<Option<(usize, E)>> = Mutex::new(None);

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::Acquire) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::AcqRel);
                if i >= count {
                    break;
                }
                match job(i) {
                    Ok(v) => slots.lock().unwrap()[i] = Some(v),
                    Err(e) => {
                        abort.store(true, Ordering::Release);
                        let mut slot = first_err.lock().unwrap();
                        // keep the lowest-index failure so reports are stable
                        if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some((_, e)) = first_err.into_inner().unwrap() {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect())
}

/// Why [`StallGuard::run`] gave up on a job.
#[derive(Debug)]
pub enum GiveUp<E> {
    Fatal(E),
    Stalled { failures: u32, last: E },
}

/// Counts consecutive failed jobs across all workers; any success resets it.
#[derive(Debug)]
pub struct StallGuard {
    consecutive: AtomicU32,
    limit: u32,
}

impl StallGuard {
    pub fn new(limit: u32) -> Self {
        Self {
            consecutive: AtomicU32::new(0),
            limit: limit.max(1),
        }
    }

    /// Retries `attempt` until it succeeds, fails fatally, or the shared
    /// consecutive-failure count reaches the limit.
    pub fn run<T, E: std::fmt::Display>(
        &self,
        mut attempt: impl FnMut() -> Result<T, E>,
        is_fatal: impl Fn(&E) -> bool,
    ) -> Result<T, GiveUp<E>> {
        loop {
            match attempt() {
                Ok(v) => {
                    self.consecutive.store(0, Ordering::SeqCst);
                    return Ok(v);
                }
                Err(e) if is_fatal(&e) => return Err(GiveUp::Fatal(e)),
                Err(e) => {
                    let failures = self.consecutive.fetch_add(1, Ordering::SeqCst) + 1;
                    log::warn!("job failed ({e}); {failures} consecutive failure(s)");
                    if failures >= self.limit {
                        return Err(GiveUp::Stalled { failures, last: e });
                    }
                }
            }
        }
    }
}
