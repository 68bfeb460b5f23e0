//! Fixed-size worker pool feeding a single consumer.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::HarnessError;

/// Runs `work` over `items` on up to `workers` threads and hands each
/// result to `sink` on the calling thread, in completion order. Workers
/// stop taking new items once `stop` returns true or `sink` fails.
pub fn run_pool<I, T, W, S, P>(items: &[I], workers: usize, stop: P, work: W, mut sink: S) -> Result<(), HarnessError>
where
    I: Sync,
    T: Send,
    W: Fn(&I) -> T + Sync,
    S: FnMut(T) -> Result<(), HarnessError>,
    P: Fn() -> bool + Sync,
{
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<T>();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            let tx = tx.clone();
            let (next, abort, stop, work) = (&next, &abort, &stop, &work);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) || stop() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                if tx.send(work(item)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut result = Ok(());
        for value in rx {
            if result.is_ok() {
                result = sink(value);
                if result.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
            }
        }
        result
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_item_reaches_the_sink_once() {
        let items: Vec<u32> = (0..100).collect();
        let mut seen = Vec::new();
        run_pool(&items, 7, || false, |x| x * 2, |v| {
            seen.push(v);
            Ok(())
        })
        .unwrap();
        seen.sort();
        assert_eq!(seen, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn stop_and_sink_errors_halt_scheduling() {
        let items: Vec<u32> = (0..1000).collect();
        let mut n = 0;
        let err = run_pool(&items, 1, || false, |x| *x, |_| {
            n += 1;
            if n == 3 {
                Err(HarnessError::Config("full".into()))
            } else {
                Ok(())
            }
        });
        assert!(err.is_err());
        assert!(n < 1000);

        let taken = AtomicUsize::new(0);
        run_pool(&items, 2, || taken.load(Ordering::SeqCst) >= 10, |x| {
            taken.fetch_add(1, Ordering::SeqCst);
            *x
        }, |_| Ok(()))
        .unwrap();
        assert!(taken.load(Ordering::SeqCst) <= 12);
    }
}
