//! Small shared helpers: answer normalization and a deterministic
//! bounded-parallelism map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Canonical answer form: case-folded, trimmed, internal whitespace runs
/// collapsed to single spaces. Used by consistency scoring and exact-match
/// grading so both apply the same equivalence rule.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Maps `f` over `items` with at most `parallelism` worker threads. Results
/// are slotted by input index, so the output order equals the input order
/// regardless of completion order.
pub fn parallel_map<T, R, F>(parallelism: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, T) -> R + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let workers = parallelism.max(1).min(n);
    if workers == 1 {
        return items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }

    let inputs: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let item = inputs[i].lock().unwrap().take().expect("item taken once");
                let result = f(i, item);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}
