//! Replay and replicate launch combinators.
//!
//! Replay runs a task up to `n` times in sequence and resolves with the first
//! acceptable result. Replicate runs `n` instances concurrently, waits for all
//! of them and then selects a result by first success, validation and/or
//! voting. Each comes in an `async_` flavour (the task captures its inputs)
//! and a `dataflow_` flavour (the task receives the resolved values of a
//! list of dependency handles, which are waited for once and shared by every
//! attempt or instance).

mod replay;
mod replicate;
mod vote;

use std::cell::Cell;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;

pub use replay::ReplayPolicy;
pub use replicate::{select_replicated, ReplicatePolicy};
pub use vote::majority_vote;

use crate::error::TaskResult;
use crate::handle::TaskHandle;
use crate::runtime::Runtime;

/// Result predicate; `false` marks the attempt or instance as failed.
pub type Validator<V> = Arc<dyn Fn(&V) -> bool + Send + Sync>;
/// Reducer picking a consensus value from the successful results, given in
/// launch-index order.
pub type Voter<V> = Arc<dyn Fn(&[V]) -> V + Send + Sync>;

pub(crate) type TaskFn<V> = Arc<dyn Fn() -> TaskResult<V> + Send + Sync>;

thread_local! {
    static ATTEMPT: Cell<Option<usize>> = const { Cell::new(None) };
}

/// Zero-based replay attempt or replicate launch index of the resilient
/// task executing on this thread, `None` outside a combinator.
pub fn current_attempt() -> Option<usize> {
    ATTEMPT.with(Cell::get)
}

pub(crate) fn run_attempt<V>(f: &TaskFn<V>, attempt: usize) -> TaskResult<V> {
    let prev = ATTEMPT.with(|a| a.replace(Some(attempt)));
    let out = crate::runtime::catch_fault(|| f());
    ATTEMPT.with(|a| a.set(prev));
    out
}

// A panicking validator counts as a rejection.
pub(crate) fn passes<V>(valf: &Validator<V>, value: &V) -> bool {
    match panic::catch_unwind(AssertUnwindSafe(|| valf(value))) {
        Ok(ok) => ok,
        Err(_) => {
            log::warn!("validator panicked; treating result as invalid");
            false
        }
    }
}

fn dataflow_task<D, V, F>(f: F, values: Vec<D>) -> TaskFn<V>
where
    D: Send + Sync + 'static,
    V: 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    Arc::new(move || f(&values))
}

pub fn async_replay<V, F>(rt: &Runtime, n: usize, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplayPolicy::new(n).launch(rt, f)
}

pub fn async_replay_validate<V, P, F>(rt: &Runtime, n: usize, valf: P, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplayPolicy::new(n).with_validator(valf).launch(rt, f)
}

pub fn dataflow_replay<D, V, F>(rt: &Runtime, n: usize, f: F, deps: Vec<TaskHandle<D>>) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplayPolicy::new(n).launch_dataflow(rt, f, deps)
}

pub fn dataflow_replay_validate<D, V, P, F>(
    rt: &Runtime,
    n: usize,
    valf: P,
    f: F,
    deps: Vec<TaskHandle<D>>,
) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplayPolicy::new(n).with_validator(valf).launch_dataflow(rt, f, deps)
}

pub fn async_replicate<V, F>(rt: &Runtime, n: usize, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n).launch(rt, f)
}

pub fn async_replicate_validate<V, P, F>(rt: &Runtime, n: usize, valf: P, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n).with_validator(valf).launch(rt, f)
}

pub fn async_replicate_vote<V, W, F>(rt: &Runtime, n: usize, votef: W, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    W: Fn(&[V]) -> V + Send + Sync + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n).with_voter(votef).launch(rt, f)
}

pub fn async_replicate_vote_validate<V, W, P, F>(rt: &Runtime, n: usize, votef: W, valf: P, f: F) -> TaskHandle<V>
where
    V: Send + 'static,
    W: Fn(&[V]) -> V + Send + Sync + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn() -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n)
        .with_voter(votef)
        .with_validator(valf)
        .launch(rt, f)
}

pub fn dataflow_replicate<D, V, F>(rt: &Runtime, n: usize, f: F, deps: Vec<TaskHandle<D>>) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n).launch_dataflow(rt, f, deps)
}

pub fn dataflow_replicate_validate<D, V, P, F>(
    rt: &Runtime,
    n: usize,
    valf: P,
    f: F,
    deps: Vec<TaskHandle<D>>,
) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n)
        .with_validator(valf)
        .launch_dataflow(rt, f, deps)
}

pub fn dataflow_replicate_vote<D, V, W, F>(
    rt: &Runtime,
    n: usize,
    votef: W,
    f: F,
    deps: Vec<TaskHandle<D>>,
) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    W: Fn(&[V]) -> V + Send + Sync + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n).with_voter(votef).launch_dataflow(rt, f, deps)
}

pub fn dataflow_replicate_vote_validate<D, V, W, P, F>(
    rt: &Runtime,
    n: usize,
    votef: W,
    valf: P,
    f: F,
    deps: Vec<TaskHandle<D>>,
) -> TaskHandle<V>
where
    D: Clone + Send + Sync + 'static,
    V: Send + 'static,
    W: Fn(&[V]) -> V + Send + Sync + 'static,
    P: Fn(&V) -> bool + Send + Sync + 'static,
    F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
{
    ReplicatePolicy::new(n)
        .with_voter(votef)
        .with_validator(valf)
        .launch_dataflow(rt, f, deps)
}
