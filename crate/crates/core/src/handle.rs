use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::error::{ErrorPayload, TaskResult};
use crate::runtime;

type Continuation = Box<dyn FnOnce() + Send>;

enum Slot<V> {
    Pending(Vec<Continuation>),
    Ready(TaskResult<V>),
}

struct Shared<V> {
    slot: Mutex<Slot<V>>,
    ready: Condvar,
}

impl<V> Shared<V> {
    fn lock(&self) -> MutexGuard<'_, Slot<V>> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Deferred result of an asynchronous task.
///
/// A handle transitions once from pending to resolved or failed. Clones are
/// read-only views of the same slot and every reader observes the same
/// outcome.
pub struct TaskHandle<V> {
    shared: Arc<Shared<V>>,
}

impl<V> Clone for TaskHandle<V> {
    fn clone(&self) -> Self {
        Self {
            shared: Arc::clone(&self.shared),
        }
    }
}

impl<V> fmt::Debug for TaskHandle<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = match &*self.shared.lock() {
            Slot::Pending(_) => "pending",
            Slot::Ready(r) if r.is_ok() => "resolved",
            Slot::Ready(_) => "failed",
        };
        f.debug_struct("TaskHandle").field("state", &state).finish()
    }
}

/// Write side of a [`TaskHandle`]. Dropping an unset promise fails the
/// handle so no reader waits forever.
pub struct Promise<V> {
    shared: Option<Arc<Shared<V>>>,
}

impl<V> Promise<V> {
    pub fn set(mut self, outcome: TaskResult<V>) {
        if let Some(shared) = self.shared.take() {
            resolve(&shared, outcome);
        }
    }
}

impl<V> Drop for Promise<V> {
    fn drop(&mut self) {
        if let Some(shared) = self.shared.take() {
            resolve(&shared, Err(ErrorPayload::fault("task dropped before completion")));
        }
    }
}

fn resolve<V>(shared: &Shared<V>, outcome: TaskResult<V>) {
    let continuations = {
        let mut slot = shared.lock();
        match std::mem::replace(&mut *slot, Slot::Ready(outcome)) {
            Slot::Pending(c) => c,
            Slot::Ready(_) => unreachable!("task handle resolved twice"),
        }
    };
    shared.ready.notify_all();
    for k in continuations {
        k();
    }
}

impl<V> TaskHandle<V> {
    /// A pending handle and the promise that resolves it.
    pub fn channel() -> (Promise<V>, TaskHandle<V>) {
        let shared = Arc::new(Shared {
            slot: Mutex::new(Slot::Pending(Vec::new())),
            ready: Condvar::new(),
        });
        (
            Promise {
                shared: Some(Arc::clone(&shared)),
            },
            TaskHandle { shared },
        )
    }

    pub fn from_result(outcome: TaskResult<V>) -> Self {
        let (p, h) = Self::channel();
        p.set(outcome);
        h
    }

    pub fn ready(value: V) -> Self {
        Self::from_result(Ok(value))
    }

    pub fn failed(error: ErrorPayload) -> Self {
        Self::from_result(Err(error))
    }

    pub fn is_ready(&self) -> bool {
        matches!(&*self.shared.lock(), Slot::Ready(_))
    }

    /// Runs `k` once the handle is ready: immediately on this thread if it
    /// already is, otherwise on the thread that resolves it.
    pub fn on_ready<K>(&self, k: K)
    where
        K: FnOnce() + Send + 'static,
    {
        let mut slot = self.shared.lock();
        match &mut *slot {
            Slot::Pending(list) => list.push(Box::new(k)),
            Slot::Ready(_) => {
                drop(slot);
                k();
            }
        }
    }

    /// Blocks until ready. On a pool worker this keeps executing other
    /// queued tasks while waiting, so nested waits cannot starve the pool.
    pub fn wait(&self) {
        if self.is_ready() {
            return;
        }
        if runtime::on_worker_thread() {
            runtime::help_until(|| self.is_ready(), |t| self.wait_timeout(t));
        } else {
            let mut slot = self.shared.lock();
            while matches!(&*slot, Slot::Pending(_)) {
                slot = self.shared.ready.wait(slot).unwrap_or_else(|e| e.into_inner());
            }
        }
    }

    fn wait_timeout(&self, timeout: Duration) {
        let slot = self.shared.lock();
        if matches!(&*slot, Slot::Pending(_)) {
            let _ = self.shared.ready.wait_timeout(slot, timeout);
        }
    }
}

impl<V: Clone> TaskHandle<V> {
    /// Waits for the outcome and returns a copy of it.
    pub fn get(&self) -> TaskResult<V> {
        self.wait();
        self.try_get().expect("handle ready after wait")
    }

    pub fn try_get(&self) -> Option<TaskResult<V>> {
        match &*self.shared.lock() {
            Slot::Ready(r) => Some(r.clone()),
            Slot::Pending(_) => None,
        }
    }
}
