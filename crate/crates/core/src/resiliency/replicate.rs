use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{dataflow_task, passes, run_attempt, TaskFn, Validator, Voter};
use crate::error::{ErrorKind, ErrorPayload, TaskResult};
use crate::handle::{Promise, TaskHandle};
use crate::runtime::{when_all, Runtime};

/// Concurrent replication: exactly `n` instances are launched and all of
/// them run to completion before a result is selected.
pub struct ReplicatePolicy<V> {
    n: usize,
    validator: Option<Validator<V>>,
    voter: Option<Voter<V>>,
}

impl<V> Clone for ReplicatePolicy<V> {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            validator: self.validator.clone(),
            voter: self.voter.clone(),
        }
    }
}

impl<V> fmt::Debug for ReplicatePolicy<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReplicatePolicy")
            .field("n", &self.n)
            .field("validated", &self.validator.is_some())
            .field("voted", &self.voter.is_some())
            .finish()
    }
}

impl<V: Send + 'static> ReplicatePolicy<V> {
    /// # Panics
    /// If `n` is zero.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "replicate needs at least one instance");
        Self {
            n,
            validator: None,
            voter: None,
        }
    }

    pub fn with_validator<P>(mut self, valf: P) -> Self
    where
        P: Fn(&V) -> bool + Send + Sync + 'static,
    {
        self.validator = Some(Arc::new(valf));
        self
    }

    pub fn with_voter<W>(mut self, votef: W) -> Self
    where
        W: Fn(&[V]) -> V + Send + Sync + 'static,
    {
        self.voter = Some(Arc::new(votef));
        self
    }

    pub fn instances(&self) -> usize {
        self.n
    }

    pub fn launch<F>(&self, rt: &Runtime, f: F) -> TaskHandle<V>
    where
        F: Fn() -> TaskResult<V> + Send + Sync + 'static,
    {
        let (promise, handle) = TaskHandle::channel();
        self.start(rt, Arc::new(f), promise);
        handle
    }

    /// Waits for `deps` once; all instances share the resolved values. A
    /// failed dependency fails the handle before any instance launches.
    pub fn launch_dataflow<D, F>(&self, rt: &Runtime, f: F, deps: Vec<TaskHandle<D>>) -> TaskHandle<V>
    where
        D: Clone + Send + Sync + 'static,
        F: Fn(&[D]) -> TaskResult<V> + Send + Sync + 'static,
    {
        let (promise, handle) = TaskHandle::channel();
        let policy = self.clone();
        let rt = rt.clone();
        when_all(deps, move |joined| match joined {
            Ok(values) => policy.start(&rt, dataflow_task(f, values), promise),
            Err(e) => promise.set(Err(e)),
        });
        handle
    }

    fn start(&self, rt: &Runtime, f: TaskFn<V>, promise: Promise<V>) {
        let gather = Arc::new(Gather {
            outcomes: Mutex::new((0..self.n).map(|_| None).collect()),
            remaining: AtomicUsize::new(self.n),
            promise: Mutex::new(Some(promise)),
            policy: self.clone(),
        });
        for index in 0..self.n {
            let f = Arc::clone(&f);
            let gather = Arc::clone(&gather);
            rt.execute(Box::new(move || {
                let outcome = run_attempt(&f, index);
                gather.record(index, outcome);
            }));
        }
    }

    /// Applies this policy's selection rule to per-instance outcomes.
    pub fn select(&self, outcomes: Vec<TaskResult<V>>) -> TaskResult<V> {
        select_replicated(outcomes, self.validator.as_ref(), self.voter.as_ref())
    }
}

struct Gather<V> {
    outcomes: Mutex<Vec<Option<TaskResult<V>>>>,
    remaining: AtomicUsize,
    promise: Mutex<Option<Promise<V>>>,
    policy: ReplicatePolicy<V>,
}

impl<V: Send + 'static> Gather<V> {
    fn record(&self, index: usize, outcome: TaskResult<V>) {
        self.outcomes.lock().unwrap_or_else(|e| e.into_inner())[index] = Some(outcome);
        if self.remaining.fetch_sub(1, Ordering::AcqRel) != 1 {
            return;
        }
        // last instance to finish performs the selection
        let outcomes: Vec<_> = std::mem::take(&mut *self.outcomes.lock().unwrap_or_else(|e| e.into_inner()))
            .into_iter()
            .map(|o| o.expect("every instance recorded"))
            .collect();
        let promise = self
            .promise
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .expect("selection runs once");
        promise.set(self.policy.select(outcomes));
    }
}

/// Selection over replica outcomes in launch-index order.
///
/// * no validator, no voter: the success with the smallest index;
/// * validator: the smallest-index success that validates;
/// * voter: the voter applied to all (validated) successes.
///
/// With no successes the result is `AllReplicasFailed` caused by the fault of
/// the highest index; with successes of which none validate it is
/// `ValidationExhausted`. A panicking voter yields a task fault.
pub fn select_replicated<V>(
    outcomes: Vec<TaskResult<V>>,
    validator: Option<&Validator<V>>,
    voter: Option<&Voter<V>>,
) -> TaskResult<V> {
    let n = outcomes.len();
    let mut last_fault = None;
    let mut successes = Vec::with_capacity(n);
    for outcome in outcomes {
        match outcome {
            Ok(v) => successes.push(v),
            Err(e) => last_fault = Some(e),
        }
    }
    if successes.is_empty() {
        let mut e = ErrorPayload::new(ErrorKind::AllReplicasFailed, format!("all {n} replicas faulted"));
        if let Some(cause) = last_fault {
            e = e.with_cause(cause);
        }
        return Err(e);
    }
    let computed = successes.len();
    let eligible: Vec<V> = match validator {
        Some(valf) => successes.into_iter().filter(|v| passes(valf, v)).collect(),
        None => successes,
    };
    if eligible.is_empty() {
        return Err(ErrorPayload::new(
            ErrorKind::ValidationExhausted,
            format!("{computed} of {n} replicas computed a result, none validated"),
        ));
    }
    match voter {
        None => Ok(eligible.into_iter().next().expect("non-empty")),
        Some(votef) => panic::catch_unwind(AssertUnwindSafe(|| votef(&eligible))).map_err(ErrorPayload::from_panic),
    }
}
