use std::fmt;
use std::sync::Arc;

use super::{dataflow_task, passes, run_attempt, TaskFn, Validator};
use crate::error::{ErrorKind, ErrorPayload, TaskResult};
use crate::handle::{Promise, TaskHandle};
use crate::runtime::{when_all, Runtime};

/// Sequential re-execution: at most `n` attempts, each scheduled only after
/// the previous one concluded.
pub struct ReplayPolicy<V> {
    n: usize,
    validator: Option<Validator<V>>,
}

impl<V> Clone for ReplayPolicy<V> {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            validator: self.validator.clone(),
        }
    }
}

impl<V> fmt::Debug for ReplayPolicy<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReplayPolicy")
            .field("n", &self.n)
            .field("validated", &self.validator.is_some())
            .finish()
    }
}

impl<V: Send + 'static> ReplayPolicy<V> {
    /// # Panics
    /// If `n` is zero.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "replay needs at least one attempt");
        Self { n, validator: None }
    }

    pub fn with_validator<P>(mut self, valf: P) -> Self
    where
        P: Fn(&V) -> bool + Send + Sync + 'static,
    {
        self.validator = Some(Arc::new(valf));
        self
    }

    pub fn attempts(&self) -> usize {
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

    /// Waits for `deps` once; every attempt sees the same resolved values.
    /// A failed dependency fails the handle without consuming an attempt.
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
        let replay = Arc::new(Replay {
            rt: rt.clone(),
            n: self.n,
            f,
            validator: self.validator.clone(),
        });
        replay.attempt(0, promise);
    }
}

struct Replay<V> {
    rt: Runtime,
    n: usize,
    f: TaskFn<V>,
    validator: Option<Validator<V>>,
}

enum Verdict<V> {
    Accepted(V),
    Invalid,
    Faulted(ErrorPayload),
}

impl<V: Send + 'static> Replay<V> {
    fn attempt(self: Arc<Self>, index: usize, promise: Promise<V>) {
        let rt = self.rt.clone();
        rt.execute(Box::new(move || {
            let verdict = match run_attempt(&self.f, index) {
                Ok(v) => match &self.validator {
                    Some(valf) if !passes(valf, &v) => Verdict::Invalid,
                    _ => Verdict::Accepted(v),
                },
                Err(e) => Verdict::Faulted(e),
            };
            match verdict {
                Verdict::Accepted(v) => promise.set(Ok(v)),
                _ if index + 1 < self.n => self.attempt(index + 1, promise),
                Verdict::Invalid => promise.set(Err(ErrorPayload::new(
                    ErrorKind::ValidationExhausted,
                    format!("no valid result after {} attempts", self.n),
                ))),
                Verdict::Faulted(e) => promise.set(Err(ErrorPayload::new(
                    ErrorKind::ReplayExhausted,
                    format!("all {} attempts faulted", self.n),
                )
                .with_cause(e))),
            }
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resiliency::{
        async_replay, async_replay_validate, current_attempt, dataflow_replay, dataflow_replay_validate,
    };
    use crate::runtime::{run_pool, QueuePolicy, RuntimeConfig};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn with_rt<R>(body: impl FnOnce(&Runtime) -> R) -> R {
        run_pool(RuntimeConfig::new(3, QueuePolicy::WorkStealing), body).unwrap()
    }

    /// Task returning `script[k]` on its k-th execution and counting calls.
    fn scripted(
        script: Vec<Result<i32, &'static str>>,
    ) -> (Arc<AtomicUsize>, impl Fn() -> TaskResult<i32> + Send + Sync + 'static) {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = Arc::clone(&calls);
        let f = move || {
            let k = c.fetch_add(1, Ordering::SeqCst);
            script[k].map_err(ErrorPayload::fault)
        };
        (calls, f)
    }

    #[test]
    fn first_success_runs_once() {
        with_rt(|rt| {
            let (calls, f) = scripted(vec![Ok(42)]);
            assert_eq!(async_replay(rt, 3, f).get(), Ok(42));
            assert_eq!(calls.load(Ordering::SeqCst), 1);
        });
    }

    #[test]
    fn succeeds_on_third_attempt() {
        with_rt(|rt| {
            let (calls, f) = scripted(vec![Err("e1"), Err("e2"), Ok(7)]);
            assert_eq!(async_replay(rt, 3, f).get(), Ok(7));
            assert_eq!(calls.load(Ordering::SeqCst), 3);
        });
    }

    #[test]
    fn exhaustion_carries_last_fault() {
        with_rt(|rt| {
            let (calls, f) = scripted(vec![Err("e1"), Err("e2"), Err("e3")]);
            let e = async_replay(rt, 3, f).get().unwrap_err();
            assert_eq!(e.kind, ErrorKind::ReplayExhausted);
            assert_eq!(e.cause().unwrap().message, "e3");
            assert_eq!(calls.load(Ordering::SeqCst), 3);
        });
    }

    #[test]
    fn validate_variants() {
        with_rt(|rt| {
            let (calls, f) = scripted(vec![Ok(42)]);
            assert_eq!(async_replay_validate(rt, 2, |x| *x == 42, f).get(), Ok(42));
            assert_eq!(calls.load(Ordering::SeqCst), 1);

            let (calls, f) = scripted(vec![Ok(7), Ok(7), Ok(42)]);
            assert_eq!(async_replay_validate(rt, 3, |x| *x == 42, f).get(), Ok(42));
            assert_eq!(calls.load(Ordering::SeqCst), 3);

            let (calls, f) = scripted(vec![Ok(7), Ok(7)]);
            let e = async_replay_validate(rt, 2, |x| *x == 42, f).get().unwrap_err();
            assert_eq!(e.kind, ErrorKind::ValidationExhausted);
            assert_eq!(calls.load(Ordering::SeqCst), 2);

            // last attempt faulted after an invalid one
            let (_, f) = scripted(vec![Ok(7), Err("late")]);
            let e = async_replay_validate(rt, 2, |x| *x == 42, f).get().unwrap_err();
            assert_eq!(e.kind, ErrorKind::ReplayExhausted);
        });
    }

    #[test]
    fn panicking_validator_rejects() {
        with_rt(|rt| {
            let (calls, f) = scripted(vec![Ok(1), Ok(2)]);
            let h = async_replay_validate(
                rt,
                2,
                |x: &i32| {
                    if *x == 1 {
                        panic!("validator bug")
                    }
                    true
                },
                f,
            );
            assert_eq!(h.get(), Ok(2));
            assert_eq!(calls.load(Ordering::SeqCst), 2);
        });
    }

    #[test]
    fn attempts_are_indexed() {
        with_rt(|rt| {
            let h = async_replay(rt, 4, || match current_attempt() {
                Some(3) => Ok(3),
                Some(k) => Err(ErrorPayload::fault(format!("attempt {k}"))),
                None => unreachable!(),
            });
            assert_eq!(h.get(), Ok(3));
            assert_eq!(current_attempt(), None);
        });
    }

    #[test]
    fn dataflow_reuses_dependency_values() {
        with_rt(|rt| {
            let dep_runs = Arc::new(AtomicUsize::new(0));
            let deps: Vec<_> = [1, 2]
                .into_iter()
                .map(|v| {
                    let d = Arc::clone(&dep_runs);
                    rt.spawn(move || {
                        d.fetch_add(1, Ordering::SeqCst);
                        Ok(v)
                    })
                })
                .collect();
            let calls = Arc::new(AtomicUsize::new(0));
            let c = Arc::clone(&calls);
            let h = dataflow_replay(
                rt,
                3,
                move |v: &[i32]| {
                    if c.fetch_add(1, Ordering::SeqCst) == 0 {
                        Err(ErrorPayload::fault("once"))
                    } else {
                        Ok(v.iter().sum::<i32>())
                    }
                },
                deps,
            );
            assert_eq!(h.get(), Ok(3));
            assert_eq!(calls.load(Ordering::SeqCst), 2);
            assert_eq!(dep_runs.load(Ordering::SeqCst), 2);
        });
    }

    #[test]
    fn dataflow_failed_dependency_skips_attempts() {
        with_rt(|rt| {
            let calls = Arc::new(AtomicUsize::new(0));
            let c = Arc::clone(&calls);
            let e = ErrorPayload::fault("dep");
            let h = dataflow_replay_validate(
                rt,
                3,
                |_: &i32| true,
                move |_: &[i32]| {
                    c.fetch_add(1, Ordering::SeqCst);
                    Ok(0)
                },
                vec![TaskHandle::ready(1), TaskHandle::failed(e.clone())],
            );
            assert_eq!(h.get(), Err(e));
            assert_eq!(calls.load(Ordering::SeqCst), 0);
        });
    }

    #[test]
    fn single_attempt_matches_plain_dataflow() {
        with_rt(|rt| {
            let deps = || vec![TaskHandle::ready(20), TaskHandle::ready(22)];
            let a = dataflow_replay(rt, 1, |v: &[i32]| Ok(v[0] + v[1]), deps());
            let b = rt.dataflow(deps(), |v| Ok(v[0] + v[1]));
            assert_eq!(a.get(), b.get());
        });
    }

    #[test]
    #[should_panic(expected = "at least one attempt")]
    fn zero_attempts_rejected() {
        let _ = ReplayPolicy::<i32>::new(0);
    }
}
