//! Worker pool, task spawning and dataflow joins.
//!
//! The pool runs boxed jobs on a fixed set of OS threads. Under
//! [`QueuePolicy::WorkStealing`] each worker owns a LIFO deque and steals
//! from siblings and from the global injector when it runs dry; under
//! [`QueuePolicy::Fifo`] every job goes through the shared FIFO injector.

use std::cell::RefCell;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_deque::{Injector, Steal, Stealer, Worker};

use crate::error::{ErrorPayload, TaskResult};
use crate::handle::{Promise, TaskHandle};

pub(crate) type Job = Box<dyn FnOnce() + Send + 'static>;

const IDLE_POLL: Duration = Duration::from_millis(5);
const HELP_POLL: Duration = Duration::from_micros(200);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueuePolicy {
    #[default]
    WorkStealing,
    Fifo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub worker_count: usize,
    pub queue_policy: QueuePolicy,
}

impl RuntimeConfig {
    pub fn new(worker_count: usize, queue_policy: QueuePolicy) -> Self {
        Self {
            worker_count,
            queue_policy,
        }
    }

    /// One worker per available hardware thread, work stealing.
    pub fn available() -> Self {
        let n = thread::available_parallelism().map_or(1, |n| n.get());
        Self::new(n, QueuePolicy::WorkStealing)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.worker_count == 0 {
            return Err(ConfigError::NoWorkers);
        }
        Ok(())
    }
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self::available()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("worker_count must be at least 1")]
    NoWorkers,
    #[error("failed to start worker thread: {0}")]
    Spawn(String),
}

struct Shared {
    policy: QueuePolicy,
    injector: Injector<Job>,
    stealers: Vec<Stealer<Job>>,
    // spawned and not yet finished
    outstanding: AtomicUsize,
    sleepers: AtomicUsize,
    shutdown: AtomicBool,
    idle_lock: Mutex<()>,
    wake: Condvar,
    drained: Condvar,
}

impl Shared {
    fn lock_idle(&self) -> MutexGuard<'_, ()> {
        self.idle_lock.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn has_queued(&self) -> bool {
        !self.injector.is_empty() || self.stealers.iter().any(|s| !s.is_empty())
    }

    fn notify_sleeper(&self) {
        if self.sleepers.load(Ordering::SeqCst) > 0 {
            let _g = self.lock_idle();
            self.wake.notify_one();
        }
    }

    fn job_done(&self) {
        if self.outstanding.fetch_sub(1, Ordering::AcqRel) == 1 {
            let _g = self.lock_idle();
            self.drained.notify_all();
        }
    }
}

struct WorkerCtx {
    shared: Arc<Shared>,
    index: usize,
    local: Worker<Job>,
}

thread_local! {
    static WORKER: RefCell<Option<WorkerCtx>> = const { RefCell::new(None) };
}

/// Cheap cloneable handle to a running pool.
#[derive(Clone)]
pub struct Runtime {
    shared: Arc<Shared>,
    workers: usize,
}

impl Runtime {
    pub fn worker_count(&self) -> usize {
        self.workers
    }

    /// Schedules `f` and returns a handle to its outcome. A panic inside `f`
    /// fails the handle with a task fault.
    pub fn spawn<V, F>(&self, f: F) -> TaskHandle<V>
    where
        V: Send + 'static,
        F: FnOnce() -> TaskResult<V> + Send + 'static,
    {
        let (promise, handle) = TaskHandle::channel();
        self.spawn_into(f, promise);
        handle
    }

    pub(crate) fn spawn_into<V, F>(&self, f: F, promise: Promise<V>)
    where
        V: Send + 'static,
        F: FnOnce() -> TaskResult<V> + Send + 'static,
    {
        self.execute(Box::new(move || promise.set(catch_fault(f))));
    }

    /// Runs `f` once every dependency is ready, passing their values in
    /// order. If any dependency failed, `f` does not run and the handle fails
    /// with the failure of the lowest-indexed failed dependency.
    pub fn dataflow<D, V, F>(&self, deps: Vec<TaskHandle<D>>, f: F) -> TaskHandle<V>
    where
        D: Clone + Send + 'static,
        V: Send + 'static,
        F: FnOnce(Vec<D>) -> TaskResult<V> + Send + 'static,
    {
        let (promise, handle) = TaskHandle::channel();
        let rt = self.clone();
        when_all(deps, move |joined| match joined {
            Ok(values) => rt.spawn_into(move || f(values), promise),
            Err(e) => promise.set(Err(e)),
        });
        handle
    }

    pub(crate) fn execute(&self, job: Job) {
        self.shared.outstanding.fetch_add(1, Ordering::AcqRel);
        let pushed_local = WORKER.with(|w| match &*w.borrow() {
            Some(ctx) if Arc::ptr_eq(&ctx.shared, &self.shared) && self.shared.policy == QueuePolicy::WorkStealing => {
                ctx.local.push(job);
                None
            }
            _ => Some(job),
        });
        if let Some(job) = pushed_local {
            self.shared.injector.push(job);
        }
        self.shared.notify_sleeper();
    }

    /// Blocks until every spawned task (including tasks they spawned) has
    /// finished.
    pub fn wait_idle(&self) {
        let mut g = self.shared.lock_idle();
        while self.shared.outstanding.load(Ordering::Acquire) != 0 {
            g = self
                .shared
                .drained
                .wait_timeout(g, IDLE_POLL)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

pub(crate) fn catch_fault<V, F>(f: F) -> TaskResult<V>
where
    F: FnOnce() -> TaskResult<V>,
{
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| Err(ErrorPayload::from_panic(p)))
}

/// Calls `k` once all `deps` are ready, with their values in index order or
/// the first failure by index.
pub fn when_all<D, K>(deps: Vec<TaskHandle<D>>, k: K)
where
    D: Clone + Send + 'static,
    K: FnOnce(TaskResult<Vec<D>>) + Send + 'static,
{
    if deps.is_empty() {
        k(Ok(Vec::new()));
        return;
    }
    let join = Arc::new(Join {
        remaining: AtomicUsize::new(deps.len()),
        k: Mutex::new(Some(k)),
        deps: deps.clone(),
    });
    for dep in deps {
        let join = Arc::clone(&join);
        dep.on_ready(move || {
            if join.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
                join.finish();
            }
        });
    }
}

struct Join<D, K> {
    remaining: AtomicUsize,
    k: Mutex<Option<K>>,
    deps: Vec<TaskHandle<D>>,
}

impl<D: Clone, K: FnOnce(TaskResult<Vec<D>>)> Join<D, K> {
    fn finish(&self) {
        let k = self
            .k
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .expect("join completes once");
        let mut values = Vec::with_capacity(self.deps.len());
        for dep in &self.deps {
            match dep.try_get().expect("dependency ready") {
                Ok(v) => values.push(v),
                Err(e) => return k(Err(e)),
            }
        }
        k(Ok(values))
    }
}

/// Owns the worker threads of a pool. Dropping it drains outstanding work
/// and joins the workers.
pub struct ThreadPool {
    runtime: Runtime,
    threads: Vec<JoinHandle<()>>,
}

impl ThreadPool {
    pub fn start(cfg: RuntimeConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let locals: Vec<Worker<Job>> = (0..cfg.worker_count).map(|_| Worker::new_lifo()).collect();
        let shared = Arc::new(Shared {
            policy: cfg.queue_policy,
            injector: Injector::new(),
            stealers: locals.iter().map(Worker::stealer).collect(),
            outstanding: AtomicUsize::new(0),
            sleepers: AtomicUsize::new(0),
            shutdown: AtomicBool::new(false),
            idle_lock: Mutex::new(()),
            wake: Condvar::new(),
            drained: Condvar::new(),
        });
        let mut pool = ThreadPool {
            runtime: Runtime {
                shared: Arc::clone(&shared),
                workers: cfg.worker_count,
            },
            threads: Vec::with_capacity(cfg.worker_count),
        };
        for (index, local) in locals.into_iter().enumerate() {
            let shared = Arc::clone(&shared);
            let t = thread::Builder::new()
                .name(format!("resil-worker-{index}"))
                .spawn(move || worker_main(WorkerCtx { shared, index, local }))
                .map_err(|e| ConfigError::Spawn(e.to_string()))?;
            pool.threads.push(t);
        }
        Ok(pool)
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.threads.is_empty() {
            return;
        }
        self.runtime.wait_idle();
        let shared = &self.runtime.shared;
        shared.shutdown.store(true, Ordering::SeqCst);
        {
            let _g = shared.lock_idle();
            shared.wake.notify_all();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts a pool, runs `body` on the calling thread, drains every
/// outstanding task and stops the workers. Configuration errors are
/// reported before `body` runs.
pub fn run_pool<R, B>(cfg: RuntimeConfig, body: B) -> Result<R, ConfigError>
where
    B: FnOnce(&Runtime) -> R,
{
    let pool = ThreadPool::start(cfg)?;
    let out = body(pool.runtime());
    pool.shutdown();
    Ok(out)
}

fn worker_main(ctx: WorkerCtx) {
    let shared = Arc::clone(&ctx.shared);
    WORKER.with(|w| *w.borrow_mut() = Some(ctx));
    loop {
        if let Some(job) = find_job() {
            run_job(&shared, job);
            continue;
        }
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        shared.sleepers.fetch_add(1, Ordering::SeqCst);
        {
            let g = shared.lock_idle();
            if !shared.has_queued() && !shared.shutdown.load(Ordering::SeqCst) {
                let _ = shared.wake.wait_timeout(g, IDLE_POLL);
            }
        }
        shared.sleepers.fetch_sub(1, Ordering::SeqCst);
    }
    WORKER.with(|w| *w.borrow_mut() = None);
}

fn run_job(shared: &Shared, job: Job) {
    // Jobs built by this crate catch panics themselves.
    job();
    shared.job_done();
}

fn find_job() -> Option<Job> {
    WORKER.with(|w| {
        let w = w.borrow();
        let ctx = w.as_ref()?;
        if let Some(job) = ctx.local.pop() {
            return Some(job);
        }
        let shared = &ctx.shared;
        loop {
            let mut retry = false;
            let from_global = match shared.policy {
                QueuePolicy::Fifo => shared.injector.steal(),
                QueuePolicy::WorkStealing => shared.injector.steal_batch_and_pop(&ctx.local),
            };
            match from_global {
                Steal::Success(job) => return Some(job),
                Steal::Retry => retry = true,
                Steal::Empty => {}
            }
            let n = shared.stealers.len();
            for off in 1..n {
                match shared.stealers[(ctx.index + off) % n].steal() {
                    Steal::Success(job) => return Some(job),
                    Steal::Retry => retry = true,
                    Steal::Empty => {}
                }
            }
            if !retry {
                return None;
            }
        }
    })
}

pub(crate) fn on_worker_thread() -> bool {
    WORKER.with(|w| w.borrow().is_some())
}

/// Help-first wait used by [`TaskHandle::wait`] on worker threads: run other
/// queued jobs until `done` holds, parking briefly when there is nothing to
/// run.
pub(crate) fn help_until(done: impl Fn() -> bool, park: impl Fn(Duration)) {
    let Some(shared) = WORKER.with(|w| w.borrow().as_ref().map(|c| Arc::clone(&c.shared))) else {
        return;
    };
    while !done() {
        match find_job() {
            Some(job) => run_job(&shared, job),
            None => park(HELP_POLL),
        }
    }
}
