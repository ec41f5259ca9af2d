//! Controlled failure injection.
//!
//! Stochastic faults follow an exponential law: with rate factor `x` a draw
//! from `Exp(x)` exceeding 1 marks a failure, so a task fails with
//! probability `e^{-x}`. Scripted models replay a fixed outcome list and
//! are meant for tests.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{ErrorPayload, TaskResult};

/// The value a fault-free universal task returns.
pub const UNIVERSAL_ANSWER: i64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultKind {
    /// The task signals a fault.
    #[default]
    Loud,
    /// The task completes with a corrupted value.
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedOutcome {
    Succeed,
    LoudFault,
    SilentCorrupt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultMode {
    Probabilistic { rate_factor: f64 },
    Scripted(Vec<ScriptedOutcome>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultModelError {
    #[error("rate factor must be a non-negative number, got {0}")]
    RateFactor(f64),
    #[error("failure probability must lie in [0, 1], got {0}")]
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultModel {
    pub mode: FaultMode,
    pub kind: FaultKind,
    pub seed: u64,
}

impl FaultModel {
    /// A model that never fails.
    pub fn none() -> Self {
        Self {
            mode: FaultMode::Probabilistic {
                rate_factor: f64::INFINITY,
            },
            kind: FaultKind::Loud,
            seed: 0,
        }
    }

    /// Failure probability `e^{-x}` for rate factor `x >= 0` (`x = inf`
    /// never fails).
    pub fn with_rate_factor(rate_factor: f64, kind: FaultKind, seed: u64) -> Result<Self, FaultModelError> {
        if rate_factor.is_nan() || rate_factor < 0.0 {
            return Err(FaultModelError::RateFactor(rate_factor));
        }
        Ok(Self {
            mode: FaultMode::Probabilistic { rate_factor },
            kind,
            seed,
        })
    }

    /// Same law parameterised by the failure probability, `x = -ln p`.
    pub fn with_probability(p: f64, kind: FaultKind, seed: u64) -> Result<Self, FaultModelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(FaultModelError::Probability(p));
        }
        Self::with_rate_factor(rate_factor_for(p), kind, seed)
    }

    pub fn scripted(outcomes: Vec<ScriptedOutcome>) -> Self {
        Self {
            mode: FaultMode::Scripted(outcomes),
            kind: FaultKind::Loud,
            seed: 0,
        }
    }

    /// Per-draw failure probability of a probabilistic model.
    pub fn failure_probability(&self) -> Option<f64> {
        match self.mode {
            FaultMode::Probabilistic { rate_factor } => Some(failure_probability(rate_factor)),
            FaultMode::Scripted(_) => None,
        }
    }
}

pub fn failure_probability(rate_factor: f64) -> f64 {
    (-rate_factor).exp()
}

pub fn rate_factor_for(p: f64) -> f64 {
    -p.ln()
}

/// One exponential draw: true with probability `e^{-x}`.
pub fn should_fail<R: Rng + ?Sized>(rate_factor: f64, rng: &mut R) -> bool {
    if rate_factor == 0.0 {
        return true;
    }
    if rate_factor.is_infinite() {
        return false;
    }
    let dist = Exp::new(rate_factor).expect("positive finite rate");
    dist.sample(rng) > 1.0
}

/// Silent-error payload: `1 - v`, or `v + 1` when `v` lies strictly between
/// 0 and 1, so the result always differs from `v` by at least 1 for
/// moderate magnitudes.
pub fn corrupt_value(v: f64) -> f64 {
    if v > 0.0 && v < 1.0 {
        v + 1.0
    } else {
        -v + 1.0
    }
}

/// Shared count of injected failures.
#[derive(Debug, Clone, Default)]
pub struct FailureCounter(Arc<AtomicU64>);

impl FailureCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::SeqCst);
    }
}

/// What the injector decided for one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Injection {
    None,
    Loud,
    Silent,
}

/// Where a draw comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawSite {
    /// Next draw of the calling thread's stream (probabilistic) or the next
    /// script entry in call order (scripted).
    Sequential,
    /// Draw addressed by task and attempt. Probabilistic draws use a
    /// dedicated stream per task, so the outcome does not depend on which
    /// thread runs the attempt; scripted models index the script by
    /// `attempt`.
    Keyed { task: u64, attempt: u64 },
}

// word offset between attempts within a task stream
const ATTEMPT_STRIDE: u128 = 64;

thread_local! {
    static THREAD_STREAM: RefCell<Option<(u64, ChaCha8Rng)>> = const { RefCell::new(None) };
    static THREAD_INDEX: u64 = next_thread_index();
}

fn next_thread_index() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

/// Applies a [`FaultModel`] and counts what it injects. Clones share the
/// counter and the script cursor.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    model: Arc<FaultModel>,
    counter: FailureCounter,
    cursor: Arc<AtomicUsize>,
}

impl FaultInjector {
    pub fn new(model: FaultModel) -> Self {
        Self::with_counter(model, FailureCounter::new())
    }

    pub fn with_counter(model: FaultModel, counter: FailureCounter) -> Self {
        Self {
            model: Arc::new(model),
            counter,
            cursor: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn disabled() -> Self {
        Self::new(FaultModel::none())
    }

    pub fn model(&self) -> &FaultModel {
        &self.model
    }

    pub fn counter(&self) -> &FailureCounter {
        &self.counter
    }

    pub fn injected(&self) -> u64 {
        self.counter.get()
    }

    pub fn draw(&self, site: DrawSite) -> Injection {
        let injection = match &self.model.mode {
            FaultMode::Probabilistic { rate_factor } => {
                let x = *rate_factor;
                let fail = match site {
                    DrawSite::Sequential => self.thread_draw(x),
                    DrawSite::Keyed { task, attempt } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.model.seed);
                        rng.set_stream(task);
                        rng.set_word_pos(u128::from(attempt) * ATTEMPT_STRIDE);
                        should_fail(x, &mut rng)
                    }
                };
                match (fail, self.model.kind) {
                    (false, _) => Injection::None,
                    (true, FaultKind::Loud) => Injection::Loud,
                    (true, FaultKind::Silent) => Injection::Silent,
                }
            }
            FaultMode::Scripted(script) => {
                let index = match site {
                    DrawSite::Sequential => self.cursor.fetch_add(1, Ordering::SeqCst),
                    DrawSite::Keyed { attempt, .. } => attempt as usize,
                };
                match script.get(index) {
                    Some(ScriptedOutcome::LoudFault) => Injection::Loud,
                    Some(ScriptedOutcome::SilentCorrupt) => Injection::Silent,
                    Some(ScriptedOutcome::Succeed) | None => Injection::None,
                }
            }
        };
        if injection != Injection::None {
            self.counter.increment();
        }
        injection
    }

    fn thread_draw(&self, rate_factor: f64) -> bool {
        let seed = self.model.seed;
        THREAD_STREAM.with(|cell| {
            let mut slot = cell.borrow_mut();
            if !matches!(&*slot, Some((s, _)) if *s == seed) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(THREAD_INDEX.with(|i| *i));
                *slot = Some((seed, rng));
            }
            let (_, rng) = slot.as_mut().expect("stream initialised");
            should_fail(rate_factor, rng)
        })
    }
}

/// Grain size and fault process of the artificial workload.
#[derive(Debug, Clone)]
pub struct WorkSpec {
    pub delay: Duration,
    pub injector: FaultInjector,
}

/// Spins until `delay` of wall time has elapsed; returns the measured time.
pub fn busy_wait(delay: Duration) -> Duration {
    let start = Instant::now();
    loop {
        let elapsed = start.elapsed();
        if elapsed >= delay {
            return elapsed;
        }
        std::hint::spin_loop();
    }
}

/// The artificial task: decide the fault first, burn the full grain, then
/// fail loudly, return a corrupted answer, or return 42.
pub fn universal_task(spec: &WorkSpec, site: DrawSite) -> TaskResult<i64> {
    let injection = spec.injector.draw(site);
    busy_wait(spec.delay);
    match injection {
        Injection::None => Ok(UNIVERSAL_ANSWER),
        Injection::Loud => Err(ErrorPayload::injected()),
        Injection::Silent => Ok(corrupt_value(UNIVERSAL_ANSWER as f64) as i64),
    }
}
