use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use resil_core::resiliency::{
    async_replay, async_replay_validate, async_replicate, async_replicate_validate, async_replicate_vote,
    async_replicate_vote_validate, current_attempt, dataflow_replay, dataflow_replicate_vote, majority_vote,
};
use resil_core::{ErrorKind, ErrorPayload, QueuePolicy, Runtime, RuntimeConfig, TaskResult, ThreadPool};

fn rt() -> &'static Runtime {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| ThreadPool::start(RuntimeConfig::new(4, QueuePolicy::WorkStealing)).unwrap())
        .runtime()
}

/// Outcome per attempt/launch index: `None` faults, `Some(v)` returns `v`.
type Script = Vec<Option<i32>>;

fn task(script: Script) -> (Arc<AtomicUsize>, impl Fn() -> TaskResult<i32> + Send + Sync + 'static) {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let f = move || {
        c.fetch_add(1, Ordering::SeqCst);
        let k = current_attempt().expect("inside a combinator");
        script[k].ok_or_else(|| ErrorPayload::fault(format!("fault {k}")))
    };
    (calls, f)
}

fn script(n: usize) -> impl Strategy<Value = Script> {
    prop::collection::vec(prop::option::weighted(0.6, 40_i32..44), n)
}

fn valid(x: &i32) -> bool {
    *x >= 42
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn replay_attempt_bound((n, s) in (1_usize..6).prop_flat_map(|n| (Just(n), script(n)))) {
        let (calls, f) = task(s.clone());
        let out = async_replay(rt(), n, f).get();
        let runs = calls.load(Ordering::SeqCst);
        prop_assert!(runs <= n);
        match s.iter().position(Option::is_some) {
            Some(k) => {
                prop_assert_eq!(out, Ok(s[k].unwrap()));
                prop_assert_eq!(runs, k + 1);
            }
            None => {
                let e = out.unwrap_err();
                prop_assert_eq!(e.kind, ErrorKind::ReplayExhausted);
                prop_assert_eq!(runs, n);
            }
        }
    }

    #[test]
    fn replay_validate_taxonomy((n, s) in (1_usize..6).prop_flat_map(|n| (Just(n), script(n)))) {
        let (calls, f) = task(s.clone());
        let out = async_replay_validate(rt(), n, valid, f).get();
        let runs = calls.load(Ordering::SeqCst);
        prop_assert!(runs <= n);
        if s[0].is_some_and(|v| valid(&v)) {
            prop_assert_eq!(runs, 1);
        }
        match out {
            Ok(v) => prop_assert!(valid(&v)),
            Err(e) => {
                let expected = if s[n - 1].is_some() {
                    ErrorKind::ValidationExhausted
                } else {
                    ErrorKind::ReplayExhausted
                };
                prop_assert_eq!(e.kind, expected);
            }
        }
    }

    #[test]
    fn replicate_runs_exactly_n((n, s) in (1_usize..6).prop_flat_map(|n| (Just(n), script(n)))) {
        let launches = [
            task(s.clone()),
            task(s.clone()),
            task(s.clone()),
            task(s.clone()),
        ];
        let counters: Vec<_> = launches.iter().map(|(c, _)| Arc::clone(c)).collect();
        let [a, b, c, d] = launches;
        let outs = [
            async_replicate(rt(), n, a.1).get(),
            async_replicate_validate(rt(), n, valid, b.1).get(),
            async_replicate_vote(rt(), n, majority_vote, c.1).get(),
            async_replicate_vote_validate(rt(), n, majority_vote, valid, d.1).get(),
        ];
        for counter in &counters {
            prop_assert_eq!(counter.load(Ordering::SeqCst), n);
        }
        let successes: Vec<i32> = s.iter().flatten().copied().collect();
        if successes.is_empty() {
            for out in &outs {
                prop_assert_eq!(out.as_ref().unwrap_err().kind, ErrorKind::AllReplicasFailed);
            }
        } else {
            prop_assert_eq!(outs[0].clone(), Ok(successes[0]));
            prop_assert_eq!(outs[2].clone(), Ok(majority_vote(&successes)));
            let valids: Vec<i32> = successes.iter().copied().filter(valid).collect();
            if valids.is_empty() {
                prop_assert_eq!(outs[1].as_ref().unwrap_err().kind, ErrorKind::ValidationExhausted);
                prop_assert_eq!(outs[3].as_ref().unwrap_err().kind, ErrorKind::ValidationExhausted);
            } else {
                prop_assert_eq!(outs[1].clone(), Ok(valids[0]));
                prop_assert_eq!(outs[3].clone(), Ok(majority_vote(&valids)));
            }
        }
    }

    #[test]
    fn fault_free_transparency(a in any::<i64>(), b in any::<i64>(), n in 1_usize..5) {
        let rt = rt();
        let plain = rt.dataflow(vec![resil_core::TaskHandle::ready(a), resil_core::TaskHandle::ready(b)],
            |v| Ok(v[0].wrapping_mul(v[1]) ^ 0x5555));
        let expected = plain.get();
        let deps = || vec![resil_core::TaskHandle::ready(a), resil_core::TaskHandle::ready(b)];
        let f = |v: &[i64]| Ok(v[0].wrapping_mul(v[1]) ^ 0x5555);
        prop_assert_eq!(dataflow_replay(rt, n, f, deps()).get(), expected.clone());
        prop_assert_eq!(dataflow_replicate_vote(rt, n, majority_vote, f, deps()).get(), expected.clone());
        let g = move || Ok(a.wrapping_mul(b) ^ 0x5555);
        prop_assert_eq!(rt.spawn(g).get(), expected.clone());
        prop_assert_eq!(async_replicate_validate(rt, n, |_| true, g).get(), expected);
    }
}
