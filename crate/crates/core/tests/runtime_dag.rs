use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resil_core::{run_pool, QueuePolicy, RuntimeConfig, TaskHandle};

/// Random DAG: node `i` depends on up to three earlier nodes.
fn random_dag(nodes: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..nodes)
        .map(|i| {
            if i == 0 {
                return Vec::new();
            }
            let k = rng.random_range(0..=3.min(i));
            (0..k).map(|_| rng.random_range(0..i)).collect()
        })
        .collect()
}

fn node_value(i: usize, deps: &[u64]) -> u64 {
    deps.iter()
        .fold(i as u64 * 0x9e37_79b9, |acc, d| acc.rotate_left(7) ^ d.wrapping_mul(31))
}

fn serial(dag: &[Vec<usize>]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(dag.len());
    for (i, deps) in dag.iter().enumerate() {
        let vals: Vec<u64> = deps.iter().map(|&d| out[d]).collect();
        out.push(node_value(i, &vals));
    }
    out
}

fn parallel(dag: &[Vec<usize>], workers: usize, policy: QueuePolicy) -> Vec<u64> {
    run_pool(RuntimeConfig::new(workers, policy), |rt| {
        let mut handles: Vec<TaskHandle<u64>> = Vec::with_capacity(dag.len());
        for (i, deps) in dag.iter().enumerate() {
            let h = if deps.is_empty() {
                rt.spawn(move || Ok(node_value(i, &[])))
            } else {
                let dep_handles = deps.iter().map(|&d| handles[d].clone()).collect();
                rt.dataflow(dep_handles, move |vals| Ok(node_value(i, &vals)))
            };
            handles.push(h);
        }
        handles.iter().map(|h| h.get().unwrap()).collect()
    })
    .unwrap()
}

fn with_timeout<T: Send + 'static>(limit: Duration, f: impl FnOnce() -> T + Send + 'static) -> T {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(limit).expect("DAG did not drain in time")
}

#[test]
fn random_dags_drain_and_match_serial() {
    for seed in 0..5 {
        let dag = random_dag(10_000, seed);
        let expected = serial(&dag);
        for (workers, policy) in [
            (1, QueuePolicy::WorkStealing),
            (8, QueuePolicy::WorkStealing),
            (3, QueuePolicy::Fifo),
        ] {
            let dag = dag.clone();
            let got = with_timeout(Duration::from_secs(60), move || parallel(&dag, workers, policy));
            assert_eq!(got, expected, "seed {seed}, {workers} workers, {policy:?}");
        }
    }
}

#[test]
fn values_independent_of_worker_count() {
    let dag = random_dag(2_000, 99);
    let one = parallel(&dag, 1, QueuePolicy::WorkStealing);
    let max = parallel(&dag, 16, QueuePolicy::WorkStealing);
    assert_eq!(one, max);
}

#[test]
fn nested_waits_on_single_worker_drain() {
    // every task blocks on a dataflow node built from its own children
    let total = with_timeout(Duration::from_secs(60), || {
        run_pool(RuntimeConfig::new(1, QueuePolicy::WorkStealing), |rt| {
            let outer: Vec<_> = (0..200_u64)
                .map(|i| {
                    let rt2 = rt.clone();
                    rt.spawn(move || {
                        let a = rt2.spawn(move || Ok(i));
                        let b = rt2.spawn(move || Ok(2 * i));
                        rt2.dataflow(vec![a, b], |v| Ok(v[0] + v[1])).get()
                    })
                })
                .collect();
            outer.iter().map(|h| h.get().unwrap()).sum::<u64>()
        })
        .unwrap()
    });
    assert_eq!(total, 3 * (0..200).sum::<u64>());
}
