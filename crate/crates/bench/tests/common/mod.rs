#![allow(dead_code)]

use std::f64::consts::PI;

/// Straight-loop periodic Lax-Wendroff solver on the whole grid, one step at
/// a time, with the same per-cell operation order as the task kernel.
pub fn reference_solve(initial: &[f64], steps: usize, nu: f64) -> Vec<f64> {
    let n = initial.len();
    let mut u = initial.to_vec();
    let mut flux = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for j in 0..n {
            let (a, b) = (u[j], u[(j + 1) % n]);
            flux[j] = nu * a + 0.5 * nu * (1.0 - nu) * (b - a);
        }
        for j in 0..n {
            next[j] = flux[(j + n - 1) % n] + (u[j] - flux[j]);
        }
        std::mem::swap(&mut u, &mut next);
    }
    u
}

pub fn sine(n: usize) -> Vec<f64> {
    (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
