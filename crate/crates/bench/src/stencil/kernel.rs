//! Lax-Wendroff update for linear advection in conservative flux form.
//!
//! With Courant number `nu` the numerical flux through the interface between
//! cells `a` (left) and `b` (right) is
//!
//! ```text
//! F(a, b) = nu * a + nu * (1 - nu) / 2 * (b - a)
//! ```
//!
//! and a cell advances as `u'_j = F_{j-1/2} + (u_j - F_{j+1/2})`. At
//! `nu = 1` the flux is exactly `a`, so the update is an exact one-cell
//! shift in floating point.

use std::sync::Arc;

use resil_core::fault::{corrupt_value, DrawSite, FaultInjector, Injection};
use resil_core::{ErrorPayload, TaskResult};

#[inline]
pub fn interface_flux(left: f64, right: f64, nu: f64) -> f64 {
    nu * left + 0.5 * nu * (1.0 - nu) * (right - left)
}

/// Fluxes through the `L - 1` interior interfaces of `u`.
pub fn fluxes(u: &[f64], nu: f64) -> Vec<f64> {
    u.windows(2).map(|w| interface_flux(w[0], w[1], nu)).collect()
}

/// One step on an array of length `L >= 3`; returns the `L - 2` interior
/// cells.
pub fn lw_step(extended: &[f64], nu: f64) -> Vec<f64> {
    let f = fluxes(extended, nu);
    step_from_fluxes(extended, &f)
}

fn step_from_fluxes(u: &[f64], f: &[f64]) -> Vec<f64> {
    assert!(u.len() >= 3, "stencil step needs at least three cells");
    (1..u.len() - 1).map(|j| f[j - 1] + (u[j] - f[j])).collect()
}

/// One subdomain's cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub index: usize,
    pub values: Arc<[f64]>,
}

impl Subdomain {
    pub fn new(index: usize, values: Vec<f64>) -> Self {
        Self {
            index,
            values: values.into(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Conservation record of one multi-step task: the subdomain total must
/// change by exactly the net flux through its two edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChecksumWitness {
    pub input_sum: f64,
    pub left_flux_sum: f64,
    pub right_flux_sum: f64,
    pub output_sum: f64,
}

impl ChecksumWitness {
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.input_sum.abs().max(1.0)
    }

    pub fn residual(&self) -> f64 {
        self.output_sum - (self.input_sum - self.right_flux_sum + self.left_flux_sum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilOutput {
    pub subdomain: Subdomain,
    pub witness: ChecksumWitness,
}

/// Advances `mid` by `steps` time steps using a ghost region of width
/// `steps` taken from each periodic neighbour.
///
/// The fault decision is drawn before the work. A silent fault corrupts one
/// output cell and the witness output sum is taken from the corrupted data;
/// a loud fault discards the result and signals an injected fault.
pub fn subdomain_task(
    left: &Subdomain,
    mid: &Subdomain,
    right: &Subdomain,
    steps: usize,
    nu: f64,
    injector: &FaultInjector,
    site: DrawSite,
) -> TaskResult<StencilOutput> {
    let d = mid.values.len();
    assert!(steps >= 1, "at least one step per task");
    assert!(
        left.values.len() >= steps && right.values.len() >= steps,
        "neighbours narrower than the ghost region"
    );
    let injection = injector.draw(site);

    let mut u = Vec::with_capacity(d + 2 * steps);
    u.extend_from_slice(&left.values[left.values.len() - steps..]);
    u.extend_from_slice(&mid.values);
    u.extend_from_slice(&right.values[..steps]);

    let input_sum = mid.sum();
    let mut left_flux_sum = 0.0;
    let mut right_flux_sum = 0.0;
    for s in 0..steps {
        let f = fluxes(&u, nu);
        // `mid` occupies [off, off + d) of the current array
        let off = steps - s;
        left_flux_sum += f[off - 1];
        right_flux_sum += f[off + d - 1];
        u = step_from_fluxes(&u, &f);
    }
    debug_assert_eq!(u.len(), d);

    if injection == Injection::Silent {
        let k = mid.index % d;
        u[k] = corrupt_value(u[k]);
    }
    let output_sum = u.iter().sum();
    if injection == Injection::Loud {
        return Err(ErrorPayload::injected());
    }
    Ok(StencilOutput {
        subdomain: Subdomain::new(mid.index, u),
        witness: ChecksumWitness {
            input_sum,
            left_flux_sum,
            right_flux_sum,
            output_sum,
        },
    })
}

pub fn validate_checksum(out: &StencilOutput) -> bool {
    let w = &out.witness;
    w.residual().abs() <= w.tolerance()
}

#[cfg(test)]
mod tests {
    use super::*;
    use resil_core::fault::{FaultModel, ScriptedOutcome};

    fn sub(index: usize, v: &[f64]) -> Subdomain {
        Subdomain::new(index, v.to_vec())
    }

    fn quiet() -> FaultInjector {
        FaultInjector::disabled()
    }

    #[test]
    fn unit_courant_shifts_exactly() {
        let u = [0.3, -1.7, 1e-20, 1.0, 5.5, 0.1];
        let out = lw_step(&u, 1.0);
        assert_eq!(out, u[..4].to_vec());
    }

    #[test]
    fn constant_field_is_preserved() {
        for nu in [0.1, 0.37, 0.5, 0.9, 1.0] {
            for c in [0.0, 1.0, -3.25, 0.1, 1e6] {
                for v in lw_step(&[c; 6], nu) {
                    assert!((v - c).abs() <= 1e-15 * c.abs().max(1.0), "nu={nu} c={c} got {v}");
                }
            }
        }
    }

    #[test]
    fn hand_evaluated_pulse() {
        // u_j - (nu/2)(u_{j+1} - u_{j-1}) + (nu^2/2)(u_{j+1} - 2u_j + u_{j-1})
        let reference = |a: f64, b: f64, c: f64, nu: f64| b - nu / 2.0 * (c - a) + nu * nu / 2.0 * (c - 2.0 * b + a);
        assert_eq!(lw_step(&[0.0, 1.0, 0.0], 0.5), vec![0.75]);
        assert_eq!(reference(0.0, 1.0, 0.0, 0.5), 0.75);
        let u = [0.2, -0.4, 1.3, 0.8, -2.0];
        for nu in [0.25, 0.6, 0.9] {
            let got = lw_step(&u, nu);
            for j in 1..4 {
                assert!((got[j - 1] - reference(u[j - 1], u[j], u[j + 1], nu)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn task_unit_shift_across_boundary() {
        let out = subdomain_task(
            &sub(0, &[9.0, 9.0, 0.0]),
            &sub(1, &[1.0, 2.0, 3.0]),
            &sub(2, &[4.0, 9.0, 9.0]),
            1,
            1.0,
            &quiet(),
            DrawSite::Sequential,
        )
        .unwrap();
        assert_eq!(&*out.subdomain.values, &[0.0, 1.0, 2.0]);
        assert_eq!(out.subdomain.index, 1);
    }

    #[test]
    fn witness_holds_fault_free() {
        let mk = |i: usize| -> Vec<f64> { (0..16).map(|k| ((k + 16 * i) as f64 * 0.37).sin()).collect() };
        let out = subdomain_task(
            &sub(0, &mk(0)),
            &sub(1, &mk(1)),
            &sub(2, &mk(2)),
            5,
            0.9,
            &quiet(),
            DrawSite::Sequential,
        )
        .unwrap();
        let scale: f64 = out.subdomain.values.iter().map(|v| v.abs()).sum();
        assert!(out.witness.residual().abs() <= 1e-9 * scale);
        assert!(validate_checksum(&out));
    }

    #[test]
    fn silent_corruption_breaks_witness() {
        let inj = FaultInjector::new(FaultModel::scripted(vec![ScriptedOutcome::SilentCorrupt]));
        let v: Vec<f64> = (0..8).map(|k| 0.5 + 0.01 * k as f64).collect();
        let out = subdomain_task(
            &sub(3, &v),
            &sub(4, &v),
            &sub(5, &v),
            2,
            0.9,
            &inj,
            DrawSite::Sequential,
        )
        .unwrap();
        assert!(!validate_checksum(&out));
        assert_eq!(inj.injected(), 1);
    }

    #[test]
    fn loud_fault_fails_task() {
        let inj = FaultInjector::new(FaultModel::scripted(vec![ScriptedOutcome::LoudFault]));
        let v = vec![1.0; 8];
        let e = subdomain_task(
            &sub(0, &v),
            &sub(1, &v),
            &sub(2, &v),
            2,
            0.9,
            &inj,
            DrawSite::Sequential,
        )
        .unwrap_err();
        assert!(e.is_injected());
    }

    #[test]
    fn checksum_validator_cases() {
        let v = vec![0.25, 0.5, -0.125, 2.0];
        let good = subdomain_task(
            &sub(0, &v),
            &sub(1, &v),
            &sub(2, &v),
            1,
            0.7,
            &quiet(),
            DrawSite::Sequential,
        )
        .unwrap();
        assert!(validate_checksum(&good));

        let mut bad = good.clone();
        let mut cells = bad.subdomain.values.to_vec();
        cells[2] += 1.0;
        bad.witness.output_sum = cells.iter().sum();
        bad.subdomain.values = cells.into();
        assert!(!validate_checksum(&bad));

        let z = vec![0.0; 4];
        let zero = subdomain_task(
            &sub(0, &z),
            &sub(1, &z),
            &sub(2, &z),
            1,
            0.7,
            &quiet(),
            DrawSite::Sequential,
        )
        .unwrap();
        assert_eq!(zero.witness.output_sum, 0.0);
        assert!(validate_checksum(&zero));
    }
}
