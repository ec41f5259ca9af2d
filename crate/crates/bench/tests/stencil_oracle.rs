mod common;

use common::{bits, reference_solve};
use proptest::prelude::*;
use resil_bench::stencil::{initial_field, run_stencil, StencilConfig, StencilShape, StencilVariant};
use resil_core::fault::FaultKind;

fn shape(subdomains: usize, points: usize, iterations: usize, steps: usize, courant: f64) -> StencilShape {
    StencilShape {
        subdomains,
        points,
        iterations,
        steps,
        courant,
    }
}

#[test]
fn pure_dataflow_matches_straight_loop_for_any_worker_count() {
    let s = shape(8, 64, 12, 5, 0.9);
    let want = reference_solve(&initial_field(&s), s.total_steps(), s.courant);
    for cores in [1, 2, 5] {
        let mut cfg = StencilConfig::new(s, StencilVariant::PureDataflow);
        cfg.cores = cores;
        let got = run_stencil(&cfg).unwrap();
        assert_eq!(bits(&got.field), bits(&want), "cores={cores}");
    }
}

#[test]
fn unit_courant_is_a_circular_shift() {
    let s = shape(4, 40, 7, 3, 1.0);
    let init = initial_field(&s);
    let got = run_stencil(&StencilConfig::new(s, StencilVariant::Replay)).unwrap();
    let shift = s.total_steps() % init.len();
    let mut want = init.clone();
    want.rotate_right(shift);
    assert_eq!(bits(&got.field), bits(&want));
}

#[test]
fn silent_faults_without_checksum_leak_through() {
    let s = shape(4, 32, 8, 2, 0.9);
    let mut cfg = StencilConfig::new(s, StencilVariant::Replay);
    cfg.fault_kind = FaultKind::Silent;
    cfg.error_p = 0.3;
    cfg.seed = 11;
    let run = run_stencil(&cfg).unwrap();
    assert!(run.report.injected_failures > 0);
    assert_eq!(run.report.rejected_results, 0);
    let want = reference_solve(&initial_field(&s), s.total_steps(), s.courant);
    assert_ne!(bits(&run.field), bits(&want));

    cfg.variant = StencilVariant::ReplayChecksum;
    cfg.replay_n = 10;
    let run = run_stencil(&cfg).unwrap();
    assert_eq!(run.report.rejected_results, run.report.injected_failures);
    assert_eq!(bits(&run.field), bits(&want));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_shapes_match_reference(
        subdomains in 1_usize..6,
        steps in 1_usize..4,
        extra in 1_usize..12,
        iterations in 1_usize..6,
        courant in 0.05_f64..=1.0,
        variant in prop::sample::select(StencilVariant::ALL.to_vec()),
    ) {
        let s = shape(subdomains, 2 * steps + extra, iterations, steps, courant);
        let mut cfg = StencilConfig::new(s, variant);
        cfg.cores = 2;
        let got = run_stencil(&cfg).unwrap();
        let want = reference_solve(&initial_field(&s), s.total_steps(), courant);
        prop_assert_eq!(bits(&got.field), bits(&want));
    }
}
