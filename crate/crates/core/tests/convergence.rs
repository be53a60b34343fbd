//! Linear convergence and saturation-freeness of Q-DGT.

mod common;

use common::{equal_range_c, five_node_fixture, fixed_config, ring_fixture, sensor_fixture, Certified};
use qdgt::algorithms::{run_qdgt, run_qdgt_with};
use qdgt::constants::{level_schedule_remark, level_schedule_theorem1, ScheduleParams};
use qdgt::digraph::build_weights;
use qdgt::metrics::{self, fit_linear_rate};
use qdgt::Error;

const HORIZON: usize = 5000;

#[test]
fn xi_at_or_below_rho_hat_is_rejected() {
    for inst in [five_node_fixture(), sensor_fixture()] {
        let cert = Certified::new(&inst, 0.5, 0.5);
        assert!(cert.bundle.rho_hat() > 0.97);
        let params = ScheduleParams { xi: 0.97, ..cert.params(&inst, 100) };
        assert!(matches!(level_schedule_remark(&params), Err(Error::OutOfRange { name: "xi", .. })));
        let params = ScheduleParams { xi: cert.bundle.rho_hat(), ..cert.params(&inst, 100) };
        assert!(level_schedule_theorem1(&params).is_err());
    }
}

#[test]
fn certified_schedules_never_saturate() {
    let inst = five_node_fixture();
    let cert = Certified::new(&inst, 0.5, 0.5);
    let params = cert.params(&inst, HORIZON);
    for schedule in [level_schedule_theorem1(&params).unwrap(), level_schedule_remark(&params).unwrap()] {
        let mode = schedule.mode;
        // abort-on-saturation: any event is an error
        let rep = run_qdgt(&cert.config(schedule, HORIZON), &cert.weights, &inst.graph, &inst.objective, inst.x1.clone(), None)
            .unwrap_or_else(|e| panic!("{mode:?}: {e}"));
        assert_eq!(rep.saturation_events, 0);
        assert_eq!(rep.rounds.len(), HORIZON);
        assert!(rep.final_residual() < rep.rounds[0].residual);
    }
}

#[test]
fn remark_schedule_dominates_theorem1() {
    let inst = five_node_fixture();
    let cert = Certified::new(&inst, 0.5, 0.5);
    let params = cert.params(&inst, HORIZON);
    let t1 = level_schedule_theorem1(&params).unwrap();
    let rm = level_schedule_remark(&params).unwrap();
    let (kx1, ky1) = t1.levels(HORIZON);
    let (kxr, kyr) = rm.levels(HORIZON);
    assert!(kxr >= kx1 && kyr >= ky1);
}

/// `‖Θ(k)‖ ≤ Π (‖Θ(2)‖ ρ̂^(k-2) + Σ_{l=2}^{k-1} ρ̂^(k-1-l) ς̂(l))`, the
/// unrolled per-round bound from round 2 on.
#[test]
fn theta_stays_inside_linear_envelope() {
    let inst = five_node_fixture();
    let cert = Certified::new(&inst, 0.5, 0.5);
    let params = cert.params(&inst, HORIZON);
    let ctx = cert.theta_ctx();
    let cfg = cert.config(level_schedule_remark(&params).unwrap(), HORIZON);
    let rep = run_qdgt(&cfg, &cert.weights, &inst.graph, &inst.objective, inst.x1.clone(), Some(&ctx)).unwrap();
    let (pi, rho_hat) = (cert.bundle.pi.pi, cert.bundle.rho_hat());
    // rounds[i] holds Θ(i + 2)
    let theta2 = rep.rounds[0].theta.unwrap().norm();
    let mut forcing = 0.0;
    for (i, r) in rep.rounds.iter().enumerate().skip(1) {
        let k = i + 2;
        forcing = rho_hat * forcing + params.varsigma_hat(k - 1);
        let bound = pi * (theta2 * rho_hat.powi(k as i32 - 2) + forcing);
        let t = r.theta.unwrap().norm();
        assert!(t <= 1.1 * bound, "round {k}: {t:e} > {bound:e}");
    }
}

#[test]
fn fixed_levels_converge_linearly() {
    let inst = ring_fixture();
    let w = build_weights(&inst.graph, 0.5, 0.5).unwrap();
    let xi = 0.99;
    let rep = run_qdgt(&fixed_config(0.05, 2, 0.5, xi, 3000), &w, &inst.graph, &inst.objective, inst.x1.clone(), None)
        .unwrap();
    let tr = rep.residuals();
    let fit = fit_linear_rate(&tr, metrics::default_burn_in(tr.len())).unwrap();
    assert!(fit.rate <= xi + 0.02);
    assert!(fit.r_squared >= 0.98);
    assert!(rep.final_residual() <= 1e-8);
}

#[test]
fn more_levels_converge_no_slower() {
    let inst = sensor_fixture();
    let w = build_weights(&inst.graph, 0.5, 0.5).unwrap();
    let rounds = |k: u64| {
        let cfg = fixed_config(0.01, k, equal_range_c(10.0, k), 0.99, 4000);
        let rep = run_qdgt(&cfg, &w, &inst.graph, &inst.objective, inst.x1.clone(), None).unwrap();
        rep.rounds_to(1e-6).expect("reaches 1e-6")
    };
    assert!(rounds(5) <= rounds(1));
}

#[test]
fn observer_sees_every_round() {
    let inst = ring_fixture();
    let w = build_weights(&inst.graph, 0.5, 0.5).unwrap();
    let mut seen = Vec::new();
    run_qdgt_with(&fixed_config(0.05, 2, 0.5, 0.99, 50), &w, &inst.graph, &inst.objective, inst.x1.clone(), None, |st, tr| {
        assert_eq!(st.k, tr.k + 1);
        seen.push(tr.k);
    })
    .unwrap();
    assert_eq!(seen, (1..=50).collect::<Vec<_>>());
}
