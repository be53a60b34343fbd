//! Quantizing the mixing terms directly lets the quantization error pile up
//! in the tracker's sum, which Q-DGT avoids.

mod common;

use common::{fixed_config, ring_fixture};
use qdgt::algorithms::{naive_qdgt_round, run_dgt, run_naive_qdgt, run_qdgt, NaiveLink, NaiveState};
use qdgt::codec::ScalingSchedule;
use qdgt::digraph::{build_weights, doubly_stochastic};
use qdgt::problems::Objective;

const ETA: f64 = 0.05;

#[test]
fn accumulation_identity_holds_every_round() {
    let inst = ring_fixture();
    let w = doubly_stochastic(&inst.graph).unwrap();
    let link = NaiveLink::Quantized {
        levels: 2,
        scaling: ScalingSchedule::constant(0.5).unwrap(),
    };
    let mut st = NaiveState::new(&inst.graph, inst.x1.clone(), &inst.objective, link).unwrap();
    let mut running = nalgebra::RowDVector::zeros(2);
    for _ in 0..1000 {
        let tr = naive_qdgt_round(&mut st, &w, ETA, &inst.objective).unwrap();
        running += tr.sigma_y.row_sum();
        let lhs = st.dgt.y.row_sum();
        let rhs = inst.objective.stacked_gradient(&st.dgt.x).row_sum() + &running;
        assert!((lhs - rhs).amax() <= 1e-9, "round {}", tr.k);
        assert!(tr.accumulation_gap <= 1e-9);
    }
    // the error really does accumulate: the sum is far from zero
    assert!(running.amax() > 1e-3);
}

#[test]
fn naive_stalls_where_qdgt_converges() {
    let inst = ring_fixture();
    let w_ds = doubly_stochastic(&inst.graph).unwrap();
    let link = NaiveLink::Quantized {
        levels: 2,
        scaling: ScalingSchedule::constant(0.5).unwrap(),
    };
    let naive = run_naive_qdgt(&inst.graph, &w_ds, ETA, &inst.objective, inst.x1.clone(), link, 3000, None).unwrap();
    let tail = &naive.residuals()[2000..];
    assert!(tail.iter().all(|&r| r > 1e-3), "naive min tail residual {:e}", tail.iter().cloned().fold(f64::INFINITY, f64::min));

    let w = build_weights(&inst.graph, 0.5, 0.5).unwrap();
    let cfg = fixed_config(ETA, 2, 0.5, 0.99, 3000);
    let q = run_qdgt(&cfg, &w, &inst.graph, &inst.objective, inst.x1.clone(), None).unwrap();
    assert!(q.final_residual() <= 1e-8, "qdgt {:e}", q.final_residual());
}

#[test]
fn exact_naive_link_is_dgt() {
    let inst = ring_fixture();
    let w = doubly_stochastic(&inst.graph).unwrap();
    let naive = run_naive_qdgt(&inst.graph, &w, ETA, &inst.objective, inst.x1.clone(), NaiveLink::Exact, 500, None).unwrap();
    let dgt = run_dgt(&w, ETA, &inst.objective, inst.x1.clone(), 500, None).unwrap();
    assert_eq!(naive.final_x, dgt.final_x);
    assert!(dgt.final_residual() <= 1e-8);
    assert!(naive.max_tracking_residual() <= 1e-9 && inst.objective.x_star().is_some());
}
