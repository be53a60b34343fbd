//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qdgt::algorithms::{AlgorithmConfig, SaturationPolicy, ThetaContext};
use qdgt::cli::InitSpec;
use qdgt::codec::ScalingSchedule;
use qdgt::constants::{
    level_schedule_fixed, AnalysisOptions, ConstantsBundle, LevelSchedule, ProblemScalars, ScheduleParams,
};
use qdgt::digraph::{build_weights, perron_vectors, Digraph, PerronVectors, WeightPair};
use qdgt::metrics;
use qdgt::problems::{quadratic_fixture_scaled, sensor_fusion, Objective, QuadraticObjective, SensorFusionInstance};

/// Graph, objective and starting point.
pub struct Instance {
    pub graph: Digraph,
    pub objective: QuadraticObjective,
    pub x1: DMatrix<f64>,
}

/// The 10-node directed network with the sensor-fusion objective of the
/// experiments (3 measurements per node, m = 2, λ = 1).
pub fn sensor_fixture() -> Instance {
    let graph = Digraph::default_fixture();
    let inst = SensorFusionInstance::random(10, 3, 2, 1.0, 1).unwrap();
    let objective = sensor_fusion(&inst).unwrap();
    let x1 = DMatrix::zeros(10, 2);
    Instance { graph, objective, x1 }
}

/// Five nodes, random quadratic scaled so that `L < 1`, which keeps the
/// comparison matrix `G` a valid bound.
pub fn five_node_fixture() -> Instance {
    let graph = Digraph::random_strongly_connected(5, 0.3, 3).unwrap();
    let objective = quadratic_fixture_scaled(5, 2, 4, 0.2).unwrap();
    let x1 = InitSpec::Uniform { scale: 2.0, seed: 5 }.build(5, 2);
    Instance { graph, objective, x1 }
}

/// Directed 5-ring with a random quadratic. The ring is balanced, so it
/// admits a doubly stochastic `W`.
pub fn ring_fixture() -> Instance {
    let graph = Digraph::ring(5).unwrap();
    let objective = qdgt::problems::quadratic_fixture(5, 2, 2).unwrap();
    let x1 = InitSpec::Uniform { scale: 2.0, seed: 1 }.build(5, 2);
    Instance { graph, objective, x1 }
}

pub fn scalars(obj: &dyn Objective) -> ProblemScalars {
    ProblemScalars {
        mu: obj.mu(),
        l: obj.l(),
        n: obj.nodes(),
        m: obj.dim(),
    }
}

/// Weights and constants at `eta_max`, with `ξ` halfway between `ρ̂` and 1.
pub struct Certified {
    pub weights: WeightPair,
    pub pv: PerronVectors,
    pub bundle: ConstantsBundle,
    pub xi: f64,
    pub c: f64,
    pub c_theta: f64,
}

impl Certified {
    pub fn new(inst: &Instance, alpha: f64, beta: f64) -> Self {
        let weights = build_weights(&inst.graph, alpha, beta).unwrap();
        let pv = perron_vectors(&weights).unwrap();
        let bundle =
            ConstantsBundle::new(&weights, &pv, scalars(&inst.objective), None, &AnalysisOptions::default()).unwrap();
        let xi = 0.5 * (1.0 + bundle.rho_hat());
        let zero = DMatrix::zeros(inst.x1.nrows(), inst.x1.ncols());
        let c_theta = metrics::theta(
            &inst.x1,
            &zero,
            &zero,
            &pv,
            &bundle.network.norm_a,
            &bundle.network.norm_b,
            inst.objective.x_star(),
        )
        .unwrap()
        .norm();
        Self {
            weights,
            pv,
            bundle,
            xi,
            c: 1.0,
            c_theta,
        }
    }

    pub fn params(&self, inst: &Instance, horizon: usize) -> ScheduleParams<'_> {
        ScheduleParams {
            consts: &self.bundle,
            c: self.c,
            xi: self.xi,
            c_theta: self.c_theta,
            x1_inf: inst.x1.amax(),
            y1_inf: inst.objective.stacked_gradient(&inst.x1).amax(),
            horizon,
        }
    }

    pub fn theta_ctx(&self) -> ThetaContext<'_> {
        ThetaContext {
            pv: &self.pv,
            norm_a: &self.bundle.network.norm_a,
            norm_b: &self.bundle.network.norm_b,
        }
    }

    pub fn config(&self, schedule: LevelSchedule, horizon: usize) -> AlgorithmConfig {
        let scaling = ScalingSchedule::new(self.c, self.xi).unwrap();
        let mut cfg = AlgorithmConfig::new(self.bundle.eta, schedule, scaling, horizon);
        cfg.saturation = SaturationPolicy::Abort;
        cfg
    }
}

/// A heuristic (uncertified) fixed-`K` configuration.
pub fn fixed_config(eta: f64, levels: u64, c: f64, xi: f64, horizon: usize) -> AlgorithmConfig {
    AlgorithmConfig::new(
        eta,
        level_schedule_fixed(levels, horizon).unwrap(),
        ScalingSchedule::new(c, xi).unwrap(),
        horizon,
    )
}

/// `C` for fixed level `K` so that `(2K + 1) h` spans the same range as
/// `K = 1` with scale `c1`.
pub fn equal_range_c(c1: f64, levels: u64) -> f64 {
    c1 * 3.0 / (2 * levels + 1) as f64
}
