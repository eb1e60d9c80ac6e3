//! Discrete 2-Wasserstein gradient flows on the line.
//!
//! Measures are represented by quantile functions, which makes the Wasserstein geometry
//! exact in one dimension. On top of that sit energy functionals, proximal (JKO) steps,
//! discrete flows, and a harness that evaluates the contraction, convexity and decay
//! inequalities satisfied by the proximal map.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barenblatt;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod io;
pub mod measure;
pub mod numerics;
pub mod proximal;
pub mod random;
pub mod transport;
pub mod verify;

pub use barenblatt::{barenblatt_profile, BarenblattParams, BarenblattProfile};
pub use error::{Error, Result};
pub use flow::{
    exp_formula_probe, exponential_decay_check, gronwall_bound, rescaled_flow, run_flow, run_paired_flow, FlowOptions,
    FlowRecord, FlowStart, FlowTrace,
};
pub use functionals::{
    coercivity_constant, energy, lambda_tau, metric_slope, moreau_yosida, FunctionalSpec, SlopeMethod, SlopeValue,
};
pub use measure::{AtomicMeasure, Measure, QuantileMeasure};
pub use proximal::{
    euler_lagrange_residual, jko_step, prox_barenblatt, prox_distance_bound, prox_quadratic, prox_step, theta_tau, ProxResult,
    SolverInfo, SolverMethod, SolverOptions,
};
pub use transport::{
    generalized_geodesic_point, geodesic_point, optimal_map, pushforward_affine, second_moment, w2_distance,
    TransportPlanView,
};
pub use verify::{
    banach_linf_counterexample, capital_lambda, contraction_check, corollary_poslam_check, generalized_convexity_check,
    hwi_check, rok_identities_check, talagrand_check, IneqReport, Tolerances,
};
