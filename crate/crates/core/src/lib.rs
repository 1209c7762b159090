//! Conditional quantum trajectories and Bayesian state-update rules for dispersive
//! circuit-QED qubit readout under continuous homodyne detection.
//!
//! Units are kappa-normalized throughout. Joint qubit-cavity vectors are stored qubit-major
//! (`index = q * (nmax + 1) + n`, `g = 0`, `e = 1`) and `sigma_z |e> = +|e>`.

pub mod bayes;
pub mod error;
pub mod field;
pub mod fock;
pub mod harness;
pub mod polaron;
pub mod qfunc;
pub mod qubit;
mod quad;
pub mod trajectory;

pub use bayes::{
    bare_offdiagonal, gaussian_likelihoods_single, gaussian_likelihoods_two, phi1, phi2_approx, phi2_exact,
    sequential_diagonal, update_diagonal, update_full, BayesInput, BayesOutput, Estimator, Lambdas, Likelihoods,
    RecordData, ScaleMode, Variant,
};
pub use error::{Error, Result};
pub use field::{
    alpha_steady, alpha_transient, mean_quadrature, purity_integral, purity_overlap, rates_at, rates_steady,
    BadCavityLimit, Branch, Channel, ChannelRates, FieldModel, ModelParams, QuadratureMode, RateSet,
};
pub use fock::{
    build_fock_operators, coherent_state, expectation, CavityVector, ComplexAmp, FockOperators, JointOperator,
    JointState,
};
pub use harness::{
    calibrate_params, run_experiment, select_scale_mode, ComparisonReport, ExperimentConfig, KnownParams, SteadyMeans,
};
pub use qubit::QubitDM;
pub use quad::adaptive_simpson;
pub use qfunc::{coherent_fidelity, qfunction, CavityDM, PhaseGrid, QField};
pub use trajectory::{
    build_hamiltonian, conditional_cavity, reduce_qubit, run_lindblad, run_trajectory, step_single, step_two,
    Scheme, SimConfig, TrajectoryRecord,
};
