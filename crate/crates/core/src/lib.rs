//! Binary-jump hierarchies on a discretized torus.
//!
//! Pairs of particles jump together at a rate set by a four-point kernel.
//! This crate evolves the induced hierarchy of quasi-observables, recovers
//! correlation functions by duality, takes the scaling limit down to a
//! nonlinear kinetic equation, and cross-checks everything against a direct
//! stochastic simulation of the particle system.
//!
//! All numerics are generic over the scalar through [`Real`]; the type
//! aliases at the crate root fix `f64` (the default used by the CLI) and
//! `f32` variants.

#![forbid(unsafe_code)]

pub mod acceptance;
pub mod correlations;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod hier;
pub mod io;
pub mod kernel;
pub mod kinetic;
pub mod ktransform;
pub mod montecarlo;
pub mod linalg;
pub mod scalar;
pub mod state;
pub mod tensor;

pub use correlations::{
    density_to_correlation, evolve_density, evolve_density_expm, lenard_check, ClipReport,
    CorrelationEvolution, FiniteSystemDensity,
};
pub use error::{Error, Result};
pub use grid::{FiniteConfig, TorusGrid};
pub use hier::{
    apply_l0, apply_l0_adjoint, apply_w, apply_w_adjoint, evolve_expm, evolve_expm_adjoint,
    flatten_state, hier_adjoint_matrix, hier_generator_matrix, level_adjoint_matrix,
    level_generator_matrix, level_growth_bound, solve_forward, solve_hierarchy, solve_vlasov,
    step_semigroup, step_semigroup_adjoint, unflatten_state, vlasov_convergence_study,
    volterra_level2_reference, HierPath, SolveOptions,
};
pub use kernel::{
    balanced_affinity, ConditionsReport, FactorizedKernel, Kernel, KernelBounds, KernelTables,
};
pub use kinetic::{
    phi_map, rhs, rhs_boltzmann, rhs_direct, rk_order_estimate, solve_picard, solve_rk, w_star,
    DensityPath, KineticConfig, PicardReport, RkReport,
};
pub use acceptance::{run_all, run_selected, CriterionReport};
pub use io::{read_state_bundle, read_tensor_csv, write_state_bundle, write_tensor_csv};
pub use montecarlo::{
    estimate_correlations, flux_imbalance_z, run_ensemble, sample_iid_n, sample_poisson_initial,
    EnsembleEstimate, JumpEvent, JumpSampler, ParticleState,
};
pub use scalar::Real;
pub use state::{c_t, horizon, lp_exponent, rho, HierState};
pub use tensor::LevelTensor;

pub type State64 = HierState<f64>;
pub type State32 = HierState<f32>;

/// Default-precision aliases; the CLI and the file formats use these.
pub type Grid64 = TorusGrid<f64>;
pub type Kernel64 = Kernel<f64>;
pub type Tables64 = KernelTables<f64>;
pub type Tensor64 = LevelTensor<f64>;

/// Single-precision variants for memory-bound experiments.
pub type Grid32 = TorusGrid<f32>;
pub type Kernel32 = Kernel<f32>;
pub type Tables32 = KernelTables<f32>;
pub type Tensor32 = LevelTensor<f32>;
