//! Stock objects the experiments and the verification suite share: the
//! balanced cosine kernel (the worked example where the rate-exchange
//! condition holds with equality), smooth bounded densities, and seeded
//! random states.

use crate::correlations::FiniteSystemDensity;
use crate::error::Result;
use crate::grid::TorusGrid;
use crate::kernel::{balanced_affinity, FactorizedKernel, Kernel, KernelTables};
use crate::scalar::Real;
use crate::state::HierState;
use crate::tensor::LevelTensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `mean + amp cos(2 pi k / M)` on cell indices. Indexing by `k` rather
/// than the midpoint keeps the profile even under the grid reflection
/// `k -> -k`, which the balanced partner construction requires.
pub fn cosine_profile<T: Real>(grid: &TorusGrid<T>, mean: T, amp: T) -> Vec<T> {
    let tau = T::of(2.0 * std::f64::consts::PI);
    let m = T::of_usize(grid.n_cells());
    (0..grid.n_cells())
        .map(|c| mean + amp * (tau * T::of_usize(c) / m).cos())
        .collect()
}

/// The example kernel: affinity profile `a = 1 + alpha cos`, partner
/// profile `b` solved so departure and arrival rates exchange exactly.
pub fn balanced_tables<T: Real>(m: usize, kappa: T, alpha: T) -> Result<KernelTables<T>> {
    let grid: TorusGrid<T> = TorusGrid::line(m)?;
    let a = cosine_profile(&grid, T::one(), alpha);
    let b = balanced_affinity(&grid, &a)?;
    let fk = FactorizedKernel::new(grid, kappa, &a, &b)?;
    Ok(KernelTables::build(Kernel::Factorized(fk)))
}

/// Smooth density pinched into `[lo, hi]`:
/// `lo + (hi - lo)(1 + cos(2 pi k / M)) / 2`.
pub fn smooth_density<T: Real>(grid: &TorusGrid<T>, lo: T, hi: T) -> Vec<T> {
    let tau = T::of(2.0 * std::f64::consts::PI);
    let m = T::of_usize(grid.n_cells());
    (0..grid.n_cells())
        .map(|c| {
            let phase = (tau * T::of_usize(c) / m).cos();
            lo + (hi - lo) * (T::one() + phase).half()
        })
        .collect()
}

/// Symmetric random state, every level uniform in `[-1, 1]` before
/// symmetrization.
pub fn random_symmetric_state<T: Real>(
    grid: &TorusGrid<T>,
    n_max: usize,
    rng: &mut ChaCha8Rng,
) -> HierState<T> {
    let levels = (0..=n_max)
        .map(|n| {
            let mut t = LevelTensor::from_fn(grid, n, |_| T::of(rng.random_range(-1.0..1.0)));
            t.symmetrize();
            t
        })
        .collect();
    HierState::new(*grid, levels).expect("levels built on the same grid")
}

/// Probability density of a system with exactly `n` particles: a random
/// positive symmetric level-`n` tensor, lower levels zero, normalized to
/// unit total mass.
pub fn random_particle_density<T: Real>(
    grid: &TorusGrid<T>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FiniteSystemDensity<T>> {
    let mut levels: Vec<LevelTensor<T>> = (0..n).map(|k| LevelTensor::zeros(grid, k)).collect();
    let mut top = LevelTensor::from_fn(grid, n, |_| T::of(rng.random_range(0.05..1.0)));
    top.symmetrize();
    levels.push(top);
    FiniteSystemDensity::normalized(HierState::new(*grid, levels)?)
}
