//! Correlation functions by duality.
//!
//! Levels of a correlation-role state above its truncation are unknown, not
//! zero, so every quantity extracted from one carries an explicit tail
//! bound built from the norm scales. The dual evolution equation raises
//! levels and is not closed under truncation; it is never marched directly.
//! Instead the observable side is run forward and `<<G_t, k_0>>` stands in
//! for `<<G_0, k_t>>`, which is what the contraction theory guarantees.
//!
//! The finite-system side is exact: an `N`-particle density evolves level
//! by level under the adjoint semigroup (particle number is conserved, so
//! the levels do not couple), and its correlation vector is a finite sum of
//! marginals. That pair of maps is the oracle the duality is tested
//! against.

use crate::error::{Error, Result};
use crate::hier::{solve_hierarchy, step_semigroup_adjoint, SolveOptions};
use crate::kernel::KernelTables;
use crate::scalar::{factorial, Real};
use crate::state::{c_t, horizon, lp_exponent, rho, HierState};
use crate::tensor::{pow_usize, LevelTensor};
use rayon::prelude::*;

/// Negative values of an evolved density smaller than this (relative to the
/// level scale) are treated as integrator round-off.
pub const DENSITY_CLIP: f64 = 1e-12;

/// The dual Cauchy problem: initial correlation vector `k0` in the sup
/// scale of radius `c0`, evolved by pairing against forward-run
/// observables. All queries must stay below the blow-up horizon
/// `1 / (B c0)`.
pub struct CorrelationEvolution<'a, T> {
    tables: &'a KernelTables<T>,
    k0: HierState<T>,
    c0: T,
}

impl<'a, T: Real> CorrelationEvolution<'a, T> {
    pub fn new(tables: &'a KernelTables<T>, k0: HierState<T>, c0: T) -> Result<Self> {
        tables.grid().same_as(k0.grid(), "correlation evolution")?;
        if !(c0 > T::zero()) || !c0.is_finite() {
            return Err(Error::config("c0", "must be positive and finite"));
        }
        if !k0.is_finite() {
            return Err(Error::NonFinite {
                context: "initial correlation vector".to_string(),
            });
        }
        Ok(CorrelationEvolution { tables, k0, c0 })
    }

    pub fn k0(&self) -> &HierState<T> {
        &self.k0
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    pub fn tables(&self) -> &KernelTables<T> {
        self.tables
    }

    pub fn horizon(&self) -> T {
        horizon(self.c0, self.tables.bounds().b_rate())
    }

    /// Geometric truncation tail for the pairing of `g0`'s forward flow
    /// against `k0` at time `t`:
    ///
    /// `|k0|_{K_C0} |g0|_{L_C} sum_{n > N} (c0 / rho(t, C))^n`
    ///
    /// over weights `C = C_t(t (1 + delta), c0)`. The margin family starts
    /// at `delta = 0.05` and widens dyadically; every admissible member is
    /// a valid ceiling, the smallest is reported. Fails with a horizon
    /// error when even the tightest margin has left the weight scale.
    fn tail_bound(&self, g0: &HierState<T>, t: T) -> Result<T> {
        let b = self.tables.bounds().b_rate();
        let n_trunc = g0.n_max().min(self.k0.n_max());
        let k_norm = self.k0.norm_k(self.c0);
        let mut best: Option<T> = None;
        let mut delta = T::of(0.05);
        while delta <= T::of(64.0) {
            let Ok(c) = c_t(t * (T::one() + delta), self.c0, b) else {
                break;
            };
            // rho(t, C) > c0 strictly once the margin is admissible
            let q = self.c0 / rho(t, c, b);
            let tail = k_norm * g0.norm_l(c) * q.powi(n_trunc as i32 + 1) / (T::one() - q);
            best = Some(match best {
                Some(old) if old < tail => old,
                _ => tail,
            });
            delta = delta + delta;
        }
        best.ok_or(Error::Horizon {
            t: t.dbl(),
            horizon: self.horizon().dbl(),
        })
    }

    /// `<<G_t, k_0>>` together with its truncation tail bound. At `t = 0`
    /// the pairing is exact and the tail is zero.
    pub fn evolve_functional(
        &self,
        g0: &HierState<T>,
        t: T,
        steps: usize,
        opts: SolveOptions<T>,
    ) -> Result<(T, T)> {
        self.tables.grid().same_as(g0.grid(), "evolve_functional")?;
        if !(t >= T::zero()) || !t.is_finite() || t >= self.horizon() {
            return Err(Error::Horizon {
                t: t.dbl(),
                horizon: self.horizon().dbl(),
            });
        }
        if t == T::zero() {
            return Ok((g0.pairing(&self.k0)?, T::zero()));
        }
        let tail = self.tail_bound(g0, t)?;
        let path = solve_hierarchy(self.tables, g0, t, steps, opts)?;
        Ok((path.final_state().pairing(&self.k0)?, tail))
    }

    /// Observable dual to a point evaluation: the indicator of one cell
    /// tuple at one level, scaled so that its pairing with a correlation
    /// vector returns that vector's entry.
    fn indicator_state(&self, tuple: &[usize]) -> HierState<T> {
        let grid = self.tables.grid();
        let n = tuple.len();
        let mut g = HierState::zeros(*grid, self.k0.n_max());
        let amp = factorial::<T>(n) / grid.tuple_measure(n);
        let idx = g.level(n).flat(tuple);
        g.level_mut(n).values_mut()[idx] = amp;
        g
    }

    /// Cell-averaged `k_t` at level 1 or 2, one forward solve per canonical
    /// cell tuple (permuted entries are filled by symmetry), plus the worst
    /// tail bound, which is tuple-independent because every normalized
    /// indicator has the same weighted norm.
    pub fn reconstruct_k(
        &self,
        t: T,
        level: usize,
        steps: usize,
        opts: SolveOptions<T>,
    ) -> Result<(LevelTensor<T>, T)> {
        if level != 1 && level != 2 {
            return Err(Error::precondition(
                "reconstruct_k",
                "level 1 or 2",
                level,
            ));
        }
        if self.k0.n_max() < level {
            return Err(Error::precondition(
                "reconstruct_k",
                "k0 truncated no lower than the requested level",
                self.k0.n_max(),
            ));
        }
        let grid = self.tables.grid();
        let v = grid.n_cells();
        let mut tuples: Vec<Vec<usize>> = Vec::new();
        if level == 1 {
            tuples.extend((0..v).map(|i| vec![i]));
        } else {
            for i in 0..v {
                for j in i..v {
                    tuples.push(vec![i, j]);
                }
            }
        }
        let tail = if t == T::zero() {
            T::zero()
        } else {
            self.tail_bound(&self.indicator_state(&tuples[0]), t)?
        };
        let entries: Vec<(Vec<usize>, T)> = tuples
            .into_par_iter()
            .map(|tuple| -> Result<(Vec<usize>, T)> {
                let g0 = self.indicator_state(&tuple);
                let (value, _) = self.evolve_functional(&g0, t, steps, opts)?;
                Ok((tuple, value))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = LevelTensor::zeros(grid, level);
        for (tuple, value) in entries {
            out.set(&tuple, value);
            if level == 2 && tuple[0] != tuple[1] {
                out.set(&[tuple[1], tuple[0]], value);
            }
        }
        Ok((out, tail))
    }
}

/// Probability state of a system with at most `N` particles: one
/// nonnegative symmetric density per level, total mass
/// `sum_n 1/n! int R^(n) = 1`.
#[derive(Clone, Debug)]
pub struct FiniteSystemDensity<T> {
    state: HierState<T>,
}

impl<T: Real> FiniteSystemDensity<T> {
    pub fn new(state: HierState<T>) -> Result<Self> {
        let scale = state.max_abs().max(T::one());
        for (n, lvl) in state.levels().iter().enumerate() {
            for &x in lvl.values() {
                if !x.is_finite() || x < -T::of(DENSITY_CLIP) * scale {
                    return Err(Error::precondition(
                        "finite-system density",
                        "nonnegative levels",
                        format!("{x} at level {n}"),
                    ));
                }
            }
        }
        let mut clipped = FiniteSystemDensity { state };
        clip_negatives(&mut clipped.state);
        let mass = clipped.mass();
        if (mass - T::one()).abs() > T::of(1e-8) {
            return Err(Error::precondition(
                "finite-system density",
                "unit total mass",
                mass,
            ));
        }
        Ok(clipped)
    }

    /// Build from nonnegative levels of arbitrary total mass by rescaling.
    pub fn normalized(mut state: HierState<T>) -> Result<Self> {
        let mass = total_mass(&state);
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::precondition(
                "finite-system density",
                "positive finite total mass",
                mass,
            ));
        }
        state.scale(T::one() / mass);
        Self::new(state)
    }

    pub fn state(&self) -> &HierState<T> {
        &self.state
    }

    pub fn n_max(&self) -> usize {
        self.state.n_max()
    }

    /// `sum_n 1/n! int R^(n)`.
    pub fn mass(&self) -> T {
        total_mass(&self.state)
    }

    /// `int R^(n)` per level; each one is conserved by the evolution.
    pub fn level_masses(&self) -> Vec<T> {
        let grid = self.state.grid();
        self.state
            .levels()
            .iter()
            .map(|lvl| lvl.integral(grid))
            .collect()
    }
}

fn total_mass<T: Real>(state: &HierState<T>) -> T {
    let grid = state.grid();
    state
        .levels()
        .iter()
        .enumerate()
        .map(|(n, lvl)| lvl.integral(grid) / factorial::<T>(n))
        .sum()
}

fn clip_negatives<T: Real>(state: &mut HierState<T>) -> (T, usize) {
    let mut min_value = T::zero();
    let mut clipped = 0usize;
    for n in 0..=state.n_max() {
        for x in state.level_mut(n).values_mut() {
            if *x < T::zero() {
                if *x < min_value {
                    min_value = *x;
                }
                *x = T::zero();
                clipped += 1;
            }
        }
    }
    (min_value, clipped)
}

/// What nonnegativity clipping had to do after a density step.
#[derive(Clone, Copy, Debug)]
pub struct ClipReport<T> {
    /// Most negative value produced by the stepper (0 when none).
    pub min_value: T,
    /// Number of cells clipped to zero.
    pub clipped: usize,
}

/// Evolve a finite-system density to time `t`: every level runs its own
/// adjoint semigroup, there is no coupling because particle number is
/// conserved. Level masses are conserved to rounding; stray negative
/// round-off is clipped and reported.
pub fn evolve_density<T: Real>(
    tables: &KernelTables<T>,
    r0: &FiniteSystemDensity<T>,
    t: T,
    substep_factor: T,
) -> Result<(FiniteSystemDensity<T>, ClipReport<T>)> {
    tables.grid().same_as(r0.state.grid(), "evolve_density")?;
    let levels = r0
        .state
        .levels()
        .iter()
        .map(|lvl| step_semigroup_adjoint(tables, lvl, t, substep_factor))
        .collect::<Result<Vec<_>>>()?;
    let mut state = HierState::new(*r0.state.grid(), levels)?;
    let (min_value, clipped) = clip_negatives(&mut state);
    Ok((
        FiniteSystemDensity { state },
        ClipReport { min_value, clipped },
    ))
}

/// [`evolve_density`] through the dense matrix exponential of each level's
/// adjoint generator. Reference path for small problems.
pub fn evolve_density_expm<T: Real>(
    tables: &KernelTables<T>,
    r0: &FiniteSystemDensity<T>,
    t: T,
) -> Result<FiniteSystemDensity<T>> {
    tables.grid().same_as(r0.state.grid(), "evolve_density_expm")?;
    let levels = r0
        .state
        .levels()
        .iter()
        .map(|lvl| {
            if lvl.level() < 2 {
                return Ok(lvl.clone());
            }
            let mut m = crate::hier::level_adjoint_matrix(tables, lvl.level())?;
            m.scale(t);
            let image = m.expm().matvec(lvl.values());
            let mut out = lvl.clone();
            out.values_mut().copy_from_slice(&image);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let state = HierState::new(*r0.state.grid(), levels)?;
    Ok(FiniteSystemDensity { state })
}

fn integrate_last<T: Real>(t: &LevelTensor<T>, grid: &crate::grid::TorusGrid<T>) -> LevelTensor<T> {
    let j = t.level();
    debug_assert!(j >= 1);
    let v = grid.n_cells();
    let stride = pow_usize(v, j - 1);
    let w = grid.cell_measure();
    let tv = t.values();
    let mut out = LevelTensor::zeros(grid, j - 1);
    for (i, slot) in out.values_mut().iter_mut().enumerate() {
        let mut acc = T::zero();
        for y in 0..v {
            acc += tv[i + y * stride];
        }
        *slot = acc * w;
    }
    out
}

/// Correlation vector of a finite-system density:
///
/// `k^(n)(x) = sum_{m=0..N-n} 1/m! int R^(n+m)(x, y_1..y_m) dy`
///
/// a finite sum of marginals under truncation. The level-0 entry is the
/// total mass.
pub fn density_to_correlation<T: Real>(r: &FiniteSystemDensity<T>) -> Result<HierState<T>> {
    let state = &r.state;
    let grid = state.grid();
    let n_max = state.n_max();
    let mut out: Vec<LevelTensor<T>> = (0..=n_max)
        .map(|n| LevelTensor::zeros(grid, n))
        .collect();
    for j in 0..=n_max {
        let mut cur = state.level(j).clone();
        out[j].axpy(T::one(), &cur)?;
        for m in 1..=j {
            cur = integrate_last(&cur, grid);
            out[j - m].axpy(T::one() / factorial::<T>(m), &cur)?;
        }
    }
    HierState::new(*grid, out)
}

/// Smallest pairing of `k` against the product observables of the given
/// test functions. Since the additive transform of `e_lambda(f)` is
/// `prod (1 + f) >= 0` for `f >= -1`, a genuine correlation vector can only
/// go negative here by its truncation tail.
pub fn lenard_check<T: Real>(k: &HierState<T>, tests: &[Vec<T>]) -> Result<T> {
    if tests.is_empty() {
        return Err(Error::config("tests", "need at least one test function"));
    }
    let grid = k.grid();
    let v = grid.n_cells();
    let mut min = T::infinity();
    for f in tests {
        if f.len() != v {
            return Err(Error::GridMismatch {
                context: "lenard_check",
            });
        }
        for &x in f {
            if !x.is_finite() || x < -T::one() {
                return Err(Error::precondition(
                    "lenard_check",
                    "test functions bounded below by -1",
                    x,
                ));
            }
        }
        let obs = lp_exponent(grid, f, k.n_max())?;
        let val = obs.pairing(k)?;
        if val < min {
            min = val;
        }
    }
    Ok(min)
}
