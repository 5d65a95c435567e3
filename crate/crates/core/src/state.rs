//! A hierarchy state: one symmetric tensor per particle level, `n = 0..=N`.
//!
//! The same container carries quasi-observables `G = (G^(n))_n` and
//! correlation-function vectors `k = (k^(n))_n`; they differ only in which
//! norm is meaningful. Quasi-observables live in the weighted l1 scale
//! `|G|_C = sum_n C^n / n! |G^(n)|_1` (integrable, weight favors low
//! levels); correlations live in the dual sup scale
//! `|k|_C = sup_n C^(-n) max |k^(n)|`. The pairing
//! `<<G, k>> = sum_n 1/n! int G^(n) k^(n)` satisfies
//! `|<<G, k>>| <= |G|_C |k|_C` by construction.

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::scalar::{factorial, Real};
use crate::tensor::LevelTensor;

#[derive(Clone, Debug)]
pub struct HierState<T> {
    grid: TorusGrid<T>,
    levels: Vec<LevelTensor<T>>,
}

impl<T: Real> HierState<T> {
    /// `levels[n]` must be a level-`n` tensor on `grid`.
    pub fn new(grid: TorusGrid<T>, levels: Vec<LevelTensor<T>>) -> Result<Self> {
        for (n, g) in levels.iter().enumerate() {
            if g.level() != n {
                return Err(Error::precondition(
                    "hierarchy state",
                    "levels[n] of level n",
                    format!("levels[{n}] has level {}", g.level()),
                ));
            }
            if g.base() != grid.n_cells() {
                return Err(Error::GridMismatch { context: "hierarchy state level" });
            }
        }
        Ok(HierState { grid, levels })
    }

    pub fn zeros(grid: TorusGrid<T>, n_max: usize) -> Self {
        let levels = (0..=n_max).map(|n| LevelTensor::zeros(&grid, n)).collect();
        HierState { grid, levels }
    }

    /// Truncation level `N`: components `0..=N` are stored.
    pub fn n_max(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn level(&self, n: usize) -> &LevelTensor<T> {
        &self.levels[n]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut LevelTensor<T> {
        &mut self.levels[n]
    }

    pub fn levels(&self) -> &[LevelTensor<T>] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<LevelTensor<T>> {
        self.levels
    }

    /// Weighted l1 norm `sum_n C^n / n! |G^(n)|_1` (quasi-observable scale).
    pub fn norm_l(&self, c: T) -> T {
        let mut acc = T::zero();
        let mut weight = T::one();
        for (n, g) in self.levels.iter().enumerate() {
            if n > 0 {
                weight = weight * c / T::of_usize(n);
            }
            acc += weight * g.norm_x(&self.grid);
        }
        acc
    }

    /// Dual sup norm `sup_n C^(-n) max |k^(n)|` (correlation scale).
    pub fn norm_k(&self, c: T) -> T {
        let mut best = T::zero();
        let mut weight = T::one();
        for (n, k) in self.levels.iter().enumerate() {
            if n > 0 {
                weight = weight / c;
            }
            let w = weight * k.max_abs();
            if w > best {
                best = w;
            }
        }
        best
    }

    /// `<<G, k>> = sum_n 1/n! int G^(n) k^(n) dx^n` over the shared levels.
    pub fn pairing(&self, other: &HierState<T>) -> Result<T> {
        self.grid.same_as(&other.grid, "pairing")?;
        let mut acc = T::zero();
        for n in 0..=self.n_max().min(other.n_max()) {
            let mut dot = T::zero();
            for (g, k) in self.levels[n].values().iter().zip(other.levels[n].values()) {
                dot += *g * *k;
            }
            acc += dot * self.grid.tuple_measure(n) / factorial::<T>(n);
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.levels
            .iter()
            .map(|g| g.max_abs())
            .fold(T::zero(), |m, x| if x > m { x } else { m })
    }

    /// `self += s * other`, level by level.
    pub fn axpy(&mut self, s: T, other: &HierState<T>) -> Result<()> {
        self.grid.same_as(&other.grid, "state axpy")?;
        if self.levels.len() != other.levels.len() {
            return Err(Error::GridMismatch { context: "state axpy levels" });
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.axpy(s, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.levels {
            g.scale(s);
        }
    }
}

/// Product state over levels: level `n` is `p(x_1) ... p(x_n)` (the
/// Lebesgue-Poisson exponent of the density `p`). Correlation functions of
/// a Poisson field have exactly this form.
pub fn lp_exponent<T: Real>(grid: &TorusGrid<T>, p: &[T], n_max: usize) -> Result<HierState<T>> {
    if p.len() != grid.n_cells() {
        return Err(Error::GridMismatch { context: "product state density" });
    }
    let levels = (0..=n_max)
        .map(|n| {
            LevelTensor::from_fn(grid, n, |cells| {
                cells.iter().map(|&c| p[c]).fold(T::one(), |acc, x| acc * x)
            })
        })
        .collect();
    HierState::new(*grid, levels)
}

/// Weight reached by the quasi-observable scale after time `t`:
/// `rho(t, C) = C / (1 + B C t)`, with `B` the level-coupling rate.
/// The evolved functional is bounded in `L_rho(t,C)` by the initial `L_C`
/// norm.
pub fn rho<T: Real>(t: T, c: T, b_rate: T) -> T {
    c / (T::one() + b_rate * c * t)
}

/// Correlation weight grown from `C0`: `C_t = C0 / (1 - B C0 t)`. Finite
/// only up to the horizon `1 / (B C0)`; `rho(t, c_t(t, C0)) = C0` exactly.
pub fn c_t<T: Real>(t: T, c0: T, b_rate: T) -> Result<T> {
    let denom = T::one() - b_rate * c0 * t;
    if denom <= T::zero() {
        return Err(Error::Horizon {
            t: t.dbl(),
            horizon: horizon(c0, b_rate).dbl(),
        });
    }
    Ok(c0 / denom)
}

/// Lifetime of the correlation evolution started in the `C0` scale.
pub fn horizon<T: Real>(c0: T, b_rate: T) -> T {
    (b_rate * c0).recip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> TorusGrid<f64> {
        TorusGrid::line(3).unwrap()
    }

    fn state_from(levels: Vec<Vec<f64>>) -> HierState<f64> {
        let grid = grid3();
        let tensors = levels
            .into_iter()
            .enumerate()
            .map(|(n, v)| {
                let mut t = LevelTensor::zeros(&grid, n);
                t.values_mut().copy_from_slice(&v);
                t
            })
            .collect();
        HierState::new(grid, tensors).unwrap()
    }

    #[test]
    fn weighted_norms_by_hand() {
        // h = 1/3. Level 0: |2| = 2. Level 1: (1+2+3)/3 = 2.
        // Level 2: sum = 9 values of 1 -> 9/9 = 1.
        let s = state_from(vec![vec![2.0], vec![1.0, -2.0, 3.0], vec![1.0; 9]]);
        let c = 0.5;
        let expect = 2.0 + c * 2.0 + c * c / 2.0 * 1.0;
        assert!((s.norm_l(c) - expect).abs() < 1e-14);
        // Sup scale: max levels are 2, 3, 1; weights 1, 1/c, 1/c^2.
        let expect_k = (3.0 / c).max(2.0).max(1.0 / (c * c));
        assert!((s.norm_k(c) - expect_k).abs() < 1e-14);
    }

    #[test]
    fn pairing_is_bilinear_and_hoelder_bounded() {
        let g = state_from(vec![vec![1.0], vec![0.5, -1.0, 2.0], vec![0.25; 9]]);
        let k = state_from(vec![vec![-2.0], vec![1.0, 1.0, -1.0], vec![0.5; 9]]);
        // By hand: level 0: 1 * -2 = -2. Level 1: (0.5 - 1 - 2)/3 = -5/6.
        // Level 2: (1/2!) * 9 * 0.125 / 9 = 0.0625.
        let expect = -2.0 + (-5.0 / 6.0) + 0.0625;
        let got = g.pairing(&k).unwrap();
        assert!((got - expect).abs() < 1e-14);
        // Hoelder across a few weights.
        for c in [0.5, 1.0, 2.0] {
            assert!(got.abs() <= g.norm_l(c) * k.norm_k(c) + 1e-12);
        }
    }

    #[test]
    fn product_state_levels_and_sup_norm() {
        let grid = grid3();
        let p = vec![0.1, 0.4, 0.2];
        let e = lp_exponent(&grid, &p, 3).unwrap();
        assert_eq!(e.level(0).values(), &[1.0]);
        assert!((e.level(2).get(&[1, 2]) - 0.4 * 0.2).abs() < 1e-15);
        assert!((e.level(3).get(&[1, 1, 1]) - 0.4f64.powi(3)).abs() < 1e-15);
        // With c = max p every level attains the same weighted sup 1.
        assert!((e.norm_k(0.4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_flow_inverts_exactly() {
        let (c0, b) = (1.3f64, 8.0);
        let t = 0.6 * horizon(c0, b);
        let grown = c_t(t, c0, b).unwrap();
        assert!((rho(t, grown, b) - c0).abs() < 1e-12);
        assert!(c_t(horizon(c0, b) * 1.01, c0, b).is_err());
    }

    #[test]
    fn axpy_checks_shapes() {
        let mut a = HierState::<f64>::zeros(grid3(), 2);
        let b = HierState::<f64>::zeros(grid3(), 3);
        assert!(a.axpy(1.0, &b).is_err());
        let c = HierState::<f64>::zeros(grid3(), 2);
        a.axpy(2.0, &c).unwrap();
    }
}
