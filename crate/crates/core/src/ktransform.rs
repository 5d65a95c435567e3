//! Combinatorial harmonic analysis on finite configurations.
//!
//! The transform `(KG)(gamma) = sum_{eta subset gamma} G(eta)` turns a
//! hierarchy of level functions into an additive-type observable on
//! configurations; its inverse is the Moebius sum with alternating signs.
//! Both are exact finite sums here, no truncation involved: a configuration
//! of `n` points has `2^n` sub-configurations.

use crate::error::{Error, Result};
use crate::grid::FiniteConfig;
use crate::scalar::Real;
use crate::state::HierState;

/// Configurations above this size would need more than 2^24 subset terms.
const MAX_CONFIG: usize = 24;

fn guard(len: usize, what: &'static str) -> Result<()> {
    if len > MAX_CONFIG {
        return Err(Error::precondition(
            what,
            "configuration of at most 24 points",
            format!("{len} points"),
        ));
    }
    Ok(())
}

/// `G(eta)`: the level-`|eta|` component evaluated at the cells of `eta`.
/// Levels beyond the stored truncation count as zero.
pub fn eval_on_config<T: Real>(state: &HierState<T>, config: &FiniteConfig) -> T {
    let n = config.len();
    if n > state.n_max() {
        return T::zero();
    }
    state.level(n).get(config.cells())
}

/// `(KG)(gamma) = sum_{eta subset gamma} G(eta)`, the empty set included.
pub fn k_transform<T: Real>(state: &HierState<T>, config: &FiniteConfig) -> Result<T> {
    guard(config.len(), "K-transform")?;
    let mut acc = T::zero();
    for mask in 0..(1usize << config.len()) {
        acc += eval_on_config(state, &config.subset(mask));
    }
    Ok(acc)
}

/// `(K^-1 F)(eta) = sum_{xi subset eta} (-1)^(|eta| - |xi|) F(xi)`.
pub fn k_inverse<T: Real>(f: impl Fn(&FiniteConfig) -> T, config: &FiniteConfig) -> Result<T> {
    guard(config.len(), "inverse K-transform")?;
    let n = config.len();
    let mut acc = T::zero();
    for mask in 0..(1usize << n) {
        let sub = config.subset(mask);
        let term = f(&sub);
        if (n - sub.len()) % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

/// Slot-subset variant on ordered tuples, repeats allowed:
/// `(K_hat G)(z_1..z_n) = sum_{S subset {1..n}} G^(|S|)(z_S)`.
///
/// On tuples with distinct entries this is the K-transform of the induced
/// configuration; keeping the diagonal tuples makes it the right object for
/// checking operator conjugation identities densely, which is its purpose
/// here.
pub fn k_hat_tuple<T: Real>(state: &HierState<T>, cells: &[usize]) -> Result<T> {
    guard(cells.len(), "slot K-transform")?;
    let mut acc = T::zero();
    let mut picked = Vec::with_capacity(cells.len());
    for mask in 0..(1usize << cells.len()) {
        picked.clear();
        for (i, &c) in cells.iter().enumerate() {
            if mask & (1 << i) != 0 {
                picked.push(c);
            }
        }
        if picked.len() <= state.n_max() {
            acc += state.level(picked.len()).get(&picked);
        }
    }
    Ok(acc)
}
