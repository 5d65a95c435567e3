//! The two-diagonal evolution on level tensors.
//!
//! The generator splits into an in-level part `L0` (a pair of occupied sites
//! jumps to a fresh pair of sites, both slots move together) and a
//! level-coupling part `W` that feeds level `n` from level `n - 1`. On
//! quasi-observables the renormalized generator is `eps * L0 + W`: `eps = 1`
//! is the plain hierarchy, `eps -> 0` freezes the in-level flow and leaves
//! the kinetic cascade. Because the block structure is lower triangular,
//! level `n` obeys
//!
//! `d/dt G^(n) = eps L0 G^(n) + W G^(n-1)`
//!
//! with the driving level already solved, so the marching solver works
//! bottom-up and integrates each level by variation of constants. Dense
//! matrix builders for the same operators serve as reference oracles at
//! small sizes.

use crate::error::{Error, Result};
use crate::kernel::KernelTables;
use crate::linalg::Mat;
use crate::scalar::{binomial, Real};
use crate::state::HierState;
use crate::tensor::{advance, pow_usize, LevelTensor};

/// Dense reference matrices stop here; above this the Pade exponential is
/// no longer a sane oracle on one core.
pub const EXPM_DIM_LIMIT: usize = 4096;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_grid<T: Real>(
    tables: &KernelTables<T>,
    g: &LevelTensor<T>,
    context: &'static str,
) -> Result<()> {
    // level-0 tensors are grid-free scalars
    if g.level() > 0 && g.base() != tables.grid().n_cells() {
        return Err(Error::GridMismatch { context });
    }
    Ok(())
}

/// In-level generator. For every unordered pair of slots the current pair of
/// sites is charged its total jump rate `a1` and credited with the kernel
/// integral over arrival pairs. Levels 0 and 1 have no pair and map to zero.
///
/// Row sums of the cached kernel reproduce `a1` exactly, so constants are
/// annihilated to rounding, not merely to quadrature accuracy.
pub fn apply_l0<T: Real>(tables: &KernelTables<T>, g: &LevelTensor<T>) -> Result<LevelTensor<T>> {
    check_grid(tables, g, "apply_l0")?;
    pair_jump(tables, g, false)
}

/// Transpose of [`apply_l0`] in the unweighted level dot product: the kernel
/// acts with departure and arrival pairs swapped while the loss keeps `a1`.
/// On densities this is the forward (master-equation) form: inflow from every
/// pair that can jump onto the current sites, outflow at the departure rate.
/// Conserves the level integral exactly.
pub fn apply_l0_adjoint<T: Real>(
    tables: &KernelTables<T>,
    r: &LevelTensor<T>,
) -> Result<LevelTensor<T>> {
    check_grid(tables, r, "apply_l0_adjoint")?;
    pair_jump(tables, r, true)
}

fn pair_jump<T: Real>(
    tables: &KernelTables<T>,
    g: &LevelTensor<T>,
    swapped: bool,
) -> Result<LevelTensor<T>> {
    let grid = tables.grid();
    let v = grid.n_cells();
    let n = g.level();
    let mut out = LevelTensor::zeros(grid, n);
    if n < 2 {
        return Ok(out);
    }
    let w2 = grid.cell_measure() * grid.cell_measure();
    let gv = g.values();
    let ov = out.values_mut();
    let mut plane = vec![T::zero(); v * v];
    let free_count = pow_usize(v, n - 2);
    for i in 0..n - 1 {
        for j in i + 1..n {
            let si = pow_usize(v, i);
            let sj = pow_usize(v, j);
            let free_strides: Vec<usize> = (0..n)
                .filter(|m| *m != i && *m != j)
                .map(|m| pow_usize(v, m))
                .collect();
            let mut digits = vec![0usize; n - 2];
            for _ in 0..free_count {
                let base: usize = digits.iter().zip(&free_strides).map(|(d, s)| d * s).sum();
                for y1 in 0..v {
                    for y2 in 0..v {
                        plane[y1 * v + y2] = gv[base + y1 * si + y2 * sj];
                    }
                }
                for x1 in 0..v {
                    for x2 in 0..v {
                        let block = if swapped {
                            tables.c_block_swapped(x1, x2)
                        } else {
                            tables.c_block(x1, x2)
                        };
                        let gain = match block {
                            Some(b) => dot(b, &plane),
                            None => {
                                let mut acc = T::zero();
                                for y1 in 0..v {
                                    for y2 in 0..v {
                                        let c = if swapped {
                                            tables.c_at(y1, y2, x1, x2)
                                        } else {
                                            tables.c_at(x1, x2, y1, y2)
                                        };
                                        acc += c * plane[y1 * v + y2];
                                    }
                                }
                                acc
                            }
                        };
                        let idx = base + x1 * si + x2 * sj;
                        ov[idx] += gain * w2 - tables.a1(x1, x2) * gv[idx];
                    }
                }
                advance(&mut digits, v);
            }
        }
    }
    Ok(out)
}

/// Level-coupling operator, mapping level `n - 1` to level `n`. For every
/// ordered pair of output slots `(p, q)` the pair `(x_p, x_q)` triggers a
/// jump: slot `q` is dropped and slot `p` is relocated under the reduced
/// kernel `ctilde(x_p, x_q, .)`, minus the escape term `a1(x_p, x_q)` on the
/// tuple with slot `q` dropped. Summing ordered pairs (rather than `i < j`
/// with one orientation) is what makes the image of a symmetric tensor
/// symmetric again.
pub fn apply_w<T: Real>(tables: &KernelTables<T>, g: &LevelTensor<T>) -> Result<LevelTensor<T>> {
    check_grid(tables, g, "apply_w")?;
    let grid = tables.grid();
    let v = grid.n_cells();
    let n = g.level() + 1;
    let mut out = LevelTensor::zeros(grid, n);
    if n < 2 {
        return Ok(out);
    }
    let w = grid.cell_measure();
    let gv = g.values();
    let strides_in: Vec<usize> = (0..n - 1).map(|m| pow_usize(v, m)).collect();
    let mut digits = vec![0usize; n];
    for slot in out.values_mut() {
        let mut acc = T::zero();
        for p in 0..n {
            for q in 0..n {
                if q == p {
                    continue;
                }
                // flat index of the input tuple: drop q, keep the rest in
                // order, with the surviving image of p left at zero
                let mut base = 0usize;
                let mut ppos = 0usize;
                let mut pos = 0usize;
                for m in 0..n {
                    if m == q {
                        continue;
                    }
                    if m == p {
                        ppos = pos;
                    } else {
                        base += digits[m] * strides_in[pos];
                    }
                    pos += 1;
                }
                let sp = strides_in[ppos];
                let xp = digits[p];
                let xq = digits[q];
                let row = tables.ctilde_row(xp, xq);
                let mut gain = T::zero();
                for (y, &cy) in row.iter().enumerate() {
                    gain += cy * gv[base + y * sp];
                }
                acc += gain * w - tables.a1(xp, xq) * gv[base + xp * sp];
            }
        }
        *slot = acc;
        advance(&mut digits, v);
    }
    Ok(out)
}

/// Adjoint of [`apply_w`] in the factorial-weighted pairing, mapping level
/// `n + 1` down to level `n`. At every slot of the output tuple the entry
/// above is integrated against `ctilde` over the two inserted sites, minus
/// `a1` against a single inserted site. Expects (and only makes sense for)
/// symmetric input.
pub fn apply_w_adjoint<T: Real>(
    tables: &KernelTables<T>,
    k: &LevelTensor<T>,
) -> Result<LevelTensor<T>> {
    check_grid(tables, k, "apply_w_adjoint")?;
    if k.level() == 0 {
        return Err(Error::precondition(
            "apply_w_adjoint",
            "input level at least 1",
            "level 0",
        ));
    }
    let grid = tables.grid();
    let v = grid.n_cells();
    let n = k.level() - 1;
    let mut out = LevelTensor::zeros(grid, n);
    if n == 0 {
        return Ok(out);
    }
    let w = grid.cell_measure();
    let w2 = w * w;
    let kv = k.values();
    let s_top1 = pow_usize(v, n - 1);
    let s_top2 = pow_usize(v, n);
    let a1 = tables.a1_table();
    let mut digits = vec![0usize; n];
    let mut flat = 0usize;
    for slot in out.values_mut() {
        let mut acc = T::zero();
        for m in 0..n {
            // tuple with slot m removed, packed into the low slots of the
            // level above; the inserted pair rides in the top two slots
            let mut base = 0usize;
            let mut pos = 0usize;
            for (j, &dj) in digits.iter().enumerate() {
                if j == m {
                    continue;
                }
                base += dj * pow_usize(v, pos);
                pos += 1;
            }
            let vm = digits[m];
            let mut gain = T::zero();
            for x1 in 0..v {
                let k_row = &kv[base + x1 * s_top1..];
                for x2 in 0..v {
                    gain += tables.ctilde(x1, x2, vm) * k_row[x2 * s_top2];
                }
            }
            let mut loss = T::zero();
            for x2 in 0..v {
                loss += a1[vm * v + x2] * kv[flat + x2 * s_top2];
            }
            acc += gain * w2 - loss * w;
        }
        *slot = acc;
        flat += 1;
        advance(&mut digits, v);
    }
    Ok(out)
}

fn rk4_flow<T: Real>(
    tables: &KernelTables<T>,
    g: &LevelTensor<T>,
    t: T,
    substep_factor: T,
    op: impl Fn(&KernelTables<T>, &LevelTensor<T>) -> Result<LevelTensor<T>>,
) -> Result<LevelTensor<T>> {
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::precondition(
            "semigroup step",
            "finite nonnegative time",
            t,
        ));
    }
    if !(substep_factor > T::zero()) {
        return Err(Error::config(
            "substep_factor",
            "must be a positive number",
        ));
    }
    let n = g.level();
    if n < 2 || t == T::zero() {
        return Ok(g.clone());
    }
    // |L0| <= A n (n - 1) on this level; keep tau |L0| below the factor so
    // the classical step error (tau |L0|)^5 / 120 stays where the caller
    // asked for it
    let lam = tables.bounds().a_rate() * T::of_usize(n * (n - 1));
    let m = ((t * lam / substep_factor).dbl().ceil() as usize).max(1);
    let tau = t / T::of_usize(m);
    let half = tau.half();
    let sixth = tau / T::of(6.0);
    let mut cur = g.clone();
    for _ in 0..m {
        let k1 = op(tables, &cur)?;
        let mut s = cur.clone();
        s.axpy(half, &k1)?;
        let k2 = op(tables, &s)?;
        let mut s = cur.clone();
        s.axpy(half, &k2)?;
        let k3 = op(tables, &s)?;
        let mut s = cur.clone();
        s.axpy(tau, &k3)?;
        let k4 = op(tables, &s)?;
        cur.axpy(sixth, &k1)?;
        cur.axpy(sixth + sixth, &k2)?;
        cur.axpy(sixth + sixth, &k3)?;
        cur.axpy(sixth, &k4)?;
    }
    if !cur.is_finite() {
        return Err(Error::NonFinite {
            context: "semigroup step".to_string(),
        });
    }
    Ok(cur)
}

/// `exp(t L0)` on one level by classical Runge-Kutta substeps.
pub fn step_semigroup<T: Real>(
    tables: &KernelTables<T>,
    g: &LevelTensor<T>,
    t: T,
    substep_factor: T,
) -> Result<LevelTensor<T>> {
    check_grid(tables, g, "step_semigroup")?;
    rk4_flow(tables, g, t, substep_factor, |tb, x| pair_jump(tb, x, false))
}

/// `exp(t L0*)` on one level; the density-side counterpart of
/// [`step_semigroup`].
pub fn step_semigroup_adjoint<T: Real>(
    tables: &KernelTables<T>,
    r: &LevelTensor<T>,
    t: T,
    substep_factor: T,
) -> Result<LevelTensor<T>> {
    check_grid(tables, r, "step_semigroup_adjoint")?;
    rk4_flow(tables, r, t, substep_factor, |tb, x| pair_jump(tb, x, true))
}

/// Knobs for the marching solver.
///
/// `eps` scales the in-level generator; the level coupling always enters
/// with coefficient one. `substep_factor` caps `tau |L0|` inside every
/// semigroup substep; 0.1 matches plotting accuracy, tight tolerances want
/// 0.025 or below.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions<T> {
    pub eps: T,
    pub substep_factor: T,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            eps: T::one(),
            substep_factor: T::of(0.1),
        }
    }
}

impl<T: Real> SolveOptions<T> {
    pub fn with_eps(eps: T) -> Self {
        SolveOptions {
            eps,
            ..Self::default()
        }
    }

    /// The scaling limit: in-level flow switched off.
    pub fn vlasov() -> Self {
        Self::with_eps(T::zero())
    }
}

/// Trajectory of hierarchy states on a uniform time grid.
#[derive(Clone, Debug)]
pub struct HierPath<T> {
    times: Vec<T>,
    states: Vec<HierState<T>>,
}

impl<T: Real> HierPath<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[HierState<T>] {
        &self.states
    }

    pub fn time(&self, k: usize) -> T {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &HierState<T> {
        &self.states[k]
    }

    pub fn final_state(&self) -> &HierState<T> {
        self.states.last().expect("path is never empty")
    }

    /// Largest weighted-scale distance to another path on the same grid.
    pub fn sup_distance(&self, other: &HierPath<T>, weight: T) -> Result<T> {
        if self.len() != other.len() {
            return Err(Error::precondition(
                "sup_distance",
                "paths on the same time grid",
                format!("{} vs {} snapshots", self.len(), other.len()),
            ));
        }
        let mut sup = T::zero();
        for (a, b) in self.states.iter().zip(&other.states) {
            let mut d = a.clone();
            d.axpy(-T::one(), b)?;
            let e = d.norm_l(weight);
            if e > sup {
                sup = e;
            }
        }
        Ok(sup)
    }
}

/// March the hierarchy from `g0` to `t_final` and record `steps + 1` uniform
/// snapshots.
///
/// Levels 0 and 1 are constants of the flow. Each dynamic level integrates
///
/// `G_k = e^{eps d L}[G_{k-1} + (d/6) F_{k-1}] + e^{eps d L / 2}(4d/6) F_mid + (d/6) F_k`
///
/// (variation of constants with Simpson quadrature, `F = W G^(n-1)`), and
/// level `n` runs at step `t_final / (steps * 2^(n_max - n))` so the level
/// below, which is one dyadic refinement finer, already holds values at all
/// the midpoints. Fourth order in the macro step; semigroup substeps are
/// governed by `opts.substep_factor`.
pub fn solve_hierarchy<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t_final: T,
    steps: usize,
    opts: SolveOptions<T>,
) -> Result<HierPath<T>> {
    tables.grid().same_as(g0.grid(), "solve_hierarchy")?;
    if !(t_final >= T::zero()) || !t_final.is_finite() {
        return Err(Error::precondition(
            "solve_hierarchy",
            "finite nonnegative t_final",
            t_final,
        ));
    }
    if steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    if !(opts.eps >= T::zero()) || !opts.eps.is_finite() {
        return Err(Error::config("eps", "must be finite and nonnegative"));
    }
    let n_max = g0.n_max();
    let grid = *g0.grid();

    let mut level_paths: Vec<Vec<LevelTensor<T>>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max.min(1) {
        level_paths.push(vec![g0.level(n).clone()]);
    }
    for n in 2..=n_max {
        let sn = steps << (n_max - n);
        let delta = t_final / T::of_usize(sn);
        let sixth = delta / T::of(6.0);
        let path = {
            let below = &level_paths[n - 1];
            let at_below = |idx: usize| -> &LevelTensor<T> {
                if below.len() == 1 {
                    &below[0]
                } else {
                    &below[idx]
                }
            };
            let mut path = Vec::with_capacity(sn + 1);
            path.push(g0.level(n).clone());
            let mut f_prev = apply_w(tables, at_below(0))?;
            for k in 1..=sn {
                let f_mid = apply_w(tables, at_below(2 * k - 1))?;
                let f_end = apply_w(tables, at_below(2 * k))?;
                let mut stage = path[k - 1].clone();
                stage.axpy(sixth, &f_prev)?;
                let mut next =
                    step_semigroup(tables, &stage, opts.eps * delta, opts.substep_factor)?;
                let carried = step_semigroup(
                    tables,
                    &f_mid,
                    opts.eps * delta.half(),
                    opts.substep_factor,
                )?;
                next.axpy(T::of(4.0) * sixth, &carried)?;
                next.axpy(sixth, &f_end)?;
                if !next.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("solve_hierarchy level {n} step {k}"),
                    });
                }
                path.push(next);
                f_prev = f_end;
            }
            path
        };
        level_paths.push(path);
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        times.push(t_final * T::of_usize(k) / T::of_usize(steps));
        let levels = (0..=n_max)
            .map(|n| {
                let p = &level_paths[n];
                if p.len() == 1 {
                    p[0].clone()
                } else {
                    p[k << (n_max - n)].clone()
                }
            })
            .collect();
        states.push(HierState::new(grid, levels)?);
    }
    Ok(HierPath { times, states })
}

/// [`solve_hierarchy`] with the plain generator (`eps = 1`).
pub fn solve_forward<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t_final: T,
    steps: usize,
) -> Result<HierPath<T>> {
    solve_hierarchy(tables, g0, t_final, steps, SolveOptions::default())
}

/// [`solve_hierarchy`] in the scaling limit (`eps = 0`).
pub fn solve_vlasov<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t_final: T,
    steps: usize,
) -> Result<HierPath<T>> {
    solve_hierarchy(tables, g0, t_final, steps, SolveOptions::vlasov())
}

/// A-priori ceiling for the level-`n` norm at time `t`:
///
/// `sum_{k=1..n} (t B)^(n-k) C(n, k) (n-1)!/(k-1)! |G_0^(k)|`
///
/// with `B = c3 + c4` the level-coupling rate. Levels 0 and 1 are constant,
/// for which the sum degenerates to the initial norm.
pub fn level_growth_bound<T: Real>(b_rate: T, t: T, level_norms0: &[T], n: usize) -> Result<T> {
    if n >= level_norms0.len() {
        return Err(Error::precondition(
            "level_growth_bound",
            "initial norms up to the requested level",
            format!("level {n} with {} norms", level_norms0.len()),
        ));
    }
    if n == 0 {
        return Ok(level_norms0[0]);
    }
    let tb = t * b_rate;
    let mut total = T::zero();
    for k in 1..=n {
        // (n-1)!/(k-1)! as the falling product k (k+1) ... (n-1)
        let mut falling = T::one();
        for j in k..n {
            falling *= T::of_usize(j);
        }
        total += tb.powi((n - k) as i32) * binomial::<T>(n, k) * falling * level_norms0[k];
    }
    Ok(total)
}

fn level_offsets(v: usize, n_max: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(n_max + 2);
    let mut acc = 0usize;
    for n in 0..=n_max + 1 {
        offsets.push(acc);
        if n <= n_max {
            acc += pow_usize(v, n);
        }
    }
    offsets
}

fn check_expm_dim(dim: usize, what: &'static str) -> Result<()> {
    if dim > EXPM_DIM_LIMIT {
        return Err(Error::precondition(
            what,
            "total dimension at most 4096",
            dim,
        ));
    }
    Ok(())
}

fn operator_matrix<T: Real>(
    grid_cells: usize,
    n: usize,
    tables: &KernelTables<T>,
    op: impl Fn(&KernelTables<T>, &LevelTensor<T>) -> Result<LevelTensor<T>>,
) -> Result<Mat<T>> {
    let dim = pow_usize(grid_cells, n);
    let mut mat = Mat::zeros(dim);
    let mut e = LevelTensor::zeros(tables.grid(), n);
    for col in 0..dim {
        e.values_mut()[col] = T::one();
        let image = op(tables, &e)?;
        for (row, &val) in image.values().iter().enumerate() {
            if val != T::zero() {
                *mat.at_mut(row, col) = val;
            }
        }
        e.values_mut()[col] = T::zero();
    }
    Ok(mat)
}

/// Dense matrix of the in-level generator on one level, columns built by
/// applying the production operator to basis tensors.
pub fn level_generator_matrix<T: Real>(tables: &KernelTables<T>, n: usize) -> Result<Mat<T>> {
    let v = tables.grid().n_cells();
    check_expm_dim(pow_usize(v, n), "level_generator_matrix")?;
    operator_matrix(v, n, tables, |tb, x| pair_jump(tb, x, false))
}

/// Dense matrix of the in-level adjoint on one level.
pub fn level_adjoint_matrix<T: Real>(tables: &KernelTables<T>, n: usize) -> Result<Mat<T>> {
    let v = tables.grid().n_cells();
    check_expm_dim(pow_usize(v, n), "level_adjoint_matrix")?;
    operator_matrix(v, n, tables, |tb, x| pair_jump(tb, x, true))
}

/// Dense matrix of `eps L0 + W` on the whole truncated hierarchy, levels
/// stacked in order. Block lower triangular: `W` sits one block below the
/// diagonal.
pub fn hier_generator_matrix<T: Real>(
    tables: &KernelTables<T>,
    n_max: usize,
    eps: T,
) -> Result<Mat<T>> {
    let v = tables.grid().n_cells();
    let offsets = level_offsets(v, n_max);
    let dim = offsets[n_max + 1];
    check_expm_dim(dim, "hier_generator_matrix")?;
    let mut mat = Mat::zeros(dim);
    for n in 0..=n_max {
        let sz = pow_usize(v, n);
        let mut e = LevelTensor::zeros(tables.grid(), n);
        for i in 0..sz {
            e.values_mut()[i] = T::one();
            let col = offsets[n] + i;
            if n >= 2 && eps != T::zero() {
                let le = pair_jump(tables, &e, false)?;
                for (row, &val) in le.values().iter().enumerate() {
                    if val != T::zero() {
                        *mat.at_mut(offsets[n] + row, col) = eps * val;
                    }
                }
            }
            if n + 1 <= n_max {
                let we = apply_w(tables, &e)?;
                for (row, &val) in we.values().iter().enumerate() {
                    if val != T::zero() {
                        *mat.at_mut(offsets[n + 1] + row, col) = val;
                    }
                }
            }
            e.values_mut()[i] = T::zero();
        }
    }
    Ok(mat)
}

/// Dense matrix of `eps L0* + W*` on the truncated density hierarchy.
/// Block upper triangular: level `n` is fed from level `n + 1`, the top
/// level sees only its own semigroup.
pub fn hier_adjoint_matrix<T: Real>(
    tables: &KernelTables<T>,
    n_max: usize,
    eps: T,
) -> Result<Mat<T>> {
    let v = tables.grid().n_cells();
    let offsets = level_offsets(v, n_max);
    let dim = offsets[n_max + 1];
    check_expm_dim(dim, "hier_adjoint_matrix")?;
    let mut mat = Mat::zeros(dim);
    for n in 0..=n_max {
        let sz = pow_usize(v, n);
        let mut e = LevelTensor::zeros(tables.grid(), n);
        for i in 0..sz {
            e.values_mut()[i] = T::one();
            let col = offsets[n] + i;
            if n >= 2 && eps != T::zero() {
                let le = pair_jump(tables, &e, true)?;
                for (row, &val) in le.values().iter().enumerate() {
                    if val != T::zero() {
                        *mat.at_mut(offsets[n] + row, col) = eps * val;
                    }
                }
            }
            if n >= 1 {
                let we = apply_w_adjoint(tables, &e)?;
                for (row, &val) in we.values().iter().enumerate() {
                    if val != T::zero() {
                        *mat.at_mut(offsets[n - 1] + row, col) = val;
                    }
                }
            }
            e.values_mut()[i] = T::zero();
        }
    }
    Ok(mat)
}

/// Stack the levels of a state into one flat vector, level 0 first.
pub fn flatten_state<T: Real>(g: &HierState<T>) -> Vec<T> {
    let mut out = Vec::new();
    for lvl in g.levels() {
        out.extend_from_slice(lvl.values());
    }
    out
}

/// Inverse of [`flatten_state`].
pub fn unflatten_state<T: Real>(
    grid: &crate::grid::TorusGrid<T>,
    n_max: usize,
    flat: &[T],
) -> Result<HierState<T>> {
    let v = grid.n_cells();
    let offsets = level_offsets(v, n_max);
    if flat.len() != offsets[n_max + 1] {
        return Err(Error::precondition(
            "unflatten_state",
            &format!("{} entries for {} levels", offsets[n_max + 1], n_max + 1),
            flat.len(),
        ));
    }
    let levels = (0..=n_max)
        .map(|n| {
            let sz = pow_usize(v, n);
            let mut lvl = LevelTensor::zeros(grid, n);
            lvl.values_mut().copy_from_slice(&flat[offsets[n]..offsets[n] + sz]);
            lvl
        })
        .collect();
    HierState::new(*grid, levels)
}

/// Evolve a state by the dense matrix exponential of `eps L0 + W`.
/// Reference path for small problems.
pub fn evolve_expm<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t: T,
    eps: T,
) -> Result<HierState<T>> {
    tables.grid().same_as(g0.grid(), "evolve_expm")?;
    let mut m = hier_generator_matrix(tables, g0.n_max(), eps)?;
    m.scale(t);
    let flat = flatten_state(g0);
    unflatten_state(g0.grid(), g0.n_max(), &m.expm().matvec(&flat))
}

/// Evolve a density/correlation state by the dense matrix exponential of
/// `eps L0* + W*`. Reference path for small problems.
pub fn evolve_expm_adjoint<T: Real>(
    tables: &KernelTables<T>,
    k0: &HierState<T>,
    t: T,
    eps: T,
) -> Result<HierState<T>> {
    tables.grid().same_as(k0.grid(), "evolve_expm_adjoint")?;
    let mut m = hier_adjoint_matrix(tables, k0.n_max(), eps)?;
    m.scale(t);
    let flat = flatten_state(k0);
    unflatten_state(k0.grid(), k0.n_max(), &m.expm().matvec(&flat))
}

/// Reference value of the second level at time `t` by direct quadrature of
/// the variation-of-constants formula: the level-1 drive is constant in
/// time, so
///
/// `G^(2)(t) = e^{t eps L0} G_0^(2) + int_0^t e^{(t-s) eps L0} W G_0^(1) ds`
///
/// with composite Simpson on `2 * panels` intervals, the semigroup factor
/// marched incrementally from `s = t` down to `s = 0`. Cross-check for the
/// marching solver at the lowest dynamic level.
pub fn volterra_level2_reference<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t: T,
    eps: T,
    panels: usize,
    substep_factor: T,
) -> Result<LevelTensor<T>> {
    tables.grid().same_as(g0.grid(), "volterra_level2_reference")?;
    if g0.n_max() < 2 {
        return Err(Error::precondition(
            "volterra_level2_reference",
            "a state with at least 2 levels",
            g0.n_max(),
        ));
    }
    if panels == 0 {
        return Err(Error::config("panels", "must be at least 1"));
    }
    let mut out = step_semigroup(tables, g0.level(2), eps * t, substep_factor)?;
    if t == T::zero() {
        return Ok(out);
    }
    let drive = apply_w(tables, g0.level(1))?;
    let nodes = 2 * panels;
    let h = t / T::of_usize(nodes);
    // u holds e^{(t - s_i) eps L0} (W G_0^(1)) while s_i walks down from t
    let mut u = drive;
    let mut acc = LevelTensor::zeros(tables.grid(), 2);
    for i in (0..=nodes).rev() {
        if i < nodes {
            u = step_semigroup(tables, &u, eps * h, substep_factor)?;
        }
        let weight = if i == 0 || i == nodes {
            T::one()
        } else if i % 2 == 1 {
            T::of(4.0)
        } else {
            T::of(2.0)
        };
        acc.axpy(weight, &u)?;
    }
    out.axpy(h / T::of(3.0), &acc)?;
    Ok(out)
}

/// For each `eps` in the list, the largest weighted-scale distance between
/// the `eps`-flow and the scaling limit over a shared time grid. The weight
/// must sit strictly below the contraction radius at `t_final` for the
/// distances to be meaningful norms of the full truncated state.
pub fn vlasov_convergence_study<T: Real>(
    tables: &KernelTables<T>,
    g0: &HierState<T>,
    t_final: T,
    eps_list: &[T],
    weight: T,
    steps: usize,
    substep_factor: T,
) -> Result<Vec<(T, T)>> {
    if !(weight > T::zero()) || !weight.is_finite() {
        return Err(Error::config("weight", "must be positive and finite"));
    }
    let limit = solve_hierarchy(
        tables,
        g0,
        t_final,
        steps,
        SolveOptions {
            eps: T::zero(),
            substep_factor,
        },
    )?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let path = solve_hierarchy(
            tables,
            g0,
            t_final,
            steps,
            SolveOptions {
                eps,
                substep_factor,
            },
        )?;
        rows.push((eps, path.sup_distance(&limit, weight)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::kernel::{balanced_affinity, FactorizedKernel, Kernel};
    use crate::ktransform::k_hat_tuple;
    use crate::state::{c_t, rho};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cos_profile(grid: &TorusGrid<f64>, alpha: f64) -> Vec<f64> {
        let m = grid.cells_per_side();
        (0..m)
            .map(|k| 1.0 + alpha * (2.0 * std::f64::consts::PI * k as f64 / m as f64).cos())
            .collect()
    }

    fn balanced_tables(m: usize, kappa: f64) -> KernelTables<f64> {
        let grid: TorusGrid<f64> = TorusGrid::line(m).unwrap();
        let a = cos_profile(&grid, 0.5);
        let b = balanced_affinity(&grid, &a).unwrap();
        let fk = FactorizedKernel::new(grid, kappa, &a, &b).unwrap();
        KernelTables::build(Kernel::Factorized(fk))
    }

    fn random_symmetric_level(
        grid: &TorusGrid<f64>,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> LevelTensor<f64> {
        let mut t = LevelTensor::from_fn(grid, n, |_| rng.random_range(-1.0..1.0));
        t.symmetrize();
        t
    }

    fn random_state(grid: &TorusGrid<f64>, n_max: usize, rng: &mut ChaCha8Rng) -> HierState<f64> {
        let levels = (0..=n_max)
            .map(|n| random_symmetric_level(grid, n, rng))
            .collect();
        HierState::new(*grid, levels).unwrap()
    }

    fn random_tabulated(m: usize, rng: &mut ChaCha8Rng) -> KernelTables<f64> {
        let grid: TorusGrid<f64> = TorusGrid::line(m).unwrap();
        let v = grid.n_cells();
        let mut table = vec![0.0; v * v * v * v];
        for x in table.iter_mut() {
            *x = rng.random_range(0.0..1.0);
        }
        // symmetrize within the departure and the arrival pair
        let at = |i: usize, j: usize, k: usize, l: usize| ((i * v + j) * v + k) * v + l;
        let raw = table.clone();
        for i in 0..v {
            for j in 0..v {
                for k in 0..v {
                    for l in 0..v {
                        table[at(i, j, k, l)] = 0.25
                            * (raw[at(i, j, k, l)]
                                + raw[at(j, i, k, l)]
                                + raw[at(i, j, l, k)]
                                + raw[at(j, i, l, k)]);
                    }
                }
            }
        }
        KernelTables::build(Kernel::tabulated(grid, table).unwrap())
    }

    #[test]
    fn constants_are_stationary() {
        let tables = balanced_tables(8, 1.3);
        let grid = *tables.grid();
        for n in 2..=3 {
            let g = LevelTensor::from_fn(&grid, n, |_| 0.7);
            assert!(apply_l0(&tables, &g).unwrap().max_abs() < 1e-13);
        }
        let g1 = LevelTensor::from_fn(&grid, 1, |_| 0.7);
        assert!(apply_w(&tables, &g1).unwrap().max_abs() < 1e-13);
        // levels 0 and 1 are annihilated outright
        let g0 = LevelTensor::scalar(2.0);
        assert_eq!(apply_w(&tables, &g0).unwrap().max_abs(), 0.0);
        assert_eq!(apply_l0(&tables, &g1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_kernel_closed_form_on_products() {
        // c identically 2k: gain integrates G against the flat measure,
        // loss charges 2k, so L0 (g x g) = 2k [(int g)^2 - g(x1) g(x2)]
        let grid: TorusGrid<f64> = TorusGrid::line(9).unwrap();
        let kappa = 0.8;
        let tables = KernelTables::build(Kernel::constant(grid, 2.0 * kappa).unwrap());
        let g: Vec<f64> = (0..9).map(|k| 0.3 + 0.05 * (k as f64)).collect();
        let tensor = LevelTensor::from_fn(&grid, 2, |idx| g[idx[0]] * g[idx[1]]);
        let out = apply_l0(&tables, &tensor).unwrap();
        let mass: f64 = g.iter().sum::<f64>() * grid.cell_measure();
        for x1 in 0..9 {
            for x2 in 0..9 {
                let want = 2.0 * kappa * (mass * mass - g[x1] * g[x2]);
                assert!((out.get(&[x1, x2]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn operators_preserve_symmetry() {
        let tables = balanced_tables(6, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g2 = random_symmetric_level(&grid, 2, &mut rng);
        assert!(apply_w(&tables, &g2).unwrap().max_symmetry_defect() < 1e-13);
        let g3 = random_symmetric_level(&grid, 3, &mut rng);
        assert!(apply_l0(&tables, &g3).unwrap().max_symmetry_defect() < 1e-13);
        assert!(apply_l0_adjoint(&tables, &g3).unwrap().max_symmetry_defect() < 1e-13);
        assert!(apply_w_adjoint(&tables, &g3).unwrap().max_symmetry_defect() < 1e-13);
    }

    #[test]
    fn operator_norms_obey_rate_bounds() {
        let tables = balanced_tables(8, 1.0);
        let grid = *tables.grid();
        let bounds = tables.bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 2..=3 {
            let nn = (n * (n - 1)) as f64;
            for _ in 0..25 {
                let g = random_symmetric_level(&grid, n, &mut rng);
                let gn = g.norm_x(&grid);
                let l0 = apply_l0(&tables, &g).unwrap().norm_x(&grid);
                assert!(l0 <= nn * bounds.a_rate() * gn * (1.0 + 1e-10));
                let prev = random_symmetric_level(&grid, n - 1, &mut rng);
                let w = apply_w(&tables, &prev).unwrap().norm_x(&grid);
                assert!(w <= nn * bounds.b_rate() * prev.norm_x(&grid) * (1.0 + 1e-10));
            }
        }
    }

    // The combinatorial heart of the two-diagonal form: conjugating the
    // block operator by the additive-function transform must reproduce the
    // plain pair-jump generator on functions of a finite tuple, including
    // tuples with repeated sites.
    #[test]
    fn descent_identity_on_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tables = random_tabulated(5, &mut rng);
        let grid = *tables.grid();
        let v = grid.n_cells();
        let w2 = grid.cell_measure() * grid.cell_measure();
        let g = random_state(&grid, 3, &mut rng);

        // image state: (eps L0 + W) G with eps = 1
        let levels = (0..=3)
            .map(|n| {
                let mut lvl = apply_l0(&tables, g.level(n)).unwrap();
                if n >= 1 {
                    lvl.axpy(1.0, &apply_w(&tables, g.level(n - 1)).unwrap())
                        .unwrap();
                }
                lvl
            })
            .collect();
        let lg = HierState::new(grid, levels).unwrap();

        let mut tuples: Vec<Vec<usize>> = vec![vec![], vec![3]];
        for _ in 0..24 {
            let n = rng.random_range(2..=3usize);
            tuples.push((0..n).map(|_| rng.random_range(0..v)).collect());
        }
        tuples.push(vec![2, 2]);
        tuples.push(vec![4, 4, 1]);

        for z in &tuples {
            let lhs = k_hat_tuple(&lg, z).unwrap();
            let base = k_hat_tuple(&g, z).unwrap();
            let mut rhs = 0.0;
            for i in 0..z.len() {
                for j in i + 1..z.len() {
                    for y1 in 0..v {
                        for y2 in 0..v {
                            let mut moved = z.clone();
                            moved[i] = y1;
                            moved[j] = y2;
                            rhs += tables.c_at(z[i], z[j], y1, y2)
                                * (k_hat_tuple(&g, &moved).unwrap() - base)
                                * w2;
                        }
                    }
                }
            }
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "tuple {z:?}: transform of image {lhs} vs generator on transform {rhs}"
            );
        }
    }

    #[test]
    fn adjoints_match_in_weighted_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tables = random_tabulated(4, &mut rng);
        let grid = *tables.grid();
        let w = grid.cell_measure();

        // in-level part: plain level dot, same level
        for n in 2..=3 {
            let g = random_symmetric_level(&grid, n, &mut rng);
            let k = random_symmetric_level(&grid, n, &mut rng);
            let lg = apply_l0(&tables, &g).unwrap();
            let lk = apply_l0_adjoint(&tables, &k).unwrap();
            let lhs: f64 = lg.values().iter().zip(k.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = g.values().iter().zip(lk.values()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }

        // coupling part carries the factorial weights: pairing G against k
        // through <<., .>> must agree across the level shift
        for n in 2..=3usize {
            let g_prev = random_symmetric_level(&grid, n - 1, &mut rng);
            let k_up = random_symmetric_level(&grid, n, &mut rng);
            let wg = apply_w(&tables, &g_prev).unwrap();
            let wk = apply_w_adjoint(&tables, &k_up).unwrap();
            let fact_n: f64 = (1..=n).product::<usize>() as f64;
            let fact_p: f64 = (1..n).product::<usize>() as f64;
            let lhs = dot(wg.values(), k_up.values()) * w.powi(n as i32) / fact_n;
            let rhs = dot(g_prev.values(), wk.values()) * w.powi(n as i32 - 1) / fact_p;
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_conserves_level_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tables = random_tabulated(4, &mut rng);
        let grid = *tables.grid();
        let r = random_symmetric_level(&grid, 3, &mut rng);
        let lr = apply_l0_adjoint(&tables, &r).unwrap();
        assert!(lr.integral(&grid).abs() < 1e-13);
    }

    #[test]
    fn semigroup_matches_matrix_exponential() {
        let tables = balanced_tables(8, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_symmetric_level(&grid, 2, &mut rng);
        let t = 0.2;
        let stepped = step_semigroup(&tables, &g, t, 0.01).unwrap();
        let mut m = level_generator_matrix(&tables, 2).unwrap();
        m.scale(t);
        let exact = m.expm().matvec(g.values());
        let err: f64 = stepped
            .values()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let scale: f64 = exact.iter().map(|x| x.abs()).sum();
        assert!(err / scale < 1e-8, "relative l1 error {}", err / scale);
        // dissipativity survives the discretization
        assert!(stepped.norm_x(&grid) <= g.norm_x(&grid) * (1.0 + 1e-9));
    }

    // Duality at the matrix level: evolving the observable side forward or
    // the density side by the adjoint exponential must leave the mixed
    // pairing unchanged. (On non-symmetric data the coupling adjoint is not
    // the literal weighted transpose, it is only adjoint on the symmetric
    // subspace, which is where everything lives.)
    #[test]
    fn expm_duality_keeps_pairing_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let tables = random_tabulated(3, &mut rng);
        let grid = *tables.grid();
        let eps = 0.7;
        let t = 0.3;
        for _ in 0..5 {
            let g0 = random_state(&grid, 2, &mut rng);
            let k0 = random_state(&grid, 2, &mut rng);
            let g_t = evolve_expm(&tables, &g0, t, eps).unwrap();
            let k_t = evolve_expm_adjoint(&tables, &k0, t, eps).unwrap();
            let lhs = g_t.pairing(&k0).unwrap();
            let rhs = g0.pairing(&k_t).unwrap();
            assert!(
                (lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn vlasov_flow_is_polynomial_in_time() {
        // with the in-level part off, level 2 grows linearly and level 3
        // quadratically; Simpson integrates both without error
        let tables = balanced_tables(6, 1.1);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g0 = random_state(&grid, 3, &mut rng);
        let t = 0.31;
        let path = solve_vlasov(&tables, &g0, t, 8).unwrap();
        let end = path.final_state();

        let w1 = apply_w(&tables, g0.level(1)).unwrap();
        let mut want2 = g0.level(2).clone();
        want2.axpy(t, &w1).unwrap();
        let mut d2 = end.level(2).clone();
        d2.axpy(-1.0, &want2).unwrap();
        assert!(d2.max_abs() < 1e-12 * want2.max_abs());

        let w2 = apply_w(&tables, g0.level(2)).unwrap();
        let ww1 = apply_w(&tables, &w1).unwrap();
        let mut want3 = g0.level(3).clone();
        want3.axpy(t, &w2).unwrap();
        want3.axpy(0.5 * t * t, &ww1).unwrap();
        let mut d3 = end.level(3).clone();
        d3.axpy(-1.0, &want3).unwrap();
        assert!(d3.max_abs() < 1e-12 * want3.max_abs());
    }

    #[test]
    fn forward_solve_matches_matrix_exponential() {
        let tables = balanced_tables(6, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g0 = random_state(&grid, 3, &mut rng);
        let t = 0.1;
        let path = solve_hierarchy(
            &tables,
            &g0,
            t,
            32,
            SolveOptions {
                eps: 1.0,
                substep_factor: 0.02,
            },
        )
        .unwrap();
        let exact = evolve_expm(&tables, &g0, t, 1.0).unwrap();
        let mut diff = path.final_state().clone();
        diff.axpy(-1.0, &exact).unwrap();
        let rel = diff.norm_l(1.0) / exact.norm_l(1.0);
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn lower_levels_ignore_upper_data() {
        let tables = balanced_tables(5, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g_a = random_state(&grid, 3, &mut rng);
        let mut g_b = g_a.clone();
        *g_b.level_mut(3) = random_symmetric_level(&grid, 3, &mut rng);
        let pa = solve_forward(&tables, &g_a, 0.1, 4).unwrap();
        let pb = solve_forward(&tables, &g_b, 0.1, 4).unwrap();
        for (sa, sb) in pa.states().iter().zip(pb.states()) {
            for n in 0..=2 {
                assert_eq!(sa.level(n).values(), sb.level(n).values());
            }
        }
    }

    #[test]
    fn growth_bound_and_contraction_hold_on_path() {
        let tables = balanced_tables(8, 1.0);
        let grid = *tables.grid();
        let b = tables.bounds().b_rate();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut g0 = random_state(&grid, 3, &mut rng);
        // normalize into the unit ball of the C = 1 scale
        let s = g0.norm_l(1.0);
        g0.scale(1.0 / s);
        let c0 = 1.0;
        let t_final = 1.0 / (b * c0); // half of 2/(B C)
        let path = solve_hierarchy(
            &tables,
            &g0,
            t_final,
            32,
            SolveOptions {
                eps: 1.0,
                substep_factor: 0.05,
            },
        )
        .unwrap();
        let norms0: Vec<f64> = (0..=3).map(|n| g0.level(n).norm_x(&grid)).collect();
        let initial = g0.norm_l(c0);
        for (k, state) in path.states().iter().enumerate() {
            let t = path.time(k);
            for n in 0..=3 {
                let bound = level_growth_bound(b, t, &norms0, n).unwrap();
                assert!(
                    state.level(n).norm_x(&grid) <= bound * (1.0 + 1e-6),
                    "level {n} at t = {t}"
                );
            }
            let weighted = state.norm_l(rho(t, c0, b));
            assert!(
                weighted <= initial * (1.0 + 1e-8),
                "t = {t}: {weighted} vs {initial}"
            );
        }
        // the two radius parametrizations invert each other on the path
        let c_mid = c_t(0.5 * t_final, c0, b).unwrap();
        assert!((rho(0.5 * t_final, c_mid, b) - c0).abs() < 1e-12);
    }

    #[test]
    fn volterra_reference_agrees_with_marching() {
        let tables = balanced_tables(6, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let g0 = random_state(&grid, 2, &mut rng);
        let t = 0.15;
        let eps = 0.8;
        let opts = SolveOptions {
            eps,
            substep_factor: 0.02,
        };
        let path = solve_hierarchy(&tables, &g0, t, 24, opts).unwrap();
        let reference = volterra_level2_reference(&tables, &g0, t, eps, 48, 0.02).unwrap();
        let mut diff = path.final_state().level(2).clone();
        diff.axpy(-1.0, &reference).unwrap();
        assert!(diff.max_abs() < 1e-8 * reference.max_abs().max(1.0));
    }

    #[test]
    fn vlasov_study_reports_first_order_convergence() {
        let tables = balanced_tables(6, 1.0);
        let grid = *tables.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let mut g0 = random_state(&grid, 3, &mut rng);
        let s = g0.norm_l(1.0);
        g0.scale(1.0 / s);
        let b = tables.bounds().b_rate();
        let t = 0.25 / b;
        let weight = 0.5 * rho(t, 1.0, b);
        let rows =
            vlasov_convergence_study(&tables, &g0, t, &[0.5, 0.25, 0.125], weight, 8, 0.05)
                .unwrap();
        for pair in rows.windows(2) {
            let ratio = pair[1].1 / pair[0].1;
            assert!(
                ratio > 0.3 && ratio < 0.7,
                "halving eps scaled the distance by {ratio}"
            );
        }
    }

    #[test]
    fn solver_rejects_bad_input() {
        let tables = balanced_tables(4, 1.0);
        let other: TorusGrid<f64> = TorusGrid::line(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let g_wrong = random_state(&other, 2, &mut rng);
        assert!(solve_forward(&tables, &g_wrong, 0.1, 4).is_err());
        let g = random_state(tables.grid(), 2, &mut rng);
        assert!(solve_forward(&tables, &g, 0.1, 0).is_err());
        assert!(solve_forward(&tables, &g, -0.1, 4).is_err());
        assert!(solve_hierarchy(
            &tables,
            &g,
            0.1,
            4,
            SolveOptions {
                eps: -1.0,
                substep_factor: 0.1
            }
        )
        .is_err());
        assert!(step_semigroup(&tables, g.level(2), -1.0, 0.1).is_err());
        assert!(apply_w_adjoint(&tables, g.level(0)).is_err());
        // zero time is the identity, not an error
        let same = step_semigroup(&tables, g.level(2), 0.0, 0.1).unwrap();
        assert_eq!(same.values(), g.level(2).values());
    }
}
