//! Exact stochastic simulation of the particle system.
//!
//! The process is a continuous-time Markov jump chain on finite point
//! configurations: each unordered pair `{x_i, x_j}` fires at rate
//! `a1(x_i, x_j)` and relocates to `(y1, y2)` drawn from
//! `c(x_i, x_j, . , .) / a1(x_i, x_j)`. Waiting times, pair choice, and
//! destinations are all sampled from the exact discrete distributions (no
//! rejection, no approximation), so ensemble statistics converge to the
//! same master equation the density oracle integrates.
//!
//! Positions are continuum points on the torus. The rates only resolve
//! cells, but the particles themselves carry in-cell jitter; estimators
//! re-bin at analysis time.

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::kernel::KernelTables;
use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// A finite particle configuration with continuum positions (flat
/// coordinate storage, `dim` entries per particle) and its clock. A frozen
/// state (no jumping pair left) has `time == +inf`.
#[derive(Clone, Debug)]
pub struct ParticleState<T> {
    coords: Vec<T>,
    dim: usize,
    time: T,
}

impl<T: Real> ParticleState<T> {
    pub fn new(grid: &TorusGrid<T>, coords: Vec<T>, time: T) -> Result<Self> {
        let dim = grid.dim();
        if coords.len() % dim != 0 {
            return Err(Error::precondition(
                "particle state",
                "dim coordinates per particle",
                coords.len(),
            ));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "particle coordinates".to_string(),
            });
        }
        let side = grid.side();
        let coords = coords
            .into_iter()
            .map(|x| {
                let mut w = x - (x / side).floor() * side;
                if w < T::zero() {
                    w += side;
                }
                w
            })
            .collect();
        Ok(ParticleState { coords, dim, time })
    }

    pub fn n_particles(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn is_frozen(&self) -> bool {
        self.time == T::infinity()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Cell index of every particle.
    pub fn cells(&self, grid: &TorusGrid<T>) -> Vec<usize> {
        (0..self.n_particles())
            .map(|i| grid.locate(self.point(i)))
            .collect()
    }
}

/// One jump: which particles moved, when, and where.
#[derive(Clone, Debug)]
pub struct JumpEvent<T> {
    pub wait: T,
    /// Indices of the moving pair.
    pub pair: (usize, usize),
    pub from_cells: (usize, usize),
    pub to_cells: (usize, usize),
    pub dest1: Vec<T>,
    pub dest2: Vec<T>,
}

/// Uniform point inside a cell.
fn jitter_into<T: Real>(grid: &TorusGrid<T>, cell: usize, rng: &mut impl Rng) -> Vec<T> {
    let h = grid.h();
    grid.axes(cell)
        .into_iter()
        .map(|a| (T::of_usize(a) + T::of(rng.random::<f64>())) * h)
        .collect()
}

/// Draw from an unnormalized pmf by cumulative walk.
fn sample_pmf<T: Real>(weights: &[T], rng: &mut impl Rng) -> usize {
    let total: T = weights.iter().copied().sum();
    let mut u = T::of(rng.random::<f64>()) * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u < T::zero() {
            return i;
        }
    }
    weights.len() - 1
}

/// Destination sampler for product-form kernels: the four-component
/// mixture
///
/// `c = kappa [ b(x1-x2) a(x1-y1) a(x2-y2) + a(x1-y1) a(x2-y2) b(y1-y2) ]
///    + (swap of x1, x2)`
///
/// with component masses `b(x1-x2)` and `(a*b*a~)(x1-x2)`. Independent
/// components sample two displacement draws from `a`; coupled components
/// sample `y1` from its exact marginal and `y2` from the conditional.
struct FactMixture<T> {
    a: Vec<T>,
    b: Vec<T>,
    /// `(a~ * b)`, the `y2`-integrated coupling seen from `y1`.
    rba: Vec<T>,
    /// `(a * b * a~)`, mass of the coupled component.
    s: Vec<T>,
    a_cdf_weights: Vec<T>,
}

impl<T: Real> FactMixture<T> {
    fn new(grid: &TorusGrid<T>, a: &[T], b: &[T]) -> Self {
        let ra = grid.reflect(a);
        let rba = grid.convolve(&ra, b);
        let s = grid.convolve(&grid.convolve(a, b), &ra);
        FactMixture {
            a: a.to_vec(),
            b: b.to_vec(),
            rba,
            s,
            a_cdf_weights: a.to_vec(),
        }
    }

    fn sample(
        &self,
        grid: &TorusGrid<T>,
        c1: usize,
        c2: usize,
        rng: &mut impl Rng,
    ) -> (usize, usize) {
        let delta = grid.diff(c1, c2);
        let wb = self.b[delta];
        let ws = self.s[delta];
        let comp = sample_pmf(&[wb, ws, wb, ws], rng);
        // components 2 and 3 see the departure pair swapped
        let (d1, d2) = if comp < 2 { (c1, c2) } else { (c2, c1) };
        if comp % 2 == 0 {
            // affinity carried by the departure pair: independent draws
            let z1 = sample_pmf(&self.a_cdf_weights, rng);
            let z2 = sample_pmf(&self.a_cdf_weights, rng);
            (grid.diff(d1, z1), grid.diff(d2, z2))
        } else {
            // affinity carried by the arrival pair: marginal then
            // conditional, both exact on the grid
            let v = grid.n_cells();
            let marg: Vec<T> = (0..v)
                .map(|y| self.a[grid.diff(d1, y)] * self.rba[grid.diff(y, d2)])
                .collect();
            let y1 = sample_pmf(&marg, rng);
            let cond: Vec<T> = (0..v)
                .map(|y| self.a[grid.diff(d2, y)] * self.b[grid.diff(y1, y)])
                .collect();
            (y1, sample_pmf(&cond, rng))
        }
    }
}

/// Event generator bound to one kernel. Product kernels use the exact
/// mixture decomposition; anything else draws from a per-pair categorical
/// row over all destination cell pairs, built on first use and cached.
pub struct JumpSampler<'a, T> {
    tables: &'a KernelTables<T>,
    mixture: Option<FactMixture<T>>,
    rows: Mutex<HashMap<(usize, usize), Arc<Vec<T>>>>,
}

impl<'a, T: Real> JumpSampler<'a, T> {
    pub fn new(tables: &'a KernelTables<T>) -> Self {
        let mixture = tables
            .kernel()
            .factorized()
            .map(|f| FactMixture::new(f.grid(), f.a(), f.b()));
        JumpSampler {
            tables,
            mixture,
            rows: Mutex::new(HashMap::new()),
        }
    }

    pub fn tables(&self) -> &KernelTables<T> {
        self.tables
    }

    fn destination_row(&self, c1: usize, c2: usize) -> Arc<Vec<T>> {
        let mut rows = self.rows.lock().expect("sampler cache lock");
        rows.entry((c1, c2))
            .or_insert_with(|| {
                let v = self.tables.grid().n_cells();
                let row = match self.tables.c_block(c1, c2) {
                    Some(block) => block.to_vec(),
                    None => {
                        let mut row = Vec::with_capacity(v * v);
                        for y1 in 0..v {
                            for y2 in 0..v {
                                row.push(self.tables.c_at(c1, c2, y1, y2));
                            }
                        }
                        row
                    }
                };
                Arc::new(row)
            })
            .clone()
    }

    fn sample_destination(&self, c1: usize, c2: usize, rng: &mut impl Rng) -> (usize, usize) {
        if let Some(mixture) = &self.mixture {
            return mixture.sample(self.tables.grid(), c1, c2, rng);
        }
        let row = self.destination_row(c1, c2);
        let v = self.tables.grid().n_cells();
        let flat = sample_pmf(&row, rng);
        (flat / v, flat % v)
    }

    /// Draw the next event without applying it. `None` means the state is
    /// absorbing (fewer than two particles or zero total rate).
    pub fn event(
        &self,
        state: &ParticleState<T>,
        rng: &mut impl Rng,
    ) -> Result<Option<JumpEvent<T>>> {
        let grid = self.tables.grid();
        let n = state.n_particles();
        if n < 2 {
            return Ok(None);
        }
        let cells = state.cells(grid);
        let mut pair_rates = Vec::with_capacity(n * (n - 1) / 2);
        let mut total = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let rate = self.tables.a1(cells[i], cells[j]);
                total += rate;
                pair_rates.push(rate);
            }
        }
        if !(total > T::zero()) {
            return Ok(None);
        }
        // inverse-transform exponential; 1 - U keeps the log argument in (0, 1]
        let wait = -(T::one() - T::of(rng.random::<f64>())).ln() / total;
        let which = sample_pmf(&pair_rates, rng);
        let mut seen = 0usize;
        let mut pair = (0usize, 1usize);
        'outer: for i in 0..n {
            for j in (i + 1)..n {
                if seen == which {
                    pair = (i, j);
                    break 'outer;
                }
                seen += 1;
            }
        }
        let from = (cells[pair.0], cells[pair.1]);
        let to = self.sample_destination(from.0, from.1, rng);
        Ok(Some(JumpEvent {
            wait,
            pair,
            from_cells: from,
            to_cells: to,
            dest1: jitter_into(grid, to.0, rng),
            dest2: jitter_into(grid, to.1, rng),
        }))
    }

    /// Apply one event in place; freezes the clock when absorbing. Returns
    /// whether anything happened.
    pub fn step(&self, state: &mut ParticleState<T>, rng: &mut impl Rng) -> Result<bool> {
        match self.event(state, rng)? {
            None => {
                state.time = T::infinity();
                Ok(false)
            }
            Some(ev) => {
                state.time += ev.wait;
                let d = state.dim;
                state.coords[ev.pair.0 * d..(ev.pair.0 + 1) * d].copy_from_slice(&ev.dest1);
                state.coords[ev.pair.1 * d..(ev.pair.1 + 1) * d].copy_from_slice(&ev.dest2);
                Ok(true)
            }
        }
    }

    /// Advance to `t_end` exactly: events past the end time are discarded
    /// and the clock set to `t_end` (or frozen at infinity if the state
    /// absorbs first). Events applied along the way are appended to `log`
    /// when one is supplied.
    pub fn run_until(
        &self,
        state: &mut ParticleState<T>,
        t_end: T,
        rng: &mut impl Rng,
        mut log: Option<&mut Vec<JumpEvent<T>>>,
    ) -> Result<()> {
        if !(t_end >= state.time) {
            return Err(Error::precondition(
                "run_until",
                "end time at or after the state clock",
                format!("{} < {}", t_end, state.time),
            ));
        }
        loop {
            match self.event(state, rng)? {
                None => {
                    state.time = T::infinity();
                    return Ok(());
                }
                Some(ev) => {
                    if state.time + ev.wait > t_end {
                        state.time = t_end;
                        return Ok(());
                    }
                    state.time += ev.wait;
                    let d = state.dim;
                    state.coords[ev.pair.0 * d..(ev.pair.0 + 1) * d]
                        .copy_from_slice(&ev.dest1);
                    state.coords[ev.pair.1 * d..(ev.pair.1 + 1) * d]
                        .copy_from_slice(&ev.dest2);
                    if let Some(events) = log.as_deref_mut() {
                        events.push(ev);
                    }
                }
            }
        }
    }
}

/// Poisson configuration with intensity `p0`: cell counts are
/// `Poisson(p0 * h^dim)`, positions uniform within their cell.
pub fn sample_poisson_initial<T: Real>(
    grid: &TorusGrid<T>,
    p0: &[T],
    rng: &mut impl Rng,
) -> Result<ParticleState<T>> {
    if p0.len() != grid.n_cells() {
        return Err(Error::GridMismatch {
            context: "poisson initial data",
        });
    }
    let w = grid.cell_measure();
    let mut coords = Vec::new();
    for (cell, &rate) in p0.iter().enumerate() {
        if !rate.is_finite() || rate < T::zero() {
            return Err(Error::precondition(
                "poisson initial data",
                "finite nonnegative intensity",
                rate,
            ));
        }
        let lambda = (rate * w).dbl();
        if lambda == 0.0 {
            continue;
        }
        let count = Poisson::new(lambda)
            .expect("positive finite poisson rate")
            .sample(rng) as usize;
        for _ in 0..count {
            coords.extend(jitter_into(grid, cell, rng));
        }
    }
    ParticleState::new(grid, coords, T::zero())
}

/// Exactly `n` particles drawn independently with cell probabilities
/// proportional to `q`, uniform within cells.
pub fn sample_iid_n<T: Real>(
    grid: &TorusGrid<T>,
    q: &[T],
    n: usize,
    rng: &mut impl Rng,
) -> Result<ParticleState<T>> {
    if q.len() != grid.n_cells() {
        return Err(Error::GridMismatch {
            context: "iid initial data",
        });
    }
    if q.iter().any(|x| !x.is_finite() || *x < T::zero()) || !(grid.integral(q) > T::zero()) {
        return Err(Error::precondition(
            "iid initial data",
            "nonnegative density with positive mass",
            "bad density",
        ));
    }
    let mut coords = Vec::with_capacity(n * grid.dim());
    for _ in 0..n {
        let cell = sample_pmf(q, rng);
        coords.extend(jitter_into(grid, cell, rng));
    }
    ParticleState::new(grid, coords, T::zero())
}

/// Independent replicas to time `t`, one splittable stream per replica, in
/// parallel. Replica `r` always sees the same randomness regardless of
/// thread count.
pub fn run_ensemble<T, F>(
    tables: &KernelTables<T>,
    init: F,
    t: T,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ParticleState<T>>>
where
    T: Real,
    F: Fn(&mut ChaCha8Rng) -> Result<ParticleState<T>> + Sync,
{
    if replicas == 0 {
        return Err(Error::config("mc.replicas", "must be positive"));
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::config("mc.t", "must be nonnegative and finite"));
    }
    let sampler = JumpSampler::new(tables);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let mut state = init(&mut rng)?;
            sampler.run_until(&mut state, t, &mut rng, None)?;
            Ok(state)
        })
        .collect()
}

/// Ensemble moments of the empirical correlation functions.
#[derive(Clone, Debug)]
pub struct EnsembleEstimate<T> {
    /// Per-cell mean of `counts / h^dim`.
    pub k1_mean: Vec<T>,
    pub k1_se: Vec<T>,
    /// Ordered distinct-pair density per cell pair, row-major.
    pub k2_mean: Vec<T>,
    pub k2_se: Vec<T>,
    pub replicas: usize,
    pub seed: u64,
    pub time: T,
}

/// First two empirical correlation functions of an ensemble snapshot at
/// time `t`, with standard errors across replicas.
pub fn estimate_correlations<T: Real>(
    grid: &TorusGrid<T>,
    states: &[ParticleState<T>],
    t: T,
    seed: u64,
) -> Result<EnsembleEstimate<T>> {
    if states.is_empty() {
        return Err(Error::precondition(
            "correlation estimate",
            "at least one replica",
            0,
        ));
    }
    let slack = T::of(1e-12) * (T::one() + t.abs());
    for s in states {
        if s.time + slack < t {
            return Err(Error::precondition(
                "correlation estimate",
                "replicas simulated to the query time",
                format!("replica clock {} < {}", s.time, t),
            ));
        }
    }
    let v = grid.n_cells();
    let w = grid.cell_measure();
    let w2 = w * w;
    let r = states.len();
    let mut k1_sum = vec![T::zero(); v];
    let mut k1_sq = vec![T::zero(); v];
    let mut k2_sum = vec![T::zero(); v * v];
    let mut k2_sq = vec![T::zero(); v * v];
    let mut counts = vec![T::zero(); v];
    let mut pair_counts = vec![T::zero(); v * v];
    for s in states {
        counts.iter_mut().for_each(|c| *c = T::zero());
        pair_counts.iter_mut().for_each(|c| *c = T::zero());
        let cells = s.cells(grid);
        for &c in &cells {
            counts[c] += T::one();
        }
        for (i, &ci) in cells.iter().enumerate() {
            for (j, &cj) in cells.iter().enumerate() {
                if i != j {
                    pair_counts[ci * v + cj] += T::one();
                }
            }
        }
        for c in 0..v {
            let est = counts[c] / w;
            k1_sum[c] += est;
            k1_sq[c] += est * est;
        }
        for cc in 0..v * v {
            let est = pair_counts[cc] / w2;
            k2_sum[cc] += est;
            k2_sq[cc] += est * est;
        }
    }
    let rr = T::of_usize(r);
    let moments = |sum: Vec<T>, sq: Vec<T>| {
        let mut mean = Vec::with_capacity(sum.len());
        let mut se = Vec::with_capacity(sum.len());
        for (s, q) in sum.into_iter().zip(sq) {
            let m = s / rr;
            mean.push(m);
            if r > 1 {
                let var = ((q / rr - m * m) * rr / (rr - T::one())).max(T::zero());
                se.push((var / rr).sqrt());
            } else {
                se.push(T::zero());
            }
        }
        (mean, se)
    };
    let (k1_mean, k1_se) = moments(k1_sum, k1_sq);
    let (k2_mean, k2_se) = moments(k2_sum, k2_sq);
    Ok(EnsembleEstimate {
        k1_mean,
        k1_se,
        k2_mean,
        k2_se,
        replicas: r,
        seed,
        time: t,
    })
}

/// Worst normalized flux imbalance between coarse pair-bins over an event
/// log: for a reversible stationary run, transitions A -> B and B -> A
/// are equidistributed, so `(F_AB - F_BA) / sqrt(F_AB + F_BA)` is an
/// asymptotically standard normal diagnostic. Bin pairs with fewer than 20
/// crossings are skipped as unresolved.
pub fn flux_imbalance_z<T: Real>(
    grid: &TorusGrid<T>,
    events: &[JumpEvent<T>],
    bins: usize,
) -> Result<T> {
    if bins < 2 || grid.cells_per_side() % bins != 0 {
        return Err(Error::config(
            "flux.bins",
            "must be >= 2 and divide the cells per side",
        ));
    }
    let per = grid.cells_per_side() / bins;
    // coarse label of a cell from its axis-0 coordinate
    let coarse = |cell: usize| (cell % grid.cells_per_side()) / per;
    let label = |a: usize, b: usize| {
        let (x, y) = (coarse(a), coarse(b));
        if x <= y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let mut flux: HashMap<((usize, usize), (usize, usize)), usize> = HashMap::new();
    for ev in events {
        let from = label(ev.from_cells.0, ev.from_cells.1);
        let to = label(ev.to_cells.0, ev.to_cells.1);
        if from != to {
            *flux.entry((from, to)).or_insert(0) += 1;
        }
    }
    let mut worst = T::zero();
    let mut seen = std::collections::HashSet::new();
    for &(from, to) in flux.keys() {
        let (p, q) = if from <= to { (from, to) } else { (to, from) };
        if !seen.insert((p, q)) {
            continue;
        }
        let fwd = *flux.get(&(p, q)).unwrap_or(&0);
        let bwd = *flux.get(&(q, p)).unwrap_or(&0);
        let total = fwd + bwd;
        if total < 20 {
            continue;
        }
        let z = (T::of_usize(fwd) - T::of_usize(bwd)).abs() / T::of_usize(total).sqrt();
        if z > worst {
            worst = z;
        }
    }
    Ok(worst)
}
