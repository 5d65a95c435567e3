use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::scalar::Real;

/// Dense symmetric tensor holding the level-`n` component of a hierarchy
/// object: one value per `n`-tuple of cells, flat-indexed with slot 0 least
/// significant. Level 0 is a single scalar entry.
///
/// Symmetry is a maintained invariant, not an enforced storage format: the
/// full `v^n` table is stored and producers either write symmetric data or
/// call [`LevelTensor::symmetrize`]. The redundancy keeps every operator loop
/// a plain stride walk.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTensor<T> {
    n: usize,
    v: usize,
    values: Vec<T>,
}

pub(crate) fn pow_usize(base: usize, exp: usize) -> usize {
    base.checked_pow(exp as u32).expect("tensor size fits usize")
}

impl<T: Real> LevelTensor<T> {
    pub fn zeros(grid: &TorusGrid<T>, n: usize) -> Self {
        let v = grid.n_cells();
        LevelTensor {
            n,
            v,
            values: vec![T::zero(); pow_usize(v, n)],
        }
    }

    pub fn scalar(value: T) -> Self {
        LevelTensor {
            n: 0,
            v: 1,
            values: vec![value],
        }
    }

    /// Build from a function of the cell tuple. The function is evaluated on
    /// every ordered tuple; it is the caller's business to pass a symmetric one.
    pub fn from_fn(grid: &TorusGrid<T>, n: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let mut t = LevelTensor::zeros(grid, n);
        let mut cells = vec![0usize; n];
        for flat in 0..t.values.len() {
            t.values[flat] = f(&cells);
            advance(&mut cells, t.v);
            let _ = flat;
        }
        t
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> usize {
        self.v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn flat(&self, cells: &[usize]) -> usize {
        debug_assert_eq!(cells.len(), self.n);
        cells.iter().rev().fold(0, |acc, &c| {
            debug_assert!(c < self.v);
            acc * self.v + c
        })
    }

    pub fn unflat(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        (0..self.n)
            .map(|_| {
                let c = rest % self.v;
                rest /= self.v;
                c
            })
            .collect()
    }

    pub fn get(&self, cells: &[usize]) -> T {
        self.values[self.flat(cells)]
    }

    pub fn set(&mut self, cells: &[usize], value: T) {
        let i = self.flat(cells);
        self.values[i] = value;
    }

    /// Replace the tensor by its symmetrization (average over slot
    /// permutations). Levels live in the single digits, so the permutation
    /// group is enumerated directly.
    pub fn symmetrize(&mut self) {
        if self.n < 2 {
            return;
        }
        let perms = permutations(self.n);
        let inv_count = T::one() / T::of_usize(perms.len());
        let mut out = vec![T::zero(); self.values.len()];
        let mut cells = vec![0usize; self.n];
        let mut image = vec![0usize; self.n];
        for flat in 0..self.values.len() {
            let mut acc = T::zero();
            for p in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    image[slot] = cells[src];
                }
                acc += self.values[self.flat(&image)];
            }
            out[flat] = acc * inv_count;
            advance(&mut cells, self.v);
        }
        self.values = out;
    }

    pub fn max_symmetry_defect(&self) -> T {
        if self.n < 2 {
            return T::zero();
        }
        let perms = permutations(self.n);
        let mut worst = T::zero();
        let mut cells = vec![0usize; self.n];
        let mut image = vec![0usize; self.n];
        for flat in 0..self.values.len() {
            for p in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    image[slot] = cells[src];
                }
                let d = (self.values[flat] - self.values[self.flat(&image)]).abs();
                if d > worst {
                    worst = d;
                }
            }
            advance(&mut cells, self.v);
        }
        worst
    }

    /// L1 norm with midpoint quadrature weights, `sum |G| h^(dim*n)`.
    pub fn norm_x(&self, grid: &TorusGrid<T>) -> T {
        let s: T = self.values.iter().map(|x| x.abs()).sum();
        s * grid.tuple_measure(self.n)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
    }

    /// Midpoint-rule integral over all slots.
    pub fn integral(&self, grid: &TorusGrid<T>) -> T {
        let s: T = self.values.iter().copied().sum();
        s * grid.tuple_measure(self.n)
    }

    pub fn scale(&mut self, s: T) {
        for x in &mut self.values {
            *x *= s;
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<()> {
        if self.n != other.n || self.v != other.v {
            return Err(Error::GridMismatch { context: "tensor axpy" });
        }
        for (x, &y) in self.values.iter_mut().zip(&other.values) {
            *x += s * y;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Advance an odometer of `cells.len()` digits in base `v`.
pub(crate) fn advance(cells: &mut [usize], v: usize) {
    for c in cells.iter_mut() {
        *c += 1;
        if *c < v {
            return;
        }
        *c = 0;
    }
}

/// All permutations of `0..n` (n <= 8).
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    assert!(n <= 8, "permutation enumeration is for small levels only");
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permute(&mut cur, n, &mut out);
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}
