use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform periodic grid on the torus `[0, side)^dim` with `m` cells per axis.
///
/// Cells are addressed by a single flat index in `0..m^dim` (axis 0 least
/// significant). Every integral in the crate is a midpoint sum over cell
/// centers weighted by `cell_measure`, so the grid is the ground truth model,
/// not an approximation layer: operator identities that hold in the continuum
/// hold exactly (to rounding) in this discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid<T> {
    dim: usize,
    m: usize,
    side: T,
}

impl<T: Real> TorusGrid<T> {
    pub fn new(dim: usize, m: usize, side: T) -> Result<Self> {
        if dim == 0 || m == 0 {
            return Err(Error::config("grid", "dim and cells per side must be positive"));
        }
        if !(side > T::zero()) {
            return Err(Error::config("grid.side", "side length must be positive"));
        }
        // Level tensors are dense in (m^dim)^n entries; keep the base small.
        let cells = (m as u128).pow(dim as u32);
        if cells > 4096 {
            return Err(Error::config("grid", "m^dim above 4096 is not supported"));
        }
        Ok(TorusGrid { dim, m, side })
    }

    /// One-dimensional torus of unit length, the default elsewhere.
    pub fn line(m: usize) -> Result<Self> {
        TorusGrid::new(1, m, T::one())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.m
    }

    pub fn side(&self) -> T {
        self.side
    }

    /// Total number of cells `m^dim`.
    pub fn n_cells(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// Mesh width per axis.
    pub fn h(&self) -> T {
        self.side / T::of_usize(self.m)
    }

    /// Midpoint quadrature weight `h^dim` of a single cell.
    pub fn cell_measure(&self) -> T {
        self.h().powi(self.dim as i32)
    }

    /// Quadrature weight of an `n`-cell tuple, `h^(dim*n)`.
    pub fn tuple_measure(&self, n: usize) -> T {
        self.cell_measure().powi(n as i32)
    }

    pub fn axes(&self, cell: usize) -> Vec<usize> {
        debug_assert!(cell < self.n_cells());
        let mut rest = cell;
        (0..self.dim)
            .map(|_| {
                let a = rest % self.m;
                rest /= self.m;
                a
            })
            .collect()
    }

    pub fn from_axes(&self, axes: &[usize]) -> usize {
        debug_assert_eq!(axes.len(), self.dim);
        axes.iter().rev().fold(0, |acc, &a| acc * self.m + a)
    }

    /// Center coordinates of a cell.
    pub fn center(&self, cell: usize) -> Vec<T> {
        let h = self.h();
        self.axes(cell)
            .into_iter()
            .map(|a| (T::of_usize(a) + T::of(0.5)) * h)
            .collect()
    }

    /// Cell containing a point (coordinates are wrapped onto the torus).
    pub fn locate(&self, x: &[T]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        let h = self.h();
        let axes: Vec<usize> = x
            .iter()
            .map(|&xi| {
                let mut w = xi - (xi / self.side).floor() * self.side;
                if w < T::zero() {
                    w += self.side;
                }
                let mut a = (w / h).floor().to_usize().unwrap_or(0);
                if a >= self.m {
                    a = self.m - 1;
                }
                a
            })
            .collect();
        self.from_axes(&axes)
    }

    /// Displacement cell `a - b` with per-axis wrap-around. Translation
    /// invariant profiles are tabulated against this index.
    pub fn diff(&self, a: usize, b: usize) -> usize {
        let (mut out, mut stride) = (0usize, 1usize);
        let (mut ra, mut rb) = (a, b);
        for _ in 0..self.dim {
            let da = ra % self.m;
            let db = rb % self.m;
            out += ((da + self.m - db) % self.m) * stride;
            stride *= self.m;
            ra /= self.m;
            rb /= self.m;
        }
        out
    }

    /// Displacement negation, `neg(diff(a, b)) == diff(b, a)`.
    pub fn neg(&self, cell: usize) -> usize {
        let (mut out, mut stride) = (0usize, 1usize);
        let mut r = cell;
        for _ in 0..self.dim {
            let d = r % self.m;
            out += ((self.m - d) % self.m) * stride;
            stride *= self.m;
            r /= self.m;
        }
        out
    }

    /// Midpoint-rule integral of a grid function.
    pub fn integral(&self, f: &[T]) -> T {
        debug_assert_eq!(f.len(), self.n_cells());
        let s: T = f.iter().copied().sum();
        s * self.cell_measure()
    }

    /// Circular convolution `(f * g)[z] = sum_u f[u] g[z - u] h^dim`, the
    /// discrete counterpart of the continuum convolution on the torus.
    pub fn convolve(&self, f: &[T], g: &[T]) -> Vec<T> {
        let v = self.n_cells();
        debug_assert_eq!(f.len(), v);
        debug_assert_eq!(g.len(), v);
        let w = self.cell_measure();
        (0..v)
            .map(|z| {
                let mut acc = T::zero();
                for u in 0..v {
                    acc += f[u] * g[self.diff(z, u)];
                }
                acc * w
            })
            .collect()
    }

    /// Reflected profile `f(-x)`.
    pub fn reflect(&self, f: &[T]) -> Vec<T> {
        (0..self.n_cells()).map(|z| f[self.neg(z)]).collect()
    }

    /// Scale so the midpoint-rule integral is one.
    pub fn normalized(&self, f: &[T]) -> Result<Vec<T>> {
        let mass = self.integral(f);
        if !(mass > T::zero()) {
            return Err(Error::precondition(
                "profile normalization",
                "positive total mass",
                mass.dbl(),
            ));
        }
        Ok(f.iter().map(|&x| x / mass).collect())
    }

    pub fn same_as(&self, other: &Self, context: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { context })
        }
    }
}

/// A finite configuration: a set of distinct cells, kept sorted.
///
/// Configurations index the combinatorial layer (K-transform and its
/// inverse); tensors index the analytic layer. Points of a configuration are
/// distinct by definition, hence the distinctness requirement here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteConfig {
    cells: Vec<usize>,
}

impl FiniteConfig {
    pub fn new(mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::precondition(
                "finite configuration",
                "pairwise distinct cells",
                "repeated cell",
            ));
        }
        Ok(FiniteConfig { cells })
    }

    pub fn empty() -> Self {
        FiniteConfig { cells: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Sub-configuration selected by a bitmask over `self.cells`.
    pub fn subset(&self, mask: usize) -> FiniteConfig {
        let cells = self
            .cells
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &c)| c)
            .collect();
        FiniteConfig { cells }
    }
}
