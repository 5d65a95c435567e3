//! Minimal dense linear algebra: just enough for the matrix-exponential
//! oracle and small circulant solves. Sizes stay in the low thousands, so
//! naive O(n^3) kernels are adequate and keep the dependency set flat.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Mat<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, a: vec![T::zero(); n * n] }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.a[i * self.n + j]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.a[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).map(|(&a, &b)| a * b).sum()
            })
            .collect()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik == T::zero() {
                    continue;
                }
                let rrow = &rhs.a[k * n..(k + 1) * n];
                let orow = &mut out.a[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * rrow[j];
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, s: T, rhs: &Self) {
        assert_eq!(self.n, rhs.n);
        for (x, &y) in self.a.iter_mut().zip(&rhs.a) {
            *x += s * y;
        }
    }

    pub fn scale(&mut self, s: T) {
        for x in &mut self.a {
            *x *= s;
        }
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> T {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.a[i * n + j].abs()).sum())
            .fold(T::zero(), |m: T, s: T| if s > m { s } else { m })
    }

    /// Solve `self * X = B` in place of `B` via LU with partial pivoting.
    pub fn solve_into(mut self, b: &mut Mat<T>) -> Result<()> {
        assert_eq!(self.n, b.n);
        let n = self.n;
        for col in 0..n {
            let mut piv = col;
            let mut best = self.a[col * n + col].abs();
            for r in col + 1..n {
                let v = self.a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() {
                return Err(Error::NonFinite { context: "singular matrix in LU solve".into() });
            }
            if piv != col {
                for j in 0..n {
                    self.a.swap(col * n + j, piv * n + j);
                    b.a.swap(col * n + j, piv * n + j);
                }
            }
            let d = self.a[col * n + col];
            for r in col + 1..n {
                let f = self.a[r * n + col] / d;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    let v = self.a[col * n + j];
                    self.a[r * n + j] -= f * v;
                }
                for j in 0..n {
                    let v = b.a[col * n + j];
                    b.a[r * n + j] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = self.a[col * n + col];
            for j in 0..n {
                b.a[col * n + j] /= d;
            }
            for r in 0..col {
                let f = self.a[r * n + col];
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let v = b.a[col * n + j];
                    b.a[r * n + j] -= f * v;
                }
            }
        }
        Ok(())
    }

    pub fn solve_vec(&self, rhs: &[T]) -> Result<Vec<T>> {
        assert_eq!(rhs.len(), self.n);
        let mut b = Mat::zeros(self.n);
        for i in 0..self.n {
            b.a[i * self.n] = rhs[i];
        }
        self.clone().solve_into(&mut b)?;
        Ok((0..self.n).map(|i| b.a[i * self.n]).collect())
    }

    /// Matrix exponential by scaling and squaring with the degree-13 Pade
    /// approximant. Accuracy is limited by the scalar's precision; the
    /// acceptance oracles use it with `f64`.
    pub fn expm(&self) -> Mat<T> {
        let n = self.n;
        let theta13 = 5.371920351148152;
        let norm = self.one_norm().dbl();
        let s = if norm > theta13 {
            (norm / theta13).log2().ceil().max(0.0) as u32
        } else {
            0
        };
        let mut a = self.clone();
        a.scale(T::of(0.5f64.powi(s as i32)));

        const B: [f64; 14] = [
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ];

        let a2 = a.matmul(&a);
        let a4 = a2.matmul(&a2);
        let a6 = a2.matmul(&a4);

        // u_odd = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
        let mut w1 = Mat::zeros(n);
        w1.add_scaled(T::of(B[13]), &a6);
        w1.add_scaled(T::of(B[11]), &a4);
        w1.add_scaled(T::of(B[9]), &a2);
        let mut w = a6.matmul(&w1);
        w.add_scaled(T::of(B[7]), &a6);
        w.add_scaled(T::of(B[5]), &a4);
        w.add_scaled(T::of(B[3]), &a2);
        w.add_scaled(T::of(B[1]), &Mat::eye(n));
        let u = a.matmul(&w);

        // v_even = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
        let mut z1 = Mat::zeros(n);
        z1.add_scaled(T::of(B[12]), &a6);
        z1.add_scaled(T::of(B[10]), &a4);
        z1.add_scaled(T::of(B[8]), &a2);
        let mut v = a6.matmul(&z1);
        v.add_scaled(T::of(B[6]), &a6);
        v.add_scaled(T::of(B[4]), &a4);
        v.add_scaled(T::of(B[2]), &a2);
        v.add_scaled(T::of(B[0]), &Mat::eye(n));

        // r = (v - u)^{-1} (v + u)
        let mut denom = v.clone();
        denom.add_scaled(-T::one(), &u);
        let mut numer = v;
        numer.add_scaled(T::one(), &u);
        denom
            .solve_into(&mut numer)
            .expect("Pade denominator is nonsingular for scaled input");
        let mut r = numer;
        for _ in 0..s {
            r = r.matmul(&r);
        }
        r
    }
}
