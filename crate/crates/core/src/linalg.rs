//! Dense elimination over the two scalar types the decoders run on: `f64`
//! for actual data, and the Mersenne prime field `GF(2^61 - 1)` for
//! coefficient-generic structural simulation.
//!
//! Elimination is written once against [`Scalar`]; the right-hand side is
//! any [`Payload`] so the same routine solves for matrix blocks or for
//! nothing at all.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;

use crate::blockgrid::Block;

/// A pivot is zero when its magnitude is at most this fraction of the
/// largest entry originally in its column.
pub const PIVOT_REL_TOL: f64 = 1e-10;

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;

    fn inv(self) -> Self;

    /// Used for pivot selection; exact fields report 0 or 1.
    fn magnitude(self) -> f64;

    /// Whether `self` counts as zero relative to `scale`.
    fn negligible(self, scale: f64) -> bool;

    /// A factor bringing a value of the given magnitude to about one;
    /// exact fields return one.
    fn unit_scale(magnitude: f64) -> Self;

    fn is_zero(self) -> bool {
        self == Self::ZERO
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn inv(self) -> Self {
        1.0 / self
    }

    fn magnitude(self) -> f64 {
        self.abs()
    }

    fn negligible(self, scale: f64) -> bool {
        self.abs() <= PIVOT_REL_TOL * scale
    }

    fn unit_scale(magnitude: f64) -> Self {
        if magnitude > 0.0 && magnitude.is_finite() {
            1.0 / magnitude
        } else {
            1.0
        }
    }
}

const P61: u64 = (1 << 61) - 1;

/// Element of `GF(2^61 - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp61(u64);

impl Fp61 {
    pub const MODULUS: u64 = P61;

    pub fn new(v: u64) -> Self {
        Fp61(reduce(v as u128))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn random_nonzero<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Fp61(rng.random_range(1..P61))
    }

    fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Fp61(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

fn reduce(x: u128) -> u64 {
    let lo = (x & P61 as u128) as u64;
    let hi = (x >> 61) as u64;
    // hi < 2^67 / 2^61 fits; one more fold covers it
    let s = lo as u128 + hi as u128;
    let s = ((s & P61 as u128) + (s >> 61)) as u64;
    if s >= P61 {
        s - P61
    } else {
        s
    }
}

impl Add for Fp61 {
    type Output = Fp61;
    fn add(self, o: Fp61) -> Fp61 {
        let s = self.0 + o.0;
        Fp61(if s >= P61 { s - P61 } else { s })
    }
}

impl Sub for Fp61 {
    type Output = Fp61;
    fn sub(self, o: Fp61) -> Fp61 {
        Fp61(if self.0 >= o.0 { self.0 - o.0 } else { self.0 + P61 - o.0 })
    }
}

impl Mul for Fp61 {
    type Output = Fp61;
    fn mul(self, o: Fp61) -> Fp61 {
        Fp61(reduce(self.0 as u128 * o.0 as u128))
    }
}

impl Neg for Fp61 {
    type Output = Fp61;
    fn neg(self) -> Fp61 {
        Fp61(if self.0 == 0 { 0 } else { P61 - self.0 })
    }
}

impl Scalar for Fp61 {
    const ZERO: Self = Fp61(0);
    const ONE: Self = Fp61(1);

    fn inv(self) -> Self {
        debug_assert!(self.0 != 0);
        self.pow(P61 - 2)
    }

    fn magnitude(self) -> f64 {
        if self.0 == 0 {
            0.0
        } else {
            1.0
        }
    }

    fn negligible(self, _scale: f64) -> bool {
        self.0 == 0
    }

    fn unit_scale(_magnitude: f64) -> Self {
        Fp61(1)
    }
}

/// Right-hand-side values carried through elimination.
pub trait Payload<S: Scalar>: Clone + Send + Sync {
    /// The additive identity with the same shape as `self`.
    fn zeroed(&self) -> Self;
    /// `self += alpha * x`
    fn axpy(&mut self, alpha: S, x: &Self);
    fn scale(&mut self, alpha: S);
}

impl<S: Scalar> Payload<S> for () {
    fn zeroed(&self) -> Self {}
    fn axpy(&mut self, _alpha: S, _x: &Self) {}
    fn scale(&mut self, _alpha: S) {}
}

impl Payload<f64> for Block {
    fn zeroed(&self) -> Self {
        Block::zeros(self.nrows(), self.ncols())
    }

    fn axpy(&mut self, alpha: f64, x: &Self) {
        self.zip_apply(x, |a, b| *a += alpha * b);
    }

    fn scale(&mut self, alpha: f64) {
        *self *= alpha;
    }
}

/// Row-major dense matrix over a [`Scalar`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![S::ZERO; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Dense { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// `row[dst] += alpha * row[src]` for columns `from..`
    fn row_axpy(&mut self, dst: usize, src: usize, alpha: S, from: usize) {
        let c = self.cols;
        for j in from..c {
            let v = self.data[src * c + j];
            self.data[dst * c + j] = self.data[dst * c + j] + alpha * v;
        }
    }
}

/// Scales every row, then every column, to unit largest magnitude. Returns
/// the column factors: a solution `y` of the scaled system solves the
/// original one as `y_j * factor_j`.
pub fn equilibrate<S: Scalar, P: Payload<S>>(a: &mut Dense<S>, rhs: &mut [P]) -> Vec<S> {
    for i in 0..a.rows {
        let m = a.row(i).iter().fold(0.0f64, |m, x| m.max(x.magnitude()));
        let f = S::unit_scale(m);
        for j in 0..a.cols {
            a.data[i * a.cols + j] = a.data[i * a.cols + j] * f;
        }
        if let Some(r) = rhs.get_mut(i) {
            r.scale(f);
        }
    }
    (0..a.cols)
        .map(|j| {
            let m = (0..a.rows).fold(0.0f64, |m, i| m.max(a.data[i * a.cols + j].magnitude()));
            let f = S::unit_scale(m);
            for i in 0..a.rows {
                a.data[i * a.cols + j] = a.data[i * a.cols + j] * f;
            }
            f
        })
        .collect()
}

/// Reduced row echelon form produced by [`row_reduce`].
#[derive(Debug, Clone)]
pub struct Echelon {
    /// Pivot column of reduced row `i`, for `i < rank`.
    pub pivot_cols: Vec<usize>,
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivot_cols.len()
    }
}

/// Gauss-Jordan elimination with partial pivoting, applied in place to `a`
/// and to the right-hand side. Rows `0..rank` end up in reduced form.
pub fn row_reduce<S: Scalar, P: Payload<S>>(a: &mut Dense<S>, rhs: &mut [P]) -> Echelon {
    debug_assert!(rhs.is_empty() || rhs.len() == a.rows);
    let col_scale: Vec<f64> = (0..a.cols)
        .map(|j| (0..a.rows).map(|i| a.get(i, j).magnitude()).fold(0.0, f64::max))
        .collect();
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..a.cols {
        if rank == a.rows {
            break;
        }
        let mut best = rank;
        let mut best_mag = a.get(rank, col).magnitude();
        for i in rank + 1..a.rows {
            let mag = a.get(i, col).magnitude();
            if mag > best_mag {
                best = i;
                best_mag = mag;
            }
        }
        if a.get(best, col).negligible(col_scale[col]) {
            continue;
        }
        a.swap_rows(rank, best);
        if !rhs.is_empty() {
            rhs.swap(rank, best);
        }
        let inv = a.get(rank, col).inv();
        for j in col..a.cols {
            let v = a.get(rank, j);
            a.set(rank, j, v * inv);
        }
        if !rhs.is_empty() {
            rhs[rank].scale(inv);
        }
        for i in 0..a.rows {
            if i == rank {
                continue;
            }
            let factor = a.get(i, col);
            if factor.is_zero() {
                continue;
            }
            a.row_axpy(i, rank, -factor, col);
            if !rhs.is_empty() {
                let (pivot_rhs, target) = if i < rank {
                    let (lo, hi) = rhs.split_at_mut(rank);
                    (&hi[0], &mut lo[i])
                } else {
                    let (lo, hi) = rhs.split_at_mut(i);
                    (&lo[rank], &mut hi[0])
                };
                target.axpy(-factor, pivot_rhs);
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    Echelon { pivot_cols }
}

/// Basis of the right null space of a reduced matrix.
pub fn null_space<S: Scalar>(reduced: &Dense<S>, ech: &Echelon) -> Vec<Vec<S>> {
    let mut is_pivot = vec![false; reduced.ncols()];
    for &c in &ech.pivot_cols {
        is_pivot[c] = true;
    }
    (0..reduced.ncols())
        .filter(|c| !is_pivot[*c])
        .map(|free| {
            let mut z = vec![S::ZERO; reduced.ncols()];
            z[free] = S::ONE;
            for (r, &pc) in ech.pivot_cols.iter().enumerate() {
                z[pc] = -reduced.get(r, free);
            }
            z
        })
        .collect()
}

/// Rank of `a` (consumed).
pub fn rank<S: Scalar>(mut a: Dense<S>) -> usize {
    row_reduce::<S, ()>(&mut a, &mut []).rank()
}

/// Inverse of a square matrix, or `None` when singular.
pub fn inverse<S: Scalar>(a: &Dense<S>) -> Option<Dense<S>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut aug = Dense::from_fn(n, 2 * n, |i, j| {
        if j < n {
            a.get(i, j)
        } else if j - n == i {
            S::ONE
        } else {
            S::ZERO
        }
    });
    // only the left half decides the pivots
    let col_scale: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a.get(i, j).magnitude()).fold(0.0, f64::max))
        .collect();
    for col in 0..n {
        let best = (col..n)
            .max_by(|&x, &y| aug.get(x, col).magnitude().total_cmp(&aug.get(y, col).magnitude()))
            .unwrap();
        if aug.get(best, col).negligible(col_scale[col]) {
            return None;
        }
        aug.swap_rows(col, best);
        let inv = aug.get(col, col).inv();
        for j in 0..2 * n {
            let v = aug.get(col, j);
            aug.set(col, j, v * inv);
        }
        for i in 0..n {
            if i != col {
                let f = aug.get(i, col);
                if !f.is_zero() {
                    aug.row_axpy(i, col, -f, 0);
                }
            }
        }
    }
    Some(Dense::from_fn(n, n, |i, j| aug.get(i, j + n)))
}
