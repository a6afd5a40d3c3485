//! Dense double-precision vectors and matrices, plus the deterministic RNG.
//!
//! Vectors are row vectors. [`matvec`] computes `v·M`, so a vector of length
//! `rows` maps to one of length `cols`. Layer weights (see [`crate::network`])
//! are stored as `(outputs × inputs)`, which makes the column sums of a weight
//! matrix the per-input L1 gains; a layer evaluates `z·Wᵀ` through
//! [`Matrix::apply`] and back-propagates through [`matvec`].

use std::ops::Deref;

use crate::error::{Error, Result};

/// A dense vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite vector entry at index {i}")));
        }
        Ok(Self { data })
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    /// Wraps a buffer produced by finite arithmetic on finite operands.
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_len(self.len(), other.len(), "dot")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

/// A dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite matrix entry at ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::shape(format!("ragged matrix: row {r} has wrong length")));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// # Panics
    /// If `value` is not finite or the index is out of bounds.
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        assert!(value.is_finite(), "matrix entries must be finite");
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    /// Column-convention product `M·x` (equivalently the row-vector product
    /// `x·Mᵀ`). Hot path: panics on a length mismatch.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "apply: input length");
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// Row-vector product `g·M` (equivalently `Mᵀ·g`). Hot path: panics on a
    /// length mismatch.
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.rows, "apply_transpose: input length");
        let mut out = vec![0.0; self.cols];
        for (row, &gr) in self.data.chunks_exact(self.cols).zip(g) {
            if gr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += gr * w;
            }
        }
        out
    }

    /// Sum of absolute entries in each column.
    pub fn column_abs_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (s, w) in sums.iter_mut().zip(row) {
                *s += w.abs();
            }
        }
        sums
    }

    /// Sum of absolute entries in each row.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().map(|w| w.abs()).sum())
            .collect()
    }
}

/// Row-vector product `v·m`: `out[k] = Σ_j v[j]·m[j][k]`.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if v.len() != m.rows() {
        return Err(Error::shape(format!(
            "matvec: vector of length {} against {}x{} matrix",
            v.len(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(Vector::from_raw(m.apply_transpose(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

pub fn elementwise(op: ElementwiseOp, a: &Vector, b: &Vector) -> Result<Vector> {
    check_len(a.len(), b.len(), "elementwise")?;
    let f: fn(f64, f64) -> f64 = match op {
        ElementwiseOp::Add => |x, y| x + y,
        ElementwiseOp::Sub => |x, y| x - y,
        ElementwiseOp::Mul => |x, y| x * y,
    };
    Vector::new(a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect())
}

pub fn scale(a: &Vector, s: f64) -> Result<Vector> {
    Vector::new(a.iter().map(|x| x * s).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
///
/// Draw `i` (1-based) is `mix64(seed + i·0x9e3779b97f4a7c15)` with wrapping
/// arithmetic, where `mix64` is the SplitMix64 finalizer. The stream depends
/// only on `(seed, counter)`, so it is identical on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent substream keyed by `stream`; does not advance `self`.
    pub fn substream(&self, stream: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`. Caller guarantees `lo < hi`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        let x = lo + (hi - lo) * self.uniform();
        if x >= hi {
            hi.next_down()
        } else {
            x
        }
    }

    /// Standard normal draw (Box-Muller, one value per two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased integer in `[0, n)`.
    ///
    /// # Panics
    /// If `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// `n` uniform draws from `[lo, hi)`.
pub fn rand_uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Result<Vector> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Range(format!("need finite lo < hi, got [{lo}, {hi})")));
    }
    Ok(Vector::from_raw((0..n).map(|_| rng.uniform_in(lo, hi)).collect()))
}
