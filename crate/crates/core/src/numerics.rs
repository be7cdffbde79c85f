//! Dense vectors and matrices, stable reductions, and seeded randomness.
//!
//! All arithmetic is 64-bit and summations run strictly left to right, so a
//! fixed seed reproduces every downstream result bit for bit. Nothing here
//! aims at BLAS throughput; shapes stay desk-scale.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Dense real vector. Every element is finite by construction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Wraps raw data. Panics on non-finite elements.
    pub fn new(data: Vec<f64>) -> Self {
        assert!(
            data.iter().all(|x| x.is_finite()),
            "vector elements must be finite"
        );
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &Vector, c: f64) {
        assert_eq!(
            self.dim(),
            other.dim(),
            "add_scaled dimension mismatch: {} vs {}",
            self.dim(),
            other.dim()
        );
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl core::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl core::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    /// Builds from row-major data. Panics if the element count is off or any
    /// element is non-finite.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} != {rows}x{cols}",
            data.len()
        );
        assert!(
            data.iter().all(|x| x.is_finite()),
            "matrix elements must be finite"
        );
        Matrix { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
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

    /// `self * v`
    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(
            self.cols,
            v.dim(),
            "matvec dimension mismatch: {}x{} * {}",
            self.rows,
            self.cols,
            v.dim()
        );
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            *slot = acc;
        }
        Vector { data: out }
    }

    /// `self^T * v`
    pub fn tr_matvec(&self, v: &Vector) -> Vector {
        assert_eq!(
            self.rows,
            v.dim(),
            "tr_matvec dimension mismatch: {}x{} ^T * {}",
            self.rows,
            self.cols,
            v.dim()
        );
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let vr = v[r];
            for (slot, a) in out.iter_mut().zip(row.iter()) {
                *slot += vr * a;
            }
        }
        Vector { data: out }
    }

    /// `self += c * a b^T`
    pub fn add_scaled_outer(&mut self, a: &Vector, b: &Vector, c: f64) {
        assert_eq!(self.rows, a.dim(), "outer row mismatch");
        assert_eq!(self.cols, b.dim(), "outer col mismatch");
        for r in 0..self.rows {
            let ar = c * a[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, bv) in row.iter_mut().zip(b.iter()) {
                *slot += ar * bv;
            }
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!(self.rows, other.rows, "matrix row mismatch");
        assert_eq!(self.cols, other.cols, "matrix col mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Inner product. Panics on dimension mismatch.
pub fn dot(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(
        a.dim(),
        b.dim(),
        "dot dimension mismatch: {} vs {}",
        a.dim(),
        b.dim()
    );
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Euclidean norm.
pub fn norm(a: &Vector) -> f64 {
    math::sqrt(dot(a, a))
}

/// `a / ||a||`. A zero vector is a hard error: a zero-norm embedding means a
/// projector collapsed.
pub fn l2_normalize(a: &Vector) -> Result<Vector> {
    let n = norm(a);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut out = a.clone();
    out.scale(1.0 / n);
    Ok(out)
}

/// Squared Euclidean distance. For unit vectors this equals `2 - 2 dot`.
pub fn sq_euclid(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(
        a.dim(),
        b.dim(),
        "sq_euclid dimension mismatch: {} vs {}",
        a.dim(),
        b.dim()
    );
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// `log(sum_i exp(y_i))` in the shifted form, so `max(Y) <= lse(Y) <=
/// max(Y) + log n` holds even for scores around ±1000.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "log_sum_exp of an empty score set");
    let mut max = f64::NEG_INFINITY;
    for &s in scores {
        if s > max {
            max = s;
        }
    }
    let mut acc = 0.0;
    for &s in scores {
        acc += math::exp(s - max);
    }
    max + math::ln(acc)
}

/// `a b^T` as a fresh matrix.
pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    let mut m = Matrix::zeros(a.dim(), b.dim());
    m.add_scaled_outer(a, b, 1.0);
    m
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Counter-based pseudo-random generator.
///
/// The output at position `i` is a pure function of `(key, i)`, so named
/// substreams can be forked without consuming draws from the parent: adding a
/// consumer never perturbs the streams of existing ones.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            key: mix64(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Independent stream identified by `label`; does not advance `self`.
    pub fn substream(&self, label: &str) -> Rng {
        Rng {
            key: mix64(self.key ^ mix64(fnv1a(label.as_bytes()))),
            counter: 0,
        }
    }

    /// Indexed family of substreams, e.g. one per epoch or batch.
    pub fn substream_index(&self, label: &str, index: u64) -> Rng {
        let base = self.substream(label);
        Rng {
            key: mix64(base.key ^ mix64(index.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `[0, n)` via the widening-multiply map.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// One draw from `N(mean, std^2)` by Box–Muller (two uniforms per draw).
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        assert!(std >= 0.0, "normal std must be >= 0, got {std}");
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        // u1 in (0, 1] keeps the log finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = self.uniform();
        let r = math::sqrt(-2.0 * math::ln(u1));
        let z = r * math::cos(2.0 * core::f64::consts::PI * u2);
        mean + std * z
    }

    /// `n` draws from `N(mean, std^2)`.
    pub fn normal_vector(&mut self, n: usize, mean: f64, std: f64) -> Vector {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.normal(mean, std));
        }
        Vector::new(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Vector {
        Vector::new(data.to_vec())
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])), 0.0);
        assert_eq!(dot(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])), 2.0);
        assert_eq!(dot(&v(&[3.0, 4.0]), &v(&[4.0, 3.0])), 24.0);
    }

    #[test]
    #[should_panic(expected = "dot dimension mismatch: 2 vs 3")]
    fn dot_dim_mismatch_names_both_dims() {
        dot(&v(&[1.0, 2.0]), &v(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn l2_normalize_examples() {
        let n = l2_normalize(&v(&[3.0, 4.0])).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-15);
        assert!((n[1] - 0.8).abs() < 1e-15);

        let n = l2_normalize(&v(&[0.0, 5.0])).unwrap();
        assert_eq!(n.as_slice(), &[0.0, 1.0]);

        let n = l2_normalize(&v(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        for i in 0..4 {
            assert!((n[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_normalize_zero_vector_is_error() {
        assert_eq!(l2_normalize(&v(&[0.0, 0.0])), Err(Error::ZeroNorm));
    }

    #[test]
    fn l2_normalize_unit_and_idempotent() {
        let mut rng = Rng::new(7);
        for _ in 0..50 {
            let a = rng.normal_vector(8, 0.0, 2.0);
            let n1 = l2_normalize(&a).unwrap();
            assert!((norm(&n1) - 1.0).abs() < 1e-12);
            let n2 = l2_normalize(&n1).unwrap();
            for i in 0..8 {
                assert!((n1[i] - n2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sq_euclid_examples() {
        assert_eq!(sq_euclid(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])), 0.0);
        assert_eq!(sq_euclid(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])), 4.0);
        assert_eq!(sq_euclid(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])), 2.0);
    }

    #[test]
    fn sq_euclid_matches_dot_identity_on_unit_vectors() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let a = l2_normalize(&rng.normal_vector(5, 0.0, 1.0)).unwrap();
            let b = l2_normalize(&rng.normal_vector(5, 0.0, 1.0)).unwrap();
            let lhs = sq_euclid(&a, &b);
            let rhs = 2.0 - 2.0 * dot(&a, &b);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]) - core::f64::consts::LN_2).abs() < 1e-15);
        // Identity on singletons, bit-exact.
        assert_eq!(log_sum_exp(&[3.25]), 3.25);
        assert_eq!(log_sum_exp(&[-1234.5]), -1234.5);
        // Naive exp overflows here; the shifted form must not.
        let lse = log_sum_exp(&[1000.0, 1000.0]);
        assert!((lse - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_shift_invariance() {
        let mut rng = Rng::new(11);
        for _ in 0..200 {
            let n = 1 + rng.index(10);
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
            let c = rng.uniform_in(-100.0, 100.0);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            assert!((log_sum_exp(&shifted) - (log_sum_exp(&scores) + c)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_sandwich() {
        let mut rng = Rng::new(13);
        for _ in 0..200 {
            let n = 1 + rng.index(16);
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1000.0, 1000.0)).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = log_sum_exp(&scores);
            assert!(lse >= max - 1e-12);
            assert!(lse <= max + math::ln(n as f64) + 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "empty score set")]
    fn log_sum_exp_empty_is_hard_error() {
        log_sum_exp(&[]);
    }

    #[test]
    fn matvec_examples() {
        let ident = Matrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = v(&[2.5, -3.5]);
        assert_eq!(ident.matvec(&x), x);

        let zero = Matrix::zeros(2, 2);
        assert_eq!(zero.matvec(&x), v(&[0.0, 0.0]));

        let m = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.matvec(&v(&[1.0, 1.0])), v(&[3.0, 7.0]));
    }

    #[test]
    fn tr_matvec_matches_transpose() {
        let m = Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = v(&[1.0, -1.0]);
        // m^T y = [1-4, 2-5, 3-6]
        assert_eq!(m.tr_matvec(&y), v(&[-3.0, -3.0, -3.0]));
    }

    #[test]
    fn outer_hand_check() {
        let m = outer(&v(&[1.0, 2.0]), &v(&[3.0, 4.0, 5.0]));
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.row(0), &[3.0, 4.0, 5.0]);
        assert_eq!(m.row(1), &[6.0, 8.0, 10.0]);
    }

    #[test]
    #[should_panic(expected = "matvec dimension mismatch")]
    fn matvec_dim_mismatch_panics() {
        Matrix::zeros(2, 3).matvec(&v(&[1.0, 2.0]));
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_normal_degenerate_std_zero() {
        let mut rng = Rng::new(5);
        let out = rng.normal_vector(16, 2.5, 0.0);
        assert!(out.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn rng_normal_sample_mean() {
        let mut rng = Rng::new(42);
        let out = rng.normal_vector(10_000, 0.0, 1.0);
        let mean: f64 = out.iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05, "sample mean {mean} too far from 0");
    }

    #[test]
    fn rng_substreams_are_independent_of_parent_use() {
        let parent = Rng::new(9);
        let mut child_before = parent.substream("init");
        let mut parent2 = parent.clone();
        parent2.next_u64(); // consuming the parent must not move the child
        let mut child_after = parent2.substream("init");
        for _ in 0..100 {
            assert_eq!(child_before.next_u64(), child_after.next_u64());
        }

        let mut a = parent.substream("a");
        let mut b = parent.substream("b");
        assert_ne!(a.next_u64(), b.next_u64());

        let mut i0 = parent.substream_index("epoch", 0);
        let mut i1 = parent.substream_index("epoch", 1);
        assert_ne!(i0.next_u64(), i1.next_u64());
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut rng = Rng::new(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
