//! Dense row-major `f64` tensors.
//!
//! Every value moved between parties is a [`Tensor`]: shares, masks, triples,
//! activations and model parameters. Operations never broadcast, except for
//! [`Tensor::add_row`] (bias rows) and scalar operands of [`Tensor::mul`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} elements but {actual} were given")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {0:?} has a zero dimension")]
    ZeroDim(Vec<usize>),
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range for {len}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("malformed tensor encoding: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} elements]", self.shape, self.data.len())
        }
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl Tensor {
    /// Builds a tensor, validating the element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroDim(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        check_finite("new", &data)?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// A rank-0 tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// The same data viewed as a flat vector.
    pub fn flatten(&self) -> Self {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other, op)?;
        let data: Vec<f64> = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        check_finite(op, &data)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Element-wise product. A one-element operand on either side acts as a
    /// scalar.
    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        if other.data.len() == 1 && self.shape != other.shape {
            return self.scale(other.data[0]);
        }
        if self.data.len() == 1 && self.shape != other.shape {
            return other.scale(self.data[0]);
        }
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map_checked("scale", |v| v * factor)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    /// Applies `f` to every element; the caller guarantees finite output.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_checked(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let out = self.map(f);
        check_finite(op, &out.data)?;
        Ok(out)
    }

    /// Matrix product of an `m×k` and a `k×n` tensor.
    ///
    /// Each output element accumulates over `k` in ascending order, the same
    /// order as the textbook triple loop, so results are bit-reproducible.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        check_finite("matmul", &out)?;
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data,
        })
    }

    /// Adds a `1×n` (or length-`n`) row to every row of an `m×n` matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Self> {
        let (m, n) = self.require_matrix("add_row")?;
        if row.data.len() != n || row.rank() > 2 || (row.rank() == 2 && row.shape[0] != 1) {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: self.shape.clone(),
                right: row.shape.clone(),
            });
        }
        let mut data = self.data.clone();
        for i in 0..m {
            for (o, &b) in data[i * n..(i + 1) * n].iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        check_finite("add_row", &data)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Column sums of an `m×n` matrix, as a `1×n` row.
    pub fn sum_rows(&self) -> Result<Self> {
        let (m, n) = self.require_matrix("sum_rows")?;
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, &v) in out.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                *o += v;
            }
        }
        check_finite("sum_rows", &out)?;
        Ok(Tensor {
            shape: vec![1, n],
            data: out,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `count` consecutive rows starting at `start`, wrapping past the end.
    pub fn rows_wrapping(&self, start: usize, count: usize) -> Result<Self> {
        if self.shape.is_empty() || count == 0 {
            return Err(TensorError::Rank {
                op: "rows",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let n = self.shape[0];
        let width = self.data.len() / n;
        let mut data = Vec::with_capacity(count * width);
        for r in 0..count {
            let i = (start + r) % n;
            data.extend_from_slice(&self.data[i * width..(i + 1) * width]);
        }
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Tensor { shape, data })
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if self.shape.is_empty() || indices.is_empty() {
            return Err(TensorError::Rank {
                op: "select_rows",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let n = self.shape[0];
        let width = self.data.len() / n;
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= n {
                return Err(TensorError::OutOfRange {
                    op: "select_rows",
                    index: i,
                    len: n,
                });
            }
            data.extend_from_slice(&self.data[i * width..(i + 1) * width]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor { shape, data })
    }

    /// Index of the largest element in each row (first one on ties).
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let (m, n) = self.require_matrix("argmax_rows")?;
        Ok((0..m)
            .map(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Byte encoding: rank as `u64`, each dimension as `u64`, then the
    /// elements as IEEE-754 doubles, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_bytes(&mut out);
        out
    }

    pub fn encoded_len(&self) -> usize {
        8 + 8 * self.shape.len() + 8 * self.data.len()
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.shape.len() as u64).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<u64> {
            bytes
                .get(i * 8..i * 8 + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| TensorError::Decode(format!("truncated at word {i}")))
        };
        let rank = word(0)? as usize;
        if rank > 16 {
            return Err(TensorError::Decode(format!("rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        for i in 0..rank {
            shape.push(word(1 + i)? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::Decode("element count overflows".into()))?;
        let header = 8 * (1 + rank);
        if bytes.len() != header + 8 * count {
            return Err(TensorError::Decode(format!(
                "expected {} bytes for shape {shape:?}, got {}",
                header + 8 * count,
                bytes.len()
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data).map_err(|e| TensorError::Decode(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.get(i, p) * b.get(p, j);
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(vec![m, n], out).unwrap()
    }

    #[test]
    fn add_small() {
        let a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let b = Tensor::vector(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.add(&Tensor::zeros(&[2])).unwrap(), a);
    }

    #[test]
    fn add_matches_loop() {
        let mut rng = Rng::new(3);
        let a = rng.normal(&[3, 3]);
        let b = rng.normal(&[3, 3]);
        let sum = a.add(&b).unwrap();
        for i in 0..9 {
            assert_eq!(sum.data()[i], a.data()[i] + b.data()[i]);
        }
    }

    #[test]
    fn add_shape_mismatch_names_both_shapes() {
        let err = Tensor::zeros(&[2, 3]).add(&Tensor::zeros(&[3, 2])).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "add",
                left: vec![2, 3],
                right: vec![3, 2]
            }
        );
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[3, 2]"));
    }

    #[test]
    fn matmul_small_cases() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&a).unwrap(), a);
        let row = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let col = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(row.matmul(&col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = rng.normal(&[4, 5]);
        let b = rng.normal(&[5, 3]);
        let diff = a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)).unwrap();
        assert!(diff < 1e-12);
    }

    #[test]
    fn matmul_inner_mismatch() {
        let err = Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[2, 3])).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { op: "matmul", .. }));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::NAN]),
            Err(TensorError::NonFinite { .. })
        ));
        assert!(matches!(Tensor::new(vec![0, 2], vec![]), Err(TensorError::ZeroDim(_))));
    }

    #[test]
    fn overflow_is_reported() {
        let big = Tensor::filled(&[2], f64::MAX);
        assert!(matches!(big.add(&big), Err(TensorError::NonFinite { op: "add" })));
    }

    #[test]
    fn bias_and_column_sums() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![10.0, 20.0]]).unwrap();
        assert_eq!(m.add_row(&b).unwrap().data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(m.sum_rows().unwrap().data(), &[4.0, 6.0]);
        assert_eq!(m.transpose().unwrap().data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn wrapping_row_windows() {
        let m = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(m.rows_wrapping(2, 3).unwrap().data(), &[2.0, 0.0, 1.0]);
        assert_eq!(m.select_rows(&[2, 0]).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn byte_layout() {
        let t = Tensor::vector(vec![1.5]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[0..8], &1u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
        assert!(Tensor::from_bytes(&bytes[..20]).is_err());
        let s = Tensor::scalar(-2.0);
        assert_eq!(Tensor::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    fn bounded_tensor(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e3f64..1e3, len)
    }

    proptest! {
        #[test]
        fn addition_is_associative(a in bounded_tensor(12), b in bounded_tensor(12), c in bounded_tensor(12)) {
            let t = |v: Vec<f64>| Tensor::new(vec![3, 4], v).unwrap();
            let (a, b, c) = (t(a), t(b), t(c));
            let left = a.add(&b).unwrap().add(&c).unwrap();
            let right = a.add(&b.add(&c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-12);
        }

        #[test]
        fn matmul_agrees_with_triple_loop(m in 1usize..64, k in 1usize..64, n in 1usize..64, seed: u64) {
            let mut rng = Rng::new(seed);
            let a = rng.uniform(&[m, k], -1.0, 1.0);
            let b = rng.uniform(&[k, n], -1.0, 1.0);
            let fast = a.matmul(&b).unwrap();
            let slow = naive_matmul(&a, &b);
            for (x, y) in fast.data().iter().zip(slow.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }

        #[test]
        fn bytes_round_trip(shape in proptest::collection::vec(1usize..5, 0..4), seed: u64) {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape, Rng::new(seed).uniform(&[n], -1e9, 1e9).into_data()).unwrap();
            prop_assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
