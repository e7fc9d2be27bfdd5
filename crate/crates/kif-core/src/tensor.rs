use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Everything in the toolkit is rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: F) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {:?} wants {} elements, got {}", shape, n, data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<F>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Number of rows when viewed as a matrix (rank-1 tensors count as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 0,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    /// Matrix product, `self` (m x k) by `b` (k x n).
    pub fn matmul(&self, b: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = (self.rows(), self.cols());
        let (kb, n) = (b.rows(), b.cols());
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: {:?} x {:?}", self.shape, b.shape),
            ));
        }
        let mut out = Tensor::zeros(&[m, n]);
        // i-k-j order: inner loop runs over contiguous rows of b and out.
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (kk, &a_ik) in a_row.iter().enumerate() {
                if a_ik == F::zero() {
                    continue;
                }
                let b_row = b.row(kk);
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ik * bv;
                }
            }
        }
        Ok(out)
    }

    /// `self` (m x k) by `b`ᵀ where `b` is (n x k). Avoids materializing transposes.
    pub fn matmul_transb(&self, b: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = (self.rows(), self.cols());
        let (n, kb) = (b.rows(), b.cols());
        if k != kb {
            return Err(Error::shape(
                "matmul_transb",
                format!("inner dims differ: {:?} x {:?}ᵀ", self.shape, b.shape),
            ));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a_row, b.row(j));
            }
        }
        Ok(out)
    }

    /// `self`ᵀ by `b`, where `self` is (k x m) and `b` is (k x n).
    pub fn transa_matmul(&self, b: &Tensor<F>) -> Result<Tensor<F>> {
        let (k, m) = (self.rows(), self.cols());
        let (kb, n) = (b.rows(), b.cols());
        if k != kb {
            return Err(Error::shape(
                "transa_matmul",
                format!("outer dims differ: {:?}ᵀ x {:?}", self.shape, b.shape),
            ));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for kk in 0..k {
            let a_row = self.row(kk);
            let b_row = b.row(kk);
            for (i, &a_ki) in a_row.iter().enumerate() {
                if a_ki == F::zero() {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ki * bv;
                }
            }
        }
        Ok(out)
    }

    pub fn transposed(&self) -> Tensor<F> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, op: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite values after {op}")))
        }
    }

    pub fn widen(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x.as_f64()).collect(),
        }
    }
}

/// Plain dot product of two equal-length slices.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x` over slices.
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, &xv) in y.iter_mut().zip(x.iter()) {
        *yv += alpha * xv;
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn identity(n: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.set(i, i, 1.0);
        }
        t
    }

    // Independent oracle: elementwise triple loop.
    fn matmul_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.at(i, kk) * b.at(kk, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tensor(&mut rng, &[3, 3]);
        let out = identity(3).matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_tensor(&mut rng, &[4, 3]);
        let z = Tensor::zeros(&[3, 2]);
        let out = a.matmul(&z).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_tensor(&mut rng, &[4, 3]);
        let b = random_tensor(&mut rng, &[3, 2]);
        let got = a.matmul(&b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            assert!((g - w).abs() < 1e-12, "got {g}, want {w}");
        }
    }

    #[test]
    fn matmul_dim_mismatch_is_shape_error() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        assert!(matches!(
            a.matmul(&b),
            Err(crate::error::Error::Shape { .. })
        ));
    }

    #[test]
    fn transb_and_transa_agree_with_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_tensor(&mut rng, &[5, 4]);
        let b = random_tensor(&mut rng, &[3, 4]);
        let got = a.matmul_transb(&b).unwrap();
        let want = matmul_oracle(&a, &b.transposed());
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            assert!((g - w).abs() < 1e-12);
        }
        let c = random_tensor(&mut rng, &[5, 6]);
        let got = a.transa_matmul(&c).unwrap();
        let want = matmul_oracle(&a.transposed(), &c);
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn generic_over_f32_too() {
        let a = Tensor::<f32>::filled(&[2, 2], 2.0);
        let b = Tensor::<f32>::filled(&[2, 2], 0.5);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[2.0f32, 2.0, 2.0, 2.0]);
    }
}
