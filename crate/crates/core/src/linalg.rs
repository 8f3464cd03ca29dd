//! Small dense matrices and a cyclic Jacobi eigensolver for symmetric input.
//!
//! Everything here is sized for the K×K Gram matrices of K-shot key
//! embeddings (K rarely above 16), so the routines favour accuracy and
//! determinism over asymptotic speed.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds from row-major storage. Rejects wrong lengths and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn from_columns<V: AsRef<[T]>>(columns: &[V]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    context: "matrix column",
                    expected: rows,
                    got: c.len(),
                });
            }
            for (i, &x) in c.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite("matrix column"));
                }
                m.data[i * cols + j] = x;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · x`.
    pub fn transpose_matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "transpose_matvec",
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                got: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// `VᵀV` for a matrix whose columns are the vectors of interest.
///
/// This is the K×K dual of `VVᵀ`; both share their nonzero spectrum.
pub fn gram<T: Scalar>(v: &Matrix<T>) -> Result<Matrix<T>> {
    if !v.as_slice().iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("gram input"));
    }
    let cols: Vec<Vec<T>> = (0..v.cols()).map(|j| v.column(j)).collect();
    Ok(gram_of_columns(&cols))
}

/// Gram matrix of a list of equal-length vectors, `G[i][j] = ⟨c_i, c_j⟩`.
pub(crate) fn gram_of_columns<T: Scalar, V: AsRef<[T]>>(cols: &[V]) -> Matrix<T> {
    let k = cols.len();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let d = dot(cols[i].as_ref(), cols[j].as_ref());
            g.set(i, j, d);
            g.set(j, i, d);
        }
    }
    g
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult<T> {
    pub eigenvalues: Vec<T>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> EigenResult<T> {
    pub fn eigenvector(&self, i: usize) -> Vec<T> {
        self.eigenvectors.column(i)
    }
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Stops once the off-diagonal Frobenius mass drops below
/// `jacobi_tolerance · ‖A‖_F`. Each eigenvector is sign-canonical: its
/// largest-magnitude entry (lowest index on ties) is positive.
pub fn sym_eig<T: Scalar>(a: &Matrix<T>) -> Result<EigenResult<T>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.as_slice().iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let scale = a.frobenius_norm();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (a.get(i, j) - a.get(j, i)).abs();
            if gap > T::symmetry_tolerance() * scale.max(T::one()) {
                return Err(Error::NonSymmetric {
                    i,
                    j,
                    gap: gap.as_f64(),
                });
            }
        }
    }

    // Work on the symmetrized copy so round-off in the input cannot bias rotations.
    let mut m = a.clone();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a.get(i, j) + a.get(j, i)) * half;
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let mut v = Matrix::identity(n);
    let threshold = T::jacobi_tolerance() * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > threshold {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut pairs: Vec<(T, Vec<T>)> = (0..n)
        .map(|i| {
            let mut col = v.column(i);
            canonicalize_sign(&mut col);
            (m.get(i, i), col)
        })
        .collect();
    // Stable sort: ties keep rotation order.
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite eigenvalues"));

    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let columns: Vec<Vec<T>> = pairs.into_iter().map(|p| p.1).collect();
    let eigenvectors = if n == 0 {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_columns(&columns)?
    };
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let x = m.get(i, j);
                s += x * x;
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `m[p][q]`, accumulated into `v`.
fn rotate<T: Scalar>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == T::zero() {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let two = T::lit(2.0);
    let theta = (aqq - app) / (two * apq);
    let t = {
        let denom = theta.abs() + (T::one() + theta * theta).sqrt();
        let t = T::one() / denom;
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, T::zero());
    m.set(q, p, T::zero());
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn canonicalize_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_row_major(rows, cols, data).unwrap()
    }

    fn check_eigen(a: &Matrix<f64>, eig: &EigenResult<f64>) {
        let n = a.rows();
        let w = &eig.eigenvectors;
        let wtw = w.transpose().matmul(w).unwrap();
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((wtw.get(i, j) - e).abs() <= 1e-10);
            }
        }
        let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0).abs();
        for i in 0..n {
            let wi = eig.eigenvector(i);
            let aw = a.matvec(&wi).unwrap();
            let r: f64 = aw
                .iter()
                .zip(&wi)
                .map(|(x, y)| (x - eig.eigenvalues[i] * y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r <= 1e-8 * lmax.max(1.0), "residual {r}");
        }
        for pair in eig.eigenvalues.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
    }

    #[test]
    fn identity_2x2() {
        let eig = sym_eig(&Matrix::<f64>::identity(2)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0]);
        check_eigen(&Matrix::identity(2), &eig);
    }

    #[test]
    fn diagonal_2x2() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.0, 1.0]);
        assert_eq!(eig.eigenvector(0), vec![0.0, 1.0]);
        assert_eq!(eig.eigenvector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn closed_form_2x2() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.eigenvalues[1], 1.0, epsilon = 1e-14);
        let r = 0.5f64.sqrt();
        let w0 = eig.eigenvector(0);
        let w1 = eig.eigenvector(1);
        assert_abs_diff_eq!(w0[0], r, epsilon = 1e-14);
        assert_abs_diff_eq!(w0[1], r, epsilon = 1e-14);
        // (1,-1)/sqrt2 with tie on magnitude: lowest index wins, so first entry positive.
        assert_abs_diff_eq!(w1[0].abs(), r, epsilon = 1e-14);
        assert_abs_diff_eq!(w1[0] + w1[1], 0.0, epsilon = 1e-14);
        check_eigen(&a, &eig);
    }

    #[test]
    fn rejects_bad_input() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(&a), Err(Error::NonSquare { .. })));
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(Error::NonSymmetric { .. })));
        let mut a = Matrix::<f64>::identity(2);
        a.set(0, 0, f64::NAN);
        assert!(matches!(sym_eig(&a), Err(Error::NonFinite(_))));
        assert!(Matrix::from_row_major(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn random_gram_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let k = 1 + trial % 8;
            let v = random_matrix(&mut rng, 10, k);
            let a = gram(&v).unwrap();
            let eig = sym_eig(&a).unwrap();
            check_eigen(&a, &eig);
            let trace: f64 = (0..k).map(|i| a.get(i, i)).sum();
            let sum: f64 = eig.eigenvalues.iter().sum();
            assert!((trace - sum).abs() <= 1e-8 * trace.abs().max(1.0));
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));
            // reconstruction
            let w = &eig.eigenvectors;
            let mut lam = Matrix::zeros(k, k);
            for i in 0..k {
                lam.set(i, i, eig.eigenvalues[i]);
            }
            let recon = w.matmul(&lam).unwrap().matmul(&w.transpose()).unwrap();
            let mut diff = 0.0;
            for i in 0..k {
                for j in 0..k {
                    diff += (recon.get(i, j) - a.get(i, j)).powi(2);
                }
            }
            assert!(diff.sqrt() <= 1e-8 * a.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn deterministic_and_sign_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gram(&random_matrix(&mut rng, 6, 5)).unwrap();
        let e1 = sym_eig(&a).unwrap();
        let e2 = sym_eig(&a).unwrap();
        assert_eq!(e1, e2);
        for i in 0..5 {
            let w = e1.eigenvector(i);
            let big = w
                .iter()
                .cloned()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn gram_examples() {
        let v = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(gram(&v).unwrap(), Matrix::identity(2));
        let u = vec![0.6, 0.0, 0.8];
        let g = gram(&Matrix::from_columns(&[u.clone(), u]).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(g.get(i, j), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn gram_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_matrix(&mut rng, 4, 3);
        let g = gram(&v).unwrap();
        let mut trace = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for r in 0..4 {
                    s += v.get(r, i) * v.get(r, j);
                }
                assert_abs_diff_eq!(g.get(i, j), s, epsilon = 1e-15);
            }
            trace += g.get(i, i);
        }
        let col_sq: f64 = v.as_slice().iter().map(|x| x * x).sum();
        assert_abs_diff_eq!(trace, col_sq, epsilon = 1e-14);
    }

    #[test]
    fn matvec_examples() {
        let x = vec![1.5, -2.0, 0.25];
        assert_eq!(Matrix::identity(3).matvec(&x).unwrap(), x);
        assert_eq!(Matrix::zeros(2, 3).matvec(&x).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            Matrix::<f64>::zeros(2, 2).matvec(&x),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Matrix::<f64>::zeros(2, 2).transpose_matvec(&x).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 3, 2);
        let y = vec![0.3, -0.7];
        let ay = a.matvec(&y).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                ay[i],
                a.get(i, 0) * y[0] + a.get(i, 1) * y[1],
                epsilon = 1e-15
            );
        }
        let z = vec![0.1, 0.2, -0.4];
        let atz = a.transpose_matvec(&z).unwrap();
        for j in 0..2 {
            let s = a.get(0, j) * z[0] + a.get(1, j) * z[1] + a.get(2, j) * z[2];
            assert_abs_diff_eq!(atz[j], s, epsilon = 1e-15);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::from_rows(&[vec![2.0f32, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-5);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-5);
    }
}
