//! Instance subspaces spanned by K-shot key embeddings.
//!
//! The span of the K unit-norm key embeddings of one instance is described by
//! an orthonormal basis of its leading eigenvectors. Eigenvectors come from the
//! K×K Gram matrix `VᵀV` and are mapped back into embedding space as
//! `w_i = V u_i / √λ_i`, which avoids a D×D decomposition. The basis is then
//! truncated to the fewest eigenvectors covering a fraction `rho` of the
//! eigenvalue mass.
//!
//! A query's similarity to an instance is its projection length
//! `‖W̃ᵀv‖₂`, the cosine of the angle between the query and the subspace.

use crate::error::{Error, Result};
use crate::linalg::{gram_of_columns, sym_eig, Matrix};
use crate::scalar::{all_finite, dot, norm, Scalar};

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T>(Vec<T>);

impl<T: Scalar> Embedding<T> {
    /// Wraps `values`, which must be finite and unit norm to `T::unit_tolerance()`.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite("embedding"));
        }
        let n = norm(&values);
        if (n - T::one()).abs() > T::unit_tolerance() {
            return Err(Error::NonUnitKey {
                index: 0,
                norm: n.as_f64(),
            });
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit length.
    pub fn normalize(mut values: Vec<T>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite("embedding"));
        }
        let n = norm(&values);
        if n == T::zero() {
            return Err(Error::NonFinite("zero-length embedding"));
        }
        values.iter_mut().for_each(|x| *x /= n);
        Ok(Self(values))
    }

    /// Output of a guarded normalisation; unit norm unless the input was ~0.
    pub(crate) fn from_guarded(values: Vec<T>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> AsRef<[T]> for Embedding<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// How many eigenvectors to keep per instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy<T> {
    /// Fraction of eigenvalue mass to retain, in `(0, 1]`.
    pub rho: T,
    /// Eigenvalues at or below this are numerically zero.
    pub rank_epsilon: T,
}

pub const DEFAULT_RANK_EPSILON: f64 = 1e-10;

impl<T: Scalar> TruncationPolicy<T> {
    pub fn new(rho: T, rank_epsilon: T) -> Result<Self> {
        if !(rho > T::zero() && rho <= T::one()) {
            return Err(Error::InvalidConfig {
                key: "rho",
                reason: format!("must lie in (0, 1], got {rho}"),
            });
        }
        if !(rank_epsilon > T::zero()) || !rank_epsilon.is_finite() {
            return Err(Error::InvalidConfig {
                key: "rank_epsilon",
                reason: format!("must be positive, got {rank_epsilon}"),
            });
        }
        Ok(Self { rho, rank_epsilon })
    }

    pub fn with_rho(rho: T) -> Result<Self> {
        Self::new(rho, T::lit(DEFAULT_RANK_EPSILON))
    }

    /// Keeps the whole numerical rank.
    pub fn full() -> Self {
        Self {
            rho: T::one(),
            rank_epsilon: T::lit(DEFAULT_RANK_EPSILON),
        }
    }
}

/// Truncated orthonormal basis of one instance's key subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSubspace<T> {
    /// L×D; row `i` is the i-th basis vector.
    basis_rows: Matrix<T>,
    retained: Vec<T>,
    spectrum: Vec<T>,
    total_eigenmass: T,
    tag: u64,
}

impl<T: Scalar> InstanceSubspace<T> {
    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.basis_rows.cols()
    }

    /// Retained rank L.
    pub fn rank(&self) -> usize {
        self.basis_rows.rows()
    }

    /// Number of keys the subspace was built from.
    pub fn shots(&self) -> usize {
        self.spectrum.len()
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    /// Basis as a D×L matrix with orthonormal columns.
    pub fn basis(&self) -> Matrix<T> {
        self.basis_rows.transpose()
    }

    pub fn basis_vector(&self, i: usize) -> &[T] {
        self.basis_rows.row(i)
    }

    pub fn retained_eigenvalues(&self) -> &[T] {
        &self.retained
    }

    /// All K eigenvalues of the key Gram matrix, descending, clamped at zero.
    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    pub fn total_eigenmass(&self) -> T {
        self.total_eigenmass
    }

    /// `W̃ᵀv` for a raw vector of matching dimension.
    pub fn coefficients(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_dim(v.len())?;
        Ok((0..self.rank())
            .map(|i| dot(self.basis_rows.row(i), v))
            .collect())
    }

    /// `W̃ c` for coefficients `c` of length L.
    pub fn combine(&self, coeffs: &[T]) -> Vec<T> {
        debug_assert_eq!(coeffs.len(), self.rank());
        let mut out = vec![T::zero(); self.dim()];
        for (i, &c) in coeffs.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.basis_rows.row(i)) {
                *o += c * w;
            }
        }
        out
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "subspace projection",
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Builds directly from an orthonormal basis (rows) with its eigenvalues.
    ///
    /// Used when restoring a subspace; the caller vouches for orthonormality.
    pub fn from_parts(
        basis_rows: Matrix<T>,
        retained: Vec<T>,
        spectrum: Vec<T>,
        tag: u64,
    ) -> Result<Self> {
        if retained.len() != basis_rows.rows() || basis_rows.rows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} eigenvalues for {} basis vectors",
                retained.len(),
                basis_rows.rows()
            )));
        }
        let total_eigenmass = spectrum.iter().copied().sum();
        Ok(Self {
            basis_rows,
            retained,
            spectrum,
            total_eigenmass,
            tag,
        })
    }
}

impl<T> AsRef<InstanceSubspace<T>> for InstanceSubspace<T> {
    fn as_ref(&self) -> &InstanceSubspace<T> {
        self
    }
}

/// Smallest L whose leading eigenvalues cover `rho` of the mass above the rank floor.
///
/// `eigenvalues` must be sorted descending; values in `[-1e-10, 0)` are
/// treated as zero.
pub fn select_rank<T: Scalar>(eigenvalues: &[T], policy: &TruncationPolicy<T>) -> Result<usize> {
    let kept: Vec<T> = eigenvalues
        .iter()
        .map(|&l| l.max(T::zero()))
        .take_while(|&l| l > policy.rank_epsilon)
        .collect();
    if kept.is_empty() {
        return Err(Error::AllZeroSpectrum);
    }
    let total: T = kept.iter().copied().sum();
    let target = policy.rho * total;
    let mut acc = T::zero();
    for (i, &l) in kept.iter().enumerate() {
        acc += l;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(kept.len())
}

/// Subspace of the K key embeddings of one instance, truncated by `policy`.
pub fn build_subspace<T: Scalar>(
    keys: &[Embedding<T>],
    policy: &TruncationPolicy<T>,
    tag: u64,
) -> Result<InstanceSubspace<T>> {
    let k = keys.len();
    if k == 0 {
        return Err(Error::EmptyKeys);
    }
    let dim = keys[0].dim();
    for (index, key) in keys.iter().enumerate() {
        if key.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "subspace keys",
                expected: dim,
                got: key.dim(),
            });
        }
        let n = norm(key.as_slice());
        if (n - T::one()).abs() > T::unit_tolerance() {
            return Err(Error::NonUnitKey {
                index,
                norm: n.as_f64(),
            });
        }
    }
    if k > dim {
        return Err(Error::KExceedsDim { k, dim });
    }

    let g = gram_of_columns(keys);
    let eig = sym_eig(&g)?;
    let spectrum: Vec<T> = eig.eigenvalues.iter().map(|&l| l.max(T::zero())).collect();
    let rank = select_rank(&spectrum, policy)?;

    let mut rows = Vec::with_capacity(rank * dim);
    for i in 0..rank {
        let u = eig.eigenvector(i);
        let inv = T::one() / spectrum[i].sqrt();
        let mut w = vec![T::zero(); dim];
        for (key, &uk) in keys.iter().zip(&u) {
            for (wj, &vj) in w.iter_mut().zip(key.as_slice()) {
                *wj += uk * vj;
            }
        }
        w.iter_mut().for_each(|x| *x *= inv);
        rows.push(w);
    }
    reorthonormalize(&mut rows);
    let basis_rows = Matrix::from_rows(&rows)?;
    let retained = spectrum[..rank].to_vec();
    let total_eigenmass = spectrum.iter().copied().sum();
    Ok(InstanceSubspace {
        basis_rows,
        retained,
        spectrum,
        total_eigenmass,
        tag,
    })
}

/// One modified Gram-Schmidt pass in order. The dual-form map loses
/// orthogonality in proportion to `eps/λ` for small retained eigenvalues.
fn reorthonormalize<T: Scalar>(rows: &mut [Vec<T>]) {
    for i in 0..rows.len() {
        let (done, rest) = rows.split_at_mut(i);
        let w = &mut rest[0];
        for prev in done.iter() {
            let c = dot(prev, w);
            for (x, &p) in w.iter_mut().zip(prev) {
                *x -= c * p;
            }
        }
        let n = norm(w);
        w.iter_mut().for_each(|x| *x /= n);
    }
}

/// `‖W̃ᵀv‖₂`.
pub fn projection_length<T: Scalar>(s: &InstanceSubspace<T>, v: &Embedding<T>) -> Result<T> {
    Ok(norm(&s.coefficients(v.as_slice())?))
}

/// `‖v − Π(v)‖₂ = √(1 − ‖W̃ᵀv‖²)` for unit `v`.
pub fn projection_distance<T: Scalar>(s: &InstanceSubspace<T>, v: &Embedding<T>) -> Result<T> {
    let len = projection_length(s, v)?;
    Ok((T::one() - len * len).max(T::zero()).sqrt())
}

/// `W̃ W̃ᵀ v`.
pub fn project<T: Scalar>(s: &InstanceSubspace<T>, v: &[T]) -> Result<Vec<T>> {
    let c = s.coefficients(v)?;
    Ok(s.combine(&c))
}
