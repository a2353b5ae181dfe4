//! Dense symmetric matrices and projection matrices.
//!
//! Dimensions here are tiny (d <= 16), so everything is dense and backed by
//! `nalgebra` where a factorization is needed.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for projector invariants.
pub const PROJECTOR_TOL: f64 = 1e-9;
/// Eigenvalues closer than this are treated as tied.
pub const EIGEN_TIE_TOL: f64 = 1e-12;

/// Symmetric matrix with packed upper-triangle storage, so `(i, j)` and
/// `(j, i)` always address the same value.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds the matrix from the upper triangle of `f` (`f` is called with `i <= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                packed.push(f(i, j));
            }
        }
        Self { dim, packed }
    }

    /// Symmetrizes `m` as `(m + m^T) / 2`.
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    /// Upper triangle in row-major order, `d(d+1)/2` values.
    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != dim * (dim + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * (dim + 1) / 2,
                found: packed.len(),
            });
        }
        Ok(Self { dim, packed })
    }

    /// `v v^T`.
    pub fn outer(v: &DVector<f64>) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(self.dim, i, j)]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.get(i, j).powi(2);
            }
        }
        acc.sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(Self {
            dim: self.dim,
            packed: self
                .packed
                .iter()
                .zip(&other.packed)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Ordinary (generally non-symmetric) matrix product.
    pub fn matmul(&self, other: &Self) -> DMatrix<f64> {
        self.to_dmatrix() * other.to_dmatrix()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| {
            (0..self.dim).map(|j| self.get(i, j) * x[j]).sum()
        })
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.apply(x))
    }

    /// Eigenpairs sorted by descending eigenvalue. Within a tie group the
    /// eigenvectors are sign-normalized (first nonzero coordinate positive)
    /// and ordered lexicographically, descending.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = self.to_dmatrix().symmetric_eigen();
        let mut pairs: Vec<(f64, DVector<f64>)> = (0..self.dim)
            .map(|k| {
                let mut v = eig.eigenvectors.column(k).into_owned();
                if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                    if *first < 0.0 {
                        v.neg_mut();
                    }
                }
                (eig.eigenvalues[k], v)
            })
            .collect();
        pairs.sort_by(|a, b| {
            if (a.0 - b.0).abs() <= EIGEN_TIE_TOL {
                b.1.iter()
                    .zip(a.1.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            } else {
                b.0.total_cmp(&a.0)
            }
        });
        let values = pairs.iter().map(|p| p.0).collect();
        let vectors = DMatrix::from_fn(self.dim, self.dim, |i, k| pairs[k].1[i]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.to_dmatrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.to_rows())
            .finish()
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("matrix rows must be square"));
        }
        Ok(SymMatrix::from_fn(dim, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }
}

/// `‖a − b‖_F`.
pub fn frob_dist(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    Ok(a.sub(b)?.frob_norm())
}

/// Orthogonal projection matrix of rank `r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projector {
    matrix: SymMatrix,
    rank: usize,
    tol: f64,
}

impl Projector {
    /// Checks idempotence, trace and spectrum against `tol`.
    pub fn new(matrix: SymMatrix, rank: usize, tol: f64) -> Result<Self> {
        if rank == 0 || rank > matrix.dim() {
            return Err(Error::NotProjector(format!(
                "rank {rank} outside 1..={}",
                matrix.dim()
            )));
        }
        let m = matrix.to_dmatrix();
        let idem = (&m * &m - &m).norm();
        if idem > tol {
            return Err(Error::NotProjector(format!(
                "‖Π² − Π‖_F = {idem:.3e} > {tol:.1e}"
            )));
        }
        let tr = matrix.trace();
        if (tr - rank as f64).abs() > tol {
            return Err(Error::NotProjector(format!("trace {tr} != rank {rank}")));
        }
        let eig = m.symmetric_eigenvalues();
        if eig.iter().any(|&l| l < -tol || l > 1.0 + tol) {
            return Err(Error::NotProjector("spectrum leaves [0, 1]".into()));
        }
        Ok(Self { matrix, rank, tol })
    }

    /// `U U^T` for a frame `U` with orthonormal columns.
    pub fn from_frame(frame: &DMatrix<f64>) -> Result<Self> {
        let p = frame * frame.transpose();
        Self::new(SymMatrix::from_dmatrix(&p)?, frame.ncols(), PROJECTOR_TOL)
    }

    /// Uniformly random rank-`r` projector in `R^d`: the top-`r` eigenspace of
    /// a symmetric Gaussian matrix.
    pub fn random<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<Self> {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let sym = SymMatrix::from_dmatrix(&(&g + g.transpose()))?;
        Ok(top_r_snap(&sym, r)?.projector)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Orthonormal `d × r` basis of the range.
    pub fn frame(&self) -> DMatrix<f64> {
        let (_, vecs) = self.matrix.eigen();
        vecs.columns(0, self.rank).into_owned()
    }

    /// `I − Π`.
    pub fn complement(&self) -> SymMatrix {
        SymMatrix::identity(self.dim())
            .sub(&self.matrix)
            .expect("same dimension")
    }

    /// `‖(I − Π) x‖₂`.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (x - self.matrix.apply(x)).norm()
    }
}

/// Output of [`top_r_snap`].
#[derive(Clone, Debug)]
pub struct Snap {
    pub projector: Projector,
    /// Eigenvalues `r` and `r + 1` coincide; the eigenspace choice was made by
    /// the deterministic ordering rule.
    pub tie: bool,
    pub eigenvalues: Vec<f64>,
}

/// Projector onto the top-`r` eigenspace of `m`.
pub fn top_r_snap(m: &SymMatrix, r: usize) -> Result<Snap> {
    if r == 0 || r > m.dim() {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={}",
            m.dim()
        )));
    }
    let (values, vectors) = m.eigen();
    let tie = r < m.dim() && (values[r - 1] - values[r]).abs() <= EIGEN_TIE_TOL;
    let frame = vectors.columns(0, r).into_owned();
    let p = &frame * frame.transpose();
    let projector = Projector::new(SymMatrix::from_dmatrix(&p)?, r, PROJECTOR_TOL)?;
    Ok(Snap {
        projector,
        tie,
        eigenvalues: values,
    })
}

/// `|‖p − q‖_F² − 2 Tr((I − p) q (I − p))|`. Zero for equal-rank projectors.
///
/// Panics if the dimensions differ.
pub fn frob_trace_identity_residual(p: &Projector, q: &Projector) -> f64 {
    assert_eq!(p.dim(), q.dim(), "projectors must share a dimension");
    let lhs = frob_dist(p.matrix(), q.matrix()).unwrap().powi(2);
    let m = p.complement().to_dmatrix();
    let rhs = 2.0 * (&m * q.matrix().to_dmatrix() * &m).trace();
    (lhs - rhs).abs()
}

/// Random orthonormal `d × r` frame (Gram–Schmidt on Gaussian columns).
pub fn random_frame<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, r, |_, _| rng.sample(StandardNormal));
    g.qr().q().columns(0, r).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;

    fn rank_one(u: &DVector<f64>) -> Projector {
        let u = u.normalize();
        Projector::new(SymMatrix::outer(&u), 1, PROJECTOR_TOL).unwrap()
    }

    #[test]
    fn packed_storage_is_symmetric() {
        let m = SymMatrix::from_fn(4, |i, j| (10 * i + j) as f64);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert_eq!(m.get(1, 3), 13.0);
        assert_eq!(m.get(3, 3), 33.0);
        assert_eq!(m.packed().len(), 10);
    }

    #[test]
    fn frob_dist_basics() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(frob_dist(&i2, &i2).unwrap(), 0.0);
        let d = frob_dist(&i2, &SymMatrix::zeros(2)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            frob_dist(&i2, &SymMatrix::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frob_dist_rank_one_closed_form() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..20 {
            let u = DVector::<f64>::from_fn(3, |_, _| rng.sample(StandardNormal)).normalize();
            let v = DVector::<f64>::from_fn(3, |_, _| rng.sample(StandardNormal)).normalize();
            let (pu, pv) = (rank_one(&u), rank_one(&v));
            let closed = (2.0 - 2.0 * u.dot(&v).powi(2)).sqrt();
            let mut direct = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    direct += (u[i] * u[j] - v[i] * v[j]).powi(2);
                }
            }
            let got = frob_dist(pu.matrix(), pv.matrix()).unwrap();
            assert!((got - closed).abs() < 1e-12);
            assert!((got - direct.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_identity_planar_angle() {
        for k in 0..24 {
            let theta = k as f64 * 0.13;
            let p = rank_one(&DVector::from_vec(vec![1.0, 0.0]));
            let q = rank_one(&DVector::from_vec(vec![theta.cos(), theta.sin()]));
            assert!(frob_trace_identity_residual(&p, &q) <= 1e-12);
            let lhs = frob_dist(p.matrix(), q.matrix()).unwrap().powi(2);
            assert!((lhs - 2.0 * theta.sin().powi(2)).abs() <= 1e-12);
        }
    }

    #[test]
    fn trace_identity_random_rank_two() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..50 {
            let p = Projector::random(5, 2, &mut rng).unwrap();
            let q = Projector::random(5, 2, &mut rng).unwrap();
            assert!(frob_trace_identity_residual(&p, &q) <= 1e-9);
            assert!(frob_trace_identity_residual(&p, &p) <= 1e-12);
        }
    }

    #[test]
    fn snap_axis_aligned() {
        let m = SymMatrix::from_fn(3, |i, j| if i == j { [0.9, 0.8, 0.1][i] } else { 0.0 });
        let s = top_r_snap(&m, 2).unwrap();
        let want = SymMatrix::from_fn(3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        assert!(frob_dist(s.projector.matrix(), &want).unwrap() < 1e-12);
        assert!(!s.tie);
    }

    #[test]
    fn snap_recovers_projector_and_flags_ties() {
        let mut rng = stream_rng(5, 0);
        let p = Projector::random(4, 2, &mut rng).unwrap();
        let s = top_r_snap(p.matrix(), 2).unwrap();
        assert!(frob_dist(s.projector.matrix(), p.matrix()).unwrap() < 1e-9);
        // the identity has a tie at every position
        let tied = top_r_snap(&SymMatrix::identity(3), 1).unwrap();
        assert!(tied.tie);
        assert!(top_r_snap(&SymMatrix::identity(3), 4).is_err());
    }

    #[test]
    fn snap_under_perturbation() {
        // Davis–Kahan style: a 0.05 Frobenius perturbation of a projector
        // (eigengap 1) moves the top-r space by a bounded amount.
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let mut rng = stream_rng(seed, 1);
            let p = Projector::random(4, 2, &mut rng).unwrap();
            let g = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.sample(StandardNormal));
            let e = SymMatrix::from_dmatrix(&(&g + g.transpose())).unwrap();
            let e = e.scale(0.05 / e.frob_norm());
            let s = top_r_snap(&p.matrix().add(&e).unwrap(), 2).unwrap();
            worst = worst.max(frob_dist(s.projector.matrix(), p.matrix()).unwrap());
        }
        // sin-theta bound gives <= 2 * sqrt(2) * 0.05 / (1 - 2 * 0.05) ≈ 0.157
        assert!(worst <= 0.2, "worst = {worst}");
    }

    #[test]
    fn projector_rejects_non_idempotent() {
        let m = SymMatrix::from_fn(2, |i, j| if i == j { 0.5 } else { 0.0 });
        assert!(matches!(
            Projector::new(m, 1, 1e-9),
            Err(Error::NotProjector(_))
        ));
    }
}
