//! Truncated two-site Fock space and dense operator algebra.
//!
//! Basis states are occupation-number products `|n_L, n_R>` ordered
//! lexicographically with the left site as the slow index:
//! `index = n_L * dim_right + n_R`.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::DensityMatrix;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Left,
    Right,
}

impl Site {
    pub fn other(self) -> Site {
        match self {
            Site::Left => Site::Right,
            Site::Right => Site::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    n_max_left: usize,
    n_max_right: usize,
}

impl FockSpace {
    pub fn new(n_max_left: usize, n_max_right: usize) -> Result<Self> {
        for n in [n_max_left, n_max_right] {
            if n < 1 {
                return Err(Error::InvalidTruncation(n));
            }
        }
        Ok(Self { n_max_left, n_max_right })
    }

    pub fn symmetric(n_max: usize) -> Result<Self> {
        Self::new(n_max, n_max)
    }

    pub fn n_max(&self, site: Site) -> usize {
        match site {
            Site::Left => self.n_max_left,
            Site::Right => self.n_max_right,
        }
    }

    pub fn n_max_left(&self) -> usize {
        self.n_max_left
    }

    pub fn n_max_right(&self) -> usize {
        self.n_max_right
    }

    pub fn dim_left(&self) -> usize {
        self.n_max_left + 1
    }

    pub fn dim_right(&self) -> usize {
        self.n_max_right + 1
    }

    pub fn dim(&self, site: Site) -> usize {
        self.n_max(site) + 1
    }

    pub fn total_dim(&self) -> usize {
        self.dim_left() * self.dim_right()
    }

    /// Basis index of `|n_left, n_right>`.
    pub fn index(&self, n_left: usize, n_right: usize) -> usize {
        debug_assert!(n_left <= self.n_max_left && n_right <= self.n_max_right);
        n_left * self.dim_right() + n_right
    }

    /// Occupations `(n_left, n_right)` of a basis index.
    pub fn occupations(&self, index: usize) -> (usize, usize) {
        (index / self.dim_right(), index % self.dim_right())
    }

    /// Same space with both cutoffs raised by `extra`.
    pub fn enlarged(&self, extra: usize) -> Self {
        Self {
            n_max_left: self.n_max_left + extra,
            n_max_right: self.n_max_right + extra,
        }
    }

    /// Annihilation operator of `site` embedded in the full space.
    pub fn annihilation(&self, site: Site) -> Operator {
        embed(&annihilation(self.n_max(site)).expect("validated truncation"), site, self)
            .expect("dimensions match by construction")
    }

    /// Number operator of `site` embedded in the full space.
    pub fn number(&self, site: Site) -> Operator {
        embed(&number(self.n_max(site)).expect("validated truncation"), site, self)
            .expect("dimensions match by construction")
    }

    /// Total excitation number `n_L + n_R`.
    pub fn total_number(&self) -> Operator {
        self.number(Site::Left).add(&self.number(Site::Right))
    }

    /// `|n_left, n_right><n_left, n_right|`.
    pub fn fock_projector(&self, n_left: usize, n_right: usize) -> Result<DensityMatrix> {
        if n_left > self.n_max_left || n_right > self.n_max_right {
            return Err(Error::Shape(format!(
                "Fock state |{n_left},{n_right}> outside truncation ({}, {})",
                self.n_max_left, self.n_max_right
            )));
        }
        let d = self.total_dim();
        let k = self.index(n_left, n_right);
        let mut m = Mat::<c64>::zeros(d, d);
        m[(k, k)] = c64::new(1.0, 0.0);
        DensityMatrix::new(m)
    }
}

/// Dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(Mat<c64>);

impl Operator {
    pub fn from_mat(m: Mat<c64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        Self(Mat::from_fn(dim, dim, f))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> c64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint().to_owned())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose().to_owned())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.conjugate().to_owned())
    }

    pub fn matmul(&self, rhs: &Operator) -> Self {
        Self(&self.0 * &rhs.0)
    }

    pub fn add(&self, rhs: &Operator) -> Self {
        Self(&self.0 + &rhs.0)
    }

    pub fn sub(&self, rhs: &Operator) -> Self {
        Self(&self.0 - &rhs.0)
    }

    pub fn scale(&self, s: c64) -> Self {
        Self::from_fn(self.dim(), |i, j| self.0[(i, j)] * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    /// `[self, rhs] = self·rhs − rhs·self`.
    pub fn commutator(&self, rhs: &Operator) -> Self {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                m = m.max(self.0[(i, j)].norm());
            }
        }
        m
    }

    /// `‖A − A†‖_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                m = m.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).fold(ZERO, |a, b| a + b)
    }

    /// Nonzero entries as `(row, col, value)`, column-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize, c64)> {
        let d = self.dim();
        let mut out = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let v = self.0[(i, j)];
                if v != ZERO {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        self.0
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))
    }
}

/// Single-mode annihilation operator on levels `0..=n_max`:
/// `a[n, n+1] = sqrt(n+1)`.
pub fn annihilation(n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::InvalidTruncation(n_max));
    }
    let d = n_max + 1;
    let mut m = Mat::<c64>::zeros(d, d);
    for n in 0..n_max {
        m[(n, n + 1)] = c64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    Ok(Operator(m))
}

pub fn creation(n_max: usize) -> Result<Operator> {
    Ok(annihilation(n_max)?.adjoint())
}

/// Single-mode `a†a`, built directly as `diag(0..=n_max)`.
pub fn number(n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::InvalidTruncation(n_max));
    }
    let d = n_max + 1;
    Ok(Operator::from_fn(d, |i, j| {
        if i == j {
            c64::new(i as f64, 0.0)
        } else {
            ZERO
        }
    }))
}

/// Lift a single-site operator into the two-site space:
/// `op ⊗ I` for the left site, `I ⊗ op` for the right site.
pub fn embed(op: &Operator, site: Site, space: &FockSpace) -> Result<Operator> {
    let site_dim = space.dim(site);
    if op.dim() != site_dim {
        return Err(Error::Shape(format!(
            "operator of dimension {} cannot act on {:?} site of dimension {}",
            op.dim(),
            site,
            site_dim
        )));
    }
    let dr = space.dim_right();
    let d = space.total_dim();
    let mut m = Mat::<c64>::zeros(d, d);
    match site {
        Site::Left => {
            for (i, j, v) in op.nonzeros() {
                for r in 0..dr {
                    m[(i * dr + r, j * dr + r)] = v;
                }
            }
        }
        Site::Right => {
            for (i, j, v) in op.nonzeros() {
                for l in 0..space.dim_left() {
                    m[(l * dr + i, l * dr + j)] = v;
                }
            }
        }
    }
    Ok(Operator(m))
}

/// `trace(op · rho)`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<c64> {
    let r = rho.as_mat();
    if op.dim() != r.nrows() {
        return Err(Error::Shape(format!(
            "operator dimension {} does not match state dimension {}",
            op.dim(),
            r.nrows()
        )));
    }
    let d = op.dim();
    let mut acc = ZERO;
    for j in 0..d {
        for i in 0..d {
            let o = op.0[(i, j)];
            if o != ZERO {
                acc += o * r[(j, i)];
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn annihilation_lowest_truncation() {
        let a = annihilation(1).unwrap();
        assert_eq!(a.dim(), 2);
        assert_eq!(a.get(0, 1), c(1.0));
        assert_eq!(a.get(0, 0), c(0.0));
        assert_eq!(a.get(1, 0), c(0.0));
        assert_eq!(a.get(1, 1), c(0.0));
    }

    #[test]
    fn annihilation_ladder_entries() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.get(0, 1), c(1.0));
        assert_eq!(a.get(1, 2), c(2f64.sqrt()));
        assert_eq!(a.nonzeros().len(), 2);
    }

    #[test]
    fn truncated_commutator_has_defect_in_last_level() {
        let a = annihilation(5).unwrap();
        let comm = a.matmul(&a.adjoint()).sub(&a.adjoint().matmul(&a));
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i != j {
                    0.0
                } else if i == 5 {
                    -5.0
                } else {
                    1.0
                };
                assert!((comm.get(i, j) - c(expected)).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_zero_truncation() {
        assert_eq!(annihilation(0), Err(Error::InvalidTruncation(0)));
        assert!(FockSpace::new(0, 3).is_err());
        assert!(FockSpace::new(2, 0).is_err());
    }

    #[test]
    fn number_operator_is_ladder_product() {
        let a = annihilation(7).unwrap();
        let n = a.adjoint().matmul(&a);
        // √k·√k is only k up to rounding
        assert!(n.sub(&number(7).unwrap()).max_abs() < 1e-14);
    }

    #[test]
    fn embedded_number_operators_on_qubit_pair() {
        let space = FockSpace::new(1, 1).unwrap();
        let nl = space.number(Site::Left);
        let nr = space.number(Site::Right);
        let diag = |op: &Operator| (0..4).map(|i| op.get(i, i).re).collect::<Vec<_>>();
        assert_eq!(diag(&nl), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(diag(&nr), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(nl.nonzeros().len(), 2);
    }

    #[test]
    fn different_sites_commute_exactly() {
        let space = FockSpace::new(3, 2).unwrap();
        let al = space.annihilation(Site::Left);
        let ar_dag = space.annihilation(Site::Right).adjoint();
        assert_eq!(al.commutator(&ar_dag).max_abs(), 0.0);
    }

    #[test]
    fn embed_rejects_wrong_dimension() {
        let space = FockSpace::new(2, 3).unwrap();
        let a = annihilation(3).unwrap();
        assert!(matches!(embed(&a, Site::Left, &space), Err(Error::Shape(_))));
        assert!(embed(&a, Site::Right, &space).is_ok());
    }

    #[test]
    fn expectation_of_number_states() {
        let a = number(3).unwrap();
        let one = {
            let mut m = Mat::<c64>::zeros(4, 4);
            m[(1, 1)] = c(1.0);
            DensityMatrix::new(m).unwrap()
        };
        let two = {
            let mut m = Mat::<c64>::zeros(4, 4);
            m[(2, 2)] = c(1.0);
            DensityMatrix::new(m).unwrap()
        };
        assert_eq!(expectation(&a, &one).unwrap(), c(1.0));
        assert_eq!(expectation(&a, &two).unwrap(), c(2.0));
        assert_eq!(expectation(&Operator::identity(4), &two).unwrap(), c(1.0));
        assert!(expectation(&Operator::identity(3), &two).is_err());
    }

    #[test]
    fn fock_projector_indexing() {
        let space = FockSpace::new(2, 3).unwrap();
        let rho = space.fock_projector(2, 1).unwrap();
        let nl = expectation(&space.number(Site::Left), &rho).unwrap();
        let nr = expectation(&space.number(Site::Right), &rho).unwrap();
        assert_eq!((nl.re, nr.re), (2.0, 1.0));
        assert!(space.fock_projector(3, 0).is_err());
        assert_eq!(space.occupations(space.index(2, 1)), (2, 1));
    }
}
