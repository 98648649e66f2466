//! Density matrices, the Lindblad superoperator and its steady state.
//!
//! Vectorization is column stacking: `ρ[a, b]` lives at `a + d·b`, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::fock::Operator;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };
const I: c64 = c64 { re: 0.0, im: 1.0 };

/// Steady states are accepted when `‖L vec ρ‖_∞` is below this.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a computed steady state.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Largest superoperator for which the dense null-space diagnosis runs.
const MAX_DENSE_DIAGNOSIS: usize = 2500;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat<c64>);

impl DensityMatrix {
    pub fn new(m: Mat<c64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!("density matrix must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(Self(m))
    }

    /// Rebuilds `ρ` from its column-stacked vector.
    pub fn from_vec(v: &[c64], dim: usize) -> Result<Self> {
        if v.len() != dim * dim {
            return Err(Error::Shape(format!("vector of length {} cannot hold a {dim}x{dim} state", v.len())));
        }
        Ok(Self(Mat::from_fn(dim, dim, |a, b| v[a + dim * b])))
    }

    /// Pure state `|k><k|`.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Shape(format!("basis index {k} out of range for dimension {dim}")));
        }
        Ok(Self(Mat::from_fn(dim, dim, |a, b| if a == k && b == k { ONE } else { ZERO })))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn to_vec(&self) -> Vec<c64> {
        let d = self.dim();
        let mut v = Vec::with_capacity(d * d);
        for b in 0..d {
            for a in 0..d {
                v.push(self.0[(a, b)]);
            }
        }
        v
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).fold(ZERO, |a, b| a + b)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for b in 0..d {
            for a in 0..=b {
                worst = worst.max((self.0[(a, b)] - self.0[(b, a)].conj()).norm());
            }
        }
        worst
    }

    /// `(ρ + ρ†)/2`.
    pub fn hermitized(&self) -> Self {
        let d = self.dim();
        Self(Mat::from_fn(d, d, |a, b| (self.0[(a, b)] + self.0[(b, a)].conj()) * 0.5))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = self.hermitized();
        let ev = h
            .0
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        Ok(ev.first().copied().unwrap_or(0.0))
    }

    pub fn expect(&self, op: &Operator) -> Result<c64> {
        crate::fock::expectation(op, self)
    }
}

/// Sparse linear map on column-stacked density matrices, stored as CSR.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    hilbert_dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<c64>,
}

impl Superoperator {
    /// Assembles from `(row, col, value)` entries; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_entries(hilbert_dim: usize, mut entries: Vec<(usize, usize, c64)>) -> Result<Self> {
        let n = hilbert_dim * hilbert_dim;
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::Shape(format!("entry ({r}, {c}) outside a {n}x{n} superoperator")));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<c64> = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let keep: Vec<bool> = values.iter().map(|v| *v != ZERO).collect();
        let mut it = keep.iter();
        rows.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        col_idx.retain(|_| *it.next().unwrap());
        values.retain(|v| *v != ZERO);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for k in 0..n {
            row_ptr[k + 1] += row_ptr[k];
        }
        Ok(Self { hilbert_dim, row_ptr, col_idx, values })
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    /// Side length `d²` of the superoperator matrix.
    pub fn dim(&self) -> usize {
        self.hilbert_dim * self.hilbert_dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> c64 {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => ZERO,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn matvec_into(&self, x: &[c64], y: &mut [c64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[c64]) -> Result<Vec<c64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("vector length {} does not match superoperator size {}", x.len(), self.dim())));
        }
        let mut y = vec![ZERO; x.len()];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::from_vec(&self.matvec(&rho.to_vec())?, rho.dim())
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let n = self.dim();
        let mut m = Mat::<c64>::zeros(n, n);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Row index of a population `ρ[a, a]`.
    fn population_row(&self, a: usize) -> usize {
        a + self.hilbert_dim * a
    }

    /// Solves `L x = rhs` together with `Tr x = trace`.
    ///
    /// The population equation whose diagonal entry in `L` is smallest in
    /// magnitude (lowest index on ties) is replaced by the trace condition.
    /// That equation is redundant whenever the null space of `L` is spanned
    /// by a single state, because the trace functional is then the only left
    /// null vector. `rhs` must be traceless for the system to be consistent.
    pub fn solve_trace_constrained(&self, rhs: &[c64], trace: c64) -> Result<ConstrainedSolution> {
        let n = self.dim();
        let d = self.hilbert_dim;
        if rhs.len() != n {
            return Err(Error::Shape(format!("right-hand side length {} does not match {n}", rhs.len())));
        }
        let replaced = (0..d)
            .map(|a| self.population_row(a))
            .min_by(|&x, &y| self.get(x, x).norm().total_cmp(&self.get(y, y).norm()).then(x.cmp(&y)))
            .expect("hilbert dimension is positive");

        let mut trip: Vec<Triplet<usize, usize, c64>> = self
            .entries()
            .filter(|&(r, _, _)| r != replaced)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        trip.extend((0..d).map(|a| Triplet::new(replaced, self.population_row(a), ONE)));
        let a = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Data(format!("{e:?}")))?;

        let mut b = Mat::<c64>::from_fn(n, 1, |k, _| rhs[k]);
        b[(replaced, 0)] = trace;

        let singular = |nullity: Option<usize>| match nullity {
            Some(k) if k > 1 => Error::DegenerateSteadyState { nullity: k },
            _ => Error::SteadyStateConvergence { residual: f64::INFINITY, tolerance: STEADY_RESIDUAL_TOL },
        };
        let lu = match a.sp_lu() {
            Ok(lu) => lu,
            Err(_) => return Err(singular(self.null_space_dimension())),
        };

        let system_residual = |x: &[c64]| -> Vec<c64> {
            let mut r = vec![ZERO; n];
            self.matvec_into(x, &mut r);
            r[replaced] = (0..d).map(|a| x[self.population_row(a)]).fold(ZERO, |s, v| s + v);
            r.iter().enumerate().map(|(k, v)| b[(k, 0)] - v).collect()
        };

        let first = lu.solve(&b);
        let mut x: Vec<c64> = (0..n).map(|k| first[(k, 0)]).collect();
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(singular(self.null_space_dimension()));
        }
        // two rounds of refinement recover digits lost to pivot growth,
        // which matters for very weakly populated Fock states
        let mut refinement_steps = 0;
        for _ in 0..2 {
            let r = system_residual(&x);
            let rm = Mat::<c64>::from_fn(n, 1, |k, _| r[k]);
            let dx = lu.solve(&rm);
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += dx[(k, 0)];
            }
            refinement_steps += 1;
        }
        let residual = system_residual(&x).iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(ConstrainedSolution { x, residual, replaced_row: replaced, refinement_steps })
    }

    /// Numerical nullity from the dense singular values, or `None` when the
    /// operator is too large for a dense decomposition.
    pub fn null_space_dimension(&self) -> Option<usize> {
        if self.dim() > MAX_DENSE_DIAGNOSIS {
            return None;
        }
        let sv = self.to_dense().singular_values().ok()?;
        let top = sv.iter().copied().fold(0.0, f64::max);
        let tol = 1e-10 * top.max(1.0) * (self.dim() as f64).sqrt();
        Some(sv.iter().filter(|&&s| s <= tol).count())
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub x: Vec<c64>,
    /// Max-norm residual of the bordered system after refinement.
    pub residual: f64,
    pub replaced_row: usize,
    pub refinement_steps: usize,
}

fn check_square(op: &Operator, dim: usize, what: &str) -> Result<()> {
    if op.dim() != dim {
        return Err(Error::Shape(format!("{what} has dimension {}, Hamiltonian has {dim}", op.dim())));
    }
    Ok(())
}

/// Lindblad generator `L ρ = −i[H, ρ] + Σ_c (c ρ c† − ½{c†c, ρ})`.
///
/// Assembled as `I ⊗ (−i H_eff) + (i H_eff*) ⊗ I + Σ_c c* ⊗ c` with
/// `H_eff = H − (i/2) Σ_c c†c`.
pub fn liouvillian(h: &Operator, collapse: &[Operator]) -> Result<Superoperator> {
    let d = h.dim();
    let scale = h.max_abs().max(1.0);
    if h.hermiticity_defect() > 1e-12 * scale {
        return Err(Error::InvalidParameter {
            field: "hamiltonian",
            reason: format!("not Hermitian (defect {:e})", h.hermiticity_defect()),
        });
    }
    let mut heff = h.clone();
    for (k, c) in collapse.iter().enumerate() {
        check_square(c, d, &format!("collapse operator {k}"))?;
        heff = heff.sub(&c.adjoint().matmul(c).scale(I * 0.5));
    }
    let heff_nz = heff.nonzeros();

    let mut entries = Vec::with_capacity(2 * d * heff_nz.len());
    for b in 0..d {
        for &(i, j, v) in &heff_nz {
            entries.push((i + d * b, j + d * b, -I * v));
        }
    }
    for &(i, j, v) in &heff_nz {
        let w = I * v.conj();
        for a in 0..d {
            entries.push((a + d * i, a + d * j, w));
        }
    }
    for c in collapse {
        let nz = c.nonzeros();
        for &(i1, j1, v1) in &nz {
            for &(i2, j2, v2) in &nz {
                entries.push((i2 + d * i1, j2 + d * j1, v1.conj() * v2));
            }
        }
    }
    Superoperator::from_entries(d, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SteadyStateReport {
    /// `‖L vec ρ‖_∞` for the returned state.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub replaced_row: usize,
    pub refinement_steps: usize,
}

pub fn steady_state(l: &Superoperator) -> Result<DensityMatrix> {
    steady_state_with_report(l).map(|(rho, _)| rho)
}

/// Unique trace-one solution of `L ρ = 0`.
pub fn steady_state_with_report(l: &Superoperator) -> Result<(DensityMatrix, SteadyStateReport)> {
    let n = l.dim();
    let sol = l.solve_trace_constrained(&vec![ZERO; n], ONE)?;
    let residual = l.matvec(&sol.x)?.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(residual < STEADY_RESIDUAL_TOL) {
        if let Some(k) = l.null_space_dimension().filter(|&k| k > 1) {
            return Err(Error::DegenerateSteadyState { nullity: k });
        }
        return Err(Error::SteadyStateConvergence { residual, tolerance: STEADY_RESIDUAL_TOL });
    }
    let rho = DensityMatrix::from_vec(&sol.x, l.hilbert_dim())?.hermitized();
    let min_eigenvalue = rho.min_eigenvalue()?;
    if min_eigenvalue < -POSITIVITY_TOL {
        return Err(Error::NonPhysicalState { min_eigenvalue });
    }
    Ok((
        rho,
        SteadyStateReport {
            residual,
            min_eigenvalue,
            replaced_row: sol.replaced_row,
            refinement_steps: sol.refinement_steps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation, FockSpace, Site};

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn random_state(d: usize, seed: u64) -> DensityMatrix {
        // cheap deterministic LCG, enough for structural checks
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Mat::<c64>::from_fn(d, d, |_, _| c(next(), next()));
        let p = &m * m.adjoint();
        let tr = (0..d).map(|i| p[(i, i)].re).sum::<f64>();
        DensityMatrix::new(Mat::from_fn(d, d, |i, j| p[(i, j)] / tr)).unwrap()
    }

    #[test]
    fn vectorization_round_trip_is_column_major() {
        let m = Mat::<c64>::from_fn(2, 2, |a, b| c((a + 10 * b) as f64, 0.0));
        let rho = DensityMatrix::new(m).unwrap();
        let v = rho.to_vec();
        assert_eq!(v[1], c(1.0, 0.0));
        assert_eq!(v[2], c(10.0, 0.0));
        assert_eq!(DensityMatrix::from_vec(&v, 2).unwrap(), rho);
        assert!(DensityMatrix::from_vec(&v, 3).is_err());
    }

    #[test]
    fn single_mode_decay_matrix() {
        // one damped level pair: L ρ for ρ = |1><1| is |0><0| − |1><1|
        let a = annihilation(1).unwrap();
        let h = Operator::zeros(2);
        let l = liouvillian(&h, &[a]).unwrap();
        let rho = DensityMatrix::basis_state(2, 1).unwrap();
        let out = l.apply(&rho).unwrap();
        assert_eq!(out.as_mat()[(0, 0)], c(1.0, 0.0));
        assert_eq!(out.as_mat()[(1, 1)], c(-1.0, 0.0));
        // coherences decay at half the rate
        let coh = DensityMatrix::new(Mat::from_fn(2, 2, |a, b| if a == 0 && b == 1 { ONE } else { ZERO })).unwrap();
        let out = l.apply(&coh).unwrap();
        assert_eq!(out.as_mat()[(0, 1)], c(-0.5, 0.0));
    }

    #[test]
    fn matches_direct_lindblad_action() {
        let space = FockSpace::new(2, 2).unwrap();
        let al = space.annihilation(Site::Left);
        let ar = space.annihilation(Site::Right);
        let hop = al.adjoint().matmul(&ar);
        let h = space
            .number(Site::Left)
            .scale_real(0.7)
            .add(&hop.add(&hop.adjoint()).scale_real(0.4))
            .add(&al.adjoint().scale(c(0.3, 0.1)))
            .add(&al.scale(c(0.3, -0.1)));
        let cs = vec![al.clone(), ar.scale_real(0.8)];
        let l = liouvillian(&h, &cs).unwrap();
        let d = space.total_dim();
        let rho = random_state(d, 3);
        let r = Operator::from_mat(rho.as_mat().to_owned()).unwrap();

        let mut direct = h.matmul(&r).sub(&r.matmul(&h)).scale(-I);
        for cop in &cs {
            let cd = cop.adjoint();
            let cdc = cd.matmul(cop);
            direct = direct
                .add(&cop.matmul(&r).matmul(&cd))
                .sub(&cdc.matmul(&r).add(&r.matmul(&cdc)).scale_real(0.5));
        }
        let got = l.apply(&rho).unwrap();
        let diff = Operator::from_mat(got.as_mat().to_owned()).unwrap().sub(&direct).max_abs();
        assert!(diff < 1e-14, "{diff}");
    }

    #[test]
    fn columns_are_trace_free() {
        let space = FockSpace::new(2, 1).unwrap();
        let al = space.annihilation(Site::Left);
        let h = space.number(Site::Right).add(&al.add(&al.adjoint()).scale_real(0.5));
        let l = liouvillian(&h, &[al, space.annihilation(Site::Right)]).unwrap();
        let d = space.total_dim();
        let mut col_trace = vec![ZERO; l.dim()];
        for (r, cidx, v) in l.entries() {
            if r % (d + 1) == 0 {
                col_trace[cidx] += v;
            }
        }
        assert!(col_trace.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian_and_bad_shapes() {
        let a = annihilation(2).unwrap();
        assert!(matches!(
            liouvillian(&a, &[]),
            Err(Error::InvalidParameter { field: "hamiltonian", .. })
        ));
        let h = Operator::zeros(3);
        assert!(matches!(liouvillian(&h, &[annihilation(1).unwrap()]), Err(Error::Shape(_))));
    }

    #[test]
    fn damped_driven_mode_is_coherent_state() {
        // a single linear mode with drive F and unit loss relaxes to
        // <a> = −2iF/(1 + 2iΔ)
        let n_max = 12;
        let a = annihilation(n_max).unwrap();
        let (delta, f) = (0.4, 0.5);
        let h = a
            .adjoint()
            .matmul(&a)
            .scale_real(delta)
            .add(&a.adjoint().scale_real(f))
            .add(&a.scale_real(f));
        let l = liouvillian(&h, &[a.clone()]).unwrap();
        let (rho, rep) = steady_state_with_report(&l).unwrap();
        let alpha = c(0.0, -2.0 * f) / c(1.0, 2.0 * delta);
        assert!((rho.expect(&a).unwrap() - alpha).norm() < 1e-8);
        assert!((rho.trace() - ONE).norm() < 1e-13);
        assert!(rep.residual < STEADY_RESIDUAL_TOL);
        assert_eq!(rep.replaced_row, 0);
        assert!(rep.min_eigenvalue > -POSITIVITY_TOL);
    }

    #[test]
    fn lossless_dynamics_has_degenerate_steady_state() {
        let space = FockSpace::new(1, 1).unwrap();
        let h = space.number(Site::Left);
        let l = liouvillian(&h, &[]).unwrap();
        match steady_state(&l) {
            Err(Error::DegenerateSteadyState { nullity }) => assert!(nullity >= 4),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn trace_constrained_solve_with_traceless_source() {
        let a = annihilation(3).unwrap();
        let h = a.adjoint().matmul(&a).scale_real(0.3);
        let l = liouvillian(&h, &[a]).unwrap();
        // L x = −(|2><2| − |0><0|), Tr x = 0: the time integral of ρ(t) − ρ_ss
        let mut rhs = vec![ZERO; l.dim()];
        rhs[2 + 4 * 2] = -ONE;
        rhs[0] = ONE;
        let sol = l.solve_trace_constrained(&rhs, ZERO).unwrap();
        let x = DensityMatrix::from_vec(&sol.x, 4).unwrap();
        // ∫ <n> dt = 2 for two photons leaking at unit rate
        let n = annihilation(3).unwrap();
        let n = n.adjoint().matmul(&n);
        assert!((x.expect(&n).unwrap().re - 2.0).abs() < 1e-12);
        assert!(x.trace().norm() < 1e-13);
    }

    #[test]
    fn from_entries_merges_duplicates_and_drops_zeros() {
        let s = Superoperator::from_entries(
            2,
            vec![(0, 1, ONE), (0, 1, ONE), (3, 3, ONE), (3, 3, -ONE), (2, 0, I)],
        )
        .unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.get(0, 1), c(2.0, 0.0));
        assert_eq!(s.get(3, 3), ZERO);
        assert_eq!(s.to_dense()[(2, 0)], I);
        assert!(Superoperator::from_entries(2, vec![(4, 0, ONE)]).is_err());
    }

    #[test]
    fn min_eigenvalue_detects_negativity() {
        let m = Mat::<c64>::from_fn(2, 2, |a, b| if a == b { c(if a == 0 { 1.1 } else { -0.1 }, 0.0) } else { ZERO });
        let rho = DensityMatrix::new(m).unwrap();
        assert!((rho.min_eigenvalue().unwrap() + 0.1).abs() < 1e-14);
        assert!(random_state(4, 9).min_eigenvalue().unwrap() > 0.0);
    }
}
