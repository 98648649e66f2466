//! Rectification, transport efficiencies and zero-delay coherence.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Site};
use crate::liouville::{liouvillian, steady_state_with_report, DensityMatrix, SteadyStateReport};
use crate::model::{build_hamiltonian, collapse_operators, JunctionParams, PumpDirection};

/// Below this both currents count as "no transport".
pub const CURRENT_FLOOR: f64 = 1e-14;
/// Occupation below which a site is dark and g² is undefined.
pub const DARK_OCCUPATION: f64 = 1e-12;

fn check_current(field: &'static str, q: f64) -> Result<f64> {
    if !q.is_finite() || q < -1e-10 {
        return Err(Error::InvalidParameter { field, reason: format!("current must be >= 0, got {q}") });
    }
    Ok(q.max(0.0))
}

/// `(Q_R[k] − Q_L[−k]) / (Q_R[k] + Q_L[−k])`: +1 is full rectification to
/// the right, −1 to the left.
pub fn rectification(q_right_fwd: f64, q_left_bwd: f64) -> Result<f64> {
    let a = check_current("q_right_fwd", q_right_fwd)?;
    let b = check_current("q_left_bwd", q_left_bwd)?;
    if a < CURRENT_FLOOR && b < CURRENT_FLOOR {
        return Err(Error::UndefinedRectification);
    }
    Ok((a - b) / (a + b))
}

/// Fraction of the emitted light leaving through the far site, both
/// currents taken under the same pump direction.
pub fn transport_efficiency(q_far: f64, q_near: f64) -> Result<f64> {
    let a = check_current("q_far", q_far)?;
    let b = check_current("q_near", q_near)?;
    if a < CURRENT_FLOOR && b < CURRENT_FLOOR {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(a / (a + b))
}

fn diagonal_moments(rho: &DensityMatrix, site: Site, space: &FockSpace) -> Result<(f64, f64)> {
    let d = space.total_dim();
    if rho.dim() != d {
        return Err(Error::Shape(format!("state dimension {} does not match space dimension {d}", rho.dim())));
    }
    let m = rho.as_mat();
    let (mut n, mut pairs) = (0.0, 0.0);
    for k in 0..d {
        let (l, r) = space.occupations(k);
        let x = match site {
            Site::Left => l,
            Site::Right => r,
        } as f64;
        let p = m[(k, k)].re;
        n += x * p;
        pairs += x * (x - 1.0) * p;
    }
    Ok((n, pairs))
}

/// `⟨a†_i a_i⟩`.
pub fn occupation(rho: &DensityMatrix, site: Site, space: &FockSpace) -> Result<f64> {
    Ok(diagonal_moments(rho, site, space)?.0)
}

/// `⟨a†a†aa⟩ / ⟨a†a⟩²` on `site`; both moments are diagonal in the Fock
/// basis.
pub fn g2(rho: &DensityMatrix, site: Site, space: &FockSpace) -> Result<f64> {
    let (n, pairs) = diagonal_moments(rho, site, space)?;
    if !(n > DARK_OCCUPATION) {
        return Err(Error::UndefinedG2 { occupation: n });
    }
    Ok(pairs / (n * n))
}

/// Emission rates (CW) or emitted photons (pulsed) for both pump directions.
/// `fwd` is pumping the left site (`k`), `bwd` pumping the right (`−k`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentMatrix {
    pub left_fwd: f64,
    pub right_fwd: f64,
    pub left_bwd: f64,
    pub right_bwd: f64,
}

impl CurrentMatrix {
    pub fn from_directions(fwd: [f64; 2], bwd: [f64; 2]) -> Self {
        Self { left_fwd: fwd[0], right_fwd: fwd[1], left_bwd: bwd[0], right_bwd: bwd[1] }
    }

    pub fn rectification(&self) -> Result<f64> {
        rectification(self.right_fwd, self.left_bwd)
    }

    pub fn efficiency_right(&self) -> Result<f64> {
        transport_efficiency(self.right_fwd, self.left_fwd)
    }

    pub fn efficiency_left(&self) -> Result<f64> {
        transport_efficiency(self.left_bwd, self.right_bwd)
    }
}

/// g² of each emitting site under each pump direction; `None` for a dark
/// site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct G2Matrix {
    pub left_fwd: Option<f64>,
    pub right_fwd: Option<f64>,
    pub left_bwd: Option<f64>,
    pub right_bwd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiodeFigures {
    pub r: f64,
    pub t_left: f64,
    pub t_right: f64,
    pub rt_left: f64,
    pub rt_right: f64,
    /// g² of the transmitted light in each direction: the left site under
    /// right pumping and the right site under left pumping.
    pub g2_left: Option<f64>,
    pub g2_right: Option<f64>,
    pub q: CurrentMatrix,
    pub g2: G2Matrix,
    /// Worse of the two steady-state solves.
    pub steady_residual: f64,
    pub min_eigenvalue: f64,
}

impl DiodeFigures {
    pub fn from_currents(q: CurrentMatrix, g2: G2Matrix) -> Result<Self> {
        let r = q.rectification()?;
        let t_right = q.efficiency_right()?;
        let t_left = q.efficiency_left()?;
        Ok(Self {
            r,
            t_left,
            t_right,
            rt_left: r * t_left,
            rt_right: r * t_right,
            g2_left: g2.left_bwd,
            g2_right: g2.right_fwd,
            q,
            g2,
            steady_residual: 0.0,
            min_eigenvalue: f64::NAN,
        })
    }
}

/// Steady state of the driven junction for one pump direction.
pub fn cw_steady_state(
    params: &JunctionParams,
    space: &FockSpace,
    pump: PumpDirection,
) -> Result<(DensityMatrix, SteadyStateReport)> {
    let p = params.with_pump(pump);
    let h = build_hamiltonian(&p, space, true)?;
    let l = liouvillian(&h, &collapse_operators(&p, space)?)?;
    steady_state_with_report(&l)
}

/// Diode figures under continuous pumping, with steady-state emission rates
/// `γ⟨n_i⟩` standing in for the integrated currents.
pub fn cw_diode_figures(params: &JunctionParams, space: &FockSpace) -> Result<DiodeFigures> {
    if !(params.f.norm() > 0.0) {
        return Err(Error::InvalidParameter { field: "f", reason: "continuous pumping needs |F| > 0".into() });
    }
    let (fwd, rep_f) = cw_steady_state(params, space, PumpDirection::LeftToRight)?;
    let (bwd, rep_b) = cw_steady_state(params, space, PumpDirection::RightToLeft)?;
    let rates = |rho: &DensityMatrix| -> Result<[f64; 2]> {
        Ok([
            params.gamma * occupation(rho, Site::Left, space)?,
            params.gamma * occupation(rho, Site::Right, space)?,
        ])
    };
    let q = CurrentMatrix::from_directions(rates(&fwd)?, rates(&bwd)?);
    let g2m = G2Matrix {
        left_fwd: g2(&fwd, Site::Left, space).ok(),
        right_fwd: g2(&fwd, Site::Right, space).ok(),
        left_bwd: g2(&bwd, Site::Left, space).ok(),
        right_bwd: g2(&bwd, Site::Right, space).ok(),
    };
    let mut out = DiodeFigures::from_currents(q, g2m)?;
    out.steady_residual = rep_f.residual.max(rep_b.residual);
    out.min_eigenvalue = rep_f.min_eigenvalue.min(rep_b.min_eigenvalue);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectification_examples() {
        assert_eq!(rectification(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(rectification(0.0, 1.0).unwrap(), -1.0);
        assert_eq!(rectification(0.37, 0.37).unwrap(), 0.0);
        assert!((rectification(0.2, 0.6).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(rectification(1e-15, 0.0), Err(Error::UndefinedRectification));
        assert!(matches!(rectification(-1.0, 1.0), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(transport_efficiency(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(transport_efficiency(0.5, 0.5).unwrap(), 0.5);
        assert_eq!(transport_efficiency(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(transport_efficiency(0.0, 0.0), Err(Error::UndefinedEfficiency));
    }

    #[test]
    fn g2_of_fock_states() {
        let space = FockSpace::new(3, 2).unwrap();
        let one = DensityMatrix::basis_state(space.total_dim(), space.index(1, 0)).unwrap();
        assert_eq!(g2(&one, Site::Left, &space).unwrap(), 0.0);
        let two = DensityMatrix::basis_state(space.total_dim(), space.index(0, 2)).unwrap();
        assert_eq!(g2(&two, Site::Right, &space).unwrap(), 0.5);
        let three = DensityMatrix::basis_state(space.total_dim(), space.index(3, 0)).unwrap();
        assert!((g2(&three, Site::Left, &space).unwrap() - 6.0 / 9.0).abs() < 1e-15);
        assert!(matches!(g2(&two, Site::Left, &space), Err(Error::UndefinedG2 { .. })));
    }

    #[test]
    fn g2_rejects_mismatched_space() {
        let space = FockSpace::new(1, 1).unwrap();
        let rho = DensityMatrix::basis_state(9, 0).unwrap();
        assert!(matches!(g2(&rho, Site::Left, &space), Err(Error::Shape(_))));
    }

    #[test]
    fn figures_from_currents_are_consistent() {
        let q = CurrentMatrix::from_directions([0.3, 0.1], [0.4, 0.2]);
        let g = G2Matrix { left_fwd: Some(1.0), right_fwd: Some(0.8), left_bwd: Some(1.2), right_bwd: None };
        let f = DiodeFigures::from_currents(q, g).unwrap();
        assert!((f.r - (0.1 - 0.4) / 0.5).abs() < 1e-15);
        assert!((f.t_right - 0.25).abs() < 1e-15);
        assert!((f.t_left - 0.4 / 0.6).abs() < 1e-15);
        assert_eq!(f.rt_left, f.r * f.t_left);
        assert_eq!((f.g2_left, f.g2_right), (Some(1.2), Some(0.8)));
    }

    #[test]
    fn cw_requires_drive() {
        let space = FockSpace::new(1, 1).unwrap();
        let p = JunctionParams::new(0.0, 0.0, 1.0, 0.1, 0.0);
        assert!(matches!(cw_diode_figures(&p, &space), Err(Error::InvalidParameter { field: "f", .. })));
    }

    #[test]
    fn uncoupled_sites_transmit_nothing() {
        // without tunnelling the far site stays dark in both directions
        let space = FockSpace::new(3, 3).unwrap();
        let p = JunctionParams::new(0.0, 0.0, 1.0, 0.0, 0.3);
        assert_eq!(cw_diode_figures(&p, &space), Err(Error::UndefinedRectification));
    }
}
