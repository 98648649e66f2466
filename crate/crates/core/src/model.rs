//! Junction Hamiltonian, loss channels and bare-spectrum analysis.
//!
//! All rates are in units of the common site loss rate γ. In the frame
//! rotating at the drive frequency the undriven Hamiltonian is
//!
//! ```text
//! H = Δ_L n_L + Δ_R n_R + (U/2) a†_K a†_K a_K a_K + J (a†_L a_R + a_L a†_R)
//! ```
//!
//! with the Kerr site `K` on the left by default, and the drive adds
//! `F a†_p + F* a_p` on the pumped site `p`.

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Operator, Site};

/// Wave-vector label of a pump configuration: `k` pumps the left site,
/// `−k` the right one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpDirection {
    LeftToRight,
    RightToLeft,
}

impl PumpDirection {
    pub fn driven_site(self) -> Site {
        match self {
            PumpDirection::LeftToRight => Site::Left,
            PumpDirection::RightToLeft => Site::Right,
        }
    }

    /// Site opposite the pumped one; its output is the transmitted signal.
    pub fn far_site(self) -> Site {
        self.driven_site().other()
    }

    pub fn reversed(self) -> Self {
        match self {
            PumpDirection::LeftToRight => PumpDirection::RightToLeft,
            PumpDirection::RightToLeft => PumpDirection::LeftToRight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionParams {
    pub delta_left: f64,
    pub delta_right: f64,
    /// Kerr strength, acting on `kerr_site` only.
    pub u: f64,
    /// Tunnel coupling.
    pub j: f64,
    /// Drive amplitude on the pumped site.
    pub f: c64,
    /// Site loss rate. Always 1 in the γ unit system; other values are only
    /// used to check unit-rescaling consistency.
    pub gamma: f64,
    pub pump: PumpDirection,
    pub kerr_site: Site,
}

impl Default for JunctionParams {
    fn default() -> Self {
        Self {
            delta_left: 0.0,
            delta_right: 0.0,
            u: 0.0,
            j: 0.0,
            f: c64::new(0.0, 0.0),
            gamma: 1.0,
            pump: PumpDirection::LeftToRight,
            kerr_site: Site::Left,
        }
    }
}

impl JunctionParams {
    /// Canonical junction (Kerr on the left) with real drive amplitude `f`.
    pub fn new(delta_left: f64, delta_right: f64, u: f64, j: f64, f: f64) -> Self {
        Self {
            delta_left,
            delta_right,
            u,
            j,
            f: c64::new(f, 0.0),
            ..Self::default()
        }
    }

    pub fn with_pump(mut self, pump: PumpDirection) -> Self {
        self.pump = pump;
        self
    }

    pub fn with_drive(mut self, f: c64) -> Self {
        self.f = f;
        self
    }

    pub fn undriven(mut self) -> Self {
        self.f = c64::new(0.0, 0.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("delta_left", self.delta_left),
            ("delta_right", self.delta_right),
            ("u", self.u),
            ("j", self.j),
            ("f", self.f.re),
            ("f", self.f.im),
            ("gamma", self.gamma),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { field, reason: format!("{v} is not finite") });
            }
        }
        if self.u < 0.0 {
            return Err(Error::InvalidParameter { field: "u", reason: format!("must be >= 0, got {}", self.u) });
        }
        if self.j < 0.0 {
            return Err(Error::InvalidParameter { field: "j", reason: format!("must be >= 0, got {}", self.j) });
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter {
                field: "gamma",
                reason: format!("must be > 0, got {}", self.gamma),
            });
        }
        Ok(())
    }

    /// Mirror image of the device: site labels swapped, so the Kerr site,
    /// the detunings and the pump direction all move to the other side.
    pub fn mirrored(&self) -> Self {
        Self {
            delta_left: self.delta_right,
            delta_right: self.delta_left,
            kerr_site: self.kerr_site.other(),
            pump: self.pump.reversed(),
            ..*self
        }
    }

    /// Every rate (detunings, U, J, F, γ) multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            delta_left: self.delta_left * factor,
            delta_right: self.delta_right * factor,
            u: self.u * factor,
            j: self.j * factor,
            f: self.f * factor,
            gamma: self.gamma * factor,
            ..*self
        }
    }
}

/// Laser-frequency offset applied symmetrically around a fixed
/// inter-resonator detuning: `Δ_L = Δ_RL/2 + ω_g`, `Δ_R = −Δ_RL/2 + ω_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOffset {
    pub omega_g: f64,
    pub delta_rl: f64,
}

impl ScanOffset {
    pub fn new(omega_g: f64, delta_rl: f64) -> Self {
        Self { omega_g, delta_rl }
    }

    pub fn delta_left(&self) -> f64 {
        self.delta_rl / 2.0 + self.omega_g
    }

    pub fn delta_right(&self) -> f64 {
        -self.delta_rl / 2.0 + self.omega_g
    }

    pub fn apply(&self, base: &JunctionParams) -> JunctionParams {
        JunctionParams {
            delta_left: self.delta_left(),
            delta_right: self.delta_right(),
            ..*base
        }
    }
}

pub fn build_hamiltonian(params: &JunctionParams, space: &FockSpace, include_drive: bool) -> Result<Operator> {
    params.validate()?;
    let al = space.annihilation(Site::Left);
    let ar = space.annihilation(Site::Right);
    let ak = space.annihilation(params.kerr_site);
    let akd = ak.adjoint();

    let kerr = akd.matmul(&akd).matmul(&ak).matmul(&ak);
    let hop = al.adjoint().matmul(&ar);

    let mut h = space
        .number(Site::Left)
        .scale_real(params.delta_left)
        .add(&space.number(Site::Right).scale_real(params.delta_right))
        .add(&kerr.scale_real(params.u / 2.0))
        .add(&hop.add(&hop.adjoint()).scale_real(params.j));

    if include_drive {
        let ap = space.annihilation(params.pump.driven_site());
        h = h.add(&ap.adjoint().scale(params.f)).add(&ap.scale(params.f.conj()));
    }
    Ok(h)
}

/// Loss channels `[√γ a_L, √γ a_R]`.
pub fn collapse_operators(params: &JunctionParams, space: &FockSpace) -> Result<Vec<Operator>> {
    params.validate()?;
    let s = params.gamma.sqrt();
    Ok([Site::Left, Site::Right]
        .into_iter()
        .map(|site| space.annihilation(site).scale_real(s))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenLevel {
    pub energy: f64,
    /// `<a†_L a_L>` in this eigenstate.
    pub n_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenAnalysis {
    pub levels: Vec<EigenLevel>,
    /// Some reported level is within 1e-10 of its neighbour; its
    /// eigenvector (and hence `n_left`) is then basis dependent.
    pub degenerate: bool,
    /// Largest shift of a reported eigenvalue when both cutoffs are raised
    /// by two.
    pub truncation_shift: f64,
    pub truncation_converged: bool,
}

pub const DEGENERACY_GAP: f64 = 1e-10;
pub const EIGEN_TRUNCATION_TOL: f64 = 1e-8;

fn lowest_levels(params: &JunctionParams, space: &FockSpace, n_levels: usize) -> Result<(Vec<EigenLevel>, bool)> {
    let h = build_hamiltonian(params, space, false)?;
    let evd = h
        .as_mat()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vecs = evd.U();
    let vals = evd.S().column_vector();
    let d = h.dim();
    let take = n_levels.min(d);

    let mut levels = Vec::with_capacity(take);
    for k in 0..take {
        let mut n_left = 0.0;
        for i in 0..d {
            let (nl, _) = space.occupations(i);
            n_left += vecs[(i, k)].norm_sqr() * nl as f64;
        }
        levels.push(EigenLevel { energy: vals[k].re, n_left });
    }
    // a reported level counts as degenerate if it touches the next one,
    // including the first unreported level
    let last = (take + 1).min(d);
    let degenerate = (1..last).any(|k| (vals[k].re - vals[k - 1].re).abs() < DEGENERACY_GAP);
    Ok((levels, degenerate))
}

/// Lowest `n_levels` eigenpairs of the undriven Hamiltonian, ascending,
/// with the left-site occupation of each eigenvector.
pub fn bare_eigenanalysis(params: &JunctionParams, space: &FockSpace, n_levels: usize) -> Result<EigenAnalysis> {
    if n_levels < 1 || n_levels > space.total_dim() {
        return Err(Error::InvalidParameter {
            field: "n_levels",
            reason: format!("must lie in 1..={}, got {n_levels}", space.total_dim()),
        });
    }
    let (levels, degenerate) = lowest_levels(params, space, n_levels)?;
    let (bigger, _) = lowest_levels(params, &space.enlarged(2), n_levels)?;
    let truncation_shift = levels
        .iter()
        .zip(&bigger)
        .map(|(a, b)| (a.energy - b.energy).abs())
        .fold(0.0, f64::max);
    Ok(EigenAnalysis {
        levels,
        degenerate,
        truncation_shift,
        truncation_converged: truncation_shift < EIGEN_TRUNCATION_TOL,
    })
}
