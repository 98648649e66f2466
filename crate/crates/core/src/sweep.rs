//! Parameter scans: laser-frequency scans, frequency-optimized diode
//! efficiency and Fock-transport sweeps.
//!
//! Grid points run concurrently on the rayon pool. Every point is computed
//! independently and single-threaded, and rayon's indexed collect keeps grid
//! order, so tables do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fock_transport, TransportOptions, TransportResult};
use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::model::{bare_eigenanalysis, JunctionParams, PumpDirection, ScanOffset};
use crate::observables::{cw_diode_figures, CurrentMatrix, DiodeFigures, G2Matrix};

/// Golden-section refinement stops once the bracket is this narrow.
pub const FREQUENCY_RESOLUTION: f64 = 1e-3;
/// Allowed defect of `Q_L + Q_R` against the prepared photon number.
pub const CONSERVATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariable {
    OmegaG,
    J,
    DeltaRl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScanMode {
    Cw,
    Fock { n_init: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub variable: ScanVariable,
    pub grid: Vec<f64>,
    pub base: JunctionParams,
    pub offset: ScanOffset,
    pub mode: ScanMode,
    pub space: FockSpace,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::InvalidParameter {
                field: "grid",
                reason: format!("needs at least 2 points, got {}", self.grid.len()),
            });
        }
        if let Some(w) = self.grid.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter {
                field: "grid",
                reason: format!("must be strictly increasing ({} then {})", w[0], w[1]),
            });
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter { field: "grid", reason: "contains a non-finite value".into() });
        }
        self.base.validate()
    }

    fn require(&self, variable: ScanVariable, cw: bool) -> Result<()> {
        self.validate()?;
        if self.variable != variable {
            return Err(Error::InvalidParameter {
                field: "variable",
                reason: format!("this scan needs {variable:?}, got {:?}", self.variable),
            });
        }
        if cw != matches!(self.mode, ScanMode::Cw) {
            return Err(Error::InvalidParameter {
                field: "mode",
                reason: format!("{:?} is not valid for this scan", self.mode),
            });
        }
        Ok(())
    }
}

/// Outcome of one grid point. Failed points keep their grid value and carry
/// the error text instead of aborting the scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Flagged(String),
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok)
    }

    /// Single-token label for tabular output.
    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Flagged(r) => format!("flagged:{}", r.replace([',', '\n'], ";")),
            RowStatus::Failed(r) => format!("failed:{}", r.replace([',', '\n'], ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub omega_g: f64,
    pub r: f64,
    /// g² of each site's emission under left pumping.
    pub g2_left: f64,
    pub g2_right: f64,
    pub nl_ground: f64,
    pub nl_excited: f64,
    pub status: RowStatus,
    pub figures: Option<DiodeFigures>,
    pub eigen_truncation_shift: f64,
    pub eigen_degenerate: bool,
}

/// One row of a frequency scan; errors are recorded in the row status.
pub fn frequency_point(spec: &ScanSpec, omega_g: f64) -> FrequencyRow {
    let params = ScanOffset::new(omega_g, spec.offset.delta_rl).apply(&spec.base);
    let mut row = FrequencyRow {
        omega_g,
        r: f64::NAN,
        g2_left: f64::NAN,
        g2_right: f64::NAN,
        nl_ground: f64::NAN,
        nl_excited: f64::NAN,
        status: RowStatus::Ok,
        figures: None,
        eigen_truncation_shift: f64::NAN,
        eigen_degenerate: false,
    };
    match bare_eigenanalysis(&params, &spec.space, 2) {
        Ok(eig) => {
            row.nl_ground = eig.levels[0].n_left;
            row.nl_excited = eig.levels[1].n_left;
            row.eigen_truncation_shift = eig.truncation_shift;
            row.eigen_degenerate = eig.degenerate;
        }
        Err(e) => row.status = RowStatus::Failed(e.to_string()),
    }
    match cw_diode_figures(&params, &spec.space) {
        Ok(f) => {
            row.r = f.r;
            row.g2_left = f.g2.left_fwd.unwrap_or(f64::NAN);
            row.g2_right = f.g2.right_fwd.unwrap_or(f64::NAN);
            row.figures = Some(f);
        }
        Err(e) => row.status = RowStatus::Failed(e.to_string()),
    }
    if row.status.is_ok() && row.eigen_degenerate {
        row.status = RowStatus::Flagged("degenerate bare levels".into());
    }
    row
}

/// CW scan of the laser frequency at fixed `Δ_RL`, with the two lowest bare
/// eigenstates analysed at every point.
pub fn frequency_scan(spec: &ScanSpec) -> Result<Vec<FrequencyRow>> {
    spec.require(ScanVariable::OmegaG, true)?;
    Ok(spec.grid.par_iter().map(|&w| frequency_point(spec, w)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    /// `R·T` in this direction, signed so that smaller is better.
    fn cost(self, f: &DiodeFigures) -> f64 {
        match self {
            Direction::Left => f.rt_left,
            Direction::Right => -f.rt_right,
        }
    }

    pub fn efficiency(self, f: &DiodeFigures) -> f64 {
        match self {
            Direction::Left => f.t_left,
            Direction::Right => f.t_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub omega_star: f64,
    /// `R·T_L` for left (minimized), `R·T_R` for right (maximized).
    pub objective: f64,
    pub r_at_star: f64,
    pub t_at_star: f64,
    pub evaluations: usize,
    pub direction: Direction,
}

/// CW diode figures as a function of the laser offset `ω_g`, optionally
/// memoized so that both directions can share one set of solves.
pub struct FrequencyObjective<'a> {
    base: JunctionParams,
    delta_rl: f64,
    space: &'a FockSpace,
    cache: std::sync::Mutex<Vec<(f64, Option<DiodeFigures>)>>,
}

impl<'a> FrequencyObjective<'a> {
    pub fn new(base: JunctionParams, delta_rl: f64, space: &'a FockSpace) -> Self {
        Self { base, delta_rl, space, cache: std::sync::Mutex::new(Vec::new()) }
    }

    pub fn figures(&self, omega_g: f64) -> Option<DiodeFigures> {
        if let Some(hit) = self.cache.lock().unwrap().iter().find(|(w, _)| w.to_bits() == omega_g.to_bits()) {
            return hit.1;
        }
        let p = ScanOffset::new(omega_g, self.delta_rl).apply(&self.base);
        let f = cw_diode_figures(&p, self.space).ok();
        self.cache.lock().unwrap().push((omega_g, f));
        f
    }
}

/// Coarse uniform scan of `bounds` followed by golden-section refinement
/// around the best coarse point.
pub fn optimize_frequency(
    objective: &FrequencyObjective,
    direction: Direction,
    bounds: (f64, f64),
    coarse_points: usize,
) -> Result<OptimizationResult> {
    let (lo, hi) = bounds;
    if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
        return Err(Error::InvalidParameter { field: "bounds", reason: format!("need finite lo < hi, got ({lo}, {hi})") });
    }
    if coarse_points < 8 {
        return Err(Error::InvalidParameter {
            field: "coarse_points",
            reason: format!("must be >= 8, got {coarse_points}"),
        });
    }
    let step = (hi - lo) / (coarse_points - 1) as f64;
    let grid: Vec<f64> = (0..coarse_points)
        .map(|i| if i + 1 == coarse_points { hi } else { lo + step * i as f64 })
        .collect();
    let coarse: Vec<Option<DiodeFigures>> = grid.par_iter().map(|&w| objective.figures(w)).collect();
    let mut evaluations = coarse_points;

    let mut best: Option<(usize, f64)> = None;
    for (i, f) in coarse.iter().enumerate() {
        if let Some(f) = f {
            let c = direction.cost(f);
            // strict comparison keeps the smallest frequency on ties
            if c.is_finite() && best.map_or(true, |(_, b)| c < b) {
                best = Some((i, c));
            }
        }
    }
    let (ib, _) = best.ok_or(Error::OptimizationFailure)?;
    let mut best_w = grid[ib];
    let mut best_f = coarse[ib].unwrap();

    let mut consider = |w: f64, evaluations: &mut usize| -> f64 {
        *evaluations += 1;
        match objective.figures(w) {
            Some(f) if direction.cost(&f).is_finite() => {
                let c = direction.cost(&f);
                if c < direction.cost(&best_f) || (c == direction.cost(&best_f) && w < best_w) {
                    best_w = w;
                    best_f = f;
                }
                c
            }
            _ => f64::INFINITY,
        }
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[ib.saturating_sub(1)];
    let mut b = grid[(ib + 1).min(coarse_points - 1)];
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = consider(x1, &mut evaluations);
    let mut f2 = consider(x2, &mut evaluations);
    while b - a > FREQUENCY_RESOLUTION {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = consider(x1, &mut evaluations);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = consider(x2, &mut evaluations);
        }
    }

    let t = direction.efficiency(&best_f);
    Ok(OptimizationResult {
        omega_star: best_w,
        objective: best_f.r * t,
        r_at_star: best_f.r,
        t_at_star: t,
        evaluations,
        direction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub j: f64,
    pub u: f64,
    pub delta_rl: f64,
    pub direction: Direction,
    pub result: Option<OptimizationResult>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerSettings {
    pub bounds: (f64, f64),
    pub coarse_points: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { bounds: (-20.0, 20.0), coarse_points: 81 }
    }
}

/// Frequency-optimized diode figures versus `J`, in both directions. The
/// two directions at one `J` share their steady-state solves.
pub fn efficiency_scan(spec: &ScanSpec, settings: &OptimizerSettings) -> Result<Vec<EfficiencyRow>> {
    spec.require(ScanVariable::J, true)?;
    let rows: Vec<[EfficiencyRow; 2]> = spec
        .grid
        .par_iter()
        .map(|&j| {
            let base = JunctionParams { j, ..spec.base };
            let obj = FrequencyObjective::new(base, spec.offset.delta_rl, &spec.space);
            [Direction::Left, Direction::Right].map(|direction| {
                let res = optimize_frequency(&obj, direction, settings.bounds, settings.coarse_points);
                EfficiencyRow {
                    j,
                    u: spec.base.u,
                    delta_rl: spec.offset.delta_rl,
                    direction,
                    status: match &res {
                        Ok(_) => RowStatus::Ok,
                        Err(e) => RowStatus::Failed(e.to_string()),
                    },
                    result: res.ok(),
                }
            })
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Detunings on the Fock-transport axis: `Δ_L = ω − Δ_RL/2`, `Δ_R = ω + Δ_RL/2`,
/// so that `Δ_RL = Δ_R − Δ_L` and the Kerr shift of the left site is
/// compensated at `Δ_RL = U`.
pub fn fock_axis_params(base: &JunctionParams, delta_rl: f64, omega: f64) -> JunctionParams {
    JunctionParams { delta_left: omega - delta_rl / 2.0, delta_right: omega + delta_rl / 2.0, ..*base }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockRow {
    pub delta_rl: f64,
    pub j: f64,
    pub r: f64,
    pub t_right: f64,
    pub t_left: f64,
    pub q: Option<CurrentMatrix>,
    pub forward: Option<TransportResult>,
    pub backward: Option<TransportResult>,
    pub status: RowStatus,
}

/// One row of a Fock sweep; errors are recorded in the row status.
pub fn fock_point(spec: &ScanSpec, n_init: usize, delta_rl: f64, opts: &TransportOptions) -> FockRow {
    let params = fock_axis_params(&spec.base, delta_rl, spec.offset.omega_g);
    let mut row = FockRow {
        delta_rl,
        j: params.j,
        r: f64::NAN,
        t_right: f64::NAN,
        t_left: f64::NAN,
        q: None,
        forward: None,
        backward: None,
        status: RowStatus::Ok,
    };
    let run = |pump| fock_transport(&params, n_init, pump, opts);
    let (fwd, bwd) = match (run(PumpDirection::LeftToRight), run(PumpDirection::RightToLeft)) {
        (Ok(f), Ok(b)) => (f, b),
        (Err(e), _) | (_, Err(e)) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    };
    let q = CurrentMatrix::from_directions([fwd.q_left, fwd.q_right], [bwd.q_left, bwd.q_right]);
    row.q = Some(q);
    row.forward = Some(fwd);
    row.backward = Some(bwd);
    let none = G2Matrix { left_fwd: None, right_fwd: None, left_bwd: None, right_bwd: None };
    match DiodeFigures::from_currents(q, none) {
        Ok(f) => {
            row.r = f.r;
            row.t_right = f.t_right;
            row.t_left = f.t_left;
        }
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    }
    let n = n_init as f64;
    let defect = (fwd.q_left + fwd.q_right - n).abs().max((bwd.q_left + bwd.q_right - n).abs());
    if defect >= CONSERVATION_TOL {
        row.status = RowStatus::Flagged(format!("photon-number defect {defect:e}"));
    }
    row
}

/// Pulsed transport of an `n_init`-photon Fock state versus `Δ_RL`, one row
/// per grid point.
pub fn fock_sweep(spec: &ScanSpec, opts: &TransportOptions) -> Result<Vec<FockRow>> {
    spec.require(ScanVariable::DeltaRl, false)?;
    let ScanMode::Fock { n_init } = spec.mode else { unreachable!() };
    Ok(spec.grid.par_iter().map(|&x| fock_point(spec, n_init, x, opts)).collect())
}

/// `count` evenly spaced points from `start` to `stop` inclusive, each
/// computed directly from its index so grids are reproducible bit for bit.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// `count` logarithmically spaced points from `start` to `stop` inclusive.
pub fn logspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    let (a, b) = (start.log10(), stop.log10());
    let mut g: Vec<f64> = linspace(a, b, count).into_iter().map(|e| 10f64.powf(e)).collect();
    // pin the endpoints so they survive the log/exp round trip exactly
    if let Some(first) = g.first_mut() {
        *first = start;
    }
    if count > 1 {
        g[count - 1] = stop;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variable: ScanVariable, grid: Vec<f64>, mode: ScanMode) -> ScanSpec {
        ScanSpec {
            variable,
            grid,
            base: JunctionParams::new(0.0, 0.0, 1.0, 0.5, 0.3),
            offset: ScanOffset::new(0.0, 2.0),
            mode,
            space: FockSpace::new(3, 3).unwrap(),
        }
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = linspace(-15.0, 5.0, 201);
        assert_eq!(g.len(), 201);
        assert_eq!((g[0], g[200]), (-15.0, 5.0));
        assert!((g[50] + 10.0).abs() < 1e-12);
        let l = logspace(0.1, 100.0, 30);
        assert_eq!((l[0], l[29]), (0.1, 100.0));
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn spec_validation() {
        let s = spec(ScanVariable::OmegaG, vec![0.0], ScanMode::Cw);
        assert!(matches!(s.validate(), Err(Error::InvalidParameter { field: "grid", .. })));
        let s = spec(ScanVariable::OmegaG, vec![0.0, 0.0], ScanMode::Cw);
        assert!(s.validate().is_err());
        let s = spec(ScanVariable::J, vec![0.0, 1.0], ScanMode::Cw);
        assert!(matches!(frequency_scan(&s), Err(Error::InvalidParameter { field: "variable", .. })));
        let s = spec(ScanVariable::DeltaRl, vec![0.0, 1.0], ScanMode::Cw);
        assert!(matches!(
            fock_sweep(&s, &TransportOptions::default()),
            Err(Error::InvalidParameter { field: "mode", .. })
        ));
    }

    #[test]
    fn scan_rows_follow_grid_order() {
        let s = spec(ScanVariable::OmegaG, vec![-1.0, 0.0, 0.5], ScanMode::Cw);
        let rows = frequency_scan(&s).unwrap();
        assert_eq!(rows.iter().map(|r| r.omega_g).collect::<Vec<_>>(), vec![-1.0, 0.0, 0.5]);
        assert!(rows.iter().all(|r| r.status.is_ok() && r.r.abs() <= 1.0));
    }

    #[test]
    fn failed_points_do_not_abort() {
        // without tunnelling nothing is transmitted and R is undefined
        let mut s = spec(ScanVariable::OmegaG, vec![-1.0, 0.0], ScanMode::Cw);
        s.base.j = 0.0;
        let rows = frequency_scan(&s).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| matches!(r.status, RowStatus::Failed(_)) && r.r.is_nan()));
        assert!(rows[0].status.label().starts_with("failed:"));
        assert!(!rows[0].status.label().contains(','));
    }

    #[test]
    fn optimizer_never_loses_to_coarse_grid() {
        let space = FockSpace::new(3, 3).unwrap();
        let obj = FrequencyObjective::new(JunctionParams::new(0.0, 0.0, 2.0, 1.0, 0.5), 4.0, &space);
        for dir in [Direction::Left, Direction::Right] {
            let res = optimize_frequency(&obj, dir, (-6.0, 6.0), 13).unwrap();
            let coarse_best = linspace(-6.0, 6.0, 13)
                .into_iter()
                .filter_map(|w| obj.figures(w))
                .map(|f| dir.cost(&f))
                .fold(f64::INFINITY, f64::min);
            let sign = if dir == Direction::Left { 1.0 } else { -1.0 };
            assert!(sign * res.objective <= coarse_best);
            assert!((res.objective - res.r_at_star * res.t_at_star).abs() < 1e-12);
            assert!(res.evaluations > 13);
        }
    }

    #[test]
    fn optimizer_input_checks() {
        let space = FockSpace::new(1, 1).unwrap();
        let obj = FrequencyObjective::new(JunctionParams::new(0.0, 0.0, 1.0, 1.0, 0.1), 0.0, &space);
        assert!(optimize_frequency(&obj, Direction::Left, (0.0, 1.0), 7).is_err());
        assert!(optimize_frequency(&obj, Direction::Left, (1.0, 0.0), 8).is_err());
        let dark = FrequencyObjective::new(JunctionParams::new(0.0, 0.0, 1.0, 0.0, 0.1), 0.0, &space);
        assert_eq!(optimize_frequency(&dark, Direction::Right, (0.0, 1.0), 8), Err(Error::OptimizationFailure));
    }

    #[test]
    fn fock_axis_convention() {
        let p = fock_axis_params(&JunctionParams::default(), 10.0, 1.0);
        assert_eq!((p.delta_left, p.delta_right), (-4.0, 6.0));
    }

    #[test]
    fn fock_rows_conserve_photons() {
        let mut s = spec(ScanVariable::DeltaRl, vec![0.0, 10.0], ScanMode::Fock { n_init: 2 });
        s.base.u = 10.0;
        s.base.j = 1.0;
        let rows = fock_sweep(&s, &TransportOptions::default()).unwrap();
        for row in &rows {
            assert!(row.status.is_ok(), "{:?}", row.status);
            let q = row.q.unwrap();
            assert!((q.left_fwd + q.right_fwd - 2.0).abs() < CONSERVATION_TOL);
            assert!((q.left_bwd + q.right_bwd - 2.0).abs() < CONSERVATION_TOL);
        }
    }
}
