//! Time propagation of the master equation and integrated output currents.
//!
//! The integrator is the Dormand–Prince 5(4) pair with FSAL and Hairer's
//! continuous extension, applied to the column-stacked state. Output
//! samples come from the dense interpolant, so the step sequence does not
//! depend on the sampling grid.

use faer::c64;

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Operator, Site};
use crate::liouville::{liouvillian, DensityMatrix, Superoperator};
use crate::model::{build_hamiltonian, collapse_operators, JunctionParams, PumpDirection};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Trace drift that aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;
/// Hard relaxation cap for Fock transport, in units of 1/γ.
pub const RELAXATION_CAP: f64 = 200.0;
/// Required stability of integrated currents under grid doubling.
pub const INTEGRAL_STABILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Points of the uniform output grid, endpoints included.
    pub samples: usize,
    /// Site loss rate used to turn occupations into emission rates.
    pub gamma: f64,
    pub record_g2: bool,
    pub record_min_eigenvalue: bool,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            samples: 2000,
            gamma: 1.0,
            record_g2: false,
            record_min_eigenvalue: false,
            max_steps: 10_000_000,
        }
    }
}

impl EvolveOptions {
    fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
        if !(self.rtol > 0.0) {
            return bad("rtol", format!("must be > 0, got {}", self.rtol));
        }
        if !(self.atol > 0.0) {
            return bad("atol", format!("must be > 0, got {}", self.atol));
        }
        if self.samples < 2 {
            return bad("samples", format!("need at least 2 output points, got {}", self.samples));
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", format!("must be > 0, got {}", self.gamma));
        }
        Ok(())
    }
}

/// Sampled observables of one run. Per-sample g² entries are NaN where the
/// site is dark (occupation below 1e−12).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub n_left: Vec<f64>,
    pub n_right: Vec<f64>,
    pub trace: Vec<f64>,
    pub q_left: Vec<f64>,
    pub q_right: Vec<f64>,
    pub g2_left: Option<Vec<f64>>,
    pub g2_right: Option<Vec<f64>>,
    pub min_eigenvalue: Option<Vec<f64>>,
    pub final_state: DensityMatrix,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn q(&self, site: Site) -> &[f64] {
        match site {
            Site::Left => &self.q_left,
            Site::Right => &self.q_right,
        }
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TransportResult {
    pub q_left: f64,
    pub q_right: f64,
    pub pump: PumpDirection,
    pub horizon: f64,
    pub residual_excitation: f64,
    /// Output grid size at which the integrals stabilized.
    pub samples: usize,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

impl TransportResult {
    pub fn q(&self, site: Site) -> f64 {
        match site {
            Site::Left => self.q_left,
            Site::Right => self.q_right,
        }
    }
}

// Dormand–Prince 5(4) tableau
const A: [&[f64]; 7] = [
    &[],
    &[0.2],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step: endpoints plus the continuous-extension coefficients.
struct Step<'a> {
    t0: f64,
    t1: f64,
    y1: &'a [c64],
    rcont: &'a [Vec<c64>; 5],
}

impl Step<'_> {
    fn interpolate(&self, t: f64, out: &mut [c64]) {
        if t == self.t1 {
            out.copy_from_slice(self.y1);
            return;
        }
        let th = (t - self.t0) / (self.t1 - self.t0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * th) * th1) * th;
        }
    }
}

/// Integrates `dy/dt = L y` on `[0, t_end]`, calling `on_step` after each
/// accepted step. Returning `false` from the callback stops early.
fn integrate(
    l: &Superoperator,
    y0: &[c64],
    t_end: f64,
    opts: &EvolveOptions,
    mut on_step: impl FnMut(&Step) -> Result<bool>,
) -> Result<(usize, usize)> {
    let n = y0.len();
    let d = l.hilbert_dim();
    let mut y = y0.to_vec();
    let mut k: [Vec<c64>; 7] = std::array::from_fn(|_| vec![ZERO; n]);
    let mut ytmp = vec![ZERO; n];
    let mut ynew = vec![ZERO; n];
    let mut rcont: [Vec<c64>; 5] = std::array::from_fn(|_| vec![ZERO; n]);

    l.matvec_into(&y, &mut k[0]);

    // initial step: 1% of the rate at which the initial state moves. Levels
    // the state never reaches play no part, so padding the truncation does
    // not change the step sequence.
    let max_abs = |v: &[c64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rate = max_abs(&k[0]) / max_abs(&y).max(1e-300);
    let mut h = if rate > 0.0 { (0.01 / rate).min(t_end) } else { t_end };

    let mut t = 0.0;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_rejected = false;
    while t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::Stiffness { time: t, step: h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::Stiffness { time: t, step: h });
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, &a) in A[s].iter().enumerate() {
                    if a != 0.0 {
                        acc += k[j][i] * (h * a);
                    }
                }
                ytmp[i] = acc;
            }
            let (_, rest) = k.split_at_mut(s);
            l.matvec_into(&ytmp, &mut rest[0]);
        }
        // stage 7 argument is the fifth-order solution
        ynew.copy_from_slice(&ytmp);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = ZERO;
            for j in 0..7 {
                if E[j] != 0.0 {
                    e += k[j][i] * E[j];
                }
            }
            let sc = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err = err.max((e * h).norm() / sc);
        }

        if err <= 1.0 {
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let b = k[0][i] * h - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = b;
                rcont[3][i] = dy - k[6][i] * h - b;
                let mut acc = ZERO;
                for j in 0..7 {
                    if D[j] != 0.0 {
                        acc += k[j][i] * D[j];
                    }
                }
                rcont[4][i] = acc * h;
            }
            let t1 = if last { t_end } else { t + h };
            let tr: f64 = (0..d).map(|a| ynew[a + d * a].re).sum();
            if (tr - 1.0).abs() > TRACE_DRIFT_LIMIT {
                return Err(Error::IntegrationFailure {
                    time: t1,
                    reason: format!("trace drifted to {tr}"),
                });
            }
            let keep_going = on_step(&Step { t0: t, t1, y1: &ynew, rcont: &rcont })?;
            accepted += 1;
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            t = t1;
            if !keep_going {
                break;
            }
            let mut fac = if err == 0.0 { 10.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok((accepted, rejected))
}

fn validate_state(rho0: &DensityMatrix, dim: usize) -> Result<()> {
    if rho0.dim() != dim {
        return Err(Error::Shape(format!("initial state has dimension {}, space has {dim}", rho0.dim())));
    }
    let tr = rho0.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::InvalidParameter { field: "rho0", reason: format!("trace {tr} differs from 1") });
    }
    if rho0.hermiticity_defect() > 1e-10 {
        return Err(Error::InvalidParameter { field: "rho0", reason: "not Hermitian".into() });
    }
    Ok(())
}

struct SiteWeights {
    n_left: Vec<f64>,
    n_right: Vec<f64>,
}

impl SiteWeights {
    fn new(space: &FockSpace) -> Self {
        let d = space.total_dim();
        let (mut n_left, mut n_right) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for i in 0..d {
            let (l, r) = space.occupations(i);
            n_left.push(l as f64);
            n_right.push(r as f64);
        }
        Self { n_left, n_right }
    }

    /// `(⟨n_L⟩, ⟨n_R⟩, ⟨n_L(n_L−1)⟩, ⟨n_R(n_R−1)⟩, trace)`; all diagonal
    /// in the Fock basis.
    fn moments(&self, y: &[c64]) -> [f64; 5] {
        let d = self.n_left.len();
        let mut m = [0.0; 5];
        for a in 0..d {
            let p = y[a + d * a].re;
            let (l, r) = (self.n_left[a], self.n_right[a]);
            m[0] += l * p;
            m[1] += r * p;
            m[2] += l * (l - 1.0) * p;
            m[3] += r * (r - 1.0) * p;
            m[4] += p;
        }
        m
    }
}

fn g2_or_nan(pairs: f64, n: f64) -> f64 {
    if n > 1e-12 {
        pairs / (n * n)
    } else {
        f64::NAN
    }
}

/// Propagates `ρ0` under the Lindblad generator built from `h` and
/// `collapse` up to `t_end`, sampling observables on a uniform grid.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &Operator,
    collapse: &[Operator],
    space: &FockSpace,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let l = liouvillian(h, collapse)?;
    evolve_superoperator(rho0, &l, space, t_end, opts)
}

pub fn evolve_superoperator(
    rho0: &DensityMatrix,
    l: &Superoperator,
    space: &FockSpace,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter { field: "t_end", reason: format!("must be finite and > 0, got {t_end}") });
    }
    let d = space.total_dim();
    if l.hilbert_dim() != d {
        return Err(Error::Shape(format!("superoperator acts on dimension {}, space has {d}", l.hilbert_dim())));
    }
    validate_state(rho0, d)?;

    let w = SiteWeights::new(space);
    let ns = opts.samples;
    let times: Vec<f64> = (0..ns)
        .map(|i| if i + 1 == ns { t_end } else { t_end * i as f64 / (ns - 1) as f64 })
        .collect();
    let mut traj = Trajectory {
        times: times.clone(),
        n_left: Vec::with_capacity(ns),
        n_right: Vec::with_capacity(ns),
        trace: Vec::with_capacity(ns),
        q_left: Vec::with_capacity(ns),
        q_right: Vec::with_capacity(ns),
        g2_left: opts.record_g2.then(|| Vec::with_capacity(ns)),
        g2_right: opts.record_g2.then(|| Vec::with_capacity(ns)),
        min_eigenvalue: opts.record_min_eigenvalue.then(|| Vec::with_capacity(ns)),
        final_state: rho0.clone(),
        steps_accepted: 0,
        steps_rejected: 0,
    };

    let record = |y: &[c64], traj: &mut Trajectory| -> Result<()> {
        let [nl, nr, pl, pr, tr] = w.moments(y);
        traj.n_left.push(nl);
        traj.n_right.push(nr);
        traj.trace.push(tr);
        traj.q_left.push(opts.gamma * nl);
        traj.q_right.push(opts.gamma * nr);
        if let Some(g) = traj.g2_left.as_mut() {
            g.push(g2_or_nan(pl, nl));
        }
        if let Some(g) = traj.g2_right.as_mut() {
            g.push(g2_or_nan(pr, nr));
        }
        if let Some(m) = traj.min_eigenvalue.as_mut() {
            m.push(DensityMatrix::from_vec(y, d)?.min_eigenvalue()?);
        }
        Ok(())
    };

    let y0 = rho0.to_vec();
    record(&y0, &mut traj)?;
    let mut next = 1;
    let mut buf = vec![ZERO; y0.len()];
    let mut final_y = y0.clone();
    let (acc, rej) = integrate(l, &y0, t_end, opts, |step| {
        while next < ns && times[next] <= step.t1 {
            step.interpolate(times[next], &mut buf);
            record(&buf, &mut traj)?;
            next += 1;
        }
        if step.t1 >= t_end {
            final_y.copy_from_slice(step.y1);
        }
        Ok(true)
    })?;
    debug_assert_eq!(next, ns);
    traj.final_state = DensityMatrix::from_vec(&final_y, d)?;
    traj.steps_accepted = acc;
    traj.steps_rejected = rej;
    Ok(traj)
}

/// Trapezoidal integral of the emission rate of `site` over the trajectory.
pub fn integrated_current(traj: &Trajectory, site: Site) -> Result<f64> {
    trapezoid(&traj.times, traj.q(site))
}

pub fn trapezoid(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Data(format!("{} times but {} samples", times.len(), values.len())));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Data(format!("time grid not increasing at {} -> {}", w[0], w[1])));
    }
    Ok(times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    /// Relaxation threshold on the total excitation `⟨n_L + n_R⟩`.
    pub epsilon: f64,
    pub cap: f64,
    pub integrator: EvolveOptions,
    /// Extra Fock levels per site beyond `n_init`.
    pub truncation_padding: usize,
    pub max_samples: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            cap: RELAXATION_CAP,
            integrator: EvolveOptions { record_min_eigenvalue: true, ..EvolveOptions::default() },
            truncation_padding: 0,
            max_samples: 1 << 20,
        }
    }
}

/// Relaxation of an idealized Fock state `|n_init⟩` prepared in the pumped
/// site, with the drive switched off. Returns the photons emitted by each
/// site until the residual excitation falls below `epsilon`.
pub fn fock_transport(
    params: &JunctionParams,
    n_init: usize,
    pump: PumpDirection,
    opts: &TransportOptions,
) -> Result<TransportResult> {
    if n_init < 1 {
        return Err(Error::InvalidParameter { field: "n_init", reason: "must be >= 1".into() });
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidParameter { field: "epsilon", reason: format!("must be > 0, got {}", opts.epsilon) });
    }
    let params = JunctionParams { pump, ..params.undriven() };
    let space = FockSpace::symmetric(n_init + opts.truncation_padding)?;
    let h = build_hamiltonian(&params, &space, false)?;
    let l = liouvillian(&h, &collapse_operators(&params, &space)?)?;
    let iopts = EvolveOptions { gamma: params.gamma, ..opts.integrator };
    iopts.validate()?;

    let k0 = match pump.driven_site() {
        Site::Left => space.index(n_init, 0),
        Site::Right => space.index(0, n_init),
    };
    let rho0 = DensityMatrix::basis_state(space.total_dim(), k0)?;

    // first pass: find the horizon where the junction has emptied
    let w = SiteWeights::new(&space);
    let mut horizon = opts.cap;
    let mut residual = f64::INFINITY;
    integrate(&l, &rho0.to_vec(), opts.cap, &iopts, |step| {
        let [nl, nr, ..] = w.moments(step.y1);
        residual = nl + nr;
        if residual < opts.epsilon {
            horizon = step.t1;
            return Ok(false);
        }
        Ok(true)
    })?;
    if !(residual < opts.epsilon) {
        return Err(Error::IncompleteRelaxation { horizon: opts.cap, residual });
    }

    // one run on a fine grid; the coarser grids of the refinement sequence
    // N, 2N−1, 4N−3, ... are nested in it, so each 2× refinement is just a
    // smaller stride through the same samples
    let mut levels = 4u32;
    let (traj, q, samples) = loop {
        let fine = (iopts.samples - 1) * (1usize << levels) + 1;
        if fine > opts.max_samples {
            return Err(Error::IntegrationFailure {
                time: horizon,
                reason: format!("integrated currents not stable at {fine} samples"),
            });
        }
        let traj = evolve_superoperator(&rho0, &l, &space, horizon, &EvolveOptions { samples: fine, ..iopts })?;
        let at = |level: u32| -> Result<[f64; 2]> {
            let stride = 1usize << (levels - level);
            let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
            let t = pick(&traj.times);
            Ok([trapezoid(&t, &pick(&traj.q_left))?, trapezoid(&t, &pick(&traj.q_right))?])
        };
        let mut q = at(0)?;
        let mut found = None;
        for level in 1..=levels {
            let qf = at(level)?;
            let change = (qf[0] - q[0]).abs().max((qf[1] - q[1]).abs());
            q = qf;
            if change < INTEGRAL_STABILITY_TOL {
                found = Some((q, (iopts.samples - 1) * (1usize << level) + 1));
                break;
            }
        }
        match found {
            Some((q, n)) => break (traj, q, n),
            None => levels += 3,
        }
    };

    let [nl, nr, ..] = w.moments(&traj.final_state.to_vec());
    let min_eigenvalue = traj
        .min_eigenvalue
        .as_ref()
        .map(|m| m.iter().copied().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NAN);
    Ok(TransportResult {
        q_left: q[0],
        q_right: q[1],
        pump,
        horizon,
        residual_excitation: nl + nr,
        samples,
        max_trace_drift: traj.max_trace_drift(),
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::annihilation;

    fn single_mode(n_max: usize) -> (FockSpace, Operator, Vec<Operator>) {
        // a single cavity is the left site of a junction whose right site
        // is kept empty
        let space = FockSpace::new(n_max, 1).unwrap();
        let a = space.annihilation(Site::Left);
        (space, Operator::zeros(2 * (n_max + 1)), vec![a])
    }

    #[test]
    fn single_photon_decays_exponentially() {
        let (space, h, cs) = single_mode(1);
        let rho0 = DensityMatrix::basis_state(space.total_dim(), space.index(1, 0)).unwrap();
        let opts = EvolveOptions { samples: 201, ..EvolveOptions::default() };
        let traj = evolve(&rho0, &h, &cs, &space, 5.0, &opts).unwrap();
        let worst = traj
            .times
            .iter()
            .zip(&traj.n_left)
            .map(|(t, n)| (n - (-t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert_eq!(*traj.times.last().unwrap(), 5.0);
    }

    #[test]
    fn vacuum_stays_vacuum() {
        let (space, h, cs) = single_mode(2);
        let rho0 = DensityMatrix::basis_state(space.total_dim(), 0).unwrap();
        let traj = evolve(&rho0, &h, &cs, &space, 3.0, &EvolveOptions::default()).unwrap();
        assert!(traj.n_left.iter().chain(&traj.n_right).all(|&n| n == 0.0));
        assert!(traj.trace.iter().all(|&t| t == 1.0));
        assert_eq!(traj.final_state, rho0);
    }

    #[test]
    fn one_photon_is_emitted_once() {
        let (space, h, cs) = single_mode(1);
        let rho0 = DensityMatrix::basis_state(space.total_dim(), space.index(1, 0)).unwrap();
        // the trapezoid bias is about h²/12 here, so the grid has to be fine
        let opts = EvolveOptions { samples: 20001, ..EvolveOptions::default() };
        let traj = evolve(&rho0, &h, &cs, &space, 30.0, &opts).unwrap();
        let q = integrated_current(&traj, Site::Left).unwrap();
        assert!((q - 1.0).abs() < 1e-6, "{q}");
        assert_eq!(integrated_current(&traj, Site::Right).unwrap(), 0.0);
    }

    #[test]
    fn trapezoid_rejects_bad_grids() {
        assert!(matches!(trapezoid(&[0.0, 1.0, 1.0], &[0.0; 3]), Err(Error::Data(_))));
        assert!(matches!(trapezoid(&[0.0, 2.0, 1.0], &[0.0; 3]), Err(Error::Data(_))));
        assert!(matches!(trapezoid(&[0.0, 1.0], &[0.0; 3]), Err(Error::Data(_))));
        assert_eq!(trapezoid(&[0.0, 1.0, 3.0], &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(trapezoid(&[0.0, 1.0, 3.0], &[1.0, 1.0, 2.0]).unwrap(), 4.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let (space, h, cs) = single_mode(1);
        let rho0 = DensityMatrix::basis_state(space.total_dim(), 0).unwrap();
        let o = EvolveOptions::default();
        assert!(evolve(&rho0, &h, &cs, &space, 0.0, &o).is_err());
        assert!(evolve(&rho0, &h, &cs, &space, 1.0, &EvolveOptions { rtol: 0.0, ..o }).is_err());
        let bad = DensityMatrix::new(faer::Mat::zeros(4, 4)).unwrap();
        assert!(matches!(
            evolve(&bad, &h, &cs, &space, 1.0, &o),
            Err(Error::InvalidParameter { field: "rho0", .. })
        ));
        let p = JunctionParams::default();
        assert!(fock_transport(&p, 0, PumpDirection::LeftToRight, &TransportOptions::default()).is_err());
    }

    #[test]
    fn stiff_problem_reports_step_underflow() {
        let (space, _, cs) = single_mode(1);
        let h = space.number(Site::Left).scale_real(1e13);
        let rho0 = DensityMatrix::new(faer::Mat::from_fn(4, 4, |a, b| {
            let k = [0, space.index(1, 0)];
            if k.contains(&a) && k.contains(&b) { c64::new(0.5, 0.0) } else { ZERO }
        }))
        .unwrap();
        let opts = EvolveOptions { max_steps: 1000, ..EvolveOptions::default() };
        assert!(matches!(evolve(&rho0, &h, &cs, &space, 1.0, &opts), Err(Error::Stiffness { .. })));
    }

    #[test]
    fn isolated_fock_pair_emits_from_pumped_site() {
        let p = JunctionParams::new(0.0, 0.0, 10.0, 0.0, 0.0);
        let r = fock_transport(&p, 2, PumpDirection::RightToLeft, &TransportOptions::default()).unwrap();
        assert_eq!(r.q_left, 0.0);
        assert!((r.q_right - 2.0).abs() < 1e-6);
        assert!(r.residual_excitation < 1e-7);
        assert!(r.max_trace_drift < 1e-7);
        assert!(r.min_eigenvalue > -1e-7);
    }

    #[test]
    fn coupled_fock_pair_conserves_quanta() {
        let p = JunctionParams::new(0.5, -0.5, 10.0, 1.0, 0.0);
        let r = fock_transport(&p, 2, PumpDirection::LeftToRight, &TransportOptions::default()).unwrap();
        assert!((r.q_left + r.q_right - 2.0).abs() < 1e-6);
        assert!(r.q_right > 0.0);
    }

    #[test]
    fn cap_without_relaxation_is_reported() {
        let p = JunctionParams::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let opts = TransportOptions { cap: 2.0, ..TransportOptions::default() };
        match fock_transport(&p, 1, PumpDirection::LeftToRight, &opts) {
            Err(Error::IncompleteRelaxation { horizon, residual }) => {
                assert_eq!(horizon, 2.0);
                assert!(residual > 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn annihilation_matches_single_mode_helper() {
        let (space, _, cs) = single_mode(3);
        let a = annihilation(3).unwrap();
        assert_eq!(cs[0].get(space.index(0, 0), space.index(1, 0)), a.get(0, 1));
    }
}
