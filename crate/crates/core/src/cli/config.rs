//! Run configuration: preset defaults, flat TOML files and command-line
//! overrides, merged in that order and validated before any computation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    /// CW laser-frequency scan (fig2 layout).
    Frequency,
    /// Frequency-optimized R·T versus J (fig3 layout).
    Efficiency,
    /// Pulsed Fock-state transport versus Δ_RL (fig4 layout).
    Fock,
    /// A single CW point at `omega_g` (fig2 layout, one row).
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved configuration. All rates are in units of γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scan: ScanKind,
    pub u: f64,
    pub j: f64,
    pub f: f64,
    pub delta_rl: f64,
    pub omega_g: f64,
    pub n_max_left: usize,
    pub n_max_right: usize,
    /// Scanned variable's grid; ignored by `point` scans.
    pub grid_start: f64,
    pub grid_stop: f64,
    pub grid_points: usize,
    pub grid_spacing: Spacing,
    /// Kerr strengths for efficiency scans (one curve per entry).
    pub u_list: Vec<f64>,
    /// Inter-resonator detunings for efficiency scans.
    pub delta_rl_list: Vec<f64>,
    /// Tunnel couplings for Fock sweeps.
    pub j_list: Vec<f64>,
    pub opt_lo: f64,
    pub opt_hi: f64,
    pub opt_coarse_points: usize,
    pub n_init: usize,
    pub epsilon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
    /// Re-run representative points with both cutoffs raised by two.
    pub truncation_check: bool,
    pub format: OutputFormat,
}

impl RunConfig {
    fn common() -> Self {
        Self {
            scan: ScanKind::Frequency,
            u: 1.0,
            j: 0.1,
            f: 0.5,
            delta_rl: 20.0,
            omega_g: 0.0,
            n_max_left: 6,
            n_max_right: 6,
            grid_start: -15.0,
            grid_stop: 5.0,
            grid_points: 201,
            grid_spacing: Spacing::Linear,
            u_list: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            delta_rl_list: vec![20.0, 0.0],
            j_list: vec![1.0, 3.0, 10.0, 30.0, 100.0],
            opt_lo: -20.0,
            opt_hi: 20.0,
            opt_coarse_points: 81,
            n_init: 2,
            epsilon: 1e-7,
            rtol: 1e-8,
            atol: 1e-10,
            samples: 2000,
            truncation_check: true,
            format: OutputFormat::Csv,
        }
    }

    pub fn fig2() -> Self {
        Self::common()
    }

    pub fn fig3() -> Self {
        Self {
            scan: ScanKind::Efficiency,
            n_max_left: 4,
            n_max_right: 4,
            grid_start: 0.1,
            grid_stop: 100.0,
            grid_points: 30,
            grid_spacing: Spacing::Log,
            ..Self::common()
        }
    }

    pub fn fig4() -> Self {
        Self {
            scan: ScanKind::Fock,
            u: 10.0,
            f: 0.0,
            delta_rl: 0.0,
            n_max_left: 2,
            n_max_right: 2,
            grid_start: -5.0,
            grid_stop: 20.0,
            grid_points: 101,
            ..Self::common()
        }
    }

    pub fn point() -> Self {
        Self { scan: ScanKind::Point, omega_g: -10.0, ..Self::common() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig2" => Some(Self::fig2()),
            "fig3" => Some(Self::fig3()),
            "fig4" => Some(Self::fig4()),
            _ => None,
        }
    }

    pub fn defaults_for(scan: ScanKind) -> Self {
        match scan {
            ScanKind::Frequency => Self::fig2(),
            ScanKind::Efficiency => Self::fig3(),
            ScanKind::Fock => Self::fig4(),
            ScanKind::Point => Self::point(),
        }
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = &o.$field { self.$field = v.clone(); } )* };
        }
        take!(
            u, j, f, delta_rl, omega_g, n_max_left, n_max_right, grid_start, grid_stop, grid_points,
            grid_spacing, u_list, delta_rl_list, j_list, opt_lo, opt_hi, opt_coarse_points, n_init,
            epsilon, rtol, atol, samples, truncation_check, format
        );
        // a scalar given for a listed parameter means a one-entry list
        match self.scan {
            ScanKind::Fock if o.j.is_some() && o.j_list.is_none() => self.j_list = vec![self.j],
            ScanKind::Efficiency => {
                if o.u.is_some() && o.u_list.is_none() {
                    self.u_list = vec![self.u];
                }
                if o.delta_rl.is_some() && o.delta_rl_list.is_none() {
                    self.delta_rl_list = vec![self.delta_rl];
                }
            }
            _ => {}
        }
    }

    /// Checks every field against its precondition; the message names the
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        fn fail(key: &str, msg: impl std::fmt::Display) -> Result<()> {
            Err(Error::Config(format!("`{key}`: {msg}")))
        }
        let finite = [
            ("u", self.u),
            ("j", self.j),
            ("f", self.f),
            ("delta_rl", self.delta_rl),
            ("omega_g", self.omega_g),
            ("grid_start", self.grid_start),
            ("grid_stop", self.grid_stop),
            ("opt_lo", self.opt_lo),
            ("opt_hi", self.opt_hi),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return fail(key, format!("must be finite, got {v}"));
            }
        }
        for (key, v) in [("n_max_left", self.n_max_left), ("n_max_right", self.n_max_right)] {
            if v < 1 {
                return fail(key, format!("truncation must keep at least one excited level (n_max >= 1), got {v}"));
            }
        }
        if self.u < 0.0 {
            return fail("u", format!("must be >= 0, got {}", self.u));
        }
        if self.j < 0.0 {
            return fail("j", format!("must be >= 0, got {}", self.j));
        }
        let cw = matches!(self.scan, ScanKind::Frequency | ScanKind::Efficiency | ScanKind::Point);
        if cw && !(self.f > 0.0) {
            return fail("f", format!("continuous pumping needs f > 0, got {}", self.f));
        }
        if self.scan != ScanKind::Point {
            if self.grid_points < 2 {
                return fail("grid_points", format!("must be >= 2, got {}", self.grid_points));
            }
            if !(self.grid_stop > self.grid_start) {
                return fail("grid_stop", format!("must exceed grid_start ({} <= {})", self.grid_stop, self.grid_start));
            }
            if self.grid_spacing == Spacing::Log && !(self.grid_start > 0.0) {
                return fail("grid_start", "log spacing needs a positive start");
            }
        }
        for (key, list) in [("u_list", &self.u_list), ("delta_rl_list", &self.delta_rl_list), ("j_list", &self.j_list)] {
            if list.iter().any(|v| !v.is_finite()) {
                return fail(key, "entries must be finite");
            }
        }
        if self.scan == ScanKind::Efficiency {
            if self.u_list.is_empty() || self.delta_rl_list.is_empty() {
                return fail(if self.u_list.is_empty() { "u_list" } else { "delta_rl_list" }, "must not be empty");
            }
            if let Some(u) = self.u_list.iter().find(|&&u| u < 0.0) {
                return fail("u_list", format!("entries must be >= 0, got {u}"));
            }
            if !(self.opt_hi > self.opt_lo) {
                return fail("opt_hi", format!("must exceed opt_lo ({} <= {})", self.opt_hi, self.opt_lo));
            }
            if self.opt_coarse_points < 8 {
                return fail("opt_coarse_points", format!("must be >= 8, got {}", self.opt_coarse_points));
            }
        }
        if self.scan == ScanKind::Fock {
            if self.j_list.is_empty() {
                return fail("j_list", "must not be empty");
            }
            if let Some(j) = self.j_list.iter().find(|&&j| j < 0.0) {
                return fail("j_list", format!("entries must be >= 0, got {j}"));
            }
            if self.n_init < 1 {
                return fail("n_init", format!("must be >= 1, got {}", self.n_init));
            }
            if self.n_max_left < self.n_init || self.n_max_right < self.n_init {
                return fail("n_max_left", format!("Fock transport needs n_max >= n_init = {}", self.n_init));
            }
        }
        for (key, v) in [("epsilon", self.epsilon), ("rtol", self.rtol), ("atol", self.atol)] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(key, format!("must be a positive number, got {v}"));
            }
        }
        if self.samples < 2 {
            return fail("samples", format!("must be >= 2, got {}", self.samples));
        }
        Ok(())
    }
}

/// Partial configuration, as read from a file or assembled from flags.
/// Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub scan: Option<ScanKind>,
    pub u: Option<f64>,
    pub j: Option<f64>,
    pub f: Option<f64>,
    pub delta_rl: Option<f64>,
    pub omega_g: Option<f64>,
    pub n_max_left: Option<usize>,
    pub n_max_right: Option<usize>,
    pub grid_start: Option<f64>,
    pub grid_stop: Option<f64>,
    pub grid_points: Option<usize>,
    pub grid_spacing: Option<Spacing>,
    pub u_list: Option<Vec<f64>>,
    pub delta_rl_list: Option<Vec<f64>>,
    pub j_list: Option<Vec<f64>>,
    pub opt_lo: Option<f64>,
    pub opt_hi: Option<f64>,
    pub opt_coarse_points: Option<usize>,
    pub n_init: Option<usize>,
    pub epsilon: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub samples: Option<usize>,
    pub truncation_check: Option<bool>,
    pub format: Option<OutputFormat>,
}

impl ConfigOverrides {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Values set here win over `other`.
    pub fn or(self, other: ConfigOverrides) -> Self {
        macro_rules! pick {
            ($($field:ident),*) => { Self { $( $field: self.$field.or(other.$field), )* } };
        }
        pick!(
            scan, u, j, f, delta_rl, omega_g, n_max_left, n_max_right, grid_start, grid_stop, grid_points,
            grid_spacing, u_list, delta_rl_list, j_list, opt_lo, opt_hi, opt_coarse_points, n_init, epsilon,
            rtol, atol, samples, truncation_check, format
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [RunConfig::fig2(), RunConfig::fig3(), RunConfig::fig4(), RunConfig::point()] {
            c.validate().unwrap();
        }
        assert_eq!(RunConfig::fig2().grid_points, 201);
        assert!(RunConfig::preset("fig5").is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ConfigOverrides::parse("u = 1.0\nkerr = 2.0\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("kerr")), "{e}");
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(ConfigOverrides::parse("n_max_left = -1").is_err());
        assert!(ConfigOverrides::parse("u = \"big\"").is_err());
        assert!(ConfigOverrides::parse("scan = \"spectral\"").is_err());
    }

    #[test]
    fn zero_truncation_message_names_field() {
        let o = ConfigOverrides::parse("scan = \"point\"\nn_max_left = 0\n").unwrap();
        let mut c = RunConfig::defaults_for(o.scan.unwrap());
        c.apply(&o);
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("n_max_left") && msg.contains("truncation"), "{msg}");
    }

    #[test]
    fn overrides_merge_in_priority_order() {
        let file = ConfigOverrides::parse("u = 2.0\nj = 0.3\n").unwrap();
        let flags = ConfigOverrides { u: Some(5.0), ..Default::default() };
        let merged = flags.or(file);
        let mut c = RunConfig::fig2();
        c.apply(&merged);
        assert_eq!((c.u, c.j, c.f), (5.0, 0.3, 0.5));
    }

    #[test]
    fn field_checks() {
        let bad = |f: fn(&mut RunConfig), key: &str| {
            let mut c = RunConfig::fig2();
            f(&mut c);
            let m = c.validate().unwrap_err().to_string();
            assert!(m.contains(&format!("`{key}`")), "{m}");
        };
        bad(|c| c.u = -1.0, "u");
        bad(|c| c.f = 0.0, "f");
        bad(|c| c.grid_points = 1, "grid_points");
        bad(|c| c.grid_stop = -20.0, "grid_stop");
        bad(|c| c.epsilon = 0.0, "epsilon");
        bad(|c| c.j = f64::NAN, "j");
        let mut c = RunConfig::fig4();
        c.n_init = 3;
        assert!(c.validate().is_err());
        c.f = 0.0;
        c.n_init = 2;
        c.validate().unwrap();
    }
}
