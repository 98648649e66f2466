//! Command-line front end: presets, config files, tables and metadata.

pub mod config;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dynamics::{EvolveOptions, TransportOptions};
use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::model::{JunctionParams, ScanOffset};
use crate::observables::cw_diode_figures;
use crate::sweep::{
    efficiency_scan, fock_point, fock_sweep, frequency_point, frequency_scan, linspace, logspace, Direction,
    EfficiencyRow, FockRow, FrequencyRow, OptimizerSettings, ScanMode, ScanSpec, ScanVariable,
};
use config::{ConfigOverrides, OutputFormat, RunConfig, ScanKind, Spacing};
use table::Table;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlvalve", version, about = "Nonreciprocal photon transport in a Kerr/linear resonator junction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset (fig2, fig3, fig4) or a custom configuration file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RunArgs {
    /// fig2, fig3, fig4 or custom
    pub target: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Flat TOML file with run-configuration keys; required for `custom`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for the sweep (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub j: Option<f64>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub delta_rl: Option<f64>,
    #[arg(long)]
    pub omega_g: Option<f64>,
    #[arg(long)]
    pub n_max_left: Option<usize>,
    #[arg(long)]
    pub n_max_right: Option<usize>,
    #[arg(long)]
    pub grid_start: Option<f64>,
    #[arg(long)]
    pub grid_stop: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub opt_coarse_points: Option<usize>,
    /// Skip the n_max + 2 re-run used for the convergence report.
    #[arg(long)]
    pub no_truncation_check: bool,
}

impl RunArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            u: self.u,
            j: self.j,
            f: self.f,
            delta_rl: self.delta_rl,
            omega_g: self.omega_g,
            n_max_left: self.n_max_left,
            n_max_right: self.n_max_right,
            grid_start: self.grid_start,
            grid_stop: self.grid_stop,
            grid_points: self.grid_points,
            n_init: self.n_init,
            epsilon: self.epsilon,
            rtol: self.rtol,
            atol: self.atol,
            samples: self.samples,
            opt_coarse_points: self.opt_coarse_points,
            truncation_check: self.no_truncation_check.then_some(false),
            format: self.format,
            ..ConfigOverrides::default()
        }
    }

    /// Preset or file defaults, then the file, then flags.
    pub fn resolve(&self) -> Result<(String, RunConfig)> {
        let file = match &self.config {
            Some(p) => ConfigOverrides::load(p)?,
            None => ConfigOverrides::default(),
        };
        let (name, mut cfg) = match self.target.as_str() {
            "custom" => {
                if self.config.is_none() {
                    return Err(Error::Config("`custom` needs --config FILE".into()));
                }
                let scan = file.scan.ok_or_else(|| Error::Config("`scan`: required in a custom config".into()))?;
                ("custom".to_string(), RunConfig::defaults_for(scan))
            }
            name => {
                let cfg = RunConfig::preset(name).ok_or_else(|| {
                    Error::Config(format!("unknown preset `{name}` (expected fig2, fig3, fig4 or custom)"))
                })?;
                if let Some(scan) = file.scan.filter(|s| *s != cfg.scan) {
                    return Err(Error::Config(format!("`scan`: preset {name} cannot run a {scan:?} scan")));
                }
                (name.to_string(), cfg)
            }
        };
        cfg.apply(&self.overrides().or(file));
        cfg.validate()?;
        Ok((name, cfg))
    }
}

/// Files and counts produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub data_path: PathBuf,
    pub meta_path: PathBuf,
    pub rows: usize,
    pub flagged: usize,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.flagged == 0 {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

fn grid(cfg: &RunConfig) -> Vec<f64> {
    match cfg.grid_spacing {
        Spacing::Linear => linspace(cfg.grid_start, cfg.grid_stop, cfg.grid_points),
        Spacing::Log => logspace(cfg.grid_start, cfg.grid_stop, cfg.grid_points),
    }
}

fn space(cfg: &RunConfig) -> Result<FockSpace> {
    FockSpace::new(cfg.n_max_left, cfg.n_max_right)
}

fn base_params(cfg: &RunConfig) -> JunctionParams {
    JunctionParams::new(0.0, 0.0, cfg.u, cfg.j, cfg.f)
}

fn finite_diff(a: f64, b: f64) -> f64 {
    if a.is_finite() && b.is_finite() {
        (a - b).abs()
    } else if a.is_nan() && b.is_nan() {
        0.0
    } else {
        f64::INFINITY
    }
}

const FREQUENCY_COLUMNS: [&str; 7] = ["omega_g", "R", "g2_L", "g2_R", "NL_ground", "NL_excited", "status"];

fn frequency_table(rows: &[FrequencyRow]) -> Table {
    let mut t = Table::new(FREQUENCY_COLUMNS.to_vec());
    for r in rows {
        t.push(
            vec![r.omega_g.into(), r.r.into(), r.g2_left.into(), r.g2_right.into(), r.nl_ground.into(), r.nl_excited.into()],
            &r.status,
        );
    }
    t
}

fn frequency_report(cfg: &RunConfig, spec: &ScanSpec, rows: &[FrequencyRow]) -> serde_json::Value {
    let ok: Vec<&FrequencyRow> = rows.iter().filter(|r| r.figures.is_some()).collect();
    let max_residual = ok.iter().filter_map(|r| r.figures.map(|f| f.steady_residual)).fold(0.0, f64::max);
    let min_eig = ok.iter().filter_map(|r| r.figures.map(|f| f.min_eigenvalue)).fold(f64::INFINITY, f64::min);
    let eig_shift = rows.iter().map(|r| r.eigen_truncation_shift).filter(|s| s.is_finite()).fold(0.0, f64::max);
    let eig_unconverged = rows.iter().filter(|r| !(r.eigen_truncation_shift < 1e-8)).count();
    let mut report = json!({
        "max_steady_residual": max_residual,
        "min_state_eigenvalue": min_eig,
        "bare_eigen_max_truncation_shift": eig_shift,
        "bare_eigen_points_not_converged": eig_unconverged,
    });
    if cfg.truncation_check && !ok.is_empty() {
        // probe the extremes of R, where the populations are largest
        let lo = ok.iter().min_by(|a, b| a.r.total_cmp(&b.r)).unwrap();
        let hi = ok.iter().max_by(|a, b| a.r.total_cmp(&b.r)).unwrap();
        let mut probes = vec![lo.omega_g, hi.omega_g];
        probes.dedup();
        let big = ScanSpec { space: spec.space.enlarged(2), ..spec.clone() };
        let mut shift = [0.0f64; 3];
        for &w in &probes {
            let a = rows.iter().find(|r| r.omega_g == w).unwrap();
            let b = frequency_point(&big, w);
            shift[0] = shift[0].max(finite_diff(a.r, b.r));
            shift[1] = shift[1].max(finite_diff(a.g2_left, b.g2_left));
            shift[2] = shift[2].max(finite_diff(a.g2_right, b.g2_right));
        }
        report["truncation_check"] = json!({
            "probe_omega_g": probes,
            "enlarged_n_max": [big.space.n_max_left(), big.space.n_max_right()],
            "max_shift_R": shift[0],
            "max_shift_g2_L": shift[1],
            "max_shift_g2_R": shift[2],
        });
    }
    report
}

fn run_frequency(cfg: &RunConfig) -> Result<(Table, serde_json::Value)> {
    let spec = ScanSpec {
        variable: ScanVariable::OmegaG,
        grid: grid(cfg),
        base: base_params(cfg),
        offset: ScanOffset::new(0.0, cfg.delta_rl),
        mode: ScanMode::Cw,
        space: space(cfg)?,
    };
    let rows = frequency_scan(&spec)?;
    Ok((frequency_table(&rows), frequency_report(cfg, &spec, &rows)))
}

fn run_point(cfg: &RunConfig) -> Result<(Table, serde_json::Value)> {
    let spec = ScanSpec {
        variable: ScanVariable::OmegaG,
        grid: vec![cfg.omega_g],
        base: base_params(cfg),
        offset: ScanOffset::new(0.0, cfg.delta_rl),
        mode: ScanMode::Cw,
        space: space(cfg)?,
    };
    let rows = vec![frequency_point(&spec, cfg.omega_g)];
    Ok((frequency_table(&rows), frequency_report(cfg, &spec, &rows)))
}

fn run_efficiency(cfg: &RunConfig) -> Result<(Table, serde_json::Value)> {
    let sp = space(cfg)?;
    let settings = OptimizerSettings { bounds: (cfg.opt_lo, cfg.opt_hi), coarse_points: cfg.opt_coarse_points };
    let mut rows: Vec<EfficiencyRow> = Vec::new();
    for &u in &cfg.u_list {
        for &drl in &cfg.delta_rl_list {
            let spec = ScanSpec {
                variable: ScanVariable::J,
                grid: grid(cfg),
                base: JunctionParams { u, ..base_params(cfg) },
                offset: ScanOffset::new(0.0, drl),
                mode: ScanMode::Cw,
                space: sp,
            };
            rows.extend(efficiency_scan(&spec, &settings)?);
        }
    }
    let mut t = Table::new(vec!["j", "u", "delta_RL", "direction", "omega_star", "R", "T", "RT", "status"]);
    for r in &rows {
        let dir = match r.direction {
            Direction::Left => "left",
            Direction::Right => "right",
        };
        let (w, rr, tt, rt) = r
            .result
            .map(|o| (o.omega_star, o.r_at_star, o.t_at_star, o.objective))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
        t.push(vec![r.j.into(), r.u.into(), r.delta_rl.into(), dir.into(), w.into(), rr.into(), tt.into(), rt.into()], &r.status);
    }

    let mut report = json!({
        "optimizer": {"bounds": [cfg.opt_lo, cfg.opt_hi], "coarse_points": cfg.opt_coarse_points,
                      "resolution": crate::sweep::FREQUENCY_RESOLUTION},
    });
    if cfg.truncation_check {
        // re-evaluate the best row of every curve with both cutoffs raised
        let big = sp.enlarged(2);
        let mut probes = Vec::new();
        let (mut dr, mut dt) = (0.0f64, 0.0f64);
        for &u in &cfg.u_list {
            for &drl in &cfg.delta_rl_list {
                for dir in [Direction::Left, Direction::Right] {
                    let best = rows
                        .iter()
                        .filter(|r| r.u == u && r.delta_rl == drl && r.direction == dir)
                        .filter_map(|r| r.result.map(|o| (r.j, o)))
                        .max_by(|a, b| a.1.objective.abs().total_cmp(&b.1.objective.abs()));
                    let Some((j, o)) = best else { continue };
                    let p = ScanOffset::new(o.omega_star, drl).apply(&JunctionParams { u, j, ..base_params(cfg) });
                    match cw_diode_figures(&p, &big) {
                        Ok(f) => {
                            dr = dr.max((f.r - o.r_at_star).abs());
                            dt = dt.max((dir.efficiency(&f) - o.t_at_star).abs());
                        }
                        Err(_) => {
                            dr = f64::INFINITY;
                            dt = f64::INFINITY;
                        }
                    }
                    probes.push(json!({"u": u, "delta_RL": drl, "direction": dir, "j": j, "omega_star": o.omega_star}));
                }
            }
        }
        report["truncation_check"] = json!({
            "enlarged_n_max": [big.n_max_left(), big.n_max_right()],
            "probes": probes,
            "max_shift_R": dr,
            "max_shift_T": dt,
        });
    }
    Ok((t, report))
}

fn transport_options(cfg: &RunConfig) -> TransportOptions {
    TransportOptions {
        epsilon: cfg.epsilon,
        integrator: EvolveOptions {
            rtol: cfg.rtol,
            atol: cfg.atol,
            samples: cfg.samples,
            record_min_eigenvalue: true,
            ..EvolveOptions::default()
        },
        truncation_padding: cfg.n_max_left.max(cfg.n_max_right) - cfg.n_init,
        ..TransportOptions::default()
    }
}

fn run_fock(cfg: &RunConfig) -> Result<(Table, serde_json::Value)> {
    let opts = transport_options(cfg);
    let mut specs = Vec::new();
    let mut rows: Vec<FockRow> = Vec::new();
    for &j in &cfg.j_list {
        let spec = ScanSpec {
            variable: ScanVariable::DeltaRl,
            grid: grid(cfg),
            base: JunctionParams { j, f: faer::c64::new(0.0, 0.0), ..base_params(cfg) },
            offset: ScanOffset::new(cfg.omega_g, 0.0),
            mode: ScanMode::Fock { n_init: cfg.n_init },
            space: space(cfg)?,
        };
        rows.extend(fock_sweep(&spec, &opts)?);
        specs.push(spec);
    }
    let mut t = Table::new(vec!["delta_RL", "j", "R", "T_R", "T_L", "status"]);
    for r in &rows {
        t.push(vec![r.delta_rl.into(), r.j.into(), r.r.into(), r.t_right.into(), r.t_left.into()], &r.status);
    }

    let transports = rows.iter().flat_map(|r| r.forward.iter().chain(r.backward.iter()));
    let (mut defect, mut drift, mut min_eig, mut horizon) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for tr in transports {
        defect = defect.max((tr.q_left + tr.q_right - cfg.n_init as f64).abs());
        drift = drift.max(tr.max_trace_drift);
        min_eig = min_eig.min(tr.min_eigenvalue);
        horizon = horizon.max(tr.horizon);
    }
    let mut report = json!({
        "max_photon_number_defect": defect,
        "max_trace_drift": drift,
        "min_state_eigenvalue": min_eig,
        "max_horizon": horizon,
        "relaxation_epsilon": cfg.epsilon,
    });
    if cfg.truncation_check {
        // undriven transport never leaves the n <= n_init sector, so two
        // extra levels must leave the numbers unchanged
        let padded = TransportOptions { truncation_padding: opts.truncation_padding + 2, ..opts };
        let mut shift = 0.0f64;
        let mut probes = Vec::new();
        for spec in &specs {
            let x = spec.grid[spec.grid.len() / 2];
            let a = rows.iter().find(|r| r.j == spec.base.j && r.delta_rl == x).unwrap();
            let b = fock_point(spec, cfg.n_init, x, &padded);
            for (p, q) in [(a.r, b.r), (a.t_right, b.t_right), (a.t_left, b.t_left)] {
                shift = shift.max(finite_diff(p, q));
            }
            probes.push(json!({"j": spec.base.j, "delta_RL": x}));
        }
        report["truncation_check"] = json!({"extra_levels": 2, "probes": probes, "max_shift": shift});
    }
    Ok((t, report))
}

fn conventions(cfg: &RunConfig) -> serde_json::Value {
    let mut c = json!({
        "units": "rates, detunings and couplings in units of the site loss rate gamma (gamma = 1); times in 1/gamma",
        "hamiltonian": "Kerr term U/2 a_L^dag a_L^dag a_L a_L on the left site; drive F a^dag + F* a on the pumped site",
        "rectification": "R = (Q_R[k] - Q_L[-k]) / (Q_R[k] + Q_L[-k]); k pumps the left site, -k the right site",
    });
    match cfg.scan {
        ScanKind::Frequency | ScanKind::Point => {
            c["detunings"] = json!("Delta_L = Delta_RL/2 + omega_g, Delta_R = -Delta_RL/2 + omega_g");
            c["g2_labeling"] = json!("g2_L and g2_R are the emissions of the left and right site, both under left pumping (k)");
            c["bare_eigenstates"] = json!("NL_ground / NL_excited: <n_L> in the two lowest eigenstates of the undriven Hamiltonian");
        }
        ScanKind::Efficiency => {
            c["detunings"] = json!("Delta_L = Delta_RL/2 + omega, Delta_R = -Delta_RL/2 + omega; omega optimized per row");
            c["objective"] = json!("left: minimize R*T_L; right: maximize R*T_R; RT column is R*T");
            c["j_units"] = json!("J in units of gamma");
        }
        ScanKind::Fock => {
            c["detunings"] = json!("Delta_L = omega_g - Delta_RL/2, Delta_R = omega_g + Delta_RL/2 (Delta_RL = Delta_R - Delta_L)");
            c["preparation"] = json!("instantaneous Fock state |n_init> in the pumped site, other site empty, drive off");
            c["currents"] = json!("Q_i = integral of gamma <n_i>(t) until the total excitation drops below epsilon");
        }
    }
    c
}

/// Executes a resolved configuration and writes `<name>.<csv|json>` plus
/// `<name>.meta.json` into `out`.
pub fn execute(name: &str, cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let (table, report) = match cfg.scan {
        ScanKind::Frequency => run_frequency(cfg)?,
        ScanKind::Point => run_point(cfg)?,
        ScanKind::Efficiency => run_efficiency(cfg)?,
        ScanKind::Fock => run_fock(cfg)?,
    };
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(out)?;
    let (ext, body) = match cfg.format {
        OutputFormat::Csv => ("csv", table.to_csv()),
        OutputFormat::Json => ("json", table.to_json()),
    };
    let data_path = out.join(format!("{name}.{ext}"));
    let meta_path = out.join(format!("{name}.meta.json"));
    let meta = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "run": name,
        "config": cfg,
        "columns": table.columns,
        "rows": table.rows.len(),
        "flagged_rows": table.flagged,
        "conventions": conventions(cfg),
        "convergence": report,
        "wall_time_s": wall,
    });
    std::fs::write(&data_path, body)?;
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")?;
    Ok(RunOutcome { data_path, meta_path, rows: table.rows.len(), flagged: table.flagged })
}

fn run_command(args: &RunArgs) -> Result<RunOutcome> {
    let (name, cfg) = args.resolve()?;
    match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("`threads`: {e}")))?;
            pool.install(|| execute(&name, &cfg, &args.out))
        }
        None => execute(&name, &cfg, &args.out),
    }
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let Command::Run(args) = cli.command;
    match run_command(&args) {
        Ok(o) => {
            eprintln!("wrote {} ({} rows, {} flagged)", o.data_path.display(), o.rows, o.flagged);
            o.exit_code()
        }
        // configuration, parameter and i/o failures all happen before or
        // instead of producing a table
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
