//! Command-line front end: `run`, `check` and `convergence`.

mod output;
mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use output::{
    compare_with_reference, energy_drift, fmt_f64, impulse_drift, trajectory_header, volume_drift,
    write_json, write_reference_csv, write_trajectory_csv, Diagnostics, ReferenceComparison,
};
pub use scenario::{
    locate, BubbleSpec, ComparisonSpec, DomainSpec, GasSpec, Liquid, MassKeyword, MassSpec,
    Prepared, Scenario, ShapeSpec, SolverSpec, TimeSpec, VelocitySpec, SCHEMA_VERSION,
};

use crate::dynamics::{
    check_velocity_constraint, eom_flat, integrate, residual_of_dynamics, IntegratorOptions,
    Trajectory,
};
use crate::error::{BubbleError, Result};
use crate::potential::added_mass;
use crate::reference::{
    integrate_reference, ReferenceModel, SingleBubbleState, TranslationCoefficient,
};
use crate::shapes::{check_admissible, reference_icosphere, ShapeFamily, ShapeParams, Vec3};

#[derive(Debug, Parser)]
#[command(
    name = "bubbledyn",
    version,
    about = "Bubble dynamics in potential flow"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefficientFlag {
    Resolved,
    Paper,
}

impl From<CoefficientFlag> for TranslationCoefficient {
    fn from(f: CoefficientFlag) -> Self {
        match f {
            CoefficientFlag::Resolved => TranslationCoefficient::Resolved,
            CoefficientFlag::Paper => TranslationCoefficient::PaperPrinted,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write trajectory.csv and diagnostics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Boundary residual every N output samples (0 disables).
        #[arg(long)]
        residual_cadence: Option<usize>,
        /// Translation coefficient of the closed-form comparison.
        #[arg(long, value_enum)]
        translation_coefficient: Option<CoefficientFlag>,
    },
    /// Validate a scenario and report preflight diagnostics.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Rerun a scenario at several mesh levels and estimate convergence orders.
    Convergence {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        levels: Vec<usize>,
        /// Also write convergence.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for invalid input.
pub const EXIT_INVALID: i32 = 2;
/// Exit status for I/O and internal failures.
pub const EXIT_FAILURE: i32 = 1;

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            residual_cadence,
            translation_coefficient,
        } => run(
            &scenario,
            &out,
            residual_cadence,
            translation_coefficient.map(Into::into),
        )
        .map(|d| {
            println!(
                "{}: {} samples, t = {}",
                d.termination, d.samples, d.final_time
            );
        }),
        Command::Check { scenario } => check(&scenario).map(|report| print!("{report}")),
        Command::Convergence {
            scenario,
            levels,
            out,
        } => convergence(&scenario, &levels).and_then(|table| {
            print!("{}", table.render());
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    write_json(&dir.join("convergence.json"), &table)
                }
                None => Ok(()),
            }
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BubbleError::Parse(_)
                | BubbleError::Validation { .. }
                | BubbleError::Constraint(_)
                | BubbleError::Inadmissible(_)
                | BubbleError::Unsupported(_)
                | BubbleError::Domain(_)
                | BubbleError::DegenerateShape(_) => EXIT_INVALID,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn load(path: &Path) -> Result<(Scenario, PathBuf)> {
    Scenario::from_file(path)
}

/// Rejects inadmissible initial configurations and, inside a cavity,
/// velocities that change the total bubble volume.
pub fn preflight(prepared: &Prepared) -> Result<()> {
    let config = &prepared.initial.config;
    let report = check_admissible(config);
    if let Some(v) = report.violations.first() {
        return Err(BubbleError::Inadmissible(v.to_string()));
    }
    check_velocity_constraint(config, &prepared.initial.velocity_coords())
}

fn single_unbounded_sphere(prepared: &Prepared) -> Option<SingleBubbleState> {
    let config = &prepared.initial.config;
    if config.domain.is_bounded() || config.bubbles.len() != 1 {
        return None;
    }
    let ShapeParams::Sphere(s) = &config.bubbles[0] else {
        return None;
    };
    let v = prepared.initial.velocity_coords();
    SingleBubbleState::new(s.center, Vec3::new(v[0], v[1], v[2]), s.radius, v[3]).ok()
}

/// The `run` verb. Writes `trajectory.csv` and `diagnostics.json` (and
/// `reference.csv` for a single sphere in unbounded liquid) into `out`.
pub fn run(
    scenario_path: &Path,
    out: &Path,
    residual_cadence: Option<usize>,
    translation: Option<TranslationCoefficient>,
) -> Result<Diagnostics> {
    let (scenario, base) = load(scenario_path)?;
    let mut prepared = scenario.prepare(&base)?;
    if let Some(n) = residual_cadence {
        prepared.settings.residual_cadence = n;
    }
    if let Some(t) = translation {
        prepared.translation = t;
    }
    preflight(&prepared)?;
    std::fs::create_dir_all(out)?;

    let start = Instant::now();
    let traj = integrate(&prepared.model, &prepared.initial, &prepared.settings)?;
    let reference = match single_unbounded_sphere(&prepared) {
        Some(s0) => {
            let rm = ReferenceModel {
                gas: prepared.model.energy.gases[0],
                p_infinity: prepared.model.energy.p_infinity,
                density: prepared.model.density,
                surface_tension: prepared.model.energy.surface_tension,
                translation: prepared.translation,
            };
            let opts = IntegratorOptions {
                rel_tol: prepared.settings.rel_tol.min(1e-10),
                abs_tol: prepared.settings.abs_tol.min(1e-12),
                initial_step: 1e-3
                    * prepared
                        .model
                        .characteristic_period(&prepared.initial.config)
                        .unwrap_or(1.0),
                ..Default::default()
            };
            let end = traj.samples.last().map_or(0.0, |s| s.time);
            let rt = integrate_reference(
                &rm,
                &s0,
                end.max(prepared.settings.output_dt),
                prepared.settings.output_dt,
                &opts,
            )?;
            write_reference_csv(&out.join("reference.csv"), &rt)?;
            Some(compare_with_reference(&traj, &rt, prepared.translation))
        }
        None => None,
    };
    let wall = start.elapsed().as_secs_f64();
    write_trajectory_csv(&out.join("trajectory.csv"), &traj)?;
    let diagnostics = diagnostics(&traj, prepared.model.mesh_level, reference, wall);
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    Ok(diagnostics)
}

fn diagnostics(
    traj: &Trajectory,
    mesh_level: usize,
    reference: Option<ReferenceComparison>,
    wall: f64,
) -> Diagnostics {
    let residuals: Vec<f64> = traj.samples.iter().filter_map(|s| s.residual).collect();
    Diagnostics {
        termination: traj.termination.as_str(),
        message: traj.message.clone(),
        steps: traj.stats.into(),
        samples: traj.samples.len(),
        final_time: traj.samples.last().map_or(0.0, |s| s.time),
        mesh_level,
        gram_condition: output::Range {
            min: traj.gram_condition.0,
            max: traj.gram_condition.1,
        },
        max_bem_condition: traj.max_bem_condition,
        max_reciprocity_error: traj.max_reciprocity_error,
        energy: energy_drift(traj),
        impulse: impulse_drift(traj),
        bubble_volume: volume_drift(traj),
        boundary_residual: (!residuals.is_empty()).then(|| output::ResidualSummary {
            evaluated: residuals.len(),
            max: residuals.iter().copied().fold(0.0, f64::max),
        }),
        reference,
        wall_time_seconds: wall,
    }
}

/// The `check` verb: a human-readable preflight report. Only unreadable or
/// invalid files are errors; physical problems are reported.
pub fn check(scenario_path: &Path) -> Result<String> {
    let (scenario, base) = load(scenario_path)?;
    let prepared = scenario.prepare(&base)?;
    let config = &prepared.initial.config;
    let mut out = String::new();
    let families: Vec<&str> = config.bubbles.iter().map(|b| b.family_name()).collect();
    let domain = match &scenario.domain {
        DomainSpec::Unbounded => "unbounded liquid".to_string(),
        DomainSpec::CavitySphere { radius, .. } => format!("spherical cavity of radius {radius}"),
        DomainSpec::CavityMesh { path } => format!("mesh cavity {}", path.display()),
    };
    let _ = writeln!(out, "scenario: {}", scenario_path.display());
    let _ = writeln!(
        out,
        "bubbles: {} ({}) in {domain}",
        families.len(),
        families.join(", ")
    );

    let report = check_admissible(config);
    if report.is_admissible() {
        let mut line = "admissibility: ok".to_string();
        if let Some((i, j, g)) = report.min_pair_gap() {
            let _ = write!(line, ", smallest gap {g:.6e} between bubbles {i} and {j}");
        }
        if let Some((i, g)) = report.min_wall_gap() {
            let _ = write!(line, ", smallest wall gap {g:.6e} (bubble {i})");
        }
        let _ = writeln!(out, "{line}");
    } else {
        for v in &report.violations {
            let _ = writeln!(out, "admissibility: FAILED: {v}");
        }
    }

    if config.domain.is_bounded() {
        match check_velocity_constraint(config, &prepared.initial.velocity_coords()) {
            Ok(()) => {
                let _ = writeln!(out, "cavity volume constraint: ok");
            }
            Err(e) => {
                let _ = writeln!(out, "cavity volume constraint: VIOLATED: {e}");
            }
        }
    }

    let model = &prepared.model;
    let at_rest = prepared.initial.velocity_coords().iter().all(|v| *v == 0.0);
    let mut periods = Vec::new();
    for (k, (b, gas)) in config.bubbles.iter().zip(&model.energy.gases).enumerate() {
        let r = b.equivalent_radius();
        let p_b = gas.pressure_at_volume(b.measures().volume)?;
        let needed = model.energy.p_infinity + 2.0 * model.energy.surface_tension / r;
        let balanced = (p_b - needed).abs() <= 1e-9 * needed.abs().max(f64::MIN_POSITIVE);
        let _ = writeln!(
            out,
            "bubble {k}: equivalent radius {r:.6e}, gas pressure {p_b:.6e}, required {needed:.6e}{}",
            if balanced { " (pressure equilibrium)" } else { "" }
        );
        if let Ok(r_eq) =
            gas.equilibrium_radius(model.energy.p_infinity, model.energy.surface_tension)
        {
            if model.energy.p_infinity > 0.0 {
                let omega = (3.0 * gas.law.gamma() * model.energy.p_infinity
                    / (model.density * r_eq * r_eq))
                    .sqrt();
                let period = 2.0 * std::f64::consts::PI / omega;
                periods.push(period);
                let _ = writeln!(
                    out,
                    "bubble {k}: equilibrium radius {r_eq:.6e}, Minnaert frequency {omega:.6e}, period {period:.6e}"
                );
            }
        }
    }
    if report.is_admissible() && at_rest {
        if let Ok(eval) = eom_flat(model, config, &prepared.initial.velocity_coords()) {
            let acc = eval.qddot.iter().map(|a| a.abs()).fold(0.0, f64::max);
            let _ = writeln!(
                out,
                "initial state at rest; largest acceleration {acc:.3e}{}",
                if acc < 1e-9 { " (equilibrium)" } else { "" }
            );
        }
    }
    if let Some(t) = periods.iter().copied().reduce(f64::min) {
        let _ = writeln!(
            out,
            "recommended output_dt: {:.6e} (1/40 of the shortest period); scenario uses {}",
            t / 40.0,
            scenario.time.output_dt
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub panels_per_bubble: usize,
    pub edge_length: f64,
    /// Diagonal of the added-mass matrix at the initial configuration.
    pub added_mass_diagonal: Vec<f64>,
    /// Max relative error of the diagonal against the analytic single-sphere
    /// value, or against the finest level otherwise.
    pub added_mass_error: Option<f64>,
    pub added_mass_order: Option<f64>,
    pub endpoint: Vec<f64>,
    /// Max-norm difference of the final coordinates from the finest level.
    pub endpoint_delta: Option<f64>,
    pub endpoint_order: Option<f64>,
    pub residual: f64,
    pub termination: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub analytic_reference: bool,
}

impl ConvergenceTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>7} {:>10} {:>12} {:>8} {:>12} {:>8} {:>12} {:>12}",
            "level",
            "panels",
            "edge",
            "A error",
            "order",
            "end delta",
            "order",
            "residual",
            "termination"
        );
        let opt =
            |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$e}"));
        let ord = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>5} {:>7} {:>10.4e} {:>12} {:>8} {:>12} {:>8} {:>12.4e} {:>12}",
                r.level,
                r.panels_per_bubble,
                r.edge_length,
                opt(r.added_mass_error, 4),
                ord(r.added_mass_order),
                opt(r.endpoint_delta, 4),
                ord(r.endpoint_order),
                r.residual,
                r.termination
            );
        }
        s
    }
}

fn reference_edge(level: usize) -> f64 {
    let mesh = reference_icosphere(level);
    mesh.triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (mesh.vertices[a] - mesh.vertices[b]).norm())
        .fold(0.0, f64::max)
}

fn order(e_coarse: Option<f64>, e_fine: Option<f64>, h_coarse: f64, h_fine: f64) -> Option<f64> {
    match (e_coarse, e_fine) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (h_coarse / h_fine).ln()),
        _ => None,
    }
}

/// The `convergence` verb. Levels are sorted; the finest is the reference
/// unless the scenario is a single sphere in unbounded liquid, where the
/// added mass is compared with the analytic value.
pub fn convergence(scenario_path: &Path, levels: &[usize]) -> Result<ConvergenceTable> {
    let (scenario, base) = load(scenario_path)?;
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.is_empty() {
        return Err(BubbleError::validation(
            "--levels",
            "at least one level is required",
        ));
    }
    if levels.len() == 1 {
        log::warn!("a single mesh level gives no convergence order");
    }
    let base_prepared = scenario.prepare(&base)?;
    preflight(&base_prepared)?;
    let analytic = single_unbounded_sphere(&base_prepared).map(|s| {
        let rho = base_prepared.model.density;
        let m = 2.0 * std::f64::consts::PI / 3.0 * rho * s.r.powi(3);
        vec![m, m, m, 6.0 * m]
    });

    let mut rows = Vec::new();
    for &level in &levels {
        let mut prepared = base_prepared.clone();
        prepared.model.mesh_level = level;
        prepared.settings.residual_cadence = 0;
        let config = &prepared.initial.config;
        let a = added_mass(config, level, prepared.model.density)?;
        let diagonal: Vec<f64> = (0..a.full.nrows()).map(|i| a.full[(i, i)]).collect();
        let residual = residual_of_dynamics(&prepared.model, &prepared.initial)?;
        let traj = integrate(&prepared.model, &prepared.initial, &prepared.settings)?;
        let last = traj
            .samples
            .last()
            .expect("trajectory has its initial sample");
        log::info!("level {level}: {}", traj.termination.as_str());
        rows.push(ConvergenceRow {
            level,
            panels_per_bubble: reference_icosphere(level).triangles.len(),
            edge_length: reference_edge(level),
            added_mass_diagonal: diagonal,
            added_mass_error: None,
            added_mass_order: None,
            endpoint: last.coords.clone(),
            endpoint_delta: None,
            endpoint_order: None,
            residual,
            termination: traj.termination.as_str().to_string(),
        });
    }

    let finest = rows.last().expect("at least one level").clone();
    let reference_diag = analytic
        .clone()
        .unwrap_or_else(|| finest.added_mass_diagonal.clone());
    let n = rows.len();
    for (i, row) in rows.iter_mut().enumerate() {
        let is_finest = i + 1 == n;
        if analytic.is_some() || !is_finest {
            let err = row
                .added_mass_diagonal
                .iter()
                .zip(&reference_diag)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max);
            row.added_mass_error = Some(err);
        }
        if !is_finest && row.endpoint.len() == finest.endpoint.len() {
            let d = row
                .endpoint
                .iter()
                .zip(&finest.endpoint)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            row.endpoint_delta = Some(d);
        }
    }
    for i in 0..n.saturating_sub(1) {
        let (h0, h1) = (rows[i].edge_length, rows[i + 1].edge_length);
        rows[i + 1].added_mass_order = order(
            rows[i].added_mass_error,
            rows[i + 1].added_mass_error,
            h0,
            h1,
        );
        rows[i + 1].endpoint_order =
            order(rows[i].endpoint_delta, rows[i + 1].endpoint_delta, h0, h1);
    }
    Ok(ConvergenceTable {
        rows,
        analytic_reference: analytic.is_some(),
    })
}
