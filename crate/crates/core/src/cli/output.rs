use std::path::Path;

use serde::Serialize;

use crate::dynamics::{StepStats, Trajectory};
use crate::error::{BubbleError, Result};
use crate::reference::{ReferenceTrajectory, TranslationCoefficient};
use crate::shapes::{ShapeFamily, ShapeParams, Vec3};

fn csv_err(e: csv::Error) -> BubbleError {
    BubbleError::Io(std::io::Error::other(e))
}

/// Shortest decimal form that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for (k, b) in traj.template.bubbles.iter().enumerate() {
        let names: &[&str] = match b {
            ShapeParams::Sphere(_) => &["cx", "cy", "cz", "r"],
            ShapeParams::Ellipsoid(_) => {
                &["cx", "cy", "cz", "s11", "s12", "s13", "s22", "s23", "s33"]
            }
        };
        header.extend(names.iter().map(|n| format!("b{k}_{n}")));
        header.extend(names.iter().map(|n| format!("b{k}_v{n}")));
    }
    header.extend(
        [
            "energy_kinetic",
            "energy_potential",
            "energy_total",
            "impulse_x",
            "impulse_y",
            "impulse_z",
            "boundary_residual",
        ]
        .map(String::from),
    );
    header
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(trajectory_header(traj)).map_err(csv_err)?;
    let offsets = traj.template.offsets();
    for s in &traj.samples {
        let mut row = vec![fmt_f64(s.time)];
        for (b, &o) in traj.template.bubbles.iter().zip(&offsets) {
            let d = b.dim();
            row.extend(s.coords[o..o + d].iter().map(|&x| fmt_f64(x)));
            row.extend(s.velocity[o..o + d].iter().map(|&x| fmt_f64(x)));
        }
        row.push(fmt_f64(s.kinetic));
        row.push(fmt_f64(s.potential));
        row.push(fmt_f64(s.total_energy()));
        match s.impulse {
            Some(p) => row.extend([p.x, p.y, p.z].map(fmt_f64)),
            None => row.extend(std::iter::repeat_n(String::new(), 3)),
        }
        row.push(s.residual.map(fmt_f64).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reference_csv(path: &Path, traj: &ReferenceTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["t", "cx", "cy", "cz", "r", "vcx", "vcy", "vcz", "vr"])
        .map_err(csv_err)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let row = [
            *t, s.c.x, s.c.y, s.c.z, s.r, s.c_dot.x, s.c_dot.y, s.c_dot.z, s.r_dot,
        ]
        .map(fmt_f64);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Steps {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

impl From<StepStats> for Steps {
    fn from(s: StepStats) -> Self {
        Self {
            accepted: s.accepted,
            rejected: s.rejected,
            rhs_evaluations: s.rhs_evaluations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Drift {
    pub initial: f64,
    /// `max |x(t) - x(0)| / |x(0)|`.
    pub max_relative_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyDrift {
    pub initial: f64,
    pub max_relative_drift: f64,
    /// Drift divided by the largest kinetic energy seen.
    pub max_drift_over_kinetic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceComparison {
    pub translation_coefficient: TranslationCoefficient,
    pub kappa: f64,
    /// `max |r - r_ref| / r_ref` over samples.
    pub max_radius_deviation: f64,
    /// `max |c - c_ref|` over the largest reference displacement.
    pub max_center_deviation: f64,
    pub completed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    pub evaluated: usize,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub termination: &'static str,
    pub message: Option<String>,
    pub steps: Steps,
    pub samples: usize,
    pub final_time: f64,
    pub mesh_level: usize,
    pub gram_condition: Range,
    pub max_bem_condition: f64,
    pub max_reciprocity_error: f64,
    pub energy: EnergyDrift,
    pub impulse: Option<Drift>,
    pub bubble_volume: Drift,
    pub boundary_residual: Option<ResidualSummary>,
    pub reference: Option<ReferenceComparison>,
    pub wall_time_seconds: f64,
}

pub fn energy_drift(traj: &Trajectory) -> EnergyDrift {
    let e0 = traj.samples[0].total_energy();
    let drift = traj
        .samples
        .iter()
        .map(|s| (s.total_energy() - e0).abs())
        .fold(0.0, f64::max);
    let kinetic = traj.samples.iter().map(|s| s.kinetic).fold(0.0, f64::max);
    EnergyDrift {
        initial: e0,
        max_relative_drift: drift / e0.abs().max(f64::MIN_POSITIVE),
        max_drift_over_kinetic: if kinetic > 0.0 { drift / kinetic } else { 0.0 },
    }
}

pub fn impulse_drift(traj: &Trajectory) -> Option<Drift> {
    let p0 = traj.samples[0].impulse?;
    let drift = traj
        .samples
        .iter()
        .filter_map(|s| s.impulse)
        .map(|p| (p - p0).norm())
        .fold(0.0, f64::max);
    Some(Drift {
        initial: p0.norm(),
        max_relative_drift: if p0.norm() > 0.0 {
            drift / p0.norm()
        } else {
            drift
        },
    })
}

pub fn volume_drift(traj: &Trajectory) -> Drift {
    let volume = |i: usize| -> f64 {
        traj.template
            .with_coords(&traj.samples[i].coords)
            .map(|c| c.bubbles.iter().map(|b| b.measures().volume).sum())
            .unwrap_or(f64::NAN)
    };
    let v0 = volume(0);
    let drift = (0..traj.samples.len())
        .map(|i| (volume(i) - v0).abs())
        .fold(0.0, f64::max);
    Drift {
        initial: v0,
        max_relative_drift: drift / v0,
    }
}

/// Compares a single-sphere trajectory with the closed-form one sampled at
/// the same times.
pub fn compare_with_reference(
    traj: &Trajectory,
    reference: &ReferenceTrajectory,
    translation: TranslationCoefficient,
) -> ReferenceComparison {
    let c0 = reference.states[0].c;
    let scale = reference
        .states
        .iter()
        .map(|s| (s.c - c0).norm())
        .fold(0.0, f64::max);
    let mut dr: f64 = 0.0;
    let mut dc: f64 = 0.0;
    for (s, r) in traj.samples.iter().zip(&reference.states) {
        dr = dr.max((s.coords[3] - r.r).abs() / r.r);
        let c = Vec3::new(s.coords[0], s.coords[1], s.coords[2]);
        dc = dc.max((c - r.c).norm());
    }
    ReferenceComparison {
        translation_coefficient: translation,
        kappa: translation.value(),
        max_radius_deviation: dr,
        max_center_deviation: if scale > 0.0 { dc / scale } else { dc },
        completed: reference.completed && traj.samples.len() <= reference.states.len(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| BubbleError::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
