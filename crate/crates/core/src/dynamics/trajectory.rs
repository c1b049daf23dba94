use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::integrator::{dopri5, DenseStep, IntegratorOptions, Outcome, StepStats};
use super::model::{check_velocity_constraint, eom_flat, EomEvaluation, Model, State};
use super::residual::boundary_residual;
use crate::error::{BubbleError, Result};
use crate::shapes::{check_admissible, Configuration, ShapeParams, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    Completed,
    Collision,
    DegenerateShape,
    SolverFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Completed => "completed",
            TerminationReason::Collision => "collision",
            TerminationReason::DegenerateShape => "degenerate-shape",
            TerminationReason::SolverFailure => "solver-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationSettings {
    pub t_end: f64,
    pub output_dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Defaults to `1e-3` characteristic periods.
    pub initial_step: Option<f64>,
    /// Boundary residual every `n`-th sample; 0 disables it.
    pub residual_cadence: usize,
    pub max_steps: usize,
}

impl IntegrationSettings {
    pub fn new(t_end: f64, output_dt: f64) -> Self {
        Self {
            t_end,
            output_dt,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            residual_cadence: 0,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub coords: Vec<f64>,
    pub velocity: Vec<f64>,
    pub kinetic: f64,
    pub potential: f64,
    /// Liquid impulse `dT/dc'` of a single sphere in unbounded liquid.
    pub impulse: Option<Vec3>,
    pub residual: Option<f64>,
}

impl Sample {
    pub fn total_energy(&self) -> f64 {
        self.kinetic + self.potential
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: TerminationReason,
    pub message: Option<String>,
    pub stats: StepStats,
    /// Smallest and largest added-mass condition number over the samples.
    pub gram_condition: (f64, f64),
    pub max_bem_condition: f64,
    pub max_reciprocity_error: f64,
    /// Configuration layout; `samples[i].coords` are its coordinates.
    pub template: Configuration,
}

impl Trajectory {
    pub fn state(&self, i: usize) -> Result<State> {
        let s = &self.samples[i];
        State::from_coords(&self.template, &s.coords, &s.velocity, s.time)
    }
}

/// Coordinates the stepper works in. Inside a cavity with only spherical
/// bubbles the radii are replaced by `z = r^3 / (3 r0^2)`, which turns the
/// volume constraint into the linear invariant `sum z' = 0` that Runge-Kutta
/// steps preserve to rounding error.
#[derive(Debug, Clone)]
enum Chart {
    Identity,
    CubedRadii { radius_index: Vec<usize>, r0: f64 },
}

impl Chart {
    fn for_config(config: &Configuration) -> Self {
        let spheres = config
            .bubbles
            .iter()
            .all(|b| matches!(b, ShapeParams::Sphere(_)));
        if !config.domain.is_bounded() || !spheres {
            return Chart::Identity;
        }
        let offsets = config.offsets();
        let radius_index: Vec<usize> = offsets.iter().map(|o| o + 3).collect();
        let q = config.coords();
        let r0 = radius_index.iter().map(|&i| q[i]).fold(0.0, f64::max);
        Chart::CubedRadii { radius_index, r0 }
    }

    fn to_chart(&self, q: &[f64], qdot: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = q.iter().chain(qdot).copied().collect();
        if let Chart::CubedRadii { radius_index, r0 } = self {
            let p = q.len();
            for &i in radius_index {
                let r = q[i];
                y[i] = r.powi(3) / (3.0 * r0 * r0);
                y[p + i] = r * r * qdot[i] / (r0 * r0);
            }
        }
        y
    }

    fn coords_of(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = y.len() / 2;
        let mut q = y[..p].to_vec();
        let mut qdot = y[p..].to_vec();
        if let Chart::CubedRadii { radius_index, r0 } = self {
            for &i in radius_index {
                if !(y[i] > 0.0) {
                    return Err(BubbleError::DegenerateShape(format!(
                        "radius collapsed (cubed-radius chart value {})",
                        y[i]
                    )));
                }
                let r = (3.0 * r0 * r0 * y[i]).cbrt();
                q[i] = r;
                qdot[i] = r0 * r0 * y[p + i] / (r * r);
            }
        }
        Ok((q, qdot))
    }

    fn derivative(&self, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Vec<f64> {
        let p = q.len();
        let mut d: Vec<f64> = qdot.iter().chain(qddot).copied().collect();
        if let Chart::CubedRadii { radius_index, r0 } = self {
            for &i in radius_index {
                let (r, v, a) = (q[i], qdot[i], qddot[i]);
                d[i] = r * r * v / (r0 * r0);
                d[p + i] = (r * r * a + 2.0 * r * v * v) / (r0 * r0);
            }
        }
        d
    }
}

fn classify(error: &BubbleError) -> TerminationReason {
    match error {
        BubbleError::DegenerateShape(_) => TerminationReason::DegenerateShape,
        BubbleError::Inadmissible(_) => TerminationReason::Collision,
        _ => TerminationReason::SolverFailure,
    }
}

struct Sampler<'a> {
    model: &'a Model,
    template: &'a Configuration,
    cadence: usize,
    samples: Vec<Sample>,
    gram: (f64, f64),
    bem: f64,
    reciprocity: f64,
}

impl Sampler<'_> {
    fn record(&mut self, time: f64, q: Vec<f64>, qdot: Vec<f64>) -> Result<()> {
        let config = self.template.with_coords(&q)?;
        let eval: EomEvaluation = eom_flat(self.model, &config, &qdot)?;
        self.gram.0 = self.gram.0.min(eval.added_mass.condition);
        self.gram.1 = self.gram.1.max(eval.added_mass.condition);
        self.bem = self.bem.max(eval.added_mass.bem_condition);
        self.reciprocity = self.reciprocity.max(eval.added_mass.reciprocity_error);
        let impulse = (config.bubbles.len() == 1
            && !config.domain.is_bounded()
            && matches!(config.bubbles[0], ShapeParams::Sphere(_)))
        .then(|| {
            let m = &eval.added_mass.full * DVector::from_column_slice(&qdot);
            Vec3::new(m[0], m[1], m[2])
        });
        let residual = if self.cadence > 0 && self.samples.len().is_multiple_of(self.cadence) {
            let state = State::from_coords(self.template, &q, &qdot, time)?;
            Some(boundary_residual(self.model, &state, &eval.qddot)?)
        } else {
            None
        };
        self.samples.push(Sample {
            time,
            coords: q,
            velocity: qdot,
            kinetic: eval.kinetic,
            potential: eval.potential.value,
            impulse,
            residual,
        });
        Ok(())
    }
}

enum Stop {
    Collision(String),
    Sampling(BubbleError),
}

/// Integrates the reduced equations from `initial` to `settings.t_end`.
/// Errors only for invalid input; events during the run end it with the
/// matching termination reason.
pub fn integrate(
    model: &Model,
    initial: &State,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    if !(settings.t_end > 0.0) || !(settings.output_dt > 0.0) {
        return Err(BubbleError::Domain(
            "t_end and output_dt must be positive".into(),
        ));
    }
    let template = initial.config.clone();
    let report = check_admissible(&template);
    if !report.is_admissible() {
        let what: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(BubbleError::Inadmissible(what.join("; ")));
    }
    let q0 = template.coords();
    let v0 = initial.velocity_coords();
    check_velocity_constraint(&template, &v0)?;

    let chart = Chart::for_config(&template);
    let h0 = settings.initial_step.unwrap_or_else(|| {
        model
            .characteristic_period(&template)
            .map_or(1e-3 * settings.t_end, |t| 1e-3 * t)
    });
    let opts = IntegratorOptions {
        rel_tol: settings.rel_tol,
        abs_tol: settings.abs_tol,
        initial_step: h0,
        max_steps: settings.max_steps,
        ..Default::default()
    };

    let mut sampler = Sampler {
        model,
        template: &template,
        cadence: settings.residual_cadence,
        samples: Vec::new(),
        gram: (f64::INFINITY, 0.0),
        bem: 0.0,
        reciprocity: 0.0,
    };
    sampler.record(initial.time, q0.clone(), v0.clone())?;

    let t0 = initial.time;
    let t_end = t0 + settings.t_end;
    let mut next = 1usize;
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (q, qdot) = chart.coords_of(y)?;
        let config = template.with_coords(&q)?;
        let eval = eom_flat(model, &config, &qdot)?;
        Ok(chart.derivative(&q, &qdot, &eval.qddot))
    };
    let on_step = |step: &DenseStep| -> Result<Option<Stop>> {
        let emit = |sampler: &mut Sampler, t: f64| -> Result<()> {
            let (q, qdot) = chart.coords_of(&step.eval(t))?;
            sampler.record(t, q, qdot)
        };
        loop {
            let t = t0 + next as f64 * settings.output_dt;
            if t > step.t1() * (1.0 + 1e-14) || t > t_end * (1.0 + 1e-14) {
                break;
            }
            if let Err(e) = emit(&mut sampler, t.min(step.t1())) {
                return Ok(Some(Stop::Sampling(e)));
            }
            next += 1;
        }
        let end = step.eval(step.t1());
        let (q, _) = match chart.coords_of(&end) {
            Ok(v) => v,
            Err(e) => return Ok(Some(Stop::Sampling(e))),
        };
        let config = match template.with_coords(&q) {
            Ok(c) => c,
            Err(e) => return Ok(Some(Stop::Sampling(e))),
        };
        if config.bubbles.len() > 1 || config.domain.is_bounded() {
            let report = check_admissible(&config);
            let gap = report.min_relative_gap(&config);
            if gap < model.collision_gap_fraction {
                return Ok(Some(Stop::Collision(format!(
                    "relative gap {gap:.4e} below {} at t = {:.9e}",
                    model.collision_gap_fraction,
                    step.t1()
                ))));
            }
        }
        Ok(None)
    };

    let y0 = chart.to_chart(&q0, &v0);
    let run = dopri5(rhs, t0, y0, t_end, &opts, on_step);
    let (termination, message, stats, final_y) = match run {
        Ok(r) => match r.outcome {
            Outcome::Completed => (TerminationReason::Completed, None, r.stats, None),
            Outcome::Stopped(Stop::Collision(m)) => (
                TerminationReason::Collision,
                Some(m),
                r.stats,
                Some((r.t, r.y)),
            ),
            Outcome::Stopped(Stop::Sampling(e)) => {
                (classify(&e), Some(e.to_string()), r.stats, None)
            }
            Outcome::StepUnderflow(e) => {
                let reason = e
                    .as_ref()
                    .map_or(TerminationReason::SolverFailure, classify);
                let msg = format!(
                    "step size underflow at t = {:.9e}{}",
                    r.t,
                    e.map(|e| format!(": {e}")).unwrap_or_default()
                );
                (reason, Some(msg), r.stats, Some((r.t, r.y)))
            }
        },
        Err(e) => (
            classify(&e),
            Some(e.to_string()),
            StepStats::default(),
            None,
        ),
    };
    if let Some((t, y)) = final_y {
        let last = sampler.samples.last().map_or(f64::NEG_INFINITY, |s| s.time);
        if t > last {
            if let Ok((q, qdot)) = chart.coords_of(&y) {
                // the final state may be unevaluable; keep the run's outcome
                let _ = sampler.record(t, q, qdot);
            }
        }
    }
    if let Some(m) = &message {
        log::info!("integration ended ({}): {m}", termination.as_str());
    }
    Ok(Trajectory {
        samples: sampler.samples,
        termination,
        message,
        stats,
        gram_condition: sampler.gram,
        max_bem_condition: sampler.bem,
        max_reciprocity_error: sampler.reciprocity,
        template,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{BubbleGasState, EnergyModel, GasLaw};
    use crate::shapes::{Domain, TangentVector};
    use std::f64::consts::PI;

    fn gas(r: f64) -> BubbleGasState {
        BubbleGasState::new(
            4.0 / 3.0 * PI * r.powi(3),
            GasLaw::polytropic(1.0, 1.4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let model = Model::new(
            1.0,
            EnergyModel {
                p_infinity: 1.0,
                surface_tension: 0.0,
                gases: vec![gas(1.0)],
            },
            1,
        );
        let cfg = Configuration::unbounded(vec![ShapeParams::sphere(Vec3::zeros(), 1.0).unwrap()]);
        let traj = integrate(
            &model,
            &State::at_rest(cfg),
            &IntegrationSettings::new(2.0, 0.5),
        )
        .unwrap();
        assert_eq!(traj.termination, TerminationReason::Completed);
        assert_eq!(traj.samples.len(), 5);
        for s in &traj.samples {
            assert!((s.coords[3] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn chart_round_trip() {
        let cfg = Configuration::new(
            vec![
                ShapeParams::sphere(Vec3::new(-0.8, 0.0, 0.0), 0.5).unwrap(),
                ShapeParams::sphere(Vec3::new(0.9, 0.0, 0.0), 0.4).unwrap(),
            ],
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 2.0,
            },
        );
        let chart = Chart::for_config(&cfg);
        let q = cfg.coords();
        let qdot = vec![0.1, 0.2, 0.0, 0.3, 0.0, 0.0, -0.1, -0.2];
        let (q2, v2) = chart.coords_of(&chart.to_chart(&q, &qdot)).unwrap();
        for i in 0..8 {
            assert!((q[i] - q2[i]).abs() < 1e-15 && (qdot[i] - v2[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn cavity_rejects_volume_changing_velocity() {
        let cfg = Configuration::new(
            vec![ShapeParams::sphere(Vec3::zeros(), 0.5).unwrap()],
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 2.0,
            },
        );
        let model = Model::new(
            1.0,
            EnergyModel {
                p_infinity: 1.0,
                surface_tension: 0.0,
                gases: vec![gas(0.5)],
            },
            1,
        );
        let state = State::new(
            cfg,
            vec![TangentVector::Sphere {
                center_rate: Vec3::zeros(),
                radius_rate: 0.1,
            }],
            0.0,
        )
        .unwrap();
        assert!(matches!(
            integrate(&model, &state, &IntegrationSettings::new(1.0, 0.1)),
            Err(BubbleError::Constraint(_))
        ));
    }

    #[test]
    fn approaching_spheres_stop_on_collision() {
        let cfg = Configuration::unbounded(vec![
            ShapeParams::sphere(Vec3::new(-1.2, 0.0, 0.0), 1.0).unwrap(),
            ShapeParams::sphere(Vec3::new(1.2, 0.0, 0.0), 1.0).unwrap(),
        ]);
        let model = Model::new(
            1.0,
            EnergyModel {
                p_infinity: 1.0,
                surface_tension: 0.0,
                gases: vec![gas(1.0), gas(1.0)],
            },
            1,
        );
        let v = |x: f64| TangentVector::Sphere {
            center_rate: Vec3::new(x, 0.0, 0.0),
            radius_rate: 0.0,
        };
        let state = State::new(cfg, vec![v(1.0), v(-1.0)], 0.0).unwrap();
        let mut settings = IntegrationSettings::new(2.0, 0.05);
        settings.rel_tol = 1e-6;
        settings.abs_tol = 1e-8;
        let traj = integrate(&model, &state, &settings).unwrap();
        assert_eq!(
            traj.termination,
            TerminationReason::Collision,
            "{:?}",
            traj.message
        );
        let last = traj.samples.last().unwrap();
        assert!(last.coords[4] - last.coords[0] < 2.0 + 0.2 + 0.05);
    }
}
