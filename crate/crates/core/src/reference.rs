//! Closed-form model of one spherical bubble in unbounded liquid: explicit
//! potential, radial and translational equations. Serves as the oracle for
//! the general pipeline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{dopri5, IntegratorOptions, Outcome, StepStats};
use crate::error::{BubbleError, Result};
use crate::gas::BubbleGasState;
use crate::potential::FieldValue;
use crate::shapes::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleBubbleState {
    pub c: Vec3,
    pub c_dot: Vec3,
    pub r: f64,
    pub r_dot: f64,
}

impl SingleBubbleState {
    pub fn new(c: Vec3, c_dot: Vec3, r: f64, r_dot: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(BubbleError::Domain(format!(
                "radius must be positive, got {r}"
            )));
        }
        Ok(Self { c, c_dot, r, r_dot })
    }

    fn to_vec(self) -> Vec<f64> {
        vec![
            self.c.x,
            self.c.y,
            self.c.z,
            self.r,
            self.c_dot.x,
            self.c_dot.y,
            self.c_dot.z,
            self.r_dot,
        ]
    }

    fn from_slice(y: &[f64]) -> Self {
        Self {
            c: Vec3::new(y[0], y[1], y[2]),
            r: y[3],
            c_dot: Vec3::new(y[4], y[5], y[6]),
            r_dot: y[7],
        }
    }
}

/// Coefficient `kappa` in the translation equation `c'' = -kappa (r'/r) c'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationCoefficient {
    /// `kappa = 3`: the Euler-Lagrange equation of the sphere Lagrangian,
    /// which conserves the Kelvin impulse `r^3 c'`.
    #[default]
    Resolved,
    /// `kappa = 3/2`, as printed in the source text. Kept for comparison.
    PaperPrinted,
}

impl TranslationCoefficient {
    pub fn value(self) -> f64 {
        match self {
            TranslationCoefficient::Resolved => 3.0,
            TranslationCoefficient::PaperPrinted => 1.5,
        }
    }
}

/// Potential of a sphere pulsating and translating in unbounded liquid:
/// `phi = -r^2 r' / d - r^3 (c' . (x - c)) / (2 d^3)` with `d = |x - c|`.
pub fn analytic_potential(state: &SingleBubbleState, x: &Vec3) -> Result<FieldValue> {
    let rel = x - state.c;
    let d = rel.norm();
    // allow surface points that round to just inside
    if d < state.r * (1.0 - 1e-12) {
        return Err(BubbleError::Domain(format!(
            "point at distance {d} from the centre lies inside the bubble of radius {}",
            state.r
        )));
    }
    let r = state.r;
    let mono = r * r * state.r_dot;
    let dip = 0.5 * r.powi(3);
    let cd = state.c_dot.dot(&rel);
    let d3 = d.powi(3);
    let phi = -mono / d - dip * cd / d3;
    let gradient = rel * (mono / d3) - (state.c_dot / d3 - rel * (3.0 * cd / d.powi(5))) * dip;
    Ok(FieldValue { phi, gradient })
}

/// Physical parameters of the single-bubble model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceModel {
    pub gas: BubbleGasState,
    pub p_infinity: f64,
    pub density: f64,
    pub surface_tension: f64,
    pub translation: TranslationCoefficient,
}

/// `(r'', c'')` from the radial equation
/// `r r'' + 3/2 r'^2 = |c'|^2 / 4 + (p_B - p_inf - 2 sigma / r) / rho`
/// and `c'' = -kappa (r'/r) c'`.
pub fn closed_form_rhs(
    state: &SingleBubbleState,
    gas: &BubbleGasState,
    p_infinity: f64,
    density: f64,
    surface_tension: f64,
    translation: TranslationCoefficient,
) -> Result<(f64, Vec3)> {
    let r = state.r;
    if !(r > 0.0) {
        return Err(BubbleError::DegenerateShape(format!(
            "radius {r} is not positive"
        )));
    }
    let p_b = gas.pressure_at_volume(4.0 / 3.0 * PI * r.powi(3))?;
    let r_ddot = (0.25 * state.c_dot.norm_squared()
        + (p_b - p_infinity - 2.0 * surface_tension / r) / density
        - 1.5 * state.r_dot * state.r_dot)
        / r;
    let c_ddot = -state.c_dot * (translation.value() * state.r_dot / r);
    Ok((r_ddot, c_ddot))
}

/// Angular frequency of small radial oscillations, `sqrt(3 gamma p_inf / (rho r_eq^2))`,
/// neglecting surface tension. Warns if `r_eq` is not in pressure equilibrium.
pub fn minnaert_frequency(gas: &BubbleGasState, p_infinity: f64, density: f64, r_eq: f64) -> f64 {
    if let Ok(p_b) = gas.pressure_at_volume(4.0 / 3.0 * PI * r_eq.powi(3)) {
        if (p_b - p_infinity).abs() > 1e-6 * p_infinity.abs().max(f64::MIN_POSITIVE) {
            log::warn!(
                "radius {r_eq} is not an equilibrium: gas pressure {p_b} vs ambient {p_infinity}"
            );
        }
    }
    (3.0 * gas.law.gamma() * p_infinity / (density * r_eq * r_eq)).sqrt()
}

/// `2 pi rho r^3 r'^2 + (pi/3) rho r^3 |c'|^2 + U(r)`, conserved by the
/// resolved translation equation. The printed variant has no conserved energy
/// of this form.
pub fn energy(model: &ReferenceModel, state: &SingleBubbleState) -> Result<f64> {
    let r = state.r;
    let vol = 4.0 / 3.0 * PI * r.powi(3);
    let rho_gas = model.gas.mass / vol;
    let u = model.gas.mass * model.gas.law.free_energy(rho_gas)?
        + model.p_infinity * vol
        + model.surface_tension * 4.0 * PI * r * r;
    let kinetic = 2.0 * PI * model.density * r.powi(3) * state.r_dot.powi(2)
        + PI / 3.0 * model.density * r.powi(3) * state.c_dot.norm_squared();
    Ok(kinetic + u)
}

#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SingleBubbleState>,
    pub stats: StepStats,
    /// False if the integration stopped before `t_end` (radius collapsed).
    pub completed: bool,
}

/// Integrates the closed-form equations and samples at multiples of `output_dt`.
pub fn integrate_reference(
    model: &ReferenceModel,
    initial: &SingleBubbleState,
    t_end: f64,
    output_dt: f64,
    opts: &IntegratorOptions,
) -> Result<ReferenceTrajectory> {
    if !(output_dt > 0.0) {
        return Err(BubbleError::Domain(
            "output interval must be positive".into(),
        ));
    }
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let s = SingleBubbleState::from_slice(y);
        let (rdd, cdd) = closed_form_rhs(
            &s,
            &model.gas,
            model.p_infinity,
            model.density,
            model.surface_tension,
            model.translation,
        )?;
        Ok(vec![y[4], y[5], y[6], y[7], cdd.x, cdd.y, cdd.z, rdd])
    };
    let mut times = vec![0.0];
    let mut states = vec![*initial];
    let mut next = 1usize;
    let run = dopri5(rhs, 0.0, initial.to_vec(), t_end, opts, |step| {
        while (next as f64) * output_dt <= step.t1() * (1.0 + 1e-14)
            && (next as f64) * output_dt <= t_end * (1.0 + 1e-14)
        {
            let t = (next as f64 * output_dt).min(step.t1());
            times.push(t);
            states.push(SingleBubbleState::from_slice(&step.eval(t)));
            next += 1;
        }
        Ok(None::<()>)
    })?;
    let completed = matches!(run.outcome, Outcome::Completed);
    Ok(ReferenceTrajectory {
        times,
        states,
        stats: run.stats,
        completed,
    })
}
