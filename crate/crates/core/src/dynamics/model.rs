use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::constraint::{constraint_basis, volume_covector, ConstraintBasis};
use crate::error::{BubbleError, Result};
use crate::gas::{potential_energy, EnergyModel, PotentialEnergy};
use crate::potential::{
    added_mass, added_mass_jacobian_reduced, AddedMassMatrix, JACOBIAN_FD_STEP,
};
use crate::shapes::{
    check_admissible, sym_from_coords, Configuration, ShapeFamily, ShapeParams, TangentVector,
};

/// Physical and discretization parameters of the reduced system.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// Liquid density.
    pub density: f64,
    pub energy: EnergyModel,
    pub mesh_level: usize,
    /// Relative step of the added-mass finite differences.
    pub fd_step: f64,
    /// Integration stops when a gap falls below this fraction of the smaller
    /// equivalent radius.
    pub collision_gap_fraction: f64,
}

impl Model {
    pub fn new(density: f64, energy: EnergyModel, mesh_level: usize) -> Self {
        Self {
            density,
            energy,
            mesh_level,
            fd_step: JACOBIAN_FD_STEP,
            collision_gap_fraction: 0.02,
        }
    }

    /// Shortest small-amplitude radial period over the bubbles, from the
    /// Minnaert formula at the current equivalent radii. `None` without
    /// ambient pressure.
    pub fn characteristic_period(&self, config: &Configuration) -> Option<f64> {
        if !(self.energy.p_infinity > 0.0) {
            return None;
        }
        config
            .bubbles
            .iter()
            .zip(&self.energy.gases)
            .map(|(b, g)| {
                let r = b.equivalent_radius();
                let omega =
                    (3.0 * g.law.gamma() * self.energy.p_infinity / (self.density * r * r)).sqrt();
                2.0 * PI / omega
            })
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct State {
    pub config: Configuration,
    /// One tangent per bubble, matching its family.
    pub velocity: Vec<TangentVector>,
    pub time: f64,
}

impl State {
    pub fn new(config: Configuration, velocity: Vec<TangentVector>, time: f64) -> Result<Self> {
        if velocity.len() != config.bubbles.len() {
            return Err(BubbleError::Domain(format!(
                "{} velocities for {} bubbles",
                velocity.len(),
                config.bubbles.len()
            )));
        }
        for (k, (b, v)) in config.bubbles.iter().zip(&velocity).enumerate() {
            if b.family_name() != v.family_name() {
                return Err(BubbleError::Domain(format!(
                    "bubble {k}: {} velocity for a {}",
                    v.family_name(),
                    b.family_name()
                )));
            }
        }
        Ok(Self {
            config,
            velocity,
            time,
        })
    }

    /// State at rest.
    pub fn at_rest(config: Configuration) -> Self {
        let velocity = config
            .bubbles
            .iter()
            .map(|b| b.tangent_from_coords(&vec![0.0; b.dim()]))
            .collect();
        Self {
            config,
            velocity,
            time: 0.0,
        }
    }

    pub fn from_coords(
        template: &Configuration,
        q: &[f64],
        qdot: &[f64],
        time: f64,
    ) -> Result<Self> {
        let config = template.with_coords(q)?;
        let velocity = split_tangents(&config, qdot);
        Ok(Self {
            config,
            velocity,
            time,
        })
    }

    pub fn velocity_coords(&self) -> Vec<f64> {
        self.velocity.iter().flat_map(|v| v.to_coords()).collect()
    }
}

pub(crate) fn split_tangents(config: &Configuration, flat: &[f64]) -> Vec<TangentVector> {
    config
        .bubbles
        .iter()
        .zip(config.offsets())
        .map(|(b, o)| b.tangent_from_coords(&flat[o..o + b.dim()]))
        .collect()
}

/// `qdot^T H qdot` for the Hessian `H` of the total bubble volume.
pub fn volume_hessian_form(config: &Configuration, qdot: &[f64]) -> f64 {
    config
        .bubbles
        .iter()
        .zip(config.offsets())
        .map(|(b, o)| match b {
            ShapeParams::Sphere(s) => 8.0 * PI * s.radius * qdot[o + 3].powi(2),
            ShapeParams::Ellipsoid(e) => {
                // d^2 det[E, E] = det(S) ((tr S^-1 E)^2 - tr (S^-1 E)^2)
                let m = e.inverse() * sym_from_coords(&qdot[o + 3..o + 9]);
                let tr = m.trace();
                4.0 / 3.0 * PI * e.shape_matrix().determinant() * (tr * tr - (m * m).trace())
            }
        })
        .sum()
}

/// Everything computed on the way to `q''`.
#[derive(Debug, Clone)]
pub struct EomEvaluation {
    pub qddot: Vec<f64>,
    pub added_mass: AddedMassMatrix,
    pub jacobian: Vec<DMatrix<f64>>,
    pub potential: PotentialEnergy,
    pub basis: ConstraintBasis,
    pub kinetic: f64,
}

/// Euler-Lagrange equations of `L = q'^T A(q) q' / 2 - U(q)` in flat
/// coordinates. Inside a cavity the equations are projected onto the
/// admissible velocities and the component along the volume gradient is
/// fixed by differentiating the volume constraint twice.
pub fn eom_flat(model: &Model, config: &Configuration, qdot: &[f64]) -> Result<EomEvaluation> {
    let p = config.dim();
    if qdot.len() != p {
        return Err(BubbleError::Domain(format!(
            "velocity has {} entries, expected {p}",
            qdot.len()
        )));
    }
    let report = check_admissible(config);
    if !report.is_admissible() {
        let what: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(BubbleError::Inadmissible(what.join("; ")));
    }
    let basis = constraint_basis(config)?;
    let am = added_mass(config, model.mesh_level, model.density).map_err(|e| match e {
        BubbleError::Discretization { message, .. } => BubbleError::Solver(message),
        other => other,
    })?;
    let jac = added_mass_jacobian_reduced(
        config,
        model.mesh_level,
        model.density,
        model.fd_step,
        &am.full,
    )?;
    let potential = potential_energy(&model.energy, config)?;

    let v = DVector::from_column_slice(qdot);
    let mut force = DVector::from_iterator(p, potential.gradient.iter().map(|g| -g));
    for (k, jk) in jac.iter().enumerate() {
        let jv = jk * &v;
        force -= &jv * qdot[k];
        force[k] += 0.5 * v.dot(&jv);
    }

    let reduced_force = basis.vectors.transpose() * &force;
    let chol = am.reduced.clone().cholesky().ok_or_else(|| {
        BubbleError::Solver("added-mass matrix lost positive definiteness".into())
    })?;
    let mut qddot = &basis.vectors * chol.solve(&reduced_force);
    if let Some(l) = &basis.flux {
        // l . q'' + q'^T H q' = 0 keeps the total volume fixed
        let alpha = -volume_hessian_form(config, qdot) / l.norm_squared();
        qddot += l * alpha;
    }
    let kinetic = 0.5 * v.dot(&(&am.full * &v));
    Ok(EomEvaluation {
        qddot: qddot.iter().copied().collect(),
        added_mass: am,
        jacobian: jac,
        potential,
        basis,
        kinetic,
    })
}

/// Acceleration of every bubble.
pub fn eom_rhs(model: &Model, state: &State) -> Result<Vec<TangentVector>> {
    let qdot = state.velocity_coords();
    check_velocity_constraint(&state.config, &qdot)?;
    let eval = eom_flat(model, &state.config, &qdot)?;
    Ok(split_tangents(&state.config, &eval.qddot))
}

/// Rejects cavity velocities with a relative net volume flux above 1e-9.
pub fn check_velocity_constraint(config: &Configuration, qdot: &[f64]) -> Result<()> {
    if !config.domain.is_bounded() {
        return Ok(());
    }
    let l = volume_covector(config);
    let flux: f64 = l.iter().zip(qdot).map(|(a, b)| a * b).sum();
    let scale = l.norm() * qdot.iter().map(|x| x * x).sum::<f64>().sqrt();
    if flux.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(BubbleError::Constraint(format!(
            "initial velocity changes the total bubble volume at rate {flux:.6e}; inside a closed cavity it must be zero"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{BubbleGasState, GasLaw};
    use crate::shapes::{Domain, Mat3, Vec3};

    fn equilibrium_gas(r: f64) -> BubbleGasState {
        BubbleGasState::new(
            4.0 / 3.0 * PI * r.powi(3),
            GasLaw::polytropic(1.0, 1.4).unwrap(),
        )
        .unwrap()
    }

    fn single_model(level: usize) -> Model {
        Model::new(
            1.0,
            EnergyModel {
                p_infinity: 1.0,
                surface_tension: 0.0,
                gases: vec![equilibrium_gas(1.0)],
            },
            level,
        )
    }

    fn sphere_state(r: f64, c_dot: Vec3, r_dot: f64) -> State {
        let cfg = Configuration::unbounded(vec![ShapeParams::sphere(Vec3::zeros(), r).unwrap()]);
        State::new(
            cfg,
            vec![TangentVector::Sphere {
                center_rate: c_dot,
                radius_rate: r_dot,
            }],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_has_zero_acceleration() {
        let acc = eom_rhs(&single_model(1), &sphere_state(1.0, Vec3::zeros(), 0.0)).unwrap();
        assert!(acc[0].to_coords().iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn translation_drives_radial_growth() {
        let c_dot = Vec3::new(0.2, -0.1, 0.05);
        let acc = eom_rhs(&single_model(2), &sphere_state(1.0, c_dot, 0.0)).unwrap();
        let a = acc[0].to_coords();
        let expected = c_dot.norm_squared() / 4.0;
        assert!(
            (a[3] / expected - 1.0).abs() < 5e-3,
            "{} vs {expected}",
            a[3]
        );
        assert!(a[..3].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn volume_hessian_of_ellipsoid_matches_differences() {
        let s = Mat3::new(1.1, 0.2, 0.0, 0.2, 0.9, 0.1, 0.0, 0.1, 1.3);
        let cfg = Configuration::unbounded(vec![ShapeParams::ellipsoid(Vec3::zeros(), s).unwrap()]);
        let dir = [0.0, 0.0, 0.0, 0.3, -0.2, 0.1, 0.5, 0.05, -0.4];
        let q = cfg.coords();
        let vol = |t: f64| {
            let qt: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            cfg.with_coords(&qt).unwrap().bubbles[0].measures().volume
        };
        let h = 1e-4;
        let fd = (vol(h) - 2.0 * vol(0.0) + vol(-h)) / (h * h);
        assert!((fd - volume_hessian_form(&cfg, &dir)).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn cavity_acceleration_keeps_volume() {
        let cfg = Configuration::new(
            vec![
                ShapeParams::sphere(Vec3::new(-0.8, 0.0, 0.0), 0.5).unwrap(),
                ShapeParams::sphere(Vec3::new(0.9, 0.1, 0.0), 0.4).unwrap(),
            ],
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
                gases: vec![equilibrium_gas(0.5), equilibrium_gas(0.4)],
            },
            1,
        );
        // r1^2 r1' + r2^2 r2' = 0
        let qdot = [0.1, 0.0, 0.0, 0.16 * 0.3, 0.0, -0.05, 0.0, -0.25 * 0.3];
        check_velocity_constraint(&cfg, &qdot).unwrap();
        let eval = eom_flat(&model, &cfg, &qdot).unwrap();
        let l = volume_covector(&cfg);
        let second = l.iter().zip(&eval.qddot).map(|(a, b)| a * b).sum::<f64>()
            + volume_hessian_form(&cfg, &qdot);
        assert!(second.abs() < 1e-12);
        let bad = [0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            check_velocity_constraint(&cfg, &bad),
            Err(BubbleError::Constraint(_))
        ));
    }
}
