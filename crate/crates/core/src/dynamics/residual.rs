//! A-posteriori check of the interface condition: the liquid pressure from
//! the unsteady Bernoulli equation, integrated against each admissible normal
//! velocity, must balance the potential-energy gradient.

use nalgebra::{Matrix2, Vector2};

use super::constraint::{constraint_basis, volume_covector};
use super::model::{eom_flat, Model, State};
use crate::error::Result;
use crate::gas::potential_energy;
use crate::potential::velocity_potential;
use crate::shapes::{reference_icosphere, Configuration, ShapeFamily, SurfaceMesh, Vec3};

/// Residual norm with potentials from the boundary solver. The time step of
/// the material-derivative difference defaults to `1e-4` characteristic
/// periods.
pub fn boundary_residual(model: &Model, state: &State, qddot: &[f64]) -> Result<f64> {
    let eps = default_time_step(model, &state.config, &state.velocity_coords());
    boundary_residual_with_step(model, state, qddot, eps)
}

pub fn boundary_residual_with_step(
    model: &Model,
    state: &State,
    qddot: &[f64],
    eps: f64,
) -> Result<f64> {
    let level = model.mesh_level;
    boundary_residual_with(
        model,
        &state.config,
        &state.velocity_coords(),
        qddot,
        eps,
        |cfg, qdot| {
            let n_bubble = cfg.bubbles.len() * reference_icosphere(level).triangles.len();
            let sol = velocity_potential(cfg, level, qdot)?;
            Ok(sol.boundary_phi[..n_bubble].to_vec())
        },
    )
}

/// Convenience: residual of the accelerations `eom_rhs` produces.
pub fn residual_of_dynamics(model: &Model, state: &State) -> Result<f64> {
    let eval = eom_flat(model, &state.config, &state.velocity_coords())?;
    boundary_residual(model, state, &eval.qddot)
}

pub(crate) fn default_time_step(model: &Model, config: &Configuration, qdot: &[f64]) -> f64 {
    match model.characteristic_period(config) {
        Some(t) => 1e-4 * t,
        None => {
            let speed = qdot
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            let length = config
                .bubbles
                .iter()
                .map(|b| b.equivalent_radius())
                .fold(f64::INFINITY, f64::min);
            1e-4 * length / speed
        }
    }
}

/// Residual with a caller-supplied potential. `phi(config, qdot)` returns the
/// boundary potential on the bubble panels of the meshes at `model.mesh_level`,
/// bubble by bubble. `eps` is the time step of the central difference for the
/// material derivative of `phi`.
///
/// With `p - p_inf = -rho (d_t phi + |grad phi|^2 / 2)` the residual in basis
/// direction `b` is `int (p - p_inf) <V, b> + dU/dq . b`, and the function
/// returns the largest magnitude over `b`, divided by `p_inf` times the
/// total bubble area (by the area alone when `p_inf = 0`).
pub fn boundary_residual_with(
    model: &Model,
    config: &Configuration,
    qdot: &[f64],
    qddot: &[f64],
    eps: f64,
    phi: impl Fn(&Configuration, &[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let level = model.mesh_level;
    let q = config.coords();
    let advance = |sign: f64| -> Result<(Configuration, Vec<f64>)> {
        let qs: Vec<f64> = (0..q.len())
            .map(|i| q[i] + sign * eps * qdot[i] + 0.5 * eps * eps * qddot[i])
            .collect();
        let cfg = config.with_coords(&qs)?;
        let mut vs: Vec<f64> = (0..q.len())
            .map(|i| qdot[i] + sign * eps * qddot[i])
            .collect();
        if cfg.domain.is_bounded() {
            let l = volume_covector(&cfg);
            let a = l.iter().zip(&vs).map(|(x, y)| x * y).sum::<f64>() / l.norm_squared();
            for (v, li) in vs.iter_mut().zip(l.iter()) {
                *v -= a * li;
            }
        }
        Ok((cfg, vs))
    };
    let (cfg_p, v_p) = advance(1.0)?;
    let (cfg_m, v_m) = advance(-1.0)?;
    let phi_p = phi(&cfg_p, &v_p)?;
    let phi_m = phi(&cfg_m, &v_m)?;
    let phi_0 = phi(config, qdot)?;

    let basis = constraint_basis(config)?;
    let grad_u = potential_energy(&model.energy, config)?.gradient;
    let offsets = config.offsets();
    let mut forces = vec![0.0; basis.dim()];
    let mut area = 0.0;
    let mut row = 0;
    for (k, b) in config.bubbles.iter().enumerate() {
        let mesh = SurfaceMesh::for_shape(b, level, k);
        let block = offsets[k]..offsets[k] + b.dim();
        let v_k = &qdot[block.clone()];
        let local = &phi_0[row..row + mesh.len()];
        for (i, panel) in mesh.panels.iter().enumerate() {
            let n = panel.normal;
            let g = b.normal_velocity(v_k, &panel.point, &n);
            let x_dot = b.point_velocity(&panel.reference, v_k);
            let x_dot_t = x_dot - n * x_dot.dot(&n);
            let grad_t = surface_gradient(&mesh, local, i);
            let dt_phi = (phi_p[row + i] - phi_m[row + i]) / (2.0 * eps);
            let bernoulli =
                dt_phi - 0.5 * g * g - x_dot_t.dot(&grad_t) + 0.5 * grad_t.norm_squared();
            let p_excess = -model.density * bernoulli;
            for (c, f) in forces.iter_mut().enumerate() {
                let dir: Vec<f64> = block.clone().map(|j| basis.vectors[(j, c)]).collect();
                *f += p_excess * b.normal_velocity(&dir, &panel.point, &n) * panel.weight;
            }
            area += panel.weight;
        }
        row += mesh.len();
    }
    let scale = if model.energy.p_infinity > 0.0 {
        model.energy.p_infinity * area
    } else {
        area
    };
    let mut worst: f64 = 0.0;
    for (c, f) in forces.iter().enumerate() {
        let du: f64 = (0..q.len())
            .map(|j| grad_u[j] * basis.vectors[(j, c)])
            .sum();
        worst = worst.max((f + du).abs());
    }
    Ok(worst / scale)
}

/// Least-squares tangential gradient at panel `i` from the panels sharing a
/// vertex with it.
fn surface_gradient(mesh: &SurfaceMesh, phi: &[f64], i: usize) -> Vec3 {
    let p = &mesh.panels[i];
    let n = p.normal;
    let t1 = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let t1 = (t1 - n * t1.dot(&n)).normalize();
    let t2 = n.cross(&t1);
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    for &j in &mesh.neighbors[i] {
        let d = mesh.panels[j].point - p.point;
        let row = Vector2::new(d.dot(&t1), d.dot(&t2));
        ata += row * row.transpose();
        atb += row * (phi[j] - phi[i]);
    }
    match ata.try_inverse() {
        Some(inv) => {
            let g = inv * atb;
            t1 * g.x + t2 * g.y
        }
        None => Vec3::zeros(),
    }
}
