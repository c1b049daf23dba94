use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::bem::{BoundarySolver, PotentialSolution};
use crate::dynamics::constraint_basis;
use crate::error::{BubbleError, Result};
use crate::shapes::{check_admissible, Configuration, Domain, ShapeFamily, SurfaceMesh};

/// Relative finite-difference step for the added-mass Jacobian.
pub const JACOBIAN_FD_STEP: f64 = 1e-4;

/// Kinetic-energy matrix of the liquid in shape coordinates.
#[derive(Debug, Clone)]
pub struct AddedMassMatrix {
    /// `p x p` matrix in the canonical coordinates. In cavity mode this is
    /// `B reduced B^T`, which vanishes along the volume-changing direction.
    pub full: DMatrix<f64>,
    /// Orthonormal columns spanning the admissible velocities.
    pub basis: DMatrix<f64>,
    /// Gram matrix in the basis, symmetrized.
    pub reduced: DMatrix<f64>,
    /// `max |A - A^T| / max |A|` before symmetrization.
    pub reciprocity_error: f64,
    pub min_eigenvalue: f64,
    pub condition: f64,
    /// Condition estimate of the collocation matrix.
    pub bem_condition: f64,
}

/// Bubble meshes in configuration order, then the cavity wall if any.
pub fn boundary_meshes(config: &Configuration, level: usize) -> Vec<SurfaceMesh> {
    let mut meshes: Vec<SurfaceMesh> = config
        .bubbles
        .iter()
        .enumerate()
        .map(|(k, b)| SurfaceMesh::for_shape(b, level, k))
        .collect();
    match &config.domain {
        Domain::Unbounded => {}
        Domain::CavitySphere { center, radius } => {
            meshes.push(SurfaceMesh::cavity_sphere(*center, *radius, level))
        }
        Domain::CavityMesh(wall) => meshes.push(SurfaceMesh::flat_wall(
            wall.vertices.clone(),
            wall.triangles.clone(),
        )),
    }
    meshes
}

/// Normal velocity of each panel for each column of `directions` (`p x d`);
/// zero on the wall.
pub fn direction_data(
    config: &Configuration,
    meshes: &[SurfaceMesh],
    directions: &DMatrix<f64>,
) -> Mat<f64> {
    let n: usize = meshes.iter().map(|m| m.len()).sum();
    let offsets = config.offsets();
    let mut data = Mat::zeros(n, directions.ncols());
    let mut row = 0;
    for mesh in meshes {
        if let crate::shapes::SurfaceRole::Bubble(k) = mesh.role {
            let b = &config.bubbles[k];
            let block = offsets[k]..offsets[k] + b.dim();
            for c in 0..directions.ncols() {
                let mdot: Vec<f64> = block.clone().map(|i| directions[(i, c)]).collect();
                if mdot.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for (i, p) in mesh.panels.iter().enumerate() {
                    data[(row + i, c)] = b.normal_velocity(&mdot, &p.point, &p.normal);
                }
            }
        }
        row += mesh.len();
    }
    data
}

fn solutions(
    solver: &BoundarySolver,
    density: &Mat<f64>,
    phi: &Mat<f64>,
) -> Vec<PotentialSolution> {
    (0..density.ncols())
        .map(|c| PotentialSolution {
            density: (0..solver.len()).map(|i| density[(i, c)]).collect(),
            boundary_phi: (0..solver.len()).map(|i| phi[(i, c)]).collect(),
            meshes: solver.meshes().clone(),
        })
        .collect()
}

/// Potentials generated by the given parameter directions (columns).
pub fn basis_potentials_along(
    config: &Configuration,
    level: usize,
    directions: &DMatrix<f64>,
) -> Result<Vec<PotentialSolution>> {
    let meshes = boundary_meshes(config, level);
    let data = direction_data(config, &meshes, directions);
    let solver = BoundarySolver::new(meshes, config.domain.is_bounded())?;
    let (density, phi) = solver.solve_columns(&data)?;
    Ok(solutions(&solver, &density, &phi))
}

/// One potential per admissible basis direction: the canonical coordinate
/// directions in unbounded liquid, the orthonormal basis of the zero-flux
/// hyperplane inside a cavity.
pub fn basis_potentials(config: &Configuration, level: usize) -> Result<Vec<PotentialSolution>> {
    let basis = constraint_basis(config)?;
    basis_potentials_along(config, level, &basis.vectors)
}

/// Potential of a single velocity `mdot` (flat coordinates).
pub fn velocity_potential(
    config: &Configuration,
    level: usize,
    mdot: &[f64],
) -> Result<PotentialSolution> {
    let d = DMatrix::from_column_slice(mdot.len(), 1, mdot);
    Ok(basis_potentials_along(config, level, &d)?.remove(0))
}

/// `A_ij = -rho sum_panels phi^i g^j w` over the bubble panels.
pub fn added_mass(config: &Configuration, level: usize, density: f64) -> Result<AddedMassMatrix> {
    let basis = constraint_basis(config)?.vectors;
    let meshes = boundary_meshes(config, level);
    let data = direction_data(config, &meshes, &basis);
    let solver = BoundarySolver::new(meshes, config.domain.is_bounded())?;
    let (_, phi) = solver.solve_columns(&data)?;
    let w = solver.weights();
    let d = basis.ncols();
    let raw = DMatrix::from_fn(d, d, |i, j| {
        -density
            * (0..solver.len())
                .map(|k| phi[(k, i)] * data[(k, j)] * w[k])
                .sum::<f64>()
    });
    let scale = raw.amax();
    let reciprocity_error = (&raw - raw.transpose()).amax() / scale;
    let reduced = (&raw + raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced.clone()).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if !(min > 0.0) || !reduced.iter().all(|v| v.is_finite()) {
        return Err(BubbleError::Discretization {
            message: "added-mass matrix is not positive definite".into(),
            eigenvalues: eig.iter().copied().collect(),
        });
    }
    let full = &basis * &reduced * basis.transpose();
    log::debug!(
        "added mass: min eigenvalue {min:.6e}, condition {:.3e}",
        max / min
    );
    Ok(AddedMassMatrix {
        full,
        basis,
        reduced,
        reciprocity_error,
        min_eigenvalue: min,
        condition: max / min,
        bem_condition: solver.condition(),
    })
}

fn admissible_at(config: &Configuration, q: &[f64]) -> Option<Configuration> {
    let c = config.with_coords(q).ok()?;
    check_admissible(&c).is_admissible().then_some(c)
}

/// `dA/dq_k` for every coordinate `k`, by central differences of the full
/// matrix with step `JACOBIAN_FD_STEP (1 + |q_k|)`. Falls back to a
/// one-sided difference when a step leaves the admissible set.
pub fn added_mass_jacobian(
    config: &Configuration,
    level: usize,
    density: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let all: Vec<usize> = (0..config.dim()).collect();
    jacobian_columns(config, level, density, JACOBIAN_FD_STEP, None, &all)
}

/// Finite-difference derivatives along the listed coordinates. `center` is
/// `A(q)` if already known; it is only needed by one-sided fallbacks.
pub(crate) fn jacobian_columns(
    config: &Configuration,
    level: usize,
    density: f64,
    step: f64,
    center: Option<&DMatrix<f64>>,
    which: &[usize],
) -> Result<Vec<DMatrix<f64>>> {
    let q = config.coords();
    which
        .par_iter()
        .map(|&k| {
            let h = step * (1.0 + q[k].abs());
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let plus = admissible_at(config, &qp);
            let minus = admissible_at(config, &qm);
            let eval = |c: &Configuration| added_mass(c, level, density).map(|a| a.full);
            let here = || -> Result<DMatrix<f64>> {
                match center {
                    Some(a) => Ok(a.clone()),
                    None => eval(config),
                }
            };
            let d = match (plus, minus) {
                (Some(p), Some(m)) => (eval(&p)? - eval(&m)?) / (2.0 * h),
                (Some(p), None) => {
                    log::warn!(
                        "coordinate {k}: backward step inadmissible, using a forward difference"
                    );
                    (eval(&p)? - here()?) / h
                }
                (None, Some(m)) => {
                    log::warn!(
                        "coordinate {k}: forward step inadmissible, using a backward difference"
                    );
                    (here()? - eval(&m)?) / h
                }
                (None, None) => {
                    return Err(BubbleError::Inadmissible(format!(
                        "no admissible finite-difference step in coordinate {k}"
                    )))
                }
            };
            Ok((&d + d.transpose()) * 0.5)
        })
        .collect()
}

/// Same result as [`added_mass_jacobian`] with fewer solves. In unbounded
/// liquid the discrete matrix is invariant under a common translation of all
/// bubbles and homogeneous of degree 3 under scaling about any point, because
/// every mesh is an affine image of a fixed reference mesh. Those identities
/// give the centre derivatives of the first bubble and one shape derivative
/// of it from the remaining columns, which are differenced. Inside a cavity
/// every column is differenced.
pub fn added_mass_jacobian_reduced(
    config: &Configuration,
    level: usize,
    density: f64,
    step: f64,
    a: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let p = config.dim();
    if config.domain.is_bounded() {
        let all: Vec<usize> = (0..p).collect();
        return jacobian_columns(config, level, density, step, Some(a), &all);
    }
    let q = config.coords();
    let first = &config.bubbles[0];
    // largest shape coordinate of the first bubble, kept away from zero
    let anchor = (3..first.dim())
        .max_by(|&i, &j| q[i].abs().total_cmp(&q[j].abs()))
        .expect("shape blocks have coordinates beyond the centre");
    let which: Vec<usize> = (3..p).filter(|&i| i != anchor).collect();
    let cols = jacobian_columns(config, level, density, step, Some(a), &which)?;
    let mut jac = vec![DMatrix::zeros(p, p); p];
    for (&i, c) in which.iter().zip(cols) {
        jac[i] = c;
    }
    let is_center = |i: usize| {
        let o = config.offsets()[config.owner_of(i)];
        i - o < 3
    };
    for axis in 0..3 {
        let mut sum = DMatrix::zeros(p, p);
        for &o in &config.offsets()[1..] {
            sum += &jac[o + axis];
        }
        jac[axis] = -sum;
    }
    // scaling about the first centre: sum_i (q_i - P_i) dA/dq_i = 3 A
    let c0 = first.center();
    let mut rest = a * 3.0;
    for i in 0..p {
        if i == anchor {
            continue;
        }
        let lever = if is_center(i) {
            let o = config.offsets()[config.owner_of(i)];
            q[i] - c0[i - o]
        } else {
            q[i]
        };
        if lever != 0.0 {
            rest -= &jac[i] * lever;
        }
    }
    jac[anchor] = rest / q[anchor];
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{ShapeParams, Vec3};
    use std::f64::consts::PI;

    fn single(r: f64) -> Configuration {
        Configuration::unbounded(vec![
            ShapeParams::sphere(Vec3::new(0.1, -0.2, 0.3), r).unwrap()
        ])
    }

    #[test]
    fn single_sphere_level2() {
        let a = added_mass(&single(1.0), 2, 1.0).unwrap();
        let exact = [2.0 * PI / 3.0, 2.0 * PI / 3.0, 2.0 * PI / 3.0, 4.0 * PI];
        for (i, e) in exact.iter().enumerate() {
            assert!(
                (a.full[(i, i)] / e - 1.0).abs() < 5e-3,
                "{i}: {}",
                a.full[(i, i)]
            );
            for j in 0..4 {
                if i != j {
                    assert!(a.full[(i, j)].abs() < 1e-3 * 4.0 * PI);
                }
            }
        }
        assert!(a.reciprocity_error < 1e-2);
    }

    #[test]
    fn cubic_scaling() {
        let a1 = added_mass(&single(1.0), 1, 1.0).unwrap().full;
        let a2 = added_mass(&single(2.0), 1, 1.0).unwrap().full;
        assert!((a2 - a1 * 8.0).amax() < 1e-10);
    }

    #[test]
    fn jacobian_of_single_sphere() {
        let cfg = single(1.3);
        let a = added_mass(&cfg, 1, 1.0).unwrap().full;
        let jac = added_mass_jacobian(&cfg, 1, 1.0).unwrap();
        for d in &jac[..3] {
            assert!(d.amax() < 1e-6 * a.amax(), "{}", d.amax());
        }
        // the discrete matrix is exactly cubic in r
        let expected = &a * (3.0 / 1.3);
        assert!((&jac[3] - expected).amax() < 1e-6 * a.amax());
    }

    #[test]
    fn reduced_jacobian_matches_full_differences() {
        let s = crate::shapes::Mat3::new(1.1, 0.1, 0.0, 0.1, 0.8, 0.05, 0.0, 0.05, 0.9);
        let cfg = Configuration::unbounded(vec![
            ShapeParams::sphere(Vec3::new(0.3, 0.1, -0.2), 0.7).unwrap(),
            ShapeParams::ellipsoid(Vec3::new(2.6, 0.4, 0.2), s).unwrap(),
        ]);
        let a = added_mass(&cfg, 1, 1.0).unwrap().full;
        let full = added_mass_jacobian(&cfg, 1, 1.0).unwrap();
        let reduced = added_mass_jacobian_reduced(&cfg, 1, 1.0, JACOBIAN_FD_STEP, &a).unwrap();
        let scale = full.iter().map(|j| j.amax()).fold(0.0, f64::max);
        for (k, (f, r)) in full.iter().zip(&reduced).enumerate() {
            assert!((f - r).amax() < 1e-5 * scale, "{k}: {}", (f - r).amax());
        }
    }

    #[test]
    fn reduced_jacobian_of_single_sphere_needs_no_solves() {
        let cfg = single(1.3);
        let a = added_mass(&cfg, 1, 1.0).unwrap().full;
        let jac = added_mass_jacobian_reduced(&cfg, 1, 1.0, JACOBIAN_FD_STEP, &a).unwrap();
        for d in &jac[..3] {
            assert!(d.amax() < 1e-12 * a.amax());
        }
        assert!((&jac[3] - &a * (3.0 / 1.3)).amax() < 1e-12 * a.amax());
    }

    #[test]
    fn cavity_radius_direction_is_rejected() {
        let cfg = Configuration::new(
            vec![ShapeParams::sphere(Vec3::zeros(), 1.0).unwrap()],
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 2.5,
            },
        );
        let radial = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            basis_potentials_along(&cfg, 1, &radial),
            Err(BubbleError::Constraint(_))
        ));
        assert_eq!(basis_potentials(&cfg, 1).unwrap().len(), 3);
    }
}
