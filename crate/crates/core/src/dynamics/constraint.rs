use nalgebra::{DMatrix, DVector};

use crate::error::{BubbleError, Result};
use crate::shapes::{Configuration, ShapeFamily};

/// Orthonormal basis of the admissible velocities.
#[derive(Debug, Clone)]
pub struct ConstraintBasis {
    /// `p x d` matrix with orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// Total-volume covector `l(mdot) = sum_k dvol_k . mdot_k`; `None` in
    /// unbounded liquid.
    pub flux: Option<DVector<f64>>,
}

impl ConstraintBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Flux of a velocity, zero when unconstrained.
    pub fn flux_of(&self, qdot: &[f64]) -> f64 {
        self.flux
            .as_ref()
            .map_or(0.0, |l| l.iter().zip(qdot).map(|(a, b)| a * b).sum())
    }
}

/// Gradient of the total bubble volume in flat coordinates.
pub fn volume_covector(config: &Configuration) -> DVector<f64> {
    DVector::from_iterator(
        config.dim(),
        config.bubbles.iter().flat_map(|b| b.measures().d_volume_dm),
    )
}

/// Identity in unbounded liquid; inside a cavity, an orthonormal basis of
/// the kernel of the total-volume covector (from a Householder reflection).
pub fn constraint_basis(config: &Configuration) -> Result<ConstraintBasis> {
    let p = config.dim();
    if !config.domain.is_bounded() {
        return Ok(ConstraintBasis {
            vectors: DMatrix::identity(p, p),
            flux: None,
        });
    }
    let l = volume_covector(config);
    let norm = l.norm();
    if !(norm > 0.0) {
        return Err(BubbleError::Unsupported(
            "the total-volume covector vanishes; the cavity constraint is degenerate".into(),
        ));
    }
    let n = &l / norm;
    let j = n.iamax();
    // H = I - 2 u u^T maps n to -sign(n_j) e_j; its other columns span ker l
    let mut u = n.clone();
    u[j] += n[j].signum();
    let u = u.normalize();
    let h = DMatrix::identity(p, p) - &u * u.transpose() * 2.0;
    let cols: Vec<_> = (0..p)
        .filter(|&c| c != j)
        .map(|c| h.column(c).into_owned())
        .collect();
    Ok(ConstraintBasis {
        vectors: DMatrix::from_columns(&cols),
        flux: Some(l),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{Domain, ShapeParams, Vec3};

    fn cavity(radii: &[f64]) -> Configuration {
        let bubbles = radii
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                ShapeParams::sphere(Vec3::new(3.0 * k as f64 - 1.5, 0.0, 0.0), r).unwrap()
            })
            .collect();
        Configuration::new(
            bubbles,
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 5.0,
            },
        )
    }

    #[test]
    fn unbounded_is_identity() {
        let cfg = Configuration::unbounded(vec![ShapeParams::sphere(Vec3::zeros(), 1.0).unwrap()]);
        let b = constraint_basis(&cfg).unwrap();
        assert_eq!(b.vectors, DMatrix::identity(4, 4));
    }

    #[test]
    fn one_sphere_keeps_translations() {
        let b = constraint_basis(&cavity(&[1.0])).unwrap();
        assert_eq!(b.dim(), 3);
        for c in 0..3 {
            assert!(b.vectors[(3, c)].abs() < 1e-15);
        }
    }

    #[test]
    fn two_spheres_hyperplane() {
        let (r1, r2) = (1.0, 0.7);
        let b = constraint_basis(&cavity(&[r1, r2])).unwrap();
        assert_eq!(b.dim(), 7);
        assert!((b.vectors.transpose() * &b.vectors - DMatrix::identity(7, 7)).amax() < 1e-14);
        for c in 0..7 {
            let v = b.vectors.column(c);
            assert!((r1 * r1 * v[3] + r2 * r2 * v[7]).abs() < 1e-15);
        }
    }
}
