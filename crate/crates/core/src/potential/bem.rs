//! Indirect single-layer collocation for the Neumann problem in the liquid.
//!
//! The potential is `phi(x) = sum_j q_j int_{panel j} G(x, y) dA(y)` with
//! `G = -1/(4 pi |x - y|)`. Normals point into the liquid, and the Neumann
//! trace from that side is `(I/2 + K') q`.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::SpSolver;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{BubbleError, Result};
use crate::shapes::{QuadPoint, SurfaceMesh, Vec3};

/// Condition estimates above this are reported as ill-posed.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative net flux `|sum w g| / sum w |g|` accepted in cavity mode. The
/// discrete flux of exactly compatible data differs from zero by the panel
/// quadrature error, so this is a gross-violation test.
pub const COMPATIBILITY_TOL: f64 = 1e-2;

#[inline]
fn green(x: &Vec3, y: &Vec3) -> f64 {
    -1.0 / (4.0 * PI * (x - y).norm())
}

#[inline]
fn green_normal(x: &Vec3, n: &Vec3, y: &Vec3) -> f64 {
    let d = x - y;
    let r = d.norm();
    n.dot(&d) / (4.0 * PI * r * r * r)
}

fn integrate(x: &Vec3, n: &Vec3, rule: &[QuadPoint]) -> (f64, f64) {
    rule.iter().fold((0.0, 0.0), |(k, g), q| {
        (
            k + green_normal(x, n, &q.point) * q.weight,
            g + green(x, &q.point) * q.weight,
        )
    })
}

/// Neumann data on a set of boundary meshes.
#[derive(Debug, Clone)]
pub struct NeumannProblem {
    /// Bubble meshes first, then the cavity wall when bounded.
    pub meshes: Vec<SurfaceMesh>,
    /// One value per panel, in mesh order.
    pub boundary_data: Vec<f64>,
    pub bounded: bool,
}

/// Single-layer density with its boundary potential.
#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub density: Vec<f64>,
    pub boundary_phi: Vec<f64>,
    pub meshes: Arc<Vec<SurfaceMesh>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub phi: f64,
    pub gradient: Vec3,
}

impl PotentialSolution {
    /// Direct panel summation with one node per panel. Accurate at distances
    /// above about one panel diameter from the boundary.
    pub fn evaluate(&self, points: &[Vec3]) -> Vec<FieldValue> {
        let panels: Vec<_> = self.meshes.iter().flat_map(|m| m.panels.iter()).collect();
        points
            .iter()
            .map(|x| {
                let mut phi = 0.0;
                let mut gradient = Vec3::zeros();
                for (p, q) in panels.iter().zip(&self.density) {
                    let d = x - p.point;
                    let r = d.norm();
                    let s = q * p.weight / (4.0 * PI * r);
                    phi -= s;
                    gradient += d * (s / (r * r));
                }
                FieldValue { phi, gradient }
            })
            .collect()
    }

    /// `sum |q| w / (4 pi)`: bound on `|phi| |x|` far from the boundary.
    pub fn far_field_constant(&self) -> f64 {
        let w = self
            .meshes
            .iter()
            .flat_map(|m| m.panels.iter().map(|p| p.weight));
        w.zip(&self.density).map(|(w, q)| w * q.abs()).sum::<f64>() / (4.0 * PI)
    }
}

/// Factored collocation system for a fixed set of meshes, reusable across
/// right-hand sides.
pub struct BoundarySolver {
    meshes: Arc<Vec<SurfaceMesh>>,
    weights: Vec<f64>,
    bounded: bool,
    /// Transposed single-layer matrix: column i holds the row of target i.
    single_layer_t: Mat<f64>,
    lu: PartialPivLu<f64>,
    condition: f64,
}

impl std::fmt::Debug for BoundarySolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundarySolver")
            .field("panels", &self.weights.len())
            .field("bounded", &self.bounded)
            .field("condition", &self.condition)
            .finish()
    }
}

impl BoundarySolver {
    /// Assembles and factors the system. In bounded mode the liquid region is
    /// interior, the trace operator has a one-dimensional kernel, and the
    /// system is bordered with a uniform multiplier column and a zero-charge
    /// row.
    pub fn new(meshes: Vec<SurfaceMesh>, bounded: bool) -> Result<Self> {
        let n: usize = meshes.iter().map(|m| m.len()).sum();
        if n == 0 {
            return Err(BubbleError::Domain("no boundary panels".into()));
        }
        let mut owner = Vec::with_capacity(n);
        for (k, m) in meshes.iter().enumerate() {
            owner.extend((0..m.len()).map(|i| (k, i)));
        }
        let offsets: Vec<usize> = meshes
            .iter()
            .scan(0, |acc, m| {
                let o = *acc;
                *acc += m.len();
                Some(o)
            })
            .collect();
        let panels: Vec<_> = meshes.iter().flat_map(|m| m.panels.iter()).collect();
        let weights: Vec<f64> = panels.iter().map(|p| p.weight).collect();

        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (k, li) = owner[i];
                let (x, nx) = (panels[i].point, panels[i].normal);
                let mut kr = Vec::with_capacity(n);
                let mut sr = Vec::with_capacity(n);
                // other surfaces can come within a panel size of `x`, so
                // they always get the refined rule
                for (m, mesh) in meshes.iter().enumerate() {
                    for p in &mesh.panels {
                        let (kv, sv) = if m == k {
                            (
                                green_normal(&x, &nx, &p.point) * p.weight,
                                green(&x, &p.point) * p.weight,
                            )
                        } else {
                            integrate(&x, &nx, &p.near)
                        };
                        kr.push(kv);
                        sr.push(sv);
                    }
                }
                let mesh = &meshes[k];
                for &lj in mesh.near_field[li].iter() {
                    let j = offsets[k] + lj;
                    (kr[j], sr[j]) = integrate(&x, &nx, &panels[j].near);
                }
                let (ks, ss) = integrate(&x, &nx, &panels[i].singular);
                kr[i] = 0.5 + ks;
                sr[i] = ss;
                (kr, sr)
            })
            .collect();

        let size = if bounded { n + 1 } else { n };
        // The transpose is assembled (row i of the collocation matrix is the
        // contiguous column i) and solves go through `solve_transpose`.
        let wscale = n as f64 / weights.iter().sum::<f64>();
        let mut transposed = Mat::<f64>::zeros(size, size);
        let mut single_layer_t = Mat::<f64>::zeros(n, n);
        for (i, (kr, sr)) in rows.into_iter().enumerate() {
            transposed.col_as_slice_mut(i)[..n].copy_from_slice(&kr);
            single_layer_t.col_as_slice_mut(i).copy_from_slice(&sr);
        }
        if bounded {
            // multiplier column and zero-charge row, balanced against O(1) entries
            for i in 0..n {
                transposed[(n, i)] = 1.0;
            }
            let last = transposed.col_as_slice_mut(n);
            for (v, w) in last.iter_mut().zip(&weights) {
                *v = w * wscale;
            }
        }
        // ||M||_1 is the largest column sum of M, i.e. of the transpose's rows
        let mut col_sums = vec![0.0; size];
        for j in 0..size {
            for (i, v) in transposed.col_as_slice(j).iter().enumerate() {
                col_sums[i] += v.abs();
            }
        }
        let norm = col_sums.iter().copied().fold(0.0, f64::max);

        let lu = transposed.partial_piv_lu();
        let condition = norm * inverse_one_norm_estimate(&lu, size);
        log::debug!("collocation system: {n} panels, condition estimate {condition:.3e}");
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(BubbleError::IllPosed {
                message: format!("collocation matrix of {n} panels is numerically singular"),
                condition,
            });
        }
        Ok(Self {
            meshes: Arc::new(meshes),
            weights,
            bounded,
            single_layer_t,
            lu,
            condition,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn meshes(&self) -> &Arc<Vec<SurfaceMesh>> {
        &self.meshes
    }

    /// Boundary potential of an arbitrary density (panels x columns).
    pub fn boundary_potential(&self, density: &Mat<f64>) -> Mat<f64> {
        self.single_layer_t.transpose() * density
    }

    /// Net-flux test required for a solution inside a cavity.
    pub fn check_compatibility(&self, data: &[f64]) -> Result<()> {
        if !self.bounded {
            return Ok(());
        }
        let net: f64 = data.iter().zip(&self.weights).map(|(g, w)| g * w).sum();
        let total: f64 = data
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| g.abs() * w)
            .sum();
        if net.abs() > COMPATIBILITY_TOL * total {
            return Err(BubbleError::Constraint(format!(
                "net boundary flux {net:.6e} does not vanish (total |flux| {total:.6e}); \
                 the enclosed liquid cannot change volume"
            )));
        }
        Ok(())
    }

    /// Solves for every column of `data` (panels x rhs). Returns densities and
    /// boundary potentials with the same layout.
    pub fn solve_columns(&self, data: &Mat<f64>) -> Result<(Mat<f64>, Mat<f64>)> {
        let n = self.len();
        assert_eq!(data.nrows(), n, "boundary data length");
        for c in 0..data.ncols() {
            let col: Vec<f64> = (0..n).map(|i| data[(i, c)]).collect();
            self.check_compatibility(&col)?;
        }
        let size = if self.bounded { n + 1 } else { n };
        let rhs = Mat::from_fn(
            size,
            data.ncols(),
            |i, j| if i < n { data[(i, j)] } else { 0.0 },
        );
        let sol: Mat<f64> = self.lu.solve_transpose(&rhs);
        let density = Mat::from_fn(n, data.ncols(), |i, j| sol[(i, j)]);
        let phi = self.boundary_potential(&density);
        Ok((density, phi))
    }

    pub fn solve(&self, data: &[f64]) -> Result<PotentialSolution> {
        let rhs = Mat::from_fn(data.len(), 1, |i, _| data[i]);
        let (density, phi) = self.solve_columns(&rhs)?;
        Ok(PotentialSolution {
            density: (0..self.len()).map(|i| density[(i, 0)]).collect(),
            boundary_phi: (0..self.len()).map(|i| phi[(i, 0)]).collect(),
            meshes: self.meshes.clone(),
        })
    }
}

pub fn solve_neumann(problem: NeumannProblem) -> Result<PotentialSolution> {
    let solver = BoundarySolver::new(problem.meshes, problem.bounded)?;
    solver.solve(&problem.boundary_data)
}

/// Hager's estimate of `||M^{-1}||_1` from a few solves with `M` and `M^T`,
/// given the factorization of `M^T`.
fn inverse_one_norm_estimate(lu: &PartialPivLu<f64>, n: usize) -> f64 {
    let mut x = Mat::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x);
        let norm: f64 = (0..n).map(|i| y[(i, 0)].abs()).sum();
        if !norm.is_finite() {
            return f64::INFINITY;
        }
        if norm <= estimate {
            break;
        }
        estimate = norm;
        let xi: Mat<f64> = Mat::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z: Mat<f64> = lu.solve(&xi);
        let (jmax, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].abs()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::from_fn(n, 1, |i, _| if i == jmax { 1.0 } else { 0.0 });
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::SphereParams;

    fn unit_sphere(level: usize) -> SurfaceMesh {
        SurfaceMesh::for_shape(&SphereParams::new(Vec3::zeros(), 1.0).unwrap(), level, 0)
    }

    fn rel_l2(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .zip(w)
            .map(|((a, b), w)| (a - b).powi(2) * w)
            .sum();
        let den: f64 = b.iter().zip(w).map(|(b, w)| b * b * w).sum();
        (num / den).sqrt()
    }

    #[test]
    fn monopole_on_unit_sphere() {
        let mesh = unit_sphere(2);
        let n = mesh.len();
        let sol = solve_neumann(NeumannProblem {
            meshes: vec![mesh],
            boundary_data: vec![1.0; n],
            bounded: false,
        })
        .unwrap();
        let w: Vec<f64> = sol.meshes[0].panels.iter().map(|p| p.weight).collect();
        assert!(rel_l2(&sol.boundary_phi, &vec![-1.0; n], &w) < 5e-3);
        assert!(rel_l2(&sol.density, &vec![1.0; n], &w) < 5e-3);
        let f = sol.evaluate(&[Vec3::new(2.0, 0.0, 0.0)])[0];
        assert!((f.phi + 0.5).abs() < 5e-3);
        assert!((f.gradient - Vec3::new(0.25, 0.0, 0.0)).norm() < 5e-3);
    }

    #[test]
    fn dipole_on_unit_sphere() {
        let mesh = unit_sphere(2);
        let g: Vec<f64> = mesh.panels.iter().map(|p| p.normal.x).collect();
        let exact: Vec<f64> = g.iter().map(|g| -0.5 * g).collect();
        let w: Vec<f64> = mesh.panels.iter().map(|p| p.weight).collect();
        let sol = solve_neumann(NeumannProblem {
            meshes: vec![mesh],
            boundary_data: g,
            bounded: false,
        })
        .unwrap();
        assert!(rel_l2(&sol.boundary_phi, &exact, &w) < 1e-2);
        let f = sol.evaluate(&[Vec3::new(0.0, 2.0, 0.0)])[0];
        assert!(f.phi.abs() < 1e-10);
    }

    #[test]
    fn far_field_bound() {
        let mesh = unit_sphere(1);
        let g: Vec<f64> = mesh.panels.iter().map(|p| 0.3 + p.normal.z).collect();
        let sol = solve_neumann(NeumannProblem {
            meshes: vec![mesh],
            boundary_data: g,
            bounded: false,
        })
        .unwrap();
        let x = Vec3::new(600.0, -700.0, 400.0).normalize() * 1e3;
        let phi = sol.evaluate(&[x])[0].phi;
        assert!(phi.abs() <= sol.far_field_constant() / 1e3);
    }

    #[test]
    fn cavity_rejects_net_flux() {
        let bubble = unit_sphere(1);
        let wall = SurfaceMesh::cavity_sphere(Vec3::zeros(), 3.0, 1);
        let mut data = vec![1.0; bubble.len()];
        data.extend(vec![0.0; wall.len()]);
        let err = solve_neumann(NeumannProblem {
            meshes: vec![bubble, wall],
            boundary_data: data,
            bounded: true,
        })
        .unwrap_err();
        assert!(matches!(err, BubbleError::Constraint(_)));
    }

    #[test]
    fn concentric_cavity_translation() {
        // sphere of radius a translating inside a fixed sphere of radius b:
        // phi = (A r + B / r^2) cos(theta), A = -a^3/(b^3-a^3), B = A b^3 / 2
        // (Neumann 1 at r=a, 0 at r=b)
        let (a, b) = (1.0, 2.0);
        let bubble = SurfaceMesh::for_shape(&SphereParams::new(Vec3::zeros(), a).unwrap(), 2, 0);
        let wall = SurfaceMesh::cavity_sphere(Vec3::zeros(), b, 2);
        let mut data: Vec<f64> = bubble.panels.iter().map(|p| p.normal.x).collect();
        data.extend(vec![0.0; wall.len()]);
        let nb = bubble.len();
        let solver = BoundarySolver::new(vec![bubble, wall], true).unwrap();
        let sol = solver.solve(&data).unwrap();
        let big_a = -a.powi(3) / (b.powi(3) - a.powi(3));
        let big_b = big_a * b.powi(3) / 2.0;
        let panels: Vec<_> = sol.meshes.iter().flat_map(|m| m.panels.iter()).collect();
        let exact: Vec<f64> = panels
            .iter()
            .map(|p| {
                let r = p.point.norm();
                (big_a * r + big_b / (r * r)) * p.point.x / r
            })
            .collect();
        // potential defined up to a constant; compare after removing means
        let w = solver.weights();
        let mean =
            |v: &[f64]| v.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / w.iter().sum::<f64>();
        let (m1, m2) = (mean(&sol.boundary_phi), mean(&exact));
        let shifted: Vec<f64> = sol.boundary_phi.iter().map(|v| v - m1 + m2).collect();
        assert!(rel_l2(&shifted, &exact, w) < 2e-2);
        // added mass of the inner sphere, rho=1: (2 pi/3) a^3 (b^3 + 2a^3)/(b^3 - a^3)
        let added: f64 = -(0..nb)
            .map(|i| sol.boundary_phi[i] * data[i] * w[i])
            .sum::<f64>();
        let exact_added =
            2.0 * PI / 3.0 * a.powi(3) * (b.powi(3) + 2.0 * a.powi(3)) / (b.powi(3) - a.powi(3));
        assert!(
            (added / exact_added - 1.0).abs() < 1e-2,
            "{added} {exact_added}"
        );
    }
}
