//! Disjointness and containment checks for configurations.

use std::fmt;

use super::icosphere::reference_icosphere;
use super::{Configuration, Domain, ShapeFamily, ShapeParams, Vec3};

/// Sampling level of the coarse search over non-spherical surfaces.
const SEARCH_LEVEL: usize = 3;
const SEARCH_SEEDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Overlap,
    OutsideCavity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub first: usize,
    /// Other bubble of an overlapping pair; `None` for wall violations.
    pub second: Option<usize>,
    pub gap: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.second) {
            (ViolationKind::Overlap, Some(j)) => {
                write!(
                    f,
                    "bubbles {} and {} overlap (gap {:.6e})",
                    self.first, j, self.gap
                )
            }
            _ => write!(
                f,
                "bubble {} is not inside the cavity (wall gap {:.6e})",
                self.first, self.gap
            ),
        }
    }
}

/// Gaps between every pair of bubbles and between each bubble and the wall.
#[derive(Debug, Clone, Default)]
pub struct AdmissibilityReport {
    pub pair_gaps: Vec<(usize, usize, f64)>,
    pub wall_gaps: Vec<(usize, f64)>,
    pub violations: Vec<Violation>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn min_pair_gap(&self) -> Option<(usize, usize, f64)> {
        self.pair_gaps
            .iter()
            .copied()
            .min_by(|a, b| a.2.total_cmp(&b.2))
    }

    pub fn min_wall_gap(&self) -> Option<(usize, f64)> {
        self.wall_gaps
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Smallest gap divided by the smaller equivalent radius of the bodies
    /// involved (the bubble's own radius for wall gaps).
    pub fn min_relative_gap(&self, config: &Configuration) -> f64 {
        let radius: Vec<f64> = config
            .bubbles
            .iter()
            .map(|b| b.equivalent_radius())
            .collect();
        let pairs = self
            .pair_gaps
            .iter()
            .map(|&(i, j, g)| g / radius[i].min(radius[j]));
        let walls = self.wall_gaps.iter().map(|&(i, g)| g / radius[i]);
        pairs.chain(walls).fold(f64::INFINITY, f64::min)
    }
}

/// Checks pairwise disjointness of the bubbles and containment in the cavity.
/// Sphere pairs are measured exactly; other pairs by a sampled search over the
/// surfaces refined locally around the closest samples.
pub fn check_admissible(config: &Configuration) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    let n = config.bubbles.len();
    for i in 0..n {
        for j in i + 1..n {
            let gap = pair_gap(&config.bubbles[i], &config.bubbles[j]);
            report.pair_gaps.push((i, j, gap));
            if !(gap > 0.0) {
                report.violations.push(Violation {
                    kind: ViolationKind::Overlap,
                    first: i,
                    second: Some(j),
                    gap,
                });
            }
        }
    }
    if config.domain.is_bounded() {
        for (i, b) in config.bubbles.iter().enumerate() {
            let gap = wall_gap(b, &config.domain);
            report.wall_gaps.push((i, gap));
            if !(gap > 0.0) {
                report.violations.push(Violation {
                    kind: ViolationKind::OutsideCavity,
                    first: i,
                    second: None,
                    gap,
                });
            }
        }
    }
    report
}

/// Signed distance from `x` to the surface of `shape`, negative inside.
/// Exact for spheres; exact outside ellipsoids, a negative lower estimate inside.
fn signed_distance(shape: &ShapeParams, x: &Vec3) -> f64 {
    match shape {
        ShapeParams::Sphere(s) => (x - s.center).norm() - s.radius,
        ShapeParams::Ellipsoid(e) => {
            let eig = nalgebra::SymmetricEigen::new(*e.shape_matrix());
            let y = eig.eigenvectors.transpose() * (x - e.center());
            let a = eig.eigenvalues;
            let level = (e.inverse() * (x - e.center())).norm();
            if level <= 1.0 {
                return -a.min() * (1.0 - level);
            }
            // closest point a_i^2 y_i / (t + a_i^2) with t > 0 solving the
            // implicit equation; F is decreasing in t.
            let f = |t: f64| -> f64 {
                (0..3)
                    .map(|i| (a[i] * y[i] / (t + a[i] * a[i])).powi(2))
                    .sum::<f64>()
                    - 1.0
            };
            let (mut lo, mut hi) = (0.0, y.norm() * a.max());
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            let t = 0.5 * (lo + hi);
            let closest = Vec3::from_fn(|i, _| a[i] * a[i] * y[i] / (t + a[i] * a[i]));
            (y - closest).norm()
        }
    }
}

/// Minimum of `f` over the surface of `shape`: coarse search on the mapped
/// reference vertices, then pattern search on the unit sphere from the best
/// few samples.
fn surface_min(shape: &ShapeParams, f: impl Fn(&Vec3) -> f64) -> f64 {
    let reference = reference_icosphere(SEARCH_LEVEL);
    let g = |y: &Vec3| f(&shape.map_reference(y).point);
    let mut samples: Vec<(f64, Vec3)> = reference.vertices.iter().map(|y| (g(y), *y)).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let initial_step = (reference.vertices[reference.triangles[0][0]]
        - reference.vertices[reference.triangles[0][1]])
        .norm();

    let mut best = samples[0].0;
    for &(v0, y0) in samples.iter().take(SEARCH_SEEDS) {
        let (mut v, mut y) = (v0, y0);
        let mut step = initial_step;
        while step > 1e-9 {
            let t1 = if y.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            }
            .cross(&y)
            .normalize();
            let t2 = y.cross(&t1);
            let mut improved = false;
            for d in [t1, -t1, t2, -t2, t1 + t2, t1 - t2, -t1 + t2, -t1 - t2] {
                let cand = (y + step * d).normalize();
                let vc = g(&cand);
                if vc < v {
                    v = vc;
                    y = cand;
                    improved = true;
                    break;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(v);
    }
    best
}

fn pair_gap(a: &ShapeParams, b: &ShapeParams) -> f64 {
    if let (ShapeParams::Sphere(s), ShapeParams::Sphere(t)) = (a, b) {
        return (s.center - t.center).norm() - s.radius - t.radius;
    }
    // well separated: the bounding-ball gap is a valid lower bound
    let bound = (a.center() - b.center()).norm() - a.bounding_radius() - b.bounding_radius();
    if bound > a.bounding_radius().max(b.bounding_radius()) {
        return bound;
    }
    let ab = surface_min(a, |x| signed_distance(b, x));
    let ba = surface_min(b, |x| signed_distance(a, x));
    ab.min(ba)
}

fn wall_gap(b: &ShapeParams, domain: &Domain) -> f64 {
    match domain {
        Domain::Unbounded => f64::INFINITY,
        Domain::CavitySphere { center, radius } => match b {
            ShapeParams::Sphere(s) => radius - (s.center - center).norm() - s.radius,
            _ => surface_min(b, |x| radius - (x - center).norm()),
        },
        Domain::CavityMesh(mesh) => {
            let signed = |x: &Vec3| {
                let d = mesh.distance(x);
                if mesh.contains(x) {
                    d
                } else {
                    -d
                }
            };
            match b {
                ShapeParams::Sphere(s) => signed(&s.center) - s.radius,
                _ => surface_min(b, signed),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::Mat3;

    fn sphere(x: f64, r: f64) -> ShapeParams {
        ShapeParams::sphere(Vec3::new(x, 0.0, 0.0), r).unwrap()
    }

    #[test]
    fn separated_spheres() {
        let r = check_admissible(&Configuration::unbounded(vec![
            sphere(0.0, 1.0),
            sphere(3.0, 1.0),
        ]));
        assert!(r.is_admissible());
        assert_eq!(r.min_pair_gap(), Some((0, 1, 1.0)));
    }

    #[test]
    fn overlapping_spheres() {
        let r = check_admissible(&Configuration::unbounded(vec![
            sphere(0.0, 1.0),
            sphere(3.0, 2.5),
        ]));
        assert!(!r.is_admissible());
        let v = &r.violations[0];
        assert_eq!(
            (v.kind, v.first, v.second),
            (ViolationKind::Overlap, 0, Some(1))
        );
        assert!((v.gap + 0.5).abs() < 1e-15);
    }

    #[test]
    fn sphere_in_spherical_cavity() {
        let cfg = Configuration::new(
            vec![sphere(0.0, 1.0)],
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 1.5,
            },
        );
        let r = check_admissible(&cfg);
        assert!(r.is_admissible());
        assert_eq!(r.min_wall_gap(), Some((0, 0.5)));
    }

    #[test]
    fn ellipsoid_gap_matches_axis_distance() {
        let e = ShapeParams::ellipsoid(
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0)),
        )
        .unwrap();
        let r = check_admissible(&Configuration::unbounded(vec![e.clone(), sphere(3.5, 1.0)]));
        let gap = r.min_pair_gap().unwrap().2;
        assert!((gap - 0.5).abs() < 1e-6, "{gap}");

        let r = check_admissible(&Configuration::unbounded(vec![e, sphere(2.9, 1.0)]));
        assert!(!r.is_admissible());
    }

    #[test]
    fn ellipsoid_sphere_equivalence() {
        let e = ShapeParams::ellipsoid(Vec3::new(0.3, -0.2, 0.1), Mat3::identity() * 0.8).unwrap();
        let s = ShapeParams::sphere(Vec3::new(0.3, -0.2, 0.1), 0.8).unwrap();
        let other = ShapeParams::sphere(Vec3::new(1.0, 1.5, -0.7), 0.5).unwrap();
        let exact = pair_gap(&s, &other);
        assert!((pair_gap(&e, &other) - exact).abs() < 1e-7);
    }

    #[test]
    fn nested_bodies_overlap() {
        let big = ShapeParams::ellipsoid(
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(3.0, 2.0, 2.0)),
        )
        .unwrap();
        let r = check_admissible(&Configuration::unbounded(vec![big, sphere(0.1, 0.3)]));
        assert!(!r.is_admissible());
    }

    #[test]
    fn ellipsoid_in_spherical_cavity() {
        let e = ShapeParams::ellipsoid(
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(1.2, 0.5, 0.5)),
        )
        .unwrap();
        let cfg = Configuration::new(
            vec![e],
            Domain::CavitySphere {
                center: Vec3::zeros(),
                radius: 2.0,
            },
        );
        let gap = check_admissible(&cfg).min_wall_gap().unwrap().1;
        assert!((gap - 0.8).abs() < 1e-7, "{gap}");
    }

    #[test]
    fn outside_ellipsoid_distance_exact_on_axes() {
        let e = ShapeParams::ellipsoid(
            Vec3::zeros(),
            Mat3::from_diagonal(&Vec3::new(3.0, 2.0, 1.0)),
        )
        .unwrap();
        assert!((signed_distance(&e, &Vec3::new(0.0, 0.0, 4.0)) - 3.0).abs() < 1e-12);
        assert!((signed_distance(&e, &Vec3::new(5.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!(signed_distance(&e, &Vec3::new(0.5, 0.5, 0.2)) < 0.0);
    }
}
