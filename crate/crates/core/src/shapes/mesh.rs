use std::sync::{Arc, OnceLock};

use super::icosphere::{reference_icosphere, second_ring, vertex_neighbors, ReferenceMesh};
use super::{MappedPoint, ShapeFamily, Vec3};

/// Weighted quadrature node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub point: Vec3,
    pub weight: f64,
}

/// One boundary element: collocation point on the exact surface, the normal
/// pointing into the liquid there, the panel area, and quadrature rules used
/// by the boundary-element assembly.
#[derive(Debug, Clone)]
pub struct Panel {
    pub point: Vec3,
    pub normal: Vec3,
    pub weight: f64,
    /// Unit-sphere preimage of `point` for mapped surfaces, `point` itself
    /// for flat ones.
    pub reference: Vec3,
    pub near: Vec<QuadPoint>,
    pub singular: Vec<QuadPoint>,
}

/// Which boundary a mesh discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceRole {
    Bubble(usize),
    Wall,
}

/// Triangulated surface. The flat triangulation (vertices, triangles,
/// centroids, areas, normals) is the polyhedron through the mapped reference
/// vertices; `panels` carry the curved-surface quadrature actually used by
/// the solver.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub level: usize,
    pub role: SurfaceRole,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub centroids: Vec<Vec3>,
    pub areas: Vec<f64>,
    pub normals: Vec<Vec3>,
    pub panels: Vec<Panel>,
    /// Vertex-sharing triangles of each triangle.
    pub neighbors: Arc<Vec<Vec<usize>>>,
    /// Panels close enough to need the refined rule; fixed by topology so
    /// that assembled matrices vary smoothly with the shape.
    pub near_field: Arc<Vec<Vec<usize>>>,
}

/// Barycentric rules shared by every triangle: `(barycentric, area fraction)`.
pub(crate) struct BarycentricRules {
    pub area: Vec<([f64; 3], f64)>,
    pub near: Vec<([f64; 3], f64)>,
    pub singular: Vec<([f64; 3], f64)>,
}

const AREA_DEPTH: usize = 3;
const NEAR_DEPTH: usize = 2;
const DUFFY_ORDER: usize = 8;

fn subdivide(depth: usize) -> Vec<([f64; 3], f64)> {
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut tris = vec![corners];
    let mid = |a: [f64; 3], b: [f64; 3]| {
        [
            (a[0] + b[0]) / 2.0,
            (a[1] + b[1]) / 2.0,
            (a[2] + b[2]) / 2.0,
        ]
    };
    for _ in 0..depth {
        tris = tris
            .into_iter()
            .flat_map(|[a, b, c]| {
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            })
            .collect();
    }
    let frac = 1.0 / tris.len() as f64;
    tris.into_iter()
        .map(|[a, b, c]| {
            (
                [
                    (a[0] + b[0] + c[0]) / 3.0,
                    (a[1] + b[1] + c[1]) / 3.0,
                    (a[2] + b[2] + c[2]) / 3.0,
                ],
                frac,
            )
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out
}

/// Duffy-transformed rule on the three sub-triangles joining the centroid to
/// each edge; cancels the 1/R singularity at the centroid.
fn duffy(order: usize) -> Vec<([f64; 3], f64)> {
    let gl = gauss_legendre(order);
    let c = [1.0 / 3.0; 3];
    let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut out = Vec::with_capacity(3 * order * order);
    for a in 0..3 {
        let (va, vb) = (e[a], e[(a + 1) % 3]);
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                let b = [0, 1, 2].map(|k| c[k] + s * (va[k] - c[k]) + s * t * (vb[k] - va[k]));
                out.push((b, 2.0 / 3.0 * s * ws * wt));
            }
        }
    }
    out
}

pub(crate) fn barycentric_rules() -> &'static BarycentricRules {
    static RULES: OnceLock<BarycentricRules> = OnceLock::new();
    RULES.get_or_init(|| BarycentricRules {
        area: subdivide(AREA_DEPTH),
        near: subdivide(NEAR_DEPTH),
        singular: duffy(DUFFY_ORDER),
    })
}

impl SurfaceMesh {
    /// Mesh of a bubble: the reference icosphere of `level` mapped by the
    /// shape, normals pointing out of the bubble.
    pub fn for_shape<S: ShapeFamily>(shape: &S, level: usize, owner: usize) -> Self {
        Self::mapped(
            |y| shape.map_reference(y),
            level,
            false,
            SurfaceRole::Bubble(owner),
        )
    }

    /// Spherical cavity wall, normals pointing inward (into the liquid).
    pub fn cavity_sphere(center: Vec3, radius: f64, level: usize) -> Self {
        Self::mapped(
            |y| MappedPoint {
                point: center + radius * y,
                normal: *y,
                area_factor: radius * radius,
            },
            level,
            true,
            SurfaceRole::Wall,
        )
    }

    fn mapped(
        map: impl Fn(&Vec3) -> MappedPoint,
        level: usize,
        flip: bool,
        role: SurfaceRole,
    ) -> Self {
        let reference: Arc<ReferenceMesh> = reference_icosphere(level);
        let sign = if flip { -1.0 } else { 1.0 };
        let vertices: Vec<Vec3> = reference.vertices.iter().map(|y| map(y).point).collect();
        let triangles = reference.triangles.clone();
        let (centroids, areas, normals) = flat_geometry(&vertices, &triangles, flip);

        let curved = |rule: &[QuadPoint]| -> Vec<QuadPoint> {
            rule.iter()
                .map(|q| {
                    let m = map(&q.point);
                    QuadPoint {
                        point: m.point,
                        weight: m.area_factor * q.weight,
                    }
                })
                .collect()
        };
        let panels = reference
            .rules
            .iter()
            .map(|rule| {
                let m = map(&rule.center);
                let (num, den) = rule.area.iter().fold((0.0, 0.0), |(n, d), q| {
                    (n + map(&q.point).area_factor * q.weight, d + q.weight)
                });
                Panel {
                    point: m.point,
                    normal: sign * m.normal,
                    weight: rule.solid_angle * num / den,
                    reference: rule.center,
                    near: curved(&rule.near),
                    singular: curved(&rule.singular),
                }
            })
            .collect();

        Self {
            level,
            role,
            vertices,
            triangles,
            centroids,
            areas,
            normals,
            panels,
            neighbors: reference.neighbors.clone(),
            near_field: reference.near_field.clone(),
        }
    }

    /// Flat triangulated wall. Triangles must be consistently oriented; the
    /// orientation is detected from the signed volume and normals are turned
    /// to point into the enclosed region.
    pub fn flat_wall(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Self {
        let signed_volume: f64 = triangles
            .iter()
            .map(|&[a, b, c]| vertices[a].dot(&vertices[b].cross(&vertices[c])) / 6.0)
            .sum();
        let flip = signed_volume > 0.0;
        let (centroids, areas, normals) = flat_geometry(&vertices, &triangles, flip);
        let rules = barycentric_rules();
        let panels = triangles
            .iter()
            .enumerate()
            .map(|(t, &[a, b, c])| {
                let p = [vertices[a], vertices[b], vertices[c]];
                let flat = |rule: &[([f64; 3], f64)]| -> Vec<QuadPoint> {
                    rule.iter()
                        .map(|&(bc, frac)| QuadPoint {
                            point: p[0] * bc[0] + p[1] * bc[1] + p[2] * bc[2],
                            weight: areas[t] * frac,
                        })
                        .collect()
                };
                Panel {
                    point: centroids[t],
                    normal: normals[t],
                    weight: areas[t],
                    reference: centroids[t],
                    near: flat(&rules.near),
                    singular: flat(&rules.singular),
                }
            })
            .collect();
        let neighbors = vertex_neighbors(vertices.len(), &triangles);
        let near_field = Arc::new(second_ring(&neighbors));
        let neighbors = Arc::new(neighbors);
        Self {
            level: 0,
            role: SurfaceRole::Wall,
            vertices,
            triangles,
            centroids,
            areas,
            normals,
            panels,
            neighbors,
            near_field,
        }
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// Area of the flat polyhedron.
    pub fn flat_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Volume enclosed by the flat polyhedron (positive).
    pub fn flat_volume(&self) -> f64 {
        self.centroids
            .iter()
            .zip(&self.normals)
            .zip(&self.areas)
            .map(|((c, n), a)| c.dot(n) * a / 3.0)
            .sum::<f64>()
            .abs()
    }

    /// Area as seen by the panel quadrature.
    pub fn quadrature_area(&self) -> f64 {
        self.panels.iter().map(|p| p.weight).sum()
    }

    /// Largest edge length of the flat triangulation.
    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (self.vertices[i] - self.vertices[j]).norm())
            .fold(0.0, f64::max)
    }
}

fn flat_geometry(
    vertices: &[Vec3],
    triangles: &[[usize; 3]],
    flip: bool,
) -> (Vec<Vec3>, Vec<f64>, Vec<Vec3>) {
    let sign = if flip { -1.0 } else { 1.0 };
    let mut centroids = Vec::with_capacity(triangles.len());
    let mut areas = Vec::with_capacity(triangles.len());
    let mut normals = Vec::with_capacity(triangles.len());
    for &[a, b, c] in triangles {
        let (p, q, r) = (vertices[a], vertices[b], vertices[c]);
        let n = (q - p).cross(&(r - p));
        let len = n.norm();
        centroids.push((p + q + r) / 3.0);
        areas.push(0.5 * len);
        normals.push(sign * n / len);
    }
    (centroids, areas, normals)
}
