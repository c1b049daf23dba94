use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::mesh::{barycentric_rules, QuadPoint};
use super::Vec3;

/// Quadrature data of one reference triangle, expressed on the unit sphere:
/// points are unit vectors, weights are solid angles.
#[derive(Debug, Clone)]
pub struct SphericalPanelRule {
    /// Radial projection of the flat centroid.
    pub center: Vec3,
    /// Exact solid angle of the spherical triangle.
    pub solid_angle: f64,
    /// Regular rule used for the panel area.
    pub area: Vec<QuadPoint>,
    /// Rule used when the panel is a near neighbour of the target.
    pub near: Vec<QuadPoint>,
    /// Duffy rule for a target sitting at `center`.
    pub singular: Vec<QuadPoint>,
}

/// Unit-sphere triangulation obtained by repeated midpoint subdivision of the
/// icosahedron. Triangles are counter-clockwise seen from outside.
#[derive(Debug)]
pub struct ReferenceMesh {
    pub level: usize,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Triangles sharing at least one vertex with each triangle (itself excluded).
    pub neighbors: Arc<Vec<Vec<usize>>>,
    /// Two rings of vertex-sharing triangles: panels integrated with the
    /// refined rule.
    pub near_field: Arc<Vec<Vec<usize>>>,
    pub rules: Vec<SphericalPanelRule>,
}

impl ReferenceMesh {
    fn build(level: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];

        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    vertices.push((vertices[a] + vertices[b]).normalize());
                    vertices.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for &[a, b, c] in &triangles {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            triangles = next;
        }

        for tri in &mut triangles {
            let [a, b, c] = *tri;
            let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
            if n.dot(&vertices[a]) < 0.0 {
                tri.swap(1, 2);
            }
        }

        let neighbors = vertex_neighbors(vertices.len(), &triangles);
        let near_field = Arc::new(second_ring(&neighbors));
        let neighbors = Arc::new(neighbors);
        let bary = barycentric_rules();
        let rules = triangles
            .iter()
            .map(|&[a, b, c]| {
                let p = [vertices[a], vertices[b], vertices[c]];
                let flat_n = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let flat_area = 0.5 * flat_n.norm();
                let plane_dist = flat_n.normalize().dot(&p[0]);
                // radial projection of the flat triangle: dOmega = d / |X|^3 dA_flat
                let project = |rule: &[([f64; 3], f64)]| -> Vec<QuadPoint> {
                    rule.iter()
                        .map(|&(bc, frac)| {
                            let x = p[0] * bc[0] + p[1] * bc[1] + p[2] * bc[2];
                            let r = x.norm();
                            QuadPoint {
                                point: x / r,
                                weight: plane_dist / (r * r * r) * flat_area * frac,
                            }
                        })
                        .collect()
                };
                let triple = p[0].dot(&p[1].cross(&p[2])).abs();
                let denom = 1.0 + p[0].dot(&p[1]) + p[1].dot(&p[2]) + p[2].dot(&p[0]);
                SphericalPanelRule {
                    center: ((p[0] + p[1] + p[2]) / 3.0).normalize(),
                    solid_angle: 2.0 * triple.atan2(denom),
                    area: project(&bary.area),
                    near: project(&bary.near),
                    singular: project(&bary.singular),
                }
            })
            .collect();
        Self {
            level,
            vertices,
            triangles,
            neighbors,
            near_field,
            rules,
        }
    }
}

/// For each triangle, the other triangles sharing a vertex with it.
pub(crate) fn vertex_neighbors(n_vertices: usize, triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }
    triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let mut out: Vec<usize> = tri
                .iter()
                .flat_map(|&v| incident[v].iter().copied())
                .filter(|&s| s != t)
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Neighbours of neighbours (the triangle itself excluded).
pub(crate) fn second_ring(neighbors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    neighbors
        .iter()
        .enumerate()
        .map(|(t, ring)| {
            let mut out: Vec<usize> = ring
                .iter()
                .flat_map(|&s| neighbors[s].iter().copied().chain([s]))
                .filter(|&s| s != t)
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Shared reference icosphere of the given subdivision level.
pub fn reference_icosphere(level: usize) -> Arc<ReferenceMesh> {
    static CACHE: OnceLock<Mutex<Vec<Option<Arc<ReferenceMesh>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut guard = cache.lock().expect("icosphere cache poisoned");
    if guard.len() <= level {
        guard.resize(level + 1, None);
    }
    guard[level]
        .get_or_insert_with(|| Arc::new(ReferenceMesh::build(level)))
        .clone()
}
