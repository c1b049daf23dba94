//! ASCII OFF reader for triangulated cavity walls.

use std::path::Path;

use super::Vec3;
use crate::error::{BubbleError, Result};

/// Closed triangulated surface bounding the liquid. Triangles are stored with
/// outward (away from the enclosed region) orientation.
#[derive(Debug, Clone)]
pub struct CavityMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl CavityMesh {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    /// Parses `OFF`, counts line, vertex lines and triangle lines. Comments
    /// start with `#`. Faces with more than three vertices are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let err = |line: usize, msg: &str| BubbleError::Parse(format!("OFF line {line}: {msg}"));

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        let counts_line = if header == "OFF" {
            lines.next().ok_or_else(|| err(ln, "missing counts"))?
        } else if let Some(rest) = header.strip_prefix("OFF") {
            (ln, rest.trim())
        } else {
            return Err(err(ln, "expected OFF header"));
        };
        let counts: Vec<usize> = counts_line
            .1
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| err(counts_line.0, "bad count")))
            .collect::<Result<_>>()?;
        if counts.len() < 2 {
            return Err(err(counts_line.0, "expected vertex and face counts"));
        }
        let (nv, nf) = (counts[0], counts[1]);

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(counts_line.0, "too few vertex lines"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .take(3)
                .map(|s| s.parse().map_err(|_| err(ln, "bad coordinate")))
                .collect::<Result<_>>()?;
            if xs.len() != 3 || xs.iter().any(|x| !x.is_finite()) {
                return Err(err(ln, "vertex needs three finite coordinates"));
            }
            vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
        }

        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(counts_line.0, "too few face lines"))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| err(ln, "bad index")))
                .collect::<Result<_>>()?;
            if idx.first() != Some(&3) || idx.len() < 4 {
                return Err(err(ln, "only triangular faces are supported"));
            }
            let tri = [idx[1], idx[2], idx[3]];
            if tri.iter().any(|&i| i >= nv) {
                return Err(err(ln, "vertex index out of range"));
            }
            triangles.push(tri);
        }
        Self::new(vertices, triangles)
    }

    /// Builds a cavity mesh, flipping the orientation if needed so that
    /// triangles face away from the enclosed region.
    pub fn new(vertices: Vec<Vec3>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.len() < 4 {
            return Err(BubbleError::Parse(
                "cavity mesh needs at least four triangles".into(),
            ));
        }
        let vol = signed_volume(&vertices, &triangles);
        if vol.abs() < 1e-14 {
            return Err(BubbleError::Parse("cavity mesh encloses no volume".into()));
        }
        if vol < 0.0 {
            for t in &mut triangles {
                t.swap(1, 2);
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn volume(&self) -> f64 {
        signed_volume(&self.vertices, &self.triangles)
    }

    fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Generalized winding number test.
    pub fn contains(&self, x: &Vec3) -> bool {
        let mut omega = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t).map(|v| v - x);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            omega += 2.0 * num.atan2(den);
        }
        omega > 2.0 * std::f64::consts::PI
    }

    /// Unsigned distance from `x` to the wall.
    pub fn distance(&self, x: &Vec3) -> f64 {
        (0..self.triangles.len())
            .map(|t| point_triangle_distance(x, &self.corners(t)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_volume(vertices: &[Vec3], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|&[a, b, c]| vertices[a].dot(&vertices[b].cross(&vertices[c])) / 6.0)
        .sum()
}

/// Closest-point distance (Ericson's region classification).
pub(crate) fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + v * ab)).norm();
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + w * ac)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + w * (c - b))).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    (p - (a + ab * v + ac * w)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "OFF
# unit cube, inward-facing on purpose
8 12 0
0 0 0
1 0 0
0 1 0
1 1 0
0 0 1
1 0 1
0 1 1
1 1 1
3 0 1 2
3 1 3 2
3 4 6 5
3 5 6 7
3 0 4 1
3 1 4 5
3 2 3 6
3 3 7 6
3 0 2 4
3 2 6 4
3 1 5 3
3 3 5 7
";

    #[test]
    fn parses_and_orients_cube() {
        let m = CavityMesh::parse(CUBE).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        assert!((m.volume() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inside_outside_and_distance() {
        let m = CavityMesh::parse(CUBE).unwrap();
        let c = Vec3::new(0.5, 0.5, 0.5);
        assert!(m.contains(&c));
        assert!(!m.contains(&Vec3::new(1.5, 0.5, 0.5)));
        assert!((m.distance(&c) - 0.5).abs() < 1e-14);
        assert!((m.distance(&Vec3::new(2.0, 2.0, 0.5)) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CavityMesh::parse("").is_err());
        assert!(CavityMesh::parse("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n").is_err());
        let bad_index = CUBE.replace("3 3 5 7", "3 3 5 9");
        let e = CavityMesh::parse(&bad_index).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn point_triangle_regions() {
        let t = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!((point_triangle_distance(&Vec3::new(0.2, 0.2, 1.0), &t) - 1.0).abs() < 1e-15);
        assert!(
            (point_triangle_distance(&Vec3::new(-1.0, -1.0, 0.0), &t) - 2f64.sqrt()).abs() < 1e-15
        );
        assert!((point_triangle_distance(&Vec3::new(0.5, -2.0, 0.0), &t) - 2.0).abs() < 1e-15);
        let d = point_triangle_distance(&Vec3::new(1.0, 1.0, 0.0), &t);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
