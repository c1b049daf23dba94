//! Admissible bubble shape families, their surface meshes, normal-velocity
//! maps and geometric measures.
//!
//! Every shipped family is the image of the unit sphere under a smooth map
//! `y -> x(m, y)` parametrized by a point `m` of a finite-dimensional
//! parameter space. Working in the global coordinates of that space (center
//! plus radius, or center plus the six entries of a symmetric matrix), a
//! tangent vector is just a coordinate vector of the same length.

mod admissible;
mod carlson;
mod icosphere;
mod mesh;
pub mod off;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{BubbleError, Result};

pub use admissible::{check_admissible, AdmissibilityReport, Violation, ViolationKind};
pub use icosphere::{reference_icosphere, ReferenceMesh};
pub use mesh::{Panel, QuadPoint, SurfaceMesh, SurfaceRole};
pub use off::CavityMesh;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Degenerate ellipsoids: smallest eigenvalue below this fraction of the largest.
pub const DEGENERACY_RATIO: f64 = 1e-10;

/// Relative step used for finite-difference measure gradients.
pub const MEASURE_FD_STEP: f64 = 1e-5;

/// A point on a mapped surface together with the local outward normal and the
/// ratio between the surface area element and the unit-sphere solid angle.
#[derive(Debug, Clone, Copy)]
pub struct MappedPoint {
    pub point: Vec3,
    pub normal: Vec3,
    pub area_factor: f64,
}

/// Volume, area and their gradients with respect to the family coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    pub volume: f64,
    pub area: f64,
    pub d_volume_dm: Vec<f64>,
    pub d_area_dm: Vec<f64>,
}

/// The contract a shape family has to satisfy to be meshed, solved and
/// integrated. Adding a family means implementing this trait and adding a
/// variant to [`ShapeParams`].
pub trait ShapeFamily: Clone + fmt::Debug + Send + Sync {
    /// Number of scalar coordinates.
    fn dim(&self) -> usize;

    fn coords(&self) -> Vec<f64>;

    /// Rebuild a shape of the same family from coordinates, validating it.
    fn with_coords(&self, q: &[f64]) -> Result<Self>;

    fn center(&self) -> Vec3;

    /// Image of a unit-sphere point.
    fn map_reference(&self, y: &Vec3) -> MappedPoint;

    /// Velocity of the material surface point with reference coordinate `y`.
    fn point_velocity(&self, y: &Vec3, mdot: &[f64]) -> Vec3;

    /// `<V_m(x), mdot>`: normal speed of the surface at `x` (normal `n`).
    fn normal_velocity(&self, mdot: &[f64], x: &Vec3, n: &Vec3) -> f64;

    /// Strict interior test.
    fn contains(&self, x: &Vec3) -> bool;

    fn measures(&self) -> Measures;

    /// Radius of a ball around `center()` enclosing the shape.
    fn bounding_radius(&self) -> f64;

    /// Radius of a ball around `center()` contained in the shape.
    fn inner_radius(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereParams {
    pub center: Vec3,
    pub radius: f64,
}

impl SphereParams {
    pub fn new(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(BubbleError::DegenerateShape(format!(
                "sphere radius must be positive and finite, got {radius}"
            )));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(BubbleError::DegenerateShape("non-finite center".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3)
    }

    pub fn area(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.radius.powi(2)
    }
}

impl ShapeFamily for SphereParams {
    fn dim(&self) -> usize {
        4
    }

    fn coords(&self) -> Vec<f64> {
        vec![self.center.x, self.center.y, self.center.z, self.radius]
    }

    fn with_coords(&self, q: &[f64]) -> Result<Self> {
        SphereParams::new(Vec3::new(q[0], q[1], q[2]), q[3])
    }

    fn center(&self) -> Vec3 {
        self.center
    }

    fn map_reference(&self, y: &Vec3) -> MappedPoint {
        MappedPoint {
            point: self.center + self.radius * y,
            normal: *y,
            area_factor: self.radius * self.radius,
        }
    }

    fn point_velocity(&self, y: &Vec3, mdot: &[f64]) -> Vec3 {
        Vec3::new(mdot[0], mdot[1], mdot[2]) + mdot[3] * y
    }

    fn normal_velocity(&self, mdot: &[f64], _x: &Vec3, n: &Vec3) -> f64 {
        Vec3::new(mdot[0], mdot[1], mdot[2]).dot(n) + mdot[3]
    }

    fn contains(&self, x: &Vec3) -> bool {
        (x - self.center).norm() < self.radius
    }

    fn measures(&self) -> Measures {
        let r = self.radius;
        let four_pi = 4.0 * std::f64::consts::PI;
        Measures {
            volume: self.volume(),
            area: self.area(),
            d_volume_dm: vec![0.0, 0.0, 0.0, four_pi * r * r],
            d_area_dm: vec![0.0, 0.0, 0.0, 2.0 * four_pi * r],
        }
    }

    fn bounding_radius(&self) -> f64 {
        self.radius
    }

    fn inner_radius(&self) -> f64 {
        self.radius
    }
}

/// Ellipsoid `{c + S y : |y| = 1}` with `S` symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidParams {
    center: Vec3,
    shape_matrix: Mat3,
    inverse: Mat3,
    determinant: f64,
    eigenvalues: Vec3,
}

/// Order of the six matrix coordinates: s11, s12, s13, s22, s23, s33.
const SYM_INDEX: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Symmetric matrix whose upper-triangle entries are the six coordinates.
pub fn sym_from_coords(s: &[f64]) -> Mat3 {
    let mut m = Mat3::zeros();
    for (k, &(i, j)) in SYM_INDEX.iter().enumerate() {
        m[(i, j)] = s[k];
        m[(j, i)] = s[k];
    }
    m
}

pub fn sym_to_coords(m: &Mat3) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (k, &(i, j)) in SYM_INDEX.iter().enumerate() {
        out[k] = m[(i, j)];
    }
    out
}

impl EllipsoidParams {
    pub fn new(center: Vec3, shape_matrix: Mat3) -> Result<Self> {
        let scale = shape_matrix.amax();
        if !scale.is_finite() || scale == 0.0 {
            return Err(BubbleError::DegenerateShape(
                "shape matrix is zero or non-finite".into(),
            ));
        }
        let asym = (shape_matrix - shape_matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(BubbleError::DegenerateShape(format!(
                "shape matrix not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let sym = (shape_matrix + shape_matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > DEGENERACY_RATIO * hi) {
            return Err(BubbleError::DegenerateShape(format!(
                "shape matrix eigenvalues [{:.3e}, {:.3e}] not positive definite within ratio {DEGENERACY_RATIO:e}",
                lo, hi
            )));
        }
        let inverse = sym
            .try_inverse()
            .ok_or_else(|| BubbleError::DegenerateShape("singular shape matrix".into()))?;
        Ok(Self {
            center,
            shape_matrix: sym,
            inverse,
            determinant: sym.determinant(),
            eigenvalues: eig,
        })
    }

    pub fn from_sphere(sphere: &SphereParams) -> Self {
        Self::new(sphere.center, Mat3::identity() * sphere.radius)
            .expect("a valid sphere is a valid ellipsoid")
    }

    pub fn shape_matrix(&self) -> &Mat3 {
        &self.shape_matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    /// Semi-axes, ascending.
    pub fn semi_axes(&self) -> [f64; 3] {
        let mut a = [
            self.eigenvalues[0],
            self.eigenvalues[1],
            self.eigenvalues[2],
        ];
        a.sort_by(|x, y| x.total_cmp(y));
        a
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.determinant
    }

    /// Surface area through Carlson's symmetric integral,
    /// `4 pi a b c R_G(a^-2, b^-2, c^-2)`.
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.semi_axes();
        4.0 * std::f64::consts::PI
            * a
            * b
            * c
            * carlson::rg(1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c))
    }
}

impl ShapeFamily for EllipsoidParams {
    fn dim(&self) -> usize {
        9
    }

    fn coords(&self) -> Vec<f64> {
        let mut q = vec![self.center.x, self.center.y, self.center.z];
        q.extend_from_slice(&sym_to_coords(&self.shape_matrix));
        q
    }

    fn with_coords(&self, q: &[f64]) -> Result<Self> {
        EllipsoidParams::new(Vec3::new(q[0], q[1], q[2]), sym_from_coords(&q[3..9]))
    }

    fn center(&self) -> Vec3 {
        self.center
    }

    fn map_reference(&self, y: &Vec3) -> MappedPoint {
        // Area vectors transform with the cofactor matrix det(S) S^-T.
        let cof_n = self.inverse.transpose() * y;
        let len = cof_n.norm();
        MappedPoint {
            point: self.center + self.shape_matrix * y,
            normal: cof_n / len,
            area_factor: self.determinant.abs() * len,
        }
    }

    fn point_velocity(&self, y: &Vec3, mdot: &[f64]) -> Vec3 {
        Vec3::new(mdot[0], mdot[1], mdot[2]) + sym_from_coords(&mdot[3..9]) * y
    }

    fn normal_velocity(&self, mdot: &[f64], x: &Vec3, n: &Vec3) -> f64 {
        let c_dot = Vec3::new(mdot[0], mdot[1], mdot[2]);
        let s_dot = sym_from_coords(&mdot[3..9]);
        c_dot.dot(n) + (s_dot * (self.inverse * (x - self.center))).dot(n)
    }

    fn contains(&self, x: &Vec3) -> bool {
        (self.inverse * (x - self.center)).norm() < 1.0
    }

    fn measures(&self) -> Measures {
        let volume = self.volume();
        // d det(S) = det(S) tr(S^-1 dS)
        let mut d_volume_dm = vec![0.0; 9];
        for k in 0..6 {
            let mut e = [0.0; 6];
            e[k] = 1.0;
            d_volume_dm[3 + k] = volume * (self.inverse * sym_from_coords(&e)).trace();
        }
        let q = self.coords();
        let mut d_area_dm = vec![0.0; 9];
        for k in 3..9 {
            let h = MEASURE_FD_STEP * (1.0 + q[k].abs());
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            d_area_dm[k] = match (self.with_coords(&qp), self.with_coords(&qm)) {
                (Ok(p), Ok(m)) => (p.area() - m.area()) / (2.0 * h),
                (Ok(p), Err(_)) => (p.area() - self.area()) / h,
                (Err(_), Ok(m)) => (self.area() - m.area()) / h,
                (Err(_), Err(_)) => f64::NAN,
            };
        }
        Measures {
            volume,
            area: self.area(),
            d_volume_dm,
            d_area_dm,
        }
    }

    fn bounding_radius(&self) -> f64 {
        self.eigenvalues.max()
    }

    fn inner_radius(&self) -> f64 {
        self.eigenvalues.min()
    }
}

/// A bubble shape of one of the shipped families.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Sphere(SphereParams),
    Ellipsoid(EllipsoidParams),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            ShapeParams::Sphere($s) => $body,
            ShapeParams::Ellipsoid($s) => $body,
        }
    };
}

impl ShapeFamily for ShapeParams {
    fn dim(&self) -> usize {
        dispatch!(self, s => s.dim())
    }
    fn coords(&self) -> Vec<f64> {
        dispatch!(self, s => s.coords())
    }
    fn with_coords(&self, q: &[f64]) -> Result<Self> {
        Ok(match self {
            ShapeParams::Sphere(s) => ShapeParams::Sphere(s.with_coords(q)?),
            ShapeParams::Ellipsoid(s) => ShapeParams::Ellipsoid(s.with_coords(q)?),
        })
    }
    fn center(&self) -> Vec3 {
        dispatch!(self, s => s.center())
    }
    fn map_reference(&self, y: &Vec3) -> MappedPoint {
        dispatch!(self, s => s.map_reference(y))
    }
    fn point_velocity(&self, y: &Vec3, mdot: &[f64]) -> Vec3 {
        dispatch!(self, s => s.point_velocity(y, mdot))
    }
    fn normal_velocity(&self, mdot: &[f64], x: &Vec3, n: &Vec3) -> f64 {
        dispatch!(self, s => s.normal_velocity(mdot, x, n))
    }
    fn contains(&self, x: &Vec3) -> bool {
        dispatch!(self, s => s.contains(x))
    }
    fn measures(&self) -> Measures {
        dispatch!(self, s => s.measures())
    }
    fn bounding_radius(&self) -> f64 {
        dispatch!(self, s => s.bounding_radius())
    }
    fn inner_radius(&self) -> f64 {
        dispatch!(self, s => s.inner_radius())
    }
}

impl ShapeParams {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        Ok(ShapeParams::Sphere(SphereParams::new(center, radius)?))
    }

    pub fn ellipsoid(center: Vec3, shape_matrix: Mat3) -> Result<Self> {
        Ok(ShapeParams::Ellipsoid(EllipsoidParams::new(
            center,
            shape_matrix,
        )?))
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ShapeParams::Sphere(_) => "sphere",
            ShapeParams::Ellipsoid(_) => "ellipsoid",
        }
    }

    /// Radius of the sphere with the same volume.
    pub fn equivalent_radius(&self) -> f64 {
        (3.0 * self.measures().volume / (4.0 * std::f64::consts::PI)).cbrt()
    }

    pub fn tangent_from_coords(&self, mdot: &[f64]) -> TangentVector {
        let center_rate = Vec3::new(mdot[0], mdot[1], mdot[2]);
        match self {
            ShapeParams::Sphere(_) => TangentVector::Sphere {
                center_rate,
                radius_rate: mdot[3],
            },
            ShapeParams::Ellipsoid(_) => TangentVector::Ellipsoid {
                center_rate,
                matrix_rate: sym_from_coords(&mdot[3..9]),
            },
        }
    }
}

/// Free-standing form of [`ShapeFamily::normal_velocity`] taking a typed tangent.
pub fn normal_velocity(m: &ShapeParams, mdot: &TangentVector, x: &Vec3, n: &Vec3) -> Result<f64> {
    let coords = mdot.to_coords();
    if coords.len() != m.dim() {
        return Err(BubbleError::Domain(format!(
            "tangent of a {} used with a {}",
            mdot.family_name(),
            m.family_name()
        )));
    }
    Ok(m.normal_velocity(&coords, x, n))
}

pub fn measures(m: &ShapeParams) -> Measures {
    m.measures()
}

/// Per-bubble tangent vector, matching the bubble's family.
#[derive(Debug, Clone, PartialEq)]
pub enum TangentVector {
    Sphere {
        center_rate: Vec3,
        radius_rate: f64,
    },
    Ellipsoid {
        center_rate: Vec3,
        matrix_rate: Mat3,
    },
}

impl TangentVector {
    pub fn to_coords(&self) -> Vec<f64> {
        match self {
            TangentVector::Sphere {
                center_rate,
                radius_rate,
            } => vec![center_rate.x, center_rate.y, center_rate.z, *radius_rate],
            TangentVector::Ellipsoid {
                center_rate,
                matrix_rate,
            } => {
                let mut v = vec![center_rate.x, center_rate.y, center_rate.z];
                v.extend_from_slice(&sym_to_coords(matrix_rate));
                v
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TangentVector::Sphere { .. } => "sphere",
            TangentVector::Ellipsoid { .. } => "ellipsoid",
        }
    }

    pub fn center_rate(&self) -> Vec3 {
        match self {
            TangentVector::Sphere { center_rate, .. }
            | TangentVector::Ellipsoid { center_rate, .. } => *center_rate,
        }
    }
}

/// Region filled by the liquid, outside the bubbles.
#[derive(Debug, Clone)]
pub enum Domain {
    Unbounded,
    CavitySphere { center: Vec3, radius: f64 },
    CavityMesh(Arc<CavityMesh>),
}

impl Domain {
    pub fn is_bounded(&self) -> bool {
        !matches!(self, Domain::Unbounded)
    }
}

/// The N-tuple of bubble shapes together with the liquid domain.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub bubbles: Vec<ShapeParams>,
    pub domain: Domain,
}

impl Configuration {
    pub fn new(bubbles: Vec<ShapeParams>, domain: Domain) -> Self {
        Self { bubbles, domain }
    }

    pub fn unbounded(bubbles: Vec<ShapeParams>) -> Self {
        Self::new(bubbles, Domain::Unbounded)
    }

    /// Total number of shape coordinates.
    pub fn dim(&self) -> usize {
        self.bubbles.iter().map(|b| b.dim()).sum()
    }

    /// Start offset of each bubble's block in the flat coordinate vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.bubbles
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.dim();
                o
            })
            .collect()
    }

    pub fn coords(&self) -> Vec<f64> {
        self.bubbles.iter().flat_map(|b| b.coords()).collect()
    }

    pub fn with_coords(&self, q: &[f64]) -> Result<Self> {
        assert_eq!(q.len(), self.dim(), "coordinate vector length");
        let mut bubbles = Vec::with_capacity(self.bubbles.len());
        let mut o = 0;
        for b in &self.bubbles {
            bubbles.push(b.with_coords(&q[o..o + b.dim()])?);
            o += b.dim();
        }
        Ok(Self {
            bubbles,
            domain: self.domain.clone(),
        })
    }

    /// Index of the bubble owning flat coordinate `i`.
    pub fn owner_of(&self, i: usize) -> usize {
        let mut o = 0;
        for (k, b) in self.bubbles.iter().enumerate() {
            o += b.dim();
            if i < o {
                return k;
            }
        }
        panic!("coordinate index {i} out of range");
    }
}
