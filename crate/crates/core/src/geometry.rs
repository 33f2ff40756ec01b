//! Unit vectors, rotations and the Kabsch solver.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and every [`Rotation`] is
//! kept in the `w >= 0` hemisphere so that equal rotations compare equal.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest norm accepted when normalizing.
const MIN_NORM: f64 = 1e-300;

/// A direction in 3D, normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < MIN_NORM {
            return Err(Error::InvalidParams(format!(
                "cannot normalize vector with norm {n}"
            )));
        }
        // already unit up to rounding: keep the bits so that
        // normalization is idempotent
        if (n - 1.0).abs() <= 2.0 * f64::EPSILON {
            return Ok(Self(v));
        }
        Ok(Self(v / n))
    }

    /// Wraps a vector the caller already knows to be unit length.
    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        Self(v)
    }

    pub fn x_axis() -> Self {
        Self(Vector3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vector3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vector3::z())
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to `other` in `[0, pi]`, accurate for nearly (anti)parallel pairs.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        angle_between(&self.0, &other.0)
    }

    /// Two unit vectors orthogonal to `self` and to each other, forming a
    /// right-handed frame `(self, a, b)`. The completion crosses `self` with
    /// the coordinate axis of its smallest-magnitude component, so it is
    /// deterministic.
    pub fn orthonormal_completion(&self) -> (UnitVector3, UnitVector3) {
        let v = self.0;
        let abs = v.abs();
        let axis = if abs.x <= abs.y && abs.x <= abs.z {
            Vector3::x()
        } else if abs.y <= abs.z {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let a = v.cross(&axis).normalize();
        let b = v.cross(&a);
        (Self(a), Self(b))
    }
}

impl TryFrom<[f64; 3]> for UnitVector3 {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<UnitVector3> for [f64; 3] {
    fn from(v: UnitVector3) -> Self {
        v.to_array()
    }
}

/// Angle between two arbitrary non-zero vectors via `atan2(|a x b|, a.b)`.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// A proper rotation stored as a canonical unit quaternion (`w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from scalar-first components, normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < MIN_NORM {
            return Err(Error::InvalidParams(format!(
                "quaternion norm {n} cannot be normalized"
            )));
        }
        Ok(Self::from_unit_quaternion(UnitQuaternion::new_normalize(q)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        if q.w < 0.0 {
            Self(UnitQuaternion::new_unchecked(-q.into_inner()))
        } else {
            Self(q)
        }
    }

    pub fn from_axis_angle(axis: &UnitVector3, angle: f64) -> Self {
        let half = 0.5 * angle;
        let s = half.sin();
        let q = Quaternion::new(half.cos(), axis.x() * s, axis.y() * s, axis.z() * s);
        Self::from_unit_quaternion(UnitQuaternion::new_normalize(q))
    }

    /// Exponential map of a rotation vector (axis scaled by angle, radians).
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < MIN_NORM {
            return Self::identity();
        }
        Self::from_axis_angle(&UnitVector3::new_unchecked(v / angle), angle)
    }

    /// Canonical scalar-first components.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self::from_unit_quaternion(self.0.inverse())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self::from_unit_quaternion(self.0 * other.0)
    }

    pub fn rotate(&self, v: &UnitVector3) -> UnitVector3 {
        let r = self.0.transform_vector(&v.0);
        // renormalize to keep the unit invariant exact after rounding
        UnitVector3(r / r.norm())
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn to_axis_angle(&self) -> AxisAngle {
        let q = self.0.quaternion();
        let vnorm = q.imag().norm();
        let angle = 2.0 * vnorm.atan2(q.w);
        let axis = if vnorm < MIN_NORM {
            UnitVector3::z_axis()
        } else {
            UnitVector3(q.imag() / vnorm)
        };
        AxisAngle { axis, angle }
    }

    /// Logarithm map: axis scaled by angle in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let aa = self.to_axis_angle();
        aa.axis.into_vector() * aa.angle
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation as an axis and an angle in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: UnitVector3,
    pub angle: f64,
}

impl From<AxisAngle> for Rotation {
    fn from(aa: AxisAngle) -> Self {
        Rotation::from_axis_angle(&aa.axis, aa.angle)
    }
}

impl From<Rotation> for AxisAngle {
    fn from(r: Rotation) -> Self {
        r.to_axis_angle()
    }
}

pub fn rotate(r: &Rotation, v: &UnitVector3) -> UnitVector3 {
    r.rotate(v)
}

/// Angle of the relative rotation `a⁻¹ b`, in `[0, pi]`. Equal to
/// `2 acos(|<a, b>|)` but computed with `atan2` so it stays accurate near 0.
pub fn geodesic_angle(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.0.inverse() * b.0;
    let q = rel.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Uniform sample on SO(3) from three uniform variates (Shoemake).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    let q = Quaternion::new(b * c3, a * s2, a * c2, b * s3);
    Rotation::from_unit_quaternion(UnitQuaternion::new_normalize(q))
}

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> UnitVector3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    UnitVector3::new_unchecked(Vector3::new(r * phi.cos(), r * phi.sin(), z))
}

/// Ratio below which the second singular value of the cross-covariance marks
/// a collinear (unobservable) configuration.
const KABSCH_DEGENERACY: f64 = 1e-12;

/// Rotation `R` minimizing `sum |R ref_i - obs_i|^2` over proper rotations.
pub fn kabsch(reference: &[UnitVector3], observed: &[UnitVector3]) -> Result<Rotation> {
    kabsch_vectors(
        reference.iter().map(|v| v.0),
        observed.iter().map(|v| v.0),
    )
}

/// Kabsch on raw vectors; weights are implicit in the vector lengths.
pub(crate) fn kabsch_vectors(
    reference: impl ExactSizeIterator<Item = Vector3<f64>>,
    observed: impl ExactSizeIterator<Item = Vector3<f64>>,
) -> Result<Rotation> {
    if reference.len() != observed.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: observed.len(),
        });
    }
    if reference.len() < 2 {
        return Err(Error::DegenerateConfiguration(
            "at least two vector pairs are required",
        ));
    }
    let mut h = Matrix3::zeros();
    for (r, o) in reference.zip(observed) {
        h += o * r.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD failed")),
    };
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s0 = svd.singular_values[order[0]];
    let s1 = svd.singular_values[order[1]];
    if !(s1 > KABSCH_DEGENERACY * s0.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateConfiguration(
            "vectors are collinear; rotation about their axis is unobservable",
        ));
    }
    let det = (u * v_t).determinant();
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if det < 0.0 {
        d[order[2]] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&d) * v_t;
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
    Ok(Rotation::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&rot)))
}
