//! Pinhole camera model and SE(3) pose algebra.
//!
//! Conventions used across the whole crate:
//! - right-handed coordinates, the camera looks down +z, image u grows right
//!   and v grows down;
//! - poses are camera-to-world (or body-to-world for ego poses);
//! - depth is the camera-frame z coordinate, not the Euclidean ray length.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected +1")]
    NotProperRotation(f64),
    #[error("transform bottom row is not (0,0,0,1)")]
    BadHomogeneousRow,
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "raster size must be nonzero ({width}x{height})"
            )));
        }
        if !(cx > 0.0 && cx < width as f64) || !(cy > 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside raster {width}x{height}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}

const ORTHONORMAL_TOL: f64 = 1e-9;

fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let delta = r.transpose() * r - Matrix3::identity();
    delta.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Rigid camera-to-world (or body-to-world) pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let dev = rotation_deviation(&rotation);
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotProperRotation(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::BadHomogeneousRow);
        }
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera (or body) origin expressed in the world frame.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Map a point from this pose's local frame into the world frame.
    pub fn to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Map a world point into this pose's local frame.
    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }
}

/// `compose(a, b)`: the pose obtained by applying `b` in `a`'s frame
/// (local-of-b -> local-of-a -> world).
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(a: &Pose) -> Pose {
    let rt = a.rotation.transpose();
    Pose { rotation: rt, translation: -(rt * a.translation) }
}

/// Rigid transform mapping coordinates of one frame into another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RelativeTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let dev = rotation_deviation(&rotation);
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::BadHomogeneousRow);
        }
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// Treat a pose (local-to-world) as a transform from the local frame to the world frame.
    pub fn from_pose(p: &Pose) -> Self {
        Self { rotation: p.rotation, translation: p.translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self` after `other`: (self ∘ other)(p) = self(other(p)).
    pub fn compose(&self, other: &RelativeTransform) -> RelativeTransform {
        RelativeTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RelativeTransform {
        let rt = self.rotation.transpose();
        RelativeTransform { rotation: rt, translation: -(rt * self.translation) }
    }
}

/// Transform mapping points expressed in frame `src` into frame `dst`:
/// inverse(dst) ∘ src.
pub fn relative(src: &Pose, dst: &Pose) -> RelativeTransform {
    let inv_dst = inverse(dst);
    RelativeTransform {
        rotation: inv_dst.rotation * src.rotation,
        translation: inv_dst.rotation * src.translation + inv_dst.translation,
    }
}

/// Project a camera-frame point to pixel coordinates and z-depth.
pub fn project(
    point_cam: &Point3<f64>,
    k: &Intrinsics,
) -> Result<(f64, f64, f64), GeometryError> {
    let z = point_cam.z;
    if z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    let u = k.fx * point_cam.x / z + k.cx;
    let v = k.fy * point_cam.y / z + k.cy;
    Ok((u, v, z))
}

/// Back-project a pixel with z-depth into the camera frame.
pub fn unproject(u: f64, v: f64, depth: f64, k: &Intrinsics) -> Result<Point3<f64>, GeometryError> {
    if depth <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(Point3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn test_intrinsics() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 320.0, 180.0, 640, 360).unwrap()
    }

    fn random_rotation(rng: &mut StdRng) -> Matrix3<f64> {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner()
    }

    pub(crate) fn random_pose(rng: &mut StdRng) -> Pose {
        Pose::new(
            random_rotation(rng),
            Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            ),
        )
        .unwrap()
    }

    #[test]
    fn project_on_axis() {
        let k = test_intrinsics();
        let (u, v, d) = project(&Point3::new(0.0, 0.0, 5.0), &k).unwrap();
        assert_eq!((u, v, d), (320.0, 180.0, 5.0));
    }

    #[test]
    fn project_off_axis() {
        let k = test_intrinsics();
        let (u, v, d) = project(&Point3::new(1.0, 0.5, 2.0), &k).unwrap();
        assert_eq!((u, v, d), (570.0, 305.0, 2.0));
    }

    #[test]
    fn project_behind_camera_fails() {
        let k = test_intrinsics();
        assert_eq!(
            project(&Point3::new(0.0, 0.0, -1.0), &k),
            Err(GeometryError::NonPositiveDepth(-1.0))
        );
        assert!(project(&Point3::new(0.0, 0.0, 0.0), &k).is_err());
    }

    #[test]
    fn unproject_inverts_examples() {
        let k = test_intrinsics();
        assert_eq!(unproject(320.0, 180.0, 5.0, &k).unwrap(), Point3::new(0.0, 0.0, 5.0));
        assert_eq!(unproject(570.0, 305.0, 2.0, &k).unwrap(), Point3::new(1.0, 0.5, 2.0));
        assert!(unproject(0.0, 0.0, 0.0, &k).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(-1.0, 1.0, 1.0, 1.0, 2, 2).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 5.0, 1.0, 2, 2).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 1.0, 0, 2).is_err());
    }

    #[test]
    fn relative_self_is_identity() {
        let mut rng = StdRng::seed_from_u64(7);
        let p = random_pose(&mut rng);
        let r = relative(&p, &p);
        assert_relative_eq!(r.to_matrix(), Matrix4::identity(), epsilon = 1e-12);
    }

    #[test]
    fn inverse_is_involution() {
        let mut rng = StdRng::seed_from_u64(8);
        let p = random_pose(&mut rng);
        let q = inverse(&inverse(&p));
        assert_relative_eq!(p.to_matrix(), q.to_matrix(), epsilon = 1e-12);
    }

    #[test]
    fn relative_into_translated_frame() {
        // relative(identity, pose translated by (1,0,0)) maps (0,0,5) -> (-1,0,5);
        // checked against a literal 4x4 matrix product.
        let trans = Pose::new(Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let r = relative(&Pose::identity(), &trans);
        let moved = r.apply(&Point3::new(0.0, 0.0, 5.0));
        assert_eq!(moved, Point3::new(-1.0, 0.0, 5.0));

        let oracle = trans.to_matrix().try_inverse().unwrap() * Pose::identity().to_matrix();
        let h = oracle * nalgebra::Vector4::new(0.0, 0.0, 5.0, 1.0);
        assert_relative_eq!(moved.coords, h.fixed_rows::<3>(0).into_owned(), epsilon = 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let id = compose(&p, &inverse(&p));
            assert_relative_eq!(id.to_matrix(), Matrix4::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn relative_chains_compose() {
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..50 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let direct = relative(&a, &c);
            let chained = relative(&b, &c).compose(&relative(&a, &b));
            assert_relative_eq!(direct.to_matrix(), chained.to_matrix(), epsilon = 1e-10);
        }
    }

    #[test]
    fn rotation_stays_orthonormal_under_composition() {
        let mut rng = StdRng::seed_from_u64(11);
        let mut acc = random_pose(&mut rng);
        for _ in 0..1000 {
            acc = compose(&acc, &random_pose(&mut rng));
        }
        assert!(rotation_deviation(acc.rotation()) < 1e-9);
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        // Reflection: orthonormal but det = -1.
        let refl = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert_eq!(
            Pose::new(refl, Vector3::zeros()),
            Err(GeometryError::NotProperRotation(-1.0))
        );
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(
            u in 0.0..640.0f64,
            v in 0.0..360.0f64,
            d in 0.1..100.0f64,
        ) {
            let k = test_intrinsics();
            let p = unproject(u, v, d, &k).unwrap();
            let (u2, v2, d2) = project(&p, &k).unwrap();
            prop_assert!((u2 - u).abs() < 1e-6);
            prop_assert!((v2 - v).abs() < 1e-6);
            prop_assert!((d2 - d).abs() < 1e-9);
        }
    }
}
