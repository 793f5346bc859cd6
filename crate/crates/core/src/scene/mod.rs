//! Synthetic scenes: analytic primitives, posed pinhole cameras, ray casting,
//! view rendering and the mask/scale utilities that feed supervision.

mod camera;
pub mod generate;
pub mod io;
mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Pose, Ray, Vec3};
use crate::parse::Relation;
use crate::real::{lit, Real};

pub use camera::CameraView;
pub use generate::{generate_scene, GenConfig, GenError, GeneratedScene, ObjectSpec, QueryText, RelationSpec};
pub use render::{masks_from_view, physical_scale, render_view, Bitmap, Mask, RenderedView};

/// Density inside any primitive, per scene unit.
pub const SIGMA_IN: f64 = 40.0;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("pixel ({u}, {v}) has no finite depth")]
    MissPixel { u: f64, v: f64 },
    #[error("degenerate mask: {0} points, need at least 2")]
    DegenerateMask(usize),
    #[error("invalid camera {view_id}: {reason}")]
    InvalidCamera { view_id: u32, reason: String },
    #[error("invalid primitive {id}: {reason}")]
    InvalidPrimitive { id: i64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Sphere,
    /// Axis along local z.
    Cylinder,
}

/// One object instance.
///
/// `extents` are half extents in the local frame. Spheres use `extents.x` as
/// the radius; cylinders use `extents.x` as radius and `extents.z` as half height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Primitive<T> {
    pub id: i64,
    pub category: String,
    pub shape: ShapeKind,
    pub pose: Pose<T>,
    pub extents: Vec3<T>,
    pub albedo: [T; 3],
}

impl<T: Real> Primitive<T> {
    pub fn contains(&self, p: Vec3<T>) -> bool {
        let l = self.pose.inverse_transform_point(p);
        let e = self.extents;
        match self.shape {
            ShapeKind::Box => l.x.abs() <= e.x && l.y.abs() <= e.y && l.z.abs() <= e.z,
            ShapeKind::Sphere => l.norm_squared() <= e.x * e.x,
            ShapeKind::Cylinder => l.x * l.x + l.y * l.y <= e.x * e.x && l.z.abs() <= e.z,
        }
    }

    /// Parametric interval where the ray is inside the primitive, unclipped.
    pub fn intersect(&self, ray: &Ray<T>) -> Option<(T, T)> {
        let o = self.pose.inverse_transform_point(ray.origin);
        let d = self.pose.inverse_transform_vector(ray.direction);
        let e = self.extents;
        let local = Ray {
            origin: o,
            direction: d,
        };
        match self.shape {
            ShapeKind::Box => slab(&local, -e, e),
            ShapeKind::Sphere => {
                let r = e.x;
                let b = o.dot(d);
                let c = o.norm_squared() - r * r;
                let disc = b * b - c;
                if disc < T::zero() {
                    return None;
                }
                let s = disc.sqrt();
                Some((-b - s, -b + s))
            }
            ShapeKind::Cylinder => {
                let r = e.x;
                let (z0, z1) = slab_axis(o.z, d.z, -e.z, e.z)?;
                let a = d.x * d.x + d.y * d.y;
                let (c0, c1) = if a == T::zero() {
                    if o.x * o.x + o.y * o.y > r * r {
                        return None;
                    }
                    (T::neg_infinity(), T::infinity())
                } else {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - r * r;
                    let disc = b * b - a * c;
                    if disc < T::zero() {
                        return None;
                    }
                    let s = disc.sqrt();
                    ((-b - s) / a, (-b + s) / a)
                };
                let t0 = z0.max(c0);
                let t1 = z1.min(c1);
                (t0 <= t1).then_some((t0, t1))
            }
        }
    }

    /// Conservative world-space bounding box.
    pub fn aabb(&self) -> Aabb<T> {
        let e = match self.shape {
            ShapeKind::Box => self.extents,
            ShapeKind::Sphere => Vec3::splat(self.extents.x),
            ShapeKind::Cylinder => Vec3::new(self.extents.x, self.extents.x, self.extents.z),
        };
        let r = &self.pose.rotation.rows;
        let half = Vec3::new(
            r[0][0].abs() * e.x + r[0][1].abs() * e.y + r[0][2].abs() * e.z,
            r[1][0].abs() * e.x + r[1][1].abs() * e.y + r[1][2].abs() * e.z,
            r[2][0].abs() * e.x + r[2][1].abs() * e.y + r[2][2].abs() * e.z,
        );
        let c = self.pose.translation;
        Aabb::new(c - half, c + half)
    }

    pub fn volume(&self) -> T {
        let e = self.extents;
        let pi = T::from_f64(std::f64::consts::PI).unwrap();
        match self.shape {
            ShapeKind::Box => lit::<T>(8.0) * e.x * e.y * e.z,
            ShapeKind::Sphere => lit::<T>(4.0 / 3.0) * pi * e.x * e.x * e.x,
            ShapeKind::Cylinder => lit::<T>(2.0) * pi * e.x * e.x * e.z,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let e = self.extents;
        let needed = match self.shape {
            ShapeKind::Box => vec![e.x, e.y, e.z],
            ShapeKind::Sphere => vec![e.x],
            ShapeKind::Cylinder => vec![e.x, e.z],
        };
        if needed.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(SceneError::InvalidPrimitive {
                id: self.id,
                reason: "extents must be positive and finite".into(),
            });
        }
        if self.albedo.iter().any(|c| *c < T::zero() || *c > T::one()) {
            return Err(SceneError::InvalidPrimitive {
                id: self.id,
                reason: "albedo outside [0,1]".into(),
            });
        }
        Ok(())
    }
}

fn slab_axis<T: Real>(o: T, d: T, lo: T, hi: T) -> Option<(T, T)> {
    if d == T::zero() {
        return (o >= lo && o <= hi).then_some((T::neg_infinity(), T::infinity()));
    }
    let (a, b) = ((lo - o) / d, (hi - o) / d);
    Some((a.min(b), a.max(b)))
}

fn slab<T: Real>(ray: &Ray<T>, lo: Vec3<T>, hi: Vec3<T>) -> Option<(T, T)> {
    let mut t0 = T::neg_infinity();
    let mut t1 = T::infinity();
    for a in 0..3 {
        let (s0, s1) = slab_axis(ray.origin[a], ray.direction[a], lo[a], hi[a])?;
        t0 = t0.max(s0);
        t1 = t1.min(s1);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Ground-truth annotation for one generated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub query_id: String,
    pub target_id: i64,
    pub anchor_id: i64,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T> {
    pub t: T,
    pub instance_id: i64,
}

/// Immutable synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Scene<T> {
    #[serde(default = "default_units")]
    pub units: String,
    pub primitives: Vec<Primitive<T>>,
    #[serde(default)]
    pub cameras: Vec<CameraView<T>>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default = "default_sigma")]
    pub sigma_in: T,
}

fn default_units() -> String {
    "m".to_string()
}

fn default_sigma<T: Real>() -> T {
    lit(SIGMA_IN)
}

impl<T: Real> Scene<T> {
    pub fn new(primitives: Vec<Primitive<T>>) -> Self {
        Self {
            units: default_units(),
            primitives,
            cameras: Vec::new(),
            annotations: Vec::new(),
            sigma_in: lit(SIGMA_IN),
        }
    }

    pub fn primitive(&self, id: i64) -> Option<&Primitive<T>> {
        self.primitives.iter().find(|p| p.id == id)
    }

    pub fn category_of(&self, id: i64) -> Option<&str> {
        self.primitive(id).map(|p| p.category.as_str())
    }

    pub fn camera(&self, view_id: u32) -> Option<&CameraView<T>> {
        self.cameras.iter().find(|c| c.view_id == view_id)
    }

    /// Bounding box of all primitives; a unit box around the origin when empty.
    pub fn bounds(&self) -> Aabb<T> {
        if self.primitives.is_empty() {
            return Aabb::new(Vec3::splat(-T::one()), Vec3::splat(T::one()));
        }
        self.primitives
            .iter()
            .map(Primitive::aabb)
            .reduce(|a, b| a.union(&b))
            .expect("nonempty")
    }

    /// Checks ids are unique and extents positive, and validates cameras.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.primitives {
            p.validate()?;
            if !ids.insert(p.id) || p.id < 0 {
                return Err(SceneError::InvalidPrimitive {
                    id: p.id,
                    reason: "ids must be unique and nonnegative".into(),
                });
            }
        }
        for c in &self.cameras {
            c.validate()?;
        }
        Ok(())
    }

    /// Analytic stand-in for the visual property network: constant density
    /// inside any primitive, albedo of the innermost containing one. The view
    /// direction is accepted for interface parity and ignored.
    pub fn occupancy(&self, point: Vec3<T>, _direction: Vec3<T>) -> (T, [T; 3]) {
        let mut best: Option<(&Primitive<T>, T)> = None;
        for p in &self.primitives {
            if p.contains(point) {
                let v = p.volume();
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((p, v));
                }
            }
        }
        match best {
            Some((p, _)) => (self.sigma_in, p.albedo),
            None => (T::zero(), [T::zero(); 3]),
        }
    }

    /// First surface hit along the ray. Rays starting inside a primitive hit
    /// it at `t = 0`; equal entry distances go to the smaller primitive.
    pub fn cast_ray(&self, ray: &Ray<T>) -> Option<Hit<T>> {
        let mut best: Option<(T, T, i64)> = None;
        for p in &self.primitives {
            let Some((t0, t1)) = p.intersect(ray) else {
                continue;
            };
            if t1 < T::zero() {
                continue;
            }
            let t = t0.max(T::zero());
            let v = p.volume();
            let better = match best {
                None => true,
                Some((bt, bv, _)) => t < bt || (t == bt && v < bv),
            };
            if better {
                best = Some((t, v, p.id));
            }
        }
        best.map(|(t, _, id)| Hit { t, instance_id: id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;

    pub(crate) fn unit_box(id: i64, center: Vec3<f64>) -> Primitive<f64> {
        Primitive {
            id,
            category: "box".into(),
            shape: ShapeKind::Box,
            pose: Pose::from_translation(center),
            extents: Vec3::splat(0.5),
            albedo: [0.2, 0.4, 0.6],
        }
    }

    fn sphere(id: i64, center: Vec3<f64>, r: f64) -> Primitive<f64> {
        Primitive {
            id,
            category: "ball".into(),
            shape: ShapeKind::Sphere,
            pose: Pose::from_translation(center),
            extents: Vec3::splat(r),
            albedo: [0.9, 0.1, 0.1],
        }
    }

    #[test]
    fn occupancy_inside_and_outside() {
        let scene = Scene::new(vec![unit_box(1, Vec3::zero())]);
        let d = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(scene.occupancy(Vec3::zero(), d), (40.0, [0.2, 0.4, 0.6]));
        assert_eq!(
            scene.occupancy(Vec3::new(10.0, 0.0, 0.0), d),
            (0.0, [0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn occupancy_sphere_near_boundary() {
        let scene = Scene::new(vec![sphere(2, Vec3::new(1.0, 1.0, 1.0), 1.0)]);
        let dir = Vec3::new(0.3, -0.5, 0.8).normalized();
        let p = Vec3::new(1.0, 1.0, 1.0) + dir * 0.999;
        assert_eq!(scene.occupancy(p, dir).0, 40.0);
        let q = Vec3::new(1.0, 1.0, 1.0) + dir * 1.001;
        assert_eq!(scene.occupancy(q, dir).0, 0.0);
    }

    #[test]
    fn cast_ray_box_slab() {
        let scene = Scene::new(vec![unit_box(7, Vec3::new(3.0, 0.0, 0.0))]);
        let hit = scene
            .cast_ray(&Ray::new(Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)))
            .unwrap();
        assert_eq!(hit.instance_id, 7);
        assert!((hit.t - 2.5).abs() < 1e-12);
        assert!(scene
            .cast_ray(&Ray::new(Vec3::zero(), Vec3::new(-1.0, 0.0, 0.0)))
            .is_none());
    }

    #[test]
    fn cast_ray_from_inside_is_zero() {
        let scene = Scene::new(vec![unit_box(3, Vec3::zero())]);
        let hit = scene
            .cast_ray(&Ray::new(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)))
            .unwrap();
        assert_eq!(hit, Hit { t: 0.0, instance_id: 3 });
    }

    #[test]
    fn cylinder_intersection_matches_containment() {
        let cyl: Primitive<f64> = Primitive {
            id: 1,
            category: "mug".into(),
            shape: ShapeKind::Cylinder,
            pose: Pose::new(Mat3::rotation_z(0.4), Vec3::new(0.0, 0.0, 0.5)),
            extents: Vec3::new(0.3, 0.3, 0.5),
            albedo: [0.5; 3],
        };
        let ray = Ray::new(Vec3::new(-2.0, 0.1, 0.6), Vec3::new(1.0, 0.0, 0.05));
        let (t0, t1) = cyl.intersect(&ray).unwrap();
        let mid = ray.at((t0 + t1) * 0.5);
        assert!(cyl.contains(mid));
        assert!(!cyl.contains(ray.at(t0 - 1e-6)));
        assert!(!cyl.contains(ray.at(t1 + 1e-6)));
        // cap hit from above
        let down = Ray::new(Vec3::new(0.05, 0.0, 3.0), Vec3::new(0.0, 0.0, -1.0));
        let (t0, _) = cyl.intersect(&down).unwrap();
        assert!((t0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_box_aabb_contains_corners() {
        let p = Primitive {
            pose: Pose::new(Mat3::rotation_z(0.6), Vec3::new(1.0, 2.0, 0.3)),
            extents: Vec3::new(0.4, 0.1, 0.3),
            ..unit_box(1, Vec3::zero())
        };
        let b = p.aabb();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let c = p
                        .pose
                        .transform_point(Vec3::new(0.4 * sx, 0.1 * sy, 0.3 * sz));
                    assert!(b.padded(1e-12).contains(c));
                }
            }
        }
    }

    #[test]
    fn validate_rejects_duplicates() {
        let scene = Scene::new(vec![unit_box(1, Vec3::zero()), unit_box(1, Vec3::zero())]);
        assert!(scene.validate().is_err());
    }
}
