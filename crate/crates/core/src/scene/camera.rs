use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geom::{Mat3, Pose, Ray, Vec3};
use crate::real::{lit, Real};

/// Posed pinhole camera.
///
/// Camera frame: +x right, +y down, +z forward. `pose` maps camera coordinates
/// to world coordinates. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`, so its
/// center is at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CameraView<T> {
    pub view_id: u32,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "h")]
    pub height: usize,
    pub pose: Pose<T>,
}

impl<T: Real> CameraView<T> {
    /// Camera at `eye` looking at `target` with +z as world up.
    pub fn look_at(
        view_id: u32,
        eye: Vec3<T>,
        target: Vec3<T>,
        focal: T,
        width: usize,
        height: usize,
    ) -> Self {
        let forward = (target - eye).normalized();
        let up = Vec3::new(T::zero(), T::zero(), T::one());
        let mut right = forward.cross(up);
        if right.norm() < lit(1e-9) {
            right = Vec3::new(T::one(), T::zero(), T::zero());
        }
        let right = right.normalized();
        let down = forward.cross(right);
        Self {
            view_id,
            fx: focal,
            fy: focal,
            cx: lit::<T>(width as f64 * 0.5),
            cy: lit::<T>(height as f64 * 0.5),
            width,
            height,
            pose: Pose::new(Mat3::from_columns(right, down, forward), eye),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidCamera {
            view_id: self.view_id,
            reason: reason.to_string(),
        };
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(bad("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(bad("image size must be positive"));
        }
        let (w, h) = (lit::<T>(self.width as f64), lit::<T>(self.height as f64));
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(bad("principal point outside the image"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn origin(&self) -> Vec3<T> {
        self.pose.translation
    }

    /// Unit ray through continuous pixel coordinates `(u, v)`.
    pub fn ray(&self, u: T, v: T) -> Ray<T> {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one());
        Ray::new(self.origin(), self.pose.transform_vector(d))
    }

    /// Ray through the center of integer pixel `(i, j)`.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Ray<T> {
        self.ray(lit(i as f64 + 0.5), lit(j as f64 + 0.5))
    }

    /// World point at ray parameter `depth` along the ray through `(u, v)`.
    pub fn deproject(&self, u: T, v: T, depth: T) -> Result<Vec3<T>, SceneError> {
        if !depth.is_finite() || depth <= T::zero() {
            return Err(SceneError::MissPixel {
                u: u.to_f64_lossy(),
                v: v.to_f64_lossy(),
            });
        }
        Ok(self.ray(u, v).at(depth))
    }

    /// Pixel coordinates of a world point in front of the camera.
    pub fn project(&self, p: Vec3<T>) -> Option<(T, T)> {
        let c = self.pose.inverse_transform_point(p);
        if c.z <= T::zero() {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// World point expressed in this camera's frame.
    pub fn to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        self.pose.inverse_transform_point(p)
    }
}
