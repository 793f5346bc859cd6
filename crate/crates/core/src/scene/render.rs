use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CameraView, Scene, SceneError};
use crate::geom::Vec3;
use crate::real::{lit, Real};

/// Row-major boolean image; index `v * width + u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels whose four neighbors are all set (4-erosion). Pixels on
    /// the image border are never interior.
    pub fn interior(&self) -> Bitmap {
        let (w, h) = (self.width, self.height);
        let mut out = Bitmap::new(w, h);
        for v in 1..h.saturating_sub(1) {
            for u in 1..w.saturating_sub(1) {
                if self.get(u, v) && self.get(u - 1, v) && self.get(u + 1, v) && self.get(u, v - 1) && self.get(u, v + 1) {
                    out.set(u, v, true);
                }
            }
        }
        out
    }

    /// Bitwise OR in place.
    pub fn or_assign(&mut self, other: &Bitmap) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn intersection_count(&self, other: &Bitmap) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union_count(&self, other: &Bitmap) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count()
    }

    /// Set pixels as `(u, v)`, in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Inclusive pixel box `(u_min, v_min, u_max, v_max)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for (u, v) in self.pixels() {
            out = Some(match out {
                None => (u, v, u, v),
                Some((a, b, c, d)) => (a.min(u), b.min(v), c.max(u), d.max(v)),
            });
        }
        out
    }
}

/// Object mask in one view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub view_id: u32,
    pub instance_id: i64,
    pub pixels: Bitmap,
}

/// Ground-truth render of a view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView<T> {
    pub view_id: u32,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[T; 3]>,
    /// Ray parameter of the first hit; `+inf` for misses.
    pub depth: Vec<T>,
    /// `-1` for background.
    pub instance_ids: Vec<i64>,
}

impl<T: Real> RenderedView<T> {
    pub fn instance_at(&self, u: usize, v: usize) -> i64 {
        self.instance_ids[v * self.width + u]
    }

    pub fn mask_of(&self, instance_id: i64) -> Bitmap {
        Bitmap {
            width: self.width,
            height: self.height,
            bits: self.instance_ids.iter().map(|i| *i == instance_id).collect(),
        }
    }
}

/// Casts one ray per pixel center.
pub fn render_view<T: Real>(scene: &Scene<T>, camera: &CameraView<T>) -> RenderedView<T> {
    let (w, h) = (camera.width, camera.height);
    let hits: Vec<_> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let ray = camera.pixel_ray(idx % w, idx / w);
            scene.cast_ray(&ray)
        })
        .collect();
    let mut rgb = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut ids = Vec::with_capacity(w * h);
    for hit in hits {
        match hit {
            Some(hit) => {
                let albedo = scene
                    .primitive(hit.instance_id)
                    .map(|p| p.albedo)
                    .unwrap_or([T::zero(); 3]);
                rgb.push(albedo);
                depth.push(hit.t);
                ids.push(hit.instance_id);
            }
            None => {
                rgb.push([T::zero(); 3]);
                depth.push(T::infinity());
                ids.push(-1);
            }
        }
    }
    RenderedView {
        view_id: camera.view_id,
        width: w,
        height: h,
        rgb,
        depth,
        instance_ids: ids,
    }
}

/// One mask per distinct foreground instance id, ordered by id.
pub fn masks_from_view<T: Real>(view: &RenderedView<T>) -> Vec<Mask> {
    let mut ids: Vec<i64> = view.instance_ids.iter().copied().filter(|i| *i >= 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| Mask {
            view_id: view.view_id,
            instance_id: id,
            pixels: view.mask_of(id),
        })
        .collect()
}

/// Norm of the per-axis population standard deviations.
pub fn physical_scale<T: Real>(points: &[Vec3<T>]) -> Result<T, SceneError> {
    if points.len() < 2 {
        return Err(SceneError::DegenerateMask(points.len()));
    }
    let n = lit::<T>(points.len() as f64);
    let mean = points.iter().fold(Vec3::zero(), |acc, p| acc + *p) / n;
    let var = points
        .iter()
        .fold(Vec3::zero(), |acc, p| {
            let d = *p - mean;
            acc + d.mul_elem(d)
        })
        / n;
    Ok((var.x + var.y + var.z).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::scene::{Primitive, ShapeKind};
    use proptest::prelude::*;

    fn block(id: i64, center: Vec3<f64>, half: f64) -> Primitive<f64> {
        Primitive {
            id,
            category: "box".into(),
            shape: ShapeKind::Box,
            pose: Pose::from_translation(center),
            extents: Vec3::splat(half),
            albedo: [0.3; 3],
        }
    }

    fn camera() -> CameraView<f64> {
        CameraView::look_at(
            0,
            Vec3::new(0.0, -4.0, 0.0),
            Vec3::zero(),
            40.0,
            32,
            24,
        )
    }

    #[test]
    fn empty_scene_is_background() {
        let view = render_view(&Scene::<f64>::new(vec![]), &camera());
        assert!(view.instance_ids.iter().all(|i| *i == -1));
        assert!(view.depth.iter().all(|d| d.is_infinite()));
        assert!(masks_from_view(&view).is_empty());
    }

    #[test]
    fn centered_box_is_contiguous() {
        let scene = Scene::new(vec![block(5, Vec3::zero(), 0.5)]);
        let view = render_view(&scene, &camera());
        let mask = view.mask_of(5);
        let (u0, v0, u1, v1) = mask.bounding_box().unwrap();
        assert_eq!(mask.count(), (u1 - u0 + 1) * (v1 - v0 + 1));
        assert!(mask.get(16, 12));
        for (idx, d) in view.depth.iter().enumerate() {
            if view.instance_ids[idx] >= 0 {
                assert!(*d > 0.0);
            }
        }
    }

    #[test]
    fn masks_partition_foreground() {
        let scene = Scene::new(vec![
            block(3, Vec3::new(-1.0, 0.0, 0.0), 0.4),
            block(7, Vec3::new(1.0, 0.0, 0.0), 0.4),
        ]);
        let view = render_view(&scene, &camera());
        let masks = masks_from_view(&view);
        assert_eq!(
            masks.iter().map(|m| m.instance_id).collect::<Vec<_>>(),
            vec![3, 7]
        );
        let mut union = Bitmap::new(view.width, view.height);
        for m in &masks {
            assert_eq!(union.intersection_count(&m.pixels), 0);
            union.or_assign(&m.pixels);
        }
        let fg = view.instance_ids.iter().filter(|i| **i >= 0).count();
        assert_eq!(union.count(), fg);
    }

    #[test]
    fn cube_corner_scale() {
        let mut pts = Vec::new();
        for x in [-0.5, 0.5] {
            for y in [-0.5, 0.5] {
                for z in [-0.5, 0.5] {
                    pts.push(Vec3::new(x, y, z));
                }
            }
        }
        let s = physical_scale(&pts).unwrap();
        assert!((s - 0.75f64.sqrt()).abs() < 1e-12);
        assert_eq!(physical_scale(&[Vec3::splat(1.0); 5]).unwrap(), 0.0);
        assert_eq!(
            physical_scale(&[Vec3::<f64>::zero()]),
            Err(SceneError::DegenerateMask(1))
        );
    }

    proptest! {
        #[test]
        fn scale_translation_invariant_and_homogeneous(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 2..40),
            shift in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
            k in 0.01f64..20.0,
        ) {
            let pts: Vec<Vec3<f64>> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
            let s = physical_scale(&pts).unwrap();
            let t = Vec3::new(shift.0, shift.1, shift.2);
            let moved: Vec<_> = pts.iter().map(|p| *p + t).collect();
            let scaled: Vec<_> = pts.iter().map(|p| *p * k).collect();
            prop_assert!((physical_scale(&moved).unwrap() - s).abs() < 1e-9 * (1.0 + s));
            prop_assert!((physical_scale(&scaled).unwrap() - k * s).abs() < 1e-9 * (1.0 + k * s));
        }
    }

    #[test]
    fn interior_is_the_4_erosion() {
        let full = Bitmap::from_fn(5, 4, |_, _| true);
        let inner: Vec<_> = full.interior().pixels().collect();
        assert_eq!(inner, vec![(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (3, 2)]);
        let plus = Bitmap::from_fn(5, 5, |u, v| (u == 2 && (1..4).contains(&v)) || (v == 2 && (1..4).contains(&u)));
        assert_eq!(plus.interior().pixels().collect::<Vec<_>>(), vec![(2, 2)]);
        // a diagonal neighbor missing does not matter
        let notch = Bitmap::from_fn(3, 3, |u, v| (u, v) != (0, 0));
        assert_eq!(notch.interior().count(), 1);
        assert!(Bitmap::from_fn(2, 2, |_, _| true).interior().is_empty());
    }
}
