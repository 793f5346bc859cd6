use log::warn;
use rayon::prelude::*;

use super::render::{depth_from_samples, Sampler};
use crate::embed::{ConceptEmbedding, Vocabulary};
use crate::real::Real;
use crate::scene::{masks_from_view, physical_scale, Mask, RenderedView, Scene};

/// One mask with its physical scale and image-side concept embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionTriplet<T> {
    pub mask: Mask,
    pub scale: T,
    pub embedding: ConceptEmbedding<T>,
    /// Category the embedding was drawn for.
    pub category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supervision<T> {
    pub triplets: Vec<SupervisionTriplet<T>>,
    /// Masks dropped because fewer than two pixels had finite depth.
    pub skipped: usize,
}

impl<T: Real> Supervision<T> {
    pub fn scales(&self) -> Vec<T> {
        self.triplets.iter().map(|t| t.scale).collect()
    }
}

/// Masks from each rendered view, their scales from volume-rendered depth,
/// and a noisy per-view embedding of the ground-truth category.
pub fn build_supervision<T: Real>(
    scene: &Scene<T>,
    views: &[RenderedView<T>],
    vocab: &Vocabulary,
    noise: T,
    sampler: &Sampler<T>,
) -> Supervision<T> {
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for view in views {
        let Some(camera) = scene.camera(view.view_id) else {
            warn!("no camera for view {}", view.view_id);
            continue;
        };
        for mask in masks_from_view(view) {
            let pixels: Vec<(usize, usize)> = mask.pixels.pixels().collect();
            let points: Vec<_> = pixels
                .par_iter()
                .filter_map(|&(i, j)| {
                    let ray = camera.pixel_ray(i, j);
                    let depth = depth_from_samples(&sampler.sample(scene, &ray));
                    camera
                        .deproject(T::lit(i as f64 + 0.5), T::lit(j as f64 + 0.5), depth)
                        .ok()
                })
                .collect();
            let scale = match physical_scale(&points) {
                Ok(s) if s > T::zero() => s,
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            let Some(category) = scene.category_of(mask.instance_id).map(str::to_owned) else {
                skipped += 1;
                continue;
            };
            let embedding = vocab.mask_embedding(&category, view.view_id, noise);
            triplets.push(SupervisionTriplet {
                mask,
                scale,
                embedding,
                category,
            });
        }
    }
    if skipped > 0 {
        warn!("skipped {skipped} degenerate masks");
    }
    Supervision { triplets, skipped }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::embed::cosine;
    use crate::geom::{Pose, Vec3};
    use crate::scene::{render_view, CameraView, Primitive, ShapeKind};

    pub(crate) fn desk() -> Scene<f64> {
        let table = Primitive {
            id: 1,
            category: "table".into(),
            shape: ShapeKind::Box,
            pose: Pose::from_translation(Vec3::new(0.0, 0.0, 0.35)),
            extents: Vec3::new(0.6, 0.4, 0.35),
            albedo: [0.6, 0.4, 0.2],
        };
        let mug = Primitive {
            id: 2,
            category: "mug".into(),
            shape: ShapeKind::Cylinder,
            pose: Pose::from_translation(Vec3::new(0.1, 0.0, 0.76)),
            extents: Vec3::new(0.05, 0.05, 0.06),
            albedo: [0.9, 0.9, 0.9],
        };
        let mut s = Scene::new(vec![table, mug]);
        let target = Vec3::new(0.0, 0.0, 0.5);
        for (k, eye) in [
            Vec3::new(2.0, -1.0, 1.6),
            Vec3::new(-1.8, -1.2, 1.5),
            Vec3::new(0.2, 2.1, 1.7),
        ]
        .into_iter()
        .enumerate()
        {
            s.cameras.push(CameraView::look_at(k as u32, eye, target, 90.0, 96, 72));
        }
        s
    }

    #[test]
    fn one_triplet_per_visible_mask() {
        let scene = desk();
        let views: Vec<_> = scene.cameras.iter().map(|c| render_view(&scene, c)).collect();
        let vocab = Vocabulary::default();
        let sup = build_supervision(&scene, &views, &vocab, 0.1, &Sampler::new(0.5, 5.5, 64));
        assert_eq!(sup.triplets.len(), 6);
        assert_eq!(sup.skipped, 0);
        for view in 0..3u32 {
            let get = |cat: &str| {
                sup.triplets
                    .iter()
                    .find(|t| t.mask.view_id == view && t.category == cat)
                    .unwrap()
                    .scale
            };
            assert!(get("table") > get("mug"));
        }
        for t in &sup.triplets {
            let c = vocab.embed_concept::<f64>(&t.category);
            assert!(cosine(&t.embedding, &c) >= 0.9);
            assert!(t.scale > 0.0);
        }
    }
}
