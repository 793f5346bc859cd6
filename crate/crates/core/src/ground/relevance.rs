use rayon::prelude::*;
use serde::Serialize;

use crate::embed::{dot, QueryContext};
use crate::field::{depth_from_samples, FeatureField, FieldKind, RenderedFeature, Sampler};
use crate::geom::Vec3;
use crate::real::{lit, Real};
use crate::scene::io::encode_pgm;
use crate::scene::{CameraView, Scene};

/// Two-way softmax of the query against each canonical phrase, minimized
/// over the canonicals. A zero embedding scores 0.
pub fn relevance<T: Real>(phi: &[T], ctx: &QueryContext<T>) -> T {
    if phi.iter().all(|x| *x == T::zero()) {
        return T::zero();
    }
    let q = dot(phi, &ctx.query.vector);
    ctx.canonicals
        .iter()
        .map(|c| {
            // exp(q) / (exp(c) + exp(q)) without overflow
            T::one() / (T::one() + (dot(phi, &c.vector) - q).exp())
        })
        .fold(T::infinity(), T::min)
}

/// Per-pixel relevance in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct RelevanceMap<T> {
    pub view_id: u32,
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
    pub argmax_pixel: (u32, u32),
}

impl<T: Real> RelevanceMap<T> {
    pub fn new(view_id: u32, width: usize, height: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), width * height);
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        Self {
            view_id,
            width,
            height,
            values,
            argmax_pixel: ((best % width.max(1)) as u32, (best / width.max(1)) as u32),
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.values[v * self.width + u]
    }

    pub fn peak(&self) -> T {
        let (u, v) = self.argmax_pixel;
        if self.values.is_empty() {
            T::zero()
        } else {
            self.get(u as usize, v as usize)
        }
    }

    /// Binary graymap with `[0, 1]` mapped to `[0, 255]`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<u8> = self
            .values
            .iter()
            .map(|r| (r.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        encode_pgm(self.width, self.height, &px)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CachedSample<T> {
    weight: T,
    /// Segment `[start, end)` along the ray.
    start: T,
    end: T,
    point: Vec3<T>,
    sigma: T,
    color: [T; 3],
}

/// Ray samples and rendered depth for every pixel of one camera, so several
/// queries against the same view share the scene sampling.
#[derive(Debug, Clone)]
pub struct ViewCache<T> {
    pub camera: CameraView<T>,
    /// Expected termination distance per pixel; `+inf` on empty rays.
    pub depth: Vec<T>,
    samples: Vec<Vec<CachedSample<T>>>,
}

impl<T: Real> ViewCache<T> {
    pub fn new(scene: &Scene<T>, sampler: &Sampler<T>, camera: &CameraView<T>) -> Self {
        let (w, h) = (camera.width, camera.height);
        let per_pixel: Vec<(T, Vec<CachedSample<T>>)> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let s = sampler.sample(scene, &camera.pixel_ray(i % w, i / w));
                let depth = depth_from_samples(&s);
                let kept = (0..s.points.len())
                    .filter(|k| s.weights.weight[*k] > lit(1e-9))
                    .map(|k| CachedSample {
                        weight: s.weights.weight[k],
                        start: s.weights.t_mid[k] - s.weights.delta[k] * lit(0.5),
                        end: s.weights.t_mid[k] + s.weights.delta[k] * lit(0.5),
                        point: s.points[k],
                        sigma: s.sigma[k],
                        color: s.color[k],
                    })
                    .collect();
                (depth, kept)
            })
            .collect();
        let (depth, samples) = per_pixel.into_iter().unzip();
        Self {
            camera: camera.clone(),
            depth,
            samples,
        }
    }

    pub fn view_id(&self) -> u32 {
        self.camera.view_id
    }

    pub fn depth_at(&self, u: usize, v: usize) -> T {
        self.depth[v * self.camera.width + u]
    }

    /// Density and color of the segment containing distance `t` on the
    /// pixel's ray, as the piecewise-constant quadrature sees it. `None` when
    /// `t` falls in a pruned (transparent) stretch.
    pub fn occupancy_at(&self, u: usize, v: usize, t: T) -> Option<(T, [T; 3])> {
        self.samples[v * self.camera.width + u]
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map(|s| (s.sigma, s.color))
    }

    /// Rendered feature at one pixel; identical to `render_embedding`.
    pub fn render(&self, field: &FeatureField<T>, kind: FieldKind, level: usize, u: usize, v: usize) -> RenderedFeature<T> {
        let pyr = field.pyramid(kind);
        let mut raw = vec![T::zero(); pyr.dim()];
        for s in &self.samples[v * self.camera.width + u] {
            pyr.accumulate(level, &pyr.corners(level, s.point), s.weight, &mut raw);
            field.accumulate_vis(kind, &field.visual_input(s.sigma, s.color), s.weight, &mut raw);
        }
        RenderedFeature::from_raw(raw)
    }

    pub fn relevance_map(&self, field: &FeatureField<T>, ctx: &QueryContext<T>, scale: T) -> RelevanceMap<T> {
        let level = field.language.level_for_scale(scale);
        let w = self.camera.width;
        let values = (0..w * self.camera.height)
            .into_par_iter()
            .map(|i| {
                if self.samples[i].is_empty() {
                    return T::zero();
                }
                let f = self.render(field, FieldKind::Language, level, i % w, i / w);
                relevance(&f.normalized, ctx)
            })
            .collect();
        RelevanceMap::new(self.camera.view_id, w, self.camera.height, values)
    }
}

/// Relevance of every pixel of `camera` for the query in `ctx`.
pub fn relevance_map<T: Real>(
    scene: &Scene<T>,
    field: &FeatureField<T>,
    camera: &CameraView<T>,
    ctx: &QueryContext<T>,
    scale: T,
) -> RelevanceMap<T> {
    ViewCache::new(scene, &field.sampler, camera).relevance_map(field, ctx, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ConceptEmbedding;
    use proptest::prelude::*;

    fn e(v: &[f64]) -> ConceptEmbedding<f64> {
        ConceptEmbedding::from_raw(v.to_vec()).unwrap()
    }

    #[test]
    fn hand_values() {
        let phi = [1.0, 0.0, 0.0];
        let one = QueryContext::new(e(&[1.0, 0.0, 0.0]), vec![e(&[0.0, 1.0, 0.0])]);
        assert!((relevance(&phi, &one) - 0.731_058_578_630_004_9).abs() < 1e-12);
        let c = e(&[0.5, 0.75f64.sqrt(), 0.0]);
        let two = QueryContext::new(e(&[1.0, 0.0, 0.0]), vec![e(&[0.0, 1.0, 0.0]), c]);
        // e / (e^0.5 + e)
        assert!((relevance(&phi, &two) - 0.622_459_331_201_854_6).abs() < 1e-12);
        assert_eq!(relevance(&[0.0; 3], &two), 0.0);
    }

    #[test]
    fn symmetric_case_is_one_half() {
        let q = e(&[0.0, 0.0, 1.0]);
        let ctx = QueryContext::new(q, vec![e(&[0.0, 0.0, 1.0]), e(&[0.0, 0.0, 1.0])]);
        assert_eq!(relevance(&[0.3, 0.1, 0.9], &ctx), 0.5);
    }

    proptest! {
        #[test]
        fn bounded(v in prop::collection::vec(-1.0f64..1.0, 4), q in prop::collection::vec(-1.0f64..1.0, 4)) {
            prop_assume!(q.iter().any(|x| x.abs() > 1e-3));
            let ctx = QueryContext::new(e(&q), vec![e(&[1.0, 0.0, 0.0, 0.0]), e(&[0.0, 1.0, 1.0, 0.0])]);
            let r = relevance(&v, &ctx);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn argmax_and_graymap() {
        let m = RelevanceMap::new(2, 3, 2, vec![0.2, 0.4, 0.0, 0.8, 0.6, 1.0]);
        assert_eq!(m.argmax_pixel, (2, 1));
        assert_eq!(m.peak(), 1.0);
        let pgm = m.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm[pgm.len() - 6..], [51, 102, 0, 204, 153, 255]);
    }
}
