use serde::{Deserialize, Serialize};

use super::{FeatureField, FieldKind};
use crate::geom::{Ray, Vec3};
use crate::real::{lit, Real};
use crate::scene::Scene;

/// Raw renders with a norm at or below this are degenerate.
pub const EPS_NORM: f64 = 1e-8;

/// Discrete volume-rendering quadrature along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderWeights<T> {
    pub t_mid: Vec<T>,
    pub delta: Vec<T>,
    /// Transmittance at the start of each segment.
    pub transmittance: Vec<T>,
    pub weight: Vec<T>,
    /// Transmittance after the last segment.
    pub final_transmittance: T,
}

/// `T_k = exp(-sum_{j<k} sigma_j delta_j)`, `w_k = T_k (1 - exp(-sigma_k delta_k))`.
///
/// `t_mid` is measured from the start of the first segment.
pub fn render_weights<T: Real>(sigmas: &[T], deltas: &[T]) -> RenderWeights<T> {
    assert_eq!(sigmas.len(), deltas.len());
    let k = sigmas.len();
    let mut t_mid = Vec::with_capacity(k);
    let mut transmittance = Vec::with_capacity(k);
    let mut weight = Vec::with_capacity(k);
    let mut trans = T::one();
    let mut start = T::zero();
    let half = lit::<T>(0.5);
    for (s, d) in sigmas.iter().zip(deltas) {
        let tau = *s * *d;
        transmittance.push(trans);
        t_mid.push(start + *d * half);
        weight.push(trans * -(-tau).exp_m1());
        trans = trans * (-tau).exp();
        start += *d;
    }
    RenderWeights {
        t_mid,
        delta: deltas.to_vec(),
        transmittance,
        weight,
        final_transmittance: trans,
    }
}

/// Uniform midpoint sampling of `[near, far]` with `samples` segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Sampler<T> {
    pub near: T,
    pub far: T,
    pub samples: usize,
}

/// Per-sample inputs and weights for one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySamples<T> {
    pub points: Vec<Vec3<T>>,
    pub sigma: Vec<T>,
    pub color: Vec<[T; 3]>,
    pub weights: RenderWeights<T>,
}

impl<T: Real> Sampler<T> {
    pub fn new(near: f64, far: f64, samples: usize) -> Self {
        Self {
            near: lit(near),
            far: lit(far),
            samples,
        }
    }

    pub fn spacing(&self) -> T {
        (self.far - self.near) / lit(self.samples as f64)
    }

    pub fn sample(&self, scene: &Scene<T>, ray: &Ray<T>) -> RaySamples<T> {
        let delta = self.spacing();
        let mut points = Vec::with_capacity(self.samples);
        let mut sigma = Vec::with_capacity(self.samples);
        let mut color = Vec::with_capacity(self.samples);
        for k in 0..self.samples {
            let t = self.near + delta * lit(k as f64 + 0.5);
            let p = ray.at(t);
            let (s, c) = scene.occupancy(p, ray.direction);
            points.push(p);
            sigma.push(s);
            color.push(c);
        }
        let mut weights = render_weights(&sigma, &vec![delta; self.samples]);
        for t in &mut weights.t_mid {
            *t += self.near;
        }
        RaySamples {
            points,
            sigma,
            color,
            weights,
        }
    }
}

/// Raw and normalized rendered feature for one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFeature<T> {
    pub raw: Vec<T>,
    /// Unit vector, or zeros when `degenerate`.
    pub normalized: Vec<T>,
    pub degenerate: bool,
}

impl<T: Real> RenderedFeature<T> {
    pub fn from_raw(raw: Vec<T>) -> Self {
        let n = raw.iter().map(|x| *x * *x).sum::<T>().sqrt();
        if n > lit(EPS_NORM) {
            let normalized = raw.iter().map(|x| *x / n).collect();
            Self {
                raw,
                normalized,
                degenerate: false,
            }
        } else {
            let d = raw.len();
            Self {
                raw,
                normalized: vec![T::zero(); d],
                degenerate: true,
            }
        }
    }
}

/// Expected feature along a ray: `sum_k w_k F(x_k, scale, sigma_k, c_k)`.
pub fn render_embedding<T: Real>(
    scene: &Scene<T>,
    field: &FeatureField<T>,
    kind: FieldKind,
    ray: &Ray<T>,
    scale: T,
) -> RenderedFeature<T> {
    let samples = field.sampler.sample(scene, ray);
    render_from_samples(field, kind, &samples, scale)
}

pub(crate) fn render_from_samples<T: Real>(
    field: &FeatureField<T>,
    kind: FieldKind,
    samples: &RaySamples<T>,
    scale: T,
) -> RenderedFeature<T> {
    let pyr = field.pyramid(kind);
    let level = pyr.level_for_scale(scale);
    let mut raw = vec![T::zero(); pyr.dim()];
    for (k, w) in samples.weights.weight.iter().enumerate() {
        if *w == T::zero() {
            continue;
        }
        let p = samples.points[k];
        pyr.accumulate(level, &pyr.corners(level, p), *w, &mut raw);
        let vp = field.visual_input(samples.sigma[k], samples.color[k]);
        field.accumulate_vis(kind, &vp, *w, &mut raw);
    }
    RenderedFeature::from_raw(raw)
}

/// Expected offset of the termination point inside a segment of constant
/// density `sigma` and length `delta`.
fn segment_termination_offset<T: Real>(sigma: T, delta: T) -> T {
    let x = sigma * delta;
    if x < lit(1e-6) {
        return delta * lit(0.5);
    }
    delta * (x.recip() - x.exp_m1().recip())
}

/// Expected ray-termination distance; `+inf` when the ray is (nearly) empty.
///
/// Each segment contributes its own expected termination point under the
/// piecewise-constant density model rather than its midpoint.
pub fn render_depth<T: Real>(scene: &Scene<T>, sampler: &Sampler<T>, ray: &Ray<T>) -> T {
    depth_from_samples(&sampler.sample(scene, ray))
}

pub(crate) fn depth_from_samples<T: Real>(s: &RaySamples<T>) -> T {
    let w = &s.weights;
    let mut total = T::zero();
    let mut acc = T::zero();
    for k in 0..w.weight.len() {
        if w.weight[k] == T::zero() {
            continue;
        }
        let start = w.t_mid[k] - w.delta[k] * lit(0.5);
        let t = start + segment_termination_offset(s.sigma[k], w.delta[k]);
        acc += w.weight[k] * t;
        total += w.weight[k];
    }
    if total < lit(1e-6) {
        T::infinity()
    } else {
        acc / total
    }
}
