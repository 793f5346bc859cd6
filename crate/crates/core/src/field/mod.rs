//! Multi-scale voxel feature fields for language and instance embeddings.
//!
//! Each field is a pyramid of trilinearly interpolated vertex grids plus a
//! linear modulation by the visual properties `(sigma, r, g, b)`. Grid storage
//! is sparse: only vertices touched by training rays are materialized, and
//! the rest read as their deterministic initial value.

mod checkpoint;
mod loss;
mod render;
mod supervision;
mod train;

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec3};
use crate::real::{lit, Real};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use loss::{instance_loss, language_loss, InstanceLoss};
pub(crate) use render::depth_from_samples;
pub use render::{
    render_depth, render_embedding, render_weights, RaySamples, RenderWeights, RenderedFeature,
    Sampler, EPS_NORM,
};
pub use supervision::{build_supervision, Supervision, SupervisionTriplet};
pub use train::{
    train_fields, Batch, FieldGrad, LossParts, PairSample, RaySample, SlotGrad, TrainConfig,
    TrainError, TrainReport, TrainingSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Language,
    Instance,
}

const ABSENT: u32 = u32::MAX;

/// Initial value of grid vertices that were never written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridInit {
    Zero,
    /// Uniform in `[-scale, scale]`, hashed from `(seed, vertex, channel)`.
    Uniform { seed: u64, scale: f64 },
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl GridInit {
    fn value<T: Real>(&self, vertex: u32, channel: usize) -> T {
        match *self {
            GridInit::Zero => T::zero(),
            GridInit::Uniform { seed, scale } => {
                let h = splitmix64(splitmix64(seed ^ u64::from(vertex)) ^ channel as u64);
                let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
                lit(scale * (2.0 * unit - 1.0))
            }
        }
    }
}

/// Vertex grid with `res^3` vertices of `dim` channels each.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    res: usize,
    dim: usize,
    init: GridInit,
    slot_of: Vec<u32>,
    vertices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(res: usize, dim: usize, init: GridInit) -> Self {
        assert!(res >= 2, "grid needs at least 2 vertices per axis");
        Self {
            res,
            dim,
            init,
            slot_of: vec![ABSENT; res * res * res],
            vertices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn init(&self) -> GridInit {
        self.init
    }

    /// Number of materialized vertices.
    pub fn slots(&self) -> usize {
        self.vertices.len()
    }

    pub fn slot(&self, vertex: u32) -> Option<usize> {
        match self.slot_of[vertex as usize] {
            ABSENT => None,
            s => Some(s as usize),
        }
    }

    pub fn vertex_of_slot(&self, slot: usize) -> u32 {
        self.vertices[slot]
    }

    /// Materializes a vertex with its initial value and returns its slot.
    pub fn materialize(&mut self, vertex: u32) -> usize {
        if let Some(s) = self.slot(vertex) {
            return s;
        }
        let s = self.vertices.len();
        self.slot_of[vertex as usize] = s as u32;
        self.vertices.push(vertex);
        for c in 0..self.dim {
            self.values.push(self.init.value(vertex, c));
        }
        s
    }

    /// Flat slot-major parameter array (`slots * dim`).
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Adds `weight * value(vertex)` into `out`.
    #[inline]
    pub fn accumulate(&self, vertex: u32, weight: T, out: &mut [T]) {
        match self.slot(vertex) {
            Some(s) => {
                let v = &self.values[s * self.dim..(s + 1) * self.dim];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += weight * *x;
                }
            }
            None => {
                if let GridInit::Uniform { .. } = self.init {
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += weight * self.init.value::<T>(vertex, c);
                    }
                }
            }
        }
    }

    pub fn value(&self, vertex: u32) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.accumulate(vertex, T::one(), &mut out);
        out
    }

    pub(crate) fn from_parts(
        res: usize,
        dim: usize,
        init: GridInit,
        entries: Vec<(u32, Vec<T>)>,
    ) -> Self {
        let mut g = Self::new(res, dim, init);
        for (vertex, vals) in entries {
            let s = g.materialize(vertex);
            g.values[s * dim..(s + 1) * dim].copy_from_slice(&vals);
        }
        g
    }

    pub fn scale(&mut self, k: T) {
        for v in &mut self.values {
            *v *= k;
        }
    }
}

/// The 8 vertices surrounding a point and their trilinear weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners<T> {
    pub vertices: [u32; 8],
    pub weights: [T; 8],
}

/// Grids of increasing resolution over a shared box, with the physical-scale
/// bins that select among them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePyramid<T> {
    pub bounds: Aabb<T>,
    pub levels: Vec<Grid<T>>,
    /// `levels.len() + 1` increasing edges; larger scales map to coarser levels.
    pub scale_edges: Vec<T>,
}

impl<T: Real> ScalePyramid<T> {
    pub fn new(
        bounds: Aabb<T>,
        resolutions: &[usize],
        dim: usize,
        scale_edges: Vec<T>,
        init: impl Fn(usize) -> GridInit,
    ) -> Self {
        assert!(!resolutions.is_empty());
        assert!(
            resolutions.windows(2).all(|w| w[0] < w[1]),
            "resolutions must increase"
        );
        assert_eq!(scale_edges.len(), resolutions.len() + 1);
        assert!(
            scale_edges.windows(2).all(|w| w[0] < w[1]),
            "scale edges must increase"
        );
        Self {
            bounds,
            levels: resolutions
                .iter()
                .enumerate()
                .map(|(i, r)| Grid::new(*r, dim, init(i)))
                .collect(),
            scale_edges,
        }
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.levels.iter().map(Grid::res).collect()
    }

    /// Level index for a physical scale; out-of-range scales clamp.
    pub fn level_for_scale(&self, scale: T) -> usize {
        let n = self.levels.len();
        let bin = self.scale_edges[1..n]
            .iter()
            .filter(|e| scale >= **e)
            .count();
        n - 1 - bin
    }

    pub fn corners(&self, level: usize, p: Vec3<T>) -> Corners<T> {
        let res = self.levels[level].res();
        let size = self.bounds.size();
        let top = lit::<T>((res - 1) as f64);
        let mut base = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let g = ((p[a] - self.bounds.min[a]) / size[a] * top)
                .max(T::zero())
                .min(top);
            let i = g.floor().to_usize().unwrap_or(0).min(res - 2);
            base[a] = i;
            frac[a] = g - lit(i as f64);
        }
        let mut vertices = [0u32; 8];
        let mut weights = [T::zero(); 8];
        for (k, (v, w)) in vertices.iter_mut().zip(weights.iter_mut()).enumerate() {
            let (dx, dy, dz) = (k & 1, (k >> 1) & 1, (k >> 2) & 1);
            let (x, y, z) = (base[0] + dx, base[1] + dy, base[2] + dz);
            *v = ((z * res + y) * res + x) as u32;
            let f = |d: usize, f: T| if d == 1 { f } else { T::one() - f };
            *w = f(dx, frac[0]) * f(dy, frac[1]) * f(dz, frac[2]);
        }
        Corners { vertices, weights }
    }

    /// Adds `weight * interpolated(p)` at `level` into `out`.
    pub fn accumulate(&self, level: usize, corners: &Corners<T>, weight: T, out: &mut [T]) {
        let grid = &self.levels[level];
        for (v, w) in corners.vertices.iter().zip(&corners.weights) {
            if *w != T::zero() {
                grid.accumulate(*v, weight * *w, out);
            }
        }
    }

    pub fn interpolate(&self, level: usize, p: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.accumulate(level, &self.corners(level, p), T::one(), &mut out);
        out
    }
}

/// Log-spaced scale edges over `[min, max]` of the observed scales.
pub fn log_scale_edges<T: Real>(scales: &[T], levels: usize) -> Vec<T> {
    let finite: Vec<f64> = scales
        .iter()
        .map(|s| s.to_f64_lossy())
        .filter(|s| s.is_finite() && *s > 0.0)
        .collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    if !lo.is_finite() {
        lo = 0.1;
        hi = 1.0;
    }
    if hi <= lo * (1.0 + 1e-6) {
        lo *= 0.5;
        hi *= 2.0;
    }
    let ratio = (hi / lo).ln();
    (0..=levels)
        .map(|i| lit(lo * (ratio * i as f64 / levels as f64).exp()))
        .collect()
}

/// Language and instance pyramids with their visual-property modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField<T> {
    pub language: ScalePyramid<T>,
    pub instance: ScalePyramid<T>,
    /// `dim x 4` row-major, applied to `(sigma, r, g, b)`.
    pub vis_mod_lang: Vec<T>,
    pub vis_mod_inst: Vec<T>,
    pub use_vis_mod: bool,
    /// Density that maps to 1 in the modulation input.
    pub sigma_ref: T,
    pub sampler: Sampler<T>,
}

impl<T: Real> FeatureField<T> {
    pub fn pyramid(&self, kind: FieldKind) -> &ScalePyramid<T> {
        match kind {
            FieldKind::Language => &self.language,
            FieldKind::Instance => &self.instance,
        }
    }

    pub fn pyramid_mut(&mut self, kind: FieldKind) -> &mut ScalePyramid<T> {
        match kind {
            FieldKind::Language => &mut self.language,
            FieldKind::Instance => &mut self.instance,
        }
    }

    pub fn vis_mod(&self, kind: FieldKind) -> &[T] {
        match kind {
            FieldKind::Language => &self.vis_mod_lang,
            FieldKind::Instance => &self.vis_mod_inst,
        }
    }

    pub fn vis_mod_mut(&mut self, kind: FieldKind) -> &mut Vec<T> {
        match kind {
            FieldKind::Language => &mut self.vis_mod_lang,
            FieldKind::Instance => &mut self.vis_mod_inst,
        }
    }

    pub fn dim(&self, kind: FieldKind) -> usize {
        self.pyramid(kind).dim()
    }

    /// Modulation input `(sigma / sigma_ref - 1, r - 1/2, g - 1/2, b - 1/2)`.
    ///
    /// Centered so the map carries no constant offset: the rendering loss is
    /// linear, and an uncentered input would grow a bias toward the mean of
    /// all concepts that drowns the per-object signal.
    #[inline]
    pub fn visual_input(&self, sigma: T, color: [T; 3]) -> [T; 4] {
        let h: T = lit(0.5);
        [sigma / self.sigma_ref - T::one(), color[0] - h, color[1] - h, color[2] - h]
    }

    /// Adds `weight * M vp` into `out`, `vp` from [`Self::visual_input`].
    #[inline]
    pub fn accumulate_vis(&self, kind: FieldKind, vp: &[T; 4], weight: T, out: &mut [T]) {
        if !self.use_vis_mod {
            return;
        }
        let m = self.vis_mod(kind);
        for (d, o) in out.iter_mut().enumerate() {
            let row = &m[d * 4..d * 4 + 4];
            *o += weight * (row[0] * vp[0] + row[1] * vp[1] + row[2] * vp[2] + row[3] * vp[3]);
        }
    }

    /// Feature at a point: interpolation at the level selected by `scale`
    /// plus the visual-property modulation.
    pub fn query(
        &self,
        kind: FieldKind,
        point: Vec3<T>,
        scale: T,
        sigma: T,
        color: [T; 3],
    ) -> Vec<T> {
        self.query_level(kind, point, self.pyramid(kind).level_for_scale(scale), sigma, color)
    }

    /// [`FeatureField::query`] with the pyramid level given directly.
    pub fn query_level(&self, kind: FieldKind, point: Vec3<T>, level: usize, sigma: T, color: [T; 3]) -> Vec<T> {
        let pyr = self.pyramid(kind);
        let mut out = vec![T::zero(); pyr.dim()];
        pyr.accumulate(level, &pyr.corners(level, point), T::one(), &mut out);
        self.accumulate_vis(kind, &self.visual_input(sigma, color), T::one(), &mut out);
        out
    }
}

/// Free-function form of [`FeatureField::query`].
pub fn query_field<T: Real>(
    field: &FeatureField<T>,
    kind: FieldKind,
    point: Vec3<T>,
    scale: T,
    sigma: T,
    color: [T; 3],
) -> Vec<T> {
    field.query(kind, point, scale, sigma, color)
}
